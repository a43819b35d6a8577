//! Time-stamped state sequences and their CSV interchange format.
//!
//! The CSV layout is the interchange format for the whole toolkit: a single
//! header line `time,x1,...,xn`, one row per state with values printed to 17
//! significant digits (bit-exact round trip), and a blank line between
//! trajectories.

use std::fs;
use std::io::{self, BufRead, Write};
use std::path::Path;

use nalgebra::DVector;

use crate::lorenz96::DataError;

/// An ordered (time, state) sequence with strictly increasing times.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    times: Vec<f64>,
    states: Vec<DVector<f64>>,
}

impl Trajectory {
    pub fn new(times: Vec<f64>, states: Vec<DVector<f64>>) -> Result<Self, DataError> {
        if times.is_empty() || times.len() != states.len() {
            return Err(DataError::Config(format!(
                "trajectory needs matching non-empty times/states, got {} and {}",
                times.len(),
                states.len()
            )));
        }
        if times.iter().any(|t| !t.is_finite()) {
            return Err(DataError::Config("trajectory times must be finite".into()));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(DataError::Config("trajectory times must be strictly increasing".into()));
        }
        let dim = states[0].len();
        if states.iter().any(|s| s.len() != dim) {
            return Err(DataError::Config("all states must share one dimension".into()));
        }
        if states.iter().any(|s| s.iter().any(|x| !x.is_finite())) {
            return Err(DataError::Config("trajectory states must be finite".into()));
        }
        Ok(Trajectory { times, states })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.states[0].len()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn states(&self) -> &[DVector<f64>] {
        &self.states
    }

    /// Uniform intra-trajectory spacing, if the grid is uniform to within a
    /// relative tolerance of 1e-9.
    pub fn uniform_spacing(&self) -> Option<f64> {
        if self.len() < 2 {
            return None;
        }
        let h = self.times[1] - self.times[0];
        let ok = self
            .times
            .windows(2)
            .all(|w| ((w[1] - w[0]) - h).abs() <= 1e-9 * h.abs().max(1.0));
        ok.then_some(h)
    }
}

/// A snapshot and its successor one sampling interval later.
pub type SnapshotPair = (DVector<f64>, DVector<f64>);

/// Consecutive (x_i, x_{i+1}) pairs from each trajectory, never crossing the
/// inter-trajectory gap. Returns the shared snapshot spacing.
pub fn consecutive_pairs(
    trajectories: &[Trajectory],
) -> Result<(Vec<SnapshotPair>, f64), DataError> {
    let mut dt: Option<f64> = None;
    let mut pairs = Vec::new();
    for traj in trajectories {
        if traj.len() < 2 {
            continue;
        }
        let h = traj
            .uniform_spacing()
            .ok_or_else(|| DataError::Config("trajectory spacing is not uniform".into()))?;
        match dt {
            None => dt = Some(h),
            Some(prev) if (prev - h).abs() > 1e-9 * prev.abs().max(1.0) => {
                return Err(DataError::Config(format!(
                    "trajectories have inconsistent spacing: {prev} vs {h}"
                )));
            }
            _ => {}
        }
        for w in traj.states().windows(2) {
            pairs.push((w[0].clone(), w[1].clone()));
        }
    }
    let dt = dt.ok_or_else(|| DataError::Config("no consecutive pairs in dataset".into()))?;
    Ok((pairs, dt))
}

/// Format a value with 17 significant digits; round-trips any f64 exactly.
pub(crate) fn fmt_g17(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_trajectories<W: Write>(mut w: W, trajectories: &[Trajectory]) -> io::Result<()> {
    let dim = trajectories.first().map(|t| t.dim()).unwrap_or(0);
    write!(w, "time")?;
    for j in 1..=dim {
        write!(w, ",x{j}")?;
    }
    writeln!(w)?;
    for (i, traj) in trajectories.iter().enumerate() {
        if i > 0 {
            writeln!(w)?;
        }
        for (t, x) in traj.times().iter().zip(traj.states()) {
            write!(w, "{}", fmt_g17(*t))?;
            for v in x.iter() {
                write!(w, ",{}", fmt_g17(*v))?;
            }
            writeln!(w)?;
        }
    }
    Ok(())
}

pub fn read_trajectories<R: BufRead>(r: R) -> Result<Vec<Trajectory>, DataError> {
    let mut lines = r.lines().enumerate();
    let header = match lines.next() {
        Some((_, line)) => line?,
        None => return Err(DataError::Csv { line: 1, msg: "empty file".into() }),
    };
    if !header.starts_with("time,") {
        return Err(DataError::Csv { line: 1, msg: "expected header `time,x1,...`".into() });
    }
    let dim = header.split(',').count() - 1;

    let mut out = Vec::new();
    let mut times = Vec::new();
    let mut states = Vec::new();
    let mut flush =
        |times: &mut Vec<f64>, states: &mut Vec<DVector<f64>>| -> Result<(), DataError> {
            if !times.is_empty() {
                out.push(Trajectory::new(std::mem::take(times), std::mem::take(states))?);
            }
            Ok(())
        };
    for (idx, line) in lines {
        let line = line?;
        let lineno = idx + 1;
        if line.trim().is_empty() {
            flush(&mut times, &mut states)?;
            continue;
        }
        let mut fields = line.split(',');
        let t: f64 = fields
            .next()
            .unwrap()
            .trim()
            .parse()
            .map_err(|_| DataError::Csv { line: lineno, msg: "bad time value".into() })?;
        let values: Result<Vec<f64>, _> = fields.map(|f| f.trim().parse::<f64>()).collect();
        let values =
            values.map_err(|_| DataError::Csv { line: lineno, msg: "bad state value".into() })?;
        if values.len() != dim {
            return Err(DataError::Csv {
                line: lineno,
                msg: format!("expected {dim} state values, got {}", values.len()),
            });
        }
        times.push(t);
        states.push(DVector::from_vec(values));
    }
    flush(&mut times, &mut states)?;
    if out.is_empty() {
        return Err(DataError::Csv { line: 1, msg: "file holds no trajectories".into() });
    }
    Ok(out)
}

/// Write trajectories to `path` atomically (temp file + rename).
pub fn save_trajectories<P: AsRef<Path>>(
    path: P,
    trajectories: &[Trajectory],
) -> Result<(), DataError> {
    let path = path.as_ref();
    let tmp = path.with_extension("tmp");
    {
        let mut f = io::BufWriter::new(fs::File::create(&tmp)?);
        write_trajectories(&mut f, trajectories)?;
        f.flush()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_trajectories<P: AsRef<Path>>(path: P) -> Result<Vec<Trajectory>, DataError> {
    let f = io::BufReader::new(fs::File::open(path)?);
    read_trajectories(f)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Vec<Trajectory> {
        let mk = |t0: f64| {
            Trajectory::new(
                vec![t0, t0 + 0.05],
                vec![
                    DVector::from_vec(vec![1.0, -2.5, 3.0 / 7.0]),
                    DVector::from_vec(vec![0.1, 8.0, -1e-17]),
                ],
            )
            .unwrap()
        };
        vec![mk(0.0), mk(6.0)]
    }

    #[test]
    fn csv_round_trip_is_bit_exact() {
        let trajs = sample();
        let mut buf = Vec::new();
        write_trajectories(&mut buf, &trajs).unwrap();
        let back = read_trajectories(io::Cursor::new(&buf)).unwrap();
        assert_eq!(back, trajs);
    }

    #[test]
    fn csv_layout_matches_contract() {
        let trajs = sample();
        let mut buf = Vec::new();
        write_trajectories(&mut buf, &trajs).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "time,x1,x2,x3");
        // header, two rows, blank separator, two rows
        assert_eq!(lines.len(), 6);
        assert!(lines[3].is_empty());
        // 17 significant digits
        assert!(lines[1].split(',').next().unwrap().contains("0.0000000000000000e0"));
    }

    #[test]
    fn non_increasing_times_rejected() {
        let s = DVector::from_vec(vec![0.0]);
        assert!(Trajectory::new(vec![0.0, 0.0], vec![s.clone(), s.clone()]).is_err());
        assert!(Trajectory::new(vec![0.1, 0.0], vec![s.clone(), s]).is_err());
    }

    #[test]
    fn pairs_never_cross_trajectory_boundaries() {
        let trajs = sample();
        let (pairs, dt) = consecutive_pairs(&trajs).unwrap();
        assert_eq!(pairs.len(), 2); // one pair per 2-point trajectory
        assert!((dt - 0.05).abs() < 1e-15);
    }

    #[test]
    fn malformed_rows_name_the_line() {
        let text = "time,x1\n0.0,1.0\nnot-a-number,2.0\n";
        let err = read_trajectories(io::Cursor::new(text)).unwrap_err();
        match err {
            DataError::Csv { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected error {other}"),
        }
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        fn trajectory() -> impl Strategy<Value = Trajectory> {
            (1usize..4, 1usize..5).prop_flat_map(|(dim, len)| {
                (
                    prop::collection::vec(-1e6f64..1e6, dim * len),
                    prop::collection::vec(1e-6f64..10.0, len),
                )
                    .prop_map(move |(values, increments)| {
                        let mut t = 0.0;
                        let times: Vec<f64> = increments
                            .iter()
                            .map(|dt| {
                                t += dt;
                                t
                            })
                            .collect();
                        let states = values
                            .chunks(dim)
                            .map(|c| DVector::from_vec(c.to_vec()))
                            .collect();
                        Trajectory::new(times, states).unwrap()
                    })
            })
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn csv_round_trip_preserves_every_bit(trajs in prop::collection::vec(trajectory(), 1..4)) {
                // all trajectories in one file must share a dimension
                let dim = trajs[0].dim();
                let trajs: Vec<Trajectory> =
                    trajs.into_iter().filter(|t| t.dim() == dim).collect();
                let mut buf = Vec::new();
                write_trajectories(&mut buf, &trajs).unwrap();
                let back = read_trajectories(io::Cursor::new(&buf)).unwrap();
                prop_assert_eq!(back, trajs);
            }
        }
    }
}
