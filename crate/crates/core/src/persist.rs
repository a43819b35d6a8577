//! Line-oriented text persistence for trained models.
//!
//! ```text
//! CHAOSROM v1 <kind>            kind: dmd | quad | ae | syco
//! dim <name> <rows> <cols> [<depth>]
//! <whitespace-separated values, row-major>
//! ...
//! ```
//!
//! Values are printed with 17 significant digits so every f64 round-trips
//! bit-exactly; complex entries are `re:im`. The format is diffable and
//! trivially parseable from any language.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use nalgebra::{Complex, DMatrix, DVector};

use crate::dmd::DmdModel;
use crate::neural::NeuralRom;
use crate::nn::MlpParams;
use crate::quadratic::{QuadraticModel, SymTensor3};
use crate::rom::{Rom, RomKind};
use crate::traj::fmt_g17;

type C64 = Complex<f64>;

const MAGIC: &str = "CHAOSROM";
const VERSION: &str = "v1";
const VALUES_PER_LINE: usize = 8;

#[derive(Debug, thiserror::Error)]
pub enum PersistError {
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("cannot persist a model of kind `{kind}`")]
    Unsupported { kind: RomKind },
    #[error(transparent)]
    Io(#[from] io::Error),
}

fn parse_err(line: usize, msg: impl Into<String>) -> PersistError {
    PersistError::Parse { line, msg: msg.into() }
}

// ---------------------------------------------------------------- writing

struct BlockWriter<W: Write> {
    w: W,
}

impl<W: Write> BlockWriter<W> {
    fn header(&mut self, kind: RomKind) -> io::Result<()> {
        writeln!(self.w, "{MAGIC} {VERSION} {kind}")
    }

    fn block(&mut self, name: &str, rows: usize, cols: usize, depth: Option<usize>, values: &mut dyn Iterator<Item = String>) -> io::Result<()> {
        match depth {
            Some(d) => writeln!(self.w, "dim {name} {rows} {cols} {d}")?,
            None => writeln!(self.w, "dim {name} {rows} {cols}")?,
        }
        let mut on_line = 0;
        for v in values {
            if on_line == VALUES_PER_LINE {
                writeln!(self.w)?;
                on_line = 0;
            }
            if on_line > 0 {
                write!(self.w, " ")?;
            }
            write!(self.w, "{v}")?;
            on_line += 1;
        }
        if on_line > 0 {
            writeln!(self.w)?;
        }
        Ok(())
    }

    fn scalar(&mut self, name: &str, v: f64) -> io::Result<()> {
        self.block(name, 1, 1, None, &mut std::iter::once(fmt_g17(v)))
    }

    fn vector(&mut self, name: &str, v: &DVector<f64>) -> io::Result<()> {
        self.block(name, v.len(), 1, None, &mut v.iter().map(|x| fmt_g17(*x)))
    }

    fn matrix(&mut self, name: &str, m: &DMatrix<f64>) -> io::Result<()> {
        let (rows, cols) = (m.nrows(), m.ncols());
        self.block(name, rows, cols, None, &mut (0..rows).flat_map(|i| (0..cols).map(move |j| (i, j))).map(|(i, j)| fmt_g17(m[(i, j)])))
    }

    fn cmatrix(&mut self, name: &str, m: &DMatrix<C64>) -> io::Result<()> {
        let (rows, cols) = (m.nrows(), m.ncols());
        self.block(
            name,
            rows,
            cols,
            None,
            &mut (0..rows)
                .flat_map(|i| (0..cols).map(move |j| (i, j)))
                .map(|(i, j)| format!("{}:{}", fmt_g17(m[(i, j)].re), fmt_g17(m[(i, j)].im))),
        )
    }

    fn cvector(&mut self, name: &str, v: &DVector<C64>) -> io::Result<()> {
        self.block(
            name,
            v.len(),
            1,
            None,
            &mut v.iter().map(|z| format!("{}:{}", fmt_g17(z.re), fmt_g17(z.im))),
        )
    }

    fn tensor(&mut self, name: &str, t: &SymTensor3) -> io::Result<()> {
        let (k, i, j) = t.dims();
        self.block(name, k, i, Some(j), &mut t.data().iter().map(|x| fmt_g17(*x)))
    }

    fn mlp(&mut self, prefix: &str, p: &MlpParams) -> io::Result<()> {
        self.matrix(&format!("{prefix}_a1"), &p.a1)?;
        self.vector(&format!("{prefix}_b1"), &p.b1)?;
        self.matrix(&format!("{prefix}_a2"), &p.a2)?;
        self.vector(&format!("{prefix}_b2"), &p.b2)
    }
}

/// Serialize a model to a writer.
pub fn write_model<W: Write>(w: W, rom: &Rom) -> Result<(), PersistError> {
    let mut bw = BlockWriter { w };
    match rom {
        Rom::Truth(_) => return Err(PersistError::Unsupported { kind: RomKind::Truth }),
        Rom::Dmd(m) => {
            bw.header(RomKind::Dmd)?;
            bw.scalar("dt", m.dt)?;
            bw.cvector("omega", &m.omega)?;
            bw.cmatrix("phi", &m.phi)?;
            bw.cmatrix("phi_pinv", &m.phi_pinv)?;
        }
        Rom::Quadratic(m) => {
            bw.header(RomKind::Quad)?;
            bw.vector("x_bar", &m.x_bar)?;
            bw.matrix("phi", &m.phi)?;
            bw.tensor("phi_bar", &m.phi_bar)?;
            bw.vector("a", &m.a)?;
            bw.matrix("b", &m.b)?;
            bw.tensor("c", &m.c)?;
        }
        Rom::Neural(m) => {
            bw.header(rom.kind())?;
            bw.scalar("lambda", m.lambda)?;
            bw.scalar("omega", m.omega)?;
            bw.scalar("upsilon", m.upsilon)?;
            bw.mlp("enc", &m.encoder)?;
            bw.mlp("dec", &m.decoder)?;
            bw.mlp("dyn", &m.dynamics)?;
        }
    }
    Ok(())
}

/// Save a model atomically (temp file + rename).
pub fn save_model<P: AsRef<Path>>(path: P, rom: &Rom) -> Result<(), PersistError> {
    let path = path.as_ref();
    let tmp = path.with_extension("tmp");
    {
        let mut f = io::BufWriter::new(fs::File::create(&tmp)?);
        write_model(&mut f, rom)?;
        f.flush()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

// ---------------------------------------------------------------- reading

struct TokenReader<'a> {
    lines: Vec<&'a str>,
    line_idx: usize,
    tokens: std::collections::VecDeque<&'a str>,
}

impl<'a> TokenReader<'a> {
    fn new(text: &'a str) -> Self {
        TokenReader { lines: text.lines().collect(), line_idx: 0, tokens: Default::default() }
    }

    /// 1-based line number of the most recently consumed content.
    fn lineno(&self) -> usize {
        self.line_idx
    }

    fn next_line(&mut self) -> Option<&'a str> {
        while self.line_idx < self.lines.len() {
            let line = self.lines[self.line_idx];
            self.line_idx += 1;
            if !line.trim().is_empty() {
                return Some(line);
            }
        }
        None
    }

    fn next_token(&mut self) -> Result<&'a str, PersistError> {
        loop {
            if let Some(t) = self.tokens.pop_front() {
                return Ok(t);
            }
            match self.next_line() {
                Some(line) => self.tokens.extend(line.split_whitespace()),
                None => return Err(parse_err(self.lineno(), "unexpected end of file")),
            }
        }
    }

    /// Peek whether any content remains.
    fn at_eof(&mut self) -> bool {
        if !self.tokens.is_empty() {
            return false;
        }
        match self.next_line() {
            Some(line) => {
                self.tokens.extend(line.split_whitespace());
                false
            }
            None => true,
        }
    }

    fn real(&mut self) -> Result<f64, PersistError> {
        let t = self.next_token()?;
        let line = self.lineno();
        t.parse::<f64>().map_err(|_| parse_err(line, format!("bad decimal value `{t}`")))
    }

    fn complex(&mut self) -> Result<C64, PersistError> {
        let t = self.next_token()?;
        let line = self.lineno();
        let (re, im) = t
            .split_once(':')
            .ok_or_else(|| parse_err(line, format!("expected `re:im` complex value, got `{t}`")))?;
        let re = re.parse::<f64>().map_err(|_| parse_err(line, format!("bad real part `{re}`")))?;
        let im =
            im.parse::<f64>().map_err(|_| parse_err(line, format!("bad imaginary part `{im}`")))?;
        Ok(C64::new(re, im))
    }
}

struct BlockHeader {
    rows: usize,
    cols: usize,
    depth: Option<usize>,
    line: usize,
}

fn read_block_header(r: &mut TokenReader<'_>, expected: &str, kind: RomKind) -> Result<BlockHeader, PersistError> {
    let line = r.next_line().ok_or_else(|| {
        parse_err(r.lineno(), format!("missing block `{expected}` for kind `{kind}`"))
    })?;
    let lineno = r.lineno();
    let mut parts = line.split_whitespace();
    if parts.next() != Some("dim") {
        return Err(parse_err(lineno, format!("expected `dim {expected} ...`, got `{line}`")));
    }
    let name = parts.next().ok_or_else(|| parse_err(lineno, "missing block name"))?;
    if name != expected {
        return Err(parse_err(
            lineno,
            format!("unexpected block `{name}` for kind `{kind}`: expected `{expected}`"),
        ));
    }
    // cap block sizes so corrupt headers cannot demand absurd allocations
    const MAX_DIM: usize = 1 << 24;
    let mut dims = Vec::new();
    let mut total: usize = 1;
    for p in parts {
        let d: usize =
            p.parse().map_err(|_| parse_err(lineno, format!("bad dimension `{p}`")))?;
        if d == 0 || d > MAX_DIM {
            return Err(parse_err(lineno, format!("dimension {d} out of range")));
        }
        total = total
            .checked_mul(d)
            .filter(|&t| t <= MAX_DIM)
            .ok_or_else(|| parse_err(lineno, "block size overflows the format limits"))?;
        dims.push(d);
    }
    match dims.len() {
        2 => Ok(BlockHeader { rows: dims[0], cols: dims[1], depth: None, line: lineno }),
        3 => Ok(BlockHeader { rows: dims[0], cols: dims[1], depth: Some(dims[2]), line: lineno }),
        n => Err(parse_err(lineno, format!("expected 2 or 3 dimensions, got {n}"))),
    }
}

fn read_scalar(r: &mut TokenReader<'_>, name: &str, kind: RomKind) -> Result<f64, PersistError> {
    let h = read_block_header(r, name, kind)?;
    if (h.rows, h.cols, h.depth) != (1, 1, None) {
        return Err(parse_err(h.line, format!("block `{name}` must be 1 x 1")));
    }
    r.real()
}

fn read_vector(r: &mut TokenReader<'_>, name: &str, kind: RomKind) -> Result<DVector<f64>, PersistError> {
    let h = read_block_header(r, name, kind)?;
    if h.cols != 1 || h.depth.is_some() {
        return Err(parse_err(h.line, format!("block `{name}` must be a column vector")));
    }
    let mut v = DVector::zeros(h.rows);
    for i in 0..h.rows {
        v[i] = r.real()?;
    }
    Ok(v)
}

fn read_matrix(r: &mut TokenReader<'_>, name: &str, kind: RomKind) -> Result<DMatrix<f64>, PersistError> {
    let h = read_block_header(r, name, kind)?;
    if h.depth.is_some() {
        return Err(parse_err(h.line, format!("block `{name}` must be 2-dimensional")));
    }
    let mut m = DMatrix::zeros(h.rows, h.cols);
    for i in 0..h.rows {
        for j in 0..h.cols {
            m[(i, j)] = r.real()?;
        }
    }
    Ok(m)
}

fn read_cmatrix(r: &mut TokenReader<'_>, name: &str, kind: RomKind) -> Result<DMatrix<C64>, PersistError> {
    let h = read_block_header(r, name, kind)?;
    if h.depth.is_some() {
        return Err(parse_err(h.line, format!("block `{name}` must be 2-dimensional")));
    }
    let mut m = DMatrix::from_element(h.rows, h.cols, C64::new(0.0, 0.0));
    for i in 0..h.rows {
        for j in 0..h.cols {
            m[(i, j)] = r.complex()?;
        }
    }
    Ok(m)
}

fn read_cvector(r: &mut TokenReader<'_>, name: &str, kind: RomKind) -> Result<DVector<C64>, PersistError> {
    let h = read_block_header(r, name, kind)?;
    if h.cols != 1 || h.depth.is_some() {
        return Err(parse_err(h.line, format!("block `{name}` must be a column vector")));
    }
    let mut v = DVector::from_element(h.rows, C64::new(0.0, 0.0));
    for i in 0..h.rows {
        v[i] = r.complex()?;
    }
    Ok(v)
}

fn read_tensor(r: &mut TokenReader<'_>, name: &str, kind: RomKind) -> Result<SymTensor3, PersistError> {
    let h = read_block_header(r, name, kind)?;
    let depth = h
        .depth
        .ok_or_else(|| parse_err(h.line, format!("block `{name}` must be 3-dimensional")))?;
    if depth != h.cols {
        return Err(parse_err(h.line, format!("tensor `{name}` trailing dims must match")));
    }
    let mut data = Vec::with_capacity(h.rows * h.cols * depth);
    for _ in 0..h.rows * h.cols * depth {
        data.push(r.real()?);
    }
    SymTensor3::from_data(data, h.rows, h.cols)
        .map_err(|e| parse_err(h.line, format!("bad tensor `{name}`: {e}")))
}

fn read_mlp(r: &mut TokenReader<'_>, prefix: &str, kind: RomKind) -> Result<MlpParams, PersistError> {
    let a1 = read_matrix(r, &format!("{prefix}_a1"), kind)?;
    let b1 = read_vector(r, &format!("{prefix}_b1"), kind)?;
    let a2 = read_matrix(r, &format!("{prefix}_a2"), kind)?;
    let b2 = read_vector(r, &format!("{prefix}_b2"), kind)?;
    Ok(MlpParams { a1, b1, a2, b2 })
}

/// Parse a model from text.
pub fn parse_model(text: &str) -> Result<Rom, PersistError> {
    let mut r = TokenReader::new(text);
    let header = r.next_line().ok_or_else(|| parse_err(1, "empty file"))?;
    let lineno = r.lineno();
    let mut parts = header.split_whitespace();
    if parts.next() != Some(MAGIC) {
        return Err(parse_err(lineno, format!("bad magic: expected `{MAGIC}`")));
    }
    match parts.next() {
        Some(VERSION) => {}
        Some(v) => return Err(parse_err(lineno, format!("unsupported version `{v}`"))),
        None => return Err(parse_err(lineno, "missing format version")),
    }
    let kind = match parts.next() {
        Some("dmd") => RomKind::Dmd,
        Some("quad") => RomKind::Quad,
        Some("ae") => RomKind::Ae,
        Some("syco") => RomKind::Syco,
        Some(k) => return Err(parse_err(lineno, format!("unknown model kind `{k}`"))),
        None => return Err(parse_err(lineno, "missing model kind")),
    };

    let rom = match kind {
        RomKind::Dmd => {
            let dt = read_scalar(&mut r, "dt", kind)?;
            let omega = read_cvector(&mut r, "omega", kind)?;
            let phi = read_cmatrix(&mut r, "phi", kind)?;
            let phi_pinv = read_cmatrix(&mut r, "phi_pinv", kind)?;
            if phi.ncols() != omega.len() || phi_pinv.nrows() != omega.len() || phi_pinv.ncols() != phi.nrows() {
                return Err(parse_err(r.lineno(), "inconsistent dmd block dimensions"));
            }
            if dt <= 0.0 || dt.is_nan() {
                return Err(parse_err(r.lineno(), "dt must be positive"));
            }
            Rom::Dmd(DmdModel { phi, phi_pinv, omega, dt })
        }
        RomKind::Quad => {
            let x_bar = read_vector(&mut r, "x_bar", kind)?;
            let phi = read_matrix(&mut r, "phi", kind)?;
            let phi_bar = read_tensor(&mut r, "phi_bar", kind)?;
            let a = read_vector(&mut r, "a", kind)?;
            let b = read_matrix(&mut r, "b", kind)?;
            let c = read_tensor(&mut r, "c", kind)?;
            let (n, rr) = (phi.nrows(), phi.ncols());
            let ok = x_bar.len() == n
                && phi_bar.dims() == (n, rr, rr)
                && a.len() == rr
                && b.nrows() == rr
                && b.ncols() == rr
                && c.dims() == (rr, rr, rr);
            if !ok {
                return Err(parse_err(r.lineno(), "inconsistent quad block dimensions"));
            }
            Rom::Quadratic(QuadraticModel { x_bar, phi, phi_bar, a, b, c })
        }
        RomKind::Ae | RomKind::Syco => {
            let lambda = read_scalar(&mut r, "lambda", kind)?;
            let omega = read_scalar(&mut r, "omega", kind)?;
            let upsilon = read_scalar(&mut r, "upsilon", kind)?;
            let encoder = read_mlp(&mut r, "enc", kind)?;
            let decoder = read_mlp(&mut r, "dec", kind)?;
            let dynamics = read_mlp(&mut r, "dyn", kind)?;
            let model = NeuralRom {
                latent_dim: encoder.d_out(),
                encoder,
                decoder,
                dynamics,
                constrained: kind == RomKind::Syco,
                lambda,
                omega,
                upsilon,
            };
            model
                .validate()
                .map_err(|e| parse_err(r.lineno(), format!("inconsistent model: {e}")))?;
            Rom::Neural(model)
        }
        RomKind::Truth => unreachable!(),
    };
    if !r.at_eof() {
        return Err(parse_err(r.lineno(), "trailing content after the last block"));
    }
    Ok(rom)
}

/// Load a model file.
pub fn load_model<P: AsRef<Path>>(path: P) -> Result<Rom, PersistError> {
    let text = fs::read_to_string(path)?;
    parse_model(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::MlpParams;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_dmd(seed: u64) -> DmdModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = DMatrix::<f64>::from_fn(5, 5, |_, _| rng.random_range(-0.4..0.4));
        let x0 = DVector::from_fn(5, |_, _| rng.random_range(-1.0..1.0));
        let mut pairs = Vec::new();
        let mut x = x0;
        for _ in 0..20 {
            let next = &a * &x;
            pairs.push((x.clone(), next.clone()));
            x = next;
        }
        crate::dmd::fit_dmd(&pairs, 4, 0.5).unwrap()
    }

    fn random_neural(constrained: bool, seed: u64) -> NeuralRom {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        NeuralRom {
            encoder: MlpParams::glorot_uniform(6, 5, 3, &mut rng),
            decoder: MlpParams::glorot_uniform(3, 5, 6, &mut rng),
            dynamics: MlpParams::glorot_uniform(3, 5, 3, &mut rng),
            constrained,
            latent_dim: 3,
            lambda: 1.6852,
            omega: 100.0,
            upsilon: 1.0,
        }
    }

    fn random_quad(seed: u64) -> QuadraticModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let states: Vec<DVector<f64>> =
            (0..30).map(|_| DVector::from_fn(5, |_, _| rng.random_range(-1.0..1.0))).collect();
        let (x_bar, phi) = crate::quadratic::fit_pod(&states, 2).unwrap();
        let phi_bar = crate::quadratic::fit_quadratic_decoder(&states, &x_bar, &phi).unwrap();
        let samples: Vec<_> = states
            .iter()
            .map(|x| {
                let u = phi.transpose() * (x - &x_bar);
                let du = DVector::from_fn(2, |_, _| rng.random_range(-1.0..1.0));
                (u, du)
            })
            .collect();
        let (a, b, c) = crate::quadratic::fit_quadratic_dynamics(&samples).unwrap();
        QuadraticModel { x_bar, phi, phi_bar, a, b, c }
    }

    fn round_trip(rom: &Rom) -> Rom {
        let mut buf = Vec::new();
        write_model(&mut buf, rom).unwrap();
        parse_model(&String::from_utf8(buf).unwrap()).unwrap()
    }

    #[test]
    fn dmd_round_trip_is_bit_exact() {
        let model = random_dmd(1);
        let back = round_trip(&Rom::Dmd(model.clone()));
        let Rom::Dmd(b) = back else { panic!("kind changed") };
        assert_eq!(b.dt.to_bits(), model.dt.to_bits());
        assert_eq!(b.omega, model.omega);
        assert_eq!(b.phi, model.phi);
        assert_eq!(b.phi_pinv, model.phi_pinv);
    }

    #[test]
    fn quad_round_trip_is_bit_exact() {
        let model = random_quad(2);
        let back = round_trip(&Rom::Quadratic(model.clone()));
        let Rom::Quadratic(b) = back else { panic!("kind changed") };
        assert_eq!(b.x_bar, model.x_bar);
        assert_eq!(b.phi, model.phi);
        assert_eq!(b.phi_bar, model.phi_bar);
        assert_eq!(b.a, model.a);
        assert_eq!(b.b, model.b);
        assert_eq!(b.c, model.c);
    }

    #[test]
    fn neural_round_trips_preserve_the_constraint_flag() {
        for constrained in [false, true] {
            let model = random_neural(constrained, 3);
            let back = round_trip(&Rom::Neural(model.clone()));
            let Rom::Neural(b) = back else { panic!("kind changed") };
            assert_eq!(b.constrained, constrained);
            assert_eq!(b.encoder, model.encoder);
            assert_eq!(b.decoder, model.decoder);
            assert_eq!(b.dynamics, model.dynamics);
            assert_eq!(b.lambda.to_bits(), model.lambda.to_bits());
        }
    }

    #[test]
    fn ae_and_syco_files_differ_only_in_the_kind_line() {
        let ae = random_neural(false, 4);
        let mut syco = ae.clone();
        syco.constrained = true;
        let mut buf_ae = Vec::new();
        write_model(&mut buf_ae, &Rom::Neural(ae)).unwrap();
        let mut buf_syco = Vec::new();
        write_model(&mut buf_syco, &Rom::Neural(syco)).unwrap();
        let a = String::from_utf8(buf_ae).unwrap();
        let s = String::from_utf8(buf_syco).unwrap();
        let a_lines: Vec<&str> = a.lines().collect();
        let s_lines: Vec<&str> = s.lines().collect();
        assert_eq!(a_lines[0], "CHAOSROM v1 ae");
        assert_eq!(s_lines[0], "CHAOSROM v1 syco");
        assert_eq!(a_lines[1..], s_lines[1..]);
    }

    #[test]
    fn truncated_file_fails_with_line_context() {
        let model = random_neural(true, 5);
        let mut buf = Vec::new();
        write_model(&mut buf, &Rom::Neural(model)).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let cut: String = text.lines().take(6).collect::<Vec<_>>().join("\n");
        let err = parse_model(&cut).unwrap_err();
        assert!(matches!(err, PersistError::Parse { .. }), "got {err}");
    }

    #[test]
    fn mismatched_blocks_name_the_kind() {
        // declare dmd but provide neural blocks
        let model = random_neural(true, 6);
        let mut buf = Vec::new();
        write_model(&mut buf, &Rom::Neural(model)).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let forged = text.replacen("CHAOSROM v1 syco", "CHAOSROM v1 dmd", 1);
        let err = parse_model(&forged).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("dmd"), "message should name the kind: {msg}");
    }

    #[test]
    fn corrupt_value_names_the_line() {
        let model = random_dmd(7);
        let mut buf = Vec::new();
        write_model(&mut buf, &Rom::Dmd(model)).unwrap();
        let text = String::from_utf8(buf).unwrap().replacen(":", "#", 1);
        match parse_model(&text).unwrap_err() {
            PersistError::Parse { line, msg } => {
                assert!(line > 1);
                assert!(msg.contains("complex") || msg.contains("re:im"), "{msg}");
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn absurd_dimensions_are_rejected_without_allocating() {
        for header in [
            "dim dt 99999999999999 1",
            "dim dt 16777217 1",
            "dim dt 0 1",
            "dim dt 4096 4096 4096",
        ] {
            let text = format!("CHAOSROM v1 dmd\n{header}\n1.0\n");
            let err = parse_model(&text).unwrap_err();
            assert!(matches!(err, PersistError::Parse { .. }), "{header}: {err}");
        }
    }

    #[test]
    fn truth_is_not_persistable() {
        let rom = Rom::Truth(crate::lorenz96::Lorenz96::new(6, 8.0).unwrap());
        let mut buf = Vec::new();
        assert!(matches!(
            write_model(&mut buf, &rom),
            Err(PersistError::Unsupported { kind: RomKind::Truth })
        ));
    }

    #[test]
    fn save_and_load_files() {
        let dir = std::env::temp_dir().join(format!("chaosrom-persist-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("model.crom");
        let model = Rom::Neural(random_neural(true, 8));
        save_model(&path, &model).unwrap();
        let back = load_model(&path).unwrap();
        assert_eq!(back.kind(), RomKind::Syco);
        fs::remove_dir_all(&dir).ok();
    }
}
