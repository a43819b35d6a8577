//! A fixed-topology reverse-mode tape over vector-valued operations.
//!
//! The training loss composes encoder, per-step projection, fixed-step
//! trapezoidal integration of the latent dynamics, and decoder. All of those
//! reduce to six primitive operations (parameter matrix-vector products,
//! parameter bias adds, GELU, normalization, linear combinations, squared
//! norms), so one small Wengert list covers the whole graph. Values are
//! computed eagerly as nodes are pushed; `backward` walks the list once in
//! reverse and accumulates parameter gradients into a flat buffer.

use nalgebra::DVector;

use super::{gelu, gelu_prime, MlpParams, NnError};

/// A view into a flat parameter vector: a `rows x cols` row-major matrix
/// (`cols == 1` for bias vectors).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamBlock {
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl ParamBlock {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Flat layout of one MLP inside a parameter vector, in the order
/// `a1, b1, a2, b2` (matrices row-major).
#[derive(Debug, Clone, Copy)]
pub struct MlpLayout {
    pub d_in: usize,
    pub hidden: usize,
    pub d_out: usize,
    pub a1: ParamBlock,
    pub b1: ParamBlock,
    pub a2: ParamBlock,
    pub b2: ParamBlock,
}

impl MlpLayout {
    pub fn new(d_in: usize, hidden: usize, d_out: usize, offset: usize) -> Self {
        let a1 = ParamBlock { offset, rows: hidden, cols: d_in };
        let b1 = ParamBlock { offset: a1.offset + a1.len(), rows: hidden, cols: 1 };
        let a2 = ParamBlock { offset: b1.offset + b1.len(), rows: d_out, cols: hidden };
        let b2 = ParamBlock { offset: a2.offset + a2.len(), rows: d_out, cols: 1 };
        MlpLayout { d_in, hidden, d_out, a1, b1, a2, b2 }
    }

    pub fn param_count(&self) -> usize {
        self.a1.len() + self.b1.len() + self.a2.len() + self.b2.len()
    }

    pub fn end(&self) -> usize {
        self.b2.offset + self.b2.len()
    }

    /// Append the structured parameters to a flat vector.
    pub fn flatten_into(params: &MlpParams, out: &mut Vec<f64>) {
        for i in 0..params.a1.nrows() {
            for j in 0..params.a1.ncols() {
                out.push(params.a1[(i, j)]);
            }
        }
        out.extend(params.b1.iter());
        for i in 0..params.a2.nrows() {
            for j in 0..params.a2.ncols() {
                out.push(params.a2[(i, j)]);
            }
        }
        out.extend(params.b2.iter());
    }

    /// Rebuild structured parameters from the flat vector.
    pub fn unflatten(&self, flat: &[f64]) -> MlpParams {
        let mut p = MlpParams::zeros(self.d_in, self.hidden, self.d_out);
        let mut k = self.a1.offset;
        for i in 0..self.hidden {
            for j in 0..self.d_in {
                p.a1[(i, j)] = flat[k];
                k += 1;
            }
        }
        for i in 0..self.hidden {
            p.b1[i] = flat[self.b1.offset + i];
        }
        k = self.a2.offset;
        for i in 0..self.d_out {
            for j in 0..self.hidden {
                p.a2[(i, j)] = flat[k];
                k += 1;
            }
        }
        for i in 0..self.d_out {
            p.b2[i] = flat[self.b2.offset + i];
        }
        p
    }
}

/// Handle to a tape node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    /// y = P x with P a parameter block.
    MatVec { p: ParamBlock, x: usize },
    /// y = x + b with b a parameter bias block.
    AddBias { b: ParamBlock, x: usize },
    /// y = gelu(x) entrywise.
    Gelu { x: usize },
    /// y = x / |x|.
    Normalize { x: usize },
    /// y = sum of c_i x_i.
    LinComb { terms: Vec<(f64, usize)> },
    /// y = [ |x|^2 ], a length-one vector.
    SqNorm { x: usize },
}

/// Eagerly evaluated computation tape over a borrowed flat parameter vector.
pub struct Tape<'p> {
    params: &'p [f64],
    ops: Vec<Op>,
    vals: Vec<DVector<f64>>,
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p [f64]) -> Self {
        Tape { params, ops: Vec::new(), vals: Vec::new() }
    }

    fn push(&mut self, op: Op, val: DVector<f64>) -> Var {
        self.ops.push(op);
        self.vals.push(val);
        Var(self.vals.len() - 1)
    }

    pub fn value(&self, v: Var) -> &DVector<f64> {
        &self.vals[v.0]
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.vals[v.0][0]
    }

    pub fn leaf(&mut self, v: DVector<f64>) -> Var {
        self.push(Op::Leaf, v)
    }

    pub fn matvec(&mut self, p: ParamBlock, x: Var) -> Var {
        let xv = &self.vals[x.0];
        debug_assert_eq!(p.cols, xv.len());
        let mut y = DVector::zeros(p.rows);
        for i in 0..p.rows {
            let row = &self.params[p.offset + i * p.cols..p.offset + (i + 1) * p.cols];
            let mut acc = 0.0;
            for (j, w) in row.iter().enumerate() {
                acc += w * xv[j];
            }
            y[i] = acc;
        }
        self.push(Op::MatVec { p, x: x.0 }, y)
    }

    pub fn add_bias(&mut self, b: ParamBlock, x: Var) -> Var {
        let xv = &self.vals[x.0];
        debug_assert_eq!(b.rows, xv.len());
        let bias = &self.params[b.offset..b.offset + b.rows];
        let y = DVector::from_fn(b.rows, |i, _| xv[i] + bias[i]);
        self.push(Op::AddBias { b, x: x.0 }, y)
    }

    pub fn gelu(&mut self, x: Var) -> Var {
        let y = self.vals[x.0].map(gelu);
        self.push(Op::Gelu { x: x.0 }, y)
    }

    /// Unit-sphere projection; errors when the input norm is below 1e-12.
    pub fn normalize(&mut self, x: Var) -> Result<Var, NnError> {
        let norm = self.vals[x.0].norm();
        if norm < 1e-12 {
            return Err(NnError::DegenerateProjection { norm });
        }
        let y = &self.vals[x.0] / norm;
        Ok(self.push(Op::Normalize { x: x.0 }, y))
    }

    pub fn lincomb(&mut self, terms: &[(f64, Var)]) -> Var {
        let len = self.vals[terms[0].1 .0].len();
        let mut y = DVector::zeros(len);
        for &(c, v) in terms {
            y.axpy(c, &self.vals[v.0], 1.0);
        }
        self.push(Op::LinComb { terms: terms.iter().map(|&(c, v)| (c, v.0)).collect() }, y)
    }

    pub fn sq_norm(&mut self, x: Var) -> Var {
        let v = DVector::from_element(1, self.vals[x.0].norm_squared());
        self.push(Op::SqNorm { x: x.0 }, v)
    }

    /// `|a - b|^2` as a scalar node.
    pub fn sq_diff(&mut self, a: Var, b: Var) -> Var {
        let d = self.lincomb(&[(1.0, a), (-1.0, b)]);
        self.sq_norm(d)
    }

    /// Full MLP forward on the tape.
    pub fn mlp(&mut self, layout: &MlpLayout, x: Var) -> Var {
        let z1 = self.matvec(layout.a1, x);
        let z1 = self.add_bias(layout.b1, z1);
        let h = self.gelu(z1);
        let z2 = self.matvec(layout.a2, h);
        self.add_bias(layout.b2, z2)
    }

    /// Reverse sweep seeding `d root / d root = seed`. Parameter gradients
    /// are accumulated into `param_grad` (same length as the parameter
    /// vector); the returned adjoints are indexed by node and hold gradients
    /// with respect to leaf inputs as well.
    pub fn backward_seeded(
        &self,
        root: Var,
        seed: &DVector<f64>,
        param_grad: &mut [f64],
    ) -> Vec<DVector<f64>> {
        assert_eq!(param_grad.len(), self.params.len());
        let mut adj: Vec<DVector<f64>> =
            self.vals.iter().map(|v| DVector::zeros(v.len())).collect();
        adj[root.0] = seed.clone();
        for idx in (0..self.ops.len()).rev() {
            let a = std::mem::replace(&mut adj[idx], DVector::zeros(0));
            if a.iter().all(|&x| x == 0.0) {
                adj[idx] = a;
                continue;
            }
            match &self.ops[idx] {
                Op::Leaf => {
                    adj[idx] = a;
                    continue;
                }
                Op::MatVec { p, x } => {
                    let xv = &self.vals[*x];
                    let ax = &mut adj[*x];
                    for i in 0..p.rows {
                        let ai = a[i];
                        if ai == 0.0 {
                            continue;
                        }
                        let row = &self.params[p.offset + i * p.cols..p.offset + (i + 1) * p.cols];
                        let grow =
                            &mut param_grad[p.offset + i * p.cols..p.offset + (i + 1) * p.cols];
                        for j in 0..p.cols {
                            grow[j] += ai * xv[j];
                            ax[j] += ai * row[j];
                        }
                    }
                }
                Op::AddBias { b, x } => {
                    let ax = &mut adj[*x];
                    for i in 0..b.rows {
                        param_grad[b.offset + i] += a[i];
                        ax[i] += a[i];
                    }
                }
                Op::Gelu { x } => {
                    let xv = &self.vals[*x];
                    let ax = &mut adj[*x];
                    for i in 0..xv.len() {
                        ax[i] += a[i] * gelu_prime(xv[i]);
                    }
                }
                Op::Normalize { x } => {
                    // y = x / |x|; J^T a = (a - y (y . a)) / |x|
                    let xv = &self.vals[*x];
                    let norm = xv.norm();
                    let y = &self.vals[idx];
                    let dot = y.dot(&a);
                    let ax = &mut adj[*x];
                    for i in 0..xv.len() {
                        ax[i] += (a[i] - y[i] * dot) / norm;
                    }
                }
                Op::LinComb { terms } => {
                    for &(c, v) in terms {
                        adj[v].axpy(c, &a, 1.0);
                    }
                }
                Op::SqNorm { x } => {
                    let s = 2.0 * a[0];
                    let xv = &self.vals[*x];
                    let ax = &mut adj[*x];
                    for i in 0..xv.len() {
                        ax[i] += s * xv[i];
                    }
                }
            }
            adj[idx] = a;
        }
        adj
    }

    /// Reverse sweep from a scalar node with unit seed.
    pub fn backward(&self, root: Var, param_grad: &mut [f64]) -> Vec<DVector<f64>> {
        debug_assert_eq!(self.value(root).len(), 1);
        self.backward_seeded(root, &DVector::from_element(1, 1.0), param_grad)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Central finite differences of `f` with respect to `params`.
    fn fd_grad(params: &[f64], f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
        let eps = 1e-6;
        let mut p = params.to_vec();
        (0..p.len())
            .map(|i| {
                let orig = p[i];
                p[i] = orig + eps;
                let up = f(&p);
                p[i] = orig - eps;
                let dn = f(&p);
                p[i] = orig;
                (up - dn) / (2.0 * eps)
            })
            .collect()
    }

    fn assert_close(got: &[f64], want: &[f64], tol: f64) {
        for (i, (g, w)) in got.iter().zip(want).enumerate() {
            let denom = g.abs().max(w.abs()).max(1e-8);
            assert!((g - w).abs() / denom <= tol, "grad[{i}]: {g} vs fd {w}");
        }
    }

    #[test]
    fn mlp_tape_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let layout = MlpLayout::new(3, 4, 2, 0);
        let params: Vec<f64> =
            (0..layout.param_count()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x = DVector::from_fn(3, |_, _| rng.random_range(-1.0..1.0));

        let loss = |p: &[f64]| {
            let mut t = Tape::new(p);
            let xi = t.leaf(x.clone());
            let y = t.mlp(&layout, xi);
            let s = t.sq_norm(y);
            t.scalar(s)
        };
        let mut grad = vec![0.0; params.len()];
        let mut t = Tape::new(&params);
        let xi = t.leaf(x.clone());
        let y = t.mlp(&layout, xi);
        let s = t.sq_norm(y);
        t.backward(s, &mut grad);
        assert_close(&grad, &fd_grad(&params, loss), 1e-5);
    }

    #[test]
    fn normalize_gradient_matches_finite_differences() {
        // Scalar loss |normalize(P x) - c|^2 exercises the projection Jacobian.
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = ParamBlock { offset: 0, rows: 3, cols: 3 };
        let params: Vec<f64> = (0..9).map(|_| rng.random_range(0.5..1.5)).collect();
        let x = DVector::from_vec(vec![0.7, -0.3, 0.4]);
        let c = DVector::from_vec(vec![0.0, 1.0, 0.0]);

        let loss = |pv: &[f64]| {
            let mut t = Tape::new(pv);
            let xi = t.leaf(x.clone());
            let y = t.matvec(p, xi);
            let u = t.normalize(y).unwrap();
            let ci = t.leaf(c.clone());
            let s = t.sq_diff(u, ci);
            t.scalar(s)
        };
        let mut grad = vec![0.0; 9];
        let mut t = Tape::new(&params);
        let xi = t.leaf(x.clone());
        let y = t.matvec(p, xi);
        let u = t.normalize(y).unwrap();
        let ci = t.leaf(c.clone());
        let s = t.sq_diff(u, ci);
        t.backward(s, &mut grad);
        assert_close(&grad, &fd_grad(&params, loss), 1e-6);
    }

    #[test]
    fn normalize_rejects_degenerate_input() {
        let params: Vec<f64> = vec![];
        let mut t = Tape::new(&params);
        let x = t.leaf(DVector::zeros(3));
        assert!(matches!(t.normalize(x), Err(NnError::DegenerateProjection { .. })));
    }

    #[test]
    fn input_adjoint_matches_mlp_backward() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let layout = MlpLayout::new(4, 5, 3, 0);
        let structured = MlpParams::glorot_uniform(4, 5, 3, &mut rng);
        let mut flat = Vec::new();
        MlpLayout::flatten_into(&structured, &mut flat);
        assert_eq!(flat.len(), layout.param_count());
        assert_eq!(layout.unflatten(&flat), structured);

        let x = DVector::from_fn(4, |_, _| rng.random_range(-1.0..1.0));
        let upstream = DVector::from_fn(3, |_, _| rng.random_range(-1.0..1.0));

        let mut t = Tape::new(&flat);
        let xi = t.leaf(x.clone());
        let y = t.mlp(&layout, xi);
        let mut grad = vec![0.0; flat.len()];
        let adj = t.backward_seeded(y, &upstream, &mut grad);

        let (g_params, g_x) = super::super::mlp_backward(&structured, &x, &upstream).unwrap();
        assert!((&adj[xi.0] - &g_x).norm() < 1e-12);
        let mut g_flat = Vec::new();
        MlpLayout::flatten_into(&g_params, &mut g_flat);
        for (a, b) in grad.iter().zip(&g_flat) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
