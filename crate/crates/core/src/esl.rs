//! The extended surrogate log-likelihood (ESL).
//!
//! `psi` equals `log` on `[tau, 1]` and continues with quadratic tails below
//! `tau` and above `1`, matched to second order at both junctions. The local
//! ESL of vertex `i` is
//!
//! ```text
//! l_i(x) = sum_j A_ij psi(x' xt_j) + (1 - A_ij) psi(1 - x' xt_j)
//! ```
//!
//! where `xt_j` are rows of the signed ASE. Since `psi'' <= -1` everywhere,
//! `l_i` is strictly concave whenever `sum_j xt_j xt_j'` is full rank, and its
//! maximizer (MESLE) is found by a damped Newton iteration.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::graph_model::Graph;
use crate::linalg::{self, dot, row_major};
use crate::math;
use crate::par::map_indices;
use crate::spectral::Embedding;

/// `min(0.001, e^1.5 / n)`.
pub fn default_tau(n: usize) -> f64 {
    let scaled = math::exp(1.5) / n as f64;
    if scaled < 0.001 {
        scaled
    } else {
        0.001
    }
}

/// The `C^2` extension of `log`.
#[inline]
pub fn psi(t: f64, tau: f64) -> f64 {
    if t < tau {
        -t * t / (2.0 * tau * tau) + 2.0 * t / tau + (math::ln(tau) - 1.5)
    } else if t <= 1.0 {
        math::ln(t)
    } else {
        -t * t / 2.0 + 2.0 * t - 1.5
    }
}

/// First derivative of [`psi`].
#[inline]
pub fn psi_d1(t: f64, tau: f64) -> f64 {
    if t < tau {
        -t / (tau * tau) + 2.0 / tau
    } else if t <= 1.0 {
        1.0 / t
    } else {
        -t + 2.0
    }
}

/// Second derivative of [`psi`]; lies in `[-1/tau^2, -1]`.
#[inline]
pub fn psi_d2(t: f64, tau: f64) -> f64 {
    if t < tau {
        -1.0 / (tau * tau)
    } else if t <= 1.0 {
        -1.0 / (t * t)
    } else {
        -1.0
    }
}

/// Signed-ASE rows shared by every vertex's ESL, plus the truncation level.
#[derive(Debug, Clone, PartialEq)]
pub struct Surrogate {
    rows: Vec<f64>,
    n: usize,
    d: usize,
    tau: f64,
}

impl Surrogate {
    pub fn new(signed: &Embedding, tau: f64) -> Result<Self> {
        Self::from_rows(row_major(&signed.x), signed.d(), tau)
    }

    /// `rows` is an `n x d` row-major matrix of signed-ASE rows.
    pub fn from_rows(rows: Vec<f64>, d: usize, tau: f64) -> Result<Self> {
        if !(tau > 0.0 && tau < 0.5) {
            return Err(Error::InvalidParameter(format!("truncation tau = {tau} must lie in (0, 1/2)")));
        }
        if d == 0 || !rows.len().is_multiple_of(d) {
            return Err(Error::DimensionMismatch(format!("{} values do not form rows of width {d}", rows.len())));
        }
        let n = rows.len() / d;
        Ok(Self { rows, n, d, tau })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn rows(&self) -> &[f64] {
        &self.rows
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.rows[j * self.d..(j + 1) * self.d]
    }

    /// ESL context for `vertex`, using its adjacency row.
    pub fn context<'a>(&'a self, graph: &'a Graph, vertex: usize) -> Result<EslContext<'a>> {
        if graph.n() != self.n {
            return Err(Error::DimensionMismatch(format!("graph has {} vertices, embedding {}", graph.n(), self.n)));
        }
        EslContext::new(&self.rows, self.d, graph.row(vertex), vertex, self.tau)
    }
}

/// Everything needed to evaluate the ESL of one vertex.
#[derive(Debug, Clone, Copy)]
pub struct EslContext<'a> {
    rows: &'a [f64],
    d: usize,
    adj_row: &'a [u8],
    vertex: usize,
    tau: f64,
}

impl<'a> EslContext<'a> {
    pub fn new(rows: &'a [f64], d: usize, adj_row: &'a [u8], vertex: usize, tau: f64) -> Result<Self> {
        if !(tau > 0.0 && tau < 0.5) {
            return Err(Error::InvalidParameter(format!("truncation tau = {tau} must lie in (0, 1/2)")));
        }
        if d == 0 || rows.len() != adj_row.len() * d {
            return Err(Error::DimensionMismatch(format!(
                "{} embedding values for {} adjacency entries at d = {d}",
                rows.len(),
                adj_row.len()
            )));
        }
        if vertex >= adj_row.len() {
            return Err(Error::InvalidParameter(format!("vertex {vertex} out of range")));
        }
        Ok(Self { rows, d, adj_row, vertex, tau })
    }

    pub fn n(&self) -> usize {
        self.adj_row.len()
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn vertex(&self) -> usize {
        self.vertex
    }

    /// The vertex's own signed-ASE row, the default starting point.
    pub fn own_row(&self) -> &'a [f64] {
        &self.rows[self.vertex * self.d..(self.vertex + 1) * self.d]
    }

    pub fn adj_row(&self) -> &'a [u8] {
        self.adj_row
    }

    /// `l_i(x)`.
    pub fn value(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.d);
        match self.d {
            1 => self.value_fixed::<1>(x),
            2 => self.value_fixed::<2>(x),
            3 => self.value_fixed::<3>(x),
            _ => self.value_dyn(x),
        }
    }

    fn value_fixed<const D: usize>(&self, x: &[f64]) -> f64 {
        let mut xs = [0.0; D];
        xs.copy_from_slice(x);
        let tau = self.tau;
        let mut total = 0.0;
        for (row, &a) in self.rows.chunks_exact(D).zip(self.adj_row) {
            let mut u = 0.0;
            for k in 0..D {
                u += xs[k] * row[k];
            }
            total += if a != 0 { psi(u, tau) } else { psi(1.0 - u, tau) };
        }
        total
    }

    fn value_dyn(&self, x: &[f64]) -> f64 {
        let tau = self.tau;
        self.rows
            .chunks_exact(self.d)
            .zip(self.adj_row)
            .map(|(row, &a)| {
                let u = dot(x, row);
                if a != 0 {
                    psi(u, tau)
                } else {
                    psi(1.0 - u, tau)
                }
            })
            .sum()
    }

    /// Writes `grad l_i(x)` into `out`.
    pub fn grad_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.d);
        debug_assert_eq!(out.len(), self.d);
        match self.d {
            1 => self.grad_fixed::<1>(x, out),
            2 => self.grad_fixed::<2>(x, out),
            3 => self.grad_fixed::<3>(x, out),
            _ => self.grad_dyn(x, out),
        }
    }

    fn grad_fixed<const D: usize>(&self, x: &[f64], out: &mut [f64]) {
        let mut xs = [0.0; D];
        xs.copy_from_slice(x);
        let tau = self.tau;
        let mut acc = [0.0; D];
        for (row, &a) in self.rows.chunks_exact(D).zip(self.adj_row) {
            let mut u = 0.0;
            for k in 0..D {
                u += xs[k] * row[k];
            }
            let w = if a != 0 { psi_d1(u, tau) } else { -psi_d1(1.0 - u, tau) };
            for k in 0..D {
                acc[k] += w * row[k];
            }
        }
        out.copy_from_slice(&acc);
    }

    fn grad_dyn(&self, x: &[f64], out: &mut [f64]) {
        let tau = self.tau;
        out.iter_mut().for_each(|v| *v = 0.0);
        for (row, &a) in self.rows.chunks_exact(self.d).zip(self.adj_row) {
            let u = dot(x, row);
            let w = if a != 0 { psi_d1(u, tau) } else { -psi_d1(1.0 - u, tau) };
            for (o, r) in out.iter_mut().zip(row) {
                *o += w * r;
            }
        }
    }

    pub fn grad(&self, x: &[f64]) -> DVector<f64> {
        let mut out = vec![0.0; self.d];
        self.grad_into(x, &mut out);
        DVector::from_vec(out)
    }

    /// Hessian `sum_j [A_ij psi''(u_j) + (1 - A_ij) psi''(1 - u_j)] xt_j xt_j'`.
    pub fn hess(&self, x: &[f64]) -> DMatrix<f64> {
        let d = self.d;
        let tau = self.tau;
        let mut h = DMatrix::zeros(d, d);
        for (row, &a) in self.rows.chunks_exact(d).zip(self.adj_row) {
            let u = dot(x, row);
            let w = if a != 0 { psi_d2(u, tau) } else { psi_d2(1.0 - u, tau) };
            for r in 0..d {
                let wr = w * row[r];
                for c in 0..=r {
                    h[(r, c)] += wr * row[c];
                }
            }
        }
        for r in 0..d {
            for c in 0..r {
                h[(c, r)] = h[(r, c)];
            }
        }
        h
    }
}

/// Outcome of the Newton solve for one vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct MesleResult {
    pub x_hat: DVector<f64>,
    pub iterations: usize,
    pub grad_norm: f64,
    /// Hessian of the ESL at `x_hat` (negative definite).
    pub hessian: DMatrix<f64>,
}

pub const MESLE_MAX_ITERS: usize = 100;
const MAX_HALVINGS: usize = 30;

/// Maximizer of the ESL started from the vertex's own signed-ASE row.
pub fn mesle(ctx: &EslContext<'_>) -> Result<MesleResult> {
    mesle_from(ctx, ctx.own_row())
}

/// Newton ascent with step halving from an arbitrary start.
pub fn mesle_from(ctx: &EslContext<'_>, start: &[f64]) -> Result<MesleResult> {
    let d = ctx.d();
    if start.len() != d {
        return Err(Error::DimensionMismatch(format!("start has length {}, expected {d}", start.len())));
    }
    let tol = 1e-9 * ctx.n() as f64;
    let mut x = start.to_vec();
    let mut f = ctx.value(&x);
    let mut g = vec![0.0; d];
    let mut trial = vec![0.0; d];
    for it in 0..=MESLE_MAX_ITERS {
        ctx.grad_into(&x, &mut g);
        let grad_norm = linalg::norm(&g);
        let hessian = ctx.hess(&x);
        if grad_norm <= tol {
            // one more full Newton step costs little and usually lands at
            // machine precision; keep it only if the score shrinks
            if let Ok(chol) = linalg::cholesky(&-&hessian, "negative ESL Hessian") {
                let step = chol.solve(&DVector::from_column_slice(&g));
                for k in 0..d {
                    trial[k] = x[k] + step[k];
                }
                ctx.grad_into(&trial, &mut g);
                let polished = linalg::norm(&g);
                if polished < grad_norm {
                    let hessian = ctx.hess(&trial);
                    return Ok(MesleResult { x_hat: DVector::from_vec(trial), iterations: it + 1, grad_norm: polished, hessian });
                }
            }
            return Ok(MesleResult { x_hat: DVector::from_vec(x), iterations: it, grad_norm, hessian });
        }
        if it == MESLE_MAX_ITERS {
            return Err(Error::NoConvergence { iterations: it, grad_norm });
        }
        let neg_h = -&hessian;
        let step = linalg::cholesky(&neg_h, "negative ESL Hessian")?.solve(&DVector::from_column_slice(&g));
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..=MAX_HALVINGS {
            for k in 0..d {
                trial[k] = x[k] + t * step[k];
            }
            let ft = ctx.value(&trial);
            if ft >= f - 1e-13 * f.abs().max(1.0) {
                x.copy_from_slice(&trial);
                f = ft;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            return Err(Error::NoConvergence { iterations: it, grad_norm });
        }
    }
    unreachable!()
}

/// MESLE for every vertex, rows of the returned `n x d` matrix.
pub fn mesle_all(graph: &Graph, signed: &Embedding, tau: f64) -> Result<DMatrix<f64>> {
    let surrogate = Surrogate::new(signed, tau)?;
    let n = graph.n();
    let d = signed.d();
    let rows = map_indices(n, |i| {
        surrogate
            .context(graph, i)
            .and_then(|ctx| mesle(&ctx))
            .map(|r| r.x_hat)
            .map_err(|e| e.at_vertex(i))
    });
    let mut out = DMatrix::zeros(n, d);
    for (i, r) in rows.into_iter().enumerate() {
        out.set_row(i, &r?.transpose());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_instance(rng: &mut ChaCha8Rng, n: usize, d: usize) -> (Vec<f64>, Vec<u8>) {
        let rows: Vec<f64> = (0..n * d).map(|_| rng.random_range(-0.3..0.8)).collect();
        let adj: Vec<u8> = (0..n).map(|_| rng.random_range(0..2u8)).collect();
        (rows, adj)
    }

    #[test]
    fn psi_at_one() {
        for tau in [1e-4, 1e-3, 0.01, 0.3] {
            assert_eq!(psi(1.0, tau), 0.0);
            assert_eq!(psi_d1(1.0, tau), 1.0);
            assert_eq!(psi_d2(1.0, tau), -1.0);
        }
    }

    #[test]
    fn psi_left_tail_value() {
        // -(0.04)/(0.02) + 2(-0.2)/0.1 + ln(0.1) - 1.5
        let expected = -2.0 - 4.0 + 0.1f64.ln() - 1.5;
        assert_abs_diff_eq!(psi(-0.2, 0.1), expected, epsilon = 1e-14);
        assert_abs_diff_eq!(expected, -9.802585092994046, epsilon = 1e-12);
    }

    #[test]
    fn psi_junctions_match() {
        for tau in [1e-4, 1e-3, 0.01] {
            let left = |t: f64| -t * t / (2.0 * tau * tau) + 2.0 * t / tau + (tau.ln() - 1.5);
            let right = |t: f64| -t * t / 2.0 + 2.0 * t - 1.5;
            assert_abs_diff_eq!(left(tau), tau.ln(), epsilon = 1e-12);
            assert_abs_diff_eq!(right(1.0), 0.0, epsilon = 1e-12);
            assert_abs_diff_eq!(-tau / (tau * tau) + 2.0 / tau, 1.0 / tau, epsilon = 1e-12 * (1.0 / tau));
            assert_abs_diff_eq!(psi_d2(tau, tau), -1.0 / (tau * tau), epsilon = 0.0);
        }
    }

    #[test]
    fn default_tau_values() {
        assert_eq!(default_tau(1000), 0.001);
        assert_abs_diff_eq!(default_tau(10_000), 1.5f64.exp() / 10_000.0, epsilon = 1e-18);
    }

    #[test]
    fn single_term_values() {
        let rows = [1.0, 0.0];
        let ctx = EslContext::new(&rows, 2, &[1], 0, 0.01).unwrap();
        assert_eq!(ctx.value(&[1.0, 0.0]), 0.0);
        let h = ctx.hess(&[1.0, 0.0]);
        assert_eq!(h, DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, 0.0]));
        let ctx0 = EslContext::new(&rows, 2, &[0], 0, 0.01).unwrap();
        assert_eq!(ctx0.value(&[0.0, 0.0]), 0.0);
    }

    #[test]
    fn zero_graph_gradient_at_origin() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (rows, _) = random_instance(&mut rng, 7, 2);
        let adj = [0u8; 7];
        let ctx = EslContext::new(&rows, 2, &adj, 0, 0.01).unwrap();
        let g = ctx.grad(&[0.0, 0.0]);
        for k in 0..2 {
            let s: f64 = (0..7).map(|j| rows[j * 2 + k]).sum();
            assert_abs_diff_eq!(g[k], -s, epsilon = 1e-14);
        }
    }

    #[test]
    fn value_matches_naive_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for d in [1, 2, 3, 4] {
            let (rows, adj) = random_instance(&mut rng, 5, d);
            let ctx = EslContext::new(&rows, d, &adj, 0, 0.05).unwrap();
            let x: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
            let mut naive = 0.0;
            for j in 0..5 {
                let mut u = 0.0;
                for k in 0..d {
                    u += x[k] * rows[j * d + k];
                }
                naive += if adj[j] == 1 { psi(u, 0.05) } else { psi(1.0 - u, 0.05) };
            }
            assert_abs_diff_eq!(ctx.value(&x), naive, epsilon = 1e-12);
        }
    }

    #[test]
    fn one_dimensional_maximizer_matches_bisection() {
        // hand-built n = 3, d = 1
        let rows = [0.6, 0.3, 0.8];
        let adj = [1u8, 0, 1];
        let ctx = EslContext::new(&rows, 1, &adj, 0, 0.01).unwrap();
        let score = |x: f64| ctx.grad(&[x])[0];
        // oracle: coarse grid bracket then bisection on the (decreasing) score
        let mut lo = -5.0;
        let mut hi = 5.0;
        let grid: Vec<f64> = (0..=1000).map(|k| -5.0 + 0.01 * k as f64).collect();
        for w in grid.windows(2) {
            if score(w[0]) > 0.0 && score(w[1]) <= 0.0 {
                lo = w[0];
                hi = w[1];
            }
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if score(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let golden = 0.5 * (lo + hi);
        let r = mesle(&ctx).unwrap();
        assert_abs_diff_eq!(r.x_hat[0], golden, epsilon = 1e-12);
    }

    #[test]
    fn mesle_improves_on_start_and_is_start_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (rows, adj) = random_instance(&mut rng, 40, 2);
        let ctx = EslContext::new(&rows, 2, &adj, 3, 0.001).unwrap();
        let r = mesle(&ctx).unwrap();
        assert!(ctx.value(r.x_hat.as_slice()) >= ctx.value(ctx.own_row()));
        assert!(r.grad_norm <= 1e-9 * 40.0);
        assert!((r.hessian.clone() - r.hessian.transpose()).amax() < 1e-12);
        assert!(crate::linalg::sym_eigenvalues(&r.hessian)[1] < 0.0);
        for start in [[0.0, 0.0], [0.3, -0.4]] {
            let other = mesle_from(&ctx, &start).unwrap();
            assert!((&other.x_hat - &r.x_hat).amax() < 1e-8);
        }
    }

    #[test]
    fn gradient_and_hessian_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for d in [1, 2, 3, 5] {
            let (rows, adj) = random_instance(&mut rng, 30, d);
            let tau = 0.05;
            let ctx = EslContext::new(&rows, d, &adj, 0, tau).unwrap();
            // keep away from the junctions so central differences stay smooth
            let x: Vec<f64> = loop {
                let cand: Vec<f64> = (0..d).map(|_| rng.random_range(-1.5..1.5)).collect();
                let near = rows.chunks_exact(d).any(|r| {
                    let u = dot(&cand, r);
                    [tau, 1.0, 1.0 - tau, 0.0].iter().any(|b| (u - b).abs() < 1e-3)
                });
                if !near {
                    break cand;
                }
            };
            let h = 1e-6;
            let g = ctx.grad(&x);
            let hess = ctx.hess(&x);
            for k in 0..d {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[k] += h;
                xm[k] -= h;
                let fd = (ctx.value(&xp) - ctx.value(&xm)) / (2.0 * h);
                assert!((fd - g[k]).abs() < 1e-5 * (1.0 + g[k].abs()), "d={d} k={k}: {fd} vs {}", g[k]);
                let gp = ctx.grad(&xp);
                let gm = ctx.grad(&xm);
                for l in 0..d {
                    let fd2 = (gp[l] - gm[l]) / (2.0 * h);
                    assert!((fd2 - hess[(l, k)]).abs() < 1e-4 * (1.0 + hess[(l, k)].abs()));
                }
            }
        }
    }

    proptest::proptest! {
        #[test]
        fn psi_is_concave_with_curvature_at_most_minus_one(t in -5.0f64..5.0, tau in 1e-4f64..0.4) {
            proptest::prop_assert!(psi_d2(t, tau) <= -1.0);
            // midpoint concavity
            let s = t + 0.37;
            proptest::prop_assert!(psi(0.5 * (t + s), tau) >= 0.5 * (psi(t, tau) + psi(s, tau)) - 1e-9);
        }

        #[test]
        fn esl_is_midpoint_concave(seed in 0u64..1000, a in -2.0f64..2.0, b in -2.0f64..2.0, c in -2.0f64..2.0, e in -2.0f64..2.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (rows, adj) = random_instance(&mut rng, 12, 2);
            let ctx = EslContext::new(&rows, 2, &adj, 0, 0.01).unwrap();
            let x = [a, b];
            let y = [c, e];
            let m = [0.5 * (a + c), 0.5 * (b + e)];
            let lhs = ctx.value(&m);
            let rhs = 0.5 * (ctx.value(&x) + ctx.value(&y));
            proptest::prop_assert!(lhs >= rhs - 1e-9 * (1.0 + rhs.abs()));
        }
    }
}
