//! One-step estimator and Fisher-information utilities.
//!
//! The one-step estimator corrects each ASE row by a single Newton-type step
//! using plug-in probabilities `pt_ij = xb_i' xt_j` (ASE row against signed
//! ASE row). The plug-in probabilities are deliberately not clipped here: the
//! resulting information matrix can be indefinite or nearly singular, which
//! is exactly why this estimator is erratic in practice.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::graph_model::{Graph, LatentConfig};
use crate::linalg::{dot, row_major, sym_eigenvalues, symmetrize};
use crate::math;
use crate::par::map_indices;
use crate::spectral::Embedding;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FisherKind {
    Oracle,
    Plugin,
}

/// A symmetric `d x d` information matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FisherInfo {
    pub g: DMatrix<f64>,
    pub kind: FisherKind,
}

/// `G_0i = (1/n) sum_j rho I x0_j x0_j' I / (p_ij (1 - p_ij))` with
/// `p_ij = rho x0_i' I x0_j`, i.e. the per-vertex Fisher information at the
/// true latent position `sqrt(rho) x0_i`.
pub fn fisher_oracle(config: &LatentConfig, i: usize) -> Result<FisherInfo> {
    let n = config.n();
    let d = config.d();
    if i >= n {
        return Err(Error::InvalidParameter(format!("vertex {i} out of range for n = {n}")));
    }
    let signs = config.signature.signs();
    let mut g = DMatrix::zeros(d, d);
    let mut v = vec![0.0; d];
    for j in 0..n {
        let p = config.probability(i, j);
        let w = p * (1.0 - p);
        if !(w > 0.0) {
            return Err(Error::DegenerateProbability { j, value: p });
        }
        for k in 0..d {
            v[k] = signs[k] * config.x0[(j, k)];
        }
        let scale = config.rho / w;
        accumulate_outer(&mut g, &v, scale);
    }
    fill_upper(&mut g);
    g /= n as f64;
    Ok(FisherInfo { g, kind: FisherKind::Oracle })
}

// lower triangle only; `fill_upper` mirrors it afterwards
#[inline]
fn accumulate_outer(g: &mut DMatrix<f64>, v: &[f64], w: f64) {
    let d = v.len();
    for r in 0..d {
        let wr = w * v[r];
        for c in 0..=r {
            g[(r, c)] += wr * v[c];
        }
    }
}

fn fill_upper(g: &mut DMatrix<f64>) {
    let d = g.nrows();
    for r in 0..d {
        for c in 0..r {
            g[(c, r)] = g[(r, c)];
        }
    }
}

/// Row-major copies of the two embeddings for fast per-vertex plug-in sums.
#[derive(Debug, Clone)]
pub struct Plugin {
    ase_rows: Vec<f64>,
    signed_rows: Vec<f64>,
    n: usize,
    d: usize,
}

impl Plugin {
    pub fn new(ase: &Embedding, signed: &Embedding) -> Result<Self> {
        if ase.x.shape() != signed.x.shape() {
            return Err(Error::DimensionMismatch(format!(
                "embeddings have shapes {:?} and {:?}",
                ase.x.shape(),
                signed.x.shape()
            )));
        }
        Ok(Self { ase_rows: row_major(&ase.x), signed_rows: row_major(&signed.x), n: ase.n(), d: ase.d() })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn ase_row(&self, i: usize) -> &[f64] {
        &self.ase_rows[i * self.d..(i + 1) * self.d]
    }

    pub fn signed_row(&self, j: usize) -> &[f64] {
        &self.signed_rows[j * self.d..(j + 1) * self.d]
    }

    /// `pt_ij = xb_i' xt_j`.
    #[inline]
    pub fn prob(&self, i: usize, j: usize) -> f64 {
        dot(self.ase_row(i), self.signed_row(j))
    }

    /// `(1/n) sum_j xt_j xt_j' / (pt_ij (1 - pt_ij))`.
    ///
    /// With `clamp = Some(tau)` each `pt_ij` is first clipped to
    /// `[tau, 1 - tau]`, which keeps the matrix positive definite. Without it,
    /// `pt_ij` of exactly 0 or 1 is an error.
    pub fn information(&self, i: usize, clamp: Option<f64>) -> Result<FisherInfo> {
        let d = self.d;
        let mut g = DMatrix::zeros(d, d);
        for j in 0..self.n {
            let p = self.clamped(i, j, clamp)?;
            accumulate_outer(&mut g, self.signed_row(j), 1.0 / (p * (1.0 - p)));
        }
        fill_upper(&mut g);
        g /= self.n as f64;
        Ok(FisherInfo { g, kind: FisherKind::Plugin })
    }

    /// `(1/n) sum_j (A_ij - pt_ij) xt_j / (pt_ij (1 - pt_ij))`.
    pub fn score(&self, graph: &Graph, i: usize) -> Result<DVector<f64>> {
        let d = self.d;
        let row = graph.row(i);
        let mut s = DVector::zeros(d);
        for j in 0..self.n {
            let p = self.clamped(i, j, None)?;
            let w = (row[j] as f64 - p) / (p * (1.0 - p));
            for (k, x) in self.signed_row(j).iter().enumerate() {
                s[k] += w * x;
            }
        }
        s /= self.n as f64;
        Ok(s)
    }

    #[inline]
    fn clamped(&self, i: usize, j: usize, clamp: Option<f64>) -> Result<f64> {
        let p = self.prob(i, j);
        match clamp {
            Some(tau) => Ok(p.clamp(tau, 1.0 - tau)),
            None if p == 0.0 || p == 1.0 || !p.is_finite() => Err(Error::DegenerateProbability { j, value: p }),
            None => Ok(p),
        }
    }

    /// One-step update of row `i`.
    pub fn ose_row(&self, graph: &Graph, i: usize) -> Result<DVector<f64>> {
        let info = self.information(i, None)?;
        let score = self.score(graph, i)?;
        let step = solve_information(&info.g, &score)?;
        Ok(DVector::from_column_slice(self.ase_row(i)) + step)
    }
}

/// Solves `G s = b` for a symmetric, possibly indefinite `G`.
///
/// Fails if the smallest eigenvalue magnitude is at most `1e-12` times the
/// sum of magnitudes.
fn solve_information(g: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let eig = sym_eigenvalues(g);
    let total: f64 = eig.iter().map(|v| v.abs()).sum();
    let smallest = eig.iter().map(|v| v.abs()).fold(f64::INFINITY, f64::min);
    if !(total.is_finite()) || smallest <= 1e-12 * total {
        return Err(Error::SingularInformation);
    }
    symmetrize(g).lu().solve(b).ok_or(Error::SingularInformation)
}

/// One-step estimator for every vertex, as an `n x d` matrix.
pub fn ose(graph: &Graph, ase: &Embedding, signed: &Embedding) -> Result<DMatrix<f64>> {
    if graph.n() != ase.n() {
        return Err(Error::DimensionMismatch(format!("graph has {} vertices, embedding {}", graph.n(), ase.n())));
    }
    let plugin = Plugin::new(ase, signed)?;
    let rows = map_indices(graph.n(), |i| plugin.ose_row(graph, i).map_err(|e| e.at_vertex(i)));
    let mut out = DMatrix::zeros(graph.n(), plugin.d());
    for (i, r) in rows.into_iter().enumerate() {
        out.set_row(i, &r?.transpose());
    }
    Ok(out)
}

/// Trace of the inverse, `tr(G^{-1})`; used for the predicted spread of the
/// posterior around the truth.
pub fn inverse_trace(info: &FisherInfo) -> Result<f64> {
    let eig = sym_eigenvalues(&info.g);
    if eig[0] <= 0.0 {
        return Err(Error::NotPositiveDefinite("information matrix".into()));
    }
    Ok(eig.iter().map(|v| 1.0 / v).sum())
}

/// Spectral norm of a symmetric matrix.
pub fn sym_spectral_norm(m: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(m).iter().fold(0.0, |acc: f64, v| acc.max(v.abs()))
}

/// `sqrt(tr(G^{-1}))` helper kept alongside the other information utilities.
pub fn predicted_spread(info: &FisherInfo) -> Result<f64> {
    inverse_trace(info).map(math::sqrt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph_model::{make_scenario, sample_grdpg, ScenarioKind, ScenarioSpec, Signature};
    use crate::spectral::{embeddings, Variant};
    use approx::assert_abs_diff_eq;

    fn fake_embedding(rows: &[f64], n: usize, d: usize, variant: Variant) -> Embedding {
        Embedding {
            x: DMatrix::from_row_slice(n, d, rows),
            eigvals: vec![1.0; d],
            signs: vec![1.0; d],
            eigvecs: DMatrix::zeros(n, d),
            variant,
        }
    }

    #[test]
    fn oracle_single_term() {
        let cfg = LatentConfig::new(DMatrix::from_element(1, 1, 0.5f64.sqrt()), Signature::positive(1).unwrap(), 1.0)
            .unwrap();
        let g = fisher_oracle(&cfg, 0).unwrap();
        assert_abs_diff_eq!(g.g[(0, 0)], 2.0, epsilon = 1e-12);
        assert_eq!(g.kind, FisherKind::Oracle);
    }

    #[test]
    fn oracle_is_exactly_symmetric_and_matches_naive_loop() {
        let cfg = make_scenario(&ScenarioSpec::new(ScenarioKind::Curve3d, 50, 0)).unwrap();
        let g = fisher_oracle(&cfg, 7).unwrap().g;
        assert_eq!(g, g.transpose());
        let signs = [1.0, 1.0, -1.0];
        let mut naive = DMatrix::<f64>::zeros(3, 3);
        for j in 0..50 {
            let xi = cfg.x0.row(7);
            let xj = cfg.x0.row(j);
            let p: f64 = (0..3).map(|k| signs[k] * xi[k] * xj[k]).sum();
            for r in 0..3 {
                for c in 0..3 {
                    naive[(r, c)] += signs[r] * xj[r] * signs[c] * xj[c] / (p * (1.0 - p));
                }
            }
        }
        naive /= 50.0;
        assert!((g - naive).amax() < 1e-12);
    }

    #[test]
    fn oracle_sbm5_eigenvalues_in_band() {
        // every p lies in [0.18, 0.98], so 1/(p(1-p)) in [4, 1/(0.98 * 0.02)]
        let cfg = make_scenario(&ScenarioSpec::new(ScenarioKind::Sbm5, 300, 4)).unwrap();
        let g = fisher_oracle(&cfg, 0).unwrap().g;
        let eig = sym_eigenvalues(&g);
        let second_moment = cfg.x0.transpose() * &cfg.x0 / 300.0;
        let m = sym_eigenvalues(&second_moment);
        assert!(eig[0] >= 4.0 * m[0] - 1e-9);
        assert!(eig[1] <= m[1] / (0.98 * 0.02) + 1e-9);
    }

    #[test]
    fn oracle_rejects_degenerate_probability() {
        let cfg = LatentConfig::new(DMatrix::from_element(2, 1, 1.0), Signature::positive(1).unwrap(), 1.0).unwrap();
        assert!(matches!(fisher_oracle(&cfg, 0), Err(Error::DegenerateProbability { .. })));
    }

    #[test]
    fn zero_residual_gives_ase() {
        // A cannot equal non-binary pt, so check the score directly: when the
        // residual vanishes, the update is exactly zero.
        let rows = [0.6, 0.2, 0.5, -0.1, 0.7, 0.3];
        let ase = fake_embedding(&rows, 3, 2, Variant::Ase);
        let signed = fake_embedding(&rows, 3, 2, Variant::SignedAse);
        let plugin = Plugin::new(&ase, &signed).unwrap();
        let info = plugin.information(1, None).unwrap();
        let step = solve_information(&info.g, &DVector::zeros(2)).unwrap();
        assert_eq!(step, DVector::zeros(2));
    }

    #[test]
    fn three_vertex_matches_naive_formula() {
        let ase_rows = [0.7, 0.1, 0.5, -0.2, 0.6, 0.3];
        let signed_rows = [0.7, -0.1, 0.5, 0.2, 0.6, -0.3];
        let ase = fake_embedding(&ase_rows, 3, 2, Variant::Ase);
        let signed = fake_embedding(&signed_rows, 3, 2, Variant::SignedAse);
        let g = Graph::from_edges(3, [(0, 1), (1, 1), (0, 2)]).unwrap();
        let out = ose(&g, &ase, &signed).unwrap();
        for i in 0..3 {
            let xb = [ase_rows[2 * i], ase_rows[2 * i + 1]];
            let (mut g00, mut g01, mut g11, mut s0, mut s1) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for j in 0..3 {
                let xt = [signed_rows[2 * j], signed_rows[2 * j + 1]];
                let p = xb[0] * xt[0] + xb[1] * xt[1];
                let w = 1.0 / (p * (1.0 - p));
                g00 += w * xt[0] * xt[0] / 3.0;
                g01 += w * xt[0] * xt[1] / 3.0;
                g11 += w * xt[1] * xt[1] / 3.0;
                let a = g.get(i, j) as f64;
                s0 += (a - p) * w * xt[0] / 3.0;
                s1 += (a - p) * w * xt[1] / 3.0;
            }
            // 2x2 inverse by cofactors
            let det = g00 * g11 - g01 * g01;
            let d0 = (g11 * s0 - g01 * s1) / det;
            let d1 = (-g01 * s0 + g00 * s1) / det;
            assert_abs_diff_eq!(out[(i, 0)], xb[0] + d0, epsilon = 1e-12);
            assert_abs_diff_eq!(out[(i, 1)], xb[1] + d1, epsilon = 1e-12);
        }
    }

    #[test]
    fn ose_equals_weighted_least_squares_solution() {
        let cfg = make_scenario(&ScenarioSpec::new(ScenarioKind::Sbm5, 200, 9)).unwrap();
        let graph = sample_grdpg(&cfg, 9).unwrap();
        let (ase, signed) = embeddings(&graph, 2).unwrap();
        let plugin = Plugin::new(&ase, &signed).unwrap();
        let out = ose(&graph, &ase, &signed).unwrap();
        for i in [0, 17, 150] {
            // minimize sum_j w_j (A_ij - x' xt_j)^2 with w_j fixed at the plug-in
            // weights, via QR of the weighted design
            let mut design = DMatrix::zeros(200, 2);
            let mut rhs = DVector::zeros(200);
            for j in 0..200 {
                let p = plugin.prob(i, j);
                let sw = (1.0 / (p * (1.0 - p))).sqrt();
                design[(j, 0)] = sw * signed.x[(j, 0)];
                design[(j, 1)] = sw * signed.x[(j, 1)];
                rhs[j] = sw * graph.get(i, j) as f64;
            }
            let qr = design.qr();
            let qtb = qr.q().transpose() * rhs;
            let x = qr.r().solve_upper_triangular(&qtb).unwrap();
            assert!((out.row(i).transpose() - x).amax() < 1e-10 * (1.0 + out.row(i).amax()));
        }
    }

    #[test]
    fn clamped_information_is_positive_definite() {
        let ase_rows = [1.2, 0.0, 0.9, 0.1, -0.2, 0.5];
        let ase = fake_embedding(&ase_rows, 3, 2, Variant::Ase);
        let plugin = Plugin::new(&ase, &ase).unwrap();
        let info = plugin.information(0, Some(0.001)).unwrap();
        assert!(sym_eigenvalues(&info.g)[0] > 0.0);
    }

    #[test]
    fn singular_information_rejected() {
        // all signed rows parallel: rank-one information in d = 2
        let rows = [0.5, 0.0, 0.4, 0.0, 0.3, 0.0];
        let ase = fake_embedding(&rows, 3, 2, Variant::Ase);
        let g = Graph::from_edges(3, [(0, 1)]).unwrap();
        assert!(matches!(ose(&g, &ase, &ase), Err(Error::Vertex { .. })));
    }
}
