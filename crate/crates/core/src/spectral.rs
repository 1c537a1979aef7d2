//! Top-`d` eigendecomposition by absolute eigenvalue, the adjacency spectral
//! embedding (ASE) and its signature-adjusted variant.
//!
//! Small problems (`n <= DENSE_LIMIT`) use a dense symmetric solver. Larger
//! ones use Lanczos with full reorthogonalization, grown until every selected
//! Ritz pair meets the residual bound. Either way each returned pair satisfies
//! `||A v - lambda v|| <= 1e-6 max(1, |lambda|)`, which is checked before
//! returning.

use alloc::vec;
use alloc::vec::Vec;
use alloc::format;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::graph_model::Graph;
use crate::linalg::dot;
use crate::math;
use crate::rng::{substream, tag};

/// Problems up to this size are solved densely.
pub const DENSE_LIMIT: usize = 512;

const TIE_TOL: f64 = 1e-10;
const RESIDUAL_TOL: f64 = 1e-6;
const LANCZOS_TOL: f64 = 1e-11;

/// Symmetric linear operator: only `y = A x` is needed by the iterative path.
pub trait SymmetricOperator {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
    fn to_dense(&self) -> DMatrix<f64>;
}

impl SymmetricOperator for Graph {
    fn dim(&self) -> usize {
        self.n()
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.matvec(x, y)
    }
    fn to_dense(&self) -> DMatrix<f64> {
        self.to_matrix()
    }
}

impl SymmetricOperator for DMatrix<f64> {
    fn dim(&self) -> usize {
        self.nrows()
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let n = self.nrows();
        y.iter_mut().for_each(|v| *v = 0.0);
        for (j, &xj) in x.iter().enumerate() {
            if xj != 0.0 {
                let col = self.column(j);
                for i in 0..n {
                    y[i] += col[i] * xj;
                }
            }
        }
    }
    fn to_dense(&self) -> DMatrix<f64> {
        self.clone()
    }
}

/// `d` eigenpairs, eigenvalues decreasing as real numbers, eigenvectors as
/// orthonormal columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Eigenpairs {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
}

impl Eigenpairs {
    /// Largest residual `||A v - lambda v||` over the pairs.
    pub fn max_residual<A: SymmetricOperator + ?Sized>(&self, a: &A) -> f64 {
        let n = a.dim();
        let mut worst = 0.0f64;
        let mut av = vec![0.0; n];
        for (k, &lam) in self.values.iter().enumerate() {
            let v: Vec<f64> = self.vectors.column(k).iter().copied().collect();
            a.apply(&v, &mut av);
            let r: f64 = av.iter().zip(&v).map(|(x, y)| (x - lam * y) * (x - lam * y)).sum();
            worst = worst.max(math::sqrt(r) / lam.abs().max(1.0));
        }
        worst
    }
}

/// Top-`d` eigenpairs of the adjacency matrix by `|lambda|`.
pub fn top_d_eigen(graph: &Graph, d: usize) -> Result<Eigenpairs> {
    top_d_eigen_op(graph, d)
}

/// Top-`d` eigenpairs of any symmetric operator by `|lambda|`, reordered
/// decreasing as real numbers.
pub fn top_d_eigen_op<A: SymmetricOperator + ?Sized>(a: &A, d: usize) -> Result<Eigenpairs> {
    let n = a.dim();
    if d == 0 || d > n {
        return Err(Error::InvalidParameter(format!("embedding dimension {d} must lie in 1..={n}")));
    }
    let (mut values, mut vectors) = if n <= DENSE_LIMIT {
        dense_top(a, d)
    } else {
        lanczos_top(a, d)?
    };

    // values/vectors arrive sorted by |lambda| descending with one extra pair
    // (when it exists) for the tie check.
    if values.len() > d {
        let at_d = values[d - 1].abs();
        let next = values[d].abs();
        if (at_d - next).abs() <= TIE_TOL * at_d.max(1.0) {
            return Err(Error::AmbiguousSelection { at_d, next });
        }
    }
    values.truncate(d);
    let vectors_d = vectors.columns(0, d).into_owned();
    vectors = vectors_d;

    let scale = values[0].abs().max(1.0);
    for (k, v) in values.iter().enumerate() {
        if v.abs() <= TIE_TOL * scale {
            return Err(Error::ZeroEigenvalue { k });
        }
    }

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| values[j].total_cmp(&values[i]));
    let sorted_values: Vec<f64> = order.iter().map(|&k| values[k]).collect();
    let mut sorted_vectors = DMatrix::zeros(n, d);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = vectors.column(src).into_owned();
        // largest-magnitude entry positive
        let mut best = 0usize;
        for i in 1..n {
            if col[i].abs() > col[best].abs() {
                best = i;
            }
        }
        if col[best] < 0.0 {
            col.neg_mut();
        }
        sorted_vectors.set_column(dst, &col);
    }
    let pairs = Eigenpairs { values: sorted_values, vectors: sorted_vectors };
    let residual = pairs.max_residual(a);
    if residual > RESIDUAL_TOL {
        return Err(Error::EigenNoConvergence { residual });
    }
    Ok(pairs)
}

fn by_abs_desc(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&i, &j| values[j].abs().total_cmp(&values[i].abs()).then(values[j].total_cmp(&values[i])));
    idx
}

fn dense_top<A: SymmetricOperator + ?Sized>(a: &A, d: usize) -> (Vec<f64>, DMatrix<f64>) {
    let n = a.dim();
    let eig = SymmetricEigen::new(a.to_dense());
    let vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    let idx = by_abs_desc(&vals);
    let keep = (d + 1).min(n);
    let values = idx[..keep].iter().map(|&k| vals[k]).collect();
    let mut vectors = DMatrix::zeros(n, keep);
    for (dst, &src) in idx[..keep].iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

fn orthogonalize(w: &mut [f64], basis: &[Vec<f64>]) {
    // two passes of classical Gram-Schmidt
    for _ in 0..2 {
        for v in basis {
            let c = dot(v, w);
            for (wi, vi) in w.iter_mut().zip(v) {
                *wi -= c * vi;
            }
        }
    }
}

fn unit(w: &mut [f64]) -> f64 {
    let nrm = math::sqrt(dot(w, w));
    if nrm > 0.0 {
        w.iter_mut().for_each(|x| *x /= nrm);
    }
    nrm
}

fn lanczos_top<A: SymmetricOperator + ?Sized>(a: &A, d: usize) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = a.dim();
    let want = (d + 1).min(n);
    let mut rng = substream(0, &[tag::LANCZOS, n as u64, d as u64]);
    let mut random_unit = |basis: &[Vec<f64>]| -> Vec<f64> {
        loop {
            let mut q: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            orthogonalize(&mut q, basis);
            if unit(&mut q) > 1e-8 {
                return q;
            }
        }
    };

    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut q = random_unit(&basis);
    let mut w = vec![0.0; n];
    let mut norm_est = 0.0f64;
    let first_check = (2 * want + 10).max(30).min(n);

    loop {
        a.apply(&q, &mut w);
        let a_j = dot(&q, &w);
        basis.push(q.clone());
        orthogonalize(&mut w, &basis);
        alpha.push(a_j);
        let b_j = unit(&mut w);
        norm_est = norm_est.max(a_j.abs() + b_j);
        let m = basis.len();

        let breakdown = b_j <= 1e-12 * norm_est.max(1.0);
        let full = m == n;
        if full || (m >= first_check && ((m - first_check).is_multiple_of(10) || breakdown)) {
            let t = DMatrix::from_fn(m, m, |i, j| {
                if i == j {
                    alpha[i]
                } else if i + 1 == j {
                    beta[i]
                } else if j + 1 == i {
                    beta[j]
                } else {
                    0.0
                }
            });
            let eig = SymmetricEigen::new(t);
            let theta: Vec<f64> = eig.eigenvalues.iter().copied().collect();
            let idx = by_abs_desc(&theta);
            let resid_b = if breakdown { 0.0 } else { b_j };
            let converged = full
                || idx[..d]
                    .iter()
                    .all(|&k| resid_b * eig.eigenvectors[(m - 1, k)].abs() <= LANCZOS_TOL * theta[k].abs().max(1.0));
            if converged {
                let keep = want.min(m);
                let values: Vec<f64> = idx[..keep].iter().map(|&k| theta[k]).collect();
                let mut vectors = DMatrix::zeros(n, keep);
                for (dst, &k) in idx[..keep].iter().enumerate() {
                    let mut col = vec![0.0; n];
                    for (r, v) in basis.iter().enumerate() {
                        let c = eig.eigenvectors[(r, k)];
                        for (ci, vi) in col.iter_mut().zip(v) {
                            *ci += c * vi;
                        }
                    }
                    unit(&mut col);
                    vectors.set_column(dst, &nalgebra::DVector::from_vec(col));
                }
                return Ok((values, vectors));
            }
        }
        if full {
            unreachable!("full Krylov basis always converges");
        }
        if breakdown {
            // invariant subspace: restart in its orthogonal complement
            beta.push(0.0);
            q = random_unit(&basis);
        } else {
            beta.push(b_j);
            q = w.clone();
        }
    }
}

/// Which embedding a matrix holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    /// `X = U |S|^{1/2}`.
    Ase,
    /// `X = U |S|^{1/2} sgn(S)`.
    SignedAse,
}

/// An `n x d` spectral embedding together with the eigen-data it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub x: DMatrix<f64>,
    pub eigvals: Vec<f64>,
    pub signs: Vec<f64>,
    pub eigvecs: DMatrix<f64>,
    pub variant: Variant,
}

impl Embedding {
    pub fn from_eigen(pairs: &Eigenpairs, variant: Variant) -> Self {
        let (n, d) = pairs.vectors.shape();
        let signs: Vec<f64> = pairs.values.iter().map(|v| if *v < 0.0 { -1.0 } else { 1.0 }).collect();
        let mut x = DMatrix::zeros(n, d);
        for k in 0..d {
            let mut s = math::sqrt(pairs.values[k].abs());
            if variant == Variant::SignedAse {
                s *= signs[k];
            }
            for i in 0..n {
                x[(i, k)] = pairs.vectors[(i, k)] * s;
            }
        }
        Self { x, eigvals: pairs.values.clone(), signs, eigvecs: pairs.vectors.clone(), variant }
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn d(&self) -> usize {
        self.x.ncols()
    }

    /// Number of negative eigenvalues among the selected `d`.
    pub fn negative_count(&self) -> usize {
        self.signs.iter().filter(|s| **s < 0.0).count()
    }

    /// `sum_k lambda_k u_k u_k'`, the rank-`d` spectral truncation.
    pub fn truncation(&self) -> DMatrix<f64> {
        let lam = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&self.eigvals));
        &self.eigvecs * lam * self.eigvecs.transpose()
    }
}

/// Adjacency spectral embedding `U_A |S_A|^{1/2}`.
pub fn ase(graph: &Graph, d: usize) -> Result<Embedding> {
    Ok(Embedding::from_eigen(&top_d_eigen(graph, d)?, Variant::Ase))
}

/// Signature-adjusted ASE `U_A |S_A|^{1/2} sgn(S_A)`.
pub fn signed_ase(graph: &Graph, d: usize) -> Result<Embedding> {
    Ok(Embedding::from_eigen(&top_d_eigen(graph, d)?, Variant::SignedAse))
}

/// Both embeddings from a single eigendecomposition.
pub fn embeddings(graph: &Graph, d: usize) -> Result<(Embedding, Embedding)> {
    let pairs = top_d_eigen(graph, d)?;
    Ok((Embedding::from_eigen(&pairs, Variant::Ase), Embedding::from_eigen(&pairs, Variant::SignedAse)))
}

/// Plug-in edge probabilities `p_ij = ase_i' signed_j`.
pub fn plugin_probs(ase: &Embedding, signed: &Embedding) -> Result<DMatrix<f64>> {
    if ase.x.shape() != signed.x.shape() {
        return Err(Error::DimensionMismatch(format!(
            "embeddings have shapes {:?} and {:?}",
            ase.x.shape(),
            signed.x.shape()
        )));
    }
    Ok(&ase.x * signed.x.transpose())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph_model::{edge_probability_matrix, make_scenario, sample_grdpg, ScenarioKind, ScenarioSpec};
    use approx::assert_abs_diff_eq;

    fn orthonormal_error(v: &DMatrix<f64>) -> f64 {
        let d = v.ncols();
        (v.transpose() * v - DMatrix::<f64>::identity(d, d)).amax()
    }

    #[test]
    fn identity_selection_is_ambiguous() {
        let g = Graph::from_edges(3, [(0, 0), (1, 1), (2, 2)]).unwrap();
        assert!(matches!(top_d_eigen(&g, 1), Err(Error::AmbiguousSelection { .. })));
        let all = top_d_eigen(&g, 3).unwrap();
        for v in &all.values {
            assert_abs_diff_eq!(*v, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn single_edge_spectrum() {
        let g = Graph::from_edges(2, [(0, 1)]).unwrap();
        let e = top_d_eigen(&g, 2).unwrap();
        assert_abs_diff_eq!(e.values[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(e.values[1], -1.0, epsilon = 1e-12);
        let a = Embedding::from_eigen(&e, Variant::Ase);
        assert_eq!(a.signs, vec![1.0, -1.0]);
        // rows have unit norm, X X' has unit diagonal
        let xx = &a.x * a.x.transpose();
        for i in 0..2 {
            assert_abs_diff_eq!(a.x.row(i).norm(), 1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(xx[(i, i)], 1.0, epsilon = 1e-12);
        }
        let s = Embedding::from_eigen(&e, Variant::SignedAse);
        assert_abs_diff_eq!(s.x.column(1).into_owned(), -a.x.column(1).into_owned(), epsilon = 0.0);
        assert_eq!(s.x.column(0), a.x.column(0));
    }

    #[test]
    fn one_self_loop() {
        let g = Graph::from_edges(1, [(0, 0)]).unwrap();
        let a = ase(&g, 1).unwrap();
        assert_abs_diff_eq!(a.x[(0, 0)].abs(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn zero_eigenvalue_rejected() {
        let g = Graph::from_edges(3, [(0, 1)]).unwrap();
        assert!(matches!(top_d_eigen(&g, 3), Err(Error::ZeroEigenvalue { .. })));
    }

    #[test]
    fn rank_two_probability_matrix_column_space() {
        let cfg = make_scenario(&ScenarioSpec::new(ScenarioKind::Sbm5, 300, 4)).unwrap();
        let p = edge_probability_matrix(&cfg);
        let e = top_d_eigen_op(&p, 2);
        // rank two: the third eigenvalue is zero, so no tie
        let e = e.unwrap();
        // oracle: projector from the full dense decomposition vs. from X0
        let q = cfg.x0.clone().qr().q();
        let proj_x0 = &q * q.transpose();
        let proj_e = &e.vectors * e.vectors.transpose();
        assert!((proj_x0 - proj_e).amax() < 1e-8);
        assert!(orthonormal_error(&e.vectors) < 1e-8);
    }

    #[test]
    fn lanczos_matches_dense() {
        let cfg = make_scenario(&ScenarioSpec::new(ScenarioKind::Curve3d, 700, 0)).unwrap();
        let g = sample_grdpg(&cfg, 3).unwrap();
        let (dv, dvec) = dense_top(&g, 3);
        let e = top_d_eigen(&g, 3).unwrap();
        let mut dense_sorted: Vec<f64> = dv[..3].to_vec();
        dense_sorted.sort_by(|a, b| b.total_cmp(a));
        for k in 0..3 {
            assert_abs_diff_eq!(e.values[k], dense_sorted[k], epsilon = 1e-8 * dense_sorted[k].abs().max(1.0));
        }
        let proj_l = &e.vectors * e.vectors.transpose();
        let dd = dvec.columns(0, 3).into_owned();
        let proj_d = &dd * dd.transpose();
        assert!((proj_l - proj_d).amax() < 1e-8);
        assert!(orthonormal_error(&e.vectors) < 1e-8);
        assert!(e.max_residual(&g) < 1e-6);
        assert_eq!(Embedding::from_eigen(&e, Variant::SignedAse).negative_count(), 1);
    }

    #[test]
    fn truncation_identity() {
        let cfg = make_scenario(&ScenarioSpec::new(ScenarioKind::Sbm5, 150, 2)).unwrap();
        let g = sample_grdpg(&cfg, 8).unwrap();
        let (a, s) = embeddings(&g, 2).unwrap();
        let p = plugin_probs(&a, &s).unwrap();
        // oracle: truncated spectral sum from the full dense decomposition
        let full = SymmetricEigen::new(g.to_matrix());
        let vals: Vec<f64> = full.eigenvalues.iter().copied().collect();
        let idx = by_abs_desc(&vals);
        let mut trunc = DMatrix::zeros(150, 150);
        for &k in &idx[..2] {
            let u = full.eigenvectors.column(k);
            trunc += vals[k] * &u * u.transpose();
        }
        assert!((&p - &trunc).norm() < 1e-8);
        assert!((&p - p.transpose()).amax() < 1e-12);
        // psd case: signed == ase
        assert_eq!(a.x, s.x);
    }

    #[test]
    fn sign_convention_largest_entry_positive() {
        let cfg = make_scenario(&ScenarioSpec::new(ScenarioKind::Curve2d, 80, 0)).unwrap();
        let g = sample_grdpg(&cfg, 1).unwrap();
        let e = top_d_eigen(&g, 2).unwrap();
        for k in 0..2 {
            let col = e.vectors.column(k);
            let imax = col.iamax();
            assert!(col[imax] > 0.0);
        }
    }
}
