//! Evaluation: aligned squared error, paired t-tests, Gaussian-mixture
//! clustering and the adjusted Rand index.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::cholesky;
use crate::math;
use crate::par::map_indices;
use crate::rng::{substream, tag};

/// Optimal orthogonal alignment of an estimate onto the truth.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentResult {
    /// Orthogonal `d x d`, possibly a reflection.
    pub w: DMatrix<f64>,
    pub sse: f64,
}

/// `min_{W in O(d)} |X_hat W - X0|_F^2`, solved by the SVD of `X_hat' X0`.
pub fn procrustes_sse(x_hat: &DMatrix<f64>, x0: &DMatrix<f64>) -> Result<AlignmentResult> {
    if x_hat.shape() != x0.shape() {
        return Err(Error::DimensionMismatch(format!("estimate is {:?}, truth is {:?}", x_hat.shape(), x0.shape())));
    }
    let m = x_hat.transpose() * x0;
    let svd = m.svd(true, true);
    let u = svd.u.as_ref().ok_or_else(|| Error::NonFinite("SVD failed".into()))?;
    let v_t = svd.v_t.as_ref().ok_or_else(|| Error::NonFinite("SVD failed".into()))?;
    let w = u * v_t;
    let nuclear: f64 = svd.singular_values.iter().sum();
    let sse = (x_hat.norm_squared() + x0.norm_squared() - 2.0 * nuclear).max(0.0);
    if !sse.is_finite() {
        return Err(Error::NonFinite("aligned squared error".into()));
    }
    Ok(AlignmentResult { w, sse })
}

/// Paired t-test summary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TTest {
    pub t_stat: f64,
    pub p_value: f64,
    pub df: f64,
    pub mean_diff: f64,
}

/// Two-sided paired t-test on `a - b`.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<TTest> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch(format!("samples of length {} and {}", a.len(), b.len())));
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::InvalidParameter("a paired t-test needs at least two pairs".into()));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = diffs.iter().sum::<f64>() / n as f64;
    let var = diffs.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    if !(var > 0.0) {
        return Err(Error::ZeroVariance);
    }
    let t_stat = mean / math::sqrt(var / n as f64);
    let df = (n - 1) as f64;
    let p_value = student_t_two_sided(t_stat, df);
    Ok(TTest { t_stat, p_value, df, mean_diff: mean })
}

/// `P(|T| >= |t|)` for Student's t with `df` degrees of freedom.
pub fn student_t_two_sided(t: f64, df: f64) -> f64 {
    if !t.is_finite() {
        return 0.0;
    }
    let x = df / (df + t * t);
    regularized_incomplete_beta(x, 0.5 * df, 0.5).clamp(0.0, 1.0)
}

/// `I_x(a, b)`, via the continued fraction on whichever side converges fast.
pub fn regularized_incomplete_beta(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = math::lgamma(a + b) - math::lgamma(a) - math::lgamma(b) + a * math::ln(x) + b * math::ln(1.0 - x);
    let front = math::exp(ln_front);
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(x, a, b) / a
    } else {
        1.0 - front * beta_cf(1.0 - x, b, a) / b
    }
}

// Modified Lentz evaluation of the incomplete-beta continued fraction.
fn beta_cf(x: f64, a: f64, b: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-16;
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=10_000 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// A fitted Gaussian mixture.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmModel {
    pub weights: Vec<f64>,
    pub means: Vec<DVector<f64>>,
    pub covariances: Vec<DMatrix<f64>>,
    pub log_likelihood: f64,
    /// Log-likelihood after each EM iteration of the winning restart.
    pub history: Vec<f64>,
}

impl GmmModel {
    pub fn k(&self) -> usize {
        self.weights.len()
    }
}

/// EM settings; the defaults are what [`gmm_fit`] uses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GmmOptions {
    pub restarts: usize,
    pub max_iters: usize,
    /// Stop when the log-likelihood gain falls below `tol (1 + |ll|)`.
    pub tol: f64,
    /// Covariance ridge as a fraction of `trace / d`.
    pub ridge: f64,
}

impl Default for GmmOptions {
    fn default() -> Self {
        Self { restarts: 20, max_iters: 500, tol: 1e-10, ridge: 1e-6 }
    }
}

/// Full-covariance EM from k-means++ starts; best of 20 restarts.
pub fn gmm_fit(x: &DMatrix<f64>, k: usize, seed: u64) -> Result<GmmModel> {
    gmm_fit_with(x, k, seed, &GmmOptions::default())
}

pub fn gmm_fit_with(x: &DMatrix<f64>, k: usize, seed: u64, opts: &GmmOptions) -> Result<GmmModel> {
    let (n, d) = x.shape();
    if k == 0 || d == 0 || n < k * (d + 1) {
        return Err(Error::InvalidParameter(format!("cannot fit {k} components in dimension {d} to {n} points")));
    }
    if opts.restarts == 0 {
        return Err(Error::InvalidParameter("at least one restart is required".into()));
    }
    if !x.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("data to cluster".into()));
    }
    let points: Vec<DVector<f64>> = (0..n).map(|i| x.row(i).transpose()).collect();
    let fits = map_indices(opts.restarts, |r| em_run(&points, k, seed, r, opts));
    let mut best: Option<GmmModel> = None;
    let mut last_err = None;
    for fit in fits {
        match fit {
            Ok(m) => {
                if best.as_ref().is_none_or(|b| m.log_likelihood > b.log_likelihood) {
                    best = Some(m);
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    best.ok_or_else(|| last_err.unwrap_or(Error::NonFinite("mixture log-likelihood".into())))
}

fn kmeans_pp(points: &[DVector<f64>], k: usize, rng: &mut impl Rng) -> Vec<DVector<f64>> {
    let n = points.len();
    let mut centers = vec![points[rng.random_range(0..n)].clone()];
    let mut dist: Vec<f64> = points.iter().map(|p| (p - &centers[0]).norm_squared()).collect();
    while centers.len() < k {
        let total: f64 = dist.iter().sum();
        let next = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, w) in dist.iter().enumerate() {
                if u < *w {
                    pick = i;
                    break;
                }
                u -= w;
            }
            pick
        } else {
            rng.random_range(0..n)
        };
        let c = points[next].clone();
        for (dv, p) in dist.iter_mut().zip(points) {
            *dv = dv.min((p - &c).norm_squared());
        }
        centers.push(c);
    }
    centers
}

struct Component {
    log_weight: f64,
    mean: DVector<f64>,
    // inverse of the Cholesky factor, and -0.5 log det(2 pi Sigma)
    l_inv: DMatrix<f64>,
    log_norm: f64,
}

impl Component {
    fn new(weight: f64, mean: DVector<f64>, cov: &DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        let chol = cholesky(cov, "mixture covariance")?;
        let l = chol.l();
        let log_det: f64 = l.diagonal().iter().map(|v| 2.0 * math::ln(*v)).sum();
        let l_inv = l
            .solve_lower_triangular(&DMatrix::identity(d, d))
            .ok_or_else(|| Error::NotPositiveDefinite("mixture covariance".into()))?;
        let log_norm = -0.5 * (d as f64 * math::ln(2.0 * core::f64::consts::PI) + log_det);
        Ok(Self { log_weight: math::ln(weight), mean, l_inv, log_norm })
    }

    fn log_joint(&self, x: &DVector<f64>) -> f64 {
        let r = &self.l_inv * (x - &self.mean);
        self.log_weight + self.log_norm - 0.5 * r.norm_squared()
    }
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + math::ln(v.iter().map(|x| math::exp(x - m)).sum::<f64>())
}

fn m_step(points: &[DVector<f64>], resp: &[Vec<f64>], k: usize, ridge: f64) -> Result<Vec<Component>> {
    let n = points.len();
    let d = points[0].len();
    let mut comps = Vec::with_capacity(k);
    for c in 0..k {
        let nk: f64 = resp.iter().map(|r| r[c]).sum();
        if !(nk > 1e-12) {
            return Err(Error::NonFinite(format!("mixture component {c} is empty")));
        }
        let mut mean = DVector::zeros(d);
        for (p, r) in points.iter().zip(resp) {
            mean.axpy(r[c], p, 1.0);
        }
        mean /= nk;
        let mut cov = DMatrix::zeros(d, d);
        for (p, r) in points.iter().zip(resp) {
            let diff = p - &mean;
            cov.ger(r[c], &diff, &diff, 1.0);
        }
        cov /= nk;
        let trace = cov.trace();
        let bump = if trace > 0.0 { ridge * trace / d as f64 } else { ridge };
        for i in 0..d {
            cov[(i, i)] += bump;
        }
        comps.push(Component::new(nk / n as f64, mean, &cov)?);
    }
    Ok(comps)
}

// E-step; returns the log-likelihood and overwrites `resp`.
fn e_step(points: &[DVector<f64>], comps: &[Component], resp: &mut [Vec<f64>]) -> f64 {
    let mut ll = 0.0;
    let mut buf = vec![0.0; comps.len()];
    for (p, r) in points.iter().zip(resp.iter_mut()) {
        for (b, c) in buf.iter_mut().zip(comps) {
            *b = c.log_joint(p);
        }
        let lse = log_sum_exp(&buf);
        ll += lse;
        for (ri, b) in r.iter_mut().zip(&buf) {
            *ri = math::exp(b - lse);
        }
    }
    ll
}

fn em_run(points: &[DVector<f64>], k: usize, seed: u64, restart: usize, opts: &GmmOptions) -> Result<GmmModel> {
    let mut rng = substream(seed, &[tag::GMM, restart as u64]);
    let centers = kmeans_pp(points, k, &mut rng);
    // hard assignment to the nearest center seeds the first M-step
    let mut resp: Vec<Vec<f64>> = points
        .iter()
        .map(|p| {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (c, center) in centers.iter().enumerate() {
                let dist = (p - center).norm_squared();
                if dist < best_d {
                    best_d = dist;
                    best = c;
                }
            }
            let mut r = vec![0.0; k];
            r[best] = 1.0;
            r
        })
        .collect();
    let mut history = Vec::new();
    let mut comps = m_step(points, &resp, k, opts.ridge)?;
    let mut ll = e_step(points, &comps, &mut resp);
    history.push(ll);
    for _ in 0..opts.max_iters {
        comps = m_step(points, &resp, k, opts.ridge)?;
        let next = e_step(points, &comps, &mut resp);
        if !next.is_finite() {
            return Err(Error::NonFinite("mixture log-likelihood".into()));
        }
        history.push(next);
        let gain = next - ll;
        ll = next;
        if gain.abs() < opts.tol * (1.0 + ll.abs()) {
            break;
        }
    }
    let weights: Vec<f64> = comps.iter().map(|c| math::exp(c.log_weight)).collect();
    let means = comps.iter().map(|c| c.mean.clone()).collect();
    let covariances = comps
        .iter()
        .map(|c| {
            let l_inv = &c.l_inv;
            let prec = l_inv.transpose() * l_inv;
            crate::linalg::spd_inverse(&prec, "mixture precision")
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GmmModel { weights, means, covariances, log_likelihood: ll, history })
}

/// Hard assignment: the component with the largest posterior responsibility.
pub fn gmm_assign(model: &GmmModel, x: &DMatrix<f64>) -> Result<Vec<usize>> {
    let comps = model
        .weights
        .iter()
        .zip(&model.means)
        .zip(&model.covariances)
        .map(|((w, m), c)| Component::new(*w, m.clone(), c))
        .collect::<Result<Vec<_>>>()?;
    let d = model.means.first().map_or(0, |m| m.len());
    if x.ncols() != d {
        return Err(Error::DimensionMismatch(format!("model has dimension {d}, data {}", x.ncols())));
    }
    Ok((0..x.nrows())
        .map(|i| {
            let p = x.row(i).transpose();
            let mut best = 0;
            let mut best_v = f64::NEG_INFINITY;
            for (c, comp) in comps.iter().enumerate() {
                let v = comp.log_joint(&p);
                if v > best_v {
                    best_v = v;
                    best = c;
                }
            }
            best
        })
        .collect())
}

fn choose2(m: usize) -> f64 {
    let m = m as f64;
    m * (m - 1.0) / 2.0
}

/// Adjusted Rand index between two labelings of the same items.
pub fn adjusted_rand_index<A: Ord + Clone, B: Ord + Clone>(a: &[A], b: &[B]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch(format!("labelings of length {} and {}", a.len(), b.len())));
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::InvalidParameter("ARI needs at least two items".into()));
    }
    let mut cells: BTreeMap<(A, B), usize> = BTreeMap::new();
    let mut rows: BTreeMap<A, usize> = BTreeMap::new();
    let mut cols: BTreeMap<B, usize> = BTreeMap::new();
    for (x, y) in a.iter().zip(b) {
        *cells.entry((x.clone(), y.clone())).or_default() += 1;
        *rows.entry(x.clone()).or_default() += 1;
        *cols.entry(y.clone()).or_default() += 1;
    }
    let index: f64 = cells.values().map(|&c| choose2(c)).sum();
    let sum_a: f64 = rows.values().map(|&c| choose2(c)).sum();
    let sum_b: f64 = cols.values().map(|&c| choose2(c)).sum();
    let expected = sum_a * sum_b / choose2(n);
    let max = 0.5 * (sum_a + sum_b);
    if max == expected {
        // both partitions trivial in the same way; define as perfect agreement
        return Ok(1.0);
    }
    Ok((index - expected) / (max - expected))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn rotation(theta: f64) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[theta.cos(), -theta.sin(), theta.sin(), theta.cos()])
    }

    #[test]
    fn identical_inputs_have_zero_error() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 0.5, -1.0, 3.0, 0.2]);
        let r = procrustes_sse(&x, &x).unwrap();
        assert!(r.sse < 1e-12);
        assert!((r.w - DMatrix::<f64>::identity(2, 2)).amax() < 1e-12);
    }

    #[test]
    fn rotated_copy_aligns_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x0 = DMatrix::from_fn(50, 3, |_, _| rng.sample::<f64, _>(StandardNormal));
        let q = DMatrix::from_fn(3, 3, |_, _| rng.sample::<f64, _>(StandardNormal)).qr().q();
        let r = procrustes_sse(&(&x0 * &q), &x0).unwrap();
        assert!(r.sse <= 1e-16 * x0.norm_squared() * 100.0, "{}", r.sse);
    }

    #[test]
    fn matches_grid_over_o2() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..5 {
            let x0 = DMatrix::from_fn(20, 2, |_, _| rng.sample::<f64, _>(StandardNormal));
            let noise = DMatrix::from_fn(20, 2, |_, _| 0.3 * rng.sample::<f64, _>(StandardNormal));
            let x_hat = (&x0 + noise) * rotation(1.1);
            let r = procrustes_sse(&x_hat, &x0).unwrap();
            let reflect = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
            let mut best = f64::INFINITY;
            for a in 0..3600 {
                let w = rotation(a as f64 * core::f64::consts::PI / 1800.0);
                for m in [w.clone(), &w * &reflect] {
                    best = best.min((&x_hat * m - &x0).norm_squared());
                }
            }
            // a 0.1 degree grid is within O(h^2) of the optimum
            assert!(r.sse <= best + 1e-12);
            assert!(best - r.sse < 1e-3 * best);
            assert_abs_diff_eq!((&x_hat * &r.w - &x0).norm_squared(), r.sse, epsilon = 1e-8 * r.sse);
            assert!((r.w.transpose() * &r.w - DMatrix::<f64>::identity(2, 2)).norm() < 1e-10);
        }
    }

    #[test]
    fn shape_mismatch_rejected() {
        assert!(procrustes_sse(&DMatrix::zeros(3, 2), &DMatrix::zeros(2, 2)).is_err());
    }

    #[test]
    fn t_test_equal_samples_is_zero_variance() {
        let a = [1.0, 2.0, 3.0];
        assert_eq!(paired_t_test(&a, &a), Err(Error::ZeroVariance));
    }

    #[test]
    fn t_distribution_known_values() {
        // df = 1 is Cauchy: P(|T| > t) = 1 - 2 atan(t) / pi
        for t in [0.5f64, 1.0, 3.0, 20.0] {
            let exact = 1.0 - 2.0 * f64::atan(t) / core::f64::consts::PI;
            assert_abs_diff_eq!(student_t_two_sided(t, 1.0), exact, epsilon = 1e-13);
        }
        // df = 2: P(|T| > t) = 1 - t / sqrt(2 + t^2)
        for t in [0.1f64, 1.0, 4.0, 50.0] {
            let exact = 1.0 - t / (2.0 + t * t).sqrt();
            assert_abs_diff_eq!(student_t_two_sided(t, 2.0), exact, epsilon = 1e-13);
        }
        assert_abs_diff_eq!(student_t_two_sided(0.0, 7.0), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn shifted_samples_are_highly_significant() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let b: Vec<f64> = (0..100).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let a: Vec<f64> = b.iter().map(|v| v + 10.0 + rng.sample::<f64, _>(StandardNormal)).collect();
        let t = paired_t_test(&a, &b).unwrap();
        assert!(t.p_value < 1e-6);
        let swapped = paired_t_test(&b, &a).unwrap();
        assert_eq!(swapped.t_stat, -t.t_stat);
        assert_eq!(swapped.p_value, t.p_value);
    }

    #[test]
    fn ari_small_cases() {
        assert_abs_diff_eq!(adjusted_rand_index(&[0, 0, 1, 1], &[0, 1, 0, 1]).unwrap(), -0.5, epsilon = 1e-15);
        let single = [0; 6];
        let singletons = [0, 1, 2, 3, 4, 5];
        assert_abs_diff_eq!(adjusted_rand_index(&single, &singletons).unwrap(), 0.0, epsilon = 1e-15);
        assert_eq!(adjusted_rand_index(&[1, 1, 2, 3], &[7, 7, 5, 9]).unwrap(), 1.0);
        assert!(adjusted_rand_index(&[0, 1], &[0]).is_err());
    }

    #[test]
    fn gmm_single_component_is_sample_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = DMatrix::from_fn(200, 2, |_, c| rng.sample::<f64, _>(StandardNormal) * (1.0 + c as f64));
        let m = gmm_fit(&x, 1, 0).unwrap();
        let mean = x.row_mean().transpose();
        assert!((&m.means[0] - &mean).amax() < 1e-12);
        let centered = DMatrix::from_fn(200, 2, |i, j| x[(i, j)] - mean[j]);
        let mut cov = centered.transpose() * &centered / 200.0;
        let bump = 1e-6 * cov.trace() / 2.0;
        cov[(0, 0)] += bump;
        cov[(1, 1)] += bump;
        assert!((&m.covariances[0] - cov).amax() < 1e-10);
        assert_abs_diff_eq!(m.weights[0], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn gmm_separates_two_blobs() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let centers = [[0.0, 0.0], [10.0, 5.0]];
        let truth: Vec<usize> = (0..150).map(|i| i % 2).collect();
        let x = DMatrix::from_fn(150, 2, |i, j| centers[truth[i]][j] + rng.sample::<f64, _>(StandardNormal));
        let model = gmm_fit(&x, 2, 11).unwrap();
        let labels = gmm_assign(&model, &x).unwrap();
        // oracle: nearest true center
        let oracle: Vec<usize> = (0..150)
            .map(|i| {
                let d0 = (x[(i, 0)] - 0.0).powi(2) + (x[(i, 1)] - 0.0).powi(2);
                let d1 = (x[(i, 0)] - 10.0).powi(2) + (x[(i, 1)] - 5.0).powi(2);
                usize::from(d1 < d0)
            })
            .collect();
        assert_eq!(adjusted_rand_index(&labels, &oracle).unwrap(), 1.0);
        assert_abs_diff_eq!(model.weights.iter().sum::<f64>(), 1.0, epsilon = 1e-10);
        for w in model.history.windows(2) {
            assert!(w[1] >= w[0] - 1e-9 * w[0].abs());
        }
        assert_eq!(gmm_assign(&model, &x).unwrap(), labels);
    }

    #[test]
    fn gmm_rejects_too_few_points() {
        assert!(gmm_fit(&DMatrix::zeros(5, 2), 2, 0).is_err());
    }

    fn brute_force_ari(a: &[usize], b: &[usize]) -> f64 {
        let n = a.len();
        let (mut both, mut in_a, mut in_b) = (0.0, 0.0, 0.0);
        for i in 0..n {
            for j in i + 1..n {
                let sa = a[i] == a[j];
                let sb = b[i] == b[j];
                both += (sa && sb) as u8 as f64;
                in_a += sa as u8 as f64;
                in_b += sb as u8 as f64;
            }
        }
        let pairs = (n * (n - 1) / 2) as f64;
        let expected = in_a * in_b / pairs;
        let max = 0.5 * (in_a + in_b);
        if max == expected {
            1.0
        } else {
            (both - expected) / (max - expected)
        }
    }

    proptest::proptest! {
        #[test]
        fn ari_matches_pair_counting(a in proptest::collection::vec(0usize..4, 2..12), seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let b: Vec<usize> = a.iter().map(|_| rng.random_range(0..3)).collect();
            let ari = adjusted_rand_index(&a, &b).unwrap();
            proptest::prop_assert!((ari - brute_force_ari(&a, &b)).abs() < 1e-12);
            proptest::prop_assert!((ari - adjusted_rand_index(&b, &a).unwrap()).abs() < 1e-12);
            let relabeled: Vec<usize> = a.iter().map(|v| 10 - v).collect();
            proptest::prop_assert!((ari - adjusted_rand_index(&relabeled, &b).unwrap()).abs() < 1e-12);
        }

        #[test]
        fn procrustes_never_exceeds_unaligned_error(seed in 0u64..500, theta in 0.0f64..6.3) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x0 = DMatrix::from_fn(15, 2, |_, _| rng.sample::<f64, _>(StandardNormal));
            let x_hat = DMatrix::from_fn(15, 2, |_, _| rng.sample::<f64, _>(StandardNormal));
            let r = procrustes_sse(&x_hat, &x0).unwrap();
            proptest::prop_assert!(r.sse <= (&x_hat - &x0).norm_squared() + 1e-10);
            let rotated = procrustes_sse(&(&x_hat * rotation(theta)), &x0).unwrap();
            proptest::prop_assert!((rotated.sse - r.sse).abs() < 1e-8 * (1.0 + r.sse));
        }
    }
}
