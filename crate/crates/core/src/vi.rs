//! Gaussian variational inference over the ESL posterior, one vertex at a
//! time, optimized by Adam-style stochastic gradient descent.
//!
//! The variational family is `N(mu, (1/n) L L')` with `L` lower triangular.
//! Expectations are replaced by reparameterized draws `x = mu + L z / sqrt(n)`.
//! The diagonal of the `L` gradient uses the bounded surrogate `h_tilde` in
//! place of `1 / L_kk`, so a diagonal entry that drifts through zero does not
//! blow up the step.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::esl::{default_tau, EslContext, Surrogate};
use crate::graph_model::Graph;
use crate::linalg::{self, cholesky};
use crate::math;
use crate::one_step::Plugin;
use crate::par::map_indices;
use crate::rng::{substream, tag};
use crate::spectral::{embeddings, Embedding};

/// Gaussian prior `N(mean, cov)` with cached precision and normalizer.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPrior {
    mean: DVector<f64>,
    precision: DMatrix<f64>,
    log_norm: f64,
}

impl GaussianPrior {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if cov.shape() != (d, d) {
            return Err(Error::DimensionMismatch(format!("prior covariance is {:?}, mean has {d}", cov.shape())));
        }
        if (&cov - cov.transpose()).amax() > 1e-12 * (1.0 + cov.amax()) {
            return Err(Error::InvalidParameter("prior covariance is not symmetric".into()));
        }
        let chol = cholesky(&cov, "prior covariance")?;
        let log_det: f64 = chol.l().diagonal().iter().map(|v| 2.0 * math::ln(*v)).sum();
        let precision = linalg::symmetrize(&chol.inverse());
        let log_norm = -0.5 * (d as f64 * math::ln(2.0 * core::f64::consts::PI) + log_det);
        Ok(Self { mean, precision, log_norm })
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub enum PriorSpec {
    /// Flat prior over all of `R^d`; contributes nothing.
    #[default]
    ImproperUniform,
    Gaussian(GaussianPrior),
}

impl PriorSpec {
    pub fn log_density(&self, x: &[f64]) -> f64 {
        match self {
            PriorSpec::ImproperUniform => 0.0,
            PriorSpec::Gaussian(g) => {
                let r = DVector::from_column_slice(x) - &g.mean;
                g.log_norm - 0.5 * r.dot(&(&g.precision * &r))
            }
        }
    }

    /// Adds `grad log pi(x)` to `out`.
    pub fn add_grad(&self, x: &[f64], out: &mut [f64]) {
        if let PriorSpec::Gaussian(g) = self {
            let r = DVector::from_column_slice(x) - &g.mean;
            let pr = &g.precision * r;
            for (o, v) in out.iter_mut().zip(pr.iter()) {
                *o -= v;
            }
        }
    }

    fn check_dim(&self, d: usize) -> Result<()> {
        match self {
            PriorSpec::Gaussian(g) if g.mean.len() != d => {
                Err(Error::DimensionMismatch(format!("prior has dimension {}, model {d}", g.mean.len())))
            }
            _ => Ok(()),
        }
    }
}

/// Variational state of one vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct VertexPosterior {
    pub mu: DVector<f64>,
    /// Lower triangular, positive diagonal.
    pub l: DMatrix<f64>,
    /// `(L L')^{-1}`.
    pub g_hat: DMatrix<f64>,
}

impl VertexPosterior {
    pub fn new(mu: DVector<f64>, l: DMatrix<f64>) -> Result<Self> {
        let d = mu.len();
        if l.shape() != (d, d) {
            return Err(Error::DimensionMismatch(format!("L is {:?}, mu has {d}", l.shape())));
        }
        check_factor(&l)?;
        let g_hat = precision_of(&l)?;
        Ok(Self { mu, l, g_hat })
    }

    pub fn d(&self) -> usize {
        self.mu.len()
    }

    /// Posterior covariance `(1/n) L L'`.
    pub fn covariance(&self, n: usize) -> DMatrix<f64> {
        &self.l * self.l.transpose() / n as f64
    }
}

fn check_factor(l: &DMatrix<f64>) -> Result<()> {
    let d = l.nrows();
    for r in 0..d {
        if !(l[(r, r)] > 0.0) || !l[(r, r)].is_finite() {
            return Err(Error::InvalidParameter(format!("L[{r},{r}] = {} is not positive", l[(r, r)])));
        }
        for c in r + 1..d {
            if l[(r, c)] != 0.0 {
                return Err(Error::InvalidParameter(format!("L[{r},{c}] above the diagonal is nonzero")));
            }
        }
    }
    Ok(())
}

fn precision_of(l: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    // (L L')^{-1} = L^{-T} L^{-1}
    let d = l.nrows();
    let linv = l
        .solve_lower_triangular(&DMatrix::identity(d, d))
        .ok_or_else(|| Error::NotPositiveDefinite("L L'".into()))?;
    Ok(linalg::symmetrize(&(linv.transpose() * linv)))
}

/// `x = mu + L z / sqrt(n)`.
fn draw_point(mu: &[f64], l: &DMatrix<f64>, z: &[f64], inv_sqrt_n: f64, out: &mut [f64]) {
    let d = mu.len();
    for r in 0..d {
        let mut s = 0.0;
        for c in 0..=r {
            s += l[(r, c)] * z[c];
        }
        out[r] = mu[r] + inv_sqrt_n * s;
    }
}

/// Monte Carlo estimate of the variational objective
/// `-log det L - mean_k [l(mu + L z_k / sqrt n) + log pi(...)]`.
pub fn vi_objective_mc(
    ctx: &EslContext<'_>,
    prior: &PriorSpec,
    mu: &[f64],
    l: &DMatrix<f64>,
    z_samples: &[Vec<f64>],
) -> Result<f64> {
    let d = ctx.d();
    check_shapes(d, mu, l)?;
    prior.check_dim(d)?;
    if z_samples.is_empty() {
        return Err(Error::InvalidParameter("no Monte Carlo samples".into()));
    }
    let mut log_det = 0.0;
    for k in 0..d {
        if !(l[(k, k)] > 0.0) {
            return Err(Error::InvalidParameter(format!("L[{k},{k}] = {} is not positive", l[(k, k)])));
        }
        log_det += math::ln(l[(k, k)]);
    }
    let inv_sqrt_n = 1.0 / math::sqrt(ctx.n() as f64);
    let mut x = vec![0.0; d];
    let mut acc = 0.0;
    for z in z_samples {
        if z.len() != d {
            return Err(Error::DimensionMismatch(format!("z has length {}, expected {d}", z.len())));
        }
        draw_point(mu, l, z, inv_sqrt_n, &mut x);
        acc += ctx.value(&x) + prior.log_density(&x);
    }
    Ok(-log_det - acc / z_samples.len() as f64)
}

fn check_shapes(d: usize, mu: &[f64], l: &DMatrix<f64>) -> Result<()> {
    if mu.len() != d || l.shape() != (d, d) {
        return Err(Error::DimensionMismatch(format!(
            "mu has length {} and L is {:?}, expected dimension {d}",
            mu.len(),
            l.shape()
        )));
    }
    Ok(())
}

/// Reusable buffers for the per-sample gradient.
struct Scratch {
    x: Vec<f64>,
    g: Vec<f64>,
}

impl Scratch {
    fn new(d: usize) -> Self {
        Self { x: vec![0.0; d], g: vec![0.0; d] }
    }
}

/// Fills `scratch.g` with `grad l(x) + grad log pi(x)` at the reparameterized
/// point for `z`.
fn log_target_grad(
    ctx: &EslContext<'_>,
    prior: &PriorSpec,
    mu: &[f64],
    l: &DMatrix<f64>,
    z: &[f64],
    inv_sqrt_n: f64,
    scratch: &mut Scratch,
) {
    draw_point(mu, l, z, inv_sqrt_n, &mut scratch.x);
    ctx.grad_into(&scratch.x, &mut scratch.g);
    prior.add_grad(&scratch.x, &mut scratch.g);
}

/// Exact single-draw gradients of the noisy objective:
/// `g_mu = -(grad l + grad log pi)` and
/// `g_L = -diag(L)^{-1} - tril((grad l + grad log pi) z') / sqrt(n)`.
pub fn noisy_grads(
    ctx: &EslContext<'_>,
    prior: &PriorSpec,
    mu: &[f64],
    l: &DMatrix<f64>,
    z: &[f64],
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let d = ctx.d();
    check_shapes(d, mu, l)?;
    prior.check_dim(d)?;
    let inv_sqrt_n = 1.0 / math::sqrt(ctx.n() as f64);
    let mut scratch = Scratch::new(d);
    log_target_grad(ctx, prior, mu, l, z, inv_sqrt_n, &mut scratch);
    let g_mu = DVector::from_iterator(d, scratch.g.iter().map(|v| -v));
    let mut g_l = DMatrix::zeros(d, d);
    for r in 0..d {
        for c in 0..=r {
            g_l[(r, c)] = -inv_sqrt_n * scratch.g[r] * z[c];
        }
        g_l[(r, r)] -= 1.0 / l[(r, r)];
    }
    Ok((g_mu, g_l))
}

/// `c / (c x + 1)` for `x > 0`, and the tangent-matched `-c^2 x + c` otherwise.
#[inline]
pub fn h_tilde(x: f64, c_n: f64) -> f64 {
    if x > 0.0 {
        c_n / (c_n * x + 1.0)
    } else {
        -c_n * c_n * x + c_n
    }
}

/// [`noisy_grads`]' `L` gradient with `1 / L_kk` replaced by `h_tilde(L_kk)`.
pub fn scaled_grad_l(
    ctx: &EslContext<'_>,
    prior: &PriorSpec,
    mu: &[f64],
    l: &DMatrix<f64>,
    z: &[f64],
    c_n: f64,
) -> Result<DMatrix<f64>> {
    let d = ctx.d();
    check_shapes(d, mu, l)?;
    prior.check_dim(d)?;
    let inv_sqrt_n = 1.0 / math::sqrt(ctx.n() as f64);
    let mut scratch = Scratch::new(d);
    log_target_grad(ctx, prior, mu, l, z, inv_sqrt_n, &mut scratch);
    let mut g_l = DMatrix::zeros(d, d);
    for r in 0..d {
        for c in 0..=r {
            g_l[(r, c)] = -inv_sqrt_n * scratch.g[r] * z[c];
        }
        g_l[(r, r)] -= h_tilde(l[(r, r)], c_n);
    }
    Ok(g_l)
}

/// Optimizer settings. Defaults: batch 2, step 0.01, decay rates 0.01 and
/// 0.95, epsilon 1e-8, 1000 iterations.
#[derive(Debug, Clone, PartialEq)]
pub struct SanviOptions {
    /// Draws per iteration (`s`).
    pub batch: usize,
    pub alpha0: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps0: f64,
    pub max_iters: usize,
    /// ESL truncation; `None` means [`default_tau`].
    pub tau: Option<f64>,
    /// Scale in `h_tilde`; `None` means `n`.
    pub c_n: Option<f64>,
    /// Stop when `|mu_t - mu_{t-k}| < tol (1 + |mu_t|)` with `k = check_every`.
    pub tol: f64,
    pub check_every: usize,
    pub seed: u64,
}

impl Default for SanviOptions {
    fn default() -> Self {
        Self {
            batch: 2,
            alpha0: 0.01,
            beta1: 0.01,
            beta2: 0.95,
            eps0: 1e-8,
            max_iters: 1000,
            tau: None,
            c_n: None,
            tol: 1e-6,
            check_every: 10,
            seed: 0,
        }
    }
}

impl SanviOptions {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidParameter(what.into()));
        if self.batch == 0 {
            return bad("batch size must be positive");
        }
        if !(self.alpha0 > 0.0 && self.alpha0.is_finite()) {
            return bad("alpha0 must be positive");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("beta1 and beta2 must lie in [0, 1)");
        }
        if !(self.eps0 > 0.0) {
            return bad("eps0 must be positive");
        }
        if self.check_every == 0 {
            return bad("check_every must be positive");
        }
        if let Some(c) = self.c_n {
            if !(c > 0.0) {
                return bad("c_n must be positive");
            }
        }
        if let Some(t) = self.tau {
            if !(t > 0.0 && t < 0.5) {
                return bad("tau must lie in (0, 1/2)");
            }
        }
        Ok(())
    }

    pub fn tau_for(&self, n: usize) -> f64 {
        self.tau.unwrap_or_else(|| default_tau(n))
    }
}

/// First and second moment estimates for `mu` and `L`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m1_mu: DVector<f64>,
    pub m2_mu: DVector<f64>,
    pub m1_l: DMatrix<f64>,
    pub m2_l: DMatrix<f64>,
    pub t: usize,
    pub alpha0: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps0: f64,
}

impl AdamState {
    pub fn new(d: usize, alpha0: f64, beta1: f64, beta2: f64, eps0: f64) -> Self {
        Self {
            m1_mu: DVector::zeros(d),
            m2_mu: DVector::zeros(d),
            m1_l: DMatrix::zeros(d, d),
            m2_l: DMatrix::zeros(d, d),
            t: 0,
            alpha0,
            beta1,
            beta2,
            eps0,
        }
    }

    /// Folds in one iteration's scaled gradient inputs and returns the
    /// bias-corrected decrements `(delta_mu, delta_L)` to subtract.
    ///
    /// The first-moment inputs are `(1/(s sqrt n)) sum_k g_k`; the
    /// second-moment inputs are `(1/(s sqrt n)) sum_k g_k^2`, squared per draw
    /// and carrying the same single `1/(s sqrt n)` factor.
    pub fn step(
        &mut self,
        g_mu: &DVector<f64>,
        g2_mu: &DVector<f64>,
        g_l: &DMatrix<f64>,
        g2_l: &DMatrix<f64>,
    ) -> (DVector<f64>, DMatrix<f64>) {
        self.t += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - math::powi(b1, self.t as i32);
        let c2 = 1.0 - math::powi(b2, self.t as i32);
        let (alpha, eps) = (self.alpha0, self.eps0);
        let update = |m1: &mut f64, m2: &mut f64, g: f64, g2: f64| -> f64 {
            *m1 = b1 * *m1 + (1.0 - b1) * g;
            *m2 = b2 * *m2 + (1.0 - b2) * g2;
            alpha * (*m1 / c1) / (math::sqrt(*m2 / c2) + eps)
        };
        let d = g_mu.len();
        let mut dmu = DVector::zeros(d);
        for k in 0..d {
            dmu[k] = update(&mut self.m1_mu[k], &mut self.m2_mu[k], g_mu[k], g2_mu[k]);
        }
        let mut dl = DMatrix::zeros(d, d);
        for r in 0..d {
            for c in 0..=r {
                dl[(r, c)] = update(&mut self.m1_l[(r, c)], &mut self.m2_l[(r, c)], g_l[(r, c)], g2_l[(r, c)]);
            }
        }
        (dmu, dl)
    }
}

/// Source of standard normal draws, so tests can inject fixed noise.
pub trait NoiseSource {
    /// Fills `z` with draws for `(iteration, sample)`.
    fn fill(&mut self, iteration: usize, sample: usize, z: &mut [f64]);
}

/// Standard normals from a substream keyed by (seed, vertex, iteration).
#[derive(Debug, Clone)]
pub struct SeededNoise {
    seed: u64,
    vertex: u64,
    iteration: usize,
    rng: rand_chacha::ChaCha8Rng,
}

impl SeededNoise {
    pub fn new(seed: u64, vertex: usize) -> Self {
        Self { seed, vertex: vertex as u64, iteration: 0, rng: substream(seed, &[tag::VI, vertex as u64, 0]) }
    }
}

impl NoiseSource for SeededNoise {
    fn fill(&mut self, iteration: usize, _sample: usize, z: &mut [f64]) {
        if iteration != self.iteration {
            self.iteration = iteration;
            self.rng = substream(self.seed, &[tag::VI, self.vertex, iteration as u64]);
        }
        for v in z.iter_mut() {
            *v = self.rng.sample(StandardNormal);
        }
    }
}

/// Always zero; turns the stochastic loop into a deterministic one.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroNoise;

impl NoiseSource for ZeroNoise {
    fn fill(&mut self, _iteration: usize, _sample: usize, z: &mut [f64]) {
        z.iter_mut().for_each(|v| *v = 0.0);
    }
}

/// Result of running the optimizer on one vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct VertexFit {
    pub posterior: VertexPosterior,
    pub iterations: usize,
    pub converged: bool,
    /// Whether the final `L` needed its diagonal repaired.
    pub repaired: bool,
}

/// Runs the optimizer from `init` with the seeded noise of `vertex`.
pub fn sanvi_vertex(
    ctx: &EslContext<'_>,
    prior: &PriorSpec,
    init: &VertexPosterior,
    opts: &SanviOptions,
) -> Result<VertexPosterior> {
    let mut noise = SeededNoise::new(opts.seed, ctx.vertex());
    sanvi_vertex_with(ctx, prior, init, opts, &mut noise).map(|f| f.posterior)
}

/// The optimizer loop with an explicit noise source.
pub fn sanvi_vertex_with<N: NoiseSource + ?Sized>(
    ctx: &EslContext<'_>,
    prior: &PriorSpec,
    init: &VertexPosterior,
    opts: &SanviOptions,
    noise: &mut N,
) -> Result<VertexFit> {
    opts.validate()?;
    let d = ctx.d();
    let n = ctx.n();
    check_shapes(d, init.mu.as_slice(), &init.l)?;
    prior.check_dim(d)?;
    let inv_sqrt_n = 1.0 / math::sqrt(n as f64);
    let c_n = opts.c_n.unwrap_or(n as f64);
    let scale = 1.0 / (opts.batch as f64 * math::sqrt(n as f64));

    let mut mu = init.mu.clone();
    let mut l = init.l.clone();
    let mut adam = AdamState::new(d, opts.alpha0, opts.beta1, opts.beta2, opts.eps0);
    let mut scratch = Scratch::new(d);
    let mut z = vec![0.0; d];
    let mut g_mu = DVector::zeros(d);
    let mut g2_mu = DVector::zeros(d);
    let mut g_l = DMatrix::zeros(d, d);
    let mut g2_l = DMatrix::zeros(d, d);
    let mut anchor = mu.clone();
    let mut iterations = 0;
    let mut converged = false;

    for t in 1..=opts.max_iters {
        g_mu.fill(0.0);
        g2_mu.fill(0.0);
        g_l.fill(0.0);
        g2_l.fill(0.0);
        for k in 0..opts.batch {
            noise.fill(t, k, &mut z);
            log_target_grad(ctx, prior, mu.as_slice(), &l, &z, inv_sqrt_n, &mut scratch);
            for r in 0..d {
                let gr = -scratch.g[r];
                g_mu[r] += gr;
                g2_mu[r] += gr * gr;
                for c in 0..=r {
                    let mut v = inv_sqrt_n * gr * z[c];
                    if c == r {
                        v -= h_tilde(l[(r, r)], c_n);
                    }
                    g_l[(r, c)] += v;
                    g2_l[(r, c)] += v * v;
                }
            }
        }
        g_mu *= scale;
        g2_mu *= scale;
        g_l *= scale;
        g2_l *= scale;
        let (dmu, dl) = adam.step(&g_mu, &g2_mu, &g_l, &g2_l);
        mu -= dmu;
        l -= dl;
        iterations = t;
        if !mu.iter().all(|v| v.is_finite()) || !l.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite(format!("variational state at iteration {t}")));
        }
        if t % opts.check_every == 0 {
            let moved = (&mu - &anchor).norm();
            if moved < opts.tol * (1.0 + mu.norm()) {
                converged = true;
                break;
            }
            anchor.copy_from(&mu);
        }
    }

    let (l, repaired) = repair_factor(l)?;
    let g_hat = precision_of(&l)?;
    Ok(VertexFit { posterior: VertexPosterior { mu, l, g_hat }, iterations, converged, repaired })
}

/// Restores a positive diagonal: if any `L_kk <= 0`, take `|L_kk|` and
/// re-factor `L L' + 1e-8 I`.
fn repair_factor(l: DMatrix<f64>) -> Result<(DMatrix<f64>, bool)> {
    let d = l.nrows();
    if (0..d).all(|k| l[(k, k)] > 0.0) {
        return Ok((l, false));
    }
    let mut fixed = l;
    for k in 0..d {
        fixed[(k, k)] = fixed[(k, k)].abs();
    }
    let cov = &fixed * fixed.transpose() + DMatrix::<f64>::identity(d, d) * 1e-8;
    let chol = cholesky(&cov, "repaired variational factor")?;
    Ok((chol.l(), true))
}

/// Initial state: `mu = xt_i` and `L = chol(G^{-1})` where `G` is the
/// plug-in information with probabilities clipped to `[tau, 1 - tau]`.
pub fn initial_posterior(plugin: &Plugin, signed_row: &[f64], i: usize, tau: f64) -> Result<VertexPosterior> {
    let info = plugin.information(i, Some(tau))?;
    let cov = linalg::spd_inverse(&info.g, "clipped plug-in information")?;
    let l = cholesky(&cov, "inverse plug-in information")?.l();
    VertexPosterior::new(DVector::from_column_slice(signed_row), l)
}

/// Output of [`sanvi_all`].
#[derive(Debug, Clone, PartialEq)]
pub struct SanviFit {
    /// Row `i` is `mu_i`.
    pub x_hat: DMatrix<f64>,
    pub posteriors: Vec<VertexPosterior>,
    pub iterations: Vec<usize>,
    pub repaired: usize,
}

impl SanviFit {
    pub fn g_hats(&self) -> Vec<DMatrix<f64>> {
        self.posteriors.iter().map(|p| p.g_hat.clone()).collect()
    }
}

/// Embeds `graph` and fits every vertex.
pub fn sanvi_all(graph: &Graph, d: usize, prior: &PriorSpec, opts: &SanviOptions) -> Result<SanviFit> {
    let (ase, signed) = embeddings(graph, d)?;
    sanvi_from_embeddings(graph, &ase, &signed, prior, opts)
}

/// Fits every vertex given precomputed embeddings of `graph`.
pub fn sanvi_from_embeddings(
    graph: &Graph,
    ase: &Embedding,
    signed: &Embedding,
    prior: &PriorSpec,
    opts: &SanviOptions,
) -> Result<SanviFit> {
    opts.validate()?;
    let n = graph.n();
    let d = signed.d();
    prior.check_dim(d)?;
    let tau = opts.tau_for(n);
    let surrogate = Surrogate::new(signed, tau)?;
    let plugin = Plugin::new(ase, signed)?;
    let fits = map_indices(n, |i| {
        let run = || -> Result<VertexFit> {
            let ctx = surrogate.context(graph, i)?;
            let init = initial_posterior(&plugin, surrogate.row(i), i, tau)?;
            let mut noise = SeededNoise::new(opts.seed, i);
            sanvi_vertex_with(&ctx, prior, &init, opts, &mut noise)
        };
        run().map_err(|e| e.at_vertex(i))
    });
    let mut x_hat = DMatrix::zeros(n, d);
    let mut posteriors = Vec::with_capacity(n);
    let mut iterations = Vec::with_capacity(n);
    let mut repaired = 0;
    for (i, fit) in fits.into_iter().enumerate() {
        let fit = fit?;
        x_hat.set_row(i, &fit.posterior.mu.transpose());
        iterations.push(fit.iterations);
        repaired += fit.repaired as usize;
        posteriors.push(fit.posterior);
    }
    Ok(SanviFit { x_hat, posteriors, iterations, repaired })
}
