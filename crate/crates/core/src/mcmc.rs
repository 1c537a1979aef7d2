//! Random-walk Metropolis–Hastings over the per-vertex ESL posterior
//! `pi(x | A) ∝ exp{l_i(x)} pi_0(x)`, giving the Bayes estimate (posterior
//! mean) baseline.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::esl::{default_tau, EslContext, Surrogate};
use crate::graph_model::Graph;
use crate::linalg::sym_eigenvalues;
use crate::math;
use crate::par::map_indices;
use crate::rng::{substream, tag};
use crate::spectral::{signed_ase, Embedding};
use crate::vi::PriorSpec;

/// Proposal scale for the isotropic Gaussian random walk.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Proposal {
    Fixed(f64),
    /// Tune on a pilot chain toward the given acceptance rate.
    Auto { target: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainSpec {
    /// Total number of proposals in the main chain.
    pub length: usize,
    pub thin: usize,
    /// Number of thinned draws discarded at the start.
    pub burn_in: usize,
    pub proposal: Proposal,
    pub pilot_length: usize,
    /// ESL truncation; `None` means [`default_tau`].
    pub tau: Option<f64>,
    /// Keep the retained draws in the result (diagnostics only).
    pub keep_draws: bool,
    pub seed: u64,
}

impl Default for ChainSpec {
    fn default() -> Self {
        Self {
            length: 3000,
            thin: 2,
            burn_in: 500,
            proposal: Proposal::Auto { target: 0.25 },
            pilot_length: 500,
            tau: None,
            keep_draws: false,
            seed: 0,
        }
    }
}

impl ChainSpec {
    /// Number of draws averaged: `length / thin - burn_in`.
    pub fn kept(&self) -> usize {
        (self.length / self.thin.max(1)).saturating_sub(self.burn_in)
    }

    pub fn validate(&self) -> Result<()> {
        if self.thin == 0 {
            return Err(Error::InvalidParameter("thin must be positive".into()));
        }
        if self.kept() == 0 {
            return Err(Error::InvalidParameter(format!(
                "chain of length {} thinned by {} leaves nothing after a burn-in of {}",
                self.length, self.thin, self.burn_in
            )));
        }
        match self.proposal {
            Proposal::Fixed(s) if !(s > 0.0 && s.is_finite()) => {
                Err(Error::InvalidParameter(format!("proposal sd {s} must be positive")))
            }
            Proposal::Auto { target } if !(target > 0.0 && target < 1.0) => {
                Err(Error::InvalidParameter(format!("target acceptance {target} must lie in (0, 1)")))
            }
            Proposal::Auto { .. } if self.pilot_length == 0 => {
                Err(Error::InvalidParameter("auto-tuning needs a pilot chain".into()))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainResult {
    pub posterior_mean: DVector<f64>,
    pub acceptance_rate: f64,
    pub accepted: usize,
    pub draws_kept: usize,
    pub proposal_sd_used: f64,
    /// Accept/reject decision of every main-chain proposal.
    pub accept_log: Vec<bool>,
    pub draws: Option<Vec<DVector<f64>>>,
}

fn log_target(ctx: &EslContext<'_>, prior: &PriorSpec, x: &[f64]) -> f64 {
    ctx.value(x) + prior.log_density(x)
}

/// Starting scale `2.38 / sqrt(trace(-H))` from the curvature at `x`; falls
/// back to `0.1 / sqrt(n)` if the Hessian is unusable.
pub fn curvature_scale(ctx: &EslContext<'_>, x: &[f64]) -> f64 {
    let h = ctx.hess(x);
    let tr = -h.trace();
    if tr > 0.0 && tr.is_finite() {
        2.38 / math::sqrt(tr)
    } else {
        0.1 / math::sqrt(ctx.n() as f64)
    }
}

/// Stochastic-approximation tuning of the proposal sd on a pilot chain:
/// `log s <- log s + t^{-0.6} (a_t - target)` where `a_t` is the acceptance
/// probability of step `t`.
pub fn tune_proposal(
    ctx: &EslContext<'_>,
    prior: &PriorSpec,
    init: &[f64],
    target: f64,
    start_sd: Option<f64>,
    pilot_length: usize,
    seed: u64,
) -> Result<f64> {
    if !(target > 0.0 && target < 1.0) {
        return Err(Error::InvalidParameter(format!("target acceptance {target} must lie in (0, 1)")));
    }
    let d = ctx.d();
    if init.len() != d {
        return Err(Error::DimensionMismatch(format!("init has length {}, expected {d}", init.len())));
    }
    let mut log_sd = math::ln(start_sd.unwrap_or_else(|| curvature_scale(ctx, init)));
    let mut rng = substream(seed, &[tag::MCMC_PILOT, ctx.vertex() as u64]);
    let mut x = init.to_vec();
    let mut lp = log_target(ctx, prior, &x);
    let mut prop = vec![0.0; d];
    for t in 1..=pilot_length {
        let sd = math::exp(log_sd);
        for k in 0..d {
            prop[k] = x[k] + sd * rng.sample::<f64, _>(StandardNormal);
        }
        let lp_new = log_target(ctx, prior, &prop);
        let log_ratio = lp_new - lp;
        let a = if log_ratio >= 0.0 { 1.0 } else { math::exp(log_ratio) };
        let u: f64 = rng.random();
        if u < a {
            x.copy_from_slice(&prop);
            lp = lp_new;
        }
        log_sd += math::powf(t as f64, -0.6) * (a - target);
    }
    let sd = math::exp(log_sd);
    if !(sd > 0.0 && sd.is_finite()) {
        return Err(Error::NonFinite("tuned proposal sd".into()));
    }
    Ok(sd)
}

/// Runs one chain for `ctx.vertex()` from `init`.
pub fn mh_vertex(ctx: &EslContext<'_>, prior: &PriorSpec, init: &[f64], spec: &ChainSpec) -> Result<ChainResult> {
    spec.validate()?;
    let d = ctx.d();
    if init.len() != d {
        return Err(Error::DimensionMismatch(format!("init has length {}, expected {d}", init.len())));
    }
    let sd = match spec.proposal {
        Proposal::Fixed(s) => s,
        Proposal::Auto { target } => tune_proposal(ctx, prior, init, target, None, spec.pilot_length, spec.seed)?,
    };
    let mut rng = substream(spec.seed, &[tag::MCMC, ctx.vertex() as u64]);
    let mut x = init.to_vec();
    let mut lp = log_target(ctx, prior, &x);
    let mut prop = vec![0.0; d];
    let mut sum = vec![0.0; d];
    let mut accept_log = Vec::with_capacity(spec.length);
    let mut draws = spec.keep_draws.then(|| Vec::with_capacity(spec.kept()));
    let mut accepted = 0;
    let mut thinned = 0;
    let mut kept = 0;
    for step in 1..=spec.length {
        for k in 0..d {
            prop[k] = x[k] + sd * rng.sample::<f64, _>(StandardNormal);
        }
        let lp_new = log_target(ctx, prior, &prop);
        let u: f64 = rng.random();
        let accept = lp_new - lp >= 0.0 || math::ln(u) < lp_new - lp;
        if accept {
            x.copy_from_slice(&prop);
            lp = lp_new;
            accepted += 1;
        }
        accept_log.push(accept);
        if step % spec.thin == 0 {
            thinned += 1;
            if thinned > spec.burn_in {
                kept += 1;
                for k in 0..d {
                    sum[k] += x[k];
                }
                if let Some(dr) = draws.as_mut() {
                    dr.push(DVector::from_column_slice(&x));
                }
            }
        }
    }
    debug_assert_eq!(kept, spec.kept());
    let posterior_mean = DVector::from_iterator(d, sum.iter().map(|s| s / kept as f64));
    Ok(ChainResult {
        posterior_mean,
        acceptance_rate: accepted as f64 / spec.length as f64,
        accepted,
        draws_kept: kept,
        proposal_sd_used: sd,
        accept_log,
        draws,
    })
}

/// Bayes estimates for all vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct BeFit {
    pub x_hat: DMatrix<f64>,
    pub acceptance_rates: Vec<f64>,
    pub proposal_sds: Vec<f64>,
    /// Only filled when `keep_draws` is set.
    pub draws: Vec<Vec<DVector<f64>>>,
}

/// Signed ASE, then one tuned chain per vertex started at its signed-ASE row.
pub fn be_all(graph: &Graph, d: usize, prior: &PriorSpec, spec: &ChainSpec) -> Result<BeFit> {
    let signed = signed_ase(graph, d)?;
    be_from_embedding(graph, &signed, prior, spec)
}

pub fn be_from_embedding(graph: &Graph, signed: &Embedding, prior: &PriorSpec, spec: &ChainSpec) -> Result<BeFit> {
    spec.validate()?;
    let n = graph.n();
    let d = signed.d();
    let tau = spec.tau.unwrap_or_else(|| default_tau(n));
    let surrogate = Surrogate::new(signed, tau)?;
    let results = map_indices(n, |i| {
        surrogate
            .context(graph, i)
            .and_then(|ctx| mh_vertex(&ctx, prior, surrogate.row(i), spec))
            .map(|mut r| {
                r.accept_log = Vec::new();
                r
            })
            .map_err(|e| e.at_vertex(i))
    });
    let mut x_hat = DMatrix::zeros(n, d);
    let mut acceptance_rates = Vec::with_capacity(n);
    let mut proposal_sds = Vec::with_capacity(n);
    let mut draws = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        let r = r?;
        x_hat.set_row(i, &r.posterior_mean.transpose());
        acceptance_rates.push(r.acceptance_rate);
        proposal_sds.push(r.proposal_sd_used);
        if let Some(dr) = r.draws {
            draws.push(dr);
        }
    }
    Ok(BeFit { x_hat, acceptance_rates, proposal_sds, draws })
}

/// Smallest curvature eigenvalue of the negative ESL Hessian; handy for
/// sanity checks on proposal scales.
pub fn min_curvature(ctx: &EslContext<'_>, x: &[f64]) -> f64 {
    let h = -ctx.hess(x);
    sym_eigenvalues(&h)[0]
}
