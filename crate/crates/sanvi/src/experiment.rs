//! Simulation sweeps, real-network estimation and clustering, timing study.
//!
//! Output tables (all CSV, header row first):
//!
//! * `results.csv`: `seed, cell_seed, scenario, n, rep, estimator, sse, seconds, error`
//! * `summary.csv`: `seed, scenario, n, estimator, reps_ok, reps_failed, mean_sse, se_sse, mean_seconds`
//! * `pvalues.csv`: `seed, scenario, n, estimator_a, estimator_b, reps, mean_diff, t_stat, p_value`
//!   (paired over repetitions, `mean_diff = a - b`)
//! * `timing.csv`: `seed, scenario, n, rep, estimator, seconds`
//! * `timing_fit.csv`: `estimator, points, c0, c1, c2, r2` for `seconds ~ c0 + c1 n + c2 n^2`
//!
//! Failed cells leave `sse`/`seconds` empty and carry the reason in `error`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use sanvi_core::esl::{default_tau, mesle_all};
use sanvi_core::eval::{adjusted_rand_index, gmm_assign, gmm_fit, paired_t_test, procrustes_sse};
use sanvi_core::graph_model::{make_scenario, sample_grdpg_with, Diagonal};
use sanvi_core::mcmc::{be_all, BeFit};
use sanvi_core::one_step::ose;
use sanvi_core::rng::derive_seed;
use sanvi_core::spectral::{ase, embeddings, signed_ase};
use sanvi_core::vi::{sanvi_all, PriorSpec, SanviFit};
use sanvi_core::{Graph, ScenarioKind, ScenarioSpec};
use serde::{Deserialize, Serialize};

use crate::config::{Estimator, RunConfig};
use crate::error::{Error, Result};
use crate::formats;
use crate::ingest::{parse_edge_list, parse_labels, to_undirected_lcc, Ingested};

/// An estimate plus the estimator-specific extras worth exporting.
#[derive(Debug, Clone)]
pub struct FitOutput {
    pub x_hat: DMatrix<f64>,
    /// Wall-clock of the estimator call, spectral step included.
    pub seconds: f64,
    pub sanvi: Option<SanviFit>,
    pub be: Option<BeFit>,
}

/// Runs one estimator on `graph` with a flat prior.
pub fn fit_estimator(graph: &Graph, d: usize, est: Estimator, cfg: &RunConfig, seed: u64) -> Result<FitOutput> {
    let prior = PriorSpec::ImproperUniform;
    let tau = cfg.tau.unwrap_or_else(|| default_tau(graph.n()));
    let start = Instant::now();
    let (x_hat, sanvi, be) = match est {
        Estimator::Ase => (ase(graph, d)?.x, None, None),
        Estimator::Ose => {
            let (a, s) = embeddings(graph, d)?;
            (ose(graph, &a, &s)?, None, None)
        }
        Estimator::Mesle => (mesle_all(graph, &signed_ase(graph, d)?, tau)?, None, None),
        Estimator::Sanvi => {
            let fit = sanvi_all(graph, d, &prior, &cfg.sanvi_options(seed))?;
            (fit.x_hat.clone(), Some(fit), None)
        }
        Estimator::Be => {
            let fit = be_all(graph, d, &prior, &cfg.chain_spec(seed))?;
            (fit.x_hat.clone(), None, Some(fit))
        }
    };
    let seconds = start.elapsed().as_secs_f64();
    Ok(FitOutput { x_hat, seconds, sanvi, be })
}

/// Seeds of one `(scenario, n, rep)` cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CellSeeds {
    pub cell: u64,
    pub scenario: u64,
    pub graph: u64,
    pub estimator: u64,
}

impl CellSeeds {
    pub fn new(master: u64, scenario: ScenarioKind, n: usize, rep: usize) -> Self {
        let cell = derive_seed(master, &[scenario.id(), n as u64, rep as u64]);
        Self {
            cell,
            scenario: derive_seed(cell, &[1]),
            graph: derive_seed(cell, &[2]),
            estimator: derive_seed(cell, &[3]),
        }
    }
}

fn diagonal(cfg: &RunConfig) -> Diagonal {
    if cfg.self_loops {
        Diagonal::Sampled
    } else {
        Diagonal::Zero
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimRow {
    pub seed: u64,
    pub cell_seed: u64,
    pub scenario: String,
    pub n: usize,
    pub rep: usize,
    pub estimator: String,
    pub sse: Option<f64>,
    pub seconds: Option<f64>,
    pub error: String,
}

impl SimRow {
    pub fn ok(&self) -> bool {
        self.error.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub seed: u64,
    pub scenario: String,
    pub n: usize,
    pub estimator: String,
    pub reps_ok: usize,
    pub reps_failed: usize,
    pub mean_sse: Option<f64>,
    pub se_sse: Option<f64>,
    pub mean_seconds: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PValueRow {
    pub seed: u64,
    pub scenario: String,
    pub n: usize,
    pub estimator_a: String,
    pub estimator_b: String,
    pub reps: usize,
    pub mean_diff: f64,
    pub t_stat: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SimulationReport {
    pub rows: Vec<SimRow>,
    pub summary: Vec<SummaryRow>,
    pub pvalues: Vec<PValueRow>,
}

impl SimulationReport {
    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| !r.ok()).count()
    }
}

/// Runs one repetition cell: draws the scenario and graph, fits every
/// selected estimator. Estimator failures become rows with an error message.
pub fn simulate_cell(cfg: &RunConfig, n: usize, rep: usize) -> Result<Vec<SimRow>> {
    let seeds = CellSeeds::new(cfg.seed, cfg.scenario, n, rep);
    let config = make_scenario(&ScenarioSpec::new(cfg.scenario, n, seeds.scenario))?;
    let graph = sample_grdpg_with(&config, seeds.graph, diagonal(cfg))?;
    let d = cfg.d.unwrap_or_else(|| cfg.scenario.dim());
    let mut ests = cfg.estimators.clone();
    ests.sort();
    ests.dedup();
    let rows = ests
        .into_iter()
        .map(|est| {
            let mut row = SimRow {
                seed: cfg.seed,
                cell_seed: seeds.cell,
                scenario: cfg.scenario.to_string(),
                n,
                rep,
                estimator: est.to_string(),
                sse: None,
                seconds: None,
                error: String::new(),
            };
            match fit_estimator(&graph, d, est, cfg, seeds.estimator)
                .and_then(|f| Ok((procrustes_sse(&f.x_hat, &config.x0)?.sse, f.seconds)))
            {
                Ok((sse, secs)) => {
                    row.sse = Some(sse);
                    row.seconds = Some(secs);
                }
                Err(e) => row.error = e.to_string(),
            }
            row
        })
        .collect();
    Ok(rows)
}

fn mean_se(xs: &[f64]) -> (Option<f64>, Option<f64>) {
    if xs.is_empty() {
        return (None, None);
    }
    let m = xs.iter().sum::<f64>() / xs.len() as f64;
    if xs.len() < 2 {
        return (Some(m), None);
    }
    let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64;
    (Some(m), Some((var / xs.len() as f64).sqrt()))
}

/// Per-cell means and standard errors plus paired t-tests between every pair
/// of estimators, computed from per-repetition rows.
pub fn summarize(rows: &[SimRow]) -> (Vec<SummaryRow>, Vec<PValueRow>) {
    let mut cells: BTreeMap<(String, usize), BTreeMap<String, Vec<&SimRow>>> = BTreeMap::new();
    for r in rows {
        cells.entry((r.scenario.clone(), r.n)).or_default().entry(r.estimator.clone()).or_default().push(r);
    }
    let mut summary = Vec::new();
    let mut pvalues = Vec::new();
    for ((scenario, n), by_est) in &cells {
        let seed = by_est.values().next().and_then(|v| v.first()).map_or(0, |r| r.seed);
        for (est, rs) in by_est {
            let sse: Vec<f64> = rs.iter().filter_map(|r| r.sse).collect();
            let secs: Vec<f64> = rs.iter().filter_map(|r| r.seconds).collect();
            let (mean_sse, se_sse) = mean_se(&sse);
            summary.push(SummaryRow {
                seed,
                scenario: scenario.clone(),
                n: *n,
                estimator: est.clone(),
                reps_ok: sse.len(),
                reps_failed: rs.len() - sse.len(),
                mean_sse,
                se_sse,
                mean_seconds: mean_se(&secs).0,
            });
        }
        let names: Vec<&String> = by_est.keys().collect();
        for (ia, a) in names.iter().enumerate() {
            for b in &names[ia + 1..] {
                let by_rep = |e: &String| -> BTreeMap<usize, f64> {
                    by_est[e].iter().filter_map(|r| r.sse.map(|s| (r.rep, s))).collect()
                };
                let (ra, rb) = (by_rep(a), by_rep(b));
                let (xa, xb): (Vec<f64>, Vec<f64>) =
                    ra.iter().filter_map(|(rep, sa)| rb.get(rep).map(|sb| (*sa, *sb))).unzip();
                if let Ok(t) = paired_t_test(&xa, &xb) {
                    pvalues.push(PValueRow {
                        seed,
                        scenario: scenario.clone(),
                        n: *n,
                        estimator_a: (*a).clone(),
                        estimator_b: (*b).clone(),
                        reps: xa.len(),
                        mean_diff: t.mean_diff,
                        t_stat: t.t_stat,
                        p_value: t.p_value,
                    });
                }
            }
        }
    }
    (summary, pvalues)
}

/// Runs every `(n, rep)` cell in order, calling `progress` after each.
pub fn simulate(cfg: &RunConfig, mut progress: impl FnMut(&[SimRow])) -> Result<SimulationReport> {
    cfg.validate()?;
    let mut rows = Vec::new();
    for &n in &cfg.n {
        for rep in 0..cfg.reps {
            let cell = simulate_cell(cfg, n, rep)?;
            progress(&cell);
            rows.extend(cell);
        }
    }
    let (summary, pvalues) = summarize(&rows);
    Ok(SimulationReport { rows, summary, pvalues })
}

pub fn write_simulation(out: &Path, cfg: &RunConfig, report: &SimulationReport) -> Result<()> {
    formats::write_text(&out.join("config.txt"), &cfg.to_text())?;
    formats::write_rows(&out.join("results.csv"), &report.rows)?;
    formats::write_rows(&out.join("summary.csv"), &report.summary)?;
    formats::write_rows(&out.join("pvalues.csv"), &report.pvalues)
}

pub fn run_simulate(cfg: &RunConfig, progress: impl FnMut(&[SimRow])) -> Result<SimulationReport> {
    let report = simulate(cfg, progress)?;
    write_simulation(&cfg.out, cfg, &report)?;
    Ok(report)
}

/// Reads an edge list (and optional label file) and restricts it to the
/// largest connected component.
pub fn load_network(input: &Path, labels: Option<&Path>) -> Result<Ingested> {
    let mut raw = parse_edge_list(&formats::read_text(input)?)?;
    if let Some(p) = labels {
        raw = raw.with_labels(parse_labels(&formats::read_text(p)?)?);
    }
    to_undirected_lcc(&raw)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRecord {
    pub estimator: String,
    pub n: usize,
    pub d: usize,
    pub seconds: Option<f64>,
    pub output: Option<PathBuf>,
    pub error: String,
}

fn network_seed(cfg: &RunConfig) -> u64 {
    derive_seed(cfg.seed, &[0x6e6574])
}

/// Ingests `cfg.input`, fits each estimator, and writes `graph.txt`,
/// `labels.csv` (if labels were given), `embedding_<est>.csv`,
/// `posterior_<est>.csv` for sanvi/be, and `estimate.json`.
pub fn run_estimate(cfg: &RunConfig) -> Result<Vec<EstimateRecord>> {
    cfg.validate()?;
    let input = cfg.input.as_deref().ok_or_else(|| Error::Config("missing input".into()))?;
    let net = load_network(input, cfg.labels.as_deref())?;
    let d = cfg.d.unwrap_or(2);
    let out = &cfg.out;
    formats::write_graph(&out.join("graph.txt"), &net)?;
    if let Some(l) = &net.labels {
        formats::write_labels(&out.join("labels.csv"), &net.node_ids, l)?;
    }
    let ids = Some(net.node_ids.as_slice());
    let mut records = Vec::new();
    for &est in &cfg.estimators {
        let mut rec =
            EstimateRecord { estimator: est.to_string(), n: net.graph.n(), d, seconds: None, output: None, error: String::new() };
        match fit_estimator(&net.graph, d, est, cfg, network_seed(cfg)) {
            Ok(fit) => {
                let path = out.join(format!("embedding_{est}.csv"));
                formats::write_embedding(&path, ids, &fit.x_hat)?;
                if let Some(s) = &fit.sanvi {
                    formats::write_sanvi_posterior(&out.join(format!("posterior_{est}.csv")), ids, s)?;
                }
                if let Some(b) = &fit.be {
                    formats::write_be_posterior(&out.join(format!("posterior_{est}.csv")), ids, b)?;
                }
                rec.seconds = Some(fit.seconds);
                rec.output = Some(path);
            }
            Err(e) => rec.error = e.to_string(),
        }
        records.push(rec);
    }
    formats::write_text(&out.join("estimate.json"), &serde_json::to_string_pretty(&records)?)?;
    Ok(records)
}

/// GMM clustering of an embedding scored against known classes.
pub fn cluster_ari(x: &DMatrix<f64>, labels: &[i64], k: usize, seed: u64) -> Result<f64> {
    let model = gmm_fit(x, k, seed)?;
    let assigned = gmm_assign(&model, x)?;
    Ok(adjusted_rand_index(&assigned, labels)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterRecord {
    pub estimator: String,
    pub ari: Option<f64>,
    /// Estimator wall-clock (clustering excluded).
    pub seconds: Option<f64>,
    pub n: usize,
    pub k: usize,
    pub error: String,
}

/// Ingest, estimate, GMM-cluster and score each estimator; writes
/// `cluster.json`.
pub fn run_cluster(cfg: &RunConfig) -> Result<Vec<ClusterRecord>> {
    cfg.validate()?;
    let input = cfg.input.as_deref().ok_or_else(|| Error::Config("missing input".into()))?;
    let labels_path = cfg.labels.as_deref().ok_or_else(|| Error::Config("clustering needs a label file".into()))?;
    let net = load_network(input, Some(labels_path))?;
    let labels = net.labels.clone().ok_or_else(|| Error::Config("label file is empty".into()))?;
    let d = cfg.d.unwrap_or(2);
    let gmm_seed = derive_seed(cfg.seed, &[0x676d6d]);
    let mut records = Vec::new();
    for &est in &cfg.estimators {
        let mut rec = ClusterRecord {
            estimator: est.to_string(),
            ari: None,
            seconds: None,
            n: net.graph.n(),
            k: cfg.clusters,
            error: String::new(),
        };
        match fit_estimator(&net.graph, d, est, cfg, network_seed(cfg))
            .and_then(|f| Ok((cluster_ari(&f.x_hat, &labels, cfg.clusters, gmm_seed)?, f.seconds)))
        {
            Ok((ari, secs)) => {
                rec.ari = Some(ari);
                rec.seconds = Some(secs);
            }
            Err(e) => rec.error = e.to_string(),
        }
        records.push(rec);
    }
    formats::write_text(&cfg.out.join("cluster.json"), &serde_json::to_string_pretty(&records)?)?;
    Ok(records)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub seed: u64,
    pub scenario: String,
    pub n: usize,
    pub rep: usize,
    pub estimator: String,
    pub seconds: Option<f64>,
    pub error: String,
}

/// Least-squares `seconds ~ c0 + c1 n + c2 n^2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadraticFit {
    pub estimator: String,
    pub points: usize,
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    pub r2: f64,
}

impl QuadraticFit {
    pub fn predict(&self, n: f64) -> f64 {
        self.c0 + self.c1 * n + self.c2 * n * n
    }
}

/// Fits a quadratic through `(n, seconds)` points. Needs three distinct `n`.
pub fn fit_quadratic(estimator: &str, points: &[(f64, f64)]) -> Option<QuadraticFit> {
    let mut distinct: Vec<f64> = points.iter().map(|p| p.0).collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 3 {
        return None;
    }
    // scale n for conditioning, then map coefficients back
    let scale = distinct[distinct.len() - 1];
    let m = points.len();
    let a = DMatrix::from_fn(m, 3, |i, k| (points[i].0 / scale).powi(k as i32));
    let y = DVector::from_iterator(m, points.iter().map(|p| p.1));
    let beta = a.clone().svd(true, true).solve(&y, 1e-12).ok()?;
    let resid = &y - &a * &beta;
    let mean = y.mean();
    let ss_tot: f64 = y.iter().map(|v| (v - mean) * (v - mean)).sum();
    let r2 = if ss_tot > 0.0 { 1.0 - resid.norm_squared() / ss_tot } else { 1.0 };
    Some(QuadraticFit {
        estimator: estimator.to_string(),
        points: m,
        c0: beta[0],
        c1: beta[1] / scale,
        c2: beta[2] / (scale * scale),
        r2,
    })
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    pub fits: Vec<QuadraticFit>,
}

/// Times each estimator over the `n` grid; identical graphs and seeds for
/// every estimator within a cell.
pub fn bench(cfg: &RunConfig, mut progress: impl FnMut(&BenchRow)) -> Result<BenchReport> {
    cfg.validate()?;
    let d = cfg.d.unwrap_or_else(|| cfg.scenario.dim());
    let mut ests = cfg.estimators.clone();
    ests.sort();
    ests.dedup();
    let mut rows = Vec::new();
    for &n in &cfg.n {
        for rep in 0..cfg.reps {
            let seeds = CellSeeds::new(cfg.seed, cfg.scenario, n, rep);
            let config = make_scenario(&ScenarioSpec::new(cfg.scenario, n, seeds.scenario))?;
            let graph = sample_grdpg_with(&config, seeds.graph, diagonal(cfg))?;
            for &est in &ests {
                let fit = fit_estimator(&graph, d, est, cfg, seeds.estimator);
                let row = BenchRow {
                    seed: cfg.seed,
                    scenario: cfg.scenario.to_string(),
                    n,
                    rep,
                    estimator: est.to_string(),
                    seconds: fit.as_ref().ok().map(|f| f.seconds),
                    error: fit.err().map(|e| e.to_string()).unwrap_or_default(),
                };
                progress(&row);
                rows.push(row);
            }
        }
    }
    let fits = ests
        .iter()
        .filter_map(|est| {
            let pts: Vec<(f64, f64)> = rows
                .iter()
                .filter(|r| r.estimator == est.name())
                .filter_map(|r| r.seconds.map(|s| (r.n as f64, s)))
                .collect();
            fit_quadratic(est.name(), &pts)
        })
        .collect();
    Ok(BenchReport { rows, fits })
}

pub fn run_bench(cfg: &RunConfig, progress: impl FnMut(&BenchRow)) -> Result<BenchReport> {
    let report = bench(cfg, progress)?;
    formats::write_text(&cfg.out.join("config.txt"), &cfg.to_text())?;
    formats::write_rows(&cfg.out.join("timing.csv"), &report.rows)?;
    formats::write_rows(&cfg.out.join("timing_fit.csv"), &report.fits)?;
    Ok(report)
}
