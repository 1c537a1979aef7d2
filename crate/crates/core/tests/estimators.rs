use nalgebra::DMatrix;
use sanvi_core::esl::{default_tau, mesle_all, Surrogate};
use sanvi_core::eval::procrustes_sse;
use sanvi_core::graph_model::{make_scenario, sample_grdpg_with, Diagonal};
use sanvi_core::mcmc::{be_from_embedding, ChainSpec};
use sanvi_core::one_step::{fisher_oracle, Plugin};
use sanvi_core::spectral::embeddings;
use sanvi_core::vi::{initial_posterior, sanvi_from_embeddings, vi_objective_mc, PriorSpec, SanviOptions};
use sanvi_core::{Graph, LatentConfig, ScenarioKind, ScenarioSpec};

fn hollow_sbm5(n: usize, seed: u64) -> (LatentConfig, Graph) {
    let config = make_scenario(&ScenarioSpec::new(ScenarioKind::Sbm5, n, seed)).unwrap();
    let graph = sample_grdpg_with(&config, seed + 100, Diagonal::Zero).unwrap();
    (config, graph)
}

fn row_dist(a: &DMatrix<f64>, b: &DMatrix<f64>, i: usize) -> f64 {
    (a.row(i) - b.row(i)).norm()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

#[test]
fn surrogate_estimators_improve_on_ase_without_self_loops() {
    let mut gain = 0.0;
    for seed in 1..=3 {
        let (config, graph) = hollow_sbm5(600, seed);
        let (ase, signed) = embeddings(&graph, 2).unwrap();
        let x_m = mesle_all(&graph, &signed, default_tau(600)).unwrap();
        let sse_ase = procrustes_sse(&ase.x, &config.x0).unwrap().sse;
        let sse_m = procrustes_sse(&x_m, &config.x0).unwrap().sse;
        gain += sse_ase - sse_m;
    }
    assert!(gain > 0.0, "mean improvement {}", gain / 3.0);
}

// The variational mean and the posterior mean both concentrate at the
// MESLE at a faster rate than the MESLE concentrates at the truth.
#[test]
fn posterior_summaries_sit_near_the_mesle() {
    let n = 400;
    let (config, graph) = hollow_sbm5(n, 9);
    let (ase, signed) = embeddings(&graph, 2).unwrap();
    let x_m = mesle_all(&graph, &signed, default_tau(n)).unwrap();
    let prior = PriorSpec::ImproperUniform;
    let vi = sanvi_from_embeddings(&graph, &ase, &signed, &prior, &SanviOptions { seed: 3, ..Default::default() }).unwrap();
    let be = be_from_embedding(&graph, &signed, &prior, &ChainSpec { seed: 3, ..Default::default() }).unwrap();
    let w = procrustes_sse(&x_m, &config.x0).unwrap().w;
    let err_m = median((0..n).map(|i| row_dist(&(&x_m * &w), &config.x0, i)).collect());
    let vi_gap = median((0..n).map(|i| row_dist(&vi.x_hat, &x_m, i)).collect());
    let be_gap = median((0..n).map(|i| row_dist(&be.x_hat, &x_m, i)).collect());
    assert!(vi_gap < 0.5 * err_m, "vi gap {vi_gap} vs mesle error {err_m}");
    assert!(be_gap < 0.5 * err_m, "be gap {be_gap} vs mesle error {err_m}");
}

#[test]
fn fitted_precision_tracks_the_fisher_information() {
    let n = 800;
    let (config, graph) = hollow_sbm5(n, 4);
    let (ase, signed) = embeddings(&graph, 2).unwrap();
    let fit = sanvi_from_embeddings(&graph, &ase, &signed, &PriorSpec::ImproperUniform, &SanviOptions::default()).unwrap();
    let w = procrustes_sse(&fit.x_hat, &config.x0).unwrap().w;
    let rel: Vec<f64> = (0..n)
        .step_by(8)
        .map(|i| {
            let g0 = fisher_oracle(&config, i).unwrap().g;
            let aligned = w.transpose() * &fit.posteriors[i].g_hat * &w;
            (aligned - &g0).norm() / g0.norm()
        })
        .collect();
    let m = median(rel);
    assert!(m < 0.5, "median relative error {m}");
}

#[test]
fn variational_objective_decreases_from_the_initial_state() {
    let n = 300;
    let (_, graph) = hollow_sbm5(n, 2);
    let (ase, signed) = embeddings(&graph, 2).unwrap();
    let tau = default_tau(n);
    let prior = PriorSpec::ImproperUniform;
    let fit = sanvi_from_embeddings(&graph, &ase, &signed, &prior, &SanviOptions::default()).unwrap();
    let sur = Surrogate::new(&signed, tau).unwrap();
    let plugin = Plugin::new(&ase, &signed).unwrap();
    // fixed quadrature-like draws shared by both evaluations
    let z: Vec<Vec<f64>> = (0..64)
        .map(|k| {
            let t = (k as f64 + 0.5) / 64.0 * std::f64::consts::TAU;
            let r = 1.0 + (k % 4) as f64 * 0.5;
            vec![r * t.cos(), r * t.sin()]
        })
        .collect();
    let mut improved = 0;
    let checked: Vec<usize> = (0..n).step_by(15).collect();
    for &i in &checked {
        let ctx = sur.context(&graph, i).unwrap();
        let init = initial_posterior(&plugin, sur.row(i), i, tau).unwrap();
        let before = vi_objective_mc(&ctx, &prior, init.mu.as_slice(), &init.l, &z).unwrap();
        let p = &fit.posteriors[i];
        let after = vi_objective_mc(&ctx, &prior, p.mu.as_slice(), &p.l, &z).unwrap();
        if after <= before + 1e-9 * before.abs() {
            improved += 1;
        }
    }
    assert!(improved * 10 >= checked.len() * 9, "{improved} of {}", checked.len());
}

#[test]
fn empirical_edge_frequencies_match_probabilities() {
    let config = make_scenario(&ScenarioSpec::new(ScenarioKind::Dcsbm2, 30, 5)).unwrap();
    let reps = 2000;
    let mut counts = vec![0u32; 30 * 30];
    for s in 0..reps {
        let g = sample_grdpg_with(&config, s, Diagonal::Sampled).unwrap();
        for i in 0..30 {
            for j in 0..30 {
                counts[i * 30 + j] += g.get(i, j) as u32;
            }
        }
    }
    let mut worst: f64 = 0.0;
    for i in 0..30 {
        for j in 0..30 {
            let p = config.probability(i, j);
            let f = counts[i * 30 + j] as f64 / reps as f64;
            let sd = (p * (1.0 - p) / reps as f64).sqrt().max(1e-9);
            worst = worst.max((f - p).abs() / sd);
        }
    }
    // 465 distinct cells; a 5-sigma excursion has probability ~3e-4 overall
    assert!(worst < 5.0, "worst z-score {worst}");
}

#[test]
fn repeated_fits_are_bit_identical() {
    let (_, graph) = hollow_sbm5(150, 6);
    let (ase, signed) = embeddings(&graph, 2).unwrap();
    let prior = PriorSpec::ImproperUniform;
    let opts = SanviOptions { seed: 11, max_iters: 200, ..Default::default() };
    let a = sanvi_from_embeddings(&graph, &ase, &signed, &prior, &opts).unwrap();
    let b = sanvi_from_embeddings(&graph, &ase, &signed, &prior, &opts).unwrap();
    assert_eq!(a, b);
    let spec = ChainSpec { seed: 11, length: 800, burn_in: 100, ..Default::default() };
    let c = be_from_embedding(&graph, &signed, &prior, &spec).unwrap();
    let d = be_from_embedding(&graph, &signed, &prior, &spec).unwrap();
    assert_eq!(c, d);
    let other = be_from_embedding(&graph, &signed, &prior, &ChainSpec { seed: 12, ..spec }).unwrap();
    assert_ne!(c.x_hat, other.x_hat);
}
