//! Ground-truth latent positions, GRDPG sampling and the four simulation
//! scenarios.

use alloc::format;
use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use core::fmt;
use core::str::FromStr;

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{Error, Result};
use crate::math;
use crate::rng::{substream, tag};

/// Signature `(p, q)` of the indefinite metric `I_{p,q}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Signature {
    p: usize,
    q: usize,
}

impl Signature {
    pub fn new(p: usize, q: usize) -> Result<Self> {
        if p == 0 {
            return Err(Error::InvalidSignature { p, q });
        }
        Ok(Self { p, q })
    }

    /// Signature `(d, 0)` of an ordinary random dot product graph.
    pub fn positive(d: usize) -> Result<Self> {
        Self::new(d, 0)
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn dim(&self) -> usize {
        self.p + self.q
    }

    /// Diagonal entry `k` of `I_{p,q}`.
    #[inline]
    pub fn sign(&self, k: usize) -> f64 {
        if k < self.p {
            1.0
        } else {
            -1.0
        }
    }

    pub fn signs(&self) -> Vec<f64> {
        (0..self.dim()).map(|k| self.sign(k)).collect()
    }
}

/// Latent positions `X0` (rows are vertices), their signature and sparsity
/// factor `rho`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentConfig {
    pub x0: DMatrix<f64>,
    pub signature: Signature,
    pub rho: f64,
}

const PROB_SLACK: f64 = 1e-12;

impl LatentConfig {
    pub fn new(x0: DMatrix<f64>, signature: Signature, rho: f64) -> Result<Self> {
        let (n, d) = x0.shape();
        if n == 0 {
            return Err(Error::InvalidConfig("no vertices".into()));
        }
        if d != signature.dim() {
            return Err(Error::DimensionMismatch(format!(
                "X0 has {d} columns but signature has dimension {}",
                signature.dim()
            )));
        }
        if !(rho > 0.0 && rho <= 1.0) {
            return Err(Error::InvalidConfig(format!("sparsity factor {rho} outside (0, 1]")));
        }
        if x0.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("latent positions".into()));
        }
        // first p columns orthogonal to the last q
        for a in 0..signature.p() {
            for b in signature.p()..d {
                let ip = x0.column(a).dot(&x0.column(b));
                if ip.abs() > 1e-8 * n as f64 {
                    return Err(Error::InvalidConfig(format!(
                        "columns {a} and {b} are not orthogonal (inner product {ip:e})"
                    )));
                }
            }
        }
        let config = Self { x0, signature, rho };
        config.check_probabilities()?;
        Ok(config)
    }

    pub fn n(&self) -> usize {
        self.x0.nrows()
    }

    pub fn d(&self) -> usize {
        self.x0.ncols()
    }

    /// `rho * x_i' I_{p,q} x_j`.
    #[inline]
    pub fn probability(&self, i: usize, j: usize) -> f64 {
        let mut s = 0.0;
        for k in 0..self.d() {
            s += self.signature.sign(k) * self.x0[(i, k)] * self.x0[(j, k)];
        }
        self.rho * s
    }

    fn check_probabilities(&self) -> Result<()> {
        let n = self.n();
        for i in 0..n {
            for j in i..n {
                let value = self.probability(i, j);
                if !(-PROB_SLACK..=1.0 + PROB_SLACK).contains(&value) {
                    return Err(Error::ProbabilityOutOfRange { i, j, value });
                }
            }
        }
        Ok(())
    }
}

/// Undirected graph on `n` vertices stored as a dense symmetric 0/1 matrix.
/// Self-loops are allowed.
#[derive(Clone, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    adj: Vec<u8>,
}

impl fmt::Debug for Graph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Graph").field("n", &self.n).field("ones", &self.count_ones()).finish()
    }
}

impl Graph {
    /// Graph with no edges.
    pub fn empty(n: usize) -> Self {
        Self { n, adj: vec![0; n * n] }
    }

    /// Builds a graph from undirected edges `(i, j)`; `(i, i)` is a self-loop.
    /// Repeated edges collapse.
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut g = Self::empty(n);
        for (i, j) in edges {
            if i >= n || j >= n {
                return Err(Error::InvalidGraph(format!("edge ({i}, {j}) out of range for n = {n}")));
            }
            g.set(i, j);
        }
        Ok(g)
    }

    /// Validates a row-major dense matrix: square, binary, symmetric.
    pub fn from_dense(n: usize, entries: Vec<u8>) -> Result<Self> {
        if entries.len() != n * n {
            return Err(Error::InvalidGraph(format!("expected {} entries, got {}", n * n, entries.len())));
        }
        for i in 0..n {
            for j in 0..n {
                let v = entries[i * n + j];
                if v > 1 {
                    return Err(Error::InvalidGraph(format!("entry ({i}, {j}) = {v} is not binary")));
                }
                if v != entries[j * n + i] {
                    return Err(Error::InvalidGraph(format!("not symmetric at ({i}, {j})")));
                }
            }
        }
        Ok(Self { n, adj: entries })
    }

    #[inline]
    fn set(&mut self, i: usize, j: usize) {
        self.adj[i * self.n + j] = 1;
        self.adj[j * self.n + i] = 1;
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> u8 {
        self.adj[i * self.n + j]
    }

    /// Row `i` of the adjacency matrix.
    #[inline]
    pub fn row(&self, i: usize) -> &[u8] {
        &self.adj[i * self.n..(i + 1) * self.n]
    }

    /// Number of unit entries of the matrix (an off-diagonal edge counts twice).
    pub fn count_ones(&self) -> usize {
        self.adj.iter().filter(|&&v| v == 1).count()
    }

    pub fn self_loops(&self) -> usize {
        (0..self.n).filter(|&i| self.get(i, i) == 1).count()
    }

    /// Edges `(i, j)` with `i <= j`, row by row.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n).flat_map(move |i| (i..self.n).filter(move |&j| self.get(i, j) == 1).map(move |j| (i, j)))
    }

    pub fn degree(&self, i: usize) -> usize {
        self.row(i).iter().map(|&v| v as usize).sum()
    }

    /// `y = A x`.
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let mut s = 0.0;
            for (a, xv) in self.row(i).iter().zip(x) {
                if *a != 0 {
                    s += xv;
                }
            }
            *yi = s;
        }
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| self.get(i, j) as f64)
    }
}

/// The four simulation designs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ScenarioKind {
    /// Five-block SBM, `v = (.3,.3), (.5,.5), (.7,.7), (.3,.7), (.7,.3)`.
    Sbm5,
    /// Two-block degree-corrected SBM with `theta ~ Uniform(0.05, 0.95)`.
    Dcsbm2,
    /// `[0.15 sin(pi t) + 0.6, 0.15 cos(pi t) + 0.6]`, `t = i/n`.
    Curve2d,
    /// `[0.15 sin(2 pi t) + 0.6, 0.15 cos(2 pi t) + 0.6, 0.15 cos(4 pi t)]`, signature (2, 1).
    Curve3d,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 4] = [Self::Sbm5, Self::Dcsbm2, Self::Curve2d, Self::Curve3d];

    pub fn name(&self) -> &'static str {
        match self {
            Self::Sbm5 => "sbm5",
            Self::Dcsbm2 => "dcsbm2",
            Self::Curve2d => "curve2d",
            Self::Curve3d => "curve3d",
        }
    }

    pub fn signature(&self) -> Signature {
        match self {
            Self::Curve3d => Signature { p: 2, q: 1 },
            _ => Signature { p: 2, q: 0 },
        }
    }

    pub fn dim(&self) -> usize {
        self.signature().dim()
    }

    /// Stable numeric id, used when deriving per-cell seeds.
    pub fn id(&self) -> u64 {
        match self {
            Self::Sbm5 => 1,
            Self::Dcsbm2 => 2,
            Self::Curve2d => 3,
            Self::Curve3d => 4,
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScenarioKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::UnknownScenario(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ScenarioSpec {
    pub kind: ScenarioKind,
    pub n: usize,
    pub seed: u64,
}

impl ScenarioSpec {
    pub fn new(kind: ScenarioKind, n: usize, seed: u64) -> Self {
        Self { kind, n, seed }
    }
}

pub const SBM5_BLOCKS: [[f64; 2]; 5] = [[0.3, 0.3], [0.5, 0.5], [0.7, 0.7], [0.3, 0.7], [0.7, 0.3]];

fn dcsbm2_blocks() -> [[f64; 2]; 2] {
    let a = 3.0 * math::sqrt(10.0) / 10.0;
    let b = math::sqrt(10.0) / 10.0;
    [[a, b], [b, a]]
}

/// Block label of vertex `i` for the block-model scenarios, drawn from its own
/// substream so extending `n` never reshuffles earlier vertices.
pub fn block_of(seed: u64, i: usize, blocks: usize) -> usize {
    substream(seed, &[tag::SCENARIO_BLOCK, i as u64]).random_range(0..blocks)
}

/// Degree-correction weight of vertex `i` in the `dcsbm2` scenario.
pub fn dcsbm_weight(seed: u64, i: usize) -> f64 {
    substream(seed, &[tag::SCENARIO_WEIGHT, i as u64]).random_range(0.05..0.95)
}

/// Ground-truth latent positions for a scenario. `rho = 1` throughout.
pub fn make_scenario(spec: &ScenarioSpec) -> Result<LatentConfig> {
    let kind = spec.kind;
    let n = spec.n;
    let d = kind.dim();
    if n < d {
        return Err(Error::InvalidConfig(format!("n = {n} is smaller than d = {d}")));
    }
    let mut x0 = DMatrix::zeros(n, d);
    match kind {
        ScenarioKind::Sbm5 => {
            for i in 0..n {
                let v = SBM5_BLOCKS[block_of(spec.seed, i, 5)];
                x0[(i, 0)] = v[0];
                x0[(i, 1)] = v[1];
            }
        }
        ScenarioKind::Dcsbm2 => {
            let blocks = dcsbm2_blocks();
            for i in 0..n {
                let v = blocks[block_of(spec.seed, i, 2)];
                let theta = dcsbm_weight(spec.seed, i);
                x0[(i, 0)] = theta * v[0];
                x0[(i, 1)] = theta * v[1];
            }
        }
        ScenarioKind::Curve2d => {
            for i in 0..n {
                let t = (i + 1) as f64 / n as f64;
                x0[(i, 0)] = 0.15 * math::sin(PI * t) + 0.6;
                x0[(i, 1)] = 0.15 * math::cos(PI * t) + 0.6;
            }
        }
        ScenarioKind::Curve3d => {
            for i in 0..n {
                let t = (i + 1) as f64 / n as f64;
                x0[(i, 0)] = 0.15 * math::sin(2.0 * PI * t) + 0.6;
                x0[(i, 1)] = 0.15 * math::cos(2.0 * PI * t) + 0.6;
                x0[(i, 2)] = 0.15 * math::cos(4.0 * PI * t);
            }
        }
    }
    LatentConfig::new(x0, kind.signature(), 1.0)
}

/// `P = rho X0 I_{p,q} X0'`.
pub fn edge_probability_matrix(config: &LatentConfig) -> DMatrix<f64> {
    let n = config.n();
    let mut p = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = config.probability(i, j);
            p[(i, j)] = v;
            p[(j, i)] = v;
        }
    }
    p
}

/// How the diagonal of a sampled adjacency matrix is produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Diagonal {
    /// `A_ii ~ Bernoulli(P_ii)`, as in the model definition.
    #[default]
    Sampled,
    /// `A_ii = 0` (no self-loops). Off-diagonal entries are identical to the
    /// sampled variant for the same seed.
    Zero,
}

/// Draws `A ~ GRDPG(X0)`: the upper triangle including the diagonal is
/// sampled independently and mirrored.
pub fn sample_grdpg(config: &LatentConfig, seed: u64) -> Result<Graph> {
    sample_grdpg_with(config, seed, Diagonal::Sampled)
}

pub fn sample_grdpg_with(config: &LatentConfig, seed: u64, diagonal: Diagonal) -> Result<Graph> {
    let n = config.n();
    let mut g = Graph::empty(n);
    for i in 0..n {
        let mut rng = substream(seed, &[tag::ADJACENCY, i as u64]);
        for j in i..n {
            let p = config.probability(i, j);
            if !(-PROB_SLACK..=1.0 + PROB_SLACK).contains(&p) {
                return Err(Error::ProbabilityOutOfRange { i, j, value: p });
            }
            let u: f64 = rng.random();
            if u < p && (i != j || diagonal == Diagonal::Sampled) {
                g.set(i, j);
            }
        }
    }
    Ok(g)
}

/// Mean of the upper triangle (diagonal included) of `P`; the expected edge
/// density of [`sample_grdpg`].
pub fn mean_edge_probability(config: &LatentConfig) -> f64 {
    let n = config.n();
    let mut s = 0.0;
    for i in 0..n {
        for j in i..n {
            s += config.probability(i, j);
        }
    }
    s / (n * (n + 1) / 2) as f64
}
