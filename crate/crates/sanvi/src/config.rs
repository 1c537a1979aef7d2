//! Run configuration and its `key = value` file format.
//!
//! One setting per line, `#` starts a comment, lists are comma separated:
//!
//! ```text
//! command = simulate
//! scenario = sbm5
//! n = 1000, 3000
//! reps = 30
//! estimators = ase, ose, sanvi
//! seed = 7
//! ```
//!
//! Unset optional keys fall back to the estimator defaults.

use std::fmt::{self, Write as _};
use std::path::PathBuf;
use std::str::FromStr;

use sanvi_core::mcmc::{ChainSpec, Proposal};
use sanvi_core::vi::SanviOptions;
use sanvi_core::ScenarioKind;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Estimator {
    Ase,
    Ose,
    Be,
    Sanvi,
    Mesle,
}

impl Estimator {
    pub const ALL: [Estimator; 5] = [Self::Ase, Self::Ose, Self::Be, Self::Sanvi, Self::Mesle];

    pub fn name(&self) -> &'static str {
        match self {
            Self::Ase => "ase",
            Self::Ose => "ose",
            Self::Be => "be",
            Self::Sanvi => "sanvi",
            Self::Mesle => "mesle",
        }
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        let s = if s == "mcmc" { "be" } else { s.as_str() };
        Self::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown estimator `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Estimate,
    Cluster,
    Bench,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Simulate => "simulate",
            Self::Estimate => "estimate",
            Self::Cluster => "cluster",
            Self::Bench => "bench",
        }
    }
}

impl FromStr for Command {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [Self::Simulate, Self::Estimate, Self::Cluster, Self::Bench]
            .into_iter()
            .find(|c| c.name() == s.trim())
            .ok_or_else(|| Error::Config(format!("unknown command `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub scenario: ScenarioKind,
    /// Edge list for `estimate` and `cluster`.
    pub input: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub n: Vec<usize>,
    pub reps: usize,
    pub estimators: Vec<Estimator>,
    /// Embedding dimension; defaults to the scenario's, or 2 for real data.
    pub d: Option<usize>,
    pub seed: u64,
    pub out: PathBuf,
    /// Sample the adjacency diagonal instead of leaving it empty.
    pub self_loops: bool,
    pub clusters: usize,
    pub tau: Option<f64>,
    pub alpha0: Option<f64>,
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    pub batch: Option<usize>,
    pub max_iters: Option<usize>,
    pub chain_length: Option<usize>,
    pub thin: Option<usize>,
    pub burn_in: Option<usize>,
    pub target_accept: Option<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            command: Command::Simulate,
            scenario: ScenarioKind::Sbm5,
            input: None,
            labels: None,
            n: vec![1000],
            reps: 100,
            estimators: Estimator::ALL.to_vec(),
            d: None,
            seed: 1,
            out: PathBuf::from("out"),
            self_loops: false,
            clusters: 2,
            tau: None,
            alpha0: None,
            beta1: None,
            beta2: None,
            batch: None,
            max_iters: None,
            chain_length: None,
            thin: None,
            burn_in: None,
            target_accept: None,
        }
    }
}

fn parse_num<T: FromStr>(key: &str, v: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    v.trim().parse().map_err(|e| Error::Config(format!("{key} = `{v}`: {e}")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v.trim().to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(Error::Config(format!("{key} = `{v}` is not a boolean"))),
    }
}

fn join<T: fmt::Display>(xs: &[T]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(Error::Config("reps must be at least 1".into()));
        }
        if self.estimators.is_empty() {
            return Err(Error::Config("no estimators selected".into()));
        }
        if self.n.is_empty() || self.n.contains(&0) {
            return Err(Error::Config("n must be a nonempty list of positive sizes".into()));
        }
        if self.d == Some(0) {
            return Err(Error::Config("d must be positive".into()));
        }
        if self.clusters == 0 {
            return Err(Error::Config("clusters must be positive".into()));
        }
        if matches!(self.command, Command::Estimate | Command::Cluster) && self.input.is_none() {
            return Err(Error::Config(format!("`{}` needs an input edge list", self.command.name())));
        }
        self.sanvi_options(0).validate()?;
        self.chain_spec(0).validate()?;
        Ok(())
    }

    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        fn opt(v: &str) -> Option<&str> {
            (!v.is_empty() && v != "none").then_some(v)
        }
        match key.trim().replace('-', "_").as_str() {
            "command" => self.command = v.parse()?,
            "scenario" => self.scenario = v.parse()?,
            "input" => self.input = opt(v).map(PathBuf::from),
            "labels" => self.labels = opt(v).map(PathBuf::from),
            "n" => self.n = v.split(',').map(|x| parse_num("n", x)).collect::<Result<_>>()?,
            "reps" => self.reps = parse_num("reps", v)?,
            "estimators" => self.estimators = v.split(',').map(str::parse).collect::<Result<_>>()?,
            "d" => self.d = opt(v).map(|x| parse_num("d", x)).transpose()?,
            "seed" => self.seed = parse_num("seed", v)?,
            "out" => self.out = PathBuf::from(v),
            "self_loops" => self.self_loops = parse_bool("self_loops", v)?,
            "clusters" => self.clusters = parse_num("clusters", v)?,
            "tau" => self.tau = opt(v).map(|x| parse_num("tau", x)).transpose()?,
            "alpha0" => self.alpha0 = opt(v).map(|x| parse_num("alpha0", x)).transpose()?,
            "beta1" => self.beta1 = opt(v).map(|x| parse_num("beta1", x)).transpose()?,
            "beta2" => self.beta2 = opt(v).map(|x| parse_num("beta2", x)).transpose()?,
            "batch" => self.batch = opt(v).map(|x| parse_num("batch", x)).transpose()?,
            "max_iters" => self.max_iters = opt(v).map(|x| parse_num("max_iters", x)).transpose()?,
            "chain_length" => self.chain_length = opt(v).map(|x| parse_num("chain_length", x)).transpose()?,
            "thin" => self.thin = opt(v).map(|x| parse_num("thin", x)).transpose()?,
            "burn_in" => self.burn_in = opt(v).map(|x| parse_num("burn_in", x)).transpose()?,
            "target_accept" => self.target_accept = opt(v).map(|x| parse_num("target_accept", x)).transpose()?,
            other => return Err(Error::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    /// Applies every setting in a config file on top of `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (k, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse { line: k + 1, reason: format!("expected `key = value`, got `{line}`") })?;
            self.set(key, value).map_err(|e| Error::Parse { line: k + 1, reason: e.to_string() })?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut c = Self::default();
        c.apply_text(text)?;
        Ok(c)
    }

    /// Serializes every setting; `from_text(to_text())` reproduces `self`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let opt = |v: Option<String>| v.unwrap_or_else(|| "none".into());
        let path = |p: &Option<PathBuf>| opt(p.as_ref().map(|p| p.display().to_string()));
        let _ = writeln!(s, "command = {}", self.command.name());
        let _ = writeln!(s, "scenario = {}", self.scenario);
        let _ = writeln!(s, "input = {}", path(&self.input));
        let _ = writeln!(s, "labels = {}", path(&self.labels));
        let _ = writeln!(s, "n = {}", join(&self.n));
        let _ = writeln!(s, "reps = {}", self.reps);
        let _ = writeln!(s, "estimators = {}", join(&self.estimators));
        let _ = writeln!(s, "d = {}", opt(self.d.map(|x| x.to_string())));
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "out = {}", self.out.display());
        let _ = writeln!(s, "self_loops = {}", self.self_loops);
        let _ = writeln!(s, "clusters = {}", self.clusters);
        // `{:?}` on f64 prints the shortest string that parses back exactly
        let f = |x: Option<f64>| opt(x.map(|v| format!("{v:?}")));
        let u = |x: Option<usize>| opt(x.map(|v| v.to_string()));
        let _ = writeln!(s, "tau = {}", f(self.tau));
        let _ = writeln!(s, "alpha0 = {}", f(self.alpha0));
        let _ = writeln!(s, "beta1 = {}", f(self.beta1));
        let _ = writeln!(s, "beta2 = {}", f(self.beta2));
        let _ = writeln!(s, "batch = {}", u(self.batch));
        let _ = writeln!(s, "max_iters = {}", u(self.max_iters));
        let _ = writeln!(s, "chain_length = {}", u(self.chain_length));
        let _ = writeln!(s, "thin = {}", u(self.thin));
        let _ = writeln!(s, "burn_in = {}", u(self.burn_in));
        let _ = writeln!(s, "target_accept = {}", f(self.target_accept));
        s
    }

    pub fn sanvi_options(&self, seed: u64) -> SanviOptions {
        let mut o = SanviOptions { seed, tau: self.tau, ..SanviOptions::default() };
        if let Some(v) = self.alpha0 {
            o.alpha0 = v;
        }
        if let Some(v) = self.beta1 {
            o.beta1 = v;
        }
        if let Some(v) = self.beta2 {
            o.beta2 = v;
        }
        if let Some(v) = self.batch {
            o.batch = v;
        }
        if let Some(v) = self.max_iters {
            o.max_iters = v;
        }
        o
    }

    pub fn chain_spec(&self, seed: u64) -> ChainSpec {
        let mut c = ChainSpec { seed, tau: self.tau, ..ChainSpec::default() };
        if let Some(v) = self.chain_length {
            c.length = v;
        }
        if let Some(v) = self.thin {
            c.thin = v;
        }
        if let Some(v) = self.burn_in {
            c.burn_in = v;
        }
        if let Some(t) = self.target_accept {
            c.proposal = Proposal::Auto { target: t };
        }
        c
    }
}
