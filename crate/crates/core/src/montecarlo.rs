//! Monte Carlo estimates of matching and unmatched probabilities.
//!
//! Trials are identified by index; trial `k` reads the arrival substreams
//! at counter `k`, so any partition of a trial range into chunks yields the
//! same integer tallies. Estimates use the normal approximation with
//! standard error `sqrt(p (1 - p) / N)`.

use rayon::prelude::*;
use serde::Serialize;

use crate::arrivals::{ArrivalModel, ArrivalSampler};
use crate::engines::{Engine, Matching};
use crate::instance::{EdgeClass, Graph};
use crate::{Error, Result};

/// Default number of points on the time grid.
pub const DEFAULT_GRID_POINTS: usize = 101;

const CHUNK: u64 = 4096;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EstimateConfig {
    pub trials: u64,
    pub seed: u64,
    /// Index of the first trial; trials `first_trial .. first_trial + trials` run.
    pub first_trial: u64,
    /// Strictly increasing times in `[0, 1]` at which `U_j(t)` is tallied.
    pub grid: Vec<f64>,
    /// Offline pairs `(j, j')` whose joint unmatched probability is tallied.
    /// `None` means every competitor pair `j < j'` of a kernel instance.
    pub joint: Option<Vec<(usize, usize)>>,
    pub model: ArrivalModel,
}

impl EstimateConfig {
    pub fn new(trials: u64, seed: u64) -> Self {
        EstimateConfig {
            trials,
            seed,
            first_trial: 0,
            grid: uniform_grid(DEFAULT_GRID_POINTS),
            joint: None,
            model: ArrivalModel::Poisson,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::ZeroTrials);
        }
        if self.grid.iter().any(|t| !(0.0..=1.0).contains(t)) {
            return Err(Error::InvalidConfig("time grid must lie in [0, 1]".into()));
        }
        if self.grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidConfig("time grid must be strictly increasing".into()));
        }
        Ok(())
    }
}

/// `points` equispaced times from 0 to 1 inclusive.
pub fn uniform_grid(points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![1.0],
        n => (0..n).map(|k| k as f64 / (n - 1) as f64).collect(),
    }
}

/// Integer counts collected over a range of trials.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Tally {
    pub trials: u64,
    /// Per edge: trials in which the edge was matched.
    pub edge_matched: Vec<u64>,
    /// Per offline vertex and grid point: trials with `U_j(t) = 1`.
    pub unmatched: Vec<Vec<u64>>,
    /// Per joint pair and grid point: trials with both vertices unmatched.
    pub joint_unmatched: Vec<Vec<u64>>,
}

impl Tally {
    fn new(edges: usize, offline: usize, pairs: usize, grid: usize) -> Self {
        Tally {
            trials: 0,
            edge_matched: vec![0; edges],
            unmatched: vec![vec![0; grid]; offline],
            joint_unmatched: vec![vec![0; grid]; pairs],
        }
    }

    /// Adds `other` into `self`. Both must come from the same configuration.
    pub fn merge(mut self, other: &Tally) -> Tally {
        self.trials += other.trials;
        add(&mut self.edge_matched, &other.edge_matched);
        for (a, b) in self.unmatched.iter_mut().zip(&other.unmatched) {
            add(a, b);
        }
        for (a, b) in self.joint_unmatched.iter_mut().zip(&other.joint_unmatched) {
            add(a, b);
        }
        self
    }
}

fn add(a: &mut [u64], b: &[u64]) {
    for (x, y) in a.iter_mut().zip(b) {
        *x += y;
    }
}

/// Number of grid points `t` with `U(t) = 1` for a vertex matched at `m`.
fn unmatched_prefix(grid: &[f64], matched_at: Option<f64>) -> usize {
    match matched_at {
        None => grid.len(),
        Some(m) => grid.partition_point(|&t| t <= m),
    }
}

struct Accumulator<'a> {
    grid: &'a [f64],
    pairs: &'a [(usize, usize)],
    tally: Tally,
    /// Prefix-length histograms, folded into `tally` by `finish`.
    hist: Vec<Vec<u64>>,
    joint_hist: Vec<Vec<u64>>,
}

impl<'a> Accumulator<'a> {
    fn new(graph: &Graph, grid: &'a [f64], pairs: &'a [(usize, usize)]) -> Self {
        let g = grid.len();
        Accumulator {
            grid,
            pairs,
            tally: Tally::new(graph.num_edges(), graph.num_offline(), pairs.len(), g),
            hist: vec![vec![0; g + 1]; graph.num_offline()],
            joint_hist: vec![vec![0; g + 1]; pairs.len()],
        }
    }

    fn record(&mut self, m: &Matching) {
        self.tally.trials += 1;
        for r in m.records() {
            self.tally.edge_matched[r.edge] += 1;
        }
        let times = m.matched_times();
        for (h, &t) in self.hist.iter_mut().zip(times) {
            h[unmatched_prefix(self.grid, t)] += 1;
        }
        for (h, &(a, b)) in self.joint_hist.iter_mut().zip(self.pairs) {
            let both = match (times[a], times[b]) {
                (Some(x), Some(y)) => Some(x.min(y)),
                (x, y) => x.or(y),
            };
            h[unmatched_prefix(self.grid, both)] += 1;
        }
    }

    fn finish(mut self) -> Tally {
        fold(&self.hist, &mut self.tally.unmatched);
        fold(&self.joint_hist, &mut self.tally.joint_unmatched);
        self.tally
    }
}

/// Turns prefix-length histograms into per-grid-point counts.
fn fold(hist: &[Vec<u64>], out: &mut [Vec<u64>]) {
    for (h, counts) in hist.iter().zip(out) {
        let mut above = 0;
        for g in (0..counts.len()).rev() {
            above += h[g + 1];
            counts[g] = above;
        }
    }
}

fn joint_pairs(engine: &Engine, config: &EstimateConfig) -> Result<Vec<(usize, usize)>> {
    let n = engine.graph().num_offline();
    match &config.joint {
        Some(pairs) => {
            if let Some(&(a, b)) = pairs.iter().find(|&&(a, b)| a >= n || b >= n) {
                return Err(Error::UnknownVertex(format!("#{}", a.max(b))));
            }
            Ok(pairs.clone())
        }
        None => Ok(engine
            .kernel()
            .map(|k| {
                (0..n)
                    .flat_map(|j| k.competitors_of(j).iter().map(move |&(c, _)| (j, c)))
                    .filter(|&(a, b)| a < b)
                    .collect()
            })
            .unwrap_or_default()),
    }
}

/// Runs the configured trials and returns the raw counts.
pub fn tally(engine: &Engine, config: &EstimateConfig) -> Result<Tally> {
    config.validate()?;
    let pairs = joint_pairs(engine, config)?;
    let graph = engine.graph();
    let sampler = ArrivalSampler::new(graph, config.seed, config.model);
    let start = config.first_trial;
    let end = start
        .checked_add(config.trials)
        .ok_or_else(|| Error::InvalidConfig("trial range overflows".into()))?;
    let chunks: Vec<(u64, u64)> = (start..end)
        .step_by(CHUNK as usize)
        .map(|a| (a, (a + CHUNK).min(end)))
        .collect();
    let empty = Tally::new(graph.num_edges(), graph.num_offline(), pairs.len(), config.grid.len());
    chunks
        .into_par_iter()
        .map(|(a, b)| {
            let mut acc = Accumulator::new(graph, &config.grid, &pairs);
            let mut events = Vec::new();
            for trial in a..b {
                sampler.sample_into(trial, &mut events);
                acc.record(&engine.run(&events)?);
            }
            Ok(acc.finish())
        })
        .try_reduce(|| empty.clone(), |x, y| Ok(x.merge(&y)))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Proportion {
    pub p_hat: f64,
    pub se: f64,
}

impl Proportion {
    pub fn new(count: u64, trials: u64) -> Self {
        let n = trials as f64;
        let p_hat = count as f64 / n;
        Proportion { p_hat, se: (p_hat * (1.0 - p_hat) / n).sqrt() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EdgeEstimate {
    pub i: String,
    pub j: String,
    pub x: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub class: Option<EdgeClass>,
    pub p_hat: f64,
    pub se: f64,
    /// `p_hat / x`, undefined when `x = 0`.
    pub ratio: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VertexCurve {
    pub j: String,
    pub p_hat: Vec<f64>,
    pub se: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct JointCurve {
    pub j: String,
    pub k: String,
    pub p_hat: Vec<f64>,
    pub se: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EstimateReport {
    pub trials: u64,
    pub seed: u64,
    pub first_trial: u64,
    pub model: ArrivalModel,
    pub grid: Vec<f64>,
    pub edges: Vec<EdgeEstimate>,
    pub curves: Vec<VertexCurve>,
    pub joint: Vec<JointCurve>,
}

impl EstimateReport {
    pub fn edge(&self, i: &str, j: &str) -> Option<&EdgeEstimate> {
        self.edges.iter().find(|e| e.i == i && e.j == j)
    }

    pub fn curve(&self, j: &str) -> Option<&VertexCurve> {
        self.curves.iter().find(|c| c.j == j)
    }

    pub fn joint_curve(&self, j: &str, k: &str) -> Option<&JointCurve> {
        self.joint
            .iter()
            .find(|c| (c.j == j && c.k == k) || (c.j == k && c.k == j))
    }

    /// Index of the grid point equal to `t`, if any.
    pub fn grid_index(&self, t: f64) -> Option<usize> {
        self.grid.iter().position(|&g| g == t)
    }
}

/// Converts raw counts into estimates with standard errors.
pub fn summarize(engine: &Engine, config: &EstimateConfig, tally: &Tally) -> Result<EstimateReport> {
    let graph = engine.graph();
    let x = engine.solution();
    let pairs = joint_pairs(engine, config)?;
    let n = tally.trials;
    let edges = graph
        .edges()
        .iter()
        .enumerate()
        .map(|(e, edge)| {
            let p = Proportion::new(tally.edge_matched[e], n);
            let xe = x.get(e);
            EdgeEstimate {
                i: graph.online_id(edge.online).to_owned(),
                j: graph.offline_id(edge.offline).to_owned(),
                x: xe,
                class: engine.kernel().map(|k| k.edge_class(e)),
                p_hat: p.p_hat,
                se: p.se,
                ratio: (xe > 0.0).then(|| p.p_hat / xe),
            }
        })
        .collect();
    let curve = |counts: &[u64]| -> (Vec<f64>, Vec<f64>) {
        counts.iter().map(|&c| Proportion::new(c, n)).map(|p| (p.p_hat, p.se)).unzip()
    };
    let curves = tally
        .unmatched
        .iter()
        .enumerate()
        .map(|(j, counts)| {
            let (p_hat, se) = curve(counts);
            VertexCurve { j: graph.offline_id(j).to_owned(), p_hat, se }
        })
        .collect();
    let joint = pairs
        .iter()
        .zip(&tally.joint_unmatched)
        .map(|(&(a, b), counts)| {
            let (p_hat, se) = curve(counts);
            JointCurve {
                j: graph.offline_id(a).to_owned(),
                k: graph.offline_id(b).to_owned(),
                p_hat,
                se,
            }
        })
        .collect();
    Ok(EstimateReport {
        trials: n,
        seed: config.seed,
        first_trial: config.first_trial,
        model: config.model,
        grid: config.grid.clone(),
        edges,
        curves,
        joint,
    })
}

pub fn estimate(engine: &Engine, config: &EstimateConfig) -> Result<EstimateReport> {
    let t = tally(engine, config)?;
    summarize(engine, config, &t)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EdgeRatio {
    pub i: String,
    pub j: String,
    pub ratio: f64,
    /// Standard error of `ratio` (`se / x`).
    pub se: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RatioEstimate {
    /// Smallest `p_hat / x` over edges with `x > 0`.
    pub min: Option<EdgeRatio>,
    pub first_class: Option<EdgeRatio>,
    pub second_class: Option<EdgeRatio>,
}

/// Empirical competitive-ratio certificate: the argmin edge of `p_hat / x`.
pub fn ratio_report(report: &EstimateReport) -> RatioEstimate {
    let argmin = |pred: &dyn Fn(&EdgeEstimate) -> bool| {
        report
            .edges
            .iter()
            .filter(|e| pred(e))
            .filter_map(|e| e.ratio.map(|r| (e, r)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(e, r)| EdgeRatio { i: e.i.clone(), j: e.j.clone(), ratio: r, se: e.se / e.x })
    };
    RatioEstimate {
        min: argmin(&|_| true),
        first_class: argmin(&|e| e.class == Some(EdgeClass::First)),
        second_class: argmin(&|e| e.class == Some(EdgeClass::Second)),
    }
}
