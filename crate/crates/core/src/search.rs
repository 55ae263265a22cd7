//! Coordinate ascent over discretised activation functions.
//!
//! Candidates are non-decreasing vectors of grid levels. A candidate is
//! feasible when `F(1) ≥ 1`, `cons1 ≤ 0` and `cons2 ≤ 0`; its objective is
//! `min{r1(y*), r2(y*)}`, and infeasible candidates score `-∞`.
//!
//! Each step scans the neighbourhood (one value moved one level and
//! re-sorted, a plateau moved one level, a breakpoint moved one interval)
//! and takes the best strictly improving move, first in generation order on
//! ties. Plain ascent on `min{r1, r2}` stalls once `r1 ≈ r2`, so the climb
//! runs through a soft-min schedule of increasing sharpness and finishes on
//! the exact minimum. The best feasible point visited is returned.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::ratiocalc::{self, check_all, PiecewiseConstantF, RatioReport, TOTAL_TOL};
use crate::rng::{Domain, StreamKey};
use crate::{y_star, Error, Result};

/// Minimum objective gain for a move to be accepted.
pub const MIN_IMPROVEMENT: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SearchConfig {
    pub m: usize,
    /// Candidate levels, sorted ascending, inside `[0, 2]`.
    pub levels: Vec<f64>,
    pub restarts: usize,
    pub max_iters: usize,
    pub seed: u64,
    /// Starting point of restart 0, replacing its random draw.
    pub init: Option<Vec<f64>>,
    /// Random draws per restart while looking for a feasible start.
    pub start_attempts: usize,
}

impl SearchConfig {
    pub fn new(m: usize, restarts: usize, seed: u64) -> Self {
        SearchConfig {
            m,
            levels: grid_levels(0.025),
            restarts,
            max_iters: 5_000,
            seed,
            init: None,
            start_attempts: 20_000,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::InvalidConfig("m must be at least 1".into()));
        }
        if self.restarts == 0 {
            return Err(Error::InvalidConfig("restarts must be at least 1".into()));
        }
        if self.levels.is_empty() || self.levels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidConfig("levels must be strictly increasing".into()));
        }
        if self.levels.iter().any(|l| !(0.0..=2.0).contains(l)) {
            return Err(Error::InvalidConfig("levels must lie in [0, 2]".into()));
        }
        if let Some(init) = &self.init {
            if init.len() != self.m {
                return Err(Error::InvalidConfig(format!(
                    "initial f has {} values, expected m = {}",
                    init.len(),
                    self.m
                )));
            }
        }
        Ok(())
    }
}

/// `0, step, 2 step, ..., 2`.
pub fn grid_levels(step: f64) -> Vec<f64> {
    let n = (2.0 / step).round() as usize;
    (0..=n).map(|k| (k as f64 * step).min(2.0)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Evaluation {
    pub objective: f64,
    pub feasible: bool,
    pub total: f64,
    pub cons1: f64,
    pub cons2: f64,
    pub r1: f64,
    pub r2: f64,
}

impl Evaluation {
    fn score(&self) -> f64 {
        if self.feasible {
            self.objective
        } else {
            f64::NEG_INFINITY
        }
    }

    /// `-ln(e^{-s r1} + e^{-s r2}) / s`; `sharpness = ∞` gives the exact min.
    fn smooth_score(&self, sharpness: f64) -> f64 {
        if !self.feasible {
            return f64::NEG_INFINITY;
        }
        if sharpness.is_infinite() {
            return self.objective;
        }
        let lo = self.objective;
        let hi = self.r1.max(self.r2);
        lo - (-sharpness * (hi - lo)).exp().ln_1p() / sharpness
    }
}

/// Soft-min sharpness schedule, ending with the exact objective.
pub const SHARPNESS_SCHEDULE: [f64; 4] = [300.0, 3_000.0, 30_000.0, f64::INFINITY];

pub fn evaluate(f: &PiecewiseConstantF) -> Evaluation {
    let ys = y_star();
    let total = f.total();
    let cons1 = ratiocalc::cons1(f);
    let cons2 = ratiocalc::cons2(f);
    let r1 = ratiocalc::r1(f, ys);
    let r2 = ratiocalc::r2(f, ys);
    Evaluation {
        objective: r1.min(r2),
        feasible: total >= 1.0 - TOTAL_TOL && cons1 <= 0.0 && cons2 <= 0.0,
        total,
        cons1,
        cons2,
        r1,
        r2,
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RestartResult {
    pub restart: usize,
    pub start_feasible: bool,
    pub start_objective: Option<f64>,
    pub iterations: usize,
    pub values: Vec<f64>,
    pub evaluation: Evaluation,
    /// Best objective seen so far, after each accepted move, starting with
    /// the start point.
    #[serde(skip)]
    pub trajectory: Vec<f64>,
    #[serde(skip)]
    pub steps: Vec<Step>,
}

/// One accepted move.
#[derive(Clone, Copy, Debug)]
pub struct Step {
    pub sharpness: f64,
    /// Soft-min score at `sharpness`; increases strictly within a stage.
    pub score: f64,
    pub evaluation: Evaluation,
}

#[derive(Clone, Debug, Serialize)]
pub struct SearchOutcome {
    pub config: SearchConfig,
    /// Best feasible function found, with its full report.
    pub best: Option<(PiecewiseConstantF, RatioReport)>,
    /// When nothing feasible turned up: the restart whose end point came
    /// closest, for diagnostics.
    pub best_infeasible: Option<RestartResult>,
    pub restarts: Vec<RestartResult>,
}

struct Climber<'a> {
    levels: &'a [f64],
}

impl Climber<'_> {
    fn function(&self, idx: &[usize]) -> PiecewiseConstantF {
        PiecewiseConstantF::new(idx.iter().map(|&k| self.levels[k]).collect())
            .expect("sorted grid levels form a valid activation function")
    }

    fn random_start(&self, rng: &mut impl Rng, m: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..m).map(|_| rng.random_range(0..self.levels.len())).collect();
        idx.sort_unstable();
        idx
    }

    /// Neighbours of `idx`: single values moved one level, plateaus (runs of
    /// equal values) moved one level, and breakpoints moved one interval.
    fn neighbors(&self, idx: &[usize]) -> Vec<Vec<usize>> {
        let top = self.levels.len() - 1;
        let mut out = Vec::new();
        for pos in 0..idx.len() {
            if idx[pos] > 0 {
                let mut c = idx.to_vec();
                c[pos] -= 1;
                c.sort_unstable();
                out.push(c);
            }
            if idx[pos] < top {
                let mut c = idx.to_vec();
                c[pos] += 1;
                c.sort_unstable();
                out.push(c);
            }
        }
        let mut start = 0;
        while start < idx.len() {
            let end = start + idx[start..].iter().take_while(|&&v| v == idx[start]).count();
            let level = idx[start];
            if level > 0 && (start == 0 || idx[start - 1] < level) {
                let mut c = idx.to_vec();
                c[start..end].iter_mut().for_each(|v| *v -= 1);
                out.push(c);
            }
            if level < top && (end == idx.len() || idx[end] > level) {
                let mut c = idx.to_vec();
                c[start..end].iter_mut().for_each(|v| *v += 1);
                out.push(c);
            }
            if start > 0 {
                // breakpoint between start-1 and start
                let mut c = idx.to_vec();
                c[start] = idx[start - 1];
                out.push(c);
                let mut c = idx.to_vec();
                c[start - 1] = idx[start];
                out.push(c);
            }
            start = end;
        }
        out.retain(|c| c != idx);
        out
    }

    /// Best strictly improving neighbour of `idx`, if any. Ties keep the
    /// first candidate in generation order.
    fn best_move(
        &self,
        idx: &[usize],
        current: f64,
        sharpness: f64,
    ) -> Option<(Vec<usize>, Evaluation, f64)> {
        let mut best: Option<(Vec<usize>, Evaluation, f64)> = None;
        for cand in self.neighbors(idx) {
            let eval = evaluate(&self.function(&cand));
            let score = eval.smooth_score(sharpness);
            if score < current + MIN_IMPROVEMENT || !score.is_finite() {
                continue;
            }
            if best.as_ref().is_none_or(|(_, _, b)| score > *b) {
                best = Some((cand, eval, score));
            }
        }
        best
    }

    fn climb(&self, config: &SearchConfig, restart: usize) -> RestartResult {
        let key = StreamKey::new(config.seed, Domain::Search, 0);
        let mut rng = key.stream(restart as u64);

        let seeded = match (&config.init, restart) {
            (Some(init), 0) => Some(
                init.iter()
                    .map(|&v| nearest_level(self.levels, v))
                    .collect::<Vec<_>>(),
            ),
            _ => None,
        };
        let mut idx = match seeded {
            Some(mut idx) => {
                idx.sort_unstable();
                idx
            }
            None => {
                let mut start = self.random_start(&mut rng, config.m);
                for _ in 1..config.start_attempts {
                    if evaluate(&self.function(&start)).feasible {
                        break;
                    }
                    start = self.random_start(&mut rng, config.m);
                }
                start
            }
        };

        let mut eval = evaluate(&self.function(&idx));
        let start_feasible = eval.feasible;
        let mut incumbent = (idx.clone(), eval);
        let mut trajectory = vec![eval.score()];
        let mut steps = Vec::new();
        let mut iterations = 0;
        for sharpness in SHARPNESS_SCHEDULE {
            let mut current = eval.smooth_score(sharpness);
            while iterations < config.max_iters {
                let Some((next, next_eval, score)) = self.best_move(&idx, current, sharpness) else {
                    break;
                };
                idx = next;
                eval = next_eval;
                current = score;
                iterations += 1;
                steps.push(Step { sharpness, score, evaluation: eval });
                if eval.score() > incumbent.1.score() {
                    incumbent = (idx.clone(), eval);
                }
                trajectory.push(incumbent.1.score());
            }
        }
        RestartResult {
            restart,
            start_feasible,
            start_objective: start_feasible.then_some(trajectory[0]),
            iterations,
            values: incumbent.0.iter().map(|&k| self.levels[k]).collect(),
            evaluation: incumbent.1,
            trajectory,
            steps,
        }
    }
}

fn nearest_level(levels: &[f64], v: f64) -> usize {
    levels
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1 - v).abs().total_cmp(&(b.1 - v).abs()))
        .map(|(k, _)| k)
        .unwrap_or(0)
}

/// Runs every restart (in parallel) and returns the best feasible function.
pub fn optimize(config: &SearchConfig) -> Result<SearchOutcome> {
    config.validate()?;
    let climber = Climber { levels: &config.levels };
    let restarts: Vec<RestartResult> = (0..config.restarts)
        .into_par_iter()
        .map(|r| climber.climb(config, r))
        .collect();

    let best = restarts
        .iter()
        .filter(|r| r.evaluation.feasible)
        .fold(None::<&RestartResult>, |acc, r| match acc {
            Some(a) if a.evaluation.objective >= r.evaluation.objective => Some(a),
            _ => Some(r),
        })
        .map(|r| {
            let f = PiecewiseConstantF::new(r.values.clone()).expect("grid levels");
            let report = check_all(&f);
            (f, report)
        });
    let best_infeasible = if best.is_none() {
        restarts
            .iter()
            .min_by(|a, b| infeasibility(&a.evaluation).total_cmp(&infeasibility(&b.evaluation)))
            .cloned()
    } else {
        None
    };
    Ok(SearchOutcome { config: config.clone(), best, best_infeasible, restarts })
}

/// Total constraint violation, for ranking infeasible end points.
fn infeasibility(e: &Evaluation) -> f64 {
    (1.0 - e.total).max(0.0) + e.cons1.max(0.0) + e.cons2.max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_levels_cover_range() {
        let g = grid_levels(0.025);
        assert_eq!(g.len(), 81);
        assert_eq!(g[0], 0.0);
        assert_eq!(g[80], 2.0);
        assert!((g[16] - 0.4).abs() < 1e-15);
        assert!((g[48] - 1.2).abs() < 1e-15);
    }

    #[test]
    fn single_interval_picks_constant_one() {
        let mut cfg = SearchConfig::new(1, 4, 3);
        cfg.levels = vec![0.0, 1.0, 2.0];
        let out = optimize(&cfg).unwrap();
        let (f, report) = out.best.expect("feasible");

        // enumerate the two candidates with F(1) ≥ 1
        let one = check_all(&PiecewiseConstantF::constant(1.0).unwrap());
        let two = check_all(&PiecewiseConstantF::constant(2.0).unwrap());
        let winner = if one.certified.unwrap_or(f64::NEG_INFINITY)
            >= two.certified.unwrap_or(f64::NEG_INFINITY)
        {
            1.0
        } else {
            2.0
        };
        assert_eq!(f.values(), &[winner]);
        assert_eq!(report.certified, one.certified);
    }

    #[test]
    fn seeded_search_keeps_certificate() {
        let mut cfg = SearchConfig::new(40, 1, 1);
        cfg.init = Some(PiecewiseConstantF::esm_650().values().to_vec());
        let out = optimize(&cfg).unwrap();
        let r = &out.restarts[0];
        assert!(r.start_feasible);
        assert!(r.trajectory.windows(2).all(|w| w[1] >= w[0]));
        assert!(r.evaluation.objective >= r.start_objective.unwrap());
        let (_, report) = out.best.unwrap();
        assert!(report.certified.unwrap() >= 0.6503);
    }

    #[test]
    fn accepted_moves_are_feasible_and_ascending() {
        let out = optimize(&SearchConfig::new(10, 3, 9)).unwrap();
        for r in &out.restarts {
            assert!(r.steps.iter().all(|s| s.evaluation.feasible));
            for w in r.steps.windows(2) {
                if w[0].sharpness == w[1].sharpness {
                    assert!(w[1].score > w[0].score);
                }
            }
            assert!(r.trajectory.windows(2).all(|w| w[1] >= w[0]));
        }
    }

    #[test]
    fn deterministic_for_seed() {
        let a = optimize(&SearchConfig::new(8, 3, 5)).unwrap();
        let b = optimize(&SearchConfig::new(8, 3, 5)).unwrap();
        let va: Vec<_> = a.restarts.iter().map(|r| r.values.clone()).collect();
        let vb: Vec<_> = b.restarts.iter().map(|r| r.values.clone()).collect();
        assert_eq!(va, vb);
        assert_eq!(a.best.map(|b| b.0), b.best.map(|b| b.0));
    }

    #[test]
    fn rejects_bad_config() {
        assert!(optimize(&SearchConfig::new(0, 1, 0)).is_err());
        assert!(optimize(&SearchConfig::new(3, 0, 0)).is_err());
        let mut cfg = SearchConfig::new(3, 1, 0);
        cfg.levels = vec![1.0, 0.5];
        assert!(optimize(&cfg).is_err());
    }
}
