//! Poisson arrival streams and extended online types.
//!
//! Each online type owns an independent homogeneous Poisson stream at its
//! full rate. Every arrival draws an exponential gap and then exactly three
//! uniforms `(u, r1, r2)`, used or not, so all engines read the same
//! randomness for the same `(seed, trial)`. Second-class arrivals are split
//! into extended types by [`designate`], which thins the full stream into
//! the independent inhomogeneous streams of `i(j, ⊥)`, `i(j, j')` and
//! `i(⊥, ⊥)`.

use std::fmt;

use rand::Rng;
use serde::Serialize;

use crate::instance::{Graph, KernelInstance, OnlineClass};
use crate::ratiocalc::PiecewiseConstantF;
use crate::rng::{Domain, StreamKey};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ArrivalEvent {
    pub time: f64,
    /// Online type index.
    pub online: usize,
    /// Position within the type's own stream.
    pub seq: usize,
    /// Uniform in `[0, 1)`. Its half picks the first choice of a second-class
    /// arrival; Suggested Matching uses it as the neighbour-selection draw.
    pub selector: f64,
    pub r1: f64,
    pub r2: f64,
}

impl ArrivalEvent {
    /// First-choice bit `u ∈ {0, 1}`: index into the neighbour list.
    pub fn first_choice(&self) -> usize {
        usize::from(self.selector >= 0.5)
    }
}

/// Extended type of a second-class arrival (offline indices).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Designation {
    /// `i(⊥, ⊥)`: no proposal.
    Discard,
    /// `i(j, ⊥)`: proposes to `j` only.
    FirstOnly(usize),
    /// `i(j, j')`: proposes to `j`, then to `j'` if `j` is taken.
    Both(usize, usize),
}

impl Designation {
    pub fn first(&self) -> Option<usize> {
        match *self {
            Designation::Discard => None,
            Designation::FirstOnly(j) | Designation::Both(j, _) => Some(j),
        }
    }

    pub fn second(&self) -> Option<usize> {
        match *self {
            Designation::Both(_, j) => Some(j),
            _ => None,
        }
    }

    pub fn display<'a>(&self, graph: &'a Graph, online: usize) -> DesignationLabel<'a> {
        DesignationLabel { graph, online, designation: *self }
    }
}

pub struct DesignationLabel<'a> {
    graph: &'a Graph,
    online: usize,
    designation: Designation,
}

impl fmt::Display for DesignationLabel<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = |j: Option<usize>| j.map_or("⊥", |j| self.graph.offline_id(j));
        write!(
            f,
            "{}({},{})",
            self.graph.online_id(self.online),
            name(self.designation.first()),
            name(self.designation.second())
        )
    }
}

/// Arrival times of a rate-`rate` Poisson process on `[0, 1)`.
pub fn sample_stream<R: Rng + ?Sized>(rate: f64, rng: &mut R) -> Vec<f64> {
    let mut times = Vec::new();
    if rate <= 0.0 {
        return times;
    }
    let mut t = 0.0;
    loop {
        t += exp_gap(rate, rng);
        if t >= 1.0 {
            return times;
        }
        times.push(t);
    }
}

fn exp_gap<R: Rng + ?Sized>(rate: f64, rng: &mut R) -> f64 {
    let u: f64 = rng.random();
    -(-u).ln_1p() / rate
}

fn push_type_stream<R: Rng + ?Sized>(online: usize, rate: f64, rng: &mut R, out: &mut Vec<ArrivalEvent>) {
    let mut t = 0.0;
    let mut seq = 0;
    loop {
        t += exp_gap(rate, rng);
        if t >= 1.0 {
            return;
        }
        let selector = rng.random();
        let r1 = rng.random();
        let r2 = rng.random();
        out.push(ArrivalEvent { time: t, online, seq, selector, r1, r2 });
        seq += 1;
    }
}

/// Orders events by time, breaking exact ties by `(type, seq)`.
pub fn sort_events(events: &mut [ArrivalEvent]) {
    events.sort_by(|a, b| {
        a.time
            .total_cmp(&b.time)
            .then(a.online.cmp(&b.online))
            .then(a.seq.cmp(&b.seq))
    });
}

/// How online arrivals are generated for a trial.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ArrivalModel {
    /// Independent Poisson streams on `[0, 1)`.
    #[default]
    Poisson,
    /// `round(Λ)` arrivals with types drawn `∝ λ_i`; arrival `k` (1-based)
    /// is stamped `k / Λ`. For side-by-side comparison only.
    FixedN,
}

/// Reproducible per-trial arrival sampler.
#[derive(Clone, Debug)]
pub struct ArrivalSampler {
    rates: Vec<f64>,
    keys: Vec<StreamKey>,
    fixed_key: StreamKey,
    model: ArrivalModel,
}

impl ArrivalSampler {
    pub fn new(graph: &Graph, seed: u64, model: ArrivalModel) -> Self {
        ArrivalSampler {
            rates: graph.rates().to_vec(),
            keys: (0..graph.num_online())
                .map(|i| StreamKey::new(seed, Domain::Arrivals, i as u64))
                .collect(),
            fixed_key: StreamKey::new(seed, Domain::FixedArrivals, 0),
            model,
        }
    }

    /// Time-sorted arrivals of trial `trial`.
    pub fn sample(&self, trial: u64) -> Vec<ArrivalEvent> {
        let mut events = Vec::new();
        self.sample_into(trial, &mut events);
        events
    }

    pub fn sample_into(&self, trial: u64, events: &mut Vec<ArrivalEvent>) {
        events.clear();
        match self.model {
            ArrivalModel::Poisson => {
                for (i, (&rate, key)) in self.rates.iter().zip(&self.keys).enumerate() {
                    let mut rng = key.stream(trial);
                    push_type_stream(i, rate, &mut rng, events);
                }
                sort_events(events);
            }
            ArrivalModel::FixedN => self.sample_fixed_n(trial, events),
        }
    }

    fn sample_fixed_n(&self, trial: u64, events: &mut Vec<ArrivalEvent>) {
        let total: f64 = self.rates.iter().sum();
        if total <= 0.0 {
            return;
        }
        let n = total.round() as usize;
        let mut rng = self.fixed_key.stream(trial);
        let mut seqs = vec![0usize; self.rates.len()];
        for k in 1..=n {
            let pick: f64 = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut online = self.rates.len() - 1;
            for (i, &r) in self.rates.iter().enumerate() {
                acc += r;
                if pick < acc {
                    online = i;
                    break;
                }
            }
            let selector = rng.random();
            let r1 = rng.random();
            let r2 = rng.random();
            events.push(ArrivalEvent {
                time: (k as f64 / total).min(1.0),
                online,
                seq: seqs[online],
                selector,
                r1,
                r2,
            });
            seqs[online] += 1;
        }
    }
}

/// Extended type of a second-class arrival with neighbours `neighbors`
/// (neighbour-list order) when the activation level is `level = f(t)`.
pub fn designate_with(neighbors: [usize; 2], event: &ArrivalEvent, level: f64) -> Designation {
    let u = event.first_choice();
    let (j1, j2) = (neighbors[u], neighbors[1 - u]);
    if event.r1 > level {
        Designation::Discard
    } else if event.r2 >= level - 1.0 {
        Designation::FirstOnly(j1)
    } else {
        Designation::Both(j1, j2)
    }
}

pub fn designate(
    kernel: &KernelInstance,
    event: &ArrivalEvent,
    f: &PiecewiseConstantF,
) -> Result<Designation> {
    if event.online >= kernel.graph().num_online() {
        return Err(Error::UnknownType(event.online));
    }
    match *kernel.class(event.online) {
        OnlineClass::First { .. } => Err(Error::FirstClassDesignation),
        OnlineClass::Second { neighbors } => Ok(designate_with(
            [neighbors[0].0, neighbors[1].0],
            event,
            f.eval(event.time),
        )),
    }
}

/// Rates of the extended types of one second-class type at a fixed time.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExtendedRates {
    pub online: usize,
    pub neighbors: [usize; 2],
    /// Rate of `i(j, ⊥)` for each neighbour `j`.
    pub first_only: [f64; 2],
    /// Rate of `i(j, j')` with `j` the given neighbour as first choice.
    pub both: [f64; 2],
    /// Rate of `i(⊥, ⊥)`.
    pub discard: f64,
    /// Rate of `i(j, *)` for each neighbour `j`.
    pub any_first: [f64; 2],
    /// Rate of `i(*, *)`, equal to `λ_i`.
    pub total: f64,
}

/// Extended-type rate table of every second-class type of `kernel` at `t`.
pub fn extended_rates(kernel: &KernelInstance, f: &PiecewiseConstantF, t: f64) -> Vec<ExtendedRates> {
    let level = f.eval(t);
    kernel
        .classes()
        .iter()
        .enumerate()
        .filter_map(|(i, class)| match *class {
            OnlineClass::Second { neighbors } => {
                let half = kernel.graph().rate(i) / 2.0;
                let propose = level.min(1.0);
                let first_only = half * propose * (2.0 - level).min(1.0);
                let both = half * propose * (level - 1.0).max(0.0);
                let any_first = half * propose;
                Some(ExtendedRates {
                    online: i,
                    neighbors: [neighbors[0].0, neighbors[1].0],
                    first_only: [first_only; 2],
                    both: [both; 2],
                    discard: 2.0 * half * (1.0 - propose),
                    any_first: [any_first; 2],
                    total: 2.0 * half,
                })
            }
            OnlineClass::First { .. } => None,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn event(selector: f64, r1: f64, r2: f64) -> ArrivalEvent {
        ArrivalEvent { time: 0.5, online: 0, seq: 0, selector, r1, r2 }
    }

    #[test]
    fn zero_rate_stream_is_empty() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(sample_stream(0.0, &mut rng).is_empty());
    }

    #[test]
    fn stream_is_increasing_inside_unit_interval() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let s = sample_stream(5.0, &mut rng);
            assert!(s.windows(2).all(|w| w[0] < w[1]));
            assert!(s.iter().all(|&t| (0.0..1.0).contains(&t)));
        }
    }

    #[test]
    fn designation_rules() {
        let nb = [10, 20];
        assert_eq!(designate_with(nb, &event(0.1, 0.3, 0.4), 0.0), Designation::Discard);
        assert_eq!(designate_with(nb, &event(0.1, 0.5, 0.9), 1.0), Designation::FirstOnly(10));
        assert_eq!(designate_with(nb, &event(0.7, 0.3, 0.3), 2.0), Designation::Both(20, 10));
        assert_eq!(designate_with(nb, &event(0.2, 0.3, 0.3), 2.0), Designation::Both(10, 20));
        // r2 on the boundary f - 1 stays single-choice
        assert_eq!(designate_with(nb, &event(0.2, 0.3, 0.2), 1.2), Designation::FirstOnly(10));
    }

    #[test]
    fn sampler_is_deterministic() {
        let inst: crate::Instance = serde_json::from_str(
            r#"{"online":[{"id":"a","rate":3.0,"neighbors":["j"]},{"id":"b","rate":2.0,"neighbors":["j"]}],
                "offline":["j"],
                "weights":[{"i":"a","j":"j","w":1},{"i":"b","j":"j","w":1}]}"#,
        )
        .unwrap();
        let g = Graph::build(&inst).unwrap();
        let s = ArrivalSampler::new(&g, 9, ArrivalModel::Poisson);
        let a = s.sample(4);
        assert_eq!(a, s.sample(4));
        assert_ne!(a, s.sample(5));
        assert!(a.windows(2).all(|w| w[0].time <= w[1].time));

        let fixed = ArrivalSampler::new(&g, 9, ArrivalModel::FixedN).sample(0);
        assert_eq!(fixed.len(), 5);
        assert_eq!(fixed.last().unwrap().time, 1.0);
        assert!((fixed[0].time - 0.2).abs() < 1e-15);
    }
}
