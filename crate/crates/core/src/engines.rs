//! Matching engines.
//!
//! Engines are pure functions of the instance, the activation function and a
//! time-sorted event list; every random choice is read from the events.
//! Suggested Matching, Two-Choice and MSM are ESM with `f ≡ 1`, `f ≡ 2` and
//! the three-stage step function, except that Suggested Matching also has a
//! standalone engine for general instances.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::arrivals::{designate_with, ArrivalEvent, Designation};
use crate::instance::{FractionalSolution, Graph, KernelInstance, OnlineClass};
use crate::ratiocalc::PiecewiseConstantF;
use crate::{Error, Result, TOL};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MatchRecord {
    /// Index into the event list.
    pub event: usize,
    pub edge: usize,
    pub online: usize,
    pub offline: usize,
    pub time: f64,
}

/// Outcome of one run: which edges were matched and when.
#[derive(Clone, Debug, PartialEq)]
pub struct Matching {
    records: Vec<MatchRecord>,
    matched_at: Vec<Option<f64>>,
    edge_matched: Vec<bool>,
}

impl Matching {
    pub fn empty(graph: &Graph) -> Self {
        Matching {
            records: Vec::new(),
            matched_at: vec![None; graph.num_offline()],
            edge_matched: vec![false; graph.num_edges()],
        }
    }

    pub fn records(&self) -> &[MatchRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn is_free(&self, j: usize) -> bool {
        self.matched_at[j].is_none()
    }

    /// Time at which `j` was matched, if ever.
    pub fn matched_at(&self, j: usize) -> Option<f64> {
        self.matched_at[j]
    }

    pub fn matched_times(&self) -> &[Option<f64>] {
        &self.matched_at
    }

    /// `M_e`
    pub fn edge_matched(&self, e: usize) -> bool {
        self.edge_matched[e]
    }

    /// `U_j(t)`: `j` is still free just before the events at time `t` run.
    pub fn unmatched_at(&self, j: usize, t: f64) -> bool {
        self.matched_at[j].is_none_or(|m| m >= t)
    }

    /// Weight of the matching.
    pub fn weight(&self, graph: &Graph) -> f64 {
        self.records.iter().map(|r| graph.edge(r.edge).weight).sum()
    }

    fn push(&mut self, graph: &Graph, event: usize, online: usize, offline: usize, time: f64) {
        let edge = graph
            .edge_index(online, offline)
            .expect("engines only propose along edges");
        self.matched_at[offline] = Some(time);
        self.edge_matched[edge] = true;
        self.records.push(MatchRecord { event, edge, online, offline, time });
    }

    /// Checks the structural invariants of a matching against its inputs.
    pub fn validate(&self, graph: &Graph, events: &[ArrivalEvent]) -> std::result::Result<(), String> {
        let mut seen_offline = vec![false; graph.num_offline()];
        let mut seen_event = vec![false; events.len()];
        let mut last_time = f64::NEG_INFINITY;
        let mut last_event = None;
        for r in &self.records {
            let edge = graph.edges().get(r.edge).ok_or_else(|| format!("unknown edge #{}", r.edge))?;
            if edge.online != r.online || edge.offline != r.offline {
                return Err(format!("record {r:?} disagrees with its edge"));
            }
            let ev = events.get(r.event).ok_or_else(|| format!("unknown event #{}", r.event))?;
            if ev.online != r.online || ev.time != r.time {
                return Err(format!("record {r:?} disagrees with its event"));
            }
            if std::mem::replace(&mut seen_offline[r.offline], true) {
                return Err(format!("offline `{}` matched twice", graph.offline_id(r.offline)));
            }
            if std::mem::replace(&mut seen_event[r.event], true) {
                return Err(format!("event #{} matched twice", r.event));
            }
            if r.time < last_time || last_event.is_some_and(|e| r.event <= e) {
                return Err("records out of event order".into());
            }
            last_time = r.time;
            last_event = Some(r.event);
        }
        for (j, &seen) in seen_offline.iter().enumerate() {
            if seen != self.matched_at[j].is_some() {
                return Err(format!("matched_at of `{}` is stale", graph.offline_id(j)));
            }
        }
        let flagged = self.edge_matched.iter().filter(|&&m| m).count();
        if flagged != self.records.len() {
            return Err("edge indicators disagree with records".into());
        }
        Ok(())
    }
}

fn check_types(graph: &Graph, events: &[ArrivalEvent]) -> Result<()> {
    match events.iter().find(|e| e.online >= graph.num_online()) {
        Some(e) => Err(Error::UnknownType(e.online)),
        None => Ok(()),
    }
}

fn first_free(m: &Matching, choices: &[Option<usize>]) -> Option<usize> {
    choices.iter().flatten().copied().find(|&j| m.is_free(j))
}

/// Evolving Suggested Matching, proposing directly from `(u, r1, r2)`.
pub fn run_esm(kernel: &KernelInstance, f: &PiecewiseConstantF, events: &[ArrivalEvent]) -> Result<Matching> {
    let graph = kernel.graph();
    check_types(graph, events)?;
    let mut m = Matching::empty(graph);
    for (k, ev) in events.iter().enumerate() {
        let target = match *kernel.class(ev.online) {
            OnlineClass::First { offline, .. } => first_free(&m, &[Some(offline)]),
            OnlineClass::Second { neighbors } => {
                let level = f.eval(ev.time);
                let u = ev.first_choice();
                let (j1, j2) = (neighbors[u].0, neighbors[1 - u].0);
                if ev.r1 > level {
                    None
                } else if m.is_free(j1) {
                    Some(j1)
                } else if ev.r2 <= level - 1.0 && m.is_free(j2) {
                    Some(j2)
                } else {
                    None
                }
            }
        };
        if let Some(j) = target {
            m.push(graph, k, ev.online, j, ev.time);
        }
    }
    Ok(m)
}

/// Extended type of each event; first-class events map to `FirstOnly`.
pub fn designations(
    kernel: &KernelInstance,
    f: &PiecewiseConstantF,
    events: &[ArrivalEvent],
) -> Result<Vec<Designation>> {
    check_types(kernel.graph(), events)?;
    Ok(events
        .iter()
        .map(|ev| match *kernel.class(ev.online) {
            OnlineClass::First { offline, .. } => Designation::FirstOnly(offline),
            OnlineClass::Second { neighbors } => {
                designate_with([neighbors[0].0, neighbors[1].0], ev, f.eval(ev.time))
            }
        })
        .collect())
}

fn run_designated(
    kernel: &KernelInstance,
    events: &[ArrivalEvent],
    designations: &[Designation],
    skip: impl Fn(&ArrivalEvent, &Designation) -> bool,
) -> Matching {
    let graph = kernel.graph();
    let mut m = Matching::empty(graph);
    for (k, (ev, d)) in events.iter().zip(designations).enumerate() {
        if skip(ev, d) {
            continue;
        }
        if let Some(j) = first_free(&m, &[d.first(), d.second()]) {
            m.push(graph, k, ev.online, j, ev.time);
        }
    }
    m
}

/// ESM driven purely by extended-type designations.
pub fn run_esm_extended(
    kernel: &KernelInstance,
    f: &PiecewiseConstantF,
    events: &[ArrivalEvent],
) -> Result<Matching> {
    let d = designations(kernel, f, events)?;
    Ok(run_designated(kernel, events, &d, |_, _| false))
}

/// ESM with every key-type arrival of `key` before time `x` removed.
///
/// Key types of `key` are its first-class neighbours and the extended
/// second-class types naming `key` as first or second choice.
pub fn run_with_key_filter(
    kernel: &KernelInstance,
    f: &PiecewiseConstantF,
    events: &[ArrivalEvent],
    key: usize,
    x: f64,
) -> Result<Matching> {
    if key >= kernel.graph().num_offline() {
        return Err(Error::UnknownVertex(format!("#{key}")));
    }
    let d = designations(kernel, f, events)?;
    Ok(run_designated(kernel, events, &d, |ev, d| {
        ev.time < x && (d.first() == Some(key) || d.second() == Some(key))
    }))
}

/// Suggested Matching on a general instance: each arrival of type `i`
/// proposes to neighbour `j` with probability `x_ij / λ_i`, selected by the
/// event's selector draw against the cumulative `x_ij / λ_i` in
/// neighbour-list order.
pub fn run_suggested(graph: &Graph, x: &FractionalSolution, events: &[ArrivalEvent]) -> Result<Matching> {
    check_types(graph, events)?;
    for i in 0..graph.num_online() {
        let load = x.online_load(graph, i);
        if load > graph.rate(i) + TOL {
            return Err(Error::InvalidSolution(format!(
                "x_i = {load} exceeds λ_i = {} for `{}`",
                graph.rate(i),
                graph.online_id(i)
            )));
        }
    }
    let mut m = Matching::empty(graph);
    for (k, ev) in events.iter().enumerate() {
        let target = ev.selector * graph.rate(ev.online);
        let mut acc = 0.0;
        for &(j, e) in graph.neighbors(ev.online) {
            acc += x.get(e);
            if target < acc {
                if m.is_free(j) {
                    m.push(graph, k, ev.online, j, ev.time);
                }
                break;
            }
        }
    }
    Ok(m)
}

/// Engines selectable from the command line.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EngineKind {
    Esm,
    Sm,
    TwoChoice,
    Msm,
}

impl EngineKind {
    pub const ALL: [EngineKind; 4] = [EngineKind::Esm, EngineKind::Sm, EngineKind::TwoChoice, EngineKind::Msm];

    pub fn name(self) -> &'static str {
        match self {
            EngineKind::Esm => "esm",
            EngineKind::Sm => "sm",
            EngineKind::TwoChoice => "two-choice",
            EngineKind::Msm => "msm",
        }
    }

    /// The activation function the engine runs with, if it fixes one.
    pub fn fixed_activation(self) -> Option<PiecewiseConstantF> {
        match self {
            EngineKind::Esm | EngineKind::Sm => None,
            EngineKind::TwoChoice => Some(PiecewiseConstantF::constant(2.0).expect("valid level")),
            EngineKind::Msm => Some(PiecewiseConstantF::msm()),
        }
    }
}

impl fmt::Display for EngineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EngineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EngineKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown engine `{s}`")))
    }
}

/// A ready-to-run engine with its inputs.
#[derive(Clone, Debug)]
pub enum Engine {
    Esm { kernel: KernelInstance, f: PiecewiseConstantF },
    EsmExtended { kernel: KernelInstance, f: PiecewiseConstantF },
    Suggested { graph: Graph, x: FractionalSolution, kernel: Option<KernelInstance> },
}

impl Engine {
    pub fn esm(kernel: KernelInstance, f: PiecewiseConstantF) -> Self {
        Engine::Esm { kernel, f }
    }

    pub fn suggested(graph: Graph, x: FractionalSolution) -> Self {
        Engine::Suggested { graph, x, kernel: None }
    }

    /// Builds a command-line engine on a kernel instance. `f` is required by
    /// `esm` and ignored by the others.
    pub fn from_kind(kind: EngineKind, kernel: KernelInstance, f: Option<PiecewiseConstantF>) -> Result<Self> {
        match kind {
            EngineKind::Sm => Ok(Engine::Suggested {
                graph: kernel.graph().clone(),
                x: kernel.solution().clone(),
                kernel: Some(kernel),
            }),
            EngineKind::Esm => {
                let f = f.ok_or_else(|| Error::InvalidConfig("engine `esm` needs an activation function".into()))?;
                Ok(Engine::Esm { kernel, f })
            }
            EngineKind::TwoChoice | EngineKind::Msm => Ok(Engine::Esm {
                kernel,
                f: kind.fixed_activation().expect("fixed"),
            }),
        }
    }

    pub fn graph(&self) -> &Graph {
        match self {
            Engine::Esm { kernel, .. } | Engine::EsmExtended { kernel, .. } => kernel.graph(),
            Engine::Suggested { graph, .. } => graph,
        }
    }

    pub fn solution(&self) -> &FractionalSolution {
        match self {
            Engine::Esm { kernel, .. } | Engine::EsmExtended { kernel, .. } => kernel.solution(),
            Engine::Suggested { x, .. } => x,
        }
    }

    pub fn kernel(&self) -> Option<&KernelInstance> {
        match self {
            Engine::Esm { kernel, .. } | Engine::EsmExtended { kernel, .. } => Some(kernel),
            Engine::Suggested { kernel, .. } => kernel.as_ref(),
        }
    }

    pub fn activation(&self) -> Option<&PiecewiseConstantF> {
        match self {
            Engine::Esm { f, .. } | Engine::EsmExtended { f, .. } => Some(f),
            Engine::Suggested { .. } => None,
        }
    }

    pub fn run(&self, events: &[ArrivalEvent]) -> Result<Matching> {
        match self {
            Engine::Esm { kernel, f } => run_esm(kernel, f, events),
            Engine::EsmExtended { kernel, f } => run_esm_extended(kernel, f, events),
            Engine::Suggested { graph, x, .. } => run_suggested(graph, x, events),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::Instance;

    fn kernel(json: &str) -> KernelInstance {
        let inst: Instance = serde_json::from_str(json).unwrap();
        KernelInstance::from_instance(&inst, TOL).unwrap()
    }

    fn pair() -> KernelInstance {
        kernel(
            r#"{"online":[{"id":"i","rate":2.0,"neighbors":["j1","j2"]}],
                "offline":["j1","j2"],
                "weights":[{"i":"i","j":"j1","w":1},{"i":"i","j":"j2","w":1}],
                "x":[{"i":"i","j":"j1","x":1.0},{"i":"i","j":"j2","x":1.0}]}"#,
        )
    }

    fn ev(time: f64, online: usize, selector: f64, r1: f64, r2: f64) -> ArrivalEvent {
        ArrivalEvent { time, online, seq: 0, selector, r1, r2 }
    }

    #[test]
    fn single_first_class_arrival_matches() {
        let k = kernel(
            r#"{"online":[{"id":"i","rate":0.25,"neighbors":["j"]},{"id":"s","rate":1.5,"neighbors":["j","k"]},
                          {"id":"t","rate":0.25,"neighbors":["k"]}],
                "offline":["j","k"],
                "weights":[{"i":"i","j":"j","w":1},{"i":"s","j":"j","w":1},{"i":"s","j":"k","w":1},
                           {"i":"t","j":"k","w":1}],
                "x":[{"i":"i","j":"j","x":0.25},{"i":"s","j":"j","x":0.75},{"i":"s","j":"k","x":0.75},
                     {"i":"t","j":"k","x":0.25}]}"#,
        );
        let f = PiecewiseConstantF::constant(0.0).unwrap();
        let events = [ev(0.4, 0, 0.9, 0.9, 0.9)];
        let m = run_esm(&k, &f, &events).unwrap();
        assert_eq!(m.len(), 1);
        assert_eq!(m.matched_at(0), Some(0.4));
        assert!(m.unmatched_at(0, 0.4) && !m.unmatched_at(0, 0.41));
    }

    #[test]
    fn zero_activation_discards_second_class() {
        let f = PiecewiseConstantF::constant(0.0).unwrap();
        let events = [ev(0.1, 0, 0.1, 0.2, 0.3), ev(0.5, 0, 0.7, 0.01, 0.0)];
        assert!(run_esm(&pair(), &f, &events).unwrap().is_empty());
    }

    #[test]
    fn two_choice_fills_both() {
        let k = pair();
        let f = PiecewiseConstantF::constant(2.0).unwrap();
        let events = [ev(0.2, 0, 0.1, 0.5, 0.5), ev(0.6, 0, 0.2, 0.5, 0.5)];
        let m = run_esm(&k, &f, &events).unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m.records()[1].offline, 1);
        m.validate(k.graph(), &events).unwrap();
        assert_eq!(m, run_esm_extended(&k, &f, &events).unwrap());
    }

    #[test]
    fn extended_second_choice() {
        let k = pair();
        let f = PiecewiseConstantF::constant(2.0).unwrap();
        let events = [ev(0.2, 0, 0.1, 0.5, 0.5), ev(0.6, 0, 0.3, 0.5, 0.5)];
        let d = designations(&k, &f, &events).unwrap();
        assert_eq!(d[1], Designation::Both(0, 1));
        let m = run_esm_extended(&k, &f, &events).unwrap();
        assert_eq!(m.records()[1].offline, 1);
    }

    #[test]
    fn key_filter_at_zero_is_plain_esm() {
        let k = pair();
        let f = PiecewiseConstantF::esm_650();
        let events = [ev(0.2, 0, 0.1, 0.1, 0.9), ev(0.8, 0, 0.6, 0.5, 0.1), ev(0.9, 0, 0.4, 0.5, 0.1)];
        assert_eq!(
            run_with_key_filter(&k, &f, &events, 0, 0.0).unwrap(),
            run_esm(&k, &f, &events).unwrap()
        );
        let filtered = run_with_key_filter(&k, &f, &events, 0, 1.0).unwrap();
        assert!(filtered.is_free(0));
    }

    #[test]
    fn suggested_rules() {
        let k = pair();
        let events = [ev(0.2, 0, 0.3, 0.0, 0.5), ev(0.4, 0, 0.1, 0.0, 0.5), ev(0.5, 0, 0.9, 0.0, 0.5)];
        let m = run_suggested(k.graph(), k.solution(), &events).unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m.matched_at(0), Some(0.2));
        assert_eq!(m.matched_at(1), Some(0.5));
        // f ≡ 1 ESM makes the same choices
        let f = PiecewiseConstantF::constant(1.0).unwrap();
        assert_eq!(m, run_esm(&k, &f, &events).unwrap());

        let zero = FractionalSolution::zeros(k.graph());
        assert!(run_suggested(k.graph(), &zero, &events).unwrap().is_empty());
        let over = FractionalSolution::from_edge_values(k.graph(), vec![1.5, 1.0]).unwrap();
        assert!(matches!(run_suggested(k.graph(), &over, &events), Err(Error::InvalidSolution(_))));
    }

    #[test]
    fn unknown_type_is_rejected() {
        let f = PiecewiseConstantF::constant(1.0).unwrap();
        let events = [ev(0.2, 3, 0.3, 0.0, 0.0)];
        assert!(matches!(run_esm(&pair(), &f, &events), Err(Error::UnknownType(3))));
    }

    #[test]
    fn engine_kind_round_trip() {
        for k in EngineKind::ALL {
            assert_eq!(k.name().parse::<EngineKind>().unwrap(), k);
        }
        assert!("greedy".parse::<EngineKind>().is_err());
    }
}
