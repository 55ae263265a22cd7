//! The Jaillet-Lu linear program.
//!
//! The non-linear family `Σ_i max{2 x_ij - λ_i, 0} ≤ 1 - ln 2` is linearised
//! with one auxiliary variable `z_ij ≥ max{2 x_ij - λ_i, 0}` per edge.

use minilp::{ComparisonOp, OptimizationDirection, Problem};
use serde::Serialize;

use crate::instance::{FractionalSolution, Graph};
use crate::{y_star, Error, Result};

/// Default tolerance for LP optimality and feasibility residuals.
pub const LP_TOL: f64 = 1e-7;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Var {
    /// `x_e`
    X(usize),
    /// `z_e`
    Z(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    /// `Σ_j x_ij ≤ λ_i`
    OnlineCapacity,
    /// `Σ_i x_ij ≤ 1`
    OfflineCapacity,
    /// `2 x_ij - z_ij ≤ λ_i`
    AuxLower,
    /// `-z_ij ≤ 0`
    AuxNonnegative,
    /// `Σ_i z_ij ≤ 1 - ln 2`
    TwoChoiceBudget,
}

/// `Σ coef · var ≤ rhs`
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Row {
    pub family: Family,
    pub terms: Vec<(Var, f64)>,
    pub rhs: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct JlLinearProgram {
    /// Objective coefficient `w_e` of each `x_e`; `z` carries no weight.
    pub objective: Vec<f64>,
    /// Upper bound of each `x_e` (`λ_i`).
    pub x_upper: Vec<f64>,
    /// Upper bound of each `z_e` (`1 - ln 2`).
    pub z_upper: Vec<f64>,
    pub rows: Vec<Row>,
}

impl JlLinearProgram {
    pub fn num_x(&self) -> usize {
        self.objective.len()
    }

    pub fn num_z(&self) -> usize {
        self.z_upper.len()
    }

    pub fn rows_of(&self, family: Family) -> impl Iterator<Item = &Row> {
        self.rows.iter().filter(move |r| r.family == family)
    }
}

pub fn build_jl_lp(graph: &Graph) -> JlLinearProgram {
    let budget = y_star();
    let mut rows = Vec::new();
    for i in 0..graph.num_online() {
        rows.push(Row {
            family: Family::OnlineCapacity,
            terms: graph.neighbors(i).iter().map(|&(_, e)| (Var::X(e), 1.0)).collect(),
            rhs: graph.rate(i),
        });
    }
    for j in 0..graph.num_offline() {
        rows.push(Row {
            family: Family::OfflineCapacity,
            terms: graph.incident(j).map(|e| (Var::X(e), 1.0)).collect(),
            rhs: 1.0,
        });
    }
    for (e, edge) in graph.edges().iter().enumerate() {
        rows.push(Row {
            family: Family::AuxLower,
            terms: vec![(Var::X(e), 2.0), (Var::Z(e), -1.0)],
            rhs: graph.rate(edge.online),
        });
        rows.push(Row {
            family: Family::AuxNonnegative,
            terms: vec![(Var::Z(e), -1.0)],
            rhs: 0.0,
        });
    }
    for j in 0..graph.num_offline() {
        rows.push(Row {
            family: Family::TwoChoiceBudget,
            terms: graph.incident(j).map(|e| (Var::Z(e), 1.0)).collect(),
            rhs: budget,
        });
    }
    JlLinearProgram {
        objective: graph.edges().iter().map(|e| e.weight).collect(),
        x_upper: graph.edges().iter().map(|e| graph.rate(e.online)).collect(),
        z_upper: vec![budget; graph.num_edges()],
        rows,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LpSolution {
    pub x: FractionalSolution,
    pub objective: f64,
}

pub fn solve_jl_lp(graph: &Graph, lp: &JlLinearProgram, tol: f64) -> Result<LpSolution> {
    if lp.num_x() != graph.num_edges() {
        return Err(Error::Lp(format!(
            "program has {} x-variables, graph has {} edges",
            lp.num_x(),
            graph.num_edges()
        )));
    }
    if lp.num_x() == 0 {
        return Ok(LpSolution { x: FractionalSolution::zeros(graph), objective: 0.0 });
    }
    let mut problem = Problem::new(OptimizationDirection::Maximize);
    let xs: Vec<_> = lp
        .objective
        .iter()
        .zip(&lp.x_upper)
        .map(|(&w, &ub)| problem.add_var(w, (0.0, ub)))
        .collect();
    let zs: Vec<_> = lp.z_upper.iter().map(|&ub| problem.add_var(0.0, (0.0, ub))).collect();
    for row in lp.rows.iter().filter(|r| !r.terms.is_empty()) {
        let terms: Vec<_> = row
            .terms
            .iter()
            .map(|&(v, c)| match v {
                Var::X(e) => (xs[e], c),
                Var::Z(e) => (zs[e], c),
            })
            .collect();
        problem.add_constraint(terms.as_slice(), ComparisonOp::Le, row.rhs);
    }
    let solution = problem.solve().map_err(|e| Error::Lp(e.to_string()))?;
    // clip solver noise below zero
    let values = xs.iter().map(|&v| solution[v].max(0.0)).collect();
    let x = FractionalSolution::from_edge_values(graph, values)?;
    let report = check_feasibility(graph, &x, tol);
    if !report.ok {
        return Err(Error::Lp(format!("solver returned an infeasible point: {report:?}")));
    }
    let objective = x.objective(graph);
    Ok(LpSolution { x, objective })
}

/// Convenience: build and solve in one go.
pub fn solve_instance(graph: &Graph, tol: f64) -> Result<LpSolution> {
    solve_jl_lp(graph, &build_jl_lp(graph), tol)
}

/// Largest violation in each constraint family of the original program.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FeasibilityReport {
    /// `max(-x_ij)`
    pub nonnegativity: f64,
    /// `max_i (x_i - λ_i)`
    pub online_capacity: f64,
    /// `max_j (x_j - 1)`
    pub offline_capacity: f64,
    /// `max_j (Σ_i max{2 x_ij - λ_i, 0} - (1 - ln 2))`
    pub two_choice_budget: f64,
    pub tol: f64,
    pub ok: bool,
}

pub fn check_feasibility(graph: &Graph, x: &FractionalSolution, tol: f64) -> FeasibilityReport {
    let nonnegativity = x.values().iter().map(|v| -v).fold(f64::NEG_INFINITY, f64::max);
    let online_capacity = (0..graph.num_online())
        .map(|i| x.online_load(graph, i) - graph.rate(i))
        .fold(f64::NEG_INFINITY, f64::max);
    let offline_capacity = (0..graph.num_offline())
        .map(|j| x.offline_load(graph, j) - 1.0)
        .fold(f64::NEG_INFINITY, f64::max);
    let two_choice_budget = (0..graph.num_offline())
        .map(|j| {
            graph
                .incident(j)
                .map(|e| (2.0 * x.get(e) - graph.rate(graph.edge(e).online)).max(0.0))
                .sum::<f64>()
                - y_star()
        })
        .fold(f64::NEG_INFINITY, f64::max);
    let worst = [nonnegativity, online_capacity, offline_capacity, two_choice_budget]
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max);
    FeasibilityReport {
        nonnegativity: nonnegativity.max(0.0),
        online_capacity: online_capacity.max(0.0),
        offline_capacity: offline_capacity.max(0.0),
        two_choice_budget: two_choice_budget.max(0.0),
        tol,
        ok: worst <= tol,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{Instance, OnlineSpec, WeightSpec};

    fn graph(types: &[(&str, f64, &[&str], f64)], offline: &[&str]) -> Graph {
        let mut inst = Instance {
            offline: offline.iter().map(|s| s.to_string()).collect(),
            ..Default::default()
        };
        for &(id, rate, nbrs, w) in types {
            inst.online.push(OnlineSpec {
                id: id.into(),
                rate,
                neighbors: nbrs.iter().map(|s| s.to_string()).collect(),
            });
            for j in nbrs {
                inst.weights.push(WeightSpec { i: id.into(), j: j.to_string(), w });
            }
        }
        Graph::build(&inst).unwrap()
    }

    #[test]
    fn single_edge_counts() {
        let g = graph(&[("i", 1.0, &["j"], 1.0)], &["j"]);
        let lp = build_jl_lp(&g);
        assert_eq!((lp.num_x(), lp.num_z(), lp.rows.len()), (1, 1, 5));
    }

    #[test]
    fn empty_graph() {
        let g = Graph::build(&Instance::default()).unwrap();
        let lp = build_jl_lp(&g);
        assert!(lp.rows.is_empty());
        let sol = solve_jl_lp(&g, &lp, LP_TOL).unwrap();
        assert_eq!(sol.objective, 0.0);
    }

    #[test]
    fn shared_vertex_counts() {
        let g = graph(&[("a", 1.0, &["j"], 1.0), ("b", 1.0, &["j"], 1.0)], &["j"]);
        let lp = build_jl_lp(&g);
        assert_eq!(lp.num_x(), 2);
        assert_eq!(lp.rows_of(Family::OfflineCapacity).count(), 1);
        assert_eq!(lp.rows_of(Family::TwoChoiceBudget).count(), 1);
        assert_eq!(lp.rows.len(), 2 + 1 + 4 + 1);
    }

    #[test]
    fn single_edge_optimum() {
        let g = graph(&[("i", 1.0, &["j"], 1.0)], &["j"]);
        let sol = solve_instance(&g, LP_TOL).unwrap();
        let expected = (2.0 - std::f64::consts::LN_2) / 2.0;
        assert!((sol.x.get(0) - expected).abs() < 1e-6);
        assert!((sol.objective - expected).abs() < 1e-6);
    }

    #[test]
    fn zero_weights() {
        let g = graph(&[("i", 1.0, &["j", "k"], 0.0)], &["j", "k"]);
        let sol = solve_instance(&g, LP_TOL).unwrap();
        assert_eq!(sol.objective, 0.0);
        assert!(check_feasibility(&g, &sol.x, LP_TOL).ok);
    }

    #[test]
    fn feasibility_report() {
        let g = graph(&[("i", 1.0, &["j"], 1.0)], &["j"]);
        assert!(check_feasibility(&g, &FractionalSolution::zeros(&g), LP_TOL).ok);
        let x = FractionalSolution::from_edge_values(&g, vec![0.7]).unwrap();
        let rep = check_feasibility(&g, &x, LP_TOL);
        assert!(!rep.ok);
        assert!((rep.two_choice_budget - (0.4 - y_star())).abs() < 1e-12);
        assert_eq!(rep.online_capacity, 0.0);
    }
}
