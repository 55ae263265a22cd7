//! Exact evaluation of the analytic ratio bounds for a piecewise constant
//! activation function.
//!
//! For an offline vertex with first-class load `y`:
//!
//! * `r1(y)` lower-bounds `Pr[M_ij = 1] / λ_i` for a first-class edge,
//! * `r2(y)` lower-bounds `Pr[M_ij = 1] / (λ_i / 2)` for a second-class edge.
//!
//! `cons1 ≤ 0` and `cons2 ≤ 0` certify that both are minimised over
//! `[0, 1 - ln 2]` at `y* = 1 - ln 2`, so `min{r1(y*), r2(y*)}` is a ratio
//! certificate whenever additionally `F(1) ≥ 1`.

mod activation;
mod integrals;

pub use activation::{ActivationFile, PiecewiseConstantF};
pub use integrals::{cons1, cons1_conservative, cons2, cons2_conservative, r1, r2};

use serde::Serialize;

use crate::{y_star, Error, Result};

/// Points of the `y` grid used to confirm that `r1`, `r2` bottom out at `y*`.
pub const Y_GRID_POINTS: usize = 64;

/// Slack allowed when comparing the grid minimum with the value at `y*`.
pub const GRID_MIN_TOL: f64 = 1e-9;

/// Slack on `F(1) ≥ 1`, covering rounding in `Σ f_k / m`.
pub const TOTAL_TOL: f64 = 1e-12;

/// `z(t) = e^{-F(1)} F(t*) + (1 - e^{-F(1)}) F(t) + e^{-F(1)} (t - t*)`.
pub fn z_of(f: &PiecewiseConstantF, t: f64) -> Result<f64> {
    let t_star = f.t_star();
    if t < t_star || t > 1.0 {
        return Err(Error::BeforeThreshold { t, t_star });
    }
    let decay = (-f.total()).exp();
    Ok(decay * f.cumulative_at_t_star()
        + (1.0 - decay) * f.cumulative(t)
        + decay * (t - t_star))
}

/// Lower bound on `Pr[U_j(t) = 1]` for a vertex with first-class load `y`.
///
/// Before `t*` this is `e^{-y t - (1-y) F(t)}` (tight); after `t*` it uses `z`,
/// which is valid only when `F(1) ≥ 1`.
pub fn unmatched_lower_bound(f: &PiecewiseConstantF, y: f64, t: f64) -> f64 {
    if t <= f.t_star() {
        (-y * t - (1.0 - y) * f.cumulative(t)).exp()
    } else {
        let z = z_of(f, t).expect("t > t*");
        (-y * t - (1.0 - y) * z).exp()
    }
}

/// The looser bound `e^{-y t - (1-y) F(t)}`, valid for every `t`.
pub fn unmatched_loose_bound(f: &PiecewiseConstantF, y: f64, t: f64) -> f64 {
    (-y * t - (1.0 - y) * f.cumulative(t)).exp()
}

/// Upper bound on `Pr[U_j(t) = 1, U_j'(t) = 1]` for `t > t*`.
pub fn joint_unmatched_upper_bound(f: &PiecewiseConstantF, y: f64, t: f64) -> f64 {
    let t_star = f.t_star();
    (-y * t_star - (2.0 - y) * f.cumulative_at_t_star() - 2.0 * (t - t_star)).exp()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RatioFlags {
    pub monotone: bool,
    pub total_at_least_one: bool,
    pub cons1_ok: bool,
    pub cons2_ok: bool,
    /// The 64-point `y` grid minimum of both `r1` and `r2` sits at `y*`.
    pub grid_min_at_y_star: bool,
}

impl RatioFlags {
    pub fn all(&self) -> bool {
        self.monotone
            && self.total_at_least_one
            && self.cons1_ok
            && self.cons2_ok
            && self.grid_min_at_y_star
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RatioReport {
    pub y_star: f64,
    pub r1: f64,
    pub r2: f64,
    pub min: f64,
    pub cons1: f64,
    pub cons2: f64,
    /// Endpoint-frozen upper bounds on `cons1`, `cons2`.
    pub cons1_conservative: f64,
    pub cons2_conservative: f64,
    pub total: f64,
    pub t_star: f64,
    pub f_t_star: f64,
    pub flags: RatioFlags,
    /// `min` when every flag holds.
    pub certified: Option<f64>,
}

/// Evaluates every quantity and validity flag for `f`.
pub fn check_all(f: &PiecewiseConstantF) -> RatioReport {
    let ys = y_star();
    let r1 = r1(f, ys);
    let r2 = r2(f, ys);
    let cons1 = cons1(f);
    let cons2 = cons2(f);
    let total = f.total();
    let grid_min_at_y_star = y_grid(Y_GRID_POINTS)
        .all(|y| integrals::r1(f, y) >= r1 - GRID_MIN_TOL && integrals::r2(f, y) >= r2 - GRID_MIN_TOL);
    let flags = RatioFlags {
        // enforced by construction of `PiecewiseConstantF`
        monotone: f.values().windows(2).all(|w| w[0] <= w[1]),
        total_at_least_one: total >= 1.0 - TOTAL_TOL,
        cons1_ok: cons1 <= 0.0,
        cons2_ok: cons2 <= 0.0,
        grid_min_at_y_star,
    };
    let min = r1.min(r2);
    RatioReport {
        y_star: ys,
        r1,
        r2,
        min,
        cons1,
        cons2,
        cons1_conservative: cons1_conservative(f),
        cons2_conservative: cons2_conservative(f),
        total,
        t_star: f.t_star(),
        f_t_star: f.cumulative_at_t_star(),
        flags,
        certified: flags.all().then_some(min),
    }
}

/// Checks monotonicity of raw values before evaluating them.
pub fn check_values(values: &[f64]) -> Result<RatioReport> {
    let f = PiecewiseConstantF::new(values.to_vec())?;
    Ok(check_all(&f))
}

/// `points` equispaced values of `y` over `[0, y*]`, both ends included.
pub fn y_grid(points: usize) -> impl Iterator<Item = f64> {
    let ys = y_star();
    let n = points.max(2);
    (0..n).map(move |k| if k + 1 == n { ys } else { ys * k as f64 / (n - 1) as f64 })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CurvePoint {
    pub y: f64,
    pub r1: f64,
    pub r2: f64,
}

/// `(y, r1(y), r2(y))` on a `points`-point grid over `[0, y*]`.
pub fn curve(f: &PiecewiseConstantF, points: usize) -> Vec<CurvePoint> {
    y_grid(points)
        .map(|y| CurvePoint { y, r1: r1(f, y), r2: r2(f, y) })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const ONE_MINUS_INV_E: f64 = 0.632_120_558_828_557_7;

    #[test]
    fn esm_650_certificate() {
        let rep = check_all(&PiecewiseConstantF::esm_650());
        assert!(rep.min >= 0.6503, "{rep:?}");
        assert!(rep.cons1 <= 0.0 && rep.cons2 <= 0.0);
        assert!(rep.cons1_conservative >= rep.cons1);
        assert!(rep.cons2_conservative >= rep.cons2);
        assert!(rep.cons1_conservative <= 0.0 && rep.cons2_conservative <= 0.0);
        assert!((rep.total - 1.24).abs() < 1e-12);
        assert!(rep.flags.all());
        assert_eq!(rep.certified, Some(rep.min));
    }

    #[test]
    fn z_at_threshold_equals_cumulative() {
        let f = PiecewiseConstantF::esm_650();
        let z = z_of(&f, f.t_star()).unwrap();
        assert!((z - f.cumulative_at_t_star()).abs() < 1e-15);
        assert!(matches!(z_of(&f, 0.5), Err(Error::BeforeThreshold { .. })));
    }

    #[test]
    fn z_at_one_for_esm_650() {
        // e^{-1.24} * 0.61 + (1 - e^{-1.24}) * 1.24 + e^{-1.24} * 0.325
        let d = (-1.24f64).exp();
        let expected = d * 0.61 + (1.0 - d) * 1.24 + d * 0.325;
        let f = PiecewiseConstantF::esm_650();
        assert!((z_of(&f, 1.0).unwrap() - expected).abs() < 1e-12);
        assert!((expected - 1.1518).abs() < 1e-4);
    }

    #[test]
    fn z_for_constant_two() {
        let f = PiecewiseConstantF::constant(2.0).unwrap();
        let d = (-2.0f64).exp();
        for &t in &[0.0, 0.25, 0.8, 1.0] {
            assert!((z_of(&f, t).unwrap() - t * (2.0 - d)).abs() < 1e-14);
        }
    }

    #[test]
    fn constant_one_collapses_to_suggested_matching() {
        let f = PiecewiseConstantF::constant(1.0).unwrap();
        for y in y_grid(64) {
            assert!((r1(&f, y) - ONE_MINUS_INV_E).abs() < 1e-12);
            assert!((r2(&f, y) - ONE_MINUS_INV_E).abs() < 1e-12);
        }
        assert!(cons1(&f).abs() < 1e-15);
    }

    #[test]
    fn constant_zero() {
        let f = PiecewiseConstantF::constant(0.0).unwrap();
        let ys = y_star();
        assert!((r1(&f, ys) - (-ys).exp_m1().abs() / ys).abs() < 1e-14);
        assert!((r1(&f, ys) - 0.8611).abs() < 1e-4);
        assert_eq!(r2(&f, ys), 0.0);
        // ∫_0^1 -t e^{-y* t} dt
        let exact = -(1.0 - (1.0 + ys) * (-ys).exp()) / (ys * ys);
        assert!((cons1(&f) - exact).abs() < 1e-14);
        let rep = check_all(&f);
        assert!(!rep.flags.total_at_least_one);
        assert_eq!(rep.certified, None);
    }

    #[test]
    fn constant_two_flags() {
        let rep = check_all(&PiecewiseConstantF::constant(2.0).unwrap());
        assert_eq!(rep.total, 2.0);
        assert!(rep.flags.total_at_least_one);
        assert!(rep.cons1 > 0.0);
        assert_eq!(rep.certified, None);
    }

    #[test]
    fn refinement_is_exact() {
        let f = PiecewiseConstantF::esm_650();
        let g = f.refine(2);
        let ys = y_star();
        assert!((r1(&f, ys) - r1(&g, ys)).abs() < 1e-12);
        assert!((r2(&f, ys) - r2(&g, ys)).abs() < 1e-12);
        assert!((cons1(&f) - cons1(&g)).abs() < 1e-12);
        assert!((cons2(&f) - cons2(&g)).abs() < 1e-12);
    }

    #[test]
    fn y_grid_ends() {
        let g: Vec<f64> = y_grid(64).collect();
        assert_eq!(g.len(), 64);
        assert_eq!(g[0], 0.0);
        assert_eq!(g[63], y_star());
        assert!(g.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn msm_report_is_produced() {
        let rep = check_all(&PiecewiseConstantF::msm());
        assert!(rep.min > 0.5 && rep.min < 0.7);
    }
}
