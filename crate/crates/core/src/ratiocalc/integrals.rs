//! Closed-form integration over the intervals of a piecewise constant `f`.
//!
//! On each interval `F` and `z` are affine, so every integrand in `r1`, `r2`,
//! `cons1` and `cons2` has the shape `(p + q s) e^{α + β s}` with `s` the
//! offset from the left endpoint.

use super::PiecewiseConstantF;

/// `(e^x - 1) / x`, continuous at 0.
fn phi1(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        x.exp_m1() / x
    }
}

/// `∫_0^1 u e^{x u} du = ((x - 1) e^x + 1) / x²`.
fn phi2(x: f64) -> f64 {
    if x.abs() < 0.5 {
        // Σ x^n / (n! (n + 2))
        let mut term = 1.0;
        let mut sum = 0.5;
        for n in 1..30 {
            term *= x / n as f64;
            let next = term / (n + 2) as f64;
            sum += next;
            if next.abs() < 1e-18 * sum.abs() {
                break;
            }
        }
        sum
    } else {
        (x * x.exp() - x.exp_m1()) / (x * x)
    }
}

/// Affine-exponential piece `∫_0^h (p + q s) e^{α + β s} ds`.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Piece {
    pub alpha: f64,
    pub beta: f64,
    pub h: f64,
}

impl Piece {
    /// `∫_0^h e^{α + β s} ds`
    pub fn exp_integral(&self) -> f64 {
        debug_assert!(self.alpha <= 1e-12 && self.alpha >= -8.0, "exponent {}", self.alpha);
        self.alpha.exp() * self.h * phi1(self.beta * self.h)
    }

    /// `∫_0^h s e^{α + β s} ds`
    pub fn first_moment(&self) -> f64 {
        self.alpha.exp() * self.h * self.h * phi2(self.beta * self.h)
    }

    pub fn linear_integral(&self, p: f64, q: f64) -> f64 {
        p * self.exp_integral() + q * self.first_moment()
    }
}

/// Per-interval data shared by all evaluated quantities.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Interval {
    pub value: f64,
    pub h: f64,
    /// `true` for intervals inside `(t*, 1]`.
    pub after_threshold: bool,
    /// Main exponent `-y t - (1 - y) G(t)` where `G = F` before `t*` and `z` after.
    pub main: Piece,
    /// `G(t) - t` at the left endpoint and its slope.
    pub gap: (f64, f64),
    /// Joint-unmatched exponent `-y t* - (2 - y) F(t*) - 2 (t - t*)` (after `t*` only).
    pub joint: Piece,
}

/// Constants derived from `f` alone.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Shape {
    pub t_star: f64,
    pub f_t_star: f64,
    /// `e^{-F(1)}`
    pub decay: f64,
}

impl Shape {
    pub fn of(f: &PiecewiseConstantF) -> Self {
        Shape {
            t_star: f.t_star(),
            f_t_star: f.cumulative_at_t_star(),
            decay: (-f.total()).exp(),
        }
    }

    /// `z(t)` from `F(t)`.
    pub fn z(&self, t: f64, cumulative: f64) -> f64 {
        self.decay * self.f_t_star + (1.0 - self.decay) * cumulative + self.decay * (t - self.t_star)
    }
}

pub(crate) fn intervals(f: &PiecewiseConstantF, y: f64) -> impl Iterator<Item = Interval> + '_ {
    let shape = Shape::of(f);
    let m = f.m() as f64;
    let h = 1.0 / m;
    let k_star = f.k_star();
    f.values().iter().enumerate().map(move |(k, &v)| {
        let a = k as f64 / m;
        let fa = f.cumulative_at_breakpoint(k);
        let after_threshold = k >= k_star;
        let (g_a, g_slope) = if after_threshold {
            (shape.z(a, fa), (1.0 - shape.decay) * v + shape.decay)
        } else {
            (fa, v)
        };
        let main = Piece {
            alpha: -y * a - (1.0 - y) * g_a,
            beta: -y - (1.0 - y) * g_slope,
            h,
        };
        let joint = Piece {
            alpha: -y * shape.t_star - (2.0 - y) * shape.f_t_star - 2.0 * (a - shape.t_star),
            beta: -2.0,
            h,
        };
        Interval {
            value: v,
            h,
            after_threshold,
            main,
            gap: (g_a - a, g_slope - 1.0),
            joint,
        }
    })
}

pub fn r1(f: &PiecewiseConstantF, y: f64) -> f64 {
    intervals(f, y).map(|iv| iv.main.exp_integral()).sum()
}

pub fn r2(f: &PiecewiseConstantF, y: f64) -> f64 {
    intervals(f, y)
        .map(|iv| {
            let mut s = iv.value * iv.main.exp_integral();
            if iv.after_threshold {
                s -= (iv.value - 1.0) * iv.joint.exp_integral();
            }
            s
        })
        .sum()
}

/// Third term of `cons2`: `∫_{t*}^1 (f - 1)(t* - F(t*)) e^{-2 F(t*) - 2 (t - t*)}`.
fn cons2_tail(f: &PiecewiseConstantF) -> f64 {
    let shape = Shape::of(f);
    let m = f.m() as f64;
    let lead = shape.t_star - shape.f_t_star;
    f.values()
        .iter()
        .enumerate()
        .skip(f.k_star())
        .map(|(k, &v)| {
            let piece = Piece {
                alpha: -2.0 * shape.f_t_star - 2.0 * (k as f64 / m - shape.t_star),
                beta: -2.0,
                h: 1.0 / m,
            };
            (v - 1.0) * lead * piece.exp_integral()
        })
        .sum()
}

pub fn cons1(f: &PiecewiseConstantF) -> f64 {
    let y = crate::y_star();
    intervals(f, y).map(|iv| iv.main.linear_integral(iv.gap.0, iv.gap.1)).sum()
}

pub fn cons2(f: &PiecewiseConstantF) -> f64 {
    let y = crate::y_star();
    let body: f64 = intervals(f, y)
        .map(|iv| iv.value * iv.main.linear_integral(iv.gap.0, iv.gap.1))
        .sum();
    body + cons2_tail(f)
}

/// Upper bound on `cons1` obtained by freezing `G(t) - t` at its largest
/// endpoint on each interval: the left one before `t*` (where `F(t) - t` is
/// decreasing) and the right one after (where `z(t) - t` is increasing).
pub fn cons1_conservative(f: &PiecewiseConstantF) -> f64 {
    let y = crate::y_star();
    intervals(f, y)
        .map(|iv| frozen_gap(&iv) * iv.main.exp_integral())
        .sum()
}

pub fn cons2_conservative(f: &PiecewiseConstantF) -> f64 {
    let y = crate::y_star();
    let body: f64 = intervals(f, y)
        .map(|iv| iv.value * frozen_gap(&iv) * iv.main.exp_integral())
        .sum();
    body + cons2_tail(f)
}

fn frozen_gap(iv: &Interval) -> f64 {
    if iv.after_threshold {
        iv.gap.0 + iv.gap.1 * iv.h
    } else {
        iv.gap.0
    }
}
