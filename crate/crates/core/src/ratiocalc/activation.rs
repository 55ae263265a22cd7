use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Non-decreasing piecewise constant activation function on `[0, 1]`.
///
/// The `k`-th value (1-based) holds on `((k-1)/m, k/m]`; `t = 0` takes the
/// first value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ActivationFile", into = "ActivationFile")]
pub struct PiecewiseConstantF {
    values: Vec<f64>,
    /// `prefix[k] = F(k/m)`.
    prefix: Vec<f64>,
    k_star: usize,
}

/// On-disk form: `{ "m": 40, "values": [...] }`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActivationFile {
    pub m: usize,
    pub values: Vec<f64>,
}

impl TryFrom<ActivationFile> for PiecewiseConstantF {
    type Error = Error;

    fn try_from(file: ActivationFile) -> Result<Self> {
        if file.m != file.values.len() {
            return Err(Error::InvalidActivation(format!(
                "m = {} but {} values given",
                file.m,
                file.values.len()
            )));
        }
        PiecewiseConstantF::new(file.values)
    }
}

impl From<PiecewiseConstantF> for ActivationFile {
    fn from(f: PiecewiseConstantF) -> Self {
        ActivationFile { m: f.m(), values: f.values }
    }
}

impl PiecewiseConstantF {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidActivation("need at least one interval".into()));
        }
        for (k, &v) in values.iter().enumerate() {
            if !(0.0..=2.0).contains(&v) {
                return Err(Error::InvalidActivation(format!(
                    "f_{} = {v} lies outside [0, 2]",
                    k + 1
                )));
            }
        }
        if let Some(k) = values.windows(2).position(|w| w[1] < w[0]) {
            return Err(Error::InvalidActivation(format!(
                "not monotone: f_{} = {} > f_{} = {}",
                k + 1,
                values[k],
                k + 2,
                values[k + 1]
            )));
        }
        let m = values.len() as f64;
        let mut prefix = Vec::with_capacity(values.len() + 1);
        let mut sum = 0.0;
        prefix.push(0.0);
        for &v in &values {
            sum += v;
            prefix.push(sum / m);
        }
        let k_star = values.iter().rposition(|&v| v <= 1.0).map_or(0, |k| k + 1);
        Ok(PiecewiseConstantF { values, prefix, k_star })
    }

    /// `f ≡ level` on a single interval.
    pub fn constant(level: f64) -> Result<Self> {
        Self::new(vec![level])
    }

    /// The 40-interval activation function certified at ratio 0.6503:
    /// 0 up to 0.05, 0.4 up to 0.075, 1 up to 0.675, 1.2 up to 0.7, then 2.
    pub fn esm_650() -> Self {
        let mut v = vec![0.0; 2];
        v.push(0.4);
        v.extend(std::iter::repeat_n(1.0, 24));
        v.push(1.2);
        v.extend(std::iter::repeat_n(2.0, 12));
        Self::new(v).expect("valid preset")
    }

    /// Three-stage MSM schedule: 0 on `[0, 0.05]`, 1 until 0.75, then 2.
    pub fn msm() -> Self {
        let mut v = vec![0.0; 2];
        v.extend(std::iter::repeat_n(1.0, 28));
        v.extend(std::iter::repeat_n(2.0, 10));
        Self::new(v).expect("valid preset")
    }

    pub fn m(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Index of the interval holding `t`, 0-based.
    pub fn interval_of(&self, t: f64) -> usize {
        let m = self.values.len();
        let k = (t * m as f64).ceil();
        (k.max(1.0) as usize).min(m) - 1
    }

    /// `f(t)` with right-continuity at breakpoints (`f(k/m) = f_k`).
    pub fn eval(&self, t: f64) -> f64 {
        self.values[self.interval_of(t)]
    }

    /// `F(t) = ∫_0^t f`.
    pub fn cumulative(&self, t: f64) -> f64 {
        let t = t.clamp(0.0, 1.0);
        let m = self.m() as f64;
        let k = ((t * m).floor() as usize).min(self.m());
        if k == self.m() {
            return self.prefix[k];
        }
        self.prefix[k] + self.values[k] * (t - k as f64 / m)
    }

    /// `F` at the breakpoint `k/m`.
    pub fn cumulative_at_breakpoint(&self, k: usize) -> f64 {
        self.prefix[k]
    }

    /// `F(1)`.
    pub fn total(&self) -> f64 {
        self.prefix[self.m()]
    }

    /// `k* = max{k : f_k ≤ 1}`, or 0 when every value exceeds 1.
    pub fn k_star(&self) -> usize {
        self.k_star
    }

    /// `t* = k*/m`.
    pub fn t_star(&self) -> f64 {
        self.k_star as f64 / self.m() as f64
    }

    /// `F(t*)`.
    pub fn cumulative_at_t_star(&self) -> f64 {
        self.prefix[self.k_star]
    }

    /// The same function on `factor * m` intervals.
    pub fn refine(&self, factor: usize) -> Self {
        let v = self
            .values
            .iter()
            .flat_map(|&v| std::iter::repeat_n(v, factor))
            .collect();
        Self::new(v).expect("refinement keeps validity")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn esm_650_breakpoints() {
        let f = PiecewiseConstantF::esm_650();
        assert_eq!(f.m(), 40);
        assert_eq!(f.k_star(), 27);
        assert!((f.t_star() - 0.675).abs() < 1e-15);
        assert!((f.total() - 1.24).abs() < 1e-12);
        assert!((f.cumulative_at_t_star() - 0.61).abs() < 1e-12);
        assert!((f.cumulative(0.3) - 0.235).abs() < 1e-12);
        assert_eq!(f.eval(0.0), 0.0);
        assert_eq!(f.eval(0.05), 0.0);
        assert_eq!(f.eval(0.06), 0.4);
        assert_eq!(f.eval(0.5), 1.0);
        assert_eq!(f.eval(0.69), 1.2);
        assert_eq!(f.eval(1.0), 2.0);
    }

    #[test]
    fn msm_stages() {
        let f = PiecewiseConstantF::msm();
        assert_eq!(f.eval(0.05), 0.0);
        assert_eq!(f.eval(0.051), 1.0);
        assert_eq!(f.eval(0.74), 1.0);
        assert_eq!(f.eval(0.76), 2.0);
    }

    #[test]
    fn t_star_clamps_to_zero() {
        let f = PiecewiseConstantF::new(vec![1.5, 2.0]).unwrap();
        assert_eq!(f.k_star(), 0);
        assert_eq!(f.t_star(), 0.0);
        let g = PiecewiseConstantF::constant(0.5).unwrap();
        assert_eq!(g.t_star(), 1.0);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(PiecewiseConstantF::new(vec![]).is_err());
        assert!(PiecewiseConstantF::new(vec![1.0, 0.5]).is_err());
        assert!(PiecewiseConstantF::new(vec![2.5]).is_err());
        assert!(PiecewiseConstantF::new(vec![f64::NAN]).is_err());
        let file = ActivationFile { m: 3, values: vec![1.0, 1.0] };
        assert!(PiecewiseConstantF::try_from(file).is_err());
    }

    #[test]
    fn file_round_trip() {
        let f = PiecewiseConstantF::esm_650();
        let s = serde_json::to_string(&f).unwrap();
        assert!(s.starts_with("{\"m\":40,"));
        let g: PiecewiseConstantF = serde_json::from_str(&s).unwrap();
        assert_eq!(f, g);
    }
}
