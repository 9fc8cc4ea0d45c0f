//! Closed-form vulnerability and resource bounds.
//!
//! Everything is a function of `g = 2·ln(2/(μ(1−R)))`:
//! `ε²_max = 2g/d`, fidelity floor `1 − g/d²`, precision `η < g/d²` and
//! `N = ceil(d⁴/(g²Δ))` copies or device calls.
//!
//! The [`Variant::Validated`] numbers replace the dimension-scaled HS/fidelity
//! relation `H² ≥ 2d(1−F)` by the provable `H² ≥ 2(1−F)`, which moves the
//! floor to `1 − ε²_max/2 = 1 − g/d` and the precision to `η < g/d`.

use serde::{Deserialize, Serialize};

use crate::concentration::{levy_bound, LevyParams};
use crate::error::{invalid, QvError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    #[default]
    Paper,
    Validated,
}

impl Variant {
    pub fn tag(self) -> &'static str {
        match self {
            Variant::Paper => "paper",
            Variant::Validated => "validated",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = QvError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(Variant::Paper),
            "validated" => Ok(Variant::Validated),
            _ => Err(invalid(format!("unknown variant {s:?} (expected paper or validated)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundQuery {
    pub d: usize,
    /// Misclassification probability μ(ℳ).
    pub mu: f64,
    /// Risk cap R (or R′ for device bounds).
    pub risk_cap: f64,
    /// Failure probability Δ (or Δ′).
    pub fail_prob: f64,
}

impl BoundQuery {
    pub fn new(d: usize, mu: f64, risk_cap: f64, fail_prob: f64) -> Result<Self> {
        let q = Self { d, mu, risk_cap, fail_prob };
        q.validate()?;
        Ok(q)
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(invalid("dimension must be positive"));
        }
        if self.mu == 0.0 {
            return Err(invalid("bound undefined at mu = 0: it requires misclassification probability mu(M) > 0"));
        }
        if !(self.mu > 0.0 && self.mu <= 1.0) {
            return Err(invalid(format!("mu = {} outside (0, 1]", self.mu)));
        }
        if !(0.0..1.0).contains(&self.risk_cap) {
            return Err(invalid(format!("risk cap {} outside [0, 1)", self.risk_cap)));
        }
        if !(self.fail_prob > 0.0 && self.fail_prob < 1.0) {
            return Err(invalid(format!("failure probability {} outside (0, 1)", self.fail_prob)));
        }
        Ok(())
    }

    fn df(&self) -> f64 {
        self.d as f64
    }
}

/// `g(μ, R) = 2·ln(2/(μ(1−R)))`.
pub fn g_value(q: &BoundQuery) -> Result<f64> {
    q.validate()?;
    Ok(2.0 * (2.0 / (q.mu * (1.0 - q.risk_cap))).ln())
}

/// `(4/d)·ln(2/(μ(1−R)))`, the largest HS budget² at which risk can stay at most R.
pub fn epsilon_sq_max(q: &BoundQuery) -> Result<f64> {
    Ok(2.0 * g_value(q)? / q.df())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FidelityFloor {
    pub raw: f64,
    pub clamped: f64,
    pub vacuous: bool,
}

impl FidelityFloor {
    fn from_raw(raw: f64) -> Self {
        Self { raw, clamped: raw.max(0.0), vacuous: raw <= 0.0 }
    }
}

/// `1 − (2/d²)·ln(2/(μ(1−R)))`.
pub fn fidelity_floor(q: &BoundQuery) -> Result<FidelityFloor> {
    Ok(FidelityFloor::from_raw(1.0 - g_value(q)? / q.df().powi(2)))
}

/// `d⁴/(g²Δ)` before rounding.
pub fn n_state_real(q: &BoundQuery) -> Result<f64> {
    let g = g_value(q)?;
    Ok(q.df().powi(4) / (g * g * q.fail_prob))
}

pub fn n_state_min(q: &BoundQuery) -> Result<u64> {
    Ok(ceil_count(n_state_real(q)?))
}

/// Device calls: the state formula evaluated at `(μ, R′, Δ′)`.
pub fn n_device_min(q: &BoundQuery) -> Result<u64> {
    n_state_min(q)
}

/// `2√2·Tr(O)·√χ`.
pub fn uhlmann_output_bound(trace_o: f64, chi: f64) -> f64 {
    2.0 * std::f64::consts::SQRT_2 * trace_o * chi.max(0.0).sqrt()
}

/// Settings needed for precision `eta` at failure probability `delta`: `ceil(1/(Δη²))`.
pub fn settings_for_precision(eta: f64, delta: f64) -> u64 {
    ceil_count(1.0 / (delta * eta * eta))
}

/// Ceiling that ignores rounding noise, so `1/(0.1·0.05²)` gives 4000 and not 4001.
pub fn ceil_count(x: f64) -> u64 {
    let r = x.round();
    if (x - r).abs() <= 1e-9 * x.abs().max(1.0) {
        r as u64
    } else {
        x.ceil() as u64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundReport {
    pub variant: Variant,
    pub query: BoundQuery,
    pub g_value: f64,
    pub epsilon_sq_max: f64,
    pub epsilon_max: f64,
    pub fidelity_floor_raw: f64,
    pub fidelity_floor_clamped: f64,
    pub vacuous: bool,
    pub precision_eta_max: f64,
    pub precision_delta_max: f64,
    pub n_state_real: f64,
    pub n_state_min: u64,
    pub n_device_min: u64,
    /// Levy bound at `ε_max`.
    pub levy_at_epsilon_max: f64,
}

pub fn evaluate(q: &BoundQuery, variant: Variant) -> Result<BoundReport> {
    let g = g_value(q)?;
    let eps_sq = epsilon_sq_max(q)?;
    let d = q.df();
    let gap = match variant {
        Variant::Paper => g / (d * d),
        Variant::Validated => g / d,
    };
    let floor = FidelityFloor::from_raw(1.0 - gap);
    let n_real = 1.0 / (gap * gap * q.fail_prob);
    let n = ceil_count(n_real);
    Ok(BoundReport {
        variant,
        query: *q,
        g_value: g,
        epsilon_sq_max: eps_sq,
        epsilon_max: eps_sq.sqrt(),
        fidelity_floor_raw: floor.raw,
        fidelity_floor_clamped: floor.clamped,
        vacuous: floor.vacuous,
        precision_eta_max: gap,
        precision_delta_max: gap,
        n_state_real: n_real,
        n_state_min: n,
        n_device_min: n,
        levy_at_epsilon_max: levy_bound(eps_sq.sqrt(), q.d, LevyParams::special_unitary()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn q(d: usize, mu: f64, r: f64, delta: f64) -> BoundQuery {
        BoundQuery::new(d, mu, r, delta).unwrap()
    }

    #[test]
    fn epsilon_examples() {
        assert_abs_diff_eq!(epsilon_sq_max(&q(2, 1.0, 0.0, 0.1)).unwrap(), 1.3862944, epsilon = 1e-6);
        assert_abs_diff_eq!(epsilon_sq_max(&q(16, 0.1, 0.5, 0.1)).unwrap(), 0.9222197, epsilon = 1e-6);
        assert_abs_diff_eq!(epsilon_sq_max(&q(64, 0.1, 0.5, 0.1)).unwrap(), 0.2305549, epsilon = 1e-6);
    }

    #[test]
    fn floor_examples() {
        let f = fidelity_floor(&q(16, 0.1, 0.5, 0.1)).unwrap();
        assert_abs_diff_eq!(f.raw, 0.9711806, epsilon = 1e-6);
        assert!(!f.vacuous);
        assert_abs_diff_eq!(fidelity_floor(&q(2, 1.0, 0.0, 0.1)).unwrap().raw, 0.6534264, epsilon = 1e-6);
        let f = fidelity_floor(&q(2, 0.01, 0.99, 0.1)).unwrap();
        assert!(f.raw < 0.0);
        assert_eq!(f.clamped, 0.0);
        assert!(f.vacuous);
    }

    #[test]
    fn resource_examples() {
        assert_eq!(n_state_min(&q(4, 0.1, 0.5, 0.05)).unwrap(), 95);
        assert_eq!(n_state_min(&q(2, 0.5, 0.5, 0.1)).unwrap(), 10);
        assert_eq!(n_device_min(&q(8, 0.1, 0.5, 0.01)).unwrap(), 7526);
        assert_eq!(n_device_min(&q(2, 0.5, 0.5, 0.1)).unwrap(), 10);
        let a = n_state_real(&q(4, 0.1, 0.5, 0.05)).unwrap();
        let b = n_state_real(&q(8, 0.1, 0.5, 0.05)).unwrap();
        assert_abs_diff_eq!(b / a, 16.0, epsilon = 1e-12);
    }

    #[test]
    fn uhlmann_examples() {
        assert_eq!(uhlmann_output_bound(3.0, 0.0), 0.0);
        assert_abs_diff_eq!(uhlmann_output_bound(1.0, 0.02), 0.4, epsilon = 1e-12);
        assert_abs_diff_eq!(uhlmann_output_bound(2.0, 0.5), 4.0, epsilon = 1e-12);
    }

    #[test]
    fn mu_zero_is_rejected() {
        let err = BoundQuery::new(16, 0.0, 0.5, 0.05).unwrap_err();
        assert!(err.to_string().contains("mu(M) > 0"));
        assert!(BoundQuery::new(16, 0.1, 1.0, 0.05).is_err());
        assert!(BoundQuery::new(16, 0.1, 0.5, 0.0).is_err());
    }

    #[test]
    fn monotone_on_grid() {
        let dims = [2, 3, 4, 8, 16, 64, 256];
        let mus = [0.01, 0.05, 0.1, 0.5, 1.0];
        let rs = [0.0, 0.2, 0.5, 0.9];
        let deltas = [0.01, 0.05, 0.2];
        for &mu in &mus {
            for &r in &rs {
                for &delta in &deltas {
                    for w in dims.windows(2) {
                        let (a, b) = (q(w[0], mu, r, delta), q(w[1], mu, r, delta));
                        assert!(epsilon_sq_max(&b).unwrap() < epsilon_sq_max(&a).unwrap());
                        assert!(n_state_min(&b).unwrap() >= n_state_min(&a).unwrap());
                    }
                }
            }
        }
        for &d in &dims {
            for w in mus.windows(2) {
                assert!(epsilon_sq_max(&q(d, w[1], 0.5, 0.1)).unwrap() < epsilon_sq_max(&q(d, w[0], 0.5, 0.1)).unwrap());
            }
            for w in rs.windows(2) {
                assert!(epsilon_sq_max(&q(d, 0.1, w[1], 0.1)).unwrap() > epsilon_sq_max(&q(d, 0.1, w[0], 0.1)).unwrap());
            }
            for w in deltas.windows(2) {
                assert!(n_state_min(&q(d, 0.1, 0.5, w[1])).unwrap() <= n_state_min(&q(d, 0.1, 0.5, w[0])).unwrap());
            }
        }
    }

    #[test]
    fn floor_and_budget_share_one_logarithm() {
        for d in [2, 5, 16, 100] {
            for mu in [0.02, 0.3, 1.0] {
                let query = q(d, mu, 0.25, 0.1);
                let lhs = 1.0 - fidelity_floor(&query).unwrap().raw;
                let rhs = epsilon_sq_max(&query).unwrap() / (2.0 * d as f64);
                assert!((lhs - rhs).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn variants() {
        let query = q(16, 0.1, 0.5, 0.05);
        let paper = evaluate(&query, Variant::Paper).unwrap();
        assert_eq!(paper.n_state_min, n_state_min(&query).unwrap());
        assert_abs_diff_eq!(paper.fidelity_floor_raw, fidelity_floor(&query).unwrap().raw, epsilon = 1e-15);
        let v = evaluate(&query, Variant::Validated).unwrap();
        assert_abs_diff_eq!(v.fidelity_floor_raw, 1.0 - v.epsilon_sq_max / 2.0, epsilon = 1e-12);
        assert_eq!(v.n_state_min, settings_for_precision(v.precision_eta_max, 0.05));
        assert!(v.n_state_min < paper.n_state_min);
        assert_eq!("validated".parse::<Variant>().unwrap(), Variant::Validated);
    }
}
