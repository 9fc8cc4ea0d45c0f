//! Concentration of measure on SU(d).
//!
//! The concentration function itself is not observable from samples. What is
//! observable is the tail of a Lipschitz statistic above its median, which the
//! normal-Levy bound also controls: if `f` is `L`-Lipschitz then the set
//! `{f ≤ median}` has measure ≥ 1/2 and its ε-expansion contains
//! `{f ≤ median + Lε}`.

use serde::{Deserialize, Serialize};

use crate::adversary::{median_sorted, median_std_error_sorted};
use crate::classifier::binomial_std_error;
use crate::error::{invalid, Result};
use crate::quantum::HsConvention;
use crate::sampling::{par_trials, sample_haar_unitary, RngStream};

pub const MIN_SAMPLES: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevyParams {
    pub l1: f64,
    pub l2: f64,
}

impl LevyParams {
    pub fn new(l1: f64, l2: f64) -> Result<Self> {
        if !(l1 > 0.0 && l2 > 0.0 && l1.is_finite() && l2.is_finite()) {
            return Err(invalid(format!("Levy constants must be positive, got ({l1}, {l2})")));
        }
        Ok(Self { l1, l2 })
    }

    /// Constants for SU(d) with the unnormalized HS metric.
    pub fn special_unitary() -> Self {
        Self { l1: std::f64::consts::SQRT_2, l2: 0.25 }
    }
}

/// `l1·exp(−l2·ε²·d)`.
pub fn levy_bound(eps: f64, d: usize, params: LevyParams) -> f64 {
    params.l1 * (-params.l2 * eps * eps * d as f64).exp()
}

/// Statistics that are 1-Lipschitz for the unnormalized HS metric.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Statistic {
    /// `Re⟨0|U|0⟩`.
    ReOverlap,
    /// `Re Tr U / √d`.
    ReTrace,
}

impl Statistic {
    pub fn tag(self) -> &'static str {
        match self {
            Statistic::ReOverlap => "re-overlap",
            Statistic::ReTrace => "re-trace",
        }
    }

    fn eval(self, u: &crate::quantum::CMatrix) -> f64 {
        match self {
            Statistic::ReOverlap => u[(0, 0)].re,
            Statistic::ReTrace => u.trace().re / (u.nrows() as f64).sqrt(),
        }
    }
}

/// Lipschitz constant of every [`Statistic`] under `metric`.
pub fn lipschitz_constant(d: usize, metric: HsConvention) -> f64 {
    match metric {
        HsConvention::Unnormalized => 1.0,
        HsConvention::Normalized => (d as f64).sqrt(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailPoint {
    pub eps: f64,
    pub tail: f64,
    pub std_error: f64,
    pub bound: f64,
}

impl TailPoint {
    /// Tail exceeds the bound by more than three standard errors.
    pub fn violates(&self) -> bool {
        self.tail > self.bound + 3.0 * self.std_error
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConcentrationCurve {
    pub d: usize,
    pub statistic: Statistic,
    pub metric: HsConvention,
    pub n_samples: usize,
    pub median: f64,
    pub median_std_error: f64,
    pub points: Vec<TailPoint>,
}

impl ConcentrationCurve {
    pub fn epsilons(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.eps).collect()
    }

    pub fn violations(&self) -> Vec<TailPoint> {
        self.points.iter().copied().filter(TailPoint::violates).collect()
    }

    pub fn at(&self, eps: f64) -> Option<&TailPoint> {
        self.points.iter().find(|p| (p.eps - eps).abs() < 1e-12)
    }
}

/// Twenty points `0.1, 0.2, …, 2.0`.
pub fn default_grid() -> Vec<f64> {
    (1..=20).map(|i| i as f64 / 10.0).collect()
}

/// Parses `START:STOP:STEP` into an inclusive grid.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<f64> = spec
        .split(':')
        .map(|s| s.trim().parse::<f64>().map_err(|_| invalid(format!("bad grid component {s:?}"))))
        .collect::<Result<_>>()?;
    let [start, stop, step] = parts[..] else {
        return Err(invalid(format!("grid must be START:STOP:STEP, got {spec:?}")));
    };
    if !(step > 0.0) || start < 0.0 || stop < start || !stop.is_finite() {
        return Err(invalid(format!("bad grid {spec:?}")));
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    if n > 100_000 {
        return Err(invalid("grid too long"));
    }
    Ok((0..=n).map(|i| start + i as f64 * step).collect())
}

/// Empirical tails of a Lipschitz statistic of Haar SU(d) unitaries above its median.
pub fn levy_tail_estimate(
    d: usize,
    statistic: Statistic,
    metric: HsConvention,
    eps_grid: &[f64],
    n_samples: usize,
    stream: &RngStream,
) -> Result<ConcentrationCurve> {
    if n_samples < MIN_SAMPLES {
        return Err(invalid(format!("need at least {MIN_SAMPLES} samples, got {n_samples}")));
    }
    if eps_grid.is_empty() || eps_grid.iter().any(|e| !(*e >= 0.0 && e.is_finite())) {
        return Err(invalid("eps grid must be nonempty and nonnegative"));
    }
    if eps_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid("eps grid must be strictly increasing"));
    }
    let values = par_trials(n_samples, stream, |_, rng| -> Result<f64> {
        Ok(statistic.eval(sample_haar_unitary(d, true, rng)?.matrix()))
    });
    let mut sorted = values.into_iter().collect::<Result<Vec<_>>>()?;
    sorted.sort_by(f64::total_cmp);
    let median = median_sorted(&sorted);
    let lip = lipschitz_constant(d, metric);
    let params = LevyParams::special_unitary();
    let points = eps_grid
        .iter()
        .map(|&eps| {
            let cut = median + lip * eps;
            let above = sorted.len() - sorted.partition_point(|&x| x <= cut);
            let tail = above as f64 / n_samples as f64;
            TailPoint { eps, tail, std_error: binomial_std_error(tail, n_samples), bound: levy_bound(eps, d, params) }
        })
        .collect();
    Ok(ConcentrationCurve {
        d,
        statistic,
        metric,
        n_samples,
        median,
        median_std_error: median_std_error_sorted(&sorted),
        points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn bound_examples() {
        let p = LevyParams::special_unitary();
        assert_abs_diff_eq!(levy_bound(0.0, 7, p), 1.4142136, epsilon = 1e-7);
        // √2·e⁻⁴ and √2·e⁻⁸
        assert_abs_diff_eq!(levy_bound(1.0, 16, p), 0.02590222491997596, epsilon = 1e-15);
        assert_abs_diff_eq!(levy_bound(1.0, 32, p), 0.0004744157980490514, epsilon = 1e-16);
        assert!(LevyParams::new(0.0, 1.0).is_err());
    }

    #[test]
    fn grid_parsing() {
        assert_eq!(default_grid().len(), 20);
        let g = parse_grid("0.1:2.0:0.1").unwrap();
        assert_eq!(g.len(), 20);
        assert_abs_diff_eq!(g[19], 2.0, epsilon = 1e-12);
        assert!(parse_grid("1:0:0.1").is_err());
        assert!(parse_grid("0:1").is_err());
    }

    #[test]
    fn tail_examples() {
        let s = RngStream::new(31, 0);
        let mut grid = vec![0.0];
        grid.extend(default_grid());
        let curve = levy_tail_estimate(4, Statistic::ReOverlap, HsConvention::Unnormalized, &grid, 20_000, &s).unwrap();
        let zero = curve.at(0.0).unwrap();
        assert!((zero.tail - 0.5).abs() <= 3.0 * zero.std_error + 1e-4);
        assert!(curve.points.windows(2).all(|w| w[1].tail <= w[0].tail));
        assert!(curve.violations().is_empty());
    }

    #[test]
    fn rejects_small_or_unsorted_input() {
        let s = RngStream::new(32, 0);
        assert!(levy_tail_estimate(2, Statistic::ReTrace, HsConvention::Unnormalized, &[0.1], 999, &s).is_err());
        assert!(levy_tail_estimate(2, Statistic::ReTrace, HsConvention::Unnormalized, &[0.2, 0.1], 1000, &s).is_err());
    }
}
