//! Minimal adversarial perturbations of pure states.
//!
//! Budgets are infidelities `χ = 1 − F(ψ, ψ′)`. A move of infidelity `χ`
//! realized by a planar rotation costs `sqrt(4χ)` in Hilbert-Schmidt units,
//! which is how the HS columns of every report are produced.
//!
//! For two fidelity-threshold classifiers sharing a reference `b`, the
//! misclassified set is a band `lo ≤ |⟨b|ψ⟩|² < hi` and the optimal attack is
//! a rotation inside `span{ψ, b}`; [`optimal_attack_threshold`] computes it in
//! closed form. [`gradient_attack`] handles arbitrary pairs numerically and
//! only ever yields lower bounds on adversarial risk.

use std::f64::consts::FRAC_PI_2;

use serde::Serialize;

use crate::classifier::{binomial_std_error, ClassifierPair, FidelityThresholdClassifier, MIN_TRIALS};
use crate::error::{check_dim, invalid, QvError, Result};
use crate::quantum::{c, CVector, PureState};
use crate::sampling::{
    par_trials, sample_haar_state, sample_orthogonal_partner, PerturbationMode, PerturbationSpec, RngStream,
};

pub const DEFAULT_STEPS: usize = 200;
pub const DEFAULT_STEP_SIZE: f64 = 0.05;

/// Extra rotation that pushes witnesses strictly inside the band.
const WITNESS_MARGIN: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttackResult {
    pub success: bool,
    /// `1 − F(ψ, ψ′)`; `1` when no misclassified state exists.
    pub cost_infidelity: f64,
    /// `sqrt(4·cost_infidelity)`, the HS distance of the planar rotation realizing the move.
    pub cost_hs: f64,
    #[serde(skip)]
    pub witness: Option<PureState>,
}

impl AttackResult {
    fn unreachable() -> Self {
        Self { success: false, cost_infidelity: 1.0, cost_hs: 2.0, witness: None }
    }

    fn found(cost: f64, budget: f64, witness: PureState) -> Self {
        let success = cost <= budget;
        Self { success, cost_infidelity: cost, cost_hs: hs_for_infidelity(cost), witness: success.then_some(witness) }
    }
}

/// HS distance of a planar rotation moving a state by infidelity `chi`.
pub fn hs_for_infidelity(chi: f64) -> f64 {
    (4.0 * chi.max(0.0)).sqrt()
}

/// Inverse of [`hs_for_infidelity`], saturating at `χ = 1`.
pub fn infidelity_for_hs(eps: f64) -> f64 {
    (eps * eps / 4.0).min(1.0)
}

/// The band `[lo, hi)` of overlaps misclassified by a threshold pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdBand {
    pub lo: f64,
    pub hi: f64,
}

impl ThresholdBand {
    pub fn new(t_h: f64, t_c: f64) -> Self {
        Self { lo: t_h.min(t_c), hi: t_h.max(t_c) }
    }

    pub fn is_empty(&self) -> bool {
        self.lo >= self.hi
    }

    pub fn contains(&self, p: f64) -> bool {
        self.lo <= p && p < self.hi
    }

    /// Smallest rotation angle taking overlap `p` into the band, or `None` if the band is empty.
    pub fn angular_distance(&self, p: f64) -> Option<f64> {
        if self.is_empty() {
            return None;
        }
        if self.contains(p) {
            return Some(0.0);
        }
        let phi = overlap_angle(p);
        Some(if p >= self.hi { overlap_angle(self.hi) - phi } else { phi - overlap_angle(self.lo) })
    }

    /// Minimal infidelity `1 − cos δφ` to reach the band from overlap `p`.
    pub fn min_cost(&self, p: f64) -> Option<f64> {
        self.angular_distance(p).map(|delta| 2.0 * (0.5 * delta).sin().powi(2))
    }
}

/// `arccos √p`, the angle between `ψ` and the reference ray.
pub fn overlap_angle(p: f64) -> f64 {
    p.clamp(0.0, 1.0).sqrt().acos()
}

fn shared_reference<'a>(
    h: &'a FidelityThresholdClassifier,
    c: &'a FidelityThresholdClassifier,
) -> Result<&'a PureState> {
    let f = h.reference().overlap_sq(c.reference())?;
    if (1.0 - f).abs() > 1e-12 {
        return Err(QvError::MismatchedReferences);
    }
    Ok(c.reference())
}

fn threshold_pair(pair: &ClassifierPair) -> Result<(&PureState, ThresholdBand)> {
    let (h, c) = pair.as_thresholds().ok_or(QvError::UnsupportedClassifier("closed form needs two fidelity-threshold classifiers"))?;
    let b = shared_reference(h, c)?;
    Ok((b, ThresholdBand::new(h.threshold(), c.threshold())))
}

/// Unit vector orthogonal to `b`, chosen deterministically.
fn fixed_orthogonal(b: &CVector) -> CVector {
    let k = (0..b.len())
        .min_by(|&i, &j| b[i].norm().total_cmp(&b[j].norm()))
        .expect("nonempty");
    let mut e = CVector::zeros(b.len());
    e[k] = c(1.0, 0.0);
    let e = &e - b * b.dotc(&e);
    let n = e.norm();
    e.unscale(n)
}

/// State at angle `phi` from `b` on the great circle through `ψ`.
fn rotate_in_plane(b: &PureState, psi: &PureState, phi: f64) -> PureState {
    let bv = b.amplitudes();
    let overlap = bv.dotc(psi.amplitudes());
    let omega = if overlap.norm() > 1e-15 { overlap / overlap.norm() } else { c(1.0, 0.0) };
    let e1 = bv * omega;
    let rest = psi.amplitudes() - bv * overlap;
    let e2 = if rest.norm() > 1e-12 { rest.unscale(rest.norm()) } else { fixed_orthogonal(bv) };
    let v = e1 * c(phi.cos(), 0.0) + e2 * c(phi.sin(), 0.0);
    PureState::normalized(v).expect("unit combination of orthonormal vectors")
}

/// Closed-form minimal attack on a pair of fidelity-threshold classifiers.
pub fn optimal_attack_threshold(pair: &ClassifierPair, psi: &PureState, budget_infidelity: f64) -> Result<AttackResult> {
    check_dim(pair.dim(), psi.dim())?;
    if !(0.0..=1.0).contains(&budget_infidelity) {
        return Err(invalid(format!("budget {budget_infidelity} outside [0, 1]")));
    }
    let (b, band) = threshold_pair(pair)?;
    let p = b.overlap_sq(psi)?;
    let Some(delta) = band.angular_distance(p) else {
        return Ok(AttackResult::unreachable());
    };
    if delta == 0.0 {
        return Ok(AttackResult::found(0.0, budget_infidelity, psi.clone()));
    }
    let cost = 2.0 * (0.5 * delta).sin().powi(2);
    let (phi_hi, phi_lo) = (overlap_angle(band.hi), overlap_angle(band.lo));
    let mut margin = WITNESS_MARGIN.min(0.5 * (phi_lo - phi_hi));
    for _ in 0..6 {
        let target = if p >= band.hi { phi_hi + margin } else { phi_lo - margin };
        let witness = rotate_in_plane(b, psi, target.clamp(0.0, FRAC_PI_2));
        if pair.misclassified(&witness)? {
            return Ok(AttackResult::found(cost, budget_infidelity, witness));
        }
        margin *= 4.0;
    }
    Err(QvError::Numerical("could not place a witness inside the misclassified band".into()))
}

fn infidelity(a: &CVector, b: &CVector) -> f64 {
    1.0 - a.dotc(b).norm().min(1.0)
}

fn step_along(phi: &CVector, dir: &CVector, t: f64) -> CVector {
    let v = phi + dir * c(t, 0.0);
    let n = v.norm();
    v.unscale(n)
}

/// Follows the steepest-descent path of one classifier's margin `|score|`
/// until the pair disagrees, staying inside the infidelity budget.
fn descend_one(
    pair: &ClassifierPair,
    which: &crate::classifier::Classifier,
    psi: &PureState,
    budget: f64,
    steps: usize,
    step_size: f64,
) -> Result<Option<PureState>> {
    let start = psi.amplitudes();
    let (a, _) = which.quadratic_form();
    let toward_zero = if which.score(psi)? >= 0.0 { -1.0 } else { 1.0 };
    let as_state = |v: &CVector| PureState::from_normalized_unchecked(v.clone());
    let labels = |v: &CVector| -> Result<_> {
        let s = as_state(v);
        Ok((pair.hypothesis.label(&s)?, pair.truth.label(&s)?))
    };

    let mut phi = start.clone();
    for _ in 0..steps {
        let g = &a * &phi;
        let tangent = &g - &phi * phi.dotc(&g);
        let norm = tangent.norm();
        if !norm.is_finite() {
            return Err(QvError::Numerical("non-finite gradient".into()));
        }
        if norm < 1e-14 {
            return Ok(None);
        }
        let dir = tangent * c(toward_zero / norm, 0.0);
        let mut t_hi = step_size;
        let mut next = step_along(&phi, &dir, t_hi);

        let over_budget = infidelity(start, &next) > budget;
        if over_budget {
            // pull the step back onto the budget sphere
            let (mut lo, mut hi) = (0.0, t_hi);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if infidelity(start, &step_along(&phi, &dir, mid)) > budget {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            t_hi = lo;
            next = step_along(&phi, &dir, t_hi);
        }

        // a narrow band can be crossed within one step, so look for the first label flip
        let here = labels(&phi)?;
        if labels(&next)? != here {
            let (mut lo, mut hi) = (0.0, t_hi);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if labels(&step_along(&phi, &dir, mid))? != here {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            let w = step_along(&phi, &dir, hi);
            let (h, c) = labels(&w)?;
            if h != c {
                return Ok(Some(as_state(&w)));
            }
            next = w;
        }
        if over_budget {
            return Ok(None);
        }
        phi = next;
    }
    Ok(None)
}

/// Numeric minimal-perturbation attack for arbitrary classifier pairs.
///
/// Starting from `ψ`, walks the Riemannian steepest-descent path of each
/// classifier's margin in turn (renormalizing every step) and keeps the first
/// point where the labels disagree, refined by bisection. Steps that leave
/// the infidelity ball are cut back to its boundary. The cheaper of the two
/// paths is returned. A failure is a censored observation, not a proof that
/// no witness exists.
pub fn gradient_attack(
    pair: &ClassifierPair,
    psi: &PureState,
    budget_infidelity: f64,
    steps: usize,
    step_size: f64,
) -> Result<AttackResult> {
    check_dim(pair.dim(), psi.dim())?;
    if !(0.0..=1.0).contains(&budget_infidelity) {
        return Err(invalid(format!("budget {budget_infidelity} outside [0, 1]")));
    }
    if steps == 0 || !(step_size > 0.0 && step_size.is_finite()) {
        return Err(invalid("steps and step_size must be positive"));
    }
    if pair.misclassified(psi)? {
        return Ok(AttackResult::found(0.0, budget_infidelity, psi.clone()));
    }
    if budget_infidelity == 0.0 {
        return Ok(AttackResult::unreachable());
    }
    let mut best: Option<(f64, PureState)> = None;
    for which in [&pair.hypothesis, &pair.truth] {
        if let Some(w) = descend_one(pair, which, psi, budget_infidelity, steps, step_size)? {
            let cost = infidelity(psi.amplitudes(), w.amplitudes());
            if best.as_ref().is_none_or(|(b, _)| cost < *b) {
                best = Some((cost, w));
            }
        }
    }
    Ok(match best {
        Some((cost, w)) if cost <= budget_infidelity => AttackResult::found(cost, budget_infidelity, w),
        _ => AttackResult::unreachable(),
    })
}

/// Exact adversarial risk of a threshold pair with a shared reference, at an
/// infidelity budget, for Haar-random states: the Haar measure of the band
/// dilated by the rotation angle `arccos(1 − χ)`.
pub fn threshold_adversarial_risk(d: usize, t_c: f64, t_h: f64, budget_infidelity: f64) -> f64 {
    let band = ThresholdBand::new(t_h, t_c);
    if band.is_empty() {
        return 0.0;
    }
    let delta = (1.0 - budget_infidelity.clamp(0.0, 1.0)).acos();
    let a = (overlap_angle(band.hi) - delta).max(0.0);
    let b = (overlap_angle(band.lo) + delta).min(FRAC_PI_2);
    let k = 2 * (d as i32 - 1);
    (b.sin().powi(k) - a.sin().powi(k)).clamp(0.0, 1.0)
}

/// Median of the minimal attack cost over Haar states, by bisection on
/// [`threshold_adversarial_risk`], which is the cost CDF.
pub fn threshold_median_cost(d: usize, t_c: f64, t_h: f64) -> f64 {
    if threshold_adversarial_risk(d, t_c, t_h, 1.0) < 0.5 {
        return 1.0;
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if threshold_adversarial_risk(d, t_c, t_h, mid) >= 0.5 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdvRiskEstimate {
    pub budget: PerturbationSpec,
    pub budget_infidelity: f64,
    pub mean: f64,
    pub std_error: f64,
    pub n_trials: usize,
    /// Trials skipped because the numeric attack hit a non-finite gradient.
    pub skipped: usize,
    /// Set when the numeric attack was used; the mean is then a lower bound.
    pub lower_bound: bool,
}

/// Monte Carlo adversarial risk `μ(ℳ_ε)` at an infidelity budget.
pub fn adversarial_risk(
    pair: &ClassifierPair,
    d: usize,
    budget_infidelity: f64,
    n_trials: usize,
    stream: &RngStream,
) -> Result<AdvRiskEstimate> {
    adversarial_risk_with(pair, d, budget_infidelity, n_trials, stream, DEFAULT_STEPS, DEFAULT_STEP_SIZE)
}

pub fn adversarial_risk_with(
    pair: &ClassifierPair,
    d: usize,
    budget_infidelity: f64,
    n_trials: usize,
    stream: &RngStream,
    steps: usize,
    step_size: f64,
) -> Result<AdvRiskEstimate> {
    check_dim(pair.dim(), d)?;
    if n_trials < MIN_TRIALS {
        return Err(invalid(format!("need at least {MIN_TRIALS} trials, got {n_trials}")));
    }
    if !(0.0..=1.0).contains(&budget_infidelity) {
        return Err(invalid(format!("budget {budget_infidelity} outside [0, 1]")));
    }
    let closed = threshold_pair(pair).ok();
    let outcomes = par_trials(n_trials, stream, |_, rng| -> Result<Option<bool>> {
        let psi = sample_haar_state(d, rng)?;
        match &closed {
            Some((b, band)) => {
                let p = b.overlap_sq(&psi)?;
                Ok(Some(band.min_cost(p).is_some_and(|cost| cost <= budget_infidelity)))
            }
            None => match gradient_attack(pair, &psi, budget_infidelity, steps, step_size) {
                Ok(r) => Ok(Some(r.success)),
                Err(QvError::Numerical(_)) => Ok(None),
                Err(e) => Err(e),
            },
        }
    });
    let (mut hits, mut used, mut skipped) = (0usize, 0usize, 0usize);
    for o in outcomes {
        match o? {
            Some(s) => {
                used += 1;
                hits += usize::from(s);
            }
            None => skipped += 1,
        }
    }
    if used == 0 {
        return Err(QvError::Numerical("every attack trial failed".into()));
    }
    let mean = hits as f64 / used as f64;
    Ok(AdvRiskEstimate {
        budget: PerturbationSpec::new(hs_for_infidelity(budget_infidelity), PerturbationMode::Planar),
        budget_infidelity,
        mean,
        std_error: binomial_std_error(mean, used),
        n_trials: used,
        skipped,
        lower_bound: closed.is_none(),
    })
}

/// Success rate of a random planar rotation of the full budget, the
/// non-adversarial counterpart of [`adversarial_risk`] on threshold pairs.
pub fn random_perturbation_risk(
    pair: &ClassifierPair,
    d: usize,
    budget_infidelity: f64,
    n_trials: usize,
    stream: &RngStream,
) -> Result<crate::classifier::RiskEstimate> {
    check_dim(pair.dim(), d)?;
    threshold_pair(pair)?;
    let theta = (1.0 - budget_infidelity.clamp(0.0, 1.0)).acos();
    let flags = par_trials(n_trials, stream, |_, rng| -> Result<bool> {
        let psi = sample_haar_state(d, rng)?;
        let partner = sample_orthogonal_partner(psi.amplitudes(), rng);
        let moved = psi.amplitudes() * c(theta.cos(), 0.0) + partner * c(theta.sin(), 0.0);
        let moved = PureState::normalized(moved)?;
        pair.misclassified(&moved)
    });
    let mut hits = 0;
    for f in flags {
        hits += usize::from(f?);
    }
    Ok(crate::classifier::RiskEstimate::from_count(hits, n_trials))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerturbationSurvey {
    #[serde(skip)]
    pub costs_infidelity: Vec<f64>,
    #[serde(skip)]
    pub costs_hs: Vec<f64>,
    pub median_infidelity: f64,
    /// Order-statistic standard error of the median.
    pub median_std_error: f64,
    pub p90_infidelity: f64,
    pub median_hs: f64,
    pub p90_hs: f64,
    pub n_trials: usize,
}

/// Quantile by the nearest-rank rule on an ascending slice.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    let idx = ((q * n as f64).ceil() as usize).clamp(1, n) - 1;
    sorted[idx]
}

/// Median of an ascending slice (mean of the middle pair for even length).
pub fn median_sorted(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Half the spread between the order statistics at `n/2 ± √n/2`.
pub fn median_std_error_sorted(sorted: &[f64]) -> f64 {
    let n = sorted.len() as f64;
    let half = 0.5 * n.sqrt();
    let lo = ((0.5 * n - half).floor().max(0.0)) as usize;
    let hi = ((0.5 * n + half).ceil() as usize).min(sorted.len() - 1);
    0.5 * (sorted[hi] - sorted[lo])
}

/// Exact minimal attack cost for each of `n_trials` Haar states.
/// States with no reachable misclassified point get cost `1`.
pub fn min_perturbation_survey(
    pair: &ClassifierPair,
    d: usize,
    n_trials: usize,
    stream: &RngStream,
) -> Result<PerturbationSurvey> {
    check_dim(pair.dim(), d)?;
    if n_trials == 0 {
        return Err(invalid("survey needs at least one trial"));
    }
    let (b, band) = threshold_pair(pair)?;
    let costs = par_trials(n_trials, stream, |_, rng| -> Result<f64> {
        let psi = sample_haar_state(d, rng)?;
        Ok(band.min_cost(b.overlap_sq(&psi)?).unwrap_or(1.0))
    });
    let costs_infidelity = costs.into_iter().collect::<Result<Vec<_>>>()?;
    let mut sorted = costs_infidelity.clone();
    sorted.sort_by(f64::total_cmp);
    let mut hs_sorted: Vec<f64> = sorted.iter().map(|&x| hs_for_infidelity(x)).collect();
    hs_sorted.sort_by(f64::total_cmp);
    let costs_hs = costs_infidelity.iter().map(|&x| hs_for_infidelity(x)).collect();
    Ok(PerturbationSurvey {
        median_infidelity: median_sorted(&sorted),
        median_std_error: median_std_error_sorted(&sorted),
        p90_infidelity: quantile_sorted(&sorted, 0.9),
        median_hs: median_sorted(&hs_sorted),
        p90_hs: quantile_sorted(&hs_sorted, 0.9),
        costs_infidelity,
        costs_hs,
        n_trials,
    })
}
