//! Binary classifiers over pure states and Monte Carlo risk estimation.
//!
//! Two families are supported. [`ObservableClassifier`] scores a state by
//! `Tr(𝒪 Λ(|ψ⟩⟨ψ|)) − θ`; [`FidelityThresholdClassifier`] scores it by
//! `|⟨b|ψ⟩|² − t`. Labels are the sign of the score, with a score of exactly
//! zero mapped to `+1`.

use serde::Serialize;

use crate::error::{check_dim, invalid, QvError, Result};
use crate::quantum::{apply_channel, expectation, CMatrix, Observable, PureState, QuantumChannel};
use crate::sampling::{par_trials, sample_haar_state, RngStream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum ClassLabel {
    Negative,
    Positive,
}

impl ClassLabel {
    pub fn from_score(score: f64) -> Self {
        if score >= 0.0 {
            ClassLabel::Positive
        } else {
            ClassLabel::Negative
        }
    }

    pub fn value(self) -> i8 {
        match self {
            ClassLabel::Negative => -1,
            ClassLabel::Positive => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObservableClassifier {
    channel: QuantumChannel,
    observable: Observable,
    threshold: f64,
    // Λ†(𝒪), so that the score is a quadratic form in ψ
    effective: CMatrix,
}

impl ObservableClassifier {
    pub fn new(channel: QuantumChannel, observable: Observable, threshold: f64) -> Result<Self> {
        check_dim(channel.dim_out(), observable.dim())?;
        if !threshold.is_finite() {
            return Err(invalid("threshold must be finite"));
        }
        let effective = channel.adjoint_apply(observable.matrix())?;
        Ok(Self { channel, observable, threshold, effective })
    }

    pub fn channel(&self) -> &QuantumChannel {
        &self.channel
    }

    pub fn observable(&self) -> &Observable {
        &self.observable
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    /// Score evaluated in the Schrödinger picture, `Tr(𝒪Λ(ρ)) − θ`.
    pub fn score_direct(&self, psi: &PureState) -> Result<f64> {
        let out = apply_channel(&self.channel, &psi.to_density())?;
        Ok(expectation(&self.observable, &out)? - self.threshold)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FidelityThresholdClassifier {
    reference: PureState,
    threshold: f64,
}

impl FidelityThresholdClassifier {
    pub fn new(reference: PureState, threshold: f64) -> Result<Self> {
        if !(threshold > 0.0 && threshold < 1.0) {
            return Err(invalid(format!("fidelity threshold {threshold} outside (0, 1)")));
        }
        Ok(Self { reference, threshold })
    }

    pub fn reference(&self) -> &PureState {
        &self.reference
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Classifier {
    Observable(ObservableClassifier),
    FidelityThreshold(FidelityThresholdClassifier),
}

impl Classifier {
    pub fn fidelity_threshold(reference: PureState, threshold: f64) -> Result<Self> {
        FidelityThresholdClassifier::new(reference, threshold).map(Classifier::FidelityThreshold)
    }

    pub fn observable(channel: QuantumChannel, observable: Observable, threshold: f64) -> Result<Self> {
        ObservableClassifier::new(channel, observable, threshold).map(Classifier::Observable)
    }

    pub fn dim(&self) -> usize {
        match self {
            Classifier::Observable(c) => c.channel.dim_in(),
            Classifier::FidelityThreshold(c) => c.reference.dim(),
        }
    }

    pub fn score(&self, psi: &PureState) -> Result<f64> {
        check_dim(self.dim(), psi.dim())?;
        Ok(match self {
            Classifier::Observable(c) => {
                let a = psi.amplitudes();
                a.dotc(&(&c.effective * a)).re - c.threshold
            }
            Classifier::FidelityThreshold(c) => c.reference.overlap_sq(psi)? - c.threshold,
        })
    }

    pub fn label(&self, psi: &PureState) -> Result<ClassLabel> {
        self.score(psi).map(ClassLabel::from_score)
    }

    /// The score written as `⟨ψ|A|ψ⟩ − offset`.
    pub fn quadratic_form(&self) -> (CMatrix, f64) {
        match self {
            Classifier::Observable(c) => (c.effective.clone(), c.threshold),
            Classifier::FidelityThreshold(c) => {
                let b = c.reference.amplitudes();
                (b * b.adjoint(), c.threshold)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierPair {
    pub hypothesis: Classifier,
    pub truth: Classifier,
}

impl ClassifierPair {
    pub fn new(hypothesis: Classifier, truth: Classifier) -> Result<Self> {
        check_dim(truth.dim(), hypothesis.dim())?;
        Ok(Self { hypothesis, truth })
    }

    /// Two fidelity-threshold classifiers sharing the reference `b`.
    pub fn thresholds(reference: PureState, t_h: f64, t_c: f64) -> Result<Self> {
        Self::new(
            Classifier::fidelity_threshold(reference.clone(), t_h)?,
            Classifier::fidelity_threshold(reference, t_c)?,
        )
    }

    pub fn dim(&self) -> usize {
        self.truth.dim()
    }

    pub fn misclassified(&self, psi: &PureState) -> Result<bool> {
        Ok(self.hypothesis.label(psi)? != self.truth.label(psi)?)
    }

    /// Both members as threshold classifiers, if that is what they are.
    pub fn as_thresholds(&self) -> Option<(&FidelityThresholdClassifier, &FidelityThresholdClassifier)> {
        match (&self.hypothesis, &self.truth) {
            (Classifier::FidelityThreshold(h), Classifier::FidelityThreshold(c)) => Some((h, c)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RiskEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n_trials: usize,
}

impl RiskEstimate {
    pub fn from_count(hits: usize, n_trials: usize) -> Self {
        let mean = hits as f64 / n_trials as f64;
        Self { mean, std_error: binomial_std_error(mean, n_trials), n_trials }
    }
}

pub fn binomial_std_error(p: f64, n: usize) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}

pub const MIN_TRIALS: usize = 100;

/// Fraction of Haar-random states on which `h` and `c` disagree.
pub fn estimate_risk(pair: &ClassifierPair, d: usize, n_trials: usize, stream: &RngStream) -> Result<RiskEstimate> {
    check_dim(pair.dim(), d)?;
    if n_trials < MIN_TRIALS {
        return Err(invalid(format!("need at least {MIN_TRIALS} trials, got {n_trials}")));
    }
    let flags = par_trials(n_trials, stream, |_, rng| {
        let psi = sample_haar_state(d, rng)?;
        pair.misclassified(&psi)
    });
    let mut hits = 0;
    for f in flags {
        hits += usize::from(f?);
    }
    Ok(RiskEstimate::from_count(hits, n_trials))
}

/// `P(|⟨b|ψ⟩|² > t) = (1 − t)^(d−1)` for Haar `ψ`.
pub fn overlap_survival(d: usize, t: f64) -> f64 {
    (1.0 - t).clamp(0.0, 1.0).powi(d as i32 - 1)
}

fn check_threshold(name: &str, t: f64) -> Result<()> {
    if t > 0.0 && t < 1.0 {
        Ok(())
    } else {
        Err(invalid(format!("{name} = {t} outside (0, 1)")))
    }
}

/// Exact risk of a fidelity-threshold pair sharing a reference.
pub fn analytic_risk_threshold(d: usize, t_c: f64, t_h: f64) -> Result<f64> {
    check_threshold("t_c", t_c)?;
    check_threshold("t_h", t_h)?;
    if d < 2 {
        return Err(QvError::DimensionOutOfRange(d, "d >= 2"));
    }
    Ok((overlap_survival(d, t_h) - overlap_survival(d, t_c)).abs())
}

/// Hypothesis threshold `t_h ≤ t_c` giving risk `target_mu` against truth `t_c`.
pub fn solve_threshold_for_risk(d: usize, t_c: f64, target_mu: f64) -> Result<f64> {
    check_threshold("t_c", t_c)?;
    if d < 2 {
        return Err(QvError::DimensionOutOfRange(d, "d >= 2"));
    }
    let top = overlap_survival(d, t_c);
    if !(0.0..1.0).contains(&target_mu) || top + target_mu >= 1.0 {
        return Err(invalid(format!(
            "risk {target_mu} is not reachable below t_c = {t_c} at d = {d} (needs mu < {})",
            1.0 - top
        )));
    }
    if target_mu == 0.0 {
        return Ok(t_c);
    }
    let goal = top + target_mu;
    let (mut lo, mut hi) = (0.0, t_c);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        // survival decreases in t
        if overlap_survival(d, mid) > goal {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-13 {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Truth threshold at the Haar median of `|⟨b|ψ⟩|²` and the hypothesis
/// threshold below it with risk `mu`.
pub fn tuned_threshold_pair(d: usize, mu: f64) -> Result<(f64, f64)> {
    if d < 2 {
        return Err(QvError::DimensionOutOfRange(d, "d >= 2"));
    }
    let t_c = 1.0 - 0.5f64.powf(1.0 / (d as f64 - 1.0));
    let t_h = solve_threshold_for_risk(d, t_c, mu)?;
    Ok((t_c, t_h))
}
