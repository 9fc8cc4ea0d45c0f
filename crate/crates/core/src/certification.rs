//! Fidelity certification by Pauli sampling, and average channel fidelity.
//!
//! Direct fidelity estimation draws Pauli labels `k` with probability
//! `χ_σ(k)²`, where `χ_σ(k) = Tr(σW_k)/√d`, measures `W_k` on copies of `ρ`
//! and averages `X_k = ⟨W_k⟩_ρ / (√d·χ_σ(k))`. The mean of `X` is `Tr(σρ)`,
//! which for a pure target is the squared fidelity.

use num_complex::Complex64;
use rand::distr::weighted::WeightedIndex;
use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::bounds::{fidelity_floor, settings_for_precision, BoundQuery};
use crate::classifier::binomial_std_error;
use crate::error::{check_dim, invalid, QvError, Result};
use crate::quantum::{c, CVector, DensityMatrix, PureState, QuantumChannel, UnitaryOperator};
use crate::sampling::{par_trials, sample_haar_state, sample_orthogonal_partner, RngStream};

pub const MAX_QUBITS: usize = 10;

/// Pruning threshold for `χ_σ(k)²` in the importance sampler.
const PRUNE: f64 = 1e-12;

/// A Pauli word `i^{#Y}·X^x·Z^z`; bit `n−1−q` of each mask belongs to qubit `q`,
/// so the first letter of the word acts on the most significant qubit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PauliLabel {
    n: usize,
    x: usize,
    z: usize,
}

impl PauliLabel {
    pub fn from_masks(n: usize, x: usize, z: usize) -> Result<Self> {
        if n == 0 || n > MAX_QUBITS || x >> n != 0 || z >> n != 0 {
            return Err(invalid(format!("bad Pauli masks ({x:#b}, {z:#b}) for {n} qubits")));
        }
        Ok(Self { n, x, z })
    }

    pub fn parse(word: &str) -> Result<Self> {
        let n = word.chars().count();
        let (mut x, mut z) = (0, 0);
        for ch in word.chars() {
            let (bx, bz) = match ch {
                'I' => (0, 0),
                'X' => (1, 0),
                'Y' => (1, 1),
                'Z' => (0, 1),
                _ => return Err(invalid(format!("bad Pauli letter {ch:?}"))),
            };
            x = (x << 1) | bx;
            z = (z << 1) | bz;
        }
        Self::from_masks(n, x, z)
    }

    pub fn qubit_count(&self) -> usize {
        self.n
    }

    pub fn word(&self) -> String {
        (0..self.n)
            .map(|q| {
                let bit = self.n - 1 - q;
                match ((self.x >> bit) & 1, (self.z >> bit) & 1) {
                    (0, 0) => 'I',
                    (1, 0) => 'X',
                    (1, 1) => 'Y',
                    _ => 'Z',
                }
            })
            .collect()
    }

    fn y_phase(&self) -> Complex64 {
        match (self.x & self.z).count_ones() % 4 {
            0 => c(1.0, 0.0),
            1 => c(0.0, 1.0),
            2 => c(-1.0, 0.0),
            _ => c(0.0, -1.0),
        }
    }
}

impl std::fmt::Display for PauliLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.word())
    }
}

fn qubits_for_dim(d: usize) -> Result<usize> {
    if d < 2 || !d.is_power_of_two() {
        return Err(invalid(format!("dimension {d} is not a power of two")));
    }
    let n = d.trailing_zeros() as usize;
    if n > MAX_QUBITS {
        return Err(QvError::DimensionOutOfRange(d, "2..=2^10"));
    }
    Ok(n)
}

/// `Tr(ρ W_k)`, real for Hermitian `ρ`.
fn pauli_expectation(rho: &DensityMatrix, k: PauliLabel) -> Result<f64> {
    let m = rho.matrix();
    let mut acc = c(0.0, 0.0);
    for j in 0..m.nrows() {
        let v = m[(j, j ^ k.x)];
        acc += if (k.z & j).count_ones() % 2 == 0 { v } else { -v };
    }
    let t = acc * k.y_phase();
    if t.im.abs() > 1e-9 {
        return Err(QvError::Numerical(format!("Pauli expectation has imaginary part {:e}", t.im)));
    }
    Ok(t.re)
}

/// `Tr(σ W_k)/√d`.
pub fn pauli_char(state: &DensityMatrix, k: PauliLabel) -> Result<f64> {
    let n = qubits_for_dim(state.dim())?;
    check_dim(n, k.n)?;
    Ok(pauli_expectation(state, k)? / (state.dim() as f64).sqrt())
}

fn walsh_hadamard(a: &mut [Complex64]) {
    let mut h = 1;
    while h < a.len() {
        for block in a.chunks_mut(2 * h) {
            let (lo, hi) = block.split_at_mut(h);
            for (u, v) in lo.iter_mut().zip(hi.iter_mut()) {
                let (s, t) = (*u + *v, *u - *v);
                *u = s;
                *v = t;
            }
        }
        h *= 2;
    }
}

/// Characteristic function of a pure state for every label, indexed by `x·d + z`.
pub fn pure_characteristic(psi: &PureState) -> Result<Vec<f64>> {
    let d = psi.dim();
    let n = qubits_for_dim(d)?;
    let s = psi.amplitudes();
    let scale = 1.0 / (d as f64).sqrt();
    let mut out = vec![0.0; d * d];
    let mut buf = vec![c(0.0, 0.0); d];
    for x in 0..d {
        for (j, b) in buf.iter_mut().enumerate() {
            *b = s[j] * s[j ^ x].conj();
        }
        walsh_hadamard(&mut buf);
        for z in 0..d {
            let k = PauliLabel { n, x, z };
            let t = buf[z] * k.y_phase();
            out[x * d + z] = t.re * scale;
        }
    }
    Ok(out)
}

/// Shots taken per sampled setting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShotSchedule {
    /// One shot per setting: settings and copies coincide.
    #[default]
    Single,
    PerSetting(u64),
    /// `m_k = ceil(2·ln(2/Δ)/(d·χ_σ(k)²·ℓ·η²))`, which keeps the shot noise of
    /// badly conditioned labels within the precision target.
    FlammiaLiu,
}

impl ShotSchedule {
    pub fn tag(&self) -> String {
        match self {
            ShotSchedule::Single => "single".into(),
            ShotSchedule::PerSetting(m) => format!("per-setting:{m}"),
            ShotSchedule::FlammiaLiu => "flammia-liu".into(),
        }
    }
}

impl std::str::FromStr for ShotSchedule {
    type Err = QvError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single" => Ok(ShotSchedule::Single),
            "flammia-liu" => Ok(ShotSchedule::FlammiaLiu),
            _ => match s.strip_prefix("per-setting:").map(str::parse::<u64>) {
                Some(Ok(m)) if m > 0 => Ok(ShotSchedule::PerSetting(m)),
                _ => Err(invalid(format!("unknown shot schedule {s:?}"))),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CertificationRun {
    /// Estimate of `Tr(σρ)`, the squared fidelity for a pure target.
    pub estimate: f64,
    /// The same estimate in the square-root convention, clamped to `[0, 1]`.
    pub estimate_sqrt: f64,
    pub target_precision: f64,
    pub fail_prob_target: f64,
    pub settings_used: u64,
    pub shots_used: u64,
}

/// Importance sampler over the Pauli labels of a pure target.
#[derive(Debug, Clone)]
pub struct DfeTarget {
    n: usize,
    d: usize,
    labels: Vec<PauliLabel>,
    chis: Vec<f64>,
    probs: Vec<f64>,
    dist: WeightedIndex<f64>,
}

impl DfeTarget {
    pub fn new(target: &PureState) -> Result<Self> {
        let d = target.dim();
        let n = qubits_for_dim(d)?;
        let chi = pure_characteristic(target)?;
        let (mut labels, mut chis, mut probs) = (Vec::new(), Vec::new(), Vec::new());
        for (idx, &v) in chi.iter().enumerate() {
            if v * v >= PRUNE {
                labels.push(PauliLabel { n, x: idx / d, z: idx % d });
                chis.push(v);
                probs.push(v * v);
            }
        }
        let total: f64 = probs.iter().sum();
        probs.iter_mut().for_each(|p| *p /= total);
        let dist = WeightedIndex::new(&probs).map_err(|e| QvError::Numerical(e.to_string()))?;
        Ok(Self { n, d, labels, chis, probs, dist })
    }

    pub fn qubit_count(&self) -> usize {
        self.n
    }

    pub fn support_size(&self) -> usize {
        self.labels.len()
    }

    /// One DFE run against `actual`, with `ceil(1/(Δη²))` settings.
    pub fn estimate<R: Rng + ?Sized>(
        &self,
        actual: &DensityMatrix,
        eta: f64,
        delta: f64,
        schedule: ShotSchedule,
        rng: &mut R,
    ) -> Result<CertificationRun> {
        check_dim(self.d, actual.dim())?;
        if !(eta > 0.0 && eta < 1.0) || !(delta > 0.0 && delta < 1.0) {
            return Err(invalid(format!("eta = {eta} and delta = {delta} must lie in (0, 1)")));
        }
        let settings = settings_for_precision(eta, delta);
        let sqrt_d = (self.d as f64).sqrt();
        let fl_numerator = 2.0 * (2.0 / delta).ln() / (self.d as f64 * settings as f64 * eta * eta);
        let mut cache: Vec<Option<f64>> = vec![None; self.labels.len()];
        let (mut sum, mut shots) = (0.0, 0u64);
        for _ in 0..settings {
            let i = self.dist.sample(rng);
            let e = match cache[i] {
                Some(e) => e,
                None => {
                    let e = pauli_expectation(actual, self.labels[i])?;
                    cache[i] = Some(e);
                    e
                }
            };
            let m = match schedule {
                ShotSchedule::Single => 1,
                ShotSchedule::PerSetting(m) => m,
                ShotSchedule::FlammiaLiu => (fl_numerator / self.probs[i]).ceil().max(1.0) as u64,
            };
            let p_plus = ((1.0 + e) / 2.0).clamp(0.0, 1.0);
            let plus = if m == 1 {
                u64::from(rng.random_bool(p_plus))
            } else {
                Binomial::new(m, p_plus).map_err(|e| QvError::Numerical(e.to_string()))?.sample(rng)
            };
            let mean_outcome = (2.0 * plus as f64 - m as f64) / m as f64;
            sum += mean_outcome / (sqrt_d * self.chis[i]);
            shots += m;
        }
        let estimate = sum / settings as f64;
        Ok(CertificationRun {
            estimate,
            estimate_sqrt: estimate.clamp(0.0, 1.0).sqrt(),
            target_precision: eta,
            fail_prob_target: delta,
            settings_used: settings,
            shots_used: shots,
        })
    }
}

/// One DFE run of `actual` against the pure `target`.
pub fn dfe_estimate(
    target: &PureState,
    actual: &DensityMatrix,
    eta: f64,
    delta: f64,
    schedule: ShotSchedule,
    stream: &RngStream,
) -> Result<CertificationRun> {
    DfeTarget::new(target)?.estimate(actual, eta, delta, schedule, &mut stream.rng())
}

/// `(Σ_k |Tr(U†K_k)|² + d)/(d(d+1))`, the Haar average of `⟨Ψ|U†Λ(|Ψ⟩⟨Ψ|)U|Ψ⟩`.
pub fn exact_average_channel_fidelity(target: &UnitaryOperator, actual: &QuantumChannel) -> Result<f64> {
    let d = target.dim();
    check_dim(d, actual.dim_in())?;
    check_dim(d, actual.dim_out())?;
    let ud = target.matrix().adjoint();
    let s: f64 = actual.kraus_ops().iter().map(|k| (&ud * k).trace().norm_sqr()).sum();
    let df = d as f64;
    Ok((s + df) / (df * (df + 1.0)))
}

/// Fidelity of one input: `Σ_k |⟨UΨ|K_k|Ψ⟩|²`.
fn input_fidelity(u: &UnitaryOperator, ch: &QuantumChannel, psi: &CVector) -> f64 {
    let phi = u.matrix() * psi;
    ch.kraus_ops().iter().map(|k| phi.dotc(&(k * psi)).norm_sqr()).sum()
}

/// Device calls for precision `delta_prec` at failure probability `fail_prob`.
pub fn channel_calls(delta_prec: f64, fail_prob: f64) -> u64 {
    settings_for_precision(delta_prec, fail_prob)
}

/// Average channel fidelity from `calls` Haar-random inputs (auto: `ceil(1/(Δ′δ²))`).
pub fn channel_fidelity_estimate(
    target: &UnitaryOperator,
    actual: &QuantumChannel,
    delta_prec: f64,
    fail_prob: f64,
    calls: Option<u64>,
    stream: &RngStream,
) -> Result<CertificationRun> {
    let d = target.dim();
    check_dim(d, actual.dim_in())?;
    check_dim(d, actual.dim_out())?;
    if !(delta_prec > 0.0 && delta_prec < 1.0) || !(fail_prob > 0.0 && fail_prob < 1.0) {
        return Err(invalid(format!("precision {delta_prec} and failure probability {fail_prob} must lie in (0, 1)")));
    }
    let calls = calls.unwrap_or_else(|| channel_calls(delta_prec, fail_prob));
    if calls == 0 {
        return Err(invalid("need at least one device call"));
    }
    let mut rng = stream.rng();
    let mut sum = 0.0;
    for _ in 0..calls {
        let psi = sample_haar_state(d, &mut rng)?;
        sum += input_fidelity(target, actual, psi.amplitudes());
    }
    let estimate = sum / calls as f64;
    Ok(CertificationRun {
        estimate,
        estimate_sqrt: estimate.clamp(0.0, 1.0).sqrt(),
        target_precision: delta_prec,
        fail_prob_target: fail_prob,
        settings_used: calls,
        shots_used: calls,
    })
}

/// Pure state at fidelity `f` from `sigma`, rotated toward `partner`.
pub fn state_at_fidelity(sigma: &PureState, partner: &CVector, f: f64) -> Result<PureState> {
    let f = f.clamp(0.0, 1.0);
    let v = sigma.amplitudes() * c(f, 0.0) + partner * c((1.0 - f * f).sqrt(), 0.0);
    PureState::normalized(v)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapReport {
    pub d: usize,
    pub n_qubits: usize,
    pub fidelity_floor: f64,
    pub vacuous: bool,
    /// Half the gap `1 − floor`.
    pub eta: f64,
    pub fail_prob: f64,
    pub schedule: String,
    pub runs: usize,
    pub settings_used: u64,
    /// `ceil(1/(Δη²))` at the experiment's `η`.
    pub settings_required: u64,
    pub n_state_min: u64,
    pub mean_shots: f64,
    pub honest_accept_rate: f64,
    /// Adversarial state at fidelity exactly the floor.
    pub floor_reject_rate: f64,
    /// Adversarial state at fidelity `floor − 0.05`.
    pub below_floor_reject_rate: f64,
    pub reject_rate_std_error: f64,
}

/// Runs DFE on an honest copy of a Haar target and on adversarial states at
/// (and 0.05 below) the fidelity floor. A run accepts when the squared-fidelity
/// estimate is at least `1 − η`, with `η` half the gap below unit fidelity.
pub fn certification_gap_experiment(
    d: usize,
    mu: f64,
    risk_cap: f64,
    fail_prob: f64,
    runs: usize,
    schedule: ShotSchedule,
    stream: &RngStream,
) -> Result<GapReport> {
    let n = qubits_for_dim(d)?;
    if n > 6 {
        return Err(QvError::DimensionOutOfRange(d, "2..=64"));
    }
    if runs == 0 {
        return Err(invalid("need at least one run"));
    }
    let q = BoundQuery::new(d, mu, risk_cap, fail_prob)?;
    let floor = fidelity_floor(&q)?;
    let n_state_min = crate::bounds::n_state_min(&q)?;
    let eta = (1.0 - floor.clamped) / 2.0;
    let mut report = GapReport {
        d,
        n_qubits: n,
        fidelity_floor: floor.raw,
        vacuous: floor.vacuous,
        eta,
        fail_prob,
        schedule: schedule.tag(),
        runs,
        settings_used: 0,
        settings_required: 0,
        n_state_min,
        mean_shots: 0.0,
        honest_accept_rate: f64::NAN,
        floor_reject_rate: f64::NAN,
        below_floor_reject_rate: f64::NAN,
        reject_rate_std_error: f64::NAN,
    };
    if floor.vacuous || eta >= 1.0 {
        return Ok(report);
    }
    report.settings_required = settings_for_precision(eta, fail_prob);

    let mut setup = stream.substream(0).rng();
    let sigma = sample_haar_state(d, &mut setup)?;
    let partner = sample_orthogonal_partner(sigma.amplitudes(), &mut setup);
    let at_floor = state_at_fidelity(&sigma, &partner, floor.raw)?.to_density();
    let below = state_at_fidelity(&sigma, &partner, floor.raw - 0.05)?.to_density();
    let honest = sigma.to_density();
    let target = DfeTarget::new(&sigma)?;

    let outcomes = par_trials(runs, &stream.substream(1), |_, rng| -> Result<(bool, bool, bool, u64, u64)> {
        let a = target.estimate(&honest, eta, fail_prob, schedule, rng)?;
        let b = target.estimate(&at_floor, eta, fail_prob, schedule, rng)?;
        let c = target.estimate(&below, eta, fail_prob, schedule, rng)?;
        let accept = |r: &CertificationRun| r.estimate >= 1.0 - eta;
        Ok((accept(&a), !accept(&b), !accept(&c), a.settings_used, a.shots_used + b.shots_used + c.shots_used))
    });
    let (mut acc, mut rej_floor, mut rej_below, mut shots) = (0, 0, 0, 0u64);
    for o in outcomes {
        let (a, b, c, settings, s) = o?;
        acc += usize::from(a);
        rej_floor += usize::from(b);
        rej_below += usize::from(c);
        shots += s;
        report.settings_used = settings;
    }
    let r = runs as f64;
    report.honest_accept_rate = acc as f64 / r;
    report.floor_reject_rate = rej_floor as f64 / r;
    report.below_floor_reject_rate = rej_below as f64 / r;
    report.reject_rate_std_error = binomial_std_error(report.floor_reject_rate, runs);
    report.mean_shots = shots as f64 / (3.0 * r);
    Ok(report)
}
