//! Haar-distributed random objects drawn from counter-indexed ChaCha substreams.
//!
//! Every random draw in the crate flows from an [`RngStream`]. A stream is a
//! `(master_seed, stream_index)` pair; the index selects a ChaCha stream, so
//! trial `i` of an experiment always sees the same numbers no matter which
//! worker thread runs it.

use std::f64::consts::PI;

use nalgebra::SymmetricEigen;
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, invalid, QvError, Result};
use crate::quantum::{
    c, hs_distance, planar_rotation, CMatrix, CVector, Observable, PureState, QuantumChannel, UnitaryOperator,
    MAX_MATRIX_DIM,
};

/// Largest dimension for vector-only sampling.
pub const MAX_STATE_DIM: usize = 16384;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub master_seed: u64,
    pub stream_index: u64,
}

impl RngStream {
    pub fn new(master_seed: u64, stream_index: u64) -> Self {
        Self { master_seed, stream_index }
    }

    /// Stream keyed by a name, e.g. the subcommand that owns it.
    pub fn named(master_seed: u64, name: &str) -> Self {
        // FNV-1a
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for byte in name.bytes() {
            h ^= u64::from(byte);
            h = h.wrapping_mul(0x0000_0100_0000_01B3);
        }
        Self { master_seed: splitmix64(master_seed ^ h), stream_index: 0 }
    }

    /// Child stream `index`, independent of the parent and of its siblings.
    pub fn substream(&self, index: u64) -> Self {
        let key = splitmix64(self.master_seed ^ splitmix64(self.stream_index.wrapping_add(0xA076_1D64_78BD_642F)));
        Self { master_seed: key, stream_index: index }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(self.stream_index);
        rng
    }
}

/// Runs `n` independent trials in parallel, trial `i` on `stream.substream(i)`.
/// Results come back in trial order, so the output does not depend on the
/// size of the worker pool.
pub fn par_trials<T, F>(n: usize, stream: &RngStream, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize, &mut ChaCha8Rng) -> T + Sync + Send,
{
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream.substream(i as u64).rng();
            f(i, &mut rng)
        })
        .collect()
}

pub(crate) fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    c(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

fn ginibre<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> CMatrix {
    // column-major fill keeps the draw order fixed
    CMatrix::from_fn(rows, cols, |_, _| complex_gaussian(rng))
}

/// Orthonormal columns from a QR factorization with the diagonal of `R` made positive.
fn haar_isometry<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> CMatrix {
    let qr = ginibre(rows, cols, rng).qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..cols {
        let rjj = r[(j, j)];
        let n = rjj.norm();
        let phase = if n > 0.0 { rjj / n } else { c(1.0, 0.0) };
        q.column_mut(j).iter_mut().for_each(|x| *x *= phase);
    }
    q
}

pub fn sample_haar_unitary<R: Rng + ?Sized>(d: usize, special: bool, rng: &mut R) -> Result<UnitaryOperator> {
    if !(2..=MAX_MATRIX_DIM).contains(&d) {
        return Err(QvError::DimensionOutOfRange(d, "2..=1024"));
    }
    let mut q = haar_isometry(d, d, rng);
    if special {
        let det = q.clone().determinant();
        // principal branch of det^(-1/d)
        let fix = C64::from_polar(1.0, -det.arg() / d as f64);
        q.iter_mut().for_each(|x| *x *= fix);
    }
    Ok(UnitaryOperator::from_unchecked(q, special))
}

/// Haar-random element of U(d), or of SU(d) when `special` is set.
pub fn haar_unitary(d: usize, special: bool, stream: &RngStream) -> Result<UnitaryOperator> {
    sample_haar_unitary(d, special, &mut stream.rng())
}

pub fn sample_haar_state<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Result<PureState> {
    if !(2..=MAX_STATE_DIM).contains(&d) {
        return Err(QvError::DimensionOutOfRange(d, "2..=16384"));
    }
    loop {
        let v = CVector::from_fn(d, |_, _| complex_gaussian(rng));
        if let Ok(psi) = PureState::normalized(v) {
            return Ok(psi);
        }
    }
}

/// Haar-random pure state: a normalized complex Gaussian vector. Its law is
/// that of `U|b⟩` for Haar `U` and any fixed `|b⟩`.
pub fn haar_state(d: usize, stream: &RngStream) -> Result<PureState> {
    sample_haar_state(d, &mut stream.rng())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PerturbationMode {
    HaarDirection,
    Planar,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSpec {
    pub magnitude_hs: f64,
    pub mode: PerturbationMode,
}

impl PerturbationSpec {
    pub fn new(magnitude_hs: f64, mode: PerturbationMode) -> Self {
        Self { magnitude_hs, mode }
    }
}

/// Rotation angle of a planar unitary at HS distance `eps` from the identity,
/// from `4(1 − cos θ) = ε²`.
pub fn planar_angle_for_hs(eps: f64) -> Result<f64> {
    if !(0.0..=8f64.sqrt() + 1e-12).contains(&eps) {
        return Err(invalid(format!("planar rotations reach HS distance at most 2√2, got {eps}")));
    }
    Ok((1.0 - eps * eps / 4.0).clamp(-1.0, 1.0).acos())
}

/// A unit vector orthogonal to `b`, drawn uniformly from the orthogonal complement.
pub fn sample_orthogonal_partner<R: Rng + ?Sized>(b: &CVector, rng: &mut R) -> CVector {
    loop {
        let w = CVector::from_fn(b.len(), |_, _| complex_gaussian(rng));
        let w = &w - b * b.dotc(&w);
        let n = w.norm();
        if n > 1e-8 {
            return w.unscale(n);
        }
    }
}

const BISECT_TOL: f64 = 1e-12;
const BISECT_ITERS: usize = 60;

fn hs_along_spectrum(eigs: &[f64], t: f64) -> f64 {
    eigs.iter().map(|&l| 4.0 * (0.5 * t * l).sin().powi(2)).sum::<f64>().sqrt()
}

fn haar_direction_perturbation<R: Rng + ?Sized>(d: usize, eps: f64, rng: &mut R) -> Result<UnitaryOperator> {
    for _attempt in 0..8 {
        let g = ginibre(d, d, rng);
        let mut h = (&g + g.adjoint()).scale(0.5);
        let tr = h.trace() / d as f64;
        for i in 0..d {
            h[(i, i)] -= tr;
        }
        let n = h.norm();
        h.unscale_mut(n);
        let eig = SymmetricEigen::new(h);
        let lambdas: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        let lmax = lambdas.iter().fold(0.0f64, |m, l| m.max(l.abs()));
        let step = 0.25 / lmax;

        // march until the distance passes eps, then bisect inside the bracket
        let mut lo = 0.0;
        let mut bracket = None;
        for k in 1..=20_000 {
            let t = k as f64 * step;
            if hs_along_spectrum(&lambdas, t) >= eps {
                bracket = Some((lo, t));
                break;
            }
            lo = t;
        }
        let Some((mut a, mut b)) = bracket else { continue };
        let mut t = b;
        for _ in 0..BISECT_ITERS {
            t = 0.5 * (a + b);
            let f = hs_along_spectrum(&lambdas, t);
            if (f - eps).abs() <= BISECT_TOL {
                break;
            }
            if f < eps {
                a = t;
            } else {
                b = t;
            }
        }
        let w = &eig.eigenvectors;
        let phases = CVector::from_iterator(d, lambdas.iter().map(|&l| C64::from_polar(1.0, t * l)));
        let v = w * CMatrix::from_diagonal(&phases) * w.adjoint();
        return Ok(UnitaryOperator::from_unchecked(v, true));
    }
    Err(QvError::Numerical(format!("HS magnitude {eps} not reachable along sampled directions")))
}

pub fn sample_perturbation_unitary<R: Rng + ?Sized>(
    d: usize,
    spec: &PerturbationSpec,
    b: Option<&PureState>,
    rng: &mut R,
) -> Result<UnitaryOperator> {
    if !(2..=MAX_MATRIX_DIM).contains(&d) {
        return Err(QvError::DimensionOutOfRange(d, "2..=1024"));
    }
    let eps = spec.magnitude_hs;
    let diameter = 2.0 * (d as f64).sqrt();
    if !(0.0..=diameter + 1e-12).contains(&eps) {
        return Err(invalid(format!("perturbation magnitude {eps} exceeds the diameter 2√d = {diameter}")));
    }
    let v = match spec.mode {
        PerturbationMode::Planar => {
            let b = b.ok_or_else(|| invalid("planar perturbation needs a reference state"))?;
            check_dim(d, b.dim())?;
            let theta = planar_angle_for_hs(eps)?;
            if eps == 0.0 {
                return Ok(UnitaryOperator::identity(d));
            }
            let partner = sample_orthogonal_partner(b.amplitudes(), rng);
            UnitaryOperator::from_unchecked(planar_rotation(b.amplitudes(), &partner, theta), true)
        }
        PerturbationMode::HaarDirection => {
            if eps == 0.0 {
                return Ok(UnitaryOperator::identity(d));
            }
            haar_direction_perturbation(d, eps, rng)?
        }
    };
    let got = hs_distance(&v, &UnitaryOperator::identity(d))?;
    if (got - eps).abs() > 1e-9 {
        return Err(QvError::Numerical(format!("perturbation landed at HS distance {got}, wanted {eps}")));
    }
    Ok(v)
}

/// `V ∈ SU(d)` at Hilbert-Schmidt distance `spec.magnitude_hs` from the identity.
pub fn perturbation_unitary(
    d: usize,
    spec: &PerturbationSpec,
    b: Option<&PureState>,
    stream: &RngStream,
) -> Result<UnitaryOperator> {
    sample_perturbation_unitary(d, spec, b, &mut stream.rng())
}

pub fn sample_random_channel<R: Rng + ?Sized>(d: usize, kraus_rank: usize, rng: &mut R) -> Result<QuantumChannel> {
    if !(1..=MAX_MATRIX_DIM).contains(&d) {
        return Err(QvError::DimensionOutOfRange(d, "1..=1024"));
    }
    if kraus_rank == 0 || kraus_rank > d * d {
        return Err(invalid(format!("Kraus rank {kraus_rank} outside 1..={}", d * d)));
    }
    // Stinespring: first d columns of a Haar unitary on d·r dimensions.
    let v = haar_isometry(d * kraus_rank, d, rng);
    let kraus = (0..kraus_rank).map(|k| v.rows(k * d, d).into_owned()).collect();
    QuantumChannel::new(kraus)
}

/// Random CPTP map with `kraus_rank` Kraus operators.
pub fn random_channel(d: usize, kraus_rank: usize, stream: &RngStream) -> Result<QuantumChannel> {
    sample_random_channel(d, kraus_rank, &mut stream.rng())
}

/// Random positive semidefinite observable `GG†/d` with `G` Ginibre.
pub fn sample_psd_observable<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Observable {
    let g = ginibre(d, d, rng);
    Observable::new((&g * g.adjoint()).unscale(d as f64)).expect("GG† is Hermitian")
}

/// Random Hermitian observable with standard normal GUE-like entries.
pub fn sample_hermitian_observable<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Observable {
    let g = ginibre(d, d, rng);
    Observable::new((&g + g.adjoint()).scale(0.5)).expect("G + G† is Hermitian")
}

/// Uniform angle in `[0, 2π)`.
pub fn sample_phase<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.random::<f64>() * 2.0 * PI
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::max_abs_entry;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn unitary_and_special() {
        let s = RngStream::new(7, 0);
        for d in [2, 3, 5, 16] {
            for i in 0..20 {
                let u = haar_unitary(d, true, &s.substream(i)).unwrap();
                let dev = max_abs_entry(&(u.matrix().adjoint() * u.matrix() - CMatrix::identity(d, d)));
                assert!(dev <= 1e-10 * d as f64);
                assert!((u.determinant() - c(1.0, 0.0)).norm() <= 1e-8);
                UnitaryOperator::new(u.matrix().clone(), true).unwrap();
            }
        }
        assert!(haar_unitary(1, true, &s).is_err());
        assert!(haar_unitary(1025, true, &s).is_err());
    }

    #[test]
    fn streams_are_deterministic_and_distinct() {
        let a = haar_state(8, &RngStream::new(1, 3)).unwrap();
        let b = haar_state(8, &RngStream::new(1, 3)).unwrap();
        let other = haar_state(8, &RngStream::new(1, 4)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, other);
        assert_ne!(RngStream::new(1, 0).substream(0), RngStream::new(1, 1).substream(0));
        assert_ne!(RngStream::named(1, "risk"), RngStream::named(1, "attack"));
    }

    #[test]
    fn state_norm_and_range() {
        let psi = haar_state(17, &RngStream::new(2, 0)).unwrap();
        assert_abs_diff_eq!(psi.amplitudes().norm(), 1.0, epsilon = 1e-12);
        assert!(haar_state(1, &RngStream::new(2, 0)).is_err());
        assert!(haar_state(MAX_STATE_DIM + 1, &RngStream::new(2, 0)).is_err());
        assert!(haar_state(2048, &RngStream::new(2, 0)).is_ok());
    }

    #[test]
    fn perturbation_examples() {
        let s = RngStream::new(3, 0);
        let zero = PureState::basis(2, 0).unwrap();
        let v = perturbation_unitary(2, &PerturbationSpec::new(0.0, PerturbationMode::Planar), Some(&zero), &s).unwrap();
        assert_eq!(v, UnitaryOperator::identity(2));
        assert_abs_diff_eq!(planar_angle_for_hs(2.0).unwrap(), FRAC_PI_2, epsilon = 1e-15);
        let v = perturbation_unitary(2, &PerturbationSpec::new(2.0, PerturbationMode::Planar), Some(&zero), &s).unwrap();
        let moved = v.apply(&zero).unwrap();
        assert_abs_diff_eq!(zero.inner(&moved).unwrap().norm(), 0.0, epsilon = 1e-12);

        for (i, eps) in [0.05, 0.5, 1.3, 2.0, 3.5].into_iter().enumerate() {
            let spec = PerturbationSpec::new(eps, PerturbationMode::HaarDirection);
            let v = perturbation_unitary(6, &spec, None, &s.substream(i as u64)).unwrap();
            let h = hs_distance(&v, &UnitaryOperator::identity(6)).unwrap();
            assert_abs_diff_eq!(h, eps, epsilon = 1e-9);
            assert!((v.determinant() - c(1.0, 0.0)).norm() < 1e-8);
        }
    }

    #[test]
    fn perturbation_errors() {
        let s = RngStream::new(3, 0);
        let spec = PerturbationSpec::new(1.0, PerturbationMode::Planar);
        assert!(perturbation_unitary(4, &spec, None, &s).is_err());
        let too_big = PerturbationSpec::new(2.0 * 2f64.sqrt() + 0.1, PerturbationMode::HaarDirection);
        assert!(perturbation_unitary(2, &too_big, None, &s).is_err());
        let b = PureState::basis(4, 0).unwrap();
        let beyond_planar = PerturbationSpec::new(3.5, PerturbationMode::Planar);
        assert!(perturbation_unitary(4, &beyond_planar, Some(&b), &s).is_err());
    }

    #[test]
    fn channel_examples() {
        let s = RngStream::new(4, 0);
        let ch = random_channel(3, 1, &s).unwrap();
        UnitaryOperator::new(ch.kraus_ops()[0].clone(), false).unwrap();
        let ch = random_channel(4, 7, &s).unwrap();
        assert_eq!(ch.kraus_ops().len(), 7);
        let rho = haar_state(4, &s).unwrap().to_density();
        let out = crate::quantum::apply_channel(&ch, &rho).unwrap();
        assert_abs_diff_eq!(out.matrix().trace().re, 1.0, epsilon = 1e-9);
        assert!(random_channel(2, 5, &s).is_err());
        assert!(random_channel(2, 0, &s).is_err());
    }
}
