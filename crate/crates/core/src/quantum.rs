//! Dense representations of states, unitaries, channels and observables,
//! together with the distance measures used throughout the crate.
//!
//! Fidelity follows the amplitude convention `F(ψ, φ) = |⟨ψ|φ⟩|`; the squared
//! value is available through [`fidelity_squared`]. Hilbert-Schmidt distances
//! are unnormalized unless [`HsConvention::Normalized`] is requested.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, invalid, QvError, Result};

pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// Largest dimension accepted by matrix-level operations.
pub const MAX_MATRIX_DIM: usize = 1024;

const NORM_TOL: f64 = 1e-10;
const HERM_TOL: f64 = 1e-10;
const PSD_TOL: f64 = 1e-10;

pub(crate) fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub(crate) fn max_abs_entry(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn hermitian_deviation(m: &CMatrix) -> f64 {
    max_abs_entry(&(m - m.adjoint()))
}

fn hermitize(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()).scale(0.5)
}

/// Eigenvalues of a Hermitian matrix (ascending order is not guaranteed).
pub fn hermitian_eigenvalues(m: &CMatrix) -> DVector<f64> {
    SymmetricEigen::new(hermitize(m)).eigenvalues
}

fn psd_sqrt(m: &CMatrix) -> CMatrix {
    let eig = SymmetricEigen::new(hermitize(m));
    let v = &eig.eigenvectors;
    let roots = eig.eigenvalues.map(|x| C64::from(x.max(0.0).sqrt()));
    v * CMatrix::from_diagonal(&roots) * v.adjoint()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PureState {
    amps: CVector,
}

impl PureState {
    pub fn new(amps: CVector) -> Result<Self> {
        if amps.is_empty() {
            return Err(invalid("empty state vector"));
        }
        let norm = amps.norm();
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(QvError::NotNormalized(norm));
        }
        Ok(Self { amps })
    }

    /// Rescales a nonzero vector to unit norm.
    pub fn normalized(amps: CVector) -> Result<Self> {
        let norm = amps.norm();
        if !norm.is_finite() || norm < 1e-300 {
            return Err(QvError::NotNormalized(norm));
        }
        Ok(Self { amps: amps.unscale(norm) })
    }

    pub(crate) fn from_normalized_unchecked(amps: CVector) -> Self {
        debug_assert!((amps.norm() - 1.0).abs() < 1e-8);
        Self { amps }
    }

    /// Computational basis state `|k⟩`.
    pub fn basis(dim: usize, k: usize) -> Result<Self> {
        if k >= dim {
            return Err(invalid(format!("basis index {k} out of range for d = {dim}")));
        }
        let mut amps = CVector::zeros(dim);
        amps[k] = c(1.0, 0.0);
        Ok(Self { amps })
    }

    pub fn from_real(values: &[f64]) -> Result<Self> {
        Self::new(CVector::from_iterator(values.len(), values.iter().map(|&x| c(x, 0.0))))
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &CVector {
        &self.amps
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &PureState) -> Result<C64> {
        check_dim(self.dim(), other.dim())?;
        Ok(self.amps.dotc(&other.amps))
    }

    /// `|⟨self|other⟩|²`.
    pub fn overlap_sq(&self, other: &PureState) -> Result<f64> {
        Ok(self.inner(other)?.norm_sqr())
    }

    pub fn with_global_phase(&self, alpha: f64) -> Self {
        Self { amps: self.amps.map(|z| z * C64::from_polar(1.0, alpha)) }
    }

    pub fn to_density(&self) -> DensityMatrix {
        DensityMatrix { m: &self.amps * self.amps.adjoint() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    m: CMatrix,
}

impl DensityMatrix {
    pub fn new(m: CMatrix) -> Result<Self> {
        Self::validated(m, PSD_TOL)
    }

    fn validated(m: CMatrix, tol: f64) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(QvError::DimensionMismatch { expected: m.nrows(), found: m.ncols() });
        }
        let dev = hermitian_deviation(&m);
        if dev > HERM_TOL.max(tol) {
            return Err(QvError::NotHermitian(dev));
        }
        let tr = m.trace();
        if (tr.re - 1.0).abs() > tol || tr.im.abs() > tol {
            return Err(QvError::BadTrace(tr.re));
        }
        let m = hermitize(&m);
        let min_eig = hermitian_eigenvalues(&m).min();
        if min_eig < -tol {
            return Err(QvError::NotPositive(min_eig));
        }
        Ok(Self { m })
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        Self { m: CMatrix::identity(dim, dim).unscale(dim as f64) }
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.m
    }

    pub fn purity(&self) -> f64 {
        (&self.m * &self.m).trace().re
    }
}

impl From<&PureState> for DensityMatrix {
    fn from(psi: &PureState) -> Self {
        psi.to_density()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnitaryOperator {
    m: CMatrix,
    special: bool,
}

impl UnitaryOperator {
    /// Validates `U†U = I` (max-entry tolerance `1e-10·d`) and, when
    /// `special` is set, `|det U − 1| ≤ 1e-8`.
    pub fn new(m: CMatrix, special: bool) -> Result<Self> {
        let d = m.nrows();
        check_dim(d, m.ncols())?;
        let dev = max_abs_entry(&(m.adjoint() * &m - CMatrix::identity(d, d)));
        if dev > 1e-10 * d as f64 {
            return Err(QvError::NotUnitary(dev));
        }
        if special {
            let det = m.clone().determinant();
            if (det - c(1.0, 0.0)).norm() > 1e-8 {
                return Err(QvError::NotSpecial(format!("{det}")));
            }
        }
        Ok(Self { m, special })
    }

    pub(crate) fn from_unchecked(m: CMatrix, special: bool) -> Self {
        Self { m, special }
    }

    pub fn identity(dim: usize) -> Self {
        Self { m: CMatrix::identity(dim, dim), special: true }
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.m
    }

    pub fn is_special(&self) -> bool {
        self.special
    }

    pub fn adjoint(&self) -> Self {
        Self { m: self.m.adjoint(), special: self.special }
    }

    /// Matrix product `self · other`.
    pub fn compose(&self, other: &UnitaryOperator) -> Result<Self> {
        check_dim(self.dim(), other.dim())?;
        Ok(Self { m: &self.m * &other.m, special: self.special && other.special })
    }

    pub fn apply(&self, psi: &PureState) -> Result<PureState> {
        check_dim(self.dim(), psi.dim())?;
        let out = &self.m * psi.amplitudes();
        Ok(PureState::normalized(out).expect("unitary image of a unit vector"))
    }

    pub fn determinant(&self) -> C64 {
        self.m.clone().determinant()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantumChannel {
    dim_in: usize,
    dim_out: usize,
    kraus: Vec<CMatrix>,
}

impl QuantumChannel {
    /// Builds a channel from Kraus operators, checking `Σ K†K = I` to `1e-9·d_in`.
    pub fn new(kraus: Vec<CMatrix>) -> Result<Self> {
        let first = kraus.first().ok_or_else(|| invalid("channel needs at least one Kraus operator"))?;
        let (dim_out, dim_in) = first.shape();
        let mut acc = CMatrix::zeros(dim_in, dim_in);
        for k in &kraus {
            check_dim(dim_out, k.nrows())?;
            check_dim(dim_in, k.ncols())?;
            acc += k.adjoint() * k;
        }
        let dev = max_abs_entry(&(acc - CMatrix::identity(dim_in, dim_in)));
        if dev > 1e-9 * dim_in as f64 {
            return Err(QvError::NotTracePreserving(dev));
        }
        Ok(Self { dim_in, dim_out, kraus })
    }

    pub fn identity(dim: usize) -> Self {
        Self { dim_in: dim, dim_out: dim, kraus: vec![CMatrix::identity(dim, dim)] }
    }

    pub fn from_unitary(u: &UnitaryOperator) -> Self {
        Self { dim_in: u.dim(), dim_out: u.dim(), kraus: vec![u.matrix().clone()] }
    }

    pub fn dim_in(&self) -> usize {
        self.dim_in
    }

    pub fn dim_out(&self) -> usize {
        self.dim_out
    }

    pub fn kraus_ops(&self) -> &[CMatrix] {
        &self.kraus
    }

    /// Heisenberg-picture action `Σ K† O K` on an output-side operator.
    pub fn adjoint_apply(&self, op: &CMatrix) -> Result<CMatrix> {
        check_dim(self.dim_out, op.nrows())?;
        let mut acc = CMatrix::zeros(self.dim_in, self.dim_in);
        for k in &self.kraus {
            acc += k.adjoint() * op * k;
        }
        Ok(acc)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observable {
    m: CMatrix,
    trace_value: f64,
}

impl Observable {
    pub fn new(m: CMatrix) -> Result<Self> {
        check_dim(m.nrows(), m.ncols())?;
        let dev = hermitian_deviation(&m);
        if dev > HERM_TOL {
            return Err(QvError::NotHermitian(dev));
        }
        let m = hermitize(&m);
        let trace_value = m.trace().re;
        Ok(Self { m, trace_value })
    }

    pub fn diagonal(values: &[f64]) -> Self {
        let m = CMatrix::from_diagonal(&CVector::from_iterator(values.len(), values.iter().map(|&x| c(x, 0.0))));
        let trace_value = values.iter().sum();
        Self { m, trace_value }
    }

    /// Pauli Z on a single qubit.
    pub fn pauli_z() -> Self {
        Self::diagonal(&[1.0, -1.0])
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.m
    }

    pub fn trace_value(&self) -> f64 {
        self.trace_value
    }

    pub fn is_psd(&self) -> bool {
        hermitian_eigenvalues(&self.m).min() >= -PSD_TOL
    }
}

/// Borrowed view over either kind of state, so metric functions accept both.
#[derive(Debug, Clone, Copy)]
pub enum StateRef<'a> {
    Pure(&'a PureState),
    Mixed(&'a DensityMatrix),
}

impl StateRef<'_> {
    pub fn dim(&self) -> usize {
        match self {
            StateRef::Pure(p) => p.dim(),
            StateRef::Mixed(m) => m.dim(),
        }
    }
}

impl<'a> From<&'a PureState> for StateRef<'a> {
    fn from(p: &'a PureState) -> Self {
        StateRef::Pure(p)
    }
}

impl<'a> From<&'a DensityMatrix> for StateRef<'a> {
    fn from(m: &'a DensityMatrix) -> Self {
        StateRef::Mixed(m)
    }
}

fn expectation_in_pure(psi: &PureState, rho: &DensityMatrix) -> f64 {
    let a = psi.amplitudes();
    a.dotc(&(rho.matrix() * a)).re
}

/// Uhlmann fidelity in the amplitude convention; symmetric in its arguments.
pub fn fidelity<'a, 'b>(a: impl Into<StateRef<'a>>, b: impl Into<StateRef<'b>>) -> Result<f64> {
    let (a, b) = (a.into(), b.into());
    check_dim(a.dim(), b.dim())?;
    let f = match (a, b) {
        (StateRef::Pure(x), StateRef::Pure(y)) => x.inner(y)?.norm(),
        (StateRef::Pure(x), StateRef::Mixed(r)) | (StateRef::Mixed(r), StateRef::Pure(x)) => {
            expectation_in_pure(x, r).max(0.0).sqrt()
        }
        (StateRef::Mixed(r), StateRef::Mixed(s)) => {
            let sr = psd_sqrt(r.matrix());
            let inner = &sr * s.matrix() * &sr;
            hermitian_eigenvalues(&inner).iter().map(|&x| x.max(0.0).sqrt()).sum()
        }
    };
    Ok(f.clamp(0.0, 1.0))
}

/// Squared fidelity, e.g. `|⟨ψ|φ⟩|²` for pure states.
pub fn fidelity_squared<'a, 'b>(a: impl Into<StateRef<'a>>, b: impl Into<StateRef<'b>>) -> Result<f64> {
    fidelity(a, b).map(|f| f * f)
}

/// Half the trace norm of `a − b`.
pub fn trace_distance(a: &DensityMatrix, b: &DensityMatrix) -> Result<f64> {
    check_dim(a.dim(), b.dim())?;
    let diff = a.matrix() - b.matrix();
    let t: f64 = hermitian_eigenvalues(&diff).iter().map(|x| x.abs()).sum::<f64>() * 0.5;
    Ok(t.clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HsConvention {
    /// `sqrt(Tr((u₁−u₂)†(u₁−u₂)))`.
    #[default]
    #[serde(alias = "unnorm")]
    Unnormalized,
    /// Unnormalized distance divided by `√d`.
    #[serde(alias = "norm")]
    Normalized,
}

impl HsConvention {
    pub fn tag(self) -> &'static str {
        match self {
            HsConvention::Unnormalized => "unnorm",
            HsConvention::Normalized => "norm",
        }
    }
}

/// Unnormalized Hilbert-Schmidt distance, `sqrt(2d − 2 Re Tr(u₁†u₂))`.
pub fn hs_distance(u1: &UnitaryOperator, u2: &UnitaryOperator) -> Result<f64> {
    hs_distance_with(u1, u2, HsConvention::Unnormalized)
}

pub fn hs_distance_with(u1: &UnitaryOperator, u2: &UnitaryOperator, conv: HsConvention) -> Result<f64> {
    check_dim(u1.dim(), u2.dim())?;
    // Frobenius norm of the difference; same value as the trace formula without the cancellation.
    let h = (u1.matrix() - u2.matrix()).norm();
    Ok(match conv {
        HsConvention::Unnormalized => h,
        HsConvention::Normalized => h / (u1.dim() as f64).sqrt(),
    })
}

/// `Σₖ Kₖ ρ Kₖ†`.
pub fn apply_channel(ch: &QuantumChannel, rho: &DensityMatrix) -> Result<DensityMatrix> {
    check_dim(ch.dim_in(), rho.dim())?;
    let mut out = CMatrix::zeros(ch.dim_out(), ch.dim_out());
    for k in ch.kraus_ops() {
        out += k * rho.matrix() * k.adjoint();
    }
    DensityMatrix::validated(out, 1e-9 * ch.dim_in() as f64)
}

/// `Re Tr(𝒪ρ)`; fails if the imaginary residue exceeds `1e-9`.
pub fn expectation(obs: &Observable, rho: &DensityMatrix) -> Result<f64> {
    check_dim(obs.dim(), rho.dim())?;
    let tr: C64 = obs
        .matrix()
        .row_iter()
        .zip(rho.matrix().column_iter())
        .map(|(r, col)| r.transpose().dot(&col))
        .sum();
    if tr.im.abs() > 1e-9 {
        return Err(QvError::Numerical(format!("expectation has imaginary part {:e}", tr.im)));
    }
    Ok(tr.re)
}

/// The three quantities compared by the Hilbert-Schmidt/fidelity probe.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HsFidelityGap {
    pub h_sq: f64,
    pub two_one_minus_f: f64,
    pub two_d_one_minus_f: f64,
}

impl HsFidelityGap {
    /// `H² ≥ 2(1−F)`, which always holds.
    pub fn provable_holds(&self) -> bool {
        self.h_sq >= self.two_one_minus_f - 1e-9
    }

    /// The dimension-scaled claim `H² ≥ 2d(1−F)`, which can fail.
    pub fn dimension_scaled_holds(&self) -> bool {
        self.h_sq >= self.two_d_one_minus_f - 1e-9
    }
}

pub fn hs_fidelity_gap(u1: &UnitaryOperator, u2: &UnitaryOperator, b: &PureState) -> Result<HsFidelityGap> {
    check_dim(u1.dim(), u2.dim())?;
    check_dim(u1.dim(), b.dim())?;
    let h = hs_distance(u1, u2)?;
    let f = fidelity(&u1.apply(b)?, &u2.apply(b)?)?;
    let d = u1.dim() as f64;
    Ok(HsFidelityGap { h_sq: h * h, two_one_minus_f: 2.0 * (1.0 - f), two_d_one_minus_f: 2.0 * d * (1.0 - f) })
}

/// Single-qubit Pauli matrices, in `I, X, Y, Z` order.
pub fn pauli_matrices() -> [CMatrix; 4] {
    let z0 = c(0.0, 0.0);
    let one = c(1.0, 0.0);
    let i = c(0.0, 1.0);
    [
        CMatrix::identity(2, 2),
        CMatrix::from_row_slice(2, 2, &[z0, one, one, z0]),
        CMatrix::from_row_slice(2, 2, &[z0, -i, i, z0]),
        CMatrix::from_row_slice(2, 2, &[one, z0, z0, -one]),
    ]
}

/// Planar rotation by `theta` in the plane spanned by orthonormal `e1, e2`:
/// `e1 → cos θ e1 + sin θ e2`, `e2 → −sin θ e1 + cos θ e2`, identity elsewhere.
pub fn planar_rotation(e1: &CVector, e2: &CVector, theta: f64) -> CMatrix {
    let d = e1.len();
    let (s, co) = theta.sin_cos();
    let p1 = e1 * e1.adjoint();
    let p2 = e2 * e2.adjoint();
    let x21 = e2 * e1.adjoint();
    let x12 = e1 * e2.adjoint();
    CMatrix::identity(d, d) + (p1 + p2).scale(co - 1.0) + (x21 - x12).scale(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2};

    fn plus() -> PureState {
        PureState::from_real(&[FRAC_1_SQRT_2, FRAC_1_SQRT_2]).unwrap()
    }

    #[test]
    fn fidelity_examples() {
        let zero = PureState::basis(2, 0).unwrap();
        assert_abs_diff_eq!(fidelity(&zero, &zero).unwrap(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fidelity(&zero, &plus()).unwrap(), 0.7071068, epsilon = 1e-7);
        let mixed = DensityMatrix::maximally_mixed(2);
        assert_abs_diff_eq!(fidelity(&zero.to_density(), &mixed).unwrap(), 0.7071068, epsilon = 1e-7);
        assert_abs_diff_eq!(fidelity(&zero, &mixed).unwrap(), 0.7071068, epsilon = 1e-7);
        assert_abs_diff_eq!(fidelity_squared(&zero, &plus()).unwrap(), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn fidelity_rejects_mismatch() {
        let a = PureState::basis(2, 0).unwrap();
        let b = PureState::basis(3, 0).unwrap();
        assert!(matches!(fidelity(&a, &b), Err(QvError::DimensionMismatch { .. })));
    }

    #[test]
    fn trace_distance_examples() {
        let r0 = PureState::basis(2, 0).unwrap().to_density();
        let r1 = PureState::basis(2, 1).unwrap().to_density();
        assert_abs_diff_eq!(trace_distance(&r0, &r1).unwrap(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(trace_distance(&r0, &r0).unwrap(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(trace_distance(&r0, &plus().to_density()).unwrap(), 0.7071068, epsilon = 1e-7);
    }

    #[test]
    fn hs_distance_examples() {
        let id = UnitaryOperator::identity(2);
        assert_abs_diff_eq!(hs_distance(&id, &id).unwrap(), 0.0);
        let phase = UnitaryOperator::new(
            CMatrix::from_diagonal(&CVector::from_vec(vec![c(0.0, 1.0), c(0.0, -1.0)])),
            true,
        )
        .unwrap();
        assert_abs_diff_eq!(hs_distance(&id, &phase).unwrap(), 2.0, epsilon = 1e-12);
        let rot = UnitaryOperator::new(
            CMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(-1.0, 0.0), c(0.0, 0.0)]),
            true,
        )
        .unwrap();
        assert_abs_diff_eq!(hs_distance(&id, &rot).unwrap(), 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(
            hs_distance_with(&id, &rot, HsConvention::Normalized).unwrap(),
            2.0 / 2f64.sqrt(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn channel_examples() {
        let rho = plus().to_density();
        let out = apply_channel(&QuantumChannel::identity(2), &rho).unwrap();
        assert_abs_diff_eq!(max_abs_entry(&(out.matrix() - rho.matrix())), 0.0, epsilon = 1e-14);

        let h = CMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(-1.0, 0.0)])
            .unscale(2f64.sqrt());
        let u = UnitaryOperator::new(h, false).unwrap();
        let zero = PureState::basis(2, 0).unwrap();
        let out = apply_channel(&QuantumChannel::from_unitary(&u), &zero.to_density()).unwrap();
        let expected = u.apply(&zero).unwrap().to_density();
        assert_abs_diff_eq!(max_abs_entry(&(out.matrix() - expected.matrix())), 0.0, epsilon = 1e-14);

        let depol = QuantumChannel::new(pauli_matrices().iter().map(|p| p.scale(0.5)).collect()).unwrap();
        let out = apply_channel(&depol, &zero.to_density()).unwrap();
        let mm = DensityMatrix::maximally_mixed(2);
        assert_abs_diff_eq!(max_abs_entry(&(out.matrix() - mm.matrix())), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn channel_rejects_non_trace_preserving() {
        let k = CMatrix::identity(2, 2).scale(0.9);
        assert!(matches!(QuantumChannel::new(vec![k]), Err(QvError::NotTracePreserving(_))));
        assert!(QuantumChannel::new(vec![]).is_err());
    }

    #[test]
    fn expectation_examples() {
        let z = Observable::pauli_z();
        let zero = PureState::basis(2, 0).unwrap().to_density();
        assert_abs_diff_eq!(expectation(&z, &zero).unwrap(), 1.0);
        assert_abs_diff_eq!(expectation(&z, &plus().to_density()).unwrap(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(expectation(&z, &DensityMatrix::maximally_mixed(2)).unwrap(), 0.0);
        let wrong = DensityMatrix::maximally_mixed(3);
        assert!(expectation(&z, &wrong).is_err());
    }

    fn embedded_rotation(d: usize, theta: f64) -> UnitaryOperator {
        let e1 = PureState::basis(d, 0).unwrap();
        let e2 = PureState::basis(d, 1).unwrap();
        UnitaryOperator::new(planar_rotation(e1.amplitudes(), e2.amplitudes(), theta), true).unwrap()
    }

    #[test]
    fn hs_fidelity_gap_examples() {
        let b2 = PureState::basis(2, 0).unwrap();
        let id2 = UnitaryOperator::identity(2);
        let g = hs_fidelity_gap(&id2, &id2, &b2).unwrap();
        assert_eq!((g.h_sq, g.two_one_minus_f, g.two_d_one_minus_f), (0.0, 0.0, 0.0));

        let g = hs_fidelity_gap(&id2, &embedded_rotation(2, FRAC_PI_2), &b2).unwrap();
        assert_abs_diff_eq!(g.h_sq, 4.0, epsilon = 1e-12);
        assert_abs_diff_eq!(g.two_one_minus_f, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(g.two_d_one_minus_f, 4.0, epsilon = 1e-12);

        let b4 = PureState::basis(4, 0).unwrap();
        let g = hs_fidelity_gap(&UnitaryOperator::identity(4), &embedded_rotation(4, FRAC_PI_2), &b4).unwrap();
        assert_abs_diff_eq!(g.h_sq, 4.0, epsilon = 1e-12);
        assert_abs_diff_eq!(g.two_one_minus_f, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(g.two_d_one_minus_f, 8.0, epsilon = 1e-12);
        assert!(g.provable_holds());
        assert!(!g.dimension_scaled_holds());
    }

    #[test]
    fn density_validation() {
        let bad = CMatrix::from_diagonal(&CVector::from_vec(vec![c(1.2, 0.0), c(-0.2, 0.0)]));
        assert!(matches!(DensityMatrix::new(bad), Err(QvError::NotPositive(_))));
        let bad_tr = CMatrix::identity(2, 2);
        assert!(matches!(DensityMatrix::new(bad_tr), Err(QvError::BadTrace(_))));
        let mut nh = CMatrix::identity(2, 2).scale(0.5);
        nh[(0, 1)] = c(0.1, 0.0);
        assert!(matches!(DensityMatrix::new(nh), Err(QvError::NotHermitian(_))));
    }

    #[test]
    fn unitary_validation() {
        let m = CMatrix::identity(2, 2).scale(1.1);
        assert!(matches!(UnitaryOperator::new(m, false), Err(QvError::NotUnitary(_))));
        let m = CMatrix::from_diagonal(&CVector::from_vec(vec![c(0.0, 1.0), c(1.0, 0.0)]));
        assert!(UnitaryOperator::new(m.clone(), false).is_ok());
        assert!(matches!(UnitaryOperator::new(m, true), Err(QvError::NotSpecial(_))));
    }
}
