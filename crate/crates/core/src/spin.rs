//! Spin operators, measurement directions, and spectral projectors.
//!
//! Matrices are written in the L_z eigenbasis with row/column index `k`
//! carrying the eigenvalue `m = l - k`, so index 0 is `m = +l`.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, c, CMatrix, I, ZERO};

pub const MAX_TWO_L: u32 = 64;

const HERMITIAN_TOL: f64 = 1e-12;
const TRACE_TOL: f64 = 1e-12;
const PHYSICAL_TOL: f64 = 1e-10;
const SNAP_TOL: f64 = 1e-6;

/// Spin quantum number `l`, stored as the integer `2l` so half-integer spins are exact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct SpinLength {
    two_l: u32,
}

impl SpinLength {
    pub fn new(two_l: u32) -> Result<Self> {
        if two_l == 0 || two_l > MAX_TWO_L {
            return Err(Error::InvalidSpin(two_l));
        }
        Ok(Self { two_l })
    }

    pub fn two_l(self) -> u32 {
        self.two_l
    }

    pub fn l(self) -> f64 {
        f64::from(self.two_l) / 2.0
    }

    /// Hilbert space dimension `2l + 1`.
    pub fn dimension(self) -> usize {
        self.two_l as usize + 1
    }

    /// Highest moment order `2l` carried by a single direction.
    pub fn max_order(self) -> usize {
        self.two_l as usize
    }

    /// Number of real parameters of a density matrix, `4l(l+1)`.
    pub fn parameter_count(self) -> usize {
        let n = self.dimension();
        n * n - 1
    }

    /// Minimum number of spin directions for complete tomography, `4l+1`.
    pub fn min_directions(self) -> usize {
        2 * self.two_l as usize + 1
    }

    /// `2m` for basis index `k`.
    pub fn two_m(self, index: usize) -> i64 {
        i64::from(self.two_l) - 2 * index as i64
    }

    pub fn m(self, index: usize) -> f64 {
        self.two_m(index) as f64 / 2.0
    }

    /// Basis index carrying `2m`, if admissible.
    pub fn index_of_two_m(self, two_m: i64) -> Option<usize> {
        let two_l = i64::from(self.two_l);
        if two_m.abs() > two_l || (two_l - two_m) % 2 != 0 {
            return None;
        }
        Some(((two_l - two_m) / 2) as usize)
    }

    /// All `m` values from `+l` down to `-l`.
    pub fn m_values(self) -> impl Iterator<Item = f64> {
        (0..self.dimension()).map(move |k| self.m(k))
    }
}

impl TryFrom<u32> for SpinLength {
    type Error = Error;
    fn try_from(v: u32) -> Result<Self> {
        SpinLength::new(v)
    }
}

impl From<SpinLength> for u32 {
    fn from(s: SpinLength) -> u32 {
        s.two_l
    }
}

/// Unit vector on the sphere: `theta` from the z-axis, `phi` in the xy-plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Direction {
    pub theta: f64,
    pub phi: f64,
}

impl Direction {
    pub fn new(theta: f64, phi: f64) -> Self {
        Self { theta, phi }
    }

    pub fn x() -> Self {
        Self::new(FRAC_PI_2, 0.0)
    }

    pub fn y() -> Self {
        Self::new(FRAC_PI_2, FRAC_PI_2)
    }

    pub fn z() -> Self {
        Self::new(0.0, 0.0)
    }

    /// Direction of an arbitrary non-zero vector.
    pub fn from_vector(v: [f64; 3]) -> Result<Self> {
        let norm = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::InvalidInput("zero or non-finite direction vector".into()));
        }
        let theta = (v[2] / norm).clamp(-1.0, 1.0).acos();
        let mut phi = v[1].atan2(v[0]);
        if phi < 0.0 {
            phi += 2.0 * PI;
        }
        Ok(Self::new(theta, phi))
    }

    pub fn unit_vector(&self) -> [f64; 3] {
        let (st, ct) = self.theta.sin_cos();
        let (sp, cp) = self.phi.sin_cos();
        [st * cp, st * sp, ct]
    }

    pub fn angle_to(&self, other: &Direction) -> f64 {
        let a = self.unit_vector();
        let b = other.unit_vector();
        let cross = [
            a[1] * b[2] - a[2] * b[1],
            a[2] * b[0] - a[0] * b[2],
            a[0] * b[1] - a[1] * b[0],
        ];
        let sin = (cross[0].powi(2) + cross[1].powi(2) + cross[2].powi(2)).sqrt();
        let cos = a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
        sin.atan2(cos)
    }

    pub fn is_finite(&self) -> bool {
        self.theta.is_finite() && self.phi.is_finite()
    }
}

/// The five spin-1 measurement directions L_x, L_y, (L_x+L_y)/√2, (L_y+L_z)/√2, (L_z+L_x)/√2.
pub fn spin1_five_directions() -> [Direction; 5] {
    [
        Direction::x(),
        Direction::y(),
        Direction::new(FRAC_PI_2, FRAC_PI_4),
        Direction::new(FRAC_PI_4, FRAC_PI_2),
        Direction::new(FRAC_PI_4, 0.0),
    ]
}

/// Dense Hermitian operator.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianOperator {
    matrix: CMatrix,
}

impl HermitianOperator {
    pub fn new(matrix: CMatrix) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::DimensionMismatch { expected: matrix.nrows(), actual: matrix.ncols() });
        }
        let defect = linalg::hermiticity_defect(&matrix);
        if defect > HERMITIAN_TOL * linalg::max_abs(&matrix).max(1.0) {
            return Err(Error::NotHermitian(defect));
        }
        Ok(Self { matrix: linalg::hermitize(&matrix) })
    }

    /// Symmetrizes without checking; for matrices Hermitian by construction.
    pub(crate) fn from_hermitian(matrix: CMatrix) -> Self {
        Self { matrix: linalg::hermitize(&matrix) }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    /// Real part of Tr{A B}; the imaginary part vanishes for Hermitian pairs.
    pub fn trace_with(&self, other: &HermitianOperator) -> f64 {
        linalg::trace_product(&self.matrix, &other.matrix).re
    }

    pub fn trace(&self) -> f64 {
        linalg::trace(&self.matrix).re
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        linalg::eigh(&self.matrix).0
    }
}

/// Hermitian unit-trace matrix. Marked physical when its spectrum is non-negative.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    matrix: CMatrix,
    min_eigenvalue: f64,
}

impl DensityMatrix {
    /// Accepts any Hermitian unit-trace matrix; non-PSD inputs are kept as raw.
    pub fn new(matrix: CMatrix) -> Result<Self> {
        let op = HermitianOperator::new(matrix)?;
        let dim = op.dim();
        let tr = op.trace();
        if (tr - 1.0).abs() > TRACE_TOL * dim as f64 {
            return Err(Error::NotUnitTrace(tr));
        }
        let matrix = op.into_matrix();
        let min_eigenvalue = linalg::min_eigenvalue(&matrix);
        Ok(Self { matrix, min_eigenvalue })
    }

    /// Like [`DensityMatrix::new`] but rejects states outside the physical set.
    pub fn physical(matrix: CMatrix) -> Result<Self> {
        let rho = Self::new(matrix)?;
        if !rho.is_physical() {
            return Err(Error::NonPhysicalState(rho.min_eigenvalue));
        }
        Ok(rho)
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        Self {
            matrix: linalg::identity(dim) * c(1.0 / dim as f64),
            min_eigenvalue: 1.0 / dim as f64,
        }
    }

    /// Pure state |ψ⟩⟨ψ|; the vector is normalized here.
    pub fn pure(psi: &[Complex64]) -> Result<Self> {
        let v = DVector::from_column_slice(psi);
        let norm = v.norm();
        if !(norm > 0.0) {
            return Err(Error::InvalidInput("zero state vector".into()));
        }
        let v = v / c(norm);
        Self::new(linalg::outer(&v))
    }

    /// `|m⟩⟨m|` for the L_z eigenstate with eigenvalue `m = two_m / 2`.
    pub fn lz_eigenstate(l: SpinLength, two_m: i64) -> Result<Self> {
        let k = l
            .index_of_two_m(two_m)
            .ok_or_else(|| Error::InvalidInput(format!("2m = {two_m} not admissible for 2l = {}", l.two_l())))?;
        let mut psi = vec![ZERO; l.dimension()];
        psi[k] = c(1.0);
        Self::pure(&psi)
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.min_eigenvalue
    }

    pub fn is_physical(&self) -> bool {
        self.min_eigenvalue >= -PHYSICAL_TOL
    }

    pub fn is_raw(&self) -> bool {
        !self.is_physical()
    }

    pub fn expectation(&self, op: &HermitianOperator) -> f64 {
        linalg::trace_product(&self.matrix, op.matrix()).re
    }

    pub fn frobenius_distance(&self, other: &DensityMatrix) -> f64 {
        linalg::frobenius_distance(&self.matrix, &other.matrix)
    }
}

/// Cartesian spin operators for one spin length.
#[derive(Debug, Clone)]
pub struct SpinOperators {
    pub l: SpinLength,
    pub lx: HermitianOperator,
    pub ly: HermitianOperator,
    pub lz: HermitianOperator,
}

impl SpinOperators {
    pub fn raising(&self) -> CMatrix {
        raising_operator(self.l)
    }

    pub fn component(&self, d: &Direction) -> HermitianOperator {
        let [nx, ny, nz] = d.unit_vector();
        let m = self.lx.matrix() * c(nx) + self.ly.matrix() * c(ny) + self.lz.matrix() * c(nz);
        HermitianOperator::from_hermitian(m)
    }

    /// L_x² + L_y² + L_z²
    pub fn casimir(&self) -> CMatrix {
        let (x, y, z) = (self.lx.matrix(), self.ly.matrix(), self.lz.matrix());
        x * x + y * y + z * z
    }
}

/// L₊ in the L_z basis: ⟨m+1|L₊|m⟩ = √((l−m)(l+m+1)).
pub fn raising_operator(l: SpinLength) -> CMatrix {
    let n = l.dimension();
    let mut lp = CMatrix::zeros(n, n);
    // column k holds |m⟩ with m = l - k; L₊ maps it to row k-1
    for k in 1..n {
        let m = l.m(k);
        let lv = l.l();
        lp[(k - 1, k)] = c(((lv - m) * (lv + m + 1.0)).sqrt());
    }
    lp
}

pub fn build_spin_operators(l: SpinLength) -> SpinOperators {
    let lp = raising_operator(l);
    let lm = lp.adjoint();
    let lx = (&lp + &lm) * c(0.5);
    let ly = (&lp - &lm) / (I * 2.0);
    let lz = CMatrix::from_diagonal(&DVector::from_iterator(l.dimension(), l.m_values().map(c)));
    SpinOperators {
        l,
        lx: HermitianOperator::from_hermitian(lx),
        ly: HermitianOperator::from_hermitian(ly),
        lz: HermitianOperator::from_hermitian(lz),
    }
}

/// sinθcosφ L_x + sinθsinφ L_y + cosθ L_z
pub fn spin_component(l: SpinLength, d: &Direction) -> HermitianOperator {
    build_spin_operators(l).component(d)
}

/// Spectral projectors of a spin component, one per eigenvalue `m`.
#[derive(Debug, Clone)]
pub struct ProjectorFamily {
    pub direction: Option<Direction>,
    pub l: SpinLength,
    /// `(2m, P(m))`, ordered from `m = +l` down to `m = -l`.
    pub outcomes: Vec<(i64, HermitianOperator)>,
}

impl ProjectorFamily {
    pub fn projector(&self, two_m: i64) -> Option<&HermitianOperator> {
        self.outcomes.iter().find(|(tm, _)| *tm == two_m).map(|(_, p)| p)
    }
}

/// Diagonalizes a spin component and snaps its eigenvalues onto `{-l, …, +l}`.
pub fn projector_family(op: &HermitianOperator, l: SpinLength) -> Result<ProjectorFamily> {
    let n = l.dimension();
    if op.dim() != n {
        return Err(Error::DimensionMismatch { expected: n, actual: op.dim() });
    }
    let (values, vectors) = linalg::eigh(op.matrix());
    let mut slots: Vec<Option<HermitianOperator>> = vec![None; n];
    for (col, &value) in values.iter().enumerate() {
        let index = (l.l() - value).round().clamp(0.0, l.max_order() as f64) as usize;
        let distance = (value - l.m(index)).abs();
        // a repeated m means the input is degenerate, which no spin component is
        if distance > SNAP_TOL || slots[index].is_some() {
            return Err(Error::EigenvalueMismatch { value, distance });
        }
        let v = vectors.column(col).into_owned();
        slots[index] = Some(HermitianOperator::from_hermitian(linalg::outer(&v)));
    }
    let outcomes = slots
        .into_iter()
        .enumerate()
        .map(|(k, p)| (l.two_m(k), p.expect("every slot filled by a distinct eigenvalue")))
        .collect();
    Ok(ProjectorFamily { direction: None, l, outcomes })
}

/// Projectors of the spin component along `d`.
pub fn direction_projectors(ops: &SpinOperators, d: &Direction) -> ProjectorFamily {
    let mut family = projector_family(&ops.component(d), ops.l)
        .expect("spin components have the spectrum {-l, ..., +l}");
    family.direction = Some(*d);
    family
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::FRAC_1_SQRT_2;

    fn commutator(a: &CMatrix, b: &CMatrix) -> CMatrix {
        a * b - b * a
    }

    #[test]
    fn spin_length_bounds() {
        assert!(SpinLength::new(0).is_err());
        assert!(SpinLength::new(65).is_err());
        let l = SpinLength::new(3).unwrap();
        assert_eq!(l.dimension(), 4);
        assert_eq!(l.parameter_count(), 15);
        assert_eq!(l.min_directions(), 7);
        assert_eq!(l.two_m(0), 3);
        assert_eq!(l.two_m(3), -3);
        assert_eq!(l.index_of_two_m(-1), Some(2));
        assert_eq!(l.index_of_two_m(0), None);
    }

    #[test]
    fn commutation_and_casimir_up_to_two_l_8() {
        for two_l in 1..=8 {
            let l = SpinLength::new(two_l).unwrap();
            let ops = build_spin_operators(l);
            let (x, y, z) = (ops.lx.matrix(), ops.ly.matrix(), ops.lz.matrix());
            assert!(linalg::max_abs(&(commutator(x, y) - z * I)) < 1e-12);
            assert!(linalg::max_abs(&(commutator(y, z) - x * I)) < 1e-12);
            assert!(linalg::max_abs(&(commutator(z, x) - y * I)) < 1e-12);
            let cas = ops.casimir() - linalg::identity(l.dimension()) * c(l.l() * (l.l() + 1.0));
            assert!(linalg::max_abs(&cas) < 1e-12, "two_l={two_l}");
        }
    }

    #[test]
    fn spin1_lx_matrix() {
        let ops = build_spin_operators(SpinLength::new(2).unwrap());
        let r = FRAC_1_SQRT_2;
        let expected = [[0.0, r, 0.0], [r, 0.0, r], [0.0, r, 0.0]];
        for i in 0..3 {
            for j in 0..3 {
                assert_abs_diff_eq!(ops.lx.matrix()[(i, j)].re, expected[i][j], epsilon = 1e-15);
                assert_eq!(ops.lx.matrix()[(i, j)].im, 0.0);
            }
        }
    }

    #[test]
    fn spin_half_lz() {
        let ops = build_spin_operators(SpinLength::new(1).unwrap());
        assert_eq!(ops.lz.matrix()[(0, 0)], c(0.5));
        assert_eq!(ops.lz.matrix()[(1, 1)], c(-0.5));
    }

    #[test]
    fn raising_from_m0_spin1() {
        let l = SpinLength::new(2).unwrap();
        let lp = raising_operator(l);
        // |m=0⟩ is index 1, |m=+1⟩ is index 0
        let v = lp.column(1);
        assert_abs_diff_eq!(v[0].re, 2f64.sqrt(), epsilon = 1e-15);
        assert_eq!(v[1], ZERO);
        assert_eq!(v[2], ZERO);
    }

    #[test]
    fn axis_components() {
        let l = SpinLength::new(3).unwrap();
        let ops = build_spin_operators(l);
        let z = spin_component(l, &Direction::z());
        assert!(linalg::max_abs(&(z.matrix() - ops.lz.matrix())) < 1e-15);
        let x = spin_component(l, &Direction::x());
        assert!(linalg::max_abs(&(x.matrix() - ops.lx.matrix())) < 1e-15);
        let y = spin_component(l, &Direction::y());
        assert!(linalg::max_abs(&(y.matrix() - ops.ly.matrix())) < 1e-15);
    }

    #[test]
    fn diagonal_component_is_lx_plus_ly() {
        let l = SpinLength::new(2).unwrap();
        let ops = build_spin_operators(l);
        let d = spin_component(l, &Direction::new(FRAC_PI_2, FRAC_PI_4));
        let expected = (ops.lx.matrix() + ops.ly.matrix()) * c(FRAC_1_SQRT_2);
        assert!(linalg::max_abs(&(d.matrix() - expected)) < 1e-15);
    }

    #[test]
    fn spectrum_of_lx_spin1() {
        let l = SpinLength::new(2).unwrap();
        let ev = spin_component(l, &Direction::x()).eigenvalues();
        for (got, want) in ev.iter().zip([-1.0, 0.0, 1.0]) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-12);
        }
    }

    #[test]
    fn lz_projectors_are_diagonal() {
        let l = SpinLength::new(2).unwrap();
        let ops = build_spin_operators(l);
        let fam = projector_family(&ops.lz, l).unwrap();
        let two_ms: Vec<i64> = fam.outcomes.iter().map(|(m, _)| *m).collect();
        assert_eq!(two_ms, vec![2, 0, -2]);
        for (k, (_, p)) in fam.outcomes.iter().enumerate() {
            for i in 0..3 {
                for j in 0..3 {
                    let want = if i == k && j == k { 1.0 } else { 0.0 };
                    assert_abs_diff_eq!(p.matrix()[(i, j)].norm(), want, epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn lx_zero_projector_spin1() {
        let l = SpinLength::new(2).unwrap();
        let fam = projector_family(&spin_component(l, &Direction::x()), l).unwrap();
        let p0 = fam.projector(0).unwrap();
        let r = FRAC_1_SQRT_2;
        let v = [r, 0.0, -r];
        for i in 0..3 {
            for j in 0..3 {
                assert_abs_diff_eq!(p0.matrix()[(i, j)].re, v[i] * v[j], epsilon = 1e-12);
                assert_abs_diff_eq!(p0.matrix()[(i, j)].im, 0.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn non_spin_matrix_is_rejected() {
        let l = SpinLength::new(2).unwrap();
        let m = CMatrix::from_diagonal(&DVector::from_vec(vec![c(0.3), c(0.0), c(-1.0)]));
        let op = HermitianOperator::new(m).unwrap();
        assert!(matches!(projector_family(&op, l), Err(Error::EigenvalueMismatch { .. })));
        // right values but one repeated
        let m = CMatrix::from_diagonal(&DVector::from_vec(vec![c(1.0), c(1.0), c(-1.0)]));
        let op = HermitianOperator::new(m).unwrap();
        assert!(matches!(projector_family(&op, l), Err(Error::EigenvalueMismatch { .. })));
    }

    #[test]
    fn projectors_resolve_the_component() {
        let dirs = [Direction::new(0.3, 1.9), Direction::new(2.2, 4.0), Direction::new(1.0, 0.1)];
        for two_l in 1..=6 {
            let l = SpinLength::new(two_l).unwrap();
            let ops = build_spin_operators(l);
            for d in &dirs {
                let comp = ops.component(d);
                let fam = direction_projectors(&ops, d);
                let mut sum = CMatrix::zeros(l.dimension(), l.dimension());
                let mut weighted = sum.clone();
                for (a, (two_m, p)) in fam.outcomes.iter().enumerate() {
                    let pm = p.matrix();
                    assert!(linalg::max_abs(&(pm * pm - pm)) < 1e-10);
                    for (b, (_, q)) in fam.outcomes.iter().enumerate() {
                        if a != b {
                            assert!(linalg::max_abs(&(pm * q.matrix())) < 1e-10);
                        }
                    }
                    sum += pm;
                    weighted += pm * c(*two_m as f64 / 2.0);
                }
                assert!(linalg::max_abs(&(sum - linalg::identity(l.dimension()))) < 1e-10);
                assert!(linalg::max_abs(&(weighted - comp.matrix())) < 1e-10);
            }
        }
    }

    #[test]
    fn direction_vectors() {
        for d in spin1_five_directions() {
            let v = d.unit_vector();
            assert_abs_diff_eq!(v[0] * v[0] + v[1] * v[1] + v[2] * v[2], 1.0, epsilon = 1e-12);
        }
        let d = Direction::from_vector([0.0, 1.0, 1.0]).unwrap();
        assert_abs_diff_eq!(d.theta, FRAC_PI_4, epsilon = 1e-15);
        assert_abs_diff_eq!(d.phi, FRAC_PI_2, epsilon = 1e-15);
        assert_abs_diff_eq!(Direction::x().angle_to(&Direction::y()), FRAC_PI_2, epsilon = 1e-15);
        assert!(Direction::from_vector([0.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn density_matrix_checks() {
        let l = SpinLength::new(2).unwrap();
        let rho = DensityMatrix::lz_eigenstate(l, 2).unwrap();
        assert!(rho.is_physical());
        let bad = CMatrix::from_diagonal(&DVector::from_vec(vec![c(1.2), c(0.0), c(-0.2)]));
        let raw = DensityMatrix::new(bad.clone()).unwrap();
        assert!(raw.is_raw());
        assert!(matches!(DensityMatrix::physical(bad), Err(Error::NonPhysicalState(_))));
        let not_unit = CMatrix::identity(3, 3);
        assert!(matches!(DensityMatrix::new(not_unit), Err(Error::NotUnitTrace(_))));
        let mut nh = CMatrix::identity(3, 3) * c(1.0 / 3.0);
        nh[(0, 1)] = c(0.1);
        assert!(matches!(DensityMatrix::new(nh), Err(Error::NotHermitian(_))));
    }
}
