//! Two-spin systems: product operator basis, joint statistics, and joint tomography.
//!
//! Subsystem A is the left tensor factor; the joint basis state (k_A, k_B)
//! has index k_A·(2l_B+1) + k_B. The expansion reads
//!
//! ```text
//! ρ_AB = 1⊗1/(N_A N_B) + Σ ⟨λ_a⊗1⟩ λ_a⊗1 /(2N_B) + Σ ⟨1⊗λ_b⟩ 1⊗λ_b /(2N_A)
//!      + ¼ Σ ⟨λ_a⊗λ_b⟩ λ_a⊗λ_b
//! ```
//!
//! Joint moments ⟨L_{d_A}^{k_A} ⊗ L_{d_B}^{k_B}⟩ factor into products of the
//! single-system design rows, so the joint design matrix of a setting is the
//! Kronecker product of the two local rows (extended by the k = 0 row).

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::basis::{complete_basis, OperatorBasis};
use crate::error::{Error, Result};
use crate::linalg::{self, c, CMatrix};
use crate::measurement::{multinomial, MeasurementRecord, OutcomeData, RecordEntry};
use crate::spin::{build_spin_operators, direction_projectors, DensityMatrix, Direction, SpinLength};
use crate::tomography::{
    build_design_matrix, psd_project, DirectionSet, ReconstructionReport, MAX_CONDITION_NUMBER, SVD_RELATIVE_CUTOFF,
};

const DISTINCT_SETTING_TOL: f64 = 1e-9;
const NORMALIZATION_TOL: f64 = 1e-9;

/// Local bases of both subsystems. Member `(ia, ib)` is X_ia ⊗ Y_ib where index 0 is the identity.
#[derive(Debug, Clone)]
pub struct ProductBasis {
    pub basis_a: OperatorBasis,
    pub basis_b: OperatorBasis,
}

impl ProductBasis {
    pub fn new(l_a: SpinLength, l_b: SpinLength) -> Result<Self> {
        Ok(Self { basis_a: complete_basis(l_a)?, basis_b: complete_basis(l_b)? })
    }

    pub fn l_a(&self) -> SpinLength {
        self.basis_a.l()
    }

    pub fn l_b(&self) -> SpinLength {
        self.basis_b.l()
    }

    pub fn dimension(&self) -> usize {
        self.basis_a.dimension() * self.basis_b.dimension()
    }

    /// All expansion terms including 1⊗1: (2l_A+1)²(2l_B+1)².
    pub fn total_terms(&self) -> usize {
        (self.basis_a.len() + 1) * (self.basis_b.len() + 1)
    }

    /// Pure correlation terms λ_a⊗λ_b: Σ (2n_A+1)(2n_B+1).
    pub fn correlation_terms(&self) -> usize {
        self.basis_a.len() * self.basis_b.len()
    }

    /// Coefficient count (everything but the identity term).
    pub fn len(&self) -> usize {
        self.total_terms() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn factor_a(&self, ia: usize) -> CMatrix {
        if ia == 0 {
            linalg::identity(self.basis_a.dimension())
        } else {
            self.basis_a.operator_at(ia - 1).matrix().clone()
        }
    }

    fn factor_b(&self, ib: usize) -> CMatrix {
        if ib == 0 {
            linalg::identity(self.basis_b.dimension())
        } else {
            self.basis_b.operator_at(ib - 1).matrix().clone()
        }
    }

    pub fn operator(&self, ia: usize, ib: usize) -> CMatrix {
        linalg::kron(&self.factor_a(ia), &self.factor_b(ib))
    }

    /// Expansion weight 1/Tr{(X⊗Y)²}.
    fn weight(&self, ia: usize, ib: usize) -> f64 {
        let ta = if ia == 0 { self.basis_a.dimension() as f64 } else { 2.0 };
        let tb = if ib == 0 { self.basis_b.dimension() as f64 } else { 2.0 };
        1.0 / (ta * tb)
    }

    /// `(ia, ib)` pairs in coefficient order, skipping (0, 0).
    pub fn index_pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let kb = self.basis_b.len() + 1;
        (1..self.total_terms()).map(move |flat| (flat / kb, flat % kb))
    }

    pub fn label(&self, ia: usize, ib: usize) -> String {
        let side = |basis: &OperatorBasis, idx: usize| {
            if idx == 0 {
                "0,0".to_string()
            } else {
                basis.label(idx - 1).key()
            }
        };
        format!("{};{}", side(&self.basis_a, ia), side(&self.basis_b, ib))
    }
}

/// ⟨X_ia ⊗ Y_ib⟩ in [`ProductBasis::index_pairs`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductCoefficients {
    pub l_a: SpinLength,
    pub l_b: SpinLength,
    pub values: Vec<f64>,
    labels: Vec<String>,
}

impl ProductCoefficients {
    fn flat(&self, ia: usize, ib: usize) -> usize {
        ia * (self.l_b.parameter_count() + 1) + ib - 1
    }

    pub fn get(&self, ia: usize, ib: usize) -> f64 {
        self.values[self.flat(ia, ib)]
    }

    pub fn keyed(&self) -> Vec<(String, f64)> {
        self.labels.iter().cloned().zip(self.values.iter().copied()).collect()
    }
}

pub fn decompose_bipartite(rho: &DensityMatrix, basis: &ProductBasis) -> Result<ProductCoefficients> {
    if rho.dim() != basis.dimension() {
        return Err(Error::DimensionMismatch { expected: basis.dimension(), actual: rho.dim() });
    }
    let mut values = Vec::with_capacity(basis.len());
    let mut labels = Vec::with_capacity(basis.len());
    for (ia, ib) in basis.index_pairs() {
        values.push(linalg::trace_product(rho.matrix(), &basis.operator(ia, ib)).re);
        labels.push(basis.label(ia, ib));
    }
    Ok(ProductCoefficients { l_a: basis.l_a(), l_b: basis.l_b(), values, labels })
}

pub fn reconstruct_bipartite_from_coefficients(coeffs: &ProductCoefficients, basis: &ProductBasis) -> Result<DensityMatrix> {
    if coeffs.values.len() != basis.len() {
        return Err(Error::DimensionMismatch { expected: basis.len(), actual: coeffs.values.len() });
    }
    let dim = basis.dimension();
    let mut m = linalg::identity(dim) * c(1.0 / dim as f64);
    for ((ia, ib), v) in basis.index_pairs().zip(&coeffs.values) {
        if *v != 0.0 {
            m += basis.operator(ia, ib) * c(v * basis.weight(ia, ib));
        }
    }
    DensityMatrix::new(linalg::hermitize(&m))
}

/// Joint outcome probabilities p(m_A, m_B), row-major over (k_A, k_B).
#[derive(Debug, Clone, PartialEq)]
pub struct JointDistribution {
    pub l_a: SpinLength,
    pub l_b: SpinLength,
    pub direction_a: Direction,
    pub direction_b: Direction,
    pub probabilities: Vec<f64>,
}

impl JointDistribution {
    pub fn probability(&self, k_a: usize, k_b: usize) -> f64 {
        self.probabilities[k_a * self.l_b.dimension() + k_b]
    }

    pub fn marginal_a(&self) -> Vec<f64> {
        let nb = self.l_b.dimension();
        self.probabilities.chunks(nb).map(|row| row.iter().sum()).collect()
    }

    pub fn marginal_b(&self) -> Vec<f64> {
        let nb = self.l_b.dimension();
        let mut out = vec![0.0; nb];
        for (idx, p) in self.probabilities.iter().enumerate() {
            out[idx % nb] += p;
        }
        out
    }
}

fn check_pair_dim(rho: &DensityMatrix, l_a: SpinLength, l_b: SpinLength) -> Result<()> {
    let dim = l_a.dimension() * l_b.dimension();
    if rho.dim() != dim {
        return Err(Error::DimensionMismatch { expected: dim, actual: rho.dim() });
    }
    Ok(())
}

fn joint_probabilities(matrix: &CMatrix, l_a: SpinLength, l_b: SpinLength, d_a: &Direction, d_b: &Direction) -> Vec<f64> {
    let pa = direction_projectors(&build_spin_operators(l_a), d_a);
    let pb = direction_projectors(&build_spin_operators(l_b), d_b);
    let mut out = Vec::with_capacity(l_a.dimension() * l_b.dimension());
    for (_, a) in &pa.outcomes {
        for (_, b) in &pb.outcomes {
            out.push(linalg::trace_product(matrix, &linalg::kron(a.matrix(), b.matrix())).re);
        }
    }
    out
}

/// p(m_A, m_B) = Tr{ρ_AB P_A(m_A) ⊗ P_B(m_B)}.
pub fn joint_distribution(
    rho: &DensityMatrix,
    l_a: SpinLength,
    l_b: SpinLength,
    d_a: &Direction,
    d_b: &Direction,
) -> Result<JointDistribution> {
    check_pair_dim(rho, l_a, l_b)?;
    if rho.min_eigenvalue() < -1e-8 {
        return Err(Error::NonPhysicalState(rho.min_eigenvalue()));
    }
    Ok(JointDistribution {
        l_a,
        l_b,
        direction_a: *d_a,
        direction_b: *d_b,
        probabilities: joint_probabilities(rho.matrix(), l_a, l_b, d_a, d_b),
    })
}

/// Σ m_A^{n_A} m_B^{n_B} p(m_A, m_B); order 0 is allowed on either side.
pub fn correlated_moment(joint: &JointDistribution, n_a: usize, n_b: usize) -> Result<f64> {
    correlated_moment_of(joint.l_a, joint.l_b, &joint.probabilities, n_a, n_b)
}

fn correlated_moment_of(l_a: SpinLength, l_b: SpinLength, p: &[f64], n_a: usize, n_b: usize) -> Result<f64> {
    if n_a > l_a.max_order() {
        return Err(Error::OrderOutOfRange { order: n_a, max: l_a.max_order() });
    }
    if n_b > l_b.max_order() {
        return Err(Error::OrderOutOfRange { order: n_b, max: l_b.max_order() });
    }
    let nb = l_b.dimension();
    Ok(p.iter()
        .enumerate()
        .map(|(idx, prob)| l_a.m(idx / nb).powi(n_a as i32) * l_b.m(idx % nb).powi(n_b as i32) * prob)
        .sum())
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointEntry {
    pub direction_a: Direction,
    pub direction_b: Direction,
    /// Outcomes ordered row-major over (k_A, k_B).
    pub data: OutcomeData,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointRecord {
    l_a: SpinLength,
    l_b: SpinLength,
    entries: Vec<JointEntry>,
}

impl JointRecord {
    pub fn new(l_a: SpinLength, l_b: SpinLength, entries: Vec<JointEntry>) -> Result<Self> {
        let outcomes = l_a.dimension() * l_b.dimension();
        for (idx, e) in entries.iter().enumerate() {
            if !e.direction_a.is_finite() || !e.direction_b.is_finite() {
                return Err(Error::InvalidInput(format!("setting {idx}: non-finite angles")));
            }
            if e.data.len() != outcomes {
                return Err(Error::IncompleteRecord(format!(
                    "setting {idx} has {} outcomes, expected {outcomes}",
                    e.data.len()
                )));
            }
            match &e.data {
                OutcomeData::Probabilities(p) => {
                    let sum: f64 = p.iter().sum();
                    if p.iter().any(|x| !x.is_finite()) || (sum - 1.0).abs() > NORMALIZATION_TOL {
                        return Err(Error::InvalidInput(format!("setting {idx}: probabilities sum to {sum}")));
                    }
                }
                OutcomeData::Counts(c) => {
                    if c.iter().sum::<u64>() == 0 {
                        return Err(Error::IncompleteRecord(format!("setting {idx} has zero shots")));
                    }
                }
            }
            let repeated = entries[..idx].iter().any(|o| {
                o.direction_a.angle_to(&e.direction_a) <= DISTINCT_SETTING_TOL
                    && o.direction_b.angle_to(&e.direction_b) <= DISTINCT_SETTING_TOL
            });
            if repeated {
                return Err(Error::InvalidInput(format!("setting {idx} repeats an earlier one")));
            }
        }
        Ok(Self { l_a, l_b, entries })
    }

    pub fn l_a(&self) -> SpinLength {
        self.l_a
    }

    pub fn l_b(&self) -> SpinLength {
        self.l_b
    }

    pub fn entries(&self) -> &[JointEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of outcome probabilities across all settings.
    pub fn probability_count(&self) -> usize {
        self.entries.iter().map(|e| e.data.len()).sum()
    }

    /// Single-system record for A, averaging the A-marginals of settings that share d_A.
    pub fn marginal_record_a(&self) -> Result<MeasurementRecord> {
        self.marginal_record(true)
    }

    pub fn marginal_record_b(&self) -> Result<MeasurementRecord> {
        self.marginal_record(false)
    }

    fn marginal_record(&self, side_a: bool) -> Result<MeasurementRecord> {
        let (l, other) = if side_a { (self.l_a, self.l_b) } else { (self.l_b, self.l_a) };
        let mut groups: Vec<(Direction, Vec<f64>, usize)> = Vec::new();
        for e in &self.entries {
            let d = if side_a { e.direction_a } else { e.direction_b };
            let p = e.data.probabilities();
            let marginal: Vec<f64> = if side_a {
                p.chunks(other.dimension()).map(|row| row.iter().sum()).collect()
            } else {
                (0..l.dimension())
                    .map(|kb| (0..other.dimension()).map(|ka| p[ka * l.dimension() + kb]).sum())
                    .collect()
            };
            match groups.iter_mut().find(|(gd, _, _)| gd.angle_to(&d) <= DISTINCT_SETTING_TOL) {
                Some((_, acc, count)) => {
                    acc.iter_mut().zip(&marginal).for_each(|(a, m)| *a += m);
                    *count += 1;
                }
                None => groups.push((d, marginal, 1)),
            }
        }
        let entries = groups
            .into_iter()
            .map(|(d, acc, count)| {
                let mut p: Vec<f64> = acc.iter().map(|v| v / count as f64).collect();
                let total: f64 = p.iter().sum();
                p.iter_mut().for_each(|v| *v /= total);
                RecordEntry::probabilities(d, p)
            })
            .collect();
        MeasurementRecord::new(l, entries)
    }
}

/// Cartesian product of two direction lists, A-major.
pub fn product_settings(dirs_a: &[Direction], dirs_b: &[Direction]) -> Vec<(Direction, Direction)> {
    dirs_a.iter().flat_map(|a| dirs_b.iter().map(move |b| (*a, *b))).collect()
}

pub fn simulate_joint_record(
    rho: &DensityMatrix,
    l_a: SpinLength,
    l_b: SpinLength,
    settings: &[(Direction, Direction)],
) -> Result<JointRecord> {
    check_pair_dim(rho, l_a, l_b)?;
    if rho.min_eigenvalue() < -1e-8 {
        return Err(Error::NonPhysicalState(rho.min_eigenvalue()));
    }
    let entries = settings
        .par_iter()
        .map(|(a, b)| JointEntry {
            direction_a: *a,
            direction_b: *b,
            data: OutcomeData::Probabilities(joint_probabilities(rho.matrix(), l_a, l_b, a, b)),
        })
        .collect();
    JointRecord::new(l_a, l_b, entries)
}

/// Multinomial counts per setting; setting `s` uses stream `s` of `seed`.
pub fn sample_joint_record(record: &JointRecord, shots: u64, seed: u64) -> Result<JointRecord> {
    if shots == 0 {
        return Err(Error::InvalidInput("shots must be at least 1".into()));
    }
    let entries = record
        .entries()
        .par_iter()
        .enumerate()
        .map(|(idx, e)| {
            let p: Vec<f64> = e.data.probabilities().iter().map(|x| x.clamp(0.0, 1.0)).collect();
            JointEntry {
                direction_a: e.direction_a,
                direction_b: e.direction_b,
                data: OutcomeData::Counts(multinomial(&p, shots, seed, idx as u64)),
            }
        })
        .collect();
    JointRecord::new(record.l_a(), record.l_b(), entries)
}

/// Local rows for one direction, extended by the order-0 row:
/// row k holds (Tr{L^k}/N, ½Tr{λ_j L^k}…), with row 0 = (1, 0, …).
fn extended_rows(l: SpinLength, d: &Direction, basis: &OperatorBasis) -> Result<DMatrix<f64>> {
    let single = build_design_matrix(l, &DirectionSet::new(l, vec![*d])?, basis)?;
    let mut out = DMatrix::zeros(l.max_order() + 1, basis.len() + 1);
    out[(0, 0)] = 1.0;
    for k in 1..=l.max_order() {
        out[(k, 0)] = single.offsets[k - 1];
        for j in 0..basis.len() {
            out[(k, j + 1)] = single.matrix[(k - 1, j)];
        }
    }
    Ok(out)
}

/// Least-squares reconstruction of ρ_AB from ≥ (4l_A+1)(4l_B+1) joint settings.
pub fn reconstruct_bipartite(record: &JointRecord, basis: &ProductBasis) -> Result<ReconstructionReport<ProductCoefficients>> {
    let (l_a, l_b) = (record.l_a(), record.l_b());
    if basis.l_a() != l_a || basis.l_b() != l_b {
        return Err(Error::DimensionMismatch { expected: basis.len(), actual: l_a.parameter_count() });
    }
    let needed = l_a.min_directions() * l_b.min_directions();
    if record.len() < needed {
        return Err(Error::InsufficientSettings { got: record.len(), needed });
    }
    let (oa, ob) = (l_a.max_order() + 1, l_b.max_order() + 1);
    let rows_per = oa * ob - 1;
    let cols = basis.len();
    let mut design = DMatrix::zeros(record.len() * rows_per, cols);
    let mut offsets = DVector::zeros(record.len() * rows_per);
    let mut observed = DVector::zeros(record.len() * rows_per);

    for (s, e) in record.entries().iter().enumerate() {
        let ra = extended_rows(l_a, &e.direction_a, &basis.basis_a)?;
        let rb = extended_rows(l_b, &e.direction_b, &basis.basis_b)?;
        let joint = ra.kronecker(&rb);
        let p = e.data.probabilities();
        for order in 1..oa * ob {
            let row = s * rows_per + order - 1;
            offsets[row] = joint[(order, 0)];
            for col in 1..joint.ncols() {
                design[(row, col - 1)] = joint[(order, col)];
            }
            observed[row] = correlated_moment_of(l_a, l_b, &p, order / ob, order % ob)?;
        }
    }

    let svd = design.clone().svd(true, true);
    let mut s: Vec<f64> = svd.singular_values.iter().copied().collect();
    s.sort_by(|x, y| y.total_cmp(x));
    let top = s[0];
    let kept: Vec<f64> = s.iter().copied().filter(|&v| v > SVD_RELATIVE_CUTOFF * top).collect();
    let cond = if kept.len() < cols { f64::INFINITY } else { top / kept[kept.len() - 1] };
    if !(cond < MAX_CONDITION_NUMBER) {
        return Err(Error::IllConditioned(cond));
    }
    let x = svd
        .solve(&(&observed - &offsets), SVD_RELATIVE_CUTOFF * top)
        .map_err(|e| Error::Internal(format!("SVD solve failed: {e}")))?;

    let labels = basis.index_pairs().map(|(ia, ib)| basis.label(ia, ib)).collect();
    let coefficients = ProductCoefficients { l_a, l_b, values: x.iter().copied().collect(), labels };
    let residuals = &observed - (&design * &x + &offsets);
    let rho_raw = reconstruct_bipartite_from_coefficients(&coefficients, basis)?;
    let rho_physical = psd_project(&rho_raw);
    let residual_norm = (residuals.norm_squared() / residuals.len() as f64).sqrt();
    Ok(ReconstructionReport {
        coefficients,
        rho_raw,
        rho_physical,
        residual_norm,
        consistency_residuals: residuals.iter().copied().collect(),
        condition_number: cond,
    })
}

/// Tr_B ρ_AB.
pub fn partial_trace_b(rho: &DensityMatrix, l_a: SpinLength, l_b: SpinLength) -> Result<DensityMatrix> {
    check_pair_dim(rho, l_a, l_b)?;
    let (na, nb) = (l_a.dimension(), l_b.dimension());
    let m = rho.matrix();
    let out = CMatrix::from_fn(na, na, |i, j| (0..nb).map(|k| m[(i * nb + k, j * nb + k)]).sum());
    DensityMatrix::new(out)
}

/// Tr_A ρ_AB.
pub fn partial_trace_a(rho: &DensityMatrix, l_a: SpinLength, l_b: SpinLength) -> Result<DensityMatrix> {
    check_pair_dim(rho, l_a, l_b)?;
    let (na, nb) = (l_a.dimension(), l_b.dimension());
    let m = rho.matrix();
    let out = CMatrix::from_fn(nb, nb, |i, j| (0..na).map(|k| m[(k * nb + i, k * nb + j)]).sum());
    DensityMatrix::new(out)
}

pub fn product_state(a: &DensityMatrix, b: &DensityMatrix) -> Result<DensityMatrix> {
    DensityMatrix::new(linalg::kron(a.matrix(), b.matrix()))
}
