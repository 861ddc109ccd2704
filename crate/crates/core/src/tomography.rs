//! Density-matrix reconstruction from spin-component statistics.
//!
//! Every direction `d` contributes the moments ⟨L_d^k⟩, k = 1..2l. With
//! ρ = I/N + ½ Σ a_j λ_j these are affine in the coefficients:
//!
//! ```text
//! ⟨L_d^k⟩ = Tr{L_d^k}/N + Σ_j ½ Tr{λ_j L_d^k} a_j
//! ```
//!
//! Stacking the rows over all directions gives the design matrix, which is
//! inverted by SVD least squares. The order-2l block has 4l+1 unknowns and
//! each direction contributes one equation to it, so at least 4l+1
//! directions are needed.

use nalgebra::{DMatrix, DVector};

use crate::basis::{complete_basis, reconstruct_from_coefficients, CoefficientVector, OperatorBasis};
use crate::error::{Error, Result};
use crate::linalg::{self, c, CMatrix};
use crate::measurement::{power_sum, MeasurementRecord, OutcomeData};
use crate::spin::{build_spin_operators, spin1_five_directions, DensityMatrix, Direction, SpinLength};

/// Singular values below this fraction of the largest are discarded.
pub const SVD_RELATIVE_CUTOFF: f64 = 1e-12;
/// Design matrices at or above this condition number are rejected.
pub const MAX_CONDITION_NUMBER: f64 = 1e6;
/// Variance floor in the optional row weighting.
pub const WEIGHT_EPSILON: f64 = 1e-6;
const DIRECTION_MATCH_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct DirectionSet {
    l: SpinLength,
    directions: Vec<Direction>,
}

impl DirectionSet {
    pub fn new(l: SpinLength, directions: Vec<Direction>) -> Result<Self> {
        for (idx, d) in directions.iter().enumerate() {
            if !d.is_finite() {
                return Err(Error::InvalidInput(format!("direction {idx} is not finite")));
            }
            if directions[..idx].iter().any(|o| o.angle_to(d) <= DIRECTION_MATCH_TOL) {
                return Err(Error::InvalidInput(format!("direction {idx} repeats an earlier one")));
            }
        }
        Ok(Self { l, directions })
    }

    /// The five spin-1 directions x, y, (x+y)/√2, (y+z)/√2, (z+x)/√2.
    pub fn spin1_five() -> Self {
        Self {
            l: SpinLength::new(2).expect("valid"),
            directions: spin1_five_directions().to_vec(),
        }
    }

    /// 4l+1 Fibonacci-spiral directions on the upper hemisphere.
    pub fn spiral(l: SpinLength) -> Self {
        Self { l, directions: crate::random::spiral_directions(l.min_directions()) }
    }

    pub fn l(&self) -> SpinLength {
        self.l
    }

    pub fn directions(&self) -> &[Direction] {
        &self.directions
    }

    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }

    /// At least 4l+1 directions.
    pub fn is_complete(&self) -> bool {
        self.directions.len() >= self.l.min_directions()
    }
}

/// Affine map from basis coefficients to predicted moments.
///
/// Row `r = dir·2l + (k−1)` predicts ⟨L_d^k⟩ for direction index `dir`.
#[derive(Debug, Clone)]
pub struct DesignMatrix {
    pub l: SpinLength,
    pub directions: Vec<Direction>,
    pub matrix: DMatrix<f64>,
    pub offsets: DVector<f64>,
}

pub fn build_design_matrix(l: SpinLength, dirs: &DirectionSet, basis: &OperatorBasis) -> Result<DesignMatrix> {
    if basis.l() != l || dirs.l() != l {
        return Err(Error::DimensionMismatch { expected: l.parameter_count(), actual: basis.len() });
    }
    let ops = build_spin_operators(l);
    let orders = l.max_order();
    let dim = l.dimension();
    let rows = dirs.len() * orders;
    let mut matrix = DMatrix::zeros(rows, basis.len());
    let mut offsets = DVector::zeros(rows);
    for (d_idx, d) in dirs.directions().iter().enumerate() {
        let comp = ops.component(d).into_matrix();
        let mut power = linalg::identity(dim);
        for k in 1..=orders {
            power = &power * &comp;
            let row = d_idx * orders + (k - 1);
            offsets[row] = linalg::trace(&power).re / dim as f64;
            for (col, (_, op)) in basis.iter().enumerate() {
                matrix[(row, col)] = 0.5 * linalg::trace_product(op.matrix(), &power).re;
            }
        }
    }
    Ok(DesignMatrix { l, directions: dirs.directions().to_vec(), matrix, offsets })
}

impl DesignMatrix {
    pub fn nrows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn predict(&self, coeffs: &CoefficientVector) -> DVector<f64> {
        &self.matrix * DVector::from_column_slice(coeffs.values()) + &self.offsets
    }

    pub fn singular_values(&self) -> Vec<f64> {
        let mut s: Vec<f64> = self.matrix.clone().svd(false, false).singular_values.iter().copied().collect();
        s.sort_by(|a, b| b.total_cmp(a));
        s
    }

    /// Number of singular values above `relative_tol` times the largest.
    pub fn rank(&self, relative_tol: f64) -> usize {
        let s = self.singular_values();
        let top = s.first().copied().unwrap_or(0.0);
        s.iter().filter(|&&v| v > relative_tol * top).count()
    }

    /// σ_max/σ_min; infinite when columns are lost to the SVD cutoff.
    pub fn condition_number(&self) -> f64 {
        condition_of(&self.singular_values(), self.ncols())
    }

    pub fn is_informationally_complete(&self) -> bool {
        self.condition_number() < MAX_CONDITION_NUMBER
    }
}

fn condition_of(sorted_desc: &[f64], ncols: usize) -> f64 {
    let top = sorted_desc.first().copied().unwrap_or(0.0);
    let kept: Vec<f64> = sorted_desc.iter().copied().filter(|&v| v > SVD_RELATIVE_CUTOFF * top).collect();
    if kept.len() < ncols || top == 0.0 {
        return f64::INFINITY;
    }
    top / kept[kept.len() - 1]
}

/// Fitted coefficients together with both reconstructed matrices and diagnostics.
#[derive(Debug, Clone)]
pub struct ReconstructionReport<C = CoefficientVector> {
    pub coefficients: C,
    /// Direct inversion output; may lie outside the physical set.
    pub rho_raw: DensityMatrix,
    /// Nearest physical state to `rho_raw`.
    pub rho_physical: DensityMatrix,
    /// RMS of observed minus predicted moments.
    pub residual_norm: f64,
    pub consistency_residuals: Vec<f64>,
    pub condition_number: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ReconstructOptions {
    /// Weight each row by shots / (Var(m^k) + ε); off by default.
    pub weighted: bool,
}

/// Observed moments stacked in design-matrix row order.
pub fn observed_moments(record: &MeasurementRecord) -> DVector<f64> {
    let l = record.l();
    let orders = l.max_order();
    let mut y = DVector::zeros(record.len() * orders);
    for (d_idx, entry) in record.entries().iter().enumerate() {
        let p = entry.data.probabilities();
        for k in 1..=orders {
            y[d_idx * orders + k - 1] = power_sum(l, &p, k);
        }
    }
    y
}

fn row_weights(record: &MeasurementRecord) -> DVector<f64> {
    let l = record.l();
    let orders = l.max_order();
    let mut w = DVector::zeros(record.len() * orders);
    for (d_idx, entry) in record.entries().iter().enumerate() {
        let p = entry.data.probabilities();
        let shots = match entry.data {
            OutcomeData::Counts(_) => entry.data.shots().unwrap_or(1) as f64,
            OutcomeData::Probabilities(_) => 1.0,
        };
        for k in 1..=orders {
            let mean = power_sum(l, &p, k);
            let var = (power_sum(l, &p, 2 * k) - mean * mean).max(0.0);
            w[d_idx * orders + k - 1] = shots / (var + WEIGHT_EPSILON);
        }
    }
    w
}

/// SVD least squares; returns the solution and the condition number.
fn solve_least_squares(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<(DVector<f64>, f64)> {
    let svd = a.clone().svd(true, true);
    let mut s: Vec<f64> = svd.singular_values.iter().copied().collect();
    s.sort_by(|x, y| y.total_cmp(x));
    let cond = condition_of(&s, a.ncols());
    if !(cond < MAX_CONDITION_NUMBER) {
        return Err(Error::IllConditioned(cond));
    }
    let top = s[0];
    let x = svd
        .solve(b, SVD_RELATIVE_CUTOFF * top)
        .map_err(|e| Error::Internal(format!("SVD solve failed: {e}")))?;
    Ok((x, cond))
}

/// Least-squares reconstruction from a record along ≥ 4l+1 directions.
pub fn reconstruct_linear(
    record: &MeasurementRecord,
    basis: &OperatorBasis,
    options: ReconstructOptions,
) -> Result<ReconstructionReport> {
    let l = record.l();
    if basis.l() != l {
        return Err(Error::DimensionMismatch { expected: l.parameter_count(), actual: basis.len() });
    }
    if record.len() < l.min_directions() {
        return Err(Error::InsufficientDirections { got: record.len(), needed: l.min_directions() });
    }
    let dirs = DirectionSet::new(l, record.directions())?;
    let design = build_design_matrix(l, &dirs, basis)?;
    let y = observed_moments(record);
    let target = &y - &design.offsets;

    let (x, cond) = if options.weighted {
        let sw = row_weights(record).map(f64::sqrt);
        let mut a = design.matrix.clone();
        for (r, w) in sw.iter().enumerate() {
            a.row_mut(r).scale_mut(*w);
        }
        let b = target.component_mul(&sw);
        let (x, _) = solve_least_squares(&a, &b)?;
        (x, design.condition_number())
    } else {
        solve_least_squares(&design.matrix, &target)?
    };

    let coefficients = CoefficientVector::new(l, x.iter().copied().collect())?;
    let residuals = &y - design.predict(&coefficients);
    finish_report(coefficients, basis, residuals.iter().copied().collect(), residuals, cond)
}

fn finish_report(
    coefficients: CoefficientVector,
    basis: &OperatorBasis,
    consistency_residuals: Vec<f64>,
    moment_residuals: DVector<f64>,
    condition_number: f64,
) -> Result<ReconstructionReport> {
    let rho_raw = reconstruct_from_coefficients(&coefficients, basis)?;
    let rho_physical = psd_project(&rho_raw);
    let residual_norm = rms(moment_residuals.as_slice());
    Ok(ReconstructionReport {
        coefficients,
        rho_raw,
        rho_physical,
        residual_norm,
        consistency_residuals,
        condition_number,
    })
}

fn rms(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt()
}

/// Per-direction statistics of a five-direction spin-1 record:
/// `(p_i(0), p_i(+1) − p_i(−1))` for i = 1..5.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Spin1Statistics {
    pub p_zero: [f64; 5],
    pub mean: [f64; 5],
}

impl Spin1Statistics {
    pub fn from_record(record: &MeasurementRecord) -> Result<Self> {
        if record.l().two_l() != 2 || record.len() != 5 {
            return Err(Error::WrongDirections);
        }
        let expected = spin1_five_directions();
        let mut p_zero = [0.0; 5];
        let mut mean = [0.0; 5];
        for (i, (entry, want)) in record.entries().iter().zip(expected.iter()).enumerate() {
            if entry.direction.angle_to(want) > DIRECTION_MATCH_TOL {
                return Err(Error::WrongDirections);
            }
            let p = entry.data.probabilities();
            p_zero[i] = p[1];
            mean[i] = p[0] - p[2];
        }
        Ok(Self { p_zero, mean })
    }
}

/// Closed-form coefficients for the five-direction protocol, in canonical
/// order (⟨L_x⟩, ⟨L_y⟩, ⟨L_z⟩, ⟨S_xy⟩, ⟨Q_xy⟩, ⟨Q_yz⟩, ⟨Q_zx⟩, ⟨G_z⟩).
///
/// The quadratic block is the exact inverse of the five ⟨L_i²⟩ = 1 − p_i(0) rows:
///
/// ```text
/// ⟨S_xy⟩ = −(p₁(0) − p₂(0))
/// ⟨Q_xy⟩ = p₁(0) + p₂(0) − 2p₃(0)
/// ⟨Q_yz⟩ = 1 − p₁(0) − 2p₄(0)
/// ⟨Q_zx⟩ = 1 − p₂(0) − 2p₅(0)
/// ⟨G_z⟩  = √3 (p₁(0) + p₂(0) − 2/3)
/// ```
///
/// The linear block is the least-squares pseudo-inverse of the five mean rows
/// (x, y, (x+y)/√2, (y+z)/√2, (z+x)/√2), with ⟨L_i⟩ = p_i(+1) − p_i(−1) = m_i:
///
/// ```text
/// ⟨L_x⟩ = (7m₁ − m₂)/12 + √2 (3m₃ − 2m₄ + 2m₅)/12
/// ⟨L_y⟩ = (7m₂ − m₁)/12 + √2 (3m₃ + 2m₄ − 2m₅)/12
/// ⟨L_z⟩ = −(m₁ + m₂)/4 + √2 (−m₃ + 2m₄ + 2m₅)/4
/// ```
///
/// On noise-free data the last line reduces to ⟨L_z⟩ = (m₄ + m₅ − m₃)/√2.
pub fn spin1_derived_coefficients(stats: &Spin1Statistics) -> [f64; 8] {
    let p = stats.p_zero;
    let m = stats.mean;
    let s2 = std::f64::consts::SQRT_2;
    let s3 = 3f64.sqrt();
    [
        (7.0 * m[0] - m[1]) / 12.0 + s2 * (3.0 * m[2] - 2.0 * m[3] + 2.0 * m[4]) / 12.0,
        (7.0 * m[1] - m[0]) / 12.0 + s2 * (3.0 * m[2] + 2.0 * m[3] - 2.0 * m[4]) / 12.0,
        -(m[0] + m[1]) / 4.0 + s2 * (-m[2] + 2.0 * m[3] + 2.0 * m[4]) / 4.0,
        -(p[0] - p[1]),
        p[0] + p[1] - 2.0 * p[2],
        1.0 - p[0] - 2.0 * p[3],
        1.0 - p[1] - 2.0 * p[4],
        s3 * (p[0] + p[1] - 2.0 / 3.0),
    ]
}

/// A widely circulated variant of the same table, kept for comparison.
///
/// It differs from [`spin1_derived_coefficients`] in the sign of the
/// p₁(0)/p₂(0) terms of ⟨Q_yz⟩ and ⟨Q_zx⟩ and by a factor 2 in ⟨L_z⟩, and
/// does not round-trip.
pub fn spin1_legacy_coefficients(stats: &Spin1Statistics) -> [f64; 8] {
    let p = stats.p_zero;
    let m = stats.mean;
    let s2 = std::f64::consts::SQRT_2;
    [
        m[0],
        m[1],
        -s2 * (m[2] - m[3] - m[4]),
        -(p[0] - p[1]),
        p[0] + p[1] - 2.0 * p[2],
        p[0] - 2.0 * p[3] + 1.0,
        p[1] - 2.0 * p[4] + 1.0,
        3f64.sqrt() * (p[0] + p[1] - 2.0 / 3.0),
    ]
}

/// The two linear relations that exact five-direction statistics satisfy:
///
/// ```text
/// m₁ − (m₃ − m₄ + m₅)/√2
/// m₂ − (m₃ + m₄ − m₅)/√2
/// ```
///
/// Both vanish for exact data; their size estimates the noise in the record.
pub fn consistency_residuals(record: &MeasurementRecord) -> Result<[f64; 2]> {
    let stats = Spin1Statistics::from_record(record)?;
    Ok(spin1_relations(&stats))
}

fn spin1_relations(stats: &Spin1Statistics) -> [f64; 2] {
    let m = stats.mean;
    let r = std::f64::consts::FRAC_1_SQRT_2;
    [m[0] - r * (m[2] - m[3] + m[4]), m[1] - r * (m[2] + m[3] - m[4])]
}

/// Closed-form reconstruction for the five-direction spin-1 protocol.
pub fn reconstruct_spin1_explicit(record: &MeasurementRecord) -> Result<ReconstructionReport> {
    let stats = Spin1Statistics::from_record(record)?;
    let l = record.l();
    let basis = complete_basis(l)?;
    let coefficients = CoefficientVector::new(l, spin1_derived_coefficients(&stats).to_vec())?;
    let design = build_design_matrix(l, &DirectionSet::spin1_five(), &basis)?;
    let residuals = observed_moments(record) - design.predict(&coefficients);
    finish_report(
        coefficients,
        &basis,
        spin1_relations(&stats).to_vec(),
        residuals,
        design.condition_number(),
    )
}

/// Euclidean projection onto the probability simplex.
pub fn project_onto_simplex(values: &[f64]) -> Vec<f64> {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut tau = 0.0;
    for (j, u) in sorted.iter().enumerate() {
        cumulative += u;
        let candidate = (cumulative - 1.0) / (j + 1) as f64;
        if u - candidate > 0.0 {
            tau = candidate;
        }
    }
    values.iter().map(|v| (v - tau).max(0.0)).collect()
}

/// Nearest unit-trace PSD matrix in Frobenius norm. PSD inputs are returned unchanged.
pub fn psd_project(rho: &DensityMatrix) -> DensityMatrix {
    let (values, vectors) = linalg::eigh(rho.matrix());
    if values.iter().all(|&v| v >= 0.0) {
        return rho.clone();
    }
    let projected = project_onto_simplex(&values);
    let dim = rho.dim();
    let mut m = CMatrix::zeros(dim, dim);
    for (k, w) in projected.iter().enumerate() {
        if *w > 0.0 {
            let v = vectors.column(k).into_owned();
            m += linalg::outer(&v) * c(*w);
        }
    }
    let tr = linalg::trace(&m).re;
    DensityMatrix::new(linalg::hermitize(&(m / c(tr)))).expect("projection yields a density matrix")
}
