//! Measurement statistics of spin components.
//!
//! A projective measurement of L_d on ρ yields outcome `m` with probability
//! p(m) = Tr{ρ P_d(m)}; the moments ⟨L_d^n⟩ = Σ_m m^n p(m) for n = 1..2l
//! carry the same information as the distribution itself.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;

use crate::basis::{coefficients_to_matrix, CoefficientVector, OperatorBasis};
use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix};
use crate::spin::{build_spin_operators, direction_projectors, DensityMatrix, Direction, SpinLength, SpinOperators};

const OUTCOME_STATE_TOL: f64 = 1e-8;
const NORMALIZATION_TOL: f64 = 1e-9;
const DISTINCT_DIRECTION_TOL: f64 = 1e-9;

/// Outcome probabilities along one direction, indexed from `m = +l` down to `m = -l`.
///
/// Values are kept unclipped; [`OutcomeDistribution::clipped`] is applied on output.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeDistribution {
    pub direction: Direction,
    pub l: SpinLength,
    pub probabilities: Vec<f64>,
}

impl OutcomeDistribution {
    pub fn new(l: SpinLength, direction: Direction, probabilities: Vec<f64>) -> Result<Self> {
        if probabilities.len() != l.dimension() {
            return Err(Error::DimensionMismatch { expected: l.dimension(), actual: probabilities.len() });
        }
        Ok(Self { direction, l, probabilities })
    }

    pub fn probability(&self, two_m: i64) -> Option<f64> {
        self.l.index_of_two_m(two_m).map(|k| self.probabilities[k])
    }

    pub fn clipped(&self) -> Vec<f64> {
        self.probabilities.iter().map(|p| p.clamp(0.0, 1.0)).collect()
    }
}

/// ⟨L_d^n⟩ for n = 1..2l.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentVector {
    pub direction: Direction,
    pub values: Vec<f64>,
}

impl MomentVector {
    pub fn get(&self, n: usize) -> f64 {
        self.values[n - 1]
    }
}

fn born_probabilities(matrix: &CMatrix, ops: &SpinOperators, d: &Direction) -> Vec<f64> {
    direction_projectors(ops, d)
        .outcomes
        .iter()
        .map(|(_, p)| linalg::trace_product(matrix, p.matrix()).re)
        .collect()
}

fn spin_of(dim: usize) -> Result<SpinLength> {
    if dim < 2 {
        return Err(Error::DimensionMismatch { expected: 2, actual: dim });
    }
    SpinLength::new(dim as u32 - 1)
}

/// Born-rule distribution of L_d for a physical state.
pub fn outcome_distribution(rho: &DensityMatrix, d: &Direction) -> Result<OutcomeDistribution> {
    let l = spin_of(rho.dim())?;
    outcome_distribution_with(&build_spin_operators(l), rho, d)
}

/// As [`outcome_distribution`] with precomputed spin operators.
pub fn outcome_distribution_with(ops: &SpinOperators, rho: &DensityMatrix, d: &Direction) -> Result<OutcomeDistribution> {
    let l = ops.l;
    if rho.dim() != l.dimension() {
        return Err(Error::DimensionMismatch { expected: l.dimension(), actual: rho.dim() });
    }
    if rho.min_eigenvalue() < -OUTCOME_STATE_TOL {
        return Err(Error::NonPhysicalState(rho.min_eigenvalue()));
    }
    Ok(OutcomeDistribution { direction: *d, l, probabilities: born_probabilities(rho.matrix(), ops, d) })
}

pub fn moments(dist: &OutcomeDistribution) -> MomentVector {
    let values = (1..=dist.l.max_order())
        .map(|n| power_sum(dist.l, &dist.probabilities, n))
        .collect();
    MomentVector { direction: dist.direction, values }
}

/// Σ_m m^n p(m)
pub(crate) fn power_sum(l: SpinLength, probabilities: &[f64], n: usize) -> f64 {
    probabilities
        .iter()
        .enumerate()
        .map(|(k, p)| l.m(k).powi(n as i32) * p)
        .sum()
}

/// Predicted ⟨L_d^n⟩ for the state described by `coeffs`.
///
/// Spin 1 uses the closed-form angular expressions; other spins go through
/// reconstruction and the Born rule.
pub fn predict_moment(coeffs: &CoefficientVector, basis: &OperatorBasis, d: &Direction, n: usize) -> Result<f64> {
    let l = coeffs.l();
    if n == 0 || n > l.max_order() {
        return Err(Error::OrderOutOfRange { order: n, max: l.max_order() });
    }
    if l.two_l() == 2 {
        return Ok(spin1_closed_form(coeffs, d, n));
    }
    predict_moment_generic(coeffs, basis, d, n)
}

pub(crate) fn predict_moment_generic(
    coeffs: &CoefficientVector,
    basis: &OperatorBasis,
    d: &Direction,
    n: usize,
) -> Result<f64> {
    let l = coeffs.l();
    let matrix = coefficients_to_matrix(coeffs, basis)?;
    let probs = born_probabilities(&matrix, &build_spin_operators(l), d);
    Ok(power_sum(l, &probs, n))
}

fn spin1_closed_form(coeffs: &CoefficientVector, d: &Direction, n: usize) -> f64 {
    let (st, ct) = d.theta.sin_cos();
    let (sp, cp) = d.phi.sin_cos();
    let a = |i| coeffs.get(n, i);
    match n {
        1 => st * cp * a(1) + st * sp * a(2) + ct * a(3),
        _ => {
            2.0 / 3.0
                + 0.5 * st * st * (2.0 * d.phi).cos() * a(1)
                + st * st * sp * cp * a(2)
                + st * ct * sp * a(3)
                + st * ct * cp * a(4)
                + (1.0 - 1.5 * st * st) / 3f64.sqrt() * a(5)
        }
    }
}

/// Outcome data for one direction: exact probabilities or integer counts.
#[derive(Debug, Clone, PartialEq)]
pub enum OutcomeData {
    Probabilities(Vec<f64>),
    Counts(Vec<u64>),
}

impl OutcomeData {
    pub fn len(&self) -> usize {
        match self {
            OutcomeData::Probabilities(p) => p.len(),
            OutcomeData::Counts(c) => c.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn shots(&self) -> Option<u64> {
        match self {
            OutcomeData::Probabilities(_) => None,
            OutcomeData::Counts(c) => Some(c.iter().sum()),
        }
    }

    /// Probabilities, or counts divided by the total with no smoothing.
    pub fn probabilities(&self) -> Vec<f64> {
        match self {
            OutcomeData::Probabilities(p) => p.clone(),
            OutcomeData::Counts(c) => {
                let total: u64 = c.iter().sum();
                c.iter().map(|&k| k as f64 / total as f64).collect()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecordEntry {
    pub direction: Direction,
    pub data: OutcomeData,
}

impl RecordEntry {
    pub fn probabilities(entry: Direction, probabilities: Vec<f64>) -> Self {
        Self { direction: entry, data: OutcomeData::Probabilities(probabilities) }
    }

    pub fn counts(entry: Direction, counts: Vec<u64>) -> Self {
        Self { direction: entry, data: OutcomeData::Counts(counts) }
    }
}

/// Outcome data for a list of pairwise distinct directions.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementRecord {
    l: SpinLength,
    entries: Vec<RecordEntry>,
}

impl MeasurementRecord {
    pub fn new(l: SpinLength, entries: Vec<RecordEntry>) -> Result<Self> {
        for (idx, e) in entries.iter().enumerate() {
            if !e.direction.is_finite() {
                return Err(Error::InvalidInput(format!("entry {idx}: non-finite angles")));
            }
            if e.data.len() != l.dimension() {
                return Err(Error::IncompleteRecord(format!(
                    "entry {idx} has {} outcomes, expected {}",
                    e.data.len(),
                    l.dimension()
                )));
            }
            match &e.data {
                OutcomeData::Probabilities(p) => {
                    if p.iter().any(|x| !x.is_finite()) {
                        return Err(Error::InvalidInput(format!("entry {idx}: non-finite probability")));
                    }
                    let sum: f64 = p.iter().sum();
                    if (sum - 1.0).abs() > NORMALIZATION_TOL {
                        return Err(Error::InvalidInput(format!("entry {idx}: probabilities sum to {sum}")));
                    }
                }
                OutcomeData::Counts(c) => {
                    if c.iter().sum::<u64>() == 0 {
                        return Err(Error::IncompleteRecord(format!("entry {idx} has zero shots")));
                    }
                }
            }
            for (jdx, other) in entries[..idx].iter().enumerate() {
                if e.direction.angle_to(&other.direction) <= DISTINCT_DIRECTION_TOL {
                    return Err(Error::InvalidInput(format!("entries {jdx} and {idx} share a direction")));
                }
            }
        }
        Ok(Self { l, entries })
    }

    pub fn l(&self) -> SpinLength {
        self.l
    }

    pub fn entries(&self) -> &[RecordEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn directions(&self) -> Vec<Direction> {
        self.entries.iter().map(|e| e.direction).collect()
    }
}

/// Exact Born-rule record of `rho` along every direction.
pub fn simulate_record(rho: &DensityMatrix, directions: &[Direction]) -> Result<MeasurementRecord> {
    let l = spin_of(rho.dim())?;
    let ops = build_spin_operators(l);
    let entries = directions
        .iter()
        .map(|d| Ok(RecordEntry::probabilities(*d, outcome_distribution_with(&ops, rho, d)?.probabilities)))
        .collect::<Result<Vec<_>>>()?;
    MeasurementRecord::new(l, entries)
}

/// Multinomial draw of `shots` outcomes. Equivalent to stream 0 of [`sample_counts_keyed`].
pub fn sample_counts(dist: &OutcomeDistribution, shots: u64, seed: u64) -> RecordEntry {
    sample_counts_keyed(dist, shots, seed, 0)
}

/// Multinomial draw from a ChaCha stream selected by `(seed, stream)`, so that
/// each direction's counts do not depend on evaluation order.
pub fn sample_counts_keyed(dist: &OutcomeDistribution, shots: u64, seed: u64, stream: u64) -> RecordEntry {
    RecordEntry::counts(dist.direction, multinomial(&dist.clipped(), shots, seed, stream))
}

pub(crate) fn multinomial(probabilities: &[f64], shots: u64, seed: u64, stream: u64) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let total: f64 = probabilities.iter().sum();
    let mut remaining_mass = 1.0;
    let mut remaining = shots;
    let mut counts = Vec::with_capacity(probabilities.len());
    for (k, p) in probabilities.iter().enumerate() {
        let p = p / total;
        let draw = if k + 1 == probabilities.len() || remaining == 0 {
            remaining
        } else if remaining_mass <= 0.0 {
            0
        } else {
            let q = (p / remaining_mass).clamp(0.0, 1.0);
            Binomial::new(remaining, q).expect("probability within [0, 1]").sample(&mut rng)
        };
        counts.push(draw);
        remaining -= draw;
        remaining_mass -= p;
    }
    counts
}

/// Replaces every entry of an exact record by sampled counts.
pub fn sample_record(record: &MeasurementRecord, shots: u64, seed: u64) -> Result<MeasurementRecord> {
    if shots == 0 {
        return Err(Error::InvalidInput("shots must be at least 1".into()));
    }
    let entries = record
        .entries()
        .par_iter()
        .enumerate()
        .map(|(idx, e)| {
            let p: Vec<f64> = e.data.probabilities().iter().map(|x| x.clamp(0.0, 1.0)).collect();
            RecordEntry::counts(e.direction, multinomial(&p, shots, seed, idx as u64))
        })
        .collect();
    MeasurementRecord::new(record.l(), entries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{complete_basis, decompose};
    use crate::linalg::c;
    use crate::random;
    use approx::assert_abs_diff_eq;
    use nalgebra::{DMatrix, DVector};
    use rand::Rng;

    fn spin(two_l: u32) -> SpinLength {
        SpinLength::new(two_l).unwrap()
    }

    /// Recovers p(m) from normalization plus the first 2l moments.
    fn distribution_from_moments(l: SpinLength, moments: &[f64]) -> Vec<f64> {
        let n = l.dimension();
        let vander = DMatrix::from_fn(n, n, |row, k| l.m(k).powi(row as i32));
        let mut rhs = vec![1.0];
        rhs.extend_from_slice(moments);
        vander.lu().solve(&DVector::from_vec(rhs)).unwrap().iter().copied().collect()
    }

    #[test]
    fn lz_eigenstate_along_z() {
        let rho = DensityMatrix::lz_eigenstate(spin(2), 2).unwrap();
        let dist = outcome_distribution(&rho, &Direction::z()).unwrap();
        assert_abs_diff_eq!(dist.probability(2).unwrap(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(dist.probability(0).unwrap(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(dist.probability(-2).unwrap(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn mixed_state_is_isotropic() {
        let rho = DensityMatrix::maximally_mixed(3);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let dist = outcome_distribution(&rho, &random::random_direction(&mut rng)).unwrap();
            for p in dist.probabilities {
                assert_abs_diff_eq!(p, 1.0 / 3.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn m0_state_along_x() {
        let rho = DensityMatrix::lz_eigenstate(spin(2), 0).unwrap();
        let dist = outcome_distribution(&rho, &Direction::x()).unwrap();
        assert_abs_diff_eq!(dist.probability(0).unwrap(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(dist.probability(2).unwrap(), 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(dist.probability(-2).unwrap(), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn non_physical_and_mismatched_states() {
        let bad = CMatrix::from_diagonal(&DVector::from_vec(vec![c(1.1), c(0.0), c(-0.1)]));
        let rho = DensityMatrix::new(bad).unwrap();
        assert!(matches!(outcome_distribution(&rho, &Direction::z()), Err(Error::NonPhysicalState(_))));
        let ops = build_spin_operators(spin(2));
        let rho4 = DensityMatrix::maximally_mixed(4);
        assert!(matches!(
            outcome_distribution_with(&ops, &rho4, &Direction::z()),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn moment_examples() {
        let l = spin(2);
        let d = Direction::z();
        let m = moments(&OutcomeDistribution::new(l, d, vec![1.0 / 3.0; 3]).unwrap());
        assert_abs_diff_eq!(m.get(1), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(m.get(2), 2.0 / 3.0, epsilon = 1e-15);
        let m = moments(&OutcomeDistribution::new(l, d, vec![1.0, 0.0, 0.0]).unwrap());
        assert_eq!((m.get(1), m.get(2)), (1.0, 1.0));
        let m = moments(&OutcomeDistribution::new(l, d, vec![0.5, 0.0, 0.5]).unwrap());
        assert_eq!((m.get(1), m.get(2)), (0.0, 1.0));
    }

    #[test]
    fn born_rule_matches_operator_powers() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for two_l in 1..=6 {
            let l = spin(two_l);
            let ops = build_spin_operators(l);
            let rho = random::random_density_matrix(l.dimension(), &mut rng);
            let d = random::random_direction(&mut rng);
            let dist = outcome_distribution_with(&ops, &rho, &d).unwrap();
            assert_abs_diff_eq!(dist.probabilities.iter().sum::<f64>(), 1.0, epsilon = 1e-10);
            let mv = moments(&dist);
            let comp = ops.component(&d);
            for n in 1..=l.max_order() {
                let direct = linalg::trace_product(rho.matrix(), &linalg::matrix_power(comp.matrix(), n)).re;
                assert!((mv.get(n) - direct).abs() < 1e-10);
            }
            let back = distribution_from_moments(l, &mv.values);
            for (a, b) in back.iter().zip(&dist.probabilities) {
                assert!((a - b).abs() < 1e-8);
            }
            if l.max_order() >= 2 {
                assert!(mv.get(2) >= mv.get(1).powi(2) - 1e-10);
            }
        }
    }

    #[test]
    fn closed_forms_agree_with_generic_path() {
        let l = spin(2);
        let basis = complete_basis(l).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let rho = random::random_density_matrix(3, &mut rng);
            let coeffs = decompose(&rho, &basis).unwrap();
            let d = random::random_direction(&mut rng);
            for n in 1..=2 {
                let closed = predict_moment(&coeffs, &basis, &d, n).unwrap();
                let generic = predict_moment_generic(&coeffs, &basis, &d, n).unwrap();
                assert!((closed - generic).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn quadratic_formula_single_coefficient() {
        let l = spin(2);
        let basis = complete_basis(l).unwrap();
        let mut coeffs = CoefficientVector::zeros(l);
        let s = 0.37;
        coeffs.set(2, 5, s);
        for theta in [0.0, 0.4, 1.1, 2.5] {
            let d = Direction::new(theta, 0.9);
            let want = 2.0 / 3.0 + (1.0 - 1.5 * theta.sin().powi(2)) * s / 3f64.sqrt();
            assert_abs_diff_eq!(predict_moment(&coeffs, &basis, &d, 2).unwrap(), want, epsilon = 1e-14);
            assert_abs_diff_eq!(predict_moment_generic(&coeffs, &basis, &d, 2).unwrap(), want, epsilon = 1e-12);
        }
        let zero = CoefficientVector::zeros(l);
        assert_eq!(predict_moment(&zero, &basis, &Direction::new(0.3, 0.2), 1).unwrap(), 0.0);
        assert!(matches!(predict_moment(&zero, &basis, &Direction::z(), 3), Err(Error::OrderOutOfRange { .. })));
    }

    #[test]
    fn generic_prediction_spin3_2() {
        // oracle: Tr{ρ L_d³} with ρ built directly from the coefficients
        let l = spin(3);
        let basis = complete_basis(l).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let values: Vec<f64> = (0..l.parameter_count()).map(|_| rng.random_range(-0.2..0.2)).collect();
        let coeffs = CoefficientVector::new(l, values).unwrap();
        let d = Direction::new(0.7, 1.1);
        let mut rho = linalg::identity(4) * c(0.25);
        for (v, (_, op)) in coeffs.values().iter().zip(basis.iter()) {
            rho += op.matrix() * c(0.5 * v);
        }
        let comp = spin_component_matrix(l, &d);
        let want = linalg::trace_product(&rho, &linalg::matrix_power(&comp, 3)).re;
        assert!((predict_moment(&coeffs, &basis, &d, 3).unwrap() - want).abs() < 1e-12);
    }

    fn spin_component_matrix(l: SpinLength, d: &Direction) -> CMatrix {
        crate::spin::spin_component(l, d).into_matrix()
    }

    #[test]
    fn sampling_is_deterministic_and_complete() {
        let l = spin(2);
        let det = OutcomeDistribution::new(l, Direction::z(), vec![1.0, 0.0, 0.0]).unwrap();
        let e = sample_counts(&det, 1234, 9);
        assert_eq!(e.data, OutcomeData::Counts(vec![1234, 0, 0]));

        let uni = OutcomeDistribution::new(l, Direction::z(), vec![1.0 / 3.0; 3]).unwrap();
        let a = sample_counts(&uni, 1000, 42);
        let b = sample_counts(&uni, 1000, 42);
        assert_eq!(a, b);
        assert_eq!(a.data.shots(), Some(1000));
        let c2 = sample_counts_keyed(&uni, 1000, 42, 1);
        assert_ne!(a, c2);
    }

    #[test]
    fn uniform_sampling_at_three_million_shots() {
        let l = spin(2);
        let uni = OutcomeDistribution::new(l, Direction::z(), vec![1.0 / 3.0; 3]).unwrap();
        let shots = 3_000_000;
        let e = sample_counts(&uni, shots, 2024);
        // 5σ with σ = √(p(1−p)/shots) ≈ 2.7e-4
        for p in e.data.probabilities() {
            assert!((p - 1.0 / 3.0).abs() < 3e-3);
        }
    }

    #[test]
    fn empirical_moments_converge() {
        let l = spin(2);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let rho = random::random_density_matrix(3, &mut rng);
        let dist = outcome_distribution(&rho, &Direction::new(0.8, 0.3)).unwrap();
        let exact = moments(&dist);
        let mut errors = Vec::new();
        for shots in [1_000u64, 100_000, 10_000_000] {
            let mut total = 0.0;
            for seed in 0..20 {
                let probs = sample_counts(&dist, shots, seed).data.probabilities();
                let emp = OutcomeDistribution::new(l, dist.direction, probs).unwrap();
                total += (moments(&emp).get(1) - exact.get(1)).abs();
            }
            errors.push(total / 20.0);
        }
        // each 100× increase in shots should cut the error roughly 10×
        assert!(errors[1] < errors[0] / 4.0 && errors[1] > errors[0] / 25.0, "{errors:?}");
        assert!(errors[2] < errors[1] / 4.0 && errors[2] > errors[1] / 25.0, "{errors:?}");
    }

    #[test]
    fn record_validation() {
        let l = spin(2);
        let e = RecordEntry::probabilities(Direction::z(), vec![0.5, 0.5, 0.0]);
        assert!(MeasurementRecord::new(l, vec![e.clone(), e.clone()]).is_err());
        let short = RecordEntry::probabilities(Direction::x(), vec![0.5, 0.5]);
        assert!(matches!(MeasurementRecord::new(l, vec![short]), Err(Error::IncompleteRecord(_))));
        let empty = RecordEntry::counts(Direction::x(), vec![0, 0, 0]);
        assert!(matches!(MeasurementRecord::new(l, vec![empty]), Err(Error::IncompleteRecord(_))));
        let off = RecordEntry::probabilities(Direction::x(), vec![0.5, 0.6, 0.0]);
        assert!(MeasurementRecord::new(l, vec![off]).is_err());
    }

    #[test]
    fn sampled_record_is_order_independent() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let rho = random::random_density_matrix(3, &mut rng);
        let dirs = crate::spin::spin1_five_directions();
        let rec = simulate_record(&rho, &dirs).unwrap();
        let a = sample_record(&rec, 500, 77).unwrap();
        let b = sample_record(&rec, 500, 77).unwrap();
        assert_eq!(a, b);
        let dist = OutcomeDistribution::new(
            rec.l(),
            dirs[3],
            rec.entries()[3].data.probabilities(),
        )
        .unwrap();
        assert_eq!(a.entries()[3], sample_counts_keyed(&dist, 500, 77, 3));
    }
}
