//! Orthonormal operator basis λ_{n,i} ordered by spin-statistics order.
//!
//! Every member is traceless, satisfies Tr{λ_a λ_b} = 2δ_ab, and has
//! non-zero L_z-basis entries on a single coherence |m′−m| only. The order
//! `n` is the lowest moment order ⟨L_d^n⟩ to which the operator contributes.
//!
//! Construction: for coherence `c ≥ 1` the chain starts from the normalized
//! Hermitian parts of (L₊)^c; for `c = 0` it starts from L_z. Each further
//! order is seeded by ½{previous member, L_z}, which spans the same
//! polynomials as ½{λ_c, L_z^(n−c)} but keeps the recursion well scaled, and
//! is then Gram–Schmidt orthogonalized (two passes) against the identity
//! and the lower orders of the same chain.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, c, CMatrix, I};
use crate::spin::{build_spin_operators, raising_operator, DensityMatrix, HermitianOperator, SpinLength};

const IMAG_RESIDUE_TOL: f64 = 1e-10;
const DEGENERATE_TOL: f64 = 1e-12;

/// Which Hermitian part of a coherence block an operator spans.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Part {
    /// Symmetric real off-diagonal entries, from (L₊)^c + (L₋)^c.
    Real,
    /// Antisymmetric imaginary entries, from −i[(L₊)^c − (L₋)^c].
    Imaginary,
    /// Coherence zero.
    Diagonal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BasisLabel {
    pub n: usize,
    pub i: usize,
    pub coherence: usize,
    pub part: Part,
}

impl BasisLabel {
    /// Position in the flattened coefficient vector: orders below `n` hold n² − 1 entries.
    pub fn flat_index(n: usize, i: usize) -> usize {
        n * n - 1 + (i - 1)
    }

    pub fn key(&self) -> String {
        format!("{},{}", self.n, self.i)
    }
}

#[derive(Debug, Clone)]
pub struct OperatorBasis {
    l: SpinLength,
    members: Vec<(BasisLabel, HermitianOperator)>,
}

impl OperatorBasis {
    pub fn l(&self) -> SpinLength {
        self.l
    }

    pub fn dimension(&self) -> usize {
        self.l.dimension()
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &(BasisLabel, HermitianOperator)> {
        self.members.iter()
    }

    pub fn labels(&self) -> impl Iterator<Item = BasisLabel> + '_ {
        self.members.iter().map(|(lab, _)| *lab)
    }

    pub fn label(&self, index: usize) -> BasisLabel {
        self.members[index].0
    }

    pub fn operator_at(&self, index: usize) -> &HermitianOperator {
        &self.members[index].1
    }

    pub fn operator(&self, n: usize, i: usize) -> Option<&HermitianOperator> {
        if n == 0 || n > self.l.max_order() || i == 0 || i > 2 * n + 1 {
            return None;
        }
        Some(&self.members[BasisLabel::flat_index(n, i)].1)
    }

    /// Members of order `n`, in canonical order.
    pub fn order(&self, n: usize) -> &[(BasisLabel, HermitianOperator)] {
        let start = n * n - 1;
        &self.members[start..start + 2 * n + 1]
    }
}

/// Basis coefficients ⟨λ_{n,i}⟩, flattened in canonical order.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientVector {
    l: SpinLength,
    values: Vec<f64>,
}

impl CoefficientVector {
    pub fn new(l: SpinLength, values: Vec<f64>) -> Result<Self> {
        if values.len() != l.parameter_count() {
            return Err(Error::DimensionMismatch { expected: l.parameter_count(), actual: values.len() });
        }
        Ok(Self { l, values })
    }

    pub fn zeros(l: SpinLength) -> Self {
        Self { l, values: vec![0.0; l.parameter_count()] }
    }

    pub fn l(&self) -> SpinLength {
        self.l
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, n: usize, i: usize) -> f64 {
        self.values[BasisLabel::flat_index(n, i)]
    }

    pub fn set(&mut self, n: usize, i: usize, value: f64) {
        self.values[BasisLabel::flat_index(n, i)] = value;
    }

    pub fn order(&self, n: usize) -> &[f64] {
        let start = n * n - 1;
        &self.values[start..start + 2 * n + 1]
    }

    /// Pairs of `"n,i"` keys and values.
    pub fn keyed(&self) -> Vec<(String, f64)> {
        let mut out = Vec::with_capacity(self.values.len());
        for n in 1..=self.l.max_order() {
            for i in 1..=2 * n + 1 {
                out.push((format!("{n},{i}"), self.get(n, i)));
            }
        }
        out
    }
}

/// λ_{n,1}, λ_{n,2}: normalized Hermitian parts of (L₊)^n.
pub fn extremal_pair(l: SpinLength, n: usize) -> Result<(HermitianOperator, HermitianOperator)> {
    if n == 0 || n > l.max_order() {
        return Err(Error::OrderOutOfRange { order: n, max: l.max_order() });
    }
    let lp_n = linalg::matrix_power(&raising_operator(l), n);
    let lm_n = lp_n.adjoint();
    let norm = linalg::trace_product(&lp_n, &lm_n).re.sqrt();
    let real = (&lp_n + &lm_n) / c(norm);
    let imag = (&lp_n - &lm_n) * (-I) / c(norm);
    Ok((HermitianOperator::from_hermitian(real), HermitianOperator::from_hermitian(imag)))
}

struct Chain {
    members: Vec<(usize, CMatrix)>,
}

impl Chain {
    /// Orthogonalize against identity and the existing chain, then normalize to Tr{X²} = 2.
    fn admit(&mut self, n: usize, candidate: CMatrix) -> Result<CMatrix> {
        let dim = candidate.nrows();
        let scale = linalg::trace_product(&candidate, &candidate).re.sqrt();
        let mut x = candidate;
        for _ in 0..2 {
            let tr = linalg::trace(&x);
            x -= linalg::identity(dim) * (tr / c(dim as f64));
            for (_, q) in &self.members {
                let overlap = linalg::trace_product(q, &x) / c(2.0);
                x -= q * overlap;
            }
            x = linalg::hermitize(&x);
        }
        let norm = linalg::trace_product(&x, &x).re.sqrt();
        if !(norm > DEGENERATE_TOL * scale.max(1.0)) {
            return Err(Error::Internal(format!("degenerate basis candidate at order {n} (norm {norm:.3e})")));
        }
        let q = x * c((2.0f64).sqrt() / norm);
        self.members.push((n, q.clone()));
        Ok(q)
    }
}

/// Full basis of 4l(l+1) operators.
pub fn complete_basis(l: SpinLength) -> Result<OperatorBasis> {
    let two_l = l.max_order();
    let lz = build_spin_operators(l).lz.into_matrix();

    // per order n: coherence -> (real, imag) or diagonal
    let mut by_order: Vec<BTreeMap<usize, Vec<(Part, CMatrix)>>> = vec![BTreeMap::new(); two_l + 1];

    let mut diagonal = Chain { members: Vec::new() };
    let mut prev = lz.clone();
    for n in 1..=two_l {
        let candidate = if n == 1 { lz.clone() } else { linalg::half_anticommutator(&prev, &lz) };
        prev = diagonal.admit(n, candidate)?;
        by_order[n].entry(0).or_default().push((Part::Diagonal, prev.clone()));
    }

    for coh in 1..=two_l {
        let (real, imag) = extremal_pair(l, coh)?;
        for (part, seed) in [(Part::Real, real), (Part::Imaginary, imag)] {
            let mut chain = Chain { members: Vec::new() };
            let mut prev = seed.into_matrix();
            for n in coh..=two_l {
                let candidate = if n == coh { prev.clone() } else { linalg::half_anticommutator(&prev, &lz) };
                prev = chain.admit(n, candidate)?;
                by_order[n].entry(coh).or_default().push((part, prev.clone()));
            }
        }
    }

    let mut members = Vec::with_capacity(l.parameter_count());
    for (n, blocks) in by_order.into_iter().enumerate().skip(1) {
        let mut ordered: Vec<(usize, Part, CMatrix)> = Vec::with_capacity(2 * n + 1);
        for (&coh, ops) in blocks.iter().rev().filter(|(&coh, _)| coh > 0) {
            for (part, m) in ops {
                ordered.push((coh, *part, m.clone()));
            }
        }
        // spin 1, order 2: Q_yz precedes Q_zx in the conventional labelling
        if two_l == 2 && n == 2 {
            ordered.swap(2, 3);
        }
        for (part, m) in &blocks[&0] {
            ordered.push((0, *part, m.clone()));
        }
        debug_assert_eq!(ordered.len(), 2 * n + 1);
        for (idx, (coh, part, m)) in ordered.into_iter().enumerate() {
            let label = BasisLabel { n, i: idx + 1, coherence: coh, part };
            members.push((label, HermitianOperator::from_hermitian(m)));
        }
    }
    Ok(OperatorBasis { l, members })
}

/// Coefficients ⟨λ_{n,i}⟩ = Tr{ρ λ_{n,i}}.
pub fn decompose(rho: &DensityMatrix, basis: &OperatorBasis) -> Result<CoefficientVector> {
    decompose_matrix(rho.matrix(), basis)
}

pub(crate) fn decompose_matrix(m: &CMatrix, basis: &OperatorBasis) -> Result<CoefficientVector> {
    if m.nrows() != basis.dimension() {
        return Err(Error::DimensionMismatch { expected: basis.dimension(), actual: m.nrows() });
    }
    let mut values = Vec::with_capacity(basis.len());
    for (label, op) in basis.iter() {
        let t = linalg::trace_product(m, op.matrix());
        if t.im.abs() > IMAG_RESIDUE_TOL {
            return Err(Error::Internal(format!(
                "imaginary residue {:.3e} for coefficient {}",
                t.im,
                label.key()
            )));
        }
        values.push(t.re);
    }
    Ok(CoefficientVector { l: basis.l(), values })
}

/// ρ = I/(2l+1) + ½ Σ ⟨λ_{n,i}⟩ λ_{n,i}.
pub fn reconstruct_from_coefficients(coeffs: &CoefficientVector, basis: &OperatorBasis) -> Result<DensityMatrix> {
    DensityMatrix::new(coefficients_to_matrix(coeffs, basis)?)
}

pub(crate) fn coefficients_to_matrix(coeffs: &CoefficientVector, basis: &OperatorBasis) -> Result<CMatrix> {
    if coeffs.l() != basis.l() {
        return Err(Error::DimensionMismatch {
            expected: basis.l().parameter_count(),
            actual: coeffs.l().parameter_count(),
        });
    }
    let dim = basis.dimension();
    let mut m = linalg::identity(dim) * c(1.0 / dim as f64);
    for (value, (_, op)) in coeffs.values().iter().zip(basis.iter()) {
        if *value != 0.0 {
            m += op.matrix() * c(0.5 * value);
        }
    }
    Ok(linalg::hermitize(&m))
}

/// The named quadratic spin-1 operators S_xy, Q_xy, Q_yz, Q_zx, G_z.
pub fn spin1_named_operators() -> BTreeMap<&'static str, HermitianOperator> {
    let ops = build_spin_operators(SpinLength::new(2).expect("2l = 2 is valid"));
    let (x, y, z) = (ops.lx.matrix(), ops.ly.matrix(), ops.lz.matrix());
    let q = |a: &CMatrix, b: &CMatrix| HermitianOperator::from_hermitian(a * b + b * a);
    let mut out = BTreeMap::new();
    out.insert("S_xy", HermitianOperator::from_hermitian(x * x - y * y));
    out.insert("Q_xy", q(x, y));
    out.insert("Q_yz", q(y, z));
    out.insert("Q_zx", q(z, x));
    out.insert(
        "G_z",
        HermitianOperator::from_hermitian((x * x + y * y - z * z * c(2.0)) * c(-1.0 / 3f64.sqrt())),
    );
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::ZERO;
    use crate::random;
    use approx::assert_abs_diff_eq;
    use num_complex::Complex64;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn spin(two_l: u32) -> SpinLength {
        SpinLength::new(two_l).unwrap()
    }

    fn off_coherence(m: &CMatrix, coh: usize) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                if i.abs_diff(j) != coh {
                    worst = worst.max(m[(i, j)].norm());
                }
            }
        }
        worst
    }

    #[test]
    fn extremal_pair_spin1_order2() {
        let (a, b) = extremal_pair(spin(2), 2).unwrap();
        let mut ea = CMatrix::zeros(3, 3);
        ea[(0, 2)] = c(1.0);
        ea[(2, 0)] = c(1.0);
        let mut eb = CMatrix::zeros(3, 3);
        eb[(0, 2)] = Complex64::new(0.0, -1.0);
        eb[(2, 0)] = Complex64::new(0.0, 1.0);
        assert!(linalg::max_abs(&(a.matrix() - ea)) < 1e-15);
        assert!(linalg::max_abs(&(b.matrix() - eb)) < 1e-15);
    }

    #[test]
    fn extremal_pair_order1_is_lx_for_spin1() {
        let ops = build_spin_operators(spin(2));
        let (a, b) = extremal_pair(spin(2), 1).unwrap();
        assert!(linalg::max_abs(&(a.matrix() - ops.lx.matrix())) < 1e-15);
        assert!(linalg::max_abs(&(b.matrix() - ops.ly.matrix())) < 1e-15);
        assert_abs_diff_eq!(a.trace_with(&a), 2.0, epsilon = 1e-14);
    }

    #[test]
    fn extremal_pair_corner_entries_spin3_2() {
        let l = spin(3);
        // oracle: raw matrix power of L₊ computed entry by entry
        let lp = raising_operator(l);
        let mut p3 = CMatrix::identity(4, 4);
        for _ in 0..3 {
            p3 = &p3 * &lp;
        }
        assert!(p3[(0, 3)].norm() > 0.0);
        let (a, b) = extremal_pair(l, 3).unwrap();
        for op in [a, b] {
            for i in 0..4 {
                for j in 0..4 {
                    if (i, j) != (0, 3) && (i, j) != (3, 0) {
                        assert_eq!(op.matrix()[(i, j)], ZERO);
                    }
                }
            }
            assert_abs_diff_eq!(op.trace_with(&op), 2.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn extremal_pair_order_out_of_range() {
        assert!(matches!(extremal_pair(spin(2), 3), Err(Error::OrderOutOfRange { .. })));
        assert!(matches!(extremal_pair(spin(2), 0), Err(Error::OrderOutOfRange { .. })));
    }

    #[test]
    fn spin_half_basis_is_pauli() {
        let basis = complete_basis(spin(1)).unwrap();
        assert_eq!(basis.len(), 3);
        let ops = build_spin_operators(spin(1));
        let expected = [ops.lx, ops.ly, ops.lz];
        for ((_, op), e) in basis.iter().zip(expected.iter()) {
            assert!(linalg::max_abs(&(op.matrix() - e.matrix() * c(2.0))) < 1e-14);
        }
    }

    #[test]
    fn spin1_basis_matches_named_operators() {
        let basis = complete_basis(spin(2)).unwrap();
        let named = spin1_named_operators();
        let ops = build_spin_operators(spin(2));
        let expected = [
            &ops.lx,
            &ops.ly,
            &ops.lz,
            &named["S_xy"],
            &named["Q_xy"],
            &named["Q_yz"],
            &named["Q_zx"],
            &named["G_z"],
        ];
        for ((_, op), e) in basis.iter().zip(expected) {
            assert!(linalg::max_abs(&(op.matrix() - e.matrix())) < 1e-12);
        }
    }

    #[test]
    fn named_operator_traces() {
        let named = spin1_named_operators();
        assert_abs_diff_eq!(named["G_z"].trace_with(&named["G_z"]), 2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(named["Q_xy"].trace_with(&named["S_xy"]), 0.0, epsilon = 1e-14);
        for op in named.values() {
            assert_abs_diff_eq!(op.trace(), 0.0, epsilon = 1e-14);
            assert_abs_diff_eq!(op.trace_with(op), 2.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn orthonormal_and_structured_up_to_two_l_8() {
        for two_l in 1..=8 {
            let basis = complete_basis(spin(two_l)).unwrap();
            assert_eq!(basis.len(), spin(two_l).parameter_count());
            for (a, (la, oa)) in basis.iter().enumerate() {
                assert!(oa.trace().abs() < 1e-12);
                assert!(off_coherence(oa.matrix(), la.coherence) < 1e-12, "{la:?}");
                for (b, (_, ob)) in basis.iter().enumerate().skip(a) {
                    let want = if a == b { 2.0 } else { 0.0 };
                    assert!((oa.trace_with(ob) - want).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn label_counts_per_order() {
        let basis = complete_basis(spin(4)).unwrap();
        for n in 1..=4 {
            let order = basis.order(n);
            assert_eq!(order.len(), 2 * n + 1);
            assert_eq!(order.iter().filter(|(lab, _)| lab.coherence == 0).count(), 1);
            for coh in 1..=n {
                assert_eq!(order.iter().filter(|(lab, _)| lab.coherence == coh).count(), 2);
            }
            assert_eq!(order.last().unwrap().0.coherence, 0);
            for (idx, (lab, _)) in order.iter().enumerate() {
                assert_eq!(lab.n, n);
                assert_eq!(lab.i, idx + 1);
            }
        }
    }

    #[test]
    fn diagonal_member_is_polynomial_in_lz() {
        // fit diag(λ_{n,2n+1}) against 1, m, …, m^n by least squares
        let l = spin(6);
        let basis = complete_basis(l).unwrap();
        let ms: Vec<f64> = l.m_values().collect();
        for n in 1..=l.max_order() {
            let op = basis.operator(n, 2 * n + 1).unwrap();
            let target = nalgebra::DVector::from_iterator(ms.len(), (0..ms.len()).map(|k| op.matrix()[(k, k)].re));
            let vander = nalgebra::DMatrix::from_fn(ms.len(), n + 1, |r, p| ms[r].powi(p as i32));
            let fit = vander.clone().svd(true, true).solve(&target, 1e-14).unwrap();
            let residual = (&vander * &fit - &target).norm();
            assert!(residual < 1e-9, "order {n}: residual {residual}");
            assert!(fit[n].abs() > 1e-12);
        }
    }

    #[test]
    fn large_spin_builds() {
        let basis = complete_basis(spin(64)).unwrap();
        assert_eq!(basis.len(), 65 * 65 - 1);
    }

    #[test]
    fn decompose_known_states() {
        let l = spin(2);
        let basis = complete_basis(l).unwrap();
        let mixed = decompose(&DensityMatrix::maximally_mixed(3), &basis).unwrap();
        assert!(mixed.values().iter().all(|v| v.abs() < 1e-15));

        let up = decompose(&DensityMatrix::lz_eigenstate(l, 2).unwrap(), &basis).unwrap();
        for n in 1..=2 {
            for i in 1..=2 * n + 1 {
                let want = match (n, i) {
                    (1, 3) => 1.0,
                    (2, 5) => 1.0 / 3f64.sqrt(),
                    _ => 0.0,
                };
                assert_abs_diff_eq!(up.get(n, i), want, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn reconstruct_zero_and_lz_layout() {
        let l = spin(2);
        let basis = complete_basis(l).unwrap();
        let rho = reconstruct_from_coefficients(&CoefficientVector::zeros(l), &basis).unwrap();
        assert!(rho.frobenius_distance(&DensityMatrix::maximally_mixed(3)) < 1e-15);

        let values = vec![0.11, -0.07, 0.2, 0.13, -0.05, 0.09, 0.03, -0.15];
        let coeffs = CoefficientVector::new(l, values.clone()).unwrap();
        let rho = reconstruct_from_coefficients(&coeffs, &basis).unwrap();
        let m = rho.matrix();
        let (l11, l12, l13) = (values[0], values[1], values[2]);
        let (l21, l22, l23, l24, l25) = (values[3], values[4], values[5], values[6], values[7]);
        let s2 = 2f64.sqrt();
        let s3 = 3f64.sqrt();
        let z = |re: f64, im: f64| Complex64::new(re, im);
        let expected = [
            [z(1.0 / 3.0 + l13 / 2.0 + l25 / (2.0 * s3), 0.0), z(l11 + l24, -l12 - l23) / (2.0 * s2), z(l21, -l22) / 2.0],
            [z(l11 + l24, l12 + l23) / (2.0 * s2), z(1.0 / 3.0 - l25 / s3, 0.0), z(l11 - l24, -l12 + l23) / (2.0 * s2)],
            [z(l21, l22) / 2.0, z(l11 - l24, l12 - l23) / (2.0 * s2), z(1.0 / 3.0 - l13 / 2.0 + l25 / (2.0 * s3), 0.0)],
        ];
        for i in 0..3 {
            for j in 0..3 {
                assert!((m[(i, j)] - expected[i][j]).norm() < 1e-14, "({i},{j})");
            }
        }
    }

    #[test]
    fn round_trips() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for two_l in 1..=6 {
            let l = spin(two_l);
            let basis = complete_basis(l).unwrap();
            for _ in 0..10 {
                let rho = random::random_density_matrix(l.dimension(), &mut rng);
                let coeffs = decompose(&rho, &basis).unwrap();
                let back = reconstruct_from_coefficients(&coeffs, &basis).unwrap();
                assert!(back.frobenius_distance(&rho) < 1e-12);
                let again = decompose(&back, &basis).unwrap();
                for (a, b) in again.values().iter().zip(coeffs.values()) {
                    assert!((a - b).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn dimension_mismatch() {
        let basis = complete_basis(spin(2)).unwrap();
        let rho = DensityMatrix::maximally_mixed(4);
        assert!(matches!(decompose(&rho, &basis), Err(Error::DimensionMismatch { .. })));
        let coeffs = CoefficientVector::zeros(spin(3));
        assert!(matches!(
            reconstruct_from_coefficients(&coeffs, &basis),
            Err(Error::DimensionMismatch { .. })
        ));
    }
}
