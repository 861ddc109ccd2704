//! Isotropic spin diffusion.
//!
//! The generator dρ/dt = −Γ Σ_i (½L_i²ρ + ½ρL_i² − L_iρL_i) commutes with
//! rotations, so every order-n basis coefficient relaxes at the common rate
//! Γ n(n+1)/2. A random tilt of rms angle δθ acts like Γt = δθ²/2.

use crate::basis::{decompose, reconstruct_from_coefficients, CoefficientVector, OperatorBasis};
use crate::error::{Error, Result};
use crate::linalg::{self, c, CMatrix};
use crate::spin::{build_spin_operators, DensityMatrix, HermitianOperator, SpinLength, SpinOperators};

/// dt·Γ·l² must not exceed this.
pub const STABILITY_LIMIT: f64 = 0.1;
const POSITIVITY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecoherenceParams {
    pub gamma: f64,
    pub t: f64,
}

impl DecoherenceParams {
    pub fn new(gamma: f64, t: f64) -> Result<Self> {
        if !(gamma >= 0.0 && gamma.is_finite()) || !(t >= 0.0 && t.is_finite()) {
            return Err(Error::InvalidInput(format!("gamma = {gamma} and t = {t} must be non-negative")));
        }
        Ok(Self { gamma, t })
    }

    pub fn gamma_t(&self) -> f64 {
        self.gamma * self.t
    }
}

/// Per-order damping factor exp[−Γt n(n+1)/2].
pub fn damping_factor(n: usize, gamma_t: f64) -> f64 {
    (-gamma_t * (n * (n + 1)) as f64 / 2.0).exp()
}

fn rhs(ops: &SpinOperators, rho: &CMatrix, gamma: f64) -> CMatrix {
    let mut out = CMatrix::zeros(rho.nrows(), rho.ncols());
    for li in [ops.lx.matrix(), ops.ly.matrix(), ops.lz.matrix()] {
        let sq = li * li;
        out += (&sq * rho + rho * &sq) * c(0.5) - li * rho * li;
    }
    out * c(-gamma)
}

/// Right-hand side of the diffusion master equation.
pub fn lindblad_rhs(rho: &DensityMatrix, gamma: f64, l: SpinLength) -> Result<HermitianOperator> {
    if rho.dim() != l.dimension() {
        return Err(Error::DimensionMismatch { expected: l.dimension(), actual: rho.dim() });
    }
    let ops = build_spin_operators(l);
    Ok(HermitianOperator::from_hermitian(rhs(&ops, rho.matrix(), gamma)))
}

/// Damps each order-n coefficient by exp[−Γt n(n+1)/2].
pub fn evolve_closed_form(coeffs: &CoefficientVector, gamma_t: f64) -> Result<CoefficientVector> {
    if !(gamma_t >= 0.0 && gamma_t.is_finite()) {
        return Err(Error::InvalidInput(format!("gamma_t = {gamma_t} must be non-negative")));
    }
    let l = coeffs.l();
    let mut out = coeffs.clone();
    for n in 1..=l.max_order() {
        let f = damping_factor(n, gamma_t);
        for i in 1..=2 * n + 1 {
            out.set(n, i, coeffs.get(n, i) * f);
        }
    }
    Ok(out)
}

/// Closed-form evolution of a state.
pub fn evolve_state_closed_form(rho: &DensityMatrix, basis: &OperatorBasis, gamma_t: f64) -> Result<DensityMatrix> {
    let coeffs = decompose(rho, basis)?;
    reconstruct_from_coefficients(&evolve_closed_form(&coeffs, gamma_t)?, basis)
}

/// Classical RK4 integration of the master equation with step at most `dt`.
pub fn evolve_numeric(rho0: &DensityMatrix, gamma: f64, t: f64, dt: f64) -> Result<DensityMatrix> {
    let params = DecoherenceParams::new(gamma, t)?;
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidInput(format!("dt = {dt} must be positive")));
    }
    let l = SpinLength::new(rho0.dim() as u32 - 1)?;
    let ll = l.l() * l.l();
    if dt * gamma * ll > STABILITY_LIMIT {
        return Err(Error::StepTooLarge(format!(
            "dt·Γ·l² = {:.3e} exceeds {STABILITY_LIMIT}",
            dt * gamma * ll
        )));
    }
    if params.t == 0.0 {
        return Ok(rho0.clone());
    }
    let ops = build_spin_operators(l);
    let steps = (t / dt).ceil().max(1.0) as usize;
    let h = t / steps as f64;
    let mut rho = rho0.matrix().clone();
    for step in 0..steps {
        let k1 = rhs(&ops, &rho, gamma);
        let k2 = rhs(&ops, &(&rho + &k1 * c(h / 2.0)), gamma);
        let k3 = rhs(&ops, &(&rho + &k2 * c(h / 2.0)), gamma);
        let k4 = rhs(&ops, &(&rho + &k3 * c(h)), gamma);
        rho += (k1 + k2 * c(2.0) + k3 * c(2.0) + k4) * c(h / 6.0);
        rho = linalg::hermitize(&rho);
        let min = linalg::min_eigenvalue(&rho);
        if min < -POSITIVITY_TOL {
            return Err(Error::StepTooLarge(format!(
                "positivity lost at step {step} (minimum eigenvalue {min:.3e})"
            )));
        }
    }
    DensityMatrix::new(rho)
}

/// Reduction exp[−δθ² n(n+1)/4] of order-n statistics under alignment error δθ.
pub fn misalignment_factor(n: usize, delta_theta: f64) -> f64 {
    damping_factor(n, misalignment_gamma_t(delta_theta))
}

/// Γt equivalent to an angular spread δθ.
pub fn misalignment_gamma_t(delta_theta: f64) -> f64 {
    delta_theta * delta_theta / 2.0
}
