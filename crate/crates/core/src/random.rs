//! Random states and direction sets for simulation and testing.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::linalg::{self, c, CMatrix};
use crate::spin::{DensityMatrix, Direction};

/// Haar-random state vector (complex Gaussian, normalized).
pub fn random_state_vector<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Vec<Complex64> {
    let mut v: Vec<Complex64> = (0..dim)
        .map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
        .collect();
    let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    v.iter_mut().for_each(|z| *z /= norm);
    v
}

pub fn random_pure_state<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> DensityMatrix {
    DensityMatrix::pure(&random_state_vector(dim, rng)).expect("normalized random vector")
}

/// Full-rank mixed state G G† / Tr{G G†} from a Ginibre matrix G.
pub fn random_density_matrix<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> DensityMatrix {
    let g = CMatrix::from_fn(dim, dim, |_, _| {
        Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    });
    let w = &g * g.adjoint();
    let tr = linalg::trace(&w).re;
    DensityMatrix::new(linalg::hermitize(&(w / c(tr)))).expect("Ginibre states are valid")
}

/// Uniformly distributed direction on the sphere.
pub fn random_direction<R: Rng + ?Sized>(rng: &mut R) -> Direction {
    let z: f64 = rng.random_range(-1.0..1.0);
    let phi: f64 = rng.random_range(0.0..2.0 * PI);
    Direction::new(z.acos(), phi)
}

/// `count` directions on the upper hemisphere following a Fibonacci spiral.
///
/// Antipodal directions carry identical statistics (L_{-d} = −L_d), so only
/// one hemisphere is sampled.
pub fn spiral_directions(count: usize) -> Vec<Direction> {
    let golden = PI * (3.0 - 5f64.sqrt());
    (0..count)
        .map(|k| {
            let z = 1.0 - (k as f64 + 0.5) / count as f64;
            let phi = (golden * k as f64).rem_euclid(2.0 * PI);
            Direction::new(z.acos(), phi)
        })
        .collect()
}

/// Spiral directions with each angle perturbed by up to `jitter` radians.
pub fn jittered_directions<R: Rng + ?Sized>(count: usize, jitter: f64, rng: &mut R) -> Vec<Direction> {
    spiral_directions(count)
        .into_iter()
        .map(|d| {
            let dt: f64 = rng.random_range(-jitter..=jitter);
            let dp: f64 = rng.random_range(-jitter..=jitter);
            Direction::new((d.theta + dt).clamp(0.0, PI), (d.phi + dp).rem_euclid(2.0 * PI))
        })
        .collect()
}
