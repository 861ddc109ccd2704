//! Named reconstruction and evolution strategies selectable at runtime.

use std::collections::BTreeMap;

use crate::basis::OperatorBasis;
use crate::decoherence::{evolve_numeric, evolve_state_closed_form};
use crate::error::{Error, Result};
use crate::measurement::MeasurementRecord;
use crate::spin::DensityMatrix;
use crate::tomography::{reconstruct_linear, reconstruct_spin1_explicit, ReconstructOptions, ReconstructionReport};

pub trait Reconstructor: Send + Sync {
    fn name(&self) -> &'static str;
    fn reconstruct(&self, record: &MeasurementRecord, basis: &OperatorBasis) -> Result<ReconstructionReport>;
}

pub trait Evolver: Send + Sync {
    fn name(&self) -> &'static str;
    /// Evolve `rho` under the dephasing master equation for a total Γt, with Γ = 1.
    fn evolve(&self, rho: &DensityMatrix, basis: &OperatorBasis, gamma_t: f64) -> Result<DensityMatrix>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Linear {
    pub weighted: bool,
}

impl Reconstructor for Linear {
    fn name(&self) -> &'static str {
        if self.weighted {
            "linear-weighted"
        } else {
            "linear"
        }
    }

    fn reconstruct(&self, record: &MeasurementRecord, basis: &OperatorBasis) -> Result<ReconstructionReport> {
        reconstruct_linear(record, basis, ReconstructOptions { weighted: self.weighted })
    }
}

/// Closed-form spin-1 inversion; only accepts five-direction records.
#[derive(Debug, Clone, Copy, Default)]
pub struct Spin1Explicit;

impl Reconstructor for Spin1Explicit {
    fn name(&self) -> &'static str {
        "spin1-explicit"
    }

    fn reconstruct(&self, record: &MeasurementRecord, _basis: &OperatorBasis) -> Result<ReconstructionReport> {
        reconstruct_spin1_explicit(record)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ClosedForm;

impl Evolver for ClosedForm {
    fn name(&self) -> &'static str {
        "closed-form"
    }

    fn evolve(&self, rho: &DensityMatrix, basis: &OperatorBasis, gamma_t: f64) -> Result<DensityMatrix> {
        evolve_state_closed_form(rho, basis, gamma_t)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Rk4 {
    pub dt: f64,
}

impl Evolver for Rk4 {
    fn name(&self) -> &'static str {
        "rk4"
    }

    fn evolve(&self, rho: &DensityMatrix, _basis: &OperatorBasis, gamma_t: f64) -> Result<DensityMatrix> {
        evolve_numeric(rho, 1.0, gamma_t, self.dt)
    }
}

/// Strategies keyed by name.
pub struct Registry<T: ?Sized> {
    entries: BTreeMap<&'static str, Box<T>>,
}

impl<T: ?Sized> Default for Registry<T> {
    fn default() -> Self {
        Self { entries: BTreeMap::new() }
    }
}

impl<T: ?Sized> Registry<T> {
    pub fn register(&mut self, name: &'static str, strategy: Box<T>) {
        self.entries.insert(name, strategy);
    }

    pub fn get(&self, name: &str) -> Result<&T> {
        self.entries.get(name).map(|b| b.as_ref()).ok_or_else(|| {
            Error::UnknownStrategy(format!("{name} (available: {})", self.names().join(", ")))
        })
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.keys().copied().collect()
    }
}

pub fn reconstructors() -> Registry<dyn Reconstructor> {
    let mut r: Registry<dyn Reconstructor> = Registry::default();
    for s in [
        Box::new(Linear { weighted: false }) as Box<dyn Reconstructor>,
        Box::new(Linear { weighted: true }),
        Box::new(Spin1Explicit),
    ] {
        r.register(s.name(), s);
    }
    r
}

/// Evolvers; `dt` configures the RK4 step.
pub fn evolvers(dt: f64) -> Registry<dyn Evolver> {
    let mut r: Registry<dyn Evolver> = Registry::default();
    for s in [Box::new(ClosedForm) as Box<dyn Evolver>, Box::new(Rk4 { dt })] {
        r.register(s.name(), s);
    }
    r
}
