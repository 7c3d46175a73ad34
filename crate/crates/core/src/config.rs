//! Solver configuration.
//!
//! Everything the stepping code needs is collected here so a run can be
//! reproduced from its echoed configuration alone. Lengths are meters, times
//! seconds, pressures Pa; densities are dimensionless (rest = 1).

use crate::error::SphError;
use crate::kernel::KernelPair;
use crate::Vec3;

/// How boundary contributions enter the pressure solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryMode {
    /// One pressure field over fluid and boundary neighborhoods together.
    Coupled,
    /// Alternating boundary stage / fluid stage, each with its own pressure
    /// field and induced acceleration.
    Decoupled,
}

/// How boundary samples obtain a pressure value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PressureEstimator {
    /// Boundary sample mirrors the pressure of the fluid particle it
    /// currently interacts with.
    Mirroring,
    /// Boundary sample carries its own pressure, extrapolated from nearby
    /// fluid pressures with a hydrostatic correction.
    Boundaries,
}

impl BoundaryMode {
    pub fn label(&self) -> &'static str {
        match self {
            BoundaryMode::Coupled => "coupled",
            BoundaryMode::Decoupled => "decoupled",
        }
    }
}

impl PressureEstimator {
    pub fn label(&self) -> &'static str {
        match self {
            PressureEstimator::Mirroring => "PM",
            PressureEstimator::Boundaries => "PB",
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimulationConfig {
    /// Fluid particle radius (m). Lattice spacing is one diameter.
    pub particle_radius: f64,
    /// Physical rest density (kg/m^3); converts artificial pressure to Pa.
    pub rest_density: f64,
    /// Artificial density assigned to boundary samples.
    pub gamma: f64,
    /// Fixed time step (s).
    pub dt: f64,
    pub gravity: Vec3,
    /// Artificial viscosity strength.
    pub viscosity_alpha: f64,
    /// Reference sound speed for the artificial viscosity term (m/s).
    pub sound_speed: f64,
    /// Surface tension strength.
    pub tension_kappa: f64,
    /// Boundary-stage density error limit (average, dimensionless).
    pub lim_b: f64,
    /// Fluid-stage density error limit.
    pub lim_f: f64,
    /// Coupled-solve density error limit.
    pub lim_avg: f64,
    /// Global iteration budget (outer loop in decoupled mode).
    pub iter_max: usize,
    /// Per-stage sweep budget inside one global iteration.
    pub stage_iter_max: usize,
    /// Sweeps to run before the error criterion may stop a solve (applied to
    /// the coupled solve and to each decoupled stage alike).
    pub min_iterations: usize,
    /// Relaxed-Jacobi factor.
    pub omega: f64,
    /// Fraction of last step's pressure used to start the next solve. A full
    /// carry (1.0) makes the per-step work proportional to how much the state
    /// actually changed; smaller fractions re-solve that share of the field
    /// from scratch every step.
    pub warm_start: f64,
    pub mode: BoundaryMode,
    pub estimator: PressureEstimator,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            particle_radius: 0.05,
            rest_density: 1000.0,
            gamma: 0.6,
            dt: 1e-3,
            gravity: Vec3::new(0.0, 0.0, -9.8),
            viscosity_alpha: 0.05,
            sound_speed: 20.0,
            tension_kappa: 0.15,
            lim_b: 1e-6,
            lim_f: 1e-6,
            lim_avg: 1e-6,
            iter_max: 256,
            stage_iter_max: 100,
            min_iterations: 2,
            omega: 0.5,
            warm_start: 1.0,
            mode: BoundaryMode::Coupled,
            estimator: PressureEstimator::Mirroring,
        }
    }
}

impl SimulationConfig {
    pub fn diameter(&self) -> f64 {
        2.0 * self.particle_radius
    }

    /// Rest volume of one fluid particle: diameter cubed, so a filled lattice
    /// at diameter spacing sits at density 1.
    pub fn fluid_volume(&self) -> f64 {
        let d = self.diameter();
        d * d * d
    }

    pub fn kernel(&self) -> KernelPair {
        KernelPair::for_particle_radius(self.particle_radius)
    }

    pub fn validate(&self) -> Result<(), SphError> {
        fn bad(key: &str, message: impl Into<String>) -> SphError {
            SphError::InvalidValue { key: key.to_string(), message: message.into() }
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(bad("gamma", format!("{} not in (0, 1]", self.gamma)));
        }
        if !(self.particle_radius > 0.0 && self.particle_radius.is_finite()) {
            return Err(bad("particle_radius", "must be positive and finite"));
        }
        if !(self.rest_density > 0.0 && self.rest_density.is_finite()) {
            return Err(bad("rest_density", "must be positive and finite"));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(bad("dt", "must be positive and finite"));
        }
        if !self.gravity.iter().all(|c| c.is_finite()) {
            return Err(bad("gravity", "components must be finite"));
        }
        if !(self.viscosity_alpha >= 0.0 && self.viscosity_alpha.is_finite()) {
            return Err(bad("viscosity_alpha", "must be non-negative"));
        }
        if !(self.sound_speed >= 0.0 && self.sound_speed.is_finite()) {
            return Err(bad("sound_speed", "must be non-negative"));
        }
        if !(self.tension_kappa >= 0.0 && self.tension_kappa.is_finite()) {
            return Err(bad("tension_kappa", "must be non-negative"));
        }
        for (key, v) in [("lim_b", self.lim_b), ("lim_f", self.lim_f), ("lim_avg", self.lim_avg)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(bad(key, "must be positive"));
            }
        }
        if self.iter_max == 0 {
            return Err(bad("iter_max", "must be at least 1"));
        }
        if self.stage_iter_max == 0 {
            return Err(bad("stage_iter_max", "must be at least 1"));
        }
        if !(self.omega > 0.0 && self.omega <= 1.0) {
            return Err(bad("omega", format!("{} not in (0, 1]", self.omega)));
        }
        if !(0.0..=1.0).contains(&self.warm_start) {
            return Err(bad("warm_start", format!("{} not in [0, 1]", self.warm_start)));
        }
        Ok(())
    }
}
