//! Time integration: symplectic Euler over the summed accelerations.
//!
//! ```text
//! v_i += dt * (a_np + a_f + a_b)
//! x_i += dt * v_i
//! ```
//!
//! Boundary particles never move here — scripted boundary motion (a sliding
//! belt, an emitter) is applied by the scenario driver between steps. The
//! pass also audits the step: any non-finite position or velocity aborts
//! with the offending particle index, and a displacement beyond `0.4 d`
//! (with `d` the particle diameter) raises a CFL warning so drivers can
//! flag a too-coarse time step without killing the run.

use crate::config::SimulationConfig;
use crate::error::SphError;
use crate::particles::ParticleSet;

#[derive(Debug)]
pub(crate) struct IntegrateStats {
    pub max_displacement: f64,
    pub cfl_warning: bool,
}

pub(crate) fn advance(
    set: &mut ParticleSet,
    config: &SimulationConfig,
    step: u64,
) -> Result<IntegrateStats, SphError> {
    let dt = config.dt;
    {
        let v = set.views();
        let nonpressure: &[crate::Vec3] = v.nonpressure_accel;
        let fluid_a: &[crate::Vec3] = v.fluid_accel;
        let boundary_a: &[crate::Vec3] = v.boundary_accel;
        for &i in v.fluid_ids {
            v.velocities[i] += (nonpressure[i] + fluid_a[i] + boundary_a[i]) * dt;
        }
    }

    let mut max_disp = 0.0f64;
    let mut bad: Option<usize> = None;
    set.advect_fluid(|i, vel, pos| {
        *pos += vel * dt;
        let disp = vel.norm() * dt;
        if disp > max_disp {
            max_disp = disp;
        }
        if bad.is_none() && !(pos.iter().all(|c| c.is_finite()) && disp.is_finite()) {
            bad = Some(i);
        }
    });
    if let Some(index) = bad {
        return Err(SphError::NonFinitePosition { index, step });
    }

    Ok(IntegrateStats {
        max_displacement: max_disp,
        cfl_warning: max_disp > 0.4 * config.diameter(),
    })
}
