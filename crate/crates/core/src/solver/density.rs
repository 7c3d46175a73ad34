//! Density evaluation.
//!
//! Fluid particle `i` measures three volume-weighted kernel sums, each
//! including its own self contribution `V_i W(0)`:
//!
//! ```text
//! rho_i   = V_i W(0) + sum_f V_f W_if + sum_b V_b W_ib      all neighbors
//! rho^f_i = V_i W(0) + sum_f V_f W_if                       fluid only
//! rho^b_i = V_i W(0) + sum_b V_b W_ib                       boundary only
//! ```
//!
//! The self term appears in both partial sums, so the exact relation is
//! `rho^f + rho^b - V_i W(0) = rho` — and the code computes `rho` from that
//! identity, making it hold bitwise.
//!
//! Boundary particles do not measure a density at all: they are assigned the
//! fixed artificial density `gamma` in all three fields.

use rayon::prelude::*;

use crate::kernel::KernelPair;
use crate::particles::{ParticleSet, Phase};
use crate::SphError;

use super::contacts::Contacts;

pub(crate) fn compute_densities(
    set: &mut ParticleSet,
    contacts: &Contacts,
    kernel: &KernelPair,
    gamma: f64,
    step: u64,
) -> Result<(), SphError> {
    let w0 = kernel.value(0.0);
    let v = set.views();
    let phases = v.phases;
    let volumes = v.volumes;

    v.density
        .par_iter_mut()
        .zip(v.fluid_density.par_iter_mut())
        .zip(v.boundary_density.par_iter_mut())
        .enumerate()
        .for_each(|(i, ((rho, rho_f), rho_b))| {
            if phases[i] == Phase::Boundary {
                *rho = gamma;
                *rho_f = gamma;
                *rho_b = gamma;
                return;
            }
            let k = contacts.ordinal_of(i);
            let self_term = volumes[i] * w0;
            let mut rf = self_term;
            for c in contacts.ff(k) {
                rf += volumes[c.j as usize] * c.w;
            }
            let mut rb = self_term;
            for c in contacts.fb(k) {
                rb += volumes[c.j as usize] * c.w;
            }
            *rho_f = rf;
            *rho_b = rb;
            *rho = rf + rb - self_term;
        });

    for (i, rho) in v.density.iter().enumerate() {
        if !rho.is_finite() {
            return Err(SphError::NonFiniteDensity { index: i, step });
        }
    }
    Ok(())
}
