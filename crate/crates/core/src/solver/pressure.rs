//! Boundary-pressure extrapolation for the PB estimator.
//!
//! Each boundary sample with fluid contact takes a kernel-weighted average of
//! its fluid neighbors' pressures, optionally corrected by the hydrostatic
//! increment along gravity, and clamped non-negative:
//!
//! ```text
//! p_b = max(0, [ sum_f w_bf p_f  +  rho0 sum_f w_bf rho_f g·(x_b - x_f) ]
//!               / sum_f w_bf)
//! ```
//!
//! with `rho_f` the fluid particle's dimensionless density. For a linear
//! hydrostatic pressure field with unit density the correction is exact: the
//! extrapolated value equals the field continued to the sample's position.
//! Boundary samples with no fluid contact get zero.
//!
//! The coupled solve passes gravity so a resting wall carries the weight of
//! the column above it even between solver iterations. The decoupled boundary
//! stage passes `None`: there the wall pressure must vanish together with the
//! stage pressures, or the stage's equilibrium gap would be dictated by the
//! offset instead of the boundary-induced density reaching its rest value.
//!
//! In a coupled solve the source pressures and the destination live in
//! different arrays; in a decoupled boundary stage both are slots of the same
//! array (fluid slots hold the boundary-stage pressure, boundary slots the
//! extrapolated value). The extrapolation is therefore split into a read-only
//! [`extrapolate`] into a boundary-ordinal scratch and a [`commit`] that
//! writes the scratch back, so either aliasing layout borrows cleanly.

use crate::Vec3;

use super::contacts::Contacts;

/// Fills `scratch[bk]` (boundary-ordinal indexed) with extrapolated pressures.
/// Inactive boundary samples get zero. Sequential, so reduction order — and
/// thus the bit pattern — is fixed.
pub(crate) fn extrapolate(
    scratch: &mut [f64],
    positions: &[Vec3],
    density: &[f64],
    source_pressure: &[f64],
    boundary_ids: &[usize],
    contacts: &Contacts,
    gravity: Option<&Vec3>,
    rest_density: f64,
) {
    scratch.fill(0.0);
    for &bk in contacts.active_boundary() {
        let bk = bk as usize;
        let xb = positions[boundary_ids[bk]];
        let mut w_sum = 0.0;
        let mut p_sum = 0.0;
        let mut hydro = 0.0;
        for c in contacts.bf(bk) {
            let f = c.f as usize;
            w_sum += c.w;
            p_sum += source_pressure[f] * c.w;
            if let Some(g) = gravity {
                hydro += density[f] * g.dot(&(xb - positions[f])) * c.w;
            }
        }
        scratch[bk] = ((p_sum + rest_density * hydro) / w_sum).max(0.0);
    }
}

/// Writes the scratch back into the id-indexed pressure array (boundary slots
/// only; fluid slots are untouched).
pub(crate) fn commit(scratch: &[f64], boundary_ids: &[usize], out: &mut [f64]) {
    for (bk, &id) in boundary_ids.iter().enumerate() {
        out[id] = scratch[bk];
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::KernelPair;
    use crate::neighbor::NeighborGrid;
    use crate::particles::ParticleSet;

    const RADIUS: f64 = 0.05;

    fn contacts_for(set: &ParticleSet) -> (Contacts, KernelPair) {
        let kernel = KernelPair::for_particle_radius(RADIUS);
        let grid = NeighborGrid::build(set, kernel.support_radius()).unwrap();
        let mut contacts = Contacts::new();
        contacts.rebuild(set, &grid, &kernel).unwrap();
        (contacts, kernel)
    }

    fn run(
        set: &ParticleSet,
        contacts: &Contacts,
        source: &[f64],
        density: &[f64],
        gravity: Option<Vec3>,
    ) -> Vec<f64> {
        let mut scratch = vec![0.0; set.boundary_count()];
        extrapolate(
            &mut scratch,
            set.positions(),
            density,
            source,
            set.boundary_indices(),
            contacts,
            gravity.as_ref(),
            1000.0,
        );
        let mut out = vec![f64::NAN; set.len()];
        commit(&scratch, set.boundary_indices(), &mut out);
        set.boundary_indices().iter().map(|&id| out[id]).collect()
    }

    #[test]
    fn uniform_pressure_without_gravity_is_reproduced_exactly() {
        let mut set = ParticleSet::new();
        for ix in 0..3 {
            for iy in 0..3 {
                set.push_fluid(
                    Vec3::new(ix as f64 * 0.1, iy as f64 * 0.1, 0.1),
                    Vec3::zeros(),
                    1e-3,
                );
            }
        }
        set.push_boundary(Vec3::new(0.1, 0.1, 0.0), 1e-3);
        let (contacts, _) = contacts_for(&set);
        let source = vec![321.5; set.len()];
        let density = vec![1.0; set.len()];
        let pb = run(&set, &contacts, &source, &density, Some(Vec3::zeros()));
        assert!((pb[0] - 321.5).abs() < 1e-12, "got {}", pb[0]);
        let pb = run(&set, &contacts, &source, &density, None);
        assert!(
            (pb[0] - 321.5).abs() < 1e-12,
            "plain average must also reproduce a constant, got {}",
            pb[0]
        );
    }

    #[test]
    fn linear_hydrostatic_field_is_continued_exactly() {
        // p(z) = rho0 g (H - z) with unit dimensionless density: the
        // hydrostatic correction makes the extrapolation exact regardless of
        // the neighbor geometry.
        let g_mag = 9.8;
        let h_surf = 0.5;
        let mut set = ParticleSet::new();
        for ix in 0..4 {
            for iy in 0..4 {
                for iz in 1..3 {
                    set.push_fluid(
                        Vec3::new(ix as f64 * 0.07, iy as f64 * 0.07, iz as f64 * 0.06),
                        Vec3::zeros(),
                        1e-3,
                    );
                }
            }
        }
        set.push_boundary(Vec3::new(0.11, 0.12, 0.0), 1e-3);
        set.push_boundary(Vec3::new(0.11, 0.12, -0.04), 1e-3);
        let (contacts, _) = contacts_for(&set);
        let source: Vec<f64> = set
            .positions()
            .iter()
            .map(|x| 1000.0 * g_mag * (h_surf - x.z))
            .collect();
        let density = vec![1.0; set.len()];
        let pb = run(
            &set,
            &contacts,
            &source,
            &density,
            Some(Vec3::new(0.0, 0.0, -g_mag)),
        );
        for (bk, &id) in set.boundary_indices().iter().enumerate() {
            let expect = 1000.0 * g_mag * (h_surf - set.positions()[id].z);
            assert!(
                (pb[bk] - expect).abs() < 1e-9 * expect,
                "sample {bk}: {} vs {expect}",
                pb[bk]
            );
        }
    }

    #[test]
    fn without_gravity_offset_the_result_is_the_plain_weighted_mean() {
        // Same hydrostatic column, but no offset: the sample reads the
        // kernel-weighted mean of the neighbor pressures, which undershoots
        // the continued field because all neighbors sit above the sample.
        let g_mag = 9.8;
        let h_surf = 0.5;
        let mut set = ParticleSet::new();
        for ix in 0..4 {
            for iy in 0..4 {
                for iz in 1..3 {
                    set.push_fluid(
                        Vec3::new(ix as f64 * 0.07, iy as f64 * 0.07, iz as f64 * 0.06),
                        Vec3::zeros(),
                        1e-3,
                    );
                }
            }
        }
        set.push_boundary(Vec3::new(0.11, 0.12, 0.0), 1e-3);
        let (contacts, _) = contacts_for(&set);
        let source: Vec<f64> = set
            .positions()
            .iter()
            .map(|x| 1000.0 * g_mag * (h_surf - x.z))
            .collect();
        let density = vec![1.0; set.len()];
        let pb = run(&set, &contacts, &source, &density, None);

        let mut w_sum = 0.0;
        let mut p_sum = 0.0;
        for c in contacts.bf(0) {
            w_sum += c.w;
            p_sum += source[c.f as usize] * c.w;
        }
        let mean = p_sum / w_sum;
        assert!((pb[0] - mean).abs() < 1e-12 * mean, "{} vs {mean}", pb[0]);
        let continued = 1000.0 * g_mag * h_surf;
        assert!(
            pb[0] < continued,
            "plain mean must undershoot the continued field at the floor"
        );
    }

    #[test]
    fn sample_without_fluid_contact_is_reset_to_zero() {
        let mut set = ParticleSet::new();
        set.push_fluid(Vec3::zeros(), Vec3::zeros(), 1e-3);
        set.push_boundary(Vec3::new(0.0, 0.0, 0.1), 1e-3);
        set.push_boundary(Vec3::new(5.0, 0.0, 0.0), 1e-3);
        let (contacts, _) = contacts_for(&set);
        let source = vec![100.0; set.len()];
        let density = vec![1.0; set.len()];
        let pb = run(&set, &contacts, &source, &density, Some(Vec3::zeros()));
        assert!(pb[0] > 0.0);
        assert_eq!(pb[1], 0.0, "isolated sample must be cleared");
    }

    #[test]
    fn negative_extrapolation_clamps_to_zero() {
        // Zero fluid pressure and a boundary sample above the fluid: the
        // hydrostatic correction is negative, so the clamp engages.
        let mut set = ParticleSet::new();
        set.push_fluid(Vec3::zeros(), Vec3::zeros(), 1e-3);
        set.push_boundary(Vec3::new(0.0, 0.0, 0.1), 1e-3);
        let (contacts, _) = contacts_for(&set);
        let source = vec![0.0; set.len()];
        let density = vec![1.0; set.len()];
        let pb = run(
            &set,
            &contacts,
            &source,
            &density,
            Some(Vec3::new(0.0, 0.0, -9.8)),
        );
        assert_eq!(pb[0], 0.0);
    }
}
