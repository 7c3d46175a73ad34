//! Non-pressure accelerations: gravity, artificial viscosity, surface
//! tension. All pairwise terms act between fluid pairs only, so a boundary
//! exchanges momentum with the fluid exclusively through pressure.
//!
//! Viscosity is the standard artificial form, active only for approaching
//! pairs:
//!
//! ```text
//! mu_ij = h (v_ij · x_ij) / (|x_ij|^2 + 0.01 h^2)        v_ij · x_ij < 0
//! a_i  -= sum_j V_j * (-alpha c mu_ij / rho_avg) grad W_ij
//! ```
//!
//! with `h` the smoothing length and `rho_avg = (rho_i + rho_j)/2`
//! (dimensionless densities — the rest density cancels against the physical
//! pair mass).
//!
//! Surface tension combines a pairwise cohesion spline with a
//! curvature-minimizing normal-difference term:
//!
//! ```text
//! n_i   = s * sum_j (V_j / rho_j) grad W_ij
//! a_i  -= kappa K_ij [ rho0 V_j C(r) x_ij/r + (n_i - n_j) ]
//! K_ij  = 2 / (rho_i + rho_j)
//! ```
//!
//! where `s` is the kernel support and `C` the cohesion spline over `[0, s]`
//! (repulsive close in, attractive further out). Both terms are exactly
//! antisymmetric over a pair for equal-volume particles, so the fluid's
//! total momentum is untouched.

use rayon::prelude::*;

use crate::config::SimulationConfig;
use crate::kernel::KernelPair;
use crate::particles::{ParticleSet, Phase};

use super::contacts::Contacts;
use super::Workspace;

/// Cohesion spline over the kernel support `s`, normalized like the original
/// splash-tension formulation:
///
/// ```text
/// C(r) = 32/(pi s^9) * | (s-r)^3 r^3            s/2 < r <= s
///                      | 2 (s-r)^3 r^3 - s^6/64   0 < r <= s/2
/// ```
fn cohesion(r: f64, support: f64) -> f64 {
    if r <= 0.0 || r >= support {
        return 0.0;
    }
    let norm = 32.0 / (std::f64::consts::PI * support.powi(9));
    let a = (support - r).powi(3) * r.powi(3);
    if r > 0.5 * support {
        norm * a
    } else {
        norm * (2.0 * a - support.powi(6) / 64.0)
    }
}

pub(crate) fn compute_nonpressure(
    set: &mut ParticleSet,
    contacts: &Contacts,
    kernel: &KernelPair,
    config: &SimulationConfig,
    ws: &mut Workspace,
) {
    let v = set.views();
    let phases = v.phases;
    let positions = v.positions;
    let volumes = v.volumes;
    let density: &[f64] = v.density;
    let velocities: &[nalgebra::Vector3<f64>] = v.velocities;
    let support = kernel.support_radius();
    let h = kernel.smoothing_length();

    // Pass 1: surface normals (fluid neighbors only).
    ws.normals.par_iter_mut().enumerate().for_each(|(i, n)| {
        if phases[i] == Phase::Boundary {
            *n = nalgebra::Vector3::zeros();
            return;
        }
        let k = contacts.ordinal_of(i);
        let mut acc = nalgebra::Vector3::zeros();
        for c in contacts.ff(k) {
            let j = c.j as usize;
            acc += c.grad * (volumes[j] / density[j]);
        }
        *n = acc * support;
    });
    let normals: &[nalgebra::Vector3<f64>] = &ws.normals;

    // Pass 2: accelerations.
    let gravity = config.gravity;
    let alpha = config.viscosity_alpha;
    let c_sound = config.sound_speed;
    let kappa = config.tension_kappa;
    let rho0 = config.rest_density;
    v.nonpressure_accel.par_iter_mut().enumerate().for_each(|(i, out)| {
        if phases[i] == Phase::Boundary {
            *out = nalgebra::Vector3::zeros();
            return;
        }
        let k = contacts.ordinal_of(i);
        let mut a = gravity;
        for c in contacts.ff(k) {
            let j = c.j as usize;
            let x_ij = positions[i] - positions[j];
            let r2 = x_ij.norm_squared();
            let rho_avg = 0.5 * (density[i] + density[j]);

            let v_dot_x = (velocities[i] - velocities[j]).dot(&x_ij);
            if v_dot_x < 0.0 {
                let mu = h * v_dot_x / (r2 + 0.01 * h * h);
                let pi_ij = -alpha * c_sound * mu / rho_avg;
                a -= c.grad * (volumes[j] * pi_ij);
            }

            if kappa > 0.0 {
                let k_ij = 2.0 / (density[i] + density[j]);
                let r = r2.sqrt();
                if r > 1e-12 {
                    a -= (x_ij / r) * (kappa * k_ij * rho0 * volumes[j] * cohesion(r, support));
                }
                a -= (normals[i] - normals[j]) * (kappa * k_ij);
            }
        }
        *out = a;
    });
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neighbor::NeighborGrid;
    use crate::Vec3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const RADIUS: f64 = 0.05;

    fn run_forces(set: &mut ParticleSet, config: &SimulationConfig) {
        let kernel = KernelPair::for_particle_radius(RADIUS);
        let grid = NeighborGrid::build(set, kernel.support_radius()).unwrap();
        let mut contacts = Contacts::new();
        contacts.rebuild(set, &grid, &kernel).unwrap();
        super::super::density::compute_densities(set, &contacts, &kernel, config.gamma, 0)
            .unwrap();
        let mut ws = Workspace::default();
        ws.resize(set.len(), set.fluid_count());
        compute_nonpressure(set, &contacts, &kernel, config, &mut ws);
    }

    #[test]
    fn lone_particle_feels_exactly_gravity() {
        let mut set = ParticleSet::new();
        set.push_fluid(Vec3::zeros(), Vec3::new(1.0, 0.0, 0.0), 1e-3);
        let config = SimulationConfig::default();
        run_forces(&mut set, &config);
        assert_eq!(set.nonpressure_accel[0], config.gravity);
    }

    #[test]
    fn viscosity_acts_only_on_approaching_pairs() {
        let mut config = SimulationConfig::default();
        config.tension_kappa = 0.0;
        let x_ij = Vec3::new(0.1, 0.0, 0.0);

        // Approaching: relative velocity against the separation.
        let mut set = ParticleSet::new();
        set.push_fluid(Vec3::zeros(), Vec3::new(1.0, 0.0, 0.0), 1e-3);
        set.push_fluid(x_ij, Vec3::zeros(), 1e-3);
        run_forces(&mut set, &config);
        let a0 = set.nonpressure_accel[0] - config.gravity;
        assert!(a0.norm() > 0.0, "approaching pair must be damped");
        assert!(
            a0.dot(&x_ij) < 0.0,
            "damping must oppose the approach velocity of particle 0"
        );

        // Receding: same geometry, velocity reversed — no viscous force.
        let mut set = ParticleSet::new();
        set.push_fluid(Vec3::zeros(), Vec3::new(-1.0, 0.0, 0.0), 1e-3);
        set.push_fluid(x_ij, Vec3::zeros(), 1e-3);
        run_forces(&mut set, &config);
        assert_eq!(set.nonpressure_accel[0], config.gravity);
    }

    #[test]
    fn pair_forces_cancel_exactly_for_equal_volumes() {
        let config = SimulationConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..100 {
            let mut set = ParticleSet::new();
            let d = Vec3::new(
                rng.gen_range(-0.15..0.15),
                rng.gen_range(-0.15..0.15),
                rng.gen_range(-0.15..0.15),
            );
            if d.norm() < 1e-3 {
                continue;
            }
            let vel = Vec3::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            );
            set.push_fluid(Vec3::zeros(), vel, 1e-3);
            set.push_fluid(d, -vel, 1e-3);
            run_forces(&mut set, &config);
            let sum = (set.nonpressure_accel[0] - config.gravity)
                + (set.nonpressure_accel[1] - config.gravity);
            assert!(
                sum.norm() < 1e-12,
                "pair momentum violated by {sum:?} at separation {d:?}"
            );
        }
    }

    #[test]
    fn cloud_conserves_momentum_up_to_gravity() {
        let config = SimulationConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let mut set = ParticleSet::new();
        for _ in 0..60 {
            set.push_fluid(
                Vec3::new(
                    rng.gen_range(-0.2..0.2),
                    rng.gen_range(-0.2..0.2),
                    rng.gen_range(-0.2..0.2),
                ),
                Vec3::new(
                    rng.gen_range(-0.5..0.5),
                    rng.gen_range(-0.5..0.5),
                    rng.gen_range(-0.5..0.5),
                ),
                1e-3,
            );
        }
        run_forces(&mut set, &config);
        let mut total = Vec3::zeros();
        let mut scale = 0.0;
        for &i in set.fluid_indices() {
            let a = set.nonpressure_accel[i] - config.gravity;
            total += a;
            scale += a.norm();
        }
        assert!(
            total.norm() <= 1e-8 * scale.max(1e-300),
            "net internal force {total:?} vs magnitude scale {scale}"
        );
    }

    #[test]
    fn boundary_neighbors_contribute_no_drag_or_tension() {
        let mut set = ParticleSet::new();
        set.push_fluid(Vec3::new(0.0, 0.0, 0.05), Vec3::new(0.0, 0.0, -1.0), 1e-3);
        set.push_boundary(Vec3::zeros(), 1e-3);
        let config = SimulationConfig::default();
        run_forces(&mut set, &config);
        assert_eq!(
            set.nonpressure_accel[0], config.gravity,
            "a fluid particle approaching a wall must feel only gravity here"
        );
    }
}
