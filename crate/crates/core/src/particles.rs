//! Columnar particle state.
//!
//! One struct-of-arrays holds fluid and boundary particles together; phase
//! tags tell them apart and are fixed at construction. Boundary particles
//! never move — the only ways positions change are [`ParticleSet::apply_fluid_motion`]
//! (touches fluid slots only) and adding/removing particles — so spatial
//! structures may cache boundary data, invalidated by `boundary_generation`.
//!
//! `generation` counts every change to the position arrangement (motion,
//! insertion, removal). Neighbor grids remember the generation they were
//! built for and refuse queries once the set has moved on.
//!
//! Density fields are artificial (rest = 1) and three-fold:
//!
//! ```text
//! density          rho     from all neighbors (fluid + boundary)
//! fluid_density    rho^f   from fluid neighbors only
//! boundary_density rho^b   from boundary neighbors only
//! ```
//!
//! all including the particle's own volume-weighted self contribution, so
//! `fluid_density + boundary_density - self_term == density` exactly (the
//! self term would otherwise be counted twice). Pressures are in Pa.

use crate::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Fluid,
    Boundary,
}

#[derive(Debug, Clone, Default)]
pub struct ParticleSet {
    positions: Vec<Vec3>,
    phases: Vec<Phase>,
    pub velocities: Vec<Vec3>,
    /// Rest volume per particle (m^3): diameter^3 for fluid, the calibrated
    /// sample volume for boundary.
    pub volumes: Vec<f64>,
    /// rho — density over all neighbors.
    pub density: Vec<f64>,
    /// rho^f — density over fluid neighbors only.
    pub fluid_density: Vec<f64>,
    /// rho^b — density over boundary neighbors only.
    pub boundary_density: Vec<f64>,
    /// p^f (Pa). The coupled solver keeps its single pressure field here.
    pub fluid_pressure: Vec<f64>,
    /// p^b (Pa). On boundary particles: the extrapolated/mirrored value.
    pub boundary_pressure: Vec<f64>,
    /// a — gravity, viscosity, surface tension.
    pub nonpressure_accel: Vec<Vec3>,
    /// a^f — acceleration from fluid-stage pressure (total pressure
    /// acceleration in coupled mode).
    pub fluid_accel: Vec<Vec3>,
    /// a^b — acceleration from boundary-stage pressure (zero in coupled mode).
    pub boundary_accel: Vec<Vec3>,
    fluid_indices: Vec<usize>,
    boundary_indices: Vec<usize>,
    generation: u64,
    boundary_generation: u64,
}

impl ParticleSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[Vec3] {
        &self.positions
    }

    pub fn phase(&self, i: usize) -> Phase {
        self.phases[i]
    }

    pub fn is_fluid(&self, i: usize) -> bool {
        self.phases[i] == Phase::Fluid
    }

    /// Indices of fluid particles, in insertion order.
    pub fn fluid_indices(&self) -> &[usize] {
        &self.fluid_indices
    }

    /// Indices of boundary particles, in insertion order.
    pub fn boundary_indices(&self) -> &[usize] {
        &self.boundary_indices
    }

    pub fn fluid_count(&self) -> usize {
        self.fluid_indices.len()
    }

    pub fn boundary_count(&self) -> usize {
        self.boundary_indices.len()
    }

    /// Changes whenever the position arrangement changes in any way.
    pub fn generation(&self) -> u64 {
        self.generation
    }

    /// Changes only when boundary particles are added or removed.
    pub fn boundary_generation(&self) -> u64 {
        self.boundary_generation
    }

    pub fn push_fluid(&mut self, position: Vec3, velocity: Vec3, volume: f64) -> usize {
        let idx = self.push_common(position, Phase::Fluid, velocity, volume);
        self.fluid_indices.push(idx);
        self.generation += 1;
        idx
    }

    pub fn push_boundary(&mut self, position: Vec3, volume: f64) -> usize {
        let idx = self.push_common(position, Phase::Boundary, Vec3::zeros(), volume);
        self.boundary_indices.push(idx);
        self.generation += 1;
        self.boundary_generation += 1;
        idx
    }

    fn push_common(&mut self, position: Vec3, phase: Phase, velocity: Vec3, volume: f64) -> usize {
        let idx = self.positions.len();
        self.positions.push(position);
        self.phases.push(phase);
        self.velocities.push(velocity);
        self.volumes.push(volume);
        self.density.push(0.0);
        self.fluid_density.push(0.0);
        self.boundary_density.push(0.0);
        self.fluid_pressure.push(0.0);
        self.boundary_pressure.push(0.0);
        self.nonpressure_accel.push(Vec3::zeros());
        self.fluid_accel.push(Vec3::zeros());
        self.boundary_accel.push(Vec3::zeros());
        idx
    }

    /// Moves fluid particles. The closure receives each fluid index and its
    /// position to mutate; boundary slots are untouched. Bumps `generation`.
    pub fn apply_fluid_motion(&mut self, mut f: impl FnMut(usize, &mut Vec3)) {
        for &i in &self.fluid_indices {
            f(i, &mut self.positions[i]);
        }
        self.generation += 1;
    }

    /// Like [`Self::apply_fluid_motion`] but hands the closure the particle's
    /// velocity as well (the advection step needs both).
    pub fn advect_fluid(&mut self, mut f: impl FnMut(usize, &Vec3, &mut Vec3)) {
        for &i in &self.fluid_indices {
            f(i, &self.velocities[i], &mut self.positions[i]);
        }
        self.generation += 1;
    }

    /// Split borrows over all per-particle arrays, so compute passes can read
    /// some fields while writing others. Positions and phases stay read-only;
    /// going through this view never invalidates spatial caches.
    pub fn views(&mut self) -> ParticleViews<'_> {
        ParticleViews {
            positions: &self.positions,
            phases: &self.phases,
            fluid_ids: &self.fluid_indices,
            boundary_ids: &self.boundary_indices,
            velocities: &mut self.velocities,
            volumes: &self.volumes,
            density: &mut self.density,
            fluid_density: &mut self.fluid_density,
            boundary_density: &mut self.boundary_density,
            fluid_pressure: &mut self.fluid_pressure,
            boundary_pressure: &mut self.boundary_pressure,
            nonpressure_accel: &mut self.nonpressure_accel,
            fluid_accel: &mut self.fluid_accel,
            boundary_accel: &mut self.boundary_accel,
        }
    }

    /// Drops every particle for which `keep` returns false, compacting all
    /// arrays consistently and rebuilding the phase index lists.
    pub fn remove_particles(&mut self, keep: impl Fn(usize) -> bool) {
        let n = self.positions.len();
        let mask: Vec<bool> = (0..n).map(&keep).collect();
        let mut removed_boundary = false;

        let mut write = 0;
        for read in 0..n {
            if !mask[read] {
                if self.phases[read] == Phase::Boundary {
                    removed_boundary = true;
                }
                continue;
            }
            if write != read {
                self.positions[write] = self.positions[read];
                self.phases[write] = self.phases[read];
                self.velocities[write] = self.velocities[read];
                self.volumes[write] = self.volumes[read];
                self.density[write] = self.density[read];
                self.fluid_density[write] = self.fluid_density[read];
                self.boundary_density[write] = self.boundary_density[read];
                self.fluid_pressure[write] = self.fluid_pressure[read];
                self.boundary_pressure[write] = self.boundary_pressure[read];
                self.nonpressure_accel[write] = self.nonpressure_accel[read];
                self.fluid_accel[write] = self.fluid_accel[read];
                self.boundary_accel[write] = self.boundary_accel[read];
            }
            write += 1;
        }
        self.positions.truncate(write);
        self.phases.truncate(write);
        self.velocities.truncate(write);
        self.volumes.truncate(write);
        self.density.truncate(write);
        self.fluid_density.truncate(write);
        self.boundary_density.truncate(write);
        self.fluid_pressure.truncate(write);
        self.boundary_pressure.truncate(write);
        self.nonpressure_accel.truncate(write);
        self.fluid_accel.truncate(write);
        self.boundary_accel.truncate(write);

        self.fluid_indices.clear();
        self.boundary_indices.clear();
        for (i, phase) in self.phases.iter().enumerate() {
            match phase {
                Phase::Fluid => self.fluid_indices.push(i),
                Phase::Boundary => self.boundary_indices.push(i),
            }
        }
        self.generation += 1;
        if removed_boundary {
            self.boundary_generation += 1;
        }
    }
}

/// Borrow-split access to the particle arrays; see [`ParticleSet::views`].
pub struct ParticleViews<'a> {
    pub positions: &'a [Vec3],
    pub phases: &'a [Phase],
    pub fluid_ids: &'a [usize],
    pub boundary_ids: &'a [usize],
    pub velocities: &'a mut [Vec3],
    pub volumes: &'a [f64],
    pub density: &'a mut [f64],
    pub fluid_density: &'a mut [f64],
    pub boundary_density: &'a mut [f64],
    pub fluid_pressure: &'a mut [f64],
    pub boundary_pressure: &'a mut [f64],
    pub nonpressure_accel: &'a mut [Vec3],
    pub fluid_accel: &'a mut [Vec3],
    pub boundary_accel: &'a mut [Vec3],
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arrays_stay_in_lockstep() {
        let mut set = ParticleSet::new();
        set.push_fluid(Vec3::new(0.0, 0.0, 0.0), Vec3::zeros(), 1e-3);
        set.push_boundary(Vec3::new(1.0, 0.0, 0.0), 2e-3);
        set.push_fluid(Vec3::new(0.0, 1.0, 0.0), Vec3::zeros(), 1e-3);
        assert_eq!(set.len(), 3);
        assert_eq!(set.velocities.len(), 3);
        assert_eq!(set.volumes.len(), 3);
        assert_eq!(set.density.len(), 3);
        assert_eq!(set.boundary_pressure.len(), 3);
        assert_eq!(set.fluid_indices(), &[0, 2]);
        assert_eq!(set.boundary_indices(), &[1]);
        assert!(set.is_fluid(0) && !set.is_fluid(1));
    }

    #[test]
    fn motion_bumps_generation_but_not_boundary_generation() {
        let mut set = ParticleSet::new();
        set.push_fluid(Vec3::zeros(), Vec3::zeros(), 1e-3);
        set.push_boundary(Vec3::new(1.0, 0.0, 0.0), 1e-3);
        let g = set.generation();
        let bg = set.boundary_generation();
        set.apply_fluid_motion(|_, p| p.x += 0.5);
        assert!(set.generation() > g);
        assert_eq!(set.boundary_generation(), bg);
        assert_eq!(set.positions()[0].x, 0.5);
        assert_eq!(set.positions()[1].x, 1.0, "boundary must not move");
    }

    #[test]
    fn removal_compacts_all_arrays_and_reindexes() {
        let mut set = ParticleSet::new();
        for i in 0..5 {
            set.push_fluid(Vec3::new(i as f64, 0.0, 0.0), Vec3::zeros(), 1e-3);
        }
        set.push_boundary(Vec3::new(9.0, 0.0, 0.0), 1e-3);
        set.fluid_pressure[3] = 42.0;
        let bg = set.boundary_generation();

        set.remove_particles(|i| i != 1 && i != 2);
        assert_eq!(set.len(), 4);
        assert_eq!(set.positions()[1].x, 3.0);
        assert_eq!(set.fluid_pressure[1], 42.0);
        assert_eq!(set.fluid_indices(), &[0, 1, 2]);
        assert_eq!(set.boundary_indices(), &[3]);
        assert_eq!(
            set.boundary_generation(),
            bg,
            "dropping only fluid must keep the boundary cache valid"
        );

        set.remove_particles(|i| i != 3);
        assert!(set.boundary_generation() > bg);
        assert_eq!(set.boundary_count(), 0);
    }
}
