//! Fixed-radius neighbor search on a uniform grid.
//!
//! Cells are cubes with edge equal to the search radius, so all neighbors of
//! a particle live in its own cell or the 26 surrounding ones. Fluid and
//! boundary occupancy are kept in separate maps: boundary particles never
//! move, so their map is built once and reused across
//! [`NeighborGrid::refresh`] calls while the fluid map is rebuilt each step.
//!
//! Build and query are separate phases. The grid records the particle-set
//! generation it was built for and refuses queries after positions changed,
//! which turns silent use of stale neighborhoods into a hard error.
//!
//! Neighborhoods use strict distance: `|x_i - x_j| < radius`, excluding the
//! particle itself. The kernel vanishes at the radius, so the boundary case
//! contributes nothing either way; strictness just makes the contract exact.

use std::collections::HashMap;

use crate::error::SphError;
use crate::particles::{ParticleSet, Phase};
use crate::Vec3;

type Cell = (i32, i32, i32);

/// Neighbor indices of one particle, split by phase.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NeighborList {
    pub fluid: Vec<usize>,
    pub boundary: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct NeighborGrid {
    radius: f64,
    fluid_cells: HashMap<Cell, Vec<usize>>,
    boundary_cells: HashMap<Cell, Vec<usize>>,
    built_generation: u64,
    built_boundary_generation: u64,
}

fn cell_of(p: &Vec3, radius: f64) -> Cell {
    (
        (p.x / radius).floor() as i32,
        (p.y / radius).floor() as i32,
        (p.z / radius).floor() as i32,
    )
}

impl NeighborGrid {
    /// Builds occupancy for the whole set. Errors on non-finite positions.
    pub fn build(set: &ParticleSet, radius: f64) -> Result<Self, SphError> {
        assert!(radius > 0.0, "search radius must be positive");
        let mut grid = NeighborGrid {
            radius,
            fluid_cells: HashMap::new(),
            boundary_cells: HashMap::new(),
            built_generation: 0,
            built_boundary_generation: 0,
        };
        grid.fill_boundary(set)?;
        grid.fill_fluid(set)?;
        grid.built_generation = set.generation();
        grid.built_boundary_generation = set.boundary_generation();
        Ok(grid)
    }

    /// Re-bins fluid particles after motion; boundary bins are reused unless
    /// boundary particles were added or removed.
    pub fn refresh(&mut self, set: &ParticleSet) -> Result<(), SphError> {
        if self.built_boundary_generation != set.boundary_generation() {
            self.fill_boundary(set)?;
            self.built_boundary_generation = set.boundary_generation();
        }
        self.fill_fluid(set)?;
        self.built_generation = set.generation();
        Ok(())
    }

    fn fill_boundary(&mut self, set: &ParticleSet) -> Result<(), SphError> {
        self.boundary_cells.clear();
        for &i in set.boundary_indices() {
            let p = &set.positions()[i];
            if !p.iter().all(|c| c.is_finite()) {
                return Err(SphError::NonFiniteGridInput { index: i });
            }
            self.boundary_cells.entry(cell_of(p, self.radius)).or_default().push(i);
        }
        Ok(())
    }

    fn fill_fluid(&mut self, set: &ParticleSet) -> Result<(), SphError> {
        for v in self.fluid_cells.values_mut() {
            v.clear();
        }
        for &i in set.fluid_indices() {
            let p = &set.positions()[i];
            if !p.iter().all(|c| c.is_finite()) {
                return Err(SphError::NonFiniteGridInput { index: i });
            }
            self.fluid_cells.entry(cell_of(p, self.radius)).or_default().push(i);
        }
        Ok(())
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    fn check_generation(&self, set: &ParticleSet) -> Result<(), SphError> {
        if self.built_generation != set.generation() {
            return Err(SphError::StaleGrid {
                built: self.built_generation,
                current: set.generation(),
            });
        }
        Ok(())
    }

    /// Neighbors of particle `i` (strictly within the radius, excluding `i`),
    /// split by phase. Errors if the set moved since the grid was built.
    pub fn neighbors(&self, set: &ParticleSet, i: usize) -> Result<NeighborList, SphError> {
        self.check_generation(set)?;
        let mut out = NeighborList::default();
        let center = set.positions()[i];
        self.for_each_candidate(&center, Phase::Fluid, |j| {
            if j != i && (set.positions()[j] - center).norm() < self.radius {
                out.fluid.push(j);
            }
        });
        self.for_each_candidate(&center, Phase::Boundary, |j| {
            if j != i && (set.positions()[j] - center).norm() < self.radius {
                out.boundary.push(j);
            }
        });
        Ok(out)
    }

    /// Visits every particle of `phase` binned in the 27 cells around `p`,
    /// without distance filtering. The traversal order is deterministic:
    /// cells in fixed offset order, indices in insertion order.
    pub fn for_each_candidate(&self, p: &Vec3, phase: Phase, mut f: impl FnMut(usize)) {
        let map = match phase {
            Phase::Fluid => &self.fluid_cells,
            Phase::Boundary => &self.boundary_cells,
        };
        let (cx, cy, cz) = cell_of(p, self.radius);
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(bin) = map.get(&(cx + dx, cy + dy, cz + dz)) {
                        for &j in bin {
                            f(j);
                        }
                    }
                }
            }
        }
    }
}
