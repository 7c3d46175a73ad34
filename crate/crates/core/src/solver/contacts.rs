//! Per-step contact lists with cached kernel evaluations.
//!
//! Positions only change at the end of a step, so every kernel value and
//! gradient a step needs can be computed once, right after the neighbor grid
//! refresh, and reused by the density pass, the force pass and every solver
//! sweep. Lists are CSR-shaped: `ff` holds fluid→fluid contacts, `fb`
//! fluid→boundary, both indexed by *fluid ordinal* (position in
//! `ParticleSet::fluid_indices`). `bf` is the transpose of `fb` (boundary→
//! fluid, kernel value only), which pressure extrapolation onto boundary
//! samples consumes.
//!
//! Gradients are stored for the first particle of the pair: `grad` is the
//! derivative with respect to the fluid particle's position, `x_i - x_j`
//! convention, as produced by [`KernelPair::gradient`].

use rayon::prelude::*;

use crate::kernel::KernelPair;
use crate::neighbor::NeighborGrid;
use crate::particles::{ParticleSet, Phase};
use crate::{SphError, Vec3};

#[derive(Debug, Clone, Copy)]
pub struct Contact {
    /// Particle id of the neighbor.
    pub j: u32,
    pub w: f64,
    pub grad: Vec3,
}

#[derive(Debug, Clone, Copy)]
pub struct BoundaryContact {
    /// Particle id of the fluid neighbor.
    pub f: u32,
    pub w: f64,
}

#[derive(Debug, Default)]
pub struct Contacts {
    ff_off: Vec<u32>,
    ff: Vec<Contact>,
    fb_off: Vec<u32>,
    fb: Vec<Contact>,
    bf_off: Vec<u32>,
    bf: Vec<BoundaryContact>,
    /// Fluid ordinals that have at least one boundary contact.
    boundary_adjacent: Vec<u32>,
    /// Boundary ordinals that have at least one fluid contact.
    active_boundary: Vec<u32>,
    /// Particle id → ordinal within its phase.
    ordinal_of: Vec<u32>,
    built_generation: u64,
    scratch_ff: Vec<Vec<Contact>>,
    scratch_fb: Vec<Vec<Contact>>,
}

impl Contacts {
    pub fn new() -> Self {
        Self::default()
    }

    /// Rebuilds all lists from a freshly refreshed grid. The grid must have
    /// been built for the set's current generation.
    pub fn rebuild(
        &mut self,
        set: &ParticleSet,
        grid: &NeighborGrid,
        kernel: &KernelPair,
    ) -> Result<(), SphError> {
        let nf = set.fluid_count();
        let support = kernel.support_radius();
        let positions = set.positions();
        let ids = set.fluid_indices();

        self.scratch_ff.resize_with(nf, Vec::new);
        self.scratch_fb.resize_with(nf, Vec::new);

        // Probe generation agreement through a query; particle 0 exists
        // whenever there is anything to do.
        if set.len() > 0 {
            grid.neighbors(set, 0)?;
        }

        self.scratch_ff
            .par_iter_mut()
            .zip(self.scratch_fb.par_iter_mut())
            .enumerate()
            .for_each(|(k, (ff, fb))| {
                ff.clear();
                fb.clear();
                let i = ids[k];
                let pi = positions[i];
                grid.for_each_candidate(&pi, Phase::Fluid, |j| {
                    if j == i {
                        return;
                    }
                    let d = pi - positions[j];
                    let r = d.norm();
                    if r < support {
                        ff.push(Contact { j: j as u32, w: kernel.value(r), grad: kernel.gradient(&d) });
                    }
                });
                grid.for_each_candidate(&pi, Phase::Boundary, |j| {
                    let d = pi - positions[j];
                    let r = d.norm();
                    if r < support {
                        fb.push(Contact { j: j as u32, w: kernel.value(r), grad: kernel.gradient(&d) });
                    }
                });
            });

        // Flatten into CSR, fixed ordinal order → deterministic layout.
        self.ff_off.clear();
        self.fb_off.clear();
        self.ff.clear();
        self.fb.clear();
        self.boundary_adjacent.clear();
        self.ff_off.push(0);
        self.fb_off.push(0);
        for k in 0..nf {
            self.ff.extend_from_slice(&self.scratch_ff[k]);
            self.fb.extend_from_slice(&self.scratch_fb[k]);
            self.ff_off.push(self.ff.len() as u32);
            self.fb_off.push(self.fb.len() as u32);
            if !self.scratch_fb[k].is_empty() {
                self.boundary_adjacent.push(k as u32);
            }
        }

        // Phase-local ordinals for id-keyed lookups.
        self.ordinal_of.clear();
        self.ordinal_of.resize(set.len(), u32::MAX);
        for (k, &i) in ids.iter().enumerate() {
            self.ordinal_of[i] = k as u32;
        }
        for (bk, &b) in set.boundary_indices().iter().enumerate() {
            self.ordinal_of[b] = bk as u32;
        }

        // Transpose fb → bf.
        let nb = set.boundary_count();
        let mut counts = vec![0u32; nb];
        for c in &self.fb {
            counts[self.ordinal_of[c.j as usize] as usize] += 1;
        }
        self.bf_off.clear();
        self.bf_off.resize(nb + 1, 0);
        for bk in 0..nb {
            self.bf_off[bk + 1] = self.bf_off[bk] + counts[bk];
        }
        self.bf.clear();
        self.bf.resize(self.bf_off[nb] as usize, BoundaryContact { f: 0, w: 0.0 });
        let mut cursor: Vec<u32> = self.bf_off[..nb].to_vec();
        let (fb_off, fb, bf, ordinal_of) = (&self.fb_off, &self.fb, &mut self.bf, &self.ordinal_of);
        for k in 0..nf {
            let i = ids[k] as u32;
            for c in &fb[fb_off[k] as usize..fb_off[k + 1] as usize] {
                let bk = ordinal_of[c.j as usize] as usize;
                bf[cursor[bk] as usize] = BoundaryContact { f: i, w: c.w };
                cursor[bk] += 1;
            }
        }
        self.active_boundary.clear();
        for bk in 0..nb {
            if counts[bk] > 0 {
                self.active_boundary.push(bk as u32);
            }
        }

        self.built_generation = set.generation();
        Ok(())
    }

    pub fn ff(&self, k: usize) -> &[Contact] {
        &self.ff[self.ff_off[k] as usize..self.ff_off[k + 1] as usize]
    }

    pub fn fb(&self, k: usize) -> &[Contact] {
        &self.fb[self.fb_off[k] as usize..self.fb_off[k + 1] as usize]
    }

    pub fn bf(&self, bk: usize) -> &[BoundaryContact] {
        &self.bf[self.bf_off[bk] as usize..self.bf_off[bk + 1] as usize]
    }

    pub fn has_boundary_contact(&self, k: usize) -> bool {
        self.fb_off[k + 1] > self.fb_off[k]
    }

    /// Fluid ordinals with at least one boundary contact.
    pub fn boundary_adjacent(&self) -> &[u32] {
        &self.boundary_adjacent
    }

    /// Boundary ordinals with at least one fluid contact.
    pub fn active_boundary(&self) -> &[u32] {
        &self.active_boundary
    }

    pub fn ordinal_of(&self, id: usize) -> usize {
        self.ordinal_of[id] as usize
    }

    pub fn built_generation(&self) -> u64 {
        self.built_generation
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neighbor::NeighborGrid;

    #[test]
    fn contacts_match_neighbor_lists_and_transpose_is_consistent() {
        let kernel = KernelPair::for_particle_radius(0.05);
        let mut set = ParticleSet::new();
        // Small slab of fluid over a few boundary samples.
        for i in 0..4 {
            for j in 0..3 {
                set.push_fluid(
                    Vec3::new(i as f64 * 0.1, j as f64 * 0.1, 0.1),
                    Vec3::zeros(),
                    1e-3,
                );
            }
        }
        for i in 0..8 {
            for j in 0..6 {
                set.push_boundary(Vec3::new(i as f64 * 0.05, j as f64 * 0.05, 0.0), 1e-3);
            }
        }
        let grid = NeighborGrid::build(&set, kernel.support_radius()).unwrap();
        let mut contacts = Contacts::new();
        contacts.rebuild(&set, &grid, &kernel).unwrap();

        let mut fb_total = 0;
        for (k, &i) in set.fluid_indices().iter().enumerate() {
            let want = grid.neighbors(&set, i).unwrap();
            let got_ff: Vec<usize> = contacts.ff(k).iter().map(|c| c.j as usize).collect();
            let got_fb: Vec<usize> = contacts.fb(k).iter().map(|c| c.j as usize).collect();
            let sort = |mut v: Vec<usize>| {
                v.sort_unstable();
                v
            };
            assert_eq!(sort(got_ff), sort(want.fluid), "fluid contacts of {i}");
            assert_eq!(sort(got_fb), sort(want.boundary), "boundary contacts of {i}");
            fb_total += contacts.fb(k).len();

            // Cached kernel values agree with direct evaluation.
            for c in contacts.ff(k).iter().chain(contacts.fb(k)) {
                let d = set.positions()[i] - set.positions()[c.j as usize];
                assert_eq!(c.w, kernel.value(d.norm()));
                assert_eq!(c.grad, kernel.gradient(&d));
            }
        }

        let bf_total: usize =
            (0..set.boundary_count()).map(|bk| contacts.bf(bk).len()).sum();
        assert_eq!(bf_total, fb_total, "bf must be the exact transpose of fb");
        for bk in 0..set.boundary_count() {
            let b = set.boundary_indices()[bk];
            for bc in contacts.bf(bk) {
                let k = contacts.ordinal_of(bc.f as usize);
                assert!(
                    contacts.fb(k).iter().any(|c| c.j as usize == b && c.w == bc.w),
                    "transposed contact not found forward"
                );
            }
        }
        assert!(!contacts.boundary_adjacent().is_empty());
        assert!(!contacts.active_boundary().is_empty());
    }

    #[test]
    fn rebuild_after_motion_requires_refreshed_grid() {
        let kernel = KernelPair::for_particle_radius(0.05);
        let mut set = ParticleSet::new();
        set.push_fluid(Vec3::zeros(), Vec3::zeros(), 1e-3);
        set.push_fluid(Vec3::new(0.1, 0.0, 0.0), Vec3::zeros(), 1e-3);
        let mut grid = NeighborGrid::build(&set, kernel.support_radius()).unwrap();
        let mut contacts = Contacts::new();
        contacts.rebuild(&set, &grid, &kernel).unwrap();

        set.apply_fluid_motion(|_, p| p.x += 0.01);
        assert!(matches!(
            contacts.rebuild(&set, &grid, &kernel),
            Err(SphError::StaleGrid { .. })
        ));
        grid.refresh(&set).unwrap();
        contacts.rebuild(&set, &grid, &kernel).unwrap();
        assert_eq!(contacts.ff(0).len(), 1);
    }
}
