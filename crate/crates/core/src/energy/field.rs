use crate::ensemble::ParticleEnsemble;
use crate::error::{Error, Result};
use crate::geometry::{Spheroid, Vec3};
use crate::grid::Grid;

use super::extend::laplace_fill;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NodeKind {
    Fluid,
    Particle,
    Dirichlet,
}

/// A director field on a grid with its particle mask and boundary data.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorField {
    pub grid: Grid,
    pub values: Vec<Vec3>,
    pub mask: Vec<NodeKind>,
    /// Boundary data `U`, meaningful at Dirichlet nodes (zero elsewhere).
    pub dirichlet: Vec<Vec3>,
}

impl VectorField {
    /// Field without particles: `U` on the boundary, zero inside.
    pub fn new(grid: Grid, boundary: impl Fn(&Vec3) -> Vec3) -> Self {
        let mut mask = vec![NodeKind::Fluid; grid.len()];
        let mut dirichlet = vec![Vec3::zeros(); grid.len()];
        for idx in 0..grid.len() {
            if grid.is_boundary(idx) {
                mask[idx] = NodeKind::Dirichlet;
                dirichlet[idx] = boundary(&grid.position(idx));
            }
        }
        VectorField {
            grid,
            values: dirichlet.clone(),
            mask,
            dirichlet,
        }
    }

    /// Field with the realized particles of `e` masked out, initialized by
    /// the discrete harmonic fill of the boundary data.
    pub fn with_particles(grid: Grid, e: &ParticleEnsemble, boundary: impl Fn(&Vec3) -> Vec3) -> Result<Self> {
        let mut f = Self::new(grid, boundary);
        f.mark_particles(&e.realized_all());
        f.initialize_harmonic()?;
        Ok(f)
    }

    /// Flags every interior node inside one of `particles`.
    pub fn mark_particles(&mut self, particles: &[Spheroid]) {
        let g = self.grid;
        for s in particles {
            let c = s.center();
            let r = s.a();
            let lo = g.locate(&(c - Vec3::repeat(r))).0;
            let hi = g.locate(&(c + Vec3::repeat(r))).0;
            for k in lo[2]..=(hi[2] + 1).min(g.n[2] - 1) {
                for j in lo[1]..=(hi[1] + 1).min(g.n[1] - 1) {
                    for i in lo[0]..=(hi[0] + 1).min(g.n[0] - 1) {
                        let idx = g.index(i, j, k);
                        if self.mask[idx] == NodeKind::Fluid && s.contains(&g.position(idx)) {
                            self.mask[idx] = NodeKind::Particle;
                        }
                    }
                }
            }
        }
    }

    /// Replaces all non-boundary values by the discrete harmonic extension of `U`.
    pub fn initialize_harmonic(&mut self) -> Result<()> {
        let unknown: Vec<bool> = self.mask.iter().map(|k| *k != NodeKind::Dirichlet).collect();
        for (i, v) in self.values.iter_mut().enumerate() {
            *v = if unknown[i] { Vec3::zeros() } else { self.dirichlet[i] };
        }
        laplace_fill(&self.grid, &mut self.values, &unknown, 1e-12)
    }

    #[inline]
    pub fn is_free(&self, idx: usize) -> bool {
        self.mask[idx] == NodeKind::Fluid
    }

    pub fn count(&self, kind: NodeKind) -> usize {
        self.mask.iter().filter(|k| **k == kind).count()
    }

    /// Restores the boundary data at Dirichlet nodes.
    pub fn enforce_dirichlet(&mut self) {
        for i in 0..self.values.len() {
            if self.mask[i] == NodeKind::Dirichlet {
                self.values[i] = self.dirichlet[i];
            }
        }
    }

    pub fn satisfies_dirichlet(&self) -> bool {
        (0..self.values.len()).all(|i| self.mask[i] != NodeKind::Dirichlet || self.values[i] == self.dirichlet[i])
    }

    /// `∫_{Ω∖∪P}|u − v|²` with trapezoid weights over the nodes outside the
    /// particles of `self`.
    pub fn masked_l2_distance_sq(&self, other: &VectorField) -> Result<f64> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch(format!("{:?} vs {:?}", self.grid.n, other.grid.n)));
        }
        let w = self.grid.node_weights();
        Ok((0..self.values.len())
            .filter(|&i| self.mask[i] != NodeKind::Particle)
            .map(|i| w[i] * (self.values[i] - other.values[i]).norm_squared())
            .sum())
    }

    /// Same field with every node treated as fluid or boundary.
    pub fn without_particles(&self) -> VectorField {
        let mut f = self.clone();
        for k in &mut f.mask {
            if *k == NodeKind::Particle {
                *k = NodeKind::Fluid;
            }
        }
        f
    }
}
