//! Uniform node-centered Cartesian grids over an axis-aligned box.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec3;

/// Axis-aligned box `[lo, hi]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub lo: [f64; 3],
    pub hi: [f64; 3],
}

impl Domain {
    pub fn new(lo: [f64; 3], hi: [f64; 3]) -> Result<Self> {
        if (0..3).any(|d| !(hi[d] > lo[d]) || !lo[d].is_finite() || !hi[d].is_finite()) {
            return Err(Error::Config(format!("degenerate domain {lo:?}..{hi:?}")));
        }
        Ok(Domain { lo, hi })
    }

    pub fn unit_cube() -> Self {
        Domain {
            lo: [0.0; 3],
            hi: [1.0; 3],
        }
    }

    pub fn extent(&self, d: usize) -> f64 {
        self.hi[d] - self.lo[d]
    }

    pub fn volume(&self) -> f64 {
        (0..3).map(|d| self.extent(d)).product()
    }

    pub fn contains(&self, x: &Vec3) -> bool {
        (0..3).all(|d| x[d] >= self.lo[d] && x[d] <= self.hi[d])
    }

    /// Smallest distance from `x` to the boundary (negative outside).
    pub fn distance_to_boundary(&self, x: &Vec3) -> f64 {
        (0..3)
            .map(|d| (x[d] - self.lo[d]).min(self.hi[d] - x[d]))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Node-centered grid: `n[d]` nodes per axis including both boundary planes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub domain: Domain,
    pub n: [usize; 3],
}

impl Grid {
    pub fn new(domain: Domain, n: [usize; 3]) -> Result<Self> {
        if n.iter().any(|&k| k < 2) {
            return Err(Error::Resolution(format!("grid needs at least 2 nodes per axis, got {n:?}")));
        }
        Ok(Grid { domain, n })
    }

    pub fn cube(domain: Domain, n: usize) -> Result<Self> {
        Self::new(domain, [n; 3])
    }

    pub fn len(&self) -> usize {
        self.n[0] * self.n[1] * self.n[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn spacing(&self) -> [f64; 3] {
        let mut h = [0.0; 3];
        for (d, hd) in h.iter_mut().enumerate() {
            *hd = self.domain.extent(d) / (self.n[d] - 1) as f64;
        }
        h
    }

    pub fn max_spacing(&self) -> f64 {
        self.spacing().into_iter().fold(0.0, f64::max)
    }

    pub fn min_spacing(&self) -> f64 {
        self.spacing().into_iter().fold(f64::INFINITY, f64::min)
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.n[0] * (j + self.n[1] * k)
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let i = idx % self.n[0];
        let j = (idx / self.n[0]) % self.n[1];
        let k = idx / (self.n[0] * self.n[1]);
        [i, j, k]
    }

    #[inline]
    pub fn position(&self, idx: usize) -> Vec3 {
        let c = self.coords(idx);
        self.position_ijk(c[0], c[1], c[2])
    }

    #[inline]
    pub fn position_ijk(&self, i: usize, j: usize, k: usize) -> Vec3 {
        let h = self.spacing();
        Vec3::new(
            self.domain.lo[0] + i as f64 * h[0],
            self.domain.lo[1] + j as f64 * h[1],
            self.domain.lo[2] + k as f64 * h[2],
        )
    }

    pub fn is_boundary(&self, idx: usize) -> bool {
        let c = self.coords(idx);
        (0..3).any(|d| c[d] == 0 || c[d] == self.n[d] - 1)
    }

    /// Offset between consecutive nodes along axis `d`.
    #[inline]
    pub fn stride(&self, d: usize) -> usize {
        match d {
            0 => 1,
            1 => self.n[0],
            _ => self.n[0] * self.n[1],
        }
    }

    /// One-dimensional trapezoid factor (`h` inside, `h/2` on the end nodes).
    #[inline]
    fn trap(&self, d: usize, c: usize) -> f64 {
        let h = self.domain.extent(d) / (self.n[d] - 1) as f64;
        if c == 0 || c == self.n[d] - 1 {
            0.5 * h
        } else {
            h
        }
    }

    /// Trapezoid volume weight of each node; the weights sum to `|Ω|`.
    pub fn node_weights(&self) -> Vec<f64> {
        (0..self.len())
            .map(|idx| {
                let c = self.coords(idx);
                self.trap(0, c[0]) * self.trap(1, c[1]) * self.trap(2, c[2])
            })
            .collect()
    }

    /// Weight of the edge from node `idx` to its `+d` neighbour, used for the
    /// staggered gradient energy `Σ w_e |Δu/h_d|²`.
    pub fn edge_weight(&self, idx: usize, d: usize) -> f64 {
        let c = self.coords(idx);
        let h = self.spacing();
        let mut w = h[d];
        for e in 0..3 {
            if e != d {
                w *= self.trap(e, c[e]);
            }
        }
        w
    }

    /// Cell containing `x` (clamped to the grid) and the local coordinates in `[0, 1]³`.
    pub fn locate(&self, x: &Vec3) -> ([usize; 3], [f64; 3]) {
        let h = self.spacing();
        let mut cell = [0usize; 3];
        let mut t = [0.0; 3];
        for d in 0..3 {
            let s = (x[d] - self.domain.lo[d]) / h[d];
            let c = (s.floor().max(0.0) as usize).min(self.n[d] - 2);
            cell[d] = c;
            t[d] = (s - c as f64).clamp(0.0, 1.0);
        }
        (cell, t)
    }

    /// Map a function of position onto the nodes.
    pub fn sample<T>(&self, mut f: impl FnMut(&Vec3) -> T) -> Vec<T> {
        (0..self.len()).map(|idx| f(&self.position(idx))).collect()
    }

    pub fn same_as(&self, other: &Grid) -> bool {
        self == other
    }
}
