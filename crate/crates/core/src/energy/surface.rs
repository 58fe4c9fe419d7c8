use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::geometry::{Mat3, SurfaceQuadrature, Vec3};
use crate::grid::Grid;

use super::field::NodeKind;

/// Quadratic form `Σ_q w_q (ν_q · u(x_q))²` with `u(x_q)` interpolated from
/// the nodes, stored as a symmetric sparse matrix of 3×3 blocks.
#[derive(Clone, Debug, Default)]
pub struct SurfaceOperator {
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    blocks: Vec<Mat3>,
    /// Grid node of each stored row.
    rows: Vec<usize>,
}

/// Interpolation stencil of a point: trilinear weights over the non-particle
/// corners of its cell, renormalized; nearest non-particle node if none.
pub(crate) fn stencil(grid: &Grid, mask: &[NodeKind], x: &Vec3) -> Result<Vec<(usize, f64)>> {
    let (c, t) = grid.locate(x);
    let mut out = Vec::with_capacity(8);
    let mut total = 0.0;
    for corner in 0..8 {
        let o = [corner & 1, (corner >> 1) & 1, (corner >> 2) & 1];
        let mut w = 1.0;
        for d in 0..3 {
            w *= if o[d] == 1 { t[d] } else { 1.0 - t[d] };
        }
        let idx = grid.index(c[0] + o[0], c[1] + o[1], c[2] + o[2]);
        if mask[idx] != NodeKind::Particle && w > 0.0 {
            out.push((idx, w));
            total += w;
        }
    }
    if total > 1e-3 {
        for e in &mut out {
            e.1 /= total;
        }
        return Ok(out);
    }
    // fallback: nearest non-particle node within a small neighbourhood
    let h = grid.spacing();
    let base = [c[0] as i64, c[1] as i64, c[2] as i64];
    let mut best: Option<(f64, usize)> = None;
    for r in 0..4i64 {
        for dk in -r..=r + 1 {
            for dj in -r..=r + 1 {
                for di in -r..=r + 1 {
                    let ijk = [base[0] + di, base[1] + dj, base[2] + dk];
                    if (0..3).any(|d| ijk[d] < 0 || ijk[d] >= grid.n[d] as i64) {
                        continue;
                    }
                    let idx = grid.index(ijk[0] as usize, ijk[1] as usize, ijk[2] as usize);
                    if mask[idx] == NodeKind::Particle {
                        continue;
                    }
                    let d2 = (grid.position(idx) - x).component_div(&Vec3::from(h)).norm_squared();
                    if best.map_or(true, |(b, bi)| d2 < b || (d2 == b && idx < bi)) {
                        best = Some((d2, idx));
                    }
                }
            }
        }
        if let Some((_, idx)) = best {
            return Ok(vec![(idx, 1.0)]);
        }
    }
    Err(Error::Resolution(format!(
        "no fluid node near surface point {:?}",
        x.as_slice()
    )))
}

impl SurfaceOperator {
    /// Assembles the operator for a list of (transformed) surface rules.
    pub fn assemble(grid: &Grid, mask: &[NodeKind], rules: &[SurfaceQuadrature]) -> Result<Self> {
        let mut entries: HashMap<(usize, usize), Mat3> = HashMap::new();
        for rule in rules {
            for ((x, nu), w) in rule.nodes.iter().zip(&rule.normals).zip(&rule.weights) {
                let st = stencil(grid, mask, x)?;
                let nn = nu * nu.transpose() * *w;
                for &(a, sa) in &st {
                    for &(b, sb) in &st {
                        *entries.entry((a, b)).or_insert_with(Mat3::zeros) += nn * (sa * sb);
                    }
                }
            }
        }
        let mut keys: Vec<(usize, usize)> = entries.keys().copied().collect();
        keys.sort_unstable();
        let mut op = SurfaceOperator::default();
        op.row_ptr.push(0);
        let mut current = usize::MAX;
        for key in keys {
            if key.0 != current {
                if current != usize::MAX {
                    op.row_ptr.push(op.cols.len());
                }
                current = key.0;
                op.rows.push(key.0);
            }
            op.cols.push(key.1);
            op.blocks.push(entries[&key]);
        }
        if current != usize::MAX {
            op.row_ptr.push(op.cols.len());
        }
        Ok(op)
    }

    pub fn nnz(&self) -> usize {
        self.blocks.len()
    }

    /// `uᵀ S v`.
    pub fn bilinear(&self, u: &[Vec3], v: &[Vec3]) -> f64 {
        let mut s = 0.0;
        for (r, &row) in self.rows.iter().enumerate() {
            let mut acc = Vec3::zeros();
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.blocks[k] * v[self.cols[k]];
            }
            s += u[row].dot(&acc);
        }
        s
    }

    /// Adds `scale · S u` to `out`.
    pub fn apply_add(&self, u: &[Vec3], scale: f64, out: &mut [Vec3]) {
        for (r, &row) in self.rows.iter().enumerate() {
            let mut acc = Vec3::zeros();
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.blocks[k] * u[self.cols[k]];
            }
            out[row] += acc * scale;
        }
    }

    /// Diagonal block of each node, for preconditioning.
    pub fn diagonal_add(&self, scale: f64, out: &mut [f64]) {
        for (r, &row) in self.rows.iter().enumerate() {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                if self.cols[k] == row {
                    out[row] += scale * self.blocks[k].trace() / 3.0;
                }
            }
        }
    }
}
