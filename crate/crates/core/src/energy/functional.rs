use serde::Serialize;

use crate::effective::{check_grids, EffectiveMagnetization, MatrixField};
use crate::ensemble::ParticleEnsemble;
use crate::error::{Error, Result};
use crate::geometry::{make_surface_quadrature, Mat3, Spheroid, Vec3};
use crate::grid::Grid;
use crate::magnetics::{pair_totals, zeeman_energy_with, MomentConvention};

use super::field::{NodeKind, VectorField};
use super::surface::SurfaceOperator;

/// Energy split into its terms. For the homogenized functional `surface`
/// holds the coupling `∫(Au,u)` and `zeeman` holds `−2∫(h,M)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct EnergyBreakdown {
    pub bulk_gradient: f64,
    pub bulk_potential: f64,
    pub surface: f64,
    pub magnetic_pair: f64,
    pub zeeman: f64,
    pub total: f64,
}

impl EnergyBreakdown {
    fn finish(mut self) -> Self {
        self.total = self.bulk_gradient + self.bulk_potential + self.surface + self.magnetic_pair + self.zeeman;
        self
    }

    /// The u-dependent part.
    pub fn variable(&self) -> f64 {
        self.bulk_gradient + self.bulk_potential + self.surface
    }
}

/// Options of the microscale functional.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MicroOptions {
    pub surface_n_polar: usize,
    pub surface_n_azimuthal: usize,
    /// Volume rule order for the pair energies; `0` skips the pair term.
    pub pair_volume_order: usize,
    pub convention: MomentConvention,
}

impl Default for MicroOptions {
    fn default() -> Self {
        MicroOptions {
            surface_n_polar: 16,
            surface_n_azimuthal: 32,
            pair_volume_order: 4,
            convention: MomentConvention::VolumeWeighted,
        }
    }
}

/// A discrete energy on a fixed grid and mask: either the microscale
/// functional with particles, or the homogenized one.
#[derive(Clone, Debug)]
pub struct Functional {
    grid: Grid,
    mask: Vec<NodeKind>,
    free: Vec<bool>,
    node_w: Vec<f64>,
    /// Edge weight divided by `h_d²`, zero for inactive edges.
    edge_w: [Vec<f64>; 3],
    /// Node weight times `A(x)`.
    coupling: Option<Vec<Mat3>>,
    surface: Option<(f64, SurfaceOperator)>,
    magnetic_pair: f64,
    zeeman: f64,
}

impl Functional {
    fn base(field: &VectorField) -> Self {
        let grid = field.grid;
        let mask = field.mask.clone();
        let solid = |i: usize| mask[i] == NodeKind::Particle;
        let mut node_w = grid.node_weights();
        for (i, w) in node_w.iter_mut().enumerate() {
            if solid(i) {
                *w = 0.0;
            }
        }
        let h = grid.spacing();
        let edge_w = [0, 1, 2].map(|d| {
            (0..grid.len())
                .map(|i| {
                    let c = grid.coords(i);
                    if c[d] + 1 >= grid.n[d] || solid(i) || solid(i + grid.stride(d)) {
                        0.0
                    } else {
                        grid.edge_weight(i, d) / (h[d] * h[d])
                    }
                })
                .collect()
        });
        Functional {
            grid,
            free: mask.iter().map(|k| *k == NodeKind::Fluid).collect(),
            mask,
            node_w,
            edge_w,
            coupling: None,
            surface: None,
            magnetic_pair: 0.0,
            zeeman: 0.0,
        }
    }

    /// Ginzburg–Landau energy only (no particles, no coupling).
    pub fn ginzburg_landau(field: &VectorField) -> Self {
        Self::base(field)
    }

    /// Microscale functional: bulk terms outside the particles, anchoring on
    /// their surfaces, and the u-independent magnetic constants.
    pub fn micro(field: &VectorField, e: &ParticleEnsemble, opts: &MicroOptions) -> Result<Self> {
        if field.grid.domain != e.domain {
            return Err(Error::GridMismatch("grid domain differs from the ensemble domain".into()));
        }
        let h = field.grid.max_spacing();
        let thickness = e.scale() * e.reference.b();
        if !e.is_empty() && thickness < h {
            return Err(Error::Resolution(format!(
                "particle semi-axis {thickness:.3e} is below the grid spacing {h:.3e}"
            )));
        }
        let mut f = Self::base(field);
        let local = Spheroid::reference(e.reference.a(), e.reference.b())?;
        let q = make_surface_quadrature(&local, opts.surface_n_polar, opts.surface_n_azimuthal)?;
        let rules: Vec<_> = e
            .particles
            .iter()
            .map(|p| q.transformed(&p.center, &p.rotation, e.scale()))
            .collect();
        let op = SurfaceOperator::assemble(&field.grid, &field.mask, &rules)?;
        f.surface = Some((e.params.g_eps(e.epsilon), op));
        if opts.pair_volume_order > 0 && e.len() > 1 {
            f.magnetic_pair = -pair_totals(e, opts.convention, opts.pair_volume_order)?.signed;
        }
        f.zeeman = -2.0 * zeeman_energy_with(e, &e.params, opts.convention);
        Ok(f)
    }

    /// Homogenized functional `∫|∇u|² + (1−|u|²)² + (Au,u) − 2(h,M)` on the full grid.
    pub fn homogenized(field: &VectorField, a: &MatrixField, m: &EffectiveMagnetization, h: &Vec3) -> Result<Self> {
        check_grids(&field.grid, &a.grid)?;
        check_grids(&field.grid, &m.grid)?;
        if field.mask.iter().any(|k| *k == NodeKind::Particle) {
            return Err(Error::Config("the homogenized functional acts on fields without particles".into()));
        }
        let mut f = Self::base(field);
        f.coupling = Some(a.values.iter().zip(&f.node_w).map(|(m, w)| m * *w).collect());
        f.zeeman = -2.0 * m.values.iter().zip(&f.node_w).map(|(v, w)| w * h.dot(v)).sum::<f64>();
        Ok(f)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn node_weights(&self) -> &[f64] {
        &self.node_w
    }

    pub fn is_free(&self, idx: usize) -> bool {
        self.free[idx]
    }

    pub fn check_field(&self, f: &VectorField) -> Result<()> {
        check_grids(&self.grid, &f.grid)?;
        if f.mask != self.mask {
            return Err(Error::GridMismatch("field mask differs from the functional's mask".into()));
        }
        Ok(())
    }

    pub fn surface_operator(&self) -> Option<&SurfaceOperator> {
        self.surface.as_ref().map(|(_, s)| s)
    }

    pub fn energy(&self, u: &[Vec3]) -> EnergyBreakdown {
        self.evaluate(u, None)
    }

    /// Derivative of the energy with respect to the nodal values (zero at
    /// non-free nodes).
    pub fn gradient(&self, u: &[Vec3]) -> Vec<Vec3> {
        let mut g = vec![Vec3::zeros(); u.len()];
        self.evaluate(u, Some(&mut g));
        g
    }

    pub fn energy_and_gradient(&self, u: &[Vec3], grad: &mut [Vec3]) -> EnergyBreakdown {
        self.evaluate(u, Some(grad))
    }

    fn evaluate(&self, u: &[Vec3], mut grad: Option<&mut [Vec3]>) -> EnergyBreakdown {
        let n = self.grid.len();
        let mut e = EnergyBreakdown::default();
        if let Some(g) = grad.as_deref_mut() {
            g.iter_mut().for_each(|v| *v = Vec3::zeros());
        }
        for d in 0..3 {
            let s = self.grid.stride(d);
            let w = &self.edge_w[d];
            for i in 0..n {
                if w[i] == 0.0 {
                    continue;
                }
                let diff = u[i + s] - u[i];
                e.bulk_gradient += w[i] * diff.norm_squared();
                if let Some(g) = grad.as_deref_mut() {
                    let gd = diff * (2.0 * w[i]);
                    g[i] -= gd;
                    g[i + s] += gd;
                }
            }
        }
        for i in 0..n {
            let w = self.node_w[i];
            if w == 0.0 {
                continue;
            }
            let q = 1.0 - u[i].norm_squared();
            e.bulk_potential += w * q * q;
            if let Some(g) = grad.as_deref_mut() {
                g[i] -= u[i] * (4.0 * w * q);
            }
        }
        if let Some(a) = &self.coupling {
            for i in 0..n {
                let au = a[i] * u[i];
                e.surface += u[i].dot(&au);
                if let Some(g) = grad.as_deref_mut() {
                    g[i] += au * 2.0;
                }
            }
        }
        if let Some((coef, op)) = &self.surface {
            e.surface += coef * op.bilinear(u, u);
            if let Some(g) = grad.as_deref_mut() {
                op.apply_add(u, 2.0 * coef, g);
            }
        }
        if let Some(g) = grad {
            for i in 0..n {
                if !self.free[i] {
                    g[i] = Vec3::zeros();
                }
            }
        }
        e.magnetic_pair = self.magnetic_pair;
        e.zeeman = self.zeeman;
        e.finish()
    }

    /// Coefficients `[c₀, …, c₄]` of the u-dependent energy along `u + t d`.
    pub fn line_poly(&self, u: &[Vec3], d: &[Vec3]) -> [f64; 5] {
        let n = self.grid.len();
        let mut c = [0.0; 5];
        for dir in 0..3 {
            let s = self.grid.stride(dir);
            let w = &self.edge_w[dir];
            for i in 0..n {
                if w[i] == 0.0 {
                    continue;
                }
                let du = u[i + s] - u[i];
                let dd = d[i + s] - d[i];
                c[0] += w[i] * du.norm_squared();
                c[1] += 2.0 * w[i] * du.dot(&dd);
                c[2] += w[i] * dd.norm_squared();
            }
        }
        for i in 0..n {
            let w = self.node_w[i];
            if w == 0.0 {
                continue;
            }
            let a = u[i].norm_squared();
            let b = u[i].dot(&d[i]);
            let cc = d[i].norm_squared();
            let q = 1.0 - a;
            c[0] += w * q * q;
            c[1] += w * (-4.0 * q * b);
            c[2] += w * (4.0 * b * b - 2.0 * q * cc);
            c[3] += w * (4.0 * b * cc);
            c[4] += w * cc * cc;
        }
        if let Some(a) = &self.coupling {
            for i in 0..n {
                let au = a[i] * u[i];
                c[0] += u[i].dot(&au);
                c[1] += 2.0 * d[i].dot(&au);
                c[2] += d[i].dot(&(a[i] * d[i]));
            }
        }
        if let Some((coef, op)) = &self.surface {
            c[0] += coef * op.bilinear(u, u);
            c[1] += 2.0 * coef * op.bilinear(d, u);
            c[2] += coef * op.bilinear(d, d);
        }
        c
    }

    /// Positive diagonal scaling used to precondition the descent.
    pub fn preconditioner(&self) -> Vec<f64> {
        let n = self.grid.len();
        let mut p: Vec<f64> = self.node_w.iter().map(|w| 2.0 * w).collect();
        for d in 0..3 {
            let s = self.grid.stride(d);
            for i in 0..n {
                let w = self.edge_w[d][i];
                if w > 0.0 {
                    p[i] += 2.0 * w;
                    p[i + s] += 2.0 * w;
                }
            }
        }
        if let Some(a) = &self.coupling {
            for i in 0..n {
                p[i] += 2.0 * (a[i].trace() / 3.0).max(0.0);
            }
        }
        if let Some((coef, op)) = &self.surface {
            let mut extra = vec![0.0; n];
            op.diagonal_add(2.0 * coef.abs(), &mut extra);
            for i in 0..n {
                p[i] += extra[i];
            }
        }
        for (i, v) in p.iter_mut().enumerate() {
            if !self.free[i] || *v <= 0.0 {
                *v = 1.0;
            }
        }
        p
    }
}
