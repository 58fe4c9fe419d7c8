//! Empirical coefficient fields `A^ε`, `M^ε`, their periodic closed forms, the
//! homogenized coupling density, and a reference Burylov–Raikher evaluator.

use serde::{Deserialize, Serialize};

use crate::ensemble::ParticleEnsemble;
use crate::error::{Error, Result};
use crate::geometry::{anchoring_tensor, make_surface_quadrature, Mat3, Rotation, Spheroid, Vec3, DEFAULT_N_AZIMUTHAL, DEFAULT_N_POLAR};
use crate::grid::Grid;

/// Symmetric matrix per grid node.
#[derive(Clone, Debug, PartialEq)]
pub struct MatrixField {
    pub grid: Grid,
    pub values: Vec<Mat3>,
}

/// Vector per grid node.
#[derive(Clone, Debug, PartialEq)]
pub struct EffectiveMagnetization {
    pub grid: Grid,
    pub values: Vec<Vec3>,
}

/// Coefficients of the homogenized functional.
#[derive(Clone, Debug, PartialEq)]
pub struct EffectiveCoefficients {
    pub a: MatrixField,
    pub m: EffectiveMagnetization,
}

impl MatrixField {
    pub fn zeros(grid: Grid) -> Self {
        MatrixField {
            grid,
            values: vec![Mat3::zeros(); grid.len()],
        }
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.values.iter().all(|m| (m - m.transpose()).amax() <= tol)
    }

    /// Largest entrywise deviation over the selected nodes.
    pub fn max_deviation(&self, other: &MatrixField, nodes: &[usize]) -> Result<f64> {
        check_grids(&self.grid, &other.grid)?;
        Ok(nodes
            .iter()
            .map(|&i| (self.values[i] - other.values[i]).amax())
            .fold(0.0, f64::max))
    }
}

impl EffectiveMagnetization {
    pub fn zeros(grid: Grid) -> Self {
        EffectiveMagnetization {
            grid,
            values: vec![Vec3::zeros(); grid.len()],
        }
    }

    pub fn max_deviation(&self, other: &EffectiveMagnetization, nodes: &[usize]) -> Result<f64> {
        check_grids(&self.grid, &other.grid)?;
        Ok(nodes
            .iter()
            .map(|&i| (self.values[i] - other.values[i]).amax())
            .fold(0.0, f64::max))
    }
}

pub(crate) fn check_grids(a: &Grid, b: &Grid) -> Result<()> {
    if a != b {
        return Err(Error::GridMismatch(format!("{:?} vs {:?}", a.n, b.n)));
    }
    Ok(())
}

/// Nodes at distance at least `margin` from the domain boundary.
pub fn interior_nodes(grid: &Grid, margin: f64) -> Vec<usize> {
    (0..grid.len())
        .filter(|&i| grid.domain.distance_to_boundary(&grid.position(i)) >= margin)
        .collect()
}

/// Anchoring tensor of the reference particle in its own frame.
pub fn reference_tensor(reference: &Spheroid) -> Result<Mat3> {
    let local = Spheroid::reference(reference.a(), reference.b())?;
    let q = make_surface_quadrature(&local, DEFAULT_N_POLAR, DEFAULT_N_AZIMUTHAL)?;
    anchoring_tensor(&local, &q)
}

fn check_mollifier(e: &ParticleEnsemble, eta: f64, grid: &Grid) -> Result<()> {
    if eta < grid.max_spacing() {
        return Err(Error::Resolution(format!(
            "mollifier width {eta:.3e} below grid spacing {:.3e}",
            grid.max_spacing()
        )));
    }
    if eta < 2.0 * e.epsilon * (1.0 - 1e-12) {
        return Err(Error::Config(format!(
            "mollifier width {eta:.3e} must be at least 2ε = {:.3e}",
            2.0 * e.epsilon
        )));
    }
    Ok(())
}

/// Index range of nodes `x` with `x − η/2 <= c < x + η/2` along axis `d`.
fn box_range(grid: &Grid, d: usize, c: f64, eta: f64) -> std::ops::Range<usize> {
    let h = grid.spacing()[d];
    let lo = grid.domain.lo[d];
    let n = grid.n[d] as i64;
    // x ∈ (c − η/2, c + η/2]
    let first = (((c - 0.5 * eta - lo) / h).floor() as i64 - 1).max(0);
    let last = (((c + 0.5 * eta - lo) / h).ceil() as i64 + 1).min(n - 1);
    let mut start = first;
    while start <= last {
        let x = lo + start as f64 * h;
        if x - 0.5 * eta <= c && c < x + 0.5 * eta {
            break;
        }
        start += 1;
    }
    let mut end = start;
    while end <= last {
        let x = lo + end as f64 * h;
        if !(x - 0.5 * eta <= c && c < x + 0.5 * eta) {
            break;
        }
        end += 1;
    }
    (start.max(0) as usize)..(end.max(start) as usize)
}

/// Scatter `weight·v_i` of every particle into all nodes whose mollifier box contains it.
fn mollify<T: Copy + std::ops::AddAssign + std::ops::Mul<f64, Output = T>>(
    e: &ParticleEnsemble,
    eta: f64,
    grid: &Grid,
    zero: T,
    per_particle: impl Fn(&Rotation) -> T,
) -> Vec<T> {
    let mut out = vec![zero; grid.len()];
    let scale = e.epsilon.powi(3) / eta.powi(3);
    for p in &e.particles {
        let v = per_particle(&p.rotation) * scale;
        let ri = box_range(grid, 0, p.center.x, eta);
        let rj = box_range(grid, 1, p.center.y, eta);
        let rk = box_range(grid, 2, p.center.z, eta);
        for k in rk.clone() {
            for j in rj.clone() {
                for i in ri.clone() {
                    out[grid.index(i, j, k)] += v;
                }
            }
        }
    }
    out
}

/// Box-mollified `ε³ g Σᵢ δ(x − xᵢ) Rᵢ T Rᵢᵀ`.
pub fn assemble_a_eps(e: &ParticleEnsemble, eta: f64, grid: &Grid) -> Result<MatrixField> {
    check_mollifier(e, eta, grid)?;
    let t = reference_tensor(&e.reference)? * e.params.g;
    let mut values = mollify(e, eta, grid, Mat3::zeros(), |r| r.conjugate(&t));
    for m in &mut values {
        *m = 0.5 * (*m + m.transpose());
    }
    Ok(MatrixField { grid: *grid, values })
}

/// Box-mollified `ε³ m Vol²(P) Σᵢ δ(x − xᵢ) Rᵢ ẑ`.
pub fn assemble_m_eps(e: &ParticleEnsemble, eta: f64, grid: &Grid) -> Result<EffectiveMagnetization> {
    check_mollifier(e, eta, grid)?;
    let amp = e.params.m * e.reference.volume().powi(2);
    let values = mollify(e, eta, grid, Vec3::zeros(), |r| r.axis() * amp);
    Ok(EffectiveMagnetization { grid: *grid, values })
}

/// `A(x) = g R(x)(λ₁ ẑ⊗ẑ + λ₂(I − ẑ⊗ẑ))R(x)ᵀ`.
pub fn closed_form_a(rotation_field: impl Fn(&Vec3) -> Rotation, g: f64, lambda1: f64, lambda2: f64, grid: &Grid) -> MatrixField {
    let d = Mat3::from_diagonal(&Vec3::new(lambda2, lambda2, lambda1)) * g;
    let values = grid.sample(|x| {
        let m = rotation_field(x).conjugate(&d);
        0.5 * (m + m.transpose())
    });
    MatrixField { grid: *grid, values }
}

/// `M(x) = amplitude · R(x) ẑ`.
pub fn closed_form_m(rotation_field: impl Fn(&Vec3) -> Rotation, amplitude: f64, grid: &Grid) -> EffectiveMagnetization {
    EffectiveMagnetization {
        grid: *grid,
        values: grid.sample(|x| rotation_field(x).axis() * amplitude),
    }
}

/// `Λ = g(λ₁ − λ₂)/m²`.
pub fn lambda_coefficient(g: f64, m: f64, lambda1: f64, lambda2: f64) -> Result<f64> {
    if m == 0.0 {
        return Err(Error::Domain("degenerate magnetization amplitude m = 0".into()));
    }
    Ok(g * (lambda1 - lambda2) / (m * m))
}

/// `Λ(M,u)² + (gλ₂/m²)|u|² − 2(h,M)`.
pub fn coupling_density(u: &Vec3, mag: &Vec3, h: &Vec3, g: f64, m: f64, lambda1: f64, lambda2: f64) -> Result<f64> {
    let big_lambda = lambda_coefficient(g, m, lambda1, lambda2)?;
    let mu = mag.dot(u);
    Ok(big_lambda * mu * mu + g * lambda2 / (m * m) * u.norm_squared() - 2.0 * h.dot(mag))
}

/// Coefficients of the Burylov–Raikher density.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BurylovCoeffs {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub chi_a: f64,
    pub m_s: f64,
    pub f: f64,
    /// `k_B T / ν`.
    pub kt_over_nu: f64,
    pub a_anch: f64,
    pub w_s: f64,
    pub d_p: f64,
}

/// Second-order derivative `∂_d f` at every node: centered inside,
/// one-sided three-point at the boundary.
fn partial(grid: &Grid, f: &[f64], d: usize) -> Vec<f64> {
    let h = grid.spacing()[d];
    let s = grid.stride(d);
    let n = grid.n[d];
    (0..grid.len())
        .map(|idx| {
            let c = grid.coords(idx)[d];
            if n == 2 {
                let base = idx - c * s;
                return (f[base + s] - f[base]) / h;
            }
            if c == 0 {
                (-3.0 * f[idx] + 4.0 * f[idx + s] - f[idx + 2 * s]) / (2.0 * h)
            } else if c == n - 1 {
                (3.0 * f[idx] - 4.0 * f[idx - s] + f[idx - 2 * s]) / (2.0 * h)
            } else {
                (f[idx + s] - f[idx - s]) / (2.0 * h)
            }
        })
        .collect()
}

/// Nodewise Burylov–Raikher free-energy density for a unit director field.
pub fn burylov_density(grid: &Grid, n: &[Vec3], m_unit: &Vec3, field: &Vec3, c: &BurylovCoeffs) -> Result<Vec<f64>> {
    if n.len() != grid.len() {
        return Err(Error::GridMismatch(format!("{} values for {} nodes", n.len(), grid.len())));
    }
    if !(c.f > 0.0) {
        return Err(Error::Domain(format!("particle fraction f must be positive, got {}", c.f)));
    }
    if let Some(i) = n.iter().position(|v| (v.norm() - 1.0).abs() > 1e-6) {
        return Err(Error::Domain(format!("director is not unit at node {i}")));
    }
    // jac[a][d] = ∂_d n_a
    let comps: Vec<Vec<f64>> = (0..3).map(|a| n.iter().map(|v| v[a]).collect()).collect();
    let jac: Vec<Vec<Vec<f64>>> = comps
        .iter()
        .map(|fa| (0..3).map(|d| partial(grid, fa, d)).collect())
        .collect();
    let entropy = c.f * c.kt_over_nu * c.f.ln();
    let anch = c.a_anch * c.w_s * c.f / c.d_p;
    Ok((0..grid.len())
        .map(|i| {
            let dj = |a: usize, d: usize| jac[a][d][i];
            let div = dj(0, 0) + dj(1, 1) + dj(2, 2);
            let curl = Vec3::new(dj(2, 1) - dj(1, 2), dj(0, 2) - dj(2, 0), dj(1, 0) - dj(0, 1));
            let ni = n[i];
            let twist = curl.dot(&ni);
            let bend = ni.cross(&curl).norm_squared();
            let elastic = 0.5 * (c.k1 * div * div + c.k2 * twist * twist + c.k3 * bend);
            let nh = ni.dot(field);
            let nm = ni.dot(m_unit);
            elastic - 0.5 * c.chi_a * nh * nh - c.m_s * c.f * m_unit.dot(field) + entropy + anch * nm * nm
        })
        .collect())
}
