//! Prolate spheroids, their surface and volume quadratures, and the anchoring
//! tensor `∫_{∂P} ν⊗ν dσ`.
//!
//! Convention: `a` is the polar (symmetry-axis, long) semi-axis and `b` the
//! equatorial one. In its local frame a spheroid is `x²/b² + y²/b² + z²/a² ≤ 1`;
//! the rotation maps the local `ẑ` onto the particle axis.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Unit, UnitQuaternion, Vector3};
use rand::Rng;

use crate::error::{Error, Result};
use crate::quadrature::gauss_legendre;

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Default polar node count of surface quadratures.
pub const DEFAULT_N_POLAR: usize = 64;
/// Default azimuthal node count of surface quadratures.
pub const DEFAULT_N_AZIMUTHAL: usize = 128;

const ROTATION_TOL: f64 = 1e-12;

/// A proper rotation of R³.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rotation(Mat3);

impl Default for Rotation {
    fn default() -> Self {
        Self::identity()
    }
}

impl Rotation {
    pub fn identity() -> Self {
        Rotation(Mat3::identity())
    }

    /// Wraps a matrix after checking `R Rᵀ = I` and `det R = 1` componentwise
    /// within `1e-12`.
    pub fn from_matrix(m: Mat3) -> Result<Self> {
        let defect = m * m.transpose() - Mat3::identity();
        if defect.iter().any(|v| v.abs() > ROTATION_TOL) {
            return Err(Error::Geometry(format!(
                "matrix is not orthogonal (max |RRᵀ - I| = {:.3e})",
                defect.amax()
            )));
        }
        let det = m.determinant();
        if (det - 1.0).abs() > ROTATION_TOL {
            return Err(Error::Geometry(format!("rotation determinant {det} != 1")));
        }
        Ok(Rotation(m))
    }

    pub fn from_row_major(v: &[f64; 9]) -> Result<Self> {
        Self::from_matrix(Mat3::from_row_slice(v))
    }

    /// Right-handed rotation by `angle` about `axis` (need not be normalized).
    pub fn from_axis_angle(axis: &Vec3, angle: f64) -> Self {
        let axis = Unit::new_normalize(*axis);
        Rotation(*UnitQuaternion::from_axis_angle(&axis, angle).to_rotation_matrix().matrix())
    }

    /// Draws a rotation uniformly distributed on SO(3) (Shoemake's method).
    pub fn uniform<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let u1: f64 = rng.gen();
        let u2: f64 = rng.gen();
        let u3: f64 = rng.gen();
        let (s1, s2) = ((1.0 - u1).sqrt(), u1.sqrt());
        let (t2, t3) = (2.0 * PI * u2, 2.0 * PI * u3);
        let q = nalgebra::Quaternion::new(s2 * t3.cos(), s1 * t2.sin(), s1 * t2.cos(), s2 * t3.sin());
        Rotation(*UnitQuaternion::from_quaternion(q).to_rotation_matrix().matrix())
    }

    pub fn matrix(&self) -> &Mat3 {
        &self.0
    }

    pub fn apply(&self, v: &Vec3) -> Vec3 {
        self.0 * v
    }

    pub fn inverse(&self) -> Self {
        Rotation(self.0.transpose())
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &Rotation) -> Self {
        Rotation(self.0 * other.0)
    }

    /// Image of the reference axis `ẑ`.
    pub fn axis(&self) -> Vec3 {
        self.0.column(2).into_owned()
    }

    pub fn to_row_major(&self) -> [f64; 9] {
        let m = &self.0;
        [
            m[(0, 0)], m[(0, 1)], m[(0, 2)],
            m[(1, 0)], m[(1, 1)], m[(1, 2)],
            m[(2, 0)], m[(2, 1)], m[(2, 2)],
        ]
    }

    /// Conjugates a matrix: `R M Rᵀ`.
    pub fn conjugate(&self, m: &Mat3) -> Mat3 {
        self.0 * m * self.0.transpose()
    }
}

/// A prolate (or spherical) spheroid placed in space.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Spheroid {
    center: Vec3,
    a: f64,
    b: f64,
    rotation: Rotation,
}

impl Spheroid {
    pub fn new(center: Vec3, a: f64, b: f64, rotation: Rotation) -> Result<Self> {
        if !(b > 0.0) || !b.is_finite() || !a.is_finite() {
            return Err(Error::Geometry(format!("equatorial semi-axis must be positive, got b={b}")));
        }
        if a < b {
            return Err(Error::Geometry(format!(
                "spheroid must be prolate or spherical (a >= b), got a={a}, b={b}"
            )));
        }
        Ok(Spheroid {
            center,
            a,
            b,
            rotation,
        })
    }

    /// Spheroid centered at the origin with identity rotation.
    pub fn reference(a: f64, b: f64) -> Result<Self> {
        Self::new(Vec3::zeros(), a, b, Rotation::identity())
    }

    pub fn sphere(center: Vec3, radius: f64) -> Result<Self> {
        Self::new(center, radius, radius, Rotation::identity())
    }

    pub fn center(&self) -> Vec3 {
        self.center
    }
    /// Polar semi-axis.
    pub fn a(&self) -> f64 {
        self.a
    }
    /// Equatorial semi-axis.
    pub fn b(&self) -> f64 {
        self.b
    }
    pub fn rotation(&self) -> &Rotation {
        &self.rotation
    }

    pub fn is_sphere(&self) -> bool {
        self.a == self.b
    }

    pub fn volume(&self) -> f64 {
        4.0 * PI * self.a * self.b * self.b / 3.0
    }

    /// Closed-form surface area.
    pub fn area(&self) -> f64 {
        let (a, b) = (self.a, self.b);
        let e2 = 1.0 - (b * b) / (a * a);
        if e2 < 1e-12 {
            // series in e² avoids 0/0
            return 4.0 * PI * b * b * (1.0 + e2 / 3.0 * (a / b));
        }
        let e = e2.sqrt();
        2.0 * PI * b * b * (1.0 + a / (b * e) * e.asin())
    }

    /// Point expressed in the particle frame.
    pub fn to_local(&self, x: &Vec3) -> Vec3 {
        self.rotation.matrix().transpose() * (x - self.center)
    }

    pub fn to_world(&self, y: &Vec3) -> Vec3 {
        self.center + self.rotation.apply(y)
    }

    /// `x'²/b² + y'²/b² + z'²/a²` in the particle frame; `≤ 1` inside.
    pub fn implicit(&self, x: &Vec3) -> f64 {
        let y = self.to_local(x);
        (y.x * y.x + y.y * y.y) / (self.b * self.b) + y.z * y.z / (self.a * self.a)
    }

    pub fn contains(&self, x: &Vec3) -> bool {
        self.implicit(x) <= 1.0
    }

    /// Distance from the center to the surface along the local unit direction `dir`.
    pub fn local_radius(&self, dir: &Vec3) -> f64 {
        let s = (dir.x * dir.x + dir.y * dir.y) / (self.b * self.b) + dir.z * dir.z / (self.a * self.a);
        1.0 / s.sqrt()
    }

    /// Homothetic copy about the center.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.center, self.a * factor, self.b * factor, self.rotation)
    }

    /// Copy rotated by `q` about its own center.
    pub fn rotated(&self, q: &Rotation) -> Self {
        Spheroid {
            rotation: q.compose(&self.rotation),
            ..*self
        }
    }

    pub fn with_center(&self, center: Vec3) -> Self {
        Spheroid { center, ..*self }
    }

    pub fn with_rotation(&self, rotation: Rotation) -> Self {
        Spheroid { rotation, ..*self }
    }
}

/// Nodes, outward unit normals and area weights on a spheroid surface.
#[derive(Clone, Debug)]
pub struct SurfaceQuadrature {
    pub nodes: Vec<Vec3>,
    pub normals: Vec<Vec3>,
    pub weights: Vec<f64>,
}

impl SurfaceQuadrature {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Image of the rule under `x ↦ center + scale·R x` (weights scale by `scale²`).
    pub fn transformed(&self, center: &Vec3, rotation: &Rotation, scale: f64) -> SurfaceQuadrature {
        let r = rotation.matrix();
        SurfaceQuadrature {
            nodes: self.nodes.iter().map(|y| center + scale * (r * y)).collect(),
            normals: self.normals.iter().map(|n| r * n).collect(),
            weights: self.weights.iter().map(|w| w * scale * scale).collect(),
        }
    }

    /// `Σ wᵢ f(xᵢ, νᵢ)`.
    pub fn integrate(&self, mut f: impl FnMut(&Vec3, &Vec3) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.normals)
            .zip(&self.weights)
            .map(|((x, n), w)| w * f(x, n))
            .sum()
    }
}

/// Product rule: Gauss–Legendre in the polar coordinate, trapezoid in azimuth.
///
/// The polar coordinate `u = cos θ` is reparametrized as `u = sin ψ / sin ψ_max`
/// with `sin ψ_max` the eccentricity. This turns the square-root factor of the
/// prolate area element into `a cos ψ`, so the rule stays spectrally accurate
/// for large aspect ratios (the branch point of the area element otherwise sits
/// just outside `u = ±1`).
pub fn make_surface_quadrature(s: &Spheroid, n_polar: usize, n_azimuthal: usize) -> Result<SurfaceQuadrature> {
    if n_polar < 4 || n_azimuthal < 4 {
        return Err(Error::Resolution(format!(
            "surface quadrature needs at least 4x4 nodes, got {n_polar}x{n_azimuthal}"
        )));
    }
    let (a, b) = (s.a, s.b);
    let c = (a * a - b * b).max(0.0).sqrt();
    let k = c / a;
    let (gx, gw) = gauss_legendre(n_polar);
    let dphi = 2.0 * PI / n_azimuthal as f64;

    let mut nodes = Vec::with_capacity(n_polar * n_azimuthal);
    let mut normals = Vec::with_capacity(n_polar * n_azimuthal);
    let mut weights = Vec::with_capacity(n_polar * n_azimuthal);
    let psi_max = k.asin();
    for (&t, &wt) in gx.iter().zip(&gw) {
        // u = cos θ, du/dt, and sqrt(a² − c²u²)
        let (u, du, root) = if k < 1e-8 {
            (t, 1.0, (a * a - c * c * t * t).sqrt())
        } else {
            let psi = t * psi_max;
            (psi.sin() / k, psi_max * psi.cos() / k, a * psi.cos())
        };
        let sin_t = (1.0 - u * u).max(0.0).sqrt();
        let w_polar = wt * du * b * root;
        for j in 0..n_azimuthal {
            let phi = j as f64 * dphi;
            let (sp, cp) = phi.sin_cos();
            let y = Vec3::new(b * sin_t * cp, b * sin_t * sp, a * u);
            let g = Vec3::new(y.x / (b * b), y.y / (b * b), y.z / (a * a));
            nodes.push(s.to_world(&y));
            normals.push(s.rotation.apply(&g.normalize()));
            weights.push(w_polar * dphi);
        }
    }
    Ok(SurfaceQuadrature {
        nodes,
        normals,
        weights,
    })
}

/// `Σ wᵢ νᵢ⊗νᵢ`, the discrete anchoring tensor of `s`.
pub fn anchoring_tensor(s: &Spheroid, q: &SurfaceQuadrature) -> Result<Mat3> {
    if let Some(x) = q.nodes.iter().find(|x| (s.implicit(x) - 1.0).abs() > 1e-8) {
        return Err(Error::Geometry(format!(
            "quadrature node {:?} does not lie on the given spheroid",
            x.as_slice()
        )));
    }
    let mut t = Mat3::zeros();
    for (n, w) in q.normals.iter().zip(&q.weights) {
        t += *w * n * n.transpose();
    }
    // exact symmetry
    Ok(0.5 * (t + t.transpose()))
}

/// Axial and (double) transverse eigenvalues `(λ₁, λ₂)` of the anchoring tensor.
///
/// The tensor is diagonal in the particle frame, so no eigen-solver is needed:
/// `λ₁ = T_zz`, `λ₂ = (T_xx + T_yy)/2`.
pub fn anchoring_eigenvalues(s: &Spheroid) -> Result<(f64, f64)> {
    let local = Spheroid::reference(s.a, s.b)?;
    let q = make_surface_quadrature(&local, DEFAULT_N_POLAR, DEFAULT_N_AZIMUTHAL)?;
    let t = anchoring_tensor(&local, &q)?;
    Ok((t[(2, 2)], 0.5 * (t[(0, 0)] + t[(1, 1)])))
}

/// Volume rule on a spheroid: Gauss–Legendre in radius and polar cosine of the
/// stretched unit ball, uniform in azimuth.
#[derive(Clone, Debug)]
pub struct VolumeQuadrature {
    pub points: Vec<Vec3>,
    pub weights: Vec<f64>,
}

impl VolumeQuadrature {
    pub fn integrate(&self, mut f: impl FnMut(&Vec3) -> f64) -> f64 {
        self.points.iter().zip(&self.weights).map(|(x, w)| w * f(x)).sum()
    }
}

pub fn make_volume_quadrature(s: &Spheroid, n: usize) -> Result<VolumeQuadrature> {
    if n == 0 {
        return Err(Error::Resolution("volume quadrature needs at least one node per direction".into()));
    }
    let (rx, rw) = gauss_legendre(n);
    let (cx, cw) = gauss_legendre(n);
    let n_phi = n.max(1);
    let dphi = 2.0 * PI / n_phi as f64;
    let jac = s.a * s.b * s.b;
    let mut points = Vec::with_capacity(n * n * n_phi);
    let mut weights = Vec::with_capacity(n * n * n_phi);
    for (&r0, &wr0) in rx.iter().zip(&rw) {
        let r = 0.5 * (r0 + 1.0);
        let wr = 0.5 * wr0 * r * r;
        for (&u, &wu) in cx.iter().zip(&cw) {
            let st = (1.0 - u * u).sqrt();
            for k in 0..n_phi {
                let phi = (k as f64 + 0.5) * dphi;
                let y = Vec3::new(s.b * r * st * phi.cos(), s.b * r * st * phi.sin(), s.a * r * u);
                points.push(s.to_world(&y));
                weights.push(jac * wr * wu * dphi);
            }
        }
    }
    Ok(VolumeQuadrature { points, weights })
}
