use std::f64::consts::PI;

use rand::Rng;

use crate::ensemble::ParticleEnsemble;
use crate::error::{Error, Result};
use crate::geometry::{make_surface_quadrature, Mat3, Spheroid, Vec3, DEFAULT_N_AZIMUTHAL, DEFAULT_N_POLAR};
use crate::quadrature::{gauss_legendre, gauss_legendre_on};

/// A smooth vector field with an analytic Jacobian (`J[(a, d)] = ∂_d u_a`).
pub trait SmoothField {
    fn value(&self, x: &Vec3) -> Vec3;
    fn jacobian(&self, x: &Vec3) -> Mat3;
}

/// Vector polynomial of total degree at most 2 about a fixed origin.
#[derive(Clone, Debug, PartialEq)]
pub struct PolynomialField {
    pub origin: Vec3,
    pub constant: Vec3,
    pub linear: Mat3,
    /// `quadratic[a]` is the symmetric Hessian of component `a`.
    pub quadratic: [Mat3; 3],
}

impl PolynomialField {
    pub fn constant(c: Vec3) -> Self {
        PolynomialField {
            origin: Vec3::zeros(),
            constant: c,
            linear: Mat3::zeros(),
            quadratic: [Mat3::zeros(); 3],
        }
    }

    /// Coefficients uniform in `[−scale, scale]`, derivatives scaled by `1/length`.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, origin: Vec3, scale: f64, length: f64) -> Self {
        let mut draw = || rng.gen_range(-scale..=scale);
        let constant = Vec3::new(draw(), draw(), draw());
        let linear = Mat3::from_fn(|_, _| draw()) / length;
        let quadratic = [0, 1, 2].map(|_| {
            let m = Mat3::from_fn(|_, _| draw()) / (length * length);
            0.5 * (m + m.transpose())
        });
        PolynomialField {
            origin,
            constant,
            linear,
            quadratic,
        }
    }
}

impl SmoothField for PolynomialField {
    fn value(&self, x: &Vec3) -> Vec3 {
        let y = x - self.origin;
        let mut v = self.constant + self.linear * y;
        for a in 0..3 {
            v[a] += 0.5 * y.dot(&(self.quadratic[a] * y));
        }
        v
    }

    fn jacobian(&self, x: &Vec3) -> Mat3 {
        let y = x - self.origin;
        let mut j = self.linear;
        for a in 0..3 {
            let row = self.quadratic[a] * y;
            for d in 0..3 {
                j[(a, d)] += row[d];
            }
        }
        j
    }
}

/// Both sides of the surface trace inequality.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Lemma1Outcome {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
    pub shell_gradient: f64,
    pub shell_l2: f64,
}

/// `∫_{∂P}|u|² ≤ 3B²(1+λ)/A ∫|∇u|² + (1+1/λ) 24A²/(7Â³) ∫|u|²` over the
/// homothetic shell `P̂ ∖ P`, with `A` the equatorial and `B` the polar
/// semi-axis of `s`, and `Â = hat_ratio · A`.
pub fn lemma1_check(u: &dyn SmoothField, s: &Spheroid, lambda: f64, hat_ratio: f64) -> Result<Lemma1Outcome> {
    if !(hat_ratio > 2.0) {
        return Err(Error::Config(format!("homothety ratio must exceed 2, got {hat_ratio}")));
    }
    if !(lambda > 0.0) {
        return Err(Error::Config(format!("λ must be positive, got {lambda}")));
    }
    let (big_a, big_b) = (s.b(), s.a());
    let a_hat = hat_ratio * big_a;
    let q = make_surface_quadrature(s, DEFAULT_N_POLAR, DEFAULT_N_AZIMUTHAL)?;
    let lhs = q.integrate(|x, _| u.value(x).norm_squared());

    // stretched spherical coordinates: (ρ sinφ cosθ, ρ sinφ sinθ, (B/A) ρ cosφ)
    let (rx, rw) = gauss_legendre_on(24, big_a, a_hat);
    let (cx, cw) = gauss_legendre(32);
    let n_theta = 64;
    let dtheta = 2.0 * PI / n_theta as f64;
    let stretch = big_b / big_a;
    let (mut grad, mut l2) = (0.0, 0.0);
    for (&rho, &wr) in rx.iter().zip(&rw) {
        for (&cphi, &wc) in cx.iter().zip(&cw) {
            let sphi = (1.0 - cphi * cphi).sqrt();
            for k in 0..n_theta {
                let th = k as f64 * dtheta;
                let y = Vec3::new(rho * sphi * th.cos(), rho * sphi * th.sin(), stretch * rho * cphi);
                let x = s.to_world(&y);
                let w = wr * wc * dtheta * stretch * rho * rho;
                grad += w * u.jacobian(&x).norm_squared();
                l2 += w * u.value(&x).norm_squared();
            }
        }
    }
    let rhs = 3.0 * big_b * big_b * (1.0 + lambda) / big_a * grad
        + (1.0 + 1.0 / lambda) * 24.0 * big_a * big_a / (7.0 * a_hat.powi(3)) * l2;
    Ok(Lemma1Outcome {
        lhs,
        rhs,
        holds: lhs <= rhs,
        shell_gradient: grad,
        shell_l2: l2,
    })
}

/// Measured constant of the aggregate surface estimate
/// `g_ε Σ∫(u·ν)² ≤ C(1+λ)[ε∫|∇u|² + λ⁻¹∫|u|²]`, i.e. the ratio of the left
/// side to the bracket (with `|g|`). Volume integrals are taken over Ω.
pub fn lemma2_constant(e: &ParticleEnsemble, u: &dyn SmoothField, lambda: f64) -> Result<f64> {
    let local = Spheroid::reference(e.reference.a(), e.reference.b())?;
    let q = make_surface_quadrature(&local, 16, 32)?;
    let g_eps = e.params.g_eps(e.epsilon).abs();
    let mut lhs = 0.0;
    for p in &e.particles {
        let rule = q.transformed(&p.center, &p.rotation, e.scale());
        lhs += rule.integrate(|x, n| n.dot(&u.value(x)).powi(2));
    }
    lhs *= g_eps;
    let dom = e.domain;
    let rules: Vec<_> = (0..3).map(|d| gauss_legendre_on(8, dom.lo[d], dom.hi[d])).collect();
    let (mut grad, mut l2) = (0.0, 0.0);
    for (&z, &wz) in rules[2].0.iter().zip(&rules[2].1) {
        for (&y, &wy) in rules[1].0.iter().zip(&rules[1].1) {
            for (&x, &wx) in rules[0].0.iter().zip(&rules[0].1) {
                let p = Vec3::new(x, y, z);
                let w = wx * wy * wz;
                grad += w * u.jacobian(&p).norm_squared();
                l2 += w * u.value(&p).norm_squared();
            }
        }
    }
    let bracket = (1.0 + lambda) * (e.epsilon * grad + l2 / lambda);
    if bracket <= 0.0 {
        return Ok(0.0);
    }
    Ok(lhs / bracket)
}
