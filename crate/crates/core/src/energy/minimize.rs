use crate::error::{Error, Result};
use crate::geometry::Vec3;

use super::field::VectorField;
use super::functional::{EnergyBreakdown, Functional};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MinimizeOptions {
    /// Stop when `max_n |∂E/∂u_n| / w_n` falls below this.
    pub tol: f64,
    pub max_iter: usize,
    /// Keep the energy of every accepted iterate.
    pub record_trajectory: bool,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        MinimizeOptions {
            tol: 1e-6,
            max_iter: 50_000,
            record_trajectory: false,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Minimized {
    pub field: VectorField,
    pub iterations: usize,
    pub gradient_norm: f64,
    pub energy: EnergyBreakdown,
    /// Total energy of every accepted iterate (if recorded).
    pub trajectory: Vec<f64>,
}

/// Real roots of `a₃t³ + a₂t² + a₁t + a₀`, polished by Newton steps.
fn real_cubic_roots(a3: f64, a2: f64, a1: f64, a0: f64) -> Vec<f64> {
    let scale = a3.abs().max(a2.abs()).max(a1.abs()).max(a0.abs());
    if scale == 0.0 {
        return Vec::new();
    }
    let mut roots = Vec::new();
    if a3.abs() <= 1e-14 * scale {
        if a2.abs() <= 1e-14 * scale {
            if a1 != 0.0 {
                roots.push(-a0 / a1);
            }
        } else {
            let disc = a1 * a1 - 4.0 * a2 * a0;
            if disc >= 0.0 {
                let q = -0.5 * (a1 + a1.signum() * disc.sqrt());
                if q != 0.0 {
                    roots.push(q / a2);
                    roots.push(a0 / q);
                } else {
                    roots.push(0.0);
                }
            }
        }
    } else {
        let (b, c, d) = (a2 / a3, a1 / a3, a0 / a3);
        // depressed cubic t = s − b/3: s³ + p s + q
        let p = c - b * b / 3.0;
        let q = 2.0 * b * b * b / 27.0 - b * c / 3.0 + d;
        let disc = q * q / 4.0 + p * p * p / 27.0;
        let shift = -b / 3.0;
        if disc > 0.0 {
            let sq = disc.sqrt();
            let u = (-q / 2.0 + sq).cbrt();
            let v = (-q / 2.0 - sq).cbrt();
            roots.push(u + v + shift);
        } else {
            let r = (-p / 3.0).max(0.0).sqrt();
            let arg = if r > 0.0 { (-q / (2.0 * r * r * r)).clamp(-1.0, 1.0) } else { 0.0 };
            let phi = arg.acos();
            for k in 0..3 {
                roots.push(2.0 * r * ((phi + 2.0 * std::f64::consts::PI * k as f64) / 3.0).cos() + shift);
            }
        }
    }
    for t in &mut roots {
        for _ in 0..3 {
            let f = ((a3 * *t + a2) * *t + a1) * *t + a0;
            let df = (3.0 * a3 * *t + 2.0 * a2) * *t + a1;
            if df == 0.0 {
                break;
            }
            let step = f / df;
            if !step.is_finite() {
                break;
            }
            *t -= step;
        }
    }
    roots
}

fn poly(c: &[f64; 5], t: f64) -> f64 {
    c[0] + t * (c[1] + t * (c[2] + t * (c[3] + t * c[4])))
}

/// Minimizer of the quartic over `t > 0`, if one exists.
fn best_step(c: &[f64; 5]) -> Option<f64> {
    let roots = real_cubic_roots(4.0 * c[4], 3.0 * c[3], 2.0 * c[2], c[1]);
    roots
        .into_iter()
        .filter(|t| *t > 0.0 && t.is_finite())
        .map(|t| (poly(c, t), t))
        .filter(|(v, _)| *v <= c[0])
        .min_by(|a, b| a.0.partial_cmp(&b.0).unwrap())
        .map(|(_, t)| t)
}

fn gradient_density(func: &Functional, g: &[Vec3]) -> f64 {
    let w = func.node_weights();
    (0..g.len())
        .filter(|&i| func.is_free(i))
        .map(|i| g[i].amax() / w[i])
        .fold(0.0, f64::max)
}

fn dot(a: &[Vec3], b: &[Vec3]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.dot(y)).sum()
}

/// Preconditioned nonlinear conjugate gradients (Polak–Ribière+, restarts)
/// with an exact line minimization of the quartic energy profile.
pub fn minimize(func: &Functional, f0: VectorField, opts: &MinimizeOptions) -> Result<Minimized> {
    func.check_field(&f0)?;
    let mut field = f0;
    field.enforce_dirichlet();
    let n = field.values.len();
    let precond = func.preconditioner();
    let mut grad = vec![Vec3::zeros(); n];
    let mut energy = func.energy_and_gradient(&field.values, &mut grad);
    let surface0 = energy.surface.abs();
    let mut gnorm = gradient_density(func, &grad);
    let mut trajectory = Vec::new();
    if opts.record_trajectory {
        trajectory.push(energy.total);
    }
    let mut z: Vec<Vec3> = grad.iter().zip(&precond).map(|(g, p)| -g / *p).collect();
    let mut dir = z.clone();
    let mut zg = -dot(&z, &grad);
    let mut trial = vec![Vec3::zeros(); n];
    let mut grad_new = vec![Vec3::zeros(); n];
    let mut iterations = 0;
    let mut restarted = true;

    while gnorm > opts.tol {
        if iterations >= opts.max_iter {
            break;
        }
        check_surface(&energy, surface0)?;
        let mut c = func.line_poly(&field.values, &dir);
        if !(c[1] < 0.0) {
            dir.clone_from(&z);
            restarted = true;
            c = func.line_poly(&field.values, &dir);
        }
        let accepted = best_step(&c).and_then(|t0| {
            let mut t = t0;
            for _ in 0..30 {
                for i in 0..n {
                    trial[i] = field.values[i] + dir[i] * t;
                }
                let e = func.energy_and_gradient(&trial, &mut grad_new);
                let slack = 1e-12 * energy.total.abs().max(1.0);
                if e.total <= energy.total + 1e-4 * t * c[1] + slack {
                    return Some(e);
                }
                t *= 0.5;
            }
            None
        });
        let Some(e_new) = accepted else {
            if restarted {
                return Err(Error::StalledDescent {
                    iterations,
                    gradient_norm: gnorm,
                    last: Box::new(field),
                });
            }
            dir.clone_from(&z);
            restarted = true;
            continue;
        };
        std::mem::swap(&mut field.values, &mut trial);
        iterations += 1;
        energy = e_new;
        if opts.record_trajectory {
            trajectory.push(energy.total);
        }
        // Polak–Ribière+ on the preconditioned gradient
        let z_new: Vec<Vec3> = grad_new.iter().zip(&precond).map(|(g, p)| -g / *p).collect();
        let zg_new = -dot(&z_new, &grad_new);
        let cross = -dot(&z_new, &grad);
        let beta = ((zg_new - cross) / zg).max(0.0);
        restarted = beta == 0.0;
        for i in 0..n {
            dir[i] = z_new[i] + dir[i] * beta;
        }
        z = z_new;
        zg = zg_new;
        std::mem::swap(&mut grad, &mut grad_new);
        gnorm = gradient_density(func, &grad);
    }
    check_surface(&energy, surface0)?;
    if gnorm > opts.tol {
        return Err(Error::StalledDescent {
            iterations,
            gradient_norm: gnorm,
            last: Box::new(field),
        });
    }
    Ok(Minimized {
        field,
        iterations,
        gradient_norm: gnorm,
        energy,
        trajectory,
    })
}

/// Flags a run-away anchoring term: negative and more than ten times the bulk
/// energy plus its own starting size.
fn check_surface(e: &EnergyBreakdown, surface0: f64) -> Result<()> {
    let bulk = e.bulk_gradient + e.bulk_potential;
    if e.surface < 0.0 && -e.surface > 10.0 * (bulk + surface0) {
        return Err(Error::Numerical(format!(
            "anchoring energy {:.3e} exceeds ten times the bulk energy {bulk:.3e}; the grid under-resolves the particles",
            e.surface
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Domain, Grid};

    #[test]
    fn cubic_roots() {
        let mut r = real_cubic_roots(1.0, -6.0, 11.0, -6.0);
        r.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((r[0] - 1.0).abs() < 1e-12 && (r[1] - 2.0).abs() < 1e-12 && (r[2] - 3.0).abs() < 1e-12);
        let r = real_cubic_roots(2.0, 0.0, 1.0, -3.0);
        assert_eq!(r.len(), 1);
        assert!((r[0] - 1.0).abs() < 1e-12);
        let r = real_cubic_roots(0.0, 1.0, -3.0, 2.0);
        assert_eq!(r.len(), 2);
    }

    #[test]
    fn quartic_step() {
        // (t − 2)² (t² + 1) has its minimum at t = 2
        let c = [4.0, -4.0, 5.0, -4.0, 1.0];
        assert!((best_step(&c).unwrap() - 2.0).abs() < 1e-10);
    }

    #[test]
    fn constant_boundary_gives_constant_minimizer() {
        let grid = Grid::cube(Domain::unit_cube(), 12).unwrap();
        let mut f = VectorField::new(grid, |_| Vec3::z());
        f.values = grid.sample(|x| Vec3::new(x.x * (1.0 - x.x), 0.3, 0.2));
        f.enforce_dirichlet();
        let func = Functional::ginzburg_landau(&f);
        let opts = MinimizeOptions {
            record_trajectory: true,
            ..Default::default()
        };
        let out = minimize(&func, f, &opts).unwrap();
        assert!(out.energy.total < 1e-10);
        assert!(out.field.values.iter().all(|v| (v - Vec3::z()).norm() < 1e-5));
        assert!(out.trajectory.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12) + 1e-15));
        assert!(out.field.satisfies_dirichlet());
    }

    #[test]
    fn starting_at_the_minimizer_takes_no_steps() {
        let grid = Grid::cube(Domain::unit_cube(), 8).unwrap();
        let mut f = VectorField::new(grid, |_| Vec3::x());
        f.values = vec![Vec3::x(); grid.len()];
        let func = Functional::ginzburg_landau(&f);
        let out = minimize(&func, f, &MinimizeOptions::default()).unwrap();
        assert_eq!(out.iterations, 0);
    }

    #[test]
    fn iteration_cap_reports_stall() {
        let grid = Grid::cube(Domain::unit_cube(), 10).unwrap();
        let f = VectorField::new(grid, |x| Vec3::new(x.y, 0.0, 1.0));
        let func = Functional::ginzburg_landau(&f);
        let opts = MinimizeOptions {
            max_iter: 2,
            tol: 1e-14,
            ..Default::default()
        };
        match minimize(&func, f, &opts) {
            Err(Error::StalledDescent { iterations, last, .. }) => {
                assert_eq!(iterations, 2);
                assert!(last.satisfies_dirichlet());
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
