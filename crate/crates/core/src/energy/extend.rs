use crate::ensemble::ParticleEnsemble;
use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::grid::Grid;

use super::field::{NodeKind, VectorField};

/// Solves the 7-point discrete Laplace equation for the `unknown` nodes,
/// using the remaining nodes as Dirichlet data. Conjugate gradients, relative
/// residual `tol`.
pub fn laplace_fill(grid: &Grid, values: &mut [Vec3], unknown: &[bool], tol: f64) -> Result<()> {
    let h = grid.spacing();
    let inv: [f64; 3] = [1.0 / (h[0] * h[0]), 1.0 / (h[1] * h[1]), 1.0 / (h[2] * h[2])];
    let ids: Vec<usize> = (0..grid.len()).filter(|&i| unknown[i]).collect();
    if ids.is_empty() {
        return Ok(());
    }
    let mut local = vec![usize::MAX; grid.len()];
    for (k, &i) in ids.iter().enumerate() {
        local[i] = k;
    }
    // neighbour lists: (local index or MAX, weight), plus diagonal and known data
    let mut diag = vec![0.0; ids.len()];
    let mut nbrs: Vec<Vec<(usize, f64)>> = vec![Vec::new(); ids.len()];
    let mut rhs = vec![Vec3::zeros(); ids.len()];
    for (k, &i) in ids.iter().enumerate() {
        let c = grid.coords(i);
        for d in 0..3 {
            let s = grid.stride(d);
            let mut visit = |j: usize| {
                diag[k] += inv[d];
                if unknown[j] {
                    nbrs[k].push((local[j], inv[d]));
                } else {
                    rhs[k] += values[j] * inv[d];
                }
            };
            if c[d] > 0 {
                visit(i - s);
            }
            if c[d] + 1 < grid.n[d] {
                visit(i + s);
            }
        }
    }
    let apply = |x: &[Vec3], out: &mut [Vec3]| {
        for k in 0..x.len() {
            let mut acc = x[k] * diag[k];
            for &(j, w) in &nbrs[k] {
                acc -= x[j] * w;
            }
            out[k] = acc;
        }
    };
    let dot = |a: &[Vec3], b: &[Vec3]| a.iter().zip(b).map(|(x, y)| x.dot(y)).sum::<f64>();
    let mut x: Vec<Vec3> = ids.iter().map(|&i| values[i]).collect();
    let mut ax = vec![Vec3::zeros(); x.len()];
    apply(&x, &mut ax);
    let mut r: Vec<Vec3> = rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
    // Jacobi preconditioner
    let mut z: Vec<Vec3> = r.iter().zip(&diag).map(|(v, d)| v / *d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let bnorm = dot(&rhs, &rhs).sqrt().max(1e-300);
    let max_iter = 20 * ids.len() + 100;
    let mut converged = dot(&r, &r).sqrt() <= tol * bnorm;
    let mut it = 0;
    while !converged && it < max_iter {
        apply(&p, &mut ax);
        let pap = dot(&p, &ax);
        if !(pap > 0.0) {
            return Err(Error::Numerical("Laplace fill lost positive definiteness".into()));
        }
        let alpha = rz / pap;
        for k in 0..x.len() {
            x[k] += p[k] * alpha;
            r[k] -= ax[k] * alpha;
            z[k] = r[k] / diag[k];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for k in 0..x.len() {
            p[k] = z[k] + p[k] * beta;
        }
        converged = dot(&r, &r).sqrt() <= tol * bnorm;
        it += 1;
    }
    if !converged {
        return Err(Error::Numerical(format!("Laplace fill did not converge in {max_iter} iterations")));
    }
    for (k, &i) in ids.iter().enumerate() {
        values[i] = x[k];
    }
    Ok(())
}

/// Discrete `‖u‖²_{H¹}` over the nodes flagged in `include` (edges count when
/// both ends are included).
pub fn h1_norm_sq(grid: &Grid, values: &[Vec3], include: &[bool]) -> f64 {
    let w = grid.node_weights();
    let h = grid.spacing();
    let mut s = 0.0;
    for idx in 0..grid.len() {
        if !include[idx] {
            continue;
        }
        s += w[idx] * values[idx].norm_squared();
        let c = grid.coords(idx);
        for d in 0..3 {
            if c[d] + 1 < grid.n[d] {
                let j = idx + grid.stride(d);
                if include[j] {
                    s += grid.edge_weight(idx, d) * ((values[j] - values[idx]) / h[d]).norm_squared();
                }
            }
        }
    }
    s
}

/// Result of [`extend`].
#[derive(Clone, Debug)]
pub struct Extension {
    pub field: VectorField,
    /// `‖u‖_{H¹(Ω∖∪P)}`.
    pub h1_input: f64,
    /// `‖ũ‖_{H¹(Ω)}`.
    pub h1_extended: f64,
    /// Measured extension constant `‖ũ‖ / ‖u‖`.
    pub ratio: f64,
}

/// Fills the particle nodes by the discrete harmonic extension of the
/// surrounding values.
pub fn extend(f: &VectorField, e: &ParticleEnsemble) -> Result<Extension> {
    let mut g = f.clone();
    let mut probe = VectorField::new(f.grid, |_| Vec3::zeros());
    probe.mark_particles(&e.realized_all());
    if probe.mask.iter().zip(&f.mask).any(|(a, b)| (*a == NodeKind::Particle) != (*b == NodeKind::Particle)) {
        return Err(Error::GridMismatch("field mask does not match the ensemble".into()));
    }
    let unknown: Vec<bool> = f.mask.iter().map(|k| *k == NodeKind::Particle).collect();
    laplace_fill(&g.grid, &mut g.values, &unknown, 1e-12)?;
    let fluid: Vec<bool> = unknown.iter().map(|u| !u).collect();
    let all = vec![true; f.grid.len()];
    let h1_input = h1_norm_sq(&f.grid, &f.values, &fluid).sqrt();
    let h1_extended = h1_norm_sq(&g.grid, &g.values, &all).sqrt();
    for k in &mut g.mask {
        if *k == NodeKind::Particle {
            *k = NodeKind::Fluid;
        }
    }
    Ok(Extension {
        field: g,
        h1_input,
        h1_extended,
        ratio: if h1_input > 0.0 { h1_extended / h1_input } else { 1.0 },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::{generate_periodic, ScalingParams};
    use crate::geometry::{Rotation, Spheroid};
    use crate::grid::Domain;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ensemble(eps: f64) -> ParticleEnsemble {
        let p = ScalingParams::consistent(1.5, 1.0, 1.0, 1.0, [0.0; 3], 1.0, 1.6);
        let reference = Spheroid::reference(0.9, 0.6).unwrap();
        generate_periodic(eps, &Domain::unit_cube(), &p, &reference, |_| Rotation::from_axis_angle(&Vec3::x(), 0.4)).unwrap()
    }

    #[test]
    fn constants_and_linears_are_reproduced() {
        let grid = Grid::cube(Domain::unit_cube(), 25).unwrap();
        let e = ensemble(0.25);
        let lin = |x: &Vec3| Vec3::new(2.0 * x.x - x.z, 0.5, x.y + 3.0 * x.z);
        let mut f = VectorField::new(grid, lin);
        f.mark_particles(&e.realized_all());
        assert!(f.count(NodeKind::Particle) > 0);
        for i in 0..grid.len() {
            f.values[i] = if f.mask[i] == NodeKind::Particle { Vec3::new(9.0, 9.0, 9.0) } else { lin(&grid.position(i)) };
        }
        let ext = extend(&f, &e).unwrap();
        for i in 0..grid.len() {
            assert!((ext.field.values[i] - lin(&grid.position(i))).norm() < 1e-9);
        }
        for v in &mut f.values {
            *v = Vec3::new(0.3, -0.1, 0.7);
        }
        let ext = extend(&f, &e).unwrap();
        assert!(ext.field.values.iter().all(|v| (v - Vec3::new(0.3, -0.1, 0.7)).norm() < 1e-10));
    }

    #[test]
    fn extension_constant_stays_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut worst = Vec::new();
        for (eps, n) in [(0.25, 25), (1.0 / 6.0, 37), (0.125, 49)] {
            let grid = Grid::cube(Domain::unit_cube(), n).unwrap();
            let e = ensemble(eps);
            let mut c: f64 = 0.0;
            for _ in 0..3 {
                let k: Vec<f64> = (0..9).map(|_| rng.gen_range(-3.0..3.0)).collect();
                let mut f = VectorField::new(grid, |_| Vec3::zeros());
                f.mark_particles(&e.realized_all());
                for i in 0..grid.len() {
                    let x = grid.position(i);
                    f.values[i] = Vec3::new((k[0] * x.x + k[1]).sin(), (k[2] * x.y + k[3] * x.z).cos(), k[4] * x.x * x.y + k[5]);
                }
                c = c.max(extend(&f, &e).unwrap().ratio);
            }
            worst.push(c);
        }
        let (lo, hi) = worst.iter().fold((f64::INFINITY, 0.0_f64), |(a, b), v| (a.min(*v), b.max(*v)));
        assert!(hi < 2.0 && hi / lo < 1.5, "{worst:?}");
    }
}
