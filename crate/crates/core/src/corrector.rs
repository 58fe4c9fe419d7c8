//! The rescaled cell problem around one particle, its scaling study, and the
//! limit of the anchoring term for a smooth test field.

use std::collections::HashMap;

use serde::{Serialize, Serializer};

use crate::effective::reference_tensor;
use crate::ensemble::{generate_periodic, RotationField, ScalingParams};
use crate::error::{Error, Result};
use crate::geometry::{anchoring_eigenvalues, Mat3, Rotation, Spheroid, Vec3};
use crate::grid::Domain;
use crate::quadrature::{gauss_legendre_on, loglog_slope};

/// Local problem: minimize
/// `∫_{B_R∖P}(|∇u|² + |u|²) + g ε^{3−α} ∫_{∂P}(u + w, ν)²` with `u = 0` on `|y| = R`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CellProblem {
    /// Reference particle centered at the origin.
    pub particle: Spheroid,
    pub w: Vec3,
    pub g: f64,
    pub epsilon: f64,
    pub alpha: f64,
    pub kappa: f64,
    /// Optional cap on the outer radius (truncation with a zero sphere).
    pub r_cap: Option<f64>,
}

impl CellProblem {
    pub fn new(particle: Spheroid, w: Vec3, g: f64, epsilon: f64, alpha: f64, kappa: f64) -> Result<Self> {
        let cp = CellProblem {
            particle: particle.with_center(Vec3::zeros()),
            w,
            g,
            epsilon,
            alpha,
            kappa,
            r_cap: None,
        };
        cp.validate()?;
        Ok(cp)
    }

    pub fn with_cap(mut self, r_cap: f64) -> Result<Self> {
        self.r_cap = Some(r_cap);
        self.validate()?;
        Ok(self)
    }

    /// Nominal outer radius `ε^{κ−α}`.
    pub fn nominal_radius(&self) -> f64 {
        self.epsilon.powf(self.kappa - self.alpha)
    }

    /// Radius actually used (the nominal one unless capped).
    pub fn radius(&self) -> f64 {
        let r = self.nominal_radius();
        self.r_cap.map_or(r, |c| r.min(c))
    }

    /// Anchoring coefficient `g ε^{3−α}`.
    pub fn anchoring(&self) -> f64 {
        self.g * self.epsilon.powf(3.0 - self.alpha)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 1.0 && self.alpha < 2.0) {
            return Err(Error::Config(format!("α must lie in (1, 2), got {}", self.alpha)));
        }
        if !(self.kappa > 1.0 && self.kappa < self.alpha) {
            return Err(Error::Config(format!("κ must lie in (1, α), got {}", self.kappa)));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::Config(format!("ε must lie in (0, 1), got {}", self.epsilon)));
        }
        if !(self.radius() > 2.0 * self.particle.a()) {
            return Err(Error::Config(format!(
                "outer radius {:.4} does not exceed twice the polar semi-axis {:.4}",
                self.radius(),
                self.particle.a()
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CellResolution {
    /// Cells per edge of each cubed-sphere face.
    pub n_angular: usize,
    /// Radial layers between the particle and the outer sphere.
    pub n_radial: usize,
    /// Ratio of the outermost to the innermost layer thickness.
    pub grading: f64,
}

impl Default for CellResolution {
    fn default() -> Self {
        CellResolution {
            n_angular: 12,
            n_radial: 16,
            grading: 8.0,
        }
    }
}

impl CellResolution {
    pub fn refined(&self) -> Self {
        CellResolution {
            n_angular: 2 * self.n_angular,
            n_radial: 2 * self.n_radial,
            grading: self.grading,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct CellEnergies {
    pub grad: f64,
    pub l2: f64,
    pub surf: f64,
}

#[derive(Clone, Debug)]
pub struct CellSolution {
    pub problem: CellProblem,
    pub resolution: CellResolution,
    pub radius: f64,
    pub nodes: Vec<Vec3>,
    /// `û` at every node; zero on the outer sphere.
    pub values: Vec<Vec3>,
    /// Energies in the rescaled variables.
    pub energies: CellEnergies,
    /// Energies mapped back to physical coordinates (`ε^α`, `ε^{3α}`, `ε^{2α}`).
    pub physical: CellEnergies,
    /// Relative residual of the discrete Euler–Lagrange system.
    pub residual: f64,
    pub iterations: usize,
    /// Index of the first node of the outer layer.
    pub outer_start: usize,
}

/// Cubed-sphere directions and the quads of its six faces.
struct SphereMesh {
    dirs: Vec<Vec3>,
    quads: Vec<[usize; 4]>,
}

fn sphere_mesh(n: usize) -> SphereMesh {
    let mut index: HashMap<[usize; 3], usize> = HashMap::new();
    let mut dirs = Vec::new();
    let mut id = |p: [usize; 3], dirs: &mut Vec<Vec3>| -> usize {
        *index.entry(p).or_insert_with(|| {
            let v = Vec3::from_fn(|d, _| (std::f64::consts::FRAC_PI_4 * (2.0 * p[d] as f64 / n as f64 - 1.0)).tan());
            dirs.push(v.normalize());
            dirs.len() - 1
        })
    };
    let mut quads = Vec::with_capacity(6 * n * n);
    for axis in 0..3 {
        let (e1, e2) = ((axis + 1) % 3, (axis + 2) % 3);
        for side in [0, n] {
            for v in 0..n {
                for u in 0..n {
                    let corner = |du: usize, dv: usize| {
                        let mut p = [0usize; 3];
                        p[axis] = side;
                        p[e1] = u + du;
                        p[e2] = v + dv;
                        p
                    };
                    quads.push([
                        id(corner(0, 0), &mut dirs),
                        id(corner(1, 0), &mut dirs),
                        id(corner(1, 1), &mut dirs),
                        id(corner(0, 1), &mut dirs),
                    ]);
                }
            }
        }
    }
    SphereMesh { dirs, quads }
}

/// Symmetric sparse matrix with a value pair `(stiffness, mass)` per entry.
struct PairCsr {
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    stiff: Vec<f64>,
    mass: Vec<f64>,
}

impl PairCsr {
    fn from_map(n: usize, map: HashMap<(usize, usize), (f64, f64)>) -> Self {
        let mut keys: Vec<_> = map.keys().copied().collect();
        keys.sort_unstable();
        let mut row_ptr = vec![0usize; n + 1];
        for k in &keys {
            row_ptr[k.0 + 1] += 1;
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        let cols = keys.iter().map(|k| k.1).collect();
        let stiff = keys.iter().map(|k| map[k].0).collect();
        let mass = keys.iter().map(|k| map[k].1).collect();
        PairCsr {
            row_ptr,
            cols,
            stiff,
            mass,
        }
    }

    fn quad(&self, u: &[Vec3]) -> (f64, f64) {
        let (mut s, mut m) = (0.0, 0.0);
        for i in 0..self.row_ptr.len() - 1 {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let d = u[i].dot(&u[self.cols[k]]);
                s += self.stiff[k] * d;
                m += self.mass[k] * d;
            }
        }
        (s, m)
    }
}

/// Block sparse surface operator on the inner layer.
struct SurfaceBlocks {
    entries: Vec<(usize, usize, Mat3)>,
    load: Vec<Vec3>,
    /// Quadrature points of the inner surface: (weight, shape values on 4 nodes).
    points: Vec<(f64, [(usize, f64); 4])>,
}

const GAUSS3: [(f64, f64); 3] = [(-0.774_596_669_241_483_4, 5.0 / 9.0), (0.0, 8.0 / 9.0), (0.774_596_669_241_483_4, 5.0 / 9.0)];

fn shape2(s: f64, t: f64) -> ([f64; 4], [f64; 4], [f64; 4]) {
    // corners (−1,−1), (1,−1), (1,1), (−1,1)
    let n = [
        0.25 * (1.0 - s) * (1.0 - t),
        0.25 * (1.0 + s) * (1.0 - t),
        0.25 * (1.0 + s) * (1.0 + t),
        0.25 * (1.0 - s) * (1.0 + t),
    ];
    let ds = [-0.25 * (1.0 - t), 0.25 * (1.0 - t), 0.25 * (1.0 + t), -0.25 * (1.0 + t)];
    let dt = [-0.25 * (1.0 - s), -0.25 * (1.0 + s), 0.25 * (1.0 + s), 0.25 * (1.0 - s)];
    (n, ds, dt)
}

fn assemble_surface(mesh: &SphereMesh, nodes: &[Vec3], w: &Vec3) -> SurfaceBlocks {
    let mut map: HashMap<(usize, usize), Mat3> = HashMap::new();
    let mut load = vec![Vec3::zeros(); mesh.dirs.len()];
    let mut points = Vec::with_capacity(9 * mesh.quads.len());
    for q in &mesh.quads {
        for &(s, ws) in &GAUSS3 {
            for &(t, wt) in &GAUSS3 {
                let (n, ds, dt) = shape2(s, t);
                let mut xs = Vec3::zeros();
                let mut xt = Vec3::zeros();
                for a in 0..4 {
                    xs += nodes[q[a]] * ds[a];
                    xt += nodes[q[a]] * dt[a];
                }
                let cross = xs.cross(&xt);
                let area = cross.norm();
                let nu = cross / area;
                let wq = ws * wt * area;
                let nn = nu * nu.transpose() * wq;
                for a in 0..4 {
                    load[q[a]] += nu * (nu.dot(w) * wq * n[a]);
                    for b in 0..4 {
                        *map.entry((q[a], q[b])).or_insert_with(Mat3::zeros) += nn * (n[a] * n[b]);
                    }
                }
                points.push((wq, [(q[0], n[0]), (q[1], n[1]), (q[2], n[2]), (q[3], n[3])]));
            }
        }
    }
    let mut entries: Vec<_> = map.into_iter().map(|((a, b), m)| (a, b, m)).collect();
    entries.sort_unstable_by_key(|e| (e.0, e.1));
    SurfaceBlocks { entries, load, points }
}

/// Solves the cell problem by conjugate gradients on the discrete quadratic form.
pub fn solve_cell(cp: &CellProblem, res: &CellResolution) -> Result<CellSolution> {
    cp.validate()?;
    if res.n_radial < 16 {
        return Err(Error::Resolution(format!("need at least 16 radial layers, got {}", res.n_radial)));
    }
    if res.n_angular < 2 {
        return Err(Error::Resolution(format!("need at least 2 angular cells per face, got {}", res.n_angular)));
    }
    let mesh = sphere_mesh(res.n_angular);
    let na = mesh.dirs.len();
    let layers = res.n_radial;
    let radius = cp.radius();
    let q = if res.grading > 0.0 && res.grading != 1.0 {
        res.grading.powf(1.0 / (layers as f64 - 1.0))
    } else {
        1.0
    };
    let sigma: Vec<f64> = (0..=layers)
        .map(|l| {
            if q == 1.0 {
                l as f64 / layers as f64
            } else {
                (q.powi(l as i32) - 1.0) / (q.powi(layers as i32) - 1.0)
            }
        })
        .collect();
    let rot = *cp.particle.rotation();
    let (a, b) = (cp.particle.a(), cp.particle.b());
    let mut nodes = Vec::with_capacity(na * (layers + 1));
    for s in &sigma {
        for d in &mesh.dirs {
            let rho = 1.0 / ((d.x * d.x + d.y * d.y) / (b * b) + d.z * d.z / (a * a)).sqrt();
            let r = rho + (radius - rho) * s;
            nodes.push(rot.apply(&(d * r)));
        }
    }
    let n_unknown = na * layers;

    // volume stiffness and mass (scalar), Q1 hexes with 2×2×2 Gauss
    let g2 = 1.0 / 3f64.sqrt();
    let mut map: HashMap<(usize, usize), (f64, f64)> = HashMap::new();
    for l in 0..layers {
        for quad in &mesh.quads {
            let mut ids = [0usize; 8];
            let mut xs = [Vec3::zeros(); 8];
            let mut refc = [[0.0; 3]; 8];
            for c in 0..2 {
                for k in 0..4 {
                    let e = 4 * c + k;
                    ids[e] = (l + c) * na + quad[k];
                    xs[e] = nodes[ids[e]];
                    let (s, t) = [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)][k];
                    refc[e] = [s, t, if c == 0 { -1.0 } else { 1.0 }];
                }
            }
            let mut ke = [[0.0; 8]; 8];
            let mut me = [[0.0; 8]; 8];
            for gx in [-g2, g2] {
                for gy in [-g2, g2] {
                    for gz in [-g2, g2] {
                        let p = [gx, gy, gz];
                        let mut nv = [0.0; 8];
                        let mut dn = [[0.0; 3]; 8];
                        for e in 0..8 {
                            let f: Vec<f64> = (0..3).map(|d| 0.5 * (1.0 + refc[e][d] * p[d])).collect();
                            nv[e] = f[0] * f[1] * f[2];
                            dn[e] = [
                                0.5 * refc[e][0] * f[1] * f[2],
                                0.5 * refc[e][1] * f[0] * f[2],
                                0.5 * refc[e][2] * f[0] * f[1],
                            ];
                        }
                        let mut jac = Mat3::zeros();
                        for e in 0..8 {
                            for i in 0..3 {
                                for j in 0..3 {
                                    jac[(i, j)] += xs[e][i] * dn[e][j];
                                }
                            }
                        }
                        let det = jac.determinant();
                        let jinv_t = jac
                            .try_inverse()
                            .ok_or_else(|| Error::Geometry("degenerate cell element".into()))?
                            .transpose();
                        let grads: Vec<Vec3> = dn.iter().map(|d| jinv_t * Vec3::new(d[0], d[1], d[2])).collect();
                        let wdet = det.abs();
                        for i in 0..8 {
                            for j in 0..8 {
                                ke[i][j] += grads[i].dot(&grads[j]) * wdet;
                                me[i][j] += nv[i] * nv[j] * wdet;
                            }
                        }
                    }
                }
            }
            for i in 0..8 {
                if ids[i] >= n_unknown {
                    continue;
                }
                for j in 0..8 {
                    if ids[j] >= n_unknown {
                        continue;
                    }
                    let e = map.entry((ids[i], ids[j])).or_insert((0.0, 0.0));
                    e.0 += ke[i][j];
                    e.1 += me[i][j];
                }
            }
        }
    }
    let a_mat = PairCsr::from_map(n_unknown, map);
    let surf = assemble_surface(&mesh, &nodes[..na], &cp.w);
    let c = cp.anchoring();

    let apply = |u: &[Vec3], out: &mut [Vec3]| {
        for i in 0..n_unknown {
            let mut acc = Vec3::zeros();
            for k in a_mat.row_ptr[i]..a_mat.row_ptr[i + 1] {
                acc += u[a_mat.cols[k]] * (a_mat.stiff[k] + a_mat.mass[k]);
            }
            out[i] = acc;
        }
        if c != 0.0 {
            for (i, j, m) in &surf.entries {
                out[*i] += (m * u[*j]) * c;
            }
        }
    };
    let rhs: Vec<Vec3> = (0..n_unknown)
        .map(|i| if i < na { -surf.load[i] * c } else { Vec3::zeros() })
        .collect();
    let dot = |x: &[Vec3], y: &[Vec3]| x.iter().zip(y).map(|(p, q)| p.dot(q)).sum::<f64>();
    let bnorm = dot(&rhs, &rhs).sqrt();
    let mut u = vec![Vec3::zeros(); n_unknown];
    let mut iterations = 0;
    let mut residual = 0.0;
    if bnorm > 0.0 {
        let mut r = rhs.clone();
        let mut p = r.clone();
        let mut ap = vec![Vec3::zeros(); n_unknown];
        let mut rr = dot(&r, &r);
        let tol = 1e-11 * bnorm;
        let max_iter = 20 * n_unknown;
        while rr.sqrt() > tol {
            if iterations >= max_iter {
                return Err(Error::Numerical(format!("cell solve did not converge in {max_iter} iterations")));
            }
            apply(&p, &mut ap);
            let pap = dot(&p, &ap);
            if !(pap > 0.0) {
                return Err(Error::Coercivity(format!(
                    "quadratic form is not positive along a search direction (g ε^(3−α) = {c:.3e}); decrease ε"
                )));
            }
            let alpha = rr / pap;
            for i in 0..n_unknown {
                u[i] += p[i] * alpha;
                r[i] -= ap[i] * alpha;
            }
            let rr_new = dot(&r, &r);
            let beta = rr_new / rr;
            rr = rr_new;
            for i in 0..n_unknown {
                p[i] = r[i] + p[i] * beta;
            }
            iterations += 1;
        }
        // true residual
        apply(&u, &mut ap);
        let rv: Vec<Vec3> = ap.iter().zip(&rhs).map(|(x, y)| x - y).collect();
        residual = dot(&rv, &rv).sqrt() / bnorm;
    }
    let (grad, l2) = a_mat.quad(&u);
    let mut surf_l2 = 0.0;
    for (wq, sh) in &surf.points {
        let v: Vec3 = sh.iter().map(|(i, s)| u[*i] * *s).sum();
        surf_l2 += wq * v.norm_squared();
    }
    let energies = CellEnergies {
        grad,
        l2,
        surf: surf_l2,
    };
    let ea = cp.epsilon.powf(cp.alpha);
    let physical = CellEnergies {
        grad: grad * ea,
        l2: l2 * ea.powi(3),
        surf: surf_l2 * ea * ea,
    };
    let mut values = u;
    values.resize(nodes.len(), Vec3::zeros());
    Ok(CellSolution {
        problem: *cp,
        resolution: *res,
        radius,
        nodes,
        values,
        energies,
        physical,
        residual,
        iterations,
        outer_start: n_unknown,
    })
}

/// A fitted log-log slope, or the reason there is none.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Slope {
    Fitted(f64),
    /// Every energy in the sweep is identically zero.
    ExactZero,
    Undefined,
}

impl Slope {
    fn fit(x: &[f64], y: &[f64]) -> Slope {
        if y.iter().all(|v| *v == 0.0) {
            return Slope::ExactZero;
        }
        loglog_slope(x, y).map_or(Slope::Undefined, Slope::Fitted)
    }

    pub fn value(&self) -> Option<f64> {
        match self {
            Slope::Fitted(v) => Some(*v),
            _ => None,
        }
    }
}

impl std::fmt::Display for Slope {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Slope::Fitted(v) => write!(f, "{v:.16e}"),
            Slope::ExactZero => f.write_str("exact-zero"),
            Slope::Undefined => f.write_str("undefined"),
        }
    }
}

impl Serialize for Slope {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Slope::Fitted(v) => s.serialize_f64(*v),
            other => s.serialize_str(&other.to_string()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CellRow {
    pub epsilon: f64,
    pub nominal_radius: f64,
    pub radius: f64,
    pub energies: CellEnergies,
    /// Slopes fitted over the rows up to this one.
    pub slopes: [Slope; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CellStudy {
    pub alpha: f64,
    pub kappa: f64,
    pub rows: Vec<CellRow>,
    /// Slopes of (grad, l2, surf) over the whole sweep.
    pub slopes: [Slope; 3],
    /// Expected lower bound `6 − 2α`.
    pub expected: f64,
}

impl CellStudy {
    /// Every slope reaches `6 − 2α − margin` (exact zeros count as satisfied).
    pub fn satisfies(&self, margin: f64) -> bool {
        self.slopes.iter().all(|s| match s {
            Slope::Fitted(v) => *v >= self.expected - margin,
            Slope::ExactZero => true,
            Slope::Undefined => false,
        })
    }
}

#[derive(Clone, Copy, Debug)]
pub struct CellStudyOptions {
    pub particle: Spheroid,
    pub resolution: CellResolution,
    pub r_cap: Option<f64>,
}

impl Default for CellStudyOptions {
    fn default() -> Self {
        CellStudyOptions {
            particle: Spheroid::reference(0.5, 0.25).expect("valid reference"),
            resolution: CellResolution::default(),
            r_cap: None,
        }
    }
}

/// Cell energies over an ε sweep with fitted log-log slopes.
pub fn cell_scaling_study(g: f64, w: Vec3, alpha: f64, kappa: f64, eps: &[f64], opts: &CellStudyOptions) -> Result<CellStudy> {
    if eps.len() < 4 {
        return Err(Error::Study(format!("need at least 4 values of ε, got {}", eps.len())));
    }
    let (lo, hi) = eps.iter().fold((f64::INFINITY, 0.0_f64), |(a, b), v| (a.min(*v), b.max(*v)));
    if hi / lo < 10.0 * (1.0 - 1e-9) {
        return Err(Error::Study(format!("ε values must span a decade, got {lo}..{hi}")));
    }
    let mut rows: Vec<CellRow> = Vec::with_capacity(eps.len());
    for &e in eps {
        let mut cp = CellProblem::new(opts.particle, w, g, e, alpha, kappa)?;
        if let Some(cap) = opts.r_cap {
            cp = cp.with_cap(cap)?;
        }
        let sol = solve_cell(&cp, &opts.resolution)?;
        rows.push(CellRow {
            epsilon: e,
            nominal_radius: cp.nominal_radius(),
            radius: sol.radius,
            energies: sol.energies,
            slopes: [Slope::Undefined; 3],
        });
        let x: Vec<f64> = rows.iter().map(|r| r.epsilon).collect();
        let k = rows.len();
        if k >= 2 {
            rows[k - 1].slopes = fit_all(&x, &rows);
        } else if g == 0.0 || w == Vec3::zeros() {
            rows[0].slopes = [Slope::ExactZero; 3];
        }
    }
    let x: Vec<f64> = rows.iter().map(|r| r.epsilon).collect();
    Ok(CellStudy {
        alpha,
        kappa,
        slopes: fit_all(&x, &rows),
        expected: 6.0 - 2.0 * alpha,
        rows,
    })
}

fn fit_all(x: &[f64], rows: &[CellRow]) -> [Slope; 3] {
    let pick = |f: fn(&CellEnergies) -> f64| rows.iter().map(|r| f(&r.energies)).collect::<Vec<_>>();
    [
        Slope::fit(x, &pick(|e| e.grad)),
        Slope::fit(x, &pick(|e| e.l2)),
        Slope::fit(x, &pick(|e| e.surf)),
    ]
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BoundaryTermRow {
    pub epsilon: f64,
    pub n_particles: usize,
    /// `g ε³ Σᵢ wᵢᵀ Rᵢ T Rᵢᵀ wᵢ`.
    pub sum: f64,
    pub gap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundaryTermLimit {
    pub rows: Vec<BoundaryTermRow>,
    /// `∫_Ω (A w, w) dV` with the closed-form `A`.
    pub limit: f64,
}

/// Anchoring energy of a smooth field frozen at the particle centers, over a
/// periodic sweep, against its homogenized limit.
pub fn boundary_term_limit(
    w: impl Fn(&Vec3) -> Vec3,
    rotation_field: &RotationField,
    p: &ScalingParams,
    reference: &Spheroid,
    domain: &Domain,
    eps: &[f64],
) -> Result<BoundaryTermLimit> {
    let t = reference_tensor(reference)?;
    let (l1, l2) = anchoring_eigenvalues(reference)?;
    let diag = Mat3::from_diagonal(&Vec3::new(l2, l2, l1)) * p.g;
    let rules: Vec<_> = (0..3).map(|d| gauss_legendre_on(16, domain.lo[d], domain.hi[d])).collect();
    let mut limit = 0.0;
    for (&z, &wz) in rules[2].0.iter().zip(&rules[2].1) {
        for (&y, &wy) in rules[1].0.iter().zip(&rules[1].1) {
            for (&x, &wx) in rules[0].0.iter().zip(&rules[0].1) {
                let pt = Vec3::new(x, y, z);
                let v = w(&pt);
                let a = rotation_field.eval(&pt).conjugate(&diag);
                limit += wx * wy * wz * v.dot(&(a * v));
            }
        }
    }
    let mut rows = Vec::with_capacity(eps.len());
    for &e in eps {
        let ens = generate_periodic(e, domain, p, reference, |x| rotation_field.eval(x))?;
        let mut sum = 0.0;
        for q in &ens.particles {
            let v = w(&q.center);
            sum += v.dot(&(q.rotation.conjugate(&t) * v));
        }
        sum *= p.g * e.powi(3);
        rows.push(BoundaryTermRow {
            epsilon: e,
            n_particles: ens.len(),
            sum,
            gap: (sum - limit).abs(),
        });
    }
    Ok(BoundaryTermLimit { rows, limit })
}

/// Rotation used to test frame covariance of the cell problem.
pub fn rotated_problem(cp: &CellProblem, q: &Rotation) -> CellProblem {
    CellProblem {
        particle: cp.particle.rotated(q),
        w: q.apply(&cp.w),
        ..*cp
    }
}
