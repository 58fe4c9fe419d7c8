//! The ε-family of particle configurations: scaling exponents, periodic and
//! random generators, validation, and the JSON interchange format.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{make_surface_quadrature, Rotation, Spheroid, Vec3};
use crate::grid::Domain;

/// RNG sub-stream used for ensemble generation.
pub const STREAM_ENSEMBLE: u64 = 1;

/// Exponents and amplitudes of the ε-scalings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingParams {
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub gamma: f64,
    /// Surface-anchoring amplitude.
    pub g: f64,
    /// Magnetization amplitude.
    pub m: f64,
    /// Applied field.
    pub h: [f64; 3],
    /// Lower separation constant (multiple of ε).
    pub d: f64,
    /// Upper separation constant (multiple of ε).
    #[serde(rename = "D")]
    pub big_d: f64,
}

impl ScalingParams {
    /// Parameters with `β₂ = 3 − 6α − β₁` and `γ = 3 − 2α` filled in.
    pub fn consistent(alpha: f64, beta1: f64, g: f64, m: f64, h: [f64; 3], d: f64, big_d: f64) -> Self {
        ScalingParams {
            alpha,
            beta1,
            beta2: 3.0 - 6.0 * alpha - beta1,
            gamma: 3.0 - 2.0 * alpha,
            g,
            m,
            h,
            d,
            big_d,
        }
    }

    pub fn h_vec(&self) -> Vec3 {
        Vec3::from(self.h)
    }

    /// Anchoring strength `g_ε = g ε^γ`.
    pub fn g_eps(&self, eps: f64) -> f64 {
        self.g * eps.powf(self.gamma)
    }

    /// Applied field `h_ε = h ε^β₂`.
    pub fn h_eps(&self, eps: f64) -> Vec3 {
        self.h_vec() * eps.powf(self.beta2)
    }

    /// Magnetization density of one particle, `Vol(P^ε) m ε^β₁`.
    pub fn moment_density(&self, eps: f64, particle_volume: f64) -> f64 {
        particle_volume * self.m * eps.powf(self.beta1)
    }
}

/// Outcome of one scaling relation.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RelationCheck {
    pub relation: &'static str,
    pub holds: bool,
    /// Signed slack: positive margin for inequalities, mismatch for equalities.
    pub residual: f64,
}

const EQ_TOL: f64 = 1e-12;

/// Checks every relation on the exponents and separation constants.
pub fn validate_scalings(p: &ScalingParams) -> Vec<RelationCheck> {
    let scale = |xs: &[f64]| EQ_TOL * xs.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
    let lower = p.alpha - 1.0;
    let upper = 2.0 - p.alpha;
    let sum = 6.0 * p.alpha + 2.0 * p.beta1 - 9.0;
    let beta = p.beta2 + p.beta1 - (3.0 - 6.0 * p.alpha);
    let gamma = p.gamma - (3.0 - 2.0 * p.alpha);
    vec![
        RelationCheck {
            relation: "1<α<2",
            holds: lower > 0.0 && upper > 0.0,
            residual: lower.min(upper),
        },
        RelationCheck {
            relation: "6α+2β₁>9",
            holds: sum > 0.0,
            residual: sum,
        },
        RelationCheck {
            relation: "β₂+β₁=3−6α",
            holds: beta.abs() <= scale(&[p.beta1, p.beta2, 6.0 * p.alpha]),
            residual: beta,
        },
        RelationCheck {
            relation: "γ=3−2α",
            holds: gamma.abs() <= scale(&[p.gamma, 2.0 * p.alpha]),
            residual: gamma,
        },
        RelationCheck {
            relation: "0<d<D",
            holds: p.d > 0.0 && p.d < p.big_d,
            residual: p.d.min(p.big_d - p.d),
        },
    ]
}

/// Failing relations only; empty means the parameters are admissible.
pub fn scaling_violations(p: &ScalingParams) -> Vec<RelationCheck> {
    validate_scalings(p).into_iter().filter(|c| !c.holds).collect()
}

/// A continuous orientation field `Ω → SO(3)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RotationField {
    Identity,
    /// The same rotation everywhere.
    Uniform { axis: [f64; 3], angle: f64 },
    /// Rotation about a fixed axis by `offset + gradient·x`.
    LinearTwist {
        axis: [f64; 3],
        gradient: [f64; 3],
        #[serde(default)]
        offset: f64,
    },
}

impl Default for RotationField {
    fn default() -> Self {
        RotationField::Identity
    }
}

impl RotationField {
    pub fn eval(&self, x: &Vec3) -> Rotation {
        match self {
            RotationField::Identity => Rotation::identity(),
            RotationField::Uniform { axis, angle } => Rotation::from_axis_angle(&Vec3::from(*axis), *angle),
            RotationField::LinearTwist { axis, gradient, offset } => {
                let angle = offset + Vec3::from(*gradient).dot(x);
                Rotation::from_axis_angle(&Vec3::from(*axis), angle)
            }
        }
    }
}

/// One particle of the family: center and orientation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Particle {
    pub center: Vec3,
    pub rotation: Rotation,
}

/// A member of the ε-family `{x_i + ε^α R_i P}`.
#[derive(Clone, Debug, PartialEq)]
pub struct ParticleEnsemble {
    pub epsilon: f64,
    pub domain: Domain,
    /// Unit-scale reference spheroid, centered at the origin with its axis along `ẑ`.
    pub reference: Spheroid,
    pub params: ScalingParams,
    pub particles: Vec<Particle>,
}

impl ParticleEnsemble {
    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    /// Linear particle size factor `ε^α`.
    pub fn scale(&self) -> f64 {
        self.epsilon.powf(self.params.alpha)
    }

    /// Realized spheroid `x_i + ε^α R_i P`.
    pub fn realized(&self, i: usize) -> Spheroid {
        let p = &self.particles[i];
        let s = self.scale();
        Spheroid::new(p.center, self.reference.a() * s, self.reference.b() * s, p.rotation)
            .expect("scaled reference spheroid stays valid")
    }

    pub fn realized_all(&self) -> Vec<Spheroid> {
        (0..self.len()).map(|i| self.realized(i)).collect()
    }

    /// Volume of one realized particle.
    pub fn particle_volume(&self) -> f64 {
        self.reference.volume() * self.scale().powi(3)
    }

    /// Homothety factor of the security layer, `dε / (2 ε^α a)`.
    pub fn security_factor(&self) -> f64 {
        self.params.d * self.epsilon / (2.0 * self.scale() * self.reference.a())
    }

    /// Bound `N ε⁻³` with `N = (|Ω| + 1)/d³`.
    pub fn count_bound(&self) -> f64 {
        (self.domain.volume() + 1.0) / self.params.d.powi(3) * self.epsilon.powi(-3)
    }

    /// Nearest-neighbour center distance of every particle (infinite for a single particle).
    pub fn nearest_neighbor_distances(&self) -> Vec<f64> {
        let n = self.len();
        let mut nn = vec![f64::INFINITY; n];
        for i in 0..n {
            for j in (i + 1)..n {
                let r = (self.particles[i].center - self.particles[j].center).norm();
                nn[i] = nn[i].min(r);
                nn[j] = nn[j].min(r);
            }
        }
        nn
    }

    /// Checks the ensemble invariants: containment of the security layer in Ω,
    /// separation bounds, the count bound, and pairwise disjointness.
    pub fn validate(&self) -> Result<()> {
        let eps = self.epsilon;
        let (d, big_d) = (self.params.d, self.params.big_d);
        let layer = (self.security_factor().max(1.0)) * self.scale() * self.reference.a();
        for (i, p) in self.particles.iter().enumerate() {
            if self.domain.distance_to_boundary(&p.center) < layer * (1.0 - 1e-12) {
                return Err(Error::Packing(format!(
                    "particle {i} at {:?} is within {layer:.4e} of the domain boundary",
                    p.center.as_slice()
                )));
            }
        }
        if self.len() > 1 {
            let nn = self.nearest_neighbor_distances();
            let tol = 1e-12 * eps;
            for (i, r) in nn.iter().enumerate() {
                if *r < d * eps - tol || *r > big_d * eps + tol {
                    return Err(Error::Packing(format!(
                        "particle {i}: nearest-neighbour distance {r:.6e} outside [{:.6e}, {:.6e}]",
                        d * eps,
                        big_d * eps
                    )));
                }
            }
        }
        if self.len() as f64 > self.count_bound() {
            return Err(Error::Packing(format!(
                "{} particles exceed the bound N ε⁻³ = {:.1}",
                self.len(),
                self.count_bound()
            )));
        }
        self.check_disjoint()
    }

    fn check_disjoint(&self) -> Result<()> {
        let reach = 2.0 * self.scale() * self.reference.a();
        for i in 0..self.len() {
            for j in (i + 1)..self.len() {
                let r = (self.particles[i].center - self.particles[j].center).norm();
                if r > reach {
                    continue;
                }
                if spheroids_overlap(&self.realized(i), &self.realized(j)) {
                    return Err(Error::Packing(format!("particles {i} and {j} intersect")));
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let num = |v: f64| format!("{v:.16e}");
        let p = &self.params;
        let mut s = String::new();
        let _ = write!(
            s,
            "{{\n  \"epsilon\": {},\n  \"domain\": {{\"lo\": [{}, {}, {}], \"hi\": [{}, {}, {}]}},\n  \"reference\": {{\"a\": {}, \"b\": {}}},\n",
            num(self.epsilon),
            num(self.domain.lo[0]),
            num(self.domain.lo[1]),
            num(self.domain.lo[2]),
            num(self.domain.hi[0]),
            num(self.domain.hi[1]),
            num(self.domain.hi[2]),
            num(self.reference.a()),
            num(self.reference.b()),
        );
        let _ = write!(
            s,
            "  \"params\": {{\"alpha\": {}, \"beta1\": {}, \"beta2\": {}, \"gamma\": {}, \"g\": {}, \"m\": {}, \"h\": [{}, {}, {}], \"d\": {}, \"D\": {}}},\n  \"particles\": [",
            num(p.alpha),
            num(p.beta1),
            num(p.beta2),
            num(p.gamma),
            num(p.g),
            num(p.m),
            num(p.h[0]),
            num(p.h[1]),
            num(p.h[2]),
            num(p.d),
            num(p.big_d),
        );
        for (i, part) in self.particles.iter().enumerate() {
            let rot: Vec<String> = part.rotation.to_row_major().iter().map(|v| num(*v)).collect();
            let _ = write!(
                s,
                "{}\n    {{\"center\": [{}, {}, {}], \"rotation\": [{}]}}",
                if i == 0 { "" } else { "," },
                num(part.center.x),
                num(part.center.y),
                num(part.center.z),
                rot.join(", ")
            );
        }
        s.push_str(if self.particles.is_empty() { "]\n}\n" } else { "\n  ]\n}\n" });
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: EnsembleDoc = serde_json::from_str(text)?;
        let domain = Domain::new(doc.domain.lo, doc.domain.hi)?;
        let reference = Spheroid::reference(doc.reference.a, doc.reference.b)?;
        let particles = doc
            .particles
            .into_iter()
            .map(|p| {
                Ok(Particle {
                    center: Vec3::from(p.center),
                    rotation: Rotation::from_row_major(&p.rotation)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ParticleEnsemble {
            epsilon: doc.epsilon,
            domain,
            reference,
            params: doc.params,
            particles,
        })
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

#[derive(Deserialize)]
struct EnsembleDoc {
    epsilon: f64,
    domain: Domain,
    reference: ReferenceDoc,
    params: ScalingParams,
    particles: Vec<ParticleDoc>,
}

#[derive(Deserialize)]
struct ReferenceDoc {
    a: f64,
    b: f64,
}

#[derive(Deserialize)]
struct ParticleDoc {
    center: [f64; 3],
    rotation: [f64; 9],
}

/// Conservative intersection test for two spheroids.
///
/// Disjoint inscribed/bounding spheres settle most pairs; otherwise surface
/// samples of each spheroid are tested against the other.
pub fn spheroids_overlap(p: &Spheroid, q: &Spheroid) -> bool {
    let r = (p.center() - q.center()).norm();
    if r > p.a() + q.a() {
        return false;
    }
    if r < p.b() + q.b() || p.contains(&q.center()) || q.contains(&p.center()) {
        return true;
    }
    let hits = |s: &Spheroid, t: &Spheroid| {
        make_surface_quadrature(s, 16, 32)
            .map(|quad| quad.nodes.iter().any(|x| t.contains(x)))
            .unwrap_or(true)
    };
    hits(p, q) || hits(q, p)
}

fn lattice_layout(domain: &Domain, epsilon: f64) -> ([usize; 3], [f64; 3]) {
    let mut counts = [0usize; 3];
    let mut first = [0.0; 3];
    for d in 0..3 {
        let ext = domain.extent(d);
        let n = (ext / epsilon + 1e-9).floor() as usize;
        counts[d] = n;
        // cell-centered lattice, centered in the box
        first[d] = domain.lo[d] + 0.5 * (ext - n as f64 * epsilon) + 0.5 * epsilon;
    }
    (counts, first)
}

fn check_generation_inputs(epsilon: f64, domain: &Domain, p: &ScalingParams) -> Result<[usize; 3]> {
    if !(epsilon > 0.0) {
        return Err(Error::Config(format!("epsilon must be positive, got {epsilon}")));
    }
    if !(p.d > 0.0 && p.d < p.big_d) {
        return Err(Error::Config(format!("separation constants need 0 < d < D, got d={}, D={}", p.d, p.big_d)));
    }
    if p.d > 1.0 || p.big_d < 1.0 {
        return Err(Error::Config(format!(
            "a lattice of side ε needs d <= 1 <= D, got d={}, D={}",
            p.d, p.big_d
        )));
    }
    let (counts, _) = lattice_layout(domain, epsilon);
    if counts.iter().product::<usize>() < 8 {
        return Err(Error::Config(format!(
            "domain too small: only {counts:?} lattice cells of side {epsilon} fit"
        )));
    }
    Ok(counts)
}

/// Particles on the cell-centered cubic lattice of side ε, oriented by
/// `rotation_field` evaluated at each center.
///
/// Centers sit at half a cell from the walls, so every particle (and its
/// security layer) stays inside Ω.
pub fn generate_periodic(
    epsilon: f64,
    domain: &Domain,
    params: &ScalingParams,
    reference: &Spheroid,
    rotation_field: impl Fn(&Vec3) -> Rotation,
) -> Result<ParticleEnsemble> {
    let counts = check_generation_inputs(epsilon, domain, params)?;
    let (_, first) = lattice_layout(domain, epsilon);
    let mut particles = Vec::with_capacity(counts.iter().product());
    for k in 0..counts[2] {
        for j in 0..counts[1] {
            for i in 0..counts[0] {
                let center = Vec3::new(
                    first[0] + i as f64 * epsilon,
                    first[1] + j as f64 * epsilon,
                    first[2] + k as f64 * epsilon,
                );
                particles.push(Particle {
                    center,
                    rotation: rotation_field(&center),
                });
            }
        }
    }
    let e = ParticleEnsemble {
        epsilon,
        domain: *domain,
        reference: Spheroid::reference(reference.a(), reference.b())?,
        params: *params,
        particles,
    };
    e.validate()?;
    Ok(e)
}

/// Seeded hard-core configuration on a jittered lattice with orientations
/// drawn uniformly from SO(3).
///
/// The jitter half-width is chosen so that every lattice neighbour stays
/// within `Dε`; the lower bound `dε` is enforced by rejection.
pub fn generate_random(
    epsilon: f64,
    domain: &Domain,
    params: &ScalingParams,
    reference: &Spheroid,
    seed: u64,
) -> Result<ParticleEnsemble> {
    const RETRIES: usize = 1000;
    let counts = check_generation_inputs(epsilon, domain, params)?;
    let (_, first) = lattice_layout(domain, epsilon);
    let big_d = params.big_d;
    // worst axis neighbour: sqrt((1+2δ)² + 8δ²) <= D
    let delta = ((-4.0 + (16.0 + 48.0 * (big_d * big_d - 1.0)).sqrt()) / 24.0).min(0.25) * epsilon;
    let size = epsilon.powf(params.alpha);
    let reference = Spheroid::reference(reference.a(), reference.b())?;
    let margin = (0.5 * params.d * epsilon).max(size * reference.a());

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(STREAM_ENSEMBLE);

    let idx = |i: usize, j: usize, k: usize| i + counts[0] * (j + counts[1] * k);
    let mut placed: Vec<Option<Particle>> = vec![None; counts.iter().product()];
    for k in 0..counts[2] {
        for j in 0..counts[1] {
            for i in 0..counts[0] {
                let site = Vec3::new(
                    first[0] + i as f64 * epsilon,
                    first[1] + j as f64 * epsilon,
                    first[2] + k as f64 * epsilon,
                );
                let rotation = Rotation::uniform(&mut rng);
                let mut accepted = None;
                for _ in 0..RETRIES {
                    let jitter = Vec3::new(
                        rng.gen_range(-1.0..=1.0),
                        rng.gen_range(-1.0..=1.0),
                        rng.gen_range(-1.0..=1.0),
                    ) * delta;
                    let center = site + jitter;
                    if domain.distance_to_boundary(&center) < margin {
                        continue;
                    }
                    let candidate = Spheroid::new(center, reference.a() * size, reference.b() * size, rotation)?;
                    let mut ok = true;
                    'nb: for dk in -1i64..=1 {
                        for dj in -1i64..=1 {
                            for di in -1i64..=1 {
                                let (ni, nj, nk) = (i as i64 + di, j as i64 + dj, k as i64 + dk);
                                if ni < 0 || nj < 0 || nk < 0 {
                                    continue;
                                }
                                let (ni, nj, nk) = (ni as usize, nj as usize, nk as usize);
                                if ni >= counts[0] || nj >= counts[1] || nk >= counts[2] {
                                    continue;
                                }
                                if let Some(other) = placed[idx(ni, nj, nk)] {
                                    let r = (other.center - center).norm();
                                    let other_s = Spheroid::new(
                                        other.center,
                                        reference.a() * size,
                                        reference.b() * size,
                                        other.rotation,
                                    )?;
                                    if r < params.d * epsilon || spheroids_overlap(&candidate, &other_s) {
                                        ok = false;
                                        break 'nb;
                                    }
                                }
                            }
                        }
                    }
                    if ok {
                        accepted = Some(Particle { center, rotation });
                        break;
                    }
                }
                match accepted {
                    Some(p) => placed[idx(i, j, k)] = Some(p),
                    None => {
                        return Err(Error::Packing(format!(
                            "no admissible position for lattice site ({i},{j},{k}) after {RETRIES} draws \
                             (ε={epsilon}, jitter={delta:.3e}, dε={:.3e}, particle size={:.3e})",
                            params.d * epsilon,
                            size * reference.a()
                        )))
                    }
                }
            }
        }
    }
    let e = ParticleEnsemble {
        epsilon,
        domain: *domain,
        reference,
        params: *params,
        particles: placed.into_iter().flatten().collect(),
    };
    e.validate()?;
    Ok(e)
}

/// Fraction of Ω occupied by particles, `N_ε Vol(P) ε^{3α} / |Ω|`.
pub fn volume_fraction(e: &ParticleEnsemble) -> f64 {
    e.len() as f64 * e.particle_volume() / e.domain.volume()
}
