//! Exterior magnetostatics of uniformly magnetized prolate spheroids, dipole
//! interactions, Zeeman energy, and the ε-scaling study of the pair energies.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::ensemble::{generate_periodic, spheroids_overlap, ParticleEnsemble, ScalingParams};
use crate::error::{Error, Result};
use crate::geometry::{make_volume_quadrature, Rotation, Spheroid, Vec3};
use crate::grid::Domain;
use crate::quadrature::loglog_slope;

/// Default Gauss order per direction of the volume rule used for pair energies.
pub const DEFAULT_VOLUME_ORDER: usize = 8;

/// Far-field coefficient `c` in `φ ≈ c a b² m z / r³`.
pub const DIPOLE_COEFFICIENT: f64 = 4.0 * PI / 3.0;

/// How the magnetization density of a particle scales with ε.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentConvention {
    /// `m ε^β₁`.
    DensityScaled,
    /// `Vol(P^ε) m ε^β₁`; its Zeeman sum converges to `∫(h, M)` with the
    /// `Vol²(P)` amplitude in `M`.
    #[default]
    VolumeWeighted,
}

impl MomentConvention {
    pub fn density(&self, p: &ScalingParams, eps: f64, particle_volume: f64) -> f64 {
        match self {
            MomentConvention::DensityScaled => p.m * eps.powf(p.beta1),
            MomentConvention::VolumeWeighted => p.moment_density(eps, particle_volume),
        }
    }
}

/// A spheroid carrying uniform magnetization density `m` along its axis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MagnetizedSpheroid {
    pub geometry: Spheroid,
    pub m: f64,
}

impl MagnetizedSpheroid {
    pub fn new(geometry: Spheroid, m: f64) -> Self {
        MagnetizedSpheroid { geometry, m }
    }

    /// Total moment `(4π a b² m / 3) R ẑ`.
    pub fn moment(&self) -> Vec3 {
        self.geometry.rotation().axis() * (self.strength())
    }

    /// Magnetization density vector `m R ẑ`.
    pub fn density_vector(&self) -> Vec3 {
        self.geometry.rotation().axis() * self.m
    }

    /// `c a b² m`, the dipole strength.
    fn strength(&self) -> f64 {
        let g = &self.geometry;
        DIPOLE_COEFFICIENT * g.a() * g.b() * g.b() * self.m
    }
}

fn focal_sq(s: &Spheroid) -> f64 {
    (s.a() * s.a() - s.b() * s.b()).max(0.0)
}

fn require_outside(s: &Spheroid, x: &Vec3) -> Result<Vec3> {
    if s.implicit(x) <= 1.0 {
        return Err(Error::Domain(format!("point {:?} is not outside the spheroid", x.as_slice())));
    }
    Ok(s.to_local(x))
}

fn confocal_local(c2: f64, y: &Vec3) -> f64 {
    let r2 = y.norm_squared();
    let s = c2 + r2;
    let disc = (s * s - 4.0 * y.z * y.z * c2).max(0.0);
    0.5 * (s + disc.sqrt())
}

/// Largest root `ξ` of `ρ²/(ξ + b² − a²) + z²/ξ = 1` in the particle frame.
pub fn confocal_coordinate(s: &Spheroid, x: &Vec3) -> Result<f64> {
    let y = require_outside(s, x)?;
    Ok(confocal_local(focal_sq(s), &y))
}

/// `(atanh t − t)/t³`, with its odd series near zero.
fn atanh_remainder(t: f64) -> f64 {
    if t < 0.1 {
        let t2 = t * t;
        let mut term = 1.0;
        let mut sum = 0.0;
        for k in 0..12 {
            sum += term / (2 * k + 3) as f64;
            term *= t2;
        }
        sum
    } else {
        (t.atanh() - t) / (t * t * t)
    }
}

/// Exact exterior potential of a uniformly magnetized prolate spheroid.
pub fn exact_exterior_potential(ms: &MagnetizedSpheroid, x: &Vec3) -> Result<f64> {
    let s = &ms.geometry;
    let y = require_outside(s, x)?;
    let c2 = focal_sq(s);
    let xi = confocal_local(c2, &y);
    let f = if c2 / (s.a() * s.a()) < 1e-10 {
        1.0 / 3.0
    } else {
        atanh_remainder((c2 / xi).sqrt())
    };
    Ok(4.0 * PI * s.a() * s.b() * s.b() * ms.m * y.z * f / xi.powf(1.5))
}

fn require_far(ms: &MagnetizedSpheroid, x: &Vec3) -> Result<Vec3> {
    let d = x - ms.geometry.center();
    if d.norm() <= 2.0 * ms.geometry.a() {
        return Err(Error::Domain(format!(
            "dipole expansion requested at distance {:.3e} <= 2a = {:.3e}",
            d.norm(),
            2.0 * ms.geometry.a()
        )));
    }
    Ok(d)
}

/// Leading dipole term `c a b² m z / r³` of the exterior potential.
pub fn dipole_far_potential(ms: &MagnetizedSpheroid, x: &Vec3) -> Result<f64> {
    let d = require_far(ms, x)?;
    let r = d.norm();
    let z = ms.geometry.rotation().axis().dot(&d);
    Ok(ms.strength() * z / (r * r * r))
}

/// Dipole field without the far-zone check.
#[inline]
fn dipole_field_unchecked(center: &Vec3, axis: &Vec3, strength: f64, x: &Vec3) -> Vec3 {
    let d = x - center;
    let r2 = d.norm_squared();
    let r = r2.sqrt();
    let inv3 = 1.0 / (r2 * r);
    let pz = axis.dot(&d);
    (d * (3.0 * pz / r2) - axis) * (strength * inv3)
}

/// `H = −∇φ_dipole = c a b² m (3 (p̂·x) x / r⁵ − p̂ / r³)`.
pub fn dipole_field_h(ms: &MagnetizedSpheroid, x: &Vec3) -> Result<Vec3> {
    require_far(ms, x)?;
    Ok(dipole_field_unchecked(
        &ms.geometry.center(),
        &ms.geometry.rotation().axis(),
        ms.strength(),
        x,
    ))
}

/// Quadrature nodes and moment data of one magnetized particle.
struct PairSource {
    center: Vec3,
    axis: Vec3,
    strength: f64,
    density: Vec3,
    points: Vec<Vec3>,
    weights: Vec<f64>,
}

impl PairSource {
    fn new(ms: &MagnetizedSpheroid, order: usize) -> Result<Self> {
        let q = make_volume_quadrature(&ms.geometry, order)?;
        Ok(PairSource {
            center: ms.geometry.center(),
            axis: ms.geometry.rotation().axis(),
            strength: ms.strength(),
            density: ms.density_vector(),
            points: q.points,
            weights: q.weights,
        })
    }

    /// `∫_{P_self} (H_other, m_self) dV`.
    fn absorb(&self, other: &PairSource) -> f64 {
        let mut s = 0.0;
        for (x, w) in self.points.iter().zip(&self.weights) {
            s += w * dipole_field_unchecked(&other.center, &other.axis, other.strength, x).dot(&self.density);
        }
        s
    }

    fn pair(&self, other: &PairSource) -> f64 {
        self.absorb(other) + other.absorb(self)
    }
}

/// `∫_{P_i}(H_j, m_i) dV + ∫_{P_j}(H_i, m_j) dV` with point-dipole source fields.
///
/// Positive for a head-to-tail pair; the energy functional subtracts it.
pub fn pair_interaction_energy(mi: &MagnetizedSpheroid, mj: &MagnetizedSpheroid) -> Result<f64> {
    pair_interaction_energy_with(mi, mj, DEFAULT_VOLUME_ORDER)
}

pub fn pair_interaction_energy_with(mi: &MagnetizedSpheroid, mj: &MagnetizedSpheroid, order: usize) -> Result<f64> {
    if spheroids_overlap(&mi.geometry, &mj.geometry) {
        return Err(Error::Geometry("pair energy requested for intersecting particles".into()));
    }
    Ok(PairSource::new(mi, order)?.pair(&PairSource::new(mj, order)?))
}

/// Realized magnetized particles of an ensemble.
pub fn magnetized_particles(e: &ParticleEnsemble, convention: MomentConvention) -> Vec<MagnetizedSpheroid> {
    let density = convention.density(&e.params, e.epsilon, e.particle_volume());
    e.realized_all()
        .into_iter()
        .map(|s| MagnetizedSpheroid::new(s, density))
        .collect()
}

/// Pair energies summed over the ensemble.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct PairTotals {
    /// `Σ_{i<j} E_ij`.
    pub signed: f64,
    /// `Σ_{i<j} |E_ij|`.
    pub magnitude: f64,
    /// Mean `|E_ij|` over nearest-neighbour pairs.
    pub nearest_mean: f64,
    pub pairs: usize,
    pub nearest_pairs: usize,
}

/// All-pairs interaction energies, accumulated in fixed index order.
pub fn pair_totals(e: &ParticleEnsemble, convention: MomentConvention, order: usize) -> Result<PairTotals> {
    let sources = magnetized_particles(e, convention)
        .iter()
        .map(|ms| PairSource::new(ms, order))
        .collect::<Result<Vec<_>>>()?;
    let nn = e.nearest_neighbor_distances();
    let mut t = PairTotals::default();
    let mut nn_sum = 0.0;
    for i in 0..sources.len() {
        for j in (i + 1)..sources.len() {
            let v = sources[i].pair(&sources[j]);
            t.signed += v;
            t.magnitude += v.abs();
            t.pairs += 1;
            let r = (sources[i].center - sources[j].center).norm();
            if r <= nn[i].min(nn[j]) * (1.0 + 1e-9) {
                nn_sum += v.abs();
                t.nearest_pairs += 1;
            }
        }
    }
    if t.nearest_pairs > 0 {
        t.nearest_mean = nn_sum / t.nearest_pairs as f64;
    }
    Ok(t)
}

/// `Σᵢ Vol(Pᵢ^ε) (mᵢ^ε, h_ε)`.
pub fn zeeman_energy(e: &ParticleEnsemble, p: &ScalingParams) -> f64 {
    zeeman_energy_with(e, p, MomentConvention::VolumeWeighted)
}

pub fn zeeman_energy_with(e: &ParticleEnsemble, p: &ScalingParams, convention: MomentConvention) -> f64 {
    let vol = e.particle_volume();
    let density = convention.density(p, e.epsilon, vol);
    let h = p.h_eps(e.epsilon);
    e.particles
        .iter()
        .map(|q| vol * density * q.rotation.axis().dot(&h))
        .sum()
}

/// One row of the interaction scaling study.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InteractionRow {
    pub epsilon: f64,
    pub n_particles: usize,
    pub pairs: PairTotals,
    pub zeeman_energy: f64,
    /// Slope of the magnitude total fitted over the rows so far (NaN for the first).
    pub slope_running: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InteractionStudy {
    pub rows: Vec<InteractionRow>,
    /// Fitted slope of the mean nearest-neighbour pair energy.
    pub per_pair_slope: f64,
    /// Fitted slope of the ensemble magnitude total.
    pub total_slope: f64,
    /// Largest `|signed total| / magnitude total` over the sweep.
    pub max_cancellation: f64,
}

/// Options of [`interaction_scaling_study`].
#[derive(Clone, Debug)]
pub struct InteractionStudyOptions {
    pub domain: Domain,
    pub reference: Spheroid,
    pub convention: MomentConvention,
    pub volume_order: usize,
}

impl Default for InteractionStudyOptions {
    fn default() -> Self {
        InteractionStudyOptions {
            domain: Domain::unit_cube(),
            reference: Spheroid::reference(0.5, 0.25).expect("valid reference"),
            convention: MomentConvention::DensityScaled,
            volume_order: 2,
        }
    }
}

/// Pair and Zeeman energies of periodic ensembles (`R ≡ I`) over an ε sweep.
pub fn interaction_scaling_study(
    p: &ScalingParams,
    eps: &[f64],
    opts: &InteractionStudyOptions,
) -> Result<InteractionStudy> {
    if eps.len() < 3 {
        return Err(Error::Study(format!("need at least 3 values of ε, got {}", eps.len())));
    }
    let mut rows = Vec::with_capacity(eps.len());
    for &e in eps {
        let ens = generate_periodic(e, &opts.domain, p, &opts.reference, |_| Rotation::identity())?;
        let pairs = pair_totals(&ens, opts.convention, opts.volume_order)?;
        rows.push(InteractionRow {
            epsilon: e,
            n_particles: ens.len(),
            pairs,
            zeeman_energy: zeeman_energy(&ens, p),
            slope_running: f64::NAN,
        });
        let k = rows.len();
        if k >= 2 {
            let x: Vec<f64> = rows.iter().map(|r| r.epsilon).collect();
            let y: Vec<f64> = rows.iter().map(|r| r.pairs.magnitude).collect();
            rows[k - 1].slope_running = loglog_slope(&x, &y).unwrap_or(f64::NAN);
        }
    }
    let x: Vec<f64> = rows.iter().map(|r| r.epsilon).collect();
    let per: Vec<f64> = rows.iter().map(|r| r.pairs.nearest_mean).collect();
    let tot: Vec<f64> = rows.iter().map(|r| r.pairs.magnitude).collect();
    let max_cancellation = rows
        .iter()
        .map(|r| if r.pairs.magnitude > 0.0 { r.pairs.signed.abs() / r.pairs.magnitude } else { 0.0 })
        .fold(0.0, f64::max);
    Ok(InteractionStudy {
        per_pair_slope: loglog_slope(&x, &per).unwrap_or(f64::NAN),
        total_slope: loglog_slope(&x, &tot).unwrap_or(f64::NAN),
        max_cancellation,
        rows,
    })
}
