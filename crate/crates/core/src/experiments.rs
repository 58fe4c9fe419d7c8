//! Run configuration and the experiment drivers behind the command line.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::corrector::{boundary_term_limit, cell_scaling_study, CellResolution, CellStudyOptions, Slope};
use crate::effective::{assemble_a_eps, assemble_m_eps, closed_form_a, closed_form_m, interior_nodes, lambda_coefficient};
use crate::energy::{lemma1_check, lemma2_constant, minimize, Functional, MicroOptions, MinimizeOptions, Minimized, PolynomialField, VectorField};
use crate::ensemble::{generate_periodic, generate_random, scaling_violations, volume_fraction, ParticleEnsemble, RotationField, ScalingParams};
use crate::error::{Error, Result};
use crate::geometry::{anchoring_eigenvalues, Rotation, Spheroid, Vec3};
use crate::grid::{Domain, Grid};
use crate::io::{write_vtk, Cell, CsvTable, PointData};
use crate::magnetics::{interaction_scaling_study, InteractionStudyOptions};
use crate::quadrature::loglog_slope;

/// Random stream for field initialization and random test fields.
pub const STREAM_INIT: u64 = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    MicroMin,
    HomogMin,
    Converge,
    MagnetScaling,
    CellScaling,
    VerifyLemmas,
    CoeffAssemble,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 7] = [
        ExperimentKind::MicroMin,
        ExperimentKind::HomogMin,
        ExperimentKind::Converge,
        ExperimentKind::MagnetScaling,
        ExperimentKind::CellScaling,
        ExperimentKind::VerifyLemmas,
        ExperimentKind::CoeffAssemble,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::MicroMin => "micro-min",
            ExperimentKind::HomogMin => "homog-min",
            ExperimentKind::Converge => "converge",
            ExperimentKind::MagnetScaling => "magnet-scaling",
            ExperimentKind::CellScaling => "cell-scaling",
            ExperimentKind::VerifyLemmas => "verify-lemmas",
            ExperimentKind::CoeffAssemble => "coeff-assemble",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }
}

/// Dirichlet data on ∂Ω.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BoundaryData {
    Constant { value: [f64; 3] },
    /// `(cos qz, sin qz, 0)`.
    Twist { q: f64 },
}

impl Default for BoundaryData {
    fn default() -> Self {
        BoundaryData::Constant { value: [0.0, 0.0, 1.0] }
    }
}

impl BoundaryData {
    pub fn eval(&self, x: &Vec3) -> Vec3 {
        match self {
            BoundaryData::Constant { value } => Vec3::from(*value),
            BoundaryData::Twist { q } => Vec3::new((q * x.z).cos(), (q * x.z).sin(), 0.0),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    #[default]
    Periodic,
    Random,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Shape {
    pub a: f64,
    pub b: f64,
}

impl Shape {
    pub fn spheroid(&self) -> Result<Spheroid> {
        Spheroid::reference(self.a, self.b)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Gradient-density tolerance of the minimizer.
    pub minimize: f64,
    pub max_iter: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        let m = MinimizeOptions::default();
        Tolerances {
            minimize: m.tol,
            max_iter: m.max_iter,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CellConfig {
    pub alphas: Vec<f64>,
    pub g: f64,
    pub w: [f64; 3],
    pub reference: Shape,
    pub n_angular: usize,
    pub n_radial: usize,
    pub grading: f64,
    pub r_cap: Option<f64>,
}

impl Default for CellConfig {
    fn default() -> Self {
        let r = CellResolution::default();
        CellConfig {
            alphas: vec![1.2, 1.5, 1.8],
            g: 1.0,
            w: [0.0, 0.0, 1.0],
            reference: Shape { a: 0.5, b: 0.25 },
            n_angular: r.n_angular,
            n_radial: r.n_radial,
            grading: r.grading,
            r_cap: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LemmaConfig {
    pub fields: usize,
    pub lambdas: Vec<f64>,
    pub shapes: Vec<Shape>,
    pub hat_ratio: f64,
}

impl Default for LemmaConfig {
    fn default() -> Self {
        LemmaConfig {
            fields: 50,
            lambdas: vec![0.5, 1.0, 2.0],
            shapes: vec![Shape { a: 1.0, b: 1.0 }, Shape { a: 3.0, b: 1.0 }, Shape { a: 6.0, b: 1.5 }],
            hat_ratio: 2.5,
        }
    }
}

fn default_grid() -> usize {
    32
}

fn default_reference() -> Shape {
    Shape { a: 0.8, b: 0.4 }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub kind: Option<ExperimentKind>,
    pub params: ScalingParams,
    #[serde(default = "Domain::unit_cube")]
    pub domain: Domain,
    /// Nodes per dimension.
    #[serde(default = "default_grid")]
    pub grid: usize,
    /// Strictly decreasing.
    pub epsilons: Vec<f64>,
    #[serde(default)]
    pub seed: u64,
    /// Mollifier width; defaults to `max(2ε, 2h)` per ε.
    #[serde(default)]
    pub eta: Option<f64>,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default = "default_reference")]
    pub reference: Shape,
    #[serde(default)]
    pub rotation_field: RotationField,
    #[serde(default)]
    pub boundary: BoundaryData,
    #[serde(default)]
    pub placement: Placement,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub cell: CellConfig,
    #[serde(default)]
    pub lemmas: LemmaConfig,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(v) = scaling_violations(&self.params).first() {
            return Err(Error::Config(format!("scaling relation violated: {} (residual {:.3e})", v.relation, v.residual)));
        }
        if self.grid < 8 {
            return Err(Error::Config(format!("grid resolution must be at least 8 per dimension, got {}", self.grid)));
        }
        if self.epsilons.is_empty() {
            return Err(Error::Config("ε list is empty".into()));
        }
        if let Some(e) = self.epsilons.iter().find(|e| !(**e > 0.0 && **e < 1.0)) {
            return Err(Error::Config(format!("ε must lie in (0, 1), got {e}")));
        }
        if self.epsilons.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::Config("ε list must be strictly decreasing".into()));
        }
        if let Some(eta) = self.eta {
            if !(eta > 0.0) {
                return Err(Error::Config(format!("mollifier width must be positive, got {eta}")));
            }
        }
        if !(self.tolerances.minimize > 0.0) || self.tolerances.max_iter == 0 {
            return Err(Error::Config("tolerances must be positive".into()));
        }
        self.reference.spheroid()?;
        Ok(())
    }

    fn grid(&self) -> Result<Grid> {
        Grid::cube(self.domain, self.grid)
    }

    fn minimize_options(&self) -> MinimizeOptions {
        MinimizeOptions {
            tol: self.tolerances.minimize,
            max_iter: self.tolerances.max_iter,
            record_trajectory: false,
        }
    }

    pub fn ensemble(&self, eps: f64) -> Result<ParticleEnsemble> {
        let reference = self.reference.spheroid()?;
        match self.placement {
            Placement::Periodic => generate_periodic(eps, &self.domain, &self.params, &reference, |x| self.rotation_field.eval(x)),
            Placement::Random => generate_random(eps, &self.domain, &self.params, &reference, self.seed),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, pass: bool, detail: String) -> Self {
        Check {
            name: name.into(),
            pass,
            detail,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunSummary {
    pub kind: ExperimentKind,
    pub checks: Vec<Check>,
    pub all_pass: bool,
    pub artifacts: Vec<String>,
}

struct Output {
    dir: PathBuf,
    artifacts: Vec<String>,
}

impl Output {
    fn csv(&mut self, name: &str, t: &CsvTable) -> Result<()> {
        t.write(&self.dir.join(name))?;
        self.artifacts.push(name.into());
        Ok(())
    }

    fn vtk(&mut self, name: &str, grid: &Grid, title: &str, data: &[PointData]) -> Result<()> {
        write_vtk(&self.dir.join(name), grid, title, data)?;
        self.artifacts.push(name.into());
        Ok(())
    }

    fn json(&mut self, name: &str, v: &serde_json::Value) -> Result<()> {
        let path = self.dir.join(name);
        let text = serde_json::to_string_pretty(v)?;
        std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
        self.artifacts.push(name.into());
        Ok(())
    }
}

fn decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] < w[0])
}

/// Masked L² distance and energy gap between a microscale and a homogenized minimizer.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Comparison {
    /// `(∫_{Ω∖∪P}|u_ε − u₀|²)^{1/2}`.
    pub l2_distance: f64,
    /// `|E_ε[u_ε] − F₀[u₀]|` on the u-dependent parts.
    pub energy_gap: f64,
}

pub fn compare_minimizers(micro: &Minimized, homog: &Minimized, e: &ParticleEnsemble) -> Result<Comparison> {
    let grid = micro.field.grid;
    if !grid.same_as(&homog.field.grid) {
        return Err(Error::GridMismatch(format!("{:?} vs {:?}", grid.n, homog.field.grid.n)));
    }
    let particles = e.realized_all();
    let w = grid.node_weights();
    let mut d2 = 0.0;
    for i in 0..grid.len() {
        let x = grid.position(i);
        if particles.iter().any(|p| p.contains(&x)) {
            continue;
        }
        d2 += w[i] * (micro.field.values[i] - homog.field.values[i]).norm_squared();
    }
    Ok(Comparison {
        l2_distance: d2.sqrt(),
        energy_gap: (micro.energy.variable() - homog.energy.variable()).abs(),
    })
}

/// Mean of `(M,u)²/(|M|²|u|²)` over the given nodes.
pub fn alignment_statistic(u: &[Vec3], m: &[Vec3], nodes: &[usize]) -> f64 {
    let mut sum = 0.0;
    let mut count = 0usize;
    for &i in nodes {
        let (nu, nm) = (u[i].norm_squared(), m[i].norm_squared());
        if nu > 1e-24 && nm > 1e-24 {
            sum += u[i].dot(&m[i]).powi(2) / (nu * nm);
            count += 1;
        }
    }
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

/// Homogenized minimizer with the closed-form coefficients of the configuration.
pub fn homogenized_minimizer(cfg: &RunConfig) -> Result<(Minimized, crate::effective::EffectiveCoefficients)> {
    let grid = cfg.grid()?;
    let reference = cfg.reference.spheroid()?;
    let (l1, l2) = anchoring_eigenvalues(&reference)?;
    let a = closed_form_a(|x| cfg.rotation_field.eval(x), cfg.params.g, l1, l2, &grid);
    let m = closed_form_m(|x| cfg.rotation_field.eval(x), cfg.params.m, &grid);
    let mut f0 = VectorField::new(grid, |x| cfg.boundary.eval(x));
    f0.initialize_harmonic()?;
    let func = Functional::homogenized(&f0, &a, &m, &cfg.params.h_vec())?;
    let out = minimize(&func, f0, &cfg.minimize_options())?;
    Ok((out, crate::effective::EffectiveCoefficients { a, m }))
}

/// Microscale minimizer for one ε, with the energy of the boundary data itself.
pub fn micro_minimizer(cfg: &RunConfig, eps: f64) -> Result<(ParticleEnsemble, Minimized, f64)> {
    let grid = cfg.grid()?;
    let e = cfg.ensemble(eps)?;
    let f0 = VectorField::with_particles(grid, &e, |x| cfg.boundary.eval(x))?;
    let func = Functional::micro(&f0, &e, &MicroOptions::default())?;
    let data = func.energy(&grid.sample(|x| cfg.boundary.eval(x))).variable();
    let out = minimize(&func, f0, &cfg.minimize_options())?;
    Ok((e, out, data))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub epsilon: f64,
    pub n_particles: usize,
    pub e_eps: f64,
    pub f0: f64,
    pub comparison: Comparison,
    pub iterations: usize,
}

pub fn convergence_study(cfg: &RunConfig) -> Result<(Vec<ConvergenceRow>, Minimized, Vec<Minimized>)> {
    if cfg.epsilons.len() < 3 {
        return Err(Error::Study(format!("need at least 3 values of ε, got {}", cfg.epsilons.len())));
    }
    let (homog, _) = homogenized_minimizer(cfg)?;
    let mut rows = Vec::new();
    let mut fields = Vec::new();
    for &eps in &cfg.epsilons {
        let (e, micro, _) = micro_minimizer(cfg, eps)?;
        let comparison = compare_minimizers(&micro, &homog, &e)?;
        rows.push(ConvergenceRow {
            epsilon: eps,
            n_particles: e.len(),
            e_eps: micro.energy.variable(),
            f0: homog.energy.variable(),
            comparison,
            iterations: micro.iterations,
        });
        fields.push(micro);
    }
    Ok((rows, homog, fields))
}

fn energy_header() -> Vec<&'static str> {
    vec!["bulk_gradient", "bulk_potential", "surface", "magnetic_pair", "zeeman", "total"]
}

fn energy_cells(e: &crate::energy::EnergyBreakdown) -> Vec<Cell> {
    vec![
        e.bulk_gradient.into(),
        e.bulk_potential.into(),
        e.surface.into(),
        e.magnetic_pair.into(),
        e.zeeman.into(),
        e.total.into(),
    ]
}

/// Runs one experiment and writes its artifacts, `manifest.json` and `summary.json` under `out`.
pub fn run(cfg: &RunConfig, kind: ExperimentKind, out: &Path) -> Result<RunSummary> {
    if let Some(k) = cfg.kind {
        if k != kind {
            return Err(Error::Config(format!("config is for '{}' but '{}' was requested", k.name(), kind.name())));
        }
    }
    cfg.validate()?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let start = Instant::now();
    let mut o = Output {
        dir: out.to_path_buf(),
        artifacts: Vec::new(),
    };
    let checks = match kind {
        ExperimentKind::MicroMin => run_micro(cfg, &mut o)?,
        ExperimentKind::HomogMin => run_homog(cfg, &mut o)?,
        ExperimentKind::Converge => run_converge(cfg, &mut o)?,
        ExperimentKind::MagnetScaling => run_magnet(cfg, &mut o)?,
        ExperimentKind::CellScaling => run_cell(cfg, &mut o)?,
        ExperimentKind::VerifyLemmas => run_lemmas(cfg, &mut o)?,
        ExperimentKind::CoeffAssemble => run_coeffs(cfg, &mut o)?,
    };
    let all_pass = checks.iter().all(|c| c.pass);
    let summary = RunSummary {
        kind,
        checks,
        all_pass,
        artifacts: o.artifacts.clone(),
    };
    o.json("summary.json", &serde_json::to_value(&summary)?)?;
    let manifest = json!({
        "tool": "ferronema",
        "version": env!("CARGO_PKG_VERSION"),
        "kind": kind.name(),
        "seed": cfg.seed,
        "config": cfg,
        "wall_time_s": start.elapsed().as_secs_f64(),
        "artifacts": o.artifacts,
    });
    o.json("manifest.json", &manifest)?;
    Ok(summary)
}

fn run_micro(cfg: &RunConfig, o: &mut Output) -> Result<Vec<Check>> {
    let mut header = vec!["epsilon", "n_particles", "iterations", "gradient_norm", "energy_data"];
    header.extend(energy_header());
    let mut t = CsvTable::new(&header);
    let mut below = true;
    let n = cfg.epsilons.len();
    for (k, &eps) in cfg.epsilons.iter().enumerate() {
        let (e, m, data) = micro_minimizer(cfg, eps)?;
        below &= m.energy.variable() <= data + 1e-12 * data.abs().max(1.0);
        let mut row: Vec<Cell> = vec![eps.into(), e.len().into(), m.iterations.into(), m.gradient_norm.into(), data.into()];
        row.extend(energy_cells(&m.energy));
        t.push(row);
        if k + 1 == n {
            o.vtk("micro_field.vtk", &m.field.grid, &format!("micro minimizer eps={eps}"), &[PointData::Vectors("u", &m.field.values)])?;
        }
    }
    o.csv("micro_energy.csv", &t)?;
    Ok(vec![Check::new("energy_below_boundary_data", below, "E[u_eps] <= E[U] for every eps".into())])
}

fn run_homog(cfg: &RunConfig, o: &mut Output) -> Result<Vec<Check>> {
    let (m, coeffs) = homogenized_minimizer(cfg)?;
    let mut header = vec!["iterations", "gradient_norm"];
    header.extend(energy_header());
    let mut t = CsvTable::new(&header);
    let mut row: Vec<Cell> = vec![m.iterations.into(), m.gradient_norm.into()];
    row.extend(energy_cells(&m.energy));
    t.push(row);
    o.csv("homog_energy.csv", &t)?;
    let grid = m.field.grid;
    o.vtk(
        "homog_field.vtk",
        &grid,
        "homogenized minimizer",
        &[
            PointData::Vectors("u", &m.field.values),
            PointData::Vectors("M", &coeffs.m.values),
            PointData::Tensors("A", &coeffs.a.values),
        ],
    )?;
    let reference = cfg.reference.spheroid()?;
    let (l1, l2) = anchoring_eigenvalues(&reference)?;
    let lam = lambda_coefficient(cfg.params.g, cfg.params.m, l1, l2)?;
    let nodes = interior_nodes(&grid, 0.25 * grid.domain.extent(0).min(grid.domain.extent(1)).min(grid.domain.extent(2)));
    let stat = alignment_statistic(&m.field.values, &coeffs.m.values, &nodes);
    let (pass, expect) = if lam > 0.0 {
        (stat < 0.1, "perpendicular (< 0.1)")
    } else if lam < 0.0 {
        (stat > 0.9, "parallel (> 0.9)")
    } else {
        (true, "none")
    };
    Ok(vec![Check::new(
        "alignment_follows_coupling_sign",
        pass,
        format!("Lambda = {lam:.6e}, mean normalized coupling = {stat:.6e}, expected {expect}"),
    )])
}

fn run_converge(cfg: &RunConfig, o: &mut Output) -> Result<Vec<Check>> {
    let (rows, homog, fields) = convergence_study(cfg)?;
    let mut t = CsvTable::new(&["epsilon", "n_particles", "E_eps", "F0", "energy_gap", "L2_distance", "iterations"]);
    for r in &rows {
        t.push(vec![
            r.epsilon.into(),
            r.n_particles.into(),
            r.e_eps.into(),
            r.f0.into(),
            r.comparison.energy_gap.into(),
            r.comparison.l2_distance.into(),
            r.iterations.into(),
        ]);
    }
    o.csv("convergence.csv", &t)?;
    if let Some(last) = fields.last() {
        o.vtk(
            "converge_fields.vtk",
            &homog.field.grid,
            "microscale and homogenized minimizers",
            &[PointData::Vectors("u_eps", &last.field.values), PointData::Vectors("u0", &homog.field.values)],
        )?;
    }
    let reference = cfg.reference.spheroid()?;
    let b = boundary_term_limit(|x| cfg.boundary.eval(x), &cfg.rotation_field, &cfg.params, &reference, &cfg.domain, &cfg.epsilons)?;
    let mut bt = CsvTable::new(&["epsilon", "n_particles", "boundary_sum", "limit", "gap"]);
    for r in &b.rows {
        bt.push(vec![r.epsilon.into(), r.n_particles.into(), r.sum.into(), b.limit.into(), r.gap.into()]);
    }
    o.csv("boundary_term.csv", &bt)?;
    let gaps: Vec<f64> = rows.iter().map(|r| r.comparison.energy_gap).collect();
    let dists: Vec<f64> = rows.iter().map(|r| r.comparison.l2_distance).collect();
    let bgaps: Vec<f64> = b.rows.iter().map(|r| r.gap).collect();
    let exact = bgaps.iter().all(|g| *g <= 1e-12 * b.limit.abs().max(1.0));
    Ok(vec![
        Check::new("energy_gap_decreasing", decreasing(&gaps), format!("{gaps:?}")),
        Check::new("l2_distance_decreasing", decreasing(&dists), format!("{dists:?}")),
        Check::new("boundary_term_gap_decreasing", exact || decreasing(&bgaps), format!("{bgaps:?}")),
    ])
}

fn run_magnet(cfg: &RunConfig, o: &mut Output) -> Result<Vec<Check>> {
    let opts = InteractionStudyOptions {
        domain: cfg.domain,
        reference: cfg.reference.spheroid()?,
        ..Default::default()
    };
    let study = interaction_scaling_study(&cfg.params, &cfg.epsilons, &opts)?;
    let mut t = CsvTable::new(&[
        "epsilon",
        "n_particles",
        "pairs",
        "nearest_pairs",
        "pair_energy_per_pair",
        "pair_energy_total",
        "pair_energy_signed",
        "zeeman_energy",
        "volume_fraction",
    ]);
    let mut fractions = Vec::new();
    for r in &study.rows {
        let e = generate_periodic(r.epsilon, &cfg.domain, &cfg.params, &opts.reference, |_| Rotation::identity())?;
        let f = volume_fraction(&e);
        fractions.push(f);
        t.push(vec![
            r.epsilon.into(),
            r.n_particles.into(),
            r.pairs.pairs.into(),
            r.pairs.nearest_pairs.into(),
            r.pairs.nearest_mean.into(),
            r.pairs.magnitude.into(),
            r.pairs.signed.into(),
            r.zeeman_energy.into(),
            f.into(),
        ]);
    }
    o.csv("magnet_scaling.csv", &t)?;
    let p = &cfg.params;
    let per_pair = 6.0 * p.alpha + 2.0 * p.beta1 - 3.0;
    let total = 6.0 * p.alpha + 2.0 * p.beta1 - 9.0;
    let vf = 3.0 * (p.alpha - 1.0);
    let vf_slope = loglog_slope(&cfg.epsilons, &fractions).unwrap_or(f64::NAN);
    let check = |name: &str, got: f64, want: f64, tol: f64| {
        Check::new(name, (got - want).abs() <= tol, format!("slope {got:.6} vs {want} ± {tol}"))
    };
    Ok(vec![
        check("per_pair_slope", study.per_pair_slope, per_pair, 0.3),
        check("total_slope", study.total_slope, total, 0.3),
        check("volume_fraction_slope", vf_slope, vf, 0.1),
    ])
}

fn run_cell(cfg: &RunConfig, o: &mut Output) -> Result<Vec<Check>> {
    let c = &cfg.cell;
    let opts = CellStudyOptions {
        particle: c.reference.spheroid()?,
        resolution: CellResolution {
            n_angular: c.n_angular,
            n_radial: c.n_radial,
            grading: c.grading,
        },
        r_cap: c.r_cap,
    };
    let mut t = CsvTable::new(&[
        "alpha", "kappa", "epsilon", "R_nominal", "R", "grad_energy", "l2_energy", "surf_energy", "slope_grad", "slope_l2", "slope_surf",
    ]);
    let mut checks = Vec::new();
    let slope_cell = |s: &Slope| match s {
        Slope::Fitted(v) => Cell::Num(*v),
        other => Cell::Text(other.to_string()),
    };
    for &alpha in &c.alphas {
        let kappa = 0.5 * (1.0 + alpha);
        let st = cell_scaling_study(c.g, Vec3::from(c.w), alpha, kappa, &cfg.epsilons, &opts)?;
        for r in &st.rows {
            t.push(vec![
                alpha.into(),
                kappa.into(),
                r.epsilon.into(),
                r.nominal_radius.into(),
                r.radius.into(),
                r.energies.grad.into(),
                r.energies.l2.into(),
                r.energies.surf.into(),
                slope_cell(&r.slopes[0]),
                slope_cell(&r.slopes[1]),
                slope_cell(&r.slopes[2]),
            ]);
        }
        checks.push(Check::new(
            &format!("cell_slopes_alpha_{alpha}"),
            st.satisfies(0.5),
            format!(
                "slopes (grad, l2, surf) = ({}, {}, {}) vs >= {}",
                st.slopes[0],
                st.slopes[1],
                st.slopes[2],
                st.expected - 0.5
            ),
        ));
    }
    o.csv("cell_scaling.csv", &t)?;
    Ok(checks)
}

fn run_lemmas(cfg: &RunConfig, o: &mut Output) -> Result<Vec<Check>> {
    let l = &cfg.lemmas;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(STREAM_INIT);
    let mut t = CsvTable::new(&["a", "b", "field", "lambda", "lhs", "rhs", "holds"]);
    let mut violations = 0usize;
    let mut total = 0usize;
    for shape in &l.shapes {
        let s = Spheroid::new(Vec3::zeros(), shape.a, shape.b, Rotation::uniform(&mut rng))?;
        for k in 0..l.fields {
            let u = PolynomialField::random(&mut rng, s.center(), 1.0, shape.a);
            for &lambda in &l.lambdas {
                let r = lemma1_check(&u, &s, lambda, l.hat_ratio)?;
                total += 1;
                if !r.holds {
                    violations += 1;
                }
                t.push(vec![shape.a.into(), shape.b.into(), k.into(), lambda.into(), r.lhs.into(), r.rhs.into(), (r.holds as usize).into()]);
            }
        }
    }
    o.csv("lemma1.csv", &t)?;
    let mut t2 = CsvTable::new(&["epsilon", "n_particles", "constant"]);
    let mut consts = Vec::new();
    let probe = PolynomialField::random(&mut rng, Vec3::from(cfg.domain.lo), 1.0, 1.0);
    for &eps in &cfg.epsilons {
        let e = cfg.ensemble(eps)?;
        let c = lemma2_constant(&e, &probe, 1.0)?;
        consts.push(c);
        t2.push(vec![eps.into(), e.len().into(), c.into()]);
    }
    o.csv("lemma2.csv", &t2)?;
    let (lo, hi) = consts.iter().fold((f64::INFINITY, 0.0_f64), |(a, b), v| (a.min(*v), b.max(*v)));
    Ok(vec![
        Check::new("lemma1_all_hold", violations == 0, format!("{violations} violations in {total} cases")),
        Check::new(
            "lemma2_constant_bounded",
            hi.is_finite() && (lo == 0.0 && hi == 0.0 || hi <= 10.0 * lo),
            format!("constant range [{lo:.6e}, {hi:.6e}]"),
        ),
    ])
}

fn run_coeffs(cfg: &RunConfig, o: &mut Output) -> Result<Vec<Check>> {
    let grid = cfg.grid()?;
    let reference = cfg.reference.spheroid()?;
    let (l1, l2) = anchoring_eigenvalues(&reference)?;
    let a0 = closed_form_a(|x| cfg.rotation_field.eval(x), cfg.params.g, l1, l2, &grid);
    let m0 = closed_form_m(|x| cfg.rotation_field.eval(x), cfg.params.m * reference.volume().powi(2), &grid);
    let eta_of = |eps: f64| cfg.eta.unwrap_or_else(|| (2.0 * eps).max(2.0 * grid.max_spacing()));
    let eta_max = cfg.epsilons.iter().map(|e| eta_of(*e)).fold(0.0, f64::max);
    let nodes = interior_nodes(&grid, 0.5 * eta_max + 1e-12);
    let mut t = CsvTable::new(&["epsilon", "eta", "n_particles", "a_deviation", "m_deviation"]);
    let (mut da, mut dm) = (Vec::new(), Vec::new());
    let n = cfg.epsilons.len();
    for (k, &eps) in cfg.epsilons.iter().enumerate() {
        let e = cfg.ensemble(eps)?;
        let eta = eta_of(eps);
        let a = assemble_a_eps(&e, eta, &grid)?;
        let m = assemble_m_eps(&e, eta, &grid)?;
        let (x, y) = (a.max_deviation(&a0, &nodes)?, m.max_deviation(&m0, &nodes)?);
        da.push(x);
        dm.push(y);
        t.push(vec![eps.into(), eta.into(), e.len().into(), x.into(), y.into()]);
        if k + 1 == n {
            o.vtk(
                "coefficients.vtk",
                &grid,
                &format!("assembled coefficients eps={eps}"),
                &[
                    PointData::Tensors("A_eps", &a.values),
                    PointData::Tensors("A", &a0.values),
                    PointData::Vectors("M_eps", &m.values),
                    PointData::Vectors("M", &m0.values),
                ],
            )?;
        }
    }
    o.csv("coefficients.csv", &t)?;
    Ok(vec![
        Check::new("a_deviation_decreasing", decreasing(&da), format!("{da:?}")),
        Check::new("m_deviation_decreasing", decreasing(&dm), format!("{dm:?}")),
    ])
}
