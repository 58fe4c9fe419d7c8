use serde::Serialize;

use crate::ensemble::{generate_periodic, RotationField, ScalingParams};
use crate::error::{Error, Result};
use crate::geometry::{Spheroid, Vec3};
use crate::grid::{Domain, Grid};

use super::extend::extend;
use super::field::VectorField;
use super::functional::{Functional, MicroOptions};
use super::minimize::{minimize, MinimizeOptions};

#[derive(Clone, Debug)]
pub struct UniformBoundOptions {
    pub domain: Domain,
    pub grid_n: usize,
    pub reference: Spheroid,
    pub rotation_field: RotationField,
    pub micro: MicroOptions,
    pub minimize: MinimizeOptions,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct UniformBoundRow {
    pub epsilon: f64,
    pub n_particles: usize,
    /// `E_ε[u_ε]` (liquid-crystal part).
    pub energy_min: f64,
    /// `E_ε[U]` with `U` sampled on every node.
    pub energy_data: f64,
    /// `‖ũ_ε‖_{H¹(Ω)}` of the extended minimizer.
    pub h1_extended: f64,
    pub extension_ratio: f64,
    pub iterations: usize,
}

/// Minimizes the microscale energy for each ε of a periodic sweep and
/// records the energy bound and the H¹ norm of the extended minimizer.
pub fn uniform_bound_study(
    p: &ScalingParams,
    eps: &[f64],
    boundary: impl Fn(&Vec3) -> Vec3,
    opts: &UniformBoundOptions,
) -> Result<Vec<UniformBoundRow>> {
    if eps.len() < 3 {
        return Err(Error::Study(format!("need at least 3 values of ε, got {}", eps.len())));
    }
    let grid = Grid::cube(opts.domain, opts.grid_n)?;
    let mut rows = Vec::with_capacity(eps.len());
    for &e in eps {
        let ens = generate_periodic(e, &opts.domain, p, &opts.reference, |x| opts.rotation_field.eval(x))?;
        let f0 = VectorField::with_particles(grid, &ens, &boundary)?;
        let func = Functional::micro(&f0, &ens, &opts.micro)?;
        let data: Vec<Vec3> = grid.sample(&boundary);
        let energy_data = func.energy(&data).variable();
        let out = minimize(&func, f0, &opts.minimize)?;
        let ext = extend(&out.field, &ens)?;
        rows.push(UniformBoundRow {
            epsilon: e,
            n_particles: ens.len(),
            energy_min: out.energy.variable(),
            energy_data,
            h1_extended: ext.h1_extended,
            extension_ratio: ext.ratio,
            iterations: out.iterations,
        });
    }
    Ok(rows)
}
