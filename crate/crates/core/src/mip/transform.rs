use rand::seq::index;

use super::model::{ConstraintDef, ConstraintSense, MipInstance, ModelError, ObjectiveSense};
use crate::seed::rng_from_seed;

/// Name given to the constraint emitted by [`add_pseudo_cut`].
pub const PSEUDO_CUT_NAME: &str = "__forge_pseudo_cut";

/// Adds the objective-bounding row `c'x >= bound` (minimization) or
/// `c'x <= bound` (maximization).
pub fn add_pseudo_cut(instance: &MipInstance, bound: f64) -> Result<MipInstance, ModelError> {
    if !bound.is_finite() {
        return Err(ModelError::NonFiniteBound(bound));
    }
    let row: Vec<(usize, f64)> = instance
        .variables
        .iter()
        .enumerate()
        .filter(|(_, v)| v.objective_coeff != 0.0)
        .map(|(j, v)| (j, v.objective_coeff))
        .collect();
    if row.is_empty() {
        return Err(ModelError::ZeroObjective);
    }
    let sense = match instance.objective_sense {
        ObjectiveSense::Minimize => ConstraintSense::Ge,
        ObjectiveSense::Maximize => ConstraintSense::Le,
    };
    let mut out = instance.clone();
    let mut name = PSEUDO_CUT_NAME.to_string();
    let mut suffix = 1;
    while out.constraints.iter().any(|c| c.name == name) {
        name = format!("{PSEUDO_CUT_NAME}_{suffix}");
        suffix += 1;
    }
    out.add_constraint(ConstraintDef::new(name, sense, bound), &row);
    Ok(out)
}

/// Removes `floor(fraction * m)` constraints chosen uniformly at random.
pub fn drop_constraints(instance: &MipInstance, fraction: f64, seed: u64) -> MipInstance {
    let m = instance.constraints.len();
    let fraction = fraction.clamp(0.0, 1.0);
    let n_drop = ((fraction * m as f64) + 1e-9).floor() as usize;
    let n_drop = n_drop.min(m);
    let mut out = instance.clone();
    if n_drop == 0 {
        return out;
    }
    let mut rng = rng_from_seed(seed);
    let mut dropped = vec![false; m];
    for i in index::sample(&mut rng, m, n_drop) {
        dropped[i] = true;
    }
    let mut remap = vec![usize::MAX; m];
    let mut next = 0;
    for (i, d) in dropped.iter().enumerate() {
        if !d {
            remap[i] = next;
            next += 1;
        }
    }
    out.constraints = instance
        .constraints
        .iter()
        .zip(&dropped)
        .filter(|(_, d)| !**d)
        .map(|(c, _)| c.clone())
        .collect();
    out.coefficients = instance
        .coefficients
        .iter()
        .filter(|a| !dropped[a.row])
        .map(|a| {
            let mut a = *a;
            a.row = remap[a.row];
            a
        })
        .collect();
    out
}
