//! Small exact solver used as an oracle: dense simplex for LP relaxations,
//! branch-and-bound and exhaustive enumeration for MIPs.

mod bnb;
mod simplex;

use std::fmt::Write as _;

use thiserror::Error;

use crate::mip::MipInstance;

pub use bnb::{solve_mip, MipOptions, MipResult, MipSolution, MipStatus, SolveError};
pub use simplex::{solve_lp, solve_lp_with_bounds, LpSolution, LpStatus};

#[derive(Debug, Error, PartialEq)]
pub enum GapLabelError {
    #[error("LP relaxation is {0:?}")]
    LpNotOptimal(LpStatus),
    #[error("LP relaxation objective is zero")]
    ZeroLp,
    #[error("no feasible integer solution found")]
    NoIncumbent,
    #[error(transparent)]
    Solve(#[from] SolveError),
}

/// A gap label together with the two objectives it was computed from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapLabel {
    pub label: f64,
    pub z_lp: f64,
    pub z_incumbent: f64,
    pub status: MipStatus,
}

/// `z_incumbent / z_LP` where the incumbent is the best solution found
/// within the limits in `options`.
pub fn integrality_gap_label(
    instance: &MipInstance,
    options: &MipOptions,
) -> Result<GapLabel, GapLabelError> {
    let lp = solve_lp(instance);
    if !lp.is_optimal() {
        return Err(GapLabelError::LpNotOptimal(lp.status));
    }
    if lp.objective.abs() < 1e-12 {
        return Err(GapLabelError::ZeroLp);
    }
    let mip = solve_mip(instance, options)?;
    if !mip.solution.has_incumbent() {
        return Err(GapLabelError::NoIncumbent);
    }
    Ok(GapLabel {
        label: mip.solution.objective / lp.objective,
        z_lp: lp.objective,
        z_incumbent: mip.solution.objective,
        status: mip.solution.status,
    })
}

/// Normalized distance between an objective value and the best known one,
/// in `[0, 1]`. Values of opposite sign give 1.
pub fn primal_gap(objective: f64, best_known: f64) -> f64 {
    if objective == best_known {
        return 0.0;
    }
    if objective * best_known < 0.0 {
        return 1.0;
    }
    let denom = objective.abs().max(best_known.abs()).max(1e-10);
    ((objective - best_known).abs() / denom).min(1.0)
}

#[derive(Debug, Error)]
pub enum SolutionFileError {
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("missing `{0}` line")]
    Missing(&'static str),
}

/// Line-oriented solution text: `status`, `objective`, then one
/// `name value` line per variable.
pub fn write_solution(instance: &MipInstance, solution: &MipSolution) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "status {}", solution.status.as_str());
    let _ = writeln!(out, "objective {}", solution.objective);
    for (v, x) in instance.variables.iter().zip(&solution.values) {
        let _ = writeln!(out, "{} {}", v.name, x);
    }
    out
}

/// Reads a solution file against `instance`. Variables not listed are 0.
/// A missing objective line is recomputed from the values.
pub fn read_solution(instance: &MipInstance, text: &str) -> Result<MipSolution, SolutionFileError> {
    let mut status = None;
    let mut objective = None;
    let mut values = vec![0.0; instance.n_variables()];
    let index: std::collections::HashMap<&str, usize> = instance
        .variables
        .iter()
        .enumerate()
        .map(|(j, v)| (v.name.as_str(), j))
        .collect();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        let key = parts.next().unwrap_or_default();
        let val = parts.next();
        if parts.next().is_some() || val.is_none() {
            return Err(SolutionFileError::Malformed {
                line: i + 1,
                reason: "expected two fields".into(),
            });
        }
        let val = val.unwrap();
        let number = || {
            val.parse::<f64>().map_err(|_| SolutionFileError::Malformed {
                line: i + 1,
                reason: format!("bad number `{val}`"),
            })
        };
        match key {
            "status" => {
                status = Some(match val {
                    "optimal" => MipStatus::Optimal,
                    "feasible" => MipStatus::Feasible,
                    "infeasible" => MipStatus::Infeasible,
                    "limit" => MipStatus::Limit,
                    other => {
                        return Err(SolutionFileError::Malformed {
                            line: i + 1,
                            reason: format!("unknown status `{other}`"),
                        })
                    }
                })
            }
            "objective" => objective = Some(number()?),
            name => {
                let j = *index
                    .get(name)
                    .ok_or_else(|| SolutionFileError::UnknownVariable(name.to_string()))?;
                values[j] = number()?;
            }
        }
    }
    let status = status.ok_or(SolutionFileError::Missing("status"))?;
    let objective = objective.unwrap_or_else(|| instance.objective_value(&values));
    Ok(MipSolution {
        status,
        objective,
        values,
    })
}
