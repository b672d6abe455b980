use std::collections::HashSet;
use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ObjectiveSense {
    Minimize,
    Maximize,
}

impl ObjectiveSense {
    /// `+1` for minimization, `-1` for maximization.
    pub fn sign(self) -> f64 {
        match self {
            ObjectiveSense::Minimize => 1.0,
            ObjectiveSense::Maximize => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VarType {
    Binary,
    Integer,
    Continuous,
}

impl VarType {
    pub fn is_integral(self) -> bool {
        !matches!(self, VarType::Continuous)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ConstraintSense {
    Le,
    Ge,
    Eq,
}

impl fmt::Display for ConstraintSense {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ConstraintSense::Le => "<=",
            ConstraintSense::Ge => ">=",
            ConstraintSense::Eq => "=",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariableDef {
    pub name: String,
    pub var_type: VarType,
    pub lower_bound: f64,
    pub upper_bound: f64,
    pub objective_coeff: f64,
}

impl VariableDef {
    pub fn binary(name: impl Into<String>, objective_coeff: f64) -> Self {
        Self {
            name: name.into(),
            var_type: VarType::Binary,
            lower_bound: 0.0,
            upper_bound: 1.0,
            objective_coeff,
        }
    }

    pub fn continuous(name: impl Into<String>, lower: f64, upper: f64, objective_coeff: f64) -> Self {
        Self {
            name: name.into(),
            var_type: VarType::Continuous,
            lower_bound: lower,
            upper_bound: upper,
            objective_coeff,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintDef {
    pub name: String,
    pub sense: ConstraintSense,
    pub rhs: f64,
}

impl ConstraintDef {
    pub fn new(name: impl Into<String>, sense: ConstraintSense, rhs: f64) -> Self {
        Self {
            name: name.into(),
            sense,
            rhs,
        }
    }
}

/// One nonzero of the constraint matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coefficient {
    pub row: usize,
    pub col: usize,
    pub value: f64,
}

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("coefficient ({row}, {col}) references a missing constraint or variable")]
    DanglingCoefficient { row: usize, col: usize },
    #[error("duplicate coefficient for constraint {row}, variable {col}")]
    DuplicateCoefficient { row: usize, col: usize },
    #[error("coefficient ({row}, {col}) is not finite")]
    NonFiniteCoefficient { row: usize, col: usize },
    #[error("variable `{0}` has lower bound above upper bound")]
    InvertedBounds(String),
    #[error("integral variable `{0}` has an infinite bound")]
    UnboundedIntegral(String),
    #[error("binary variable `{0}` must have bounds [0, 1]")]
    BinaryBounds(String),
    #[error("variable `{0}` has a non-finite objective coefficient")]
    NonFiniteObjective(String),
    #[error("constraint `{0}` has a non-finite right-hand side")]
    NonFiniteRhs(String),
    #[error("duplicate name `{0}`")]
    DuplicateName(String),
    #[error("instance has an all-zero objective")]
    ZeroObjective,
    #[error("bound {0} is not finite")]
    NonFiniteBound(f64),
}

/// A mixed-integer program `min/max c'x s.t. Ax (<=,>=,=) b, l <= x <= u`.
#[derive(Debug, Clone, PartialEq)]
pub struct MipInstance {
    pub name: String,
    pub objective_sense: ObjectiveSense,
    pub variables: Vec<VariableDef>,
    pub constraints: Vec<ConstraintDef>,
    pub coefficients: Vec<Coefficient>,
}

impl MipInstance {
    pub fn new(name: impl Into<String>, objective_sense: ObjectiveSense) -> Self {
        Self {
            name: name.into(),
            objective_sense,
            variables: Vec::new(),
            constraints: Vec::new(),
            coefficients: Vec::new(),
        }
    }

    pub fn n_variables(&self) -> usize {
        self.variables.len()
    }

    pub fn n_constraints(&self) -> usize {
        self.constraints.len()
    }

    pub fn add_variable(&mut self, var: VariableDef) -> usize {
        self.variables.push(var);
        self.variables.len() - 1
    }

    /// Appends a constraint together with its row of coefficients.
    pub fn add_constraint(&mut self, con: ConstraintDef, row: &[(usize, f64)]) -> usize {
        let r = self.constraints.len();
        self.constraints.push(con);
        self.coefficients.extend(
            row.iter()
                .filter(|(_, v)| *v != 0.0)
                .map(|&(col, value)| Coefficient { row: r, col, value }),
        );
        r
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let mut names = HashSet::new();
        for v in &self.variables {
            if !names.insert(v.name.as_str()) {
                return Err(ModelError::DuplicateName(v.name.clone()));
            }
            if !v.objective_coeff.is_finite() {
                return Err(ModelError::NonFiniteObjective(v.name.clone()));
            }
            if v.lower_bound.is_nan() || v.upper_bound.is_nan() || v.lower_bound > v.upper_bound {
                return Err(ModelError::InvertedBounds(v.name.clone()));
            }
            match v.var_type {
                VarType::Binary if v.lower_bound != 0.0 || v.upper_bound != 1.0 => {
                    return Err(ModelError::BinaryBounds(v.name.clone()))
                }
                VarType::Integer if !v.lower_bound.is_finite() || !v.upper_bound.is_finite() => {
                    return Err(ModelError::UnboundedIntegral(v.name.clone()))
                }
                _ => {}
            }
        }
        let mut con_names = HashSet::new();
        for c in &self.constraints {
            if !con_names.insert(c.name.as_str()) {
                return Err(ModelError::DuplicateName(c.name.clone()));
            }
            if !c.rhs.is_finite() {
                return Err(ModelError::NonFiniteRhs(c.name.clone()));
            }
        }
        let mut seen = HashSet::with_capacity(self.coefficients.len());
        for a in &self.coefficients {
            if a.row >= self.constraints.len() || a.col >= self.variables.len() {
                return Err(ModelError::DanglingCoefficient { row: a.row, col: a.col });
            }
            if !a.value.is_finite() {
                return Err(ModelError::NonFiniteCoefficient { row: a.row, col: a.col });
            }
            if !seen.insert((a.row, a.col)) {
                return Err(ModelError::DuplicateCoefficient { row: a.row, col: a.col });
            }
        }
        Ok(())
    }

    /// Row-major view of the coefficient matrix.
    pub fn rows(&self) -> Vec<Vec<(usize, f64)>> {
        let mut rows = vec![Vec::new(); self.constraints.len()];
        for a in &self.coefficients {
            rows[a.row].push((a.col, a.value));
        }
        rows
    }

    /// Column-major view of the coefficient matrix.
    pub fn columns(&self) -> Vec<Vec<(usize, f64)>> {
        let mut cols = vec![Vec::new(); self.variables.len()];
        for a in &self.coefficients {
            cols[a.col].push((a.row, a.value));
        }
        cols
    }

    pub fn objective(&self) -> Vec<f64> {
        self.variables.iter().map(|v| v.objective_coeff).collect()
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.variables
            .iter()
            .zip(x)
            .map(|(v, xi)| v.objective_coeff * xi)
            .sum()
    }

    pub fn is_pure_binary(&self) -> bool {
        self.variables.iter().all(|v| v.var_type == VarType::Binary)
    }

    pub fn binary_indices(&self) -> Vec<usize> {
        self.variables
            .iter()
            .enumerate()
            .filter(|(_, v)| v.var_type == VarType::Binary)
            .map(|(i, _)| i)
            .collect()
    }

    /// Largest constraint violation of `x`, counting bounds and integrality
    /// separately is left to the caller.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut activity = vec![0.0; self.constraints.len()];
        for a in &self.coefficients {
            activity[a.row] += a.value * x[a.col];
        }
        let mut worst: f64 = 0.0;
        for (c, act) in self.constraints.iter().zip(&activity) {
            let v = match c.sense {
                ConstraintSense::Le => act - c.rhs,
                ConstraintSense::Ge => c.rhs - act,
                ConstraintSense::Eq => (act - c.rhs).abs(),
            };
            worst = worst.max(v);
        }
        for (v, xi) in self.variables.iter().zip(x) {
            worst = worst.max(v.lower_bound - xi).max(xi - v.upper_bound);
        }
        worst
    }

    pub fn is_feasible(&self, x: &[f64], tol: f64) -> bool {
        x.len() == self.variables.len()
            && self.max_violation(x) <= tol
            && self
                .variables
                .iter()
                .zip(x)
                .all(|(v, xi)| !v.var_type.is_integral() || (xi - xi.round()).abs() <= 1e-6)
    }

    pub fn variable_index(&self, name: &str) -> Option<usize> {
        self.variables.iter().position(|v| v.name == name)
    }
}
