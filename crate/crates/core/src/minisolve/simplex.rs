//! Dense bounded-variable primal simplex.
//!
//! Every column is shifted so its lower bound is zero; columns with only an
//! upper bound are mirrored and free columns are split. Each row receives a
//! slack (`<=`: `+s`, `>=`: `-s`, `=`: `s` fixed at zero) and, when the
//! all-at-lower-bound start violates the row, an artificial column. Phase one
//! minimizes the artificials, phase two the real objective. Pricing is
//! Dantzig's rule with a switch to Bland's rule after a run of degenerate
//! pivots.

use crate::mip::{ConstraintSense, MipInstance, ObjectiveSense};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Objective in the instance's own sense. `NaN` unless optimal.
    pub objective: f64,
    pub values: Vec<f64>,
}

impl LpSolution {
    fn failed(status: LpStatus, n: usize) -> Self {
        Self {
            status,
            objective: f64::NAN,
            values: vec![0.0; n],
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }
}

/// LP relaxation with the instance's own bounds.
pub fn solve_lp(instance: &MipInstance) -> LpSolution {
    let lower: Vec<f64> = instance.variables.iter().map(|v| v.lower_bound).collect();
    let upper: Vec<f64> = instance.variables.iter().map(|v| v.upper_bound).collect();
    solve_lp_with_bounds(instance, &lower, &upper)
}

const FEAS_TOL: f64 = 1e-9;
const OPT_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-9;
const DEGENERATE_RUN: usize = 50;

/// How an original column maps onto nonnegative simplex columns.
#[derive(Debug, Clone, Copy)]
enum ColumnMap {
    /// `x = offset + x'`
    Shifted { col: usize, offset: f64 },
    /// `x = offset - x'`
    Mirrored { col: usize, offset: f64 },
    /// `x = x+ - x-`
    Split { pos: usize, neg: usize },
}

/// LP relaxation with overridden variable bounds (used by branch-and-bound).
pub fn solve_lp_with_bounds(instance: &MipInstance, lower: &[f64], upper: &[f64]) -> LpSolution {
    let n = instance.n_variables();
    let m = instance.n_constraints();
    if lower.iter().zip(upper).any(|(l, u)| l > u) {
        return LpSolution::failed(LpStatus::Infeasible, n);
    }
    let sign = instance.objective_sense.sign();

    // Structural columns.
    let columns = instance.columns();
    let mut maps = Vec::with_capacity(n);
    let mut col_entries: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut col_upper: Vec<f64> = Vec::new();
    let mut col_cost: Vec<f64> = Vec::new();
    let mut rhs: Vec<f64> = instance.constraints.iter().map(|c| c.rhs).collect();
    for (j, var) in instance.variables.iter().enumerate() {
        let (l, u) = (lower[j], upper[j]);
        let c = sign * var.objective_coeff;
        if l.is_finite() {
            for &(r, a) in &columns[j] {
                rhs[r] -= a * l;
            }
            maps.push(ColumnMap::Shifted { col: col_entries.len(), offset: l });
            col_entries.push(columns[j].clone());
            col_upper.push(u - l);
            col_cost.push(c);
        } else if u.is_finite() {
            for &(r, a) in &columns[j] {
                rhs[r] -= a * u;
            }
            maps.push(ColumnMap::Mirrored { col: col_entries.len(), offset: u });
            col_entries.push(columns[j].iter().map(|&(r, a)| (r, -a)).collect());
            col_upper.push(f64::INFINITY);
            col_cost.push(-c);
        } else {
            let pos = col_entries.len();
            col_entries.push(columns[j].clone());
            col_entries.push(columns[j].iter().map(|&(r, a)| (r, -a)).collect());
            col_upper.extend([f64::INFINITY, f64::INFINITY]);
            col_cost.extend([c, -c]);
            maps.push(ColumnMap::Split { pos, neg: pos + 1 });
        }
    }
    let n_struct = col_entries.len();

    // Slacks.
    let mut slack_sign = Vec::with_capacity(m);
    for (i, con) in instance.constraints.iter().enumerate() {
        let (sigma, ub) = match con.sense {
            ConstraintSense::Le => (1.0, f64::INFINITY),
            ConstraintSense::Ge => (-1.0, f64::INFINITY),
            ConstraintSense::Eq => (1.0, 0.0),
        };
        slack_sign.push(sigma);
        col_entries.push(vec![(i, sigma)]);
        col_upper.push(ub);
        col_cost.push(0.0);
    }

    // Starting basis: slack where it is feasible at x' = 0, else artificial.
    let mut row_scale = vec![1.0; m];
    let mut basis = vec![0usize; m];
    let mut n_art = 0;
    let mut art_rows = Vec::new();
    for i in 0..m {
        let sigma = slack_sign[i];
        let slack_val = sigma * rhs[i];
        let eq = instance.constraints[i].sense == ConstraintSense::Eq;
        if slack_val >= -FEAS_TOL && (!eq || rhs[i].abs() <= FEAS_TOL) {
            row_scale[i] = sigma;
            basis[i] = n_struct + i;
        } else {
            row_scale[i] = if rhs[i] >= 0.0 { 1.0 } else { -1.0 };
            basis[i] = n_struct + m + n_art;
            art_rows.push(i);
            n_art += 1;
        }
    }
    for &i in &art_rows {
        col_entries.push(vec![(i, row_scale[i])]);
        col_upper.push(f64::INFINITY);
        col_cost.push(0.0);
    }
    let ncols = col_entries.len();

    let mut tab = Tableau::new(m, ncols, col_upper);
    for (j, entries) in col_entries.iter().enumerate() {
        for &(r, a) in entries {
            tab.t[r * ncols + j] += a * row_scale[r];
        }
    }
    let scaled_rhs: Vec<f64> = rhs.iter().zip(&row_scale).map(|(b, s)| b * s).collect();
    tab.original = tab.t.clone();
    tab.rhs = scaled_rhs;
    tab.initial_basis = basis.clone();
    tab.basis = basis;
    for &b in &tab.basis {
        tab.is_basic[b] = true;
    }
    tab.recompute_beta();

    let art_start = n_struct + m;
    if n_art > 0 {
        let mut phase1 = vec![0.0; ncols];
        for c in phase1.iter_mut().skip(art_start) {
            *c = 1.0;
        }
        tab.set_cost(phase1);
        if tab.run().is_err() {
            // Phase one is bounded below by zero; treat failure as infeasible.
            return LpSolution::failed(LpStatus::Infeasible, n);
        }
        tab.recompute_beta();
        let infeas: f64 = (0..m)
            .filter(|&i| tab.basis[i] >= art_start)
            .map(|i| tab.beta[i])
            .sum();
        if infeas > 1e-7 {
            return LpSolution::failed(LpStatus::Infeasible, n);
        }
        for j in art_start..ncols {
            tab.upper[j] = 0.0;
            tab.at_upper[j] = false;
        }
    }

    let mut cost = col_cost;
    cost.resize(ncols, 0.0);
    tab.set_cost(cost);
    if tab.run().is_err() {
        return LpSolution::failed(LpStatus::Unbounded, n);
    }
    tab.recompute_beta();

    let inner = tab.values();
    let values: Vec<f64> = maps
        .iter()
        .map(|map| match *map {
            ColumnMap::Shifted { col, offset } => offset + inner[col],
            ColumnMap::Mirrored { col, offset } => offset - inner[col],
            ColumnMap::Split { pos, neg } => inner[pos] - inner[neg],
        })
        .collect();
    let objective = instance.objective_value(&values);
    LpSolution {
        status: LpStatus::Optimal,
        objective,
        values,
    }
}

#[derive(Debug)]
struct Unbounded;

struct Tableau {
    m: usize,
    ncols: usize,
    /// `B^-1 A`, row-major.
    t: Vec<f64>,
    /// The row-scaled constraint matrix the tableau started from.
    original: Vec<f64>,
    rhs: Vec<f64>,
    beta: Vec<f64>,
    basis: Vec<usize>,
    initial_basis: Vec<usize>,
    is_basic: Vec<bool>,
    upper: Vec<f64>,
    at_upper: Vec<bool>,
    cost: Vec<f64>,
    reduced: Vec<f64>,
}

impl Tableau {
    fn new(m: usize, ncols: usize, upper: Vec<f64>) -> Self {
        Self {
            m,
            ncols,
            t: vec![0.0; m * ncols],
            original: Vec::new(),
            rhs: Vec::new(),
            beta: vec![0.0; m],
            basis: vec![0; m],
            initial_basis: Vec::new(),
            is_basic: vec![false; ncols],
            upper,
            at_upper: vec![false; ncols],
            cost: vec![0.0; ncols],
            reduced: vec![0.0; ncols],
        }
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.t[i * self.ncols..(i + 1) * self.ncols]
    }

    fn set_cost(&mut self, cost: Vec<f64>) {
        self.cost = cost;
        self.reduced.copy_from_slice(&self.cost);
        for i in 0..self.m {
            let cb = self.cost[self.basis[i]];
            if cb != 0.0 {
                let row = i * self.ncols;
                for j in 0..self.ncols {
                    self.reduced[j] -= cb * self.t[row + j];
                }
            }
        }
        for i in 0..self.m {
            self.reduced[self.basis[i]] = 0.0;
        }
    }

    fn nonbasic_value(&self, j: usize) -> f64 {
        if self.at_upper[j] {
            self.upper[j]
        } else {
            0.0
        }
    }

    /// Recomputes basic values from the original rows to shed pivot drift:
    /// `beta = B^-1 (b - N x_N)`. The starting basis is the identity of the
    /// row-scaled system, so its columns of the current tableau hold `B^-1`.
    fn recompute_beta(&mut self) {
        let mut r = self.rhs.clone();
        for j in 0..self.ncols {
            if self.is_basic[j] {
                continue;
            }
            let x = self.nonbasic_value(j);
            if x != 0.0 {
                for (i, ri) in r.iter_mut().enumerate() {
                    *ri -= self.original[i * self.ncols + j] * x;
                }
            }
        }
        for i in 0..self.m {
            let row = i * self.ncols;
            self.beta[i] = self
                .initial_basis
                .iter()
                .zip(&r)
                .map(|(&col, rk)| self.t[row + col] * rk)
                .sum();
        }
    }

    fn values(&self) -> Vec<f64> {
        let mut x: Vec<f64> = (0..self.ncols).map(|j| self.nonbasic_value(j)).collect();
        for (i, &b) in self.basis.iter().enumerate() {
            let ub = self.upper[b];
            x[b] = self.beta[i].max(0.0).min(ub);
        }
        x
    }

    fn run(&mut self) -> Result<(), Unbounded> {
        let mut degenerate = 0usize;
        let max_iter = 50 * (self.m + self.ncols) + 1000;
        for _ in 0..max_iter {
            let bland = degenerate >= DEGENERATE_RUN;
            let Some((q, dir)) = self.price(bland) else {
                return Ok(());
            };
            let step = self.ratio_test(q, dir, bland);
            let (t_max, leave) = match step {
                Some(s) => s,
                None => return Err(Unbounded),
            };
            if t_max <= FEAS_TOL {
                degenerate += 1;
            } else {
                degenerate = 0;
            }
            for i in 0..self.m {
                let a = self.t[i * self.ncols + q];
                if a != 0.0 {
                    self.beta[i] -= t_max * dir * a;
                }
            }
            match leave {
                None => self.at_upper[q] = !self.at_upper[q],
                Some(r) => {
                    let entering_value = self.nonbasic_value(q) + dir * t_max;
                    let leaving = self.basis[r];
                    let alpha = dir * self.t[r * self.ncols + q];
                    self.at_upper[leaving] = alpha < 0.0;
                    if self.upper[leaving] == 0.0 {
                        self.at_upper[leaving] = false;
                    }
                    self.pivot(r, q);
                    self.beta[r] = entering_value;
                    self.is_basic[leaving] = false;
                    self.is_basic[q] = true;
                    self.at_upper[q] = false;
                    self.basis[r] = q;
                }
            }
        }
        // Iteration cap: treat as converged at the current (feasible) point.
        Ok(())
    }

    fn price(&self, bland: bool) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        let mut best_score = 0.0;
        for j in 0..self.ncols {
            if self.is_basic[j] || self.upper[j] == 0.0 {
                continue;
            }
            let d = self.reduced[j];
            let dir = if !self.at_upper[j] && d < -OPT_TOL {
                1.0
            } else if self.at_upper[j] && d > OPT_TOL {
                -1.0
            } else {
                continue;
            };
            if bland {
                return Some((j, dir));
            }
            if d.abs() > best_score {
                best_score = d.abs();
                best = Some((j, dir));
            }
        }
        best
    }

    /// Returns the step length and the leaving row (`None` for a bound flip).
    fn ratio_test(&self, q: usize, dir: f64, bland: bool) -> Option<(f64, Option<usize>)> {
        let mut t_max = self.upper[q];
        let mut leave: Option<usize> = None;
        let mut leave_alpha = 0.0;
        for i in 0..self.m {
            let alpha = dir * self.t[i * self.ncols + q];
            let b = self.basis[i];
            let limit = if alpha > PIVOT_TOL {
                self.beta[i].max(0.0) / alpha
            } else if alpha < -PIVOT_TOL && self.upper[b].is_finite() {
                (self.upper[b] - self.beta[i]).max(0.0) / (-alpha)
            } else {
                continue;
            };
            let better = if limit < t_max - 1e-12 {
                true
            } else if limit <= t_max + 1e-12 && leave.is_some() {
                if bland {
                    b < self.basis[leave.unwrap()]
                } else {
                    alpha.abs() > leave_alpha
                }
            } else {
                false
            };
            if better {
                t_max = limit;
                leave = Some(i);
                leave_alpha = alpha.abs();
            }
        }
        if t_max.is_infinite() {
            None
        } else {
            Some((t_max, leave))
        }
    }

    fn pivot(&mut self, r: usize, q: usize) {
        let nc = self.ncols;
        let piv = self.t[r * nc + q];
        {
            let row = &mut self.t[r * nc..(r + 1) * nc];
            for v in row.iter_mut() {
                *v /= piv;
            }
            row[q] = 1.0;
        }
        let pivot_row: Vec<f64> = self.row(r).to_vec();
        for i in 0..self.m {
            if i == r {
                continue;
            }
            let f = self.t[i * nc + q];
            if f == 0.0 {
                continue;
            }
            let row = &mut self.t[i * nc..(i + 1) * nc];
            for (v, p) in row.iter_mut().zip(&pivot_row) {
                *v -= f * p;
            }
            row[q] = 0.0;
        }
        let dq = self.reduced[q];
        if dq != 0.0 {
            for (d, p) in self.reduced.iter_mut().zip(&pivot_row) {
                *d -= dq * p;
            }
            self.reduced[q] = 0.0;
        }
    }
}

/// Objective of `sense` as a minimization key.
pub(crate) fn min_key(sense: ObjectiveSense, objective: f64) -> f64 {
    sense.sign() * objective
}
