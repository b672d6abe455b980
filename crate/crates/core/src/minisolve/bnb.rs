//! Depth-first branch-and-bound and exhaustive enumeration.

use std::time::{Duration, Instant};

use crate::mip::MipInstance;

use super::simplex::{min_key, solve_lp_with_bounds, LpStatus};

const INT_TOL: f64 = 1e-6;
const FEAS_TOL: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MipStatus {
    /// Search finished; the incumbent is optimal.
    Optimal,
    /// A feasible point without an optimality proof (external solutions).
    Feasible,
    /// Search finished without finding a feasible point.
    Infeasible,
    /// A node or time limit stopped the search.
    Limit,
}

impl MipStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            MipStatus::Optimal => "optimal",
            MipStatus::Feasible => "feasible",
            MipStatus::Infeasible => "infeasible",
            MipStatus::Limit => "limit",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MipSolution {
    pub status: MipStatus,
    /// Objective in the instance's own sense; `NaN` without an incumbent.
    pub objective: f64,
    pub values: Vec<f64>,
}

impl MipSolution {
    pub fn has_incumbent(&self) -> bool {
        self.objective.is_finite()
    }
}

#[derive(Debug, Clone)]
pub struct MipOptions {
    pub node_limit: usize,
    pub time_limit: Option<Duration>,
    /// Number of distinct feasible solutions to keep.
    pub pool_size: usize,
    /// Enumerate all `2^n` points (pure-binary instances with `n <= 30`).
    pub exhaustive: bool,
}

impl Default for MipOptions {
    fn default() -> Self {
        Self {
            node_limit: 100_000,
            time_limit: None,
            pool_size: 5,
            exhaustive: false,
        }
    }
}

impl MipOptions {
    pub fn exhaustive() -> Self {
        Self {
            exhaustive: true,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MipResult {
    pub solution: MipSolution,
    /// Distinct feasible solutions, best first. Solutions differ in at least
    /// one integral variable.
    pub pool: Vec<MipSolution>,
    pub nodes: usize,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SolveError {
    #[error("exhaustive mode needs a pure-binary instance with at most 30 variables")]
    NotEnumerable,
}

/// Keeps the best `cap` distinct solutions by minimization key.
struct Pool {
    cap: usize,
    items: Vec<(f64, Vec<f64>)>,
    integral: Vec<usize>,
}

impl Pool {
    fn new(cap: usize, instance: &MipInstance) -> Self {
        let integral = instance
            .variables
            .iter()
            .enumerate()
            .filter(|(_, v)| v.var_type.is_integral())
            .map(|(j, _)| j)
            .collect();
        Self {
            cap: cap.max(1),
            items: Vec::new(),
            integral,
        }
    }

    fn same(&self, a: &[f64], b: &[f64]) -> bool {
        self.integral.iter().all(|&j| (a[j] - b[j]).abs() < 0.5)
    }

    fn offer(&mut self, key: f64, x: &[f64]) {
        if self.items.iter().any(|(_, y)| self.same(x, y)) {
            return;
        }
        if self.items.len() == self.cap && key >= self.items.last().unwrap().0 {
            return;
        }
        let pos = self.items.partition_point(|(k, _)| *k <= key);
        self.items.insert(pos, (key, x.to_vec()));
        self.items.truncate(self.cap);
    }
}

/// Solves `instance` to optimality (or until a limit), returning the
/// incumbent and a pool of distinct feasible solutions.
pub fn solve_mip(instance: &MipInstance, options: &MipOptions) -> Result<MipResult, SolveError> {
    if options.exhaustive {
        return solve_exhaustive(instance, options.pool_size);
    }
    let start = Instant::now();
    let sense = instance.objective_sense;
    let n = instance.n_variables();
    let mut pool = Pool::new(options.pool_size, instance);
    let mut incumbent: Option<(f64, Vec<f64>)> = None;
    let root_lower: Vec<f64> = instance.variables.iter().map(|v| v.lower_bound).collect();
    let root_upper: Vec<f64> = instance.variables.iter().map(|v| v.upper_bound).collect();
    let mut stack = vec![(root_lower, root_upper)];
    let mut nodes = 0usize;
    let mut hit_limit = false;

    while let Some((lower, upper)) = stack.pop() {
        if nodes >= options.node_limit
            || options.time_limit.is_some_and(|t| start.elapsed() >= t)
        {
            hit_limit = true;
            break;
        }
        nodes += 1;
        let lp = solve_lp_with_bounds(instance, &lower, &upper);
        if lp.status != LpStatus::Optimal {
            // An unbounded relaxation at a node is treated like an infeasible
            // one; desk-scale instances are bounded.
            continue;
        }
        let bound = min_key(sense, lp.objective);
        if let Some((best, _)) = &incumbent {
            if bound >= best - 1e-9 * best.abs().max(1.0) {
                continue;
            }
        }

        let branch_var = most_fractional(instance, &lp.values);
        match branch_var {
            None => {
                let x = snap_integral(instance, &lp.values);
                if instance.is_feasible(&x, FEAS_TOL) {
                    let key = min_key(sense, instance.objective_value(&x));
                    pool.offer(key, &x);
                    if incumbent.as_ref().is_none_or(|(b, _)| key < *b) {
                        incumbent = Some((key, x));
                    }
                }
            }
            Some(j) => {
                for x in rounding_candidates(instance, &lp.values, &lower, &upper) {
                    let key = min_key(sense, instance.objective_value(&x));
                    pool.offer(key, &x);
                    if incumbent.as_ref().is_none_or(|(b, _)| key < *b) {
                        incumbent = Some((key, x));
                    }
                }
                let v = lp.values[j];
                let (fl, ce) = (v.floor(), v.ceil());
                let mut down = (lower.clone(), upper.clone());
                down.1[j] = fl;
                let mut up = (lower, upper);
                up.0[j] = ce;
                // The child nearer to the LP value is explored first.
                if v - fl < 0.5 {
                    stack.push(up);
                    stack.push(down);
                } else {
                    stack.push(down);
                    stack.push(up);
                }
            }
        }
    }

    if pool.items.len() < pool.cap {
        fill_pool(instance, &mut pool);
    }

    let status = match (&incumbent, hit_limit) {
        (_, true) => MipStatus::Limit,
        (Some(_), false) => MipStatus::Optimal,
        (None, false) => MipStatus::Infeasible,
    };
    let solution = match &incumbent {
        Some((_, x)) => MipSolution {
            status,
            objective: instance.objective_value(x),
            values: x.clone(),
        },
        None => MipSolution {
            status,
            objective: f64::NAN,
            values: vec![0.0; n],
        },
    };
    let pool = pool
        .items
        .into_iter()
        .map(|(_, x)| MipSolution {
            status: MipStatus::Feasible,
            objective: instance.objective_value(&x),
            values: x,
        })
        .collect();
    Ok(MipResult { solution, pool, nodes })
}

fn most_fractional(instance: &MipInstance, x: &[f64]) -> Option<usize> {
    let mut best = None;
    let mut best_score = INT_TOL;
    for (j, v) in instance.variables.iter().enumerate() {
        if !v.var_type.is_integral() {
            continue;
        }
        let frac = x[j] - x[j].floor();
        let score = frac.min(1.0 - frac);
        if score > best_score + 1e-12 {
            best_score = score;
            best = Some(j);
        }
    }
    best
}

fn snap_integral(instance: &MipInstance, x: &[f64]) -> Vec<f64> {
    instance
        .variables
        .iter()
        .zip(x)
        .map(|(v, &xi)| if v.var_type.is_integral() { xi.round() } else { xi })
        .collect()
}

/// Nearest, up, and down roundings of the integral part that are feasible.
/// Continuous parts are kept; with continuous variables present only the
/// roundings that stay feasible without re-solving are returned.
fn rounding_candidates(instance: &MipInstance, x: &[f64], lower: &[f64], upper: &[f64]) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::new();
    let rounders: [fn(f64) -> f64; 3] = [f64::round, f64::ceil, f64::floor];
    for round in rounders {
        let cand: Vec<f64> = instance
            .variables
            .iter()
            .enumerate()
            .map(|(j, v)| {
                if v.var_type.is_integral() {
                    let r = round(x[j] - INT_TOL.copysign(x[j] - x[j].round()));
                    r.clamp(lower[j], upper[j])
                } else {
                    x[j]
                }
            })
            .collect();
        if instance.is_feasible(&cand, FEAS_TOL) && !out.contains(&cand) {
            out.push(cand);
        }
    }
    out
}

/// Tops up the pool with binary neighbours of its members: single flips
/// first, then one-in/one-out swaps, always taking the best candidate.
fn fill_pool(instance: &MipInstance, pool: &mut Pool) {
    const SWAP_BUDGET: usize = 20_000;
    let sense = instance.objective_sense;
    let binaries = instance.binary_indices();
    let mut expanded = 0usize;
    while pool.items.len() < pool.cap && expanded < pool.items.len() {
        let x = pool.items[expanded].1.clone();
        expanded += 1;
        let mut candidates: Vec<(f64, Vec<f64>)> = Vec::new();
        for &j in &binaries {
            let mut y = x.clone();
            y[j] = 1.0 - y[j].round();
            if instance.is_feasible(&y, FEAS_TOL) {
                candidates.push((min_key(sense, instance.objective_value(&y)), y));
            }
        }
        if candidates.is_empty() {
            let ones: Vec<usize> = binaries.iter().copied().filter(|&j| x[j] > 0.5).collect();
            let zeros: Vec<usize> = binaries.iter().copied().filter(|&j| x[j] <= 0.5).collect();
            let mut tried = 0;
            'swap: for &a in &ones {
                for &b in &zeros {
                    tried += 1;
                    if tried > SWAP_BUDGET {
                        break 'swap;
                    }
                    let mut y = x.clone();
                    y[a] = 0.0;
                    y[b] = 1.0;
                    if instance.is_feasible(&y, FEAS_TOL) {
                        candidates.push((min_key(sense, instance.objective_value(&y)), y));
                    }
                }
            }
        }
        candidates.sort_by(|a, b| a.0.total_cmp(&b.0));
        for (key, y) in candidates {
            if pool.items.len() >= pool.cap {
                break;
            }
            pool.offer(key, &y);
        }
        // Newly offered items may sort before `expanded`; restarting is
        // cheap and keeps every member expanded once.
        expanded = expanded.min(pool.items.len());
    }
}

/// Enumerates every 0/1 point in Gray-code order. Exact; ties keep the
/// first point found.
fn solve_exhaustive(instance: &MipInstance, pool_size: usize) -> Result<MipResult, SolveError> {
    let n = instance.n_variables();
    if !instance.is_pure_binary() || n > 30 {
        return Err(SolveError::NotEnumerable);
    }
    let sense = instance.objective_sense;
    let columns = instance.columns();
    let c = instance.objective();
    let m = instance.n_constraints();
    let mut activity = vec![0.0; m];
    let violated = |act: f64, i: usize| {
        let con = &instance.constraints[i];
        match con.sense {
            crate::mip::ConstraintSense::Le => act > con.rhs + FEAS_TOL,
            crate::mip::ConstraintSense::Ge => act < con.rhs - FEAS_TOL,
            crate::mip::ConstraintSense::Eq => (act - con.rhs).abs() > FEAS_TOL,
        }
    };
    let mut n_violated = (0..m).filter(|&i| violated(0.0, i)).count();
    let mut x = vec![0u8; n];
    let mut obj = 0.0;
    let mut pool = Pool::new(pool_size, instance);
    let to_f64 = |x: &[u8]| x.iter().map(|&b| b as f64).collect::<Vec<f64>>();
    if n_violated == 0 {
        pool.offer(min_key(sense, obj), &to_f64(&x));
    }
    let total: u64 = 1u64 << n;
    for step in 1..total {
        let j = step.trailing_zeros() as usize;
        let delta = if x[j] == 0 { 1.0 } else { -1.0 };
        x[j] ^= 1;
        obj += delta * c[j];
        for &(i, a) in &columns[j] {
            let before = violated(activity[i], i);
            activity[i] += delta * a;
            let after = violated(activity[i], i);
            match (before, after) {
                (true, false) => n_violated -= 1,
                (false, true) => n_violated += 1,
                _ => {}
            }
        }
        if n_violated == 0 {
            let key = min_key(sense, obj);
            if pool.items.len() < pool.cap || key < pool.items.last().unwrap().0 {
                pool.offer(key, &to_f64(&x));
            }
        }
    }
    // Re-evaluate objectives exactly (the running sum accumulates rounding).
    let mut items: Vec<(f64, Vec<f64>)> = pool
        .items
        .into_iter()
        .map(|(_, x)| (min_key(sense, instance.objective_value(&x)), x))
        .collect();
    items.sort_by(|a, b| a.0.total_cmp(&b.0));
    let solution = match items.first() {
        Some((_, x)) => MipSolution {
            status: MipStatus::Optimal,
            objective: instance.objective_value(x),
            values: x.clone(),
        },
        None => MipSolution {
            status: MipStatus::Infeasible,
            objective: f64::NAN,
            values: vec![0.0; n],
        },
    };
    let pool = items
        .into_iter()
        .map(|(_, x)| MipSolution {
            status: MipStatus::Feasible,
            objective: instance.objective_value(&x),
            values: x,
        })
        .collect();
    Ok(MipResult {
        solution,
        pool,
        nodes: total as usize,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geninst::{independent_set, vertex_cover};

    fn triangle() -> Vec<(usize, usize)> {
        vec![(0, 1), (0, 2), (1, 2)]
    }

    #[test]
    fn triangle_vertex_cover_optimum() {
        let m = vertex_cover("t", 3, &triangle());
        let ex = solve_mip(&m, &MipOptions::exhaustive()).unwrap();
        assert_eq!(ex.solution.objective, 2.0);
        let bb = solve_mip(&m, &MipOptions::default()).unwrap();
        assert_eq!(bb.solution.status, MipStatus::Optimal);
        assert_eq!(bb.solution.objective, 2.0);
    }

    #[test]
    fn triangle_independent_set_optimum() {
        let m = independent_set("t", 3, &triangle());
        let ex = solve_mip(&m, &MipOptions::exhaustive()).unwrap();
        assert_eq!(ex.solution.objective, 1.0);
        assert_eq!(solve_mip(&m, &MipOptions::default()).unwrap().solution.objective, 1.0);
    }

    #[test]
    fn pool_solutions_are_distinct_and_feasible() {
        let m = vertex_cover("t", 3, &triangle());
        let r = solve_mip(&m, &MipOptions::default()).unwrap();
        // Three covers of size 2 plus the full set.
        assert_eq!(r.pool.len(), 4);
        for (a, s) in r.pool.iter().enumerate() {
            assert!(m.is_feasible(&s.values, 1e-9));
            for t in &r.pool[a + 1..] {
                assert_ne!(s.values, t.values);
                assert!(s.objective <= t.objective);
            }
        }
        assert_eq!(r.pool[0].objective, r.solution.objective);
    }

    #[test]
    fn node_limit_reports_limit() {
        let edges = crate::geninst::random_graph(30, 0.3, &mut crate::seed::rng_from_seed(1));
        let m = vertex_cover("g", 30, &edges);
        let r = solve_mip(&m, &MipOptions { node_limit: 1, ..MipOptions::default() }).unwrap();
        assert_eq!(r.solution.status, MipStatus::Limit);
    }

    #[test]
    fn exhaustive_rejects_large_or_general() {
        let edges = crate::geninst::random_graph(31, 0.1, &mut crate::seed::rng_from_seed(1));
        let m = vertex_cover("g", 31, &edges);
        assert_eq!(solve_mip(&m, &MipOptions::exhaustive()).unwrap_err(), SolveError::NotEnumerable);
    }
}
