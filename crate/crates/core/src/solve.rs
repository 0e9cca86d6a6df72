//! The forward problem: the policy `(x̂, x*)` an agent facing costs `(λ, κ)`
//! adopts.
//!
//! With the shared coefficient `a(x̂, x*)` eliminated, the boundary
//! conditions reduce to two equations
//!
//! ```text
//! R1 = a (l1 x̂^{l1−1} + l2 x̂^{l2−1}) + b/x̂ − 1/(1+λ)
//! R2 = (x* − x̂ − κ)/(1+λ) + b ln(x̂/x*) − a (x*^{l1} − x̂^{l1} + x*^{l2} − x̂^{l2})
//! ```
//!
//! solved by damped Newton in `(ln x̂, ln x*)`. The system typically has more
//! than one root, so without a starting point a grid of starts is run and
//! every distinct root is reported.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{par_map, Execution};
use crate::model::{CostParams, PolicyTargets};
use crate::numeric::{condition2, solve2};
use crate::roots::RootPair;
use crate::value::{smooth_pasting_residuals, CaseMode, ValueCoeffs, ValueFunction};

/// Relative step of the central-difference Jacobians.
pub const JACOBIAN_STEP: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolveOptions {
    pub grid_lo: f64,
    pub grid_hi: f64,
    /// Points per axis of the start grid; only pairs with `x̂ < x*` are used.
    pub grid_points: usize,
    pub tol: f64,
    pub max_iter: usize,
    /// Solutions closer than this (relative) are merged.
    pub dedupe: f64,
    #[serde(skip)]
    pub exec: Execution,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { grid_lo: 0.01, grid_hi: 100.0, grid_points: 6, tol: 1e-10, max_iter: 100, dedupe: 1e-4, exec: Execution::default() }
    }
}

impl SolveOptions {
    pub fn starts(&self) -> Vec<[f64; 2]> {
        let n = self.grid_points.max(2);
        let step = (self.grid_hi / self.grid_lo).ln() / (n - 1) as f64;
        let g: Vec<f64> = (0..n).map(|i| self.grid_lo * (step * i as f64).exp()).collect();
        let mut out = Vec::new();
        for (i, &p) in g.iter().enumerate() {
            for &q in &g[i + 1..] {
                out.push([p, q]);
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ForwardSolution {
    pub targets: PolicyTargets,
    /// Boundary-condition residuals (marginal value at x̂, at x*, level match).
    pub residuals: [f64; 3],
    pub newton_iters: usize,
    /// Condition number of `∂R/∂(x̂, x*)` at the solution.
    pub condition_number: f64,
    /// `max |R|` after each accepted Newton step, starting point included.
    #[serde(skip)]
    pub residual_history: Vec<f64>,
}

/// Shared coefficient for arbitrary positive `(x̂, x*)`.
fn shared_coefficient(x: [f64; 2], roots: &RootPair, b: f64) -> f64 {
    let RootPair { l1, l2 } = *roots;
    let [xh, xs] = x;
    let zp = |m: f64| xh.powf(m) - xs.powf(m);
    b * (xh - xs) / (xh * xs * (l1 * zp(l1 - 1.0) + l2 * zp(l2 - 1.0)))
}

/// `(R1, R2)` at `x = (x̂, x*)`; NaN outside `0 < x̂ < x*`.
pub fn residual_system(x: [f64; 2], costs: &CostParams, roots: &RootPair, b: f64) -> [f64; 2] {
    let [xh, xs] = x;
    if !(xh > 0.0 && xh < xs && xs.is_finite()) {
        return [f64::NAN; 2];
    }
    let RootPair { l1, l2 } = *roots;
    let unit = costs.unit_price();
    let a = shared_coefficient(x, roots, b);
    let r1 = a * (l1 * xh.powf(l1 - 1.0) + l2 * xh.powf(l2 - 1.0)) + b / xh - unit;
    let r2 = (xs - xh - costs.kappa) * unit + b * (xh / xs).ln()
        - a * (xs.powf(l1) - xh.powf(l1) + xs.powf(l2) - xh.powf(l2));
    [r1, r2]
}

/// Central-difference Jacobian of `f` in `x`, relative step [`JACOBIAN_STEP`].
pub fn jacobian<F: Fn([f64; 2]) -> [f64; 2]>(f: &F, x: [f64; 2]) -> [[f64; 2]; 2] {
    let mut j = [[0.0; 2]; 2];
    for k in 0..2 {
        let h = JACOBIAN_STEP * x[k].abs().max(f64::MIN_POSITIVE);
        let (mut up, mut dn) = (x, x);
        up[k] += h;
        dn[k] -= h;
        let (fu, fd) = (f(up), f(dn));
        for i in 0..2 {
            j[i][k] = (fu[i] - fd[i]) / (up[k] - dn[k]);
        }
    }
    j
}

fn max_abs(r: [f64; 2]) -> f64 {
    if r.iter().any(|v| !v.is_finite()) {
        f64::INFINITY
    } else {
        r[0].abs().max(r[1].abs())
    }
}

/// Residual weighting used by one of the two Newton variants; balances the
/// `1/x̂` and `x*` scales of the two equations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Scaling {
    Plain,
    Balanced,
}

struct NewtonRun {
    x: [f64; 2],
    residual: f64,
    iters: usize,
    history: Vec<f64>,
}

/// Damped Newton on `R(exp u) = 0` with Armijo backtracking on `max |R|`.
fn newton<F: Fn([f64; 2]) -> [f64; 2]>(residual: &F, start: [f64; 2], scaling: Scaling, opts: &SolveOptions) -> NewtonRun {
    let weighted = |u: [f64; 2]| -> [f64; 2] {
        let x = [u[0].exp(), u[1].exp()];
        let r = residual(x);
        match scaling {
            Scaling::Plain => r,
            Scaling::Balanced => [r[0] * x[0], r[1] / x[1]],
        }
    };
    let plain = |u: [f64; 2]| max_abs(residual([u[0].exp(), u[1].exp()]));
    let mut u = [start[0].ln(), start[1].ln()];
    let mut merit = max_abs(weighted(u));
    let mut history = vec![merit];
    let mut iters = 0;
    let mut polish = 0;
    while iters < opts.max_iter && merit.is_finite() {
        if plain(u) <= opts.tol {
            // A couple of extra steps drive the residual to rounding level,
            // which keeps finite differences of the solution map clean.
            polish += 1;
            if polish > 3 {
                break;
            }
        }
        let r = weighted(u);
        let j = jacobian(&weighted, u);
        let Some(step) = solve2(j, [-r[0], -r[1]]) else { break };
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..=40 {
            let trial = [u[0] + t * step[0], u[1] + t * step[1]];
            let m = max_abs(weighted(trial));
            if m <= (1.0 - 1e-4 * t) * merit {
                accepted = Some((trial, m));
                break;
            }
            t *= 0.5;
        }
        let Some((next, m)) = accepted else { break };
        u = next;
        merit = m;
        history.push(merit);
        iters += 1;
    }
    let x = [u[0].exp(), u[1].exp()];
    NewtonRun { x, residual: max_abs(residual(x)), iters, history }
}

/// Newton runs from `start` with both scalings; converged runs only.
fn converged_runs<F>(residual: &F, start: [f64; 2], opts: &SolveOptions) -> (Vec<NewtonRun>, f64)
where
    F: Fn([f64; 2]) -> [f64; 2],
{
    let mut best = f64::INFINITY;
    let mut out = Vec::new();
    for scaling in [Scaling::Plain, Scaling::Balanced] {
        let run = newton(residual, start, scaling, opts);
        best = best.min(run.residual);
        if run.residual <= opts.tol && run.x[0] > 0.0 && run.x[0] < run.x[1] {
            out.push(run);
        }
    }
    (out, best)
}

fn finish<F: Fn([f64; 2]) -> [f64; 2]>(residual: &F, run: NewtonRun, primitive: [f64; 3]) -> ForwardSolution {
    let j = jacobian(residual, run.x);
    ForwardSolution {
        targets: PolicyTargets { x_hat: run.x[0], x_star: run.x[1] },
        residuals: primitive,
        newton_iters: run.iters,
        condition_number: condition2(j),
        residual_history: run.history,
    }
}

/// Every distinct root found, best residual first. With `init` only that
/// start is used and at most one root is returned.
fn solve_generic<F, P>(residual: &F, primitive: &P, init: Option<PolicyTargets>, opts: &SolveOptions) -> Result<Vec<ForwardSolution>>
where
    F: Fn([f64; 2]) -> [f64; 2] + Sync,
    P: Fn([f64; 2]) -> [f64; 3],
{
    if let Some(t) = init {
        t.validate()?;
        let (mut runs, best) = converged_runs(residual, [t.x_hat, t.x_star], opts);
        if runs.is_empty() {
            return Err(Error::ForwardSolveFailed { best_residual: best });
        }
        let run = runs.swap_remove(0);
        let p = primitive(run.x);
        return Ok(vec![finish(residual, run, p)]);
    }
    let starts = opts.starts();
    let results = par_map(opts.exec, starts.len(), |i| converged_runs(residual, starts[i], opts));
    let best = results.iter().map(|r| r.1).fold(f64::INFINITY, f64::min);
    let mut runs: Vec<NewtonRun> = results.into_iter().flat_map(|r| r.0).collect();
    if runs.is_empty() {
        return Err(Error::ForwardSolveFailed { best_residual: best });
    }
    runs.sort_by(|a, b| {
        a.residual.total_cmp(&b.residual).then(a.x[0].total_cmp(&b.x[0])).then(a.x[1].total_cmp(&b.x[1]))
    });
    let mut kept: Vec<NewtonRun> = Vec::new();
    for run in runs {
        let close = |k: &NewtonRun| (0..2).all(|i| (k.x[i] - run.x[i]).abs() <= opts.dedupe * k.x[i].abs());
        if !kept.iter().any(close) {
            kept.push(run);
        }
    }
    Ok(kept
        .into_iter()
        .map(|run| {
            let p = primitive(run.x);
            finish(residual, run, p)
        })
        .collect())
}

fn case2_primitive(x: [f64; 2], costs: &CostParams, roots: &RootPair, b: f64) -> [f64; 3] {
    let a = shared_coefficient(x, roots, b);
    let vf = ValueFunction {
        coeffs: ValueCoeffs { a1: a, a2: a, b, c: 0.0, mode: CaseMode::CaseII },
        roots: *roots,
        delta: 1.0,
    };
    smooth_pasting_residuals(&vf, &PolicyTargets { x_hat: x[0], x_star: x[1] }, costs)
}

/// All distinct policies stationary for the agent under `costs`.
pub fn forward_solve_all(
    costs: &CostParams,
    roots: &RootPair,
    b: f64,
    init: Option<PolicyTargets>,
    opts: &SolveOptions,
) -> Result<Vec<ForwardSolution>> {
    costs.validate()?;
    let residual = |x: [f64; 2]| residual_system(x, costs, roots, b);
    let primitive = |x: [f64; 2]| case2_primitive(x, costs, roots, b);
    solve_generic(&residual, &primitive, init, opts)
}

/// The agent's policy under `costs`. Fails with
/// [`Error::MultipleSolutions`] when the start grid finds several; pass
/// `init` to pick a branch.
pub fn forward_solve(
    costs: &CostParams,
    roots: &RootPair,
    b: f64,
    init: Option<PolicyTargets>,
    opts: &SolveOptions,
) -> Result<ForwardSolution> {
    let mut all = forward_solve_all(costs, roots, b, init, opts)?;
    if all.len() > 1 {
        return Err(Error::MultipleSolutions(all.into_iter().map(|s| s.targets).collect()));
    }
    Ok(all.remove(0))
}

/// Extra condition closing the fixed-λ system, which has unknowns
/// `(a1, a2, x̂, x*)` but only three equations.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", content = "a1")]
pub enum Closure {
    /// `a1 = a2`; coincides with [`forward_solve`].
    #[default]
    EqualCoefficients,
    /// `a1` given; `a2` follows from the marginal-value condition at `x̂`.
    FixedLowerCoefficient(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Case1Solution {
    pub solution: ForwardSolution,
    pub closure: Closure,
    pub a1: f64,
    pub a2: f64,
    /// Set when `init` was given and the solution lies more than 1e−6
    /// (relative) away from it.
    pub closure_mismatch: bool,
}

fn fixed_a1_coefficients(x: [f64; 2], a1: f64, costs: &CostParams, roots: &RootPair, b: f64) -> f64 {
    let RootPair { l1, l2 } = *roots;
    let xh = x[0];
    (costs.unit_price() - b / xh - a1 * l1 * xh.powf(l1 - 1.0)) / (l2 * xh.powf(l2 - 1.0))
}

/// Fixed-λ forward problem under an explicit closure.
pub fn forward_solve_case1(
    costs: &CostParams,
    roots: &RootPair,
    b: f64,
    init: Option<PolicyTargets>,
    closure: Closure,
    opts: &SolveOptions,
) -> Result<Case1Solution> {
    costs.validate()?;
    let solution = match closure {
        Closure::EqualCoefficients => forward_solve(costs, roots, b, init, opts)?,
        Closure::FixedLowerCoefficient(a1) => {
            let vf_at = |x: [f64; 2]| ValueFunction {
                coeffs: ValueCoeffs { a1, a2: fixed_a1_coefficients(x, a1, costs, roots, b), b, c: 0.0, mode: CaseMode::CaseI },
                roots: *roots,
                delta: 1.0,
            };
            let primitive = |x: [f64; 2]| {
                if !(x[0] > 0.0 && x[0] < x[1]) {
                    return [f64::NAN; 3];
                }
                smooth_pasting_residuals(&vf_at(x), &PolicyTargets { x_hat: x[0], x_star: x[1] }, costs)
            };
            let residual = |x: [f64; 2]| {
                let r = primitive(x);
                [r[1], r[2]]
            };
            let mut all = solve_generic(&residual, &primitive, init, opts)?;
            if all.len() > 1 {
                return Err(Error::MultipleSolutions(all.into_iter().map(|s| s.targets).collect()));
            }
            all.remove(0)
        }
    };
    let x = [solution.targets.x_hat, solution.targets.x_star];
    let (a1, a2) = match closure {
        Closure::EqualCoefficients => {
            let a = shared_coefficient(x, roots, b);
            (a, a)
        }
        Closure::FixedLowerCoefficient(a1) => (a1, fixed_a1_coefficients(x, a1, costs, roots, b)),
    };
    let closure_mismatch = init.is_some_and(|t| solution.targets.relative_distance(&t) > 1e-6);
    Ok(Case1Solution { solution, closure, a1, a2, closure_mismatch })
}
