//! Monte Carlo payoffs of threshold policies.
//!
//! Paths are Euler–Maruyama steps of the compensated jump-diffusion,
//!
//! ```text
//! X_{n+1} = X_n (1 + (Γ − Σ w_i γ_i) dt + σ √dt N_n) Π (1 + γ_jump),
//! ```
//!
//! with compound-Poisson jumps. Between purchases every policy multiplies its
//! state by the same factor, so all policies sharing a path are carried as a
//! common log-level plus a per-policy offset that changes only at purchases.
//! That makes a grid of policies cost little more than a single one, gives
//! common random numbers for free, and keeps each policy's arithmetic
//! independent of which other policies ride along (a policy evaluated in a
//! grid is bitwise equal to the same policy evaluated alone).
//!
//! Each path draws from its own ChaCha8 stream `(seed, path index)`, and
//! per-path payoffs are reduced by pairwise summation in path order, so
//! results do not depend on thread count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::design::design_case2;
use crate::error::{Error, Result};
use crate::exec::{par_map, Execution};
use crate::model::{CostParams, JumpAtom, Policy, PolicyTargets, ValidatedModel};
use crate::numeric::pairwise_sum;
use crate::roots::RootPair;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub dt: f64,
    pub t_max: f64,
    pub paths: usize,
    pub seed: u64,
    pub x0: f64,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidSimConfig { field: "dt", reason: "must be positive" });
        }
        if !(self.t_max > 0.0 && self.t_max.is_finite()) {
            return Err(Error::InvalidSimConfig { field: "t_max", reason: "must be positive" });
        }
        if self.paths == 0 {
            return Err(Error::InvalidSimConfig { field: "paths", reason: "must be at least 1" });
        }
        if !(self.x0 > 0.0 && self.x0.is_finite()) {
            return Err(Error::NonPositiveInitialState(self.x0));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.t_max / self.dt).round().max(1.0) as usize
    }
}

/// Principal's running gain `e^{−δ_p r}(w0 + w1 x + w2 ln x)` and purchase
/// gain `e^{−δ_p τ}(λ_P z + c_P τ + α_P)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrincipalParams {
    pub delta_p: f64,
    pub lambda_p: f64,
    pub c_p: f64,
    pub alpha_p: f64,
    pub w0: f64,
    pub w1: f64,
    pub w2: f64,
}

impl PrincipalParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta_p > 0.0) {
            return Err(Error::InvalidPrincipal(self.delta_p));
        }
        for (v, field) in [
            (self.lambda_p, "principal.lambda_p"),
            (self.c_p, "principal.c_p"),
            (self.alpha_p, "principal.alpha_p"),
            (self.w0, "principal.w0"),
            (self.w1, "principal.w1"),
            (self.w2, "principal.w2"),
        ] {
            if !v.is_finite() {
                return Err(Error::NonFinite { field });
            }
        }
        Ok(())
    }

    fn inert() -> Self {
        Self { delta_p: 1.0, lambda_p: 0.0, c_p: 0.0, alpha_p: 0.0, w0: 0.0, w1: 0.0, w2: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PayoffEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub paths_used: usize,
    pub bankruptcies: usize,
    /// Largest per-path bound on the discounted agent payoff beyond `t_max`.
    pub tail_bound: f64,
}

/// One policy as seen by the path engine.
#[derive(Debug, Clone, Copy)]
struct Arm {
    ln_trigger: f64,
    ln_after: f64,
    after: f64,
    z: f64,
}

impl Arm {
    fn new(policy: &Policy, costs: &CostParams) -> Result<Self> {
        policy.validate()?;
        costs.validate()?;
        let z = policy.purchase_size(costs);
        if !z.is_finite() {
            return Err(Error::InfeasiblePolicy);
        }
        Ok(Self { ln_trigger: policy.trigger.ln(), ln_after: policy.after.ln(), after: policy.after, z })
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Outcome {
    agent: f64,
    principal: f64,
    bankrupt: bool,
    x_max: f64,
}

/// Running discounted sums shared by every policy on a path.
#[derive(Debug, Clone, Copy, Default)]
struct Sums {
    /// Σ e^{−δt} dt
    disc: f64,
    /// Σ e^{−δt} L dt
    disc_log: f64,
    /// Σ e^{−δ_p t} dt
    pdisc: f64,
    /// Σ e^{−δ_p t} X_c dt
    pdisc_level: f64,
    /// Σ e^{−δ_p t} L dt
    pdisc_log: f64,
}

/// Per-policy state: `ln X = L + offset`, `X = X_c · scale`.
#[derive(Debug, Clone, Copy)]
struct ArmState {
    offset: f64,
    scale: f64,
    start: Sums,
    out: Outcome,
}

impl ArmState {
    fn close_segment(&mut self, now: &Sums, eps: f64, pp: &PrincipalParams) {
        let s = &self.start;
        self.out.agent += eps * ((now.disc_log - s.disc_log) + self.offset * (now.disc - s.disc));
        let q0 = now.pdisc - s.pdisc;
        self.out.principal += pp.w0 * q0
            + pp.w1 * self.scale * (now.pdisc_level - s.pdisc_level)
            + pp.w2 * ((now.pdisc_log - s.pdisc_log) + self.offset * q0);
        self.start = *now;
    }
}

/// Multiplicative step factors of one path, drawn from its own stream.
struct Driver<'a> {
    rng: ChaCha8Rng,
    dt: f64,
    drift: f64,
    vol: f64,
    intensity: f64,
    atoms: &'a [JumpAtom],
    clock: Option<Exp<f64>>,
    next_jump: f64,
}

impl<'a> Driver<'a> {
    fn new(model: &'a ValidatedModel, cfg: &SimConfig, index: usize) -> Self {
        let p = model.params();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(index as u64);
        let intensity = model.total_intensity();
        let clock = (intensity > 0.0).then(|| Exp::new(intensity).expect("positive intensity"));
        let next_jump = clock.map_or(f64::INFINITY, |e| rng.sample(e));
        Self {
            rng,
            dt: cfg.dt,
            drift: (p.gamma_drift - model.compensator_mean()) * cfg.dt,
            vol: p.sigma * cfg.dt.sqrt(),
            intensity,
            atoms: &model.jumps().atoms,
            clock,
            next_jump,
        }
    }

    /// `X_{n+1} / X_n`; non-positive means the path went bankrupt.
    fn factor(&mut self, n: usize) -> f64 {
        let normal: f64 = self.rng.sample(StandardNormal);
        let mut factor = 1.0 + self.drift + self.vol * normal;
        let t_next = (n + 1) as f64 * self.dt;
        while self.next_jump <= t_next {
            let pick = self.rng.random::<f64>() * self.intensity;
            let mut acc = 0.0;
            let mut chosen = self.atoms.len() - 1;
            for (i, atom) in self.atoms.iter().enumerate() {
                acc += atom.rate;
                if pick < acc {
                    chosen = i;
                    break;
                }
            }
            factor *= 1.0 + self.atoms[chosen].factor;
            self.next_jump += self.clock.map_or(f64::INFINITY, |e| self.rng.sample(e));
        }
        factor
    }
}

/// Runs one path for every arm.
fn run_path(model: &ValidatedModel, arms: &[Arm], pp: &PrincipalParams, cfg: &SimConfig, index: usize) -> Vec<Outcome> {
    let p = model.params();
    let mut driver = Driver::new(model, cfg, index);
    let dt = cfg.dt;
    let steps = cfg.steps();
    let step_disc = (-p.delta * dt).exp();
    let step_pdisc = (-pp.delta_p * dt).exp();
    let (mut disc, mut pdisc) = (1.0f64, 1.0f64);
    let mut level = cfg.x0;
    let mut log_level = cfg.x0.ln();
    let mut sums = Sums::default();

    let mut states: Vec<ArmState> = arms
        .iter()
        .map(|_| ArmState { offset: 0.0, scale: 1.0, start: sums, out: Outcome { x_max: cfg.x0, ..Outcome::default() } })
        .collect();
    // Purchase fires for arm k when log_level >= ln_trigger_k − offset_k.
    let threshold = |a: &Arm, s: &ArmState| a.ln_trigger - s.offset;
    let lowest = |st: &[ArmState]| arms.iter().zip(st).map(|(a, s)| threshold(a, s)).fold(f64::INFINITY, f64::min);
    let mut next_event = lowest(&states);
    let mut bankrupt = false;

    for n in 0..steps {
        let t = n as f64 * dt;
        if log_level >= next_event {
            for (a, s) in arms.iter().zip(states.iter_mut()) {
                if log_level >= threshold(a, s) {
                    s.close_segment(&sums, p.epsilon, pp);
                    s.out.x_max = s.out.x_max.max(level * s.scale);
                    s.out.agent += disc * a.z;
                    s.out.principal += pdisc * (pp.lambda_p * a.z + pp.c_p * t + pp.alpha_p);
                    s.offset = a.ln_after - log_level;
                    s.scale = a.after / level;
                }
            }
            next_event = lowest(&states);
        }
        sums.disc += disc * dt;
        sums.disc_log += disc * log_level * dt;
        sums.pdisc += pdisc * dt;
        sums.pdisc_level += pdisc * level * dt;
        sums.pdisc_log += pdisc * log_level * dt;

        let factor = driver.factor(n);
        disc *= step_disc;
        pdisc *= step_pdisc;
        if !(factor > 0.0) {
            bankrupt = true;
            break;
        }
        level *= factor;
        log_level += factor.ln();
    }
    for s in states.iter_mut() {
        s.close_segment(&sums, p.epsilon, pp);
        s.out.bankrupt = bankrupt;
    }
    states.into_iter().map(|s| s.out).collect()
}

/// Per-arm, per-path outcomes (outer index: arm).
fn run_all(model: &ValidatedModel, arms: &[Arm], pp: &PrincipalParams, cfg: &SimConfig, exec: Execution) -> Vec<Vec<Outcome>> {
    let by_path = par_map(exec, cfg.paths, |i| run_path(model, arms, pp, cfg, i));
    (0..arms.len()).map(|k| by_path.iter().map(|row| row[k]).collect()).collect()
}

fn estimate(values: &[f64], outcomes: &[Outcome], tail: impl Fn(&Outcome) -> f64) -> PayoffEstimate {
    let n = values.len();
    let mean = pairwise_sum(values) / n as f64;
    let dev: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
    let var = if n > 1 { pairwise_sum(&dev) / (n - 1) as f64 } else { 0.0 };
    PayoffEstimate {
        mean,
        stderr: (var / n as f64).sqrt(),
        paths_used: n,
        bankruptcies: outcomes.iter().filter(|o| o.bankrupt).count(),
        tail_bound: outcomes.iter().map(tail).fold(0.0, f64::max),
    }
}

fn agent_estimate(model: &ValidatedModel, cfg: &SimConfig, arm: &Arm, outcomes: &[Outcome]) -> PayoffEstimate {
    let p = model.params();
    let values: Vec<f64> = outcomes.iter().map(|o| o.agent).collect();
    let decay = (-p.delta * cfg.t_max).exp();
    // Paths that never purchase stay below the trigger.
    let tail = |o: &Outcome| decay * (p.epsilon.abs() * o.x_max.max(arm.ln_trigger.exp()).ln().abs() + arm.z.abs()) / p.delta;
    estimate(&values, outcomes, tail)
}

fn principal_estimate(outcomes: &[Outcome]) -> PayoffEstimate {
    let values: Vec<f64> = outcomes.iter().map(|o| o.principal).collect();
    estimate(&values, outcomes, |_| 0.0)
}

fn prepare(cfg: &SimConfig, policy: &Policy, costs: &CostParams) -> Result<Arm> {
    cfg.validate()?;
    Arm::new(policy, costs)
}

/// Agent payoff `E[∫ e^{−δr} ε ln X_r dr + Σ e^{−δτ_j} z_j]` under a
/// threshold policy.
pub fn simulate_agent(model: &ValidatedModel, costs: &CostParams, policy: &Policy, cfg: &SimConfig, exec: Execution) -> Result<PayoffEstimate> {
    let arm = prepare(cfg, policy, costs)?;
    let out = run_all(model, &[arm], &PrincipalParams::inert(), cfg, exec);
    Ok(agent_estimate(model, cfg, &arm, &out[0]))
}

/// Principal payoff under the agent's threshold policy.
pub fn simulate_principal(
    model: &ValidatedModel,
    costs: &CostParams,
    policy: &Policy,
    pp: &PrincipalParams,
    cfg: &SimConfig,
    exec: Execution,
) -> Result<PayoffEstimate> {
    pp.validate()?;
    let arm = prepare(cfg, policy, costs)?;
    let out = run_all(model, &[arm], pp, cfg, exec);
    Ok(principal_estimate(&out[0]))
}

/// Agent and Principal payoffs from the same paths.
pub fn simulate_both(
    model: &ValidatedModel,
    costs: &CostParams,
    policy: &Policy,
    pp: &PrincipalParams,
    cfg: &SimConfig,
    exec: Execution,
) -> Result<(PayoffEstimate, PayoffEstimate)> {
    pp.validate()?;
    let arm = prepare(cfg, policy, costs)?;
    let out = run_all(model, &[arm], pp, cfg, exec);
    Ok((agent_estimate(model, cfg, &arm, &out[0]), principal_estimate(&out[0])))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridRow {
    pub policy: Policy,
    pub estimate: PayoffEstimate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolicySurface {
    pub rows: Vec<GridRow>,
    /// Index of the largest mean (first one on ties).
    pub argmax: usize,
}

impl PolicySurface {
    pub fn best(&self) -> &GridRow {
        &self.rows[self.argmax]
    }
}

fn argmax(means: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, m) in means.enumerate() {
        if m > best.1 {
            best = (i, m);
        }
    }
    best.0
}

/// Agent payoffs of every policy in `grid` on common random numbers.
pub fn policy_grid(model: &ValidatedModel, costs: &CostParams, grid: &[Policy], cfg: &SimConfig, exec: Execution) -> Result<PolicySurface> {
    cfg.validate()?;
    if grid.is_empty() {
        return Err(Error::InvalidGrid("policy grid is empty"));
    }
    let arms: Vec<Arm> = grid.iter().map(|p| Arm::new(p, costs)).collect::<Result<_>>()?;
    let out = run_all(model, &arms, &PrincipalParams::inert(), cfg, exec);
    let rows: Vec<GridRow> = grid
        .iter()
        .zip(arms.iter().zip(&out))
        .map(|(policy, (arm, o))| GridRow { policy: *policy, estimate: agent_estimate(model, cfg, arm, o) })
        .collect();
    let argmax = argmax(rows.iter().map(|r| r.estimate.mean));
    Ok(PolicySurface { rows, argmax })
}

/// `n × n` policies spanning ±`spread` (relative) around `center` in both
/// coordinates; pairs with `after >= trigger` are dropped.
pub fn relative_grid(center: &PolicyTargets, spread: f64, n: usize) -> Vec<Policy> {
    let offsets: Vec<f64> = if n <= 1 {
        vec![0.0]
    } else {
        (0..n).map(|i| -spread + 2.0 * spread * i as f64 / (n - 1) as f64).collect()
    };
    let mut out = Vec::new();
    for &dh in &offsets {
        for &ds in &offsets {
            let p = Policy { trigger: center.x_star * (1.0 + ds), after: center.x_hat * (1.0 + dh) };
            if p.validate().is_ok() {
                out.push(p);
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TargetRow {
    pub targets: PolicyTargets,
    pub costs: CostParams,
    pub estimate: PayoffEstimate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TargetFailure {
    pub targets: PolicyTargets,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TargetSearch {
    /// Row of `surface` with the largest Principal payoff.
    pub best: Option<TargetRow>,
    pub surface: Vec<TargetRow>,
    pub failures: Vec<TargetFailure>,
}

/// Designs costs for every target, simulates the Principal's payoff when the
/// agent follows it, and returns the best target.
pub fn principal_target_search(
    model: &ValidatedModel,
    target_grid: &[PolicyTargets],
    pp: &PrincipalParams,
    cfg: &SimConfig,
    roots: &RootPair,
    b: f64,
    exec: Execution,
) -> Result<TargetSearch> {
    cfg.validate()?;
    pp.validate()?;
    let mut designed = Vec::new();
    let mut failures = Vec::new();
    for t in target_grid {
        match design_case2(t, roots, b).and_then(|c| Ok((c, Arm::new(&t.as_policy(), &c)?))) {
            Ok((costs, arm)) => designed.push((*t, costs, arm)),
            Err(e) => failures.push(TargetFailure { targets: *t, error: e.to_string() }),
        }
    }
    if designed.is_empty() {
        return Ok(TargetSearch { best: None, surface: Vec::new(), failures });
    }
    let arms: Vec<Arm> = designed.iter().map(|d| d.2).collect();
    let out = run_all(model, &arms, pp, cfg, exec);
    let surface: Vec<TargetRow> = designed
        .iter()
        .zip(&out)
        .map(|((targets, costs, _), o)| TargetRow { targets: *targets, costs: *costs, estimate: principal_estimate(o) })
        .collect();
    let best = surface[argmax(surface.iter().map(|r| r.estimate.mean))];
    Ok(TargetSearch { best: Some(best), surface, failures })
}

/// `E[e^{−Γ t_max} X_{t_max}]` without purchases; equals `x0` for the exact
/// process.
pub fn discounted_terminal_level(model: &ValidatedModel, cfg: &SimConfig, exec: Execution) -> Result<PayoffEstimate> {
    cfg.validate()?;
    let p = model.params();
    let t_end = cfg.steps() as f64 * cfg.dt;
    let values = par_map(exec, cfg.paths, |i| {
        let mut driver = Driver::new(model, cfg, i);
        let mut level = cfg.x0;
        for n in 0..cfg.steps() {
            let factor = driver.factor(n);
            if !(factor > 0.0) {
                return 0.0;
            }
            level *= factor;
        }
        level
    });
    let outcomes: Vec<Outcome> = values.iter().map(|v| Outcome { bankrupt: *v == 0.0, ..Outcome::default() }).collect();
    let scaled: Vec<f64> = values.iter().map(|v| (-p.gamma_drift * t_end).exp() * v).collect();
    Ok(estimate(&scaled, &outcomes, |_| 0.0))
}
