//! The candidate value function
//!
//! ```text
//! φ(s, x) = e^{−δs} [a1 x^{l1} + a2 x^{l2} + b ln x + c]
//! ```
//!
//! its coefficients, the intervention operator `Mφ(x) = sup_z φ(x − κ − (1+λ)z) + z`
//! and a grid checker for the quasi-variational inequality.
//!
//! Below the threshold `x*` the candidate is the closed form above; at and
//! above it the candidate is the value of purchasing immediately,
//! `φ(x̂) + (x − x̂ − κ)/(1 + λ)`. Both pieces agree at `x*` exactly when the
//! level-matching condition holds.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec::{par_map, Execution};
use crate::model::{CostParams, PolicyTargets, ValidatedModel};
use crate::numeric::brent;
use crate::roots::RootPair;

/// Points used to bracket critical points of the intervention objective.
pub const INTERVENTION_SCAN_POINTS: usize = 1024;
/// Default QVI grid size.
pub const QVI_GRID_POINTS: usize = 2048;
/// Denominators below this magnitude make the boundary systems singular.
pub const SINGULAR_TOL: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CaseMode {
    /// λ exogenous; `a1`, `a2` solved independently.
    CaseI,
    /// λ and κ both designed; `a1 = a2`.
    CaseII,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ValueCoeffs {
    pub a1: f64,
    pub a2: f64,
    pub b: f64,
    pub c: f64,
    pub mode: CaseMode,
}

/// `z^m := x̂^m − x*^m`.
pub(crate) fn zpow(t: &PolicyTargets, m: f64) -> f64 {
    t.x_hat.powf(m) - t.x_star.powf(m)
}

pub(crate) fn check_spread(t: &PolicyTargets) -> Result<()> {
    if t.x_hat == t.x_star {
        return Err(Error::DegenerateTargets);
    }
    t.validate()
}

/// `b = ε/δ` and the constant `c` that annihilates the x-independent part of
/// the generator equation for `b ln x + c`:
/// `c = (b/δ) [Γ − ½σ² + Σ w_i (ln(1+γ_i) − γ_i)]`.
pub fn coeff_b_c(model: &ValidatedModel) -> (f64, f64) {
    let p = model.params();
    let b = p.epsilon / p.delta;
    let jump = model.levy_sum(|g| (1.0 + g).ln() - g);
    let c = b / p.delta * (p.gamma_drift - 0.5 * p.sigma * p.sigma + jump);
    (b, c)
}

/// `(a1, a2)` solving the two marginal-value conditions
/// `φ'(x̂) = φ'(x*) = 1/(1+λ)`.
pub fn coeffs_case1(targets: &PolicyTargets, lambda: f64, roots: &RootPair, b: f64) -> Result<(f64, f64)> {
    check_spread(targets)?;
    if !(lambda > -1.0) {
        return Err(Error::InvalidLambda(lambda));
    }
    let RootPair { l1, l2 } = *roots;
    let xh = targets.x_hat;
    let unit = 1.0 / (1.0 + lambda);
    let xx = targets.x_hat * targets.x_star;
    let den = xh.powf(l2 - 1.0) * zpow(targets, l1 - 1.0) - xh.powf(l1 - 1.0) * zpow(targets, l2 - 1.0);
    if !(den.abs() >= SINGULAR_TOL) {
        return Err(Error::SingularSystem { denominator: den });
    }
    let a1 = (b * zpow(targets, l2) / xx - zpow(targets, l2 - 1.0) * unit) / (l1 * den);
    let a2 = (b * zpow(targets, l1) / xx - zpow(targets, l1 - 1.0) * unit) / (l2 * -den);
    Ok((a1, a2))
}

/// Shared coefficient `a = b z / (x̂ x* (l1 z^{l1−1} + l2 z^{l2−1}))`, `z = x̂ − x*`.
pub fn coeff_case2(targets: &PolicyTargets, roots: &RootPair, b: f64) -> Result<f64> {
    check_spread(targets)?;
    let RootPair { l1, l2 } = *roots;
    let den = l1 * zpow(targets, l1 - 1.0) + l2 * zpow(targets, l2 - 1.0);
    if !(den.abs() >= SINGULAR_TOL) {
        return Err(Error::SingularSystem { denominator: den });
    }
    let z = targets.x_hat - targets.x_star;
    Ok(b * z / (targets.x_hat * targets.x_star * den))
}

/// Discounted candidate value `φ(s, x)`.
pub fn phi(coeffs: &ValueCoeffs, roots: &RootPair, delta: f64, x: f64, s: f64) -> Result<f64> {
    ValueFunction { coeffs: *coeffs, roots: *roots, delta }.phi(x, s)
}

/// Closed-form φ with its exact derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ValueFunction {
    pub coeffs: ValueCoeffs,
    pub roots: RootPair,
    pub delta: f64,
}

impl ValueFunction {
    pub fn phi(&self, x: f64, s: f64) -> Result<f64> {
        if !(x > 0.0) {
            return Err(Error::NonPositiveState(x));
        }
        Ok((-self.delta * s).exp() * self.profile(x))
    }

    /// Undiscounted profile `φ(0, x)`; `x` must be positive.
    pub fn profile(&self, x: f64) -> f64 {
        let ValueCoeffs { a1, a2, b, c, .. } = self.coeffs;
        let RootPair { l1, l2 } = self.roots;
        a1 * x.powf(l1) + a2 * x.powf(l2) + b * x.ln() + c
    }

    pub fn derivative(&self, x: f64) -> f64 {
        let ValueCoeffs { a1, a2, b, .. } = self.coeffs;
        let RootPair { l1, l2 } = self.roots;
        a1 * l1 * x.powf(l1 - 1.0) + a2 * l2 * x.powf(l2 - 1.0) + b / x
    }

    pub fn second_derivative(&self, x: f64) -> f64 {
        let ValueCoeffs { a1, a2, b, .. } = self.coeffs;
        let RootPair { l1, l2 } = self.roots;
        a1 * l1 * (l1 - 1.0) * x.powf(l1 - 2.0) + a2 * l2 * (l2 - 1.0) * x.powf(l2 - 2.0) - b / (x * x)
    }

    /// `e^{δs}(∂φ/∂s + Lφ + U)` at `x`, using the closed form for the
    /// post-jump values. Identically zero when the roots and `b`, `c` come
    /// from `model`.
    pub fn generator_residual(&self, model: &ValidatedModel, x: f64) -> f64 {
        let p = model.params();
        let v = self.profile(x);
        let d1 = self.derivative(x);
        let d2 = self.second_derivative(x);
        let jump = model.levy_sum(|g| self.profile(x * (1.0 + g)) - v - x * g * d1);
        -p.delta * v + p.gamma_drift * x * d1 + 0.5 * p.sigma * p.sigma * x * x * d2 + jump + p.epsilon * x.ln()
    }
}

/// Residuals of the three boundary conditions
/// `φ'(x̂) = 1/(1+λ)`, `φ'(x*) = 1/(1+λ)` and `φ(x*) = φ(x̂) + (x* − x̂ − κ)/(1+λ)`.
pub fn smooth_pasting_residuals(vf: &ValueFunction, targets: &PolicyTargets, costs: &CostParams) -> [f64; 3] {
    let unit = costs.unit_price();
    let (xh, xs) = (targets.x_hat, targets.x_star);
    [
        vf.derivative(xh) - unit,
        vf.derivative(xs) - unit,
        vf.profile(xs) - vf.profile(xh) - (xs - xh - costs.kappa) * unit,
    ]
}

/// φ extended to the intervention region by immediate purchase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CandidateValue {
    pub function: ValueFunction,
    pub targets: PolicyTargets,
    pub costs: CostParams,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Intervention {
    /// `Mφ(x)`.
    pub m_value: f64,
    /// Maximising purchase size.
    pub z_star: f64,
    /// Post-purchase state `x − κ − (1+λ) z_star`.
    pub post_state: f64,
}

impl CandidateValue {
    pub fn value(&self, x: f64) -> f64 {
        if x <= self.targets.x_star {
            self.function.profile(x)
        } else {
            self.continuation_at_target() + (x - self.targets.x_hat - self.costs.kappa) * self.costs.unit_price()
        }
    }

    fn continuation_at_target(&self) -> f64 {
        self.function.profile(self.targets.x_hat)
    }

    /// `φ(y) − y/(1+λ)`: the part of the intervention objective that depends
    /// on the post-purchase state `y`.
    fn net(&self, y: f64) -> f64 {
        self.value(y) - y * self.costs.unit_price()
    }

    /// `Mφ(x)` with purchases `z >= 0` and post-purchase states no lower
    /// than `floor`.
    ///
    /// Critical points of `y ↦ φ(y) − y/(1+λ)` (the first-order condition
    /// `φ'(y) = 1/(1+λ)`) are bracketed on a 1024-point log grid over the
    /// closed-form part of the feasible interval and refined with Brent;
    /// the supremum is taken over those points, the interval ends and the
    /// linear extension beyond `x*`.
    pub fn intervention_value(&self, x: f64, floor: f64) -> Result<Intervention> {
        if !(x > 0.0) {
            return Err(Error::NonPositiveState(x));
        }
        let floor = floor.max(f64::MIN_POSITIVE);
        let upper = x - self.costs.kappa;
        if !(upper >= floor) {
            return Err(Error::EmptyFeasibleSet { x, floor });
        }
        let price = self.costs.unit_price();
        let x_star = self.targets.x_star;
        let mut best_y = upper;
        let mut best = self.net(upper);
        let consider = |y: f64, best_y: &mut f64, best: &mut f64| {
            let v = self.net(y);
            if v > *best || (v == *best && y < *best_y) {
                *best = v;
                *best_y = y;
            }
        };
        consider(floor, &mut best_y, &mut best);
        let hi = upper.min(x_star);
        if hi > floor {
            consider(hi, &mut best_y, &mut best);
            let fprime = |y: f64| self.function.derivative(y) - price;
            let n = INTERVENTION_SCAN_POINTS;
            let ratio = (hi / floor).ln() / (n - 1) as f64;
            let mut prev_y = floor;
            let mut prev_d = fprime(floor);
            for i in 1..n {
                let y = if i == n - 1 { hi } else { floor * (ratio * i as f64).exp() };
                let d = fprime(y);
                if prev_d == 0.0 {
                    consider(prev_y, &mut best_y, &mut best);
                } else if prev_d.signum() != d.signum() && d != 0.0 {
                    let root = brent(fprime, prev_y, y, 0.0, 200);
                    consider(root, &mut best_y, &mut best);
                }
                prev_y = y;
                prev_d = d;
            }
        }
        Ok(Intervention {
            m_value: best + (x - self.costs.kappa) * price,
            z_star: (x - self.costs.kappa - best_y) * price,
            post_state: best_y,
        })
    }
}

/// Log-spaced evaluation grid for [`qvi_check`]; `x_min` doubles as the
/// lowest admissible post-purchase state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub points: usize,
}

impl GridSpec {
    /// `[0.1 x̂, 2 x*]` with 2048 points.
    pub fn around(targets: &PolicyTargets) -> Self {
        Self { x_min: 0.1 * targets.x_hat, x_max: 2.0 * targets.x_star, points: QVI_GRID_POINTS }
    }

    /// Log-spaced nodes, with the node closest to `x_star` moved onto it.
    pub fn nodes(&self, x_star: f64) -> Result<Vec<f64>> {
        if !(self.x_min > 0.0 && self.x_min < x_star && x_star < self.x_max && self.points >= 3) {
            return Err(Error::InvalidGrid("need 0 < x_min < x_star < x_max and at least 3 points"));
        }
        let n = self.points;
        let step = (self.x_max / self.x_min).ln() / (n - 1) as f64;
        let mut nodes: Vec<f64> = (0..n).map(|i| self.x_min * (step * i as f64).exp()).collect();
        nodes[n - 1] = self.x_max;
        let k = nodes
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - x_star).abs().total_cmp(&(b.1 - x_star).abs()))
            .map(|(i, _)| i)
            .unwrap();
        nodes[k] = x_star;
        Ok(nodes)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QviRow {
    pub x: f64,
    pub phi: f64,
    /// `None` where no purchase is admissible.
    pub m_phi: Option<f64>,
    /// Generator residual; only defined in the continuation region.
    pub residual: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QviReport {
    pub grid: Vec<QviRow>,
    /// `min (φ − Mφ)` over grid points below `x*`.
    pub min_margin_continuation: f64,
    /// `max |Lφ + U|` over grid points below `x*`.
    pub max_abs_residual_continuation: f64,
    /// `max |φ − Mφ|` over grid points at or above `x*`.
    pub max_gap_intervention: f64,
}

impl QviReport {
    /// Names of the conditions violated at tolerance `tol`.
    pub fn violations(&self, tol: f64) -> Vec<&'static str> {
        let mut out = Vec::new();
        if !(self.min_margin_continuation >= -tol) {
            out.push("phi >= M phi in continuation region");
        }
        if !(self.max_abs_residual_continuation <= tol) {
            out.push("generator equation in continuation region");
        }
        if !(self.max_gap_intervention <= tol) {
            out.push("phi = M phi in intervention region");
        }
        out
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.violations(tol).is_empty()
    }
}

/// Evaluates the QVI conditions for `candidate` on the grid.
pub fn qvi_check(candidate: &CandidateValue, model: &ValidatedModel, grid: &GridSpec, exec: Execution) -> Result<QviReport> {
    let x_star = candidate.targets.x_star;
    let nodes = grid.nodes(x_star)?;
    let rows = par_map(exec, nodes.len(), |i| -> Result<QviRow> {
        let x = nodes[i];
        let phi = candidate.value(x);
        let m_phi = match candidate.intervention_value(x, grid.x_min) {
            Ok(iv) => Some(iv.m_value),
            Err(Error::EmptyFeasibleSet { .. }) => None,
            Err(e) => return Err(e),
        };
        let residual = (x < x_star).then(|| candidate.function.generator_residual(model, x));
        Ok(QviRow { x, phi, m_phi, residual })
    });
    let grid: Vec<QviRow> = rows.into_iter().collect::<Result<_>>()?;
    let mut min_margin = f64::INFINITY;
    let mut max_res = 0.0f64;
    let mut max_gap = 0.0f64;
    for row in &grid {
        if row.x < x_star {
            if let Some(m) = row.m_phi {
                min_margin = min_margin.min(row.phi - m);
            }
            if let Some(r) = row.residual {
                max_res = max_res.max(r.abs());
            }
        } else if let Some(m) = row.m_phi {
            max_gap = max_gap.max((row.phi - m).abs());
        }
    }
    Ok(QviReport {
        grid,
        min_margin_continuation: min_margin,
        max_abs_residual_continuation: max_res,
        max_gap_intervention: max_gap,
    })
}
