//! Sensitivity of the agent's policy `(x̂, x*)` to the costs `(λ, κ)`.
//!
//! [`sens_ift`] differentiates the forward residual system implicitly and is
//! the reference. [`sens_fd`] differences the forward solve itself.
//! [`sens_printed`] evaluates a set of closed-form expressions for the same
//! derivatives in their published form; they do not agree with the other
//! two and are kept for comparison only.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{CostParams, PolicyTargets};
use crate::numeric::solve2;
use crate::roots::RootPair;
use crate::solve::{forward_solve, jacobian, residual_system, SolveOptions};
use crate::value::{check_spread, zpow};

pub const DEFAULT_FD_STEP: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SensitivityMatrix {
    pub dxhat_dlambda: f64,
    pub dxstar_dlambda: f64,
    pub dxhat_dkappa: f64,
    pub dxstar_dkappa: f64,
}

impl SensitivityMatrix {
    pub fn entries(&self) -> [f64; 4] {
        [self.dxhat_dlambda, self.dxstar_dlambda, self.dxhat_dkappa, self.dxstar_dkappa]
    }

    fn from_entries(e: [f64; 4]) -> Self {
        Self { dxhat_dlambda: e[0], dxstar_dlambda: e[1], dxhat_dkappa: e[2], dxstar_dkappa: e[3] }
    }

    /// Entrywise `|self − other| / max(|other|, floor)`.
    pub fn relative_difference(&self, other: &Self, floor: f64) -> [f64; 4] {
        let (a, b) = (self.entries(), other.entries());
        std::array::from_fn(|i| (a[i] - b[i]).abs() / b[i].abs().max(floor))
    }

    pub fn max_relative_difference(&self, other: &Self, floor: f64) -> f64 {
        self.relative_difference(other, floor).into_iter().fold(0.0, f64::max)
    }

    fn norm_of_difference(&self, other: &Self) -> f64 {
        let (a, b) = (self.entries(), other.entries());
        (0..4).map(|i| (a[i] - b[i]).powi(2)).sum::<f64>().sqrt()
    }
}

/// The published `[f_i]^{-1}` expressions, transcribed term by term.
pub fn sens_printed(targets: &PolicyTargets, roots: &RootPair, b: f64) -> Result<SensitivityMatrix> {
    check_spread(targets)?;
    let RootPair { l1, l2 } = *roots;
    let (xh, xs) = (targets.x_hat, targets.x_star);
    let zp = |m: f64| zpow(targets, m);
    let z = xh - xs;
    let g = xh * xs * (xh / xs).ln();
    let d = l1 * zp(l1) + l2 * zp(l2);
    let p = l1 * zp(l1 - 1.0) + l2 * zp(l2 - 1.0);
    let s = zp(l1) + zp(l2);
    let q1 = l1 * l1 * xh.powf(l1 - 1.0) + l2 * l2 * xh.powf(l2 - 1.0);
    let q2 = l1 * (l1 - 1.0) * xh.powf(l1 - 2.0) + l2 * (l2 - 1.0) * xh.powf(l2 - 2.0);
    // The first bracket of f1 is unbalanced in print; it is closed after
    // the product with (1 − ...).
    let f1 = xs / b * (p / d * (1.0 - xh * q1 / d)) + xh * xs / b * (q2 / d);
    let f2 = xh / b * (p / d * (1.0 + xs * q1 / d)) - xh * xs / b * (q2 / d);
    let tail = (l1 * zp(l1 - 1.0) - l2 * zp(l2 - 2.0)) / d;
    let at = |x: f64| {
        (
            (l1 * x.powf(l1 - 2.0) - l2 * x.powf(l2 - 2.0)) / d,
            (l1 * l1 * x.powf(l1 - 1.0) - l2 * l2 * x.powf(l2 - 1.0)) / d,
            (l1 * l1 * x.powf(l1 - 2.0) - l2 * l2 * x.powf(l2 - 2.0)) / d,
        )
    };
    let (h1, h2, h3) = at(xh);
    let f3 = (z * xh - g) * h1 + s / d * (1.0 - z * h2) + g * h3 - (g / xh + xs + g * h2) * tail - 1.0;
    let (k1, k2, k3) = at(xs);
    let f4 = (g - z * xs) * k1 - s / d * (1.0 - z * k2) - g * k3 - (g / xs - xs - g * k2) * tail + 1.0;
    let f = [f1, f2, f3, f4];
    for (i, v) in f.iter().enumerate() {
        if !(v.abs() >= 1e-14) {
            return Err(Error::SingularSensitivity { index: i + 1 });
        }
    }
    Ok(SensitivityMatrix::from_entries(f.map(|v| 1.0 / v)))
}

/// `−(∂R/∂(x̂, x*))⁻¹ ∂R/∂(λ, κ)` at a solution `targets` of the forward
/// system under `costs`. The state Jacobian is a central difference; the
/// cost derivatives are exact, since `R` is rational in `1 + λ` and affine
/// in κ.
pub fn sens_ift(costs: &CostParams, targets: &PolicyTargets, roots: &RootPair, b: f64) -> Result<SensitivityMatrix> {
    costs.validate()?;
    check_spread(targets)?;
    let x = [targets.x_hat, targets.x_star];
    let f = |x: [f64; 2]| residual_system(x, costs, roots, b);
    let j = jacobian(&f, x);
    let [dl, dk] = cost_derivatives(costs, targets);
    let col_l = solve2(j, [-dl[0], -dl[1]]).ok_or(Error::SingularJacobian)?;
    let col_k = solve2(j, [-dk[0], -dk[1]]).ok_or(Error::SingularJacobian)?;
    Ok(SensitivityMatrix::from_entries([col_l[0], col_l[1], col_k[0], col_k[1]]))
}

/// `[∂R/∂λ, ∂R/∂κ]`, each a column `(∂R1, ∂R2)`.
pub fn cost_derivatives(costs: &CostParams, targets: &PolicyTargets) -> [[f64; 2]; 2] {
    let u = costs.unit_price();
    let gap = targets.x_star - targets.x_hat - costs.kappa;
    [[u * u, -gap * u * u], [0.0, -u]]
}

fn perturbation_steps(costs: &CostParams, step: f64) -> (f64, f64) {
    (step * (1.0 + costs.lambda), step * costs.kappa.abs().max(1.0))
}

/// Central differences of the forward solve, starting every perturbed solve
/// from `base` so all four stay on the same branch. Steps are relative:
/// `step·(1+λ)` for λ and `step·max(|κ|, 1)` for κ.
pub fn sens_fd(
    costs: &CostParams,
    roots: &RootPair,
    b: f64,
    step: f64,
    base: &PolicyTargets,
    opts: &SolveOptions,
) -> Result<SensitivityMatrix> {
    if !(step > 0.0) {
        return Err(Error::PositiveStepRequired(step));
    }
    costs.validate()?;
    let (hl, hk) = perturbation_steps(costs, step);
    let solve_at = |lambda: f64, kappa: f64| -> Result<PolicyTargets> {
        let c = CostParams::new(lambda, kappa)?;
        Ok(forward_solve(&c, roots, b, Some(*base), opts)?.targets)
    };
    let lp = solve_at(costs.lambda + hl, costs.kappa)?;
    let lm = solve_at(costs.lambda - hl, costs.kappa)?;
    let kp = solve_at(costs.lambda, costs.kappa + hk)?;
    let km = solve_at(costs.lambda, costs.kappa - hk)?;
    Ok(SensitivityMatrix::from_entries([
        (lp.x_hat - lm.x_hat) / (2.0 * hl),
        (lp.x_star - lm.x_star) / (2.0 * hl),
        (kp.x_hat - km.x_hat) / (2.0 * hk),
        (kp.x_star - km.x_star) / (2.0 * hk),
    ]))
}

/// `‖D(h) − D(h/2)‖ / ‖D(h/2) − D(h/4)‖` for the central-difference matrix
/// `D`; about 4 for a second-order scheme in its asymptotic range.
pub fn richardson_ratio(
    costs: &CostParams,
    roots: &RootPair,
    b: f64,
    step: f64,
    base: &PolicyTargets,
    opts: &SolveOptions,
) -> Result<f64> {
    let d1 = sens_fd(costs, roots, b, step, base, opts)?;
    let d2 = sens_fd(costs, roots, b, step / 2.0, base, opts)?;
    let d4 = sens_fd(costs, roots, b, step / 4.0, base, opts)?;
    Ok(d1.norm_of_difference(&d2) / d2.norm_of_difference(&d4))
}
