//! The inverse problem: transaction costs under which a prescribed
//! `(x̂, x*)` is the agent's optimal policy.
//!
//! With `z^m := x̂^m − x*^m`, `z := x̂ − x*`, `G := x̂ x* ln(x̂/x*)` and
//!
//! ```text
//! P = l1 z^{l1−1} + l2 z^{l2−1},  D = l1 z^{l1} + l2 z^{l2},  S = z^{l1} + z^{l2},
//! ```
//!
//! the shared-coefficient calibration is
//!
//! ```text
//! λ = x̂ x* P / (b D) − 1,   κ = z S / D + G P / D − z.
//! ```

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{CostParams, PolicyTargets, ValidatedModel};
use crate::roots::{model_roots, RootPair};
use crate::solve::{forward_solve, SolveOptions};
use crate::value::{
    check_spread, coeff_b_c, coeff_case2, coeffs_case1, zpow, CandidateValue, CaseMode, ValueCoeffs, ValueFunction,
    SINGULAR_TOL,
};

/// Proportional and fixed costs implementing `targets` with `a1 = a2`.
pub fn design_case2(targets: &PolicyTargets, roots: &RootPair, b: f64) -> Result<CostParams> {
    check_spread(targets)?;
    let RootPair { l1, l2 } = *roots;
    let (xh, xs) = (targets.x_hat, targets.x_star);
    let p = l1 * zpow(targets, l1 - 1.0) + l2 * zpow(targets, l2 - 1.0);
    let d = l1 * zpow(targets, l1) + l2 * zpow(targets, l2);
    let s = zpow(targets, l1) + zpow(targets, l2);
    for den in [p, d] {
        if !(den.abs() >= SINGULAR_TOL) {
            return Err(Error::SingularSystem { denominator: den });
        }
    }
    let z = xh - xs;
    let g = xh * xs * (xh / xs).ln();
    let lambda = xh * xs * p / (b * d) - 1.0;
    if !(lambda > -1.0) {
        return Err(Error::InfeasibleLambda(lambda));
    }
    let kappa = z * s / d + g * p / d - z;
    Ok(CostParams { lambda, kappa })
}

/// Fixed cost implementing `targets` when λ is given: `(a1, a2)` from the
/// marginal-value conditions, then κ from level matching.
pub fn design_case1(targets: &PolicyTargets, lambda: f64, roots: &RootPair, b: f64) -> Result<f64> {
    let (a1, a2) = coeffs_case1(targets, lambda, roots, b)?;
    let (xh, xs) = (targets.x_hat, targets.x_star);
    let jump = -a1 * zpow(targets, roots.l1) - a2 * zpow(targets, roots.l2) + b * (xs / xh).ln();
    Ok(xs - xh - (1.0 + lambda) * jump)
}

/// Problem-equivalence transfer: the costs under which this agent copies the
/// optimal policy `(x̂₂, x*₂)` of some other impulse problem. Same map as
/// [`design_case2`].
pub fn equivalence_transfer(external_policy: &PolicyTargets, roots: &RootPair, b: f64) -> Result<CostParams> {
    design_case2(external_policy, roots, b)
}

/// Moves the policy induced by `costs0` by `(h1, h_minus1)`: the threshold
/// to `x*₀ + h1`, the post-purchase level to `x̂₀ + h_minus1`, and returns
/// the costs implementing the shifted policy.
///
/// `init` selects the branch of the forward problem when `costs0` induces
/// more than one stationary policy.
pub fn retarget(
    costs0: &CostParams,
    shifts: (f64, f64),
    roots: &RootPair,
    b: f64,
    init: Option<PolicyTargets>,
    opts: &SolveOptions,
) -> Result<CostParams> {
    let base = forward_solve(costs0, roots, b, init, opts)?;
    let shifted = PolicyTargets { x_hat: base.targets.x_hat + shifts.1, x_star: base.targets.x_star + shifts.0 };
    if !(shifted.x_hat > 0.0 && shifted.x_hat < shifted.x_star) {
        return Err(Error::InvalidShift { x_hat: shifted.x_hat, x_star: shifted.x_star });
    }
    design_case2(&shifted, roots, b)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind")]
pub enum Warning {
    PurchaseSizeNonpositive { z_hat: f64 },
    PostStateNonpositive { x_hat: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeasibilityReport {
    pub z_hat: f64,
    pub warnings: Vec<Warning>,
}

/// Purchase size at the threshold and the sanity warnings attached to it.
pub fn feasibility_report(targets: &PolicyTargets, costs: &CostParams) -> FeasibilityReport {
    let z_hat = targets.purchase_size(costs);
    let mut warnings = Vec::new();
    if !(z_hat > 0.0) {
        warnings.push(Warning::PurchaseSizeNonpositive { z_hat });
    }
    if !(targets.x_hat > 0.0) {
        warnings.push(Warning::PostStateNonpositive { x_hat: targets.x_hat });
    }
    FeasibilityReport { z_hat, warnings }
}

/// Everything needed to evaluate the calibrated candidate value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Calibration {
    pub targets: PolicyTargets,
    pub costs: CostParams,
    pub roots: RootPair,
    pub coeffs: ValueCoeffs,
    pub delta: f64,
}

impl Calibration {
    /// Shared-coefficient calibration of `targets` for `model`.
    pub fn case2(model: &ValidatedModel, targets: &PolicyTargets) -> Result<Self> {
        let roots = model_roots(model)?;
        let (b, c) = coeff_b_c(model);
        let costs = design_case2(targets, &roots, b)?;
        let a = coeff_case2(targets, &roots, b)?;
        let coeffs = ValueCoeffs { a1: a, a2: a, b, c, mode: CaseMode::CaseII };
        Ok(Self { targets: *targets, costs, roots, coeffs, delta: model.params().delta })
    }

    /// Calibration with λ fixed.
    pub fn case1(model: &ValidatedModel, targets: &PolicyTargets, lambda: f64) -> Result<Self> {
        let roots = model_roots(model)?;
        let (b, c) = coeff_b_c(model);
        let kappa = design_case1(targets, lambda, &roots, b)?;
        let (a1, a2) = coeffs_case1(targets, lambda, &roots, b)?;
        let coeffs = ValueCoeffs { a1, a2, b, c, mode: CaseMode::CaseI };
        Ok(Self { targets: *targets, costs: CostParams::new(lambda, kappa)?, roots, coeffs, delta: model.params().delta })
    }

    pub fn value_function(&self) -> ValueFunction {
        ValueFunction { coeffs: self.coeffs, roots: self.roots, delta: self.delta }
    }

    pub fn candidate(&self) -> CandidateValue {
        CandidateValue { function: self.value_function(), targets: self.targets, costs: self.costs }
    }
}
