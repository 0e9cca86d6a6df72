//! Problem parameters for the liquidity process and the purchase technology.
//!
//! The liquidity process is a geometric jump-diffusion
//!
//! ```text
//! dX = Γ X dt + σ X dB + X γ(z) Ñ(dt, dz)
//! ```
//!
//! whose Lévy measure is a finite list of atoms `(rate, factor)`: jumps arrive
//! at total intensity `Σ rate` and multiply the state by `1 + factor`. Every
//! integral against the measure is therefore a finite sum.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Drift rate Γ.
    pub gamma_drift: f64,
    pub sigma: f64,
    /// Agent discount rate δ.
    pub delta: f64,
    /// Utility scale ε in `U(x) = ε ln x`.
    pub epsilon: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpAtom {
    pub rate: f64,
    pub factor: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct JumpSpec {
    #[serde(default)]
    pub atoms: Vec<JumpAtom>,
}

impl JumpSpec {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn new(atoms: Vec<JumpAtom>) -> Self {
        Self { atoms }
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// `Σ rate_i · f(factor_i)`, the exact integral of `f ∘ γ` against the
    /// atomic Lévy measure.
    pub fn levy_sum<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.atoms.iter().map(|a| a.rate * f(a.factor)).sum()
    }
}

/// A model/jump pair that has passed validation, with cached jump moments.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidatedModel {
    params: ModelParams,
    jumps: JumpSpec,
    total_intensity: f64,
    compensator_mean: f64,
}

impl ValidatedModel {
    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn jumps(&self) -> &JumpSpec {
        &self.jumps
    }

    /// Λ = Σ rate_i.
    pub fn total_intensity(&self) -> f64 {
        self.total_intensity
    }

    /// m_γ = Σ rate_i · factor_i.
    pub fn compensator_mean(&self) -> f64 {
        self.compensator_mean
    }

    /// `U(x) = ε ln x` over `δ`.
    pub fn log_coefficient(&self) -> f64 {
        self.params.epsilon / self.params.delta
    }

    pub fn levy_sum<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.jumps.levy_sum(f)
    }
}

fn finite(value: f64, field: &'static str) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite { field })
    }
}

pub fn validate_model(params: ModelParams, jumps: JumpSpec) -> Result<ValidatedModel> {
    finite(params.gamma_drift, "model.gamma_drift")?;
    if !(params.sigma > 0.0) {
        return Err(Error::NonPositiveSigma(params.sigma));
    }
    finite(params.sigma, "model.sigma")?;
    if !(params.delta > 0.0) {
        return Err(Error::NonPositiveDelta(params.delta));
    }
    finite(params.delta, "model.delta")?;
    finite(params.epsilon, "model.epsilon")?;
    if params.epsilon == 0.0 {
        return Err(Error::ZeroEpsilon);
    }
    for (index, atom) in jumps.atoms.iter().enumerate() {
        if !(atom.rate >= 0.0) {
            return Err(Error::NegativeRate { index, rate: atom.rate });
        }
        finite(atom.rate, "jumps.atoms.rate")?;
        if !(atom.factor > -1.0) {
            return Err(Error::JumpFactorBelowMinusOne { index, factor: atom.factor });
        }
        finite(atom.factor, "jumps.atoms.factor")?;
    }
    let total_intensity = jumps.levy_sum(|_| 1.0);
    let compensator_mean = jumps.levy_sum(|g| g);
    Ok(ValidatedModel { params, jumps, total_intensity, compensator_mean })
}

/// Proportional (λ) and fixed (κ) transaction costs: a purchase of size `z`
/// drains `(1 + λ) z + κ` of liquidity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostParams {
    pub lambda: f64,
    pub kappa: f64,
}

impl CostParams {
    pub fn new(lambda: f64, kappa: f64) -> Result<Self> {
        let costs = Self { lambda, kappa };
        costs.validate()?;
        Ok(costs)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > -1.0) || !self.lambda.is_finite() {
            return Err(Error::InvalidLambda(self.lambda));
        }
        finite(self.kappa, "costs.kappa")
    }

    /// `1 / (1 + λ)`, the marginal value of liquidity at both free boundaries.
    pub fn unit_price(&self) -> f64 {
        1.0 / (1.0 + self.lambda)
    }
}

/// The post-purchase level `x_hat` and intervention threshold `x_star`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyTargets {
    pub x_hat: f64,
    pub x_star: f64,
}

impl PolicyTargets {
    pub fn new(x_hat: f64, x_star: f64) -> Result<Self> {
        let t = Self { x_hat, x_star };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.x_hat > 0.0 && self.x_hat < self.x_star && self.x_star.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidTargets { x_hat: self.x_hat, x_star: self.x_star })
        }
    }

    /// Purchase size `(x_star - x_hat - κ) / (1 + λ)` when fired at the threshold.
    pub fn purchase_size(&self, costs: &CostParams) -> f64 {
        (self.x_star - self.x_hat - costs.kappa) / (1.0 + costs.lambda)
    }

    pub fn as_policy(&self) -> Policy {
        Policy { trigger: self.x_star, after: self.x_hat }
    }

    /// Largest componentwise relative distance to `other`.
    pub fn relative_distance(&self, other: &PolicyTargets) -> f64 {
        let d1 = (self.x_hat - other.x_hat).abs() / other.x_hat.abs();
        let d2 = (self.x_star - other.x_star).abs() / other.x_star.abs();
        d1.max(d2)
    }
}

/// A threshold policy: purchase as soon as liquidity reaches `trigger`,
/// landing at `after`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    pub trigger: f64,
    pub after: f64,
}

impl Policy {
    pub fn new(trigger: f64, after: f64) -> Result<Self> {
        let p = Self { trigger, after };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.after > 0.0 && self.after < self.trigger && self.trigger.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidPolicy { trigger: self.trigger, after: self.after })
        }
    }

    pub fn purchase_size(&self, costs: &CostParams) -> f64 {
        (self.trigger - self.after - costs.kappa) / (1.0 + costs.lambda)
    }

    pub fn as_targets(&self) -> PolicyTargets {
        PolicyTargets { x_hat: self.after, x_star: self.trigger }
    }
}
