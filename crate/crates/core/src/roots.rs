//! The characteristic function of the generator acting on power functions,
//!
//! ```text
//! h(l) = ½σ² l (l − 1) + l Γ − δ + Σ w_i [(1 + γ_i)^l − 1 − l γ_i],
//! ```
//!
//! and its two real roots `l1 < 0 < l2`. `h` is strictly convex with
//! `h(0) = −δ < 0`, so there is exactly one root on each side of zero.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::ValidatedModel;
use crate::numeric::brent;

/// Residual tolerance the root finder drives `|h|` to.
pub const ROOT_FTOL: f64 = 1e-12;
/// Residual a [`RootPair`] is guaranteed to satisfy.
pub const ROOT_PAIR_TOL: f64 = 1e-10;
/// Largest |l| searched before giving up on a bracket.
pub const BRACKET_LIMIT: f64 = 256.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RootPair {
    pub l1: f64,
    pub l2: f64,
}

pub fn char_fn(model: &ValidatedModel, l: f64) -> f64 {
    let p = model.params();
    let diffusion = 0.5 * p.sigma * p.sigma * l * (l - 1.0) + l * p.gamma_drift - p.delta;
    diffusion + model.levy_sum(|g| (1.0 + g).powf(l) - 1.0 - l * g)
}

/// Quadratic-formula roots of the pure-diffusion characteristic polynomial
/// `½σ² l² + (Γ − ½σ²) l − δ`.
pub fn closed_form_roots(model: &ValidatedModel) -> Result<RootPair> {
    if !model.jumps().is_empty() {
        return Err(Error::JumpsPresent);
    }
    let p = model.params();
    let a = 0.5 * p.sigma * p.sigma;
    let b = p.gamma_drift - a;
    let c = -p.delta;
    let disc = (b * b - 4.0 * a * c).sqrt();
    // Cancellation-free form: q carries the sign of b.
    let q = -0.5 * (b + disc.copysign(b));
    let (r1, r2) = (q / a, c / q);
    Ok(RootPair { l1: r1.min(r2), l2: r1.max(r2) })
}

/// Roots of `h` by bracket expansion `[0, 2], [0, 4], …` (mirrored for the
/// negative root) followed by Brent refinement to `|h| <= 1e-12`.
pub fn solve_roots(model: &ValidatedModel) -> Result<RootPair> {
    let h = |l: f64| char_fn(model, l);
    let l2 = find_root_on_side(&h, 1.0)?;
    let l1 = find_root_on_side(&h, -1.0)?;
    Ok(RootPair { l1, l2 })
}

fn find_root_on_side<F: Fn(f64) -> f64>(h: &F, direction: f64) -> Result<f64> {
    let mut inner = 0.0;
    let mut outer = 2.0;
    while outer <= BRACKET_LIMIT {
        let l = direction * outer;
        let value = h(l);
        if value > 0.0 || value.is_nan() {
            let lo = direction * inner;
            let root = brent(h, lo, l, ROOT_FTOL, 500);
            return Ok(root);
        }
        inner = outer;
        outer *= 2.0;
    }
    Err(Error::BracketNotFound { limit: BRACKET_LIMIT })
}

/// Closed-form roots without jumps, numerical roots otherwise.
pub fn model_roots(model: &ValidatedModel) -> Result<RootPair> {
    if model.jumps().is_empty() {
        closed_form_roots(model)
    } else {
        solve_roots(model)
    }
}

impl RootPair {
    /// Max of `|h(l1)|, |h(l2)|` for the given model.
    pub fn residual(&self, model: &ValidatedModel) -> f64 {
        char_fn(model, self.l1).abs().max(char_fn(model, self.l2).abs())
    }
}
