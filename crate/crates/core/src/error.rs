use thiserror::Error;

use crate::model::PolicyTargets;

pub type Result<T> = std::result::Result<T, Error>;

/// Everything that can go wrong between parameter ingestion and simulation.
///
/// Variants fall into two families: input validation (the caller handed us
/// something that violates a model invariant) and numerical failure (the
/// inputs were valid but a solver could not deliver). [`Error::is_validation`]
/// tells them apart; the CLI maps the two families to different exit codes.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("model.sigma must be positive, got {0}")]
    NonPositiveSigma(f64),
    #[error("model.delta must be positive, got {0}")]
    NonPositiveDelta(f64),
    #[error("model.epsilon must be non-zero")]
    ZeroEpsilon,
    #[error("{field} must be finite")]
    NonFinite { field: &'static str },
    #[error("jumps.atoms[{index}].factor must exceed -1, got {factor}")]
    JumpFactorBelowMinusOne { index: usize, factor: f64 },
    #[error("jumps.atoms[{index}].rate must be non-negative, got {rate}")]
    NegativeRate { index: usize, rate: f64 },

    #[error("costs.lambda must exceed -1, got {0}")]
    InvalidLambda(f64),
    #[error("targets must satisfy 0 < x_hat < x_star, got x_hat={x_hat}, x_star={x_star}")]
    InvalidTargets { x_hat: f64, x_star: f64 },
    #[error("policy must satisfy 0 < after < trigger, got trigger={trigger}, after={after}")]
    InvalidPolicy { trigger: f64, after: f64 },
    #[error("sim.{field} is invalid: {reason}")]
    InvalidSimConfig { field: &'static str, reason: &'static str },
    #[error("principal.delta_p must be positive, got {0}")]
    InvalidPrincipal(f64),
    #[error("qvi grid is invalid: {0}")]
    InvalidGrid(&'static str),

    #[error("closed-form roots need an empty jump specification")]
    JumpsPresent,
    #[error("characteristic function has no sign change within |l| <= {limit}")]
    BracketNotFound { limit: f64 },

    #[error("targets are degenerate: x_hat equals x_star")]
    DegenerateTargets,
    #[error("smooth-pasting system is singular (denominator {denominator:e})")]
    SingularSystem { denominator: f64 },
    #[error("state must be positive, got {0}")]
    NonPositiveState(f64),
    #[error("no admissible purchase from x={x}: post-purchase state would fall below {floor}")]
    EmptyFeasibleSet { x: f64, floor: f64 },
    #[error("calibrated lambda {0} is not above -1")]
    InfeasibleLambda(f64),
    #[error("shifted targets violate 0 < x_hat < x_star: x_hat={x_hat}, x_star={x_star}")]
    InvalidShift { x_hat: f64, x_star: f64 },

    #[error("forward solve failed from every start (best max residual {best_residual:e})")]
    ForwardSolveFailed { best_residual: f64 },
    #[error("forward solve found {} distinct solutions", .0.len())]
    MultipleSolutions(Vec<PolicyTargets>),

    #[error("printed sensitivity f{index} vanishes")]
    SingularSensitivity { index: usize },
    #[error("residual Jacobian is singular")]
    SingularJacobian,
    #[error("finite-difference step must be positive, got {0}")]
    PositiveStepRequired(f64),

    #[error("policy purchase size is not finite")]
    InfeasiblePolicy,
    #[error("sim.x0 must be positive, got {0}")]
    NonPositiveInitialState(f64),
}

impl Error {
    /// True for errors caused by invalid inputs rather than solver failure.
    pub fn is_validation(&self) -> bool {
        use Error::*;
        matches!(
            self,
            NonPositiveSigma(_)
                | NonPositiveDelta(_)
                | ZeroEpsilon
                | NonFinite { .. }
                | JumpFactorBelowMinusOne { .. }
                | NegativeRate { .. }
                | InvalidLambda(_)
                | InvalidTargets { .. }
                | InvalidPolicy { .. }
                | InvalidSimConfig { .. }
                | InvalidPrincipal(_)
                | InvalidGrid(_)
                | JumpsPresent
                | DegenerateTargets
                | NonPositiveState(_)
                | InvalidShift { .. }
                | PositiveStepRequired(_)
                | InfeasiblePolicy
                | NonPositiveInitialState(_)
        )
    }
}
