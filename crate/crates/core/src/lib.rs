//! Transaction-cost design for an impulse-controlled agent whose liquidity
//! follows a geometric jump-diffusion.
//!
//! The agent consumes by purchases of size `z` costing `(1 + λ) z + κ`; its
//! optimal policy is a band `(x̂, x*)`: buy when liquidity reaches `x*`,
//! landing at `x̂`. This crate solves both directions of that relationship.
//!
//! * [`design`]: costs `(λ, κ)` that make a chosen `(x̂, x*)` optimal.
//! * [`solve`]: the `(x̂, x*)` an agent picks under given costs.
//! * [`sens`]: derivatives of the policy in the costs.
//! * [`value`]: the candidate value function and a QVI checker.
//! * [`sim`]: Monte Carlo payoffs of threshold policies for the agent and a
//!   Principal setting the costs.

pub mod cli;
pub mod config;
pub mod design;
pub mod error;
pub mod exec;
pub mod model;
pub mod numeric;
pub mod output;
pub mod roots;
pub mod sens;
pub mod sim;
pub mod solve;
pub mod value;

pub use error::{Error, Result};
pub use exec::Execution;
