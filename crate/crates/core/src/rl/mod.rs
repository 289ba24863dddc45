//! Clipped-surrogate policy optimization, written from scratch.
//!
//! [`mlp`] holds the tanh networks and the optimizer, [`policy`] the factored
//! categorical policy, [`ppo`] advantage estimation and the update, and
//! [`train`] the rollout loops for both agents.

pub mod bandit;
pub mod mlp;
pub mod policy;
pub mod ppo;
pub mod train;
