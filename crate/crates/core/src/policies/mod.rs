//! Sensor-selection policies: the greedy Fisher-information rule, the
//! dynamic-programming baseline over a quantized belief space, and trivial
//! baselines used for comparison.

pub mod dp;
pub mod gfis2;
pub mod rollout;

pub use dp::{dp_solve, dp_stage_cost_vector, BeliefGrid, DpPolicy, StageTable};
pub use gfis2::{gfis2_select, PolicyDecision};
pub use rollout::{run_policy, EpisodeRecord, Policy};
