//! Greedy Fisher Information Sensor Selection.
//!
//! Per step: estimate the state as the argmax of the predicted belief, then
//! pick the control with the largest precomputed `phi(x, u)`. The decision
//! depends on the belief only through its argmax.

use crate::fisher::FisherTable;
use crate::filter::declare_state;
use crate::markov::BeliefVector;

/// A chosen control together with the score that backed the choice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyDecision {
    pub control: usize,
    pub diagnostic: f64,
}

/// Table lookup at the estimated state.
pub fn gfis2_select(table: &FisherTable, p_pred: &BeliefVector) -> PolicyDecision {
    let x = declare_state(p_pred);
    let control = table.best_control[x];
    PolicyDecision {
        control,
        diagnostic: table.phi[x][control],
    }
}
