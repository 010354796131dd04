//! Episode simulation: the control-selection / measurement / estimation loop
//! shared by every policy.

use nalgebra::DVector;
use rand::Rng;

use crate::error::Result;
use crate::filter::{apply_posterior_mode, declare_state, update_step, PosteriorMode};
use crate::fisher::FisherTable;
use crate::markov::{predict_belief, sample_trajectory, BeliefVector, TransitionMatrix};
use crate::policies::dp::{BeliefGrid, DpPolicy};
use crate::policies::gfis2::gfis2_select;
use crate::rng;
use crate::sensing::ObservationModel;

/// A sensing policy ready to run.
pub enum Policy<'a> {
    Gfis2(&'a FisherTable),
    Dp {
        policy: &'a DpPolicy,
        grid: &'a BeliefGrid,
    },
    /// Uniform random control each step.
    Random,
    /// The same control index every step.
    Fixed(usize),
    /// The control with the largest total sample count (lowest index on ties).
    FullBudget,
}

impl Policy<'_> {
    pub fn name(&self) -> String {
        match self {
            Policy::Gfis2(_) => "gfis2".into(),
            Policy::Dp { .. } => "dp".into(),
            Policy::Random => "random".into(),
            Policy::Fixed(u) => format!("fixed({u})"),
            Policy::FullBudget => "full-budget".into(),
        }
    }

    /// Stream offset so that policies never share an observation-noise stream.
    fn stream_id(&self) -> u64 {
        match self {
            Policy::Gfis2(_) => 0,
            Policy::Dp { .. } => 1,
            Policy::Random => 2,
            Policy::Fixed(u) => 16 + *u as u64,
            Policy::FullBudget => 3,
        }
    }
}

/// Everything one episode records, step by step.
#[derive(Debug, Clone)]
pub struct EpisodeRecord {
    pub policy: String,
    pub seed: u64,
    pub true_states: Vec<usize>,
    /// Raw (unprojected) posterior per step.
    pub posteriors: Vec<DVector<f64>>,
    pub declared: Vec<usize>,
    /// Control index used to generate each step's observation.
    pub controls: Vec<usize>,
}

impl EpisodeRecord {
    pub fn len(&self) -> usize {
        self.true_states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.true_states.is_empty()
    }
}

fn select_control(
    policy: &Policy,
    model: &ObservationModel,
    p_pred: &BeliefVector,
    stage: usize,
    policy_rng: &mut rand_chacha::ChaCha8Rng,
) -> usize {
    match policy {
        Policy::Gfis2(table) => gfis2_select(table, p_pred).control,
        Policy::Dp { policy, grid } => {
            // Receding horizon: every step consults the first-stage table.
            let _ = stage;
            policy.decide(grid, p_pred, 0).0
        }
        Policy::Random => policy_rng.random_range(0..model.controls().len()),
        Policy::Fixed(u) => *u,
        Policy::FullBudget => {
            let mut best = 0;
            for (i, c) in model.controls().iter().enumerate() {
                if c.total() > model.controls().get(best).total() {
                    best = i;
                }
            }
            best
        }
    }
}

/// Run one episode of `steps` measurements.
///
/// The ground-truth trajectory stream depends only on the seed, so different
/// policies run against identical state paths; observation noise uses a
/// per-policy stream because control-dependent observation dimensions cannot
/// share one.
pub fn run_policy(
    policy: &Policy,
    model: &ObservationModel,
    p_mat: &TransitionMatrix,
    pi: &BeliefVector,
    steps: usize,
    seed: u64,
    mode: PosteriorMode,
) -> Result<EpisodeRecord> {
    let trajectory = sample_trajectory(p_mat, pi, steps.saturating_sub(1), seed)?;
    let mut obs_rng = rng::stream(seed, rng::streams::OBSERVATIONS + policy.stream_id());
    let mut policy_rng = rng::stream(seed, rng::streams::POLICY + policy.stream_id());

    let mut record = EpisodeRecord {
        policy: policy.name(),
        seed,
        true_states: Vec::with_capacity(steps),
        posteriors: Vec::with_capacity(steps),
        declared: Vec::with_capacity(steps),
        controls: Vec::with_capacity(steps),
    };

    let mut p_pred = pi.clone();
    let mut control = select_control(policy, model, &p_pred, 0, &mut policy_rng);
    for k in 0..steps {
        let x = trajectory.states[k];
        let y = model.sample_observation(x, control, &mut obs_rng);
        let st = update_step(model, &p_pred, &y, control)?;
        let repaired = apply_posterior_mode(&st.posterior, mode);
        record.true_states.push(x);
        record.posteriors.push(st.posterior.vector().clone());
        record.declared.push(declare_state(&repaired));
        record.controls.push(control);
        p_pred = predict_belief(p_mat, &repaired)?;
        control = select_control(policy, model, &p_pred, k + 1, &mut policy_rng);
    }
    Ok(record)
}
