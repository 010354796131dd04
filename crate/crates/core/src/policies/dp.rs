//! Finite-horizon dynamic programming over a quantized belief simplex.
//!
//! Stage cost: for a predicted belief `p` and control `u`, the expected
//! post-update squared error is `p^T h(p, u)` with
//! `h_i = 1 - tr(G^T G Q_i^u) - ||p + G (m_i^u - y_pred)||^2`,
//! where `G` and `y_pred` are the filter gain and predicted observation for
//! `(p, u)`. The backup integrates the continuation value over observations
//! by Monte Carlo from the belief mixture (which is exactly the marginal of
//! `y`, so the likelihood weight cancels), propagating the belief through the
//! exact Bayes map `P r(y, u) p / (1^T r(y, u) p)` and snapping it to the
//! nearest grid point.

use std::collections::HashMap;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::gain_and_predicted_obs;
use crate::markov::{BeliefVector, TransitionMatrix};
use crate::rng;
use crate::sensing::ObservationModel;

/// All points of the simplex lattice `{0, 1/d, ..., 1}^n` that sum to 1.
///
/// Only the `C(n+d-1, n-1)` simplex points are stored, not the full ambient
/// lattice.
#[derive(Debug, Clone)]
pub struct BeliefGrid {
    n: usize,
    resolution: usize,
    points: Vec<DVector<f64>>,
    index: HashMap<Vec<u32>, usize>,
}

impl BeliefGrid {
    pub fn new(n: usize, resolution: usize) -> Self {
        let mut coords = Vec::new();
        lattice_points(n, resolution as u32, &mut Vec::new(), &mut coords);
        let mut index = HashMap::with_capacity(coords.len());
        let mut points = Vec::with_capacity(coords.len());
        for (i, c) in coords.iter().enumerate() {
            index.insert(c.clone(), i);
            points.push(DVector::from_fn(n, |j, _| {
                c[j] as f64 / resolution as f64
            }));
        }
        Self {
            n,
            resolution,
            points,
            index,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn n_states(&self) -> usize {
        self.n
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn point(&self, i: usize) -> BeliefVector {
        BeliefVector::raw(self.points[i].clone())
    }

    pub fn points(&self) -> impl Iterator<Item = BeliefVector> + '_ {
        self.points.iter().map(|p| BeliefVector::raw(p.clone()))
    }

    /// Nearest lattice point: round each coordinate, then repair the total by
    /// shifting the entries whose rounding cost is smallest.
    pub fn nearest(&self, p: &DVector<f64>) -> usize {
        let d = self.resolution as f64;
        let scaled: Vec<f64> = p.iter().map(|&x| (x * d).max(0.0)).collect();
        let mut k: Vec<i64> = scaled.iter().map(|&x| x.round() as i64).collect();
        let mut diff: i64 = k.iter().sum::<i64>() - self.resolution as i64;
        while diff != 0 {
            if diff > 0 {
                // Drop a unit where the rounded-up excess is largest.
                let mut best = usize::MAX;
                let mut best_excess = f64::NEG_INFINITY;
                for i in 0..k.len() {
                    if k[i] > 0 {
                        let excess = k[i] as f64 - scaled[i];
                        if excess > best_excess {
                            best_excess = excess;
                            best = i;
                        }
                    }
                }
                k[best] -= 1;
                diff -= 1;
            } else {
                // Add a unit where the rounded-down deficit is largest.
                let mut best = 0;
                let mut best_deficit = f64::NEG_INFINITY;
                for i in 0..k.len() {
                    let deficit = scaled[i] - k[i] as f64;
                    if deficit > best_deficit {
                        best_deficit = deficit;
                        best = i;
                    }
                }
                k[best] += 1;
                diff += 1;
            }
        }
        let coords: Vec<u32> = k.iter().map(|&x| x as u32).collect();
        self.index[&coords]
    }
}

fn lattice_points(slots: usize, remaining: u32, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
    if slots == 1 {
        let mut v = prefix.clone();
        v.push(remaining);
        out.push(v);
        return;
    }
    for take in 0..=remaining {
        prefix.push(take);
        lattice_points(slots - 1, remaining - take, prefix, out);
        prefix.pop();
    }
}

/// One stage of the DP table: best control and cost-to-go per grid point.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageTable {
    pub values: Vec<f64>,
    pub controls: Vec<usize>,
}

/// The solved policy: `stages[0]` is the first decision stage, the last entry
/// the terminal stage.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DpPolicy {
    pub version: u32,
    pub n_states: usize,
    pub resolution: usize,
    pub horizon: usize,
    pub stages: Vec<StageTable>,
}

impl DpPolicy {
    /// Decision for a predicted belief at a given stage; stages beyond the
    /// horizon keep using the first (deepest-lookahead) table, which turns
    /// the finite-horizon solution into a stationary receding-horizon policy.
    pub fn decide(&self, grid: &BeliefGrid, p_pred: &BeliefVector, stage: usize) -> (usize, f64) {
        let table = &self.stages[stage.min(self.stages.len() - 1)];
        let g = grid.nearest(p_pred.vector());
        (table.controls[g], table.values[g])
    }

    pub fn write_json<W: std::io::Write>(&self, mut writer: W) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Parse {
            path: "dp policy".into(),
            message: e.to_string(),
        })?;
        writer.write_all(text.as_bytes())?;
        writer.write_all(b"\n")?;
        Ok(())
    }

    pub fn read_json<R: std::io::Read>(reader: R) -> Result<Self> {
        let policy: DpPolicy = serde_json::from_reader(reader).map_err(|e| Error::Parse {
            path: "dp policy".into(),
            message: e.to_string(),
        })?;
        if policy.version != 1 {
            return Err(Error::Parse {
                path: "dp policy".into(),
                message: format!("unsupported version {}", policy.version),
            });
        }
        Ok(policy)
    }
}

/// The per-state stage-cost vector `h(., p, u)`.
pub fn dp_stage_cost_vector(
    model: &ObservationModel,
    p_pred: &BeliefVector,
    u: usize,
) -> Result<DVector<f64>> {
    let (gain, y_pred) = gain_and_predicted_obs(model, p_pred, u)?;
    let gtg = gain.transpose() * &gain;
    let n = model.n_states();
    let mut h = DVector::zeros(n);
    for i in 0..n {
        let shift = p_pred.vector() + &gain * (model.mean(i, u) - &y_pred);
        h[i] = 1.0 - (&gtg * model.cov(i, u)).trace() - shift.norm_squared();
    }
    Ok(h)
}

/// Expected one-step cost `p^T h(p, u)`.
pub fn stage_cost(model: &ObservationModel, p_pred: &BeliefVector, u: usize) -> Result<f64> {
    Ok(p_pred.vector().dot(&dp_stage_cost_vector(model, p_pred, u)?))
}

fn minimize_over_controls<F: FnMut(usize) -> Result<f64>>(
    alpha: usize,
    mut eval: F,
) -> Result<(f64, usize)> {
    let mut best_value = f64::INFINITY;
    let mut best_u = 0;
    for u in 0..alpha {
        let value = eval(u)?;
        if value < best_value {
            best_value = value;
            best_u = u;
        }
    }
    Ok((best_value, best_u))
}

/// Terminal stage: the bare one-step minimization at every grid point.
pub fn dp_terminal(model: &ObservationModel, grid: &BeliefGrid) -> Result<StageTable> {
    let alpha = model.controls().len();
    let results: Vec<Result<(f64, usize)>> = (0..grid.len())
        .into_par_iter()
        .map(|g| {
            let p = grid.point(g);
            minimize_over_controls(alpha, |u| stage_cost(model, &p, u))
        })
        .collect();
    collect_stage(results)
}

/// One backup: stage cost plus the Monte-Carlo continuation through the exact
/// Bayes belief map, snapped to the grid.
pub fn dp_backup(
    model: &ObservationModel,
    p_mat: &TransitionMatrix,
    grid: &BeliefGrid,
    next_stage: &StageTable,
    mc_samples: usize,
    seed: u64,
    stage_id: usize,
) -> Result<StageTable> {
    let alpha = model.controls().len();
    let results: Vec<Result<(f64, usize)>> = (0..grid.len())
        .into_par_iter()
        .map(|g| {
            let p = grid.point(g);
            minimize_over_controls(alpha, |u| {
                let base = stage_cost(model, &p, u)?;
                let stream = rng::streams::DP_BACKUP
                    + ((stage_id * alpha + u) * grid.len() + g) as u64;
                let mut rng = rng::stream(seed, stream);
                let mut acc = 0.0;
                for _ in 0..mc_samples {
                    let next = propagate_belief_sample(model, p_mat, &p, u, &mut rng)?;
                    acc += next_stage.values[grid.nearest(&next)];
                }
                Ok(base + acc / mc_samples as f64)
            })
        })
        .collect();
    collect_stage(results)
}

fn collect_stage(results: Vec<Result<(f64, usize)>>) -> Result<StageTable> {
    let mut values = Vec::with_capacity(results.len());
    let mut controls = Vec::with_capacity(results.len());
    for r in results {
        let (v, u) = r?;
        values.push(v);
        controls.push(u);
    }
    Ok(StageTable { values, controls })
}

/// Draw `y` from the belief mixture and return the next predicted belief
/// `P r(y, u) p / (1^T r(y, u) p)`, in log space for underflow safety.
fn propagate_belief_sample(
    model: &ObservationModel,
    p_mat: &TransitionMatrix,
    p: &BeliefVector,
    u: usize,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> Result<DVector<f64>> {
    use rand::Rng;
    let n = model.n_states();
    // Component draw: the mixture is exactly the marginal of y given p.
    let r: f64 = rng.random();
    let mut acc = 0.0;
    let mut comp = n - 1;
    for i in 0..n {
        acc += p[i];
        if r < acc {
            comp = i;
            break;
        }
    }
    let y = model.sample_observation(comp, u, rng);

    let mut log_w = vec![f64::NEG_INFINITY; n];
    for i in 0..n {
        if p[i] > 0.0 {
            log_w[i] = p[i].ln() + model.log_pdf(&y, i, u)?;
        }
    }
    let max = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::DegenerateLikelihood);
    }
    let mut posterior = DVector::from_fn(n, |i, _| (log_w[i] - max).exp());
    let sum = posterior.sum();
    posterior /= sum;
    Ok(p_mat.matrix() * posterior)
}

/// Build the full policy: grid, terminal stage, then `horizon - 1` backups.
pub fn dp_solve(
    model: &ObservationModel,
    p_mat: &TransitionMatrix,
    horizon: usize,
    resolution: usize,
    mc_samples: usize,
    seed: u64,
) -> Result<(DpPolicy, BeliefGrid)> {
    assert!(horizon >= 1, "DP horizon must be at least 1");
    let grid = BeliefGrid::new(model.n_states(), resolution);
    let mut stages = vec![dp_terminal(model, &grid)?];
    for stage_id in 1..horizon {
        let next = &stages[0];
        let table = dp_backup(model, p_mat, &grid, next, mc_samples, seed, stage_id)?;
        stages.insert(0, table);
    }
    Ok((
        DpPolicy {
            version: 1,
            n_states: model.n_states(),
            resolution,
            horizon,
            stages,
        },
        grid,
    ))
}
