//! Config-driven experiment runner: scenario loading, policy comparison,
//! metrics and CSV emission.

use std::fs;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::filter::PosteriorMode;
use crate::fisher::{build_fisher_table, FisherTable};
use crate::fmt_g9;
use crate::markov::{BeliefVector, StateSpace, TransitionMatrix};
use crate::policies::dp::{dp_solve, BeliefGrid, DpPolicy};
use crate::policies::rollout::{run_policy, EpisodeRecord, Policy};
use crate::sensing::{ControlInput, ControlSet, ObservationModel, SensorSpec};

/// The policies the harness knows how to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyKind {
    Gfis2,
    Dp,
    Random,
    Fixed,
    FullBudget,
}

impl PolicyKind {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "gfis2" => Ok(Self::Gfis2),
            "dp" => Ok(Self::Dp),
            "random" => Ok(Self::Random),
            "fixed" => Ok(Self::Fixed),
            "full-budget" => Ok(Self::FullBudget),
            other => Err(Error::Validation {
                field: "run.policies".into(),
                message: format!(
                    "unknown policy `{other}` (expected gfis2, dp, random, fixed, full-budget)"
                ),
            }),
        }
    }
}

// ---------------------------------------------------------------------------
// Config schema (TOML)
// ---------------------------------------------------------------------------

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    version: u32,
    states: RawStates,
    transition: RawTransition,
    #[serde(default)]
    initial: Option<Vec<f64>>,
    sensors: Vec<RawSensor>,
    controls: RawControls,
    #[serde(default)]
    run: RawRun,
    #[serde(default)]
    dp: RawDp,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawStates {
    n: usize,
    #[serde(default)]
    labels: Option<Vec<String>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTransition {
    rows: Vec<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSensor {
    #[serde(default)]
    name: Option<String>,
    means: Vec<f64>,
    variances: Vec<f64>,
    ar_param: f64,
    noise_var: f64,
    #[serde(default)]
    max_samples: Option<u32>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawControls {
    #[serde(default)]
    budget: Option<u32>,
    #[serde(default)]
    explicit: Option<Vec<Vec<u32>>>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawRun {
    #[serde(default)]
    horizon: Option<usize>,
    #[serde(default)]
    replicates: Option<usize>,
    #[serde(default)]
    seed: Option<u64>,
    #[serde(default)]
    policies: Option<Vec<String>>,
    #[serde(default)]
    posterior_mode: Option<PosteriorMode>,
    #[serde(default)]
    fixed_control: Option<usize>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawDp {
    #[serde(default)]
    resolution: Option<usize>,
    #[serde(default)]
    mc_samples: Option<usize>,
    #[serde(default)]
    horizon: Option<usize>,
}

// ---------------------------------------------------------------------------
// Validated scenario
// ---------------------------------------------------------------------------

/// A fully validated scenario: everything the runner needs.
#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub states: StateSpace,
    pub transition: TransitionMatrix,
    pub initial: BeliefVector,
    pub sensors: Vec<SensorSpec>,
    pub sensor_names: Vec<String>,
    pub budget: u32,
    pub controls: ControlSet,
    pub horizon: usize,
    pub replicates: usize,
    pub seed: u64,
    pub policies: Vec<PolicyKind>,
    pub posterior_mode: PosteriorMode,
    pub fixed_control: usize,
    pub dp_resolution: usize,
    pub dp_mc_samples: usize,
    pub dp_horizon: usize,
}

impl ScenarioConfig {
    pub fn build_model(&self) -> Result<ObservationModel> {
        ObservationModel::assemble(&self.sensors, self.controls.clone(), self.states.len())
    }
}

/// Load and validate a TOML scenario file.
pub fn load_config(path: &Path) -> Result<ScenarioConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let raw: RawConfig = toml::from_str(&text).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    validate(raw)
}

pub fn load_config_str(text: &str) -> Result<ScenarioConfig> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Parse {
        path: "<inline>".into(),
        message: e.to_string(),
    })?;
    validate(raw)
}

fn validate(raw: RawConfig) -> Result<ScenarioConfig> {
    if raw.version != 1 {
        return Err(Error::Validation {
            field: "version".into(),
            message: format!("unsupported config version {}", raw.version),
        });
    }
    let states = StateSpace::new(raw.states.n, raw.states.labels)?;
    let n = states.len();

    let transition =
        TransitionMatrix::from_rows(n, &raw.transition.rows).map_err(|e| match e {
            Error::NonStochastic { column, sum } => Error::Validation {
                field: "transition.rows".into(),
                message: format!(
                    "column {} sums to {sum}; the matrix must be column-stochastic \
                     (entry [j][i] = P(next=j | current=i)); do not supply a \
                     row-stochastic matrix",
                    column + 1
                ),
            },
            Error::NegativeEntry { row, column, value } => Error::Validation {
                field: "transition.rows".into(),
                message: format!("entry ({},{}) = {value} outside [0,1]", row + 1, column + 1),
            },
            other => other,
        })?;

    let initial = match raw.initial {
        Some(pi) => {
            if pi.len() != n {
                return Err(Error::Validation {
                    field: "initial".into(),
                    message: format!("expected {n} entries, got {}", pi.len()),
                });
            }
            BeliefVector::from_slice(&pi).map_err(|_| Error::Validation {
                field: "initial".into(),
                message: "initial distribution must sum to 1".into(),
            })?
        }
        None => BeliefVector::uniform(n),
    };

    let budget = match (&raw.controls.budget, &raw.controls.explicit) {
        (Some(b), _) => *b,
        (None, Some(list)) => list.iter().map(|c| c.iter().sum()).max().unwrap_or(0),
        (None, None) => {
            return Err(Error::Validation {
                field: "controls".into(),
                message: "either `budget` or `explicit` is required".into(),
            })
        }
    };
    if budget == 0 {
        return Err(Error::Validation {
            field: "controls.budget".into(),
            message: "budget must be positive".into(),
        });
    }

    let mut sensors = Vec::with_capacity(raw.sensors.len());
    let mut sensor_names = Vec::with_capacity(raw.sensors.len());
    for (i, s) in raw.sensors.iter().enumerate() {
        let spec = SensorSpec {
            means: s.means.clone(),
            variances: s.variances.clone(),
            ar_param: s.ar_param,
            noise_var: s.noise_var,
            max_samples: s.max_samples.unwrap_or(budget),
        };
        spec.validate(n).map_err(|e| Error::Validation {
            field: format!("sensors[{i}]"),
            message: e.to_string(),
        })?;
        sensors.push(spec);
        sensor_names.push(s.name.clone().unwrap_or_else(|| format!("S{}", i + 1)));
    }
    if sensors.is_empty() {
        return Err(Error::Validation {
            field: "sensors".into(),
            message: "at least one sensor is required".into(),
        });
    }

    let controls = match raw.controls.explicit {
        Some(list) => {
            let mut inputs = Vec::with_capacity(list.len());
            for (i, alloc) in list.into_iter().enumerate() {
                if alloc.len() != sensors.len() {
                    return Err(Error::Validation {
                        field: format!("controls.explicit[{i}]"),
                        message: format!("expected {} entries", sensors.len()),
                    });
                }
                if alloc.iter().sum::<u32>() > budget {
                    return Err(Error::Validation {
                        field: format!("controls.explicit[{i}]"),
                        message: format!("allocation exceeds budget {budget}"),
                    });
                }
                inputs.push(ControlInput::new(alloc).map_err(|_| Error::Validation {
                    field: format!("controls.explicit[{i}]"),
                    message: "all-zero control is not allowed".into(),
                })?);
            }
            ControlSet::new(inputs)?
        }
        None => ControlSet::all_within_budget(sensors.len(), budget)?,
    };

    let policies = match raw.run.policies {
        Some(names) => names
            .iter()
            .map(|s| PolicyKind::parse(s))
            .collect::<Result<Vec<_>>>()?,
        None => vec![PolicyKind::Gfis2, PolicyKind::Dp, PolicyKind::Random],
    };

    let fixed_control = raw.run.fixed_control.unwrap_or(0);
    if fixed_control >= controls.len() {
        return Err(Error::Validation {
            field: "run.fixed_control".into(),
            message: format!("index {fixed_control} out of range ({} controls)", controls.len()),
        });
    }

    Ok(ScenarioConfig {
        states,
        transition,
        initial,
        sensors,
        sensor_names,
        budget,
        controls,
        horizon: raw.run.horizon.unwrap_or(2000),
        replicates: raw.run.replicates.unwrap_or(10),
        seed: raw.run.seed.unwrap_or(0),
        policies,
        posterior_mode: raw.run.posterior_mode.unwrap_or_default(),
        fixed_control,
        dp_resolution: raw.dp.resolution.unwrap_or(10),
        dp_mc_samples: raw.dp.mc_samples.unwrap_or(4096),
        dp_horizon: raw.dp.horizon.unwrap_or(12),
    })
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

/// Aggregated performance of one policy over its episodes.
#[derive(Debug, Clone)]
pub struct MetricsReport {
    pub policy: String,
    pub mse: f64,
    /// Standard error of the per-episode MSE means.
    pub mse_se: f64,
    pub detection_accuracy: f64,
    /// avg_allocation[state][sensor]
    pub avg_allocation: Vec<Vec<f64>>,
    pub wall_time_s: f64,
    /// Raw posteriors can push a step's squared error above the simplex
    /// maximum of 2; flagged when the posterior mode is `raw`.
    pub raw_mode_flag: bool,
}

fn episode_mse(e: &EpisodeRecord) -> f64 {
    let mut acc = 0.0;
    for (k, &x) in e.true_states.iter().enumerate() {
        let p = &e.posteriors[k];
        let mut err = 0.0;
        for i in 0..p.len() {
            let target = if i == x { 1.0 } else { 0.0 };
            err += (target - p[i]).powi(2);
        }
        acc += err;
    }
    acc / e.len() as f64
}

/// Mean squared error of the raw posterior against the indicator vector,
/// averaged over steps and episodes.
pub fn compute_mse(episodes: &[EpisodeRecord]) -> f64 {
    assert!(!episodes.is_empty(), "compute_mse needs at least one episode");
    let total_steps: usize = episodes.iter().map(|e| e.len()).sum();
    episodes
        .iter()
        .map(|e| episode_mse(e) * e.len() as f64)
        .sum::<f64>()
        / total_steps as f64
}

/// Standard error of the mean of per-episode MSEs.
pub fn mse_standard_error(episodes: &[EpisodeRecord]) -> f64 {
    let m = episodes.len();
    if m < 2 {
        return 0.0;
    }
    let per: Vec<f64> = episodes.iter().map(episode_mse).collect();
    let mean = per.iter().sum::<f64>() / m as f64;
    let var = per.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1) as f64;
    (var / m as f64).sqrt()
}

/// Fraction of steps where the declared state equals the true state.
pub fn compute_detection_accuracy(episodes: &[EpisodeRecord]) -> f64 {
    assert!(!episodes.is_empty());
    let mut hits = 0usize;
    let mut total = 0usize;
    for e in episodes {
        for (k, &x) in e.true_states.iter().enumerate() {
            if e.declared[k] == x {
                hits += 1;
            }
            total += 1;
        }
    }
    hits as f64 / total as f64
}

/// Mean samples requested from each sensor, conditioned on the true state.
pub fn compute_avg_allocation(
    episodes: &[EpisodeRecord],
    controls: &ControlSet,
    n_states: usize,
    n_sensors: usize,
) -> Vec<Vec<f64>> {
    let mut sums = vec![vec![0.0; n_sensors]; n_states];
    let mut counts = vec![0usize; n_states];
    for e in episodes {
        for (k, &x) in e.true_states.iter().enumerate() {
            let alloc = &controls.get(e.controls[k]).allocation;
            for (l, &a) in alloc.iter().enumerate() {
                sums[x][l] += a as f64;
            }
            counts[x] += 1;
        }
    }
    for x in 0..n_states {
        if counts[x] > 0 {
            for l in 0..n_sensors {
                sums[x][l] /= counts[x] as f64;
            }
        }
    }
    sums
}

// ---------------------------------------------------------------------------
// Comparison runner
// ---------------------------------------------------------------------------

/// Prebuilt policy artifacts, so tables can be loaded instead of rebuilt.
#[derive(Default)]
pub struct Artifacts {
    pub fisher: Option<FisherTable>,
    pub dp: Option<DpPolicy>,
}

/// Output of [`run_comparison`].
pub struct ComparisonResult {
    pub reports: Vec<MetricsReport>,
    pub episodes: Vec<EpisodeRecord>,
    pub fisher: FisherTable,
    pub dp: Option<DpPolicy>,
}

/// Run every requested policy over matched-seed replicates and aggregate.
pub fn run_comparison(
    config: &ScenarioConfig,
    seed_override: Option<u64>,
    artifacts: Artifacts,
) -> Result<ComparisonResult> {
    let model = config.build_model()?;
    let seed = seed_override.unwrap_or(config.seed);

    let fisher = match artifacts.fisher {
        Some(t) => t,
        None => build_fisher_table(&model)?,
    };
    let needs_dp = config.policies.contains(&PolicyKind::Dp);
    let (dp_policy, grid) = if needs_dp {
        match artifacts.dp {
            Some(p) => {
                let grid = BeliefGrid::new(p.n_states, p.resolution);
                (Some(p), Some(grid))
            }
            None => {
                let (p, g) = dp_solve(
                    &model,
                    &config.transition,
                    config.dp_horizon,
                    config.dp_resolution,
                    config.dp_mc_samples,
                    seed,
                )?;
                (Some(p), Some(g))
            }
        }
    } else {
        (artifacts.dp, None)
    };

    let mut reports = Vec::new();
    let mut all_episodes = Vec::new();
    for kind in &config.policies {
        let policy = match kind {
            PolicyKind::Gfis2 => Policy::Gfis2(&fisher),
            PolicyKind::Dp => Policy::Dp {
                policy: dp_policy.as_ref().expect("dp policy built above"),
                grid: grid.as_ref().expect("grid built with dp policy"),
            },
            PolicyKind::Random => Policy::Random,
            PolicyKind::Fixed => Policy::Fixed(config.fixed_control),
            PolicyKind::FullBudget => Policy::FullBudget,
        };
        let start = Instant::now();
        // A zero horizon still yields a one-step report.
        let steps = config.horizon.max(1);
        let episodes = (0..config.replicates.max(1) as u64)
            .into_par_iter()
            .map(|rep| {
                run_policy(
                    &policy,
                    &model,
                    &config.transition,
                    &config.initial,
                    steps,
                    seed.wrapping_add(rep),
                    config.posterior_mode,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let wall = start.elapsed().as_secs_f64();
        reports.push(MetricsReport {
            policy: policy.name(),
            mse: compute_mse(&episodes),
            mse_se: mse_standard_error(&episodes),
            detection_accuracy: compute_detection_accuracy(&episodes),
            avg_allocation: compute_avg_allocation(
                &episodes,
                config.controls(),
                config.states.len(),
                config.sensors.len(),
            ),
            wall_time_s: wall,
            raw_mode_flag: config.posterior_mode == PosteriorMode::Raw,
        });
        all_episodes.extend(episodes);
    }

    Ok(ComparisonResult {
        reports,
        episodes: all_episodes,
        fisher,
        dp: dp_policy,
    })
}

impl ScenarioConfig {
    pub fn controls(&self) -> &ControlSet {
        &self.controls
    }
}

// ---------------------------------------------------------------------------
// Results emission
// ---------------------------------------------------------------------------

/// Write the four results files into `out_dir`.
pub fn write_results(out_dir: &Path, result: &ComparisonResult) -> Result<()> {
    fs::create_dir_all(out_dir)?;

    // episode.csv
    {
        let mut w = csv::Writer::from_path(out_dir.join("episode.csv")).map_err(io_csv)?;
        let n = result
            .episodes
            .first()
            .map(|e| e.posteriors[0].len())
            .unwrap_or(0);
        let mut header = vec![
            "policy".to_string(),
            "seed".to_string(),
            "step".to_string(),
            "true_state".to_string(),
            "declared_state".to_string(),
            "control_index".to_string(),
        ];
        for i in 0..n {
            header.push(format!("p{}", i + 1));
        }
        w.write_record(&header).map_err(io_csv)?;
        for e in &result.episodes {
            for k in 0..e.len() {
                let mut rec = vec![
                    e.policy.clone(),
                    e.seed.to_string(),
                    k.to_string(),
                    (e.true_states[k] + 1).to_string(),
                    (e.declared[k] + 1).to_string(),
                    (e.controls[k] + 1).to_string(),
                ];
                for i in 0..n {
                    rec.push(fmt_g9(e.posteriors[k][i]));
                }
                w.write_record(&rec).map_err(io_csv)?;
            }
        }
        w.flush()?;
    }

    // metrics.csv
    {
        let mut w = csv::Writer::from_path(out_dir.join("metrics.csv")).map_err(io_csv)?;
        w.write_record(["policy", "mse", "mse_se", "detection_accuracy", "wall_time"])
            .map_err(io_csv)?;
        for r in &result.reports {
            w.write_record([
                r.policy.clone(),
                fmt_g9(r.mse),
                fmt_g9(r.mse_se),
                fmt_g9(r.detection_accuracy),
                fmt_g9(r.wall_time_s),
            ])
            .map_err(io_csv)?;
        }
        w.flush()?;
    }

    // allocation.csv
    {
        let mut w = csv::Writer::from_path(out_dir.join("allocation.csv")).map_err(io_csv)?;
        w.write_record(["policy", "state", "sensor", "mean_samples"])
            .map_err(io_csv)?;
        for r in &result.reports {
            for (x, row) in r.avg_allocation.iter().enumerate() {
                for (l, &v) in row.iter().enumerate() {
                    w.write_record([
                        r.policy.clone(),
                        (x + 1).to_string(),
                        (l + 1).to_string(),
                        fmt_g9(v),
                    ])
                    .map_err(io_csv)?;
                }
            }
        }
        w.flush()?;
    }

    // fisher_table.csv
    {
        let file = fs::File::create(out_dir.join("fisher_table.csv"))?;
        result.fisher.write_csv(file)?;
    }

    Ok(())
}

fn io_csv(e: csv::Error) -> Error {
    Error::Parse {
        path: "results".into(),
        message: e.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::DVector;

    const MINIMAL: &str = r#"
version = 1

[states]
n = 2

[transition]
rows = [[0.9, 0.2], [0.1, 0.8]]

[[sensors]]
means = [0.0, 2.0]
variances = [0.5, 0.5]
ar_param = 0.0
noise_var = 0.1

[controls]
budget = 1
"#;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = load_config_str(MINIMAL).unwrap();
        assert_eq!(cfg.dp_resolution, 10);
        assert_eq!(cfg.dp_mc_samples, 4096);
        assert_eq!(cfg.posterior_mode, PosteriorMode::Project);
        assert_eq!(cfg.horizon, 2000);
        assert_eq!(cfg.replicates, 10);
        assert_eq!(cfg.controls.len(), 1);
        assert!(cfg.initial.is_distribution());
    }

    #[test]
    fn budget_expansion_order() {
        let text = r#"
version = 1
[states]
n = 4
[transition]
rows = [[0.6, 0.2, 0.0, 0.4], [0.1, 0.4, 0.1, 0.0], [0.0, 0.1, 0.3, 0.3], [0.3, 0.3, 0.6, 0.3]]
[[sensors]]
means = [0.0, 1.0, 2.0, 3.0]
variances = [0.5, 0.5, 0.5, 0.5]
ar_param = 0.5
noise_var = 0.1
[[sensors]]
means = [0.0, 2.0, 1.0, 3.0]
variances = [0.5, 0.5, 0.5, 0.5]
ar_param = 0.5
noise_var = 0.1
[[sensors]]
means = [5.0, 5.0, 5.0, 5.0]
variances = [0.2, 0.2, 0.2, 0.2]
ar_param = 0.5
noise_var = 0.1
[controls]
budget = 2
"#;
        let cfg = load_config_str(text).unwrap();
        assert_eq!(cfg.controls.len(), 9);
        let expect: Vec<Vec<u32>> = vec![
            vec![1, 0, 0],
            vec![0, 1, 0],
            vec![0, 0, 1],
            vec![2, 0, 0],
            vec![0, 2, 0],
            vec![0, 0, 2],
            vec![1, 1, 0],
            vec![1, 0, 1],
            vec![0, 1, 1],
        ];
        let got: Vec<Vec<u32>> = cfg.controls.iter().map(|c| c.allocation.clone()).collect();
        assert_eq!(got, expect);
    }

    #[test]
    fn row_stochastic_matrix_names_the_field() {
        let text = r#"
version = 1
[states]
n = 2
[transition]
rows = [[0.9, 0.1], [0.2, 0.8]]
[[sensors]]
means = [0.0, 2.0]
variances = [0.5, 0.5]
ar_param = 0.0
noise_var = 0.1
[controls]
budget = 1
"#;
        let err = load_config_str(text).unwrap_err();
        match err {
            Error::Validation { field, message } => {
                assert_eq!(field, "transition.rows");
                assert!(message.contains("column-stochastic"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn version_is_required() {
        let err = load_config_str("states = {}").unwrap_err();
        assert!(matches!(err, Error::Parse { .. }));
    }

    fn synthetic_episode(
        posteriors: Vec<Vec<f64>>,
        true_states: Vec<usize>,
        declared: Vec<usize>,
        controls: Vec<usize>,
    ) -> EpisodeRecord {
        EpisodeRecord {
            policy: "test".into(),
            seed: 0,
            posteriors: posteriors
                .into_iter()
                .map(|p| DVector::from_column_slice(&p))
                .collect(),
            true_states,
            declared,
            controls,
        }
    }

    #[test]
    fn perfect_posteriors_give_zero_mse() {
        let e = synthetic_episode(
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            vec![0, 1],
            vec![0, 1],
            vec![0, 0],
        );
        assert_eq!(compute_mse(&[e]), 0.0);
    }

    #[test]
    fn uniform_posterior_mse_is_three_quarters() {
        let e = synthetic_episode(
            vec![vec![0.25; 4]; 3],
            vec![0, 2, 3],
            vec![0, 0, 0],
            vec![0, 0, 0],
        );
        assert_abs_diff_eq!(compute_mse(&[e]), 0.75, epsilon = 1e-12);
    }

    #[test]
    fn accuracy_counts_matches() {
        let all = synthetic_episode(
            vec![vec![1.0, 0.0]; 4],
            vec![0, 0, 0, 0],
            vec![0, 0, 0, 0],
            vec![0; 4],
        );
        assert_eq!(compute_detection_accuracy(&[all]), 1.0);
        let half = synthetic_episode(
            vec![vec![1.0, 0.0]; 4],
            vec![0, 1, 0, 1],
            vec![0, 0, 0, 0],
            vec![0; 4],
        );
        assert_eq!(compute_detection_accuracy(&[half]), 0.5);
    }

    #[test]
    fn fixed_allocation_rows_and_budget() {
        let controls = ControlSet::new(vec![
            ControlInput::new(vec![1, 1, 0]).unwrap(),
            ControlInput::new(vec![0, 0, 2]).unwrap(),
        ])
        .unwrap();
        let e = synthetic_episode(
            vec![vec![1.0, 0.0]; 4],
            vec![0, 1, 0, 1],
            vec![0; 4],
            vec![0; 4],
        );
        let alloc = compute_avg_allocation(&[e], &controls, 2, 3);
        for row in &alloc {
            assert_eq!(row, &vec![1.0, 1.0, 0.0]);
            assert!(row.iter().sum::<f64>() <= 2.0);
        }
    }

    #[test]
    fn comparison_on_minimal_scenario() {
        let text = format!(
            "{MINIMAL}\n[run]\nhorizon = 50\nreplicates = 2\npolicies = [\"gfis2\", \"random\"]\n"
        );
        let cfg = load_config_str(&text).unwrap();
        let result = run_comparison(&cfg, Some(4), Artifacts::default()).unwrap();
        assert_eq!(result.reports.len(), 2);
        assert_eq!(result.episodes.len(), 4);
        for r in &result.reports {
            assert!(r.mse >= 0.0 && r.mse <= 2.0);
            assert!((0.0..=1.0).contains(&r.detection_accuracy));
        }
    }

    #[test]
    fn zero_horizon_yields_one_step_report() {
        let text =
            format!("{MINIMAL}\n[run]\nhorizon = 0\nreplicates = 1\npolicies = [\"gfis2\"]\n");
        let cfg = load_config_str(&text).unwrap();
        let result = run_comparison(&cfg, None, Artifacts::default()).unwrap();
        assert_eq!(result.episodes[0].len(), 1);
        assert_eq!(result.reports.len(), 1);
    }

    #[test]
    fn rerun_writes_identical_files() {
        let text = format!(
            "{MINIMAL}\n[run]\nhorizon = 30\nreplicates = 2\npolicies = [\"gfis2\", \"random\"]\n"
        );
        let cfg = load_config_str(&text).unwrap();
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        let ra = run_comparison(&cfg, Some(1), Artifacts::default()).unwrap();
        write_results(dir_a.path(), &ra).unwrap();
        let rb = run_comparison(&cfg, Some(1), Artifacts::default()).unwrap();
        write_results(dir_b.path(), &rb).unwrap();
        for name in ["episode.csv", "allocation.csv", "fisher_table.csv"] {
            let a = fs::read(dir_a.path().join(name)).unwrap();
            let b = fs::read(dir_b.path().join(name)).unwrap();
            assert_eq!(a, b, "{name} differs between reruns");
        }
    }
}
