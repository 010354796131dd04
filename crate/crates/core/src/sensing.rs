//! Controlled multivariate-Gaussian observation model.
//!
//! Each sensor produces AR(1)-correlated samples of a per-state mean level.
//! A control input allocates a number of samples to each sensor; the stacked
//! measurement vector for (state i, control u) is Gaussian with mean `m_i^u`
//! (the per-sensor means replicated over their sample counts) and
//! block-diagonal covariance `Q_i^u` built from per-sensor Toeplitz blocks
//! `sigma^2/(1-phi^2) * T + sigma_z^2 * I`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Jitter added to the diagonal once when a covariance fails to factorize.
pub(crate) const PD_JITTER: f64 = 1e-10;

/// One sensor of the scenario.
#[derive(Debug, Clone)]
pub struct SensorSpec {
    /// Mean signal level per chain state.
    pub means: Vec<f64>,
    /// AR innovation variance per chain state.
    pub variances: Vec<f64>,
    /// AR(1) correlation parameter, |phi| < 1.
    pub ar_param: f64,
    /// Sensing/communication noise variance, strictly positive.
    pub noise_var: f64,
    /// Most samples this sensor can deliver per step.
    pub max_samples: u32,
}

impl SensorSpec {
    pub fn validate(&self, n_states: usize) -> Result<()> {
        if self.ar_param.abs() >= 1.0 {
            return Err(Error::InvalidArParameter(self.ar_param));
        }
        if self.means.len() != n_states || self.variances.len() != n_states {
            return Err(Error::DimensionMismatch {
                expected: n_states,
                got: self.means.len().min(self.variances.len()),
                context: "sensor means/variances must have one entry per state",
            });
        }
        if self.variances.iter().any(|&v| v < 0.0) {
            return Err(Error::Validation {
                field: "sensors.variances".into(),
                message: "AR innovation variances must be nonnegative".into(),
            });
        }
        if self.noise_var <= 0.0 {
            return Err(Error::Validation {
                field: "sensors.noise_var".into(),
                message: "noise variance must be strictly positive".into(),
            });
        }
        Ok(())
    }
}

/// A per-sensor sample allocation `(N_1, ..., N_s)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ControlInput {
    pub allocation: Vec<u32>,
}

impl ControlInput {
    pub fn new(allocation: Vec<u32>) -> Result<Self> {
        if allocation.iter().all(|&a| a == 0) {
            return Err(Error::EmptyControl);
        }
        Ok(Self { allocation })
    }

    /// Observation dimension of this control.
    pub fn dim(&self) -> usize {
        self.allocation.iter().map(|&a| a as usize).sum()
    }

    pub fn total(&self) -> u32 {
        self.allocation.iter().sum()
    }
}

/// The ordered, finite set of available controls.
#[derive(Debug, Clone)]
pub struct ControlSet {
    controls: Vec<ControlInput>,
}

impl ControlSet {
    pub fn new(controls: Vec<ControlInput>) -> Result<Self> {
        if controls.is_empty() {
            return Err(Error::Validation {
                field: "controls".into(),
                message: "control set must be nonempty".into(),
            });
        }
        for (i, c) in controls.iter().enumerate() {
            if controls[..i].contains(c) {
                return Err(Error::Validation {
                    field: "controls".into(),
                    message: format!("duplicate control {:?}", c.allocation),
                });
            }
        }
        Ok(Self { controls })
    }

    /// Every nonzero allocation over `n_sensors` with total at most `budget`,
    /// ordered by total ascending, then largest single allocation first, then
    /// lexicographically descending. For 3 sensors and budget 2 this yields
    /// (1,0,0),(0,1,0),(0,0,1),(2,0,0),(0,2,0),(0,0,2),(1,1,0),(1,0,1),(0,1,1).
    pub fn all_within_budget(n_sensors: usize, budget: u32) -> Result<Self> {
        let mut controls = Vec::new();
        for total in 1..=budget {
            let mut group = Vec::new();
            compositions(n_sensors, total, &mut Vec::new(), &mut group);
            group.sort_by(|a, b| {
                let ma = a.iter().max().copied().unwrap_or(0);
                let mb = b.iter().max().copied().unwrap_or(0);
                mb.cmp(&ma).then_with(|| b.cmp(a))
            });
            controls.extend(group.into_iter().map(|allocation| ControlInput { allocation }));
        }
        Self::new(controls)
    }

    pub fn len(&self) -> usize {
        self.controls.len()
    }

    pub fn is_empty(&self) -> bool {
        self.controls.is_empty()
    }

    pub fn get(&self, index: usize) -> &ControlInput {
        &self.controls[index]
    }

    pub fn iter(&self) -> std::slice::Iter<'_, ControlInput> {
        self.controls.iter()
    }

    pub fn index_of(&self, control: &ControlInput) -> Option<usize> {
        self.controls.iter().position(|c| c == control)
    }
}

fn compositions(slots: usize, remaining: u32, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
    if slots == 1 {
        let mut v = prefix.clone();
        v.push(remaining);
        out.push(v);
        return;
    }
    for take in (0..=remaining).rev() {
        prefix.push(take);
        compositions(slots - 1, remaining - take, prefix, out);
        prefix.pop();
    }
}

/// Toeplitz AR(1) covariance for one sensor in one state:
/// `variance/(1-phi^2) * T + noise_var * I` with `T[i][j] = phi^|i-j|`.
pub fn build_sensor_covariance(
    spec: &SensorSpec,
    state: usize,
    n_samples: usize,
) -> Result<DMatrix<f64>> {
    if spec.ar_param.abs() >= 1.0 {
        return Err(Error::InvalidArParameter(spec.ar_param));
    }
    let scale = spec.variances[state] / (1.0 - spec.ar_param * spec.ar_param);
    let mut q = DMatrix::from_fn(n_samples, n_samples, |r, c| {
        scale * spec.ar_param.powi((r as i32 - c as i32).abs())
    });
    for i in 0..n_samples {
        q[(i, i)] += spec.noise_var;
    }
    Ok(q)
}

/// Cached per-(state, control) Gaussian.
#[derive(Debug, Clone)]
pub(crate) struct GaussianEntry {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub chol: Cholesky<f64, Dyn>,
    /// ln |Q|
    pub log_det: f64,
    /// Q^{-1}
    pub precision: DMatrix<f64>,
}

impl GaussianEntry {
    fn new(mean: DVector<f64>, cov: DMatrix<f64>, state: usize, control: usize) -> Result<Self> {
        let chol = match Cholesky::new(cov.clone()) {
            Some(c) => c,
            None => {
                // One jitter retry for benign rounding, then fail loudly.
                let mut jittered = cov.clone();
                for i in 0..jittered.nrows() {
                    jittered[(i, i)] += PD_JITTER;
                }
                Cholesky::new(jittered).ok_or(Error::CholeskyFailure { state, control })?
            }
        };
        let log_det = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        let precision = chol.inverse();
        Ok(Self {
            mean,
            cov,
            chol,
            log_det,
            precision,
        })
    }
}

/// The full observation model: one Gaussian per (state, control) pair.
#[derive(Debug, Clone)]
pub struct ObservationModel {
    n_states: usize,
    controls: ControlSet,
    /// entries[control][state]
    entries: Vec<Vec<GaussianEntry>>,
}

impl ObservationModel {
    /// Assemble from sensor specs: means stack per-sensor levels in sensor
    /// order, covariances are block-diagonal over sensors; a sensor with a
    /// zero allocation contributes nothing.
    pub fn assemble(specs: &[SensorSpec], controls: ControlSet, n_states: usize) -> Result<Self> {
        if specs.is_empty() {
            return Err(Error::Validation {
                field: "sensors".into(),
                message: "at least one sensor is required".into(),
            });
        }
        for spec in specs {
            spec.validate(n_states)?;
        }
        for c in controls.iter() {
            if c.allocation.len() != specs.len() {
                return Err(Error::DimensionMismatch {
                    expected: specs.len(),
                    got: c.allocation.len(),
                    context: "control allocation length must equal sensor count",
                });
            }
            if c
                .allocation
                .iter()
                .zip(specs)
                .any(|(&a, s)| a > s.max_samples)
            {
                return Err(Error::BudgetExceeded {
                    control: c.allocation.clone(),
                });
            }
            if c.allocation.iter().all(|&a| a == 0) {
                return Err(Error::EmptyControl);
            }
        }

        let mut entries = Vec::with_capacity(controls.len());
        for (u_idx, control) in controls.iter().enumerate() {
            let dim = control.dim();
            let mut per_state = Vec::with_capacity(n_states);
            for state in 0..n_states {
                let mut mean = DVector::zeros(dim);
                let mut cov = DMatrix::zeros(dim, dim);
                let mut offset = 0;
                for (sensor, &count) in specs.iter().zip(&control.allocation) {
                    let count = count as usize;
                    if count == 0 {
                        continue;
                    }
                    let block = build_sensor_covariance(sensor, state, count)?;
                    for i in 0..count {
                        mean[offset + i] = sensor.means[state];
                        for j in 0..count {
                            cov[(offset + i, offset + j)] = block[(i, j)];
                        }
                    }
                    offset += count;
                }
                per_state.push(GaussianEntry::new(mean, cov, state, u_idx)?);
            }
            entries.push(per_state);
        }
        Ok(Self {
            n_states,
            controls,
            entries,
        })
    }

    /// Build directly from explicit means and covariances (one per state for
    /// each control). Used for arbitrary models that do not come from sensor
    /// specs.
    pub fn from_parts(
        controls: ControlSet,
        per_control: Vec<Vec<(DVector<f64>, DMatrix<f64>)>>,
    ) -> Result<Self> {
        if per_control.len() != controls.len() {
            return Err(Error::DimensionMismatch {
                expected: controls.len(),
                got: per_control.len(),
                context: "one entry list per control",
            });
        }
        let n_states = per_control
            .first()
            .map(|v| v.len())
            .ok_or(Error::Validation {
                field: "model".into(),
                message: "empty model".into(),
            })?;
        let mut entries = Vec::with_capacity(per_control.len());
        for (u_idx, states) in per_control.into_iter().enumerate() {
            if states.len() != n_states {
                return Err(Error::DimensionMismatch {
                    expected: n_states,
                    got: states.len(),
                    context: "one Gaussian per state",
                });
            }
            let mut per_state = Vec::with_capacity(n_states);
            for (state, (mean, cov)) in states.into_iter().enumerate() {
                per_state.push(GaussianEntry::new(mean, cov, state, u_idx)?);
            }
            entries.push(per_state);
        }
        Ok(Self {
            n_states,
            controls,
            entries,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn controls(&self) -> &ControlSet {
        &self.controls
    }

    /// Observation dimension under control index `u`.
    pub fn dim(&self, u: usize) -> usize {
        self.entries[u][0].mean.len()
    }

    pub fn mean(&self, state: usize, u: usize) -> &DVector<f64> {
        &self.entries[u][state].mean
    }

    pub fn cov(&self, state: usize, u: usize) -> &DMatrix<f64> {
        &self.entries[u][state].cov
    }

    /// ln |Q_i^u|
    pub fn log_det(&self, state: usize, u: usize) -> f64 {
        self.entries[u][state].log_det
    }

    /// Q_i^{u,-1}
    pub fn precision(&self, state: usize, u: usize) -> &DMatrix<f64> {
        &self.entries[u][state].precision
    }

    /// Stacked mean matrix `M(u) = [m_1^u, ..., m_n^u]` (d(u) x n).
    pub fn mean_matrix(&self, u: usize) -> DMatrix<f64> {
        let d = self.dim(u);
        DMatrix::from_fn(d, self.n_states, |r, c| self.entries[u][c].mean[r])
    }

    /// Draw `y ~ N(m_i^u, Q_i^u)` via the cached Cholesky factor.
    pub fn sample_observation(&self, state: usize, u: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
        let e = &self.entries[u][state];
        let z = DVector::from_fn(e.mean.len(), |_, _| rng.sample(StandardNormal));
        &e.mean + e.chol.l() * z
    }

    /// Gaussian log density of `y` under (state, control).
    pub fn log_pdf(&self, y: &DVector<f64>, state: usize, u: usize) -> Result<f64> {
        let e = &self.entries[u][state];
        if y.len() != e.mean.len() {
            return Err(Error::DimensionMismatch {
                expected: e.mean.len(),
                got: y.len(),
                context: "log_pdf observation dimension",
            });
        }
        let d = y.len() as f64;
        let diff = y - &e.mean;
        let solved = e.chol.solve(&diff);
        let quad = diff.dot(&solved);
        Ok(-0.5 * d * (2.0 * std::f64::consts::PI).ln() - 0.5 * e.log_det - 0.5 * quad)
    }
}
