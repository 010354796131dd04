//! Kalman-like belief filter for the chain state.
//!
//! One step: predict `p_pred = P p_prev`, form the prediction-error covariance
//! `diag(p_pred) - p_pred p_pred^T`, the predicted observation `M(u) p_pred`,
//! the gain `G = Sigma M^T (M Sigma M^T + Qmix)^{-1}` with `Qmix` the
//! belief-weighted mixture of observation covariances, and the linear
//! innovation update. The raw posterior always sums to 1 but may carry small
//! negative entries; callers choose how to repair it (see [`PosteriorMode`]).

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::markov::{BeliefVector, TransitionMatrix};
use crate::sensing::{ObservationModel, PD_JITTER};

/// How the raw posterior is repaired before it feeds the next prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PosteriorMode {
    /// Keep the raw linear update.
    Raw,
    /// Clamp negatives to zero and renormalize.
    Renormalize,
    /// Euclidean projection onto the simplex.
    #[default]
    Project,
}

/// Everything one filter step produces.
#[derive(Debug, Clone)]
pub struct FilterState {
    pub predicted: BeliefVector,
    /// Raw linear-update posterior (sums to 1, may dip below 0).
    pub posterior: BeliefVector,
    /// n x d(u) gain matrix.
    pub gain: DMatrix<f64>,
    pub predicted_obs: DVector<f64>,
    pub pred_cov: DMatrix<f64>,
}

/// Covariance of an indicator vector with distribution `p`:
/// `diag(p) - p p^T`. Rows and columns sum to zero.
pub fn conditional_covariance(p: &BeliefVector) -> DMatrix<f64> {
    let v = p.vector();
    let mut cov = -(v * v.transpose());
    for i in 0..v.len() {
        cov[(i, i)] += v[i];
    }
    cov
}

/// Belief-weighted mixture `sum_i p_i Q_i^u`, checked positive definite.
pub fn mixture_covariance(
    model: &ObservationModel,
    p_pred: &BeliefVector,
    u: usize,
) -> Result<DMatrix<f64>> {
    let q = mixture_sum(model, p_pred, u)?;
    if Cholesky::new(q.clone()).is_none() {
        return Err(Error::NonPdMixture);
    }
    Ok(q)
}

fn mixture_sum(model: &ObservationModel, p: &BeliefVector, u: usize) -> Result<DMatrix<f64>> {
    if p.len() != model.n_states() {
        return Err(Error::DimensionMismatch {
            expected: model.n_states(),
            got: p.len(),
            context: "mixture weights",
        });
    }
    let d = model.dim(u);
    let mut q = DMatrix::zeros(d, d);
    for i in 0..model.n_states() {
        q += model.cov(i, u) * p[i];
    }
    Ok(q)
}

/// Gain and predicted observation for a given predicted belief.
///
/// Shared by the filter step and the DP stage cost. The innovation solve uses
/// a Cholesky factorization with one jitter retry, never an explicit inverse.
pub fn gain_and_predicted_obs(
    model: &ObservationModel,
    p_pred: &BeliefVector,
    u: usize,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let sigma = conditional_covariance(p_pred);
    let m = model.mean_matrix(u);
    let y_pred = &m * p_pred.vector();
    let m_sigma = &m * &sigma; // d x n
    let mut s = &m_sigma * m.transpose() + mixture_sum(model, p_pred, u)?;
    let chol = match Cholesky::new(s.clone()) {
        Some(c) => c,
        None => {
            for i in 0..s.nrows() {
                s[(i, i)] += PD_JITTER;
            }
            Cholesky::new(s).ok_or(Error::SingularInnovation)?
        }
    };
    // G = Sigma M^T S^{-1} = (S^{-1} (M Sigma))^T since Sigma and S are symmetric.
    let gain = chol.solve(&m_sigma).transpose();
    Ok((gain, y_pred))
}

/// One predict+update step of the Theorem-style recursion.
pub fn filter_step(
    model: &ObservationModel,
    p_mat: &TransitionMatrix,
    p_prev: &BeliefVector,
    y: &DVector<f64>,
    u: usize,
) -> Result<FilterState> {
    if y.len() != model.dim(u) {
        return Err(Error::DimensionMismatch {
            expected: model.dim(u),
            got: y.len(),
            context: "filter_step observation",
        });
    }
    let predicted = crate::markov::predict_belief(p_mat, p_prev)?;
    update_step(model, &predicted, y, u)
}

/// The update half: takes an already-predicted belief.
pub fn update_step(
    model: &ObservationModel,
    predicted: &BeliefVector,
    y: &DVector<f64>,
    u: usize,
) -> Result<FilterState> {
    let pred_cov = conditional_covariance(predicted);
    let (gain, predicted_obs) = gain_and_predicted_obs(model, predicted, u)?;
    let innovation = y - &predicted_obs;
    let posterior = BeliefVector::raw(predicted.vector() + &gain * innovation);
    Ok(FilterState {
        predicted: predicted.clone(),
        posterior,
        gain,
        predicted_obs,
        pred_cov,
    })
}

/// Euclidean projection onto the probability simplex (sort-based).
pub fn project_to_simplex(v: &DVector<f64>) -> BeliefVector {
    let n = v.len();
    let mut sorted: Vec<f64> = v.iter().copied().collect();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (j, &uj) in sorted.iter().enumerate() {
        cumsum += uj;
        let candidate = (cumsum - 1.0) / (j + 1) as f64;
        if uj - candidate > 0.0 {
            theta = candidate;
        }
    }
    BeliefVector::raw(DVector::from_fn(n, |i, _| (v[i] - theta).max(0.0)))
}

/// Repair a raw posterior according to the configured mode.
pub fn apply_posterior_mode(p: &BeliefVector, mode: PosteriorMode) -> BeliefVector {
    match mode {
        PosteriorMode::Raw => p.clone(),
        PosteriorMode::Renormalize => {
            let clamped = DVector::from_fn(p.len(), |i, _| p[i].max(0.0));
            let sum = clamped.sum();
            if sum <= 0.0 {
                BeliefVector::uniform(p.len())
            } else {
                BeliefVector::raw(clamped / sum)
            }
        }
        PosteriorMode::Project => project_to_simplex(p.vector()),
    }
}

/// Argmax state, ties broken toward the lowest index.
pub fn declare_state(p: &BeliefVector) -> usize {
    let mut best = 0;
    for i in 1..p.len() {
        if p[i] > p[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::markov::paper_transition_matrix;
    use crate::rng;
    use crate::sensing::{ControlInput, ControlSet};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_chacha::ChaCha8Rng;

    /// Arbitrary PD-covariance model with `n` states and dimension `d` for a
    /// single control.
    fn random_model(n: usize, d: usize, rng: &mut ChaCha8Rng) -> ObservationModel {
        let controls = ControlSet::new(vec![ControlInput::new(vec![d as u32]).unwrap()]).unwrap();
        let states = (0..n)
            .map(|_| {
                let b = DMatrix::from_fn(d, d, |_, _| rng.random::<f64>() - 0.5);
                let q = &b * b.transpose() + DMatrix::identity(d, d) * 0.3;
                let m = DVector::from_fn(d, |_, _| 4.0 * rng.random::<f64>() - 2.0);
                (m, q)
            })
            .collect();
        ObservationModel::from_parts(controls, vec![states]).unwrap()
    }

    fn random_belief(n: usize, rng: &mut ChaCha8Rng) -> BeliefVector {
        let raw: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 1e-3).collect();
        let sum: f64 = raw.iter().sum();
        BeliefVector::from_slice(&raw.iter().map(|x| x / sum).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn conditional_covariance_vertex_is_zero() {
        let cov = conditional_covariance(&BeliefVector::vertex(3, 1));
        assert!(cov.iter().all(|&x| x.abs() < 1e-15));
    }

    #[test]
    fn conditional_covariance_two_state() {
        let cov = conditional_covariance(&BeliefVector::from_slice(&[0.5, 0.5]).unwrap());
        assert_abs_diff_eq!(cov[(0, 0)], 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(cov[(0, 1)], -0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(cov[(1, 0)], -0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(cov[(1, 1)], 0.25, epsilon = 1e-15);
    }

    #[test]
    fn conditional_covariance_matches_indicator_monte_carlo() {
        let p = BeliefVector::from_slice(&[0.6, 0.1, 0.0, 0.3]).unwrap();
        let expect = conditional_covariance(&p);
        let n_draws = 1_000_000;
        let mut rng = rng::stream(2, 0);
        let mut outer = DMatrix::zeros(4, 4);
        let mut sum = DVector::zeros(4);
        for _ in 0..n_draws {
            let r: f64 = rng.random();
            let mut acc = 0.0;
            let mut idx = 3;
            for i in 0..4 {
                acc += p[i];
                if r < acc {
                    idx = i;
                    break;
                }
            }
            let e = DVector::from_fn(4, |i, _| if i == idx { 1.0 } else { 0.0 });
            sum += &e;
            outer += &e * e.transpose();
        }
        let mean = sum / n_draws as f64;
        let emp = outer / n_draws as f64 - &mean * mean.transpose();
        for i in 0..4 {
            for j in 0..4 {
                // Bernoulli-product variance bounds the entry's SE by 0.5/sqrt(N).
                let se = 0.5 / (n_draws as f64).sqrt();
                assert!(
                    (emp[(i, j)] - expect[(i, j)]).abs() <= 3.0 * se,
                    "entry ({i},{j})"
                );
            }
        }
    }

    #[test]
    fn conditional_covariance_row_sums_vanish() {
        let mut rng = rng::stream(4, 0);
        for _ in 0..50 {
            let p = random_belief(5, &mut rng);
            let cov = conditional_covariance(&p);
            for i in 0..5 {
                assert!(cov.row(i).sum().abs() < 1e-12);
            }
        }
    }

    #[test]
    fn mixture_vertex_weight_returns_that_covariance() {
        let mut rng = rng::stream(6, 0);
        let model = random_model(3, 2, &mut rng);
        let q = mixture_covariance(&model, &BeliefVector::vertex(3, 1), 0).unwrap();
        assert_eq!(&q, model.cov(1, 0));
    }

    #[test]
    fn mixture_scalar_blend() {
        let controls = ControlSet::new(vec![ControlInput::new(vec![2]).unwrap()]).unwrap();
        let model = ObservationModel::from_parts(
            controls,
            vec![vec![
                (DVector::zeros(2), DMatrix::identity(2, 2)),
                (DVector::zeros(2), DMatrix::identity(2, 2) * 3.0),
            ]],
        )
        .unwrap();
        let q = mixture_covariance(&model, &BeliefVector::from_slice(&[0.5, 0.5]).unwrap(), 0)
            .unwrap();
        assert_abs_diff_eq!(q[(0, 0)], 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(q[(1, 1)], 2.0, epsilon = 1e-15);
    }

    #[test]
    fn mixture_uniform_weights_average_covariances() {
        let mut rng = rng::stream(7, 0);
        let model = random_model(4, 3, &mut rng);
        let q = mixture_covariance(&model, &BeliefVector::uniform(4), 0).unwrap();
        let mut avg = DMatrix::zeros(3, 3);
        for i in 0..4 {
            avg += model.cov(i, 0);
        }
        avg /= 4.0;
        assert!((q - avg).iter().all(|&x| x.abs() < 1e-12));
    }

    #[test]
    fn vertex_prediction_kills_gain() {
        let mut rng = rng::stream(8, 0);
        let model = random_model(3, 2, &mut rng);
        let identity = TransitionMatrix::new(DMatrix::identity(3, 3)).unwrap();
        let y = DVector::from_column_slice(&[10.0, -10.0]);
        let st = filter_step(&model, &identity, &BeliefVector::vertex(3, 2), &y, 0).unwrap();
        assert!(st.gain.iter().all(|&g| g.abs() <= 1e-12));
        for i in 0..3 {
            assert_abs_diff_eq!(
                st.posterior[i],
                if i == 2 { 1.0 } else { 0.0 },
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn posterior_sum_preserved_over_random_models() {
        let p_mat = paper_transition_matrix();
        let mut rng = rng::stream(9, 0);
        for _ in 0..1000 {
            let model = random_model(4, 2, &mut rng);
            let p = random_belief(4, &mut rng);
            let y = model.sample_observation(rng.random_range(0..4), 0, &mut rng);
            let st = filter_step(&model, &p_mat, &p, &y, 0).unwrap();
            assert!((st.posterior.sum() - 1.0).abs() <= 1e-10);
        }
    }

    #[test]
    fn two_state_sign_check() {
        // Means -1 / +1 with shared variance: observing y=+1 from a 50/50
        // prior must tilt the posterior toward state 2.
        let controls = ControlSet::new(vec![ControlInput::new(vec![1]).unwrap()]).unwrap();
        for sigma2 in [0.25, 1.0, 4.0] {
            let model = ObservationModel::from_parts(
                controls.clone(),
                vec![vec![
                    (
                        DVector::from_element(1, -1.0),
                        DMatrix::from_element(1, 1, sigma2),
                    ),
                    (
                        DVector::from_element(1, 1.0),
                        DMatrix::from_element(1, 1, sigma2),
                    ),
                ]],
            )
            .unwrap();
            let predicted = BeliefVector::from_slice(&[0.5, 0.5]).unwrap();
            let st = update_step(&model, &predicted, &DVector::from_element(1, 1.0), 0).unwrap();
            assert!(
                st.posterior[1] > 0.5,
                "sigma2={sigma2}, posterior {:?}",
                st.posterior
            );
        }
    }

    #[test]
    fn filter_is_deterministic() {
        let mut rng = rng::stream(10, 0);
        let model = random_model(4, 2, &mut rng);
        let p_mat = paper_transition_matrix();
        let p = random_belief(4, &mut rng);
        let y = DVector::from_column_slice(&[0.3, -0.2]);
        let a = filter_step(&model, &p_mat, &p, &y, 0).unwrap();
        let b = filter_step(&model, &p_mat, &p, &y, 0).unwrap();
        assert_eq!(a.posterior.vector(), b.posterior.vector());
        assert_eq!(a.gain, b.gain);
    }

    #[test]
    fn pred_cov_is_psd() {
        let mut rng = rng::stream(12, 0);
        for _ in 0..200 {
            let p = random_belief(4, &mut rng);
            let cov = conditional_covariance(&p);
            let eig = cov.symmetric_eigenvalues();
            assert!(eig.iter().all(|&l| l >= -1e-12));
        }
    }

    #[test]
    fn projection_examples() {
        let p = project_to_simplex(&DVector::from_column_slice(&[0.7, 0.3]));
        assert_abs_diff_eq!(p[0], 0.7, epsilon = 1e-12);
        assert_abs_diff_eq!(p[1], 0.3, epsilon = 1e-12);
        let p = project_to_simplex(&DVector::from_column_slice(&[1.2, -0.2]));
        assert_abs_diff_eq!(p[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p[1], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn projection_matches_grid_search_oracle() {
        // Brute-force: minimize the distance over the simplex lattice at
        // resolution 1e-3 (n=2) / 2e-3 (n=3).
        let mut rng = rng::stream(14, 0);
        for _ in 0..10 {
            let v = DVector::from_fn(2, |_, _| 4.0 * rng.random::<f64>() - 2.0);
            let p = project_to_simplex(&v);
            let steps = 1000;
            let mut best = f64::INFINITY;
            for k in 0..=steps {
                let a = k as f64 / steps as f64;
                let cand = DVector::from_column_slice(&[a, 1.0 - a]);
                best = best.min((&cand - &v).norm_squared());
            }
            let got = (p.vector() - &v).norm_squared();
            assert!(got <= best + 1e-5, "got {got} best {best}");
        }
        for _ in 0..3 {
            let v = DVector::from_fn(3, |_, _| 3.0 * rng.random::<f64>() - 1.5);
            let p = project_to_simplex(&v);
            let steps = 500;
            let mut best = f64::INFINITY;
            for i in 0..=steps {
                for j in 0..=(steps - i) {
                    let a = i as f64 / steps as f64;
                    let b = j as f64 / steps as f64;
                    let cand = DVector::from_column_slice(&[a, b, 1.0 - a - b]);
                    best = best.min((&cand - &v).norm_squared());
                }
            }
            let got = (p.vector() - &v).norm_squared();
            assert!(got <= best + 1e-4, "got {got} best {best}");
        }
    }

    proptest! {
        #[test]
        fn projection_is_idempotent_and_on_simplex(raw in proptest::collection::vec(-3.0f64..3.0, 2..6)) {
            let v = DVector::from_column_slice(&raw);
            let p = project_to_simplex(&v);
            prop_assert!((p.sum() - 1.0).abs() < 1e-9);
            prop_assert!(p.vector().iter().all(|&x| x >= 0.0));
            let again = project_to_simplex(p.vector());
            prop_assert!((again.vector() - p.vector()).norm() < 1e-9);
        }

        #[test]
        fn projection_is_nonexpansive(
            a in proptest::collection::vec(-3.0f64..3.0, 4),
            b in proptest::collection::vec(-3.0f64..3.0, 4),
        ) {
            let va = DVector::from_column_slice(&a);
            let vb = DVector::from_column_slice(&b);
            let pa = project_to_simplex(&va);
            let pb = project_to_simplex(&vb);
            prop_assert!((pa.vector() - pb.vector()).norm() <= (va - vb).norm() + 1e-12);
        }
    }

    #[test]
    fn declare_state_examples() {
        assert_eq!(
            declare_state(&BeliefVector::from_slice(&[0.1, 0.7, 0.2]).unwrap()),
            1
        );
        assert_eq!(
            declare_state(&BeliefVector::from_slice(&[0.5, 0.5]).unwrap()),
            0
        );
        assert_eq!(
            declare_state(&BeliefVector::from_slice(&[0.6, 0.1, 0.0, 0.3]).unwrap()),
            0
        );
    }

    #[test]
    fn posterior_modes() {
        let raw = BeliefVector::raw(DVector::from_column_slice(&[1.1, -0.1, 0.0]));
        assert_eq!(apply_posterior_mode(&raw, PosteriorMode::Raw).vector(), raw.vector());
        let renorm = apply_posterior_mode(&raw, PosteriorMode::Renormalize);
        assert_abs_diff_eq!(renorm.sum(), 1.0, epsilon = 1e-12);
        assert!(renorm.vector().iter().all(|&x| x >= 0.0));
        let proj = apply_posterior_mode(&raw, PosteriorMode::Project);
        assert!(proj.is_distribution());
    }
}
