//! Finite-state Markov chain: state space, column-stochastic transition
//! matrix, belief vectors and ground-truth trajectory simulation.
//!
//! Convention: `P[(j, i)]` is the probability of moving to state `j` given the
//! chain is in state `i`, so prediction is the plain product `P * p`. Inputs
//! that are row-stochastic but not column-stochastic are rejected, never
//! transposed. States are indexed from 0.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::rng;

const STOCHASTIC_TOL: f64 = 1e-9;

/// The state space of the chain: a count plus optional display labels.
#[derive(Debug, Clone)]
pub struct StateSpace {
    n: usize,
    labels: Option<Vec<String>>,
}

impl StateSpace {
    pub fn new(n: usize, labels: Option<Vec<String>>) -> Result<Self> {
        if n < 2 {
            return Err(Error::Validation {
                field: "states.n".into(),
                message: format!("need at least 2 states, got {n}"),
            });
        }
        if let Some(ref l) = labels {
            if l.len() != n {
                return Err(Error::Validation {
                    field: "states.labels".into(),
                    message: format!("expected {n} labels, got {}", l.len()),
                });
            }
        }
        Ok(Self { n, labels })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Display label for a state (falls back to its 1-based index).
    pub fn label(&self, state: usize) -> String {
        match &self.labels {
            Some(l) => l[state].clone(),
            None => format!("{}", state + 1),
        }
    }
}

/// Column-stochastic transition matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    m: DMatrix<f64>,
}

impl TransitionMatrix {
    /// Validates entries and column sums before accepting the matrix.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch {
                expected: m.nrows(),
                got: m.ncols(),
                context: "transition matrix must be square",
            });
        }
        for col in 0..m.ncols() {
            let sum: f64 = m.column(col).sum();
            if (sum - 1.0).abs() > STOCHASTIC_TOL {
                return Err(Error::NonStochastic { column: col, sum });
            }
        }
        for col in 0..m.ncols() {
            for row in 0..m.nrows() {
                let v = m[(row, col)];
                if !(0.0..=1.0 + STOCHASTIC_TOL).contains(&v) {
                    return Err(Error::NegativeEntry {
                        row,
                        column: col,
                        value: v,
                    });
                }
            }
        }
        Ok(Self { m })
    }

    /// Build from row-major data (rows of the matrix as written on paper).
    pub fn from_rows(n: usize, rows: &[Vec<f64>]) -> Result<Self> {
        if rows.len() != n || rows.iter().any(|r| r.len() != n) {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: rows.len(),
                context: "transition matrix rows",
            });
        }
        let m = DMatrix::from_fn(n, n, |r, c| rows[r][c]);
        Self::new(m)
    }

    pub fn n(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    /// Transition distribution out of `state` (a column of P).
    pub fn column(&self, state: usize) -> DVector<f64> {
        self.m.column(state).into_owned()
    }
}

/// Probability vector over the chain states.
///
/// A `BeliefVector` tagged as a distribution sums to 1; raw filter posteriors
/// may transiently carry negative entries and are constructed with
/// [`BeliefVector::raw`].
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefVector {
    v: DVector<f64>,
}

impl BeliefVector {
    /// A validated distribution: entries sum to 1 within 1e-9.
    pub fn distribution(v: DVector<f64>) -> Result<Self> {
        let sum: f64 = v.sum();
        if (sum - 1.0).abs() > STOCHASTIC_TOL {
            return Err(Error::Validation {
                field: "belief".into(),
                message: format!("entries sum to {sum}, expected 1"),
            });
        }
        Ok(Self { v })
    }

    /// An unvalidated vector (raw filter output).
    pub fn raw(v: DVector<f64>) -> Self {
        Self { v }
    }

    pub fn from_slice(p: &[f64]) -> Result<Self> {
        Self::distribution(DVector::from_column_slice(p))
    }

    /// Point mass on `state`.
    pub fn vertex(n: usize, state: usize) -> Self {
        let mut v = DVector::zeros(n);
        v[state] = 1.0;
        Self { v }
    }

    pub fn uniform(n: usize) -> Self {
        Self {
            v: DVector::from_element(n, 1.0 / n as f64),
        }
    }

    pub fn len(&self) -> usize {
        self.v.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v.is_empty()
    }

    pub fn vector(&self) -> &DVector<f64> {
        &self.v
    }

    pub fn sum(&self) -> f64 {
        self.v.sum()
    }

    pub fn is_distribution(&self) -> bool {
        (self.sum() - 1.0).abs() <= STOCHASTIC_TOL && self.v.iter().all(|&x| x >= -STOCHASTIC_TOL)
    }
}

impl std::ops::Index<usize> for BeliefVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.v[i]
    }
}

/// A simulated ground-truth state path together with the seed that produced it.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub states: Vec<usize>,
    pub seed: u64,
}

/// One-step belief prediction `P * p`.
pub fn predict_belief(p_mat: &TransitionMatrix, p: &BeliefVector) -> Result<BeliefVector> {
    if p.len() != p_mat.n() {
        return Err(Error::DimensionMismatch {
            expected: p_mat.n(),
            got: p.len(),
            context: "predict_belief",
        });
    }
    Ok(BeliefVector::raw(p_mat.matrix() * p.vector()))
}

/// Draw an index from a discrete distribution given as a slice.
fn sample_index(weights: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let r: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &w) in weights.iter().enumerate() {
        acc += w;
        if r < acc {
            return i;
        }
    }
    weights.len() - 1
}

/// Simulate `x_0 ~ pi`, `x_{k+1} ~ P(. | x_k)` for `len` transitions.
pub fn sample_trajectory(
    p_mat: &TransitionMatrix,
    pi: &BeliefVector,
    len: usize,
    seed: u64,
) -> Result<Trajectory> {
    if pi.len() != p_mat.n() {
        return Err(Error::DimensionMismatch {
            expected: p_mat.n(),
            got: pi.len(),
            context: "sample_trajectory",
        });
    }
    let mut rng = rng::stream(seed, rng::streams::TRAJECTORY);
    let mut states = Vec::with_capacity(len + 1);
    let mut x = sample_index(pi.vector().as_slice(), &mut rng);
    states.push(x);
    for _ in 0..len {
        let col = p_mat.column(x);
        x = sample_index(col.as_slice(), &mut rng);
        states.push(x);
    }
    Ok(Trajectory { states, seed })
}

/// The 4-state transition matrix used by the bundled scenario.
pub fn paper_transition_matrix() -> TransitionMatrix {
    TransitionMatrix::from_rows(
        4,
        &[
            vec![0.6, 0.2, 0.0, 0.4],
            vec![0.1, 0.4, 0.1, 0.0],
            vec![0.0, 0.1, 0.3, 0.3],
            vec![0.3, 0.3, 0.6, 0.3],
        ],
    )
    .expect("matrix is column-stochastic")
}
