//! Generalized Fisher information for the discrete chain state.
//!
//! The score is the finite-difference log-likelihood ratio
//! `S(x, x+h, u) = (1/h) ln f(y | x+h, u) / f(y | x, u)` over integer test
//! points `h` with `x + h` a legal state. For the Gaussian model the log
//! ratio is the quadratic form `L0 - (y^T A y - 2 y^T b + c) / 2` with
//! `A = Q_{x+h}^{-1} - Q_x^{-1}`, `b = Q_{x+h}^{-1} m_{x+h} - Q_x^{-1} m_x`,
//! `c = m_{x+h}^T Q_{x+h}^{-1} m_{x+h} - m_x^T Q_x^{-1} m_x` and
//! `L0 = ln sqrt(|Q_x| / |Q_{x+h}|)`.
//!
//! The information measure is the variance of the score under
//! `y ~ N(m_x, Q_x)`, which has the closed form
//!
//! ```text
//! I(x, x+h, u) = (1/h^2) [ tr((A Q_x)^2) / 2 + (b - A m_x)^T Q_x (b - A m_x) ]
//! ```
//!
//! (write the score as a quadratic in `e = y - m_x`; the linear part has
//! coefficient `b - A m_x` and the quadratic part contributes the trace
//! term). Both summands are nonnegative, and the whole expression equals the
//! Monte-Carlo variance of the score; the test suite checks this identity on
//! random models.

use nalgebra::{DMatrix, DVector};
use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::sensing::ObservationModel;

/// Quadratic-form decomposition of the log-likelihood ratio for `(x, x+h)`.
#[derive(Debug, Clone)]
pub struct ScoreTerms {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub c: f64,
    /// `ln sqrt(|Q_x| / |Q_{x+h}|)`
    pub log_det_ratio: f64,
}

/// Valid test points for one state: every nonzero integer offset that lands
/// inside the state space.
pub fn enumerate_test_points(n: usize, x: usize) -> Vec<i64> {
    let x = x as i64;
    (-x..=(n as i64 - 1 - x)).filter(|&h| h != 0).collect()
}

fn check_test_point(n: usize, x: usize, h: i64) -> Result<usize> {
    let target = x as i64 + h;
    if h == 0 || target < 0 || target >= n as i64 {
        return Err(Error::InvalidTestPoint { state: x, h, n });
    }
    Ok(target as usize)
}

/// The (A, b, c) terms of the score's quadratic form.
pub fn score_terms(model: &ObservationModel, x: usize, h: i64, u: usize) -> Result<ScoreTerms> {
    let xh = check_test_point(model.n_states(), x, h)?;
    let prec_x = model.precision(x, u);
    let prec_xh = model.precision(xh, u);
    let m_x = model.mean(x, u);
    let m_xh = model.mean(xh, u);
    let a = prec_xh - prec_x;
    let b = prec_xh * m_xh - prec_x * m_x;
    let c = (m_xh.transpose() * prec_xh * m_xh)[(0, 0)] - (m_x.transpose() * prec_x * m_x)[(0, 0)];
    let log_det_ratio = 0.5 * (model.log_det(x, u) - model.log_det(xh, u));
    Ok(ScoreTerms {
        a,
        b,
        c,
        log_det_ratio,
    })
}

/// Score of one observation: `(1/h)` times the log-likelihood ratio.
pub fn generalized_score(
    model: &ObservationModel,
    y: &DVector<f64>,
    x: usize,
    h: i64,
    u: usize,
) -> Result<f64> {
    let t = score_terms(model, x, h, u)?;
    if y.len() != model.dim(u) {
        return Err(Error::DimensionMismatch {
            expected: model.dim(u),
            got: y.len(),
            context: "generalized_score observation",
        });
    }
    let quad = (y.transpose() * &t.a * y)[(0, 0)] - 2.0 * y.dot(&t.b) + t.c;
    Ok((t.log_det_ratio - 0.5 * quad) / h as f64)
}

/// Expected score under `y ~ N(m_x, Q_x)`; equals `-KL(f_x || f_{x+h}) / h`.
pub fn expected_score(model: &ObservationModel, x: usize, h: i64, u: usize) -> Result<f64> {
    let t = score_terms(model, x, h, u)?;
    let m_x = model.mean(x, u);
    let q_x = model.cov(x, u);
    let mu = t.log_det_ratio - 0.5 * (&t.a * q_x).trace()
        - 0.5 * (m_x.transpose() * &t.a * m_x)[(0, 0)]
        + m_x.dot(&t.b)
        - 0.5 * t.c;
    Ok(mu / h as f64)
}

/// Generalized Fisher information: the variance of the score under
/// `y ~ N(m_x, Q_x)`, in closed form. Always nonnegative; tiny negative
/// rounding is clamped to zero.
pub fn generalized_fisher_info(
    model: &ObservationModel,
    x: usize,
    h: i64,
    u: usize,
) -> Result<f64> {
    let t = score_terms(model, x, h, u)?;
    let q_x = model.cov(x, u);
    let m_x = model.mean(x, u);
    let aq = &t.a * q_x;
    let trace_term = 0.5 * (&aq * &aq).trace();
    let lin = &t.b - &t.a * m_x;
    let linear_term = (lin.transpose() * q_x * &lin)[(0, 0)];
    let info = (trace_term + linear_term) / (h * h) as f64;
    Ok(info.max(0.0))
}

/// Uncentered second moment of the score (diagnostic; the information measure
/// itself is the centered variance because the generalized score's mean is
/// not zero).
pub fn score_second_moment(model: &ObservationModel, x: usize, h: i64, u: usize) -> Result<f64> {
    let var = generalized_fisher_info(model, x, h, u)?;
    let mean = expected_score(model, x, h, u)?;
    Ok(var + mean * mean)
}

/// Best information over all valid test points for `(x, u)`.
///
/// Ties break toward the smallest `|h|`, then the smallest `h`.
pub fn phi(model: &ObservationModel, x: usize, u: usize) -> Result<(f64, i64)> {
    let mut points = enumerate_test_points(model.n_states(), x);
    points.sort_by_key(|&h| (h.abs(), h));
    let mut best_value = f64::NEG_INFINITY;
    let mut best_h = points[0];
    for h in points {
        let value = generalized_fisher_info(model, x, h, u)?;
        if value > best_value {
            best_value = value;
            best_h = h;
        }
    }
    Ok((best_value, best_h))
}

/// Precomputed `phi(x, u)` lookup table with the argmax control per state.
#[derive(Debug, Clone, PartialEq)]
pub struct FisherTable {
    /// phi[state][control]
    pub phi: Vec<Vec<f64>>,
    /// best_h[state][control]
    pub best_h: Vec<Vec<i64>>,
    /// Argmax control per state, lowest index on ties.
    pub best_control: Vec<usize>,
    /// Number of phi evaluations performed during the build.
    pub evaluations: usize,
}

/// Fill the lookup table with one phi evaluation per (state, control) pair.
pub fn build_fisher_table(model: &ObservationModel) -> Result<FisherTable> {
    let n = model.n_states();
    let alpha = model.controls().len();
    let mut table = FisherTable {
        phi: vec![vec![0.0; alpha]; n],
        best_h: vec![vec![0; alpha]; n],
        best_control: vec![0; n],
        evaluations: 0,
    };
    for x in 0..n {
        for u in 0..alpha {
            let (value, h) = phi(model, x, u)?;
            table.phi[x][u] = value;
            table.best_h[x][u] = h;
            table.evaluations += 1;
        }
        let row = &table.phi[x];
        let mut best = 0;
        for u in 1..alpha {
            if row[u] > row[best] {
                best = u;
            }
        }
        table.best_control[x] = best;
    }
    Ok(table)
}

impl FisherTable {
    pub fn n_states(&self) -> usize {
        self.phi.len()
    }

    pub fn n_controls(&self) -> usize {
        self.phi.first().map(|r| r.len()).unwrap_or(0)
    }

    /// CSV rows `state,control,phi,best_h` with 1-based indices and floats at
    /// nine significant digits.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["state", "control", "phi", "best_h"])
            .map_err(csv_err)?;
        for (x, row) in self.phi.iter().enumerate() {
            for (u, &value) in row.iter().enumerate() {
                w.write_record([
                    (x + 1).to_string(),
                    (u + 1).to_string(),
                    crate::fmt_g9(value),
                    self.best_h[x][u].to_string(),
                ])
                .map_err(csv_err)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let mut cells: Vec<(usize, usize, f64, i64)> = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(csv_err)?;
            let parse = |i: usize| -> Result<&str> {
                rec.get(i).ok_or_else(|| Error::Parse {
                    path: "fisher table".into(),
                    message: "missing column".into(),
                })
            };
            let x: usize = parse(0)?.parse().map_err(parse_err)?;
            let u: usize = parse(1)?.parse().map_err(parse_err)?;
            let value: f64 = parse(2)?.parse().map_err(parse_err)?;
            let h: i64 = parse(3)?.parse().map_err(parse_err)?;
            cells.push((x - 1, u - 1, value, h));
        }
        let n = cells.iter().map(|c| c.0 + 1).max().unwrap_or(0);
        let alpha = cells.iter().map(|c| c.1 + 1).max().unwrap_or(0);
        if n == 0 || alpha == 0 {
            return Err(Error::Parse {
                path: "fisher table".into(),
                message: "empty table".into(),
            });
        }
        let mut table = FisherTable {
            phi: vec![vec![0.0; alpha]; n],
            best_h: vec![vec![0; alpha]; n],
            best_control: vec![0; n],
            evaluations: 0,
        };
        for (x, u, value, h) in cells {
            table.phi[x][u] = value;
            table.best_h[x][u] = h;
        }
        for x in 0..n {
            let row = &table.phi[x];
            let mut best = 0;
            for u in 1..alpha {
                if row[u] > row[best] {
                    best = u;
                }
            }
            table.best_control[x] = best;
        }
        Ok(table)
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Parse {
        path: "fisher table".into(),
        message: e.to_string(),
    }
}

fn parse_err<E: std::fmt::Display>(e: E) -> Error {
    Error::Parse {
        path: "fisher table".into(),
        message: e.to_string(),
    }
}
