//! Closed-form consensus and convergence-rate bounds for the continuous-time
//! delayed dynamics, plus the Lyapunov functional used in the rate.
//!
//! Integrals are evaluated with the composite trapezoid rule, so any check
//! built on them needs an explicit slack.

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dg::StepsizeSchedule;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BoundError {
    #[error("sigma2 = {0} is outside (0, 1)")]
    SigmaOutOfRange(f64),
    #[error("gamma = {gamma} is not below 1")]
    NotContractive { gamma: f64 },
    #[error("beta = {beta} outside the admissible interval (0, {upper})")]
    BetaOutOfRange { beta: f64, upper: f64 },
    #[error("outside the bound's domain: {0}")]
    DomainError(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// Open interval `(lower, upper)`; `upper` is infinite without delay.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OpenInterval {
    pub lower: f64,
    pub upper: f64,
}

impl OpenInterval {
    pub fn contains(&self, v: f64) -> bool {
        v > self.lower && v < self.upper
    }
}

fn check_sigma(sigma2: f64) -> Result<(), BoundError> {
    if sigma2 > 0.0 && sigma2 < 1.0 {
        Ok(())
    } else {
        Err(BoundError::SigmaOutOfRange(sigma2))
    }
}

/// Gains `beta` for which `sigma2 e^{beta tau} < 1`.
pub fn feasible_beta_interval(sigma2: f64, tau: f64) -> Result<OpenInterval, BoundError> {
    check_sigma(sigma2)?;
    if !(tau >= 0.0) {
        return Err(BoundError::InvalidParameter(format!(
            "tau must be non-negative, got {tau}"
        )));
    }
    let upper = if tau == 0.0 {
        f64::INFINITY
    } else {
        (1.0 / sigma2).ln() / tau
    };
    Ok(OpenInterval { lower: 0.0, upper })
}

/// `gamma = sigma2 e^{beta tau}`, rejected when it is not below 1.
pub fn gamma(beta: f64, sigma2: f64, tau: f64) -> Result<f64, BoundError> {
    check_sigma(sigma2)?;
    let g = sigma2 * (beta * tau).exp();
    if g >= 1.0 {
        return Err(BoundError::NotContractive { gamma: g });
    }
    Ok(g)
}

/// Inputs shared by every bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBoundParams")]
pub struct BoundParams {
    pub beta: f64,
    pub tau: f64,
    pub sigma2: f64,
    pub gamma: f64,
    /// Total Lipschitz constant `C = sum_i C_i`.
    #[serde(rename = "C")]
    pub c: f64,
    /// `||X(0)||_F`.
    pub x0_norm: f64,
    pub n: usize,
    /// Lyapunov functional at the initial history.
    #[serde(rename = "xbar0_V")]
    pub xbar0_v: f64,
}

#[derive(Deserialize)]
struct RawBoundParams {
    beta: f64,
    tau: f64,
    sigma2: f64,
    #[serde(default)]
    gamma: Option<f64>,
    #[serde(rename = "C")]
    c: f64,
    x0_norm: f64,
    n: usize,
    #[serde(rename = "xbar0_V")]
    xbar0_v: f64,
}

impl TryFrom<RawBoundParams> for BoundParams {
    type Error = BoundError;

    fn try_from(r: RawBoundParams) -> Result<Self, Self::Error> {
        let p = BoundParams::new(r.beta, r.tau, r.sigma2, r.c, r.x0_norm, r.n, r.xbar0_v)?;
        if let Some(g) = r.gamma {
            if (g - p.gamma).abs() > 1e-9 * p.gamma.max(1.0) {
                return Err(BoundError::InvalidParameter(format!(
                    "gamma {g} disagrees with sigma2 e^(beta tau) = {}",
                    p.gamma
                )));
            }
        }
        Ok(p)
    }
}

impl BoundParams {
    pub fn new(
        beta: f64,
        tau: f64,
        sigma2: f64,
        c: f64,
        x0_norm: f64,
        n: usize,
        xbar0_v: f64,
    ) -> Result<Self, BoundError> {
        let interval = feasible_beta_interval(sigma2, tau)?;
        if !interval.contains(beta) {
            return Err(BoundError::BetaOutOfRange {
                beta,
                upper: interval.upper,
            });
        }
        let gamma = gamma(beta, sigma2, tau)?;
        for (name, v) in [("C", c), ("x0_norm", x0_norm), ("xbar0_V", xbar0_v)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(BoundError::InvalidParameter(format!(
                    "{name} must be finite and non-negative, got {v}"
                )));
            }
        }
        if n == 0 {
            return Err(BoundError::InvalidParameter("n must be positive".into()));
        }
        Ok(Self {
            beta,
            tau,
            sigma2,
            gamma,
            c,
            x0_norm,
            n,
            xbar0_v,
        })
    }
}

/// `mu(t) = (||X(0)||_F + 2C)/beta e^{-beta t/2} + 2C alpha(t/2)/beta`.
///
/// Defined for negative `t` too, where `alpha` is 1.
pub fn mu(t: f64, params: &BoundParams, sched: StepsizeSchedule) -> f64 {
    let BoundParams {
        beta, c, x0_norm, ..
    } = *params;
    (x0_norm + 2.0 * c) / beta * (-beta * t / 2.0).exp()
        + 2.0 * c * sched.continuous(t / 2.0) / beta
}

fn consensus_integral(
    t: f64,
    params: &BoundParams,
    sched: StepsizeSchedule,
    intervals: usize,
) -> f64 {
    let BoundParams {
        beta,
        tau,
        sigma2,
        gamma,
        ..
    } = *params;
    let rate = beta * (1.0 - gamma);
    let h = t / intervals as f64;
    let f = |u: f64| (-rate * (t - u)).exp() * mu(u - tau, params, sched);
    let inner: f64 = (1..intervals).map(|k| f(k as f64 * h)).sum();
    beta * sigma2 * h * (0.5 * (f(0.0) + f(t)) + inner)
}

/// Right-hand side of the consensus bound
/// `||X(t) - 1 xbar(t)^T||_F <= mu(t) + beta sigma2 int_0^t e^{-beta(1-gamma)(t-u)} mu(u - tau) du`,
/// with the integral taken by trapezoid at a step no larger than `quad_step`.
pub fn consensus_bound_rhs(
    t: f64,
    params: &BoundParams,
    sched: StepsizeSchedule,
    quad_step: f64,
) -> f64 {
    consensus_bound_rhs_with_error(t, params, sched, quad_step).0
}

/// As [`consensus_bound_rhs`], also returning `|I_h - I_{h/2}|` as a
/// quadrature error estimate.
pub fn consensus_bound_rhs_with_error(
    t: f64,
    params: &BoundParams,
    sched: StepsizeSchedule,
    quad_step: f64,
) -> (f64, f64) {
    let head = mu(t, params, sched);
    if t <= 0.0 {
        return (head, 0.0);
    }
    let intervals = ((t / quad_step).ceil() as usize).max(1);
    let coarse = consensus_integral(t, params, sched, intervals);
    let fine = consensus_integral(t, params, sched, 2 * intervals);
    (head + coarse, (coarse - fine).abs())
}

/// Earliest `t` at which [`gamma0`] is defined: `max(1, (4 tau + 1)/gamma)`.
pub fn gamma0_domain_start(params: &BoundParams) -> f64 {
    (1.0f64).max((4.0 * params.tau + 1.0) / params.gamma)
}

/// Accumulated error constant of the rate bound.
pub fn gamma0(t: f64, params: &BoundParams) -> Result<f64, BoundError> {
    let BoundParams {
        beta,
        tau,
        gamma,
        c,
        x0_norm,
        ..
    } = *params;
    if !(t > 1.0) {
        return Err(BoundError::DomainError(format!("t = {t} must exceed 1")));
    }
    let arg = gamma * t - 4.0 * tau;
    if !(arg >= 1.0) {
        return Err(BoundError::DomainError(format!(
            "gamma t - 4 tau = {arg} is below 1"
        )));
    }
    let one_minus = 1.0 - gamma;
    let shared = 48.0 * c * c / (beta * beta * gamma * one_minus);
    Ok(24.0 * c * (x0_norm + 2.0 * c) * (beta * tau / 2.0).exp()
        / (beta.powi(3) * one_minus * one_minus)
        + shared * (1.0 + tau)
        + c * c * t.ln()
        + shared * arg.ln())
}

/// `(2 Gamma0(t) + n V(xbar(0))) / (2 (sqrt(t) - 1))`.
pub fn rate_rhs(t: f64, params: &BoundParams) -> Result<f64, BoundError> {
    let g0 = gamma0(t, params)?;
    Ok((2.0 * g0 + params.n as f64 * params.xbar0_v) / (2.0 * (t.sqrt() - 1.0)))
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

/// `V = 1/2 ||xbar(t) - x*||^2 + beta/2 int_{t-tau}^t ||xbar(s) - x*||^2 ds`.
///
/// `window` holds equally spaced samples of `xbar` on `[t - tau, t]`, one per
/// row, oldest first; the last row is `xbar(t)`.
pub fn lyapunov_v(
    window: ArrayView2<'_, f64>,
    xstar: &[f64],
    beta: f64,
    tau: f64,
) -> Result<f64, BoundError> {
    let rows = window.nrows();
    if rows == 0 || window.ncols() != xstar.len() {
        return Err(BoundError::InvalidParameter(format!(
            "window {:?} does not match x* of length {}",
            window.dim(),
            xstar.len()
        )));
    }
    let dist: Vec<f64> = window
        .rows()
        .into_iter()
        .map(|r| sq_dist(&r.to_vec(), xstar))
        .collect();
    let point = 0.5 * dist[rows - 1];
    if tau == 0.0 {
        return Ok(point);
    }
    if rows < 2 {
        return Err(BoundError::InvalidParameter(
            "a positive delay needs at least two window samples".into(),
        ));
    }
    let h = tau / (rows - 1) as f64;
    let integral = h * (0.5 * (dist[0] + dist[rows - 1]) + dist[1..rows - 1].iter().sum::<f64>());
    Ok(point + 0.5 * beta * integral)
}

/// [`lyapunov_v`] for a history that is constant at `xbar0`:
/// `1/2 (1 + beta tau) ||xbar0 - x*||^2`.
pub fn lyapunov_v_constant(xbar0: &[f64], xstar: &[f64], beta: f64, tau: f64) -> f64 {
    0.5 * (1.0 + beta * tau) * sq_dist(xbar0, xstar)
}
