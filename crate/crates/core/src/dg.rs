//! Distributed gradient consensus with uniform communication delays.
//!
//! Two time models share one state layout:
//!
//! * discrete: `x_i(k+1) = clamp(a_ii x_i(k) + sum_{j != i} a_ij x_j(k - tau) - alpha(k) grad f_i(x_i(k)))`,
//!   or with the self term delayed as well (see [`DelayedTerms`])
//! * continuous: `x_i' = P_T[-beta x_i(t) + beta sum_j a_ij x_j(t - tau) - alpha(t) grad f_i(x_i(t))]`,
//!   integrated with explicit Euler on a grid where `tau` is a whole number of steps.
//!
//! Each node also tracks the `alpha`-weighted running average `z_i` of its own
//! iterates, at which the objective gap is measured.

use std::io::{Read, Write};

use ndarray::{Array2, ArrayView2, ArrayViewMut2, Axis};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::delay::{DelayBuffer, DelayError};
use crate::graph::MixingMatrix;
use crate::objective::{BoxDomain, LeastSquaresObjective};

/// `n x d` matrix with one node state per row.
pub type NodeMatrix = Array2<f64>;

/// Slack allowed when deciding that a point lies outside the box.
pub const FEASIBILITY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    #[error(transparent)]
    Delay(#[from] DelayError),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("coordinate {coord} = {value} lies outside [{lower}, {upper}]")]
    InfeasiblePoint {
        coord: usize,
        value: f64,
        lower: f64,
        upper: f64,
    },
    #[error("delay {tau} is not a whole number of steps of size {dt}")]
    DtDoesNotDivideTau { tau: f64, dt: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// Stepsize rule `alpha`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepsizeSchedule {
    /// `alpha(t) = 1` for `t <= 1`, `1 / sqrt(t)` beyond.
    #[default]
    PaperSqrt,
    Constant(f64),
}

impl StepsizeSchedule {
    /// Continuous-time value; also defined (as 1) for negative `t`.
    pub fn continuous(&self, t: f64) -> f64 {
        match *self {
            Self::PaperSqrt => {
                if t <= 1.0 {
                    1.0
                } else {
                    1.0 / t.sqrt()
                }
            }
            Self::Constant(c) => c,
        }
    }

    /// Discrete-time value: `alpha(0) = 1`, `alpha(k) = 1 / sqrt(k)`.
    pub fn discrete(&self, k: u64) -> f64 {
        match *self {
            Self::PaperSqrt => {
                if k == 0 {
                    1.0
                } else {
                    1.0 / (k as f64).sqrt()
                }
            }
            Self::Constant(c) => c,
        }
    }
}

/// Which terms of a discrete mixing sum are read from the delayed history.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DelayedTerms {
    /// Only values received from neighbours are delayed; a node's own value is current.
    #[default]
    Neighbors,
    /// Every term, including the node's own, is `tau` steps old.
    ///
    /// With a positive delay the network average then follows
    /// `e(k+1) = e(k - tau) - alpha L e(k)`, which has a root outside the unit
    /// circle for every positive `alpha`; iterates oscillate between box faces.
    All,
}

impl DelayedTerms {
    /// `out = A (delayed x)` under this rule, for the current state `x` and its lagged copy.
    pub fn mix_into(
        self,
        mixing: &MixingMatrix,
        current: ArrayView2<'_, f64>,
        lagged: ArrayView2<'_, f64>,
        out: ArrayViewMut2<'_, f64>,
    ) {
        match self {
            DelayedTerms::Neighbors => mixing.mix_split_into(current, lagged, out),
            DelayedTerms::All => mixing.mix_into(lagged, out),
        }
    }
}

/// Projection of velocity `v` onto the tangent cone of the box at `x`.
///
/// Interior coordinates pass through; at a lower face only the non-negative
/// part survives, at an upper face only the non-positive part.
pub fn tangent_cone_project(
    x: &[f64],
    v: &[f64],
    domain: &BoxDomain,
) -> Result<Vec<f64>, SolverError> {
    if x.len() != domain.dim() || v.len() != domain.dim() {
        return Err(SolverError::DimensionMismatch(format!(
            "point {} / velocity {} vs box {}",
            x.len(),
            v.len(),
            domain.dim()
        )));
    }
    check_feasible(x, domain)?;
    let mut out = vec![0.0; v.len()];
    project_tangent_into(x, v, domain, &mut out);
    Ok(out)
}

fn check_feasible(x: &[f64], domain: &BoxDomain) -> Result<(), SolverError> {
    for (c, ((&xc, &a), &b)) in x.iter().zip(domain.lower()).zip(domain.upper()).enumerate() {
        if !(xc >= a - FEASIBILITY_TOL && xc <= b + FEASIBILITY_TOL) {
            return Err(SolverError::InfeasiblePoint {
                coord: c,
                value: xc,
                lower: a,
                upper: b,
            });
        }
    }
    Ok(())
}

#[inline]
fn project_tangent_into(x: &[f64], v: &[f64], domain: &BoxDomain, out: &mut [f64]) {
    for c in 0..v.len() {
        let mut p = v[c];
        if x[c] <= domain.lower()[c] {
            p = p.max(0.0);
        }
        if x[c] >= domain.upper()[c] {
            p = p.min(0.0);
        }
        out[c] = p;
    }
}

/// One step of `z' = alpha (x - z) / S` in conservative form: with
/// `S_new = s_prev + weight`, sets `z <- z + weight (x - z) / S_new`.
/// When `s_prev == 0` this is the single-sample average `z = x`.
pub fn update_weighted_average(z: &mut [f64], x: &[f64], weight: f64, s_prev: f64) {
    if s_prev == 0.0 {
        z.copy_from_slice(x);
        return;
    }
    let s_new = s_prev + weight;
    for (zc, &xc) in z.iter_mut().zip(x) {
        *zc += weight * (xc - *zc) / s_new;
    }
}

/// Running weighted averages `z_i = sum w x_i / sum w` for all nodes.
#[derive(Debug, Clone)]
pub struct WeightedAverage {
    z: NodeMatrix,
    s: f64,
}

impl WeightedAverage {
    pub fn new(n: usize, d: usize) -> Self {
        Self {
            z: Array2::zeros((n, d)),
            s: 0.0,
        }
    }

    pub fn push(&mut self, x: ArrayView2<'_, f64>, weight: f64) {
        for (mut zr, xr) in self.z.rows_mut().into_iter().zip(x.rows()) {
            update_weighted_average(
                zr.as_slice_mut().expect("row-major averages"),
                xr.as_slice().expect("row-major states"),
                weight,
                self.s,
            );
        }
        self.s += weight;
    }

    pub fn z(&self) -> &NodeMatrix {
        &self.z
    }

    /// Accumulated weight `S`.
    pub fn total_weight(&self) -> f64 {
        self.s
    }
}

/// The data a run operates on.
#[derive(Debug, Clone, Copy)]
pub struct Problem<'a> {
    pub objective: &'a LeastSquaresObjective,
    pub mixing: &'a MixingMatrix,
    pub domain: &'a BoxDomain,
}

impl<'a> Problem<'a> {
    pub fn new(
        objective: &'a LeastSquaresObjective,
        mixing: &'a MixingMatrix,
        domain: &'a BoxDomain,
    ) -> Result<Self, SolverError> {
        if objective.nodes() != mixing.n() {
            return Err(SolverError::DimensionMismatch(format!(
                "objective has {} nodes, mixing matrix is {}x{}",
                objective.nodes(),
                mixing.n(),
                mixing.n()
            )));
        }
        if objective.dim() != domain.dim() {
            return Err(SolverError::DimensionMismatch(format!(
                "objective dimension {} vs box dimension {}",
                objective.dim(),
                domain.dim()
            )));
        }
        Ok(Self {
            objective,
            mixing,
            domain,
        })
    }

    pub fn n(&self) -> usize {
        self.objective.nodes()
    }

    pub fn d(&self) -> usize {
        self.objective.dim()
    }

    fn check_state(&self, x: &NodeMatrix) -> Result<(), SolverError> {
        if x.dim() != (self.n(), self.d()) {
            return Err(SolverError::DimensionMismatch(format!(
                "state is {:?}, problem is {}x{}",
                x.dim(),
                self.n(),
                self.d()
            )));
        }
        for row in x.rows() {
            check_feasible(row.as_slice().expect("row-major state"), self.domain)?;
        }
        Ok(())
    }
}

/// Node estimates plus delay history and running averages.
#[derive(Debug, Clone)]
pub struct DgState {
    x: NodeMatrix,
    buffer: DelayBuffer,
    avg: WeightedAverage,
    step: u64,
    scratch: NodeMatrix,
    grad: Vec<f64>,
    velocity: Vec<f64>,
    projected: Vec<f64>,
    zeta_norms: Vec<f64>,
}

impl DgState {
    /// Starts at `x0` with constant history `x0` on `[-tau, 0]`.
    fn new(x0: NodeMatrix, max_lag: usize) -> Self {
        let x0 = x0.as_standard_layout().into_owned();
        let (n, d) = x0.dim();
        let mut buffer = DelayBuffer::new(max_lag, x0.clone());
        buffer.push(x0.view()).expect("matching dimensions");
        Self {
            scratch: Array2::zeros((n, d)),
            avg: WeightedAverage::new(n, d),
            buffer,
            x: x0,
            step: 0,
            grad: vec![0.0; d],
            velocity: vec![0.0; d],
            projected: vec![0.0; d],
            zeta_norms: vec![0.0; n],
        }
    }

    pub fn x(&self) -> &NodeMatrix {
        &self.x
    }

    pub fn z(&self) -> &NodeMatrix {
        self.avg.z()
    }

    /// Accumulated stepsize `S`.
    pub fn s(&self) -> f64 {
        self.avg.total_weight()
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    /// `||zeta_i||` from the most recent continuous step.
    pub fn zeta_norms(&self) -> &[f64] {
        &self.zeta_norms
    }

    pub fn buffer(&self) -> &DelayBuffer {
        &self.buffer
    }
}

/// One discrete delayed step; advances `state.step()` from `k` to `k + 1`.
pub fn step_discrete(
    state: &mut DgState,
    problem: Problem<'_>,
    sched: StepsizeSchedule,
    tau_steps: usize,
    delayed: DelayedTerms,
) -> Result<(), SolverError> {
    let k = state.step;
    let alpha = sched.discrete(k);
    let DgState {
        x,
        buffer,
        scratch,
        grad,
        ..
    } = state;
    delayed.mix_into(
        problem.mixing,
        x.view(),
        buffer.view(tau_steps)?,
        scratch.view_mut(),
    );
    for i in 0..problem.n() {
        problem
            .objective
            .local_gradient_into(i, x.row(i).as_slice().expect("row-major"), grad);
        let mut row = scratch.row_mut(i);
        let out = row.as_slice_mut().expect("row-major");
        for (o, g) in out.iter_mut().zip(grad.iter()) {
            *o -= alpha * g;
        }
        problem.domain.clamp_in_place(out);
    }
    std::mem::swap(x, scratch);
    state.buffer.push(state.x.view())?;
    state.avg.push(state.x.view(), sched.discrete(k + 1));
    state.step += 1;
    Ok(())
}

/// Parameters of the continuous-time integrator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContinuousParams {
    pub dt: f64,
    pub tau: f64,
    pub beta: f64,
}

impl ContinuousParams {
    /// Number of grid steps in one delay; errors unless `tau = m dt` for integer `m`.
    pub fn lag_steps(&self) -> Result<usize, SolverError> {
        lag_steps(self.tau, self.dt)
    }
}

pub fn lag_steps(tau: f64, dt: f64) -> Result<usize, SolverError> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(SolverError::InvalidParameter(format!(
            "dt must be positive, got {dt}"
        )));
    }
    if !(tau >= 0.0) || !tau.is_finite() {
        return Err(SolverError::InvalidParameter(format!(
            "tau must be non-negative, got {tau}"
        )));
    }
    let m = (tau / dt).round();
    if (m * dt - tau).abs() > 1e-9 * tau.max(1.0) {
        return Err(SolverError::DtDoesNotDivideTau { tau, dt });
    }
    Ok(m as usize)
}

/// Midpoint of the admissible gain interval: `ln(1/sigma2) / (2 tau)`, or 1 without delay.
pub fn default_beta(sigma2: f64, tau: f64) -> Result<f64, SolverError> {
    if tau == 0.0 {
        return Ok(1.0);
    }
    if !(sigma2 > 0.0 && sigma2 < 1.0) {
        return Err(SolverError::InvalidParameter(format!(
            "default beta needs sigma2 in (0, 1), got {sigma2}"
        )));
    }
    Ok((1.0 / sigma2).ln() / (2.0 * tau))
}

/// One explicit-Euler step of the projected delay dynamics.
///
/// Records `||zeta_i|| = ||v_i - P_T(v_i)||` per node, then clamps the new
/// state to the box and folds both endpoints of the step into `z` with
/// trapezoid weights.
pub fn step_continuous(
    state: &mut DgState,
    problem: Problem<'_>,
    sched: StepsizeSchedule,
    params: &ContinuousParams,
    lag: usize,
) -> Result<(), SolverError> {
    let t = state.step as f64 * params.dt;
    let t_next = (state.step + 1) as f64 * params.dt;
    let alpha = sched.continuous(t);
    let beta = params.beta;
    let DgState {
        x,
        buffer,
        scratch,
        grad,
        velocity,
        projected,
        zeta_norms,
        avg,
        ..
    } = state;
    problem
        .mixing
        .mix_into(buffer.view(lag)?, scratch.view_mut());
    for i in 0..problem.n() {
        let xi = x.row(i);
        let xi = xi.as_slice().expect("row-major");
        problem.objective.local_gradient_into(i, xi, grad);
        let mut row = scratch.row_mut(i);
        let out = row.as_slice_mut().expect("row-major");
        for c in 0..xi.len() {
            velocity[c] = -beta * xi[c] + beta * out[c] - alpha * grad[c];
        }
        project_tangent_into(xi, velocity, problem.domain, projected);
        zeta_norms[i] = velocity
            .iter()
            .zip(projected.iter())
            .map(|(v, p)| (v - p).powi(2))
            .sum::<f64>()
            .sqrt();
        for c in 0..xi.len() {
            out[c] = xi[c] + params.dt * projected[c];
        }
        problem.domain.clamp_in_place(out);
    }
    let half = 0.5 * params.dt;
    avg.push(x.view(), half * alpha);
    std::mem::swap(x, scratch);
    avg.push(x.view(), half * sched.continuous(t_next));
    buffer.push(x.view())?;
    state.step += 1;
    Ok(())
}

/// Something that can be stepped and observed by [`run`].
pub trait Dynamics {
    fn step_index(&self) -> u64;
    /// Model time of the current state (steps for discrete models).
    fn time(&self) -> f64;
    /// Current node estimates (primal iterates).
    fn estimates(&self) -> &NodeMatrix;
    /// Current weighted averages `z`.
    fn averages(&self) -> &NodeMatrix;
    fn advance(&mut self) -> Result<(), SolverError>;
    /// Largest `||zeta_i|| / (C_i alpha)` since the previous call; zero for
    /// models without a tangent-cone projection.
    fn take_zeta_ratio(&mut self) -> f64 {
        0.0
    }
}

/// Discrete delayed distributed gradient.
#[derive(Debug, Clone)]
pub struct DiscreteDg<'a> {
    problem: Problem<'a>,
    sched: StepsizeSchedule,
    tau_steps: usize,
    delayed: DelayedTerms,
    state: DgState,
}

impl<'a> DiscreteDg<'a> {
    pub fn new(
        problem: Problem<'a>,
        sched: StepsizeSchedule,
        tau_steps: usize,
        x0: NodeMatrix,
    ) -> Result<Self, SolverError> {
        problem.check_state(&x0)?;
        let mut state = DgState::new(x0, tau_steps);
        state.avg.push(state.x.view(), sched.discrete(0));
        Ok(Self {
            problem,
            sched,
            tau_steps,
            delayed: DelayedTerms::default(),
            state,
        })
    }

    pub fn with_delayed_terms(mut self, delayed: DelayedTerms) -> Self {
        self.delayed = delayed;
        self
    }

    pub fn state(&self) -> &DgState {
        &self.state
    }
}

impl Dynamics for DiscreteDg<'_> {
    fn step_index(&self) -> u64 {
        self.state.step
    }

    fn time(&self) -> f64 {
        self.state.step as f64
    }

    fn estimates(&self) -> &NodeMatrix {
        &self.state.x
    }

    fn averages(&self) -> &NodeMatrix {
        self.state.z()
    }

    fn advance(&mut self) -> Result<(), SolverError> {
        step_discrete(
            &mut self.state,
            self.problem,
            self.sched,
            self.tau_steps,
            self.delayed,
        )
    }
}

/// Continuous-time delayed dynamics on an Euler grid.
#[derive(Debug, Clone)]
pub struct ContinuousDg<'a> {
    problem: Problem<'a>,
    sched: StepsizeSchedule,
    params: ContinuousParams,
    lag: usize,
    state: DgState,
    lipschitz: Vec<f64>,
    interval_ratio: f64,
    max_excess: f64,
}

impl<'a> ContinuousDg<'a> {
    pub fn new(
        problem: Problem<'a>,
        sched: StepsizeSchedule,
        params: ContinuousParams,
        x0: NodeMatrix,
    ) -> Result<Self, SolverError> {
        let lag = params.lag_steps()?;
        if !(params.beta > 0.0) || !params.beta.is_finite() {
            return Err(SolverError::InvalidParameter(format!(
                "beta must be positive, got {}",
                params.beta
            )));
        }
        problem.check_state(&x0)?;
        let state = DgState::new(x0, lag);
        let lipschitz = problem
            .objective
            .lipschitz_constants(problem.domain)
            .per_node;
        Ok(Self {
            problem,
            sched,
            params,
            lag,
            state,
            lipschitz,
            interval_ratio: 0.0,
            max_excess: f64::NEG_INFINITY,
        })
    }

    pub fn state(&self) -> &DgState {
        &self.state
    }

    pub fn params(&self) -> &ContinuousParams {
        &self.params
    }

    /// Largest `||zeta_i|| - C_i alpha(t)` over every step taken so far.
    pub fn max_zeta_excess(&self) -> f64 {
        self.max_excess
    }
}

impl Dynamics for ContinuousDg<'_> {
    fn step_index(&self) -> u64 {
        self.state.step
    }

    fn time(&self) -> f64 {
        self.state.step as f64 * self.params.dt
    }

    fn estimates(&self) -> &NodeMatrix {
        &self.state.x
    }

    fn averages(&self) -> &NodeMatrix {
        self.state.z()
    }

    fn advance(&mut self) -> Result<(), SolverError> {
        let alpha = self.sched.continuous(self.time());
        step_continuous(
            &mut self.state,
            self.problem,
            self.sched,
            &self.params,
            self.lag,
        )?;
        for (&zeta, &c) in self.state.zeta_norms.iter().zip(&self.lipschitz) {
            let cap = c * alpha;
            self.max_excess = self.max_excess.max(zeta - cap);
            let ratio = if zeta == 0.0 {
                0.0
            } else if cap > 0.0 {
                zeta / cap
            } else {
                f64::INFINITY
            };
            self.interval_ratio = self.interval_ratio.max(ratio);
        }
        Ok(())
    }

    fn take_zeta_ratio(&mut self) -> f64 {
        std::mem::take(&mut self.interval_ratio)
    }
}

/// `||X - 1 xbar^T||_F`.
pub fn consensus_error(x: ArrayView2<'_, f64>) -> f64 {
    let mean = x.mean_axis(Axis(0)).expect("non-empty state");
    x.rows()
        .into_iter()
        .map(|r| {
            r.iter()
                .zip(mean.iter())
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
        })
        .sum::<f64>()
        .sqrt()
}

/// `max_i F(z_i) - f*`.
pub fn worst_gap(objective: &LeastSquaresObjective, z: ArrayView2<'_, f64>, f_star: f64) -> f64 {
    z.rows()
        .into_iter()
        .map(|r| objective.global_value_gram(r) - f_star)
        .fold(f64::NEG_INFINITY, f64::max)
}

pub fn all_feasible(x: ArrayView2<'_, f64>, domain: &BoxDomain) -> bool {
    x.rows()
        .into_iter()
        .all(|r| domain.contains(r.as_slice().expect("row-major"), 0.0))
}

/// One sampled observation of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub time: f64,
    pub step: u64,
    pub consensus_err: f64,
    pub worst_gap: f64,
    pub max_zeta_ratio: f64,
    pub feasible: bool,
}

/// How long to run and what to record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunControl {
    pub horizon_steps: u64,
    pub sample_every: u64,
    /// Stop as soon as the worst gap reaches this value.
    pub tolerance: Option<f64>,
    pub f_star: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub records: Vec<TraceRecord>,
    /// First step at which the worst gap met the tolerance.
    pub converged_at: Option<u64>,
    pub final_gap: f64,
    pub steps: u64,
}

fn observe<D: Dynamics>(dynamics: &mut D, problem: Problem<'_>, gap: f64) -> TraceRecord {
    TraceRecord {
        time: dynamics.time(),
        step: dynamics.step_index(),
        consensus_err: consensus_error(dynamics.estimates().view()),
        worst_gap: gap,
        max_zeta_ratio: dynamics.take_zeta_ratio(),
        feasible: all_feasible(dynamics.estimates().view(), problem.domain),
    }
}

/// Drives `dynamics` to the horizon or the gap tolerance, sampling a record
/// every `sample_every` steps plus the initial and final states.
pub fn run<D: Dynamics>(
    dynamics: &mut D,
    problem: Problem<'_>,
    control: &RunControl,
) -> Result<RunOutcome, SolverError> {
    if control.sample_every == 0 {
        return Err(SolverError::InvalidParameter(
            "sample_every must be at least 1".into(),
        ));
    }
    let gap_of = |d: &D| worst_gap(problem.objective, d.averages().view(), control.f_star);
    let mut records = Vec::new();
    let mut gap = gap_of(dynamics);
    records.push(observe(dynamics, problem, gap));
    let met = |g: f64| control.tolerance.is_some_and(|tol| g <= tol);
    let mut converged_at = met(gap).then_some(0);
    while converged_at.is_none() && dynamics.step_index() < control.horizon_steps {
        dynamics.advance()?;
        let k = dynamics.step_index();
        let sample = k.is_multiple_of(control.sample_every) || k == control.horizon_steps;
        if control.tolerance.is_some() || sample {
            gap = gap_of(dynamics);
        }
        if met(gap) {
            converged_at = Some(k);
        }
        if sample || converged_at.is_some() {
            records.push(observe(dynamics, problem, gap));
        }
    }
    Ok(RunOutcome {
        records,
        converged_at,
        final_gap: gap,
        steps: dynamics.step_index(),
    })
}

pub const TRACE_HEADER: [&str; 6] = [
    "time",
    "step",
    "consensus_err",
    "worst_gap",
    "max_zeta_ratio",
    "feasible",
];

/// Writes records under [`TRACE_HEADER`], with a trailing `algo` column when
/// `algo` is given.
pub fn write_trace_csv<W: Write>(
    records: &[TraceRecord],
    writer: W,
    algo: Option<&str>,
) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<&str> = TRACE_HEADER.to_vec();
    if algo.is_some() {
        header.push("algo");
    }
    w.write_record(&header)?;
    for r in records {
        let mut row = vec![
            r.time.to_string(),
            r.step.to_string(),
            r.consensus_err.to_string(),
            r.worst_gap.to_string(),
            r.max_zeta_ratio.to_string(),
            r.feasible.to_string(),
        ];
        if let Some(a) = algo {
            row.push(a.to_string());
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a trace written by [`write_trace_csv`]; an `algo` column is ignored.
pub fn read_trace_csv<R: Read>(reader: R) -> csv::Result<Vec<TraceRecord>> {
    let mut r = csv::Reader::from_reader(reader);
    r.deserialize().collect()
}
