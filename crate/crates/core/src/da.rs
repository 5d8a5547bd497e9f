//! Distributed dual averaging with delayed dual exchange.
//!
//! `mu_i(k+1) = a_ii mu_i(k) + sum_{j != i} a_ij mu_j(k - tau) + grad f_i(w_i(k))` and
//! `w_i(k+1) = clamp(-alpha(k) mu_i(k+1))`, starting from zero duals. As for
//! the gradient method, [`DelayedTerms::All`] delays the self term too.

use ndarray::Array2;

use crate::delay::DelayBuffer;
use crate::dg::{
    DelayedTerms, Dynamics, NodeMatrix, Problem, SolverError, StepsizeSchedule, WeightedAverage,
};

/// Duals, primals, dual history and primal running averages.
#[derive(Debug, Clone)]
pub struct DualState {
    duals: NodeMatrix,
    primals: NodeMatrix,
    buffer: DelayBuffer,
    avg: WeightedAverage,
    step: u64,
    scratch: NodeMatrix,
    grad: Vec<f64>,
}

impl DualState {
    pub fn new(problem: Problem<'_>, tau_steps: usize, sched: StepsizeSchedule) -> Self {
        let (n, d) = (problem.n(), problem.d());
        let duals = Array2::zeros((n, d));
        let mut buffer = DelayBuffer::new(tau_steps, duals.clone());
        buffer.push(duals.view()).expect("matching dimensions");
        let mut primals = Array2::zeros((n, d));
        for mut row in primals.rows_mut() {
            problem
                .domain
                .clamp_in_place(row.as_slice_mut().expect("row-major"));
        }
        let mut avg = WeightedAverage::new(n, d);
        avg.push(primals.view(), sched.discrete(0));
        Self {
            duals,
            primals,
            buffer,
            avg,
            step: 0,
            scratch: Array2::zeros((n, d)),
            grad: vec![0.0; d],
        }
    }

    pub fn duals(&self) -> &NodeMatrix {
        &self.duals
    }

    pub fn primals(&self) -> &NodeMatrix {
        &self.primals
    }

    pub fn z(&self) -> &NodeMatrix {
        self.avg.z()
    }

    pub fn step(&self) -> u64 {
        self.step
    }
}

/// One delayed dual-averaging step from `k` to `k + 1`.
pub fn step_da(
    state: &mut DualState,
    problem: Problem<'_>,
    sched: StepsizeSchedule,
    tau_steps: usize,
    delayed: DelayedTerms,
) -> Result<(), SolverError> {
    let k = state.step;
    let alpha = sched.discrete(k);
    let DualState {
        duals,
        primals,
        buffer,
        scratch,
        grad,
        ..
    } = state;
    delayed.mix_into(
        problem.mixing,
        duals.view(),
        buffer.view(tau_steps)?,
        scratch.view_mut(),
    );
    for i in 0..problem.n() {
        problem.objective.local_gradient_into(
            i,
            primals.row(i).as_slice().expect("row-major"),
            grad,
        );
        let mut mu = scratch.row_mut(i);
        let mu = mu.as_slice_mut().expect("row-major");
        for (m, g) in mu.iter_mut().zip(grad.iter()) {
            *m += g;
        }
        let mut w = primals.row_mut(i);
        let w = w.as_slice_mut().expect("row-major");
        for (wc, m) in w.iter_mut().zip(mu.iter()) {
            *wc = -alpha * m;
        }
        problem.domain.clamp_in_place(w);
    }
    std::mem::swap(duals, scratch);
    state.buffer.push(state.duals.view())?;
    state.avg.push(state.primals.view(), sched.discrete(k + 1));
    state.step += 1;
    Ok(())
}

/// Delayed dual averaging as a [`Dynamics`] for the shared run loop.
#[derive(Debug, Clone)]
pub struct DualAveraging<'a> {
    problem: Problem<'a>,
    sched: StepsizeSchedule,
    tau_steps: usize,
    delayed: DelayedTerms,
    state: DualState,
}

impl<'a> DualAveraging<'a> {
    pub fn new(problem: Problem<'a>, sched: StepsizeSchedule, tau_steps: usize) -> Self {
        Self {
            state: DualState::new(problem, tau_steps, sched),
            problem,
            sched,
            tau_steps,
            delayed: DelayedTerms::default(),
        }
    }

    pub fn with_delayed_terms(mut self, delayed: DelayedTerms) -> Self {
        self.delayed = delayed;
        self
    }

    pub fn state(&self) -> &DualState {
        &self.state
    }
}

impl Dynamics for DualAveraging<'_> {
    fn step_index(&self) -> u64 {
        self.state.step
    }

    fn time(&self) -> f64 {
        self.state.step as f64
    }

    fn estimates(&self) -> &NodeMatrix {
        &self.state.primals
    }

    fn averages(&self) -> &NodeMatrix {
        self.state.z()
    }

    fn advance(&mut self) -> Result<(), SolverError> {
        step_da(
            &mut self.state,
            self.problem,
            self.sched,
            self.tau_steps,
            self.delayed,
        )
    }
}
