//! Experiment configuration, instance construction and the three experiment
//! families: convergence traces, delay sweeps and bound checks.

use std::fmt;
use std::io::Write;

use ndarray::{Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bounds::{self, BoundError, BoundParams};
use crate::da::DualAveraging;
use crate::dg::{
    self, ContinuousDg, ContinuousParams, DelayedTerms, DiscreteDg, NodeMatrix, Problem,
    RunControl, RunOutcome, SolverError, StepsizeSchedule, TraceRecord,
};
use crate::graph::{
    generate_random_geometric, lazy_metropolis, GraphError, MixingMatrix, Topology,
    DEFAULT_MAX_ATTEMPTS,
};
use crate::objective::{BoxDomain, LeastSquaresObjective, ObjectiveError, Optimum, OPTIMUM_TOL};

/// Step budget for sweep cells and for runs configured with a tolerance only.
pub const SWEEP_HORIZON_CAP: u64 = 1_000_000;
/// Relative slack on the consensus bound, covering quadrature error.
pub const CONSENSUS_SLACK: f64 = 1e-3;
pub const DEFAULT_DT: f64 = 0.01;
pub const DEFAULT_TOLERANCE: f64 = 0.2;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Bound(#[from] BoundError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algo {
    DgDiscrete,
    DgContinuous,
    Da,
}

impl Algo {
    pub fn name(&self) -> &'static str {
        match self {
            Algo::DgDiscrete => "dg_discrete",
            Algo::DgContinuous => "dg_continuous",
            Algo::Da => "da",
        }
    }
}

impl fmt::Display for Algo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Starting estimates for the gradient methods; the dual-averaging baseline
/// always starts from zero duals.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialState {
    /// Every node at the box point nearest the origin.
    #[default]
    Zeros,
    /// Independent uniform draws from the box.
    Uniform { seed: u64 },
}

fn default_d() -> usize {
    10
}
fn default_lower() -> f64 {
    -5.0
}
fn default_upper() -> f64 {
    5.0
}
fn default_sample_every() -> u64 {
    1
}

/// One experiment. `tau` and `horizon` are in steps for the discrete
/// algorithms and in time units for `dg_continuous`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub algo: Algo,
    pub n: usize,
    #[serde(default = "default_d")]
    pub d: usize,
    pub r: f64,
    pub graph_seed: u64,
    pub data_seed: u64,
    #[serde(default)]
    pub tau: f64,
    #[serde(default)]
    pub beta: Option<f64>,
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default)]
    pub schedule: StepsizeSchedule,
    #[serde(default = "default_lower")]
    pub box_lower: f64,
    #[serde(default = "default_upper")]
    pub box_upper: f64,
    #[serde(default)]
    pub horizon: Option<f64>,
    #[serde(default)]
    pub tolerance: Option<f64>,
    #[serde(default = "default_sample_every")]
    pub sample_every: u64,
    #[serde(default)]
    pub init: InitialState,
    /// Delay rule for the discrete mixing sums.
    #[serde(default)]
    pub delayed_terms: DelayedTerms,
}

impl RunConfig {
    /// A discrete DG run with every optional field at its default.
    pub fn new(algo: Algo, n: usize, r: f64, graph_seed: u64, data_seed: u64) -> Self {
        Self {
            algo,
            n,
            d: default_d(),
            r,
            graph_seed,
            data_seed,
            tau: 0.0,
            beta: None,
            dt: None,
            schedule: StepsizeSchedule::PaperSqrt,
            box_lower: default_lower(),
            box_upper: default_upper(),
            horizon: None,
            tolerance: None,
            sample_every: 1,
            init: InitialState::Zeros,
            delayed_terms: DelayedTerms::Neighbors,
        }
    }

    pub fn dt(&self) -> f64 {
        self.dt.unwrap_or(DEFAULT_DT)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.n == 0 || self.d == 0 {
            return bad(format!(
                "n and d must be positive, got n={} d={}",
                self.n, self.d
            ));
        }
        if !(self.r > 0.0) {
            return bad(format!("radius must be positive, got {}", self.r));
        }
        if !(self.box_lower < self.box_upper) {
            return bad(format!(
                "empty box [{}, {}]",
                self.box_lower, self.box_upper
            ));
        }
        if !(self.tau >= 0.0) || !self.tau.is_finite() {
            return bad(format!("tau must be non-negative, got {}", self.tau));
        }
        if self.horizon.is_none() && self.tolerance.is_none() {
            return bad("horizon and tolerance cannot both be absent".into());
        }
        if let Some(h) = self.horizon {
            if !(h >= 0.0) || !h.is_finite() {
                return bad(format!("horizon must be non-negative, got {h}"));
            }
        }
        if self.sample_every == 0 {
            return bad("sample_every must be at least 1".into());
        }
        if let Some(b) = self.beta {
            if !(b > 0.0) {
                return bad(format!("beta must be positive, got {b}"));
            }
        }
        match self.algo {
            Algo::DgContinuous => {
                dg::lag_steps(self.tau, self.dt())?;
            }
            Algo::DgDiscrete | Algo::Da => {
                if self.tau.fract() != 0.0 {
                    return bad(format!(
                        "discrete delay must be a whole number of steps, got {}",
                        self.tau
                    ));
                }
                if self.dt.is_some() || self.beta.is_some() {
                    return bad(format!("{} takes neither dt nor beta", self.algo));
                }
            }
        }
        Ok(())
    }

    /// Number of solver steps in the horizon, or the cap when only a tolerance is set.
    pub fn horizon_steps(&self) -> u64 {
        match (self.horizon, self.algo) {
            (None, _) => SWEEP_HORIZON_CAP,
            (Some(h), Algo::DgContinuous) => (h / self.dt()).round() as u64,
            (Some(h), _) => h.round() as u64,
        }
    }
}

/// Graph, data, box and reference optimum shared by every run on one configuration.
#[derive(Debug, Clone)]
pub struct Instance {
    pub topology: Topology,
    pub mixing: MixingMatrix,
    pub objective: LeastSquaresObjective,
    pub domain: BoxDomain,
    pub optimum: Optimum,
    pub sigma2: f64,
}

impl Instance {
    pub fn build(cfg: &RunConfig) -> Result<Self, HarnessError> {
        let topology =
            generate_random_geometric(cfg.n, cfg.r, cfg.graph_seed, DEFAULT_MAX_ATTEMPTS)?;
        let mixing = lazy_metropolis(&topology);
        let sigma2 = mixing.sigma2()?;
        let objective = LeastSquaresObjective::random(cfg.n, cfg.d, cfg.data_seed)?;
        let domain = BoxDomain::cube(cfg.d, cfg.box_lower, cfg.box_upper)?;
        let optimum = objective.optimal_value(&domain, OPTIMUM_TOL)?;
        Ok(Self {
            topology,
            mixing,
            objective,
            domain,
            optimum,
            sigma2,
        })
    }

    pub fn problem(&self) -> Problem<'_> {
        Problem::new(&self.objective, &self.mixing, &self.domain)
            .expect("instance parts share dimensions")
    }

    pub fn initial_state(&self, init: InitialState) -> NodeMatrix {
        let (n, d) = (self.objective.nodes(), self.objective.dim());
        match init {
            InitialState::Zeros => {
                let mut x = Array2::zeros((n, d));
                for mut row in x.rows_mut() {
                    self.domain
                        .clamp_in_place(row.as_slice_mut().expect("row-major"));
                }
                x
            }
            InitialState::Uniform { seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let (lo, hi) = (self.domain.lower(), self.domain.upper());
                Array2::from_shape_fn((n, d), |(_, c)| {
                    lo[c] + (hi[c] - lo[c]) * rng.random::<f64>()
                })
            }
        }
    }

    /// Gain for a continuous run: the override, or the midpoint of the admissible interval.
    pub fn beta(&self, cfg: &RunConfig) -> Result<f64, HarnessError> {
        match cfg.beta {
            Some(b) => Ok(b),
            None => Ok(dg::default_beta(self.sigma2, cfg.tau)?),
        }
    }
}

/// Outcome of one run together with the quantities needed to interpret it.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRun {
    pub algo: Algo,
    pub outcome: RunOutcome,
    pub f_star: f64,
    pub sigma2: f64,
    /// Gain used by a continuous run.
    pub beta: Option<f64>,
}

impl ConvergenceRun {
    pub fn records(&self) -> &[TraceRecord] {
        &self.outcome.records
    }

    /// Trace CSV; dual-averaging traces carry an extra `algo` column.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), HarnessError> {
        let algo = (self.algo == Algo::Da).then_some(self.algo.name());
        dg::write_trace_csv(&self.outcome.records, writer, algo)?;
        Ok(())
    }
}

/// Runs `cfg` on a prebuilt instance.
pub fn run_on_instance(cfg: &RunConfig, inst: &Instance) -> Result<ConvergenceRun, HarnessError> {
    cfg.validate()?;
    let control = RunControl {
        horizon_steps: cfg.horizon_steps(),
        sample_every: cfg.sample_every,
        tolerance: cfg.tolerance,
        f_star: inst.optimum.value,
    };
    let problem = inst.problem();
    let (outcome, beta) = match cfg.algo {
        Algo::DgDiscrete => {
            let mut dyn_ = DiscreteDg::new(
                problem,
                cfg.schedule,
                cfg.tau as usize,
                inst.initial_state(cfg.init),
            )?
            .with_delayed_terms(cfg.delayed_terms);
            (dg::run(&mut dyn_, problem, &control)?, None)
        }
        Algo::DgContinuous => {
            let beta = inst.beta(cfg)?;
            let params = ContinuousParams {
                dt: cfg.dt(),
                tau: cfg.tau,
                beta,
            };
            let mut dyn_ =
                ContinuousDg::new(problem, cfg.schedule, params, inst.initial_state(cfg.init))?;
            (dg::run(&mut dyn_, problem, &control)?, Some(beta))
        }
        Algo::Da => {
            let mut dyn_ = DualAveraging::new(problem, cfg.schedule, cfg.tau as usize)
                .with_delayed_terms(cfg.delayed_terms);
            (dg::run(&mut dyn_, problem, &control)?, None)
        }
    };
    Ok(ConvergenceRun {
        algo: cfg.algo,
        outcome,
        f_star: inst.optimum.value,
        sigma2: inst.sigma2,
        beta,
    })
}

/// Builds the instance for `cfg` and runs it to the horizon or tolerance.
pub fn run_convergence(cfg: &RunConfig) -> Result<ConvergenceRun, HarnessError> {
    cfg.validate()?;
    let inst = Instance::build(cfg)?;
    run_on_instance(cfg, &inst)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepStatus {
    Converged,
    Exceeded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub algo: Algo,
    pub tau: f64,
    pub iterations: u64,
    pub final_gap: f64,
    pub status: SweepStatus,
}

/// One cell per `(algo, tau)` on a single shared instance, run in parallel
/// and returned in `(algo, tau)` input order.
pub fn run_delay_sweep(
    cfg: &RunConfig,
    taus: &[f64],
    algos: &[Algo],
) -> Result<Vec<SweepRow>, HarnessError> {
    if taus.is_empty() || algos.is_empty() {
        return Err(HarnessError::Config(
            "a sweep needs at least one delay and one algorithm".into(),
        ));
    }
    let mut base = cfg.clone();
    base.tolerance.get_or_insert(DEFAULT_TOLERANCE);
    base.sample_every = SWEEP_HORIZON_CAP;
    let inst = Instance::build(&base)?;
    let cells: Vec<RunConfig> = algos
        .iter()
        .flat_map(|&algo| {
            let base = &base;
            taus.iter().map(move |&tau| {
                let mut c = base.clone();
                c.algo = algo;
                c.tau = tau;
                if algo != Algo::DgContinuous {
                    c.dt = None;
                    c.beta = None;
                }
                c
            })
        })
        .collect();
    for c in &cells {
        c.validate()?;
    }
    cells
        .par_iter()
        .map(|c| {
            let run = run_on_instance(c, &inst)?;
            let status = if run.outcome.converged_at.is_some() {
                SweepStatus::Converged
            } else {
                SweepStatus::Exceeded
            };
            Ok(SweepRow {
                algo: c.algo,
                tau: c.tau,
                iterations: run.outcome.steps,
                final_gap: run.outcome.final_gap,
                status,
            })
        })
        .collect()
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], writer: W) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundCheck {
    /// Consensus error against the consensus bound.
    Consensus,
    /// Worst objective gap against the rate bound.
    Rate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundRow {
    pub check: BoundCheck,
    pub t: f64,
    pub measured: f64,
    pub bound: f64,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub params: BoundParams,
    pub rows: Vec<BoundRow>,
}

impl BoundReport {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.ok)
    }

    /// Earliest failing row in time, consensus before rate at equal times.
    pub fn first_violation(&self) -> Option<&BoundRow> {
        self.rows
            .iter()
            .filter(|r| !r.ok)
            .min_by(|a, b| a.t.total_cmp(&b.t))
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), HarnessError> {
        let mut w = csv::Writer::from_writer(writer);
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Compares a continuous-time trace with the consensus bound at every record
/// and with the rate bound at every record past the rate bound's domain start.
pub fn check_bounds(
    records: &[TraceRecord],
    params: &BoundParams,
    sched: StepsizeSchedule,
    quad_step: f64,
) -> Result<BoundReport, HarnessError> {
    let mut rows: Vec<BoundRow> = records
        .par_iter()
        .map(|r| {
            let bound = bounds::consensus_bound_rhs(r.time, params, sched, quad_step);
            BoundRow {
                check: BoundCheck::Consensus,
                t: r.time,
                measured: r.consensus_err,
                bound,
                ok: r.consensus_err <= bound * (1.0 + CONSENSUS_SLACK),
            }
        })
        .collect();
    let start = bounds::gamma0_domain_start(params);
    for r in records.iter().filter(|r| r.time > start) {
        let bound = bounds::rate_rhs(r.time, params)?;
        rows.push(BoundRow {
            check: BoundCheck::Rate,
            t: r.time,
            measured: r.worst_gap,
            bound,
            ok: r.worst_gap <= bound,
        });
    }
    Ok(BoundReport {
        params: *params,
        rows,
    })
}

/// Bound parameters for a continuous run of `cfg` on `inst`.
pub fn bound_params(cfg: &RunConfig, inst: &Instance) -> Result<BoundParams, HarnessError> {
    let beta = inst.beta(cfg)?;
    let x0 = inst.initial_state(cfg.init);
    let x0_norm = x0.iter().map(|v| v * v).sum::<f64>().sqrt();
    let xbar0 = x0.mean_axis(Axis(0)).expect("non-empty state");
    let xbar0_v = bounds::lyapunov_v_constant(
        xbar0.as_slice().expect("contiguous"),
        &inst.optimum.point,
        beta,
        cfg.tau,
    );
    let c = inst.objective.lipschitz_constants(&inst.domain).total;
    Ok(BoundParams::new(
        beta,
        cfg.tau,
        inst.sigma2,
        c,
        x0_norm,
        cfg.n,
        xbar0_v,
    )?)
}

/// Runs a continuous configuration and checks its trace against both bounds.
pub fn run_bound_check(cfg: &RunConfig) -> Result<BoundReport, HarnessError> {
    if cfg.algo != Algo::DgContinuous || cfg.schedule != StepsizeSchedule::PaperSqrt {
        return Err(HarnessError::Config(
            "bound checks need algo dg_continuous with the paper_sqrt schedule".into(),
        ));
    }
    cfg.validate()?;
    let inst = Instance::build(cfg)?;
    let params = bound_params(cfg, &inst)?;
    let run = run_on_instance(cfg, &inst)?;
    check_bounds(run.records(), &params, cfg.schedule, cfg.dt())
}

/// Convenience for callers that want the underlying dynamics object.
pub fn continuous_dynamics<'a>(
    cfg: &RunConfig,
    inst: &'a Instance,
) -> Result<ContinuousDg<'a>, HarnessError> {
    let params = ContinuousParams {
        dt: cfg.dt(),
        tau: cfg.tau,
        beta: inst.beta(cfg)?,
    };
    Ok(ContinuousDg::new(
        inst.problem(),
        cfg.schedule,
        params,
        inst.initial_state(cfg.init),
    )?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(algo: Algo) -> RunConfig {
        let mut c = RunConfig::new(algo, 8, 0.6, 1, 2);
        c.d = 3;
        c.horizon = Some(200.0);
        c.sample_every = 20;
        if algo == Algo::DgContinuous {
            c.tau = 0.5;
            c.dt = Some(0.05);
            c.horizon = Some(10.0);
        }
        c
    }

    #[test]
    fn config_json_defaults_and_names() {
        let text = r#"{"algo":"dg_continuous","n":10,"r":0.6,"graph_seed":1,"data_seed":2,"tau":1.0,"horizon":100.0}"#;
        let c: RunConfig = serde_json::from_str(text).unwrap();
        assert_eq!(c.d, 10);
        assert_eq!((c.box_lower, c.box_upper), (-5.0, 5.0));
        assert_eq!(c.schedule, StepsizeSchedule::PaperSqrt);
        assert_eq!(c.init, InitialState::Zeros);
        assert_eq!(c.horizon_steps(), 10_000);
        c.validate().unwrap();
        let u: InitialState = serde_json::from_str(r#"{"uniform":{"seed":4}}"#).unwrap();
        assert_eq!(u, InitialState::Uniform { seed: 4 });
        let back: RunConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn config_validation() {
        let mut c = small(Algo::DgDiscrete);
        c.horizon = None;
        assert!(c.validate().is_err());
        let mut c = small(Algo::DgDiscrete);
        c.tau = 1.5;
        assert!(c.validate().is_err());
        let mut c = small(Algo::DgContinuous);
        c.dt = Some(0.3);
        assert!(matches!(
            c.validate(),
            Err(HarnessError::Solver(SolverError::DtDoesNotDivideTau { .. }))
        ));
        let mut c = small(Algo::Da);
        c.beta = Some(1.0);
        assert!(c.validate().is_err());
    }

    #[test]
    fn zero_horizon_gives_one_record() {
        let mut c = small(Algo::DgDiscrete);
        c.horizon = Some(0.0);
        let run = run_convergence(&c).unwrap();
        assert_eq!(run.records().len(), 1);
        assert_eq!(run.records()[0].step, 0);
    }

    #[test]
    fn runs_are_byte_deterministic() {
        for algo in [Algo::DgDiscrete, Algo::DgContinuous, Algo::Da] {
            let c = small(algo);
            let mut a = Vec::new();
            let mut b = Vec::new();
            run_convergence(&c).unwrap().write_csv(&mut a).unwrap();
            run_convergence(&c).unwrap().write_csv(&mut b).unwrap();
            assert_eq!(a, b);
            let header = String::from_utf8(a)
                .unwrap()
                .lines()
                .next()
                .unwrap()
                .to_string();
            assert_eq!(header.ends_with(",algo"), algo == Algo::Da);
        }
    }

    #[test]
    fn tolerance_stops_run() {
        let mut c = small(Algo::DgDiscrete);
        c.horizon = None;
        c.tolerance = Some(1.0);
        let run = run_convergence(&c).unwrap();
        let last = run.records().last().unwrap();
        assert!(last.worst_gap <= 1.0);
        assert_eq!(Some(last.step), run.outcome.converged_at);
    }

    #[test]
    fn sweep_rows_in_order() {
        let mut c = small(Algo::DgDiscrete);
        c.horizon = Some(20_000.0);
        c.tolerance = Some(0.5);
        let rows = run_delay_sweep(&c, &[0.0, 3.0], &[Algo::DgDiscrete, Algo::Da]).unwrap();
        let keys: Vec<(Algo, f64)> = rows.iter().map(|r| (r.algo, r.tau)).collect();
        assert_eq!(
            keys,
            vec![
                (Algo::DgDiscrete, 0.0),
                (Algo::DgDiscrete, 3.0),
                (Algo::Da, 0.0),
                (Algo::Da, 3.0)
            ]
        );
        for r in rows.iter().filter(|r| r.status == SweepStatus::Converged) {
            assert!(r.final_gap <= 0.5);
        }
        let mut buf = Vec::new();
        write_sweep_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("algo,tau,iterations,final_gap,status\n"));
        assert!(text.contains("\ndg_discrete,0.0,"));
    }

    #[test]
    fn bound_check_requires_continuous_paper_schedule() {
        assert!(run_bound_check(&small(Algo::DgDiscrete)).is_err());
        let mut c = small(Algo::DgContinuous);
        c.schedule = StepsizeSchedule::Constant(0.1);
        assert!(run_bound_check(&c).is_err());
    }
}
