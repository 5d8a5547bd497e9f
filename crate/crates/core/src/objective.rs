//! Finite-sum least-squares objective on an axis-aligned box.
//!
//! Node `i` owns one sample `(x_i, y_i)` and the loss `f_i(w) = (x_i^T w - y_i)^2`.
//! The global objective is `F(w) = sum_i f_i(w)`.

use std::io::{Read, Write};

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Iteration cap for the optimum oracles.
pub const OPTIMUM_MAX_ITER: usize = 10_000_000;

/// Default fixed-point residual target for [`LeastSquaresObjective::optimal_value`].
pub const OPTIMUM_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ObjectiveError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("objective needs at least one node and one coordinate")]
    Empty,
    #[error("invalid box: lower[{0}] > upper[{0}]")]
    InvalidBox(usize),
    #[error("optimum oracle hit {iterations} iterations with residual {residual:e}")]
    MaxIterations { iterations: usize, residual: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("dataset i/o: {0}")]
    Io(String),
}

/// Axis-aligned box `[a, b]` in `R^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxDomain {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl BoxDomain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self, ObjectiveError> {
        if lower.len() != upper.len() {
            return Err(ObjectiveError::DimensionMismatch {
                expected: lower.len(),
                got: upper.len(),
            });
        }
        if lower.is_empty() {
            return Err(ObjectiveError::Empty);
        }
        if let Some(c) = (0..lower.len()).find(|&c| !(lower[c] <= upper[c])) {
            return Err(ObjectiveError::InvalidBox(c));
        }
        Ok(Self { lower, upper })
    }

    /// `[a, b]^d`.
    pub fn cube(d: usize, a: f64, b: f64) -> Result<Self, ObjectiveError> {
        Self::new(vec![a; d], vec![b; d])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn clamp_in_place(&self, w: &mut [f64]) {
        for ((v, &a), &b) in w.iter_mut().zip(&self.lower).zip(&self.upper) {
            *v = v.clamp(a, b);
        }
    }

    pub fn clamp(&self, w: &[f64]) -> Vec<f64> {
        let mut out = w.to_vec();
        self.clamp_in_place(&mut out);
        out
    }

    /// True when every coordinate lies within `[a - tol, b + tol]`.
    pub fn contains(&self, w: &[f64], tol: f64) -> bool {
        w.len() == self.dim()
            && w.iter()
                .zip(&self.lower)
                .zip(&self.upper)
                .all(|((&v, &a), &b)| v >= a - tol && v <= b + tol)
    }

    /// Euclidean length of the main diagonal.
    pub fn diameter(&self) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(a, b)| (b - a).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// Uniform sample from the box.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(&a, &b)| a + (b - a) * rng.random::<f64>())
            .collect()
    }
}

/// Per-node Lipschitz constants of `f_i` over the box and their sum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LipschitzConstants {
    pub per_node: Vec<f64>,
    pub total: f64,
}

/// Minimiser of `F` over the box as found by one of the oracles.
#[derive(Debug, Clone, PartialEq)]
pub struct Optimum {
    pub value: f64,
    pub point: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LeastSquaresObjective {
    features: Array2<f64>,
    targets: Array1<f64>,
    gram: Array2<f64>,
    xty: Array1<f64>,
    yty: f64,
}

impl LeastSquaresObjective {
    /// `features` is `n x d`, one row per node.
    pub fn new(features: Array2<f64>, targets: Array1<f64>) -> Result<Self, ObjectiveError> {
        let (n, d) = features.dim();
        if n == 0 || d == 0 {
            return Err(ObjectiveError::Empty);
        }
        if targets.len() != n {
            return Err(ObjectiveError::DimensionMismatch {
                expected: n,
                got: targets.len(),
            });
        }
        if features
            .iter()
            .chain(targets.iter())
            .any(|v| !v.is_finite())
        {
            return Err(ObjectiveError::InvalidParameter("non-finite data".into()));
        }
        let gram = features.t().dot(&features);
        let xty = features.t().dot(&targets);
        let yty = targets.dot(&targets);
        Ok(Self {
            features,
            targets,
            gram,
            xty,
            yty,
        })
    }

    /// Features and targets drawn uniformly from `[0, 1]`.
    pub fn random(n: usize, d: usize, seed: u64) -> Result<Self, ObjectiveError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut features = Array2::zeros((n, d));
        let mut targets = Array1::zeros(n);
        for i in 0..n {
            for c in 0..d {
                features[[i, c]] = rng.random::<f64>();
            }
            targets[i] = rng.random::<f64>();
        }
        Self::new(features, targets)
    }

    /// All-zero data: every `f_i` is identically zero.
    pub fn zeros(n: usize, d: usize) -> Result<Self, ObjectiveError> {
        Self::new(Array2::zeros((n, d)), Array1::zeros(n))
    }

    pub fn nodes(&self) -> usize {
        self.features.nrows()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn targets(&self) -> &Array1<f64> {
        &self.targets
    }

    fn residual(&self, i: usize, w: &[f64]) -> f64 {
        self.features
            .row(i)
            .iter()
            .zip(w)
            .map(|(x, w)| x * w)
            .sum::<f64>()
            - self.targets[i]
    }

    pub fn local_value(&self, i: usize, w: &[f64]) -> f64 {
        self.residual(i, w).powi(2)
    }

    /// Writes `grad f_i(w) = 2 (x_i^T w - y_i) x_i` into `out`.
    pub fn local_gradient_into(&self, i: usize, w: &[f64], out: &mut [f64]) {
        let s = 2.0 * self.residual(i, w);
        for (o, x) in out.iter_mut().zip(self.features.row(i)) {
            *o = s * x;
        }
    }

    pub fn local_gradient(&self, i: usize, w: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim()];
        self.local_gradient_into(i, w, &mut g);
        g
    }

    /// `F(w) = sum_i (x_i^T w - y_i)^2`, summed node by node.
    pub fn global_value(&self, w: &[f64]) -> f64 {
        (0..self.nodes()).map(|i| self.local_value(i, w)).sum()
    }

    /// `F(w)` through the Gram expansion `w^T X^T X w - 2 w^T X^T y + y^T y`.
    /// Costs `O(d^2)` instead of `O(n d)`.
    pub fn global_value_gram(&self, w: ArrayView1<'_, f64>) -> f64 {
        let quad: f64 = self
            .gram
            .rows()
            .into_iter()
            .zip(w.iter())
            .map(|(row, wa)| wa * row.dot(&w))
            .sum();
        (quad - 2.0 * w.dot(&self.xty) + self.yty).max(0.0)
    }

    pub fn global_gradient(&self, w: &[f64]) -> Vec<f64> {
        let w = ArrayView1::from(w);
        (2.0 * (self.gram.dot(&w) - &self.xty)).to_vec()
    }

    /// Exact smoothness constant of `F`: `2 lambda_max(X^T X)`.
    pub fn smoothness(&self) -> f64 {
        let d = self.dim();
        let m = DMatrix::from_fn(d, d, |i, j| self.gram[[i, j]]);
        let eig = SymmetricEigen::new(m);
        2.0 * eig.eigenvalues.iter().copied().fold(0.0, f64::max)
    }

    /// `C_i = 2 ||x_i|| max_{w in box} |x_i^T w - y_i|`.
    ///
    /// The residual is affine in `w`, so its extremes sit at corners chosen
    /// coordinate-wise by the sign of `x_i`.
    pub fn lipschitz_bound(&self, i: usize, domain: &BoxDomain) -> f64 {
        let x = self.features.row(i);
        let (mut hi, mut lo) = (0.0, 0.0);
        for ((&xc, &a), &b) in x.iter().zip(domain.lower()).zip(domain.upper()) {
            hi += (xc * a).max(xc * b);
            lo += (xc * a).min(xc * b);
        }
        let y = self.targets[i];
        let max_abs_residual = (hi - y).abs().max((lo - y).abs());
        2.0 * x.dot(&x).sqrt() * max_abs_residual
    }

    pub fn lipschitz_constants(&self, domain: &BoxDomain) -> LipschitzConstants {
        let per_node: Vec<f64> = (0..self.nodes())
            .map(|i| self.lipschitz_bound(i, domain))
            .collect();
        let total = per_node.iter().sum();
        LipschitzConstants { per_node, total }
    }

    fn check_box(&self, domain: &BoxDomain) -> Result<(), ObjectiveError> {
        if domain.dim() != self.dim() {
            return Err(ObjectiveError::DimensionMismatch {
                expected: self.dim(),
                got: domain.dim(),
            });
        }
        Ok(())
    }

    fn fixed_point_residual(&self, w: &[f64], eta: f64, domain: &BoxDomain) -> f64 {
        let g = self.global_gradient(w);
        w.iter()
            .zip(&g)
            .zip(domain.lower().iter().zip(domain.upper()))
            .map(|((&wc, &gc), (&a, &b))| (wc - (wc - eta * gc).clamp(a, b)).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// `f*` and a minimiser, via accelerated projected gradient with
    /// gradient-based restarts. Stops when the projected-gradient fixed-point
    /// residual `||w - clamp(w - grad F(w) / L)||` drops to `tol`.
    pub fn optimal_value(&self, domain: &BoxDomain, tol: f64) -> Result<Optimum, ObjectiveError> {
        self.check_box(domain)?;
        if !(tol > 0.0) {
            return Err(ObjectiveError::InvalidParameter(format!(
                "tol must be positive, got {tol}"
            )));
        }
        let l = self.smoothness();
        let mut w = domain.clamp(&vec![0.0; self.dim()]);
        if l == 0.0 {
            return Ok(self.finish(w, 0, 0.0));
        }
        let eta = 1.0 / l;
        let mut y = w.clone();
        let mut momentum = 1.0_f64;
        for it in 0..OPTIMUM_MAX_ITER {
            let res = self.fixed_point_residual(&w, eta, domain);
            if res <= tol {
                return Ok(self.finish(w, it, res));
            }
            let g = self.global_gradient(&y);
            let mut next: Vec<f64> = y.iter().zip(&g).map(|(yc, gc)| yc - eta * gc).collect();
            domain.clamp_in_place(&mut next);
            // Restart when the step direction opposes the previous progress.
            let restart = y
                .iter()
                .zip(&next)
                .zip(&w)
                .map(|((yc, nc), wc)| (yc - nc) * (nc - wc))
                .sum::<f64>()
                > 0.0;
            let m_next = if restart {
                1.0
            } else {
                0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt())
            };
            let beta = if restart {
                0.0
            } else {
                (momentum - 1.0) / m_next
            };
            y = next
                .iter()
                .zip(&w)
                .map(|(nc, wc)| nc + beta * (nc - wc))
                .collect();
            domain.clamp_in_place(&mut y);
            w = next;
            momentum = m_next;
        }
        Err(ObjectiveError::MaxIterations {
            iterations: OPTIMUM_MAX_ITER,
            residual: self.fixed_point_residual(&w, eta, domain),
        })
    }

    /// Plain projected gradient with step `1 / L`. Slower than
    /// [`Self::optimal_value`], kept as an independent cross-check.
    pub fn optimal_value_projected_gradient(
        &self,
        domain: &BoxDomain,
        tol: f64,
    ) -> Result<Optimum, ObjectiveError> {
        self.check_box(domain)?;
        if !(tol > 0.0) {
            return Err(ObjectiveError::InvalidParameter(format!(
                "tol must be positive, got {tol}"
            )));
        }
        let l = self.smoothness();
        let mut w = domain.clamp(&vec![0.0; self.dim()]);
        if l == 0.0 {
            return Ok(self.finish(w, 0, 0.0));
        }
        let eta = 1.0 / l;
        for it in 0..OPTIMUM_MAX_ITER {
            let g = self.global_gradient(&w);
            let mut next: Vec<f64> = w.iter().zip(&g).map(|(wc, gc)| wc - eta * gc).collect();
            domain.clamp_in_place(&mut next);
            let res = w
                .iter()
                .zip(&next)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt();
            if res <= tol {
                return Ok(self.finish(w, it, res));
            }
            w = next;
        }
        Err(ObjectiveError::MaxIterations {
            iterations: OPTIMUM_MAX_ITER,
            residual: self.fixed_point_residual(&w, eta, domain),
        })
    }

    fn finish(&self, point: Vec<f64>, iterations: usize, residual: f64) -> Optimum {
        Optimum {
            value: self.global_value(&point),
            point,
            iterations,
            residual,
        }
    }

    pub fn to_dataset(&self) -> Dataset {
        Dataset {
            features: self
                .features
                .rows()
                .into_iter()
                .map(|r| r.to_vec())
                .collect(),
            targets: self.targets.to_vec(),
        }
    }
}

/// Serializable form of the per-node samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub features: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
}

impl Dataset {
    pub fn into_objective(self) -> Result<LeastSquaresObjective, ObjectiveError> {
        let n = self.features.len();
        let d = self.features.first().map_or(0, Vec::len);
        if let Some(bad) = self.features.iter().find(|r| r.len() != d) {
            return Err(ObjectiveError::DimensionMismatch {
                expected: d,
                got: bad.len(),
            });
        }
        let flat: Vec<f64> = self.features.into_iter().flatten().collect();
        let features =
            Array2::from_shape_vec((n, d), flat).map_err(|e| ObjectiveError::Io(e.to_string()))?;
        LeastSquaresObjective::new(features, Array1::from(self.targets))
    }

    /// One row per node: `x1..xd` then `y`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), ObjectiveError> {
        let io = |e: csv::Error| ObjectiveError::Io(e.to_string());
        let d = self.features.first().map_or(0, Vec::len);
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = (1..=d).map(|c| format!("x{c}")).collect();
        header.push("y".into());
        w.write_record(&header).map_err(io)?;
        for (row, y) in self.features.iter().zip(&self.targets) {
            let rec: Vec<String> = row
                .iter()
                .chain(std::iter::once(y))
                .map(|v| v.to_string())
                .collect();
            w.write_record(&rec).map_err(io)?;
        }
        w.flush().map_err(|e| ObjectiveError::Io(e.to_string()))
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self, ObjectiveError> {
        let mut r = csv::Reader::from_reader(reader);
        let mut features = Vec::new();
        let mut targets = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(|e| ObjectiveError::Io(e.to_string()))?;
            let vals = rec
                .iter()
                .map(|s| s.trim().parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| ObjectiveError::Io(e.to_string()))?;
            let (y, x) = vals.split_last().ok_or(ObjectiveError::Empty)?;
            features.push(x.to_vec());
            targets.push(*y);
        }
        Ok(Self { features, targets })
    }
}
