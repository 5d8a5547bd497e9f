//! Communication graphs and doubly stochastic mixing matrices.
//!
//! A [`Topology`] is an undirected, connected graph whose nodes carry planar
//! coordinates. [`lazy_metropolis`] turns it into a symmetric doubly
//! stochastic [`MixingMatrix`]; the matrix caches its second-largest singular
//! value, which governs how fast mixing contracts disagreement between nodes.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;
use std::sync::OnceLock;

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array2, ArrayView2, ArrayViewMut2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest matrix order handled by a dense symmetric eigendecomposition.
/// Larger matrices fall back to power iteration on the deflated Gram matrix.
pub const DENSE_EIGEN_MAX_N: usize = 512;

/// Default cap on regeneration attempts for [`generate_random_geometric`].
pub const DEFAULT_MAX_ATTEMPTS: usize = 1000;

/// Tolerance for row and column sums of a doubly stochastic matrix.
pub const STOCHASTIC_TOL: f64 = 1e-12;

const POWER_TOL: f64 = 1e-12;
const POWER_MAX_ITER: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GraphError {
    #[error("graph is not connected after {attempts} attempt(s)")]
    NotConnected { attempts: usize },
    #[error("self-loop on node {0}")]
    SelfLoop(usize),
    #[error("edge ({0}, {1}) references a node outside 0..{2}")]
    NodeOutOfRange(usize, usize, usize),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
}

/// Undirected connected graph with planar node coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    coords: Vec<[f64; 2]>,
    /// Sorted, deduplicated, every pair stored as `(i, j)` with `i < j`.
    edges: Vec<(usize, usize)>,
}

impl Topology {
    /// Builds a topology from explicit coordinates and edges.
    ///
    /// Edge orientation and duplicates are normalised away. Fails on
    /// self-loops, out-of-range indices, or a disconnected result.
    pub fn new(coords: Vec<[f64; 2]>, edges: &[(usize, usize)]) -> Result<Self, GraphError> {
        let n = coords.len();
        if n == 0 {
            return Err(GraphError::InvalidParameter(
                "a topology needs at least one node".into(),
            ));
        }
        let mut set = BTreeSet::new();
        for &(i, j) in edges {
            if i >= n || j >= n {
                return Err(GraphError::NodeOutOfRange(i, j, n));
            }
            if i == j {
                return Err(GraphError::SelfLoop(i));
            }
            set.insert((i.min(j), i.max(j)));
        }
        let topo = Self {
            coords,
            edges: set.into_iter().collect(),
        };
        if !topo.is_connected() {
            return Err(GraphError::NotConnected { attempts: 1 });
        }
        Ok(topo)
    }

    /// Cycle `0 - 1 - ... - (n-1) - 0`, nodes placed on a circle inside the unit square.
    pub fn ring(n: usize) -> Result<Self, GraphError> {
        let edges: Vec<_> = match n {
            0 | 1 => vec![],
            2 => vec![(0, 1)],
            _ => (0..n).map(|i| (i, (i + 1) % n)).collect(),
        };
        Self::new(circle_coords(n), &edges)
    }

    /// Path `0 - 1 - ... - (n-1)` along the horizontal midline.
    pub fn path(n: usize) -> Result<Self, GraphError> {
        let coords = (0..n)
            .map(|i| {
                [
                    if n > 1 {
                        i as f64 / (n - 1) as f64
                    } else {
                        0.5
                    },
                    0.5,
                ]
            })
            .collect();
        let edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        Self::new(coords, &edges)
    }

    pub fn complete(n: usize) -> Result<Self, GraphError> {
        let edges: Vec<_> = (0..n)
            .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
            .collect();
        Self::new(circle_coords(n), &edges)
    }

    pub fn n(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[[f64; 2]] {
        &self.coords
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.edges.binary_search(&(i.min(j), i.max(j))).is_ok()
    }

    pub fn neighbors(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n()];
        for &(i, j) in &self.edges {
            adj[i].push(j);
            adj[j].push(i);
        }
        adj
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.n()];
        for &(i, j) in &self.edges {
            deg[i] += 1;
            deg[j] += 1;
        }
        deg
    }

    pub fn is_connected(&self) -> bool {
        let adj = self.neighbors();
        reachable_count(self.n(), |i| adj[i].clone()) == self.n()
    }
}

fn circle_coords(n: usize) -> Vec<[f64; 2]> {
    (0..n)
        .map(|i| {
            let theta = 2.0 * std::f64::consts::PI * i as f64 / n.max(1) as f64;
            [0.5 + 0.4 * theta.cos(), 0.5 + 0.4 * theta.sin()]
        })
        .collect()
}

/// Number of nodes reachable from node 0.
fn reachable_count<F>(n: usize, mut next: F) -> usize
where
    F: FnMut(usize) -> Vec<usize>,
{
    if n == 0 {
        return 0;
    }
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([0]);
    seen[0] = true;
    let mut count = 1;
    while let Some(i) = queue.pop_front() {
        for j in next(i) {
            if !seen[j] {
                seen[j] = true;
                count += 1;
                queue.push_back(j);
            }
        }
    }
    count
}

/// Random geometric graph on the unit square.
///
/// Coordinates are uniform on `[0,1]^2`; two nodes are adjacent when their
/// distance is strictly less than `r`. Disconnected draws are discarded and
/// redrawn from the same seeded stream, up to `max_attempts` times.
pub fn generate_random_geometric(
    n: usize,
    r: f64,
    seed: u64,
    max_attempts: usize,
) -> Result<Topology, GraphError> {
    if n == 0 {
        return Err(GraphError::InvalidParameter("n must be at least 1".into()));
    }
    if !(r > 0.0) {
        return Err(GraphError::InvalidParameter(format!(
            "radius must be positive, got {r}"
        )));
    }
    if max_attempts == 0 {
        return Err(GraphError::InvalidParameter(
            "max_attempts must be at least 1".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..max_attempts {
        let coords: Vec<[f64; 2]> = (0..n)
            .map(|_| [rng.random::<f64>(), rng.random::<f64>()])
            .collect();
        let mut edges = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                let dx = coords[i][0] - coords[j][0];
                let dy = coords[i][1] - coords[j][1];
                if (dx * dx + dy * dy).sqrt() < r {
                    edges.push((i, j));
                }
            }
        }
        match Topology::new(coords, &edges) {
            Ok(t) => return Ok(t),
            Err(GraphError::NotConnected { .. }) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(GraphError::NotConnected {
        attempts: max_attempts,
    })
}

/// Square nonnegative weight matrix used for neighbour averaging.
///
/// Holds the dense entries plus a row-compressed copy of the nonzeros for
/// fast mixing. The second-largest singular value is computed on first use
/// and cached.
#[derive(Debug)]
pub struct MixingMatrix {
    entries: Array2<f64>,
    rows: Vec<Vec<(usize, f64)>>,
    sigma2: OnceLock<f64>,
}

impl Clone for MixingMatrix {
    fn clone(&self) -> Self {
        let sigma2 = OnceLock::new();
        if let Some(&s) = self.sigma2.get() {
            let _ = sigma2.set(s);
        }
        Self {
            entries: self.entries.clone(),
            rows: self.rows.clone(),
            sigma2,
        }
    }
}

impl PartialEq for MixingMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.entries == other.entries
    }
}

impl MixingMatrix {
    /// Wraps a square matrix. No stochasticity checks happen here; use
    /// [`validate_mixing`] for those.
    pub fn from_entries(entries: Array2<f64>) -> Result<Self, GraphError> {
        let (r, c) = entries.dim();
        if r != c || r == 0 {
            return Err(GraphError::InvalidParameter(format!(
                "mixing matrix must be square and non-empty, got {r}x{c}"
            )));
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(GraphError::InvalidParameter(
                "mixing matrix has non-finite entries".into(),
            ));
        }
        let rows = entries
            .rows()
            .into_iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .filter(|(_, &a)| a != 0.0)
                    .map(|(j, &a)| (j, a))
                    .collect()
            })
            .collect();
        Ok(Self {
            entries,
            rows,
            sigma2: OnceLock::new(),
        })
    }

    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &Array2<f64> {
        &self.entries
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[[i, j]]
    }

    pub fn is_symmetric(&self) -> bool {
        self.entries == self.entries.t()
    }

    /// Second-largest singular value, cached after the first successful call.
    pub fn sigma2(&self) -> Result<f64, GraphError> {
        if let Some(&s) = self.sigma2.get() {
            return Ok(s);
        }
        let s = compute_sigma2(&self.entries)?;
        Ok(*self.sigma2.get_or_init(|| s))
    }

    /// `out = A * x`, where rows of `x` are node states.
    pub fn mix_into(&self, x: ArrayView2<'_, f64>, mut out: ArrayViewMut2<'_, f64>) {
        debug_assert_eq!(x.nrows(), self.n());
        debug_assert_eq!(x.dim(), out.dim());
        for (i, row) in self.rows.iter().enumerate() {
            let mut dst = out.row_mut(i);
            dst.fill(0.0);
            for &(j, a) in row {
                dst.scaled_add(a, &x.row(j));
            }
        }
    }

    /// `out_i = a_ii current_i + sum_{j != i} a_ij lagged_j`.
    pub fn mix_split_into(
        &self,
        current: ArrayView2<'_, f64>,
        lagged: ArrayView2<'_, f64>,
        mut out: ArrayViewMut2<'_, f64>,
    ) {
        debug_assert_eq!(current.dim(), lagged.dim());
        debug_assert_eq!(current.dim(), out.dim());
        for (i, row) in self.rows.iter().enumerate() {
            let mut dst = out.row_mut(i);
            dst.fill(0.0);
            for &(j, a) in row {
                let src = if j == i {
                    current.row(j)
                } else {
                    lagged.row(j)
                };
                dst.scaled_add(a, &src);
            }
        }
    }

    pub fn mix(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut out = Array2::zeros(x.dim());
        self.mix_into(x, out.view_mut());
        out
    }
}

/// Lazy Metropolis weights: `1 / (2 max(deg_i, deg_j))` on edges, zero off
/// the edge set, and the remaining mass on the diagonal.
pub fn lazy_metropolis(topology: &Topology) -> MixingMatrix {
    let n = topology.n();
    let deg = topology.degrees();
    let mut a = Array2::<f64>::zeros((n, n));
    for &(i, j) in topology.edges() {
        let w = 1.0 / (2.0 * deg[i].max(deg[j]) as f64);
        a[[i, j]] = w;
        a[[j, i]] = w;
    }
    for i in 0..n {
        let off: f64 = (0..n).filter(|&j| j != i).map(|j| a[[i, j]]).sum();
        a[[i, i]] = 1.0 - off;
    }
    MixingMatrix::from_entries(a).expect("lazy Metropolis weights are finite and square")
}

pub fn second_largest_singular_value(m: &MixingMatrix) -> Result<f64, GraphError> {
    m.sigma2()
}

fn compute_sigma2(a: &Array2<f64>) -> Result<f64, GraphError> {
    let n = a.nrows();
    if n == 1 {
        return Ok(0.0);
    }
    if n > DENSE_EIGEN_MAX_N {
        return sigma2_power_iteration(a, POWER_TOL, POWER_MAX_ITER);
    }
    let symmetric = a == a.t();
    let dense = if symmetric {
        DMatrix::from_fn(n, n, |i, j| a[[i, j]])
    } else {
        // Gram matrix A^T A; its eigenvalues are the squared singular values.
        DMatrix::from_fn(n, n, |i, j| (0..n).map(|k| a[[k, i]] * a[[k, j]]).sum())
    };
    let eig = SymmetricEigen::try_new(dense, 1e-15, 10_000).ok_or_else(|| {
        GraphError::NumericalFailure("symmetric eigensolver did not converge".into())
    })?;
    let mut vals: Vec<f64> = if symmetric {
        eig.eigenvalues.iter().map(|v| v.abs()).collect()
    } else {
        eig.eigenvalues.iter().map(|v| v.max(0.0).sqrt()).collect()
    };
    vals.sort_by(|x, y| y.total_cmp(x));
    Ok(vals[1])
}

/// Power iteration on `A^T A - (1/n) 1 1^T`.
///
/// For a doubly stochastic `A` the all-ones vector is a singular vector with
/// singular value one, so the deflated operator has top eigenvalue `sigma_2^2`.
pub fn sigma2_power_iteration(
    a: &Array2<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<f64, GraphError> {
    let n = a.nrows();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut v: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
    center_and_normalise(&mut v);
    let mut lambda = 0.0;
    let mut av = vec![0.0; n];
    let mut w = vec![0.0; n];
    for _ in 0..max_iter {
        for i in 0..n {
            av[i] = (0..n).map(|j| a[[i, j]] * v[j]).sum();
        }
        for j in 0..n {
            w[j] = (0..n).map(|i| a[[i, j]] * av[i]).sum();
        }
        let mean = w.iter().sum::<f64>() / n as f64;
        w.iter_mut().for_each(|x| *x -= mean);
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Ok(0.0);
        }
        let next = norm;
        v.iter_mut().zip(&w).for_each(|(vi, wi)| *vi = wi / norm);
        if (next - lambda).abs() <= tol * next.max(f64::MIN_POSITIVE) {
            return Ok(next.sqrt());
        }
        lambda = next;
    }
    Err(GraphError::NumericalFailure(format!(
        "power iteration did not converge in {max_iter} iterations"
    )))
}

fn center_and_normalise(v: &mut [f64]) {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= mean);
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
}

/// One clause of the mixing-matrix requirements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Clause {
    Dimensions,
    RowStochastic,
    ColumnStochastic,
    Nonnegative,
    SparsityPattern,
    Aperiodic,
    Irreducible,
}

impl fmt::Display for Clause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Clause::Dimensions => "dimensions",
            Clause::RowStochastic => "row_stochastic",
            Clause::ColumnStochastic => "column_stochastic",
            Clause::Nonnegative => "nonnegative",
            Clause::SparsityPattern => "sparsity_pattern",
            Clause::Aperiodic => "aperiodic",
            Clause::Irreducible => "irreducible",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClauseCheck {
    pub clause: Clause,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub checks: Vec<ClauseCheck>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn clause(&self, clause: Clause) -> Option<&ClauseCheck> {
        self.checks.iter().find(|c| c.clause == clause)
    }

    pub fn failures(&self) -> impl Iterator<Item = &ClauseCheck> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

/// Checks every requirement on a consensus weight matrix against `topology`.
pub fn validate_mixing(m: &MixingMatrix, topology: &Topology) -> ValidationReport {
    let n = topology.n();
    let a = m.entries();
    let mut checks = Vec::with_capacity(7);
    let mut push = |clause, passed, detail: String| {
        checks.push(ClauseCheck {
            clause,
            passed,
            detail,
        })
    };

    if a.nrows() != n {
        let detail = format!(
            "matrix is {}x{}, topology has {n} nodes",
            a.nrows(),
            a.ncols()
        );
        for clause in [
            Clause::Dimensions,
            Clause::RowStochastic,
            Clause::ColumnStochastic,
            Clause::Nonnegative,
            Clause::SparsityPattern,
            Clause::Aperiodic,
            Clause::Irreducible,
        ] {
            push(clause, false, detail.clone());
        }
        return ValidationReport { checks };
    }
    push(Clause::Dimensions, true, format!("{n}x{n}"));

    let row_err = a
        .rows()
        .into_iter()
        .map(|r| (r.sum() - 1.0).abs())
        .fold(0.0, f64::max);
    push(
        Clause::RowStochastic,
        row_err <= STOCHASTIC_TOL,
        format!("max |row sum - 1| = {row_err:e}"),
    );
    let col_err = a
        .columns()
        .into_iter()
        .map(|c| (c.sum() - 1.0).abs())
        .fold(0.0, f64::max);
    push(
        Clause::ColumnStochastic,
        col_err <= STOCHASTIC_TOL,
        format!("max |column sum - 1| = {col_err:e}"),
    );

    let min_entry = a.iter().copied().fold(f64::INFINITY, f64::min);
    push(
        Clause::Nonnegative,
        min_entry >= 0.0,
        format!("min entry = {min_entry:e}"),
    );

    let mut mismatch = None;
    'outer: for i in 0..n {
        for j in 0..n {
            if i != j && (a[[i, j]] > 0.0) != topology.has_edge(i, j) {
                mismatch = Some((i, j));
                break 'outer;
            }
        }
    }
    push(
        Clause::SparsityPattern,
        mismatch.is_none(),
        match mismatch {
            None => "off-diagonal support equals the edge set".into(),
            Some((i, j)) => format!("entry ({i}, {j}) disagrees with the edge set"),
        },
    );

    let positive_diag = (0..n).filter(|&i| a[[i, i]] > 0.0).count();
    push(
        Clause::Aperiodic,
        positive_diag > 0,
        format!("{positive_diag} positive diagonal entries"),
    );

    // Strong connectivity of the support digraph (forward and reverse reachability from 0).
    let forward = reachable_count(n, |i| {
        (0..n).filter(|&j| j != i && a[[i, j]] > 0.0).collect()
    });
    let backward = reachable_count(n, |i| {
        (0..n).filter(|&j| j != i && a[[j, i]] > 0.0).collect()
    });
    push(
        Clause::Irreducible,
        forward == n && backward == n,
        format!("{forward}/{n} reachable forward, {backward}/{n} backward"),
    );

    ValidationReport { checks }
}

/// JSON form of a topology together with its mixing matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphDocument {
    pub n: usize,
    pub coords: Vec<[f64; 2]>,
    pub edges: Vec<[usize; 2]>,
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    pub sigma2: f64,
}

impl GraphDocument {
    pub fn new(topology: &Topology, mixing: &MixingMatrix) -> Result<Self, GraphError> {
        Ok(Self {
            n: topology.n(),
            coords: topology.coords().to_vec(),
            edges: topology.edges().iter().map(|&(i, j)| [i, j]).collect(),
            a: mixing
                .entries()
                .rows()
                .into_iter()
                .map(|r| r.to_vec())
                .collect(),
            sigma2: mixing.sigma2()?,
        })
    }

    pub fn into_parts(self) -> Result<(Topology, MixingMatrix), GraphError> {
        let edges: Vec<_> = self.edges.iter().map(|&[i, j]| (i, j)).collect();
        let topology = Topology::new(self.coords, &edges)?;
        let n = self.a.len();
        if self.a.iter().any(|r| r.len() != n) {
            return Err(GraphError::InvalidParameter(
                "matrix rows have unequal length".into(),
            ));
        }
        let flat: Vec<f64> = self.a.into_iter().flatten().collect();
        let entries = Array2::from_shape_vec((n, n), flat)
            .map_err(|e| GraphError::InvalidParameter(e.to_string()))?;
        let mixing = MixingMatrix::from_entries(entries)?;
        let _ = mixing.sigma2.set(self.sigma2);
        Ok((topology, mixing))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::{array, Array1};

    #[test]
    fn two_nodes_in_unit_square_always_adjacent_at_r_1_5() {
        for seed in 0..20 {
            let t = generate_random_geometric(2, 1.5, seed, 1).unwrap();
            assert_eq!(t.edges(), &[(0, 1)]);
        }
    }

    #[test]
    fn default_radius_gives_connected_graph() {
        let t = generate_random_geometric(30, 0.6, 42, DEFAULT_MAX_ATTEMPTS).unwrap();
        assert_eq!(t.n(), 30);
        assert!(t.is_connected());
        for &(i, j) in t.edges() {
            let [xi, yi] = t.coords()[i];
            let [xj, yj] = t.coords()[j];
            assert!(((xi - xj).powi(2) + (yi - yj).powi(2)).sqrt() < 0.6);
        }
        for c in t.coords() {
            assert!((0.0..1.0).contains(&c[0]) && (0.0..1.0).contains(&c[1]));
        }
    }

    #[test]
    fn vanishing_radius_is_not_connected() {
        let err = generate_random_geometric(3, 1e-9, 7, 10).unwrap_err();
        assert_eq!(err, GraphError::NotConnected { attempts: 10 });
    }

    #[test]
    fn generator_is_deterministic() {
        let a = generate_random_geometric(25, 0.5, 99, 100).unwrap();
        let b = generate_random_geometric(25, 0.5, 99, 100).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn invalid_generator_parameters() {
        assert!(matches!(
            generate_random_geometric(0, 0.5, 0, 1),
            Err(GraphError::InvalidParameter(_))
        ));
        assert!(matches!(
            generate_random_geometric(3, 0.0, 0, 1),
            Err(GraphError::InvalidParameter(_))
        ));
        assert!(matches!(
            generate_random_geometric(3, 0.5, 0, 0),
            Err(GraphError::InvalidParameter(_))
        ));
    }

    #[test]
    fn topology_rejects_self_loops_and_disconnection() {
        let c = circle_coords(3);
        assert_eq!(
            Topology::new(c.clone(), &[(0, 0)]),
            Err(GraphError::SelfLoop(0))
        );
        assert_eq!(
            Topology::new(c.clone(), &[(0, 1)]),
            Err(GraphError::NotConnected { attempts: 1 })
        );
        assert_eq!(
            Topology::new(c, &[(0, 5)]),
            Err(GraphError::NodeOutOfRange(0, 5, 3))
        );
    }

    #[test]
    fn metropolis_on_path_of_three() {
        let a = lazy_metropolis(&Topology::path(3).unwrap());
        let expected = array![[0.75, 0.25, 0.0], [0.25, 0.5, 0.25], [0.0, 0.25, 0.75]];
        assert_eq!(a.entries(), &expected);
    }

    #[test]
    fn metropolis_on_single_edge() {
        let a = lazy_metropolis(&Topology::path(2).unwrap());
        assert_eq!(a.entries(), &array![[0.5, 0.5], [0.5, 0.5]]);
        assert_abs_diff_eq!(a.sigma2().unwrap(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn metropolis_on_triangle() {
        let a = lazy_metropolis(&Topology::complete(3).unwrap());
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(a.get(i, j), if i == j { 0.5 } else { 0.25 });
            }
        }
    }

    #[test]
    fn sigma2_of_path_three() {
        let a = lazy_metropolis(&Topology::path(3).unwrap());
        assert_abs_diff_eq!(a.sigma2().unwrap(), 0.75, epsilon = 1e-12);
    }

    #[test]
    fn single_node_mixing() {
        let t = Topology::new(vec![[0.5, 0.5]], &[]).unwrap();
        let a = lazy_metropolis(&t);
        assert_eq!(a.entries(), &array![[1.0]]);
        assert!(validate_mixing(&a, &t).passed());
        assert_eq!(a.sigma2().unwrap(), 0.0);
    }

    #[test]
    fn nonsymmetric_sigma2_uses_gram_matrix() {
        // Doubly stochastic but not symmetric: a cyclic shift mixed with identity.
        let a = array![[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]];
        let m = MixingMatrix::from_entries(a).unwrap();
        // Singular values of (I + P)/2 with P the 3-cycle: |1 + w|/2 for cube roots w.
        assert_abs_diff_eq!(m.sigma2().unwrap(), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn power_iteration_matches_dense_solver() {
        let t = generate_random_geometric(40, 0.35, 3, DEFAULT_MAX_ATTEMPTS).unwrap();
        let a = lazy_metropolis(&t);
        let dense = a.sigma2().unwrap();
        let power = sigma2_power_iteration(a.entries(), 1e-14, 1_000_000).unwrap();
        assert_abs_diff_eq!(dense, power, epsilon = 1e-6);
    }

    #[test]
    fn validation_passes_for_metropolis() {
        let t = generate_random_geometric(20, 0.6, 1, DEFAULT_MAX_ATTEMPTS).unwrap();
        let report = validate_mixing(&lazy_metropolis(&t), &t);
        assert!(report.passed(), "{report:?}");
    }

    #[test]
    fn identity_fails_irreducibility() {
        let t = Topology::complete(3).unwrap();
        let m = MixingMatrix::from_entries(Array2::eye(3)).unwrap();
        let report = validate_mixing(&m, &t);
        assert!(!report.clause(Clause::Irreducible).unwrap().passed);
        assert!(report.clause(Clause::RowStochastic).unwrap().passed);
        assert!(report.clause(Clause::Aperiodic).unwrap().passed);
    }

    #[test]
    fn perturbed_row_fails_stochasticity() {
        let t = Topology::path(3).unwrap();
        let mut a = lazy_metropolis(&t).entries().clone();
        a[[0, 0]] += 1e-6;
        let report = validate_mixing(&MixingMatrix::from_entries(a).unwrap(), &t);
        assert!(!report.clause(Clause::RowStochastic).unwrap().passed);
        assert!(!report.passed());
    }

    #[test]
    fn dimension_mismatch_reports_instead_of_panicking() {
        let t = Topology::path(4).unwrap();
        let m = lazy_metropolis(&Topology::path(3).unwrap());
        let report = validate_mixing(&m, &t);
        assert!(!report.passed());
        assert_eq!(report.failures().count(), 7);
    }

    #[test]
    fn mixing_preserves_column_means() {
        let t = Topology::ring(6).unwrap();
        let a = lazy_metropolis(&t);
        let x = Array2::from_shape_fn((6, 3), |(i, j)| (i * 3 + j) as f64 * 0.37 - 1.0);
        let y = a.mix(x.view());
        let mx: Array1<f64> = x.mean_axis(ndarray::Axis(0)).unwrap();
        let my: Array1<f64> = y.mean_axis(ndarray::Axis(0)).unwrap();
        for (p, q) in mx.iter().zip(my.iter()) {
            assert_abs_diff_eq!(p, q, epsilon = 1e-14);
        }
    }

    /// Cyclic Jacobi rotations; an eigen solver independent of the one under test.
    fn jacobi_eigenvalues(mut m: Array2<f64>) -> Vec<f64> {
        let n = m.nrows();
        for _ in 0..100 {
            let off: f64 = (0..n)
                .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
                .map(|(i, j)| m[[i, j]].powi(2))
                .sum();
            if off < 1e-26 {
                break;
            }
            for p in 0..n {
                for q in p + 1..n {
                    if m[[p, q]].abs() < 1e-300 {
                        continue;
                    }
                    let theta = (m[[q, q]] - m[[p, p]]) / (2.0 * m[[p, q]]);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let (mkp, mkq) = (m[[k, p]], m[[k, q]]);
                        m[[k, p]] = c * mkp - s * mkq;
                        m[[k, q]] = s * mkp + c * mkq;
                    }
                    for k in 0..n {
                        let (mpk, mqk) = (m[[p, k]], m[[q, k]]);
                        m[[p, k]] = c * mpk - s * mqk;
                        m[[q, k]] = s * mpk + c * mqk;
                    }
                }
            }
        }
        (0..n).map(|i| m[[i, i]]).collect()
    }

    fn second_abs(mut ev: Vec<f64>) -> f64 {
        ev.iter_mut().for_each(|v| *v = v.abs());
        ev.sort_by(|a, b| b.total_cmp(a));
        ev[1]
    }

    #[test]
    fn ring_of_four_matches_jacobi_oracle() {
        let a = lazy_metropolis(&Topology::ring(4).unwrap());
        let oracle = second_abs(jacobi_eigenvalues(a.entries().clone()));
        assert_abs_diff_eq!(oracle, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(a.sigma2().unwrap(), oracle, epsilon = 1e-10);
    }

    #[test]
    fn random_graphs_match_jacobi_oracle() {
        for seed in 0..5 {
            let a = lazy_metropolis(&generate_random_geometric(15, 0.5, seed, 1000).unwrap());
            let oracle = second_abs(jacobi_eigenvalues(a.entries().clone()));
            assert_abs_diff_eq!(a.sigma2().unwrap(), oracle, epsilon = 1e-10);
        }
    }

    #[test]
    fn mixing_contracts_zero_mean_vectors_by_sigma2() {
        use rand::{Rng, SeedableRng};
        let a = lazy_metropolis(&generate_random_geometric(20, 0.5, 2, 1000).unwrap());
        let s2 = a.sigma2().unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        for _ in 0..100 {
            let mut x = Array2::from_shape_fn((20, 1), |_| rng.random::<f64>() - 0.5);
            let mean = x.mean().unwrap();
            x.mapv_inplace(|v| v - mean);
            let y = a.mix(x.view());
            let nx = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            let ny = y.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(ny <= s2 * nx + 1e-12, "{ny} > {s2} * {nx}");
        }
    }

    #[test]
    fn split_mixing_uses_current_diagonal() {
        let a = lazy_metropolis(&Topology::path(3).unwrap());
        let current = array![[1.0], [2.0], [3.0]];
        let lagged = array![[10.0], [20.0], [30.0]];
        let mut out = Array2::zeros((3, 1));
        a.mix_split_into(current.view(), lagged.view(), out.view_mut());
        for i in 0..3 {
            let expected: f64 = (0..3)
                .map(|j| {
                    a.get(i, j)
                        * if i == j {
                            current[[j, 0]]
                        } else {
                            lagged[[j, 0]]
                        }
                })
                .sum();
            assert_abs_diff_eq!(out[[i, 0]], expected, epsilon = 1e-15);
        }
        a.mix_split_into(current.view(), current.view(), out.view_mut());
        assert_eq!(out, a.mix(current.view()));
    }

    proptest::proptest! {
        #[test]
        fn metropolis_of_random_graph_is_valid(n in 2usize..25, seed in 0u64..500) {
            let t = generate_random_geometric(n, 0.7, seed, 10_000).unwrap();
            let a = lazy_metropolis(&t);
            let report = validate_mixing(&a, &t);
            proptest::prop_assert!(report.passed(), "{:?}", report.failures().collect::<Vec<_>>());
            let s2 = a.sigma2().unwrap();
            proptest::prop_assert!((0.0..1.0).contains(&s2));
            proptest::prop_assert!(a.is_symmetric());
        }
    }

    #[test]
    fn document_round_trip() {
        let t = generate_random_geometric(8, 0.6, 5, 100).unwrap();
        let a = lazy_metropolis(&t);
        let doc = GraphDocument::new(&t, &a).unwrap();
        let json = serde_json::to_string(&doc).unwrap();
        assert!(json.contains("\"A\""));
        let back: GraphDocument = serde_json::from_str(&json).unwrap();
        let (t2, a2) = back.into_parts().unwrap();
        assert_eq!(t, t2);
        assert_eq!(a, a2);
    }
}
