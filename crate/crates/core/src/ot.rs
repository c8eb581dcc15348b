//! Exact discrete optimal transport for small instances.
//!
//! [`solve_ot`] runs the transportation simplex (MODI potentials on a
//! spanning-tree basis, Bland's rule for the entering and leaving cells).
//! [`relaxed_plan`] solves the problem with only the source marginal fixed,
//! which sends every source row to its cheapest column.

use crate::error::{Error, Result};

const MARGINAL_TOL: f64 = 1e-9;
const REDUCED_COST_TOL: f64 = 1e-12;

/// Nonnegative `n × m` cost table, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    n: usize,
    m: usize,
    entries: Vec<f64>,
}

impl CostMatrix {
    pub fn new(n: usize, m: usize, entries: Vec<f64>) -> Result<Self> {
        if n == 0 || m == 0 {
            return Err(Error::InvalidArgument(
                "cost matrix must be non-empty".into(),
            ));
        }
        if entries.len() != n * m {
            return Err(Error::DimensionMismatch {
                expected: n * m,
                got: entries.len(),
            });
        }
        if entries.iter().any(|c| !c.is_finite() || *c < 0.0) {
            return Err(Error::InvalidArgument(
                "costs must be finite and nonnegative".into(),
            ));
        }
        Ok(Self { n, m, entries })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let m = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != m) {
            return Err(Error::InvalidArgument("ragged cost matrix".into()));
        }
        Self::new(rows.len(), m, rows.concat())
    }

    /// Builds `c[i][j] = f(i, j)`.
    pub fn from_fn(
        n: usize,
        m: usize,
        mut f: impl FnMut(usize, usize) -> Result<f64>,
    ) -> Result<Self> {
        let mut entries = Vec::with_capacity(n * m);
        for i in 0..n {
            for j in 0..m {
                entries.push(f(i, j)?);
            }
        }
        Self::new(n, m, entries)
    }

    pub fn rows(&self) -> usize {
        self.n
    }

    pub fn cols(&self) -> usize {
        self.m
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.m + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.m..(i + 1) * self.m]
    }
}

/// A coupling `π` (row-major) and its cost `Σ π_ij c_ij`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    n: usize,
    m: usize,
    matrix: Vec<f64>,
    pub objective: f64,
}

impl TransportPlan {
    pub fn rows(&self) -> usize {
        self.n
    }

    pub fn cols(&self) -> usize {
        self.m
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.matrix[i * self.m + j]
    }

    pub fn matrix(&self) -> &[f64] {
        &self.matrix
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.matrix
            .chunks_exact(self.m)
            .map(|r| r.iter().sum())
            .collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.m];
        for r in self.matrix.chunks_exact(self.m) {
            for (a, v) in s.iter_mut().zip(r) {
                *a += v;
            }
        }
        s
    }
}

fn check_simplex(w: &[f64], what: &str) -> Result<f64> {
    if let Some(&x) = w.iter().find(|x| !x.is_finite() || **x < 0.0) {
        return Err(Error::InvalidArgument(format!(
            "{what} marginal has invalid entry {x}"
        )));
    }
    let total: f64 = w.iter().sum();
    if (total - 1.0).abs() > MARGINAL_TOL {
        return Err(Error::WeightSum(total));
    }
    Ok(total)
}

/// `π_iγ = w_i` at the cheapest column of row `i` (smallest index on ties).
pub fn relaxed_plan(cost: &CostMatrix, w: &[f64]) -> Result<TransportPlan> {
    if w.len() != cost.n {
        return Err(Error::DimensionMismatch {
            expected: cost.n,
            got: w.len(),
        });
    }
    check_simplex(w, "source")?;
    let mut matrix = vec![0.0; cost.n * cost.m];
    let mut objective = 0.0;
    for (i, &wi) in w.iter().enumerate() {
        let row = cost.row(i);
        let j = argmin_first(row);
        matrix[i * cost.m + j] = wi;
        objective += wi * row[j];
    }
    Ok(TransportPlan {
        n: cost.n,
        m: cost.m,
        matrix,
        objective,
    })
}

pub(crate) fn argmin_first(values: &[f64]) -> usize {
    let mut best = 0;
    for (j, &v) in values.iter().enumerate().skip(1) {
        if v < values[best] {
            best = j;
        }
    }
    best
}

/// Exact minimizer of `Σ π_ij c_ij` over couplings with marginals `w`, `v`.
pub fn solve_ot(cost: &CostMatrix, w: &[f64], v: &[f64]) -> Result<TransportPlan> {
    if w.len() != cost.n {
        return Err(Error::DimensionMismatch {
            expected: cost.n,
            got: w.len(),
        });
    }
    if v.len() != cost.m {
        return Err(Error::DimensionMismatch {
            expected: cost.m,
            got: v.len(),
        });
    }
    let w_total = check_simplex(w, "source")?;
    let v_total = check_simplex(v, "target")?;

    // Zero-mass rows and columns carry no flow; solve on the support only.
    let rows: Vec<usize> = (0..cost.n).filter(|&i| w[i] > 0.0).collect();
    let cols: Vec<usize> = (0..cost.m).filter(|&j| v[j] > 0.0).collect();
    let supply: Vec<f64> = rows.iter().map(|&i| w[i]).collect();
    // Match the totals exactly so the basis closes.
    let demand: Vec<f64> = cols.iter().map(|&j| v[j] * w_total / v_total).collect();
    let sub_cost: Vec<f64> = rows
        .iter()
        .flat_map(|&i| cols.iter().map(move |&j| (i, j)))
        .map(|(i, j)| cost.get(i, j))
        .collect();

    let flow = TransportSimplex::new(&supply, &demand, &sub_cost).solve()?;

    let mut matrix = vec![0.0; cost.n * cost.m];
    let mut objective = 0.0;
    for (a, &i) in rows.iter().enumerate() {
        for (b, &j) in cols.iter().enumerate() {
            let f = flow[a * cols.len() + b];
            matrix[i * cost.m + j] = f;
            objective += f * cost.get(i, j);
        }
    }
    Ok(TransportPlan {
        n: cost.n,
        m: cost.m,
        matrix,
        objective,
    })
}

/// Transportation simplex on a dense `n × m` instance with a basis of exactly
/// `n + m − 1` cells forming a spanning tree of the bipartite row/column graph.
struct TransportSimplex<'a> {
    n: usize,
    m: usize,
    cost: &'a [f64],
    flow: Vec<f64>,
    basic: Vec<bool>,
}

impl<'a> TransportSimplex<'a> {
    /// North-west corner start: advances exactly one of row or column per
    /// step, so the staircase of visited cells is a spanning tree even when
    /// allocations are degenerate.
    fn new(supply: &[f64], demand: &[f64], cost: &'a [f64]) -> Self {
        let (n, m) = (supply.len(), demand.len());
        let mut flow = vec![0.0; n * m];
        let mut basic = vec![false; n * m];
        let mut s = supply.to_vec();
        let mut d = demand.to_vec();
        let (mut i, mut j) = (0, 0);
        loop {
            let x = s[i].min(d[j]).max(0.0);
            flow[i * m + j] = x;
            basic[i * m + j] = true;
            s[i] -= x;
            d[j] -= x;
            if i == n - 1 && j == m - 1 {
                // Absorb rounding residue so marginals close.
                flow[i * m + j] += s[i].max(d[j]).max(0.0);
                break;
            }
            if j == m - 1 || (i < n - 1 && s[i] <= d[j]) {
                i += 1;
            } else {
                j += 1;
            }
        }
        Self {
            n,
            m,
            cost,
            flow,
            basic,
        }
    }

    /// Row and column potentials with `u_i + v_j = c_ij` on basic cells.
    fn potentials(&self) -> (Vec<f64>, Vec<f64>) {
        let (n, m) = (self.n, self.m);
        let mut u = vec![f64::NAN; n];
        let mut v = vec![f64::NAN; m];
        u[0] = 0.0;
        let mut stack = vec![(true, 0usize)];
        while let Some((is_row, idx)) = stack.pop() {
            if is_row {
                for j in 0..m {
                    if self.basic[idx * m + j] && v[j].is_nan() {
                        v[j] = self.cost[idx * m + j] - u[idx];
                        stack.push((false, j));
                    }
                }
            } else {
                for i in 0..n {
                    if self.basic[i * m + idx] && u[i].is_nan() {
                        u[i] = self.cost[i * m + idx] - v[idx];
                        stack.push((true, i));
                    }
                }
            }
        }
        (u, v)
    }

    /// Tree path from row `r` to column `c` as a list of basic cells.
    fn tree_path(&self, r: usize, c: usize) -> Vec<usize> {
        let (n, m) = (self.n, self.m);
        // Nodes: rows 0..n, columns n..n+m. parent[node] = (prev node, cell).
        let mut parent: Vec<Option<(usize, usize)>> = vec![None; n + m];
        let mut seen = vec![false; n + m];
        seen[r] = true;
        let mut queue = std::collections::VecDeque::from([r]);
        while let Some(node) = queue.pop_front() {
            if node == n + c {
                break;
            }
            if node < n {
                for j in 0..m {
                    let cell = node * m + j;
                    if self.basic[cell] && !seen[n + j] {
                        seen[n + j] = true;
                        parent[n + j] = Some((node, cell));
                        queue.push_back(n + j);
                    }
                }
            } else {
                let j = node - n;
                for i in 0..n {
                    let cell = i * m + j;
                    if self.basic[cell] && !seen[i] {
                        seen[i] = true;
                        parent[i] = Some((node, cell));
                        queue.push_back(i);
                    }
                }
            }
        }
        let mut path = Vec::new();
        let mut node = n + c;
        while node != r {
            let (prev, cell) = parent[node].expect("basis is a spanning tree");
            path.push(cell);
            node = prev;
        }
        path
    }

    fn solve(mut self) -> Result<Vec<f64>> {
        let (n, m) = (self.n, self.m);
        let max_pivots = 50 * (n + m) * (n * m).max(1) + 1000;
        let scale = self.cost.iter().copied().fold(1.0, f64::max);
        for _ in 0..max_pivots {
            let (u, v) = self.potentials();
            // Bland: first improving nonbasic cell in index order.
            let entering = (0..n * m).find(|&cell| {
                !self.basic[cell]
                    && self.cost[cell] - u[cell / m] - v[cell % m] < -REDUCED_COST_TOL * scale
            });
            let Some(enter) = entering else {
                return Ok(self.flow);
            };
            // Path from the entering row to its column; cells alternate −, +, −, …
            // starting at the column end.
            let path = self.tree_path(enter / m, enter % m);
            let minus: Vec<usize> = path.iter().copied().step_by(2).collect();
            let plus: Vec<usize> = path.iter().copied().skip(1).step_by(2).collect();
            let theta = minus
                .iter()
                .map(|&c| self.flow[c])
                .fold(f64::INFINITY, f64::min);
            // Bland: smallest-index cell among the minimizers leaves.
            let leave = minus
                .iter()
                .copied()
                .filter(|&c| self.flow[c] == theta)
                .min()
                .expect("cycle has a minus cell");
            for &c in &minus {
                self.flow[c] -= theta;
            }
            for &c in &plus {
                self.flow[c] += theta;
            }
            self.flow[enter] += theta;
            self.flow[leave] = 0.0;
            self.basic[leave] = false;
            self.basic[enter] = true;
        }
        Err(Error::PivotLimit(max_pivots))
    }
}
