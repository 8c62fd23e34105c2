//! Samplers for the fixed-point law: population dynamics on a finite pool,
//! the weighted branching tree, and survival counts along the tree.

use rand::Rng as _;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::matrix::{pf_decompose, power_iteration, NonNegMatrix, POWER_MAX_ITER, POWER_TOL};
use crate::model::ModelSpec;
use crate::rng::{self, Rng};

/// Default cap on the number of tree nodes visited by one simulation.
pub const DEFAULT_NODE_BUDGET: usize = 10_000_000;

/// Relative zero threshold for `|G_uᵀ t|`.
pub const ZERO_TOL: f64 = 1e-12;

/// Node and element budget, overridable through `SMOOTHING_LAB_BUDGET`.
pub fn budget_from_env(default: usize) -> usize {
    std::env::var("SMOOTHING_LAB_BUDGET").ok().and_then(|v| v.trim().parse().ok()).unwrap_or(default)
}

/// `K` vectors in `R₊^d`, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct SamplePool {
    dim: usize,
    data: Vec<f64>,
    generation: usize,
}

impl SamplePool {
    pub fn new(dim: usize, data: Vec<f64>, generation: usize) -> Result<Self> {
        if dim == 0 || data.is_empty() || !data.len().is_multiple_of(dim) {
            return Err(Error::InvalidArgument(format!(
                "pool data of length {} does not hold whole samples of dimension {dim}",
                data.len()
            )));
        }
        if data.iter().any(|x| !(*x >= 0.0) || !x.is_finite()) {
            return Err(Error::NegativeInput);
        }
        Ok(Self { dim, data, generation })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::InvalidArgument("ragged pool rows".into()));
        }
        Self::new(dim, rows.concat(), 0)
    }

    /// `k` copies of `init`.
    pub fn constant(k: usize, init: &[f64]) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidArgument("pool size must be positive".into()));
        }
        Self::new(init.len(), init.repeat(k), 0)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn generation(&self) -> usize {
        self.generation
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn samples(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    /// L1 norms `|Z|`.
    pub fn norms(&self) -> Vec<f64> {
        self.samples().map(|z| z.iter().sum()).collect()
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for z in self.samples() {
            for (acc, x) in m.iter_mut().zip(z) {
                *acc += x;
            }
        }
        let k = self.len() as f64;
        m.iter_mut().for_each(|x| *x /= k);
        m
    }

    /// Componentwise Monte Carlo standard error of [`SamplePool::mean`].
    pub fn mean_stderr(&self) -> Vec<f64> {
        let mean = self.mean();
        let mut var = vec![0.0; self.dim];
        for z in self.samples() {
            for ((acc, x), m) in var.iter_mut().zip(z).zip(&mean) {
                *acc += (x - m).powi(2);
            }
        }
        let k = self.len() as f64;
        var.iter().map(|v| (v / (k - 1.0).max(1.0) / k).sqrt()).collect()
    }

    pub fn scaled(&self, c: f64) -> SamplePool {
        SamplePool { dim: self.dim, data: self.data.iter().map(|x| x * c).collect(), generation: self.generation }
    }
}

/// One application of the smoothing map to the empirical law of `pool`.
/// Slot `i` of the new pool uses RNG stream `i`, so the result does not
/// depend on the number of worker threads.
pub fn iterate_pool(spec: &ModelSpec, pool: &SamplePool, seed: u64) -> Result<SamplePool> {
    let d = pool.dim();
    if d != spec.dim() {
        return Err(Error::DimensionMismatch { expected: spec.dim(), got: d });
    }
    let k = pool.len();
    let mut out = vec![0.0; pool.data.len()];
    out.par_chunks_mut(d).enumerate().for_each(|(i, slot)| {
        let mut rng = rng::stream(seed, i as u64);
        let branch = spec.sample_branch(&mut rng);
        let mut tmp = vec![0.0; d];
        for a in branch.matrices {
            let j = rng.random_range(0..k);
            a.apply_into(pool.sample(j), &mut tmp);
            for (o, t) in slot.iter_mut().zip(&tmp) {
                *o += t;
            }
        }
    });
    Ok(SamplePool { dim: d, data: out, generation: pool.generation + 1 })
}

#[derive(Clone, Debug)]
pub struct FixedPointRun {
    pub pool: SamplePool,
    /// Mean `|Z|` after each round, starting with the initial pool.
    pub mean_norm_trace: Vec<f64>,
}

/// `rounds` iterations of [`iterate_pool`] from the constant pool at `init`.
pub fn run_fixed_point(spec: &ModelSpec, k: usize, rounds: usize, init: &[f64], seed: u64) -> Result<FixedPointRun> {
    if init.len() != spec.dim() {
        return Err(Error::DimensionMismatch { expected: spec.dim(), got: init.len() });
    }
    let mut pool = SamplePool::constant(k, init)?;
    let mean_norm = |p: &SamplePool| p.mean().iter().sum::<f64>();
    let mut trace = vec![mean_norm(&pool)];
    for round in 0..rounds {
        pool = iterate_pool(spec, &pool, rng::derive(seed, round as u64))?;
        trace.push(mean_norm(&pool));
    }
    Ok(FixedPointRun { pool, mean_norm_trace: trace })
}

/// Positive right eigenvector of `E[Σ A_i]`, normalized to unit L1 norm;
/// the default pool initialization.
pub fn default_init(spec: &ModelSpec) -> Result<Vec<f64>> {
    let mean = spec.mean_sum_matrix();
    match pf_decompose(&mean, POWER_TOL) {
        Ok(pf) => Ok(pf.right),
        Err(_) => Ok(power_iteration(&mean, POWER_TOL, POWER_MAX_ITER)?.1),
    }
}

/// A vertex of the weighted branching tree.
#[derive(Clone, Debug, PartialEq)]
pub struct TreeNode {
    /// Ulam–Harris address; children are numbered from 1.
    pub label: Vec<u32>,
    /// `G_u = A_{u|1} ⋯ A_{u||u|}`.
    pub weight: NonNegMatrix,
}

const ROOT_KEY: u64 = 0x243F_6A88_85A3_08D3;

fn child_key(parent: u64, i: usize) -> u64 {
    rng::mix(parent.rotate_left(17) ^ rng::mix(i as u64 + 1))
}

/// Uniform on `[0, 1)` attached to a node; the branch at a node depends only
/// on the seed and the node's address.
fn node_uniform(seed: u64, key: u64) -> f64 {
    (rng::mix(seed ^ key) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

struct Budget {
    used: usize,
    limit: usize,
}

impl Budget {
    fn new() -> Self {
        Budget { used: 0, limit: budget_from_env(DEFAULT_NODE_BUDGET) }
    }

    fn visit(&mut self) -> Result<()> {
        self.used += 1;
        if self.used > self.limit {
            return Err(Error::SupercriticalBlowup { budget: self.limit });
        }
        Ok(())
    }
}

/// The generation `T_n` of one simulated tree with its path weights.
pub fn tree_generation(spec: &ModelSpec, depth: usize, seed: u64) -> Result<Vec<TreeNode>> {
    let mut budget = Budget::new();
    let mut level = vec![(ROOT_KEY, TreeNode { label: vec![], weight: NonNegMatrix::identity(spec.dim()) })];
    budget.visit()?;
    for _ in 0..depth {
        let mut next = Vec::new();
        for (key, node) in &level {
            let branch = spec.branch_for_uniform(node_uniform(seed, *key));
            for (i, a) in branch.matrices.iter().enumerate() {
                budget.visit()?;
                let mut label = node.label.clone();
                label.push(i as u32 + 1);
                next.push((child_key(*key, i), TreeNode { label, weight: node.weight.mul(a) }));
            }
        }
        level = next;
    }
    Ok(level.into_iter().map(|(_, n)| n).collect())
}

/// `W_n = Σ_{|u| = n} G_u v` for one tree, `v` the positive eigenvector of
/// `E[Σ A_i]`. Requires that eigenvalue to be 1.
pub fn martingale_sample(spec: &ModelSpec, depth: usize, seed: u64) -> Result<Vec<f64>> {
    let m1 = spec.m_one();
    if (m1 - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!("martingale requires r(E[ΣA_i]) = 1, got {m1}")));
    }
    let v = default_init(spec)?;
    let mut budget = Budget::new();
    martingale_node(spec, &v, depth, seed, ROOT_KEY, &mut budget)
}

fn martingale_node(
    spec: &ModelSpec,
    v: &[f64],
    remaining: usize,
    seed: u64,
    key: u64,
    budget: &mut Budget,
) -> Result<Vec<f64>> {
    budget.visit()?;
    if remaining == 0 {
        return Ok(v.to_vec());
    }
    let branch = spec.branch_for_uniform(node_uniform(seed, key));
    let mut acc = vec![0.0; v.len()];
    for (i, a) in branch.matrices.iter().enumerate() {
        let w = martingale_node(spec, v, remaining - 1, seed, child_key(key, i), budget)?;
        for (s, x) in acc.iter_mut().zip(a.apply(&w)) {
            *s += x;
        }
    }
    Ok(acc)
}

/// `N(t, n) = #{u ∈ T_n : G_uᵀ t ≠ 0}` for one tree. A node counts as
/// killed when `|G_uᵀ t| ≤ τ |t| ∏ ‖A‖` along its path; its subtree is then
/// identically zero and is pruned.
pub fn count_surviving_directions(spec: &ModelSpec, t: &[f64], depth: usize, seed: u64) -> Result<usize> {
    if t.len() != spec.dim() {
        return Err(Error::DimensionMismatch { expected: spec.dim(), got: t.len() });
    }
    let t_norm: f64 = t.iter().map(|x| x.abs()).sum();
    if t_norm == 0.0 {
        return Err(Error::InvalidArgument("t must be nonzero".into()));
    }
    let mut budget = Budget::new();
    count_node(spec, t, t_norm, 1.0, depth, seed, ROOT_KEY, &mut budget)
}

#[allow(clippy::too_many_arguments)]
fn count_node(
    spec: &ModelSpec,
    s: &[f64],
    t_norm: f64,
    path_norm: f64,
    remaining: usize,
    seed: u64,
    key: u64,
    budget: &mut Budget,
) -> Result<usize> {
    budget.visit()?;
    if remaining == 0 {
        return Ok(1);
    }
    let branch = spec.branch_for_uniform(node_uniform(seed, key));
    let mut total = 0;
    for (i, a) in branch.matrices.iter().enumerate() {
        let child = a.apply_transpose(s);
        let child_path = path_norm * a.norm();
        let size: f64 = child.iter().map(|x| x.abs()).sum();
        if size > ZERO_TOL * t_norm * child_path {
            total += count_node(spec, &child, t_norm, child_path, remaining - 1, seed, child_key(key, i), budget)?;
        }
    }
    Ok(total)
}

/// Settings of the stopping-line sampler.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct StoppingLineConfig {
    /// Index of the tail assigned to the leaves (`α`).
    pub alpha: f64,
    /// Number of branchings with `N ≥ 2` along every path before a leaf.
    pub levels: usize,
}

/// Samples from the fixed point when `α < 1`, where the pool iteration
/// cannot represent the heavy upper tail.
///
/// Each sample is `Σ_{u ∈ L} G_u Z_u` over the stopping line `L` of nodes
/// that have `levels` ancestors with `N ≥ 2`. Singleton branches do not
/// count towards the level, so `N = 1` chains are simulated to their
/// natural end. Leaves are `P·v` with `P` Pareto of index `α` and `v` the
/// positive eigenvector of `E[Σ A_i]`. The pool is rescaled to median
/// `|Z| = 1`, since fixed points with `α < 1` come in a scale family.
pub fn stopping_line_pool(spec: &ModelSpec, k: usize, config: StoppingLineConfig, seed: u64) -> Result<SamplePool> {
    if k == 0 {
        return Err(Error::InvalidArgument("pool size must be positive".into()));
    }
    if !(config.alpha > 0.0 && config.alpha <= 2.0) {
        return Err(Error::InvalidArgument(format!("alpha = {} outside (0, 2]", config.alpha)));
    }
    if spec.prob_n_equals(1) >= 1.0 {
        return Err(Error::InvalidModel("N = 1 almost surely".into()));
    }
    let v = default_init(spec)?;
    let d = spec.dim();
    let mut data = vec![0.0; k * d];
    data.par_chunks_mut(d).enumerate().for_each(|(i, slot)| {
        let mut rng = rng::stream(seed, i as u64);
        let z = stopping_line_node(spec, &v, config, config.levels, &mut rng);
        slot.copy_from_slice(&z);
    });
    let mut norms: Vec<f64> = data.chunks_exact(d).map(|z| z.iter().sum()).collect();
    let mid = norms.len() / 2;
    let (_, median, _) = norms.select_nth_unstable_by(mid, f64::total_cmp);
    let scale = 1.0 / *median;
    data.iter_mut().for_each(|x| *x *= scale);
    SamplePool::new(d, data, 0)
}

fn stopping_line_node(
    spec: &ModelSpec,
    v: &[f64],
    config: StoppingLineConfig,
    level: usize,
    rng: &mut Rng,
) -> Vec<f64> {
    if level == 0 {
        let u: f64 = 1.0 - rng.random::<f64>();
        let p = u.powf(-1.0 / config.alpha);
        return v.iter().map(|x| x * p).collect();
    }
    // an N = 1 chain is a product applied to a single subtree
    let mut prefix: Option<NonNegMatrix> = None;
    loop {
        let branch = spec.sample_branch(rng);
        if branch.n() == 1 {
            let a = &branch.matrices[0];
            prefix = Some(match prefix {
                Some(p) => p.mul(a),
                None => a.clone(),
            });
            continue;
        }
        let mut acc = vec![0.0; v.len()];
        for a in branch.matrices {
            let z = stopping_line_node(spec, v, config, level - 1, rng);
            for (s, x) in acc.iter_mut().zip(a.apply(&z)) {
                *s += x;
            }
        }
        return match prefix {
            Some(p) => p.apply(&acc),
            None => acc,
        };
    }
}

/// Two-sample Kolmogorov–Smirnov distance.
pub fn ks_distance(a: &[f64], b: &[f64]) -> f64 {
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    let (n, m) = (x.len() as f64, y.len() as f64);
    let (mut i, mut j, mut best) = (0, 0, 0.0f64);
    while i < x.len() && j < y.len() {
        let t = x[i].min(y[j]);
        while i < x.len() && x[i] <= t {
            i += 1;
        }
        while j < y.len() && y[j] <= t {
            j += 1;
        }
        best = best.max((i as f64 / n - j as f64 / m).abs());
    }
    best
}
