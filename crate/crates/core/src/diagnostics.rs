//! Empirical diagnostics on a sample pool: characteristic and Laplace
//! transforms, decay-exponent fits, survival counts `N_δ(t)`, harmonic
//! moments and the small-ball exponent.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng as _;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::cascade::{SamplePool, ZERO_TOL};
use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::rng;
use crate::spectral::Estimate;

/// Floors at which harmonic moments are compared.
pub const HARMONIC_FLOORS: [f64; 3] = [1e-6, 1e-8, 1e-10];
/// Relative move between successive floors tolerated by a stable moment.
pub const HARMONIC_STABILITY: f64 = 0.05;
/// Modulus above which a transform value does not count as decayed.
pub const DECAY_CEILING: f64 = 0.9;
/// Bootstrap replicates.
pub const BOOTSTRAP: usize = 1000;

const BLOCK: usize = 4096;

/// Pairwise summation; the association order depends only on the length.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 32 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Sum of `f` over pool samples in fixed blocks, reduced pairwise, so the
/// result does not depend on the number of threads.
fn pool_sum<const M: usize>(pool: &SamplePool, f: impl Fn(&[f64]) -> [f64; M] + Sync) -> [f64; M] {
    let d = pool.dim();
    let partial: Vec<[f64; M]> = pool
        .as_flat()
        .par_chunks(BLOCK * d)
        .map(|block| {
            let rows: Vec<[f64; M]> = block.chunks_exact(d).map(&f).collect();
            let mut out = [0.0; M];
            for (m, o) in out.iter_mut().enumerate() {
                let col: Vec<f64> = rows.iter().map(|r| r[m]).collect();
                *o = pairwise_sum(&col);
            }
            out
        })
        .collect();
    let mut out = [0.0; M];
    for (m, o) in out.iter_mut().enumerate() {
        let col: Vec<f64> = partial.iter().map(|r| r[m]).collect();
        *o = pairwise_sum(&col);
    }
    out
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EcfEstimate {
    pub re: f64,
    pub im: f64,
    pub stderr: f64,
}

impl EcfEstimate {
    pub fn value(&self) -> Complex64 {
        Complex64::new(self.re, self.im)
    }

    pub fn modulus(&self) -> f64 {
        self.value().norm()
    }
}

/// Empirical characteristic function `K⁻¹ Σ e^{i⟨t, Z⟩}`.
pub fn ecf_estimate(pool: &SamplePool, t: &[f64]) -> Result<EcfEstimate> {
    check_dim(pool, t)?;
    let k = pool.len() as f64;
    let [c, s] = pool_sum(pool, |z| {
        let (s, c) = dot(t, z).sin_cos();
        [c, s]
    });
    Ok(EcfEstimate { re: c / k, im: s / k, stderr: 1.0 / k.sqrt() })
}

/// Empirical Laplace transform `K⁻¹ Σ e^{−⟨t, Z⟩}`.
pub fn laplace_estimate(pool: &SamplePool, t: &[f64]) -> Result<Estimate> {
    check_dim(pool, t)?;
    let k = pool.len() as f64;
    let [s1, s2] = pool_sum(pool, |z| {
        let e = (-dot(t, z)).exp();
        [e, e * e]
    });
    let mean = s1 / k;
    let var = (s2 / k - mean * mean).max(0.0) * k / (k - 1.0).max(1.0);
    Ok(Estimate { value: mean, stderr: (var / k).sqrt() })
}

fn check_dim(pool: &SamplePool, t: &[f64]) -> Result<()> {
    if t.len() != pool.dim() {
        return Err(Error::DimensionMismatch { expected: pool.dim(), got: t.len() });
    }
    Ok(())
}

fn l1_normalize(v: Vec<f64>) -> Vec<f64> {
    let n: f64 = v.iter().map(|x| x.abs()).sum();
    v.into_iter().map(|x| x / n).collect()
}

/// Unit (L1) directions covering the whole sphere up to sign: `n` points on
/// a half circle for `d = 2`, a Fibonacci hemisphere for `d = 3`, seeded
/// Gaussian directions otherwise.
pub fn probe_directions(d: usize, n: usize) -> Vec<Vec<f64>> {
    match d {
        1 => vec![vec![1.0]],
        2 => (0..n)
            .map(|k| {
                let a = std::f64::consts::PI * k as f64 / n as f64;
                l1_normalize(vec![a.cos(), a.sin()])
            })
            .collect(),
        3 => {
            let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
            (0..n)
                .map(|k| {
                    let z = 1.0 - (k as f64 + 0.5) / n as f64;
                    let r = (1.0 - z * z).sqrt();
                    let phi = golden * k as f64;
                    l1_normalize(vec![r * phi.cos(), r * phi.sin(), z])
                })
                .collect()
        }
        _ => sphere_grid(d, n),
    }
}

/// Unit (L1) directions on the full sphere, signs included.
pub fn sphere_grid(d: usize, n: usize) -> Vec<Vec<f64>> {
    match d {
        1 => vec![vec![1.0], vec![-1.0]],
        2 => (0..n)
            .map(|k| {
                let a = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
                l1_normalize(vec![a.cos(), a.sin()])
            })
            .collect(),
        3 => {
            let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
            (0..n)
                .map(|k| {
                    let z = 1.0 - 2.0 * (k as f64 + 0.5) / n as f64;
                    let r = (1.0 - z * z).sqrt();
                    let phi = golden * k as f64;
                    l1_normalize(vec![r * phi.cos(), r * phi.sin(), z])
                })
                .collect()
        }
        _ => {
            let mut r = rng::stream(0x5EED_5FE7, d as u64);
            (0..n).map(|_| l1_normalize((0..d).map(|_| r.sample(StandardNormal)).collect())).collect()
        }
    }
}

/// Default probe count: 32 for `d = 2`, 128 otherwise.
pub fn default_probe_count(d: usize) -> usize {
    if d <= 2 {
        32
    } else {
        128
    }
}

/// Dyadic radii `2^j`, `j = 0..=14`.
pub fn default_radii() -> Vec<f64> {
    (0..=14).map(|j| 2f64.powi(j)).collect()
}

/// Sup over probe directions of `|φ̂(r θ)|` for each radius `r`.
#[derive(Clone, Debug, Serialize)]
pub struct TransformCurve {
    pub radii: Vec<f64>,
    pub probe_directions: Vec<Vec<f64>>,
    pub modulus: Vec<f64>,
    pub stderr: Vec<f64>,
    /// Pool size behind the estimates; `None` for exact curves.
    pub sample_size: Option<usize>,
}

impl TransformCurve {
    /// A curve with known values (no Monte Carlo noise).
    pub fn exact(radii: Vec<f64>, modulus: Vec<f64>) -> Result<Self> {
        if radii.len() != modulus.len() || radii.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument("radii must be strictly increasing and match the moduli".into()));
        }
        let n = radii.len();
        Ok(TransformCurve { radii, probe_directions: vec![], modulus, stderr: vec![0.0; n], sample_size: None })
    }
}

pub fn transform_curve(pool: &SamplePool, radii: &[f64], n_probes: usize) -> Result<TransformCurve> {
    if radii.windows(2).any(|w| w[1] <= w[0]) || radii.is_empty() {
        return Err(Error::InvalidArgument("radii must be nonempty and strictly increasing".into()));
    }
    let probes = probe_directions(pool.dim(), n_probes);
    let k = pool.len() as f64;
    let d = pool.dim();
    // ⟨θ, Z⟩ for every probe, then every radius
    let modulus: Vec<f64> = radii
        .iter()
        .map(|&r| {
            probes
                .iter()
                .map(|theta| {
                    let [c, s] = pool_sum(pool, |z| {
                        let (s, c) = (r * dot(theta, &z[..d])).sin_cos();
                        [c, s]
                    });
                    (c * c + s * s).sqrt() / k
                })
                .fold(0.0, f64::max)
        })
        .collect();
    Ok(TransformCurve {
        radii: radii.to_vec(),
        probe_directions: probes,
        stderr: vec![1.0 / k.sqrt(); radii.len()],
        modulus,
        sample_size: Some(pool.len()),
    })
}

/// Estimated polynomial decay exponent of a transform curve.
#[derive(Clone, Debug, Serialize)]
pub struct DecayFit {
    pub a_hat: f64,
    pub ci: (f64, f64),
    pub radii_used: Vec<f64>,
}

fn ols_slope(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Least-squares slope of `log |φ̂|` against `log r` over the radii whose
/// modulus lies between the Monte Carlo noise floor `4/√K` and 0.9, with a
/// residual-bootstrap 95% interval.
pub fn decay_fit(curve: &TransformCurve) -> Result<DecayFit> {
    let floor = curve.sample_size.map_or(0.0, |k| 4.0 / (k as f64).sqrt());
    let pts: Vec<(f64, f64)> = curve
        .radii
        .iter()
        .zip(&curve.modulus)
        .filter(|(_, &m)| m < DECAY_CEILING && m > floor)
        .map(|(&r, &m)| (r.ln(), m.ln()))
        .collect();
    if pts.len() < 5 {
        return Err(Error::InsufficientDecay);
    }
    let x: Vec<f64> = pts.iter().map(|p| p.0).collect();
    let y: Vec<f64> = pts.iter().map(|p| p.1).collect();
    let (slope, icept) = ols_slope(&x, &y);
    let fitted: Vec<f64> = x.iter().map(|xi| icept + slope * xi).collect();
    let resid: Vec<f64> = y.iter().zip(&fitted).map(|(a, b)| a - b).collect();
    let mut r = rng::stream(0xB007_5742, x.len() as u64);
    let mut boot: Vec<f64> = (0..BOOTSTRAP)
        .map(|_| {
            let yb: Vec<f64> = fitted.iter().map(|f| f + resid[r.random_range(0..resid.len())]).collect();
            -ols_slope(&x, &yb).0
        })
        .collect();
    boot.sort_by(f64::total_cmp);
    Ok(DecayFit {
        a_hat: -slope,
        ci: (percentile(&boot, 0.025), percentile(&boot, 0.975)),
        radii_used: x.iter().map(|v| v.exp()).collect(),
    })
}

/// Exact law of `N_δ(t)` over the finite atoms.
#[derive(Clone, Debug, Serialize)]
pub struct KillCountStats {
    pub delta_grid: Vec<f64>,
    pub t_grid: Vec<Vec<f64>>,
    /// `counts[t][δ]`: pairs `(count, probability)`.
    pub counts: Vec<Vec<Vec<(usize, f64)>>>,
    /// `means[t][δ] = E[N_δ(t)]`.
    pub means: Vec<Vec<f64>>,
    /// `min_t E[N_δ(t)]` per δ.
    pub min_mean: Vec<f64>,
}

impl KillCountStats {
    /// Largest grid δ with `min_t E[N_δ(t)] > 1 + margin`.
    pub fn delta0(&self, margin: f64) -> Option<f64> {
        self.delta_grid.iter().zip(&self.min_mean).filter(|(_, &m)| m > 1.0 + margin).map(|(&d, _)| d).reduce(f64::max)
    }
}

/// `N_δ(t)` for one branch. For `δ = 0` a child counts when
/// `|A_iᵀ t| > τ ‖A_i‖ |t|`.
pub fn survivors(matrices: &[crate::matrix::NonNegMatrix], t: &[f64], delta: f64) -> usize {
    let tn: f64 = t.iter().map(|x| x.abs()).sum();
    matrices
        .iter()
        .filter(|a| {
            let s: f64 = a.apply_transpose(t).iter().map(|x| x.abs()).sum();
            s > delta * tn && s > ZERO_TOL * a.norm() * tn
        })
        .count()
}

pub fn kill_counts(spec: &ModelSpec, t_grid: &[Vec<f64>], delta_grid: &[f64]) -> Result<KillCountStats> {
    if t_grid.is_empty() || delta_grid.is_empty() {
        return Err(Error::InvalidArgument("empty grid".into()));
    }
    for t in t_grid {
        if t.len() != spec.dim() {
            return Err(Error::DimensionMismatch { expected: spec.dim(), got: t.len() });
        }
        if t.iter().all(|&x| x == 0.0) {
            return Err(Error::InvalidArgument("t must be nonzero".into()));
        }
    }
    let counts: Vec<Vec<Vec<(usize, f64)>>> = t_grid
        .iter()
        .map(|t| {
            delta_grid
                .iter()
                .map(|&delta| {
                    let mut law: Vec<(usize, f64)> = Vec::new();
                    for atom in spec.atoms() {
                        let n = survivors(&atom.matrices, t, delta);
                        match law.iter_mut().find(|e| e.0 == n) {
                            Some(e) => e.1 += atom.probability,
                            None => law.push((n, atom.probability)),
                        }
                    }
                    law.sort_by_key(|e| e.0);
                    law
                })
                .collect()
        })
        .collect();
    let means: Vec<Vec<f64>> =
        counts.iter().map(|row| row.iter().map(|law| law.iter().map(|(n, p)| *n as f64 * p).sum()).collect()).collect();
    let min_mean =
        (0..delta_grid.len()).map(|j| means.iter().map(|row| row[j]).fold(f64::INFINITY, f64::min)).collect();
    Ok(KillCountStats { delta_grid: delta_grid.to_vec(), t_grid: t_grid.to_vec(), counts, means, min_mean })
}

/// `E[max(|Z|, floor)^{−b}]` with its sensitivity to the floor.
#[derive(Clone, Debug, Serialize)]
pub struct HarmonicMoment {
    pub b: f64,
    pub floor: f64,
    pub value: f64,
    /// Estimates at the standard floors.
    pub table: Vec<(f64, f64)>,
    pub stable: bool,
}

fn floored_mean(norms: &[f64], b: f64, floor: f64) -> f64 {
    let xs: Vec<f64> = norms.iter().map(|&n| n.max(floor).powf(-b)).collect();
    pairwise_sum(&xs) / norms.len() as f64
}

pub fn harmonic_moment(pool: &SamplePool, b: f64, floor: f64) -> Result<HarmonicMoment> {
    if !(b > 0.0) || !(floor > 0.0) {
        return Err(Error::InvalidArgument("need b > 0 and floor > 0".into()));
    }
    let norms = pool.norms();
    let table: Vec<(f64, f64)> = HARMONIC_FLOORS.iter().map(|&f| (f, floored_mean(&norms, b, f))).collect();
    let stable = table.windows(2).all(|w| (w[1].1 - w[0].1).abs() <= HARMONIC_STABILITY * w[0].1);
    Ok(HarmonicMoment { b, floor, value: floored_mean(&norms, b, floor), table, stable })
}

/// Regression of `log P̂[|Z| ≤ ε]` on `log ε`.
#[derive(Clone, Debug, Serialize)]
pub struct SmallBall {
    pub slope: f64,
    pub ci: (f64, f64),
    pub eps_grid: Vec<f64>,
    pub probabilities: Vec<f64>,
}

/// Twelve geometric points between the empirical quantiles `100/K` and `0.01`.
pub fn default_eps_grid(pool: &SamplePool) -> Vec<f64> {
    let mut norms = pool.norms();
    norms.sort_by(f64::total_cmp);
    let k = norms.len();
    let q = |p: f64| norms[((p * k as f64) as usize).min(k - 1)];
    let (lo, hi) = (q((100.0 / k as f64).min(0.01)), q(0.01));
    if !(lo > 0.0) || hi <= lo {
        return vec![hi];
    }
    (0..12).map(|i| lo * (hi / lo).powf(i as f64 / 11.0)).collect()
}

pub fn small_ball_exponent(pool: &SamplePool, eps_grid: Option<&[f64]>) -> Result<SmallBall> {
    let grid = match eps_grid {
        Some(g) => g.to_vec(),
        None => default_eps_grid(pool),
    };
    if grid.is_empty() || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("eps grid must be nonempty and increasing".into()));
    }
    let mut norms = pool.norms();
    norms.sort_by(f64::total_cmp);
    let k = norms.len() as f64;
    let counts: Vec<usize> = grid.iter().map(|&e| norms.partition_point(|&n| n <= e)).collect();
    if counts[counts.len() - 1] == 0 {
        return Err(Error::EmptyTail);
    }
    let used: Vec<usize> = (0..grid.len()).filter(|&i| counts[i] > 0).collect();
    if used.len() < 2 {
        return Err(Error::EmptyTail);
    }
    let x: Vec<f64> = used.iter().map(|&i| grid[i].ln()).collect();
    let fit = |c: &[usize]| -> f64 {
        let y: Vec<f64> = used.iter().map(|&i| (c[i].max(1) as f64 / k).ln()).collect();
        ols_slope(&x, &y).0
    };
    let slope = fit(&counts);
    // Poisson bootstrap on the counts of the disjoint shells between grid points
    let shells: Vec<usize> = counts
        .iter()
        .scan(0, |prev, &c| {
            let s = c - *prev;
            *prev = c;
            Some(s)
        })
        .collect();
    let mut r = rng::stream(0xB007_5743, norms.len() as u64);
    let mut boot: Vec<f64> = (0..BOOTSTRAP)
        .map(|_| {
            let mut acc = 0;
            let c: Vec<usize> = shells
                .iter()
                .map(|&s| {
                    if s > 0 {
                        acc += Poisson::new(s as f64).expect("positive mean").sample(&mut r) as usize;
                    }
                    acc
                })
                .collect();
            fit(&c)
        })
        .collect();
    boot.sort_by(f64::total_cmp);
    Ok(SmallBall {
        slope,
        ci: (percentile(&boot, 0.025), percentile(&boot, 0.975)),
        probabilities: counts.iter().map(|&c| c as f64 / k).collect(),
        eps_grid: grid,
    })
}

/// Orthonormal basis (columns) of a subspace of `R^d`.
#[derive(Clone, Debug)]
struct Subspace(DMatrix<f64>);

const RANK_TOL: f64 = 1e-10;

impl Subspace {
    fn whole(d: usize) -> Self {
        Subspace(DMatrix::identity(d, d))
    }

    fn dim(&self) -> usize {
        self.0.ncols()
    }

    /// Null space of `m` (rows are constraints).
    fn null_space(m: &DMatrix<f64>) -> Self {
        let d = m.ncols();
        if m.nrows() == 0 {
            return Self::whole(d);
        }
        // pad to at least d rows so the SVD returns a full right basis
        let rows = m.nrows().max(d);
        let mut padded = DMatrix::zeros(rows, d);
        padded.view_mut((0, 0), (m.nrows(), d)).copy_from(m);
        let svd = padded.svd(false, true);
        let vt = svd.v_t.expect("requested");
        let scale = svd.singular_values.max().max(1.0);
        let cols: Vec<_> =
            (0..d).filter(|&i| svd.singular_values[i] <= RANK_TOL * scale).map(|i| vt.row(i).transpose()).collect();
        if cols.is_empty() {
            Subspace(DMatrix::zeros(d, 0))
        } else {
            Subspace(DMatrix::from_columns(&cols))
        }
    }

    fn complement_projector(&self) -> DMatrix<f64> {
        let d = self.0.nrows();
        DMatrix::identity(d, d) - &self.0 * self.0.transpose()
    }

    fn intersect(&self, other: &Subspace) -> Subspace {
        let a = self.complement_projector();
        let b = other.complement_projector();
        let d = a.ncols();
        let mut stacked = DMatrix::zeros(2 * d, d);
        stacked.view_mut((0, 0), (d, d)).copy_from(&a);
        stacked.view_mut((d, 0), (d, d)).copy_from(&b);
        Subspace::null_space(&stacked)
    }

    fn same_as(&self, other: &Subspace) -> bool {
        self.dim() == other.dim() && (&self.0 * self.0.transpose() - &other.0 * other.0.transpose()).abs().max() < 1e-8
    }
}

fn transposes_stacked(matrices: &[&crate::matrix::NonNegMatrix], d: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(matrices.len() * d, d);
    for (k, a) in matrices.iter().enumerate() {
        for i in 0..d {
            for j in 0..d {
                // row i of Aᵀ is column i of A
                m[(k * d + i, j)] = a.get(j, i);
            }
        }
    }
    m
}

/// Exact check of the survival conditions behind absolute continuity:
/// `N(t) ≥ 1` almost surely for every `t ≠ 0`, and `P[N(t) = 1] < 1`.
#[derive(Clone, Debug, Serialize)]
pub struct SurvivalCheck {
    /// No atom annihilates a nonzero `t` with all its children.
    pub never_extinct: bool,
    /// No nonzero `t` keeps a single child on every atom.
    pub not_always_single: bool,
    pub holds: bool,
}

pub fn check_survival(spec: &ModelSpec) -> SurvivalCheck {
    let d = spec.dim();
    let never_extinct = spec.atoms().iter().all(|atom| {
        let all: Vec<_> = atom.matrices.iter().collect();
        Subspace::null_space(&transposes_stacked(&all, d)).dim() == 0
    });
    // t with N(t) = 1 on an atom lies in one of the subspaces ∩_{j≠i} ker A_jᵀ
    let mut candidates = vec![Subspace::whole(d)];
    for atom in spec.atoms() {
        let singles: Vec<Subspace> = (0..atom.n())
            .map(|i| {
                let others: Vec<_> =
                    atom.matrices.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, a)| a).collect();
                Subspace::null_space(&transposes_stacked(&others, d))
            })
            .collect();
        let mut next: Vec<Subspace> = Vec::new();
        for c in &candidates {
            for s in &singles {
                let x = c.intersect(s);
                if x.dim() > 0 && !next.iter().any(|n| n.same_as(&x)) {
                    next.push(x);
                }
            }
        }
        candidates = next;
        if candidates.is_empty() {
            break;
        }
    }
    let not_always_single = candidates.is_empty();
    SurvivalCheck { never_extinct, not_always_single, holds: never_extinct && not_always_single }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::examples;
    use crate::matrix::NonNegMatrix;

    #[test]
    fn ecf_at_zero_and_constant_pool() {
        let pool = SamplePool::constant(100, &[0.3, 0.9]).unwrap();
        let e = ecf_estimate(&pool, &[0.0, 0.0]).unwrap();
        assert_eq!((e.re, e.im), (1.0, 0.0));
        let t = [2.0, -1.5];
        let e = ecf_estimate(&pool, &t).unwrap();
        let phase: f64 = 0.3 * 2.0 - 0.9 * 1.5;
        assert!((e.re - phase.cos()).abs() < 1e-12 && (e.im - phase.sin()).abs() < 1e-12);
        assert_eq!(e.stderr, 0.1);
    }

    #[test]
    fn ecf_conjugate_symmetry() {
        let pool = crate::cascade::run_fixed_point(&examples::example2(), 3000, 10, &[0.4, 0.6], 2).unwrap().pool;
        let t = [3.0, -7.0];
        let a = ecf_estimate(&pool, &t).unwrap();
        let b = ecf_estimate(&pool, &[-3.0, 7.0]).unwrap();
        assert_eq!(a.re, b.re);
        assert_eq!(a.im, -b.im);
        assert!(a.modulus() <= 1.0);
    }

    #[test]
    fn laplace_monotone() {
        let pool = crate::cascade::run_fixed_point(&examples::example1(), 2000, 10, &[0.4, 0.6], 5).unwrap().pool;
        let a = laplace_estimate(&pool, &[1.0, 1.0]).unwrap().value;
        let b = laplace_estimate(&pool, &[1.0, 2.0]).unwrap().value;
        assert!(b <= a && a <= 1.0);
    }

    #[test]
    fn exact_power_laws() {
        let radii = default_radii();
        let c = TransformCurve::exact(radii.clone(), radii.iter().map(|r| 1.0 / r).collect()).unwrap();
        let f = decay_fit(&c).unwrap();
        assert!((f.a_hat - 1.0).abs() < 1e-12);
        assert!((f.ci.0 - 1.0).abs() < 1e-12 && (f.ci.1 - 1.0).abs() < 1e-12);
        let c = TransformCurve::exact(radii.clone(), radii.iter().map(|r| (5.0 * r.powf(-0.5)).min(1.0)).collect())
            .unwrap();
        let f = decay_fit(&c).unwrap();
        assert!((f.a_hat - 0.5).abs() < 1e-12 && f.ci.0 <= 0.5 + 1e-12 && f.ci.1 >= 0.5 - 1e-12);
        let flat = TransformCurve::exact(radii.clone(), vec![0.95; radii.len()]).unwrap();
        assert!(matches!(decay_fit(&flat), Err(Error::InsufficientDecay)));
    }

    #[test]
    fn kill_counts_examples() {
        let grid = sphere_grid(2, 64);
        let s2 = kill_counts(&examples::example2(), &grid, &[0.0]).unwrap();
        assert!(s2.counts.iter().all(|row| row[0].iter().all(|(n, _)| *n >= 2)));
        let s1 = kill_counts(&examples::example1(), &[vec![1.0, -1.0]], &[0.0]).unwrap();
        let law = &s1.counts[0][0];
        assert_eq!(law[0], (0, 0.25));
        let big = kill_counts(&examples::example2(), &grid, &[1e6]).unwrap();
        assert!(big.means.iter().all(|row| row[0] == 0.0));
        assert_eq!(big.delta0(0.0), None);
    }

    #[test]
    fn kill_counts_monotone_and_homogeneous() {
        let grid = sphere_grid(2, 32);
        let deltas = [0.0, 0.01, 0.05, 0.1, 0.2];
        let s = kill_counts(&examples::example2(), &grid, &deltas).unwrap();
        for row in &s.means {
            assert!(row.windows(2).all(|w| w[1] <= w[0]));
        }
        let scaled: Vec<Vec<f64>> = grid.iter().map(|t| t.iter().map(|x| x * 8.0).collect()).collect();
        let s8 = kill_counts(&examples::example2(), &scaled, &deltas).unwrap();
        assert_eq!(s.counts, s8.counts);
    }

    #[test]
    fn harmonic_constant_pool() {
        let pool = SamplePool::constant(10, &[1.0, 1.0]).unwrap();
        let h = harmonic_moment(&pool, 1.0, 1e-8).unwrap();
        assert_eq!(h.value, 0.5);
        assert!(h.stable);
    }

    #[test]
    fn harmonic_nonincreasing_in_floor() {
        let pool = SamplePool::new(1, vec![1e-9, 1e-7, 0.5, 2.0], 0).unwrap();
        let vals: Vec<f64> =
            [1e-10, 1e-8, 1e-6, 1e-2].iter().map(|&f| harmonic_moment(&pool, 1.0, f).unwrap().value).collect();
        assert!(vals.windows(2).all(|w| w[1] <= w[0]));
        assert!(!harmonic_moment(&pool, 1.0, 1e-8).unwrap().stable);
    }

    #[test]
    fn small_ball_uniform() {
        let mut r = rng::stream(1, 1);
        let data: Vec<f64> = (0..200_000).map(|_| r.random::<f64>()).collect();
        let pool = SamplePool::new(1, data, 0).unwrap();
        let sb = small_ball_exponent(&pool, None).unwrap();
        assert!((sb.slope - 1.0).abs() < 0.05, "{sb:?}");
        assert!(sb.ci.0 <= sb.slope && sb.slope <= sb.ci.1);
    }

    #[test]
    fn small_ball_constant_pool_is_empty() {
        let pool = SamplePool::constant(100, &[2.0]).unwrap();
        assert!(matches!(small_ball_exponent(&pool, Some(&[0.5, 1.0])), Err(Error::EmptyTail)));
    }

    #[test]
    fn survival_checks() {
        assert!(!check_survival(&examples::example1()).never_extinct);
        assert!(check_survival(&examples::example2()).holds);
        // the rank-one single-child atoms kill (1, −1); (2, −1) keeps one child a.s.
        let c3 = check_survival(&examples::example3());
        assert!(!c3.never_extinct && !c3.not_always_single);
        // a single positive child per atom on a scalar model
        let spec = ModelSpec::explicit(2, vec![(1.0, vec![NonNegMatrix::identity(2); 2])]).unwrap();
        assert!(check_survival(&spec).holds);
    }

    #[test]
    fn pairwise_sum_is_thread_independent() {
        let pool = crate::cascade::run_fixed_point(&examples::example2(), 20_000, 5, &[0.4, 0.6], 3).unwrap().pool;
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let three = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let a = one.install(|| ecf_estimate(&pool, &[10.0, -4.0]).unwrap());
        let b = three.install(|| ecf_estimate(&pool, &[10.0, -4.0]).unwrap());
        assert_eq!(a, b);
    }
}
