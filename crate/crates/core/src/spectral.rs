//! Spectral functionals of the weights: `κ(s)`, `m(s)`, the Lyapunov
//! exponent, the root `α`, transfer operators for the singleton-branch law
//! and the harmonic-moment critical exponent.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::SimplexGrid;
use crate::matrix::{iota, spectral_radius, Direction, NonNegMatrix};
use crate::model::ModelSpec;
use crate::rng;

/// Steps between renormalizations of a running matrix product.
pub const RENORMALIZE_EVERY: usize = 32;

/// A Monte Carlo estimate with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Estimate { value, stderr: 0.0 }
    }
}

fn mul_into(a: &[f64], b: &[f64], out: &mut [f64], d: usize) {
    for i in 0..d {
        for j in 0..d {
            let mut s = 0.0;
            for k in 0..d {
                s += a[i * d + k] * b[k * d + j];
            }
            out[i * d + j] = s;
        }
    }
}

fn op_norm(g: &[f64], d: usize) -> f64 {
    (0..d).map(|j| (0..d).map(|i| g[i * d + j]).sum::<f64>()).fold(0.0, f64::max)
}

/// `log ‖M_n ⋯ M_1‖` for i.i.d. chains, reused across values of `s`
/// (common random numbers).
#[derive(Clone, Debug)]
pub struct ChainSample {
    n: usize,
    log_norms: Vec<f64>,
}

impl ChainSample {
    /// `trials` chains of length `n` with i.i.d. factors from a finite law.
    pub fn draw(law: &[(f64, NonNegMatrix)], n: usize, trials: usize, seed: u64) -> Result<Self> {
        if n == 0 || trials < 2 {
            return Err(Error::InvalidArgument("need n ≥ 1 and at least 2 trials".into()));
        }
        let picker = WeightedIndex::new(law.iter().map(|(p, _)| *p)).map_err(|e| Error::InvalidModel(e.to_string()))?;
        let d = law[0].1.dim();
        let log_norms = (0..trials)
            .into_par_iter()
            .map(|t| {
                let mut r = rng::stream(seed, t as u64);
                let mut g = NonNegMatrix::identity(d).entries().to_vec();
                let mut next = vec![0.0; d * d];
                let mut log_scale = 0.0;
                for step in 1..=n {
                    let m = &law[picker.sample(&mut r)].1;
                    mul_into(m.entries(), &g, &mut next, d);
                    std::mem::swap(&mut g, &mut next);
                    if step % RENORMALIZE_EVERY == 0 {
                        let norm = op_norm(&g, d);
                        if norm == 0.0 {
                            return f64::NEG_INFINITY;
                        }
                        g.iter_mut().for_each(|x| *x /= norm);
                        log_scale += norm.ln();
                    }
                }
                log_scale + op_norm(&g, d).ln()
            })
            .collect();
        Ok(Self { n, log_norms })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn log_norms(&self) -> &[f64] {
        &self.log_norms
    }

    /// `E[‖G_n‖^s]^{1/n}` with a delta-method standard error.
    pub fn kappa(&self, s: f64) -> Estimate {
        if s == 0.0 {
            return Estimate::exact(1.0);
        }
        let t = self.log_norms.len() as f64;
        let shift = self.log_norms.iter().map(|l| s * l).fold(f64::NEG_INFINITY, f64::max);
        let xs: Vec<f64> = self.log_norms.iter().map(|l| (s * l - shift).exp()).collect();
        let mean = xs.iter().sum::<f64>() / t;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (t - 1.0);
        let log_mean = shift + mean.ln();
        let value = (log_mean / self.n as f64).exp();
        let rel = var.sqrt() / (mean * t.sqrt());
        Estimate { value, stderr: value * rel / self.n as f64 }
    }

    /// `E[log ‖G_n‖] / n`.
    pub fn lyapunov(&self) -> Estimate {
        let t = self.log_norms.len() as f64;
        let n = self.n as f64;
        let mean = self.log_norms.iter().sum::<f64>() / t;
        let var = self.log_norms.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (t - 1.0);
        Estimate { value: mean / n, stderr: (var / t).sqrt() / n }
    }
}

/// Monte Carlo `κ(s)` from chains of length `n` drawn from `μ`.
pub fn kappa_estimate(spec: &ModelSpec, s: f64, n: usize, trials: usize, seed: u64) -> Result<Estimate> {
    if s == 0.0 {
        return Ok(Estimate::exact(1.0));
    }
    Ok(ChainSample::draw(&spec.mu_atoms(), n, trials, seed)?.kappa(s))
}

/// `κ(1) = r(∫ a μ(da))`.
pub fn kappa_one_exact(spec: &ModelSpec) -> f64 {
    spectral_radius(&spec.mu_mean())
}

/// `m(s) = E[N] κ(s)`.
pub fn m_of_s(spec: &ModelSpec, s: f64, n: usize, trials: usize, seed: u64) -> Result<Estimate> {
    let k = kappa_estimate(spec, s, n, trials, seed)?;
    Ok(scale_estimate(k, spec.expected_n()))
}

fn scale_estimate(e: Estimate, c: f64) -> Estimate {
    Estimate { value: c * e.value, stderr: c * e.stderr }
}

/// `γ = lim E[log ‖M_n ⋯ M_1‖] / n`.
pub fn lyapunov_estimate(spec: &ModelSpec, n: usize, trials: usize, seed: u64) -> Result<Estimate> {
    Ok(ChainSample::draw(&spec.mu_atoms(), n, trials, seed)?.lyapunov())
}

/// Settings of [`find_alpha`].
#[derive(Clone, Copy, Debug, Serialize)]
pub struct AlphaSearch {
    pub chain_length: usize,
    pub trials: usize,
    pub seed: u64,
    /// Points of the scan on `(1e−3, 1]` preceding bisection.
    pub scan_points: usize,
    /// Step of the central difference for `m′(α)`.
    pub slope_step: f64,
}

impl Default for AlphaSearch {
    fn default() -> Self {
        AlphaSearch { chain_length: 32, trials: 20_000, seed: 0x5EED_A1FA, scan_points: 64, slope_step: 0.05 }
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct AlphaEstimate {
    pub alpha: f64,
    pub m_at_alpha: f64,
    pub slope: f64,
}

/// Root of `m(s) = 1` on `(1e−3, 1]` with `m′(α) < 0`.
pub fn find_alpha(spec: &ModelSpec, tol: f64, search: AlphaSearch) -> Result<AlphaEstimate> {
    let chains = ChainSample::draw(&spec.mu_atoms(), search.chain_length, search.trials, search.seed)?;
    let en = spec.expected_n();
    let m1 = spec.m_one();
    let m = |s: f64| if s == 1.0 { m1 } else { en * chains.kappa(s).value };
    let lo_end = 1e-3;
    let step = (1.0 - lo_end) / search.scan_points as f64;
    let mut prev = lo_end;
    if m(prev) - 1.0 <= tol {
        return Err(Error::NotFound("m(s) ≤ 1 already at the lower end of the bracket".into()));
    }
    let mut alpha = None;
    for k in 1..=search.scan_points {
        let s = if k == search.scan_points { 1.0 } else { lo_end + k as f64 * step };
        let g = m(s) - 1.0;
        if g.abs() <= tol && s == 1.0 {
            alpha = Some(1.0);
            break;
        }
        if g <= 0.0 {
            let (mut lo, mut hi) = (prev, s);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if m(mid) - 1.0 > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
                if hi - lo < 1e-13 {
                    break;
                }
            }
            alpha = Some(0.5 * (lo + hi));
            break;
        }
        prev = s;
    }
    let alpha = alpha.ok_or_else(|| Error::NotFound("m(s) > 1 on the whole bracket".into()))?;
    let m_at_alpha = m(alpha);
    if (m_at_alpha - 1.0).abs() > tol {
        return Err(Error::NotFound(format!("|m(α) − 1| = {} exceeds tolerance", (m_at_alpha - 1.0).abs())));
    }
    let h = search.slope_step;
    let slope = en * (chains.kappa(alpha + h).value - chains.kappa(alpha - h).value) / (2.0 * h);
    if !(slope < 0.0) {
        return Err(Error::NotFound(format!("m′(α) = {slope} is not negative")));
    }
    Ok(AlphaEstimate { alpha, m_at_alpha, slope })
}

/// Whether the operator acts through `Ã₁` or its transpose.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum TransferKind {
    /// `P_s f(v) = E[|Ã₁ v|^s f(Ã₁ · v)]`.
    Forward,
    /// `P*_s f(v) = E[|Ã₁ᵀ v|^s f(Ã₁ᵀ · v)]`.
    Conjugate,
}

/// Transfer operator discretized on a simplex lattice.
#[derive(Clone, Debug)]
pub struct TransferDiscretization {
    s: f64,
    kind: TransferKind,
    grid: SimplexGrid,
    atoms: Vec<(f64, NonNegMatrix)>,
    rows: Vec<Vec<(usize, f64)>>,
}

fn singleton_law(spec: &ModelSpec, kind: TransferKind) -> Result<Vec<(f64, NonNegMatrix)>> {
    let atoms = spec.conditioned_a1_atoms()?;
    let atoms: Vec<(f64, NonNegMatrix)> = match kind {
        TransferKind::Forward => atoms,
        TransferKind::Conjugate => atoms.into_iter().map(|(p, a)| (p, a.transpose())).collect(),
    };
    if atoms.iter().any(|(_, a)| iota(a) <= 0.0) {
        return Err(Error::FurstenbergKestenViolated);
    }
    Ok(atoms)
}

impl TransferDiscretization {
    pub fn new(spec: &ModelSpec, s: f64, grid_size: usize, kind: TransferKind) -> Result<Self> {
        let atoms = singleton_law(spec, kind)?;
        let grid = SimplexGrid::with_max_points(spec.dim(), grid_size)?;
        Ok(Self::from_atoms(s, kind, grid, atoms))
    }

    /// Operator of an explicit finite law of `Ã₁` (already transposed for
    /// the conjugate kind).
    pub fn from_atoms(s: f64, kind: TransferKind, grid: SimplexGrid, atoms: Vec<(f64, NonNegMatrix)>) -> Self {
        let rows = grid
            .points()
            .iter()
            .map(|v| {
                let mut row: Vec<(usize, f64)> = Vec::new();
                for (p, a) in &atoms {
                    let av = a.apply(v.coords());
                    let size: f64 = av.iter().sum();
                    let target = Direction::from_normalized(av.iter().map(|x| x / size).collect());
                    let w = p * size.powf(s);
                    for (j, b) in grid.interpolation_weights(&target) {
                        match row.iter_mut().find(|e| e.0 == j) {
                            Some(e) => e.1 += w * b,
                            None => row.push((j, w * b)),
                        }
                    }
                }
                row.sort_by_key(|e| e.0);
                row
            })
            .collect();
        Self { s, kind, grid, atoms, rows }
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn kind(&self) -> TransferKind {
        self.kind
    }

    pub fn grid(&self) -> &SimplexGrid {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> &[Vec<(usize, f64)>] {
        &self.rows
    }

    /// Dense `G × G` operator matrix.
    pub fn operator_matrix(&self) -> Vec<Vec<f64>> {
        let g = self.len();
        self.rows
            .iter()
            .map(|row| {
                let mut dense = vec![0.0; g];
                for &(j, w) in row {
                    dense[j] += w;
                }
                dense
            })
            .collect()
    }

    /// `(P f)` on the grid.
    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        self.rows.iter().map(|row| row.iter().map(|&(j, w)| w * f[j]).sum()).collect()
    }

    /// `(νP)` for a grid measure `ν`.
    pub fn apply_adjoint(&self, nu: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        for (row, &mass) in self.rows.iter().zip(nu) {
            for &(j, w) in row {
                out[j] += mass * w;
            }
        }
        out
    }

    /// `(P f)(v)` at an arbitrary direction, with `f` interpolated.
    pub fn apply_at(&self, v: &Direction, f: &[f64]) -> f64 {
        self.atoms
            .iter()
            .map(|(p, a)| {
                let av = a.apply(v.coords());
                let size: f64 = av.iter().sum();
                let target = Direction::from_normalized(av.iter().map(|x| x / size).collect());
                p * size.powf(self.s) * self.grid.interpolate(f, &target)
            })
            .sum()
    }
}

/// Apply the discretized `P_s` to a grid function.
pub fn transfer_apply(disc: &TransferDiscretization, f: &[f64]) -> Result<Vec<f64>> {
    if f.len() != disc.len() {
        return Err(Error::DimensionMismatch { expected: disc.len(), got: f.len() });
    }
    Ok(disc.apply(f))
}

/// Leading eigen-elements of a discretized transfer operator.
#[derive(Clone, Debug, Serialize)]
pub struct KappaTilde {
    pub s: f64,
    pub value: f64,
    /// `r_s` on the grid, normalized to maximum 1.
    pub eigenfunction: Vec<f64>,
    /// `ν_s` on the grid, unit total mass.
    pub eigenmeasure: Vec<f64>,
    pub iterations: usize,
    /// Largest `|P r − κ̃ r| / max r` over cell midpoints, with `P` applied
    /// exactly and `r` interpolated.
    pub interpolation_residual: f64,
}

pub const KAPPA_TILDE_MAX_ITER: usize = 100_000;

/// `κ̃(s)` by power iteration on the discretized `P_s` (and on its adjoint
/// for `ν_s`).
pub fn kappa_tilde(spec: &ModelSpec, s: f64, grid_size: usize, tol: f64) -> Result<KappaTilde> {
    let disc = TransferDiscretization::new(spec, s, grid_size, TransferKind::Forward)?;
    kappa_tilde_of(&disc, tol)
}

pub fn kappa_tilde_of(disc: &TransferDiscretization, tol: f64) -> Result<KappaTilde> {
    let g = disc.len();
    let mut f = vec![1.0; g];
    let mut value = f64::NAN;
    let mut iterations = 0;
    for it in 1..=KAPPA_TILDE_MAX_ITER {
        let next = disc.apply(&f);
        let top = next.iter().cloned().fold(0.0, f64::max);
        if top <= 0.0 {
            return Err(Error::NoConvergence { iterations: it });
        }
        let new_value = top / f.iter().cloned().fold(0.0, f64::max);
        f = next.into_iter().map(|x| x / top).collect();
        iterations = it;
        if (new_value - value).abs() <= tol * new_value.abs().max(1.0) {
            value = new_value;
            break;
        }
        value = new_value;
        if it == KAPPA_TILDE_MAX_ITER {
            return Err(Error::NoConvergence { iterations: it });
        }
    }
    let mut nu = vec![1.0 / g as f64; g];
    for it in 1..=KAPPA_TILDE_MAX_ITER {
        let next = disc.apply_adjoint(&nu);
        let mass: f64 = next.iter().sum();
        let next: Vec<f64> = next.into_iter().map(|x| x / mass).collect();
        let drift = next.iter().zip(&nu).map(|(a, b)| (a - b).abs()).sum::<f64>();
        nu = next;
        if drift <= tol {
            break;
        }
        if it == KAPPA_TILDE_MAX_ITER {
            return Err(Error::NoConvergence { iterations: it });
        }
    }
    let residual = midpoint_residual(disc, &f, value);
    Ok(KappaTilde {
        s: disc.s(),
        value,
        eigenfunction: f,
        eigenmeasure: nu,
        iterations,
        interpolation_residual: residual,
    })
}

fn midpoint_residual(disc: &TransferDiscretization, r: &[f64], value: f64) -> f64 {
    let pts = disc.grid().points();
    let top = r.iter().cloned().fold(0.0, f64::max);
    let mut worst: f64 = 0.0;
    for w in pts.windows(2) {
        let mid: Vec<f64> = w[0].coords().iter().zip(w[1].coords()).map(|(a, b)| 0.5 * (a + b)).collect();
        let mid = Direction::from_normalized(mid);
        let lhs = disc.apply_at(&mid, r);
        let rhs = value * disc.grid().interpolate(r, &mid);
        worst = worst.max((lhs - rhs).abs() / top);
    }
    worst
}

/// `κ̃(s)` from chains of `Ã₁`.
pub fn kappa_tilde_chain(spec: &ModelSpec, s: f64, n: usize, trials: usize, seed: u64) -> Result<Estimate> {
    let law = spec.conditioned_a1_atoms()?;
    Ok(ChainSample::draw(&law, n, trials, seed)?.kappa(s))
}

/// Operator and chain values of `κ̃(s)` side by side.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct KappaTildeCheck {
    pub s: f64,
    pub operator: f64,
    pub chain: Estimate,
    pub discretization_bound: f64,
    pub agrees: bool,
}

pub fn cross_validate_kappa_tilde(
    spec: &ModelSpec,
    s: f64,
    grid_size: usize,
    n: usize,
    trials: usize,
    seed: u64,
) -> Result<KappaTildeCheck> {
    let op = kappa_tilde(spec, s, grid_size, 1e-12)?;
    let chain = kappa_tilde_chain(spec, s, n, trials, seed)?;
    let bound = op.interpolation_residual * op.value;
    // a length-n chain carries an O(1/n) bias from the boundary factors
    let bias = op.value * (chain_boundary_spread(spec)? / n as f64);
    let agrees = (op.value - chain.value).abs() <= 3.0 * (chain.stderr + bound) + bias;
    Ok(KappaTildeCheck { s, operator: op.value, chain, discretization_bound: bound, agrees })
}

/// Bound on `|log ‖a x‖ − log ‖a‖|` over atoms, which controls the bias of
/// finite-chain estimates of `κ̃`.
fn chain_boundary_spread(spec: &ModelSpec) -> Result<f64> {
    let law = spec.conditioned_a1_atoms()?;
    Ok(law.iter().map(|(_, a)| (a.norm() / iota(a)).ln()).fold(0.0, f64::max))
}

/// Root `a₀` of `κ̃(−a) P[N = 1] = 1` on `(1e−3, a_max]`; `None` when
/// `P[N = 1] = 0`.
pub fn critical_exponent(spec: &ModelSpec, tol: f64, grid_size: usize, a_max: f64) -> Result<Option<f64>> {
    let p1 = spec.prob_n_equals(1);
    if p1 == 0.0 {
        return Ok(None);
    }
    let g = |a: f64| -> Result<f64> { Ok(kappa_tilde(spec, -a, grid_size, 1e-14)?.value * p1 - 1.0) };
    let (mut lo, mut hi) = (1e-3, a_max);
    let (g_lo, g_hi) = (g(lo)?, g(hi)?);
    if g_lo > 0.0 || g_hi < 0.0 {
        return Err(Error::NotFound(format!("κ̃(−a)P[N=1] − 1 does not change sign on ({lo}, {hi}]")));
    }
    let mut mid = 0.5 * (lo + hi);
    for _ in 0..200 {
        mid = 0.5 * (lo + hi);
        let gm = g(mid)?;
        if gm.abs() <= tol && hi - lo < 1e-10 {
            break;
        }
        if gm < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Some(mid))
}

/// Estimated spectral curves of a model.
#[derive(Clone, Debug, Serialize)]
pub struct SpectralProfile {
    pub s_grid: Vec<f64>,
    pub kappa: Vec<Estimate>,
    pub m: Vec<Estimate>,
    pub gamma: Estimate,
    pub alpha: Option<f64>,
    /// `κ̃(s)` for the grid values `s ≤ 0` (when `P[N = 1] > 0`).
    pub kappa_tilde: Vec<Option<f64>>,
    pub a0: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ProfileConfig {
    pub s_grid: Vec<f64>,
    pub chain_length: usize,
    pub trials: usize,
    pub lyapunov_length: usize,
    pub lyapunov_trials: usize,
    pub grid_size: usize,
    pub seed: u64,
}

impl Default for ProfileConfig {
    fn default() -> Self {
        ProfileConfig {
            s_grid: (-8..=8).map(|k| k as f64 * 0.25).collect(),
            chain_length: 32,
            trials: 20_000,
            lyapunov_length: 1_000,
            lyapunov_trials: 2_000,
            grid_size: 512,
            seed: 1,
        }
    }
}

pub fn spectral_profile(spec: &ModelSpec, config: &ProfileConfig) -> Result<SpectralProfile> {
    let chains = ChainSample::draw(&spec.mu_atoms(), config.chain_length, config.trials, rng::derive(config.seed, 1))?;
    let en = spec.expected_n();
    let kappa: Vec<Estimate> = config
        .s_grid
        .iter()
        .map(|&s| if s == 1.0 { Estimate::exact(kappa_one_exact(spec)) } else { chains.kappa(s) })
        .collect();
    let m = kappa.iter().map(|k| scale_estimate(*k, en)).collect();
    let gamma = lyapunov_estimate(spec, config.lyapunov_length, config.lyapunov_trials, rng::derive(config.seed, 2))?;
    let alpha = find_alpha(
        spec,
        1e-9,
        AlphaSearch {
            chain_length: config.chain_length,
            trials: config.trials,
            seed: rng::derive(config.seed, 3),
            ..Default::default()
        },
    )
    .ok()
    .map(|a| a.alpha);
    let singleton = spec.prob_n_equals(1) > 0.0;
    let kappa_tilde = config
        .s_grid
        .iter()
        .map(|&s| {
            if singleton && s <= 0.0 {
                kappa_tilde(spec, s, config.grid_size, 1e-12).ok().map(|k| k.value)
            } else {
                None
            }
        })
        .collect();
    let a0 = if singleton { critical_exponent(spec, 1e-12, config.grid_size, 10.0).ok().flatten() } else { None };
    Ok(SpectralProfile { s_grid: config.s_grid.clone(), kappa, m, gamma, alpha, kappa_tilde, a0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::examples;

    fn closed_form_kappa_tilde(s: f64) -> f64 {
        (2f64.powf(s) + 3f64.powf(s)) / (2.0 * 5f64.powf(s))
    }

    fn oracle_a0() -> f64 {
        // (5/2)^a + (5/3)^a = 4
        let (mut lo, mut hi) = (0.0f64, 2.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if 2.5f64.powf(mid) + (5.0f64 / 3.0).powf(mid) < 4.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    }

    #[test]
    fn kappa_at_zero_is_one() {
        assert_eq!(kappa_estimate(&examples::example1(), 0.0, 10, 10, 1).unwrap(), Estimate::exact(1.0));
        let m = m_of_s(&examples::example2(), 0.0, 10, 10, 1).unwrap();
        assert_eq!(m.value, 3.0);
    }

    #[test]
    fn kappa_one_exact_examples() {
        assert!((kappa_one_exact(&examples::example1()) - 0.5).abs() < 1e-12);
        assert!((kappa_one_exact(&examples::example2()) - 1.0 / 3.0).abs() < 1e-12);
        assert!((kappa_one_exact(&examples::example3()) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn kappa_two_example1_rank_one_oracle() {
        // chain norms are products of |v_i|/5, so κ(2) = (0.4² + 0.6²)/2 for every n
        let k = kappa_estimate(&examples::example1(), 2.0, 20, 100_000, 7).unwrap();
        assert!((k.value - 0.26).abs() < 3.0 * k.stderr, "{k:?}");
    }

    #[test]
    fn lyapunov_identity_is_zero() {
        let spec = ModelSpec::explicit(2, vec![(1.0, vec![NonNegMatrix::identity(2); 2])]).unwrap();
        let g = lyapunov_estimate(&spec, 100, 10, 1).unwrap();
        assert_eq!(g.value, 0.0);
    }

    #[test]
    fn lyapunov_example1() {
        let g = lyapunov_estimate(&examples::example1(), 1000, 2000, 3).unwrap();
        let oracle = 0.5 * (0.4f64.ln() + 0.6f64.ln());
        assert!((g.value - oracle).abs() < 3.0 * g.stderr + 1e-3, "{g:?}");
        assert!(g.value + 3.0 * g.stderr < -(2f64.ln()));
    }

    #[test]
    fn renormalization_survives_long_chains() {
        let g = lyapunov_estimate(&examples::example1(), 5000, 10, 3).unwrap();
        assert!(g.value.is_finite());
    }

    #[test]
    fn alpha_examples() {
        let a = find_alpha(&examples::example1(), 1e-9, AlphaSearch::default()).unwrap();
        assert_eq!(a.alpha, 1.0);
        assert!(a.slope < 0.0);
        assert_eq!(find_alpha(&examples::example2(), 1e-9, AlphaSearch::default()).unwrap().alpha, 1.0);
        // closed form m(s) = 0.75 (0.4^s + 0.6^s)
        let a3 = find_alpha(&examples::example3(), 1e-9, AlphaSearch::default()).unwrap();
        assert!((a3.alpha - 0.5778236514244254).abs() < 5e-3, "{a3:?}");
    }

    #[test]
    fn alpha_matches_grid_scan() {
        // N = 4, scalar weights 1e-6 or 50 with probabilities 0.99 and 0.01: m(1) = 2 and
        // m(s) = 4 (0.99e-6^s + 0.01·50^s) dips below 1 inside (0, 1)
        let (lo, hi) = (NonNegMatrix::identity(2).scale(1e-6), NonNegMatrix::identity(2).scale(50.0));
        let spec = ModelSpec::from_file(crate::model::ModelFile {
            name: None,
            dim: 2,
            law: crate::model::LawDescription::IIDCoefficients {
                n_law: vec![crate::model::CountEntry { probability: 1.0, n: 4 }],
                mu_atoms: vec![
                    crate::model::MatrixEntry { probability: 0.99, matrix: lo },
                    crate::model::MatrixEntry { probability: 0.01, matrix: hi },
                ],
            },
        })
        .unwrap();
        assert!((spec.m_one() - 2.0).abs() < 1e-5);
        let m = |s: f64| 4.0 * (0.99 * 1e-6f64.powf(s) + 0.01 * 50f64.powf(s));
        let grid_root = (1..=100_000).map(|k| k as f64 / 100_000.0).find(|&s| m(s) <= 1.0).unwrap();
        let search = AlphaSearch { chain_length: 4, trials: 200_000, ..Default::default() };
        let a = find_alpha(&spec, 1e-9, search).unwrap();
        assert!((a.alpha - grid_root).abs() < 5e-3, "{a:?} vs {grid_root}");
        assert!(a.slope < 0.0);
    }

    #[test]
    fn alpha_not_found_when_m_stays_above_one() {
        // m(s) = 0.8^s + 1.2^s ≥ 2^s > 1 on (0, 1]
        let (a1, a2) = (examples::a1().scale(2.0), examples::a2().scale(2.0));
        let spec = ModelSpec::explicit(
            2,
            vec![
                (0.25, vec![a1.clone(), a1.clone()]),
                (0.25, vec![a1.clone(), a2.clone()]),
                (0.25, vec![a2.clone(), a1]),
                (0.25, vec![a2.clone(), a2]),
            ],
        )
        .unwrap();
        assert!(matches!(find_alpha(&spec, 1e-9, AlphaSearch::default()), Err(Error::NotFound(_))));
    }

    #[test]
    fn transfer_at_zero_preserves_constants() {
        let disc = TransferDiscretization::new(&examples::example3(), 0.0, 64, TransferKind::Forward).unwrap();
        let out = transfer_apply(&disc, &vec![1.0; 64]).unwrap();
        assert!(out.iter().all(|x| (x - 1.0).abs() < 1e-12));
    }

    #[test]
    fn transfer_example3_at_centre() {
        let disc = TransferDiscretization::new(&examples::example3(), -1.0, 512, TransferKind::Forward).unwrap();
        let v = Direction::new(vec![0.5, 0.5]).unwrap();
        // |a₁v| = 0.4, |a₂v| = 0.6
        let direct = 0.5 * (1.0 / 0.4 + 1.0 / 0.6);
        assert!((disc.apply_at(&v, &vec![1.0; 512]) - direct).abs() < 1e-12);
        assert!((direct - 25.0 / 12.0).abs() < 1e-12);
    }

    #[test]
    fn transfer_scalar_model() {
        let c = 0.7;
        let f: Vec<f64> = (0..33).map(|k| (k as f64 * 0.3).sin() + 2.0).collect();
        let grid = SimplexGrid::with_max_points(2, 33).unwrap();
        let disc = TransferDiscretization::from_atoms(
            -1.5,
            TransferKind::Forward,
            grid,
            vec![(1.0, NonNegMatrix::identity(2).scale(c))],
        );
        let out = disc.apply(&f);
        for (o, x) in out.iter().zip(&f) {
            assert!((o - c.powf(-1.5) * x).abs() < 1e-12);
        }
    }

    #[test]
    fn transfer_rejects_missing_singletons_and_kernels() {
        assert!(matches!(
            TransferDiscretization::new(&examples::example1(), -1.0, 16, TransferKind::Forward),
            Err(Error::NoSingletonBranch)
        ));
        let e = NonNegMatrix::new(vec![vec![1.0, 0.0], vec![0.0, 0.0]]).unwrap();
        let spec = ModelSpec::explicit(2, vec![(0.5, vec![e]), (0.5, vec![examples::a1(); 3])]).unwrap();
        assert!(matches!(
            TransferDiscretization::new(&spec, -1.0, 16, TransferKind::Forward),
            Err(Error::FurstenbergKestenViolated)
        ));
    }

    #[test]
    fn kappa_tilde_closed_form() {
        let spec = examples::example3();
        for s in [-1.5, -1.0, -0.5, 0.0, 1.0] {
            let k = kappa_tilde(&spec, s, 512, 1e-12).unwrap();
            assert!((k.value - closed_form_kappa_tilde(s)).abs() < 1e-9, "s={s}: {}", k.value);
            assert!((k.eigenmeasure.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(k.eigenmeasure.iter().all(|&x| x >= 0.0));
        }
        let k0 = kappa_tilde(&spec, 0.0, 128, 1e-12).unwrap();
        assert!((k0.value - 1.0).abs() < 1e-12);
        assert!(k0.eigenfunction.iter().all(|&x| (x - 1.0).abs() < 1e-12));
    }

    #[test]
    fn eigen_duality() {
        let spec = examples::example3();
        let disc = TransferDiscretization::new(&spec, -0.7, 256, TransferKind::Forward).unwrap();
        let k = kappa_tilde_of(&disc, 1e-13).unwrap();
        let mut r = rng::stream(5, 0);
        let f: Vec<f64> = (0..256).map(|_| rand::Rng::random::<f64>(&mut r)).collect();
        let lhs: f64 = k.eigenmeasure.iter().zip(disc.apply(&f)).map(|(a, b)| a * b).sum();
        let rhs: f64 = k.value * k.eigenmeasure.iter().zip(&f).map(|(a, b)| a * b).sum::<f64>();
        assert!((lhs - rhs).abs() < 1e-9);
    }

    #[test]
    fn conjugate_operator_has_same_rate() {
        let spec = examples::example3();
        let fwd = kappa_tilde(&spec, -1.0, 256, 1e-13).unwrap().value;
        let disc = TransferDiscretization::new(&spec, -1.0, 256, TransferKind::Conjugate).unwrap();
        let conj = kappa_tilde_of(&disc, 1e-13).unwrap().value;
        assert!((fwd - conj).abs() < 1e-3, "{fwd} vs {conj}");
    }

    #[test]
    fn operator_agrees_with_chains() {
        let spec = examples::example3();
        for s in [-1.5, -1.0, -0.5] {
            let c = cross_validate_kappa_tilde(&spec, s, 512, 40, 20_000, 9).unwrap();
            assert!(c.agrees, "{c:?}");
        }
    }

    #[test]
    fn critical_exponent_examples() {
        let a0 = critical_exponent(&examples::example3(), 1e-12, 512, 10.0).unwrap().unwrap();
        assert!((a0 - oracle_a0()).abs() < 1e-6, "{a0}");
        assert!((oracle_a0() - 0.9457899479870234).abs() < 1e-12);
        assert_eq!(critical_exponent(&examples::example1(), 1e-12, 64, 10.0).unwrap(), None);
    }

    #[test]
    fn critical_exponent_scalar_model() {
        // P[N = 1] = p, Ã₁ = c·I: a₀ = log p / log c
        let (p, c) = (0.4, 0.5);
        let spec = ModelSpec::explicit(
            2,
            vec![(p, vec![NonNegMatrix::identity(2).scale(c)]), (1.0 - p, vec![examples::a1(); 3])],
        )
        .unwrap();
        let a0 = critical_exponent(&spec, 1e-12, 64, 10.0).unwrap().unwrap();
        assert!((a0 - p.ln() / c.ln()).abs() < 1e-8, "{a0}");
    }

    #[test]
    fn profile_invariants() {
        let config = ProfileConfig { trials: 4000, lyapunov_trials: 200, ..Default::default() };
        let spec = examples::example3();
        let p = spectral_profile(&spec, &config).unwrap();
        for (k, m) in p.kappa.iter().zip(&p.m) {
            assert_eq!(m.value, spec.expected_n() * k.value);
        }
        let logs: Vec<f64> = p.kappa.iter().map(|k| k.value.ln()).collect();
        for i in 1..logs.len() - 1 {
            let slack =
                3.0 * (p.kappa[i - 1].stderr + 2.0 * p.kappa[i].stderr + p.kappa[i + 1].stderr) / p.kappa[i].value;
            assert!(logs[i] <= 0.5 * (logs[i - 1] + logs[i + 1]) + slack);
        }
        assert!(p.a0.is_some() && p.alpha.is_some());
        for (s, k) in p.s_grid.iter().zip(&p.kappa) {
            if *s > 0.0 {
                assert!(p.gamma.value <= k.value.ln() / s + 3.0 * (p.gamma.stderr + k.stderr / k.value / s));
            }
        }
    }
}
