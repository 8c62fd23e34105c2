//! Nonnegative matrices: norms, spectral radius, Perron–Frobenius
//! decomposition, the Hennion projective metric and contraction
//! coefficients.
//!
//! Conventions: vectors carry the L1 norm `|x| = Σ|x_i|`, matrices the
//! induced operator norm (maximum column sum). Directions live on the
//! nonnegative part of the L1 unit sphere, i.e. the probability simplex.

use std::fmt;

use nalgebra::DMatrix;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Relative tolerance and iteration cap for power iteration.
pub const POWER_TOL: f64 = 1e-12;
pub const POWER_MAX_ITER: usize = 100_000;

/// Dense `d × d` matrix with entrywise nonnegative, finite entries.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct NonNegMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl fmt::Debug for NonNegMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows: Vec<&[f64]> = (0..self.dim).map(|i| self.row(i)).collect();
        f.debug_tuple("NonNegMatrix").field(&rows).finish()
    }
}

impl TryFrom<Vec<Vec<f64>>> for NonNegMatrix {
    type Error = Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        NonNegMatrix::new(rows)
    }
}

impl From<NonNegMatrix> for Vec<Vec<f64>> {
    fn from(m: NonNegMatrix) -> Self {
        (0..m.dim).map(|i| m.row(i).to_vec()).collect()
    }
}

impl NonNegMatrix {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let dim = rows.len();
        if dim == 0 {
            return Err(Error::InvalidMatrix("empty matrix".into()));
        }
        let mut data = Vec::with_capacity(dim * dim);
        for row in rows {
            if row.len() != dim {
                return Err(Error::InvalidMatrix(format!("row of length {} in a {dim}x{dim} matrix", row.len())));
            }
            data.extend(row);
        }
        Self::from_row_major(dim, data)
    }

    pub fn from_row_major(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || data.len() != dim * dim {
            return Err(Error::InvalidMatrix(format!("{} entries for dimension {dim}", data.len())));
        }
        if let Some(x) = data.iter().find(|x| !x.is_finite() || **x < 0.0) {
            return Err(Error::InvalidMatrix(format!("entry {x} is not a nonnegative real")));
        }
        Ok(Self { dim, data })
    }

    // Callers guarantee nonnegativity (products, sums, nonnegative scalings).
    fn from_parts(dim: usize, data: Vec<f64>) -> Self {
        debug_assert!(data.iter().all(|x| *x >= 0.0));
        Self { dim, data }
    }

    pub fn identity(dim: usize) -> Self {
        let mut data = vec![0.0; dim * dim];
        for i in 0..dim {
            data[i * dim + i] = 1.0;
        }
        Self::from_parts(dim, data)
    }

    pub fn zeros(dim: usize) -> Self {
        Self::from_parts(dim, vec![0.0; dim * dim])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// Row-major entries.
    pub fn entries(&self) -> &[f64] {
        &self.data
    }

    pub fn mul(&self, other: &NonNegMatrix) -> NonNegMatrix {
        assert_eq!(self.dim, other.dim, "dimension mismatch in product");
        let d = self.dim;
        let mut out = vec![0.0; d * d];
        for i in 0..d {
            for k in 0..d {
                let a = self.data[i * d + k];
                if a == 0.0 {
                    continue;
                }
                for j in 0..d {
                    out[i * d + j] += a * other.data[k * d + j];
                }
            }
        }
        Self::from_parts(d, out)
    }

    pub fn add(&self, other: &NonNegMatrix) -> NonNegMatrix {
        assert_eq!(self.dim, other.dim, "dimension mismatch in sum");
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        Self::from_parts(self.dim, data)
    }

    /// `c · self` for `c ≥ 0`.
    pub fn scale(&self, c: f64) -> NonNegMatrix {
        assert!(c >= 0.0 && c.is_finite(), "scale factor must be a nonnegative real");
        Self::from_parts(self.dim, self.data.iter().map(|x| c * x).collect())
    }

    pub fn transpose(&self) -> NonNegMatrix {
        let d = self.dim;
        let mut out = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                out[j * d + i] = self.data[i * d + j];
            }
        }
        Self::from_parts(d, out)
    }

    /// `self · x` for any real vector `x`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.apply_into(x, &mut out);
        out
    }

    pub fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.dim);
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.row(i).iter().zip(x).map(|(a, b)| a * b).sum();
        }
    }

    /// `selfᵀ · t` for any real vector `t`.
    pub fn apply_transpose(&self, t: &[f64]) -> Vec<f64> {
        let d = self.dim;
        let mut out = vec![0.0; d];
        for i in 0..d {
            let ti = t[i];
            if ti == 0.0 {
                continue;
            }
            for j in 0..d {
                out[j] += self.data[i * d + j] * ti;
            }
        }
        out
    }

    pub fn column_sums(&self) -> Vec<f64> {
        let d = self.dim;
        (0..d).map(|j| (0..d).map(|i| self.data[i * d + j]).sum()).collect()
    }

    /// Operator norm induced by the L1 vector norm: the largest column sum.
    pub fn norm(&self) -> f64 {
        self.column_sums().into_iter().fold(0.0, f64::max)
    }

    pub fn min_entry(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_entry(&self) -> f64 {
        self.data.iter().copied().fold(0.0, f64::max)
    }

    /// Strictly positive: every entry `> 0`.
    pub fn is_positive(&self) -> bool {
        self.data.iter().all(|x| *x > 0.0)
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|x| *x == 0.0)
    }

    /// Every row and every column has a strictly positive entry.
    pub fn is_allowable(&self) -> bool {
        let d = self.dim;
        let rows = (0..d).all(|i| self.row(i).iter().any(|x| *x > 0.0));
        let cols = (0..d).all(|j| (0..d).any(|i| self.data[i * d + j] > 0.0));
        rows && cols
    }

    pub fn max_abs_diff(&self, other: &NonNegMatrix) -> f64 {
        assert_eq!(self.dim, other.dim);
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.dim, self.dim, &self.data)
    }

    /// Projective action `g · x = gx / |gx|`; `None` when `gx = 0`.
    pub fn act(&self, x: &Direction) -> Option<Direction> {
        let y = self.apply(x.coords());
        let n: f64 = y.iter().sum();
        (n > 0.0).then(|| Direction::from_normalized(y.into_iter().map(|v| v / n).collect()))
    }
}

/// A point of the simplex `S₊^{d−1} = {x ≥ 0 : |x| = 1}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Direction(Vec<f64>);

impl TryFrom<Vec<f64>> for Direction {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Direction::new(v)
    }
}

impl From<Direction> for Vec<f64> {
    fn from(d: Direction) -> Self {
        d.0
    }
}

impl Direction {
    /// Normalizes a nonzero nonnegative vector onto the simplex.
    pub fn new(v: Vec<f64>) -> Result<Self> {
        if v.is_empty() {
            return Err(Error::InvalidArgument("empty direction".into()));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("non-finite coordinate".into()));
        }
        if v.iter().any(|x| *x < 0.0) {
            return Err(Error::NegativeInput);
        }
        let n: f64 = v.iter().sum();
        if n <= 0.0 {
            return Err(Error::InvalidArgument("zero vector has no direction".into()));
        }
        Ok(Self(v.into_iter().map(|x| x / n).collect()))
    }

    pub(crate) fn from_normalized(v: Vec<f64>) -> Self {
        Self(v)
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn l1_distance(&self, other: &Direction) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| (a - b).abs()).sum()
    }

    /// Euclidean angle between the two rays, in radians.
    pub fn angle(&self, other: &Direction) -> f64 {
        let dot: f64 = self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum();
        let na = self.0.iter().map(|a| a * a).sum::<f64>().sqrt();
        let nb = other.0.iter().map(|b| b * b).sum::<f64>().sqrt();
        (dot / (na * nb)).clamp(-1.0, 1.0).acos()
    }

    pub fn uniform(dim: usize) -> Self {
        Self(vec![1.0 / dim as f64; dim])
    }

    pub fn vertex(dim: usize, i: usize) -> Self {
        let mut v = vec![0.0; dim];
        v[i] = 1.0;
        Self(v)
    }
}

/// Spectral radius `r(a)`, the largest modulus among the (complex)
/// eigenvalues, computed from a real Schur decomposition.
pub fn spectral_radius(a: &NonNegMatrix) -> f64 {
    if a.is_zero() {
        return 0.0;
    }
    if a.dim() == 1 {
        return a.get(0, 0);
    }
    a.to_dmatrix().complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Spectral radius of an arbitrary real square matrix.
pub fn spectral_radius_real(q: &DMatrix<f64>) -> f64 {
    if q.iter().all(|x| *x == 0.0) {
        return 0.0;
    }
    q.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Power iteration `x ← a x / |a x|` from the uniform vector. Returns the
/// eigenvalue estimate `|a v|` and the unit-L1 eigenvector `v`.
pub fn power_iteration(a: &NonNegMatrix, tol: f64, max_iter: usize) -> Result<(f64, Vec<f64>)> {
    let d = a.dim();
    let mut x = vec![1.0 / d as f64; d];
    let mut y = vec![0.0; d];
    for _ in 0..max_iter {
        a.apply_into(&x, &mut y);
        let n: f64 = y.iter().sum();
        if n == 0.0 {
            return Ok((0.0, x));
        }
        y.iter_mut().for_each(|v| *v /= n);
        let change: f64 = x.iter().zip(&y).map(|(p, q)| (p - q).abs()).sum();
        std::mem::swap(&mut x, &mut y);
        if change <= tol {
            let ax = a.apply(&x);
            return Ok((ax.iter().sum(), x));
        }
    }
    Err(Error::NoConvergence { iterations: max_iter })
}

/// True if some power `a^k` with `k ≤ (d−1)² + 1` (Wielandt's bound) is
/// strictly positive.
pub fn is_primitive(a: &NonNegMatrix) -> bool {
    primitivity_exponent(a).is_some()
}

fn primitivity_exponent(a: &NonNegMatrix) -> Option<usize> {
    let d = a.dim();
    let bound = (d - 1) * (d - 1) + 1;
    let pattern: Vec<bool> = a.entries().iter().map(|x| *x > 0.0).collect();
    let mut power = pattern.clone();
    for k in 1..=bound {
        if power.iter().all(|b| *b) {
            return Some(k);
        }
        let mut next = vec![false; d * d];
        for i in 0..d {
            for m in 0..d {
                if !power[i * d + m] {
                    continue;
                }
                for j in 0..d {
                    next[i * d + j] |= pattern[m * d + j];
                }
            }
        }
        power = next;
    }
    None
}

/// `a = r · v ⊗ u + q` with `a v = r v`, `aᵀ u = r u`, `|v| = 1`,
/// `⟨u, v⟩ = 1` and `r(q) < r`.
#[derive(Clone, Debug)]
pub struct PfDecomposition {
    pub radius: f64,
    pub right: Vec<f64>,
    pub left: Vec<f64>,
    /// Not sign-constrained.
    pub remainder: DMatrix<f64>,
}

impl PfDecomposition {
    pub fn remainder_radius(&self) -> f64 {
        spectral_radius_real(&self.remainder)
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        let d = self.right.len();
        let mut m = self.remainder.clone();
        for i in 0..d {
            for j in 0..d {
                m[(i, j)] += self.radius * self.right[i] * self.left[j];
            }
        }
        m
    }
}

pub fn pf_decompose(a: &NonNegMatrix, tol: f64) -> Result<PfDecomposition> {
    let d = a.dim();
    if !is_primitive(a) {
        return Err(Error::NotPrimitive { max_power: d * d });
    }
    let (radius, right) = power_iteration(a, tol, POWER_MAX_ITER)?;
    let (_, mut left) = power_iteration(&a.transpose(), tol, POWER_MAX_ITER)?;
    let dot: f64 = left.iter().zip(&right).map(|(u, v)| u * v).sum();
    left.iter_mut().for_each(|u| *u /= dot);
    let mut remainder = a.to_dmatrix();
    for i in 0..d {
        for j in 0..d {
            remainder[(i, j)] -= radius * right[i] * left[j];
        }
    }
    Ok(PfDecomposition { radius, right, left, remainder })
}

/// `m(x, y) = sup{λ ≥ 0 : λ y ≤ x}`.
fn lower_ratio(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).filter(|(_, yi)| **yi > 0.0).map(|(xi, yi)| xi / yi).fold(f64::INFINITY, f64::min)
}

/// Hennion's bounded projective distance on the simplex,
/// `d(x, y) = (1 − m(x,y) m(y,x)) / (1 + m(x,y) m(y,x))`.
pub fn hennion_distance(x: &Direction, y: &Direction) -> f64 {
    let p = lower_ratio(x.coords(), y.coords()) * lower_ratio(y.coords(), x.coords());
    let p = p.min(1.0);
    (1.0 - p) / (1.0 + p)
}

/// Hilbert projective distance `−log(m(x,y) m(y,x))`; infinite for
/// directions with different supports.
pub fn hilbert_distance(x: &Direction, y: &Direction) -> f64 {
    let p = lower_ratio(x.coords(), y.coords()) * lower_ratio(y.coords(), x.coords());
    -p.min(1.0).ln()
}

/// Hilbert diameter of the image cone `g R₊^d`: the largest Hilbert
/// distance between two columns. Infinite unless `g > 0`.
pub fn hilbert_diameter(g: &NonNegMatrix) -> f64 {
    if !g.is_positive() {
        return f64::INFINITY;
    }
    let cols = columns(g);
    let mut diam: f64 = 0.0;
    for (i, ci) in cols.iter().enumerate() {
        for cj in &cols[i + 1..] {
            diam = diam.max(hilbert_distance(ci, cj));
        }
    }
    diam
}

fn columns(g: &NonNegMatrix) -> Vec<Direction> {
    let d = g.dim();
    (0..d)
        .map(|j| {
            let col: Vec<f64> = (0..d).map(|i| g.get(i, j)).collect();
            let n: f64 = col.iter().sum();
            Direction::from_normalized(col.into_iter().map(|c| c / n).collect())
        })
        .collect()
}

fn check_columns(g: &NonNegMatrix) -> Result<()> {
    match g.column_sums().iter().position(|s| *s == 0.0) {
        Some(column) => Err(Error::ZeroColumn { column }),
        None => Ok(()),
    }
}

/// Guaranteed contraction coefficient for the Hennion metric: the
/// `d`-diameter of `g · S₊^{d−1}`, which equals `tanh(Δ(g)/2)` for `g > 0`.
pub fn hennion_coefficient(g: &NonNegMatrix) -> Result<f64> {
    check_columns(g)?;
    let cols = columns(g);
    let mut c: f64 = 0.0;
    for (i, ci) in cols.iter().enumerate() {
        for cj in &cols[i + 1..] {
            c = c.max(hennion_distance(ci, cj));
        }
    }
    Ok(c)
}

/// Birkhoff's coefficient `tanh(Δ(g)/4)`. It bounds the contraction of the
/// Hilbert distance, not of the Hennion distance.
pub fn birkhoff_coefficient(g: &NonNegMatrix) -> f64 {
    (hilbert_diameter(g) / 4.0).tanh()
}

/// Empirical contraction coefficient: the largest observed ratio
/// `d(g·x, g·y) / d(x, y)` over `pairs` random direction pairs (drawn from
/// a fixed stream) together with all vertex pairs.
pub fn contraction_coefficient(g: &NonNegMatrix, pairs: usize) -> Result<f64> {
    check_columns(g)?;
    let d = g.dim();
    let mut best: f64 = 0.0;
    let mut consider = |x: &Direction, y: &Direction| {
        let dxy = hennion_distance(x, y);
        if dxy > 0.0 {
            let (gx, gy) = (g.act(x).expect("no zero column"), g.act(y).expect("no zero column"));
            best = best.max(hennion_distance(&gx, &gy) / dxy);
        }
    };
    for i in 0..d {
        for j in i + 1..d {
            consider(&Direction::vertex(d, i), &Direction::vertex(d, j));
        }
    }
    let mut rng = rng::stream(0x00C0_FFEE, d as u64);
    for _ in 0..pairs {
        let x = random_direction(&mut rng, d);
        let y = random_direction(&mut rng, d);
        consider(&x, &y);
    }
    Ok(best.min(1.0))
}

/// Uniform point on the simplex.
pub fn random_direction(rng: &mut rng::Rng, d: usize) -> Direction {
    let e: Vec<f64> = (0..d).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    let n: f64 = e.iter().sum();
    Direction::from_normalized(e.into_iter().map(|x| x / n).collect())
}

/// `ι(a) = inf_{x ∈ S₊} |a x|`, the smallest column sum.
pub fn iota(a: &NonNegMatrix) -> f64 {
    a.column_sums().into_iter().fold(f64::INFINITY, f64::min)
}

/// `N(a) = max(‖a‖, ι(a)⁻¹)`.
pub fn size_n(a: &NonNegMatrix) -> Result<f64> {
    let i = iota(a);
    if i == 0.0 {
        return Err(Error::SingularDirection);
    }
    Ok(a.norm().max(1.0 / i))
}
