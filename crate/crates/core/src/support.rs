//! Support of the fixed point: the semigroup generated by the weights, its
//! Perron–Frobenius directions, cone hulls and membership, the spectral
//! radius witnesses `l₁`, `l₂`, and greedy θ-adic expansions.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::cascade::{budget_from_env, SamplePool};
use crate::error::{Error, Result};
use crate::matrix::{pf_decompose, spectral_radius, Direction, NonNegMatrix, POWER_TOL};
use crate::model::ModelSpec;

/// Matrices closer than this (max entry difference) are identified.
pub const MATRIX_DEDUP_TOL: f64 = 1e-12;
/// Directions closer than this (L1) are identified.
pub const DIRECTION_DEDUP_TOL: f64 = 1e-10;
/// Tolerance of hull membership on the simplex.
pub const MEMBERSHIP_TOL: f64 = 1e-9;
/// Strict margin around 1 for the witnesses `l₁`, `l₂`.
pub const WITNESS_MARGIN: f64 = 1e-9;
/// Default cap on enumerated elements.
pub const DEFAULT_ELEMENT_BUDGET: usize = 200_000;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SemigroupElement {
    /// Indices into the generator list; empty for the identity.
    pub word: Vec<usize>,
    pub matrix: NonNegMatrix,
}

/// Products of generators of length at most `max_length`.
#[derive(Clone, Debug, Serialize)]
pub struct SemigroupEnumeration {
    pub generators: Vec<NonNegMatrix>,
    pub max_length: usize,
    pub elements: Vec<SemigroupElement>,
}

fn dedup_key(m: &NonNegMatrix) -> Vec<i64> {
    m.entries().iter().map(|x| (x / MATRIX_DEDUP_TOL).round() as i64).collect()
}

/// Breadth-first enumeration of products of `supp μ`.
pub fn enumerate_semigroup(spec: &ModelSpec, max_length: usize) -> Result<SemigroupEnumeration> {
    let generators = spec.mu_atoms().into_iter().map(|(_, a)| a).collect();
    enumerate_generators(generators, max_length)
}

pub fn enumerate_generators(generators: Vec<NonNegMatrix>, max_length: usize) -> Result<SemigroupEnumeration> {
    let dim = generators.first().map_or(1, NonNegMatrix::dim);
    if generators.iter().any(|g| g.dim() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: generators.iter().map(|g| g.dim()).find(|&d| d != dim).unwrap_or(dim),
        });
    }
    let budget = budget_from_env(DEFAULT_ELEMENT_BUDGET);
    let identity = SemigroupElement { word: vec![], matrix: NonNegMatrix::identity(dim) };
    let mut seen: HashMap<Vec<i64>, usize> = HashMap::new();
    seen.insert(dedup_key(&identity.matrix), 0);
    let mut elements = vec![identity];
    let mut frontier = vec![0usize];
    for _ in 0..max_length {
        let candidates: Vec<SemigroupElement> = frontier
            .par_iter()
            .flat_map_iter(|&e| {
                let base = &elements[e];
                generators.iter().enumerate().map(move |(g, gen)| {
                    let mut word = base.word.clone();
                    word.push(g);
                    SemigroupElement { word, matrix: base.matrix.mul(gen) }
                })
            })
            .collect();
        let mut next = Vec::new();
        for c in candidates {
            let key = dedup_key(&c.matrix);
            if seen.contains_key(&key) {
                continue;
            }
            if elements.len() >= budget {
                return Err(Error::BudgetExceeded { budget });
            }
            seen.insert(key, elements.len());
            next.push(elements.len());
            elements.push(c);
        }
        if next.is_empty() {
            break;
        }
        frontier = next;
    }
    Ok(SemigroupEnumeration { generators, max_length, elements })
}

impl SemigroupEnumeration {
    /// Index of an element equal to `m` within the deduplication tolerance.
    pub fn find(&self, m: &NonNegMatrix) -> Option<usize> {
        self.elements.iter().position(|e| e.matrix.max_abs_diff(m) < MATRIX_DEDUP_TOL * 10.0)
    }

    pub fn product_of_word(&self, word: &[usize]) -> NonNegMatrix {
        let dim = self.elements[0].matrix.dim();
        word.iter().fold(NonNegMatrix::identity(dim), |acc, &g| acc.mul(&self.generators[g]))
    }
}

/// Every enumerated element has a positive entry in each row and column.
pub fn check_allowability(enumeration: &SemigroupEnumeration) -> bool {
    enumeration.elements.iter().all(|e| e.matrix.is_allowable())
}

/// Some enumerated element is strictly positive.
pub fn check_positivity(enumeration: &SemigroupEnumeration) -> bool {
    enumeration.elements.iter().any(|e| e.matrix.is_positive())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LambdaDirection {
    pub direction: Direction,
    /// Word of the first element found with this direction.
    pub word: Vec<usize>,
}

/// Perron–Frobenius directions of the positive enumerated elements.
#[derive(Clone, Debug, Serialize)]
pub struct LambdaSet {
    pub directions: Vec<LambdaDirection>,
    /// No new direction appeared among the elements of maximal length.
    pub stable: bool,
}

impl LambdaSet {
    pub fn points(&self) -> Vec<Direction> {
        self.directions.iter().map(|d| d.direction.clone()).collect()
    }
}

pub fn lambda_set(enumeration: &SemigroupEnumeration) -> Result<LambdaSet> {
    let max_len = enumeration.elements.iter().map(|e| e.word.len()).max().unwrap_or(0);
    let mut directions: Vec<LambdaDirection> = Vec::new();
    let mut stable = true;
    let mut ordered: Vec<&SemigroupElement> = enumeration.elements.iter().collect();
    ordered.sort_by_key(|e| e.word.len());
    for e in ordered {
        if !e.matrix.is_positive() {
            continue;
        }
        let pf = pf_decompose(&e.matrix, POWER_TOL)?;
        let dir = Direction::from_normalized(pf.right);
        if directions.iter().any(|d| d.direction.l1_distance(&dir) < DIRECTION_DEDUP_TOL) {
            continue;
        }
        if e.word.len() == max_len && max_len > 0 {
            stable = false;
        }
        directions.push(LambdaDirection { direction: dir, word: e.word.clone() });
    }
    Ok(LambdaSet { directions, stable })
}

/// Representation of the convex hull of finitely many simplex points.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum HullShape {
    /// `d = 1`: the whole half-line.
    Ray,
    /// `d = 2`: first coordinates in `[lo, hi]`.
    Interval { lo: f64, hi: f64 },
    /// `d = 3`: counterclockwise polygon in the first two coordinates.
    Polygon { vertices: Vec<[f64; 2]> },
    /// `d ≥ 4`: membership by nonnegative least squares.
    General,
}

/// Cone of nonnegative combinations of at most `max_terms` directions.
#[derive(Clone, Debug, Serialize)]
pub struct ConeHull {
    pub dim: usize,
    pub directions: Vec<Direction>,
    pub max_terms: usize,
    pub extremes: Vec<Direction>,
    pub shape: HullShape,
}

fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

fn convex_hull_2d(mut pts: Vec<[f64; 2]>) -> Vec<[f64; 2]> {
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup_by(|a, b| (a[0] - b[0]).abs() < DIRECTION_DEDUP_TOL && (a[1] - b[1]).abs() < DIRECTION_DEDUP_TOL);
    if pts.len() < 3 {
        return pts;
    }
    let mut lower: Vec<[f64; 2]> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 1e-15 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<[f64; 2]> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 1e-15 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

fn point_segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    let t = if len2 == 0.0 { 0.0 } else { (((p[0] - a[0]) * ab[0] + (p[1] - a[1]) * ab[1]) / len2).clamp(0.0, 1.0) };
    let q = [a[0] + t * ab[0], a[1] + t * ab[1]];
    ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt()
}

fn polygon_contains(vertices: &[[f64; 2]], p: [f64; 2], tol: f64) -> bool {
    match vertices.len() {
        0 => false,
        1 => point_segment_distance(p, vertices[0], vertices[0]) <= tol,
        2 => point_segment_distance(p, vertices[0], vertices[1]) <= tol,
        n => {
            let inside = (0..n).all(|i| cross(vertices[i], vertices[(i + 1) % n], p) >= 0.0);
            inside || (0..n).any(|i| point_segment_distance(p, vertices[i], vertices[(i + 1) % n]) <= tol)
        }
    }
}

/// Lawson–Hanson nonnegative least squares: `min |A λ − b|₂` over `λ ≥ 0`,
/// `A` given by its columns. Returns the residual norm.
pub fn nnls_residual(columns: &[Vec<f64>], b: &[f64]) -> f64 {
    let n = columns.len();
    let m = b.len();
    if n == 0 {
        return b.iter().map(|x| x * x).sum::<f64>().sqrt();
    }
    let residual = |lambda: &[f64]| -> Vec<f64> {
        let mut r = b.to_vec();
        for (c, &l) in columns.iter().zip(lambda) {
            for (ri, ci) in r.iter_mut().zip(c) {
                *ri -= l * ci;
            }
        }
        r
    };
    let solve_passive = |passive: &[usize]| -> Vec<f64> {
        let a = nalgebra::DMatrix::from_fn(m, passive.len(), |i, j| columns[passive[j]][i]);
        let rhs = nalgebra::DVector::from_column_slice(b);
        let svd = a.svd(true, true);
        let z = svd.solve(&rhs, 1e-14).expect("SVD with vectors");
        let mut full = vec![0.0; n];
        for (k, &j) in passive.iter().enumerate() {
            full[j] = z[k];
        }
        full
    };
    let mut lambda = vec![0.0; n];
    let mut passive: Vec<usize> = Vec::new();
    let eps = 1e-13;
    for _ in 0..(3 * n + 10) {
        let r = residual(&lambda);
        let w: Vec<f64> = columns.iter().map(|c| c.iter().zip(&r).map(|(x, y)| x * y).sum()).collect();
        let candidate = (0..n).filter(|j| !passive.contains(j)).max_by(|&i, &j| w[i].total_cmp(&w[j]));
        match candidate {
            Some(j) if w[j] > eps => passive.push(j),
            _ => break,
        }
        loop {
            let z = solve_passive(&passive);
            if passive.iter().all(|&j| z[j] > 0.0) {
                lambda = z;
                break;
            }
            let mut step = 1.0f64;
            for &j in &passive {
                if z[j] <= 0.0 {
                    step = step.min(lambda[j] / (lambda[j] - z[j]));
                }
            }
            for j in 0..n {
                lambda[j] += step * (z[j] - lambda[j]);
            }
            passive.retain(|&j| lambda[j] > eps);
            for j in 0..n {
                if !passive.contains(&j) {
                    lambda[j] = 0.0;
                }
            }
            if passive.is_empty() {
                break;
            }
        }
    }
    residual(&lambda).iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn in_convex_hull_nnls(points: &[Direction], y: &Direction, tol: f64) -> bool {
    // convex hull on the simplex equals the cone of the points intersected with it
    let cols: Vec<Vec<f64>> = points.iter().map(|p| p.coords().to_vec()).collect();
    nnls_residual(&cols, y.coords()) <= tol
}

fn combinations(n: usize, k: usize, visit: &mut impl FnMut(&[usize]) -> bool) -> bool {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, visit: &mut impl FnMut(&[usize]) -> bool) -> bool {
        if cur.len() == k {
            return visit(cur);
        }
        for i in start..n {
            cur.push(i);
            if rec(i + 1, n, k, cur, visit) {
                return true;
            }
            cur.pop();
        }
        false
    }
    rec(0, n, k, &mut Vec::new(), visit)
}

pub fn cone_hull(directions: &[Direction], max_terms: usize) -> Result<ConeHull> {
    let first = directions.first().ok_or_else(|| Error::InvalidArgument("no directions".into()))?;
    let dim = first.dim();
    if directions.iter().any(|d| d.dim() != dim) {
        return Err(Error::InvalidArgument("directions of different dimensions".into()));
    }
    if max_terms == 0 {
        return Err(Error::InvalidArgument("max_terms must be positive".into()));
    }
    let (extremes, shape) = match dim {
        1 => (vec![first.clone()], HullShape::Ray),
        2 => {
            let lo = directions.iter().min_by(|a, b| a.coords()[0].total_cmp(&b.coords()[0])).expect("nonempty");
            let hi = directions.iter().max_by(|a, b| a.coords()[0].total_cmp(&b.coords()[0])).expect("nonempty");
            let shape = HullShape::Interval { lo: lo.coords()[0], hi: hi.coords()[0] };
            if lo.l1_distance(hi) < DIRECTION_DEDUP_TOL {
                (vec![lo.clone()], shape)
            } else {
                (vec![lo.clone(), hi.clone()], shape)
            }
        }
        3 => {
            let vertices = convex_hull_2d(directions.iter().map(|d| [d.coords()[0], d.coords()[1]]).collect());
            let extremes = vertices
                .iter()
                .map(|v| Direction::from_normalized(vec![v[0], v[1], (1.0 - v[0] - v[1]).max(0.0)]))
                .collect();
            (extremes, HullShape::Polygon { vertices })
        }
        _ => {
            let mut extremes: Vec<Direction> = Vec::new();
            for (i, d) in directions.iter().enumerate() {
                if extremes.iter().any(|e| e.l1_distance(d) < DIRECTION_DEDUP_TOL) {
                    continue;
                }
                let others: Vec<Direction> = directions
                    .iter()
                    .enumerate()
                    .filter(|(j, o)| *j != i && o.l1_distance(d) >= DIRECTION_DEDUP_TOL)
                    .map(|(_, o)| o.clone())
                    .collect();
                if !in_convex_hull_nnls(&others, d, MEMBERSHIP_TOL) {
                    extremes.push(d.clone());
                }
            }
            (extremes, HullShape::General)
        }
    };
    Ok(ConeHull { dim, directions: directions.to_vec(), max_terms, extremes, shape })
}

impl ConeHull {
    /// Whether a direction lies in the hull (combinations of at most
    /// `max_terms` directions), within `tol`.
    pub fn contains_direction(&self, y: &Direction, tol: f64) -> bool {
        if self.max_terms < self.dim && self.max_terms < self.extremes.len() {
            return self.contains_with_few_terms(y, tol);
        }
        match &self.shape {
            HullShape::Ray => true,
            HullShape::Interval { lo, hi } => {
                let x = y.coords()[0];
                x >= lo - tol && x <= hi + tol
            }
            HullShape::Polygon { vertices } => polygon_contains(vertices, [y.coords()[0], y.coords()[1]], tol),
            HullShape::General => in_convex_hull_nnls(&self.extremes, y, tol),
        }
    }

    fn contains_with_few_terms(&self, y: &Direction, tol: f64) -> bool {
        let pts = &self.directions;
        let mut found = false;
        for k in 1..=self.max_terms {
            found = combinations(pts.len(), k, &mut |idx| {
                let subset: Vec<Direction> = idx.iter().map(|&i| pts[i].clone()).collect();
                in_convex_hull_nnls(&subset, y, tol)
            });
            if found {
                break;
            }
        }
        found
    }

    /// `x = 0` or `x / |x|` lies in the hull.
    pub fn membership(&self, x: &[f64]) -> Result<bool> {
        self.membership_tol(x, MEMBERSHIP_TOL)
    }

    pub fn membership_tol(&self, x: &[f64], tol: f64) -> Result<bool> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: x.len() });
        }
        if x.iter().any(|&v| v < 0.0) {
            return Err(Error::NegativeInput);
        }
        if x.iter().all(|&v| v == 0.0) {
            return Ok(true);
        }
        let y = Direction::new(x.to_vec())?;
        Ok(self.contains_direction(&y, tol))
    }
}

/// A strictly positive cover-set sum with its construction.
#[derive(Clone, Debug, Serialize)]
pub struct Witness {
    pub matrix: NonNegMatrix,
    pub radius: f64,
    /// Branch atoms whose sums `Y` are multiplied, left to right.
    pub certificate: Vec<usize>,
}

#[derive(Clone, Debug, Serialize)]
pub struct WitnessSearch {
    pub l1: Option<Witness>,
    pub l2: Option<Witness>,
    /// Product depth at which the search stopped.
    pub depth: usize,
}

/// Search products of up to `depth_budget` realizations of `Y = Σ A_i` for
/// positive matrices with spectral radius below and above 1.
pub fn search_l1_l2(spec: &ModelSpec, depth_budget: usize) -> Result<WitnessSearch> {
    let mut ys: Vec<(usize, NonNegMatrix)> = Vec::new();
    for (i, atom) in spec.atoms().iter().enumerate() {
        let y = atom.sum();
        if !ys.iter().any(|(_, m)| m.max_abs_diff(&y) < MATRIX_DEDUP_TOL) {
            ys.push((i, y));
        }
    }
    let budget = budget_from_env(DEFAULT_ELEMENT_BUDGET);
    let mut level: Vec<(Vec<usize>, NonNegMatrix)> = ys.iter().map(|(i, m)| (vec![*i], m.clone())).collect();
    let mut l1: Option<Witness> = None;
    let mut l2: Option<Witness> = None;
    let mut depth = 0;
    for k in 1..=depth_budget {
        depth = k;
        if k > 1 {
            if level.len().saturating_mul(ys.len()) > budget {
                return Err(Error::BudgetExceeded { budget });
            }
            level = level
                .par_iter()
                .flat_map_iter(|(w, m)| {
                    ys.iter().map(move |(i, y)| {
                        let mut word = w.clone();
                        word.push(*i);
                        (word, m.mul(y))
                    })
                })
                .collect();
        }
        for (word, m) in &level {
            if !m.is_positive() {
                continue;
            }
            let r = spectral_radius(m);
            if r <= 1.0 - WITNESS_MARGIN && l1.as_ref().is_none_or(|w| r < w.radius) {
                l1 = Some(Witness { matrix: m.clone(), radius: r, certificate: word.clone() });
            }
            if r >= 1.0 + WITNESS_MARGIN && l2.as_ref().is_none_or(|w| r > w.radius) {
                l2 = Some(Witness { matrix: m.clone(), radius: r, certificate: word.clone() });
            }
        }
        if l1.is_some() && l2.is_some() {
            break;
        }
    }
    Ok(WitnessSearch { l1, l2, depth })
}

pub fn find_l1_l2(spec: &ModelSpec, depth_budget: usize) -> Result<(Witness, Witness)> {
    let search = search_l1_l2(spec, depth_budget)?;
    match (search.l1, search.l2) {
        (Some(l1), Some(l2)) => Ok((l1, l2)),
        (None, _) => Err(Error::NotFound(format!("no positive cover-set sum with r < 1 up to depth {depth_budget}"))),
        (_, None) => Err(Error::NotFound(format!("no positive cover-set sum with r > 1 up to depth {depth_budget}"))),
    }
}

/// Greedy expansion `x ≈ Σ η_i θ^i`.
pub fn dyadic_expand(x: f64, theta: f64, n_terms: usize) -> Result<Vec<u8>> {
    if !(0.5..1.0).contains(&theta) {
        return Err(Error::InvalidArgument(format!("theta = {theta} outside [1/2, 1)")));
    }
    let max = theta / (1.0 - theta);
    if !(x >= 0.0) {
        return Err(Error::NegativeInput);
    }
    if x > max * (1.0 + 1e-12) {
        return Err(Error::OutOfRange { value: x, max });
    }
    let mut bits = Vec::with_capacity(n_terms);
    let mut partial = 0.0;
    let mut power = 1.0;
    for _ in 0..n_terms {
        power *= theta;
        if partial + power <= x {
            partial += power;
            bits.push(1);
        } else {
            bits.push(0);
        }
    }
    Ok(bits)
}

/// `Σ η_i θ^i`.
pub fn dyadic_value(bits: &[u8], theta: f64) -> f64 {
    let mut power = 1.0;
    bits.iter()
        .map(|&b| {
            power *= theta;
            b as f64 * power
        })
        .sum()
}

#[derive(Clone, Debug, Serialize)]
pub struct ExtremeGap {
    pub extreme: Direction,
    /// Smallest angle (radians) between the extreme and a sample direction.
    pub gap: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SupportCheck {
    pub nonzero_samples: usize,
    pub inside_fraction: f64,
    pub gaps: Vec<ExtremeGap>,
}

/// Compare sample directions of a pool with a hull.
pub fn empirical_support_check(pool: &SamplePool, hull: &ConeHull, tol: f64) -> Result<SupportCheck> {
    if pool.dim() != hull.dim {
        return Err(Error::DimensionMismatch { expected: hull.dim, got: pool.dim() });
    }
    let dirs: Vec<Direction> = pool
        .samples()
        .filter(|z| z.iter().any(|&x| x > 0.0))
        .map(|z| Direction::new(z.to_vec()))
        .collect::<Result<_>>()?;
    if dirs.is_empty() {
        return Err(Error::InvalidArgument("pool has no nonzero samples".into()));
    }
    let inside = dirs.par_iter().filter(|d| hull.contains_direction(d, tol)).count();
    let gaps = hull
        .extremes
        .iter()
        .map(|e| ExtremeGap {
            extreme: e.clone(),
            gap: dirs.par_iter().map(|d| e.angle(d)).reduce(|| f64::INFINITY, f64::min),
        })
        .collect();
    Ok(SupportCheck { nonzero_samples: dirs.len(), inside_fraction: inside as f64 / dirs.len() as f64, gaps })
}
