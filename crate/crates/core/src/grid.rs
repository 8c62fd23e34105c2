//! Regular lattices on the unit simplex with piecewise-linear interpolation.
//!
//! Lattice points are `i / M` for integer vectors `i ≥ 0` with `Σ i = M`.
//! Interpolation uses the Kuhn (Freudenthal) triangulation in cumulative
//! coordinates `c_j = Σ_{k ≤ j} M x_k`, in which the lattice is the set of
//! integer points with `0 ≤ c_1 ≤ … ≤ c_{d−1} ≤ M`. For `d = 2` this is the
//! uniform grid in the first coordinate.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::matrix::Direction;

#[derive(Clone, Debug)]
pub struct SimplexGrid {
    dim: usize,
    resolution: usize,
    points: Vec<Direction>,
    index: HashMap<Vec<u32>, usize>,
}

fn binomial(n: usize, k: usize) -> usize {
    (0..k).fold(1usize, |acc, i| acc.saturating_mul(n - i) / (i + 1))
}

/// Number of lattice points of resolution `m` on the `d`-simplex.
pub fn lattice_size(d: usize, m: usize) -> usize {
    binomial(m + d - 1, d - 1)
}

impl SimplexGrid {
    pub fn with_resolution(dim: usize, resolution: usize) -> Result<Self> {
        if dim < 2 || resolution == 0 {
            return Err(Error::InvalidArgument("grid needs dim ≥ 2 and resolution ≥ 1".into()));
        }
        let mut points = Vec::new();
        let mut index = HashMap::new();
        let mut current = vec![0u32; dim];
        enumerate(dim, resolution as u32, 0, &mut current, &mut |ix| {
            let coords = ix.iter().map(|&k| k as f64 / resolution as f64).collect();
            index.insert(ix.to_vec(), points.len());
            points.push(Direction::from_normalized(coords));
        });
        Ok(Self { dim, resolution, points, index })
    }

    /// Finest lattice with at most `max_points` points; for `d = 2` exactly
    /// `max_points` points.
    pub fn with_max_points(dim: usize, max_points: usize) -> Result<Self> {
        if dim < 2 || max_points < 2 {
            return Err(Error::InvalidArgument("grid needs dim ≥ 2 and at least 2 points".into()));
        }
        let mut m = 1;
        while lattice_size(dim, m + 1) <= max_points {
            m += 1;
        }
        Self::with_resolution(dim, m)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Direction] {
        &self.points
    }

    /// Vertices and barycentric weights of the lattice simplex containing `x`.
    pub fn interpolation_weights(&self, x: &Direction) -> Vec<(usize, f64)> {
        let d = self.dim;
        let m = self.resolution as f64;
        let coords = x.coords();
        // cumulative coordinates, clamped into the ordered region
        let mut c = Vec::with_capacity(d - 1);
        let mut acc = 0.0;
        for &xi in &coords[..d - 1] {
            acc += xi * m;
            c.push(acc.clamp(0.0, m));
        }
        for j in 1..c.len() {
            if c[j] < c[j - 1] {
                c[j] = c[j - 1];
            }
        }
        let mut base: Vec<i64> = c.iter().map(|v| (v.floor() as i64).min(self.resolution as i64 - 1)).collect();
        let frac: Vec<f64> = c.iter().zip(&base).map(|(v, b)| v - *b as f64).collect();
        let mut order: Vec<usize> = (0..d - 1).collect();
        // ties broken by index so the walk stays in the ordered region
        order.sort_by(|&i, &j| frac[j].total_cmp(&frac[i]).then(j.cmp(&i)));
        let mut out = Vec::with_capacity(d);
        let mut prev = 1.0;
        out.push((self.lookup(&base), 0.0));
        for (k, &j) in order.iter().enumerate() {
            out[k].1 = prev - frac[j];
            prev = frac[j];
            base[j] += 1;
            out.push((self.lookup(&base), 0.0));
        }
        out.last_mut().expect("nonempty").1 = prev;
        out.retain(|&(_, w)| w > 0.0);
        out
    }

    fn lookup(&self, cumulative: &[i64]) -> usize {
        let m = self.resolution as i64;
        let mut ix = Vec::with_capacity(self.dim);
        let mut prev = 0;
        for &c in cumulative {
            ix.push((c - prev).clamp(0, m) as u32);
            prev = c;
        }
        ix.push((m - prev).clamp(0, m) as u32);
        *self.index.get(&ix).expect("Kuhn vertices of the ordered region are lattice points")
    }

    /// Piecewise-linear interpolation of grid values `f` at `x`.
    pub fn interpolate(&self, f: &[f64], x: &Direction) -> f64 {
        self.interpolation_weights(x).iter().map(|&(i, w)| w * f[i]).sum()
    }
}

fn enumerate(d: usize, remaining: u32, pos: usize, current: &mut Vec<u32>, visit: &mut impl FnMut(&[u32])) {
    if pos == d - 1 {
        current[pos] = remaining;
        visit(current);
        return;
    }
    for k in 0..=remaining {
        current[pos] = k;
        enumerate(d, remaining - k, pos + 1, current, visit);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::random_direction;
    use crate::rng;

    #[test]
    fn sizes() {
        assert_eq!(SimplexGrid::with_max_points(2, 512).unwrap().len(), 512);
        assert_eq!(lattice_size(3, 10), 66);
        let g = SimplexGrid::with_max_points(3, 100).unwrap();
        assert_eq!(g.resolution(), 12);
        assert_eq!(g.len(), 91);
    }

    #[test]
    fn weights_form_a_partition_of_unity_and_reproduce_x() {
        for d in 2..=4 {
            let g = SimplexGrid::with_resolution(d, 7).unwrap();
            let mut r = rng::stream(3, d as u64);
            for _ in 0..200 {
                let x = random_direction(&mut r, d);
                let w = g.interpolation_weights(&x);
                assert!(w.len() <= d);
                let total: f64 = w.iter().map(|p| p.1).sum();
                assert!((total - 1.0).abs() < 1e-12);
                for k in 0..d {
                    let rec: f64 = w.iter().map(|&(i, wi)| wi * g.points()[i].coords()[k]).sum();
                    assert!((rec - x.coords()[k]).abs() < 1e-12, "d={d}");
                }
            }
        }
    }

    #[test]
    fn affine_functions_are_exact() {
        let g = SimplexGrid::with_resolution(3, 5).unwrap();
        let f: Vec<f64> = g.points().iter().map(|p| 2.0 * p.coords()[0] - p.coords()[2] + 0.5).collect();
        let x = Direction::new(vec![0.13, 0.52, 0.35]).unwrap();
        assert!((g.interpolate(&f, &x) - (0.26 - 0.35 + 0.5)).abs() < 1e-12);
    }

    #[test]
    fn grid_points_interpolate_to_themselves() {
        let g = SimplexGrid::with_resolution(3, 4).unwrap();
        for (i, p) in g.points().iter().enumerate() {
            let w = g.interpolation_weights(p);
            let own: f64 = w.iter().filter(|e| e.0 == i).map(|e| e.1).sum();
            assert!((own - 1.0).abs() < 1e-12);
        }
    }
}
