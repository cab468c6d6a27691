//! Fine-resolution point rasters: averaging into cells and nearest lookup.

use serde::{Deserialize, Serialize};

use super::geo::{squared_distance, Point, Projection};
use super::grid::Grid;
use crate::error::{Error, Result};

/// Values recorded on a fine lattice of points (population, night lights).
#[derive(Debug, Clone, PartialEq)]
pub struct RasterPoints {
    pub points: Vec<Point>,
    pub values: Vec<f64>,
}

impl RasterPoints {
    pub fn new(points: Vec<Point>, values: Vec<f64>) -> Result<Self> {
        if points.len() != values.len() {
            return Err(Error::Data(format!("{} points but {} values", points.len(), values.len())));
        }
        Ok(RasterPoints { points, values })
    }
}

/// Transform applied after averaging.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    #[default]
    Identity,
    Log,
    Log1p,
}

impl Transform {
    pub fn apply(self, v: f64) -> f64 {
        match self {
            Transform::Identity => v,
            Transform::Log => v.ln(),
            Transform::Log1p => v.ln_1p(),
        }
    }
}

/// Mean of the raster points inside each cell, then `transform`. Cells with no
/// raster point, or whose transformed mean is not finite, are `None`.
pub fn raster_to_cells(raster: &RasterPoints, grid: &Grid, transform: Transform) -> Vec<Option<f64>> {
    let mut sum = vec![0.0; grid.len()];
    let mut count = vec![0usize; grid.len()];
    for (p, v) in raster.points.iter().zip(&raster.values) {
        if !v.is_finite() {
            continue;
        }
        if let Some(i) = grid.cell_index_at(*p) {
            sum[i] += v;
            count[i] += 1;
        }
    }
    sum.into_iter()
        .zip(count)
        .map(|(s, c)| {
            if c == 0 {
                return None;
            }
            let t = transform.apply(s / c as f64);
            t.is_finite().then_some(t)
        })
        .collect()
}

/// Uniform bucket index over projected points for exact nearest queries.
#[derive(Debug, Clone)]
pub struct NearestIndex {
    points: Vec<Point>,
    origin: Point,
    bucket: f64,
    nx: usize,
    ny: usize,
    buckets: Vec<Vec<u32>>,
}

impl NearestIndex {
    pub fn new(points: Vec<Point>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Data("nearest-point index needs at least one point".into()));
        }
        let (lo, hi) = super::geo::bbox(points.iter().copied()).ok_or_else(|| Error::Data("non-finite raster coordinates".into()))?;
        let extent = [(hi[0] - lo[0]).max(1e-12), (hi[1] - lo[1]).max(1e-12)];
        let bucket = ((extent[0] * extent[1]) / points.len() as f64 * 2.0).sqrt().max(1e-12);
        let nx = ((extent[0] / bucket).ceil() as usize).clamp(1, 4096);
        let ny = ((extent[1] / bucket).ceil() as usize).clamp(1, 4096);
        let bucket = (extent[0] / nx as f64).max(extent[1] / ny as f64);
        let mut buckets = vec![Vec::new(); nx * ny];
        let mut index = NearestIndex { points, origin: lo, bucket, nx, ny, buckets: Vec::new() };
        for (i, p) in index.points.iter().enumerate() {
            let (bx, by) = index.bucket_of(*p);
            buckets[by * nx + bx].push(i as u32);
        }
        index.buckets = buckets;
        Ok(index)
    }

    fn bucket_of(&self, p: Point) -> (usize, usize) {
        let fx = ((p[0] - self.origin[0]) / self.bucket).floor();
        let fy = ((p[1] - self.origin[1]) / self.bucket).floor();
        ((fx.max(0.0) as usize).min(self.nx - 1), (fy.max(0.0) as usize).min(self.ny - 1))
    }

    /// Index of the nearest point; ties go to the lowest index.
    pub fn nearest(&self, q: Point) -> usize {
        let (cx, cy) = self.bucket_of(q);
        let mut best = (f64::INFINITY, usize::MAX);
        let max_ring = self.nx.max(self.ny);
        for ring in 0..=max_ring {
            // Any point in this ring or beyond lies at least this far away.
            if ring > 0 {
                let gap = self.ring_gap(q, cx, cy, ring);
                if gap * gap > best.0 {
                    break;
                }
            }
            let (x0, x1) = (cx as isize - ring as isize, cx as isize + ring as isize);
            let (y0, y1) = (cy as isize - ring as isize, cy as isize + ring as isize);
            for by in y0..=y1 {
                if by < 0 || by >= self.ny as isize {
                    continue;
                }
                for bx in x0..=x1 {
                    if bx < 0 || bx >= self.nx as isize {
                        continue;
                    }
                    if by != y0 && by != y1 && bx != x0 && bx != x1 {
                        continue;
                    }
                    for &i in &self.buckets[by as usize * self.nx + bx as usize] {
                        let d = squared_distance(self.points[i as usize], q);
                        let cand = (d, i as usize);
                        if cand.0 < best.0 || (cand.0 == best.0 && cand.1 < best.1) {
                            best = cand;
                        }
                    }
                }
            }
        }
        best.1
    }

    /// Lower bound on the distance from `q` to any bucket of the given ring.
    fn ring_gap(&self, q: Point, cx: usize, cy: usize, ring: usize) -> f64 {
        let left = self.origin[0] + (cx as f64 - ring as f64 + 1.0) * self.bucket;
        let right = self.origin[0] + (cx as f64 + ring as f64) * self.bucket;
        let bottom = self.origin[1] + (cy as f64 - ring as f64 + 1.0) * self.bucket;
        let top = self.origin[1] + (cy as f64 + ring as f64) * self.bucket;
        let dx = (q[0] - left).min(right - q[0]);
        let dy = (q[1] - bottom).min(top - q[1]);
        dx.min(dy).max(0.0)
    }
}

/// Value of the nearest raster point (in projected distance) for each target.
pub fn nearest_value(raster: &RasterPoints, targets: &[Point], projection: &Projection) -> Result<Vec<f64>> {
    let index = NearestIndex::new(projection.project_all(&raster.points))?;
    Ok(targets.iter().map(|t| raster.values[index.nearest(projection.project(*t))]).collect())
}

/// Brute-force nearest scan used as the reference for `nearest_value`.
pub fn nearest_value_brute_force(raster: &RasterPoints, targets: &[Point], projection: &Projection) -> Vec<f64> {
    let projected = projection.project_all(&raster.points);
    targets
        .iter()
        .map(|t| {
            let q = projection.project(*t);
            let mut best = (f64::INFINITY, 0usize);
            for (i, p) in projected.iter().enumerate() {
                let d = squared_distance(*p, q);
                if d < best.0 {
                    best = (d, i);
                }
            }
            raster.values[best.1]
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid2() -> Grid {
        Grid::regular(2, 1, [0.0, 0.0], [2.0, 1.0], |_| "d".into()).unwrap()
    }

    #[test]
    fn averaging_and_transforms() {
        let grid = grid2();
        let raster = RasterPoints::new(vec![[0.2, 0.5], [0.7, 0.5]], vec![1.0, 3.0]).unwrap();
        let cells = raster_to_cells(&raster, &grid, Transform::Identity);
        assert_eq!(cells, vec![Some(2.0), None]);
        let logged = raster_to_cells(&raster, &grid, Transform::Log);
        assert_eq!(logged[0], Some(2f64.ln()));

        let uniform = RasterPoints::new(vec![[0.5, 0.5], [1.5, 0.5], [1.2, 0.1]], vec![5.0; 3]).unwrap();
        let cells = raster_to_cells(&uniform, &grid, Transform::Log1p);
        assert!(cells.iter().all(|c| *c == Some(5f64.ln_1p())));
    }

    #[test]
    fn nearest_examples() {
        let raster = RasterPoints::new(vec![[0.0, 0.0], [2.0, 0.0], [5.0, 5.0]], vec![10.0, 20.0, 30.0]).unwrap();
        let proj = Projection::planar();
        let got = nearest_value(&raster, &[[5.0, 5.0], [1.0, 0.0], [1.9, 0.3]], &proj).unwrap();
        assert_eq!(got, vec![30.0, 10.0, 20.0]);
        assert!(nearest_value(&RasterPoints::new(vec![], vec![]).unwrap(), &[[0.0, 0.0]], &proj).is_err());
    }
}
