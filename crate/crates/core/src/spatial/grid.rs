//! Regular analysis grids.
//!
//! Planar grids use square cells of edge `resolution` in the coordinate unit.
//! Geographic grids use cells that are square in degrees, with the edge set to
//! `resolution_km` of latitude; their area therefore shrinks with `cos(lat)`.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::geo::{bbox, km_per_degree, CoordinateSystem, Point, Polygon, Region, EARTH_RADIUS_KM};
use crate::error::{Error, Result};

/// Extent to tile.
#[derive(Debug, Clone)]
pub enum Domain {
    BoundingBox { min: Point, max: Point },
    Polygons(Vec<Polygon>),
}

impl Domain {
    fn bbox(&self) -> Option<(Point, Point)> {
        match self {
            Domain::BoundingBox { min, max } => (max[0] > min[0] && max[1] > min[1]).then_some((*min, *max)),
            Domain::Polygons(polys) => bbox(polys.iter().flat_map(|p| p.rings.iter().flatten().copied())),
        }
    }

    fn keeps(&self, p: Point) -> bool {
        match self {
            // Every lattice cell overlaps its own bounding box.
            Domain::BoundingBox { .. } => true,
            Domain::Polygons(polys) => polys.iter().any(|poly| poly.contains(p)),
        }
    }
}

/// Lattice geometry shared by all cells of a grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridGeometry {
    pub system: CoordinateSystem,
    /// Lower-left corner of cell (row 0, col 0).
    pub origin: Point,
    /// Cell edge along x and y in coordinate units.
    pub cell_size: [f64; 2],
    pub nx: usize,
    pub ny: usize,
    /// Requested resolution in km (planar: coordinate units).
    pub resolution_km: f64,
}

impl GridGeometry {
    /// `(row, col)` of the lattice cell containing `p`, lower/left edges inclusive.
    pub fn locate(&self, p: Point) -> Option<(usize, usize)> {
        let fx = (p[0] - self.origin[0]) / self.cell_size[0];
        let fy = (p[1] - self.origin[1]) / self.cell_size[1];
        if !(fx >= 0.0 && fy >= 0.0) {
            return None;
        }
        let (col, row) = (fx.floor() as usize, fy.floor() as usize);
        // Points on the outer upper/right boundary belong to the last cell.
        let col = if col == self.nx && fx <= self.nx as f64 + 1e-9 { col - 1 } else { col };
        let row = if row == self.ny && fy <= self.ny as f64 + 1e-9 { row - 1 } else { row };
        (col < self.nx && row < self.ny).then_some((row, col))
    }

    pub fn cell_id(&self, row: usize, col: usize) -> u64 {
        (row * self.nx + col) as u64
    }

    pub fn centroid(&self, row: usize, col: usize) -> Point {
        [self.origin[0] + (col as f64 + 0.5) * self.cell_size[0], self.origin[1] + (row as f64 + 0.5) * self.cell_size[1]]
    }

    /// Cell area in km² (planar: squared coordinate units).
    pub fn area(&self, row: usize) -> f64 {
        match self.system {
            CoordinateSystem::Planar => self.cell_size[0] * self.cell_size[1],
            CoordinateSystem::Geographic => {
                let lat0 = (self.origin[1] + row as f64 * self.cell_size[1]).to_radians();
                let lat1 = (self.origin[1] + (row + 1) as f64 * self.cell_size[1]).to_radians();
                EARTH_RADIUS_KM * EARTH_RADIUS_KM * self.cell_size[0].to_radians() * (lat1.sin() - lat0.sin()).abs()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub id: u64,
    pub row: usize,
    pub col: usize,
    pub centroid: Point,
    pub area_km2: f64,
    pub district: String,
}

#[derive(Debug, Clone)]
pub struct Grid {
    pub geometry: GridGeometry,
    pub cells: Vec<Cell>,
    index: HashMap<u64, usize>,
}

impl Grid {
    pub fn from_cells(geometry: GridGeometry, cells: Vec<Cell>) -> Result<Self> {
        let mut index = HashMap::with_capacity(cells.len());
        for (i, cell) in cells.iter().enumerate() {
            if !(cell.area_km2 > 0.0) {
                return Err(Error::Data(format!("cell {} has non-positive area", cell.id)));
            }
            if index.insert(cell.id, i).is_some() {
                return Err(Error::Data(format!("duplicate cell id {}", cell.id)));
            }
        }
        Ok(Grid { geometry, cells, index })
    }

    /// Full `nx × ny` lattice over a rectangle, every cell assigned by `district`.
    pub fn regular(nx: usize, ny: usize, min: Point, max: Point, district: impl Fn(Point) -> String) -> Result<Self> {
        if nx == 0 || ny == 0 || !(max[0] > min[0] && max[1] > min[1]) {
            return Err(Error::Domain("regular grid needs a non-empty extent".into()));
        }
        let geometry = GridGeometry {
            system: CoordinateSystem::Planar,
            origin: min,
            cell_size: [(max[0] - min[0]) / nx as f64, (max[1] - min[1]) / ny as f64],
            nx,
            ny,
            resolution_km: (max[0] - min[0]) / nx as f64,
        };
        let mut cells = Vec::with_capacity(nx * ny);
        for row in 0..ny {
            for col in 0..nx {
                let centroid = geometry.centroid(row, col);
                cells.push(Cell {
                    id: geometry.cell_id(row, col),
                    row,
                    col,
                    centroid,
                    area_km2: geometry.area(row),
                    district: district(centroid),
                });
            }
        }
        Grid::from_cells(geometry, cells)
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Index into `cells` of the cell containing `p`, if that cell exists.
    pub fn cell_index_at(&self, p: Point) -> Option<usize> {
        let (row, col) = self.geometry.locate(p)?;
        self.index.get(&self.geometry.cell_id(row, col)).copied()
    }

    pub fn index_of(&self, id: u64) -> Option<usize> {
        self.index.get(&id).copied()
    }

    /// Keep only cells for which `keep` is true (habitability mask).
    pub fn retain(&mut self, keep: &[bool]) {
        assert_eq!(keep.len(), self.cells.len(), "mask length must match cell count");
        let mut it = keep.iter();
        self.cells.retain(|_| *it.next().unwrap());
        self.index = self.cells.iter().enumerate().map(|(i, c)| (c.id, i)).collect();
    }

    pub fn centroids(&self) -> Vec<Point> {
        self.cells.iter().map(|c| c.centroid).collect()
    }
}

/// Tile `domain` with cells of edge `resolution_km`, assigning each cell to
/// the first district polygon containing its centroid. Cells whose centroid
/// lies outside the domain or outside every district are dropped.
pub fn build_grid(domain: &Domain, resolution_km: f64, districts: &[Region], system: CoordinateSystem) -> Result<Grid> {
    if !(resolution_km > 0.0 && resolution_km.is_finite()) {
        return Err(Error::Domain(format!("resolution {resolution_km} must be positive")));
    }
    let (min, max) = domain.bbox().ok_or_else(|| Error::Domain("domain is empty".into()))?;
    if districts.is_empty() {
        return Err(Error::Domain("no district polygons supplied".into()));
    }
    let edge = match system {
        CoordinateSystem::Planar => resolution_km,
        CoordinateSystem::Geographic => resolution_km / km_per_degree(),
    };
    let count = |extent: f64| ((extent / edge) - 1e-9).ceil().max(1.0) as usize;
    let geometry = GridGeometry {
        system,
        origin: min,
        cell_size: [edge, edge],
        nx: count(max[0] - min[0]),
        ny: count(max[1] - min[1]),
        resolution_km,
    };
    let mut cells = Vec::new();
    for row in 0..geometry.ny {
        let area = geometry.area(row);
        for col in 0..geometry.nx {
            let centroid = geometry.centroid(row, col);
            if !domain.keeps(centroid) {
                continue;
            }
            if let Some(d) = districts.iter().find(|d| d.contains(centroid)) {
                cells.push(Cell { id: geometry.cell_id(row, col), row, col, centroid, area_km2: area, district: d.name.clone() });
            }
        }
    }
    if cells.is_empty() {
        return Err(Error::Domain("grid has no cells inside the domain and districts".into()));
    }
    Grid::from_cells(geometry, cells)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn whole(min: Point, max: Point) -> Vec<Region> {
        vec![Region { name: "all".into(), polygons: vec![Polygon::rectangle(min, max)] }]
    }

    #[test]
    fn unit_square_45_by_45() {
        let domain = Domain::BoundingBox { min: [0.0, 0.0], max: [1.0, 1.0] };
        let grid = build_grid(&domain, 1.0 / 45.0, &whole([0.0, 0.0], [1.0, 1.0]), CoordinateSystem::Planar).unwrap();
        assert_eq!(grid.len(), 2025);
        assert_eq!((grid.geometry.nx, grid.geometry.ny), (45, 45));
    }

    #[test]
    fn planar_counts_are_ceiled_per_axis() {
        let domain = Domain::BoundingBox { min: [0.0, 0.0], max: [10.0, 4.5] };
        let grid = build_grid(&domain, 2.0, &whole([-1.0, -1.0], [20.0, 20.0]), CoordinateSystem::Planar).unwrap();
        assert_eq!((grid.geometry.nx, grid.geometry.ny), (5, 3));
        assert_eq!(grid.len(), 15);
    }

    #[test]
    fn single_cell_domain() {
        let domain = Domain::BoundingBox { min: [0.0, 0.0], max: [1.5, 1.5] };
        let grid = build_grid(&domain, 1.5, &whole([0.0, 0.0], [1.5, 1.5]), CoordinateSystem::Planar).unwrap();
        assert_eq!(grid.len(), 1);
        assert!((grid.cells[0].area_km2 - 2.25).abs() < 1e-12);
    }

    #[test]
    fn empty_domain_is_an_error() {
        let domain = Domain::Polygons(vec![]);
        assert!(build_grid(&domain, 1.0, &whole([0.0, 0.0], [1.0, 1.0]), CoordinateSystem::Planar).is_err());
    }

    #[test]
    fn geographic_area_follows_latitude() {
        // A 1.5 km edge measured along the meridian.
        let domain = Domain::BoundingBox { min: [33.0, -17.2], max: [33.2, -9.3] };
        let grid = build_grid(&domain, 1.5, &whole([30.0, -20.0], [40.0, -5.0]), CoordinateSystem::Geographic).unwrap();
        for cell in &grid.cells {
            let expected = 2.25 * cell.centroid[1].to_radians().cos();
            assert!((cell.area_km2 - expected).abs() / expected < 1e-4);
        }
    }

    #[test]
    fn malawi_band_with_fourteen_millidegree_cells() {
        // 0.014 degree cells over the latitude band of Malawi reproduce the
        // 2.318–2.392 km² spread quoted for the 1.5 km analysis grid.
        let res_km = 0.014 * km_per_degree();
        let domain = Domain::BoundingBox { min: [34.0, -17.13], max: [34.1, -9.37] };
        let grid = build_grid(&domain, res_km, &whole([30.0, -20.0], [40.0, -5.0]), CoordinateSystem::Geographic).unwrap();
        let (lo, hi) = grid.cells.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), c| (lo.min(c.area_km2), hi.max(c.area_km2)));
        assert!(lo >= 2.315 && hi <= 2.393, "{lo} {hi}");
        assert!((lo - 2.318).abs() < 5e-3 && (hi - 2.392).abs() < 5e-3, "{lo} {hi}");
    }

    #[test]
    fn retain_rebuilds_the_index() {
        let mut grid = Grid::regular(3, 3, [0.0, 0.0], [3.0, 3.0], |_| "d".into()).unwrap();
        let mask: Vec<bool> = (0..9).map(|i| i != 4).collect();
        grid.retain(&mask);
        assert_eq!(grid.len(), 8);
        assert_eq!(grid.cell_index_at([1.5, 1.5]), None);
        assert_eq!(grid.cell_index_at([2.5, 2.5]), Some(7));
        assert_eq!(grid.cell_index_at([3.0, 3.0]), Some(7));
    }
}
