//! Analysis grid construction and covariate alignment.

pub mod geo;
pub mod grid;
pub mod kriging;
pub mod raster;

pub use geo::{CoordinateSystem, Point, Polygon, Projection, Region};
pub use grid::{build_grid, Cell, Domain, Grid, GridGeometry};
pub use kriging::{fit_kriging, krige_predict, leave_one_out, KrigingPrediction, MaternModel, PointCovariate, Trend, TrendKind};
pub use raster::{nearest_value, raster_to_cells, NearestIndex, RasterPoints, Transform};
