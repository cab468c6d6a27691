//! Command-line pipeline: file contracts, run configuration and subcommands.
//!
//! Every subcommand reads the optional TOML run configuration, resolves
//! relative paths against the configuration file's directory, and writes its
//! outputs under `--out`. Files written by one step are found by the next
//! through fixed names in that directory unless the configuration points
//! elsewhere.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::data::{
    read_cells, read_districts, read_marks, read_points, write_cells, write_marks, CellTable, Covariates, DistrictInfo, MarkTable,
    Standardizer,
};
use crate::diagnostics::{count_residuals, pearson, ppp, rootogram_data, size_residuals, write_rootogram, Observed, Statistic};
use crate::error::{Error, Result};
use crate::inference::{fit_count, fit_size, CountData, CountFit, GpFrame, ModelSpec, PosteriorDraws, SamplerConfig, SizeData};
use crate::predict::{
    aggregate, predict, write_cell_summary, write_lambda_summary, write_region_summary, CountMode, PredictOptions, RegionMap, SizeMode,
    REGION_PERCENTS,
};
use crate::seed::derive_seed;
use crate::sim::{run_study, SimConfig};
use crate::spatial::geo::read_geojson_regions;
use crate::spatial::{
    build_grid, fit_kriging, krige_predict, nearest_value, raster_to_cells, Cell, CoordinateSystem, Domain, Grid, GridGeometry,
    PointCovariate, Polygon, Projection, RasterPoints, Region, Transform, Trend, TrendKind,
};

pub const CELLS: &str = "cells.csv";
pub const GRID: &str = "grid.json";
pub const CELLS_ALIGNED: &str = "cells_aligned.csv";
pub const MARKS_ALIGNED: &str = "marks_aligned.csv";
pub const STANDARDIZER: &str = "standardizer.json";
pub const GP_FRAME: &str = "gp_frame.json";

#[derive(Debug, Parser)]
#[command(name = "presence-abundance", version, about = "Abundance mapping from marked presence-only point data")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Root seed; overrides `seed` in the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker thread cap.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Which {
    Count,
    Size,
    Both,
}

impl Which {
    fn count(self) -> bool {
        self != Which::Size
    }

    fn size(self) -> bool {
        self != Which::Count
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build the analysis grid.
    Grid,
    /// Align point and raster covariates to cells and marks; count marks per cell.
    Align,
    /// Sample the posterior of the size and/or count model.
    Fit {
        #[arg(long, value_enum, default_value_t = Which::Both)]
        model: Which,
    },
    /// Predict, calibrate and summarize cell and district abundance.
    Predict,
    /// Posterior predictive p-values, residuals and rootogram.
    Diagnose {
        #[arg(long, value_enum, default_value_t = Which::Both)]
        model: Which,
    },
    /// Run the simulation study.
    Simulate {
        /// Override the number of replicates.
        #[arg(long)]
        replicates: Option<usize>,
    },
}

// ---------------------------------------------------------------------------
// Configuration

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub align: AlignConfig,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub model: ModelSpec,
    #[serde(default)]
    pub sampler: SamplerConfig,
    #[serde(default)]
    pub fit: FitConfig,
    #[serde(default)]
    pub predict: PredictConfig,
    #[serde(default)]
    pub diagnose: DiagnoseConfig,
    #[serde(default)]
    pub simulate: SimConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    /// `[xmin, ymin, xmax, ymax]`; used when no domain file is given.
    pub bbox: Option<[f64; 4]>,
    /// GeoJSON polygons outlining the domain.
    pub domain: Option<PathBuf>,
    /// GeoJSON district polygons; without it every cell belongs to `district`.
    pub districts: Option<PathBuf>,
    pub district_property: String,
    pub district: String,
    pub resolution_km: f64,
    pub system: CoordinateSystem,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            bbox: None,
            domain: None,
            districts: None,
            district_property: "name".into(),
            district: "all".into(),
            resolution_km: 1.5,
            system: CoordinateSystem::Planar,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AlignConfig {
    /// Defaults to `<out>/cells.csv`.
    pub cells: Option<PathBuf>,
    /// Defaults to `<out>/grid.json`.
    pub grid: Option<PathBuf>,
    /// Raw marks `lon,lat,district,value`; an empty district takes the cell's.
    pub marks: Option<PathBuf>,
    pub kriged: Vec<KrigedCovariate>,
    pub raster: Vec<RasterCovariate>,
}

/// A covariate observed at scattered sites (`lon,lat,value`), kriged to cell
/// centroids and mark locations.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KrigedCovariate {
    pub name: String,
    pub file: PathBuf,
    #[serde(default = "default_smoothness")]
    pub smoothness: f64,
    #[serde(default)]
    pub trend: TrendKind,
}

fn default_smoothness() -> f64 {
    1.5
}

/// A covariate on a fine lattice of points (`lon,lat,value`), averaged into
/// cells and read at marks from the nearest point.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RasterCovariate {
    pub name: String,
    pub file: PathBuf,
    #[serde(default)]
    pub transform: Transform,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    /// Defaults to `<out>/cells_aligned.csv`.
    pub cells: Option<PathBuf>,
    /// Defaults to `<out>/marks_aligned.csv`.
    pub marks: Option<PathBuf>,
    /// `district,pi,known_total`.
    pub districts: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitConfig {
    /// Fail with exit code 3 when any parameter's split-R̂ exceeds this.
    pub max_rhat: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PredictConfig {
    pub count_mode: CountMode,
    pub size_mode: SizeMode,
    /// Also aggregate to square blocks of this edge (coordinate units).
    pub block: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiagnoseConfig {
    pub replicates: usize,
    pub max_count: u64,
}

impl Default for DiagnoseConfig {
    fn default() -> Self {
        DiagnoseConfig { replicates: 500, max_count: 10 }
    }
}

impl RunConfig {
    /// Parse a configuration file; relative paths inside it are resolved
    /// against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::schema(path, format!("cannot read configuration: {e}")))?;
        let mut cfg: RunConfig = toml::from_str(&text).map_err(|e| Error::schema(path, e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve(base);
        Ok(cfg)
    }

    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(p) = p {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        };
        fix(&mut self.grid.domain);
        fix(&mut self.grid.districts);
        fix(&mut self.align.cells);
        fix(&mut self.align.grid);
        fix(&mut self.align.marks);
        fix(&mut self.data.cells);
        fix(&mut self.data.marks);
        fix(&mut self.data.districts);
        for k in &mut self.align.kriged {
            if k.file.is_relative() {
                k.file = base.join(&k.file);
            }
        }
        for r in &mut self.align.raster {
            if r.file.is_relative() {
                r.file = base.join(&r.file);
            }
        }
    }
}

/// Process exit code for an error: 2 for bad input, 3 for sampler failure.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Initialization(_) | Error::Sampler(_) => 3,
        Error::Schema { .. } | Error::Data(_) | Error::Config(_) | Error::Io { .. } | Error::Csv { .. } | Error::Json { .. } => 2,
        _ => 1,
    }
}

/// Parse-free entry point used by the binary and by tests.
pub fn run(cli: &Cli) -> Result<()> {
    let cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let seed = cli.seed.or(cfg.seed).unwrap_or(0);
    fs::create_dir_all(&cli.out).map_err(|e| Error::io(&cli.out, e))?;
    let out = cli.out.as_path();
    match &cli.command {
        Command::Grid => cmd_grid(&cfg.grid, out),
        Command::Align => cmd_align(&cfg.align, out),
        Command::Fit { model } => cmd_fit(&cfg, *model, seed, out),
        Command::Predict => cmd_predict(&cfg, seed, out),
        Command::Diagnose { model } => cmd_diagnose(&cfg, *model, seed, out),
        Command::Simulate { replicates } => {
            let mut sim = cfg.simulate.clone();
            if let Some(r) = replicates {
                sim.replicates = *r;
            }
            if cli.seed.is_some() || cfg.seed.is_some() {
                sim.seed = seed;
            }
            cmd_simulate(&sim, out)
        }
    }
}

/// Cap the global worker pool. Only the first call in a process takes effect.
pub fn set_threads(threads: Option<usize>) {
    if let Some(n) = threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            log::warn!("thread pool already initialized: {e}");
        }
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::json(path, e))?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::schema(path, format!("cannot read file: {e}")))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path, e))
}

fn require_file(path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::schema(path, "file not found"))
    }
}

// ---------------------------------------------------------------------------
// grid

pub fn cmd_grid(cfg: &GridConfig, out: &Path) -> Result<()> {
    for p in [&cfg.domain, &cfg.districts].into_iter().flatten() {
        require_file(p)?;
    }
    let domain = match (&cfg.domain, cfg.bbox) {
        (Some(path), _) => {
            Domain::Polygons(read_geojson_regions(path, &cfg.district_property)?.into_iter().flat_map(|r| r.polygons).collect())
        }
        (None, Some([x0, y0, x1, y1])) => Domain::BoundingBox { min: [x0, y0], max: [x1, y1] },
        (None, None) => return Err(Error::Config("grid needs either `domain` or `bbox`".into())),
    };
    let districts = match &cfg.districts {
        Some(path) => read_geojson_regions(path, &cfg.district_property)?,
        None => {
            let (min, max) = match &domain {
                Domain::BoundingBox { min, max } => (*min, *max),
                Domain::Polygons(polys) => crate::spatial::geo::bbox(polys.iter().flat_map(|p| p.rings.iter().flatten().copied()))
                    .ok_or_else(|| Error::Domain("domain is empty".into()))?,
            };
            vec![Region { name: cfg.district.clone(), polygons: vec![Polygon::rectangle(min, max)] }]
        }
    };
    let grid = build_grid(&domain, cfg.resolution_km, &districts, cfg.system)?;
    log::info!("grid: {} cells ({} × {} lattice)", grid.len(), grid.geometry.nx, grid.geometry.ny);
    write_cells(&out.join(CELLS), &CellTable::from_grid(&grid))?;
    write_json(&out.join(GRID), &grid.geometry)
}

/// Rebuild a grid from its geometry sidecar and a cell table written for it.
pub fn grid_from_table(geometry: GridGeometry, cells: &CellTable) -> Result<Grid> {
    let cells = cells
        .ids
        .iter()
        .enumerate()
        .map(|(i, &id)| {
            let (row, col) = ((id as usize) / geometry.nx, (id as usize) % geometry.nx);
            Cell { id, row, col, centroid: cells.coords[i], area_km2: cells.area_km2[i], district: cells.districts[i].clone() }
        })
        .collect();
    Grid::from_cells(geometry, cells)
}

// ---------------------------------------------------------------------------
// align

pub fn cmd_align(cfg: &AlignConfig, out: &Path) -> Result<()> {
    let cells_path = cfg.cells.clone().unwrap_or_else(|| out.join(CELLS));
    let grid_path = cfg.grid.clone().unwrap_or_else(|| out.join(GRID));
    let mut cells = read_cells(&cells_path)?;
    let geometry: GridGeometry = read_json(&grid_path)?;
    let grid = grid_from_table(geometry, &cells)?;
    let projection = Projection::for_points(geometry.system, &cells.coords);

    let mut marks = match &cfg.marks {
        Some(p) => Some(read_marks(p)?),
        None => None,
    };
    if let Some(m) = marks.as_mut() {
        let mut counts = vec![0u64; cells.len()];
        let mut outside = 0;
        for (k, p) in m.coords.iter().enumerate() {
            match grid.cell_index_at(*p) {
                Some(i) => {
                    counts[i] += 1;
                    if m.districts[k].is_empty() {
                        m.districts[k] = cells.districts[i].clone();
                    }
                }
                None => outside += 1,
            }
        }
        if outside > 0 {
            log::warn!("{outside} marks fall outside every cell and are not counted");
        }
        cells.counts = counts.into_iter().map(Some).collect();
    }

    for k in &cfg.kriged {
        let (sites, values) = read_points(&k.file)?;
        let cov = PointCovariate::new(&k.name, sites, values).map_err(|e| Error::schema(&k.file, e.to_string()))?;
        let trend = Trend { kind: k.trend, extra: None };
        let model = fit_kriging(&cov, &trend, k.smoothness, projection)?;
        write_json(&out.join(format!("kriging_{}.json", k.name)), &model)?;
        let at_cells = krige_predict(&model, &cov, &trend, &cells.coords, None)?;
        cells.covariates.push(&k.name, at_cells.mean);
        if let Some(m) = marks.as_mut() {
            let at_marks = krige_predict(&model, &cov, &trend, &m.coords, None)?;
            m.covariates.push(&k.name, at_marks.mean);
        }
    }

    for r in &cfg.raster {
        let (points, values) = read_points(&r.file)?;
        let raster = RasterPoints::new(points, values)?;
        let averaged = raster_to_cells(&raster, &grid, r.transform);
        // Cells holding no raster point take the nearest point's value.
        let empty: Vec<usize> = (0..cells.len()).filter(|&i| averaged[i].is_none()).collect();
        let fill = nearest_value(&raster, &empty.iter().map(|&i| cells.coords[i]).collect::<Vec<_>>(), &projection)?;
        let mut column: Vec<f64> = averaged.iter().map(|v| v.unwrap_or(f64::NAN)).collect();
        for (&i, v) in empty.iter().zip(fill) {
            column[i] = r.transform.apply(v);
        }
        if let Some(i) = column.iter().position(|v| !v.is_finite()) {
            return Err(Error::schema(
                &r.file,
                format!("covariate `{}` is not finite at cell {} after the {:?} transform", r.name, cells.ids[i], r.transform),
            ));
        }
        cells.covariates.push(&r.name, column);
        if let Some(m) = marks.as_mut() {
            let at_marks: Vec<f64> = nearest_value(&raster, &m.coords, &projection)?.into_iter().map(|v| r.transform.apply(v)).collect();
            if let Some(i) = at_marks.iter().position(|v| !v.is_finite()) {
                return Err(Error::schema(
                    &r.file,
                    format!("covariate `{}` is not finite at mark {} after the {:?} transform", r.name, i + 1, r.transform),
                ));
            }
            m.covariates.push(&r.name, at_marks);
        }
    }

    write_cells(&out.join(CELLS_ALIGNED), &cells)?;
    if let Some(m) = &marks {
        write_marks(&out.join(MARKS_ALIGNED), m)?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// fit

struct Inputs {
    cells: CellTable,
    marks: Option<MarkTable>,
    info: Option<DistrictInfo>,
}

fn load_inputs(cfg: &RunConfig, out: &Path, need_marks: bool, need_info: bool) -> Result<Inputs> {
    let cells_path = cfg.data.cells.clone().unwrap_or_else(|| out.join(CELLS_ALIGNED));
    let cells = read_cells(&cells_path)?;
    check_columns(&cells_path, &cells.covariates, &cfg.model.count_covariates())?;
    let marks = if need_marks {
        let p = cfg.data.marks.clone().unwrap_or_else(|| out.join(MARKS_ALIGNED));
        let m = read_marks(&p)?;
        check_columns(&p, &m.covariates, &cfg.model.size_covariates())?;
        Some(m)
    } else {
        None
    };
    let info = if need_info {
        let p = cfg.data.districts.as_ref().ok_or_else(|| Error::Config("`data.districts` is required".into()))?;
        Some(read_districts(p)?)
    } else {
        None
    };
    Ok(Inputs { cells, marks, info })
}

fn check_columns(path: &Path, cov: &Covariates, names: &[String]) -> Result<()> {
    match names.iter().find(|n| cov.column(n).is_none()) {
        Some(n) => Err(Error::schema(path, format!("missing covariate column `{n}`"))),
        None => Ok(()),
    }
}

/// Standardize model covariates using moments over all cells; marks reuse them.
fn standardize(spec: &ModelSpec, inputs: &mut Inputs, saved: Option<&Standardizer>) -> Result<Standardizer> {
    let std = match saved {
        Some(s) => s.clone(),
        None => {
            let names: Vec<String> = spec.all_covariates().into_iter().filter(|n| inputs.cells.covariates.column(n).is_some()).collect();
            Standardizer::fit(&inputs.cells.covariates, &names, None)?
        }
    };
    let cell_names: Vec<usize> = (0..std.names.len()).filter(|&k| inputs.cells.covariates.column(&std.names[k]).is_some()).collect();
    apply_subset(&std, &cell_names, &mut inputs.cells.covariates)?;
    if let Some(m) = inputs.marks.as_mut() {
        let mark_names: Vec<usize> = (0..std.names.len()).filter(|&k| m.covariates.column(&std.names[k]).is_some()).collect();
        apply_subset(&std, &mark_names, &mut m.covariates)?;
    }
    Ok(std)
}

fn apply_subset(std: &Standardizer, keep: &[usize], cov: &mut Covariates) -> Result<()> {
    Standardizer {
        names: keep.iter().map(|&k| std.names[k].clone()).collect(),
        means: keep.iter().map(|&k| std.means[k]).collect(),
        sds: keep.iter().map(|&k| std.sds[k]).collect(),
    }
    .apply(cov)
}

fn draws_path(out: &Path, model: &str) -> PathBuf {
    out.join(format!("draws_{model}.csv"))
}

fn diagnostics_path(out: &Path, model: &str) -> PathBuf {
    out.join(format!("diagnostics_{model}.json"))
}

pub fn cmd_fit(cfg: &RunConfig, which: Which, seed: u64, out: &Path) -> Result<()> {
    cfg.model.validate()?;
    cfg.sampler.validate()?;
    let mut inputs = load_inputs(cfg, out, which.size(), which.count())?;
    let std = standardize(&cfg.model, &mut inputs, None)?;
    write_json(&out.join(STANDARDIZER), &std)?;

    if which.size() {
        let marks = inputs.marks.as_ref().expect("marks loaded");
        let data = SizeData::new(marks, &cfg.model)?;
        let sampler = SamplerConfig { seed: derive_seed(seed, "fit-size", 0), ..cfg.sampler };
        let draws = sampled(fit_size(&data, &cfg.model, &sampler), &diagnostics_path(out, "size"))?;
        finish_fit(cfg, &draws, out, "size")?;
    }
    if which.count() {
        let info = inputs.info.as_ref().expect("districts loaded");
        let data = CountData::new(&inputs.cells, info, &cfg.model)?;
        let sampler = SamplerConfig { seed: derive_seed(seed, "fit-count", 0), ..cfg.sampler };
        let fit = sampled(fit_count(&data, &cfg.model, &sampler), &diagnostics_path(out, "count"))?;
        match &fit.gp_frame {
            Some(frame) => write_json(&out.join(GP_FRAME), frame)?,
            None => {
                let _ = fs::remove_file(out.join(GP_FRAME));
            }
        }
        finish_fit(cfg, &fit.draws, out, "count")?;
    }
    Ok(())
}

/// Record a failed sampler run in the diagnostics file before propagating it.
fn sampled<T>(result: Result<T>, diagnostics: &Path) -> Result<T> {
    result.map_err(|e| {
        if exit_code(&e) == 3 {
            let _ = write_json(diagnostics, &serde_json::json!({ "error": e.to_string() }));
            Error::Initialization(format!("{e}; see {}", diagnostics.display()))
        } else {
            e
        }
    })
}

fn finish_fit(cfg: &RunConfig, draws: &PosteriorDraws, out: &Path, model: &str) -> Result<()> {
    draws.write_csv(&draws_path(out, model))?;
    let diag = diagnostics_path(out, model);
    write_json(&diag, &draws.diagnostics)?;
    let worst = draws.diagnostics.max_rhat();
    log::info!("{model}: max split-R̂ {worst:.3}, min ESS {:.0}", draws.diagnostics.min_ess());
    match cfg.fit.max_rhat {
        Some(limit) if !(worst <= limit) => {
            Err(Error::Sampler(format!("{model} model split-R̂ {worst:.3} exceeds {limit}; see {}", diag.display())))
        }
        _ => Ok(()),
    }
}

fn load_count_fit(out: &Path) -> Result<CountFit> {
    let draws = PosteriorDraws::read_csv(&draws_path(out, "count"))?;
    let frame_path = out.join(GP_FRAME);
    let gp_frame: Option<GpFrame> = if frame_path.is_file() { Some(read_json(&frame_path)?) } else { None };
    Ok(CountFit { draws, gp_frame })
}

// ---------------------------------------------------------------------------
// predict

pub fn cmd_predict(cfg: &RunConfig, seed: u64, out: &Path) -> Result<()> {
    let count = load_count_fit(out)?;
    let size_path = draws_path(out, "size");
    let size = if size_path.is_file() { Some(PosteriorDraws::read_csv(&size_path)?) } else { None };
    let mut inputs = load_inputs(cfg, out, false, true)?;
    if size.is_some() {
        check_columns(
            &cfg.data.cells.clone().unwrap_or_else(|| out.join(CELLS_ALIGNED)),
            &inputs.cells.covariates,
            &cfg.model.size_covariates(),
        )?;
    }
    let saved: Standardizer = read_json(&out.join(STANDARDIZER))?;
    standardize(&cfg.model, &mut inputs, Some(&saved))?;
    let info = inputs.info.as_ref().expect("districts loaded");
    let set = predict(
        &count,
        size.as_ref(),
        &cfg.model,
        &inputs.cells,
        info,
        PredictOptions { count_mode: cfg.predict.count_mode, size_mode: cfg.predict.size_mode },
        derive_seed(seed, "predict", 0),
    )?;
    for (d, district) in &set.degenerate {
        log::warn!("draw {d}: district {district} has zero predicted count but a positive known total");
    }

    write_cell_summary(&out.join("cells_count.csv"), &set.cell_ids, &set.counts)?;
    write_cell_summary(&out.join("cells_count_uncalibrated.csv"), &set.cell_ids, &set.uncalibrated)?;
    write_lambda_summary(&out.join("lambda.csv"), &set)?;
    let districts = RegionMap::from_labels(&set.districts);
    write_region_summary(&out.join("districts_count.csv"), &aggregate(&set.counts, &districts, &REGION_PERCENTS), &REGION_PERCENTS)?;
    let blocks = cfg.predict.block.map(|b| RegionMap::coarse(&set.coords, b)).transpose()?;
    if let Some(b) = &blocks {
        write_region_summary(&out.join("blocks_count.csv"), &aggregate(&set.counts, b, &REGION_PERCENTS), &REGION_PERCENTS)?;
    }
    if let Some(fsw) = set.fsw() {
        write_cell_summary(&out.join("cells_size_total.csv"), &set.cell_ids, &fsw)?;
        write_region_summary(&out.join("districts_size_total.csv"), &aggregate(&fsw, &districts, &REGION_PERCENTS), &REGION_PERCENTS)?;
        if let Some(b) = &blocks {
            write_region_summary(&out.join("blocks_size_total.csv"), &aggregate(&fsw, b, &REGION_PERCENTS), &REGION_PERCENTS)?;
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// diagnose

pub fn cmd_diagnose(cfg: &RunConfig, which: Which, seed: u64, out: &Path) -> Result<()> {
    let mut inputs = load_inputs(cfg, out, which.size(), which.count())?;
    let saved: Standardizer = read_json(&out.join(STANDARDIZER))?;
    standardize(&cfg.model, &mut inputs, Some(&saved))?;
    let reps = cfg.diagnose.replicates;
    let mut count_resid: Option<Vec<(u64, f64)>> = None;

    if which.count() {
        let fit = load_count_fit(out)?;
        let mut spec = cfg.model.clone();
        // The frame saved at fit time fixes the basis; CountData rebuilds it
        // from the same cells.
        spec.gp = fit.gp_frame.map(|f| f.spec);
        let data = CountData::new(&inputs.cells, inputs.info.as_ref().expect("districts loaded"), &spec)?;
        let n = reps.min(fit.draws.n_draws());
        if n < reps {
            log::warn!("count: only {n} draws available for {reps} replicates");
        }
        let report = ppp(&fit.draws, Observed::Count(&data), &spec, &Statistic::ALL, n, derive_seed(seed, "ppp-count", 0))?;
        write_json(&out.join("ppp_count.json"), &report)?;
        let rows = rootogram_data(&fit.draws, &data, &spec, cfg.diagnose.max_count, n, derive_seed(seed, "rootogram", 0))?;
        write_rootogram(&out.join("rootogram_count.csv"), &rows)?;
        let resid = count_residuals(&fit.draws, &data, &spec)?;
        let ids: Vec<u64> = data.cell_rows.iter().map(|&i| inputs.cells.ids[i]).collect();
        write_pairs(&out.join("residuals_count.csv"), "cell_id", &ids.iter().map(|i| i.to_string()).collect::<Vec<_>>(), &resid)?;
        count_resid = Some(ids.into_iter().zip(resid).collect());
    }

    if which.size() {
        let draws = PosteriorDraws::read_csv(&draws_path(out, "size"))?;
        let marks = inputs.marks.as_ref().expect("marks loaded");
        let data = SizeData::new(marks, &cfg.model)?;
        let n = reps.min(draws.n_draws());
        let report = ppp(&draws, Observed::Size(&data), &cfg.model, &Statistic::ALL, n, derive_seed(seed, "ppp-size", 0))?;
        write_json(&out.join("ppp_size.json"), &report)?;

        let grid_path = cfg.align.grid.clone().unwrap_or_else(|| out.join(GRID));
        let cell_of_mark: Vec<Option<u64>> = if grid_path.is_file() {
            let geometry: GridGeometry = read_json(&grid_path)?;
            let grid = grid_from_table(geometry, &inputs.cells)?;
            marks.coords.iter().map(|p| grid.cell_index_at(*p).map(|i| grid.cells[i].id)).collect()
        } else {
            vec![None; marks.len()]
        };
        let by_cell = size_residuals(&draws, &data, &cfg.model, &cell_of_mark)?;
        let labels: Vec<String> = by_cell.iter().map(|(c, _)| c.to_string()).collect();
        let values: Vec<f64> = by_cell.iter().map(|(_, r)| *r).collect();
        write_pairs(&out.join("residuals_size.csv"), "cell_id", &labels, &values)?;

        if let Some(count) = &count_resid {
            let lookup: std::collections::HashMap<u64, f64> = count.iter().copied().collect();
            let (a, b): (Vec<f64>, Vec<f64>) = by_cell.iter().filter_map(|(c, r)| lookup.get(c).map(|q| (*r, *q))).unzip();
            write_json(
                &out.join("residual_correlation.json"),
                &serde_json::json!({ "cells": a.len(), "pearson": if a.len() > 1 { Some(pearson(&a, &b)) } else { None } }),
            )?;
        }
    }
    Ok(())
}

fn write_pairs(path: &Path, key: &str, labels: &[String], values: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    w.write_record([key, "residual"]).map_err(|e| Error::csv(path, e))?;
    for (l, v) in labels.iter().zip(values) {
        w.write_record([l.clone(), v.to_string()]).map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

// ---------------------------------------------------------------------------
// simulate

pub fn cmd_simulate(cfg: &SimConfig, out: &Path) -> Result<()> {
    cfg.validate()?;
    let results = run_study(cfg)?;
    results.write_csv(&out.join("scenarios.csv"))?;
    results.write_summary_json(&out.join("scenarios_summary.json"))
}
