//! Tabular inputs: grid cells, marks, district information, and the CSV
//! formats they travel in.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spatial::Point;

/// Named real-valued columns sharing one row order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Covariates {
    pub names: Vec<String>,
    pub columns: Vec<Vec<f64>>,
}

impl Covariates {
    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.names.iter().position(|n| n == name).map(|i| self.columns[i].as_slice())
    }

    pub fn push(&mut self, name: impl Into<String>, values: Vec<f64>) {
        let name = name.into();
        match self.names.iter().position(|n| *n == name) {
            Some(i) => self.columns[i] = values,
            None => {
                self.names.push(name);
                self.columns.push(values);
            }
        }
    }

    /// Row-major design rows for `names`, or the first missing name.
    pub fn rows(&self, names: &[String]) -> std::result::Result<Vec<Vec<f64>>, String> {
        let cols: Vec<&[f64]> = names.iter().map(|n| self.column(n).ok_or_else(|| n.clone())).collect::<std::result::Result<_, _>>()?;
        let n = self.columns.first().map_or(0, Vec::len);
        Ok((0..n).map(|i| cols.iter().map(|c| c[i]).collect()).collect())
    }
}

/// Grid cells with aligned covariates and, where surveyed, observed counts.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CellTable {
    pub ids: Vec<u64>,
    pub coords: Vec<Point>,
    pub area_km2: Vec<f64>,
    pub districts: Vec<String>,
    pub covariates: Covariates,
    pub counts: Vec<Option<u64>>,
}

impl CellTable {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn from_grid(grid: &crate::spatial::Grid) -> Self {
        CellTable {
            ids: grid.cells.iter().map(|c| c.id).collect(),
            coords: grid.centroids(),
            area_km2: grid.cells.iter().map(|c| c.area_km2).collect(),
            districts: grid.cells.iter().map(|c| c.district.clone()).collect(),
            covariates: Covariates::default(),
            counts: vec![None; grid.len()],
        }
    }

    /// Rows for which `keep` is true.
    pub fn subset(&self, keep: &[bool]) -> Self {
        let pick = |v: &[f64]| v.iter().zip(keep).filter(|(_, k)| **k).map(|(x, _)| *x).collect::<Vec<_>>();
        let mut covariates = Covariates::default();
        for (n, c) in self.covariates.names.iter().zip(&self.covariates.columns) {
            covariates.push(n.clone(), pick(c));
        }
        let sel = |i: &usize| keep[*i];
        let idx: Vec<usize> = (0..self.len()).filter(sel).collect();
        CellTable {
            ids: idx.iter().map(|&i| self.ids[i]).collect(),
            coords: idx.iter().map(|&i| self.coords[i]).collect(),
            area_km2: idx.iter().map(|&i| self.area_km2[i]).collect(),
            districts: idx.iter().map(|&i| self.districts[i].clone()).collect(),
            covariates,
            counts: idx.iter().map(|&i| self.counts[i]).collect(),
        }
    }
}

/// Observed points carrying a non-negative mark.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MarkTable {
    pub coords: Vec<Point>,
    pub districts: Vec<String>,
    pub values: Vec<f64>,
    pub covariates: Covariates,
}

impl MarkTable {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct District {
    /// Sampling probability; `None` when the district's counts are not modeled.
    pub pi: Option<f64>,
    pub known_total: Option<f64>,
}

/// Per-district sampling probability and known totals.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DistrictInfo(pub BTreeMap<String, District>);

impl DistrictInfo {
    pub fn get(&self, name: &str) -> Option<&District> {
        self.0.get(name)
    }

    pub fn pi(&self, name: &str) -> Option<f64> {
        self.0.get(name).and_then(|d| d.pi)
    }

    pub fn known_total(&self, name: &str) -> Option<f64> {
        self.0.get(name).and_then(|d| d.known_total)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, d) in &self.0 {
            if let Some(pi) = d.pi {
                if !(0.0..=1.0).contains(&pi) {
                    return Err(Error::Domain(format!("district {name}: pi = {pi} outside [0, 1]")));
                }
            }
            if let Some(t) = d.known_total {
                if !(t >= 0.0 && t.is_finite()) {
                    return Err(Error::Domain(format!("district {name}: known total {t} must be non-negative")));
                }
            }
        }
        Ok(())
    }
}

/// Column centring and scaling learned on one set of rows and reused elsewhere.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub names: Vec<String>,
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
}

impl Standardizer {
    /// Learn mean and sd of each named column over rows where `rows` is true
    /// (all rows when `rows` is `None`). Constant columns are only centred.
    pub fn fit(cov: &Covariates, names: &[String], rows: Option<&[bool]>) -> Result<Self> {
        let mut means = Vec::with_capacity(names.len());
        let mut sds = Vec::with_capacity(names.len());
        for name in names {
            let col = cov.column(name).ok_or_else(|| Error::Data(format!("unknown covariate {name}")))?;
            let vals: Vec<f64> = match rows {
                Some(mask) => col.iter().zip(mask).filter(|(_, m)| **m).map(|(v, _)| *v).collect(),
                None => col.to_vec(),
            };
            if vals.is_empty() {
                return Err(Error::Data(format!("no rows to standardize {name}")));
            }
            let n = vals.len() as f64;
            let mean = vals.iter().sum::<f64>() / n;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            means.push(mean);
            sds.push(if var > 1e-24 { var.sqrt() } else { 1.0 });
        }
        Ok(Standardizer { names: names.to_vec(), means, sds })
    }

    /// Standardize the learned columns in place; other columns are untouched.
    pub fn apply(&self, cov: &mut Covariates) -> Result<()> {
        for (k, name) in self.names.iter().enumerate() {
            let i = cov.names.iter().position(|n| n == name).ok_or_else(|| Error::Data(format!("covariate {name} missing from table")))?;
            for v in &mut cov.columns[i] {
                *v = (*v - self.means[k]) / self.sds[k];
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// CSV

struct RawCsv {
    headers: Vec<String>,
    rows: Vec<csv::StringRecord>,
}

fn read_raw(path: &Path) -> Result<RawCsv> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).map_err(|e| match e.kind() {
        csv::ErrorKind::Io(_) => Error::schema(path, format!("cannot open file: {e}")),
        _ => Error::csv(path, e),
    })?;
    let headers = reader.headers().map_err(|e| Error::csv(path, e))?.iter().map(str::to_string).collect();
    let rows = reader.records().collect::<std::result::Result<Vec<_>, _>>().map_err(|e| Error::csv(path, e))?;
    Ok(RawCsv { headers, rows })
}

impl RawCsv {
    fn require(&self, path: &Path, name: &str) -> Result<usize> {
        self.optional(name).ok_or_else(|| Error::schema(path, format!("missing required column `{name}`")))
    }

    fn optional(&self, name: &str) -> Option<usize> {
        self.headers.iter().position(|h| h == name)
    }

    fn real(&self, path: &Path, row: usize, col: usize) -> Result<f64> {
        let s = &self.rows[row][col];
        match s.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(Error::schema(path, format!("column `{}` row {}: `{s}` is not a finite number", self.headers[col], row + 1))),
        }
    }

    fn covariates(&self, path: &Path, reserved: &[&str]) -> Result<Covariates> {
        let mut cov = Covariates::default();
        for (c, name) in self.headers.iter().enumerate() {
            if reserved.contains(&name.as_str()) {
                continue;
            }
            let col = (0..self.rows.len()).map(|r| self.real(path, r, c)).collect::<Result<Vec<_>>>()?;
            cov.push(name.clone(), col);
        }
        Ok(cov)
    }
}

const CELL_COLUMNS: [&str; 6] = ["cell_id", "lon", "lat", "area_km2", "district", "count"];
const MARK_COLUMNS: [&str; 4] = ["lon", "lat", "district", "value"];

/// Read `cell_id,lon,lat,area_km2,district[,count],<covariate...>`.
pub fn read_cells(path: &Path) -> Result<CellTable> {
    let raw = read_raw(path)?;
    let [id, lon, lat, area, district] = ["cell_id", "lon", "lat", "area_km2", "district"].map(|n| raw.require(path, n));
    let (id, lon, lat, area, district) = (id?, lon?, lat?, area?, district?);
    let count = raw.optional("count");
    let mut table = CellTable { covariates: raw.covariates(path, &CELL_COLUMNS)?, ..Default::default() };
    let mut seen = std::collections::HashSet::new();
    for r in 0..raw.rows.len() {
        let cid: u64 =
            raw.rows[r][id].parse().map_err(|_| Error::schema(path, format!("column `cell_id` row {}: not an unsigned integer", r + 1)))?;
        if !seen.insert(cid) {
            return Err(Error::schema(path, format!("column `cell_id` row {}: duplicate id {cid}", r + 1)));
        }
        table.ids.push(cid);
        table.coords.push([raw.real(path, r, lon)?, raw.real(path, r, lat)?]);
        let a = raw.real(path, r, area)?;
        if a <= 0.0 {
            return Err(Error::schema(path, format!("column `area_km2` row {}: area must be positive", r + 1)));
        }
        table.area_km2.push(a);
        table.districts.push(raw.rows[r][district].to_string());
        table.counts.push(match count {
            Some(c) if !raw.rows[r][c].is_empty() => Some(
                raw.rows[r][c]
                    .parse()
                    .map_err(|_| Error::schema(path, format!("column `count` row {}: not a non-negative integer", r + 1)))?,
            ),
            _ => None,
        });
    }
    Ok(table)
}

pub fn write_cells(path: &Path, cells: &CellTable) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    let mut header: Vec<&str> = CELL_COLUMNS[..5].to_vec();
    let has_counts = cells.counts.iter().any(Option::is_some);
    if has_counts {
        header.push("count");
    }
    header.extend(cells.covariates.names.iter().map(String::as_str));
    w.write_record(&header).map_err(|e| Error::csv(path, e))?;
    for i in 0..cells.len() {
        let mut rec = vec![
            cells.ids[i].to_string(),
            cells.coords[i][0].to_string(),
            cells.coords[i][1].to_string(),
            cells.area_km2[i].to_string(),
            cells.districts[i].clone(),
        ];
        if has_counts {
            rec.push(cells.counts[i].map(|c| c.to_string()).unwrap_or_default());
        }
        rec.extend(cells.covariates.columns.iter().map(|c| c[i].to_string()));
        w.write_record(&rec).map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Read `lon,lat,district,value,<covariate...>`.
pub fn read_marks(path: &Path) -> Result<MarkTable> {
    let raw = read_raw(path)?;
    let [lon, lat, district, value] = MARK_COLUMNS.map(|n| raw.require(path, n));
    let (lon, lat, district, value) = (lon?, lat?, district?, value?);
    let mut table = MarkTable { covariates: raw.covariates(path, &MARK_COLUMNS)?, ..Default::default() };
    for r in 0..raw.rows.len() {
        table.coords.push([raw.real(path, r, lon)?, raw.real(path, r, lat)?]);
        table.districts.push(raw.rows[r][district].to_string());
        let v = raw.real(path, r, value)?;
        if v < 0.0 {
            return Err(Error::schema(path, format!("column `value` row {}: marks must be non-negative", r + 1)));
        }
        table.values.push(v);
    }
    Ok(table)
}

pub fn write_marks(path: &Path, marks: &MarkTable) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    let mut header: Vec<&str> = MARK_COLUMNS.to_vec();
    header.extend(marks.covariates.names.iter().map(String::as_str));
    w.write_record(&header).map_err(|e| Error::csv(path, e))?;
    for i in 0..marks.len() {
        let mut rec =
            vec![marks.coords[i][0].to_string(), marks.coords[i][1].to_string(), marks.districts[i].clone(), marks.values[i].to_string()];
        rec.extend(marks.covariates.columns.iter().map(|c| c[i].to_string()));
        w.write_record(&rec).map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Read `district,pi,known_total`; empty fields mean unknown.
pub fn read_districts(path: &Path) -> Result<DistrictInfo> {
    let raw = read_raw(path)?;
    let name = raw.require(path, "district")?;
    let pi = raw.optional("pi");
    let total = raw.optional("known_total");
    let mut info = DistrictInfo::default();
    for r in 0..raw.rows.len() {
        let opt = |c: Option<usize>| -> Result<Option<f64>> {
            match c {
                Some(c) if !raw.rows[r][c].is_empty() => raw.real(path, r, c).map(Some),
                _ => Ok(None),
            }
        };
        let d = District { pi: opt(pi)?, known_total: opt(total)? };
        if info.0.insert(raw.rows[r][name].to_string(), d).is_some() {
            return Err(Error::schema(path, format!("column `district` row {}: duplicate district", r + 1)));
        }
    }
    info.validate().map_err(|e| Error::schema(path, e.to_string()))?;
    Ok(info)
}

pub fn write_districts(path: &Path, info: &DistrictInfo) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    w.write_record(["district", "pi", "known_total"]).map_err(|e| Error::csv(path, e))?;
    let s = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for (name, d) in &info.0 {
        w.write_record([name.clone(), s(d.pi), s(d.known_total)]).map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Read a `lon,lat,value` point file.
pub fn read_points(path: &Path) -> Result<(Vec<Point>, Vec<f64>)> {
    let raw = read_raw(path)?;
    let [lon, lat, value] = ["lon", "lat", "value"].map(|n| raw.require(path, n));
    let (lon, lat, value) = (lon?, lat?, value?);
    let mut pts = Vec::with_capacity(raw.rows.len());
    let mut vals = Vec::with_capacity(raw.rows.len());
    for r in 0..raw.rows.len() {
        pts.push([raw.real(path, r, lon)?, raw.real(path, r, lat)?]);
        vals.push(raw.real(path, r, value)?);
    }
    Ok((pts, vals))
}

pub fn write_points(path: &Path, points: &[Point], values: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    w.write_record(["lon", "lat", "value"]).map_err(|e| Error::csv(path, e))?;
    for (p, v) in points.iter().zip(values) {
        w.write_record([p[0].to_string(), p[1].to_string(), v.to_string()]).map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
