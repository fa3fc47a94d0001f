//! End-to-end run: ingest, POI tile mask, pixel assignment, allocation.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::disaggregate::{self, AllocationReport};
use crate::error::{Error, Result};
use crate::evaluate::DEFAULT_THETA;
use crate::geo::{BBox, TileGrid};
use crate::io::{self, AdminLevel, AdminUnit, BinaryRaster, PoiPoint, PopulationGrid};
use crate::poi_filter::{self, PoiSet, TileMask};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub admin: Option<PathBuf>,
    pub poi: Option<PathBuf>,
    pub mask: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub tile_size: f64,
    pub poi_radius: f64,
    pub poi_threshold: usize,
    pub theta: f64,
    pub level: AdminLevel,
    /// Fixed lower-left grid corner. When absent the origin is the admin
    /// bounding box's lower-left corner rounded down to a multiple of
    /// `tile_size`.
    pub grid_origin: Option<[f64; 2]>,
    /// Skip the degrees-versus-meters check on input coordinates.
    pub assume_projected: bool,
    pub workers: Option<usize>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            admin: None,
            poi: None,
            mask: None,
            out: None,
            tile_size: TileGrid::DEFAULT_TILE_SIZE,
            poi_radius: poi_filter::DEFAULT_RADIUS,
            poi_threshold: poi_filter::DEFAULT_THRESHOLD,
            theta: DEFAULT_THETA,
            level: AdminLevel::Circle,
            grid_origin: None,
            assume_projected: false,
            workers: None,
        }
    }
}

impl PipelineConfig {
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = io::read_to_string(path.as_ref())?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })
    }

    pub fn check(&self) -> Result<()> {
        if !(self.tile_size > 0.0 && self.tile_size.is_finite()) {
            return Err(Error::Parameter(format!("tile size must be positive, got {}", self.tile_size)));
        }
        if !(self.poi_radius >= 0.0 && self.poi_radius.is_finite()) {
            return Err(Error::Parameter(format!("POI radius must be non-negative, got {}", self.poi_radius)));
        }
        if self.poi_threshold == 0 {
            return Err(Error::Parameter("POI threshold must be at least 1".into()));
        }
        if !(self.theta > 0.0 && self.theta <= 1.0) {
            return Err(Error::Parameter(format!("theta must lie in (0, 1], got {}", self.theta)));
        }
        if let Some([x, y]) = self.grid_origin {
            if !x.is_finite() || !y.is_finite() {
                return Err(Error::Parameter("grid origin must be finite".into()));
            }
        }
        if self.workers == Some(0) {
            return Err(Error::Parameter("worker count must be at least 1".into()));
        }
        Ok(())
    }

    fn required<'a>(&self, path: &'a Option<PathBuf>, what: &str) -> Result<&'a Path> {
        path.as_deref()
            .ok_or_else(|| Error::Configuration(format!("no {what} input given")))
    }
}

/// Parsed inputs for one run.
#[derive(Debug, Clone)]
pub struct Inputs {
    pub units: Vec<AdminUnit>,
    pub pois: Vec<PoiPoint>,
    pub mask: BinaryRaster,
    /// Non-fatal findings from parsing, e.g. unusual raster header order.
    pub warnings: Vec<String>,
}

pub fn load_inputs(config: &PipelineConfig) -> Result<Inputs> {
    let units = io::read_admin_units(config.required(&config.admin, "admin")?, config.level)?;
    let pois = match &config.poi {
        Some(p) => io::read_poi(p)?,
        None => Vec::new(),
    };
    let (ascii, warnings) = io::read_ascii_grid_with_warnings(config.required(&config.mask, "mask")?)?;
    let mask = BinaryRaster::from_ascii(&ascii)?;
    Ok(Inputs { units, pois, mask, warnings })
}

/// Tile grid for `units` under the configured origin policy.
pub fn build_grid(config: &PipelineConfig, units: &[AdminUnit]) -> Result<TileGrid> {
    let extent = io::units_bbox(units)
        .ok_or_else(|| Error::Configuration("admin dataset has no units".into()))?;
    match config.grid_origin {
        None => TileGrid::snapped_to(&extent, config.tile_size),
        Some([x, y]) => {
            if x > extent.min_x || y > extent.min_y {
                return Err(Error::Configuration(format!(
                    "grid origin ({x}, {y}) lies above or right of the admin extent's lower-left corner"
                )));
            }
            TileGrid::covering_from(x, y, &extent, config.tile_size)
        }
    }
}

fn check_projected(config: &PipelineConfig, inputs: &Inputs) -> Result<()> {
    if config.assume_projected {
        return Ok(());
    }
    let mut extents: Vec<(&str, BBox)> = vec![("mask", inputs.mask.extent())];
    if let Some(b) = io::units_bbox(&inputs.units) {
        extents.push(("admin", b));
    }
    if let Some((what, _)) = extents.iter().find(|(_, b)| io::looks_geographic(b)) {
        return Err(Error::Configuration(format!(
            "{what} coordinates look like degrees; reproject to a metric CRS or set assume_projected"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSummary {
    pub origin_x: f64,
    pub origin_y: f64,
    pub tile_size: f64,
    pub n_cols: usize,
    pub n_rows: usize,
}

impl From<&TileGrid> for GridSummary {
    fn from(g: &TileGrid) -> Self {
        GridSummary {
            origin_x: g.origin_x(),
            origin_y: g.origin_y(),
            tile_size: g.tile_size(),
            n_cols: g.n_cols(),
            n_rows: g.n_rows(),
        }
    }
}

/// Contents of `report.json`. Holds nothing that depends on scheduling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub grid: GridSummary,
    pub poi_radius: f64,
    pub poi_threshold: usize,
    pub pois: usize,
    pub dense_pois: usize,
    pub excluded_tiles: usize,
    pub warnings: Vec<String>,
    pub allocation: AllocationReport,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub population: PopulationGrid,
    pub tile_mask: TileMask,
    pub report: RunReport,
}

impl RunOutput {
    /// Writes `population.asc`, `tile_mask.asc` and `report.json`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        io::write_ascii_grid(&self.population.to_ascii(), dir.join("population.asc"))?;
        io::write_ascii_grid(&self.tile_mask.to_ascii(), dir.join("tile_mask.asc"))?;
        let json = serde_json::to_string_pretty(&self.report).expect("serializable");
        io::write_string(&dir.join("report.json"), &(json + "\n"))
    }
}

/// Runs the pipeline on already-parsed inputs.
pub fn run_inputs(config: &PipelineConfig, inputs: &Inputs) -> Result<RunOutput> {
    config.check()?;
    check_projected(config, inputs)?;
    let grid = build_grid(config, &inputs.units)?;
    let set = PoiSet::new(inputs.pois.clone())?;
    let dense = set.dense_indices(config.poi_radius, config.poi_threshold)?;
    let mut tile_mask = TileMask::all_retained(grid);
    for &i in &dense {
        if let Some(id) = grid.tile_index_of(set.points()[i].location) {
            tile_mask.exclude(id);
        }
    }
    let assignment = disaggregate::assign_pixels(&inputs.mask, &grid, &inputs.units, &tile_mask)?;
    let (population, allocation) = disaggregate::allocate(&assignment, &inputs.units)?;

    let mut warnings = inputs.warnings.clone();
    warnings.extend(assignment_warnings(&assignment, &allocation));
    let extent = grid.extent();
    let outside = inputs.pois.iter().filter(|p| !extent.contains(p.location)).count();
    if outside > 0 {
        warnings.push(format!("{outside} POIs lie outside the tile grid"));
    }
    if !covers(&inputs.mask.extent(), &extent) {
        warnings.push("mask raster does not cover the whole tile grid".into());
    }
    for w in &warnings {
        log::warn!("{w}");
    }

    let report = RunReport {
        grid: GridSummary::from(&grid),
        poi_radius: config.poi_radius,
        poi_threshold: config.poi_threshold,
        pois: inputs.pois.len(),
        dense_pois: dense.len(),
        excluded_tiles: tile_mask.excluded_count(),
        warnings,
        allocation,
    };
    Ok(RunOutput { population, tile_mask, report })
}

/// Loads inputs, runs, and writes outputs when `config.out` is set.
pub fn run(config: &PipelineConfig) -> Result<RunOutput> {
    config.check()?;
    let inputs = load_inputs(config)?;
    let output = run_inputs(config, &inputs)?;
    if let Some(out) = &config.out {
        output.write(out)?;
    }
    Ok(output)
}

fn covers(outer: &BBox, inner: &BBox) -> bool {
    outer.min_x <= inner.min_x && outer.min_y <= inner.min_y && outer.max_x >= inner.max_x && outer.max_y >= inner.max_y
}

fn assignment_warnings(a: &disaggregate::PixelAssignment, report: &AllocationReport) -> Vec<String> {
    let mut w = Vec::new();
    if a.overlapping_pixels > 0 {
        w.push(format!(
            "{} built pixels fall in more than one admin unit; the first unit in input order wins",
            a.overlapping_pixels
        ));
    }
    if a.unassigned_built > 0 {
        w.push(format!("{} built pixels lie outside every admin unit", a.unassigned_built));
    }
    if a.outside_grid_built > 0 {
        w.push(format!("{} built pixels lie outside the tile grid", a.outside_grid_built));
    }
    let fallback: Vec<&str> = report
        .units
        .iter()
        .filter(|u| u.fallback_used)
        .map(|u| u.id.as_str())
        .collect();
    if !fallback.is_empty() {
        w.push(format!(
            "{} units have no retained built-up pixels and use the uniform fallback: {}",
            fallback.len(),
            fallback.join(", ")
        ));
    }
    w
}

/// One finding from [`validate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Issue {
    /// Error class name, or `"warning"`.
    pub class: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub errors: Vec<Issue>,
    pub warnings: Vec<Issue>,
}

impl ValidationReport {
    /// 0 clean, 1 warnings only, 2 errors.
    pub fn exit_code(&self) -> i32 {
        if !self.errors.is_empty() {
            2
        } else if !self.warnings.is_empty() {
            1
        } else {
            0
        }
    }

    fn error(&mut self, e: &Error) {
        self.errors.push(Issue { class: e.class().into(), message: e.to_string() });
    }

    fn warn(&mut self, message: String) {
        self.warnings.push(Issue { class: "warning".into(), message });
    }
}

/// Schema, CRS and extent checks without writing anything.
pub fn validate(config: &PipelineConfig) -> ValidationReport {
    let mut report = ValidationReport::default();
    if let Err(e) = config.check() {
        report.error(&e);
        return report;
    }
    let units = config
        .required(&config.admin, "admin")
        .and_then(|p| io::read_admin_units(p, config.level));
    let pois = match &config.poi {
        Some(p) => io::read_poi(p),
        None => Ok(Vec::new()),
    };
    let mask = config
        .required(&config.mask, "mask")
        .and_then(io::read_ascii_grid_with_warnings)
        .and_then(|(g, w)| Ok((BinaryRaster::from_ascii(&g)?, w)));
    let (units, pois, (mask, warnings)) = match (units, pois, mask) {
        (Ok(u), Ok(p), Ok(m)) => (u, p, m),
        (u, p, m) => {
            for e in [u.err(), p.err(), m.err()].into_iter().flatten() {
                report.error(&e);
            }
            return report;
        }
    };
    let inputs = Inputs { units, pois, mask, warnings };
    match run_inputs(config, &inputs) {
        Ok(out) => {
            for w in out.report.warnings {
                report.warn(w);
            }
        }
        Err(e) => report.error(&e),
    }
    report
}
