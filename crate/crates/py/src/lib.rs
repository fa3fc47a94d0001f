//! Python bindings. Reports come back as plain dicts; grids as flat lists in
//! row-major order, row 0 being the southernmost.

use std::path::PathBuf;

use popgrid_core::disaggregate;
use popgrid_core::evaluate::{self, ConfusionCounts, MetricsReport, DEFAULT_THETA};
use popgrid_core::geo::{BBox, Point, TileGrid as CoreGrid};
use popgrid_core::io::{self, AdminLevel, BinaryRaster, PoiPoint, PopulationGrid};
use popgrid_core::pipeline::{self, Inputs, PipelineConfig, RunOutput};
use popgrid_core::poi_filter::{self, PoiSet as CoreSet};
use popgrid_core::render::{self, Scale};
use popgrid_core::synth::{self, GroundTruth, ScenarioSpec};
use popgrid_core::Error;
use pyo3::create_exception;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use serde::Serialize;

create_exception!(popgrid, PopgridError, PyValueError, "Raised for any failed popgrid operation.");

fn err(e: Error) -> PyErr {
    PopgridError::new_err((e.class(), e.to_string()))
}

fn to_py<T: Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).expect("serializable");
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

fn level(name: &str) -> PyResult<AdminLevel> {
    name.parse().map_err(err)
}

#[pyclass(name = "TileGrid", module = "popgrid", frozen, eq, skip_from_py_object)]
#[derive(Clone, PartialEq)]
struct TileGrid(CoreGrid);

#[pymethods]
impl TileGrid {
    #[new]
    fn new(origin_x: f64, origin_y: f64, tile_size: f64, n_cols: usize, n_rows: usize) -> PyResult<Self> {
        CoreGrid::new(origin_x, origin_y, tile_size, n_cols, n_rows).map(TileGrid).map_err(err)
    }

    /// Smallest grid covering the box, origin rounded down to a multiple of
    /// `tile_size`.
    #[staticmethod]
    #[pyo3(signature = (min_x, min_y, max_x, max_y, tile_size = CoreGrid::DEFAULT_TILE_SIZE))]
    fn snapped(min_x: f64, min_y: f64, max_x: f64, max_y: f64, tile_size: f64) -> PyResult<Self> {
        let b = BBox::new(min_x, min_y, max_x, max_y).map_err(err)?;
        CoreGrid::snapped_to(&b, tile_size).map(TileGrid).map_err(err)
    }

    #[getter]
    fn origin_x(&self) -> f64 {
        self.0.origin_x()
    }

    #[getter]
    fn origin_y(&self) -> f64 {
        self.0.origin_y()
    }

    #[getter]
    fn tile_size(&self) -> f64 {
        self.0.tile_size()
    }

    #[getter]
    fn n_cols(&self) -> usize {
        self.0.n_cols()
    }

    #[getter]
    fn n_rows(&self) -> usize {
        self.0.n_rows()
    }

    /// `(min_x, min_y, max_x, max_y)`.
    #[getter]
    fn extent(&self) -> (f64, f64, f64, f64) {
        let e = self.0.extent();
        (e.min_x, e.min_y, e.max_x, e.max_y)
    }

    /// `(col, row)` of the tile holding the point, or `None` off the grid.
    fn tile_of(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        self.0.tile_index_of(Point::new(x, y)).map(|t| (t.col, t.row))
    }

    fn tile_center(&self, col: usize, row: usize) -> PyResult<(f64, f64)> {
        if col >= self.0.n_cols() || row >= self.0.n_rows() {
            return Err(PyValueError::new_err(format!("tile ({col}, {row}) is off the grid")));
        }
        let p = self.0.tile_center(popgrid_core::geo::TileId::new(col, row));
        Ok((p.x, p.y))
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "TileGrid(origin_x={}, origin_y={}, tile_size={}, n_cols={}, n_rows={})",
            self.0.origin_x(),
            self.0.origin_y(),
            self.0.tile_size(),
            self.0.n_cols(),
            self.0.n_rows()
        )
    }
}

#[pyclass(name = "PoiSet", module = "popgrid", frozen)]
struct PoiSet(CoreSet);

#[pymethods]
impl PoiSet {
    #[new]
    #[pyo3(signature = (points, categories = None))]
    fn new(points: Vec<(f64, f64)>, categories: Option<Vec<String>>) -> PyResult<Self> {
        let categories = categories.unwrap_or_else(|| vec![String::new(); points.len()]);
        if categories.len() != points.len() {
            return Err(PyValueError::new_err("categories must match points in length"));
        }
        let pois = points
            .into_iter()
            .zip(categories)
            .map(|((x, y), c)| PoiPoint::new(x, y, c))
            .collect();
        CoreSet::new(pois).map(PoiSet).map_err(err)
    }

    /// Reads a POI CSV (`x,y[,category]`) or GeoJSON point file.
    #[staticmethod]
    fn read(path: PathBuf) -> PyResult<Self> {
        CoreSet::new(io::read_poi(path).map_err(err)?).map(PoiSet).map_err(err)
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn points(&self) -> Vec<(f64, f64)> {
        self.0.points().iter().map(|p| (p.location.x, p.location.y)).collect()
    }

    /// POIs within `radius` of the point, boundary included.
    fn buffer_count(&self, x: f64, y: f64, radius: f64) -> PyResult<usize> {
        self.0.buffer_count(Point::new(x, y), radius).map_err(err)
    }

    /// Indices of POIs with at least `threshold` POIs (themselves included)
    /// within `radius`.
    #[pyo3(signature = (radius = poi_filter::DEFAULT_RADIUS, threshold = poi_filter::DEFAULT_THRESHOLD))]
    fn dense_indices(&self, radius: f64, threshold: usize) -> PyResult<Vec<usize>> {
        self.0.dense_indices(radius, threshold).map_err(err)
    }

    /// Per-tile retained flags; `False` marks a tile holding a dense POI.
    #[pyo3(signature = (grid, radius = poi_filter::DEFAULT_RADIUS, threshold = poi_filter::DEFAULT_THRESHOLD))]
    fn tile_mask(&self, grid: &TileGrid, radius: f64, threshold: usize) -> PyResult<Vec<bool>> {
        let mask = poi_filter::compute_tile_mask(&grid.0, &self.0, radius, threshold).map_err(err)?;
        Ok(mask.retained().to_vec())
    }
}

#[pyclass(name = "RunResult", module = "popgrid", frozen)]
struct RunResult(RunOutput);

#[pymethods]
impl RunResult {
    #[getter]
    fn grid(&self) -> TileGrid {
        TileGrid(*self.0.population.grid())
    }

    /// Tile populations.
    #[getter]
    fn population(&self) -> Vec<f64> {
        self.0.population.values().to_vec()
    }

    #[getter]
    fn retained(&self) -> Vec<bool> {
        self.0.tile_mask.retained().to_vec()
    }

    #[getter]
    fn total(&self) -> f64 {
        self.0.population.total()
    }

    #[getter]
    fn warnings(&self) -> Vec<String> {
        self.0.report.warnings.clone()
    }

    /// The run report as written to `report.json`.
    fn report(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &self.0.report)
    }

    /// Writes `population.asc`, `tile_mask.asc` and `report.json` into `dir`.
    fn write(&self, dir: PathBuf) -> PyResult<()> {
        std::fs::create_dir_all(&dir).map_err(|e| err(Error::Io { path: dir.clone(), source: e }))?;
        self.0.write(&dir).map_err(err)
    }
}

#[allow(clippy::too_many_arguments)]
fn config(
    admin: Option<PathBuf>,
    poi: Option<PathBuf>,
    mask: Option<PathBuf>,
    tile_size: f64,
    poi_radius: f64,
    poi_threshold: usize,
    level_name: &str,
    grid_origin: Option<(f64, f64)>,
    assume_projected: bool,
) -> PyResult<PipelineConfig> {
    Ok(PipelineConfig {
        admin,
        poi,
        mask,
        tile_size,
        poi_radius,
        poi_threshold,
        level: level(level_name)?,
        grid_origin: grid_origin.map(|(x, y)| [x, y]),
        assume_projected,
        ..Default::default()
    })
}

/// Runs the full pipeline on input files.
#[pyfunction]
#[pyo3(signature = (
    admin, poi, mask, out = None, tile_size = CoreGrid::DEFAULT_TILE_SIZE,
    poi_radius = poi_filter::DEFAULT_RADIUS, poi_threshold = poi_filter::DEFAULT_THRESHOLD,
    level = "circle", grid_origin = None, assume_projected = false
))]
#[allow(clippy::too_many_arguments)]
fn run(
    py: Python<'_>,
    admin: PathBuf,
    poi: PathBuf,
    mask: PathBuf,
    out: Option<PathBuf>,
    tile_size: f64,
    poi_radius: f64,
    poi_threshold: usize,
    level: &str,
    grid_origin: Option<(f64, f64)>,
    assume_projected: bool,
) -> PyResult<RunResult> {
    let mut cfg = config(
        Some(admin),
        Some(poi),
        Some(mask),
        tile_size,
        poi_radius,
        poi_threshold,
        level,
        grid_origin,
        assume_projected,
    )?;
    cfg.out = out;
    let output = py.detach(|| pipeline::run(&cfg)).map_err(err)?;
    Ok(RunResult(output))
}

/// Checks inputs without running. Returns `{"errors", "warnings", "exit_code"}`.
#[pyfunction]
#[pyo3(signature = (
    admin, poi, mask, tile_size = CoreGrid::DEFAULT_TILE_SIZE,
    poi_radius = poi_filter::DEFAULT_RADIUS, poi_threshold = poi_filter::DEFAULT_THRESHOLD,
    level = "circle", grid_origin = None, assume_projected = false
))]
#[allow(clippy::too_many_arguments)]
fn validate(
    py: Python<'_>,
    admin: PathBuf,
    poi: PathBuf,
    mask: PathBuf,
    tile_size: f64,
    poi_radius: f64,
    poi_threshold: usize,
    level: &str,
    grid_origin: Option<(f64, f64)>,
    assume_projected: bool,
) -> PyResult<Py<PyAny>> {
    let cfg = config(
        Some(admin),
        Some(poi),
        Some(mask),
        tile_size,
        poi_radius,
        poi_threshold,
        level,
        grid_origin,
        assume_projected,
    )?;
    let report = pipeline::validate(&cfg);
    let value = serde_json::json!({
        "errors": report.errors,
        "warnings": report.warnings,
        "exit_code": report.exit_code(),
    });
    to_py(py, &value)
}

/// Accuracy, F1 and friends from confusion counts.
#[pyfunction]
#[pyo3(name = "metrics")]
fn metrics_py(py: Python<'_>, tp: u64, fp: u64, fn_: u64, tn: u64) -> PyResult<Py<PyAny>> {
    let counts = ConfusionCounts { tp, fp, fn_, tn };
    let m = evaluate::metrics(&counts).map_err(err)?;
    to_py(py, &MetricsReport::new(counts, m))
}

fn read_mask(path: &PathBuf) -> PyResult<BinaryRaster> {
    BinaryRaster::from_ascii(&io::read_ascii_grid(path).map_err(err)?).map_err(err)
}

fn cells_of(r: &BinaryRaster) -> PyResult<CoreGrid> {
    CoreGrid::new(r.origin_x(), r.origin_y(), r.pixel_size(), r.n_cols(), r.n_rows()).map_err(err)
}

/// Compares two binary ESRI ASCII masks. `downsample` names the fine raster
/// ("predicted" or "reference") to aggregate onto the other's cells first.
#[pyfunction]
#[pyo3(signature = (predicted, reference, downsample = None, theta = DEFAULT_THETA))]
fn evaluate_masks(
    py: Python<'_>,
    predicted: PathBuf,
    reference: PathBuf,
    downsample: Option<&str>,
    theta: f64,
) -> PyResult<Py<PyAny>> {
    let mut p = read_mask(&predicted)?;
    let mut r = read_mask(&reference)?;
    match downsample {
        None | Some("none") => {}
        Some("predicted") => p = evaluate::downsample_to_tiles(&p, &cells_of(&r)?, theta).map_err(err)?,
        Some("reference") => r = evaluate::downsample_to_tiles(&r, &cells_of(&p)?, theta).map_err(err)?,
        Some(other) => return Err(PyValueError::new_err(format!("unknown downsample target `{other}`"))),
    }
    let counts = evaluate::confusion(&p, &r).map_err(err)?;
    let m = evaluate::metrics(&counts).map_err(err)?;
    to_py(py, &MetricsReport::new(counts, m))
}

/// Per-unit sums of a population grid file.
#[pyfunction]
#[pyo3(signature = (population, admin, level = "circle"))]
fn zonal(py: Python<'_>, population: PathBuf, admin: PathBuf, level: &str) -> PyResult<Py<PyAny>> {
    let pop = PopulationGrid::from_ascii(&io::read_ascii_grid(population).map_err(err)?).map_err(err)?;
    let units = io::read_admin_units(admin, level.parse().map_err(err)?).map_err(err)?;
    to_py(py, &evaluate::zonal_stats(&pop, &units))
}

/// Writes a grayscale PGM preview of an ESRI ASCII grid.
#[pyfunction]
#[pyo3(signature = (input, out, scale = "linear", plain = false))]
fn render_pgm(input: PathBuf, out: PathBuf, scale: &str, plain: bool) -> PyResult<()> {
    let scale: Scale = scale.parse().map_err(err)?;
    let grid = io::read_ascii_grid(input).map_err(err)?;
    std::fs::write(&out, render::render_pgm(&grid, scale, plain)).map_err(|e| err(Error::Io { path: out, source: e }))
}

/// A generated scenario with known per-pixel population.
#[pyclass(name = "Scenario", module = "popgrid", frozen)]
struct Scenario(GroundTruth);

#[pymethods]
impl Scenario {
    #[new]
    #[pyo3(signature = (seed = 0, n_units = 12, tile_size = CoreGrid::DEFAULT_TILE_SIZE, n_poi_clusters = 3, n_scattered_pois = 15))]
    fn new(
        py: Python<'_>,
        seed: u64,
        n_units: usize,
        tile_size: f64,
        n_poi_clusters: usize,
        n_scattered_pois: usize,
    ) -> PyResult<Self> {
        let spec = ScenarioSpec {
            n_units,
            tile_size,
            n_poi_clusters,
            n_scattered_pois,
            ..ScenarioSpec::with_seed(seed)
        };
        py.detach(|| synth::generate(&spec)).map(Scenario).map_err(err)
    }

    #[getter]
    fn grid(&self) -> TileGrid {
        TileGrid(self.0.grid)
    }

    /// True tile populations.
    #[getter]
    fn truth(&self) -> Vec<f64> {
        self.0.tile_population().values().to_vec()
    }

    #[getter]
    fn n_units(&self) -> usize {
        self.0.units.len()
    }

    #[getter]
    fn n_pois(&self) -> usize {
        self.0.pois.len()
    }

    #[getter]
    fn total_population(&self) -> f64 {
        self.0.units.iter().map(|u| u.population).sum()
    }

    /// Writes admin.geojson, poi.csv, mask.asc, truth.asc and scenario.json.
    fn write(&self, dir: PathBuf) -> PyResult<()> {
        self.0.write(dir).map_err(err)
    }

    /// Runs the pipeline on the in-memory inputs.
    #[pyo3(signature = (poi_radius = poi_filter::DEFAULT_RADIUS, poi_threshold = poi_filter::DEFAULT_THRESHOLD))]
    fn run(&self, py: Python<'_>, poi_radius: f64, poi_threshold: usize) -> PyResult<RunResult> {
        let cfg = PipelineConfig {
            tile_size: self.0.grid.tile_size(),
            poi_radius,
            poi_threshold,
            ..Default::default()
        };
        let inputs = Inputs {
            units: self.0.units.clone(),
            pois: self.0.pois.clone(),
            mask: self.0.mask.clone(),
            warnings: Vec::new(),
        };
        py.detach(|| pipeline::run_inputs(&cfg, &inputs)).map(RunResult).map_err(err)
    }

    /// Tile populations spread evenly by area, for comparison.
    fn uniform_baseline(&self) -> Vec<f64> {
        disaggregate::uniform_allocate(&self.0.grid, &self.0.units).values().to_vec()
    }

    /// `{"mae", "rmse", "total_error"}` of an estimate against the truth.
    fn score(&self, py: Python<'_>, estimate: Vec<f64>) -> PyResult<Py<PyAny>> {
        let est = PopulationGrid::new(self.0.grid, estimate).map_err(err)?;
        to_py(py, &synth::score(&est, &self.0).map_err(err)?)
    }
}

#[pymodule]
fn popgrid(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("PopgridError", m.py().get_type::<PopgridError>())?;
    m.add_class::<TileGrid>()?;
    m.add_class::<PoiSet>()?;
    m.add_class::<RunResult>()?;
    m.add_class::<Scenario>()?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(validate, m)?)?;
    m.add_function(wrap_pyfunction!(metrics_py, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate_masks, m)?)?;
    m.add_function(wrap_pyfunction!(zonal, m)?)?;
    m.add_function(wrap_pyfunction!(render_pgm, m)?)?;
    Ok(())
}
