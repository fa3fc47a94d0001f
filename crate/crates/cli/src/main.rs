//! `popgrid`: census-to-grid population disaggregation from the command line.
//!
//! Exit status is 0 on success, 1 when the command completed with warnings
//! and 2 on error. With `--json` a machine-readable summary goes to stdout.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use popgrid_core::evaluate::{self, MetricsReport};
use popgrid_core::geo::TileGrid;
use popgrid_core::io::{self, AdminLevel, BinaryRaster, PopulationGrid};
use popgrid_core::pipeline::{self, PipelineConfig};
use popgrid_core::poi_filter::{self, PoiSet};
use popgrid_core::render::{self, Scale};
use popgrid_core::synth::{self, ScenarioSpec};
use popgrid_core::Error;

#[derive(Parser)]
#[command(name = "popgrid", version, about = "Dasymetric population disaggregation onto a tile grid")]
struct Cli {
    /// Print a JSON summary on stdout.
    #[arg(long, global = true)]
    json: bool,
    /// Worker threads (defaults to all cores). Output does not depend on it.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// JSON pipeline configuration; command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check inputs without writing anything.
    Validate(PipelineArgs),
    /// Full pipeline: POI tile mask, pixel assignment, allocation.
    Run(PipelineArgs),
    /// Dense POIs and, given admin units, the resulting tile mask.
    FilterPoi(PipelineArgs),
    /// Accuracy and F1 of a predicted built-up mask against a reference.
    Evaluate(EvaluateArgs),
    /// Population totals per admin unit.
    Zonal(ZonalArgs),
    /// Grayscale PGM heatmap of a grid.
    Render(RenderArgs),
    /// Write a synthetic scenario with known ground truth.
    Synth(SynthArgs),
}

#[derive(Args)]
struct PipelineArgs {
    /// Admin units (GeoJSON FeatureCollection with id, level, population).
    #[arg(long)]
    admin: Option<PathBuf>,
    /// POIs (CSV with x,y[,category] or GeoJSON points).
    #[arg(long)]
    poi: Option<PathBuf>,
    /// Binary built-up mask (ESRI ASCII grid).
    #[arg(long)]
    mask: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Tile edge in meters [default: 30].
    #[arg(long)]
    tile_size: Option<f64>,
    /// POI neighborhood radius in meters [default: 500].
    #[arg(long)]
    poi_radius: Option<f64>,
    /// POIs within the radius, self included, that make a POI dense [default: 5].
    #[arg(long)]
    poi_threshold: Option<usize>,
    /// Built fraction at which a downsampled tile counts as built [default: 0.5].
    #[arg(long)]
    theta: Option<f64>,
    /// Admin level every feature must carry.
    #[arg(long)]
    level: Option<AdminLevel>,
    /// Fixed grid origin x; requires --origin-y.
    #[arg(long, requires = "origin_y")]
    origin_x: Option<f64>,
    #[arg(long, requires = "origin_x")]
    origin_y: Option<f64>,
    /// Accept coordinates that look like degrees.
    #[arg(long)]
    assume_projected: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Downsample {
    None,
    Predicted,
    Reference,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    predicted: PathBuf,
    #[arg(long)]
    reference: PathBuf,
    /// Pixel-level raster to aggregate onto the other raster's cells first.
    #[arg(long, value_enum, default_value = "none")]
    downsample: Downsample,
    #[arg(long)]
    theta: Option<f64>,
    /// Also write the metrics JSON here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ZonalArgs {
    /// Population grid (.asc).
    #[arg(long)]
    population: PathBuf,
    #[arg(long)]
    admin: PathBuf,
    #[arg(long)]
    level: Option<AdminLevel>,
    /// CSV output; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScaleArg {
    Linear,
    Log,
}

#[derive(Args)]
struct RenderArgs {
    /// Grid to render (.asc).
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "linear")]
    scale: ScaleArg,
    /// Plain-text P2 instead of binary P5.
    #[arg(long)]
    plain: bool,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// JSON scenario spec; flags take precedence.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Number of admin units.
    #[arg(long)]
    units: Option<usize>,
    #[arg(long)]
    tile_size: Option<f64>,
    /// Number of dense POI clusters.
    #[arg(long)]
    clusters: Option<usize>,
    /// Number of isolated POIs.
    #[arg(long)]
    scattered: Option<usize>,
}

/// Result of a command: JSON summary plus any warnings.
struct Outcome {
    summary: Value,
    warnings: Vec<String>,
}

impl Outcome {
    fn clean(summary: Value) -> Self {
        Outcome { summary, warnings: Vec::new() }
    }
}

fn merge(base: PipelineConfig, a: &PipelineArgs) -> PipelineConfig {
    let mut c = base;
    if a.admin.is_some() {
        c.admin.clone_from(&a.admin);
    }
    if a.poi.is_some() {
        c.poi.clone_from(&a.poi);
    }
    if a.mask.is_some() {
        c.mask.clone_from(&a.mask);
    }
    if a.out.is_some() {
        c.out.clone_from(&a.out);
    }
    c.tile_size = a.tile_size.unwrap_or(c.tile_size);
    c.poi_radius = a.poi_radius.unwrap_or(c.poi_radius);
    c.poi_threshold = a.poi_threshold.unwrap_or(c.poi_threshold);
    c.theta = a.theta.unwrap_or(c.theta);
    c.level = a.level.unwrap_or(c.level);
    if let (Some(x), Some(y)) = (a.origin_x, a.origin_y) {
        c.grid_origin = Some([x, y]);
    }
    c.assume_projected |= a.assume_projected;
    c
}

fn cmd_validate(config: &PipelineConfig) -> (Outcome, i32) {
    let report = pipeline::validate(config);
    for e in &report.errors {
        log::error!("{}", e.message);
    }
    for w in &report.warnings {
        log::warn!("{}", w.message);
    }
    let code = report.exit_code();
    let outcome = Outcome {
        summary: serde_json::to_value(report).expect("serializable"),
        warnings: Vec::new(),
    };
    (outcome, code)
}

fn cmd_run(config: &PipelineConfig) -> Result<Outcome, Error> {
    if config.out.is_none() {
        return Err(Error::Configuration("run needs --out".into()));
    }
    let out = pipeline::run(config)?;
    let t = &out.report.allocation.totals;
    let summary = json!({
        "out": config.out,
        "grid": out.report.grid,
        "dense_pois": out.report.dense_pois,
        "excluded_tiles": out.report.excluded_tiles,
        "population_in": t.population_in,
        "population_out": t.population_out,
        "relative_error": t.relative_error,
        "fallback_units": t.fallback_units,
        "warnings": out.report.warnings,
    });
    Ok(Outcome { summary, warnings: out.report.warnings.clone() })
}

fn cmd_filter_poi(config: &PipelineConfig) -> Result<Outcome, Error> {
    config.check()?;
    let poi_path = config
        .poi
        .as_ref()
        .ok_or_else(|| Error::Configuration("filter-poi needs --poi".into()))?;
    let set = PoiSet::new(io::read_poi(poi_path)?)?;
    let dense = set.dense_pois(config.poi_radius, config.poi_threshold)?;
    let mut summary = json!({
        "pois": set.len(),
        "dense_pois": dense.len(),
        "poi_radius": config.poi_radius,
        "poi_threshold": config.poi_threshold,
    });
    let mask = match &config.admin {
        Some(admin) => {
            let units = io::read_admin_units(admin, config.level)?;
            let grid = pipeline::build_grid(config, &units)?;
            let mask = poi_filter::compute_tile_mask(&grid, &set, config.poi_radius, config.poi_threshold)?;
            summary["excluded_tiles"] = json!(mask.excluded_count());
            Some(mask)
        }
        None => None,
    };
    if let Some(out) = &config.out {
        io::write_poi_csv(&dense, out.join("dense_poi.csv"))?;
        if let Some(mask) = &mask {
            io::write_ascii_grid(&mask.to_ascii(), out.join("tile_mask.asc"))?;
        }
    }
    Ok(Outcome::clean(summary))
}

fn read_mask(path: &Path) -> Result<BinaryRaster, Error> {
    BinaryRaster::from_ascii(&io::read_ascii_grid(path)?)
}

/// Grid whose tiles are the cells of `target`.
fn cells_of(target: &BinaryRaster) -> Result<TileGrid, Error> {
    TileGrid::new(
        target.origin_x(),
        target.origin_y(),
        target.pixel_size(),
        target.n_cols(),
        target.n_rows(),
    )
}

fn cmd_evaluate(a: &EvaluateArgs, theta: f64) -> Result<Outcome, Error> {
    let mut predicted = read_mask(&a.predicted)?;
    let mut reference = read_mask(&a.reference)?;
    match a.downsample {
        Downsample::None => {}
        Downsample::Predicted => {
            predicted = evaluate::downsample_to_tiles(&predicted, &cells_of(&reference)?, theta)?;
        }
        Downsample::Reference => {
            reference = evaluate::downsample_to_tiles(&reference, &cells_of(&predicted)?, theta)?;
        }
    }
    let counts = evaluate::confusion(&predicted, &reference)?;
    let report = MetricsReport::new(counts, evaluate::metrics(&counts)?);
    let summary = serde_json::to_value(report).expect("serializable");
    if let Some(out) = &a.out {
        let text = serde_json::to_string_pretty(&summary).expect("serializable") + "\n";
        std::fs::write(out, text).map_err(|e| Error::Io { path: out.clone(), source: e })?;
    }
    Ok(Outcome::clean(summary))
}

fn cmd_zonal(a: &ZonalArgs, level: AdminLevel, json: bool) -> Result<Outcome, Error> {
    let pop = PopulationGrid::from_ascii(&io::read_ascii_grid(&a.population)?)?;
    let units = io::read_admin_units(&a.admin, level)?;
    let rows = evaluate::zonal_stats(&pop, &units);
    match &a.out {
        Some(out) => evaluate::write_zonal_csv(&rows, out)?,
        None if !json => print!("{}", evaluate::zonal_csv(&rows)),
        None => {}
    }
    Ok(Outcome::clean(json!({ "rows": rows })))
}

fn cmd_render(a: &RenderArgs) -> Result<Outcome, Error> {
    let grid = io::read_ascii_grid(&a.input)?;
    let scale = match a.scale {
        ScaleArg::Linear => Scale::Linear,
        ScaleArg::Log => Scale::Log,
    };
    let bytes = render::render_pgm(&grid, scale, a.plain);
    if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::Io { path: parent.into(), source: e })?;
    }
    std::fs::write(&a.out, bytes).map_err(|e| Error::Io { path: a.out.clone(), source: e })?;
    Ok(Outcome::clean(json!({
        "out": a.out,
        "width": grid.n_cols,
        "height": grid.n_rows,
        "scale": scale,
    })))
}

fn cmd_synth(a: &SynthArgs) -> Result<Outcome, Error> {
    let mut spec = match &a.spec {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::Io { path: p.clone(), source: e })?;
            serde_json::from_str::<ScenarioSpec>(&text).map_err(|e| Error::Parse {
                line: e.line(),
                column: e.column(),
                message: e.to_string(),
            })?
        }
        None => ScenarioSpec::default(),
    };
    spec.seed = a.seed.unwrap_or(spec.seed);
    spec.n_units = a.units.unwrap_or(spec.n_units);
    spec.tile_size = a.tile_size.unwrap_or(spec.tile_size);
    spec.n_poi_clusters = a.clusters.unwrap_or(spec.n_poi_clusters);
    spec.n_scattered_pois = a.scattered.unwrap_or(spec.n_scattered_pois);
    let truth = synth::generate(&spec)?;
    truth.write(&a.out)?;
    Ok(Outcome::clean(json!({
        "out": a.out,
        "seed": spec.seed,
        "units": truth.units.len(),
        "pois": truth.pois.len(),
        "population": truth.units.iter().map(|u| u.population).sum::<f64>(),
    })))
}

fn dispatch(cli: &Cli, base: PipelineConfig) -> (Outcome, i32) {
    let result = match &cli.command {
        Command::Validate(a) => return cmd_validate(&merge(base, a)),
        Command::Run(a) => cmd_run(&merge(base, a)),
        Command::FilterPoi(a) => cmd_filter_poi(&merge(base, a)),
        Command::Evaluate(a) => cmd_evaluate(a, a.theta.unwrap_or(base.theta)),
        Command::Zonal(a) => cmd_zonal(a, a.level.unwrap_or(base.level), cli.json),
        Command::Render(a) => cmd_render(a),
        Command::Synth(a) => cmd_synth(a),
    };
    match result {
        Ok(o) => {
            let code = if o.warnings.is_empty() { 0 } else { 1 };
            (o, code)
        }
        Err(e) => {
            log::error!("{e}");
            let summary = json!({ "error": { "class": e.class(), "message": e.to_string() } });
            (Outcome::clean(summary), 2)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();

    let base = match &cli.config {
        Some(p) => match PipelineConfig::from_json_file(p) {
            Ok(c) => c,
            Err(e) => {
                log::error!("{}: {e}", p.display());
                if cli.json {
                    println!("{}", json!({ "error": { "class": e.class(), "message": e.to_string() } }));
                }
                return ExitCode::from(2);
            }
        },
        None => PipelineConfig::default(),
    };
    let workers = cli.workers.or(base.workers);
    let run = || dispatch(&cli, base.clone());
    let (outcome, code) = match workers {
        Some(0) => {
            log::error!("worker count must be at least 1");
            return ExitCode::from(2);
        }
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(run),
            Err(e) => {
                log::error!("cannot start {n} workers: {e}");
                return ExitCode::from(2);
            }
        },
        None => run(),
    };
    if cli.json {
        println!("{}", serde_json::to_string_pretty(&outcome.summary).expect("serializable"));
    }
    ExitCode::from(code as u8)
}
