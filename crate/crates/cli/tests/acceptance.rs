//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use popgrid_core::disaggregate::{self, oracle, Fallback};
use popgrid_core::evaluate::{self, ConfusionCounts};
use popgrid_core::geo::{distance, BBox, Point, Polygon, TileGrid};
use popgrid_core::io::{self, AdminLevel, AdminUnit, AsciiGrid, BinaryRaster, PoiPoint, PopulationGrid};
use popgrid_core::pipeline::{self, Inputs, PipelineConfig};
use popgrid_core::poi_filter::{compute_tile_mask, PoiSet, TileMask};
use popgrid_core::synth::{self, GroundTruth, ScenarioSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($fmt)+));
        }
    };
}

fn inputs(truth: &GroundTruth) -> Inputs {
    Inputs {
        units: truth.units.clone(),
        pois: truth.pois.clone(),
        mask: truth.mask.clone(),
        warnings: Vec::new(),
    }
}

fn relative_gap(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

fn excluded_set(mask: &TileMask) -> BTreeSet<usize> {
    mask.excluded().into_iter().collect()
}

// ---------------------------------------------------------------------------
// 1. Conservation over many scenarios, fallback branches included.

/// Sets every pixel whose center lies in `unit` to not built.
fn clear_unit(mask: &mut BinaryRaster, unit: &AdminUnit) {
    for r in 0..mask.n_rows() {
        for c in 0..mask.n_cols() {
            if unit.geometry.contains(mask.pixel_center(c, r)) {
                mask.set(c, r, Some(false));
            }
        }
    }
}

/// Five coincident POIs in every tile touching the rectangular `unit`.
fn smother(grid: &TileGrid, unit: &AdminUnit) -> Vec<PoiPoint> {
    let ub = unit.geometry.bbox();
    let ((c0, c1), (r0, r1)) = grid.tile_range(&ub).expect("unit on grid");
    let mut pois = Vec::new();
    for r in r0..=r1 {
        for c in c0..=c1 {
            let tb = grid.tile_bbox(popgrid_core::geo::TileId::new(c, r));
            let lo = Point::new(tb.min_x.max(ub.min_x), tb.min_y.max(ub.min_y));
            let hi = Point::new(tb.max_x.min(ub.max_x), tb.max_y.min(ub.max_y));
            if hi.x <= lo.x || hi.y <= lo.y {
                continue;
            }
            let p = Point::new((lo.x + hi.x) / 2.0, (lo.y + hi.y) / 2.0);
            for _ in 0..5 {
                pois.push(PoiPoint { location: p, category: "smother".into() });
            }
        }
    }
    pois
}

fn criterion_1() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut largest, mut worst) = (0usize, 0.0f64);
    let (mut uniform_fallbacks, mut point_fallbacks) = (0, 0);
    for i in 0..100u64 {
        let (cols, rows) = if i == 0 { (256, 256) } else { (rng.random_range(8..=256), rng.random_range(8..=256)) };
        let spec = ScenarioSpec {
            seed: 1_000 + i,
            extent: BBox::new(420_000.0, 3_480_000.0, 420_000.0 + 30.0 * cols as f64, 3_480_000.0 + 30.0 * rows as f64)
                .unwrap(),
            n_units: rng.random_range(1..=60),
            ..Default::default()
        };
        let truth = synth::generate(&spec).map_err(|e| e.to_string())?;
        let mut inp = inputs(&truth);
        match i % 4 {
            1 => clear_unit(&mut inp.mask, &inp.units[0]),
            2 => {
                // A 10 m square inside a tile, clear of every tile center and
                // shadowed by the unit already covering it.
                let b = BBox::new(420_000.0, 3_480_000.0, 420_010.0, 3_480_010.0).unwrap();
                inp.units.push(AdminUnit::new("tiny", AdminLevel::Circle, Polygon::rectangle(b).unwrap(), 777.0).unwrap());
            }
            3 => {
                let smallest = (0..inp.units.len())
                    .min_by(|&a, &b| inp.units[a].geometry.area().total_cmp(&inp.units[b].geometry.area()))
                    .unwrap();
                let extra = smother(&truth.grid, &inp.units[smallest]);
                inp.pois.extend(extra);
            }
            _ => {}
        }
        let out = pipeline::run_inputs(&PipelineConfig::default(), &inp).map_err(|e| e.to_string())?;
        ensure!(*out.population.grid() == truth.grid, "scenario {i}: unexpected grid");
        largest = largest.max(truth.grid.len());
        let expected: f64 = inp.units.iter().map(|u| u.population).sum();
        let gap = relative_gap(out.population.total(), expected);
        worst = worst.max(gap);
        ensure!(gap <= 1e-9, "scenario {i}: relative gap {gap:e}");
        for u in &out.report.allocation.units {
            ensure!(relative_gap(u.population_out, u.population_in) <= 1e-9, "scenario {i}: unit {} not conserved", u.id);
            match u.fallback {
                Fallback::UniformTiles => uniform_fallbacks += 1,
                Fallback::RepresentativePoint => point_fallbacks += 1,
                Fallback::None => {}
            }
        }
        if i % 4 != 0 {
            ensure!(out.report.allocation.totals.fallback_units > 0, "scenario {i}: mutation did not trigger a fallback");
        }
    }
    let elapsed = start.elapsed();
    ensure!(uniform_fallbacks > 0 && point_fallbacks > 0, "fallback branches not both exercised");
    ensure!(elapsed < Duration::from_secs(60), "took {elapsed:.2?}");
    Ok(format!(
        "100 scenarios, up to {largest} tiles, max relative gap {worst:.1e}, fallbacks uniform={uniform_fallbacks} point={point_fallbacks}, {elapsed:.2?}"
    ))
}

// ---------------------------------------------------------------------------
// 2. The 3-built / 1-built fixture.

fn criterion_2() -> Check {
    // Two 30 m tiles of 3x3 pixels; left has 3 built pixels, right has 1.
    let mut raster = BinaryRaster::filled(0.0, 0.0, 10.0, 6, 3, 0).unwrap();
    for (c, r) in [(0, 0), (1, 1), (2, 2), (4, 1)] {
        raster.set(c, r, Some(true));
    }
    let grid = TileGrid::new(0.0, 0.0, 30.0, 2, 1).unwrap();
    let unit = AdminUnit::new(
        "circle",
        AdminLevel::Circle,
        Polygon::rectangle(BBox::new(0.0, 0.0, 60.0, 30.0).unwrap()).unwrap(),
        100.0,
    )
    .unwrap();
    let units = [unit];
    let mask = TileMask::all_retained(grid);
    let a = disaggregate::assign_pixels(&raster, &grid, &units, &mask).map_err(|e| e.to_string())?;
    let (pop, _) = disaggregate::allocate(&a, &units).map_err(|e| e.to_string())?;
    ensure!(pop.values() == [75.0, 25.0], "got {:?}", pop.values());
    let reference = oracle::brute_force_allocate(&raster, &grid, &units, &mask).map_err(|e| e.to_string())?;
    ensure!(reference.values() == [75.0, 25.0], "oracle got {:?}", reference.values());
    Ok("tile A = 75.0, tile B = 25.0 exactly".into())
}

// ---------------------------------------------------------------------------
// 3. Indexed POI filter against all-pairs counting.

fn random_pois(rng: &mut ChaCha8Rng, n: usize, kind: usize) -> Vec<PoiPoint> {
    let (x0, y0) = (420_000.0, 3_480_000.0);
    let mut pts = Vec::with_capacity(n);
    match kind {
        0 => {
            for _ in 0..n {
                pts.push(Point::new(x0 + rng.random_range(0.0..5_000.0), y0 + rng.random_range(0.0..5_000.0)));
            }
        }
        1 => {
            let centers: Vec<Point> = (0..rng.random_range(1..12))
                .map(|_| Point::new(x0 + rng.random_range(0.0..5_000.0), y0 + rng.random_range(0.0..5_000.0)))
                .collect();
            for k in 0..n {
                let c = centers[k % centers.len()];
                let r = 400.0 * rng.random::<f64>();
                let a = rng.random_range(0.0..std::f64::consts::TAU);
                pts.push(Point::new(c.x + r * a.cos(), c.y + r * a.sin()));
            }
        }
        2 => {
            // Integer lattice at 100 m: many pairs exactly 500 m apart.
            let side = ((n as f64).sqrt().ceil() as usize).max(1);
            for k in 0..n {
                pts.push(Point::new(x0 + 100.0 * (k % side) as f64, y0 + 100.0 * (k / side) as f64));
            }
        }
        _ => {
            // Few distinct locations, many duplicates.
            let distinct: Vec<Point> = (0..(n / 8).max(1))
                .map(|_| Point::new(x0 + rng.random_range(0.0..3_000.0), y0 + rng.random_range(0.0..3_000.0)))
                .collect();
            for _ in 0..n {
                pts.push(distinct[rng.random_range(0..distinct.len())]);
            }
        }
    }
    pts.into_iter().map(|p| PoiPoint { location: p, category: String::new() }).collect()
}

fn brute_dense(points: &[PoiPoint], radius: f64, threshold: usize) -> Vec<usize> {
    (0..points.len())
        .filter(|&i| {
            points
                .iter()
                .filter(|q| distance(points[i].location, q.location) <= radius)
                .count()
                >= threshold
        })
        .collect()
}

fn criterion_3() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut total_points = 0;
    for s in 0..50usize {
        let n = if s == 0 { 2_000 } else { rng.random_range(1..=2_000) };
        let kind = s % 4;
        let points = random_pois(&mut rng, n, kind);
        let (radius, threshold) = match s % 3 {
            0 => (500.0, 5),
            1 => (rng.random_range(50.0..1_500.0), rng.random_range(1..=20)),
            _ => (500.0, rng.random_range(1..=90)),
        };
        total_points += n;
        let set = PoiSet::new(points.clone()).map_err(|e| e.to_string())?;
        let indexed = set.dense_indices(radius, threshold).map_err(|e| e.to_string())?;
        let brute = brute_dense(&points, radius, threshold);
        ensure!(indexed == brute, "set {s}: dense POIs differ ({} vs {})", indexed.len(), brute.len());

        let extent = BBox::from_points(points.iter().map(|p| p.location)).unwrap();
        let grid = TileGrid::snapped_to(&extent, 30.0).map_err(|e| e.to_string())?;
        let mask = compute_tile_mask(&grid, &set, radius, threshold).map_err(|e| e.to_string())?;
        let expected: BTreeSet<usize> = brute
            .iter()
            .filter_map(|&i| grid.tile_index_of(points[i].location))
            .map(|t| grid.linear(t))
            .collect();
        ensure!(excluded_set(&mask) == expected, "set {s}: excluded tiles differ");
    }
    let elapsed = start.elapsed();
    ensure!(elapsed < Duration::from_secs(30), "took {elapsed:.2?}");
    Ok(format!("50 sets, {total_points} POIs in total, identical masks, {elapsed:.2?}"))
}

// ---------------------------------------------------------------------------
// 4. Excluded tiles grow with R and shrink with P.

fn criterion_4() -> Check {
    let radii = [250.0, 500.0, 1_000.0];
    let thresholds = [3usize, 5, 10];
    let mut comparisons = 0;
    for seed in 0..20 {
        let spec = ScenarioSpec { n_scattered_pois: 200, ..ScenarioSpec::with_seed(400 + seed) };
        let truth = synth::generate(&spec).map_err(|e| e.to_string())?;
        let set = PoiSet::new(truth.pois.clone()).map_err(|e| e.to_string())?;
        let mut sets = [[BTreeSet::new(), BTreeSet::new(), BTreeSet::new()], Default::default(), Default::default()];
        for (ri, &r) in radii.iter().enumerate() {
            for (pi, &p) in thresholds.iter().enumerate() {
                let mask = compute_tile_mask(&truth.grid, &set, r, p).map_err(|e| e.to_string())?;
                sets[ri][pi] = excluded_set(&mask);
            }
        }
        for pi in 0..3 {
            for ri in 0..2 {
                ensure!(sets[ri][pi].is_subset(&sets[ri + 1][pi]), "seed {seed}: not monotone in R at P={}", thresholds[pi]);
                comparisons += 1;
            }
        }
        for ri in 0..3 {
            for pi in 0..2 {
                ensure!(sets[ri][pi + 1].is_subset(&sets[ri][pi]), "seed {seed}: not anti-monotone in P at R={}", radii[ri]);
                comparisons += 1;
            }
        }
    }
    Ok(format!("20 scenarios x 3 R x 3 P, {comparisons} subset relations hold"))
}

// ---------------------------------------------------------------------------
// 5. Indexed allocation against the nested-loop oracle, bit for bit.

fn random_polygon(rng: &mut ChaCha8Rng, ext: &BBox) -> Polygon {
    let pick = |rng: &mut ChaCha8Rng| {
        Point::new(rng.random_range(ext.min_x..ext.max_x), rng.random_range(ext.min_y..ext.max_y))
    };
    loop {
        let tri: Vec<Point> = (0..3).map(|_| pick(rng)).collect();
        if rng.random_bool(0.3) {
            // Rectangle with a rectangular hole.
            let b = BBox::from_points(tri.iter().copied()).unwrap();
            let (w, h) = (b.width(), b.height());
            let hole = vec![
                Point::new(b.min_x + w / 4.0, b.min_y + h / 4.0),
                Point::new(b.min_x + 3.0 * w / 4.0, b.min_y + h / 4.0),
                Point::new(b.min_x + 3.0 * w / 4.0, b.min_y + 3.0 * h / 4.0),
                Point::new(b.min_x + w / 4.0, b.min_y + 3.0 * h / 4.0),
            ];
            let outer = vec![
                Point::new(b.min_x, b.min_y),
                Point::new(b.max_x, b.min_y),
                Point::new(b.max_x, b.max_y),
                Point::new(b.min_x, b.max_y),
            ];
            if let Ok(p) = Polygon::new(outer, vec![hole]) {
                return p;
            }
        } else if let Ok(p) = Polygon::new(tri, vec![]) {
            return p;
        }
    }
}

fn criterion_5() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut tiles_checked = 0;
    let mut fallbacks = 0;
    for s in 0..50u64 {
        let tile = [20.0, 30.0, 40.0, 50.0][rng.random_range(0..4)];
        let (w, h) = (rng.random_range(4..=60), rng.random_range(4..=60));
        let x0 = 420_000.0 + 10.0 * rng.random_range(0..50) as f64;
        let y0 = 3_480_000.0 + 10.0 * rng.random_range(0..50) as f64;
        let lo = rng.random_range(0.0..0.8);
        let spec = ScenarioSpec {
            seed: 5_000 + s,
            extent: BBox::new(x0, y0, x0 + tile * w as f64, y0 + tile * h as f64).unwrap(),
            tile_size: tile,
            n_units: rng.random_range(1..=20),
            built_fraction_range: (lo, rng.random_range(lo..=1.0)),
            n_poi_clusters: rng.random_range(0..5),
            n_scattered_pois: rng.random_range(0..40),
            ..Default::default()
        };
        let truth = synth::generate(&spec).map_err(|e| e.to_string())?;
        let mut mask = truth.mask.clone();
        let mut units = truth.units.clone();
        for r in 0..mask.n_rows() {
            for c in 0..mask.n_cols() {
                if rng.random_bool(0.02) {
                    mask.set(c, r, None);
                }
            }
        }
        if s % 5 == 1 {
            clear_unit(&mut mask, &units[0]);
        }
        for k in 0..rng.random_range(0..4) {
            let poly = random_polygon(&mut rng, &spec.extent);
            let unit = AdminUnit::new(format!("extra{k}"), AdminLevel::Circle, poly, rng.random_range(0.0..5_000.0))
                .map_err(|e| e.to_string())?;
            // Extras go first or last so they both win and lose overlaps.
            if rng.random_bool(0.5) {
                units.insert(0, unit);
            } else {
                units.push(unit);
            }
        }
        let grid = if rng.random_bool(0.5) {
            truth.grid
        } else {
            let ext = io::units_bbox(&units).unwrap();
            let ox = ext.min_x - rng.random_range(0.0..tile);
            let oy = ext.min_y - rng.random_range(0.0..tile);
            TileGrid::covering_from(ox, oy, &ext, tile).map_err(|e| e.to_string())?
        };
        ensure!(grid.n_cols() <= 64 && grid.n_rows() <= 64, "scenario {s}: grid {}x{}", grid.n_cols(), grid.n_rows());
        let set = PoiSet::new(truth.pois.clone()).map_err(|e| e.to_string())?;
        let tile_mask = compute_tile_mask(&grid, &set, rng.random_range(100.0..800.0), rng.random_range(1..8))
            .map_err(|e| e.to_string())?;
        let a = disaggregate::assign_pixels(&mask, &grid, &units, &tile_mask).map_err(|e| e.to_string())?;
        let (pop, report) = disaggregate::allocate(&a, &units).map_err(|e| e.to_string())?;
        let reference = oracle::brute_force_allocate(&mask, &grid, &units, &tile_mask).map_err(|e| e.to_string())?;
        for (t, (x, y)) in pop.values().iter().zip(reference.values()).enumerate() {
            ensure!(x.to_bits() == y.to_bits(), "scenario {s}: tile {t} {x} != {y}");
        }
        tiles_checked += grid.len();
        fallbacks += report.totals.fallback_units;
    }
    Ok(format!("50 scenarios, {tiles_checked} tiles bit-identical, {fallbacks} fallback units exercised"))
}

// ---------------------------------------------------------------------------
// 6. Accuracy and F1 on hand-worked confusion matrices.

fn raster_pair(rng: &mut ChaCha8Rng, c: ConfusionCounts) -> (BinaryRaster, BinaryRaster) {
    let mut cells: Vec<(u8, u8)> = Vec::new();
    cells.extend(std::iter::repeat_n((1, 1), c.tp as usize));
    cells.extend(std::iter::repeat_n((1, 0), c.fp as usize));
    cells.extend(std::iter::repeat_n((0, 1), c.fn_ as usize));
    cells.extend(std::iter::repeat_n((0, 0), c.tn as usize));
    for i in (1..cells.len()).rev() {
        cells.swap(i, rng.random_range(0..=i));
    }
    let n = cells.len();
    let pred = BinaryRaster::new(0.0, 0.0, 1.0, n, 1, cells.iter().map(|c| c.0).collect()).unwrap();
    let refr = BinaryRaster::new(0.0, 0.0, 1.0, n, 1, cells.iter().map(|c| c.1).collect()).unwrap();
    (pred, refr)
}

fn criterion_6() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    // The 4x4 fixture, rows north to south.
    #[rustfmt::skip]
    let reference = [1, 1, 1, 0,
                     1, 1, 1, 0,
                     1, 1, 0, 0,
                     1, 1, 0, 0];
    #[rustfmt::skip]
    let predicted = [1, 1, 1, 1,
                     1, 1, 1, 0,
                     1, 1, 0, 0,
                     1, 0, 0, 0];
    let as_raster = |v: &[u8]| {
        let south_first: Vec<u8> = v.chunks(4).rev().flatten().copied().collect();
        BinaryRaster::new(0.0, 0.0, 1.0, 4, 4, south_first).unwrap()
    };
    let counts = |tp, fp, fn_, tn| ConfusionCounts { tp, fp, fn_, tn };
    // (counts, accuracy, F1) worked by hand.
    let fixtures = [
        (counts(9, 1, 1, 5), 14.0 / 16.0, 18.0 / 20.0),
        (counts(50, 10, 5, 35), 85.0 / 100.0, 100.0 / 115.0),
        (counts(0, 3, 2, 5), 5.0 / 10.0, 0.0),
        (counts(7, 0, 0, 0), 1.0, 1.0),
        (counts(12, 5, 8, 975), 987.0 / 1000.0, 24.0 / 37.0),
    ];
    for (k, (c, acc, f1)) in fixtures.iter().enumerate() {
        let (p, r) = if k == 0 { (as_raster(&predicted), as_raster(&reference)) } else { raster_pair(&mut rng, *c) };
        let got = evaluate::confusion(&p, &r).map_err(|e| e.to_string())?;
        ensure!(got == *c, "fixture {k}: counts {got:?}");
        let m = evaluate::metrics(&got).map_err(|e| e.to_string())?;
        ensure!((m.accuracy - acc).abs() <= 1e-12, "fixture {k}: accuracy {} vs {acc}", m.accuracy);
        ensure!((m.f1 - f1).abs() <= 1e-12, "fixture {k}: F1 {} vs {f1}", m.f1);
    }
    for k in 0..20 {
        let (n_cols, n_rows) = (rng.random_range(1..40), rng.random_range(1..40));
        let density = if k == 0 { 0.0 } else { rng.random::<f64>() };
        let values: Vec<u8> = (0..n_cols * n_rows)
            .map(|_| if rng.random_bool(0.05) { BinaryRaster::NODATA } else { u8::from(rng.random_bool(density)) })
            .collect();
        if values.iter().all(|&v| v == BinaryRaster::NODATA) {
            continue;
        }
        let x = BinaryRaster::new(0.0, 0.0, 1.0, n_cols, n_rows, values).unwrap();
        let m = evaluate::metrics(&evaluate::confusion(&x, &x).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        ensure!(m.accuracy == 1.0 && m.f1 == 1.0, "self-comparison {k}: {m:?}");
    }
    Ok("5 fixtures within 1e-12, self-comparison (1, 1) on 20 rasters".into())
}

// ---------------------------------------------------------------------------
// 7. Per-tile MAE against the uniform baseline.

fn criterion_7() -> Check {
    let mut wins = 0;
    let mut ratios = Vec::new();
    for seed in 0..30 {
        let truth = synth::generate(&ScenarioSpec::with_seed(seed)).map_err(|e| e.to_string())?;
        let out = pipeline::run_inputs(&PipelineConfig::default(), &inputs(&truth)).map_err(|e| e.to_string())?;
        let ours = synth::score(&out.population, &truth).map_err(|e| e.to_string())?;
        let base = synth::score(&disaggregate::uniform_allocate(&truth.grid, &truth.units), &truth)
            .map_err(|e| e.to_string())?;
        ensure!(ours.total_error <= 1e-9 * out.population.total(), "seed {seed}: total error {}", ours.total_error);
        if ours.mae < base.mae {
            wins += 1;
        }
        ratios.push(ours.mae / base.mae);
    }
    ratios.sort_by(f64::total_cmp);
    ensure!(wins >= 27, "pipeline beat the baseline in only {wins}/30");
    Ok(format!("pipeline MAE below uniform in {wins}/30, median MAE ratio {:.3}", ratios[15]))
}

// ---------------------------------------------------------------------------
// 8. Large run: time and byte-identical output.

fn run_cli(dir: &Path, out: &str, workers: usize) -> Result<Duration, String> {
    let start = Instant::now();
    let status = Command::new(env!("CARGO_BIN_EXE_popgrid"))
        .arg("run")
        .args(["--admin", dir.join("admin.geojson").to_str().unwrap()])
        .args(["--poi", dir.join("poi.csv").to_str().unwrap()])
        .args(["--mask", dir.join("mask.asc").to_str().unwrap()])
        .args(["--out", dir.join(out).to_str().unwrap()])
        .args(["--workers", &workers.to_string()])
        .status()
        .map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    // Exit 1 means completed with warnings: the grid overhangs the mask here.
    ensure!(matches!(status.code(), Some(0 | 1)), "run exited with {status}");
    Ok(elapsed)
}

fn criterion_8() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let spec = ScenarioSpec {
        seed: 8,
        extent: BBox::new(420_000.0, 3_480_000.0, 430_240.0, 3_490_240.0).unwrap(),
        n_units: 500,
        n_poi_clusters: 60,
        n_scattered_pois: 10_000,
        ..Default::default()
    };
    let mut truth = synth::generate(&spec).map_err(|e| e.to_string())?;
    truth.pois.truncate(10_000);
    ensure!(truth.mask.n_cols() == 1024 && truth.mask.n_rows() == 1024, "mask is not 1024x1024");
    ensure!(truth.units.len() == 500 && truth.pois.len() == 10_000, "wrong input sizes");
    truth.write(dir.path()).map_err(|e| e.to_string())?;

    let single = run_cli(dir.path(), "a", 1)?;
    run_cli(dir.path(), "b", 1)?;
    let many = std::thread::available_parallelism().map_or(4, |n| n.get().max(4));
    run_cli(dir.path(), "c", many)?;
    for f in ["population.asc", "tile_mask.asc", "report.json"] {
        let a = std::fs::read(dir.path().join("a").join(f)).map_err(|e| e.to_string())?;
        for other in ["b", "c"] {
            let b = std::fs::read(dir.path().join(other).join(f)).map_err(|e| e.to_string())?;
            ensure!(a == b, "{f} differs between run a and run {other}");
        }
    }
    ensure!(single < Duration::from_secs(10), "single-threaded run took {single:.2?}");
    Ok(format!("1024x1024 mask, 500 units, 10000 POIs: {single:.2?} on 1 worker; identical bytes across reruns and {many} workers"))
}

// ---------------------------------------------------------------------------
// 9. Round-trips and golden-file mutation fuzzing.

fn golden(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/data").join(name)
}

fn criterion_9() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let tmp = |n: &str| dir.path().join(n);

    for k in 0..20 {
        let (c, r) = (rng.random_range(1..50), rng.random_range(1..50));
        let values: Vec<u8> = (0..c * r).map(|_| [0, 1, BinaryRaster::NODATA][rng.random_range(0..3)]).collect();
        let mask = BinaryRaster::new(rng.random_range(-1e6..1e6), rng.random_range(-1e6..1e6), 0.5 + k as f64, c, r, values)
            .unwrap();
        io::write_ascii_grid(&mask.to_ascii(), tmp("m.asc")).map_err(|e| e.to_string())?;
        let back = BinaryRaster::from_ascii(&io::read_ascii_grid(tmp("m.asc")).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
        ensure!(back == mask, "integer grid {k} did not round-trip exactly");

        let grid = TileGrid::new(mask.origin_x(), mask.origin_y(), 30.0, c, r).unwrap();
        let reals: Vec<f64> = (0..c * r)
            .map(|_| match rng.random_range(0..4) {
                0 => 0.0,
                1 => rng.random::<f64>() * 10f64.powi(rng.random_range(-12..12)),
                2 => 1.0 / rng.random_range(1..1000) as f64,
                _ => rng.random_range(0.0..1e6),
            })
            .collect();
        let pop = PopulationGrid::new(grid, reals).unwrap();
        io::write_ascii_grid(&pop.to_ascii(), tmp("p.asc")).map_err(|e| e.to_string())?;
        let back = PopulationGrid::from_ascii(&io::read_ascii_grid(tmp("p.asc")).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
        ensure!(back.grid() == pop.grid(), "real grid {k}: geometry changed");
        for (a, b) in back.values().iter().zip(pop.values()) {
            ensure!((a - b).abs() <= 1e-9 * b.abs().max(1e-300), "real grid {k}: {a} vs {b}");
        }
    }

    let units = io::read_admin_units(golden("admin.geojson"), AdminLevel::Circle).map_err(|e| e.to_string())?;
    io::write_admin_units(&units, tmp("a.geojson")).map_err(|e| e.to_string())?;
    ensure!(io::read_admin_units(tmp("a.geojson"), AdminLevel::Circle).map_err(|e| e.to_string())? == units, "golden admin round-trip");
    let truth = synth::generate(&ScenarioSpec::with_seed(9)).map_err(|e| e.to_string())?;
    truth.write(dir.path()).map_err(|e| e.to_string())?;
    ensure!(io::read_admin_units(tmp("admin.geojson"), AdminLevel::Circle).map_err(|e| e.to_string())? == truth.units, "synthetic admin round-trip");
    ensure!(io::read_poi(tmp("poi.csv")).map_err(|e| e.to_string())? == truth.pois, "POI CSV round-trip");
    let ascii = io::read_ascii_grid(golden("population.asc")).map_err(|e| e.to_string())?;
    io::write_ascii_grid(&ascii, tmp("g.asc")).map_err(|e| e.to_string())?;
    ensure!(io::read_ascii_grid(tmp("g.asc")).map_err(|e| e.to_string())? == ascii, "golden population round-trip");

    let (admin_n, grid_n) = (fuzz_admin(&mut rng)?, fuzz_grid(&mut rng)?);
    Ok(format!("40 grids and 3 vector files round-trip; {admin_n} admin and {grid_n} grid mutations rejected with the contracted class"))
}

fn fuzz_admin(rng: &mut ChaCha8Rng) -> Result<usize, String> {
    use serde_json::{json, Value};
    let doc: Value = serde_json::from_str(&std::fs::read_to_string(golden("admin.geojson")).unwrap()).unwrap();
    let n = doc["features"].as_array().unwrap().len();
    let mut count = 0;
    for _ in 0..200 {
        let mut d = doc.clone();
        let f = rng.random_range(0..n);
        let props = &mut d["features"][f]["properties"];
        let expected = match rng.random_range(0..6) {
            0 => {
                props.as_object_mut().unwrap().remove(["id", "level", "population"][rng.random_range(0..3)]);
                "schema"
            }
            1 => {
                props["population"] = json!(-rng.random_range(1.0..1e5));
                "validation"
            }
            2 => {
                props["level"] = json!(["tehsil", "charge", "block"][rng.random_range(0..3)]);
                "level_mismatch"
            }
            3 => {
                d["features"][f]["geometry"]["type"] = json!("LineString");
                "schema"
            }
            4 => {
                props["population"] = json!([1, 2]);
                "schema"
            }
            _ => {
                let text = d.to_string();
                let cut = rng.random_range(1..text.len() - 1);
                let e = io::parse_admin_units(&text[..cut], AdminLevel::Circle)
                    .err()
                    .ok_or(format!("truncation at {cut} accepted"))?;
                ensure!(e.class() == "parse", "truncation at {cut}: {e}");
                count += 1;
                continue;
            }
        };
        let e = io::parse_admin_units(&d.to_string(), AdminLevel::Circle)
            .err()
            .ok_or(format!("mutation expecting {expected} accepted"))?;
        ensure!(e.class() == expected, "expected {expected}, got {e}");
        count += 1;
    }
    Ok(count)
}

fn fuzz_grid(rng: &mut ChaCha8Rng) -> Result<usize, String> {
    let src = std::fs::read_to_string(golden("mask.asc")).unwrap();
    let lines: Vec<&str> = src.lines().collect();
    let mut count = 0;
    for _ in 0..200 {
        let mut l: Vec<String> = lines.iter().map(|s| s.to_string()).collect();
        let expected = match rng.random_range(0..5) {
            0 => {
                l.remove(rng.random_range(0..6));
                "format"
            }
            1 => {
                let k = rng.random_range(0..6);
                l[k] = l[k].replace(|c: char| c.is_ascii_digit(), "z");
                "format"
            }
            2 => {
                let k = rng.random_range(6..l.len());
                let mut toks: Vec<&str> = l[k].split_whitespace().collect();
                toks.pop();
                l[k] = toks.join(" ");
                "truncation"
            }
            3 => {
                let k = rng.random_range(0..2);
                l[k] = format!("{} 99", l[k].split_whitespace().next().unwrap());
                "truncation"
            }
            _ => {
                let k = rng.random_range(6..l.len());
                l[k] = l[k].replacen('0', "0.0.0", 1).replacen('1', "1e", 1);
                "format"
            }
        };
        let text = l.join("\n") + "\n";
        let e = AsciiGrid::parse(&text).err().ok_or(format!("mutation expecting {expected} accepted:\n{text}"))?;
        ensure!(e.class() == expected, "expected {expected}, got {e}");
        count += 1;
    }
    Ok(count)
}

// ---------------------------------------------------------------------------

fn main() {
    let criteria: [Criterion; 9] = [
        ("conservation", criterion_1),
        ("75/25 weighting fixture", criterion_2),
        ("POI filter oracle", criterion_3),
        ("monotone in R and P", criterion_4),
        ("allocation oracle", criterion_5),
        ("accuracy and F1", criterion_6),
        ("beats uniform baseline", criterion_7),
        ("large-run determinism and speed", criterion_8),
        ("I/O round-trip and fuzzing", criterion_9),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match result {
            Ok(detail) => println!("criterion {} PASS  {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {} FAIL  {name}: {why}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
