//! Seeded synthetic cities with known per-pixel population.
//!
//! A scenario is a rectangular partition of the extent into admin units, a
//! built-up mask whose density follows a few Gaussian "settlement" bumps,
//! dense POI clusters sitting on built but non-residential patches, and
//! integer populations spread over residential built pixels. Everything is a
//! pure function of [`ScenarioSpec`]; the generator is ChaCha8 seeded from
//! the 64-bit `seed`.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{distance, BBox, Point, Polygon, TileGrid};
use crate::io::{self, AdminLevel, AdminUnit, BinaryRaster, PoiPoint, PopulationGrid};

/// Radius of the disc each POI cluster is drawn in.
pub const CLUSTER_RADIUS: f64 = 250.0;
/// Pixels within this distance of a cluster POI become non-residential built-up.
pub const PATCH_RADIUS: f64 = 30.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioSpec {
    pub seed: u64,
    pub extent: BBox,
    pub pixel_size: f64,
    pub tile_size: f64,
    pub n_units: usize,
    pub built_fraction_range: (f64, f64),
    pub n_poi_clusters: usize,
    pub poi_cluster_size_range: (usize, usize),
    /// Isolated POIs sprinkled uniformly over the extent.
    pub n_scattered_pois: usize,
    /// Integer population per unit, inclusive.
    pub population_range: (u64, u64),
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        ScenarioSpec {
            seed: 0,
            extent: BBox {
                min_x: 420_000.0,
                min_y: 3_480_000.0,
                max_x: 423_000.0,
                max_y: 3_483_000.0,
            },
            pixel_size: 10.0,
            tile_size: TileGrid::DEFAULT_TILE_SIZE,
            n_units: 12,
            built_fraction_range: (0.15, 0.6),
            n_poi_clusters: 3,
            poi_cluster_size_range: (5, 10),
            n_scattered_pois: 15,
            population_range: (2_000, 30_000),
        }
    }
}

impl ScenarioSpec {
    pub fn with_seed(seed: u64) -> Self {
        ScenarioSpec {
            seed,
            ..Default::default()
        }
    }

    /// Raster dimensions in pixels.
    fn raster_dims(&self) -> Result<(usize, usize)> {
        let dim = |len: f64, what: &str| -> Result<usize> {
            let n = (len / self.pixel_size).round();
            if n < 1.0 || ((n * self.pixel_size) - len).abs() > 1e-9 * len.max(1.0) {
                return Err(Error::Generation(format!(
                    "extent {what} {len} is not a positive multiple of the pixel size {}",
                    self.pixel_size
                )));
            }
            Ok(n as usize)
        };
        Ok((dim(self.extent.width(), "width")?, dim(self.extent.height(), "height")?))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Generation(msg));
        if !(self.pixel_size > 0.0 && self.pixel_size.is_finite()) {
            return bad(format!("pixel size must be positive, got {}", self.pixel_size));
        }
        if !(self.tile_size >= self.pixel_size && self.tile_size.is_finite()) {
            return bad(format!(
                "tile size {} must be finite and at least the pixel size {}",
                self.tile_size, self.pixel_size
            ));
        }
        let (cols, rows) = self.raster_dims()?;
        if self.n_units == 0 {
            return bad("at least one unit is required".into());
        }
        if self.n_units > cols * rows {
            return bad(format!("{} units do not fit in {} pixels", self.n_units, cols * rows));
        }
        let (blo, bhi) = self.built_fraction_range;
        if !(0.0 <= blo && blo <= bhi && bhi <= 1.0) {
            return bad(format!("built fraction range ({blo}, {bhi}) is not within [0, 1]"));
        }
        let (plo, phi) = self.population_range;
        if plo > phi {
            return bad(format!("population range ({plo}, {phi}) is reversed"));
        }
        let (clo, chi) = self.poi_cluster_size_range;
        if clo > chi || (self.n_poi_clusters > 0 && clo == 0) {
            return bad(format!("cluster size range ({clo}, {chi}) is invalid"));
        }
        if bhi == 0.0 && phi > 0 {
            return bad("built fraction is zero but units carry population".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub spec: ScenarioSpec,
    pub grid: TileGrid,
    pub mask: BinaryRaster,
    /// Built pixels that carry no residential population (POI patches).
    pub non_residential: Vec<bool>,
    /// Row-major per-pixel population, southernmost row first. Integer valued.
    pub pixel_population: Vec<f64>,
    pub units: Vec<AdminUnit>,
    pub pois: Vec<PoiPoint>,
}

impl GroundTruth {
    /// Truth aggregated onto the tile grid by pixel center.
    pub fn tile_population(&self) -> PopulationGrid {
        let mut values = vec![0.0; self.grid.len()];
        let cols = self.mask.n_cols();
        for (k, &v) in self.pixel_population.iter().enumerate() {
            if v > 0.0 {
                let p = self.mask.pixel_center(k % cols, k / cols);
                let tile = self.grid.tile_index_of(p).expect("grid covers the extent");
                values[self.grid.linear(tile)] += v;
            }
        }
        PopulationGrid::new(self.grid, values).expect("non-negative")
    }

    /// Writes `admin.geojson`, `poi.csv`, `mask.asc`, `truth.asc` and
    /// `scenario.json` into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        io::write_admin_units(&self.units, dir.join("admin.geojson"))?;
        io::write_poi_csv(&self.pois, dir.join("poi.csv"))?;
        io::write_ascii_grid(&self.mask.to_ascii(), dir.join("mask.asc"))?;
        io::write_ascii_grid(&self.tile_population().to_ascii(), dir.join("truth.asc"))?;
        let spec = serde_json::to_string_pretty(&self.spec).expect("serializable");
        io::write_string(&dir.join("scenario.json"), &(spec + "\n"))
    }
}

/// Pixel-space rectangle, half-open.
#[derive(Debug, Clone, Copy)]
struct PixelRect {
    c0: usize,
    r0: usize,
    c1: usize,
    r1: usize,
}

impl PixelRect {
    fn area(&self) -> usize {
        (self.c1 - self.c0) * (self.r1 - self.r0)
    }
}

/// Guillotine partition: repeatedly split the largest rectangle across its
/// longer side at a random interior cut.
fn partition(rng: &mut ChaCha8Rng, cols: usize, rows: usize, n: usize) -> Result<Vec<PixelRect>> {
    let mut rects = vec![PixelRect { c0: 0, r0: 0, c1: cols, r1: rows }];
    while rects.len() < n {
        let (idx, rect) = rects
            .iter()
            .copied()
            .enumerate()
            .max_by(|(i, a), (j, b)| a.area().cmp(&b.area()).then(j.cmp(i)))
            .expect("non-empty");
        let (w, h) = (rect.c1 - rect.c0, rect.r1 - rect.r0);
        if w.max(h) < 2 {
            return Err(Error::Generation(format!("cannot split {} pixels into {n} units", cols * rows)));
        }
        let side = w.max(h);
        let margin = (side / 4).max(1);
        let cut = rng.random_range(margin..=side - margin);
        let (a, b) = if w >= h {
            (
                PixelRect { c1: rect.c0 + cut, ..rect },
                PixelRect { c0: rect.c0 + cut, ..rect },
            )
        } else {
            (
                PixelRect { r1: rect.r0 + cut, ..rect },
                PixelRect { r0: rect.r0 + cut, ..rect },
            )
        };
        rects[idx] = a;
        rects.push(b);
    }
    Ok(rects)
}

struct Bump {
    center: Point,
    sigma: f64,
}

/// Largest-remainder split of `total` proportional to integer `weights`.
fn split_integer(total: u64, weights: &[u64]) -> Vec<u64> {
    let sum: u128 = weights.iter().map(|&w| u128::from(w)).sum();
    if sum == 0 {
        return vec![0; weights.len()];
    }
    let mut parts = Vec::with_capacity(weights.len());
    let mut remainders = Vec::with_capacity(weights.len());
    for (i, &w) in weights.iter().enumerate() {
        let scaled = u128::from(total) * u128::from(w);
        parts.push((scaled / sum) as u64);
        remainders.push((scaled % sum, i));
    }
    let leftover = total - parts.iter().sum::<u64>();
    remainders.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    for &(_, i) in remainders.iter().take(leftover as usize) {
        parts[i] += 1;
    }
    parts
}

pub fn generate(spec: &ScenarioSpec) -> Result<GroundTruth> {
    spec.validate()?;
    let (cols, rows) = spec.raster_dims()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let extent = spec.extent;
    let ps = spec.pixel_size;
    let center_of = |c: usize, r: usize| {
        Point::new(extent.min_x + (c as f64 + 0.5) * ps, extent.min_y + (r as f64 + 0.5) * ps)
    };

    let rects = partition(&mut rng, cols, rows, spec.n_units)?;
    let mut owner = vec![0usize; cols * rows];
    for (u, rect) in rects.iter().enumerate() {
        for r in rect.r0..rect.r1 {
            owner[r * cols + rect.c0..r * cols + rect.c1].fill(u);
        }
    }

    let diag = extent.width().hypot(extent.height());
    let bumps: Vec<Bump> = (0..3 + spec.n_units / 4)
        .map(|_| Bump {
            center: Point::new(
                rng.random_range(extent.min_x..=extent.max_x),
                rng.random_range(extent.min_y..=extent.max_y),
            ),
            sigma: diag * rng.random_range(0.05..0.2),
        })
        .collect();
    let density = |p: Point| -> f64 {
        let peak = bumps
            .iter()
            .map(|b| {
                let d = distance(p, b.center) / b.sigma;
                (-0.5 * d * d).exp()
            })
            .fold(0.0, f64::max);
        0.15 + 0.85 * peak
    };

    let (blo, bhi) = spec.built_fraction_range;
    let fractions: Vec<f64> = (0..spec.n_units)
        .map(|_| if blo == bhi { blo } else { rng.random_range(blo..=bhi) })
        .collect();
    let mut dens = vec![0.0f64; cols * rows];
    let mut built = vec![false; cols * rows];
    for r in 0..rows {
        for c in 0..cols {
            let k = r * cols + c;
            let d = density(center_of(c, r));
            dens[k] = d;
            let f = fractions[owner[k]];
            let p = 1.0 - (1.0 - f).powf(2.0 * d);
            let draw: f64 = rng.random();
            built[k] = draw < p;
        }
    }

    let mut pois = Vec::new();
    let mut non_residential = vec![false; cols * rows];
    let (clo, chi) = spec.poi_cluster_size_range;
    for _ in 0..spec.n_poi_clusters {
        let margin_x = CLUSTER_RADIUS.min(extent.width() / 2.0);
        let margin_y = CLUSTER_RADIUS.min(extent.height() / 2.0);
        let center = Point::new(
            rng.random_range(extent.min_x + margin_x..=extent.max_x - margin_x),
            rng.random_range(extent.min_y + margin_y..=extent.max_y - margin_y),
        );
        let size = rng.random_range(clo..=chi);
        let mut placed = 0;
        while placed < size {
            let radius = CLUSTER_RADIUS * rng.random::<f64>().sqrt();
            let angle = rng.random_range(0.0..std::f64::consts::TAU);
            let p = Point::new(center.x + radius * angle.cos(), center.y + radius * angle.sin());
            if !(p.x >= extent.min_x && p.x < extent.max_x && p.y >= extent.min_y && p.y < extent.max_y) {
                continue;
            }
            pois.push(PoiPoint { location: p, category: "commercial".into() });
            placed += 1;
            let reach = (PATCH_RADIUS / ps).ceil() as isize + 1;
            let pc = ((p.x - extent.min_x) / ps).floor() as isize;
            let pr = ((p.y - extent.min_y) / ps).floor() as isize;
            for r in (pr - reach).max(0)..=(pr + reach).min(rows as isize - 1) {
                for c in (pc - reach).max(0)..=(pc + reach).min(cols as isize - 1) {
                    let (c, r) = (c as usize, r as usize);
                    if distance(center_of(c, r), p) <= PATCH_RADIUS {
                        let k = r * cols + c;
                        built[k] = true;
                        non_residential[k] = true;
                    }
                }
            }
        }
    }
    for _ in 0..spec.n_scattered_pois {
        let p = Point::new(
            rng.random_range(extent.min_x..extent.max_x),
            rng.random_range(extent.min_y..extent.max_y),
        );
        pois.push(PoiPoint { location: p, category: "kiosk".into() });
    }

    let (plo, phi) = spec.population_range;
    let mut pixel_population = vec![0.0f64; cols * rows];
    let mut units = Vec::with_capacity(spec.n_units);
    for (u, rect) in rects.iter().enumerate() {
        let mut population = rng.random_range(plo..=phi);
        let cells: Vec<usize> = (rect.r0..rect.r1)
            .flat_map(|r| (rect.c0..rect.c1).map(move |c| r * cols + c))
            .collect();
        let mut residential: Vec<usize> =
            cells.iter().copied().filter(|&k| built[k] && !non_residential[k]).collect();
        if residential.is_empty() && population > 0 {
            // Keep the unit populated: build its first residential-eligible pixel.
            match cells.iter().copied().find(|&k| !non_residential[k]) {
                Some(k) => {
                    built[k] = true;
                    residential.push(k);
                }
                None => population = 0,
            }
        }
        let weights: Vec<u64> = residential
            .iter()
            .map(|&k| 1 + (dens[k] * 9.0 * rng.random_range(0.5..1.5)) as u64)
            .collect();
        for (&k, share) in residential.iter().zip(split_integer(population, &weights)) {
            pixel_population[k] = share as f64;
        }

        let bbox = BBox {
            min_x: extent.min_x + rect.c0 as f64 * ps,
            min_y: extent.min_y + rect.r0 as f64 * ps,
            max_x: extent.min_x + rect.c1 as f64 * ps,
            max_y: extent.min_y + rect.r1 as f64 * ps,
        };
        units.push(AdminUnit::new(
            format!("U{:04}", u + 1),
            AdminLevel::Circle,
            Polygon::rectangle(bbox)?,
            population as f64,
        )?);
    }

    let mask = BinaryRaster::new(
        extent.min_x,
        extent.min_y,
        ps,
        cols,
        rows,
        built.iter().map(|&b| u8::from(b)).collect(),
    )?;
    let grid = TileGrid::snapped_to(&extent, spec.tile_size)?;
    Ok(GroundTruth {
        spec: spec.clone(),
        grid,
        mask,
        non_residential,
        pixel_population,
        units,
        pois,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Score {
    pub mae: f64,
    pub rmse: f64,
    pub total_error: f64,
}

/// Per-tile error between two population grids on the same tiling.
pub fn score_grids(estimate: &PopulationGrid, truth: &PopulationGrid) -> Result<Score> {
    if estimate.grid() != truth.grid() {
        return Err(Error::Alignment(format!(
            "estimate grid {:?} does not match truth grid {:?}",
            estimate.grid(),
            truth.grid()
        )));
    }
    let n = estimate.values().len() as f64;
    let (mut abs, mut sq) = (0.0, 0.0);
    for (e, t) in estimate.values().iter().zip(truth.values()) {
        let d = e - t;
        abs += d.abs();
        sq += d * d;
    }
    Ok(Score {
        mae: abs / n,
        rmse: (sq / n).sqrt(),
        total_error: (estimate.total() - truth.total()).abs(),
    })
}

pub fn score(estimate: &PopulationGrid, truth: &GroundTruth) -> Result<Score> {
    score_grids(estimate, &truth.tile_population())
}
