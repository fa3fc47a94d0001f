//! Built-up weighted disaggregation.
//!
//! Each admin unit's population is split over its retained tiles in
//! proportion to the built pixels the unit owns in each tile:
//!
//! ```text
//! P_tile = P_unit * built(tile, unit) / sum over retained tiles t of built(t, unit)
//! ```
//!
//! The denominator only counts retained tiles, so excluding a tile moves its
//! share to the remaining ones instead of dropping it. Pixels are assigned
//! to units by their centers, so a tile straddling a unit boundary can
//! collect population from several units.
//!
//! A unit with no retained built pixels falls back to a uniform split over
//! the tiles whose centers it contains, or failing that, to the tile under
//! its representative point. The fallback is always flagged in the report.

mod locator;
pub mod oracle;

use std::collections::HashMap;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{TileGrid, TileId};
use crate::io::{AdminUnit, BinaryRaster, PopulationGrid};
use crate::poi_filter::TileMask;

pub use locator::{Hit, UnitLocator};

/// Built pixels one unit owns inside one tile.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TileCount {
    /// Row-major tile index.
    pub tile: usize,
    pub built: u64,
    pub retained: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnitTally {
    /// Tiles holding at least one of the unit's built pixels, ascending.
    pub tiles: Vec<TileCount>,
    pub total_built: u64,
    pub total_retained_built: u64,
}

impl UnitTally {
    pub fn excluded_built(&self) -> u64 {
        self.total_built - self.total_retained_built
    }
}

/// Built-pixel counts per (tile, unit) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PixelAssignment {
    pub grid: TileGrid,
    /// One tally per unit, in input order.
    pub units: Vec<UnitTally>,
    /// Built pixels whose center lies in more than one unit.
    pub overlapping_pixels: u64,
    /// Built pixels inside no unit.
    pub unassigned_built: u64,
    /// Built pixels inside a unit but outside the tile grid.
    pub outside_grid_built: u64,
}

/// Checks shared by the indexed path and the oracle.
pub(crate) fn check_inputs(
    raster: &BinaryRaster,
    grid: &TileGrid,
    units: &[AdminUnit],
    tile_mask: &TileMask,
) -> Result<()> {
    if tile_mask.grid() != grid {
        return Err(Error::Configuration(
            "tile mask was computed on a different grid".into(),
        ));
    }
    if raster.pixel_size() > grid.tile_size() {
        return Err(Error::Configuration(format!(
            "mask pixel size {} exceeds tile size {}",
            raster.pixel_size(),
            grid.tile_size()
        )));
    }
    if let Some(b) = units.iter().find(|u| u.population < 0.0) {
        return Err(Error::validation(format!("unit {}", b.id), "negative population"));
    }
    let extent = raster.extent();
    if !extent.overlaps(&grid.extent()) {
        return Err(Error::Configuration(
            "mask raster does not overlap the tile grid".into(),
        ));
    }
    if let Some(ub) = crate::io::units_bbox(units) {
        if !extent.overlaps(&ub) {
            return Err(Error::Configuration(
                "mask raster does not overlap the admin units".into(),
            ));
        }
    }
    Ok(())
}

/// Run of consecutive pixels in one raster row sharing a unit and a tile.
struct Run {
    unit: u32,
    tile: u32,
    count: u32,
}

#[derive(Default)]
struct RowTally {
    runs: Vec<Run>,
    overlapping: u64,
    unassigned: u64,
    outside_grid: u64,
}

/// Assigns every built pixel, by its center, to one tile and at most one unit.
///
/// Overlapping units resolve to the first in input order; the number of
/// affected pixels is reported and logged.
pub fn assign_pixels(
    raster: &BinaryRaster,
    grid: &TileGrid,
    units: &[AdminUnit],
    tile_mask: &TileMask,
) -> Result<PixelAssignment> {
    check_inputs(raster, grid, units, tile_mask)?;
    if grid.len() > u32::MAX as usize || units.len() > u32::MAX as usize {
        return Err(Error::Configuration("grid or unit count exceeds 2^32".into()));
    }
    let locator = UnitLocator::new(units);

    let rows: Vec<RowTally> = (0..raster.n_rows())
        .into_par_iter()
        .map(|r| {
            let mut tally = RowTally::default();
            for (c, &v) in raster.row(r).iter().enumerate() {
                if v != 1 {
                    continue;
                }
                let center = raster.pixel_center(c, r);
                let Some(hit) = locator.locate(center) else {
                    tally.unassigned += 1;
                    continue;
                };
                if hit.overlapped {
                    tally.overlapping += 1;
                }
                let Some(tile) = grid.tile_index_of(center) else {
                    tally.outside_grid += 1;
                    continue;
                };
                let (unit, tile) = (hit.unit as u32, grid.linear(tile) as u32);
                match tally.runs.last_mut() {
                    Some(run) if run.unit == unit && run.tile == tile => run.count += 1,
                    _ => tally.runs.push(Run { unit, tile, count: 1 }),
                }
            }
            tally
        })
        .collect();

    let mut per_unit: Vec<HashMap<u32, u64>> = vec![HashMap::new(); units.len()];
    let (mut overlapping, mut unassigned, mut outside) = (0, 0, 0);
    for row in rows {
        overlapping += row.overlapping;
        unassigned += row.unassigned;
        outside += row.outside_grid;
        for run in row.runs {
            *per_unit[run.unit as usize].entry(run.tile).or_default() += u64::from(run.count);
        }
    }

    let tallies = per_unit
        .into_par_iter()
        .map(|counts| {
            let mut tiles: Vec<TileCount> = counts
                .into_iter()
                .map(|(tile, built)| TileCount {
                    tile: tile as usize,
                    built,
                    retained: tile_mask.is_retained_linear(tile as usize),
                })
                .collect();
            tiles.sort_unstable_by_key(|t| t.tile);
            let total_built = tiles.iter().map(|t| t.built).sum();
            let total_retained_built = tiles.iter().filter(|t| t.retained).map(|t| t.built).sum();
            UnitTally {
                tiles,
                total_built,
                total_retained_built,
            }
        })
        .collect();

    if overlapping > 0 {
        warn!("{overlapping} built pixels fall in more than one admin unit; the first unit in input order wins");
    }
    Ok(PixelAssignment {
        grid: *grid,
        units: tallies,
        overlapping_pixels: overlapping,
        unassigned_built: unassigned,
        outside_grid_built: outside,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fallback {
    /// Built-up weighting applied normally.
    None,
    /// Uniform split over tiles whose centers lie in the unit.
    UniformTiles,
    /// Whole population on the tile under the unit's representative point.
    RepresentativePoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitReport {
    pub id: String,
    pub population_in: f64,
    pub population_out: f64,
    pub fallback_used: bool,
    pub fallback: Fallback,
    /// Tiles with built pixels of this unit that kept their share.
    pub retained_tiles: usize,
    /// Tiles with built pixels of this unit removed by the POI mask.
    pub excluded_tiles: usize,
    pub built_pixels: u64,
    pub retained_built_pixels: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationTotals {
    pub units: usize,
    pub population_in: f64,
    pub population_out: f64,
    /// `|out - in| / max(in, 1)`.
    pub relative_error: f64,
    pub fallback_units: usize,
    pub built_pixels: u64,
    pub retained_built_pixels: u64,
    pub overlapping_pixels: u64,
    pub unassigned_built_pixels: u64,
    pub outside_grid_built_pixels: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationReport {
    pub units: Vec<UnitReport>,
    pub totals: AllocationTotals,
}

/// Tiles whose centers belong to `unit` under the first-in-order rule.
pub(crate) fn tiles_centered_in(grid: &TileGrid, locator: &UnitLocator<'_>, unit: usize) -> Vec<usize> {
    let bbox = locator.units()[unit].geometry.bbox();
    let Some(((c0, c1), (r0, r1))) = grid.tile_range(&bbox) else {
        return Vec::new();
    };
    let mut tiles = Vec::new();
    for r in r0..=r1 {
        for c in c0..=c1 {
            let id = TileId::new(c, r);
            if locator.first(grid.tile_center(id)) == Some(unit) {
                tiles.push(grid.linear(id));
            }
        }
    }
    tiles
}

/// Contributions `(tile, amount)` for a unit without retained built pixels.
pub(crate) fn fallback_shares(
    grid: &TileGrid,
    unit: &AdminUnit,
    centered: &[usize],
) -> (Fallback, Vec<(usize, f64)>) {
    if centered.is_empty() {
        let p = unit.geometry.interior_point();
        if grid.tile_index_of(p).is_none() {
            warn!("unit {} lies outside the tile grid; its population goes to the nearest edge tile", unit.id);
        }
        let tile = grid.linear(grid.clamped_tile_of(p));
        (Fallback::RepresentativePoint, vec![(tile, unit.population)])
    } else {
        let share = unit.population / centered.len() as f64;
        (
            Fallback::UniformTiles,
            centered.iter().map(|&t| (t, share)).collect(),
        )
    }
}

/// Proportional share of `population` for `built` of `total` pixels.
#[inline]
pub(crate) fn weighted_share(population: f64, built: u64, total: u64) -> f64 {
    population * built as f64 / total as f64
}

/// Distributes unit populations over tiles from a pixel assignment.
pub fn allocate(
    assignment: &PixelAssignment,
    units: &[AdminUnit],
) -> Result<(PopulationGrid, AllocationReport)> {
    if assignment.units.len() != units.len() {
        return Err(Error::Configuration(format!(
            "assignment has {} units but {} were supplied",
            assignment.units.len(),
            units.len()
        )));
    }
    if let Some(u) = units.iter().find(|u| !(u.population >= 0.0 && u.population.is_finite())) {
        return Err(Error::validation(format!("unit {}", u.id), "population must be finite and non-negative"));
    }
    let grid = assignment.grid;
    let locator = UnitLocator::new(units);

    let per_unit: Vec<(Fallback, Vec<(usize, f64)>)> = units
        .par_iter()
        .zip(assignment.units.par_iter())
        .enumerate()
        .map(|(i, (unit, tally))| {
            if tally.total_retained_built > 0 {
                let shares = tally
                    .tiles
                    .iter()
                    .filter(|t| t.retained)
                    .map(|t| (t.tile, weighted_share(unit.population, t.built, tally.total_retained_built)))
                    .collect();
                (Fallback::None, shares)
            } else {
                fallback_shares(&grid, unit, &tiles_centered_in(&grid, &locator, i))
            }
        })
        .collect();

    let mut population = PopulationGrid::zeros(grid);
    let mut reports = Vec::with_capacity(units.len());
    for ((unit, tally), (fallback, shares)) in units.iter().zip(&assignment.units).zip(per_unit) {
        let mut out = 0.0;
        for &(tile, amount) in &shares {
            population.add(tile, amount);
            out += amount;
        }
        reports.push(UnitReport {
            id: unit.id.clone(),
            population_in: unit.population,
            population_out: out,
            fallback_used: fallback != Fallback::None,
            fallback,
            retained_tiles: tally.tiles.iter().filter(|t| t.retained).count(),
            excluded_tiles: tally.tiles.iter().filter(|t| !t.retained).count(),
            built_pixels: tally.total_built,
            retained_built_pixels: tally.total_retained_built,
        });
    }

    let population_in: f64 = units.iter().map(|u| u.population).sum();
    let population_out = population.total();
    let totals = AllocationTotals {
        units: units.len(),
        population_in,
        population_out,
        relative_error: (population_out - population_in).abs() / population_in.max(1.0),
        fallback_units: reports.iter().filter(|r| r.fallback_used).count(),
        built_pixels: assignment.units.iter().map(|t| t.total_built).sum(),
        retained_built_pixels: assignment.units.iter().map(|t| t.total_retained_built).sum(),
        overlapping_pixels: assignment.overlapping_pixels,
        unassigned_built_pixels: assignment.unassigned_built,
        outside_grid_built_pixels: assignment.outside_grid_built,
    };
    Ok((
        population,
        AllocationReport {
            units: reports,
            totals,
        },
    ))
}

/// Baseline that ignores the built-up mask: each unit's population is spread
/// evenly over the tiles whose centers it contains.
pub fn uniform_allocate(grid: &TileGrid, units: &[AdminUnit]) -> PopulationGrid {
    let locator = UnitLocator::new(units);
    let shares: Vec<Vec<(usize, f64)>> = (0..units.len())
        .into_par_iter()
        .map(|i| fallback_shares(grid, &units[i], &tiles_centered_in(grid, &locator, i)).1)
        .collect();
    let mut population = PopulationGrid::zeros(*grid);
    for (tile, amount) in shares.into_iter().flatten() {
        population.add(tile, amount);
    }
    population
}
