//! Reference allocation with straight nested loops and no index structures.
//!
//! Kept deliberately naive so it can check [`super::assign_pixels`] and
//! [`super::allocate`] bit for bit. Contributions are added to tiles in unit
//! order, and within a unit in ascending tile order, which is the order the
//! indexed path uses.

use crate::error::Result;
use crate::geo::{point_in_polygon, TileGrid, TileId};
use crate::io::{AdminUnit, BinaryRaster, PopulationGrid};
use crate::poi_filter::TileMask;

fn first_unit_containing(units: &[AdminUnit], p: crate::geo::Point) -> Option<usize> {
    units
        .iter()
        .position(|u| u.geometry.parts().iter().any(|poly| point_in_polygon(p, poly)))
}

pub fn brute_force_allocate(
    raster: &BinaryRaster,
    grid: &TileGrid,
    units: &[AdminUnit],
    tile_mask: &TileMask,
) -> Result<PopulationGrid> {
    super::check_inputs(raster, grid, units, tile_mask)?;
    let n_tiles = grid.len();
    let mut built = vec![vec![0u64; n_tiles]; units.len()];

    for r in 0..raster.n_rows() {
        for c in 0..raster.n_cols() {
            if raster.get(c, r) != Some(true) {
                continue;
            }
            let center = raster.pixel_center(c, r);
            let Some(u) = first_unit_containing(units, center) else {
                continue;
            };
            let Some(tile) = grid.tile_index_of(center) else {
                continue;
            };
            built[u][grid.linear(tile)] += 1;
        }
    }

    let mut values = vec![0.0f64; n_tiles];
    for (u, unit) in units.iter().enumerate() {
        let mut retained_total = 0u64;
        for (t, &b) in built[u].iter().enumerate() {
            if tile_mask.is_retained_linear(t) {
                retained_total += b;
            }
        }
        if retained_total > 0 {
            for t in 0..n_tiles {
                if tile_mask.is_retained_linear(t) && built[u][t] > 0 {
                    values[t] += unit.population * built[u][t] as f64 / retained_total as f64;
                }
            }
            continue;
        }

        let mut owned = Vec::new();
        for t in 0..n_tiles {
            let center = grid.tile_center(grid.tile_at(t));
            if first_unit_containing(units, center) == Some(u) {
                owned.push(t);
            }
        }
        if owned.is_empty() {
            let p = unit.geometry.interior_point();
            let id = grid.tile_index_of(p).unwrap_or_else(|| {
                let k = |v: f64, o: f64, n: usize| {
                    let f = ((v - o) / grid.tile_size()).floor();
                    if f.is_nan() || f < 0.0 { 0 } else { (f as usize).min(n - 1) }
                };
                TileId::new(
                    k(p.x, grid.origin_x(), grid.n_cols()),
                    k(p.y, grid.origin_y(), grid.n_rows()),
                )
            });
            values[grid.linear(id)] += unit.population;
        } else {
            let share = unit.population / owned.len() as f64;
            for t in owned {
                values[t] += share;
            }
        }
    }
    PopulationGrid::new(*grid, values)
}
