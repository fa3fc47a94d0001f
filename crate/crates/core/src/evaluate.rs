//! Mask-quality metrics and zonal population statistics.
//!
//! Built-up is the positive class. Nothing here resamples implicitly:
//! rasters must share their geometry, and coarsening to tiles goes through
//! [`downsample_to_tiles`].

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::disaggregate::UnitLocator;
use crate::error::{Error, Result};
use crate::geo::TileGrid;
use crate::io::{AdminUnit, BinaryRaster, PopulationGrid};

pub const DEFAULT_THETA: f64 = 0.5;

/// Label of the zonal row collecting tiles outside every unit.
pub const UNASSIGNED_ROW: &str = "_unassigned";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// Counts with predicted and reference roles exchanged.
    pub fn swapped(&self) -> Self {
        ConfusionCounts {
            tp: self.tp,
            fp: self.fn_,
            fn_: self.fp,
            tn: self.tn,
        }
    }
}

/// Accuracy and F1 plus a few extra ratios. `precision`, `recall` and `iou`
/// are `None` when their denominator is zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub f1: f64,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub iou: Option<f64>,
}

/// Metrics object as written to JSON reports.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub f1: f64,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub iou: Option<f64>,
}

impl MetricsReport {
    pub fn new(counts: ConfusionCounts, metrics: Metrics) -> Self {
        MetricsReport {
            accuracy: metrics.accuracy,
            f1: metrics.f1,
            tp: counts.tp,
            fp: counts.fp,
            fn_: counts.fn_,
            tn: counts.tn,
            precision: metrics.precision,
            recall: metrics.recall,
            iou: metrics.iou,
        }
    }
}

/// Cell-by-cell comparison over cells valid in both rasters.
pub fn confusion(predicted: &BinaryRaster, reference: &BinaryRaster) -> Result<ConfusionCounts> {
    if !predicted.same_geometry(reference) {
        return Err(Error::Alignment(format!(
            "predicted raster {}x{} at ({}, {}) size {} does not match reference {}x{} at ({}, {}) size {}",
            predicted.n_cols(),
            predicted.n_rows(),
            predicted.origin_x(),
            predicted.origin_y(),
            predicted.pixel_size(),
            reference.n_cols(),
            reference.n_rows(),
            reference.origin_x(),
            reference.origin_y(),
            reference.pixel_size(),
        )));
    }
    let mut c = ConfusionCounts::default();
    for (&p, &r) in predicted.values().iter().zip(reference.values()) {
        if p == BinaryRaster::NODATA || r == BinaryRaster::NODATA {
            continue;
        }
        match (p == 1, r == 1) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

/// Accuracy `(tp+tn)/total` and F1 `2tp/(2tp+fp+fn)`.
///
/// With no positives in either raster F1 has no denominator; it is defined
/// as 1.0 there, since such a prediction is perfect.
pub fn metrics(c: &ConfusionCounts) -> Result<Metrics> {
    let total = c.total();
    if total == 0 {
        return Err(Error::Parameter("confusion counts are empty".into()));
    }
    let ratio = |num: u64, den: u64| (den > 0).then(|| num as f64 / den as f64);
    let f1_den = 2 * c.tp + c.fp + c.fn_;
    Ok(Metrics {
        accuracy: (c.tp + c.tn) as f64 / total as f64,
        f1: if f1_den == 0 {
            1.0
        } else {
            (2 * c.tp) as f64 / f1_den as f64
        },
        precision: ratio(c.tp, c.tp + c.fp),
        recall: ratio(c.tp, c.tp + c.fn_),
        iou: ratio(c.tp, c.tp + c.fp + c.fn_),
    })
}

/// Binarizes a fine mask onto `grid`: a tile is built when the built fraction
/// of its valid pixels (assigned by center) reaches `theta`; a tile without
/// valid pixels is nodata.
pub fn downsample_to_tiles(raster: &BinaryRaster, grid: &TileGrid, theta: f64) -> Result<BinaryRaster> {
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(Error::Parameter(format!("theta must lie in (0, 1], got {theta}")));
    }
    let mut built = vec![0u64; grid.len()];
    let mut valid = vec![0u64; grid.len()];
    for r in 0..raster.n_rows() {
        for (c, &v) in raster.row(r).iter().enumerate() {
            if v == BinaryRaster::NODATA {
                continue;
            }
            if let Some(tile) = grid.tile_index_of(raster.pixel_center(c, r)) {
                let k = grid.linear(tile);
                valid[k] += 1;
                built[k] += u64::from(v);
            }
        }
    }
    let values = built
        .iter()
        .zip(&valid)
        .map(|(&b, &n)| {
            if n == 0 {
                BinaryRaster::NODATA
            } else {
                u8::from(b as f64 / n as f64 >= theta)
            }
        })
        .collect();
    Ok(BinaryRaster::new(
        grid.origin_x(),
        grid.origin_y(),
        grid.tile_size(),
        grid.n_cols(),
        grid.n_rows(),
        values,
    )?
    .with_nodata_value(raster.nodata_value()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZonalRow {
    pub unit_id: String,
    pub population_sum: f64,
    pub tile_count: usize,
    /// Tiles carrying a positive population.
    pub built_tile_count: usize,
    /// People per square kilometer over the unit's tiles.
    pub mean_density: f64,
}

/// Sums tile values per unit, assigning each tile by its center to the first
/// containing unit. Tiles outside every unit form a final `_unassigned` row,
/// so the rows always add up to the grid total.
pub fn zonal_stats(pop: &PopulationGrid, units: &[AdminUnit]) -> Vec<ZonalRow> {
    let grid = pop.grid();
    let locator = UnitLocator::new(units);
    let mut sums = vec![0.0f64; units.len() + 1];
    let mut tiles = vec![0usize; units.len() + 1];
    let mut populated = vec![0usize; units.len() + 1];
    for (k, &v) in pop.values().iter().enumerate() {
        let row = locator
            .first(grid.tile_center(grid.tile_at(k)))
            .unwrap_or(units.len());
        sums[row] += v;
        tiles[row] += 1;
        if v > 0.0 {
            populated[row] += 1;
        }
    }
    let km2 = grid.tile_area() / 1e6;
    units
        .iter()
        .map(|u| u.id.as_str())
        .chain(std::iter::once(UNASSIGNED_ROW))
        .enumerate()
        .map(|(i, id)| ZonalRow {
            unit_id: id.to_string(),
            population_sum: sums[i],
            tile_count: tiles[i],
            built_tile_count: populated[i],
            mean_density: if tiles[i] == 0 {
                0.0
            } else {
                sums[i] / (tiles[i] as f64 * km2)
            },
        })
        .collect()
}

/// Zonal rows as CSV text with a header line.
pub fn zonal_csv(rows: &[ZonalRow]) -> String {
    let mut writer = csv::Writer::from_writer(Vec::new());
    for row in rows {
        writer.serialize(row).expect("zonal rows serialize");
    }
    String::from_utf8(writer.into_inner().expect("in-memory writer")).expect("utf-8")
}

pub fn write_zonal_csv(rows: &[ZonalRow], path: impl AsRef<Path>) -> Result<()> {
    crate::io::write_string(path.as_ref(), &zonal_csv(rows))
}
