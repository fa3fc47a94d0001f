use crate::error::{Error, Result};
use crate::geo::{BBox, Point, TileGrid, TileId};

use super::AsciiGrid;

/// Fine-resolution 0/1 built-up mask.
///
/// Row 0 is the southernmost row; pixel `(c, r)` is centered at
/// `(x0 + (c + 0.5) * size, y0 + (r + 0.5) * size)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryRaster {
    origin_x: f64,
    origin_y: f64,
    pixel_size: f64,
    n_cols: usize,
    n_rows: usize,
    values: Vec<u8>,
    nodata_value: f64,
}

impl BinaryRaster {
    /// Cell marker for nodata in [`BinaryRaster::values`].
    pub const NODATA: u8 = u8::MAX;
    pub const DEFAULT_NODATA_VALUE: f64 = -9999.0;

    pub fn new(
        origin_x: f64,
        origin_y: f64,
        pixel_size: f64,
        n_cols: usize,
        n_rows: usize,
        values: Vec<u8>,
    ) -> Result<Self> {
        if !(pixel_size > 0.0 && pixel_size.is_finite()) {
            return Err(Error::Parameter(format!(
                "pixel size must be positive, got {pixel_size}"
            )));
        }
        if !origin_x.is_finite() || !origin_y.is_finite() {
            return Err(Error::Parameter("raster origin must be finite".into()));
        }
        if n_cols == 0 || n_rows == 0 {
            return Err(Error::Parameter("raster must have at least one pixel".into()));
        }
        if values.len() != n_cols * n_rows {
            return Err(Error::Truncation {
                expected: n_cols * n_rows,
                found: values.len(),
            });
        }
        if let Some(i) = values
            .iter()
            .position(|&v| v > 1 && v != Self::NODATA)
        {
            return Err(Error::validation(
                format!("pixel {i}"),
                format!("mask value {} is neither 0, 1 nor nodata", values[i]),
            ));
        }
        Ok(BinaryRaster {
            origin_x,
            origin_y,
            pixel_size,
            n_cols,
            n_rows,
            values,
            nodata_value: Self::DEFAULT_NODATA_VALUE,
        })
    }

    pub fn filled(
        origin_x: f64,
        origin_y: f64,
        pixel_size: f64,
        n_cols: usize,
        n_rows: usize,
        value: u8,
    ) -> Result<Self> {
        Self::new(
            origin_x,
            origin_y,
            pixel_size,
            n_cols,
            n_rows,
            vec![value; n_cols * n_rows],
        )
    }

    pub fn with_nodata_value(mut self, nodata_value: f64) -> Self {
        self.nodata_value = nodata_value;
        self
    }

    pub fn from_ascii(grid: &AsciiGrid) -> Result<Self> {
        let mut values = Vec::with_capacity(grid.values.len());
        for (i, &v) in grid.values.iter().enumerate() {
            let cell = if v == grid.nodata_value {
                Self::NODATA
            } else if v == 0.0 {
                0
            } else if v == 1.0 {
                1
            } else {
                let (c, r) = (i % grid.n_cols, i / grid.n_cols);
                return Err(Error::validation(
                    format!("cell (col {c}, row {} from top)", grid.n_rows - 1 - r),
                    format!("mask value {v} is neither 0, 1 nor nodata"),
                ));
            };
            values.push(cell);
        }
        Ok(Self::new(
            grid.xll_corner,
            grid.yll_corner,
            grid.cell_size,
            grid.n_cols,
            grid.n_rows,
            values,
        )?
        .with_nodata_value(grid.nodata_value))
    }

    pub fn to_ascii(&self) -> AsciiGrid {
        AsciiGrid {
            n_cols: self.n_cols,
            n_rows: self.n_rows,
            xll_corner: self.origin_x,
            yll_corner: self.origin_y,
            cell_size: self.pixel_size,
            nodata_value: self.nodata_value,
            values: self
                .values
                .iter()
                .map(|&v| {
                    if v == Self::NODATA {
                        self.nodata_value
                    } else {
                        f64::from(v)
                    }
                })
                .collect(),
        }
    }

    pub fn origin_x(&self) -> f64 {
        self.origin_x
    }

    pub fn origin_y(&self) -> f64 {
        self.origin_y
    }

    pub fn pixel_size(&self) -> f64 {
        self.pixel_size
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn nodata_value(&self) -> f64 {
        self.nodata_value
    }

    /// Raw cells, row 0 first: 0, 1 or [`BinaryRaster::NODATA`].
    pub fn values(&self) -> &[u8] {
        &self.values
    }

    pub fn row(&self, r: usize) -> &[u8] {
        &self.values[r * self.n_cols..(r + 1) * self.n_cols]
    }

    /// `Some(built)` for valid pixels, `None` for nodata.
    pub fn get(&self, col: usize, row: usize) -> Option<bool> {
        match self.values[row * self.n_cols + col] {
            Self::NODATA => None,
            v => Some(v == 1),
        }
    }

    pub fn set(&mut self, col: usize, row: usize, value: Option<bool>) {
        self.values[row * self.n_cols + col] = match value {
            None => Self::NODATA,
            Some(b) => u8::from(b),
        };
    }

    pub fn pixel_center(&self, col: usize, row: usize) -> Point {
        Point::new(
            self.origin_x + (col as f64 + 0.5) * self.pixel_size,
            self.origin_y + (row as f64 + 0.5) * self.pixel_size,
        )
    }

    pub fn extent(&self) -> BBox {
        BBox {
            min_x: self.origin_x,
            min_y: self.origin_y,
            max_x: self.origin_x + self.n_cols as f64 * self.pixel_size,
            max_y: self.origin_y + self.n_rows as f64 * self.pixel_size,
        }
    }

    pub fn same_geometry(&self, other: &BinaryRaster) -> bool {
        self.origin_x == other.origin_x
            && self.origin_y == other.origin_y
            && self.pixel_size == other.pixel_size
            && self.n_cols == other.n_cols
            && self.n_rows == other.n_rows
    }

    pub fn built_count(&self) -> usize {
        self.values.iter().filter(|&&v| v == 1).count()
    }

    pub fn valid_count(&self) -> usize {
        self.values.iter().filter(|&&v| v != Self::NODATA).count()
    }
}

/// Real-valued population per tile.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationGrid {
    grid: TileGrid,
    values: Vec<f64>,
}

impl PopulationGrid {
    pub fn zeros(grid: TileGrid) -> Self {
        PopulationGrid {
            grid,
            values: vec![0.0; grid.len()],
        }
    }

    pub fn new(grid: TileGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Truncation {
                expected: grid.len(),
                found: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(Error::validation(
                format!("tile {i}"),
                format!("population must be finite and non-negative, got {}", values[i]),
            ));
        }
        Ok(PopulationGrid { grid, values })
    }

    /// Nodata cells are read as zero population.
    pub fn from_ascii(ascii: &AsciiGrid) -> Result<Self> {
        let grid = TileGrid::new(
            ascii.xll_corner,
            ascii.yll_corner,
            ascii.cell_size,
            ascii.n_cols,
            ascii.n_rows,
        )?;
        let values = ascii
            .values
            .iter()
            .map(|&v| if v == ascii.nodata_value { 0.0 } else { v })
            .collect();
        Self::new(grid, values)
    }

    pub fn to_ascii(&self) -> AsciiGrid {
        AsciiGrid {
            n_cols: self.grid.n_cols(),
            n_rows: self.grid.n_rows(),
            xll_corner: self.grid.origin_x(),
            yll_corner: self.grid.origin_y(),
            cell_size: self.grid.tile_size(),
            nodata_value: BinaryRaster::DEFAULT_NODATA_VALUE,
            values: self.values.clone(),
        }
    }

    pub fn grid(&self) -> &TileGrid {
        &self.grid
    }

    /// Row-major values, southernmost row first.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, id: TileId) -> f64 {
        self.values[self.grid.linear(id)]
    }

    pub(crate) fn add(&mut self, linear: usize, amount: f64) {
        self.values[linear] += amount;
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }
}
