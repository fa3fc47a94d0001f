//! ESRI ASCII grid reader and writer.
//!
//! Files list rows from the top (north) down. In memory, [`AsciiGrid::values`]
//! is row-major with row 0 at the bottom, matching the raster and tile grids.

use std::fmt::Write as _;
use std::path::Path;

use log::warn;

use crate::error::{Error, Result};

const KEYS: [&str; 6] = [
    "NCOLS",
    "NROWS",
    "XLLCORNER",
    "YLLCORNER",
    "CELLSIZE",
    "NODATA_VALUE",
];

#[derive(Debug, Clone, PartialEq)]
pub struct AsciiGrid {
    pub n_cols: usize,
    pub n_rows: usize,
    pub xll_corner: f64,
    pub yll_corner: f64,
    pub cell_size: f64,
    pub nodata_value: f64,
    /// Row-major, southernmost row first.
    pub values: Vec<f64>,
}

impl AsciiGrid {
    /// Parses a grid, returning any non-fatal warnings alongside it.
    ///
    /// Header keys are matched case-insensitively by name; an unconventional
    /// key order is accepted with a warning.
    pub fn parse(text: &str) -> Result<(AsciiGrid, Vec<String>)> {
        let mut warnings = Vec::new();
        let mut header: [Option<(f64, usize)>; 6] = [None; 6];
        let mut order = Vec::with_capacity(6);
        let mut lines = text.lines().enumerate().peekable();

        while let Some(&(idx, line)) = lines.peek() {
            let line_no = idx + 1;
            let trimmed = line.trim();
            if trimmed.is_empty() {
                lines.next();
                continue;
            }
            let mut parts = trimmed.split_whitespace();
            let key = parts.next().unwrap_or_default();
            if !key.starts_with(|c: char| c.is_ascii_alphabetic()) {
                break;
            }
            let upper = key.to_ascii_uppercase();
            let slot = KEYS.iter().position(|k| *k == upper).ok_or_else(|| Error::Format {
                line: line_no,
                message: format!("unknown header key `{key}`"),
            })?;
            if header[slot].is_some() {
                return Err(Error::Format {
                    line: line_no,
                    message: format!("duplicate header key `{key}`"),
                });
            }
            let raw = parts.next().ok_or_else(|| Error::Format {
                line: line_no,
                message: format!("header key `{key}` has no value"),
            })?;
            if parts.next().is_some() {
                return Err(Error::Format {
                    line: line_no,
                    message: format!("header key `{key}` has more than one value"),
                });
            }
            let value: f64 = raw.parse().map_err(|_| Error::Format {
                line: line_no,
                message: format!("header value `{raw}` for `{key}` is not a number"),
            })?;
            header[slot] = Some((value, line_no));
            order.push(slot);
            lines.next();
        }

        let first_data_line = lines.peek().map_or(text.lines().count() + 1, |(i, _)| i + 1);
        for (slot, entry) in header.iter().enumerate() {
            if entry.is_none() {
                return Err(Error::Format {
                    line: first_data_line,
                    message: format!("missing header key `{}`", KEYS[slot]),
                });
            }
        }
        if order != [0, 1, 2, 3, 4, 5] {
            let names: Vec<&str> = order.iter().map(|&s| KEYS[s]).collect();
            warnings.push(format!(
                "header keys in unconventional order: {}",
                names.join(", ")
            ));
        }

        let count = |slot: usize| -> Result<usize> {
            let (v, line) = header[slot].expect("checked");
            if v >= 1.0 && v.fract() == 0.0 && v <= u32::MAX as f64 {
                Ok(v as usize)
            } else {
                Err(Error::Format {
                    line,
                    message: format!("{} must be a positive integer, got {v}", KEYS[slot]),
                })
            }
        };
        let n_cols = count(0)?;
        let n_rows = count(1)?;
        let (xll_corner, yll_corner) = (header[2].unwrap().0, header[3].unwrap().0);
        let (cell_size, cell_line) = header[4].unwrap();
        let nodata_value = header[5].unwrap().0;
        if !(cell_size > 0.0 && cell_size.is_finite()) {
            return Err(Error::Format {
                line: cell_line,
                message: format!("CELLSIZE must be positive, got {cell_size}"),
            });
        }
        if !xll_corner.is_finite() || !yll_corner.is_finite() {
            return Err(Error::Format {
                line: header[2].unwrap().1,
                message: "corner coordinates must be finite".into(),
            });
        }

        let expected = n_cols * n_rows;
        let mut file_order = Vec::with_capacity(expected);
        for (idx, line) in lines {
            for token in line.split_whitespace() {
                let v: f64 = token.parse().map_err(|_| Error::Format {
                    line: idx + 1,
                    message: format!("value `{token}` is not a number"),
                })?;
                file_order.push(v);
            }
        }
        if file_order.len() != expected {
            return Err(Error::Truncation {
                expected,
                found: file_order.len(),
            });
        }

        let mut values = Vec::with_capacity(expected);
        for r in (0..n_rows).rev() {
            values.extend_from_slice(&file_order[r * n_cols..(r + 1) * n_cols]);
        }
        Ok((
            AsciiGrid {
                n_cols,
                n_rows,
                xll_corner,
                yll_corner,
                cell_size,
                nodata_value,
                values,
            },
            warnings,
        ))
    }

    /// Serializes with the canonical header order. Numbers use the shortest
    /// representation that parses back to the same `f64`.
    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(self.values.len() * 4 + 128);
        let _ = writeln!(out, "NCOLS {}", self.n_cols);
        let _ = writeln!(out, "NROWS {}", self.n_rows);
        let _ = writeln!(out, "XLLCORNER {}", self.xll_corner);
        let _ = writeln!(out, "YLLCORNER {}", self.yll_corner);
        let _ = writeln!(out, "CELLSIZE {}", self.cell_size);
        let _ = writeln!(out, "NODATA_VALUE {}", self.nodata_value);
        for r in (0..self.n_rows).rev() {
            let row = &self.values[r * self.n_cols..(r + 1) * self.n_cols];
            for (i, v) in row.iter().enumerate() {
                if i > 0 {
                    out.push(' ');
                }
                let _ = write!(out, "{v}");
            }
            out.push('\n');
        }
        out
    }
}

pub fn read_ascii_grid_with_warnings(path: impl AsRef<Path>) -> Result<(AsciiGrid, Vec<String>)> {
    let path = path.as_ref();
    AsciiGrid::parse(&super::read_to_string(path)?)
}

/// Reads a grid; warnings are sent to the log.
pub fn read_ascii_grid(path: impl AsRef<Path>) -> Result<AsciiGrid> {
    let path = path.as_ref();
    let (grid, warnings) = read_ascii_grid_with_warnings(path)?;
    for w in warnings {
        warn!("{}: {w}", path.display());
    }
    Ok(grid)
}

pub fn write_ascii_grid(grid: &AsciiGrid, path: impl AsRef<Path>) -> Result<()> {
    super::write_string(path.as_ref(), &grid.to_text())
}
