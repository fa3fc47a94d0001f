//! Grayscale heatmaps of grids as portable graymaps.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::AsciiGrid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Linear,
    /// `ln(1 + v) / ln(1 + max)`.
    Log,
}

impl std::str::FromStr for Scale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "linear" => Ok(Scale::Linear),
            "log" | "log1p" => Ok(Scale::Log),
            other => Err(Error::Parameter(format!("unknown scale `{other}`"))),
        }
    }
}

/// Gray levels, top row first. The largest value maps to 255; nodata,
/// negative and non-finite cells map to 0.
pub fn gray_levels(grid: &AsciiGrid, scale: Scale) -> Vec<u8> {
    let valid = |v: f64| v.is_finite() && v != grid.nodata_value && v > 0.0;
    let max = grid.values.iter().copied().filter(|&v| valid(v)).fold(0.0, f64::max);
    let norm = match scale {
        Scale::Linear => max,
        Scale::Log => max.ln_1p(),
    };
    let mut out = Vec::with_capacity(grid.values.len());
    for r in (0..grid.n_rows).rev() {
        for &v in &grid.values[r * grid.n_cols..(r + 1) * grid.n_cols] {
            if !valid(v) || norm <= 0.0 {
                out.push(0);
                continue;
            }
            let t = match scale {
                Scale::Linear => v / norm,
                Scale::Log => v.ln_1p() / norm,
            };
            out.push((t * 255.0).round().clamp(0.0, 255.0) as u8);
        }
    }
    out
}

/// Encodes the grid as binary (P5) or plain (P2) PGM.
pub fn render_pgm(grid: &AsciiGrid, scale: Scale, plain: bool) -> Vec<u8> {
    let levels = gray_levels(grid, scale);
    let magic = if plain { "P2" } else { "P5" };
    let mut out = format!("{magic}\n{} {}\n255\n", grid.n_cols, grid.n_rows).into_bytes();
    if plain {
        for row in levels.chunks(grid.n_cols) {
            let line: Vec<String> = row.iter().map(u8::to_string).collect();
            out.extend_from_slice(line.join(" ").as_bytes());
            out.push(b'\n');
        }
    } else {
        out.extend_from_slice(&levels);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid(n_cols: usize, n_rows: usize, values: Vec<f64>) -> AsciiGrid {
        AsciiGrid {
            n_cols,
            n_rows,
            xll_corner: 0.0,
            yll_corner: 0.0,
            cell_size: 30.0,
            nodata_value: -9999.0,
            values,
        }
    }

    #[test]
    fn all_zero_is_black() {
        let g = grid(3, 2, vec![0.0; 6]);
        assert_eq!(gray_levels(&g, Scale::Linear), vec![0; 6]);
        assert_eq!(gray_levels(&g, Scale::Log), vec![0; 6]);
    }

    #[test]
    fn single_hot_tile_is_white() {
        // Bottom-left in grid order is the first pixel of the last image row.
        let mut values = vec![0.0; 6];
        values[0] = 12.5;
        let g = grid(3, 2, values);
        assert_eq!(gray_levels(&g, Scale::Linear), vec![0, 0, 0, 255, 0, 0]);
    }

    #[test]
    fn nodata_is_black_and_headers_are_exact() {
        let g = grid(2, 1, vec![-9999.0, 4.0]);
        assert_eq!(render_pgm(&g, Scale::Linear, true), b"P2\n2 1\n255\n0 255\n".to_vec());
        assert_eq!(render_pgm(&g, Scale::Linear, false), b"P5\n2 1\n255\n\x00\xff".to_vec());
    }

    #[test]
    fn linear_midpoint() {
        let g = grid(2, 1, vec![50.0, 100.0]);
        assert_eq!(gray_levels(&g, Scale::Linear), vec![128, 255]);
    }

    proptest! {
        #[test]
        fn scales_share_order_and_argmax(values in proptest::collection::vec(0.0f64..1e6, 1..60)) {
            let g = grid(values.len(), 1, values.clone());
            let lin = gray_levels(&g, Scale::Linear);
            let log = gray_levels(&g, Scale::Log);
            let max = values.iter().copied().fold(0.0, f64::max);
            for (i, &v) in values.iter().enumerate() {
                if v == max && max > 0.0 {
                    prop_assert_eq!(lin[i], 255);
                    prop_assert_eq!(log[i], 255);
                }
                for (j, &w) in values.iter().enumerate() {
                    if v <= w {
                        prop_assert!(lin[i] <= lin[j]);
                        prop_assert!(log[i] <= log[j]);
                    }
                }
                prop_assert!(log[i] >= lin[i]);
            }
        }
    }
}
