//! Input and output formats.
//!
//! Admin polygons and POIs travel as GeoJSON (POIs also as `x,y,category`
//! CSV); masks and population grids as ESRI ASCII grids; reports as CSV/JSON.

mod ascii_grid;
mod geojson;
mod poi;
mod raster;

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{BBox, MultiPolygon, Point};

pub use ascii_grid::{read_ascii_grid, read_ascii_grid_with_warnings, write_ascii_grid, AsciiGrid};
pub use geojson::{parse_admin_units, read_admin_units, write_admin_units};
pub use poi::{parse_poi_csv, parse_poi_geojson, read_poi, write_poi_csv, write_poi_geojson};
pub use raster::{BinaryRaster, PopulationGrid};

/// Census administrative level, coarsest first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AdminLevel {
    Tehsil,
    Charge,
    Circle,
    Block,
}

impl AdminLevel {
    pub fn as_str(&self) -> &'static str {
        match self {
            AdminLevel::Tehsil => "tehsil",
            AdminLevel::Charge => "charge",
            AdminLevel::Circle => "circle",
            AdminLevel::Block => "block",
        }
    }
}

impl fmt::Display for AdminLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AdminLevel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "tehsil" => Ok(AdminLevel::Tehsil),
            "charge" => Ok(AdminLevel::Charge),
            "circle" => Ok(AdminLevel::Circle),
            "block" => Ok(AdminLevel::Block),
            other => Err(Error::Parameter(format!("unknown admin level `{other}`"))),
        }
    }
}

/// A census polygon carrying its enumerated population.
#[derive(Debug, Clone, PartialEq)]
pub struct AdminUnit {
    pub id: String,
    pub level: AdminLevel,
    pub geometry: MultiPolygon,
    pub population: f64,
}

impl AdminUnit {
    pub fn new(
        id: impl Into<String>,
        level: AdminLevel,
        geometry: impl Into<MultiPolygon>,
        population: f64,
    ) -> Result<Self> {
        let id = id.into();
        if !(population >= 0.0 && population.is_finite()) {
            return Err(Error::validation(
                format!("unit {id}"),
                format!("population must be finite and non-negative, got {population}"),
            ));
        }
        Ok(AdminUnit {
            id,
            level,
            geometry: geometry.into(),
            population,
        })
    }
}

/// Combined bounding box of a set of units.
pub fn units_bbox(units: &[AdminUnit]) -> Option<BBox> {
    units
        .iter()
        .map(|u| u.geometry.bbox())
        .reduce(|a, b| a.union(&b))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoiPoint {
    pub location: Point,
    #[serde(default)]
    pub category: String,
}

impl PoiPoint {
    pub fn new(x: f64, y: f64, category: impl Into<String>) -> Self {
        PoiPoint {
            location: Point::new(x, y),
            category: category.into(),
        }
    }
}

/// Heuristic for data that is still in geographic degrees: every coordinate
/// fits inside the longitude/latitude range.
pub fn looks_geographic(bbox: &BBox) -> bool {
    bbox.min_x >= -180.0 && bbox.max_x <= 180.0 && bbox.min_y >= -90.0 && bbox.max_y <= 90.0
}

pub(crate) fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_string(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}
