//! POI readers and writers: GeoJSON Point features or `x,y,category` CSV.

use std::path::Path;

use serde_json::{json, Value};

use crate::error::{Error, Result};

use super::geojson::{feature_label, features, parse_json, position};
use super::PoiPoint;

/// Reads POIs, choosing CSV for a `.csv` extension and GeoJSON otherwise.
/// A file holding only whitespace is an empty set.
pub fn read_poi(path: impl AsRef<Path>) -> Result<Vec<PoiPoint>> {
    let path = path.as_ref();
    let text = super::read_to_string(path)?;
    let is_csv = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    if is_csv {
        parse_poi_csv(&text)
    } else {
        parse_poi_geojson(&text)
    }
}

pub fn parse_poi_csv(text: &str) -> Result<Vec<PoiPoint>> {
    if text.trim().is_empty() {
        return Ok(Vec::new());
    }
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(false)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| Error::schema("<header>", e.to_string()))?
        .clone();
    let column = |name: &str| headers.iter().position(|h| h.eq_ignore_ascii_case(name));
    let (Some(xi), Some(yi)) = (column("x"), column("y")) else {
        return Err(Error::schema(
            "<header>",
            format!("expected columns x,y,category, found {:?}", headers.iter().collect::<Vec<_>>()),
        ));
    };
    let ci = column("category");

    let mut points = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| Error::validation(format!("row {row}"), e.to_string()))?;
        let coord = |idx: usize, name: &str| -> Result<f64> {
            let raw = record.get(idx).unwrap_or_default();
            raw.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::validation(format!("row {row}"), format!("{name} `{raw}` is not a finite number")))
        };
        let x = coord(xi, "x")?;
        let y = coord(yi, "y")?;
        let category = ci.and_then(|c| record.get(c)).unwrap_or_default();
        points.push(PoiPoint::new(x, y, category));
    }
    Ok(points)
}

pub fn parse_poi_geojson(text: &str) -> Result<Vec<PoiPoint>> {
    if text.trim().is_empty() {
        return Ok(Vec::new());
    }
    let doc = parse_json(text)?;
    let mut points = Vec::new();
    for (i, feature) in features(&doc)?.iter().enumerate() {
        let label = feature_label(feature, i);
        let geom = feature
            .get("geometry")
            .filter(|g| g.is_object())
            .ok_or_else(|| Error::schema(&label, "missing geometry"))?;
        let kind = geom.get("type").and_then(Value::as_str);
        if kind != Some("Point") {
            return Err(Error::schema(&label, format!("geometry type {kind:?} is not Point")));
        }
        let coords = geom
            .get("coordinates")
            .ok_or_else(|| Error::schema(&label, "geometry has no coordinates"))?;
        let location = position(coords, &label)?;
        if !location.is_finite() {
            return Err(Error::validation(format!("feature {label}"), "non-finite coordinate"));
        }
        let category = match feature.get("properties").and_then(|p| p.get("category")) {
            None | Some(Value::Null) => String::new(),
            Some(Value::String(s)) => s.clone(),
            Some(_) => return Err(Error::schema(&label, "property `category` must be a string")),
        };
        points.push(PoiPoint { location, category });
    }
    Ok(points)
}

pub fn write_poi_csv(points: &[PoiPoint], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut writer = csv::Writer::from_writer(Vec::new());
    let to_err = |e: csv::Error| Error::validation(path.display().to_string(), e.to_string());
    writer.write_record(["x", "y", "category"]).map_err(to_err)?;
    for p in points {
        writer
            .write_record([p.location.x.to_string(), p.location.y.to_string(), p.category.clone()])
            .map_err(to_err)?;
    }
    let bytes = writer.into_inner().map_err(|e| Error::io(path, e.into_error()))?;
    super::write_string(path, &String::from_utf8(bytes).expect("utf-8 input"))
}

pub fn write_poi_geojson(points: &[PoiPoint], path: impl AsRef<Path>) -> Result<()> {
    let features: Vec<Value> = points
        .iter()
        .map(|p| {
            json!({
                "type": "Feature",
                "properties": {"category": p.category},
                "geometry": {"type": "Point", "coordinates": [p.location.x, p.location.y]},
            })
        })
        .collect();
    let doc = json!({"type": "FeatureCollection", "features": features});
    super::write_string(path.as_ref(), &(serde_json::to_string_pretty(&doc).expect("serializable") + "\n"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_three_rows() {
        let pts = parse_poi_csv("x,y,category\n1,2,shop\n3.5,4,school\n-1e3,0,\n").unwrap();
        assert_eq!(pts.len(), 3);
        assert_eq!(pts[1], PoiPoint::new(3.5, 4.0, "school"));
        assert_eq!(pts[2].category, "");
    }

    #[test]
    fn csv_bad_coordinate_names_row() {
        match parse_poi_csv("x,y,category\nabc,4,shop\n") {
            Err(Error::Validation { context, .. }) => assert_eq!(context, "row 1"),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(parse_poi_csv("x,y\n1,inf\n"), Err(Error::Validation { .. })));
    }

    #[test]
    fn csv_missing_columns() {
        assert!(matches!(parse_poi_csv("a,b\n1,2\n"), Err(Error::Schema { .. })));
    }

    #[test]
    fn empty_inputs_are_empty_sets() {
        assert!(parse_poi_geojson(r#"{"type":"FeatureCollection","features":[]}"#).unwrap().is_empty());
        assert!(parse_poi_geojson("").unwrap().is_empty());
        assert!(parse_poi_csv("").unwrap().is_empty());
        assert!(parse_poi_csv("x,y,category\n").unwrap().is_empty());
    }

    #[test]
    fn geojson_points_and_non_points() {
        let ok = r#"{"type":"FeatureCollection","features":[
            {"type":"Feature","properties":{"category":"market"},"geometry":{"type":"Point","coordinates":[10,20]}},
            {"type":"Feature","properties":{},"geometry":{"type":"Point","coordinates":[1,2,3]}}]}"#;
        let pts = parse_poi_geojson(ok).unwrap();
        assert_eq!(pts, vec![PoiPoint::new(10.0, 20.0, "market"), PoiPoint::new(1.0, 2.0, "")]);
        let line = ok.replacen(r#""type":"Point","coordinates":[10,20]"#, r#""type":"LineString","coordinates":[[0,0],[1,1]]"#, 1);
        assert!(matches!(parse_poi_geojson(&line), Err(Error::Schema { .. })));
    }

    #[test]
    fn csv_round_trip_through_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("poi.csv");
        let pts = vec![PoiPoint::new(420001.25, 3480000.5, "shop, corner"), PoiPoint::new(0.1, 0.2, "")];
        write_poi_csv(&pts, &path).unwrap();
        assert_eq!(read_poi(&path).unwrap(), pts);
        let gj = dir.path().join("poi.geojson");
        write_poi_geojson(&pts, &gj).unwrap();
        assert_eq!(read_poi(&gj).unwrap(), pts);
    }
}
