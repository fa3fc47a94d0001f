//! Admin-unit GeoJSON (Polygon and MultiPolygon features).

use std::collections::HashSet;
use std::path::Path;

use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::geo::{MultiPolygon, Point, Polygon};

use super::{AdminLevel, AdminUnit};

pub(super) fn parse_json(text: &str) -> Result<Value> {
    serde_json::from_str(text).map_err(|e| Error::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

/// Returns the `features` array of a FeatureCollection.
pub(super) fn features(doc: &Value) -> Result<&Vec<Value>> {
    let obj = doc
        .as_object()
        .ok_or_else(|| Error::schema("<collection>", "top level is not an object"))?;
    match obj.get("type").and_then(Value::as_str) {
        Some("FeatureCollection") => {}
        other => {
            return Err(Error::schema(
                "<collection>",
                format!("expected type FeatureCollection, found {other:?}"),
            ))
        }
    }
    obj.get("features")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::schema("<collection>", "missing `features` array"))
}

/// Feature label for error messages: its `id` when present, else `#index`.
pub(super) fn feature_label(feature: &Value, index: usize) -> String {
    let id = feature
        .get("properties")
        .and_then(|p| p.get("id"))
        .or_else(|| feature.get("id"));
    match id {
        Some(Value::String(s)) => s.clone(),
        Some(Value::Number(n)) => n.to_string(),
        _ => format!("#{index}"),
    }
}

pub(super) fn position(v: &Value, label: &str) -> Result<Point> {
    let coords = v
        .as_array()
        .filter(|a| a.len() >= 2)
        .ok_or_else(|| Error::schema(label, "position must be an array of at least 2 numbers"))?;
    let x = coords[0].as_f64();
    let y = coords[1].as_f64();
    match (x, y) {
        (Some(x), Some(y)) => Ok(Point::new(x, y)),
        _ => Err(Error::schema(label, "position coordinates must be numbers")),
    }
}

fn ring(v: &Value, label: &str) -> Result<Vec<Point>> {
    v.as_array()
        .ok_or_else(|| Error::schema(label, "ring must be an array of positions"))?
        .iter()
        .map(|p| position(p, label))
        .collect()
}

fn polygon(v: &Value, label: &str) -> Result<Polygon> {
    let rings = v
        .as_array()
        .filter(|r| !r.is_empty())
        .ok_or_else(|| Error::schema(label, "polygon must be a non-empty array of rings"))?;
    let exterior = ring(&rings[0], label)?;
    let holes = rings[1..]
        .iter()
        .map(|r| ring(r, label))
        .collect::<Result<Vec<_>>>()?;
    Polygon::new(exterior, holes).map_err(|e| Error::validation(format!("feature {label}"), e.to_string()))
}

fn geometry(feature: &Value, label: &str) -> Result<MultiPolygon> {
    let geom = feature
        .get("geometry")
        .filter(|g| g.is_object())
        .ok_or_else(|| Error::schema(label, "missing geometry"))?;
    let coords = geom
        .get("coordinates")
        .ok_or_else(|| Error::schema(label, "geometry has no coordinates"))?;
    let parts = match geom.get("type").and_then(Value::as_str) {
        Some("Polygon") => vec![polygon(coords, label)?],
        Some("MultiPolygon") => coords
            .as_array()
            .filter(|a| !a.is_empty())
            .ok_or_else(|| Error::schema(label, "MultiPolygon needs at least one polygon"))?
            .iter()
            .map(|p| polygon(p, label))
            .collect::<Result<Vec<_>>>()?,
        other => {
            return Err(Error::schema(
                label,
                format!("geometry type {other:?} is not Polygon or MultiPolygon"),
            ))
        }
    };
    MultiPolygon::new(parts).map_err(|e| Error::validation(format!("feature {label}"), e.to_string()))
}

fn admin_unit(feature: &Value, index: usize, expected: AdminLevel) -> Result<AdminUnit> {
    let label = feature_label(feature, index);
    if feature.get("type").and_then(Value::as_str) != Some("Feature") {
        return Err(Error::schema(&label, "expected type Feature"));
    }
    let props = feature
        .get("properties")
        .and_then(Value::as_object)
        .ok_or_else(|| Error::schema(&label, "missing properties"))?;
    let id = match props.get("id") {
        Some(Value::String(s)) if !s.is_empty() => s.clone(),
        Some(Value::Number(n)) => n.to_string(),
        Some(_) => return Err(Error::schema(&label, "property `id` must be a string or number")),
        None => return Err(Error::schema(&label, "missing property `id`")),
    };
    let level_raw = props
        .get("level")
        .ok_or_else(|| Error::schema(&label, "missing property `level`"))?
        .as_str()
        .ok_or_else(|| Error::schema(&label, "property `level` must be a string"))?;
    let level: AdminLevel = level_raw
        .parse()
        .map_err(|_| Error::schema(&label, format!("unknown level `{level_raw}`")))?;
    if level != expected {
        return Err(Error::LevelMismatch {
            feature: label,
            expected: expected.to_string(),
            found: level.to_string(),
        });
    }
    let population = props
        .get("population")
        .ok_or_else(|| Error::schema(&label, "missing property `population`"))?
        .as_f64()
        .ok_or_else(|| Error::schema(&label, "property `population` must be a number"))?;
    if population < 0.0 {
        return Err(Error::validation(
            format!("feature {label}"),
            format!("negative population {population}"),
        ));
    }
    let geometry = geometry(feature, &label)?;
    AdminUnit::new(id, level, geometry, population)
}

/// Parses a FeatureCollection of admin units, all at `expected` level.
pub fn parse_admin_units(text: &str, expected: AdminLevel) -> Result<Vec<AdminUnit>> {
    let doc = parse_json(text)?;
    let mut seen = HashSet::new();
    let mut units = Vec::new();
    for (i, feature) in features(&doc)?.iter().enumerate() {
        let unit = admin_unit(feature, i, expected)?;
        if !seen.insert(unit.id.clone()) {
            return Err(Error::validation(
                format!("feature {}", unit.id),
                "duplicate unit id",
            ));
        }
        units.push(unit);
    }
    Ok(units)
}

pub fn read_admin_units(path: impl AsRef<Path>, expected: AdminLevel) -> Result<Vec<AdminUnit>> {
    parse_admin_units(&super::read_to_string(path.as_ref())?, expected)
}

fn ring_json(ring: &[Point]) -> Value {
    let mut coords: Vec<Value> = ring.iter().map(|p| json!([p.x, p.y])).collect();
    coords.push(json!([ring[0].x, ring[0].y]));
    Value::Array(coords)
}

fn polygon_json(poly: &Polygon) -> Value {
    let mut rings = vec![ring_json(poly.exterior())];
    rings.extend(poly.holes().iter().map(|h| ring_json(h)));
    Value::Array(rings)
}

pub(crate) fn admin_units_to_json(units: &[AdminUnit]) -> Value {
    let features: Vec<Value> = units
        .iter()
        .map(|u| {
            let parts = u.geometry.parts();
            let geometry = if parts.len() == 1 {
                json!({"type": "Polygon", "coordinates": polygon_json(&parts[0])})
            } else {
                json!({
                    "type": "MultiPolygon",
                    "coordinates": parts.iter().map(polygon_json).collect::<Vec<_>>(),
                })
            };
            let mut props = Map::new();
            props.insert("id".into(), json!(u.id));
            props.insert("level".into(), json!(u.level.as_str()));
            props.insert("population".into(), json!(u.population));
            json!({"type": "Feature", "properties": props, "geometry": geometry})
        })
        .collect();
    json!({"type": "FeatureCollection", "features": features})
}

pub fn write_admin_units(units: &[AdminUnit], path: impl AsRef<Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(&admin_units_to_json(units)).expect("serializable");
    super::write_string(path.as_ref(), &(text + "\n"))
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO_CIRCLES: &str = r#"{
  "type": "FeatureCollection",
  "features": [
    {"type": "Feature", "properties": {"id": "C1", "level": "circle", "population": 100},
     "geometry": {"type": "Polygon", "coordinates": [[[0,0],[60,0],[60,60],[0,60],[0,0]]]}},
    {"type": "Feature", "properties": {"id": "C2", "level": "circle", "population": 250.5},
     "geometry": {"type": "MultiPolygon", "coordinates": [
        [[[60,0],[120,0],[120,30],[60,30],[60,0]]],
        [[[60,30],[90,30],[90,60],[60,60],[60,30]]]]}}
  ]
}"#;

    #[test]
    fn parses_two_valid_units() {
        let units = parse_admin_units(TWO_CIRCLES, AdminLevel::Circle).unwrap();
        assert_eq!(units.len(), 2);
        assert_eq!(units[0].id, "C1");
        assert_eq!(units[0].population, 100.0);
        assert_eq!(units[1].geometry.parts().len(), 2);
        assert!(units[1].geometry.contains(Point::new(75.0, 45.0)));
        assert!(!units[1].geometry.contains(Point::new(105.0, 45.0)));
    }

    #[test]
    fn missing_population_names_feature() {
        let text = TWO_CIRCLES.replace(r#""population": 250.5"#, r#""pop": 250.5"#);
        match parse_admin_units(&text, AdminLevel::Circle) {
            Err(Error::Schema { feature, message }) => {
                assert_eq!(feature, "C2");
                assert!(message.contains("population"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn level_mismatch_and_negative_population() {
        let text = TWO_CIRCLES.replace(r#""level": "circle", "population": 250.5"#, r#""level": "charge", "population": 250.5"#);
        assert!(matches!(
            parse_admin_units(&text, AdminLevel::Circle),
            Err(Error::LevelMismatch { .. })
        ));
        let text = TWO_CIRCLES.replace("250.5", "-1");
        assert!(matches!(
            parse_admin_units(&text, AdminLevel::Circle),
            Err(Error::Validation { .. })
        ));
    }

    #[test]
    fn malformed_json_reports_position() {
        let text = TWO_CIRCLES.replacen("\"features\": [", "\"features\": [,", 1);
        match parse_admin_units(&text, AdminLevel::Circle) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_ids_rejected() {
        let text = TWO_CIRCLES.replace(r#""id": "C2""#, r#""id": "C1""#);
        assert!(matches!(
            parse_admin_units(&text, AdminLevel::Circle),
            Err(Error::Validation { .. })
        ));
    }

    #[test]
    fn written_units_parse_back_identically() {
        let units = parse_admin_units(TWO_CIRCLES, AdminLevel::Circle).unwrap();
        let text = serde_json::to_string(&admin_units_to_json(&units)).unwrap();
        assert_eq!(parse_admin_units(&text, AdminLevel::Circle).unwrap(), units);
    }
}
