//! Planar geometry and the tile grid.
//!
//! Every coordinate is a projected easting/northing in meters. Nothing here
//! knows about geographic coordinates or reprojection.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

/// Euclidean distance in meters.
#[inline]
pub fn distance(a: Point, b: Point) -> f64 {
    (a.x - b.x).hypot(a.y - b.y)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl BBox {
    pub fn new(min_x: f64, min_y: f64, max_x: f64, max_y: f64) -> Result<Self> {
        let finite = [min_x, min_y, max_x, max_y].iter().all(|v| v.is_finite());
        if !finite || min_x > max_x || min_y > max_y {
            return Err(Error::Geometry(format!(
                "bounding box ({min_x}, {min_y}, {max_x}, {max_y}) is not ordered and finite"
            )));
        }
        Ok(BBox {
            min_x,
            min_y,
            max_x,
            max_y,
        })
    }

    /// Smallest box holding every point, or `None` for an empty iterator.
    pub fn from_points<I: IntoIterator<Item = Point>>(points: I) -> Option<Self> {
        let mut iter = points.into_iter();
        let first = iter.next()?;
        let mut bbox = BBox {
            min_x: first.x,
            min_y: first.y,
            max_x: first.x,
            max_y: first.y,
        };
        for p in iter {
            bbox.expand_to(p);
        }
        Some(bbox)
    }

    pub fn expand_to(&mut self, p: Point) {
        self.min_x = self.min_x.min(p.x);
        self.min_y = self.min_y.min(p.y);
        self.max_x = self.max_x.max(p.x);
        self.max_y = self.max_y.max(p.y);
    }

    pub fn union(&self, other: &BBox) -> BBox {
        BBox {
            min_x: self.min_x.min(other.min_x),
            min_y: self.min_y.min(other.min_y),
            max_x: self.max_x.max(other.max_x),
            max_y: self.max_y.max(other.max_y),
        }
    }

    /// Closed containment test.
    pub fn contains(&self, p: Point) -> bool {
        p.x >= self.min_x && p.x <= self.max_x && p.y >= self.min_y && p.y <= self.max_y
    }

    /// True when the two closed boxes share at least one point.
    pub fn intersects(&self, other: &BBox) -> bool {
        self.min_x <= other.max_x
            && other.min_x <= self.max_x
            && self.min_y <= other.max_y
            && other.min_y <= self.max_y
    }

    /// True when the overlap has positive area.
    pub fn overlaps(&self, other: &BBox) -> bool {
        self.min_x < other.max_x
            && other.min_x < self.max_x
            && self.min_y < other.max_y
            && other.min_y < self.max_y
    }

    pub fn width(&self) -> f64 {
        self.max_x - self.min_x
    }

    pub fn height(&self) -> f64 {
        self.max_y - self.min_y
    }

    pub fn center(&self) -> Point {
        Point::new(
            self.min_x + self.width() / 2.0,
            self.min_y + self.height() / 2.0,
        )
    }
}

/// A simple polygon with optional holes.
///
/// Rings are stored open: the closing vertex of an input ring is dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct Polygon {
    exterior: Vec<Point>,
    holes: Vec<Vec<Point>>,
    bbox: BBox,
}

impl Polygon {
    pub fn new(exterior: Vec<Point>, holes: Vec<Vec<Point>>) -> Result<Self> {
        let exterior = open_ring(exterior, "exterior ring")?;
        let holes = holes
            .into_iter()
            .enumerate()
            .map(|(i, h)| open_ring(h, &format!("hole {i}")))
            .collect::<Result<Vec<_>>>()?;
        if ring_signed_area(&exterior) == 0.0 {
            return Err(Error::Geometry("exterior ring has zero area".into()));
        }
        let bbox = BBox::from_points(exterior.iter().copied()).expect("ring has vertices");
        Ok(Polygon {
            exterior,
            holes,
            bbox,
        })
    }

    /// Axis-aligned rectangle; convenient for tests and synthetic data.
    pub fn rectangle(bbox: BBox) -> Result<Self> {
        Polygon::new(
            vec![
                Point::new(bbox.min_x, bbox.min_y),
                Point::new(bbox.max_x, bbox.min_y),
                Point::new(bbox.max_x, bbox.max_y),
                Point::new(bbox.min_x, bbox.max_y),
            ],
            Vec::new(),
        )
    }

    pub fn exterior(&self) -> &[Point] {
        &self.exterior
    }

    pub fn holes(&self) -> &[Vec<Point>] {
        &self.holes
    }

    pub fn bbox(&self) -> BBox {
        self.bbox
    }

    /// Area of the exterior minus the holes.
    pub fn area(&self) -> f64 {
        let holes: f64 = self.holes.iter().map(|h| ring_signed_area(h).abs()).sum();
        ring_signed_area(&self.exterior).abs() - holes
    }

    pub fn contains(&self, p: Point) -> bool {
        point_in_polygon(p, self)
    }

    /// A point guaranteed to satisfy [`point_in_polygon`].
    ///
    /// Tries the bounding-box center, then the midpoint of the widest interior
    /// span along a few horizontal scanlines, and finally an exterior vertex
    /// (inside by the boundary rule unless a hole touches it).
    pub fn interior_point(&self) -> Point {
        let center = self.bbox.center();
        if self.contains(center) {
            return center;
        }
        let h = self.bbox.height();
        for frac in [0.5, 0.25, 0.75, 0.125, 0.375, 0.625, 0.875] {
            let y = self.bbox.min_y + h * frac;
            if let Some(p) = self.widest_span_midpoint(y) {
                if self.contains(p) {
                    return p;
                }
            }
        }
        let mut ys: Vec<f64> = self.exterior.iter().map(|p| p.y).collect();
        ys.sort_by(f64::total_cmp);
        ys.dedup();
        for w in ys.windows(2) {
            if let Some(p) = self.widest_span_midpoint((w[0] + w[1]) / 2.0) {
                if self.contains(p) {
                    return p;
                }
            }
        }
        self.exterior
            .iter()
            .copied()
            .find(|&p| self.contains(p))
            .unwrap_or(self.exterior[0])
    }

    fn widest_span_midpoint(&self, y: f64) -> Option<Point> {
        let mut xs = Vec::new();
        for ring in std::iter::once(&self.exterior).chain(self.holes.iter()) {
            for (a, b) in ring_edges(ring) {
                if (a.y > y) != (b.y > y) {
                    xs.push(a.x + (y - a.y) * (b.x - a.x) / (b.y - a.y));
                }
            }
        }
        xs.sort_by(f64::total_cmp);
        xs.chunks_exact(2)
            .max_by(|l, r| (l[1] - l[0]).total_cmp(&(r[1] - r[0])))
            .map(|pair| Point::new((pair[0] + pair[1]) / 2.0, y))
    }
}

fn open_ring(mut ring: Vec<Point>, what: &str) -> Result<Vec<Point>> {
    if ring.iter().any(|p| !p.is_finite()) {
        return Err(Error::Geometry(format!("{what} has a non-finite vertex")));
    }
    if ring.len() > 1 && ring.first() == ring.last() {
        ring.pop();
    }
    let mut distinct: Vec<(u64, u64)> = ring
        .iter()
        .map(|p| (p.x.to_bits(), p.y.to_bits()))
        .collect();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(Error::Geometry(format!(
            "{what} needs at least 3 distinct vertices, found {}",
            distinct.len()
        )));
    }
    Ok(ring)
}

fn ring_edges(ring: &[Point]) -> impl Iterator<Item = (Point, Point)> + '_ {
    let n = ring.len();
    (0..n).map(move |i| (ring[i], ring[(i + n - 1) % n]))
}

fn ring_signed_area(ring: &[Point]) -> f64 {
    ring_edges(ring)
        .map(|(a, b)| (b.x - a.x) * (b.y + a.y))
        .sum::<f64>()
        / 2.0
}

fn on_segment(p: Point, a: Point, b: Point) -> bool {
    let cross = (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x);
    cross == 0.0
        && p.x >= a.x.min(b.x)
        && p.x <= a.x.max(b.x)
        && p.y >= a.y.min(b.y)
        && p.y <= a.y.max(b.y)
}

fn on_ring_boundary(p: Point, ring: &[Point]) -> bool {
    ring_edges(ring).any(|(a, b)| on_segment(p, a, b))
}

/// Even-odd crossing test (W. R. Franklin's pnpoly) for the interior of a ring.
fn ring_crossing_parity(p: Point, ring: &[Point]) -> bool {
    let mut inside = false;
    for (a, b) in ring_edges(ring) {
        if (a.y > p.y) != (b.y > p.y) && p.x < (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x {
            inside = !inside;
        }
    }
    inside
}

/// Even-odd point-in-polygon test.
///
/// Points lying exactly on a ring edge are decided by a fixed tie rule: the
/// exterior boundary counts as inside, a hole boundary counts as outside.
pub fn point_in_polygon(p: Point, poly: &Polygon) -> bool {
    if !poly.bbox.contains(p) {
        return false;
    }
    let in_exterior =
        on_ring_boundary(p, &poly.exterior) || ring_crossing_parity(p, &poly.exterior);
    if !in_exterior {
        return false;
    }
    !poly
        .holes
        .iter()
        .any(|h| on_ring_boundary(p, h) || ring_crossing_parity(p, h))
}

/// One or more polygons treated as a single region.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiPolygon {
    parts: Vec<Polygon>,
    bbox: BBox,
}

impl MultiPolygon {
    pub fn new(parts: Vec<Polygon>) -> Result<Self> {
        let bbox = parts
            .iter()
            .map(Polygon::bbox)
            .reduce(|a, b| a.union(&b))
            .ok_or_else(|| Error::Geometry("multipolygon has no parts".into()))?;
        Ok(MultiPolygon { parts, bbox })
    }

    pub fn parts(&self) -> &[Polygon] {
        &self.parts
    }

    pub fn bbox(&self) -> BBox {
        self.bbox
    }

    pub fn area(&self) -> f64 {
        self.parts.iter().map(Polygon::area).sum()
    }

    pub fn contains(&self, p: Point) -> bool {
        self.bbox.contains(p) && self.parts.iter().any(|poly| point_in_polygon(p, poly))
    }

    /// Interior point of the largest part.
    pub fn interior_point(&self) -> Point {
        self.parts
            .iter()
            .max_by(|a, b| a.area().total_cmp(&b.area()))
            .expect("non-empty")
            .interior_point()
    }
}

impl From<Polygon> for MultiPolygon {
    fn from(poly: Polygon) -> Self {
        let bbox = poly.bbox();
        MultiPolygon {
            parts: vec![poly],
            bbox,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TileId {
    pub col: usize,
    pub row: usize,
}

impl TileId {
    pub const fn new(col: usize, row: usize) -> Self {
        TileId { col, row }
    }
}

/// Regular square tiling anchored at its lower-left corner.
///
/// Tile `(c, r)` covers the half-open extent
/// `[x0 + c*s, x0 + (c+1)*s) x [y0 + r*s, y0 + (r+1)*s)`, with rows counted
/// northward from the origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TileGrid {
    origin_x: f64,
    origin_y: f64,
    tile_size: f64,
    n_cols: usize,
    n_rows: usize,
}

impl TileGrid {
    pub const DEFAULT_TILE_SIZE: f64 = 30.0;

    pub fn new(
        origin_x: f64,
        origin_y: f64,
        tile_size: f64,
        n_cols: usize,
        n_rows: usize,
    ) -> Result<Self> {
        if !origin_x.is_finite() || !origin_y.is_finite() {
            return Err(Error::Parameter("grid origin must be finite".into()));
        }
        if !(tile_size > 0.0 && tile_size.is_finite()) {
            return Err(Error::Parameter(format!(
                "tile size must be positive, got {tile_size}"
            )));
        }
        if n_cols == 0 || n_rows == 0 {
            return Err(Error::Parameter(format!(
                "grid needs at least one tile, got {n_cols}x{n_rows}"
            )));
        }
        Ok(TileGrid {
            origin_x,
            origin_y,
            tile_size,
            n_cols,
            n_rows,
        })
    }

    /// Smallest grid covering `extent` whose origin is `extent`'s lower-left
    /// corner rounded down to a multiple of `tile_size`.
    pub fn snapped_to(extent: &BBox, tile_size: f64) -> Result<Self> {
        if !(tile_size > 0.0 && tile_size.is_finite()) {
            return Err(Error::Parameter(format!(
                "tile size must be positive, got {tile_size}"
            )));
        }
        let origin_x = (extent.min_x / tile_size).floor() * tile_size;
        let origin_y = (extent.min_y / tile_size).floor() * tile_size;
        Self::covering_from(origin_x, origin_y, extent, tile_size)
    }

    /// Grid anchored at a fixed origin and extended to cover `extent`.
    pub fn covering_from(
        origin_x: f64,
        origin_y: f64,
        extent: &BBox,
        tile_size: f64,
    ) -> Result<Self> {
        let cols = ((extent.max_x - origin_x) / tile_size).floor() + 1.0;
        let rows = ((extent.max_y - origin_y) / tile_size).floor() + 1.0;
        if cols < 1.0 || rows < 1.0 {
            return Err(Error::Configuration(format!(
                "grid origin ({origin_x}, {origin_y}) lies beyond the data extent"
            )));
        }
        // A max edge landing exactly on a tile boundary does not need the extra tile.
        let mut grid = TileGrid::new(origin_x, origin_y, tile_size, cols as usize, rows as usize)?;
        if grid.n_cols > 1 && grid.col_edge(grid.n_cols - 1) == extent.max_x {
            grid.n_cols -= 1;
        }
        if grid.n_rows > 1 && grid.row_edge(grid.n_rows - 1) == extent.max_y {
            grid.n_rows -= 1;
        }
        Ok(grid)
    }

    pub fn origin_x(&self) -> f64 {
        self.origin_x
    }

    pub fn origin_y(&self) -> f64 {
        self.origin_y
    }

    pub fn tile_size(&self) -> f64 {
        self.tile_size
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn len(&self) -> usize {
        self.n_cols * self.n_rows
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Tile area in square meters.
    pub fn tile_area(&self) -> f64 {
        self.tile_size * self.tile_size
    }

    pub fn extent(&self) -> BBox {
        BBox {
            min_x: self.origin_x,
            min_y: self.origin_y,
            max_x: self.col_edge(self.n_cols),
            max_y: self.row_edge(self.n_rows),
        }
    }

    #[inline]
    fn col_edge(&self, c: usize) -> f64 {
        self.origin_x + c as f64 * self.tile_size
    }

    #[inline]
    fn row_edge(&self, r: usize) -> f64 {
        self.origin_y + r as f64 * self.tile_size
    }

    /// Index along one axis under the half-open rule, checked against the
    /// edges exactly as [`TileGrid::tile_bbox`] computes them.
    #[inline]
    fn axis_index(v: f64, origin: f64, size: f64, n: usize) -> Option<usize> {
        let edge = |k: f64| origin + k * size;
        let mut k = ((v - origin) / size).floor();
        if !k.is_finite() {
            return None;
        }
        if v < edge(k) {
            k -= 1.0;
        } else if v >= edge(k + 1.0) {
            k += 1.0;
        }
        if k < 0.0 || k >= n as f64 {
            None
        } else {
            Some(k as usize)
        }
    }

    /// The unique tile containing `p`, or `None` outside the grid.
    #[inline]
    pub fn tile_index_of(&self, p: Point) -> Option<TileId> {
        let col = Self::axis_index(p.x, self.origin_x, self.tile_size, self.n_cols)?;
        let row = Self::axis_index(p.y, self.origin_y, self.tile_size, self.n_rows)?;
        Some(TileId { col, row })
    }

    /// Like [`TileGrid::tile_index_of`], but points outside the grid snap to
    /// the nearest edge tile.
    pub fn clamped_tile_of(&self, p: Point) -> TileId {
        if let Some(id) = self.tile_index_of(p) {
            return id;
        }
        let clamp = |v: f64, origin: f64, n: usize| {
            let k = ((v - origin) / self.tile_size).floor();
            if k.is_nan() || k < 0.0 {
                0
            } else {
                (k as usize).min(n - 1)
            }
        };
        TileId {
            col: clamp(p.x, self.origin_x, self.n_cols),
            row: clamp(p.y, self.origin_y, self.n_rows),
        }
    }

    /// Inclusive column and row ranges of tiles whose extents meet `bbox`,
    /// or `None` when the box misses the grid.
    pub fn tile_range(&self, bbox: &BBox) -> Option<((usize, usize), (usize, usize))> {
        if !bbox.intersects(&self.extent()) {
            return None;
        }
        let lo = self.clamped_tile_of(Point::new(bbox.min_x, bbox.min_y));
        let hi = self.clamped_tile_of(Point::new(bbox.max_x, bbox.max_y));
        Some(((lo.col, hi.col), (lo.row, hi.row)))
    }

    /// Row-major position of a tile, row 0 being the southernmost.
    #[inline]
    pub fn linear(&self, id: TileId) -> usize {
        id.row * self.n_cols + id.col
    }

    #[inline]
    pub fn tile_at(&self, linear: usize) -> TileId {
        TileId {
            col: linear % self.n_cols,
            row: linear / self.n_cols,
        }
    }

    pub fn tile_center(&self, id: TileId) -> Point {
        Point::new(
            self.origin_x + (id.col as f64 + 0.5) * self.tile_size,
            self.origin_y + (id.row as f64 + 0.5) * self.tile_size,
        )
    }

    pub fn tile_bbox(&self, id: TileId) -> BBox {
        BBox {
            min_x: self.col_edge(id.col),
            min_y: self.row_edge(id.row),
            max_x: self.col_edge(id.col + 1),
            max_y: self.row_edge(id.row + 1),
        }
    }

    pub fn tiles(&self) -> impl Iterator<Item = TileId> + '_ {
        (0..self.len()).map(|i| self.tile_at(i))
    }
}
