//! Exclusion of non-residential tiles around dense POI clusters.
//!
//! A POI is *dense* when the closed disc of radius `R` around it holds at
//! least `P` POIs, itself included. A tile is excluded when a dense POI lies
//! inside it; the neighbors that made the POI dense may sit in other tiles.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geo::{distance, BBox, Point, TileGrid, TileId};
use crate::io::{AsciiGrid, PoiPoint};

pub const DEFAULT_RADIUS: f64 = 500.0;
pub const DEFAULT_THRESHOLD: usize = 5;

/// Uniform bucket grid over point locations, stored cell-major so one row of
/// cells is a contiguous slice.
#[derive(Debug, Clone)]
struct BucketIndex {
    origin: Point,
    cell: f64,
    n_cols: usize,
    n_rows: usize,
    /// `starts[k]..starts[k + 1]` indexes `locations` for cell `k`.
    starts: Vec<usize>,
    locations: Vec<Point>,
}

impl BucketIndex {
    fn build(points: &[PoiPoint]) -> Self {
        let Some(bbox) = BBox::from_points(points.iter().map(|p| p.location)) else {
            return BucketIndex {
                origin: Point::new(0.0, 0.0),
                cell: 1.0,
                n_cols: 1,
                n_rows: 1,
                starts: vec![0, 0],
                locations: Vec::new(),
            };
        };
        let n = points.len() as f64;
        let area = bbox.width() * bbox.height();
        // Roughly two points per occupied cell for evenly spread data.
        let mut cell = if area > 0.0 {
            (2.0 * area / n).sqrt()
        } else {
            bbox.width().max(bbox.height()) / n
        };
        if !(cell > 0.0 && cell.is_finite()) {
            cell = 1.0;
        }
        let n_cols = (bbox.width() / cell).floor() as usize + 1;
        let n_rows = (bbox.height() / cell).floor() as usize + 1;
        let origin = Point::new(bbox.min_x, bbox.min_y);
        let cell_of = |p: Point| {
            let c = (((p.x - origin.x) / cell).floor() as usize).min(n_cols - 1);
            let r = (((p.y - origin.y) / cell).floor() as usize).min(n_rows - 1);
            r * n_cols + c
        };

        let mut counts = vec![0usize; n_cols * n_rows + 1];
        let cells: Vec<usize> = points.iter().map(|p| cell_of(p.location)).collect();
        for &k in &cells {
            counts[k + 1] += 1;
        }
        for k in 1..counts.len() {
            counts[k] += counts[k - 1];
        }
        let starts = counts.clone();
        let mut cursor = counts;
        let mut locations = vec![Point::new(0.0, 0.0); points.len()];
        for (p, &k) in points.iter().zip(&cells) {
            locations[cursor[k]] = p.location;
            cursor[k] += 1;
        }
        BucketIndex {
            origin,
            cell,
            n_cols,
            n_rows,
            starts,
            locations,
        }
    }

    /// Inclusive cell range along one axis covering `[lo, hi]`, padded by one
    /// cell so floating-point rounding can never drop a candidate.
    fn axis_range(&self, lo: f64, hi: f64, origin: f64, n: usize) -> Option<(usize, usize)> {
        let a = ((lo - origin) / self.cell).floor() - 1.0;
        let b = ((hi - origin) / self.cell).floor() + 1.0;
        if b < 0.0 || a > (n - 1) as f64 {
            return None;
        }
        Some((a.max(0.0) as usize, (b as usize).min(n - 1)))
    }

    /// Counts locations with `distance(center, q) <= radius`, stopping early
    /// once `limit` is reached.
    fn count_within(&self, center: Point, radius: f64, limit: usize) -> usize {
        if self.locations.is_empty() {
            return 0;
        }
        let Some((c0, c1)) =
            self.axis_range(center.x - radius, center.x + radius, self.origin.x, self.n_cols)
        else {
            return 0;
        };
        let Some((r0, r1)) =
            self.axis_range(center.y - radius, center.y + radius, self.origin.y, self.n_rows)
        else {
            return 0;
        };
        let mut count = 0;
        for r in r0..=r1 {
            let span = self.starts[r * self.n_cols + c0]..self.starts[r * self.n_cols + c1 + 1];
            for &q in &self.locations[span] {
                if distance(center, q) <= radius {
                    count += 1;
                    if count >= limit {
                        return count;
                    }
                }
            }
        }
        count
    }
}

/// POI points with a spatial index whose radius queries return exactly what
/// a linear scan with [`distance`] would.
#[derive(Debug, Clone)]
pub struct PoiSet {
    points: Vec<PoiPoint>,
    index: BucketIndex,
}

fn check_radius(radius: f64) -> Result<()> {
    if radius > 0.0 && radius.is_finite() {
        Ok(())
    } else {
        Err(Error::Parameter(format!("buffer radius must be positive, got {radius}")))
    }
}

fn check_threshold(threshold: usize) -> Result<()> {
    if threshold >= 1 {
        Ok(())
    } else {
        Err(Error::Parameter("POI threshold must be at least 1".into()))
    }
}

impl PoiSet {
    pub fn new(points: Vec<PoiPoint>) -> Result<Self> {
        if let Some(i) = points.iter().position(|p| !p.location.is_finite()) {
            return Err(Error::validation(format!("poi {i}"), "non-finite location"));
        }
        let index = BucketIndex::build(&points);
        Ok(PoiSet { points, index })
    }

    pub fn points(&self) -> &[PoiPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Number of POIs within the closed disc of `radius` around `center`.
    pub fn buffer_count(&self, center: Point, radius: f64) -> Result<usize> {
        check_radius(radius)?;
        Ok(self.index.count_within(center, radius, usize::MAX))
    }

    /// Indices (ascending) of POIs whose buffer count reaches `threshold`.
    pub fn dense_indices(&self, radius: f64, threshold: usize) -> Result<Vec<usize>> {
        check_radius(radius)?;
        check_threshold(threshold)?;
        Ok((0..self.points.len())
            .into_par_iter()
            .filter(|&i| {
                self.index.count_within(self.points[i].location, radius, threshold) >= threshold
            })
            .collect())
    }

    pub fn dense_pois(&self, radius: f64, threshold: usize) -> Result<Vec<PoiPoint>> {
        Ok(self
            .dense_indices(radius, threshold)?
            .into_iter()
            .map(|i| self.points[i].clone())
            .collect())
    }
}

/// Per-tile residential flag; `true` means the tile keeps its population share.
#[derive(Debug, Clone, PartialEq)]
pub struct TileMask {
    grid: TileGrid,
    retained: Vec<bool>,
}

impl TileMask {
    pub fn all_retained(grid: TileGrid) -> Self {
        TileMask {
            grid,
            retained: vec![true; grid.len()],
        }
    }

    pub fn grid(&self) -> &TileGrid {
        &self.grid
    }

    pub fn is_retained(&self, id: TileId) -> bool {
        self.retained[self.grid.linear(id)]
    }

    #[inline]
    pub fn is_retained_linear(&self, linear: usize) -> bool {
        self.retained[linear]
    }

    pub fn exclude(&mut self, id: TileId) {
        let k = self.grid.linear(id);
        self.retained[k] = false;
    }

    /// Row-major flags, southernmost row first.
    pub fn retained(&self) -> &[bool] {
        &self.retained
    }

    /// Linear indices of excluded tiles, ascending.
    pub fn excluded(&self) -> Vec<usize> {
        self.retained
            .iter()
            .enumerate()
            .filter_map(|(i, &keep)| (!keep).then_some(i))
            .collect()
    }

    pub fn excluded_count(&self) -> usize {
        self.retained.iter().filter(|&&keep| !keep).count()
    }

    /// 1 for retained tiles, 0 for excluded ones.
    pub fn to_ascii(&self) -> AsciiGrid {
        AsciiGrid {
            n_cols: self.grid.n_cols(),
            n_rows: self.grid.n_rows(),
            xll_corner: self.grid.origin_x(),
            yll_corner: self.grid.origin_y(),
            cell_size: self.grid.tile_size(),
            nodata_value: -9999.0,
            values: self.retained.iter().map(|&k| f64::from(u8::from(k))).collect(),
        }
    }
}

/// Excludes every tile holding at least one dense POI. POIs outside the
/// grid still count toward their neighbors' buffers.
pub fn compute_tile_mask(
    grid: &TileGrid,
    pois: &PoiSet,
    radius: f64,
    threshold: usize,
) -> Result<TileMask> {
    let mut mask = TileMask::all_retained(*grid);
    for i in pois.dense_indices(radius, threshold)? {
        if let Some(id) = grid.tile_index_of(pois.points[i].location) {
            mask.exclude(id);
        }
    }
    Ok(mask)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute_counts(points: &[PoiPoint], radius: f64) -> Vec<usize> {
        points
            .iter()
            .map(|a| {
                points
                    .iter()
                    .filter(|b| distance(a.location, b.location) <= radius)
                    .count()
            })
            .collect()
    }

    fn cluster(cx: f64, cy: f64) -> Vec<PoiPoint> {
        // Five points spread over less than 100 m.
        [(0.0, 0.0), (20.0, 10.0), (-15.0, 30.0), (40.0, -20.0), (5.0, 45.0)]
            .iter()
            .map(|(dx, dy)| PoiPoint::new(cx + dx, cy + dy, "shop"))
            .collect()
    }

    #[test]
    fn five_point_cluster_counts_five_each() {
        let pts = cluster(1000.0, 1000.0);
        assert!(brute_counts(&pts, 500.0).iter().all(|&c| c == 5));
        let set = PoiSet::new(pts.clone()).unwrap();
        for p in &pts {
            assert_eq!(set.buffer_count(p.location, 500.0).unwrap(), 5);
        }
        assert_eq!(set.dense_pois(500.0, 5).unwrap(), pts);
    }

    #[test]
    fn isolated_and_empty() {
        let set = PoiSet::new(vec![PoiPoint::new(3.0, 4.0, "")]).unwrap();
        assert_eq!(set.buffer_count(Point::new(3.0, 4.0), 500.0).unwrap(), 1);
        let empty = PoiSet::new(vec![]).unwrap();
        assert_eq!(empty.buffer_count(Point::new(0.0, 0.0), 500.0).unwrap(), 0);
        assert!(empty.dense_pois(500.0, 1).unwrap().is_empty());
    }

    #[test]
    fn parameter_errors() {
        let set = PoiSet::new(cluster(0.0, 0.0)).unwrap();
        assert!(matches!(set.buffer_count(Point::new(0.0, 0.0), 0.0), Err(Error::Parameter(_))));
        assert!(matches!(set.buffer_count(Point::new(0.0, 0.0), -5.0), Err(Error::Parameter(_))));
        assert!(matches!(set.dense_pois(500.0, 0), Err(Error::Parameter(_))));
        let grid = TileGrid::new(0.0, 0.0, 30.0, 2, 2).unwrap();
        assert!(compute_tile_mask(&grid, &set, f64::NAN, 5).is_err());
    }

    #[test]
    fn threshold_edges() {
        let mut pts = cluster(0.0, 0.0);
        pts.push(PoiPoint::new(5000.0, 5000.0, "lone"));
        let set = PoiSet::new(pts.clone()).unwrap();
        assert_eq!(set.dense_pois(500.0, 1).unwrap(), pts);
        assert!(set.dense_pois(500.0, pts.len() + 1).unwrap().is_empty());
    }

    #[test]
    fn ties_at_exactly_the_radius_are_included() {
        let pts = vec![
            PoiPoint::new(0.0, 0.0, ""),
            PoiPoint::new(300.0, 400.0, ""),
            PoiPoint::new(-500.0, 0.0, ""),
            PoiPoint::new(0.0, 500.0000001, ""),
        ];
        let set = PoiSet::new(pts).unwrap();
        assert_eq!(set.buffer_count(Point::new(0.0, 0.0), 500.0).unwrap(), 3);
    }

    #[test]
    fn tile_mask_examples() {
        let grid = TileGrid::new(0.0, 0.0, 30.0, 100, 100).unwrap();
        let none = compute_tile_mask(&grid, &PoiSet::new(vec![]).unwrap(), 500.0, 5).unwrap();
        assert_eq!(none.excluded_count(), 0);

        // Five POIs packed inside tile (10, 10): 300..330 x 300..330.
        let pts: Vec<PoiPoint> = [(301.0, 301.0), (305.0, 320.0), (310.0, 310.0), (329.0, 302.0), (315.0, 329.5)]
            .iter()
            .map(|&(x, y)| PoiPoint::new(x, y, "office"))
            .collect();
        let mask = compute_tile_mask(&grid, &PoiSet::new(pts).unwrap(), 500.0, 5).unwrap();
        assert_eq!(mask.excluded(), vec![grid.linear(TileId::new(10, 10))]);

        let lone = PoiSet::new(vec![PoiPoint::new(45.0, 45.0, "school")]).unwrap();
        let mask = compute_tile_mask(&grid, &lone, 500.0, 5).unwrap();
        assert!(mask.is_retained(TileId::new(1, 1)));
    }

    #[test]
    fn pois_outside_grid_still_count_for_neighbors() {
        let grid = TileGrid::new(0.0, 0.0, 30.0, 2, 2).unwrap();
        let mut pts: Vec<PoiPoint> = (0..4).map(|i| PoiPoint::new(-100.0 - i as f64, 10.0, "")).collect();
        pts.push(PoiPoint::new(10.0, 10.0, ""));
        let mask = compute_tile_mask(&grid, &PoiSet::new(pts).unwrap(), 500.0, 5).unwrap();
        assert_eq!(mask.excluded(), vec![0]);
    }

    #[test]
    fn index_matches_brute_force_on_clustered_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let mut pts = Vec::new();
            for _ in 0..rng.random_range(1..8) {
                let (cx, cy) = (rng.random_range(0.0..5000.0), rng.random_range(0.0..5000.0));
                for _ in 0..rng.random_range(1..60) {
                    pts.push(PoiPoint::new(
                        cx + rng.random_range(-300.0..300.0),
                        cy + rng.random_range(-300.0..300.0),
                        "",
                    ));
                }
            }
            let set = PoiSet::new(pts.clone()).unwrap();
            for radius in [1.0, 100.0, 500.0, 10_000.0] {
                let brute = brute_counts(&pts, radius);
                for (p, &want) in pts.iter().zip(&brute) {
                    assert_eq!(set.buffer_count(p.location, radius).unwrap(), want);
                }
            }
        }
    }

    proptest! {
        #[test]
        fn dense_set_matches_linear_scan(
            coords in prop::collection::vec((0.0..2000.0f64, 0.0..2000.0f64), 0..200),
            radius in 1.0..800.0f64,
            threshold in 1usize..8,
        ) {
            let pts: Vec<PoiPoint> = coords.iter().map(|&(x, y)| PoiPoint::new(x, y, "")).collect();
            let set = PoiSet::new(pts.clone()).unwrap();
            let want: Vec<usize> = brute_counts(&pts, radius)
                .into_iter()
                .enumerate()
                .filter_map(|(i, c)| (c >= threshold).then_some(i))
                .collect();
            prop_assert_eq!(set.dense_indices(radius, threshold).unwrap(), want);
        }
    }
}
