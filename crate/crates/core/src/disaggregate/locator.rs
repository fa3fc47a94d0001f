use crate::geo::{BBox, Point};
use crate::io::AdminUnit;

/// Result of locating a point among admin units.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Hit {
    /// First unit, in input order, whose geometry contains the point.
    pub unit: usize,
    /// Whether any later unit also contains it.
    pub overlapped: bool,
}

/// Bucket index over unit bounding boxes. Lookups return the first
/// containing unit in input order, which is what a linear scan returns.
#[derive(Debug, Clone)]
pub struct UnitLocator<'a> {
    units: &'a [AdminUnit],
    extent: BBox,
    cell_w: f64,
    cell_h: f64,
    n_cols: usize,
    n_rows: usize,
    /// Candidate unit indices per bucket, ascending.
    buckets: Vec<Vec<u32>>,
}

impl<'a> UnitLocator<'a> {
    pub fn new(units: &'a [AdminUnit]) -> Self {
        let extent = crate::io::units_bbox(units).unwrap_or(BBox {
            min_x: 0.0,
            min_y: 0.0,
            max_x: 0.0,
            max_y: 0.0,
        });
        let side = ((units.len() * 4) as f64).sqrt().ceil().max(1.0) as usize;
        let (n_cols, n_rows) = (side, side);
        let cell_w = (extent.width() / n_cols as f64).max(f64::MIN_POSITIVE);
        let cell_h = (extent.height() / n_rows as f64).max(f64::MIN_POSITIVE);
        let mut locator = UnitLocator {
            units,
            extent,
            cell_w,
            cell_h,
            n_cols,
            n_rows,
            buckets: vec![Vec::new(); n_cols * n_rows],
        };
        for (i, unit) in units.iter().enumerate() {
            let b = unit.geometry.bbox();
            let (c0, r0) = locator.bucket_of(b.min_x, b.min_y);
            let (c1, r1) = locator.bucket_of(b.max_x, b.max_y);
            for r in r0..=r1 {
                for c in c0..=c1 {
                    locator.buckets[r * n_cols + c].push(i as u32);
                }
            }
        }
        locator
    }

    fn bucket_of(&self, x: f64, y: f64) -> (usize, usize) {
        let c = ((x - self.extent.min_x) / self.cell_w).floor();
        let r = ((y - self.extent.min_y) / self.cell_h).floor();
        (
            (c.max(0.0) as usize).min(self.n_cols - 1),
            (r.max(0.0) as usize).min(self.n_rows - 1),
        )
    }

    pub fn units(&self) -> &'a [AdminUnit] {
        self.units
    }

    /// Clamping keeps boundary points in the bucket their owning box was
    /// registered in, so only points outside the extent can be skipped here.
    #[inline]
    fn candidates(&self, p: Point) -> &[u32] {
        if self.units.is_empty() || !self.extent.contains(p) {
            return &[];
        }
        let (c, r) = self.bucket_of(p.x, p.y);
        &self.buckets[r * self.n_cols + c]
    }

    /// First containing unit, checking later candidates for overlap.
    pub fn locate(&self, p: Point) -> Option<Hit> {
        let mut found: Option<usize> = None;
        for &i in self.candidates(p) {
            if self.units[i as usize].geometry.contains(p) {
                match found {
                    None => found = Some(i as usize),
                    Some(unit) => {
                        return Some(Hit {
                            unit,
                            overlapped: true,
                        })
                    }
                }
            }
        }
        found.map(|unit| Hit {
            unit,
            overlapped: false,
        })
    }

    /// First containing unit without the overlap check.
    pub fn first(&self, p: Point) -> Option<usize> {
        self.candidates(p)
            .iter()
            .map(|&i| i as usize)
            .find(|&i| self.units[i].geometry.contains(p))
    }
}
