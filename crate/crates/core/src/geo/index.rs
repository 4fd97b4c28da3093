//! Uniform-grid index over building bounding boxes.

use super::{BBox, Building, Point2};

/// Default grid cell edge in meters.
pub const DEFAULT_CELL_SIZE: f64 = 50.0;

// Query slack absorbing rounding in sample positions along a segment.
const QUERY_SLACK: f64 = 1e-6;

/// Each grid cell lists the buildings whose bounding box overlaps it.
/// Segment queries return a sorted superset of the buildings that the
/// segment actually touches.
#[derive(Debug, Clone)]
pub struct SpatialIndex {
    origin: Point2,
    cell_size: f64,
    ncols: usize,
    nrows: usize,
    cells: Vec<Vec<u32>>,
    n_buildings: usize,
}

impl SpatialIndex {
    pub fn build(buildings: &[Building], cell_size: f64) -> Self {
        assert!(cell_size.is_finite() && cell_size > 0.0, "cell_size must be > 0");
        let extent = buildings.iter().map(Building::bbox).reduce(|a, b| a.union(&b));
        let Some(extent) = extent else {
            return SpatialIndex {
                origin: Point2::default(),
                cell_size,
                ncols: 0,
                nrows: 0,
                cells: Vec::new(),
                n_buildings: 0,
            };
        };
        let ncols = ((extent.max.x - extent.min.x) / cell_size).floor() as usize + 1;
        let nrows = ((extent.max.y - extent.min.y) / cell_size).floor() as usize + 1;
        let mut index = SpatialIndex {
            origin: extent.min,
            cell_size,
            ncols,
            nrows,
            cells: vec![Vec::new(); ncols * nrows],
            n_buildings: buildings.len(),
        };
        for (i, b) in buildings.iter().enumerate() {
            let bb = b.bbox();
            let (c0, c1) = index.col_range(bb.min.x, bb.max.x);
            let (r0, r1) = index.row_range(bb.min.y, bb.max.y);
            for r in r0..=r1 {
                for c in c0..=c1 {
                    index.cells[r * ncols + c].push(i as u32);
                }
            }
        }
        index
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn len(&self) -> usize {
        self.n_buildings
    }

    pub fn is_empty(&self) -> bool {
        self.n_buildings == 0
    }

    fn col_of(&self, x: f64) -> isize {
        ((x - self.origin.x) / self.cell_size).floor() as isize
    }

    fn row_of(&self, y: f64) -> isize {
        ((y - self.origin.y) / self.cell_size).floor() as isize
    }

    fn col_range(&self, x0: f64, x1: f64) -> (usize, usize) {
        let hi = self.ncols as isize - 1;
        (self.col_of(x0).clamp(0, hi) as usize, self.col_of(x1).clamp(0, hi) as usize)
    }

    fn row_range(&self, y0: f64, y1: f64) -> (usize, usize) {
        let hi = self.nrows as isize - 1;
        (self.row_of(y0).clamp(0, hi) as usize, self.row_of(y1).clamp(0, hi) as usize)
    }

    /// Candidate buildings for the segment `a`–`b`, sorted and deduplicated.
    ///
    /// Walks the grid column by column; within each column the segment's
    /// y-extent (padded by a small slack) selects the rows.
    pub fn segment_candidates(&self, a: Point2, b: Point2) -> Vec<usize> {
        let mut out = Vec::new();
        self.segment_candidates_into(a, b, &mut out);
        out
    }

    pub fn segment_candidates_into(&self, a: Point2, b: Point2, out: &mut Vec<usize>) {
        out.clear();
        if self.cells.is_empty() {
            return;
        }
        let extent_max = Point2::new(
            self.origin.x + self.ncols as f64 * self.cell_size,
            self.origin.y + self.nrows as f64 * self.cell_size,
        );
        let grid_box = BBox {
            min: Point2::new(self.origin.x - QUERY_SLACK, self.origin.y - QUERY_SLACK),
            max: Point2::new(extent_max.x + QUERY_SLACK, extent_max.y + QUERY_SLACK),
        };
        let Some((t_in, t_out)) = grid_box.clip_segment(a, b) else {
            return;
        };
        let d = b - a;
        let pa = a + d * t_in;
        let pb = a + d * t_out;
        let (left, right) = if pa.x <= pb.x { (pa, pb) } else { (pb, pa) };
        let (c0, c1) = self.col_range(left.x - QUERY_SLACK, right.x + QUERY_SLACK);
        let dx = right.x - left.x;
        for c in c0..=c1 {
            let x_lo = (self.origin.x + c as f64 * self.cell_size).max(left.x);
            let x_hi = (self.origin.x + (c + 1) as f64 * self.cell_size).min(right.x);
            let (y_lo, y_hi) = if dx > 0.0 {
                let y_at = |x: f64| left.y + (right.y - left.y) * ((x - left.x) / dx).clamp(0.0, 1.0);
                let (ya, yb) = (y_at(x_lo), y_at(x_hi));
                (ya.min(yb), ya.max(yb))
            } else {
                (left.y.min(right.y), left.y.max(right.y))
            };
            let (r0, r1) = self.row_range(y_lo - QUERY_SLACK, y_hi + QUERY_SLACK);
            for r in r0..=r1 {
                out.extend(self.cells[r * self.ncols + c].iter().map(|&i| i as usize));
            }
        }
        out.sort_unstable();
        out.dedup();
    }

    /// Candidate buildings whose cells overlap the box.
    pub fn bbox_candidates(&self, bb: BBox) -> Vec<usize> {
        let mut out = Vec::new();
        if self.cells.is_empty() {
            return out;
        }
        let (c0, c1) = self.col_range(bb.min.x, bb.max.x);
        let (r0, r1) = self.row_range(bb.min.y, bb.max.y);
        for r in r0..=r1 {
            for c in c0..=c1 {
                out.extend(self.cells[r * self.ncols + c].iter().map(|&i| i as usize));
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }
}
