//! Geospatial domain types: buildings, terrain, streets and base stations.

use std::ops::{Add, Mul, Sub};
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub mod index;
pub mod io;
pub mod polygon;

pub use index::SpatialIndex;
pub use polygon::BBox;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Point2 { x, y }
    }

    pub fn dot(self, o: Point2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    pub fn cross(self, o: Point2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(self, o: Point2) -> f64 {
        (self - o).norm()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Point2 {
    type Output = Point2;
    fn add(self, o: Point2) -> Point2 {
        Point2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Point2 {
    type Output = Point2;
    fn sub(self, o: Point2) -> Point2 {
        Point2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Point2 {
    type Output = Point2;
    fn mul(self, s: f64) -> Point2 {
        Point2::new(self.x * s, self.y * s)
    }
}

/// East/north/up position in meters.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Point3 { x, y, z }
    }

    pub fn xy(self) -> Point2 {
        Point2::new(self.x, self.y)
    }
}

/// A building footprint with an optional height.
///
/// When `has_height` is false the stored height is meaningless and the
/// building never blocks a ray.
#[derive(Debug, Clone, PartialEq)]
pub struct Building {
    footprint: Vec<Point2>,
    height: f64,
    has_height: bool,
    bbox: BBox,
    centroid: Point2,
}

impl Building {
    /// Validates the ring: finite, at least three distinct vertices, simple.
    /// A repeated closing vertex is dropped.
    pub fn new(mut footprint: Vec<Point2>, height: Option<f64>) -> std::result::Result<Self, String> {
        if footprint.len() >= 2 && footprint.first() == footprint.last() {
            footprint.pop();
        }
        if footprint.len() < 3 {
            return Err(format!("footprint has {} vertices, need at least 3", footprint.len()));
        }
        if let Some(i) = footprint.iter().position(|p| !p.is_finite()) {
            return Err(format!("vertex {i} is not finite"));
        }
        if let Some((i, j)) = polygon::find_self_intersection(&footprint) {
            return Err(format!("footprint is self-intersecting (edges {i} and {j})"));
        }
        if polygon::area(&footprint) <= 0.0 {
            return Err("footprint has zero area".into());
        }
        let (height, has_height) = match height {
            Some(h) if !h.is_finite() || h < 0.0 => return Err(format!("height {h} must be finite and >= 0")),
            Some(h) => (h, true),
            None => (0.0, false),
        };
        let bbox = BBox::of_points(&footprint).expect("non-empty footprint");
        let centroid = polygon::centroid(&footprint);
        Ok(Building {
            footprint,
            height,
            has_height,
            bbox,
            centroid,
        })
    }

    /// Axis-aligned rectangle helper.
    pub fn rect(min: Point2, max: Point2, height: Option<f64>) -> std::result::Result<Self, String> {
        Building::new(
            vec![min, Point2::new(max.x, min.y), max, Point2::new(min.x, max.y)],
            height,
        )
    }

    pub fn footprint(&self) -> &[Point2] {
        &self.footprint
    }

    /// Known height above local ground, `None` if the source lacked it.
    pub fn height(&self) -> Option<f64> {
        self.has_height.then_some(self.height)
    }

    pub fn has_height(&self) -> bool {
        self.has_height
    }

    pub fn bbox(&self) -> BBox {
        self.bbox
    }

    pub fn centroid(&self) -> Point2 {
        self.centroid
    }

    pub fn area(&self) -> f64 {
        polygon::area(&self.footprint)
    }

    pub fn contains(&self, p: Point2) -> bool {
        self.bbox.contains(p) && polygon::contains_point(&self.footprint, p)
    }
}

/// Regular elevation raster. Node `(col, row)` sits at
/// `origin + (col, row) * cell_size`; rows run northwards from the origin.
#[derive(Debug)]
pub struct TerrainGrid {
    origin: Point2,
    cell_size: f64,
    ncols: usize,
    nrows: usize,
    elevations: Vec<f64>,
    max_elevation: f64,
    flat: bool,
    clamped: AtomicU64,
}

impl Clone for TerrainGrid {
    fn clone(&self) -> Self {
        TerrainGrid {
            origin: self.origin,
            cell_size: self.cell_size,
            ncols: self.ncols,
            nrows: self.nrows,
            elevations: self.elevations.clone(),
            max_elevation: self.max_elevation,
            flat: self.flat,
            clamped: AtomicU64::new(self.clamped.load(Ordering::Relaxed)),
        }
    }
}

impl PartialEq for TerrainGrid {
    fn eq(&self, o: &Self) -> bool {
        self.origin == o.origin
            && self.cell_size == o.cell_size
            && self.ncols == o.ncols
            && self.nrows == o.nrows
            && self.elevations == o.elevations
    }
}

impl TerrainGrid {
    pub fn new(origin: Point2, cell_size: f64, ncols: usize, nrows: usize, elevations: Vec<f64>) -> Result<Self> {
        if !(cell_size.is_finite() && cell_size > 0.0) {
            return Err(Error::Domain(format!("terrain cell size {cell_size} must be > 0")));
        }
        if !origin.is_finite() {
            return Err(Error::Domain("terrain origin must be finite".into()));
        }
        if ncols == 0 || nrows == 0 {
            return Err(Error::Domain("terrain grid must have at least one row and column".into()));
        }
        if ncols.checked_mul(nrows) != Some(elevations.len()) {
            return Err(Error::Domain(format!(
                "terrain grid {ncols}x{nrows} needs {} values, got {}",
                ncols.saturating_mul(nrows),
                elevations.len()
            )));
        }
        if let Some(i) = elevations.iter().position(|e| !e.is_finite()) {
            return Err(Error::Domain(format!("terrain elevation {i} is not finite")));
        }
        let max_elevation = elevations.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let flat = elevations.iter().all(|&e| e == elevations[0]);
        Ok(TerrainGrid {
            origin,
            cell_size,
            ncols,
            nrows,
            elevations,
            max_elevation,
            flat,
            clamped: AtomicU64::new(0),
        })
    }

    /// Constant-elevation grid covering `bbox`.
    pub fn flat(bbox: BBox, cell_size: f64, elevation: f64) -> Result<Self> {
        Self::from_fn(bbox, cell_size, |_| elevation)
    }

    /// Grid covering `bbox` with node elevations from `f`.
    pub fn from_fn(bbox: BBox, cell_size: f64, f: impl Fn(Point2) -> f64) -> Result<Self> {
        let ncols = ((bbox.max.x - bbox.min.x) / cell_size).ceil().max(0.0) as usize + 1;
        let nrows = ((bbox.max.y - bbox.min.y) / cell_size).ceil().max(0.0) as usize + 1;
        let mut elevations = Vec::with_capacity(ncols * nrows);
        for r in 0..nrows {
            for c in 0..ncols {
                elevations.push(f(Point2::new(
                    bbox.min.x + c as f64 * cell_size,
                    bbox.min.y + r as f64 * cell_size,
                )));
            }
        }
        Self::new(bbox.min, cell_size, ncols, nrows, elevations)
    }

    pub fn origin(&self) -> Point2 {
        self.origin
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn elevations(&self) -> &[f64] {
        &self.elevations
    }

    pub fn node(&self, col: usize, row: usize) -> f64 {
        self.elevations[row * self.ncols + col]
    }

    pub fn is_flat(&self) -> bool {
        self.flat
    }

    pub fn max_elevation(&self) -> f64 {
        self.max_elevation
    }

    /// Number of queries that fell outside the grid and were clamped.
    pub fn clamped_queries(&self) -> u64 {
        self.clamped.load(Ordering::Relaxed)
    }

    /// Bilinear interpolation of the four surrounding nodes. Points outside
    /// the extent are clamped to the nearest edge and counted.
    pub fn elevation(&self, p: Point2) -> f64 {
        let fx = (p.x - self.origin.x) / self.cell_size;
        let fy = (p.y - self.origin.y) / self.cell_size;
        let max_x = (self.ncols - 1) as f64;
        let max_y = (self.nrows - 1) as f64;
        // NaN compares false on both sides and is treated as out of extent.
        if !(fx >= 0.0 && fx <= max_x && fy >= 0.0 && fy <= max_y) {
            self.clamped.fetch_add(1, Ordering::Relaxed);
        }
        let fx = if fx.is_nan() { 0.0 } else { fx.clamp(0.0, max_x) };
        let fy = if fy.is_nan() { 0.0 } else { fy.clamp(0.0, max_y) };
        let c0 = (fx.floor() as usize).min(self.ncols.saturating_sub(2));
        let r0 = (fy.floor() as usize).min(self.nrows.saturating_sub(2));
        let c1 = (c0 + 1).min(self.ncols - 1);
        let r1 = (r0 + 1).min(self.nrows - 1);
        let tx = fx - c0 as f64;
        let ty = fy - r0 as f64;
        let z00 = self.node(c0, r0);
        let z10 = self.node(c1, r0);
        let z01 = self.node(c0, r1);
        let z11 = self.node(c1, r1);
        let south = z00 + (z10 - z00) * tx;
        let north = z01 + (z11 - z01) * tx;
        south + (north - south) * ty
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaseStation {
    pub id: String,
    pub position: Point2,
    /// Antenna height above local ground, > 0.
    pub height_agl: f64,
    /// Ground elevation above sea level at the site.
    pub ground_elevation: f64,
}

impl BaseStation {
    pub fn new(id: impl Into<String>, position: Point2, height_agl: f64, ground_elevation: f64) -> Result<Self> {
        if !(height_agl.is_finite() && height_agl > 0.0) {
            return Err(Error::Domain(format!("base station height {height_agl} must be > 0")));
        }
        if !position.is_finite() || !ground_elevation.is_finite() {
            return Err(Error::Domain("base station coordinates must be finite".into()));
        }
        Ok(BaseStation {
            id: id.into(),
            position,
            height_agl,
            ground_elevation,
        })
    }

    pub fn antenna(&self) -> Point3 {
        Point3::new(self.position.x, self.position.y, self.ground_elevation + self.height_agl)
    }
}

/// Road centerlines.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StreetNetwork {
    polylines: Vec<Vec<Point2>>,
}

impl StreetNetwork {
    pub fn new(polylines: Vec<Vec<Point2>>) -> Result<Self> {
        for (i, line) in polylines.iter().enumerate() {
            if line.len() < 2 {
                return Err(Error::Domain(format!("polyline {i} has {} vertices, need at least 2", line.len())));
            }
            if line.iter().any(|p| !p.is_finite()) {
                return Err(Error::Domain(format!("polyline {i} has a non-finite vertex")));
            }
        }
        Ok(StreetNetwork { polylines })
    }

    pub fn polylines(&self) -> &[Vec<Point2>] {
        &self.polylines
    }

    pub fn is_empty(&self) -> bool {
        self.polylines.is_empty()
    }
}

/// Everything needed to trace one region: immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub buildings: Vec<Building>,
    pub terrain: TerrainGrid,
    pub streets: StreetNetwork,
    pub stations: Vec<BaseStation>,
    /// Terrain elevation at each footprint centroid plus the building height;
    /// `NEG_INFINITY` for buildings without height data.
    roof_elevations: Vec<f64>,
}

impl Scene {
    pub fn new(
        buildings: Vec<Building>,
        terrain: TerrainGrid,
        streets: StreetNetwork,
        stations: Vec<BaseStation>,
    ) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        for bs in &stations {
            if !seen.insert(bs.id.as_str()) {
                return Err(Error::Domain(format!("duplicate base station id `{}`", bs.id)));
            }
        }
        let roof_elevations = buildings
            .iter()
            .map(|b| match b.height() {
                Some(h) => terrain.elevation(b.centroid()) + h,
                None => f64::NEG_INFINITY,
            })
            .collect();
        Ok(Scene {
            buildings,
            terrain,
            streets,
            stations,
            roof_elevations,
        })
    }

    /// Absolute roof elevation of building `i`; `NEG_INFINITY` when its height is unknown.
    pub fn roof_elevation(&self, i: usize) -> f64 {
        self.roof_elevations[i]
    }

    pub fn station(&self, id: &str) -> Option<&BaseStation> {
        self.stations.iter().find(|s| s.id == id)
    }

    /// Bounding box of every geometry in the scene.
    pub fn extent(&self) -> Option<BBox> {
        let mut bb: Option<BBox> = None;
        let mut add = |b: BBox| bb = Some(bb.map_or(b, |x| x.union(&b)));
        for b in &self.buildings {
            add(b.bbox());
        }
        for l in self.streets.polylines() {
            if let Some(b) = BBox::of_points(l) {
                add(b);
            }
        }
        for s in &self.stations {
            add(BBox { min: s.position, max: s.position });
        }
        bb
    }
}
