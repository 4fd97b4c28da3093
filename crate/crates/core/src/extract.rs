//! Street-point sampling and 3D ray tracing of LOS labels.

use serde::{Deserialize, Serialize};

use crate::geo::{BaseStation, Point2, Point3, Scene, SpatialIndex, StreetNetwork};

/// Extraction parameters. Defaults: 1 km radius, 5 m street spacing,
/// 1 m ray step, ground-level receivers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractConfig {
    pub radius: f64,
    pub spacing: f64,
    pub step: f64,
    pub ue_height: f64,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        ExtractConfig {
            radius: 1000.0,
            spacing: 5.0,
            step: 1.0,
            ue_height: 0.0,
        }
    }
}

impl ExtractConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(format!("radius {} must be > 0", self.radius));
        }
        if !(self.spacing > 0.0 && self.spacing.is_finite()) {
            return Err(format!("spacing {} must be > 0", self.spacing));
        }
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(format!("step {} must be > 0", self.step));
        }
        if !(self.ue_height >= 0.0 && self.ue_height.is_finite()) {
            return Err(format!("ue_height {} must be >= 0", self.ue_height));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LosSample {
    pub point: Point2,
    pub distance_2d: f64,
    pub is_los: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellLosData {
    pub bs_id: String,
    pub samples: Vec<LosSample>,
    pub ue_height: f64,
}

impl CellLosData {
    /// A cell without street points carries no evidence and is skipped downstream.
    pub fn is_usable(&self) -> bool {
        !self.samples.is_empty()
    }

    pub fn los_count(&self) -> usize {
        self.samples.iter().filter(|s| s.is_los).count()
    }
}

/// Points along each polyline at arc-length multiples of `spacing`, plus the
/// final vertex, kept when within `radius` (and not exactly at) the station.
pub fn sample_streets(streets: &StreetNetwork, bs: &BaseStation, radius: f64, spacing: f64) -> Vec<Point2> {
    assert!(radius > 0.0 && spacing > 0.0, "radius and spacing must be > 0");
    let mut out = Vec::new();
    let keep = |p: Point2| {
        let d = p.distance(bs.position);
        d > 0.0 && d <= radius
    };
    for line in streets.polylines() {
        let mut next_s = 0.0f64; // arc length of the next sample
        let mut k = 0u64;
        let mut walked = 0.0f64;
        for w in line.windows(2) {
            let (a, b) = (w[0], w[1]);
            let len = a.distance(b);
            while next_s <= walked + len * (1.0 + 1e-12) {
                let t = if len > 0.0 { ((next_s - walked) / len).clamp(0.0, 1.0) } else { 0.0 };
                let p = a + (b - a) * t;
                if keep(p) {
                    out.push(p);
                }
                k += 1;
                next_s = k as f64 * spacing;
            }
            walked += len;
        }
        // final endpoint when it is not already a multiple of the spacing
        let last_placed = (k.saturating_sub(1)) as f64 * spacing;
        if walked - last_placed > 1e-9 * walked.max(1.0) {
            let end = *line.last().expect("polyline has vertices");
            if keep(end) {
                out.push(end);
            }
        }
    }
    out
}

/// The 3D ray from the antenna to a receiver at `ue_height` above terrain.
#[derive(Debug, Clone, Copy)]
pub struct Ray {
    pub from: Point3,
    pub to: Point3,
    /// Horizontal length.
    pub length: f64,
    /// Horizontal sample spacing.
    pub step: f64,
}

impl Ray {
    pub fn new(scene: &Scene, bs: &BaseStation, street_point: Point2, ue_height: f64, step: f64) -> Self {
        let from = bs.antenna();
        let to = Point3::new(
            street_point.x,
            street_point.y,
            scene.terrain.elevation(street_point) + ue_height,
        );
        Ray {
            from,
            to,
            length: from.xy().distance(street_point),
            step,
        }
    }

    /// Number of interior multiples of `step`; samples are `k * step` for
    /// `k = 0..=n` plus the far endpoint. Halving the step keeps every sample.
    fn n_steps(&self) -> u64 {
        (self.length / self.step).floor() as u64
    }

    fn t_of(&self, k: u64) -> f64 {
        if self.length == 0.0 {
            0.0
        } else {
            (k as f64 * self.step) / self.length
        }
    }

    fn at(&self, t: f64) -> (Point2, f64) {
        let a = self.from;
        let b = self.to;
        (
            Point2::new(a.x + (b.x - a.x) * t, a.y + (b.y - a.y) * t),
            a.z + (b.z - a.z) * t,
        )
    }

    /// Visits every sample parameter in order.
    fn for_each_t(&self, mut f: impl FnMut(f64) -> bool) -> bool {
        let n = self.n_steps();
        for k in 0..=n {
            if f(self.t_of(k)) {
                return true;
            }
        }
        if self.t_of(n) < 1.0 {
            return f(1.0);
        }
        false
    }

    /// Sample parameters falling in `[t0, t1]` (with a little slack).
    fn for_each_t_in(&self, t0: f64, t1: f64, mut f: impl FnMut(f64) -> bool) -> bool {
        if self.length == 0.0 {
            return f(0.0);
        }
        let n = self.n_steps();
        let slack = 1e-9;
        let k0 = (((t0 - slack) * self.length / self.step).floor().max(0.0)) as u64;
        let k1 = (((t1 + slack) * self.length / self.step).ceil().max(0.0) as u64).min(n);
        for k in k0..=k1 {
            let t = self.t_of(k);
            if t >= t0 - slack && t <= t1 + slack && f(t) {
                return true;
            }
        }
        if t1 + slack >= 1.0 && self.t_of(n) < 1.0 {
            return f(1.0);
        }
        false
    }
}

/// Whether building `i` blocks the ray: some sample lies inside the
/// footprint while the ray is strictly below the roof.
fn building_blocks(scene: &Scene, i: usize, ray: &Ray) -> bool {
    let roof = scene.roof_elevation(i);
    if roof == f64::NEG_INFINITY {
        return false;
    }
    let b = &scene.buildings[i];
    let Some((t0, t1)) = b.bbox().clip_segment(ray.from.xy(), ray.to.xy()) else {
        return false;
    };
    let z0 = ray.from.z + (ray.to.z - ray.from.z) * t0;
    let z1 = ray.from.z + (ray.to.z - ray.from.z) * t1;
    if z0.min(z1) >= roof + 1e-9 * roof.abs().max(1.0) {
        return false;
    }
    ray.for_each_t_in(t0, t1, |t| {
        let (p, z) = ray.at(t);
        z < roof && b.contains(p)
    })
}

fn terrain_blocks(scene: &Scene, ray: &Ray) -> bool {
    let terrain = &scene.terrain;
    if terrain.is_flat() {
        let ground = terrain.elevations()[0];
        return ray.from.z < ground || ray.to.z < ground;
    }
    if ray.from.z.min(ray.to.z) >= terrain.max_elevation() {
        return false;
    }
    ray.for_each_t(|t| {
        let (p, z) = ray.at(t);
        z < terrain.elevation(p)
    })
}

/// LOS label using the spatial index to find candidate buildings.
pub fn trace_los(
    scene: &Scene,
    index: &SpatialIndex,
    bs: &BaseStation,
    street_point: Point2,
    ue_height: f64,
    step: f64,
) -> bool {
    assert!(step > 0.0, "step must be > 0");
    let ray = Ray::new(scene, bs, street_point, ue_height, step);
    let mut cands = Vec::new();
    index.segment_candidates_into(ray.from.xy(), ray.to.xy(), &mut cands);
    trace_with(scene, &ray, cands.into_iter())
}

/// LOS label testing every building in the scene, without an index.
pub fn trace_los_brute_force(scene: &Scene, bs: &BaseStation, street_point: Point2, ue_height: f64, step: f64) -> bool {
    assert!(step > 0.0, "step must be > 0");
    let ray = Ray::new(scene, bs, street_point, ue_height, step);
    trace_with(scene, &ray, 0..scene.buildings.len())
}

fn trace_with(scene: &Scene, ray: &Ray, mut candidates: impl Iterator<Item = usize>) -> bool {
    if terrain_blocks(scene, ray) {
        return false;
    }
    !candidates.any(|i| building_blocks(scene, i, ray))
}

/// Samples the streets around `bs` and labels every point.
pub fn extract_cell(scene: &Scene, index: &SpatialIndex, bs: &BaseStation, config: &ExtractConfig) -> CellLosData {
    let points = sample_streets(&scene.streets, bs, config.radius, config.spacing);
    let mut cands = Vec::new();
    let samples = points
        .into_iter()
        .map(|p| {
            let ray = Ray::new(scene, bs, p, config.ue_height, config.step);
            index.segment_candidates_into(ray.from.xy(), ray.to.xy(), &mut cands);
            LosSample {
                point: p,
                distance_2d: p.distance(bs.position),
                is_los: trace_with(scene, &ray, cands.iter().copied()),
            }
        })
        .collect();
    CellLosData {
        bs_id: bs.id.clone(),
        samples,
        ue_height: config.ue_height,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::{BBox, Building, TerrainGrid};

    fn station(h: f64) -> BaseStation {
        BaseStation::new("bs", Point2::new(0.0, 0.0), h, 0.0).unwrap()
    }

    fn flat(extent: f64) -> TerrainGrid {
        let bb = BBox { min: Point2::new(-extent, -extent), max: Point2::new(extent, extent) };
        TerrainGrid::flat(bb, 100.0, 0.0).unwrap()
    }

    fn road(a: (f64, f64), b: (f64, f64)) -> StreetNetwork {
        StreetNetwork::new(vec![vec![Point2::new(a.0, a.1), Point2::new(b.0, b.1)]]).unwrap()
    }

    #[test]
    fn straight_road_arc_length_enumeration() {
        // 100 m road, 5 m spacing: s = 0, 5, ..., 100
        let pts = sample_streets(&road((10.0, 0.0), (110.0, 0.0)), &station(25.0), 1000.0, 5.0);
        let expected: Vec<f64> = (0..=20).map(|k| 10.0 + 5.0 * k as f64).collect();
        assert_eq!(pts.len(), 21);
        for (p, x) in pts.iter().zip(expected) {
            assert!((p.x - x).abs() < 1e-9);
        }
    }

    #[test]
    fn spacing_longer_than_road_gives_endpoints() {
        let pts = sample_streets(&road((10.0, 0.0), (13.0, 4.0)), &station(25.0), 1000.0, 50.0);
        assert_eq!(pts, vec![Point2::new(10.0, 0.0), Point2::new(13.0, 4.0)]);
    }

    #[test]
    fn arc_length_continues_across_vertices() {
        let net = StreetNetwork::new(vec![vec![
            Point2::new(10.0, 0.0),
            Point2::new(13.0, 0.0),
            Point2::new(13.0, 10.0),
        ]])
        .unwrap();
        // total 13 m: s = 0, 5, 10, 13
        let pts = sample_streets(&net, &station(25.0), 1000.0, 5.0);
        let expect = [(10.0, 0.0), (13.0, 2.0), (13.0, 7.0), (13.0, 10.0)];
        assert_eq!(pts.len(), expect.len());
        for (p, (x, y)) in pts.iter().zip(expect) {
            assert!((p.x - x).abs() < 1e-9 && (p.y - y).abs() < 1e-9, "{p:?}");
        }
    }

    #[test]
    fn road_beyond_radius_is_dropped() {
        let pts = sample_streets(&road((1500.0, 0.0), (2000.0, 0.0)), &station(25.0), 1000.0, 5.0);
        assert!(pts.is_empty());
        assert!(sample_streets(&StreetNetwork::default(), &station(25.0), 1000.0, 5.0).is_empty());
    }

    #[test]
    fn open_field_is_all_los() {
        let scene = Scene::new(vec![], flat(1200.0), road((0.0, 0.0), (1000.0, 0.0)), vec![station(25.0)]).unwrap();
        let idx = SpatialIndex::build(&scene.buildings, 50.0);
        let cell = extract_cell(&scene, &idx, &scene.stations[0], &ExtractConfig::default());
        assert_eq!(cell.samples.len(), 200);
        assert!(cell.samples.iter().all(|s| s.is_los));
    }

    #[test]
    fn tall_building_blocks_and_grazing_roof_does_not() {
        let tall = Building::rect(Point2::new(40.0, -5.0), Point2::new(60.0, 5.0), Some(50.0)).unwrap();
        let scene = Scene::new(vec![tall], flat(500.0), StreetNetwork::default(), vec![station(25.0)]).unwrap();
        let idx = SpatialIndex::build(&scene.buildings, 50.0);
        let bs = &scene.stations[0];
        assert!(!trace_los(&scene, &idx, bs, Point2::new(100.0, 0.0), 0.0, 1.0));

        // Ray from 16 m at x=0 to ground at x=64: height 16 - x/4, exact in
        // binary. The slab spans x in [39.5, 48.5], so the lowest sample
        // inside it is x=48 at exactly 4 m.
        let bs16 = station(16.0);
        for (h, los) in [(4.0, true), (4.0 + 1e-9, false), (3.9, true)] {
            let slab = Building::rect(Point2::new(39.5, -5.0), Point2::new(48.5, 5.0), Some(h)).unwrap();
            let scene = Scene::new(vec![slab], flat(500.0), StreetNetwork::default(), vec![bs16.clone()]).unwrap();
            let idx = SpatialIndex::build(&scene.buildings, 50.0);
            assert_eq!(trace_los(&scene, &idx, &bs16, Point2::new(64.0, 0.0), 0.0, 1.0), los, "roof {h}");
        }
    }

    #[test]
    fn missing_height_never_blocks() {
        let b = Building::rect(Point2::new(40.0, -5.0), Point2::new(60.0, 5.0), None).unwrap();
        let scene = Scene::new(vec![b], flat(500.0), StreetNetwork::default(), vec![station(25.0)]).unwrap();
        let idx = SpatialIndex::build(&scene.buildings, 50.0);
        assert!(trace_los(&scene, &idx, &scene.stations[0], Point2::new(100.0, 0.0), 0.0, 1.0));
    }

    #[test]
    fn terrain_ridge_blocks() {
        // ridge of 30 m along x = 500 between a 10 m mast and a far receiver
        let bb = BBox { min: Point2::new(-100.0, -100.0), max: Point2::new(1100.0, 100.0) };
        let terrain = TerrainGrid::from_fn(bb, 10.0, |p| if (p.x - 500.0).abs() < 15.0 { 30.0 } else { 0.0 }).unwrap();
        let bs = station(10.0);
        let scene = Scene::new(vec![], terrain, StreetNetwork::default(), vec![bs.clone()]).unwrap();
        let idx = SpatialIndex::build(&scene.buildings, 50.0);
        assert!(!trace_los(&scene, &idx, &bs, Point2::new(1000.0, 0.0), 0.0, 1.0));
        assert!(trace_los(&scene, &idx, &bs, Point2::new(300.0, 0.0), 0.0, 1.0));
    }
}
