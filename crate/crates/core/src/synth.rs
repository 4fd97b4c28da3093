//! Synthetic cities: a Manhattan street grid over square tiles, one base
//! station at the centre of each tile, and rectangular buildings on the
//! lots between streets. Each tile takes its coverage, height law and
//! missing-height share from a profile, so a single scene can hold cells of
//! every environment class.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{BBox, BaseStation, Building, Point2, Scene, StreetNetwork, TerrainGrid};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum HeightDistribution {
    Constant { height: f64 },
    LogNormal { median: f64, sigma: f64 },
}

impl HeightDistribution {
    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        match *self {
            HeightDistribution::Constant { height } => height,
            HeightDistribution::LogNormal { median, sigma } => {
                let z: f64 = StandardNormal.sample(rng);
                median * (sigma * z).exp()
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            HeightDistribution::Constant { height } => height >= 0.0 && height.is_finite(),
            HeightDistribution::LogNormal { median, sigma } => median > 0.0 && sigma >= 0.0 && sigma.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid height distribution {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TerrainSpec {
    Flat { elevation: f64 },
    /// `elevation + slope_x * x + slope_y * y`.
    Plane { elevation: f64, slope_x: f64, slope_y: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TileProfile {
    /// Share of the tile area covered by footprints.
    pub coverage: f64,
    pub heights: HeightDistribution,
    /// Probability that a building is emitted without a height.
    pub missing_height_fraction: f64,
}

impl Default for TileProfile {
    fn default() -> Self {
        TileProfile {
            coverage: 0.3,
            heights: HeightDistribution::Constant { height: 15.0 },
            missing_height_fraction: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticCitySpec {
    /// Number of tiles, each with one base station.
    pub cells: usize,
    /// Tiles per row; 0 picks a near-square arrangement.
    pub columns: usize,
    pub tile_size: f64,
    /// Distance between parallel street centre lines.
    pub street_pitch: f64,
    pub street_width: f64,
    /// Lots per block side; a block holds `lots_per_block²` buildings.
    pub lots_per_block: usize,
    /// Assigned to tiles in order, cycling.
    pub profiles: Vec<TileProfile>,
    pub terrain: TerrainSpec,
    pub terrain_cell_size: f64,
    pub bs_height_agl: f64,
}

impl Default for SyntheticCitySpec {
    fn default() -> Self {
        SyntheticCitySpec {
            cells: 1,
            columns: 0,
            tile_size: 2200.0,
            street_pitch: 100.0,
            street_width: 20.0,
            lots_per_block: 2,
            profiles: vec![TileProfile::default()],
            terrain: TerrainSpec::Flat { elevation: 0.0 },
            terrain_cell_size: 50.0,
            bs_height_agl: 25.0,
        }
    }
}

impl SyntheticCitySpec {
    /// Compact multi-cell corpus cycling through rural, suburban, urban and
    /// metropolitan profiles plus an urban profile with 30% of heights
    /// missing. Tiles are 400 m, so extraction radii up to 200 m keep cells
    /// disjoint.
    pub fn four_environment_corpus(cells: usize) -> Self {
        let lognormal = |median| HeightDistribution::LogNormal { median, sigma: 0.35 };
        let profile = |coverage, median, missing| TileProfile { coverage, heights: lognormal(median), missing_height_fraction: missing };
        SyntheticCitySpec {
            cells,
            columns: 0,
            tile_size: 400.0,
            street_pitch: 50.0,
            street_width: 12.0,
            lots_per_block: 1,
            profiles: vec![
                profile(0.05, 5.0, 0.0),
                profile(0.25, 7.0, 0.0),
                profile(0.30, 16.0, 0.0),
                profile(0.35, 45.0, 0.0),
                profile(0.30, 16.0, 0.3),
            ],
            terrain: TerrainSpec::Flat { elevation: 0.0 },
            terrain_cell_size: 50.0,
            bs_height_agl: 25.0,
        }
    }

    fn columns(&self) -> usize {
        if self.columns > 0 {
            self.columns
        } else {
            (self.cells as f64).sqrt().ceil() as usize
        }
    }

    fn rows(&self) -> usize {
        self.cells.div_ceil(self.columns())
    }

    /// Side of the building placed on each lot for a given coverage.
    fn building_side(&self, coverage: f64) -> f64 {
        self.street_pitch * coverage.sqrt() / self.lots_per_block as f64
    }

    fn lot_side(&self) -> f64 {
        (self.street_pitch - self.street_width) / self.lots_per_block as f64
    }

    pub fn from_toml(text: &str, source_name: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::toml(source_name, text, e))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.cells == 0 {
            return bad("at least one cell is required".into());
        }
        if !(self.street_pitch > 0.0 && self.tile_size > 0.0 && self.terrain_cell_size > 0.0) {
            return bad("street pitch, tile size and terrain cell size must be > 0".into());
        }
        if !(self.street_width >= 0.0 && self.street_width < self.street_pitch) {
            return bad(format!("street width {} must be in [0, pitch)", self.street_width));
        }
        if self.lots_per_block == 0 {
            return bad("lots_per_block must be >= 1".into());
        }
        if !(self.bs_height_agl > 0.0) {
            return bad("BS height must be > 0".into());
        }
        if self.profiles.is_empty() {
            return bad("at least one tile profile is required".into());
        }
        for (i, p) in self.profiles.iter().enumerate() {
            if !(0.0..1.0).contains(&p.coverage) {
                return bad(format!("profile {i}: coverage {} must be in [0, 1)", p.coverage));
            }
            if !(0.0..=1.0).contains(&p.missing_height_fraction) {
                return bad(format!("profile {i}: missing_height_fraction must be in [0, 1]"));
            }
            p.heights.validate()?;
            // buildings must fit on their lots with a small gap
            if self.building_side(p.coverage) > self.lot_side() - 1.0 {
                let max = ((self.lot_side() - 1.0).max(0.0) * self.lots_per_block as f64 / self.street_pitch).powi(2);
                return bad(format!(
                    "profile {i}: coverage {} is infeasible for this grid (at most {max:.3})",
                    p.coverage
                ));
            }
        }
        Ok(())
    }

    pub fn extent(&self) -> BBox {
        BBox {
            min: Point2::new(0.0, 0.0),
            max: Point2::new(self.columns() as f64 * self.tile_size, self.rows() as f64 * self.tile_size),
        }
    }

    fn tile_of(&self, p: Point2) -> Option<usize> {
        let (c, r) = ((p.x / self.tile_size).floor(), (p.y / self.tile_size).floor());
        if c < 0.0 || r < 0.0 {
            return None;
        }
        let t = r as usize * self.columns() + c as usize;
        (c < self.columns() as f64 && t < self.cells).then_some(t)
    }
}

/// Station ids are zero-padded so they sort in tile order.
pub fn station_id(tile: usize, cells: usize) -> String {
    let width = cells.saturating_sub(1).to_string().len().max(3);
    format!("c{tile:0width$}")
}

/// Builds the scene deterministically from `seed`.
pub fn generate_city(spec: &SyntheticCitySpec, seed: u64) -> Result<Scene> {
    spec.validate()?;
    let ext = spec.extent();
    let pitch = spec.street_pitch;
    let half = spec.street_width / 2.0;

    let n_x = (ext.max.x / pitch).floor() as usize;
    let n_y = (ext.max.y / pitch).floor() as usize;
    let mut lines = Vec::with_capacity(n_x + n_y + 2);
    for i in 0..=n_x {
        let x = i as f64 * pitch;
        lines.push(vec![Point2::new(x, ext.min.y), Point2::new(x, ext.max.y)]);
    }
    for j in 0..=n_y {
        let y = j as f64 * pitch;
        lines.push(vec![Point2::new(ext.min.x, y), Point2::new(ext.max.x, y)]);
    }
    let streets = StreetNetwork::new(lines)?;

    let m = spec.lots_per_block;
    let lot = spec.lot_side();
    let mut buildings = Vec::new();
    for bj in 0..n_y {
        for bi in 0..n_x {
            let x0 = bi as f64 * pitch + half;
            let y0 = bj as f64 * pitch + half;
            let centre = Point2::new(x0 + (pitch - 2.0 * half) / 2.0, y0 + (pitch - 2.0 * half) / 2.0);
            let Some(tile) = spec.tile_of(centre) else { continue };
            let profile = &spec.profiles[tile % spec.profiles.len()];
            if profile.coverage == 0.0 {
                continue;
            }
            let side = spec.building_side(profile.coverage);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(((bj * n_x + bi) as u64) << 1);
            for lj in 0..m {
                for li in 0..m {
                    let slack = (lot - side) / 2.0;
                    let jx = rng.random_range(-0.5..=0.5) * slack;
                    let jy = rng.random_range(-0.5..=0.5) * slack;
                    let cx = x0 + (li as f64 + 0.5) * lot + jx;
                    let cy = y0 + (lj as f64 + 0.5) * lot + jy;
                    let h = profile.heights.sample(&mut rng);
                    let known = rng.random::<f64>() >= profile.missing_height_fraction;
                    let b = Building::rect(
                        Point2::new(cx - side / 2.0, cy - side / 2.0),
                        Point2::new(cx + side / 2.0, cy + side / 2.0),
                        known.then_some(h),
                    )
                    .map_err(|e| Error::Config(format!("generated building: {e}")))?;
                    buildings.push(b);
                }
            }
        }
    }

    let terrain = match spec.terrain {
        TerrainSpec::Flat { elevation } => TerrainGrid::flat(ext, spec.terrain_cell_size, elevation)?,
        TerrainSpec::Plane { elevation, slope_x, slope_y } => {
            TerrainGrid::from_fn(ext, spec.terrain_cell_size, |p| elevation + slope_x * p.x + slope_y * p.y)?
        }
    };

    let mut stations = Vec::with_capacity(spec.cells);
    for t in 0..spec.cells {
        let (c, r) = (t % spec.columns(), t / spec.columns());
        // tile centres fall on street intersections when the tile is a multiple of the pitch
        let p = Point2::new((c as f64 + 0.5) * spec.tile_size, (r as f64 + 0.5) * spec.tile_size);
        stations.push(BaseStation::new(station_id(t, spec.cells), p, spec.bs_height_agl, terrain.elevation(p))?);
    }
    Scene::new(buildings, terrain, streets, stations)
}

/// A straight street leaving the station along +x, crossed by one slab of
/// equal-height buildings whose far face sits at `far_edge`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlabRowSpec {
    pub bs_height: f64,
    pub building_height: f64,
    /// Distance from the station to the slab face farther from it.
    pub far_edge: f64,
    pub thickness: f64,
    pub street_length: f64,
}

impl SlabRowSpec {
    /// End of the shadow cast on the ground behind the slab.
    pub fn shadow_end(&self) -> f64 {
        self.bs_height * self.far_edge / (self.bs_height - self.building_height)
    }
}

pub fn slab_row_city(spec: &SlabRowSpec) -> Result<Scene> {
    if !(spec.bs_height > spec.building_height && spec.building_height > 0.0) {
        return Err(Error::Config("need bs_height > building_height > 0".into()));
    }
    if !(spec.thickness > 0.0 && spec.far_edge > spec.thickness && spec.street_length > spec.far_edge) {
        return Err(Error::Config("need 0 < thickness < far_edge < street_length".into()));
    }
    let near = spec.far_edge - spec.thickness;
    let slab = Building::rect(
        Point2::new(near, -200.0),
        Point2::new(spec.far_edge, 200.0),
        Some(spec.building_height),
    )
    .map_err(Error::Config)?;
    let ext = BBox {
        min: Point2::new(-10.0, -210.0),
        max: Point2::new(spec.street_length + 10.0, 210.0),
    };
    let streets = StreetNetwork::new(vec![vec![Point2::new(0.0, 0.0), Point2::new(spec.street_length, 0.0)]])?;
    let bs = BaseStation::new("slab", Point2::new(0.0, 0.0), spec.bs_height, 0.0)?;
    Scene::new(vec![slab], TerrainGrid::flat(ext, 50.0, 0.0)?, streets, vec![bs])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_coverage_is_open_field() {
        let spec = SyntheticCitySpec {
            profiles: vec![TileProfile { coverage: 0.0, ..Default::default() }],
            ..Default::default()
        };
        let s = generate_city(&spec, 1).unwrap();
        assert!(s.buildings.is_empty());
        assert_eq!(s.stations.len(), 1);
        assert!(!s.streets.is_empty());
    }

    #[test]
    fn coverage_matches_profile() {
        let spec = SyntheticCitySpec::default();
        let s = generate_city(&spec, 1).unwrap();
        let area: f64 = s.buildings.iter().map(|b| b.area()).sum();
        let ext = spec.extent();
        // whole blocks only: the partial strip at the far edge has no buildings
        let blocks = ((ext.max.x / spec.street_pitch).floor() * spec.street_pitch).powi(2);
        assert!((area / blocks - 0.3).abs() < 1e-9, "{}", area / blocks);
    }

    #[test]
    fn infeasible_coverage() {
        let spec = SyntheticCitySpec {
            profiles: vec![TileProfile { coverage: 0.7, ..Default::default() }],
            ..Default::default()
        };
        assert!(matches!(generate_city(&spec, 1), Err(Error::Config(_))));
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        let spec = SyntheticCitySpec {
            profiles: vec![TileProfile {
                heights: HeightDistribution::LogNormal { median: 12.0, sigma: 0.4 },
                missing_height_fraction: 0.2,
                ..Default::default()
            }],
            ..Default::default()
        };
        let a = generate_city(&spec, 5).unwrap();
        let b = generate_city(&spec, 5).unwrap();
        let c = generate_city(&spec, 6).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.buildings, c.buildings);
        let missing = a.buildings.iter().filter(|b| !b.has_height()).count() as f64 / a.buildings.len() as f64;
        assert!((missing - 0.2).abs() < 0.05, "{missing}");
    }

    #[test]
    fn tiles_and_profiles() {
        let spec = SyntheticCitySpec {
            cells: 5,
            tile_size: 400.0,
            street_pitch: 50.0,
            street_width: 10.0,
            lots_per_block: 1,
            profiles: vec![
                TileProfile { coverage: 0.05, ..Default::default() },
                TileProfile { coverage: 0.3, heights: HeightDistribution::Constant { height: 40.0 }, ..Default::default() },
            ],
            terrain: TerrainSpec::Plane { elevation: 10.0, slope_x: 0.01, slope_y: 0.0 },
            ..Default::default()
        };
        let s = generate_city(&spec, 2).unwrap();
        assert_eq!(s.stations.len(), 5);
        assert_eq!(s.stations[0].id, "c000");
        assert_eq!(s.stations[4].position, Point2::new(600.0, 600.0));
        assert!((s.stations[1].ground_elevation - 16.0).abs() < 1e-9);
        // the sixth tile of the 3x2 arrangement is unused
        assert!(s.buildings.iter().all(|b| spec.tile_of(b.centroid()).is_some()));
    }

    #[test]
    fn slab_shadow_length() {
        let spec = SlabRowSpec { bs_height: 30.0, building_height: 10.0, far_edge: 100.0, thickness: 10.0, street_length: 400.0 };
        assert_eq!(spec.shadow_end(), 150.0);
        let s = slab_row_city(&spec).unwrap();
        assert_eq!(s.buildings.len(), 1);
    }
}
