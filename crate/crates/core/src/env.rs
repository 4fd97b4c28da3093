//! Per-cell building statistics, reliability filtering and environment classes.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::geo::{polygon, BBox, BaseStation, Point2, Scene, SpatialIndex};

/// Macrocell environment class, ordered from least to most urbanized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EnvClass {
    RMa,
    SMa,
    UMa,
    MetMa,
}

impl EnvClass {
    pub const ALL: [EnvClass; 4] = [EnvClass::RMa, EnvClass::SMa, EnvClass::UMa, EnvClass::MetMa];

    pub fn as_str(self) -> &'static str {
        match self {
            EnvClass::RMa => "RMa",
            EnvClass::SMa => "SMa",
            EnvClass::UMa => "UMa",
            EnvClass::MetMa => "MetMa",
        }
    }
}

impl fmt::Display for EnvClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EnvClass {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "rma" => Ok(EnvClass::RMa),
            "sma" => Ok(EnvClass::SMa),
            "uma" => Ok(EnvClass::UMa),
            "metma" => Ok(EnvClass::MetMa),
            _ => Err(format!("unknown environment `{s}` (expected rma, sma, uma or metma)")),
        }
    }
}

/// Class thresholds: average building height bands and the rural coverage cut.
pub const RURAL_MAX_HEIGHT: f64 = 2.0;
pub const SUBURBAN_MAX_HEIGHT: f64 = 10.0;
pub const URBAN_MAX_HEIGHT: f64 = 25.0;
pub const RURAL_MAX_COVERAGE: f64 = 0.10;
/// Minimum share of footprints with a known height for a cell to be kept.
pub const DEFAULT_RELIABILITY_THRESHOLD: f64 = 0.90;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellStats {
    /// Mean height over footprints with a known height; 0 if there are none.
    pub avg_building_height: f64,
    /// Footprint area inside the disk over the disk area.
    pub building_coverage: f64,
    /// Footprints with a height over all footprints; 1 with no footprints.
    pub height_to_footprint_ratio: f64,
    pub n_footprints: usize,
}

/// Statistics over the buildings whose footprint meets the disk of `radius`
/// around the station. Coverage uses footprint area clipped to the disk.
pub fn cell_stats(scene: &Scene, index: &SpatialIndex, bs: &BaseStation, radius: f64) -> CellStats {
    assert!(radius > 0.0, "radius must be > 0");
    let c = bs.position;
    let query = BBox {
        min: Point2::new(c.x - radius, c.y - radius),
        max: Point2::new(c.x + radius, c.y + radius),
    };
    let mut n = 0usize;
    let mut n_with_height = 0usize;
    let mut height_sum = 0.0;
    let mut area = 0.0;
    for i in index.bbox_candidates(query) {
        let b = &scene.buildings[i];
        if polygon::distance_to_polygon(b.footprint(), c) > radius {
            continue;
        }
        n += 1;
        area += polygon::disk_intersection_area(b.footprint(), c, radius);
        if let Some(h) = b.height() {
            n_with_height += 1;
            height_sum += h;
        }
    }
    let disk = std::f64::consts::PI * radius * radius;
    CellStats {
        avg_building_height: if n_with_height > 0 { height_sum / n_with_height as f64 } else { 0.0 },
        building_coverage: (area / disk).clamp(0.0, 1.0),
        height_to_footprint_ratio: if n > 0 { n_with_height as f64 / n as f64 } else { 1.0 },
        n_footprints: n,
    }
}

/// Height bands are lower-inclusive; any cell below 10% coverage is rural.
pub fn classify(stats: &CellStats) -> EnvClass {
    let h = stats.avg_building_height;
    if stats.building_coverage < RURAL_MAX_COVERAGE {
        // covers the "0-2 m and < 10%" row as well as the coverage override
        EnvClass::RMa
    } else if h < SUBURBAN_MAX_HEIGHT {
        EnvClass::SMa
    } else if h < URBAN_MAX_HEIGHT {
        EnvClass::UMa
    } else {
        EnvClass::MetMa
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Partition<T> {
    pub kept: Vec<T>,
    pub dropped: Vec<T>,
}

impl<T> Partition<T> {
    pub fn counts(&self) -> (usize, usize) {
        (self.kept.len(), self.dropped.len())
    }
}

/// Keeps cells whose height-to-footprint ratio is at least `threshold`.
pub fn filter_reliable<T>(cells: Vec<(CellStats, T)>, threshold: f64) -> Partition<(CellStats, T)> {
    assert!((0.0..=1.0).contains(&threshold), "threshold must be in [0, 1]");
    let (kept, dropped) = cells
        .into_iter()
        .partition(|(s, _)| s.height_to_footprint_ratio >= threshold);
    Partition { kept, dropped }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::{Building, StreetNetwork, TerrainGrid};
    use proptest::prelude::*;

    fn stats(h: f64, cov: f64, ratio: f64) -> CellStats {
        CellStats {
            avg_building_height: h,
            building_coverage: cov,
            height_to_footprint_ratio: ratio,
            n_footprints: 10,
        }
    }

    fn scene_with(buildings: Vec<Building>) -> (Scene, SpatialIndex) {
        let bb = BBox { min: Point2::new(-1100.0, -1100.0), max: Point2::new(1100.0, 1100.0) };
        let bs = BaseStation::new("c", Point2::new(0.0, 0.0), 25.0, 0.0).unwrap();
        let scene = Scene::new(buildings, TerrainGrid::flat(bb, 100.0, 0.0).unwrap(), StreetNetwork::default(), vec![bs]).unwrap();
        let idx = SpatialIndex::build(&scene.buildings, 50.0);
        (scene, idx)
    }

    #[test]
    fn empty_cell_stats() {
        let (scene, idx) = scene_with(vec![]);
        let s = cell_stats(&scene, &idx, &scene.stations[0], 1000.0);
        assert_eq!(s.building_coverage, 0.0);
        assert_eq!(s.avg_building_height, 0.0);
        assert_eq!(s.height_to_footprint_ratio, 1.0);
    }

    #[test]
    fn one_hectare_building() {
        let b = Building::rect(Point2::new(100.0, 100.0), Point2::new(200.0, 200.0), Some(30.0)).unwrap();
        let (scene, idx) = scene_with(vec![b]);
        let s = cell_stats(&scene, &idx, &scene.stations[0], 1000.0);
        let expected = 1e4 / (std::f64::consts::PI * 1e6);
        assert!((s.building_coverage - expected).abs() < 1e-12);
        assert!((s.building_coverage - 0.00318).abs() < 1e-5);
        assert_eq!(s.avg_building_height, 30.0);
    }

    #[test]
    fn ratio_counts_heights() {
        let bs: Vec<Building> = (0..10)
            .map(|i| {
                let x = i as f64 * 20.0;
                Building::rect(Point2::new(x, 0.0), Point2::new(x + 10.0, 10.0), (i < 9).then_some(5.0)).unwrap()
            })
            .collect();
        let (scene, idx) = scene_with(bs);
        let s = cell_stats(&scene, &idx, &scene.stations[0], 1000.0);
        assert!((s.height_to_footprint_ratio - 0.9).abs() < 1e-12);
    }

    #[test]
    fn straddling_footprint_is_clipped() {
        // half of a 20x20 square lies outside the 1 km disk (near x = 1000)
        let b = Building::rect(Point2::new(990.0, -10.0), Point2::new(1010.0, 10.0), Some(10.0)).unwrap();
        let far = Building::rect(Point2::new(1050.0, 0.0), Point2::new(1060.0, 10.0), Some(99.0)).unwrap();
        let (scene, idx) = scene_with(vec![b, far]);
        let s = cell_stats(&scene, &idx, &scene.stations[0], 1000.0);
        let disk = std::f64::consts::PI * 1e6;
        assert!((s.building_coverage * disk - 200.0).abs() < 1.0, "{}", s.building_coverage * disk);
        assert_eq!(s.n_footprints, 1);
        assert_eq!(s.avg_building_height, 10.0);
    }

    #[test]
    fn table_rows() {
        assert_eq!(classify(&stats(1.0, 0.05, 1.0)), EnvClass::RMa);
        assert_eq!(classify(&stats(15.0, 0.20, 1.0)), EnvClass::UMa);
        assert_eq!(classify(&stats(30.0, 0.08, 1.0)), EnvClass::RMa);
        assert_eq!(classify(&stats(5.0, 0.20, 1.0)), EnvClass::SMa);
        assert_eq!(classify(&stats(30.0, 0.20, 1.0)), EnvClass::MetMa);
    }

    #[test]
    fn boundaries_are_lower_inclusive() {
        assert_eq!(classify(&stats(10.0, 0.2, 1.0)), EnvClass::UMa);
        assert_eq!(classify(&stats(25.0, 0.2, 1.0)), EnvClass::MetMa);
        assert_eq!(classify(&stats(2.0, 0.2, 1.0)), EnvClass::SMa);
        assert_eq!(classify(&stats(1.0, 0.10, 1.0)), EnvClass::SMa);
    }

    #[test]
    fn filter_threshold() {
        let cells = vec![(stats(5.0, 0.2, 0.95), "a"), (stats(5.0, 0.2, 0.89), "b"), (stats(5.0, 0.2, 0.85), "c")];
        let p90 = filter_reliable(cells.clone(), 0.90);
        assert_eq!(p90.kept.iter().map(|c| c.1).collect::<Vec<_>>(), vec!["a"]);
        assert_eq!(p90.counts(), (1, 2));
        let p80 = filter_reliable(cells, 0.80);
        assert!(p80.kept.len() > p90.kept.len());
    }

    proptest! {
        #[test]
        fn classification_monotone_in_height(h1 in 0.0f64..100.0, dh in 0.0f64..50.0, cov in 0.10f64..1.0) {
            let a = classify(&stats(h1, cov, 1.0));
            let b = classify(&stats(h1 + dh, cov, 1.0));
            prop_assert!(b >= a);
        }

        #[test]
        fn filter_nested(ratios in proptest::collection::vec(0.0f64..=1.0, 0..40), t1 in 0.0f64..=1.0, dt in 0.0f64..=1.0) {
            let t2 = (t1 + dt).min(1.0);
            let cells: Vec<_> = ratios.iter().enumerate().map(|(i, &r)| (stats(5.0, 0.2, r), i)).collect();
            let k1: Vec<usize> = filter_reliable(cells.clone(), t1).kept.into_iter().map(|c| c.1).collect();
            let k2: Vec<usize> = filter_reliable(cells, t2).kept.into_iter().map(|c| c.1).collect();
            prop_assert!(k2.iter().all(|i| k1.contains(i)));
        }
    }
}
