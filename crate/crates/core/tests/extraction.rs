use loskit::extract::{sample_streets, trace_los_brute_force};
use loskit::geo::io::{load_scene, write_scene, ScenePaths};
use loskit::geo::{polygon, Building, Point2, SpatialIndex};
use loskit::synth::{slab_row_city, HeightDistribution, SlabRowSpec, TerrainSpec, TileProfile};
use loskit::{extract_cell, generate_city, trace_los, ExtractConfig, SyntheticCitySpec};
use proptest::prelude::*;

fn rect() -> impl Strategy<Value = Building> {
    (-500.0..500.0f64, -500.0..500.0f64, 1.0..60.0f64, 1.0..60.0f64, 1.0..40.0f64)
        .prop_map(|(x, y, w, h, z)| Building::rect(Point2::new(x, y), Point2::new(x + w, y + h), Some(z)).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn index_returns_a_superset(
        buildings in prop::collection::vec(rect(), 0..80),
        cell in 5.0..200.0f64,
        ax in -600.0..600.0f64, ay in -600.0..600.0f64,
        bx in -600.0..600.0f64, by in -600.0..600.0f64,
    ) {
        let index = SpatialIndex::build(&buildings, cell);
        let (a, b) = (Point2::new(ax, ay), Point2::new(bx, by));
        let cands = index.segment_candidates(a, b);
        for (i, bld) in buildings.iter().enumerate() {
            if polygon::segment_intersects_polygon(bld.footprint(), a, b) {
                prop_assert!(cands.contains(&i), "building {i} missing");
            }
        }
    }
}

#[test]
fn index_agrees_with_brute_force_on_a_hilly_city() {
    let spec = SyntheticCitySpec {
        tile_size: 1200.0,
        street_pitch: 60.0,
        street_width: 14.0,
        lots_per_block: 2,
        profiles: vec![TileProfile {
            coverage: 0.3,
            heights: HeightDistribution::LogNormal { median: 14.0, sigma: 0.6 },
            missing_height_fraction: 0.1,
        }],
        terrain: TerrainSpec::Plane { elevation: 30.0, slope_x: 0.02, slope_y: -0.01 },
        terrain_cell_size: 25.0,
        ..Default::default()
    };
    let scene = generate_city(&spec, 21).unwrap();
    let index = SpatialIndex::build(&scene.buildings, 40.0);
    let bs = &scene.stations[0];
    let points = sample_streets(&scene.streets, bs, 500.0, 3.0);
    assert!(points.len() > 5000);
    let mut los = 0;
    for &p in &points {
        let fast = trace_los(&scene, &index, bs, p, 1.5, 1.0);
        assert_eq!(fast, trace_los_brute_force(&scene, bs, p, 1.5, 1.0), "{p:?}");
        los += fast as usize;
    }
    // both labels occur, so the comparison is not vacuous
    assert!(los > 100 && los < points.len() - 100, "{los} of {}", points.len());
}

#[test]
fn slab_shadow_matches_similar_triangles() {
    for (h_bs, h_b, far) in [(30.0, 10.0, 100.0), (25.0, 15.0, 60.0), (40.0, 35.0, 50.0)] {
        let spec = SlabRowSpec { bs_height: h_bs, building_height: h_b, far_edge: far, thickness: 8.0, street_length: 900.0 };
        let scene = slab_row_city(&spec).unwrap();
        let index = SpatialIndex::build(&scene.buildings, 50.0);
        let cfg = ExtractConfig { radius: 1000.0, spacing: 0.5, step: 0.1, ue_height: 0.0 };
        let cell = extract_cell(&scene, &index, &scene.stations[0], &cfg);
        let end = spec.shadow_end();
        let near = far - spec.thickness;
        let mut checked = 0;
        for s in &cell.samples {
            let x = s.point.x;
            if (x - end).abs() < 1.0 || (x - near).abs() < 1e-9 {
                continue;
            }
            let expect = x < near || x > end;
            assert_eq!(s.is_los, expect, "h_bs={h_bs} h_b={h_b} x={x} shadow end {end}");
            checked += 1;
        }
        assert!(checked > 1000);
    }
}

#[test]
fn scene_files_round_trip_exactly() {
    let spec = SyntheticCitySpec {
        profiles: vec![TileProfile {
            heights: HeightDistribution::LogNormal { median: 11.0, sigma: 0.5 },
            missing_height_fraction: 0.25,
            ..Default::default()
        }],
        terrain: TerrainSpec::Plane { elevation: 100.0, slope_x: 0.013, slope_y: 0.007 },
        ..Default::default()
    };
    let scene = generate_city(&spec, 77).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let paths = ScenePaths::in_dir(dir.path());
    write_scene(&scene, &paths).unwrap();
    let back = load_scene(&paths).unwrap();
    assert_eq!(back, scene);
    assert!(back.buildings.iter().any(|b| !b.has_height()));
}
