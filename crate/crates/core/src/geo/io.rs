//! Readers and writers for the scene file formats.
//!
//! * buildings: JSON object `{"units": "meters" | "lonlat", "origin": [lon, lat]?,
//!   "features": [{"polygon": [[x, y], ...], "height": h?}, ...]}`. With
//!   `"lonlat"` units the vertices are projected to local meters with an
//!   equirectangular projection around `origin`.
//! * terrain: five `key value` header lines (`origin_x`, `origin_y`,
//!   `cell_size`, `ncols`, `nrows`) followed by `ncols * nrows` whitespace
//!   separated elevations, row-major starting at the origin row.
//! * streets: JSON array of polylines, each an array of `[x, y]` pairs.
//! * stations: CSV with header `id,x,y,height_agl,ground_elevation`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{BaseStation, Building, Point2, Scene, StreetNetwork, TerrainGrid};
use crate::error::{Error, Result};

/// Mean Earth radius used by the local projection.
pub const EARTH_RADIUS_M: f64 = 6_371_008.8;

pub const BUILDINGS_FILE: &str = "buildings.json";
pub const TERRAIN_FILE: &str = "terrain.txt";
pub const STREETS_FILE: &str = "streets.json";
pub const STATIONS_FILE: &str = "stations.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenePaths {
    pub buildings: PathBuf,
    pub terrain: PathBuf,
    pub streets: PathBuf,
    pub stations: PathBuf,
}

impl ScenePaths {
    /// The conventional file names inside `dir`.
    pub fn in_dir(dir: impl AsRef<Path>) -> Self {
        let dir = dir.as_ref();
        ScenePaths {
            buildings: dir.join(BUILDINGS_FILE),
            terrain: dir.join(TERRAIN_FILE),
            streets: dir.join(STREETS_FILE),
            stations: dir.join(STATIONS_FILE),
        }
    }
}

/// Local equirectangular projection around a reference longitude/latitude.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalProjection {
    lon0: f64,
    lat0: f64,
    cos_lat0: f64,
}

impl LocalProjection {
    pub fn new(lon0: f64, lat0: f64) -> Self {
        LocalProjection {
            lon0,
            lat0,
            cos_lat0: lat0.to_radians().cos(),
        }
    }

    pub fn project(&self, lon: f64, lat: f64) -> Point2 {
        Point2::new(
            EARTH_RADIUS_M * (lon - self.lon0).to_radians() * self.cos_lat0,
            EARTH_RADIUS_M * (lat - self.lat0).to_radians(),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Units {
    #[default]
    Meters,
    Lonlat,
}

#[derive(Debug, Serialize, Deserialize)]
struct BuildingsDoc {
    #[serde(default)]
    units: Units,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    origin: Option<[f64; 2]>,
    features: Vec<BuildingFeature>,
}

#[derive(Debug, Serialize, Deserialize)]
struct BuildingFeature {
    polygon: Vec<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    height: Option<f64>,
}

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn json_error(source_name: &str, e: serde_json::Error) -> Error {
    Error::parse(source_name, Some(e.line()), format!("{e}"))
}

pub fn parse_buildings(text: &str, source_name: &str) -> Result<Vec<Building>> {
    let doc: BuildingsDoc = serde_json::from_str(text).map_err(|e| json_error(source_name, e))?;
    let projection = match doc.units {
        Units::Meters => None,
        Units::Lonlat => {
            let [lon, lat] = doc.origin.ok_or_else(|| {
                Error::parse(source_name, None, "lonlat units require an \"origin\": [lon, lat] header")
            })?;
            if !(lon.is_finite() && lat.is_finite() && lat.abs() < 90.0) {
                return Err(Error::parse(source_name, None, "invalid projection origin"));
            }
            Some(LocalProjection::new(lon, lat))
        }
    };
    doc.features
        .into_iter()
        .enumerate()
        .map(|(i, f)| {
            let ring = f
                .polygon
                .iter()
                .map(|&[x, y]| match projection {
                    Some(p) => p.project(x, y),
                    None => Point2::new(x, y),
                })
                .collect();
            Building::new(ring, f.height).map_err(|message| Error::Geometry {
                source_name: source_name.to_string(),
                record: i + 1,
                message,
            })
        })
        .collect()
}

pub fn write_buildings(buildings: &[Building]) -> String {
    let doc = BuildingsDoc {
        units: Units::Meters,
        origin: None,
        features: buildings
            .iter()
            .map(|b| BuildingFeature {
                polygon: b.footprint().iter().map(|p| [p.x, p.y]).collect(),
                height: b.height(),
            })
            .collect(),
    };
    serde_json::to_string(&doc).expect("buildings serialize")
}

pub fn parse_terrain(text: &str, source_name: &str) -> Result<TerrainGrid> {
    let mut lines = text.lines().enumerate();
    let mut header = [0.0f64; 5];
    const KEYS: [&str; 5] = ["origin_x", "origin_y", "cell_size", "ncols", "nrows"];
    for (k, key) in KEYS.iter().enumerate() {
        let (lineno, line) = lines
            .by_ref()
            .find(|(_, l)| !l.trim().is_empty())
            .ok_or_else(|| Error::parse(source_name, None, format!("missing header `{key}`")))?;
        let mut parts = line.split_whitespace();
        let (Some(name), Some(value), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(Error::parse(source_name, Some(lineno + 1), format!("expected `{key} <value>`")));
        };
        if name != *key {
            return Err(Error::parse(source_name, Some(lineno + 1), format!("expected header `{key}`, found `{name}`")));
        }
        header[k] = value
            .parse()
            .map_err(|_| Error::parse(source_name, Some(lineno + 1), format!("invalid number `{value}`")))?;
    }
    let as_count = |v: f64, key: &str| -> Result<usize> {
        if v.fract() != 0.0 || !(1.0..=1e8).contains(&v) {
            return Err(Error::parse(source_name, None, format!("`{key}` must be a positive integer, got {v}")));
        }
        Ok(v as usize)
    };
    let ncols = as_count(header[3], "ncols")?;
    let nrows = as_count(header[4], "nrows")?;
    let expected = ncols
        .checked_mul(nrows)
        .filter(|&n| n <= 100_000_000)
        .ok_or_else(|| Error::parse(source_name, None, "terrain grid too large"))?;
    let mut values = Vec::with_capacity(expected.min(1 << 20));
    for (lineno, line) in lines {
        for tok in line.split_whitespace() {
            let v: f64 = tok
                .parse()
                .map_err(|_| Error::parse(source_name, Some(lineno + 1), format!("invalid elevation `{tok}`")))?;
            if !v.is_finite() {
                return Err(Error::parse(source_name, Some(lineno + 1), "elevation is not finite"));
            }
            values.push(v);
            if values.len() > expected {
                return Err(Error::parse(source_name, Some(lineno + 1), format!("more than {expected} elevation values")));
            }
        }
    }
    if values.len() != expected {
        return Err(Error::parse(
            source_name,
            None,
            format!("expected {expected} elevation values, found {}", values.len()),
        ));
    }
    TerrainGrid::new(Point2::new(header[0], header[1]), header[2], ncols, nrows, values)
        .map_err(|e| Error::parse(source_name, None, e.to_string()))
}

pub fn write_terrain(grid: &TerrainGrid) -> String {
    let mut out = String::new();
    let o = grid.origin();
    let _ = writeln!(out, "origin_x {}", o.x);
    let _ = writeln!(out, "origin_y {}", o.y);
    let _ = writeln!(out, "cell_size {}", grid.cell_size());
    let _ = writeln!(out, "ncols {}", grid.ncols());
    let _ = writeln!(out, "nrows {}", grid.nrows());
    for row in grid.elevations().chunks(grid.ncols()) {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

pub fn parse_streets(text: &str, source_name: &str) -> Result<StreetNetwork> {
    let raw: Vec<Vec<[f64; 2]>> = serde_json::from_str(text).map_err(|e| json_error(source_name, e))?;
    let lines = raw
        .into_iter()
        .map(|l| l.into_iter().map(|[x, y]| Point2::new(x, y)).collect())
        .collect();
    StreetNetwork::new(lines).map_err(|e| Error::parse(source_name, None, e.to_string()))
}

pub fn write_streets(streets: &StreetNetwork) -> String {
    let raw: Vec<Vec<[f64; 2]>> = streets
        .polylines()
        .iter()
        .map(|l| l.iter().map(|p| [p.x, p.y]).collect())
        .collect();
    serde_json::to_string(&raw).expect("streets serialize")
}

#[derive(Debug, Serialize, Deserialize)]
struct StationRecord {
    id: String,
    x: f64,
    y: f64,
    height_agl: f64,
    ground_elevation: f64,
}

pub fn parse_stations(text: &str, source_name: &str) -> Result<Vec<BaseStation>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let mut out = Vec::new();
    for (i, rec) in rdr.deserialize::<StationRecord>().enumerate() {
        let line = i + 2;
        let r = rec.map_err(|e| Error::parse(source_name, Some(line), e.to_string()))?;
        let bs = BaseStation::new(r.id, Point2::new(r.x, r.y), r.height_agl, r.ground_elevation)
            .map_err(|e| Error::parse(source_name, Some(line), e.to_string()))?;
        out.push(bs);
    }
    Ok(out)
}

pub fn write_stations(stations: &[BaseStation]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for s in stations {
        w.serialize(StationRecord {
            id: s.id.clone(),
            x: s.position.x,
            y: s.position.y,
            height_agl: s.height_agl,
            ground_elevation: s.ground_elevation,
        })
        .expect("station serialize");
    }
    if stations.is_empty() {
        return "id,x,y,height_agl,ground_elevation\n".to_string();
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
}

/// Reads and validates the four scene files.
pub fn load_scene(paths: &ScenePaths) -> Result<Scene> {
    let name = |p: &Path| p.display().to_string();
    let buildings = parse_buildings(&read_to_string(&paths.buildings)?, &name(&paths.buildings))?;
    let terrain = parse_terrain(&read_to_string(&paths.terrain)?, &name(&paths.terrain))?;
    let streets = parse_streets(&read_to_string(&paths.streets)?, &name(&paths.streets))?;
    let stations = parse_stations(&read_to_string(&paths.stations)?, &name(&paths.stations))?;
    Scene::new(buildings, terrain, streets, stations)
}

/// Writes `contents` to a sibling temporary file and renames it into place.
pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    // write-then-rename so readers never see a partial file
    let mut tmp_name = path.file_name().unwrap_or_default().to_os_string();
    tmp_name.push(".partial");
    let tmp = path.with_file_name(tmp_name);
    fs::write(&tmp, contents).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn write_scene(scene: &Scene, paths: &ScenePaths) -> Result<()> {
    write_file(&paths.buildings, &write_buildings(&scene.buildings))?;
    write_file(&paths.terrain, &write_terrain(&scene.terrain))?;
    write_file(&paths.streets, &write_streets(&scene.streets))?;
    write_file(&paths.stations, &write_stations(&scene.stations))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_buildings_file() {
        let b = parse_buildings(r#"{"features": []}"#, "b").unwrap();
        assert!(b.is_empty());
    }

    #[test]
    fn single_square_with_height() {
        let b = parse_buildings(
            r#"{"units": "meters", "features": [{"polygon": [[0,0],[10,0],[10,10],[0,10]], "height": 10}]}"#,
            "b",
        )
        .unwrap();
        assert_eq!(b.len(), 1);
        assert!(b[0].has_height());
        assert_eq!(b[0].height(), Some(10.0));
    }

    #[test]
    fn missing_height_key() {
        let b = parse_buildings(r#"{"features": [{"polygon": [[0,0],[10,0],[10,10]]}]}"#, "b").unwrap();
        assert!(!b[0].has_height());
        assert_eq!(b[0].height(), None);
    }

    #[test]
    fn self_intersecting_record_is_named() {
        let err = parse_buildings(
            r#"{"features": [{"polygon": [[0,0],[1,0],[1,1]]}, {"polygon": [[0,0],[1,1],[1,0],[0,1]], "height": 3}]}"#,
            "city.json",
        )
        .unwrap_err();
        match err {
            Error::Geometry { record, ref message, .. } => {
                assert_eq!(record, 2);
                assert!(message.contains("self-intersecting"));
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn lonlat_projection() {
        let b = parse_buildings(
            r#"{"units": "lonlat", "origin": [-118.25, 34.05],
                "features": [{"polygon": [[-118.25,34.05],[-118.249,34.05],[-118.249,34.051]], "height": 5}]}"#,
            "b",
        )
        .unwrap();
        let fp = b[0].footprint();
        assert!(fp[0].norm() < 1e-9);
        // 0.001 deg of latitude is about 111.2 m
        assert!((fp[2].y - 111.19).abs() < 0.05, "{}", fp[2].y);
        assert!((fp[1].x - 111.19 * 34.05f64.to_radians().cos()).abs() < 0.05);
        assert!(parse_buildings(r#"{"units": "lonlat", "features": []}"#, "b").is_err());
    }

    #[test]
    fn terrain_parse_and_errors() {
        let t = parse_terrain("origin_x 0\norigin_y 0\ncell_size 10\nncols 2\nnrows 2\n1 2\n3 4\n", "t").unwrap();
        assert_eq!(t.node(1, 1), 4.0);
        let err = parse_terrain("origin_x 0\norigin_y 0\ncell_size 10\nncols 2\nnrows 2\n1 2\n3 x\n", "t").unwrap_err();
        assert!(matches!(err, Error::Parse { record: Some(7), .. }), "{err}");
        assert!(parse_terrain("origin_x 0\norigin_y 0\ncell_size 10\nncols 2\nnrows 2\n1 2 3\n", "t").is_err());
        assert!(parse_terrain("origin_y 0\n", "t").is_err());
    }

    #[test]
    fn stations_parse() {
        let s = parse_stations("id,x,y,height_agl,ground_elevation\nA,1,2,25,100\n", "s").unwrap();
        assert_eq!(s[0].id, "A");
        assert_eq!(s[0].antenna().z, 125.0);
        let err = parse_stations("id,x,y,height_agl,ground_elevation\nA,1,2,0,100\n", "s").unwrap_err();
        assert!(matches!(err, Error::Parse { record: Some(2), .. }));
    }

    #[test]
    fn streets_need_two_vertices() {
        assert!(parse_streets("[[[0,0],[1,1]]]", "s").is_ok());
        assert!(parse_streets("[[[0,0]]]", "s").is_err());
    }
}
