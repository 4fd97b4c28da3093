//! CSV formats of the intermediate artifacts exchanged between stages.
//!
//! | artifact | columns |
//! |---|---|
//! | LOS samples | `bs_id,x,y,distance_2d,is_los,ue_height` |
//! | cell classes | `bs_id,avg_height,coverage,ratio,n_footprints,class,kept` |
//! | curves | `source,r_mean,p_emp,count` |
//! | fit report | `bs_id,env,U,W,F,objective,mse_linear,nsse,is_outlier` |
//! | triplets | `U,W,F` |
//! | outage | `model,d_bs1,outage` |
//! | outage CDF | `model,d_bs1,outage,cumulative_fraction` |

use std::collections::HashMap;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::empirical::{LosBin, LosCurve};
use crate::env::{CellStats, EnvClass};
use crate::error::{Error, Result};
use crate::extract::{CellLosData, LosSample};
use crate::fit::FitResult;
use crate::geo::Point2;
use crate::model::LosModelParams;
use crate::outage::OutageResult;

fn to_csv<T: Serialize>(rows: impl IntoIterator<Item = T>, header: &[&str]) -> String {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.serialize(r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is utf-8")
}

fn from_csv<T: DeserializeOwned>(text: &str, source_name: &str, header: &[&str]) -> Result<Vec<T>> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let found = r.headers().map_err(|e| Error::parse(source_name, Some(1), e.to_string()))?;
    if found.iter().ne(header.iter().copied()) {
        return Err(Error::parse(
            source_name,
            Some(1),
            format!("expected header `{}`, found `{}`", header.join(","), found.iter().collect::<Vec<_>>().join(",")),
        ));
    }
    r.deserialize()
        .enumerate()
        .map(|(i, row)| row.map_err(|e| Error::parse(source_name, Some(i + 2), e.to_string())))
        .collect()
}

fn finite(source_name: &str, record: usize, what: &str, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::parse(source_name, Some(record), format!("{what} must be finite, got {v}")))
    }
}

const LOS_HEADER: [&str; 6] = ["bs_id", "x", "y", "distance_2d", "is_los", "ue_height"];

#[derive(Serialize, Deserialize)]
struct LosRow<'a> {
    bs_id: std::borrow::Cow<'a, str>,
    x: f64,
    y: f64,
    distance_2d: f64,
    is_los: bool,
    ue_height: f64,
}

pub fn write_los_samples(cells: &[CellLosData]) -> String {
    let rows = cells.iter().flat_map(|c| {
        c.samples.iter().map(|s| LosRow {
            bs_id: c.bs_id.as_str().into(),
            x: s.point.x,
            y: s.point.y,
            distance_2d: s.distance_2d,
            is_los: s.is_los,
            ue_height: c.ue_height,
        })
    });
    to_csv(rows, &LOS_HEADER)
}

/// Groups rows by `bs_id` in order of first appearance.
pub fn parse_los_samples(text: &str, source_name: &str) -> Result<Vec<CellLosData>> {
    let rows: Vec<LosRow> = from_csv(text, source_name, &LOS_HEADER)?;
    let mut cells: Vec<CellLosData> = Vec::new();
    let mut slot: HashMap<String, usize> = HashMap::new();
    for (i, r) in rows.into_iter().enumerate() {
        let rec = i + 2;
        let point = Point2::new(finite(source_name, rec, "x", r.x)?, finite(source_name, rec, "y", r.y)?);
        let d = finite(source_name, rec, "distance_2d", r.distance_2d)?;
        if d < 0.0 {
            return Err(Error::parse(source_name, Some(rec), "distance_2d must be >= 0"));
        }
        let ue = finite(source_name, rec, "ue_height", r.ue_height)?;
        let k = *slot.entry(r.bs_id.to_string()).or_insert_with(|| {
            cells.push(CellLosData { bs_id: r.bs_id.to_string(), samples: Vec::new(), ue_height: ue });
            cells.len() - 1
        });
        if cells[k].ue_height != ue {
            return Err(Error::parse(source_name, Some(rec), format!("ue_height differs within cell {}", r.bs_id)));
        }
        cells[k].samples.push(LosSample { point, distance_2d: d, is_los: r.is_los });
    }
    Ok(cells)
}

/// One row of the classification artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellClass {
    pub bs_id: String,
    pub stats: CellStats,
    pub env: EnvClass,
    /// Passed the reliability filter.
    pub kept: bool,
}

const CLASS_HEADER: [&str; 7] = ["bs_id", "avg_height", "coverage", "ratio", "n_footprints", "class", "kept"];

#[derive(Serialize, Deserialize)]
struct ClassRow {
    bs_id: String,
    avg_height: f64,
    coverage: f64,
    ratio: f64,
    n_footprints: usize,
    class: EnvClass,
    kept: bool,
}

pub fn write_cell_classes(cells: &[CellClass]) -> String {
    let rows = cells.iter().map(|c| ClassRow {
        bs_id: c.bs_id.clone(),
        avg_height: c.stats.avg_building_height,
        coverage: c.stats.building_coverage,
        ratio: c.stats.height_to_footprint_ratio,
        n_footprints: c.stats.n_footprints,
        class: c.env,
        kept: c.kept,
    });
    to_csv(rows, &CLASS_HEADER)
}

pub fn parse_cell_classes(text: &str, source_name: &str) -> Result<Vec<CellClass>> {
    let rows: Vec<ClassRow> = from_csv(text, source_name, &CLASS_HEADER)?;
    rows.into_iter()
        .enumerate()
        .map(|(i, r)| {
            let rec = i + 2;
            if !(r.avg_height >= 0.0 && r.avg_height.is_finite()) {
                return Err(Error::parse(source_name, Some(rec), "avg_height must be finite and >= 0"));
            }
            if !(0.0..=1.0).contains(&r.coverage) || !(0.0..=1.0).contains(&r.ratio) {
                return Err(Error::parse(source_name, Some(rec), "coverage and ratio must be in [0, 1]"));
            }
            Ok(CellClass {
                bs_id: r.bs_id,
                stats: CellStats {
                    avg_building_height: r.avg_height,
                    building_coverage: r.coverage,
                    height_to_footprint_ratio: r.ratio,
                    n_footprints: r.n_footprints,
                },
                env: r.class,
                kept: r.kept,
            })
        })
        .collect()
}

const CURVE_HEADER: [&str; 4] = ["source", "r_mean", "p_emp", "count"];

#[derive(Serialize, Deserialize)]
struct CurveRow<'a> {
    source: std::borrow::Cow<'a, str>,
    r_mean: f64,
    p_emp: f64,
    count: usize,
}

pub fn write_curves(curves: &[LosCurve]) -> String {
    let rows = curves.iter().flat_map(|c| {
        c.bins.iter().map(|b| CurveRow { source: c.source.as_str().into(), r_mean: b.r_mean, p_emp: b.p_emp, count: b.count })
    });
    to_csv(rows, &CURVE_HEADER)
}

/// Groups rows by `source` in order of first appearance.
pub fn parse_curves(text: &str, source_name: &str) -> Result<Vec<LosCurve>> {
    let rows: Vec<CurveRow> = from_csv(text, source_name, &CURVE_HEADER)?;
    let mut curves: Vec<LosCurve> = Vec::new();
    let mut slot: HashMap<String, usize> = HashMap::new();
    for (i, r) in rows.into_iter().enumerate() {
        let rec = i + 2;
        if !(r.r_mean > 0.0 && r.r_mean.is_finite()) {
            return Err(Error::parse(source_name, Some(rec), "r_mean must be finite and > 0"));
        }
        if !(0.0..=1.0).contains(&r.p_emp) {
            return Err(Error::parse(source_name, Some(rec), "p_emp must be in [0, 1]"));
        }
        if r.count == 0 {
            return Err(Error::parse(source_name, Some(rec), "count must be > 0"));
        }
        let k = *slot.entry(r.source.to_string()).or_insert_with(|| {
            curves.push(LosCurve { source: r.source.to_string(), bins: Vec::new() });
            curves.len() - 1
        });
        curves[k].bins.push(LosBin { r_mean: r.r_mean, p_emp: r.p_emp, count: r.count });
    }
    Ok(curves)
}

/// One row of the fit report. `env` is absent when the cell was not classified.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFit {
    pub bs_id: String,
    pub env: Option<EnvClass>,
    pub result: FitResult,
}

const FIT_HEADER: [&str; 9] = ["bs_id", "env", "U", "W", "F", "objective", "mse_linear", "nsse", "is_outlier"];

#[derive(Serialize, Deserialize)]
struct FitRow {
    bs_id: String,
    env: Option<EnvClass>,
    #[serde(rename = "U")]
    u: f64,
    #[serde(rename = "W")]
    w: f64,
    #[serde(rename = "F")]
    f: f64,
    objective: f64,
    mse_linear: f64,
    nsse: f64,
    is_outlier: bool,
}

pub fn write_fits(fits: &[CellFit]) -> String {
    let rows = fits.iter().map(|c| FitRow {
        bs_id: c.bs_id.clone(),
        env: c.env,
        u: c.result.params.u,
        w: c.result.params.w,
        f: c.result.params.f,
        objective: c.result.objective,
        mse_linear: c.result.mse_linear,
        nsse: c.result.nsse,
        is_outlier: c.result.is_outlier,
    });
    to_csv(rows, &FIT_HEADER)
}

pub fn parse_fits(text: &str, source_name: &str) -> Result<Vec<CellFit>> {
    let rows: Vec<FitRow> = from_csv(text, source_name, &FIT_HEADER)?;
    rows.into_iter()
        .enumerate()
        .map(|(i, r)| {
            let params = LosModelParams::new(r.u, r.w, r.f);
            if !params.is_feasible() {
                return Err(Error::parse(source_name, Some(i + 2), format!("infeasible parameters {params:?}")));
            }
            Ok(CellFit {
                bs_id: r.bs_id,
                env: r.env,
                result: FitResult {
                    params,
                    objective: r.objective,
                    mse_linear: r.mse_linear,
                    nsse: r.nsse,
                    is_outlier: r.is_outlier,
                },
            })
        })
        .collect()
}

const TRIPLET_HEADER: [&str; 3] = ["U", "W", "F"];

pub fn write_triplets(triplets: &[LosModelParams]) -> String {
    to_csv(triplets.iter().map(|p| (p.u, p.w, p.f)), &TRIPLET_HEADER)
}

pub fn parse_triplets(text: &str, source_name: &str) -> Result<Vec<LosModelParams>> {
    let rows: Vec<(f64, f64, f64)> = from_csv(text, source_name, &TRIPLET_HEADER)?;
    rows.into_iter()
        .enumerate()
        .map(|(i, (u, w, f))| {
            let p = LosModelParams::new(u, w, f);
            if p.is_feasible() {
                Ok(p)
            } else {
                Err(Error::parse(source_name, Some(i + 2), format!("infeasible parameters {p:?}")))
            }
        })
        .collect()
}

pub fn write_outage(results: &[OutageResult]) -> String {
    let rows = results
        .iter()
        .flat_map(|r| r.outage_values.iter().map(move |&o| (r.model_tag.as_str(), r.d_bs1, o)));
    to_csv(rows, &["model", "d_bs1", "outage"])
}

pub fn write_outage_cdf(results: &[OutageResult]) -> Result<String> {
    let mut rows = Vec::new();
    for r in results {
        for (o, c) in crate::outage::outage_cdf(r)? {
            rows.push((r.model_tag.as_str(), r.d_bs1, o, c));
        }
    }
    Ok(to_csv(rows, &["model", "d_bs1", "outage", "cumulative_fraction"]))
}
