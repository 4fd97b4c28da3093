//! Two-cell downlink SIR outage simulation.
//!
//! A UE sits on the line between two base stations 1 km apart, at `d_bs1`
//! from the serving one. Each simulated parameter pair draws LOS states for
//! both links from its LOS model, adds log-normal shadowing and counts how
//! often the SIR drops below the threshold.
//!
//! Pathloss follows the 3GPP TR 38.901 UMa formulas. The UE height inside
//! the pathloss is floored at 1.5 m, the lowest height those formulas cover,
//! independently of the height used for the LOS model.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dist::EnvParamModel;
use crate::error::{Error, Result};
use crate::model::{D1D2Params, LosModelParams};
use crate::sampling::TripletSampler;

const SPEED_OF_LIGHT: f64 = 299_792_458.0;
/// Lowest UE height covered by the pathloss formulas.
pub const MIN_PATHLOSS_UE_HEIGHT: f64 = 1.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub frequency_ghz: f64,
    pub bs_height: f64,
    pub ue_height: f64,
    pub cell_radius: f64,
    pub sir_threshold_db: f64,
    pub d_bs1_values: Vec<f64>,
    pub n_param_pairs: usize,
    pub n_los_realizations: usize,
    pub sigma_los_db: f64,
    pub sigma_nlos_db: f64,
    pub rng_seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            frequency_ghz: 0.74,
            bs_height: 25.0,
            ue_height: 0.0,
            cell_radius: 500.0,
            sir_threshold_db: 0.399,
            d_bs1_values: vec![100.0, 200.0, 300.0, 400.0, 500.0],
            n_param_pairs: 1000,
            n_los_realizations: 1000,
            sigma_los_db: 4.0,
            sigma_nlos_db: 6.0,
            rng_seed: 0,
        }
    }
}

impl SimConfig {
    /// Distance between the two base stations.
    pub fn site_distance(&self) -> f64 {
        2.0 * self.cell_radius
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.frequency_ghz > 0.0 && self.bs_height > 0.0 && self.ue_height >= 0.0 && self.cell_radius > 0.0) {
            return bad("frequency, BS height and cell radius must be > 0, UE height >= 0".into());
        }
        if self.bs_height <= MIN_PATHLOSS_UE_HEIGHT.max(self.ue_height) {
            return bad(format!("BS height {} must exceed the UE height", self.bs_height));
        }
        // zero shadowing is allowed for deterministic checks
        if !(self.sigma_los_db >= 0.0 && self.sigma_nlos_db >= 0.0) {
            return bad("shadowing standard deviations must be >= 0".into());
        }
        if self.sir_threshold_db.is_nan() {
            return bad("SIR threshold is NaN".into());
        }
        if self.n_param_pairs == 0 || self.n_los_realizations == 0 {
            return bad("pair and realization counts must be >= 1".into());
        }
        if self.d_bs1_values.is_empty() {
            return bad("no UE distances given".into());
        }
        for &d in &self.d_bs1_values {
            if !(d > 0.0 && d < self.site_distance()) {
                return bad(format!("UE distance {d} must lie strictly between the two sites"));
            }
        }
        Ok(())
    }

    fn ue_effective(&self) -> f64 {
        self.ue_height.max(MIN_PATHLOSS_UE_HEIGHT)
    }

    /// LOS breakpoint distance `4 (h_BS - 1)(h_UT - 1) f / c`.
    pub fn breakpoint_distance(&self) -> f64 {
        4.0 * (self.bs_height - 1.0) * (self.ue_effective() - 1.0) * self.frequency_ghz * 1e9 / SPEED_OF_LIGHT
    }
}

/// UMa pathloss in dB at 2D distance `d_2d`.
pub fn pathloss_db(d_2d: f64, is_los: bool, config: &SimConfig) -> Result<f64> {
    if !(d_2d > 0.0) {
        return Err(Error::Domain(format!("distance {d_2d} must be > 0")));
    }
    let ue = config.ue_effective();
    let dh = config.bs_height - ue;
    let d3 = (d_2d * d_2d + dh * dh).sqrt();
    let f_term = 20.0 * config.frequency_ghz.log10();
    let bp = config.breakpoint_distance();
    let los = if d_2d <= bp {
        28.0 + 22.0 * d3.log10() + f_term
    } else {
        28.0 + 40.0 * d3.log10() + f_term - 9.0 * (bp * bp + dh * dh).log10()
    };
    if is_los {
        return Ok(los);
    }
    let nlos = 13.54 + 39.08 * d3.log10() + f_term - 0.6 * (ue - 1.5);
    Ok(los.max(nlos))
}

/// LOS model used for both links.
#[derive(Debug, Clone, PartialEq)]
pub enum LinkModel {
    /// Fresh parameter draws per link and pair.
    Ensemble(EnvParamModel),
    /// Fixed parameters, e.g. the per-environment average.
    Average(LosModelParams),
    ThreeGpp(D1D2Params),
}

impl LinkModel {
    pub fn tag(&self) -> &'static str {
        match self {
            LinkModel::Ensemble(_) => "ensemble",
            LinkModel::Average(_) => "average",
            LinkModel::ThreeGpp(_) => "3gpp",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutageResult {
    pub model_tag: String,
    pub d_bs1: f64,
    /// Outage fraction of each parameter pair.
    pub outage_values: Vec<f64>,
    pub mean_outage: f64,
}

impl OutageResult {
    /// Population variance of the per-pair outage.
    pub fn variance(&self) -> f64 {
        let n = self.outage_values.len() as f64;
        self.outage_values.iter().map(|v| (v - self.mean_outage).powi(2)).sum::<f64>() / n
    }
}

enum Source {
    Sampler(TripletSampler),
    Fixed(Box<dyn Fn(f64) -> f64 + Sync>),
}

impl Source {
    fn new(model: &LinkModel, seed: u64) -> Result<Self> {
        Ok(match model {
            LinkModel::Ensemble(m) => Source::Sampler(TripletSampler::new(m.clone(), seed)?),
            LinkModel::Average(p) => {
                let p = *p;
                Source::Fixed(Box::new(move |d| p.eval(d)))
            }
            LinkModel::ThreeGpp(b) => {
                let b = *b;
                Source::Fixed(Box::new(move |d| b.eval(d)))
            }
        })
    }

    fn p_los(&self, d: f64, rng: &mut ChaCha8Rng) -> f64 {
        match self {
            Source::Sampler(s) => s.sample_triplet_with(rng).eval(d),
            Source::Fixed(f) => f(d),
        }
    }
}

struct LinkBudget {
    pl_los: f64,
    pl_nlos: f64,
}

impl LinkBudget {
    fn at(d: f64, config: &SimConfig) -> Result<Self> {
        Ok(LinkBudget { pl_los: pathloss_db(d, true, config)?, pl_nlos: pathloss_db(d, false, config)? })
    }

    fn received(&self, los: bool, sigma_los: f64, sigma_nlos: f64, z: f64) -> f64 {
        if los {
            -self.pl_los + sigma_los * z
        } else {
            -self.pl_nlos + sigma_nlos * z
        }
    }
}

/// Stream id of a (distance, pair) work unit.
fn stream_id(distance_index: usize, pair: usize) -> u64 {
    ((distance_index as u64) << 32) | pair as u64
}

/// Per-pair outage fractions for every configured UE distance. Each pair
/// runs on its own substream of the seed, so results do not depend on the
/// number of worker threads.
pub fn simulate(model_a: &LinkModel, model_b: &LinkModel, config: &SimConfig) -> Result<Vec<OutageResult>> {
    config.validate()?;
    let src_a = Source::new(model_a, config.rng_seed)?;
    let src_b = Source::new(model_b, config.rng_seed)?;
    let tag = if model_a.tag() == model_b.tag() {
        model_a.tag().to_string()
    } else {
        format!("{}/{}", model_a.tag(), model_b.tag())
    };
    let (sl, sn) = (config.sigma_los_db, config.sigma_nlos_db);
    let mut out = Vec::with_capacity(config.d_bs1_values.len());
    for (di, &d1) in config.d_bs1_values.iter().enumerate() {
        let d2 = config.site_distance() - d1;
        let (b1, b2) = (LinkBudget::at(d1, config)?, LinkBudget::at(d2, config)?);
        let values: Vec<f64> = (0..config.n_param_pairs)
            .into_par_iter()
            .map(|pair| {
                let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
                rng.set_stream(stream_id(di, pair));
                let p1 = src_a.p_los(d1, &mut rng);
                let p2 = src_b.p_los(d2, &mut rng);
                let mut events = 0usize;
                for _ in 0..config.n_los_realizations {
                    let los1 = rng.random::<f64>() < p1;
                    let los2 = rng.random::<f64>() < p2;
                    let z1: f64 = StandardNormal.sample(&mut rng);
                    let z2: f64 = StandardNormal.sample(&mut rng);
                    let sir = b1.received(los1, sl, sn, z1) - b2.received(los2, sl, sn, z2);
                    events += (sir < config.sir_threshold_db) as usize;
                }
                events as f64 / config.n_los_realizations as f64
            })
            .collect();
        let mean_outage = values.iter().sum::<f64>() / values.len() as f64;
        out.push(OutageResult { model_tag: tag.clone(), d_bs1: d1, outage_values: values, mean_outage });
    }
    Ok(out)
}

/// Empirical CDF as sorted `(value, cumulative fraction)` pairs.
pub fn outage_cdf(result: &OutageResult) -> Result<Vec<(f64, f64)>> {
    if result.outage_values.is_empty() {
        return Err(Error::Insufficient("outage result has no values".into()));
    }
    let mut v = result.outage_values.clone();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    Ok(v.into_iter().enumerate().map(|(i, x)| (x, (i + 1) as f64 / n)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::EnvClass;

    fn quick(d: Vec<f64>) -> SimConfig {
        SimConfig { d_bs1_values: d, n_param_pairs: 50, n_los_realizations: 200, rng_seed: 4, ..Default::default() }
    }

    #[test]
    fn breakpoint_is_inside_the_cell() {
        let c = SimConfig::default();
        let bp = c.breakpoint_distance();
        assert!((bp - 4.0 * 24.0 * 0.5 * 0.74e9 / SPEED_OF_LIGHT).abs() < 1e-9);
        assert!(bp > 118.0 && bp < 119.0);
        // continuity of the two LOS segments at the breakpoint
        let below = pathloss_db(bp, true, &c).unwrap();
        let above = pathloss_db(bp * (1.0 + 1e-12), true, &c).unwrap();
        assert!((below - above).abs() < 0.05, "{below} {above}");
    }

    #[test]
    fn hand_evaluated_los() {
        let c = SimConfig::default();
        let dh = 25.0 - 1.5;
        let d2 = (100.0f64 * 100.0 - dh * dh).sqrt();
        let v = pathloss_db(d2, true, &c).unwrap();
        assert!((v - (28.0 + 44.0 + 20.0 * 0.74f64.log10())).abs() < 1e-9);
        assert!((v - 69.39).abs() < 0.01);
        assert!(pathloss_db(0.0, true, &c).is_err());
    }

    #[test]
    fn nlos_dominates_and_monotone() {
        let c = SimConfig::default();
        let mut prev = (0.0, 0.0);
        for i in 1..=1000 {
            let d = i as f64;
            let (l, n) = (pathloss_db(d, true, &c).unwrap(), pathloss_db(d, false, &c).unwrap());
            assert!(n >= l);
            assert!(l > prev.0 && n > prev.1, "{d}");
            prev = (l, n);
        }
    }

    #[test]
    fn deterministic_geometry_cases() {
        let forced = LinkModel::Average(LosModelParams::new(1000.0, 1.0, 1.0));
        // 499 m is closer but its 0.07 dB margin is under the threshold
        let mut c = quick(vec![100.0, 300.0, 450.0, 500.0, 499.0]);
        c.sigma_los_db = 0.0;
        c.sigma_nlos_db = 0.0;
        let r = simulate(&forced, &forced, &c).unwrap();
        assert_eq!(r[0].mean_outage, 0.0);
        assert_eq!(r[1].mean_outage, 0.0);
        assert_eq!(r[2].mean_outage, 0.0);
        assert_eq!(r[3].mean_outage, 1.0);
        assert_eq!(r[4].mean_outage, 1.0);
    }

    #[test]
    fn infinite_thresholds() {
        let m = LinkModel::Ensemble(EnvParamModel::published(EnvClass::UMa));
        let mut c = quick(vec![100.0, 500.0]);
        c.sir_threshold_db = f64::NEG_INFINITY;
        assert!(simulate(&m, &m, &c).unwrap().iter().all(|r| r.mean_outage == 0.0));
        c.sir_threshold_db = f64::INFINITY;
        assert!(simulate(&m, &m, &c).unwrap().iter().all(|r| r.mean_outage == 1.0));
    }

    #[test]
    fn deterministic_given_seed() {
        let m = LinkModel::Ensemble(EnvParamModel::published(EnvClass::UMa));
        let c = quick(vec![300.0]);
        assert_eq!(simulate(&m, &m, &c).unwrap(), simulate(&m, &m, &c).unwrap());
        let other = SimConfig { rng_seed: 5, ..c.clone() };
        assert_ne!(simulate(&m, &m, &c).unwrap(), simulate(&m, &m, &other).unwrap());
    }

    #[test]
    fn cdf_shape() {
        let r = OutageResult { model_tag: "x".into(), d_bs1: 1.0, outage_values: vec![0.3, 0.1, 0.3], mean_outage: 0.7 / 3.0 };
        assert_eq!(outage_cdf(&r).unwrap(), vec![(0.1, 1.0 / 3.0), (0.3, 2.0 / 3.0), (0.3, 1.0)]);
        let c = OutageResult { outage_values: vec![0.2; 4], ..r.clone() };
        assert!(outage_cdf(&c).unwrap().iter().all(|&(v, _)| v == 0.2));
        assert!(outage_cdf(&OutageResult { outage_values: vec![], ..r }).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(SimConfig::default().validate().is_ok());
        assert!(quick(vec![1000.0]).validate().is_err());
        assert!(SimConfig { sigma_los_db: -1.0, ..Default::default() }.validate().is_err());
    }
}
