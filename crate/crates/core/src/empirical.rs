//! Distance binning of LOS samples into empirical probability curves.

use serde::{Deserialize, Serialize};

use crate::env::EnvClass;
use crate::error::{Error, Result};
use crate::extract::{CellLosData, LosSample};

pub const DEFAULT_BIN_WIDTH: f64 = 5.0;
pub const DEFAULT_MAX_RADIUS: f64 = 1000.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LosBin {
    /// Mean distance of the member points.
    pub r_mean: f64,
    /// Fraction of member points that are LOS.
    pub p_emp: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LosCurve {
    /// Cell id or environment tag.
    pub source: String,
    pub bins: Vec<LosBin>,
}

impl LosCurve {
    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }

    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn total_count(&self) -> usize {
        self.bins.iter().map(|b| b.count).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BinConfig {
    pub width: f64,
    pub max_radius: f64,
}

impl Default for BinConfig {
    fn default() -> Self {
        BinConfig {
            width: DEFAULT_BIN_WIDTH,
            max_radius: DEFAULT_MAX_RADIUS,
        }
    }
}

fn bin_iter<'a>(source: String, samples: impl Iterator<Item = &'a LosSample>, config: &BinConfig) -> LosCurve {
    assert!(config.width > 0.0 && config.max_radius > 0.0, "bin width and radius must be > 0");
    let n_bins = (config.max_radius / config.width).ceil() as usize;
    let mut sum_r = vec![0.0f64; n_bins];
    let mut los = vec![0usize; n_bins];
    let mut count = vec![0usize; n_bins];
    for s in samples {
        let d = s.distance_2d;
        if !(d > 0.0 && d <= config.max_radius) {
            continue;
        }
        // the outer edge itself belongs to the last bin
        let i = ((d / config.width).floor() as usize).min(n_bins - 1);
        sum_r[i] += d;
        count[i] += 1;
        los[i] += s.is_los as usize;
    }
    let bins = (0..n_bins)
        .filter(|&i| count[i] > 0)
        .map(|i| LosBin {
            r_mean: sum_r[i] / count[i] as f64,
            p_emp: los[i] as f64 / count[i] as f64,
            count: count[i],
        })
        .collect();
    LosCurve { source, bins }
}

/// Bins a cell's samples into lower-inclusive distance bins; empty bins are omitted.
pub fn bin_samples(data: &CellLosData, config: &BinConfig) -> LosCurve {
    bin_iter(data.bs_id.clone(), data.samples.iter(), config)
}

/// Concatenates the raw samples of every cell in an environment and bins them.
pub fn pool_cells(cells: &[&CellLosData], env: EnvClass, config: &BinConfig) -> Result<LosCurve> {
    if cells.is_empty() {
        return Err(Error::Insufficient(format!("no cells in environment {env}")));
    }
    Ok(bin_iter(
        env.to_string(),
        cells.iter().flat_map(|c| c.samples.iter()),
        config,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::Point2;
    use proptest::prelude::*;

    fn cell(id: &str, data: &[(f64, bool)]) -> CellLosData {
        CellLosData {
            bs_id: id.into(),
            samples: data
                .iter()
                .map(|&(d, l)| LosSample { point: Point2::new(d, 0.0), distance_2d: d, is_los: l })
                .collect(),
            ue_height: 0.0,
        }
    }

    #[test]
    fn single_bin_all_los() {
        let c = bin_samples(&cell("a", &[(1.0, true), (2.0, true), (3.0, true), (4.0, true)]), &BinConfig::default());
        assert_eq!(c.bins.len(), 1);
        assert_eq!(c.bins[0].r_mean, 2.5);
        assert_eq!(c.bins[0].p_emp, 1.0);
    }

    #[test]
    fn half_los_bin() {
        let c = bin_samples(&cell("a", &[(6.0, true), (7.0, false), (8.0, true), (9.0, false)]), &BinConfig::default());
        assert_eq!(c.bins[0].p_emp, 0.5);
        assert_eq!(c.bins[0].count, 4);
    }

    #[test]
    fn boundaries_and_range() {
        let c = bin_samples(
            &cell("a", &[(5.0, true), (4.999, false), (1000.0, true), (1000.5, true)]),
            &BinConfig::default(),
        );
        assert_eq!(c.bins.len(), 3);
        assert_eq!(c.bins[0].r_mean, 4.999);
        assert_eq!(c.bins[1].r_mean, 5.0);
        assert_eq!(c.bins[2].r_mean, 1000.0);
        assert_eq!(c.total_count(), 3);
    }

    #[test]
    fn empty_cell_gives_empty_curve() {
        assert!(bin_samples(&cell("a", &[]), &BinConfig::default()).is_empty());
        assert!(pool_cells(&[], EnvClass::UMa, &BinConfig::default()).is_err());
    }

    #[test]
    fn pooling_disjoint_and_shared() {
        let a = cell("a", &[(1.0, true), (2.0, true)]);
        let b = cell("b", &[(101.0, false)]);
        let pooled = pool_cells(&[&a, &b], EnvClass::SMa, &BinConfig::default()).unwrap();
        assert_eq!(pooled.source, "SMa");
        assert_eq!(pooled.bins.len(), 2);

        let single = pool_cells(&[&a], EnvClass::SMa, &BinConfig::default()).unwrap();
        assert_eq!(single.bins, bin_samples(&a, &BinConfig::default()).bins);

        // same bin: p1 = 1 (n1 = 2), p2 = 1/3 (n2 = 3) -> (2 + 1) / 5
        let c = cell("c", &[(1.5, false), (2.5, true), (3.5, false)]);
        let pooled = pool_cells(&[&a, &c], EnvClass::SMa, &BinConfig::default()).unwrap();
        assert!((pooled.bins[0].p_emp - 0.6).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn bin_invariants(raw in proptest::collection::vec((0.01f64..1200.0, any::<bool>()), 0..300)) {
            let data = cell("x", &raw);
            let cfg = BinConfig::default();
            let curve = bin_samples(&data, &cfg);
            let inside = raw.iter().filter(|(d, _)| *d <= cfg.max_radius).count();
            prop_assert_eq!(curve.total_count(), inside);
            for w in curve.bins.windows(2) {
                prop_assert!(w[0].r_mean < w[1].r_mean);
            }
            for b in &curve.bins {
                let i = ((b.r_mean / cfg.width).floor()).min(199.0);
                prop_assert!(b.r_mean >= i * cfg.width - 1e-9 && b.r_mean <= (i + 1.0) * cfg.width + 1e-9);
                prop_assert!((0.0..=1.0).contains(&b.p_emp));
            }
        }

        #[test]
        fn pooled_is_count_weighted_mean(
            a in proptest::collection::vec((0.01f64..1000.0, any::<bool>()), 1..100),
            b in proptest::collection::vec((0.01f64..1000.0, any::<bool>()), 1..100),
        ) {
            let (ca, cb) = (cell("a", &a), cell("b", &b));
            let cfg = BinConfig::default();
            let pooled = pool_cells(&[&ca, &cb], EnvClass::UMa, &cfg).unwrap();
            let (ba, bb) = (bin_samples(&ca, &cfg), bin_samples(&cb, &cfg));
            for p in &pooled.bins {
                let idx = |r: f64| ((r / cfg.width).floor() as usize).min(199);
                let k = idx(p.r_mean);
                let mut n = 0usize;
                let mut los = 0.0;
                for bin in ba.bins.iter().chain(bb.bins.iter()).filter(|x| idx(x.r_mean) == k) {
                    n += bin.count;
                    los += bin.p_emp * bin.count as f64;
                }
                prop_assert_eq!(n, p.count);
                prop_assert!((los / n as f64 - p.p_emp).abs() < 1e-12);
            }
        }
    }
}
