//! Correlated (U, W, F) draws through a Gaussian copula: `X = L Z` with
//! `R = L Lᵀ`, then each `Φ(Xᵢ)` through the inverse CDF of its marginal.
//!
//! The copula targets the correlation of the Gaussian stage; Pearson
//! correlations of the transformed triplets generally differ from `R`.

use std::sync::atomic::{AtomicU64, Ordering};

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, StandardNormal};
use statrs::function::beta::beta_reg;
use statrs::function::erf::erfc;
use statrs::function::gamma::gamma_lr;

use crate::dist::{optim, Corr3, Distribution, EnvParamModel};
use crate::error::{Error, Result};
use crate::model::{LosModelParams, MAX_CUTOFF};

/// Probabilities passed to the inverse CDFs are kept this far from 0 and 1.
pub const U_CLAMP: f64 = 1e-12;
/// Pivots below this are treated as a non-PSD matrix.
const NEGATIVE_PIVOT: f64 = -1e-10;

static CLAMPED: AtomicU64 = AtomicU64::new(0);

/// Number of probabilities clamped into `[U_CLAMP, 1 - U_CLAMP]` so far.
pub fn clamped_probabilities() -> u64 {
    CLAMPED.load(Ordering::Relaxed)
}

/// Lower-triangular `L` with `L Lᵀ = R`. Zero pivots (a singular PSD matrix)
/// give a zero column.
pub fn cholesky(r: &Corr3) -> Result<Corr3> {
    let mut l = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            if i == j {
                let pivot = r[i][i] - s;
                if pivot < NEGATIVE_PIVOT {
                    return Err(Error::Domain(format!(
                        "correlation matrix is not positive semidefinite (pivot {i} = {pivot:e})"
                    )));
                }
                l[i][i] = pivot.max(0.0).sqrt();
            } else if l[j][j] > 0.0 {
                l[i][j] = (r[i][j] - s) / l[j][j];
            }
        }
    }
    Ok(l)
}

/// Standard normal CDF.
pub fn phi(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Solves an increasing `cdf(e^y) = target` for `y`, expanding the bracket
/// around `centre` as needed. `None` when the root lies below `ln(MIN_POSITIVE)`.
fn log_space_root(cdf: impl Fn(f64) -> f64, target: f64, centre: f64, max_y: f64) -> Option<f64> {
    let f = |y: f64| cdf(y.exp()) - target;
    let mut lo = (centre - 1.0).min(max_y - 1e-9);
    let mut hi = (centre + 1.0).min(max_y);
    let mut step = 2.0;
    while f(lo) > 0.0 {
        lo -= step;
        step *= 2.0;
        if lo < f64::MIN_POSITIVE.ln() {
            return None;
        }
    }
    step = 2.0;
    while f(hi) < 0.0 && hi < max_y {
        hi = (hi + step).min(max_y);
        step *= 2.0;
    }
    let y = optim::find_root(f, lo, hi, 1e-13).ok()?;
    Some(y.exp())
}

fn gamma_quantile(k: f64, theta: f64, u: f64) -> f64 {
    let centre = (k * theta).ln();
    log_space_root(|x| gamma_lr(k, x / theta), u, centre, f64::MAX.ln()).unwrap_or(0.0)
}

/// Inverts the regularized incomplete beta function. The upper half is
/// solved through the mirrored distribution so `1 - x` keeps its precision.
fn beta_quantile(a: f64, b: f64, u: f64) -> f64 {
    let lower = |a: f64, b: f64, p: f64| {
        let centre = (a / (a + b)).ln().min(-1e-3);
        log_space_root(|x| if x >= 1.0 { 1.0 } else { beta_reg(a, b, x) }, p, centre, 0.0).unwrap_or(0.0)
    };
    if u <= 0.5 {
        lower(a, b, u)
    } else {
        1.0 - lower(b, a, 1.0 - u)
    }
}

/// Quantile function of `dist`. Probabilities outside `[1e-12, 1 - 1e-12]`
/// are clamped and counted.
pub fn inverse_cdf(dist: &Distribution, u: f64) -> f64 {
    let u = if (U_CLAMP..=1.0 - U_CLAMP).contains(&u) {
        u
    } else {
        if CLAMPED.fetch_add(1, Ordering::Relaxed) == 0 {
            warn!("probability {u} clamped into [{U_CLAMP}, 1 - {U_CLAMP}]");
        }
        if u.is_nan() {
            0.5
        } else {
            u.clamp(U_CLAMP, 1.0 - U_CLAMP)
        }
    };
    match *dist {
        Distribution::Exponential { theta } => -theta * (-u).ln_1p(),
        Distribution::Uniform => u,
        Distribution::Gamma { k, theta } => gamma_quantile(k, theta, u),
        Distribution::Beta { alpha, beta } => beta_quantile(alpha, beta, u),
        Distribution::Gev { k, sigma, mu } => {
            let e = -u.ln();
            if k == 0.0 {
                mu - sigma * e.ln()
            } else {
                mu + sigma * (e.powf(-k) - 1.0) / k
            }
        }
    }
}

fn correlate<R: Rng + ?Sized>(l: &Corr3, rng: &mut R) -> [f64; 3] {
    let z: [f64; 3] = std::array::from_fn(|_| StandardNormal.sample(rng));
    [
        l[0][0] * z[0],
        l[1][0] * z[0] + l[1][1] * z[1],
        l[2][0] * z[0] + l[2][1] * z[1] + l[2][2] * z[2],
    ]
}

/// Seeded copula sampler for one environment.
#[derive(Debug, Clone)]
pub struct TripletSampler {
    model: EnvParamModel,
    cholesky_l: Corr3,
    rng_seed: u64,
    rng: ChaCha8Rng,
}

impl TripletSampler {
    pub fn new(model: EnvParamModel, rng_seed: u64) -> Result<Self> {
        Self::with_stream(model, rng_seed, 0)
    }

    /// Sampler on an independent substream of `rng_seed`.
    pub fn with_stream(model: EnvParamModel, rng_seed: u64, stream: u64) -> Result<Self> {
        model.validate().map_err(|e| Error::Domain(format!("{} model: {e}", model.env)))?;
        let cholesky_l = cholesky(&model.correlation)?;
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        rng.set_stream(stream);
        Ok(TripletSampler { model, cholesky_l, rng_seed, rng })
    }

    pub fn model(&self) -> &EnvParamModel {
        &self.model
    }

    pub fn cholesky_l(&self) -> &Corr3 {
        &self.cholesky_l
    }

    pub fn rng_seed(&self) -> u64 {
        self.rng_seed
    }

    /// Correlated standard normal vector `X = L Z`.
    pub fn gaussian_stage(&mut self) -> [f64; 3] {
        correlate(&self.cholesky_l, &mut self.rng)
    }

    /// Like `gaussian_stage`, drawing from a caller-supplied generator.
    pub fn gaussian_stage_with<R: Rng + ?Sized>(&self, rng: &mut R) -> [f64; 3] {
        correlate(&self.cholesky_l, rng)
    }

    /// Maps a Gaussian-stage vector to model parameters; U is capped at 1000 m.
    pub fn transform(&self, x: [f64; 3]) -> LosModelParams {
        let u = inverse_cdf(&self.model.dist_u.dist, phi(x[0])).clamp(0.0, MAX_CUTOFF);
        let w = inverse_cdf(&self.model.dist_w.dist, phi(x[1])).max(0.0);
        let f = inverse_cdf(&self.model.dist_f.dist, phi(x[2])).clamp(0.0, 1.0);
        LosModelParams::new(u, w, f)
    }

    pub fn sample_triplet(&mut self) -> LosModelParams {
        let x = self.gaussian_stage();
        self.transform(x)
    }

    pub fn sample_triplet_with<R: Rng + ?Sized>(&self, rng: &mut R) -> LosModelParams {
        self.transform(self.gaussian_stage_with(rng))
    }

    pub fn sample_n(&mut self, n: usize) -> Vec<LosModelParams> {
        (0..n).map(|_| self.sample_triplet()).collect()
    }
}
