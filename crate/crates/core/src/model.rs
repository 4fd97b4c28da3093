//! The (U, W, F) LOS probability model and the two-parameter d1/d2 baseline.
//!
//! ```text
//! p(r) = 1                                         r <= U
//! p(r) = F * ((U / r) (1 - exp(-r / W)) + exp(-r / W))   r > U
//! ```
//!
//! With `F = 1`, `U = d1`, `W = d2` this is exactly the d1/d2 form
//! `min(d1 / r, 1) (1 - exp(-r / d2)) + exp(-r / d2)`.

use serde::{Deserialize, Serialize};

use crate::env::EnvClass;
use crate::error::{Error, Result};

/// Upper bound of the cutoff distance, the analysis radius.
pub const MAX_CUTOFF: f64 = 1000.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LosModelParams {
    /// Cutoff distance in meters below which LOS is certain.
    pub u: f64,
    /// Decay distance in meters.
    pub w: f64,
    /// Scale of the decaying branch, in `[0, 1]`.
    pub f: f64,
}

impl LosModelParams {
    pub const fn new(u: f64, w: f64, f: f64) -> Self {
        LosModelParams { u, w, f }
    }

    pub fn is_feasible(&self) -> bool {
        (0.0..=MAX_CUTOFF).contains(&self.u) && self.w >= 0.0 && self.w.is_finite() && (0.0..=1.0).contains(&self.f)
    }

    /// LOS probability at 2D distance `r > 0`.
    pub fn p_los(&self, r: f64) -> Result<f64> {
        if !(r > 0.0) {
            return Err(Error::Domain(format!("distance {r} must be > 0")));
        }
        Ok(self.eval(r))
    }

    /// Unchecked evaluation; `r` must be positive.
    #[inline]
    pub fn eval(&self, r: f64) -> f64 {
        if r <= self.u {
            1.0
        } else {
            self.f * decay_term(self.u, self.w, r)
        }
    }

    /// Per-environment average models fitted on pooled data (including outliers).
    pub fn published_average(env: EnvClass) -> Self {
        match env {
            EnvClass::MetMa => LosModelParams::new(22.1, 339.5, 0.6756),
            EnvClass::UMa => LosModelParams::new(21.9, 607.4, 0.6929),
            EnvClass::SMa => LosModelParams::new(33.0, 400.0, 0.85),
            EnvClass::RMa => LosModelParams::new(9.9, 1209.6, 0.9031),
        }
    }
}

/// `(u / r)(1 - e^{-r/w}) + e^{-r/w}`, with the `w = 0` limit `u / r`.
#[inline]
pub fn decay_term(u: f64, w: f64, r: f64) -> f64 {
    if w == 0.0 {
        return u / r;
    }
    let e = (-r / w).exp();
    (u / r) * (1.0 - e) + e
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct D1D2Params {
    pub d1: f64,
    pub d2: f64,
}

impl D1D2Params {
    /// Street-level urban macro baseline.
    pub const UMA: D1D2Params = D1D2Params { d1: 18.0, d2: 63.0 };

    pub fn new(d1: f64, d2: f64) -> Result<Self> {
        if !(d1 >= 0.0 && d2 > 0.0 && d1.is_finite() && d2.is_finite()) {
            return Err(Error::Domain(format!("d1 = {d1}, d2 = {d2}: need d1 >= 0, d2 > 0")));
        }
        Ok(D1D2Params { d1, d2 })
    }

    pub fn p_los(&self, r: f64) -> Result<f64> {
        if !(r > 0.0) {
            return Err(Error::Domain(format!("distance {r} must be > 0")));
        }
        Ok(self.eval(r))
    }

    #[inline]
    pub fn eval(&self, r: f64) -> f64 {
        let e = (-r / self.d2).exp();
        (self.d1 / r).min(1.0) * (1.0 - e) + e
    }

    /// The equivalent (U, W, F) triplet with `F = 1`.
    pub fn as_uwf(&self) -> LosModelParams {
        LosModelParams::new(self.d1, self.d2, 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn constant_region() {
        let p = LosModelParams::new(100.0, 50.0, 0.3);
        assert_eq!(p.p_los(50.0).unwrap(), 1.0);
        assert_eq!(p.p_los(100.0).unwrap(), 1.0);
        assert!(p.p_los(0.0).is_err());
        assert!(p.p_los(-1.0).is_err());
    }

    #[test]
    fn metma_average_at_500m() {
        let p = LosModelParams::published_average(EnvClass::MetMa);
        let e = (-500.0f64 / 339.5).exp();
        let direct = 0.6756 * ((22.1 / 500.0) * (1.0 - e) + e);
        let v = p.p_los(500.0).unwrap();
        assert_eq!(v, direct);
        assert!((v - 0.17792).abs() < 1e-5, "{v}");
    }

    #[test]
    fn baseline_examples() {
        let b = D1D2Params::UMA;
        assert_eq!(b.p_los(18.0).unwrap(), 1.0);
        let e = (-100.0f64 / 63.0).exp();
        let v = b.p_los(100.0).unwrap();
        assert!((v - (0.18 * (1.0 - e) + e)).abs() < 1e-15);
        assert!((v - 0.34767).abs() < 1e-5, "{v}");
        assert!(b.p_los(1e6).unwrap() < 1e-4);
        assert!(D1D2Params::new(1.0, 0.0).is_err());
    }

    #[test]
    fn zero_decay_limit() {
        let p = LosModelParams::new(100.0, 0.0, 0.5);
        assert_eq!(p.p_los(200.0).unwrap(), 0.25);
        let near = LosModelParams::new(100.0, 1e-9, 0.5);
        assert!((near.p_los(200.0).unwrap() - 0.25).abs() < 1e-12);
    }

    fn params() -> impl Strategy<Value = LosModelParams> {
        (0.0f64..=1000.0, 0.0f64..5000.0, 0.0f64..=1.0).prop_map(|(u, w, f)| LosModelParams::new(u, w, f))
    }

    proptest! {
        #[test]
        fn bounded(p in params(), r in 1e-3f64..5000.0) {
            let v = p.p_los(r).unwrap();
            prop_assert!((0.0..=1.0).contains(&v));
        }

        #[test]
        fn non_increasing_beyond_cutoff(p in params(), r1 in 1e-3f64..3000.0, dr in 0.0f64..3000.0) {
            let r1 = r1.max(p.u + 1e-9);
            let r2 = r1 + dr;
            prop_assert!(p.eval(r2) <= p.eval(r1) + 1e-12);
        }

        #[test]
        fn reduces_to_baseline(d1 in 0.0f64..1000.0, d2 in 1e-3f64..5000.0, r in 1e-3f64..2000.0) {
            let b = D1D2Params::new(d1, d2).unwrap();
            prop_assert!((b.as_uwf().eval(r) - b.eval(r)).abs() <= 1e-12);
        }
    }
}
