//! Matérn covariance family with nugget.
//!
//! The kernel is parameterized as
//! `K(t) = sigma2 / (Gamma(nu) 2^{nu-1}) (2 sqrt(nu) |t| / ell)^nu K_nu(2 sqrt(nu) |t| / ell)`
//! with `|t|` the max-norm of the displacement. The nugget `delta` is never
//! part of the kernel value; it is added on covariance-matrix diagonals only.

use crate::bessel::{bessel_k, gamma_fn};
use crate::{C_INF, GpError};
use serde::{Deserialize, Serialize};

/// Bessel arguments below this evaluate to the `t = 0` limit of the kernel;
/// the relative deviation from that limit is below 1e-16 there.
const SMALL_ARG: f64 = 1e-8;

/// Bessel arguments above this make the kernel an exact 0: the true value is
/// below 1e-280 relative to `sigma2` and exact zeros keep matrices finite.
const UNDERFLOW_ARG: f64 = 700.0;

/// One member of the Matérn model family: variance, correlation length,
/// smoothness and nugget variance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaternSpec {
    pub sigma2: f64,
    pub ell: f64,
    pub nu: f64,
    pub delta: f64,
}

impl MaternSpec {
    pub fn new(sigma2: f64, ell: f64, nu: f64, delta: f64) -> Result<Self, GpError> {
        let spec = MaternSpec {
            sigma2,
            ell,
            nu,
            delta,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Basic positivity checks; truth specs may carry `delta = 0`.
    /// Negated comparisons also reject NaN.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<(), GpError> {
        if !(self.sigma2 > 0.0) {
            return Err(GpError::InvalidParam(format!(
                "sigma2 must be > 0, got {}",
                self.sigma2
            )));
        }
        if !(self.ell > 0.0) {
            return Err(GpError::InvalidParam(format!(
                "ell must be > 0, got {}",
                self.ell
            )));
        }
        if !(self.nu > 0.0) {
            return Err(GpError::InvalidParam(format!(
                "nu must be > 0, got {}",
                self.nu
            )));
        }
        if !(self.delta >= 0.0) {
            return Err(GpError::InvalidParam(format!(
                "delta must be >= 0, got {}",
                self.delta
            )));
        }
        Ok(())
    }

    /// Model-family members additionally keep the nugget above `C_INF`.
    pub fn validate_model_member(&self) -> Result<(), GpError> {
        self.validate()?;
        if self.delta < C_INF {
            return Err(GpError::InvalidParam(format!(
                "model nugget delta = {} is below the family floor C_inf = {C_INF}",
                self.delta
            )));
        }
        Ok(())
    }

    pub fn with_theta(&self, sigma2: f64, ell: f64) -> MaternSpec {
        MaternSpec {
            sigma2,
            ell,
            ..*self
        }
    }
}

/// Closed box over which `theta = (sigma2, ell)` is estimated.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamBox {
    pub sigma2_range: (f64, f64),
    pub ell_range: (f64, f64),
}

impl ParamBox {
    #[allow(clippy::neg_cmp_op_on_partial_ord)] // negation rejects NaN
    pub fn new(sigma2_range: (f64, f64), ell_range: (f64, f64)) -> Result<Self, GpError> {
        let b = ParamBox {
            sigma2_range,
            ell_range,
        };
        for (name, (lo, hi)) in [("sigma2", sigma2_range), ("ell", ell_range)] {
            if !(lo > 0.0) || !(hi >= lo) {
                return Err(GpError::InvalidParam(format!(
                    "{name} range [{lo}, {hi}] must be nonempty with positive lower bound"
                )));
            }
        }
        Ok(b)
    }

    pub fn contains(&self, sigma2: f64, ell: f64) -> bool {
        sigma2 >= self.sigma2_range.0
            && sigma2 <= self.sigma2_range.1
            && ell >= self.ell_range.0
            && ell <= self.ell_range.1
    }

    pub fn project(&self, sigma2: f64, ell: f64) -> (f64, f64) {
        (
            sigma2.clamp(self.sigma2_range.0, self.sigma2_range.1),
            ell.clamp(self.ell_range.0, self.ell_range.1),
        )
    }
}

impl Default for ParamBox {
    /// The estimation domain `[0.1^2, 10^2] x [0.2, 10]`.
    fn default() -> Self {
        ParamBox {
            sigma2_range: (0.01, 100.0),
            ell_range: (0.2, 10.0),
        }
    }
}

/// Max-norm of a displacement vector.
pub fn max_norm(t: &[f64]) -> f64 {
    t.iter().fold(0.0f64, |m, &v| m.max(v.abs()))
}

/// Max-norm distance between two points given as coordinate slices.
pub fn max_norm_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .fold(0.0f64, |m, (&x, &y)| m.max((x - y).abs()))
}

/// Matérn correlation (unit variance, no nugget) at max-norm distance `dist`.
///
/// `sigma2` deliberately stays out of this function so callers can cache the
/// correlation for a fixed `ell` and scale by any variance afterwards.
pub fn matern_corr(nu: f64, ell: f64, dist: f64) -> f64 {
    let arg = 2.0 * nu.sqrt() * dist / ell;
    if arg <= SMALL_ARG {
        return 1.0;
    }
    if arg > UNDERFLOW_ARG {
        return 0.0;
    }
    let k = bessel_k(nu, arg).expect("bessel_k on validated arguments");
    arg.powf(nu) * k / (gamma_fn(nu) * 2.0f64.powf(nu - 1.0))
}

/// Noise-free Matérn covariance at displacement `t` (the nugget is added only
/// on matrix diagonals). At `t = 0` this is exactly `sigma2`.
pub fn matern_cov(spec: &MaternSpec, t: &[f64]) -> f64 {
    spec.sigma2 * matern_corr(spec.nu, spec.ell, max_norm(t))
}

/// Same as [`matern_cov`] for a precomputed max-norm distance.
pub fn matern_cov_dist(spec: &MaternSpec, dist: f64) -> f64 {
    spec.sigma2 * matern_corr(spec.nu, spec.ell, dist)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(sigma2: f64, ell: f64, nu: f64, delta: f64) -> MaternSpec {
        MaternSpec::new(sigma2, ell, nu, delta).unwrap()
    }

    #[test]
    fn zero_displacement_is_sigma2_exactly() {
        let s = spec(1.0, 3.0, 10.0, 0.0625);
        assert_eq!(matern_cov(&s, &[0.0]), 1.0);
        let s = spec(4.5, 0.7, 1.5, 0.0);
        assert_eq!(matern_cov(&s, &[0.0, 0.0]), 4.5);
    }

    #[test]
    fn nu_half_closed_form() {
        // nu = 1/2: K(t) = sigma2 exp(-2 sqrt(1/2) |t| / ell)
        let s = spec(2.0, 1.0, 0.5, 0.0);
        let got = matern_cov(&s, &[1.0]);
        let want = 2.0 * (-(2.0f64).sqrt()).exp();
        assert!(
            (got - want).abs() < 1e-10 * want,
            "{got} vs {want}"
        );
        assert!((got - 0.486_233_468_868_428_42).abs() < 1e-10);

        for dist in [0.01, 0.3, 1.7, 6.0] {
            let got = matern_cov_dist(&s, dist);
            let want = 2.0 * (-(2.0f64).sqrt() * dist).exp();
            assert!((got / want - 1.0).abs() < 1e-10, "dist = {dist}");
        }
    }

    #[test]
    fn nu_three_halves_closed_form() {
        // nu = 3/2: K(t) = sigma2 (1 + arg) exp(-arg), arg = sqrt(6) |t| / ell
        let s = spec(1.3, 2.0, 1.5, 0.0);
        for dist in [0.05, 0.9, 3.3, 10.0] {
            let arg = 6.0f64.sqrt() * dist / 2.0;
            let want = 1.3 * (1.0 + arg) * (-arg).exp();
            let got = matern_cov_dist(&s, dist);
            assert!((got / want - 1.0).abs() < 1e-10, "dist = {dist}");
        }
    }

    #[test]
    fn nu_five_halves_closed_form() {
        // nu = 5/2: K(t) = sigma2 (1 + arg + arg^2/3) exp(-arg)
        let s = spec(0.7, 1.1, 2.5, 0.0);
        for dist in [0.02, 0.6, 2.0, 5.5] {
            let arg = 10.0f64.sqrt() * dist / 1.1;
            let want = 0.7 * (1.0 + arg + arg * arg / 3.0) * (-arg).exp();
            let got = matern_cov_dist(&s, dist);
            assert!((got / want - 1.0).abs() < 1e-10, "dist = {dist}");
        }
    }

    #[test]
    fn evenness_in_displacement() {
        let mut state = 12345u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..100 {
            let s = spec(
                0.01 + 10.0 * next(),
                0.2 + 5.0 * next(),
                0.3 + 12.0 * next(),
                0.0,
            );
            let t = [4.0 * next() - 2.0, 4.0 * next() - 2.0];
            let neg = [-t[0], -t[1]];
            assert_eq!(matern_cov(&s, &t), matern_cov(&s, &neg));
        }
    }

    #[test]
    fn continuity_at_zero_and_monotone_decay() {
        for nu in [0.5, 1.5, 10.0] {
            let s = spec(1.0, 3.0, nu, 0.0);
            // continuity: K -> sigma2 as |t| -> 0
            let mut dist = 1e-1;
            let mut prev_gap = f64::INFINITY;
            while dist > 1e-9 {
                let gap = (matern_cov_dist(&s, dist) - 1.0).abs();
                assert!(gap <= prev_gap + 1e-15);
                prev_gap = gap;
                dist /= 4.0;
            }
            assert!(prev_gap < 1e-9, "nu = {nu}: gap {prev_gap}");

            // strict monotone decrease along a ray (before the underflow cut)
            let mut prev = matern_cov_dist(&s, 1e-6);
            let mut d = 1e-5;
            while 2.0 * nu.sqrt() * d / 3.0 < 650.0 {
                let v = matern_cov_dist(&s, d);
                assert!(v < prev, "nu = {nu}, dist = {d}: {v} !< {prev}");
                prev = v;
                d *= 2.2;
            }
        }
    }

    #[test]
    fn underflow_yields_exact_zero() {
        let s = spec(1.0, 1.0, 0.5, 0.0);
        // arg = sqrt(2) * dist > 700
        assert_eq!(matern_cov_dist(&s, 500.0), 0.0);
        assert!(matern_cov_dist(&s, 400.0) > 0.0);
    }

    #[test]
    fn param_box_default_and_projection() {
        let b = ParamBox::default();
        assert_eq!(b.sigma2_range, (0.01, 100.0));
        assert_eq!(b.ell_range, (0.2, 10.0));
        assert!(b.contains(1.0, 3.0));
        assert!(!b.contains(0.001, 3.0));
        assert_eq!(b.project(1e5, 0.0), (100.0, 0.2));
        assert!(ParamBox::new((0.0, 1.0), (0.2, 10.0)).is_err());
        assert!(ParamBox::new((2.0, 1.0), (0.2, 10.0)).is_err());
    }

    #[test]
    fn spec_validation() {
        assert!(MaternSpec::new(0.0, 1.0, 1.0, 0.0).is_err());
        assert!(MaternSpec::new(1.0, -1.0, 1.0, 0.0).is_err());
        assert!(MaternSpec::new(1.0, 1.0, 0.0, 0.0).is_err());
        assert!(MaternSpec::new(1.0, 1.0, 1.0, -0.1).is_err());
        let ok = MaternSpec::new(1.0, 1.0, 1.0, 0.0).unwrap();
        assert!(ok.validate_model_member().is_err());
        assert!(ok.with_theta(1.0, 1.0).validate().is_ok());
        let member = MaternSpec::new(1.0, 1.0, 1.0, 0.01).unwrap();
        assert!(member.validate_model_member().is_ok());
    }
}
