use std::f64::consts::FRAC_PI_2;

use rand::Rng;
use rand_distr::{Distribution, Exp1, Open01};

use crate::error::{Error, Result};

/// Symmetric alpha-stable law with characteristic function
/// `exp(-scale^alpha |u|^alpha)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StableParams {
    alpha: f64,
    scale: f64,
}

impl StableParams {
    pub fn new(alpha: f64, scale: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 2.0) {
            return Err(Error::config(format!("stability index must lie in (0, 2], got {alpha}")));
        }
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::config(format!("stable scale must be positive, got {scale}")));
        }
        Ok(Self { alpha, scale })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Same index, scale multiplied by `factor`.
    pub fn rescaled(&self, factor: f64) -> Self {
        Self {
            alpha: self.alpha,
            scale: self.scale * factor,
        }
    }
}

impl Distribution<f64> for StableParams {
    /// Chambers-Mallows-Stuck transform, symmetric case.
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.sample(Open01);
        let v = FRAC_PI_2 * (2.0 * u - 1.0);
        let alpha = self.alpha;
        let standard = if alpha == 1.0 {
            v.tan()
        } else {
            let w: f64 = rng.sample(Exp1);
            (alpha * v).sin() / v.cos().powf(1.0 / alpha)
                * (((1.0 - alpha) * v).cos() / w).powf((1.0 - alpha) / alpha)
        };
        self.scale * standard
    }
}

/// One symmetric alpha-stable variate.
pub fn sample_stable<R: Rng + ?Sized>(params: StableParams, rng: &mut R) -> f64 {
    params.sample(rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::rng::RngStream;

    fn draws(params: StableParams, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = RngStream::from_seed(seed);
        (0..n).map(|_| sample_stable(params, &mut rng)).collect()
    }

    #[test]
    fn rejects_bad_params() {
        assert!(StableParams::new(0.0, 1.0).is_err());
        assert!(StableParams::new(2.1, 1.0).is_err());
        assert!(StableParams::new(1.5, 0.0).is_err());
        assert!(StableParams::new(2.0, 1.0).is_ok());
    }

    #[test]
    fn alpha_two_is_gaussian_with_variance_two() {
        let x = draws(StableParams::new(2.0, 1.0).unwrap(), 100_000, 1);
        let n = x.len() as f64;
        let mean = x.iter().sum::<f64>() / n;
        let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((var - 2.0).abs() < 0.1, "var {var}");
    }

    #[test]
    fn cauchy_median_is_zero() {
        let mut x = draws(StableParams::new(1.0, 1.0).unwrap(), 20_001, 2);
        x.sort_by(f64::total_cmp);
        let median = x[10_000];
        // Cauchy median SE = pi / (2 sqrt(n)).
        let se = std::f64::consts::PI / (2.0 * (x.len() as f64).sqrt());
        assert!(median.abs() < 4.0 * se, "median {median}");
    }

    #[test]
    fn characteristic_function_matches() {
        for (alpha, scale) in [(1.8, 1.0), (1.2, 0.7), (0.8, 1.3)] {
            let params = StableParams::new(alpha, scale).unwrap();
            let x = draws(params, 50_000, 3);
            let n = x.len() as f64;
            for u in [0.5, 1.0, 2.0] {
                let c: Vec<f64> = x.iter().map(|v| (u * v).cos()).collect();
                let m = c.iter().sum::<f64>() / n;
                let sd = (c.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
                let want = (-(scale * u).powf(alpha)).exp();
                assert!((m - want).abs() < 4.0 * sd / n.sqrt(), "alpha {alpha} u {u}: {m} vs {want}");
            }
        }
    }
}
