use crate::domain::FieldRealization;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DependenceFamily {
    /// `y = rho x + sqrt(1 - rho^2) x'`.
    Gaussian,
    /// `y = rho x + (1 - rho^alpha)^{1/alpha} x'`, for iid alpha-stable `x, x'`.
    Stable { alpha: f64 },
}

/// Linear coupling of two iid fields that keeps the marginal law of `x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DependenceSpec {
    rho: f64,
    family: DependenceFamily,
}

impl DependenceSpec {
    pub fn new(rho: f64, family: DependenceFamily) -> Result<Self> {
        if !(0.0..=1.0).contains(&rho) {
            return Err(Error::config(format!("rho must lie in [0, 1], got {rho}")));
        }
        if let DependenceFamily::Stable { alpha } = family {
            if !(alpha > 0.0 && alpha < 2.0) {
                return Err(Error::config(format!(
                    "stable dependence needs alpha in (0, 2), got {alpha}"
                )));
            }
        }
        Ok(Self { rho, family })
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn family(&self) -> DependenceFamily {
        self.family
    }

    /// Weights `(w_x, w_x')` of the two components.
    pub fn weights(&self) -> (f64, f64) {
        let rho = self.rho;
        let other = match self.family {
            DependenceFamily::Gaussian => (1.0 - rho * rho).sqrt(),
            DependenceFamily::Stable { alpha } => (1.0 - rho.powf(alpha)).powf(1.0 / alpha),
        };
        (rho, other)
    }
}

/// The dependent partner `y` of `x` built from an independent copy `x_prime`.
pub fn make_dependent_pair(
    x: &FieldRealization,
    x_prime: &FieldRealization,
    spec: &DependenceSpec,
) -> Result<FieldRealization> {
    if x.len() != x_prime.len() {
        return Err(Error::config(format!(
            "dependent pair components differ in length: {} vs {}",
            x.len(),
            x_prime.len()
        )));
    }
    let (wx, wp) = spec.weights();
    Ok(FieldRealization::new(
        x.values()
            .iter()
            .zip(x_prime.values())
            .map(|(a, b)| wx * a + wp * b)
            .collect(),
    ))
}
