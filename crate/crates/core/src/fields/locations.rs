use rand::Rng;
use rand_distr::{Distribution, Poisson};

use crate::domain::LocationSet;
use crate::error::{Error, Result};

/// Poisson(`intensity`) many iid uniform points on `[0,1]^d`.
pub fn sample_poisson_locations<R: Rng + ?Sized>(
    intensity: f64,
    d: usize,
    rng: &mut R,
) -> Result<LocationSet> {
    if !(intensity > 0.0 && intensity.is_finite()) {
        return Err(Error::config(format!("Poisson intensity must be positive, got {intensity}")));
    }
    let poisson = Poisson::new(intensity)
        .map_err(|e| Error::config(format!("invalid Poisson intensity {intensity}: {e}")))?;
    let count = poisson.sample(rng) as usize;
    let points = (0..count)
        .map(|_| (0..d).map(|_| rng.random::<f64>()).collect())
        .collect();
    LocationSet::new(d, points, intensity)
}
