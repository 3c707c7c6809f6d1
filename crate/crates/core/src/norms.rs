//! Discretized L2 norms for the lattice, random-location and cell-averaged
//! schemes. The unit cube has volume one, so no area factor appears.

use crate::domain::CellAverageSpec;
use crate::error::{Error, Result};

fn check_finite(values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::data(format!("non-finite value at site {i}"))),
        None => Ok(()),
    }
}

fn sum_of_squares(values: &[f64]) -> f64 {
    values.iter().map(|v| v * v).sum()
}

/// Riemann-sum norm on the lattice: `sqrt(p^-1 * sum v_i^2)`.
pub fn lattice_norm(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::config("lattice norm of an empty vector"));
    }
    check_finite(values)?;
    Ok((sum_of_squares(values) / values.len() as f64).sqrt())
}

/// Average over the realized locations; zero when there are none.
pub fn random_location_norm(values: &[f64]) -> Result<f64> {
    check_finite(values)?;
    if values.is_empty() {
        return Ok(0.0);
    }
    Ok((sum_of_squares(values) / values.len() as f64).sqrt())
}

/// Norm of the cell averages: values are binned by cell, averaged within
/// every nonempty cell, and the squared averages are summed and divided by
/// the total cell count (empty cells contribute nothing).
pub fn cell_average_norm(values: &[f64], spec: &CellAverageSpec) -> Result<f64> {
    let membership = spec.membership();
    if values.len() != membership.len() {
        return Err(Error::config(format!(
            "{} values for {} locations",
            values.len(),
            membership.len()
        )));
    }
    check_finite(values)?;
    let cells = spec.cell_count();
    let mut sums = vec![0.0; cells];
    let mut counts = vec![0usize; cells];
    for (&cell, &v) in membership.iter().zip(values) {
        sums[cell] += v;
        counts[cell] += 1;
    }
    let total: f64 = sums
        .iter()
        .zip(&counts)
        .filter(|(_, &c)| c > 0)
        .map(|(s, &c)| {
            let mean = s / c as f64;
            mean * mean
        })
        .sum();
    Ok((total / cells as f64).sqrt())
}
