use rayon::prelude::*;

use crate::domain::{check_conforming, DcovParams, DiscretizationScheme, DistanceMatrix, FieldRealization};
use crate::error::{Error, Result};

/// Matrix of `||x_k - x_l||^beta` under the scheme's discretized L2 norm.
///
/// Rows are computed in parallel; every entry is evaluated exactly once for
/// `k < l` and mirrored, so the result does not depend on the schedule.
pub fn distance_matrix(
    side: &[FieldRealization],
    scheme: &DiscretizationScheme,
    params: DcovParams,
) -> Result<DistanceMatrix> {
    let n = side.len();
    if n < 2 {
        return Err(Error::config(format!("distance matrix needs n >= 2, got {n}")));
    }
    check_conforming(side, scheme, "realization")?;
    let beta = params.beta();

    let upper: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|k| {
            let xk = side[k].values();
            let mut diff = vec![0.0; xk.len()];
            ((k + 1)..n)
                .map(|l| {
                    for ((d, a), b) in diff.iter_mut().zip(xk).zip(side[l].values()) {
                        *d = a - b;
                    }
                    scheme.norm(&diff).map(|v| v.powf(beta))
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;

    let mut entries = vec![0.0; n * n];
    for (k, row) in upper.into_iter().enumerate() {
        for (offset, v) in row.into_iter().enumerate() {
            let l = k + 1 + offset;
            entries[k * n + l] = v;
            entries[l * n + k] = v;
        }
    }
    Ok(DistanceMatrix::from_raw(n, entries))
}
