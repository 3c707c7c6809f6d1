//! Gaussian fields with explicit covariance: fractional Brownian sheets and
//! Levy fractional Brownian fields, sampled through a dense Cholesky factor.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::domain::{FieldRealization, LatticeSpec, LocationSet};
use crate::error::{Error, Result};

/// Largest number of sites accepted by the dense sampler.
pub const MAX_DENSE_SITES: usize = 4096;

const JITTER_START: f64 = 1e-12;
const JITTER_MAX: f64 = 1e-8;

/// Hurst vector of a fractional Brownian sheet, one entry per axis.
#[derive(Debug, Clone, PartialEq)]
pub struct FbsParams {
    hurst: Vec<f64>,
}

impl FbsParams {
    pub fn new(hurst: Vec<f64>) -> Result<Self> {
        if hurst.is_empty() {
            return Err(Error::config("Hurst vector is empty"));
        }
        if let Some(h) = hurst.iter().find(|h| !(**h > 0.0 && **h < 1.0)) {
            return Err(Error::config(format!("Hurst parameters must lie in (0, 1), got {h}")));
        }
        Ok(Self { hurst })
    }

    /// The Brownian sheet, `H = (1/2, .., 1/2)`.
    pub fn brownian(d: usize) -> Self {
        Self {
            hurst: vec![0.5; d],
        }
    }

    pub fn hurst(&self) -> &[f64] {
        &self.hurst
    }

    pub fn d(&self) -> usize {
        self.hurst.len()
    }

    /// `prod_i (|s_i|^{2H_i} + |t_i|^{2H_i} - |s_i - t_i|^{2H_i}) / 2`.
    pub fn covariance(&self, s: &[f64], t: &[f64]) -> f64 {
        self.hurst
            .iter()
            .zip(s.iter().zip(t))
            .map(|(&h, (&a, &b))| {
                0.5 * (a.abs().powf(2.0 * h) + b.abs().powf(2.0 * h) - (a - b).abs().powf(2.0 * h))
            })
            .product()
    }
}

/// Isotropic covariance `(|s|^{2H} + |t|^{2H} - |s - t|^{2H}) / 2`.
pub fn levy_fbf_covariance(hurst: f64, s: &[f64], t: &[f64]) -> f64 {
    let norm = |v: &mut dyn Iterator<Item = f64>| v.map(|c| c * c).sum::<f64>().sqrt();
    let ns = norm(&mut s.iter().copied());
    let nt = norm(&mut t.iter().copied());
    let nd = norm(&mut s.iter().zip(t).map(|(a, b)| a - b));
    0.5 * (ns.powf(2.0 * hurst) + nt.powf(2.0 * hurst) - nd.powf(2.0 * hurst))
}

/// Zero-mean Gaussian vector `L z` with `L` the jittered Cholesky factor of
/// the covariance at a fixed set of sites.
///
/// Sites with zero variance are excluded from the factorization and are
/// always exactly zero.
#[derive(Debug, Clone)]
pub struct GaussianFieldSampler {
    sites: usize,
    active: Vec<usize>,
    factor: DMatrix<f64>,
    jitter: f64,
}

impl GaussianFieldSampler {
    pub fn new<F>(sites: &[Vec<f64>], covariance: F) -> Result<Self>
    where
        F: Fn(&[f64], &[f64]) -> f64,
    {
        if sites.len() > MAX_DENSE_SITES {
            return Err(Error::config(format!(
                "{} sites exceed the dense Gaussian cap of {MAX_DENSE_SITES}; \
                 use the increment-based Brownian sheet simulator for large grids",
                sites.len()
            )));
        }
        let active: Vec<usize> = (0..sites.len())
            .filter(|&i| covariance(&sites[i], &sites[i]) != 0.0)
            .collect();
        let m = active.len();
        let cov = DMatrix::from_fn(m, m, |i, j| covariance(&sites[active[i]], &sites[active[j]]));
        let max_diag = (0..m).map(|i| cov[(i, i)]).fold(0.0, f64::max);
        let mut rel = JITTER_START;
        loop {
            let jitter = rel * max_diag;
            let mut jittered = cov.clone();
            for i in 0..m {
                jittered[(i, i)] += jitter;
            }
            if let Some(chol) = jittered.cholesky() {
                return Ok(Self {
                    sites: sites.len(),
                    active,
                    factor: chol.unpack(),
                    jitter,
                });
            }
            rel *= 10.0;
            if rel > JITTER_MAX * (1.0 + 1e-9) {
                return Err(Error::Numerical(format!(
                    "covariance matrix of {m} sites is not positive definite even with \
                     diagonal jitter {:e}",
                    JITTER_MAX * max_diag
                )));
            }
        }
    }

    pub fn site_count(&self) -> usize {
        self.sites
    }

    /// Diagonal jitter that made the factorization succeed.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> FieldRealization {
        let m = self.active.len();
        let z = DVector::from_iterator(m, (0..m).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let correlated = &self.factor * z;
        let mut values = vec![0.0; self.sites];
        for (&site, v) in self.active.iter().zip(correlated.iter()) {
            values[site] = *v;
        }
        FieldRealization::new(values)
    }

    pub fn sample_many<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<FieldRealization> {
        (0..n).map(|_| self.sample(rng)).collect()
    }
}

fn check_dim(params: &FbsParams, d: usize) -> Result<()> {
    if params.d() != d {
        return Err(Error::config(format!(
            "Hurst vector has {} entries for a {d}-dimensional domain",
            params.d()
        )));
    }
    Ok(())
}

/// `n` fractional Brownian sheets on the lattice.
pub fn simulate_fbs_lattice<R: Rng + ?Sized>(
    params: &FbsParams,
    lattice: &LatticeSpec,
    n: usize,
    rng: &mut R,
) -> Result<Vec<FieldRealization>> {
    check_dim(params, lattice.d())?;
    if lattice.p() > MAX_DENSE_SITES {
        return Err(Error::config(format!(
            "lattice with {} sites exceeds the dense Gaussian cap of {MAX_DENSE_SITES}; \
             use the increment-based Brownian sheet simulator for large grids",
            lattice.p()
        )));
    }
    let sampler = GaussianFieldSampler::new(&lattice.sites(), |s, t| params.covariance(s, t))?;
    Ok(sampler.sample_many(n, rng))
}

/// `n` fractional Brownian sheets evaluated at arbitrary locations.
pub fn simulate_fbs_at_points<R: Rng + ?Sized>(
    params: &FbsParams,
    points: &LocationSet,
    n: usize,
    rng: &mut R,
) -> Result<Vec<FieldRealization>> {
    check_dim(params, points.d())?;
    let sampler = GaussianFieldSampler::new(points.points(), |s, t| params.covariance(s, t))?;
    Ok(sampler.sample_many(n, rng))
}

/// `n` Levy fractional Brownian fields at the given sites.
pub fn simulate_levy_fbf<R: Rng + ?Sized>(
    hurst: f64,
    sites: &[Vec<f64>],
    n: usize,
    rng: &mut R,
) -> Result<Vec<FieldRealization>> {
    if !(hurst > 0.0 && hurst < 1.0) {
        return Err(Error::config(format!("Hurst parameter must lie in (0, 1), got {hurst}")));
    }
    let sampler = GaussianFieldSampler::new(sites, |s, t| levy_fbf_covariance(hurst, s, t))?;
    Ok(sampler.sample_many(n, rng))
}
