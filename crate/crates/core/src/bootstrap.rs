//! Bootstrap independence tests.
//!
//! Two variants are provided:
//!
//! * [`TestVariant::DcorResample`]: the sample distance correlation is
//!   recomputed on every bootstrap sample and the test rejects when the
//!   observed `R_n` reaches the `(1 - xi)` bootstrap quantile.
//! * [`TestVariant::UnKernel`]: the degenerate-kernel bootstrap, where the
//!   plug-in kernel `h2(.,.; F_n)` is computed once and only its arguments are
//!   resampled. The observed side is `n U_n / 6` with `U_n` the order-4
//!   U-statistic, the quantity whose null law the resampled `h2` sums mimic.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use crate::dcov::{dcor, empirical_h2, ustat_dcov, CenteredKernelMatrix};
use crate::domain::DistanceMatrix;
use crate::error::{Error, Result};
use crate::fields::rng::{Purpose, RngStream, StreamId};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TestVariant {
    DcorResample,
    UnKernel,
}

impl TestVariant {
    pub fn name(&self) -> &'static str {
        match self {
            TestVariant::DcorResample => "dcor",
            TestVariant::UnKernel => "un",
        }
    }
}

impl std::str::FromStr for TestVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dcor" | "dcor-resample" => Ok(TestVariant::DcorResample),
            "un" | "un-kernel" => Ok(TestVariant::UnKernel),
            other => Err(Error::config(format!("unknown test variant {other:?}"))),
        }
    }
}

/// How bootstrap samples are drawn for the distance correlation variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Resampling {
    /// `x` kept in place, `y` rows permuted.
    Permutation,
    /// `x` kept in place, `y` indices drawn with replacement.
    Y,
    /// `x` and `y` indices drawn independently.
    Independent,
    /// One index vector shared by both sides; pairs stay together.
    Pairs,
}

impl Resampling {
    pub fn name(&self) -> &'static str {
        match self {
            Resampling::Permutation => "permutation",
            Resampling::Y => "y",
            Resampling::Independent => "independent",
            Resampling::Pairs => "pairs",
        }
    }
}

impl std::str::FromStr for Resampling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "permutation" => Ok(Resampling::Permutation),
            "y" => Ok(Resampling::Y),
            "independent" => Ok(Resampling::Independent),
            "pairs" => Ok(Resampling::Pairs),
            other => Err(Error::config(format!("unknown resampling scheme {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestConfig {
    resamples: usize,
    xi: f64,
    variant: TestVariant,
    resampling: Resampling,
    seed: u64,
    trial: u64,
}

impl TestConfig {
    pub fn new(resamples: usize, xi: f64, variant: TestVariant, seed: u64) -> Result<Self> {
        if resamples < 50 {
            return Err(Error::config(format!("need at least 50 bootstrap resamples, got {resamples}")));
        }
        if !(xi > 0.0 && xi <= 0.5) {
            return Err(Error::config(format!("test level must lie in (0, 0.5], got {xi}")));
        }
        Ok(Self {
            resamples,
            xi,
            variant,
            resampling: Resampling::Permutation,
            seed,
            trial: 0,
        })
    }

    /// Trial index used to derive the resampling streams.
    pub fn with_trial(self, trial: u64) -> Self {
        Self { trial, ..self }
    }

    pub fn with_level(self, xi: f64) -> Result<Self> {
        Self::new(self.resamples, xi, self.variant, self.seed).map(|c| Self {
            trial: self.trial,
            resampling: self.resampling,
            ..c
        })
    }

    pub fn with_resampling(self, resampling: Resampling) -> Self {
        Self { resampling, ..self }
    }

    pub fn resamples(&self) -> usize {
        self.resamples
    }

    pub fn xi(&self) -> f64 {
        self.xi
    }

    pub fn variant(&self) -> TestVariant {
        self.variant
    }

    pub fn resampling(&self) -> Resampling {
        self.resampling
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn trial(&self) -> u64 {
        self.trial
    }

    fn stream(&self, b: usize) -> RngStream {
        RngStream::new(
            self.seed,
            StreamId::new(self.trial, Purpose::Bootstrap).with_index(b as u64),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestResult {
    pub statistic: f64,
    /// One value per resample; degenerate resamples are `-inf`.
    pub bootstrap_values: Vec<f64>,
    pub quantile: f64,
    pub reject: bool,
    pub undefined: bool,
    /// Number of resamples with a defined statistic.
    pub retained: usize,
    pub xi: f64,
    pub variant: TestVariant,
    pub seed: u64,
}

impl TestResult {
    fn undefined(cfg: &TestConfig) -> Self {
        Self {
            statistic: f64::NAN,
            bootstrap_values: Vec::new(),
            quantile: f64::NAN,
            reject: false,
            undefined: true,
            retained: 0,
            xi: cfg.xi,
            variant: cfg.variant,
            seed: cfg.seed,
        }
    }

    fn decide(statistic: f64, bootstrap_values: Vec<f64>, cfg: &TestConfig) -> Self {
        let quantile = order_statistic_quantile(&bootstrap_values, 1.0 - cfg.xi);
        let retained = bootstrap_values.iter().filter(|v| v.is_finite()).count();
        Self {
            statistic,
            quantile,
            reject: statistic >= quantile,
            undefined: false,
            retained,
            bootstrap_values,
            xi: cfg.xi,
            variant: cfg.variant,
            seed: cfg.seed,
        }
    }

    /// Flat record: statistic, quantile, reject, undefined, B, xi, variant, seed.
    pub fn record(&self) -> Vec<String> {
        vec![
            format_float(self.statistic),
            format_float(self.quantile),
            u8::from(self.reject).to_string(),
            u8::from(self.undefined).to_string(),
            self.bootstrap_values.len().to_string(),
            self.xi.to_string(),
            self.variant.name().to_string(),
            self.seed.to_string(),
        ]
    }

    pub const RECORD_HEADER: [&'static str; 8] =
        ["statistic", "quantile", "reject", "undefined", "B", "xi", "variant", "seed"];
}

/// Shortest round-trip representation; `NA` for undefined values.
pub(crate) fn format_float(v: f64) -> String {
    if v.is_nan() {
        "NA".to_string()
    } else {
        format!("{v:?}")
    }
}

/// The `ceil(level * B)`-th smallest value (1-based), no interpolation.
pub fn order_statistic_quantile(values: &[f64], level: f64) -> f64 {
    assert!(!values.is_empty(), "quantile of an empty bootstrap sample");
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let b = sorted.len();
    // Guard against `level * B` landing a hair above an integer.
    let rank = ((level * b as f64) - 1e-9).ceil().clamp(1.0, b as f64) as usize;
    sorted[rank - 1]
}

/// `n` indices drawn uniformly with replacement; applying them to both
/// distance matrices keeps the observed pairs together.
pub fn resample_pairs<R: Rng + ?Sized>(dx: &DistanceMatrix, dy: &DistanceMatrix, rng: &mut R) -> Vec<usize> {
    debug_assert_eq!(dx.n(), dy.n());
    resample_indices(dx.n(), rng)
}

pub(crate) fn resample_indices<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

fn check_inputs(dx: &DistanceMatrix, dy: &DistanceMatrix) -> Result<()> {
    if dx.n() != dy.n() {
        return Err(Error::config(format!(
            "distance matrices differ in order: {} vs {}",
            dx.n(),
            dy.n()
        )));
    }
    if dx.n() < 4 {
        return Err(Error::Domain(format!("bootstrap test needs n >= 4, got {}", dx.n())));
    }
    Ok(())
}

/// Bootstrap test based on the sample distance correlation.
pub fn bootstrap_test_dcor(dx: &DistanceMatrix, dy: &DistanceMatrix, cfg: &TestConfig) -> Result<TestResult> {
    check_inputs(dx, dy)?;
    let Some(statistic) = dcor(dx, dy) else {
        return Ok(TestResult::undefined(cfg));
    };
    let n = dx.n();
    let values: Vec<f64> = (0..cfg.resamples)
        .into_par_iter()
        .map(|b| {
            let mut rng = cfg.stream(b);
            let r = match cfg.resampling {
                Resampling::Permutation => {
                    let mut perm: Vec<usize> = (0..n).collect();
                    perm.shuffle(&mut rng);
                    dcor(dx, &dy.select(&perm))
                }
                Resampling::Y => dcor(dx, &dy.select(&resample_indices(n, &mut rng))),
                Resampling::Pairs => {
                    let ix = resample_indices(n, &mut rng);
                    dcor(&dx.select(&ix), &dy.select(&ix))
                }
                Resampling::Independent => {
                    let ix = resample_indices(n, &mut rng);
                    let iy = resample_indices(n, &mut rng);
                    dcor(&dx.select(&ix), &dy.select(&iy))
                }
            };
            r.unwrap_or(f64::NEG_INFINITY)
        })
        .collect();
    Ok(TestResult::decide(statistic, values, cfg))
}

/// `n^-1 sum_{i != j} H2[idx_i][idx_j]`.
fn resampled_un(h2: &CenteredKernelMatrix, idx: &[usize]) -> f64 {
    let n = idx.len();
    let mut total = 0.0;
    for (i, &a) in idx.iter().enumerate() {
        for (j, &b) in idx.iter().enumerate() {
            if i != j {
                total += h2.get(a, b);
            }
        }
    }
    total / n as f64
}

/// Degenerate-kernel bootstrap with the plug-in kernel fixed at `F_n`.
pub fn bootstrap_test_un(dx: &DistanceMatrix, dy: &DistanceMatrix, cfg: &TestConfig) -> Result<TestResult> {
    check_inputs(dx, dy)?;
    let h2 = empirical_h2(dx, dy)?;
    if h2.max_abs() == 0.0 {
        // Every value ties at zero; reported through the undefined path.
        return Ok(TestResult {
            statistic: 0.0,
            bootstrap_values: vec![0.0; cfg.resamples],
            quantile: 0.0,
            retained: cfg.resamples,
            ..TestResult::undefined(cfg)
        });
    }
    let n = dx.n();
    let statistic = n as f64 * ustat_dcov(dx, dy)? / 6.0;
    let values: Vec<f64> = (0..cfg.resamples)
        .into_par_iter()
        .map(|b| {
            let mut rng = cfg.stream(b);
            resampled_un(&h2, &resample_indices(n, &mut rng))
        })
        .collect();
    Ok(TestResult::decide(statistic, values, cfg))
}

/// Runs the variant selected in `cfg`.
pub fn bootstrap_test(dx: &DistanceMatrix, dy: &DistanceMatrix, cfg: &TestConfig) -> Result<TestResult> {
    match cfg.variant {
        TestVariant::DcorResample => bootstrap_test_dcor(dx, dy, cfg),
        TestVariant::UnKernel => bootstrap_test_un(dx, dy, cfg),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::DcovParams;
    use rand::{RngCore, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn scalars(values: &[f64]) -> DistanceMatrix {
        DistanceMatrix::from_scalars(values, DcovParams::default()).unwrap()
    }

    fn cfg(variant: TestVariant) -> TestConfig {
        TestConfig::new(200, 0.05, variant, 9).unwrap()
    }

    /// RNG whose every draw is zero, so `random_range(0..n)` yields index 0.
    struct ZeroRng;

    impl RngCore for ZeroRng {
        fn next_u32(&mut self) -> u32 {
            0
        }
        fn next_u64(&mut self) -> u64 {
            0
        }
        fn fill_bytes(&mut self, dst: &mut [u8]) {
            dst.fill(0)
        }
    }

    #[test]
    fn config_validation() {
        assert!(TestConfig::new(49, 0.05, TestVariant::DcorResample, 1).is_err());
        assert!(TestConfig::new(100, 0.0, TestVariant::DcorResample, 1).is_err());
        assert!(TestConfig::new(100, 0.6, TestVariant::DcorResample, 1).is_err());
        assert!(TestConfig::new(100, 0.5, TestVariant::UnKernel, 1).is_ok());
    }

    #[test]
    fn degenerate_rng_collapses_resample() {
        let dx = scalars(&[0.0, 1.0, 5.0, 2.0]);
        let dy = scalars(&[3.0, 1.0, 4.0, 1.5]);
        let idx = resample_pairs(&dx, &dy, &mut ZeroRng);
        assert_eq!(idx, vec![0; 4]);
        assert!(dx.select(&idx).as_slice().iter().all(|&v| v == 0.0));
        assert!(dy.select(&idx).as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn distinct_fraction_approaches_one_minus_inverse_e() {
        let n = 50;
        let dx = scalars(&(0..n).map(|i| i as f64).collect::<Vec<_>>());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let reps = 4000;
        let mut frac = 0.0;
        for _ in 0..reps {
            let mut idx = resample_pairs(&dx, &dx, &mut rng);
            idx.sort_unstable();
            idx.dedup();
            frac += idx.len() as f64 / n as f64;
        }
        frac /= reps as f64;
        let expected = 1.0 - (1.0 - 1.0 / n as f64).powi(n);
        assert!((frac - expected).abs() < 0.003, "{frac} vs {expected}");
        assert!((expected - (1.0 - (-1.0f64).exp())).abs() < 0.004);
    }

    #[test]
    fn resampling_is_reproducible() {
        let dx = scalars(&[0.0, 1.0, 5.0, 2.0, 7.0]);
        let a = resample_pairs(&dx, &dx, &mut ChaCha8Rng::seed_from_u64(5));
        let b = resample_pairs(&dx, &dx, &mut ChaCha8Rng::seed_from_u64(5));
        assert_eq!(a, b);
    }

    #[test]
    fn quantile_rank() {
        let v: Vec<f64> = (1..=200).map(f64::from).collect();
        assert_eq!(order_statistic_quantile(&v, 0.95), 190.0);
        assert_eq!(order_statistic_quantile(&v, 0.99), 198.0);
        let v: Vec<f64> = (1..=10).rev().map(f64::from).collect();
        assert_eq!(order_statistic_quantile(&v, 0.9), 9.0);
        assert_eq!(order_statistic_quantile(&v, 0.95), 10.0);
        let with_neg = [f64::NEG_INFINITY, 1.0, 2.0, f64::NEG_INFINITY];
        assert_eq!(order_statistic_quantile(&with_neg, 0.5), f64::NEG_INFINITY);
    }

    #[test]
    fn constant_fields_are_undefined() {
        let dx = scalars(&[1.0; 6]);
        let dy = scalars(&[0.0, 1.0, 2.0, 3.0, 4.0, 5.0]);
        for variant in [TestVariant::DcorResample, TestVariant::UnKernel] {
            let r = bootstrap_test(&dx, &dy, &cfg(variant)).unwrap();
            assert!(r.undefined);
            assert!(!r.reject);
        }
    }

    #[test]
    fn zero_kernel_never_rejects() {
        let dx = scalars(&[2.0; 5]);
        let dy = scalars(&[1.0; 5]);
        let r = bootstrap_test_un(&dx, &dy, &cfg(TestVariant::UnKernel)).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert!(r.bootstrap_values.iter().all(|&v| v == 0.0));
        assert_eq!(r.bootstrap_values.len(), 200);
        assert!(r.undefined && !r.reject);
    }

    #[test]
    fn resampling_names_round_trip() {
        for r in [Resampling::Permutation, Resampling::Y, Resampling::Independent, Resampling::Pairs] {
            assert_eq!(r.name().parse::<Resampling>().unwrap(), r);
        }
        assert_eq!(cfg(TestVariant::DcorResample).resampling(), Resampling::Permutation);
    }

    #[test]
    fn too_small_or_mismatched() {
        let a = scalars(&[0.0, 1.0, 2.0]);
        assert!(matches!(bootstrap_test_dcor(&a, &a, &cfg(TestVariant::DcorResample)), Err(Error::Domain(_))));
        let b = scalars(&[0.0, 1.0, 2.0, 3.0]);
        assert!(matches!(bootstrap_test_un(&a, &b, &cfg(TestVariant::UnKernel)), Err(Error::Config(_))));
    }

    #[test]
    fn deterministic_under_seed_and_trial() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x: Vec<f64> = (0..30).map(|_| rng.random::<f64>()).collect();
        let y: Vec<f64> = (0..30).map(|_| rng.random::<f64>()).collect();
        let (dx, dy) = (scalars(&x), scalars(&y));
        for variant in [TestVariant::DcorResample, TestVariant::UnKernel] {
            let c = cfg(variant).with_trial(4);
            let a = bootstrap_test(&dx, &dy, &c).unwrap();
            let b = bootstrap_test(&dx, &dy, &c).unwrap();
            assert_eq!(a, b);
            let other = bootstrap_test(&dx, &dy, &c.with_trial(5)).unwrap();
            assert_ne!(a.bootstrap_values, other.bootstrap_values);
        }
    }

    #[test]
    fn decision_invariants() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let x: Vec<f64> = (0..25).map(|_| rng.random::<f64>()).collect();
            let y: Vec<f64> = x.iter().map(|v| v + 0.3 * rng.random::<f64>()).collect();
            let (dx, dy) = (scalars(&x), scalars(&y));
            for variant in [TestVariant::DcorResample, TestVariant::UnKernel] {
                let r = bootstrap_test(&dx, &dy, &cfg(variant)).unwrap();
                assert_eq!(r.reject, r.statistic >= r.quantile);
                let q95 = order_statistic_quantile(&r.bootstrap_values, 0.95);
                let q99 = order_statistic_quantile(&r.bootstrap_values, 0.99);
                assert!(q95 <= q99);
                let min = r.bootstrap_values.iter().copied().fold(f64::INFINITY, f64::min);
                if r.statistic < min {
                    assert!(!r.reject);
                }
                if variant == TestVariant::DcorResample {
                    assert!(r
                        .bootstrap_values
                        .iter()
                        .all(|v| *v == f64::NEG_INFINITY || (-1.0..=1.0).contains(v)));
                    assert_eq!(r.retained, r.bootstrap_values.iter().filter(|v| v.is_finite()).count());
                }
            }
        }
    }

    #[test]
    fn perfect_dependence_rejects() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x: Vec<f64> = (0..40).map(|_| rng.random::<f64>()).collect();
        let d = scalars(&x);
        let r = bootstrap_test_dcor(&d, &d, &cfg(TestVariant::DcorResample)).unwrap();
        assert_eq!(r.statistic, 1.0);
        assert!(r.reject);
    }

    #[test]
    fn record_layout() {
        let d = scalars(&[0.0, 1.0, 3.0, 7.0, 2.0]);
        let r = bootstrap_test_dcor(&d, &d, &cfg(TestVariant::DcorResample)).unwrap();
        let rec = r.record();
        assert_eq!(rec.len(), TestResult::RECORD_HEADER.len());
        assert_eq!(rec[0], "1.0");
        assert_eq!(rec[2], "1");
        assert_eq!(rec[3], "0");
        assert_eq!(rec[4], "200");
        assert_eq!(rec[6], "dcor");
    }
}
