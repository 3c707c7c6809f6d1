//! Small distributional helpers used by the checks and experiment harness.

/// Survival function of the Kolmogorov distribution,
/// `Q(x) = 2 sum_{k>=1} (-1)^{k-1} exp(-2 k^2 x^2)`.
pub fn kolmogorov_survival(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x < 0.2 {
        return 1.0;
    }
    let mut total = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * x * x).exp();
        total += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * total).clamp(0.0, 1.0)
}

fn sorted(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Asymptotic p-value of the one-sample KS test against `U(0,1)`.
pub fn ks_uniform_p_value(values: &[f64]) -> f64 {
    let xs = sorted(values);
    let n = xs.len() as f64;
    let d = xs
        .iter()
        .enumerate()
        .map(|(i, &x)| (x - i as f64 / n).max((i + 1) as f64 / n - x))
        .fold(0.0, f64::max);
    let en = n.sqrt();
    kolmogorov_survival((en + 0.12 + 0.11 / en) * d)
}

/// Two-sample KS statistic `sup |F_a - F_b|`.
pub fn ks_two_sample_statistic(a: &[f64], b: &[f64]) -> f64 {
    let a = sorted(a);
    let b = sorted(b);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Asymptotic p-value of the two-sample KS test.
pub fn ks_two_sample_p_value(a: &[f64], b: &[f64]) -> f64 {
    let d = ks_two_sample_statistic(a, b);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let en = (na * nb / (na + nb)).sqrt();
    kolmogorov_survival((en + 0.12 + 0.11 / en) * d)
}

/// Probability mass function of Binomial(`trials`, `p`) for all counts.
pub fn binomial_pmf(trials: usize, p: f64) -> Vec<f64> {
    assert!((0.0..=1.0).contains(&p));
    if p == 0.0 || p == 1.0 {
        let mut pmf = vec![0.0; trials + 1];
        pmf[if p == 0.0 { 0 } else { trials }] = 1.0;
        return pmf;
    }
    let n = trials as f64;
    let odds = (p / (1.0 - p)).ln();
    let mut log_pmf = n * (1.0 - p).ln();
    let mut pmf = Vec::with_capacity(trials + 1);
    for k in 0..=trials {
        pmf.push(log_pmf.exp());
        let kf = k as f64;
        log_pmf += ((n - kf) / (kf + 1.0)).ln() + odds;
    }
    pmf
}

/// Central acceptance band `[lo, hi]` of rejection counts holding at least
/// `coverage` of the Binomial(`trials`, `p`) mass, with at most
/// `(1 - coverage) / 2` in each tail.
pub fn binomial_band(trials: usize, p: f64, coverage: f64) -> (usize, usize) {
    let pmf = binomial_pmf(trials, p);
    let tail = (1.0 - coverage) / 2.0;
    let mut lo = 0;
    let mut below = 0.0;
    while lo < trials && below + pmf[lo] <= tail {
        below += pmf[lo];
        lo += 1;
    }
    let mut hi = trials;
    let mut above = 0.0;
    while hi > 0 && above + pmf[hi] <= tail {
        above += pmf[hi];
        hi -= 1;
    }
    (lo, hi)
}

/// Median of a sample (mean of the two central order statistics for even sizes).
pub fn median(values: &[f64]) -> f64 {
    quantile_linear(values, 0.5)
}

/// Linearly interpolated sample quantile (type 7).
pub fn quantile_linear(values: &[f64], level: f64) -> f64 {
    assert!(!values.is_empty());
    let v = sorted(values);
    let h = (v.len() - 1) as f64 * level;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}
