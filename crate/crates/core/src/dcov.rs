//! Sample distance covariance and correlation, the order-4 U-statistic, the
//! plug-in second-order Hoeffding kernel and a Monte Carlo estimate of the
//! population distance covariance.
//!
//! Throughout, `A` and `B` denote the beta-powered distance matrices of the
//! `x` and `y` sides of a paired sample.

use crate::domain::{DcovParams, DiscretizationScheme, FieldRealization};
use crate::domain::DistanceMatrix;
use crate::error::{Error, Result};
use crate::fields::rng::RngStream;

/// Sample distance covariances of a paired sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DcovResult {
    pub t_xy: f64,
    pub t_xx: f64,
    pub t_yy: f64,
    /// `None` when one of the self covariances vanishes.
    pub r_xy: Option<f64>,
}

impl DcovResult {
    pub fn is_undefined(&self) -> bool {
        self.r_xy.is_none()
    }
}

fn check_orders(dx: &DistanceMatrix, dy: &DistanceMatrix, min: usize) -> Result<usize> {
    if dx.n() != dy.n() {
        return Err(Error::config(format!(
            "distance matrices differ in order: {} vs {}",
            dx.n(),
            dy.n()
        )));
    }
    if dx.n() < min {
        return Err(Error::Domain(format!("need n >= {min}, got {}", dx.n())));
    }
    Ok(dx.n())
}

/// V-statistic distance covariance in O(n^2).
///
/// Equal to `S_AB/n^2 + (S_A/n^2)(S_B/n^2) - 2 sum a_i b_i / n^3`, but summed
/// as `n^-2 sum_ij Ahat_ij Bhat_ij` over double-centered entries, which avoids
/// cancelling three terms of order one against a small result.
pub(crate) fn vstat(dx: &DistanceMatrix, dy: &DistanceMatrix) -> f64 {
    let n = dx.n();
    let nf = n as f64;
    let ra: Vec<f64> = dx.row_sums().iter().map(|s| s / nf).collect();
    let rb: Vec<f64> = dy.row_sums().iter().map(|s| s / nf).collect();
    let ga = ra.iter().sum::<f64>() / nf;
    let gb = rb.iter().sum::<f64>() / nf;
    let mut total = 0.0;
    for k in 0..n {
        let (ak, bk) = (dx.row(k), dy.row(k));
        let (ca, cb) = (ga - ra[k], gb - rb[k]);
        let row: f64 = (0..n)
            .map(|l| (ak[l] - ra[l] + ca) * (bk[l] - rb[l] + cb))
            .sum();
        total += row;
    }
    total / (nf * nf)
}

fn correlation(t_xy: f64, t_xx: f64, t_yy: f64) -> Option<f64> {
    if t_xx > 0.0 && t_yy > 0.0 {
        Some(t_xy / (t_xx * t_yy).sqrt())
    } else {
        None
    }
}

fn clamp_self(t: f64) -> f64 {
    debug_assert!(t >= -1e-12 * (1.0 + t.abs()), "self distance covariance {t} is negative");
    t.max(0.0)
}

/// Distance covariances and correlation `T_n(X,Y)`, `T_n(X,X)`, `T_n(Y,Y)`
/// and `R_n(X,Y)`.
pub fn sample_dcov(dx: &DistanceMatrix, dy: &DistanceMatrix) -> Result<DcovResult> {
    check_orders(dx, dy, 2)?;
    let t_xy = vstat(dx, dy);
    let t_xx = clamp_self(vstat(dx, dx));
    let t_yy = clamp_self(vstat(dy, dy));
    Ok(DcovResult {
        t_xy,
        t_xx,
        t_yy,
        r_xy: correlation(t_xy, t_xx, t_yy),
    })
}

/// Distance correlation only; `None` for degenerate samples.
pub(crate) fn dcor(dx: &DistanceMatrix, dy: &DistanceMatrix) -> Option<f64> {
    let t_xx = clamp_self(vstat(dx, dx));
    let t_yy = clamp_self(vstat(dy, dy));
    if t_xx > 0.0 && t_yy > 0.0 {
        correlation(vstat(dx, dy), t_xx, t_yy)
    } else {
        None
    }
}

/// U-statistic counterpart of [`sample_dcov`]'s `t_xy`: the average of the
/// order-4 kernel over index tuples with four distinct components.
///
/// With row sums `a_i`, `b_i`, totals `S_A`, `S_B` and `S_AB = sum A_ij B_ij`,
/// the sums over distinct tuples reduce to
///
/// ```text
///   sum A_ij B_ij           = (n-2)(n-3) S_AB
///   sum A_ij B_kl           = S_A S_B - 4 sum a_i b_i + 2 S_AB
///   sum A_ij B_ik           = (n-3) (sum a_i b_i - S_AB)
/// ```
pub fn ustat_dcov(dx: &DistanceMatrix, dy: &DistanceMatrix) -> Result<f64> {
    let n = check_orders(dx, dy, 4)?;
    let nf = n as f64;
    let a = dx.as_slice();
    let b = dy.as_slice();
    let s_ab: f64 = a.iter().zip(b).map(|(u, v)| u * v).sum();
    let s_a: f64 = a.iter().sum();
    let s_b: f64 = b.iter().sum();
    let rows: f64 = dx
        .row_sums()
        .iter()
        .zip(dy.row_sums())
        .map(|(u, v)| u * v)
        .sum();
    let same_pair = (nf - 2.0) * (nf - 3.0) * s_ab;
    let disjoint = s_a * s_b - 4.0 * rows + 2.0 * s_ab;
    let shared_first = (nf - 3.0) * (rows - s_ab);
    let tuples = nf * (nf - 1.0) * (nf - 2.0) * (nf - 3.0);
    Ok((same_pair + disjoint - 2.0 * shared_first) / tuples)
}

/// Plug-in second-order Hoeffding kernel evaluated at all sample pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct CenteredKernelMatrix {
    n: usize,
    h2: Vec<f64>,
}

impl CenteredKernelMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, k: usize, l: usize) -> f64 {
        self.h2[k * self.n + l]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.h2
    }

    pub fn max_abs(&self) -> f64 {
        self.h2.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest absolute row sum (rows and columns agree by symmetry).
    pub fn centering_residual(&self) -> f64 {
        self.h2
            .chunks(self.n)
            .map(|row| row.iter().sum::<f64>().abs())
            .fold(0.0, f64::max)
    }
}

/// Argument slot of the order-4 kernel: an observed index or one of the two
/// integrated-out draws from the empirical distribution.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Slot {
    Fixed(usize),
    Draw(u8),
}

/// Moments of the empirical distribution needed to integrate the kernel
/// terms `A(.,.) B(.,.)` over up to two independent draws.
struct PlugInMoments<'a> {
    a: &'a DistanceMatrix,
    b: &'a DistanceMatrix,
    /// Row means of A, B and A∘B.
    ra: Vec<f64>,
    rb: Vec<f64>,
    /// Grand means of A, B and A∘B.
    ga: f64,
    gb: f64,
    gc: f64,
    /// `mix[x][y] = n^-1 sum_r A(x,r) B(r,y)`.
    mix: Vec<f64>,
    /// `ua[x] = n^-1 sum_r A(x,r) rb[r]`, `ub[y] = n^-1 sum_r ra[r] B(r,y)`.
    ua: Vec<f64>,
    ub: Vec<f64>,
}

impl<'a> PlugInMoments<'a> {
    fn new(a: &'a DistanceMatrix, b: &'a DistanceMatrix) -> Self {
        let n = a.n();
        let nf = n as f64;
        let ra: Vec<f64> = a.row_sums().into_iter().map(|s| s / nf).collect();
        let rb: Vec<f64> = b.row_sums().into_iter().map(|s| s / nf).collect();
        let ga = ra.iter().sum::<f64>() / nf;
        let gb = rb.iter().sum::<f64>() / nf;
        let gc = a
            .as_slice()
            .iter()
            .zip(b.as_slice())
            .map(|(u, v)| u * v)
            .sum::<f64>()
            / (nf * nf);
        let mut mix = vec![0.0; n * n];
        for x in 0..n {
            let row = &mut mix[x * n..(x + 1) * n];
            for (r, &axr) in a.row(x).iter().enumerate() {
                if axr != 0.0 {
                    for (m, &brv) in row.iter_mut().zip(b.row(r)) {
                        *m += axr * brv;
                    }
                }
            }
            row.iter_mut().for_each(|m| *m /= nf);
        }
        let ua = (0..n)
            .map(|x| a.row(x).iter().zip(&rb).map(|(u, v)| u * v).sum::<f64>() / nf)
            .collect();
        let ub = (0..n)
            .map(|y| (0..n).map(|r| ra[r] * b.get(r, y)).sum::<f64>() / nf)
            .collect();
        Self {
            a,
            b,
            ra,
            rb,
            ga,
            gb,
            gc,
            mix,
            ua,
            ub,
        }
    }

    fn marginal(m: &DistanceMatrix, rows: &[f64], grand: f64, s: [Slot; 2]) -> f64 {
        match s {
            [Slot::Fixed(x), Slot::Fixed(y)] => m.get(x, y),
            [Slot::Fixed(x), Slot::Draw(_)] | [Slot::Draw(_), Slot::Fixed(x)] => rows[x],
            [Slot::Draw(_), Slot::Draw(_)] => grand,
        }
    }

    /// Expectation of `A(sa) * B(sb)` over the draws.
    fn expect(&self, sa: [Slot; 2], sb: [Slot; 2]) -> f64 {
        let shared: Vec<u8> = sa
            .iter()
            .filter_map(|s| match s {
                Slot::Draw(d) if sb.contains(s) => Some(*d),
                _ => None,
            })
            .collect();
        match shared.as_slice() {
            [] => {
                Self::marginal(self.a, &self.ra, self.ga, sa)
                    * Self::marginal(self.b, &self.rb, self.gb, sb)
            }
            [d] => {
                let other = |s: [Slot; 2]| if s[0] == Slot::Draw(*d) { s[1] } else { s[0] };
                match (other(sa), other(sb)) {
                    (Slot::Fixed(x), Slot::Fixed(y)) => self.mix[x * self.a.n() + y],
                    (Slot::Draw(_), Slot::Fixed(y)) => self.ub[y],
                    (Slot::Fixed(x), Slot::Draw(_)) => self.ua[x],
                    (Slot::Draw(_), Slot::Draw(_)) => unreachable!("second draw would be shared"),
                }
            }
            _ => self.gc,
        }
    }

    /// Non-symmetric kernel `f` integrated over the draws in its slots.
    fn kernel(&self, w: [Slot; 4]) -> f64 {
        let first = [w[0], w[1]];
        self.expect(first, first) + self.expect(first, [w[2], w[3]])
            - 2.0 * self.expect(first, [w[0], w[2]])
    }

    /// `E[h(z_k, z_l, Z_3, Z_4)]` with `Z_3, Z_4` iid from the empirical law.
    fn conditional(&self, k: usize, l: usize) -> f64 {
        let args = [Slot::Fixed(k), Slot::Fixed(l), Slot::Draw(0), Slot::Draw(1)];
        let total: f64 = PERMUTATIONS_4
            .iter()
            .map(|p| self.kernel([args[p[0]], args[p[1]], args[p[2]], args[p[3]]]))
            .sum();
        total / 24.0
    }
}

pub(crate) const PERMUTATIONS_4: [[usize; 4]; 24] = [
    [0, 1, 2, 3], [0, 1, 3, 2], [0, 2, 1, 3], [0, 2, 3, 1], [0, 3, 1, 2], [0, 3, 2, 1],
    [1, 0, 2, 3], [1, 0, 3, 2], [1, 2, 0, 3], [1, 2, 3, 0], [1, 3, 0, 2], [1, 3, 2, 0],
    [2, 0, 1, 3], [2, 0, 3, 1], [2, 1, 0, 3], [2, 1, 3, 0], [2, 3, 0, 1], [2, 3, 1, 0],
    [3, 0, 1, 2], [3, 0, 2, 1], [3, 1, 0, 2], [3, 1, 2, 0], [3, 2, 0, 1], [3, 2, 1, 0],
];

/// Plug-in kernel `h2(Z_k, Z_l; F_n)`: every expectation of the symmetrized
/// order-4 kernel is taken under the empirical distribution of the paired
/// sample, with independent draws (V-type).
///
/// The matrix is `g` double-centered, where `g(k,l) = E[h(z_k, z_l, Z_3, Z_4)]`;
/// hence all row and column sums vanish.
pub fn empirical_h2(dx: &DistanceMatrix, dy: &DistanceMatrix) -> Result<CenteredKernelMatrix> {
    let n = check_orders(dx, dy, 2)?;
    let moments = PlugInMoments::new(dx, dy);
    let mut g = vec![0.0; n * n];
    for k in 0..n {
        for l in k..n {
            let v = moments.conditional(k, l);
            g[k * n + l] = v;
            g[l * n + k] = v;
        }
    }
    let nf = n as f64;
    let means: Vec<f64> = g.chunks(n).map(|r| r.iter().sum::<f64>() / nf).collect();
    let grand = means.iter().sum::<f64>() / nf;
    let mut h2 = vec![0.0; n * n];
    for k in 0..n {
        for l in k..n {
            let v = g[k * n + l] - means[k] - means[l] + grand;
            h2[k * n + l] = v;
            h2[l * n + k] = v;
        }
    }
    Ok(CenteredKernelMatrix { n, h2 })
}

/// `n^-1 sum_{i != j} h2(i, j)`.
pub fn un_statistic(h2: &CenteredKernelMatrix) -> f64 {
    let n = h2.n();
    let mut total = 0.0;
    for i in 0..n {
        for (j, v) in h2.h2[i * n..(i + 1) * n].iter().enumerate() {
            if i != j {
                total += v;
            }
        }
    }
    total / n as f64
}

/// Monte Carlo estimate with a standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub estimate: f64,
    pub std_error: f64,
    pub reps: usize,
}

/// Delete-one jackknife standard error of the sample mean.
pub(crate) fn jackknife_mean(samples: &[f64]) -> McEstimate {
    let r = samples.len();
    let rf = r as f64;
    let total: f64 = samples.iter().sum();
    let mean = total / rf;
    let loo: Vec<f64> = samples.iter().map(|s| (total - s) / (rf - 1.0)).collect();
    let loo_mean = loo.iter().sum::<f64>() / rf;
    let var = (rf - 1.0) / rf * loo.iter().map(|v| (v - loo_mean).powi(2)).sum::<f64>();
    McEstimate {
        estimate: mean,
        std_error: var.sqrt(),
        reps: r,
    }
}

/// Population distance covariance
/// `E[A12 B12] + E[A12] E[B12] - 2 E[A12 B13]` by plain Monte Carlo.
///
/// Each replication draws four independent pairs from `simulator` and
/// evaluates the unbiased single-draw kernel
/// `A12 B12 + A12 B34 - 2 A12 B13`.
pub fn population_dcov_mc<F>(
    mut simulator: F,
    params: DcovParams,
    scheme: &DiscretizationScheme,
    reps: usize,
    seed: u64,
) -> Result<McEstimate>
where
    F: FnMut(&mut RngStream) -> Result<(FieldRealization, FieldRealization)>,
{
    if reps < 100 {
        return Err(Error::config(format!("population estimate needs reps >= 100, got {reps}")));
    }
    let beta = params.beta();
    let dist = |u: &FieldRealization, v: &FieldRealization| -> Result<f64> {
        if u.len() != v.len() {
            return Err(Error::config("realizations differ in length"));
        }
        let diff: Vec<f64> = u.values().iter().zip(v.values()).map(|(a, b)| a - b).collect();
        Ok(scheme.norm(&diff)?.powf(beta))
    };
    let mut rng = RngStream::new(seed, crate::fields::rng::StreamId::new(0, crate::fields::rng::Purpose::Population));
    let mut samples = Vec::with_capacity(reps);
    for rep in 0..reps {
        let draw = |rng: &mut RngStream, simulator: &mut F| {
            simulator(rng).map_err(|e| Error::Replication {
                replication: rep,
                source: Box::new(e),
            })
        };
        let (x1, y1) = draw(&mut rng, &mut simulator)?;
        let (x2, y2) = draw(&mut rng, &mut simulator)?;
        let (_x3, y3) = draw(&mut rng, &mut simulator)?;
        let (_x4, y4) = draw(&mut rng, &mut simulator)?;
        let a12 = dist(&x1, &x2)?;
        samples.push(a12 * dist(&y1, &y2)? + a12 * dist(&y3, &y4)? - 2.0 * a12 * dist(&y1, &y3)?);
    }
    Ok(jackknife_mean(&samples))
}
