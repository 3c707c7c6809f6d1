//! Shared domain types: dependence parameters, the three discretization
//! schemes, field realizations, paired samples and distance matrices.

use crate::error::{Error, Result};
use crate::norms;

/// Exponent applied to the discretized L2 distances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DcovParams {
    beta: f64,
}

impl DcovParams {
    pub fn new(beta: f64) -> Result<Self> {
        if !(beta > 0.0 && beta < 2.0) {
            return Err(Error::config(format!("beta must lie in (0, 2), got {beta}")));
        }
        Ok(Self { beta })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }
}

impl Default for DcovParams {
    fn default() -> Self {
        Self { beta: 1.0 }
    }
}

/// Regular lattice with `q` points per side on `(0,1]^d`.
///
/// Site `i = (i_1, .., i_d)` sits at the upper-right cell corner
/// `(i_1/q, .., i_d/q)` with `1 <= i_j <= q`. Sites are enumerated with the
/// first coordinate varying slowest.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LatticeSpec {
    d: usize,
    q: usize,
}

impl LatticeSpec {
    pub fn new(d: usize, q: usize) -> Result<Self> {
        if d == 0 || q == 0 {
            return Err(Error::config(format!("lattice needs d >= 1 and q >= 1, got d={d}, q={q}")));
        }
        q.checked_pow(d as u32)
            .ok_or_else(|| Error::config(format!("lattice q^d overflows for q={q}, d={d}")))?;
        Ok(Self { d, q })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn q(&self) -> usize {
        self.q
    }

    /// Total number of sites, `q^d`.
    pub fn p(&self) -> usize {
        self.q.pow(self.d as u32)
    }

    /// Coordinates of site number `index` (row-major, first axis slowest).
    pub fn site(&self, index: usize) -> Vec<f64> {
        let mut coords = vec![0.0; self.d];
        let mut rest = index;
        for axis in (0..self.d).rev() {
            coords[axis] = ((rest % self.q) + 1) as f64 / self.q as f64;
            rest /= self.q;
        }
        coords
    }

    pub fn sites(&self) -> Vec<Vec<f64>> {
        (0..self.p()).map(|i| self.site(i)).collect()
    }
}

/// A finite set of observation locations in `[0,1]^d` together with the
/// nominal Poisson intensity that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct LocationSet {
    d: usize,
    points: Vec<Vec<f64>>,
    intensity: f64,
}

impl LocationSet {
    pub fn new(d: usize, points: Vec<Vec<f64>>, intensity: f64) -> Result<Self> {
        if d == 0 {
            return Err(Error::config("location set needs d >= 1"));
        }
        if !(intensity > 0.0 && intensity.is_finite()) {
            return Err(Error::config(format!("intensity must be positive, got {intensity}")));
        }
        for (i, pt) in points.iter().enumerate() {
            if pt.len() != d {
                return Err(Error::config(format!(
                    "point {i} has {} coordinates, expected {d}",
                    pt.len()
                )));
            }
            if pt.iter().any(|c| !(0.0..=1.0).contains(c)) {
                return Err(Error::data(format!("point {i} lies outside [0,1]^{d}: {pt:?}")));
            }
        }
        Ok(Self { d, points, intensity })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    /// Realized number of points `N_p`.
    pub fn count(&self) -> usize {
        self.points.len()
    }

    pub fn intensity(&self) -> f64 {
        self.intensity
    }
}

/// Cell-averaged discretization on top of a random location set.
///
/// The unit cube is cut into `m^d` congruent cells with
/// `m = floor(p_tilde^(1/d))` and `p_tilde = floor(p / ln p)`, so the
/// realized cell count equals `p_tilde` whenever it is a perfect `d`-th power.
#[derive(Debug, Clone, PartialEq)]
pub struct CellAverageSpec {
    base: LocationSet,
    per_axis: usize,
    /// Cell index of each base point, aligned with `base.points()`.
    membership: Vec<usize>,
}

impl CellAverageSpec {
    pub fn new(base: LocationSet) -> Result<Self> {
        let p = base.intensity();
        if p <= 3.0 {
            return Err(Error::config(format!(
                "cell averaging needs intensity p > 3, got {p}"
            )));
        }
        let target = (p / p.ln()).floor() as usize;
        let per_axis = integer_root(target.max(1), base.d()).max(1);
        let membership = base
            .points()
            .iter()
            .map(|pt| cell_index(pt, per_axis))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            base,
            per_axis,
            membership,
        })
    }

    pub fn base(&self) -> &LocationSet {
        &self.base
    }

    /// Number of cells per axis.
    pub fn per_axis(&self) -> usize {
        self.per_axis
    }

    /// Total number of cells, the divisor of the cell-averaged norm.
    pub fn cell_count(&self) -> usize {
        self.per_axis.pow(self.base.d() as u32)
    }

    pub fn membership(&self) -> &[usize] {
        &self.membership
    }

    /// Cell index of an arbitrary point in `[0,1]^d`.
    pub fn cell_of(&self, point: &[f64]) -> Result<usize> {
        if point.len() != self.base.d() {
            return Err(Error::config("point dimension does not match the cell partition"));
        }
        cell_index(point, self.per_axis)
    }
}

/// Largest `m` with `m^d <= value`.
fn integer_root(value: usize, d: usize) -> usize {
    let mut m = (value as f64).powf(1.0 / d as f64).round() as usize;
    while m > 0 && m.checked_pow(d as u32).is_none_or(|v| v > value) {
        m -= 1;
    }
    while (m + 1).checked_pow(d as u32).is_some_and(|v| v <= value) {
        m += 1;
    }
    m
}

/// Half-open cells `[a, b)` per axis; the last cell on each axis is closed at 1.
fn cell_index(point: &[f64], per_axis: usize) -> Result<usize> {
    let mut index = 0;
    for &c in point {
        if !(0.0..=1.0).contains(&c) {
            return Err(Error::data(format!("point {point:?} lies outside the unit cube")));
        }
        let slot = ((c * per_axis as f64).floor() as usize).min(per_axis - 1);
        index = index * per_axis + slot;
    }
    Ok(index)
}

/// How a field is turned into a finite vector, and which discretized L2 norm
/// applies to it.
#[derive(Debug, Clone, PartialEq)]
pub enum DiscretizationScheme {
    Lattice(LatticeSpec),
    Locations(LocationSet),
    CellAverage(CellAverageSpec),
}

impl DiscretizationScheme {
    /// Number of values a conforming realization carries.
    pub fn site_count(&self) -> usize {
        match self {
            DiscretizationScheme::Lattice(l) => l.p(),
            DiscretizationScheme::Locations(s) => s.count(),
            DiscretizationScheme::CellAverage(c) => c.base().count(),
        }
    }

    /// Discretized L2 norm of a conforming value vector.
    pub fn norm(&self, values: &[f64]) -> Result<f64> {
        if values.len() != self.site_count() {
            return Err(Error::config(format!(
                "vector of length {} does not conform to a scheme with {} sites",
                values.len(),
                self.site_count()
            )));
        }
        match self {
            DiscretizationScheme::Lattice(_) => norms::lattice_norm(values),
            DiscretizationScheme::Locations(_) => norms::random_location_norm(values),
            DiscretizationScheme::CellAverage(c) => norms::cell_average_norm(values, c),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            DiscretizationScheme::Lattice(_) => "lattice",
            DiscretizationScheme::Locations(_) => "random",
            DiscretizationScheme::CellAverage(_) => "cell",
        }
    }
}

/// One sampled field: its values at the evaluation sites of a scheme.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldRealization {
    values: Vec<f64>,
}

impl FieldRealization {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Index of the first non-finite value, if any.
    pub fn first_non_finite(&self) -> Option<usize> {
        self.values.iter().position(|v| !v.is_finite())
    }
}

impl From<Vec<f64>> for FieldRealization {
    fn from(values: Vec<f64>) -> Self {
        Self::new(values)
    }
}

/// `n` paired realizations `(X_i, Y_i)` sharing one discretization.
#[derive(Debug, Clone)]
pub struct PairedSample {
    scheme: DiscretizationScheme,
    x: Vec<FieldRealization>,
    y: Vec<FieldRealization>,
}

impl PairedSample {
    pub fn new(
        scheme: DiscretizationScheme,
        x: Vec<FieldRealization>,
        y: Vec<FieldRealization>,
    ) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::config(format!(
                "paired sample sides differ in length: {} vs {}",
                x.len(),
                y.len()
            )));
        }
        if x.len() < 2 {
            return Err(Error::config("paired sample needs n >= 2"));
        }
        check_conforming(&x, &scheme, "x")?;
        check_conforming(&y, &scheme, "y")?;
        Ok(Self { scheme, x, y })
    }

    pub fn scheme(&self) -> &DiscretizationScheme {
        &self.scheme
    }

    pub fn x(&self) -> &[FieldRealization] {
        &self.x
    }

    pub fn y(&self) -> &[FieldRealization] {
        &self.y
    }

    pub fn n(&self) -> usize {
        self.x.len()
    }
}

pub(crate) fn check_conforming(
    side: &[FieldRealization],
    scheme: &DiscretizationScheme,
    label: &str,
) -> Result<()> {
    let sites = scheme.site_count();
    for (i, r) in side.iter().enumerate() {
        if r.len() != sites {
            return Err(Error::config(format!(
                "{label}[{i}] has {} values, scheme has {sites} sites",
                r.len()
            )));
        }
        if let Some(j) = r.first_non_finite() {
            return Err(Error::data(format!(
                "{label}[{i}] has a non-finite value at site {j}"
            )));
        }
    }
    Ok(())
}

/// Symmetric `n x n` matrix of beta-powered distances with zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    entries: Vec<f64>,
}

impl DistanceMatrix {
    /// Builds a matrix from row-major entries, checking the invariants.
    pub fn from_row_major(n: usize, entries: Vec<f64>) -> Result<Self> {
        if entries.len() != n * n {
            return Err(Error::config(format!(
                "expected {} entries for order {n}, got {}",
                n * n,
                entries.len()
            )));
        }
        for k in 0..n {
            if entries[k * n + k] != 0.0 {
                return Err(Error::data(format!("nonzero diagonal at {k}")));
            }
            for l in 0..n {
                let v = entries[k * n + l];
                if !(v.is_finite() && v >= 0.0) {
                    return Err(Error::data(format!("entry ({k},{l}) = {v} is not a finite nonnegative value")));
                }
                if v != entries[l * n + k] {
                    return Err(Error::data(format!("matrix is not symmetric at ({k},{l})")));
                }
            }
        }
        Ok(Self { n, entries })
    }

    /// Pairwise `|a_k - a_l|^beta` for scalar observations.
    pub fn from_scalars(values: &[f64], params: DcovParams) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::data(format!("non-finite scalar observation at index {i}")));
        }
        let n = values.len();
        let mut entries = vec![0.0; n * n];
        for k in 0..n {
            for l in (k + 1)..n {
                let d = (values[k] - values[l]).abs().powf(params.beta());
                entries[k * n + l] = d;
                entries[l * n + k] = d;
            }
        }
        Ok(Self { n, entries })
    }

    pub(crate) fn from_raw(n: usize, entries: Vec<f64>) -> Self {
        debug_assert_eq!(entries.len(), n * n);
        Self { n, entries }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, k: usize, l: usize) -> f64 {
        self.entries[k * self.n + l]
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.entries[k * self.n..(k + 1) * self.n]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.entries
    }

    /// Row sums, accumulated left to right.
    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n).map(|k| self.row(k).iter().sum()).collect()
    }

    /// The matrix of the resampled observations `indices[0], indices[1], ..`.
    pub fn select(&self, indices: &[usize]) -> DistanceMatrix {
        let m = indices.len();
        let mut entries = Vec::with_capacity(m * m);
        for &a in indices {
            let row = self.row(a);
            entries.extend(indices.iter().map(|&b| row[b]));
        }
        DistanceMatrix { n: m, entries }
    }

    /// Every entry multiplied by `factor` (must be nonnegative).
    pub fn scaled(&self, factor: f64) -> DistanceMatrix {
        DistanceMatrix {
            n: self.n,
            entries: self.entries.iter().map(|v| v * factor).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.entries.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}
