//! Levy sheets with independent stationary increments on `[0,1]^2`, built by
//! drawing one scaled increment per cell and summing from the origin.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::domain::{FieldRealization, LatticeSpec, LocationSet};
use crate::error::{Error, Result};
use crate::fields::stable::StableParams;

/// Increment law of a sheet. For a cell of area `a` the increment is
/// `N(0, a)` (Brownian sheet) or symmetric stable with scale `c a^{1/alpha}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SheetFamily {
    Gaussian,
    Stable(StableParams),
}

impl SheetFamily {
    fn increment<R: Rng + ?Sized>(&self, area: f64, rng: &mut R) -> f64 {
        match self {
            SheetFamily::Gaussian => area.sqrt() * rng.sample::<f64, _>(StandardNormal),
            SheetFamily::Stable(p) => p.rescaled(area.powf(1.0 / p.alpha())).sample(rng),
        }
    }
}

/// Two-dimensional inclusive prefix sums of a row-major `rows x cols` grid.
fn prefix_sum_2d(grid: &mut [f64], cols: usize) {
    if cols == 0 {
        return;
    }
    for row in grid.chunks_mut(cols) {
        for j in 1..cols {
            row[j] += row[j - 1];
        }
    }
    let rows = grid.len() / cols;
    for i in 1..rows {
        for j in 0..cols {
            grid[i * cols + j] += grid[(i - 1) * cols + j];
        }
    }
}

/// `n` sheets on the `q x q` lattice via cell increments of area `1/q^2`.
pub fn simulate_increment_sheet_lattice<R: Rng + ?Sized>(
    family: SheetFamily,
    lattice: &LatticeSpec,
    n: usize,
    rng: &mut R,
) -> Result<Vec<FieldRealization>> {
    if lattice.d() != 2 {
        return Err(Error::config(format!(
            "increment sheets are two-dimensional, lattice has d = {}",
            lattice.d()
        )));
    }
    let q = lattice.q();
    let area = 1.0 / lattice.p() as f64;
    Ok((0..n)
        .map(|_| {
            let mut grid: Vec<f64> = (0..q * q).map(|_| family.increment(area, rng)).collect();
            prefix_sum_2d(&mut grid, q);
            FieldRealization::new(grid)
        })
        .collect())
}

/// Irregular grid cut at the marginal coordinates of a location set.
#[derive(Debug, Clone)]
pub struct IrregularGrid {
    widths: Vec<f64>,
    heights: Vec<f64>,
    /// `(column, row)` of each location in the grid.
    ranks: Vec<(usize, usize)>,
}

impl IrregularGrid {
    pub fn new(points: &LocationSet) -> Result<Self> {
        if points.d() != 2 {
            return Err(Error::config(format!(
                "irregular sheet grids are two-dimensional, locations have d = {}",
                points.d()
            )));
        }
        let cuts = |axis: usize| {
            let mut c: Vec<f64> = points.points().iter().map(|p| p[axis]).collect();
            c.sort_by(f64::total_cmp);
            c.dedup();
            c
        };
        let xs = cuts(0);
        let ys = cuts(1);
        let spans = |c: &[f64]| {
            c.iter()
                .scan(0.0, |prev, &v| {
                    let w = v - *prev;
                    *prev = v;
                    Some(w)
                })
                .collect::<Vec<f64>>()
        };
        let rank = |c: &[f64], v: f64| c.binary_search_by(|x| x.total_cmp(&v)).expect("cut present");
        let ranks = points
            .points()
            .iter()
            .map(|p| (rank(&xs, p[0]), rank(&ys, p[1])))
            .collect();
        Ok(Self {
            widths: spans(&xs),
            heights: spans(&ys),
            ranks,
        })
    }

    pub fn cells(&self) -> usize {
        self.widths.len() * self.heights.len()
    }

    /// Area of the rectangle `[0, x] x [0, y]` below-left of location `j`.
    pub fn lower_left_area(&self, j: usize) -> f64 {
        let (a, b) = self.ranks[j];
        self.widths[..=a].iter().sum::<f64>() * self.heights[..=b].iter().sum::<f64>()
    }

    pub fn sample<R: Rng + ?Sized>(&self, family: SheetFamily, rng: &mut R) -> FieldRealization {
        let cols = self.heights.len();
        let mut grid = Vec::with_capacity(self.cells());
        for w in &self.widths {
            for h in &self.heights {
                grid.push(family.increment(w * h, rng));
            }
        }
        prefix_sum_2d(&mut grid, cols);
        FieldRealization::new(self.ranks.iter().map(|&(a, b)| grid[a * cols + b]).collect())
    }
}

/// `n` sheets of the given family read off at the locations.
pub fn simulate_sheet_at_points<R: Rng + ?Sized>(
    family: SheetFamily,
    points: &LocationSet,
    n: usize,
    rng: &mut R,
) -> Result<Vec<FieldRealization>> {
    let grid = IrregularGrid::new(points)?;
    Ok((0..n).map(|_| grid.sample(family, rng)).collect())
}

/// `n` symmetric stable sheets at the locations.
pub fn simulate_stable_sheet_at_points<R: Rng + ?Sized>(
    params: StableParams,
    points: &LocationSet,
    n: usize,
    rng: &mut R,
) -> Result<Vec<FieldRealization>> {
    simulate_sheet_at_points(SheetFamily::Stable(params), points, n, rng)
}
