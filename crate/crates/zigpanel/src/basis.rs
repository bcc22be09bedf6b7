//! Natural cubic spline basis for the temporal effects f(t) and g(t).
//!
//! Convention: with `df` basis functions we place `df - 1` interior knots
//! equally spaced between the boundary knots at day 1 and day `n_days`
//! (df + 1 knots in total). The natural cubic spline space on those knots
//! has dimension df + 1 and contains the constants; the basis here spans
//! its constant-free complement, built from the truncated-power
//! construction: the identity column plus the differenced truncated
//! cubics. Every basis function is piecewise cubic, C² at the knots, and
//! linear beyond the boundary knots. Keeping constants out of the span is
//! what makes the spline curves identified next to the model intercepts.

use serde::{Deserialize, Serialize};

use crate::real::Real;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplineBasis<R> {
    df: usize,
    boundary_knots: (R, R),
    interior_knots: Vec<R>,
}

impl<R: Real> SplineBasis<R> {
    /// Basis over the day grid `1..=n_days` with `df` functions.
    pub fn for_days(n_days: usize, df: usize) -> Result<Self> {
        if df < 3 {
            return Err(Error::BasisDf(df));
        }
        if n_days <= df {
            return Err(Error::BasisGrid { n_days, df });
        }
        let lo = R::one();
        let hi = R::of_usize(n_days);
        let span = hi - lo;
        let interior = (1..df)
            .map(|j| lo + span * R::of_usize(j) / R::of_usize(df))
            .collect();
        Ok(Self { df, boundary_knots: (lo, hi), interior_knots: interior })
    }

    /// Basis with explicit knots, used when refitting against a stored manifest.
    pub fn from_knots(boundary_knots: (R, R), interior_knots: Vec<R>) -> Result<Self> {
        let df = interior_knots.len() + 1;
        if df < 3 {
            return Err(Error::BasisDf(df));
        }
        let (lo, hi) = boundary_knots;
        let mut prev = lo;
        for &k in &interior_knots {
            if k <= prev || k >= hi {
                return Err(Error::Invalid(format!(
                    "interior knot {k} not strictly inside ({lo}, {hi}) in increasing order"
                )));
            }
            prev = k;
        }
        Ok(Self { df, boundary_knots, interior_knots })
    }

    pub fn df(&self) -> usize {
        self.df
    }

    pub fn boundary_knots(&self) -> (R, R) {
        self.boundary_knots
    }

    pub fn interior_knots(&self) -> &[R] {
        &self.interior_knots
    }

    /// All knots in day units, boundaries included, ascending.
    pub fn knots(&self) -> Vec<R> {
        let mut k = Vec::with_capacity(self.df + 1);
        k.push(self.boundary_knots.0);
        k.extend_from_slice(&self.interior_knots);
        k.push(self.boundary_knots.1);
        k
    }

    /// Design row (B_1(t), …, B_df(t)) for a day value `t`.
    pub fn evaluate(&self, t: R) -> Vec<R> {
        let (lo, hi) = self.boundary_knots;
        let span = hi - lo;
        let u = (t - lo) / span;
        // knots on the unit interval
        let xi: Vec<R> = self
            .knots()
            .into_iter()
            .map(|k| (k - lo) / span)
            .collect();
        let last = xi[xi.len() - 1];
        let second_last_idx = xi.len() - 2;
        let d = |j: usize| -> R {
            let a = pos_cube(u - xi[j]);
            let b = pos_cube(u - last);
            (a - b) / (last - xi[j])
        };
        let d_ref = d(second_last_idx);
        let mut row = Vec::with_capacity(self.df);
        row.push(u);
        for j in 0..self.df - 1 {
            row.push(d(j) - d_ref);
        }
        row
    }

    /// Design matrix for a grid of day values, one row per grid point.
    pub fn design(&self, grid: &[R]) -> Vec<Vec<R>> {
        grid.iter().map(|&t| self.evaluate(t)).collect()
    }

    /// Design matrix on the integer day grid 1..=n_days.
    pub fn design_days(&self, n_days: usize) -> Vec<Vec<R>> {
        (1..=n_days).map(|t| self.evaluate(R::of_usize(t))).collect()
    }

    /// Curve Σ_k coeffs[k]·B_k(t) on a grid.
    pub fn curve(&self, coeffs: &[R], grid: &[R]) -> Result<Vec<R>> {
        if coeffs.len() != self.df {
            return Err(Error::Dimension(format!(
                "basis has {} functions but got {} coefficients",
                self.df,
                coeffs.len()
            )));
        }
        Ok(grid
            .iter()
            .map(|&t| {
                self.evaluate(t)
                    .iter()
                    .zip(coeffs)
                    .map(|(&b, &c)| b * c)
                    .sum()
            })
            .collect())
    }
}

fn pos_cube<R: Real>(x: R) -> R {
    let p = x.max(R::zero());
    p * p * p
}
