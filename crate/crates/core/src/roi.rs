//! Double-deck hyperball around a local dense subgraph.
//!
//! Vertices closer to the center than `r_in` are infective, vertices beyond
//! `r_out` are not; the search radius grows from `r_in` towards `r_out` as the
//! outer loop advances.

use serde::Serialize;

use crate::affinity::{AffinitySource, DataSet};
use crate::error::{AlidError, Result};
use crate::simplex::{density, Subgraph};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoiBall {
    pub center: Vec<f64>,
    pub r_in: f64,
    pub r_out: f64,
    pub lambda_in: f64,
    pub lambda_out: f64,
    /// `pi(x_hat)` the radii were derived from; zero for a bootstrap ball.
    pub density: f64,
    /// Fixed-radius ball used when the radii are undefined.
    pub bootstrap: bool,
}

/// Shifted logistic weight `1 / (1 + e^(4 - c/2))`.
pub fn theta(c: usize) -> f64 {
    1.0 / (1.0 + (4.0 - c as f64 / 2.0).exp())
}

/// Weighted mean `sum_i x_i v_i`.
pub fn center_of(ds: &DataSet, x: &Subgraph) -> Result<Vec<f64>> {
    x.check_indices(ds.n())?;
    let mut center = vec![0.0; ds.d()];
    for (i, w) in x.iter() {
        for (c, v) in center.iter_mut().zip(ds.point(i)) {
            *c += w * v;
        }
    }
    Ok(center)
}

impl RoiBall {
    /// Ball with a fixed radius around the center of `x`.
    pub fn bootstrap(ds: &DataSet, x: &Subgraph, radius: f64) -> Result<Self> {
        Ok(RoiBall {
            center: center_of(ds, x)?,
            r_in: radius,
            r_out: radius,
            lambda_in: 0.0,
            lambda_out: 0.0,
            density: 0.0,
            bootstrap: true,
        })
    }

    /// Effective radius `r_in + theta(c) (r_out - r_in)` in round `c`.
    pub fn radius_at(&self, c: usize) -> f64 {
        self.r_in + theta(c) * (self.r_out - self.r_in)
    }

    pub fn contains(&self, c: usize, ds: &DataSet, j: usize) -> bool {
        ds.distance_to(j, &self.center) <= self.radius_at(c)
    }
}

/// Builds the ball for `x_hat`, evaluating `pi(x_hat)` directly.
pub fn build_ball<S: AffinitySource + ?Sized>(src: &S, xhat: &Subgraph) -> Result<RoiBall> {
    let pi = density(src, xhat)?;
    build_ball_with_density(src.dataset(), xhat, pi)
}

/// Builds the ball from an already known `pi(x_hat)`; touches no affinities.
pub fn build_ball_with_density(ds: &DataSet, xhat: &Subgraph, pi: f64) -> Result<RoiBall> {
    if !(pi > 0.0) {
        return Err(AlidError::ZeroDensity);
    }
    let center = center_of(ds, xhat)?;
    let k = ds.kernel().k;
    let mut lambda_in = 0.0;
    let mut lambda_out = 0.0;
    for (i, w) in xhat.iter() {
        let t = ds.distance_to(i, &center);
        lambda_in += w * (-k * t).exp();
        lambda_out += w * (k * t).exp();
    }
    Ok(RoiBall {
        center,
        r_in: (lambda_in / pi).ln() / k,
        r_out: (lambda_out / pi).ln() / k,
        lambda_in,
        lambda_out,
        density: pi,
        bootstrap: false,
    })
}
