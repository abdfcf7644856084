//! Poincaré-ball primitives (curvature −1).
//!
//! Convention: `d(0, x) = 2·artanh(‖x‖)` and
//! `exp_0(v) = tanh(‖v‖/2)·v/‖v‖`, so `d(0, exp_0(v)) = ‖v‖`.

use crate::error::{Error, Result};
use crate::vecmath::{dist_sq, dot, norm, norm_sq};

/// Distance kept between projected points and the unit sphere.
pub const BALL_EPS: f64 = 1e-5;
pub const MAX_NORM: f64 = 1.0 - BALL_EPS;

/// A point strictly inside the unit ball.
#[derive(Debug, Clone, PartialEq)]
pub struct PoincareVec(Vec<f64>);

impl PoincareVec {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteInput);
        }
        let n = norm(&coords);
        if n >= 1.0 {
            return Err(Error::OutsideBall(n));
        }
        Ok(Self(coords))
    }

    pub fn origin(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }
}

impl AsRef<[f64]> for PoincareVec {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

fn check_dims(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::DimMismatch {
            expected: a,
            got: b,
        });
    }
    Ok(())
}

/// Hyperbolic distance `arcosh(1 + 2‖u−v‖² / ((1−‖u‖²)(1−‖v‖²)))`.
pub fn poincare_distance(u: &PoincareVec, v: &PoincareVec) -> Result<f64> {
    check_dims(u.dim(), v.dim())?;
    Ok(distance(&u.0, &v.0))
}

/// Evaluated as `2·asinh(‖u−v‖ / √(αβ))`, which equals the arcosh form and
/// stays accurate for nearby points.
pub(crate) fn distance(u: &[f64], v: &[f64]) -> f64 {
    let alpha = 1.0 - norm_sq(u);
    let beta = 1.0 - norm_sq(v);
    let s = dist_sq(u, v).sqrt() / (alpha * beta).sqrt();
    2.0 * s.asinh()
}

/// Gradient of `distance(u, v)` with respect to `u`. Zero at `u == v`.
pub(crate) fn distance_grad_u(u: &[f64], v: &[f64]) -> Vec<f64> {
    let alpha = 1.0 - norm_sq(u);
    let beta = 1.0 - norm_sq(v);
    let q = dist_sq(u, v);
    let diff = q.sqrt();
    if diff == 0.0 {
        return vec![0.0; u.len()];
    }
    let s_sq = q / (alpha * beta);
    let c = 2.0 / ((1.0 + s_sq).sqrt() * diff * (alpha * beta).sqrt());
    u.iter()
        .zip(v)
        .map(|(&ui, &vi)| c * ((ui - vi) + q * ui / alpha))
        .collect()
}

/// Rescale onto the closed ball of radius `MAX_NORM` if needed.
pub fn project_to_ball(x: &[f64]) -> Result<PoincareVec> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput);
    }
    let mut out = x.to_vec();
    project_in_place(&mut out);
    Ok(PoincareVec(out))
}

pub(crate) fn project_in_place(x: &mut [f64]) {
    let n = norm(x);
    if n >= MAX_NORM {
        let s = MAX_NORM / n;
        for v in x.iter_mut() {
            *v *= s;
        }
    }
}

/// Exponential map at the origin, followed by ball projection.
pub fn exp_map_origin(v: &[f64]) -> Result<PoincareVec> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFiniteInput);
    }
    Ok(PoincareVec(exp_map_raw(v)))
}

pub(crate) fn exp_map_raw(v: &[f64]) -> Vec<f64> {
    let n = norm(v);
    if n == 0.0 {
        return vec![0.0; v.len()];
    }
    let f = (0.5 * n).tanh() / n;
    let mut out: Vec<f64> = v.iter().map(|x| f * x).collect();
    project_in_place(&mut out);
    out
}

/// Pull an upstream gradient `g = ∂L/∂p` back through `p = exp_map_origin(z)`.
pub(crate) fn exp_map_origin_vjp(z: &[f64], g: &[f64]) -> Vec<f64> {
    let n = norm(z);
    if n == 0.0 {
        return g.iter().map(|x| 0.5 * x).collect();
    }
    let th = (0.5 * n).tanh();
    let zg = dot(z, g);
    if th >= MAX_NORM {
        // Projection active: p = MAX_NORM·z/‖z‖.
        let c = MAX_NORM / n;
        return g
            .iter()
            .zip(z)
            .map(|(gi, zi)| c * (gi - zi * zg / (n * n)))
            .collect();
    }
    let f = th / n;
    // f'(n)/n, with a series expansion near zero.
    let fp_over_n = if n < 1e-4 {
        -1.0 / 12.0 + n * n / 60.0
    } else {
        let sech2 = 1.0 - th * th;
        (0.5 * n * sech2 - th) / (n * n * n)
    };
    g.iter()
        .zip(z)
        .map(|(gi, zi)| f * gi + fp_over_n * zg * zi)
        .collect()
}

/// Convert a Euclidean gradient at `x` to the Riemannian one:
/// `((1−‖x‖²)²/4)·g`.
pub fn riemannian_rescale(x: &PoincareVec, g_euclidean: &[f64]) -> Result<Vec<f64>> {
    check_dims(x.dim(), g_euclidean.len())?;
    let f = rescale_factor(&x.0);
    Ok(g_euclidean.iter().map(|g| f * g).collect())
}

#[inline]
pub(crate) fn rescale_factor(x: &[f64]) -> f64 {
    let a = 1.0 - norm_sq(x);
    a * a / 4.0
}
