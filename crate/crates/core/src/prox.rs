//! Scalar and blockwise proximal kernels for the Huber, squared-hinge and
//! L1 terms.
//!
//! The scalar kernels are total over finite inputs and are meant for inner
//! loops. The vector entry points validate their inputs and reject NaN or
//! infinite values with [`Error::Domain`].

use crate::error::{Error, Result};

/// Clip level `tau >= 0`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Threshold(pub(crate) f64);

impl Threshold {
    pub fn new(tau: f64) -> Result<Self> {
        if !tau.is_finite() || tau < 0.0 {
            return Err(Error::Domain(format!(
                "threshold must be finite and nonnegative, got {tau}"
            )));
        }
        Ok(Threshold(tau))
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }
}

/// `sgn(t) * min(|t|, tau)`.
#[inline]
pub fn clip(t: f64, tau: Threshold) -> f64 {
    t.clamp(-tau.0, tau.0)
}

/// Element of the generalized derivative of [`clip`] at `t`.
///
/// At the kink `|t| = tau` the derivative is set-valued (`[0, 1]`); this
/// always selects 0.
#[inline]
pub fn clip_jacobian(t: f64, tau: Threshold) -> f64 {
    if t.abs() < tau.0 {
        1.0
    } else {
        0.0
    }
}

/// Element of the generalized derivative of `max(0, t)`; selects 0 at `t = 0`.
#[inline]
pub fn relu_jacobian(t: f64) -> f64 {
    if t > 0.0 {
        1.0
    } else {
        0.0
    }
}

/// Soft threshold `sgn(t) * max(|t| - tau, 0)`.
#[inline]
pub fn soft_threshold(t: f64, tau: Threshold) -> f64 {
    t - clip(t, tau)
}

fn check_finite(v: &[f64]) -> Result<()> {
    match v.iter().position(|x| !x.is_finite()) {
        Some(j) => Err(Error::Domain(format!(
            "non-finite input at component {j}: {}",
            v[j]
        ))),
        None => Ok(()),
    }
}

/// Proximal map of `sigma * (tau ||.||_1)^*`, i.e. projection onto the
/// infinity-norm ball of radius `tau`. Independent of `sigma`.
pub fn prox_l1_conjugate(v: &[f64], tau: Threshold) -> Result<Vec<f64>> {
    check_finite(v)?;
    Ok(v.iter().map(|&t| clip(t, tau)).collect())
}

/// Proximal map of `tau ||.||_1` (componentwise soft threshold).
pub fn prox_l1(v: &[f64], tau: Threshold) -> Result<Vec<f64>> {
    check_finite(v)?;
    Ok(v.iter().map(|&t| soft_threshold(t, tau)).collect())
}

/// In-place projection onto the infinity ball; no input validation.
#[inline]
pub fn clip_into(v: &[f64], tau: Threshold, out: &mut [f64]) {
    for (o, &t) in out.iter_mut().zip(v) {
        *o = clip(t, tau);
    }
}
