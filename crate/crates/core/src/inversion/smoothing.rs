use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::StandardNormal;

use super::transforms::{Composite, TransformSet};
use crate::error::{Error, Result};
use crate::par;

/// Ambient loss gradient at a point.
pub type LossGrad<'a> = dyn Fn(&[f64]) -> Result<Vec<f64>> + Sync + 'a;

fn mean_of(parts: Vec<Result<Vec<f64>>>, weights: &[f64], d: usize) -> Result<Vec<f64>> {
    let mut acc = vec![0.0; d];
    for (g, &w) in parts.into_iter().zip(weights) {
        let g = g?;
        if g.len() != d {
            return Err(Error::dim("smoothed_gradient", format!("gradient of length {} for d = {d}", g.len())));
        }
        acc.iter_mut().zip(&g).for_each(|(a, v)| *a += w * v);
    }
    Ok(acc)
}

/// Noise scale `alpha · (max(x) − min(x))`.
pub fn paa_sigma(x: &[f64], alpha: f64) -> f64 {
    let mx = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mn = x.iter().copied().fold(f64::INFINITY, f64::min);
    alpha * (mx - mn)
}

/// Mean of `∇L(x + ε)` over `k` draws of `ε ~ N(0, σ² I)` with
/// `σ = alpha · (max(x) − min(x))`.
///
/// Noise is drawn up front from `rng`, so the result does not depend on how
/// the gradient evaluations are scheduled. A zero `σ` returns `∇L(x)` itself.
pub fn paa_gradient<R: Rng + ?Sized>(x: &[f64], grad: &LossGrad, k: usize, alpha: f64, rng: &mut R) -> Result<Vec<f64>> {
    if k == 0 || !(alpha >= 0.0) {
        return Err(Error::invalid(format!("paa needs K >= 1 and alpha >= 0 (got {k}, {alpha})")));
    }
    let sigma = paa_sigma(x, alpha);
    if sigma == 0.0 {
        if alpha > 0.0 {
            log::debug!("constant input: perturbation scale is zero, using the base gradient");
        }
        return grad(x);
    }
    let d = x.len();
    let noise: Vec<Vec<f64>> = (0..k)
        .map(|_| (0..d).map(|_| sigma * rng.sample::<f64, _>(StandardNormal)).collect())
        .collect();
    let parts = par::map_slice(&noise, |eps| {
        let xk: Vec<f64> = x.iter().zip(eps).map(|(a, b)| a + b).collect();
        grad(&xk)
    });
    mean_of(parts, &vec![1.0 / k as f64; k], d)
}

/// Mean of `τᵀ ∇L(τ(x))` over `k` transforms drawn from `set`.
///
/// Each sampled transform is a linear map of the image, and its gradient is
/// pulled back through the adjoint so every sample lives in the pixel frame
/// of `x`. Repeated draws share one evaluation weighted by their count; when
/// every draw is the identity the result is `∇L(x)` itself.
pub fn taa_gradient<R: Rng + ?Sized>(
    x: &[f64],
    grad: &LossGrad,
    k: usize,
    grid: usize,
    set: &TransformSet,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if k == 0 {
        return Err(Error::invalid("taa needs K >= 1"));
    }
    set.validate(grid)?;
    if x.len() != grid * grid {
        return Err(Error::dim("taa_gradient", format!("input of length {} for a {grid}x{grid} grid", x.len())));
    }
    let mut counts: BTreeMap<Composite, usize> = BTreeMap::new();
    for _ in 0..k {
        *counts.entry(set.sample(rng)).or_default() += 1;
    }
    if counts.keys().all(Composite::is_identity) {
        return grad(x);
    }
    let draws: Vec<(Composite, usize)> = counts.into_iter().collect();
    let parts = par::map_slice(&draws, |(t, _)| {
        let xt = t.apply(grid, x)?;
        t.apply_transpose(grid, &grad(&xt)?)
    });
    let weights: Vec<f64> = draws.iter().map(|(_, n)| *n as f64 / k as f64).collect();
    mean_of(parts, &weights, x.len())
}
