use crate::autodiff::{gradient, norm, Mlp, Tape, Tensor, Var};
use crate::data::ManifoldDataset;
use crate::error::{Error, Result};
use crate::geometry::Projector;
use crate::metrics::Summary;
use crate::models::Classifier;
use crate::par;

use super::cache::ProjectorCache;

/// Summed input gradients below this norm make the score undefined.
pub const MIN_GRADIENT_NORM: f64 = 1e-12;

/// Records `‖Uᵀ g‖ / ‖g‖` with `g = ∇x Σ_i f_i(x)` on `tape`. The result
/// stays differentiable in `params`, so a second backward pass gives the
/// parameter gradient of the score. Returns `None` when `‖g‖` vanishes.
pub fn record_alignment_term(
    tape: &mut Tape,
    net: &Mlp,
    params: &[Var],
    x: &[f64],
    basis: &Tensor,
) -> Result<Option<Var>> {
    let xv = tape.leaf(Tensor::row(x.to_vec()));
    let logits = net.record_with(tape, xv, params)?;
    record_alignment_from(tape, xv, logits, basis)
}

/// Same as [`record_alignment_term`] for logits already on the tape.
pub fn record_alignment_from(tape: &mut Tape, x: Var, logits: Var, basis: &Tensor) -> Result<Option<Var>> {
    let total = tape.sum(logits)?;
    let g = tape.grad(total, None, &[x])?[0];
    let g2 = tape.mul(g, g)?;
    let gg = tape.sum(g2)?;
    if !(tape.value(gg).data()[0] > MIN_GRADIENT_NORM * MIN_GRADIENT_NORM) {
        return Ok(None);
    }
    let u = tape.leaf(basis.clone());
    let c = tape.matmul(g, u)?;
    let c2 = tape.mul(c, c)?;
    let cc = tape.sum(c2)?;
    if !(tape.value(cc).data()[0] > 0.0) {
        // exactly orthogonal: sqrt has no derivative at 0, use the zero subgradient
        return Ok(Some(tape.constant_like(cc, 0.0)));
    }
    let ratio = tape.div(cc, gg)?;
    Ok(Some(tape.sqrt(ratio)?))
}

/// Value of the training-time alignment term at `x`, or `None` when the
/// summed input gradient vanishes.
pub fn alignment_term(c: &Classifier, x: &[f64], p: &Projector) -> Result<Option<f64>> {
    let mut tape = Tape::new();
    let params = c.net().leaves(&mut tape);
    match record_alignment_term(&mut tape, c.net(), &params, x, p.basis())? {
        Some(v) => Ok(Some(tape.value(v).data()[0])),
        None => Ok(None),
    }
}

/// Parameter gradient of [`alignment_term`], in `Mlp::params` order.
pub fn alignment_param_gradient(c: &Classifier, x: &[f64], p: &Projector) -> Result<Option<Vec<Tensor>>> {
    let mut tape = Tape::new();
    let params = c.net().leaves(&mut tape);
    match record_alignment_term(&mut tape, c.net(), &params, x, p.basis())? {
        Some(v) => Ok(Some(tape.grad_values(v, &Tensor::scalar(1.0), &params)?)),
        None => Ok(None),
    }
}

/// Summed input gradient `Σ_i ∇x f_i(x)` from a single reverse pass.
pub fn summed_input_gradient(c: &Classifier, x: &[f64]) -> Result<Vec<f64>> {
    let seed = Tensor::vector(vec![1.0; c.classes()]);
    Ok(gradient(c.net(), &Tensor::vector(x.to_vec()), &seed)?.into_data())
}

/// Mean per-logit score `(1/C) Σ_i ‖P ∇x f_i‖ / ‖∇x f_i‖`. Logits with a
/// vanishing gradient count as zero.
pub fn per_logit_alignment(c: &Classifier, x: &[f64], p: &Projector) -> Result<f64> {
    let rows = c.input_gradients(x)?;
    let mut total = 0.0;
    for i in 0..rows.rows() {
        match p.alignment_score(rows.row_slice(i)) {
            Ok(s) => total += s.value,
            Err(Error::ZeroGradient) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(total / rows.rows() as f64)
}

/// Both sides of the relaxation comparing the summed-gradient score against
/// the mean per-gradient score, as `lhs = −‖P Σ g_i‖ / ‖Σ g_i‖` and
/// `rhs = −(1/C) Σ ‖P g_i‖ / ‖g_i‖`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundCheck {
    pub lhs: f64,
    pub rhs: f64,
    /// `lhs >= rhs − 1e-12`
    pub holds: bool,
}

pub const BOUND_SLACK: f64 = 1e-12;

/// Evaluates both sides for arbitrary gradients and a linear map `apply`.
/// With `equalize` every gradient is first rescaled to unit norm.
pub fn bound_sides(grads: &[Vec<f64>], apply: impl Fn(&[f64]) -> Result<Vec<f64>>, equalize: bool) -> Result<BoundCheck> {
    if grads.is_empty() {
        return Err(Error::invalid("bound check needs at least one gradient"));
    }
    let d = grads[0].len();
    let mut scaled = Vec::with_capacity(grads.len());
    for g in grads {
        if g.len() != d {
            return Err(Error::dim("check_bound", "gradients of different lengths"));
        }
        let n = norm(g);
        if !(n > 0.0) {
            return Err(Error::ZeroGradient);
        }
        scaled.push(if equalize { g.iter().map(|v| v / n).collect() } else { g.clone() });
    }
    let mut sum = vec![0.0; d];
    let mut rhs = 0.0;
    for g in &scaled {
        sum.iter_mut().zip(g).for_each(|(s, v)| *s += v);
        rhs += norm(&apply(g)?) / norm(g);
    }
    let rhs = -rhs / scaled.len() as f64;
    let sn = norm(&sum);
    if !(sn > 0.0) {
        return Err(Error::ZeroGradient);
    }
    let lhs = -norm(&apply(&sum)?) / sn;
    Ok(BoundCheck {
        lhs,
        rhs,
        holds: lhs >= rhs - BOUND_SLACK,
    })
}

/// Bound check at `x` on the classifier's logit gradients, rescaled to equal
/// norm, against the projector.
pub fn check_bound(c: &Classifier, x: &[f64], p: &Projector) -> Result<BoundCheck> {
    let rows = c.input_gradients(x)?;
    let grads: Vec<Vec<f64>> = (0..rows.rows()).map(|i| rows.row_slice(i).to_vec()).collect();
    bound_sides(&grads, |v| p.project(v), true)
}

/// Per-sample alignment scores of the summed input gradient over a cached
/// dataset, computed through the geometry module.
pub fn as_tr_values(c: &Classifier, ds: &ManifoldDataset, cache: &ProjectorCache) -> Result<Vec<f64>> {
    let scores = par::map_range(ds.len(), |i| -> Result<Option<f64>> {
        let Some(p) = cache.get(i) else { return Ok(None) };
        let g = summed_input_gradient(c, &ds.samples[i].x)?;
        match p.alignment_score(&g) {
            Ok(s) => Ok(Some(s.value)),
            Err(Error::ZeroGradient) => Ok(None),
            Err(e) => Err(e),
        }
    });
    let mut out = Vec::with_capacity(ds.len());
    for s in scores {
        if let Some(v) = s? {
            out.push(v);
        }
    }
    Ok(out)
}

/// Distribution of training-time alignment over the dataset; pure.
pub fn measure_as_tr(c: &Classifier, ds: &ManifoldDataset, cache: &ProjectorCache) -> Result<Summary> {
    Summary::from_values(&as_tr_values(c, ds, cache)?)
}
