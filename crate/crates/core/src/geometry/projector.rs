use std::path::Path;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::svd::ThinSvd;
use crate::autodiff::{dot, norm, Tensor};
use crate::error::{Error, Result};
use crate::{par, rng};

/// Singular values below this fraction of the largest count as zero.
pub const RANK_TOL: f64 = 1e-10;
const ORTHONORMAL_TOL: f64 = 1e-10;

/// Orthogonal projection onto a tangent space, stored as an orthonormal
/// `d x k` basis plus the manifold point it was taken at.
#[derive(Clone, Debug, PartialEq)]
pub struct Projector {
    basis: Tensor,
    anchor: Vec<f64>,
}

/// Ratio `‖P g‖ / ‖g‖` with its parts.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlignmentScore {
    pub value: f64,
    pub gradient_norm: f64,
    pub projected_norm: f64,
}

impl Projector {
    /// Projector onto `Range(jac)` for a full-column-rank `d x k` jacobian.
    pub fn from_jacobian(jac: &Tensor, anchor: Vec<f64>) -> Result<Self> {
        let (d, k) = jac.dims2();
        if k > d {
            return Err(Error::dim("tangent_projector", format!("jacobian [{d}, {k}] is wider than tall")));
        }
        if anchor.len() != d {
            return Err(Error::dim("tangent_projector", format!("anchor of length {} for d = {d}", anchor.len())));
        }
        let svd = ThinSvd::new(jac);
        let top = svd.s[0];
        let bottom = *svd.s.last().expect("k >= 1");
        if !(top > 0.0) || !(bottom > RANK_TOL * top) || svd.s.iter().any(|s| !s.is_finite()) {
            return Err(Error::DegenerateTangent { spectrum: svd.s });
        }
        Ok(Projector {
            basis: svd.u,
            anchor,
        })
    }

    /// Wraps an existing basis after checking `basisᵀ basis = I` to 1e-10.
    pub fn from_basis(basis: Tensor, anchor: Vec<f64>) -> Result<Self> {
        let (d, k) = basis.dims2();
        if k > d || anchor.len() != d {
            return Err(Error::dim("projector", format!("basis [{d}, {k}], anchor {}", anchor.len())));
        }
        let gram = basis.transpose().matmul(&basis)?;
        let err = gram.sub(&Tensor::identity(k)).max_abs();
        if !(err <= ORTHONORMAL_TOL) {
            return Err(Error::invalid(format!("basis is not orthonormal (max deviation {err:.3e})")));
        }
        Ok(Projector { basis, anchor })
    }

    /// Projector onto the first `k` coordinate axes of `R^d`.
    pub fn coordinate(d: usize, k: usize) -> Self {
        assert!(1 <= k && k <= d);
        let mut basis = Tensor::zeros(&[d, k]);
        for i in 0..k {
            basis.set(i, i, 1.0);
        }
        Projector {
            basis,
            anchor: vec![0.0; d],
        }
    }

    pub fn ambient_dim(&self) -> usize {
        self.basis.rows()
    }

    pub fn intrinsic_dim(&self) -> usize {
        self.basis.cols()
    }

    pub fn basis(&self) -> &Tensor {
        &self.basis
    }

    pub fn anchor(&self) -> &[f64] {
        &self.anchor
    }

    fn check_len(&self, op: &'static str, v: &[f64]) -> Result<()> {
        if v.len() != self.ambient_dim() {
            return Err(Error::dim(op, format!("vector of length {} for d = {}", v.len(), self.ambient_dim())));
        }
        Ok(())
    }

    /// Coordinates `Uᵀ v` in the tangent basis.
    pub fn coefficients(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.check_len("project", v)?;
        Ok(self.basis.matvec_t(v))
    }

    /// `U (Uᵀ v)`
    pub fn project(&self, v: &[f64]) -> Result<Vec<f64>> {
        let c = self.coefficients(v)?;
        Ok(self.basis.matvec(&c))
    }

    /// Dense `d x d` matrix `U Uᵀ`; for inspection only.
    pub fn matrix(&self) -> Tensor {
        self.basis
            .matmul(&self.basis.transpose())
            .expect("conforming")
    }

    pub fn alignment_score(&self, grad: &[f64]) -> Result<AlignmentScore> {
        self.check_len("alignment_score", grad)?;
        let gn = norm(grad);
        if !(gn > 0.0) {
            return Err(Error::ZeroGradient);
        }
        // ‖U Uᵀ g‖ = ‖Uᵀ g‖ for orthonormal U
        let pn = norm(&self.basis.matvec_t(grad));
        Ok(AlignmentScore {
            value: (pn / gn).min(1.0),
            gradient_norm: gn,
            projected_norm: pn.min(gn),
        })
    }

    pub fn to_record(&self) -> ProjectorRecord {
        ProjectorRecord {
            ambient_dim: self.ambient_dim(),
            intrinsic_dim: self.intrinsic_dim(),
            anchor: self.anchor.clone(),
            basis: self.basis.data().to_vec(),
        }
    }

    pub fn from_record(r: ProjectorRecord) -> Result<Self> {
        let basis = Tensor::matrix(r.ambient_dim, r.intrinsic_dim, r.basis)?;
        Self::from_basis(basis, r.anchor)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_vec(&self.to_record())?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let r: ProjectorRecord = serde_json::from_slice(&std::fs::read(path)?)?;
        Self::from_record(r)
    }
}

/// Serialized projector: basis in row-major order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectorRecord {
    pub ambient_dim: usize,
    pub intrinsic_dim: usize,
    pub anchor: Vec<f64>,
    pub basis: Vec<f64>,
}

pub fn tangent_projector(jac: &Tensor, anchor: Vec<f64>) -> Result<Projector> {
    Projector::from_jacobian(jac, anchor)
}

pub fn project(p: &Projector, v: &[f64]) -> Result<Vec<f64>> {
    p.project(v)
}

/// `J (Jᵀ g)`: the pushforward of the pulled-back gradient.
pub fn unnormalized_push(jac: &Tensor, grad: &[f64]) -> Result<Vec<f64>> {
    let (d, _) = jac.dims2();
    if grad.len() != d {
        return Err(Error::dim("unnormalized_push", format!("gradient of length {} for d = {d}", grad.len())));
    }
    let latent = jac.matvec_t(grad);
    Ok(jac.matvec(&latent))
}

pub fn alignment_score(p: &Projector, grad: &[f64]) -> Result<AlignmentScore> {
    p.alignment_score(grad)
}

/// Analytic `√(k/d)` and the mean score of `samples` isotropic random
/// directions against a fixed `k`-dimensional coordinate subspace.
pub fn random_baseline(k: usize, d: usize, samples: usize, seed: u64) -> Result<(f64, f64)> {
    if k == 0 || k > d || samples == 0 {
        return Err(Error::invalid(format!("need 1 <= k <= d and samples >= 1 (k={k}, d={d}, samples={samples})")));
    }
    let analytic = (k as f64 / d as f64).sqrt();
    let scores = par::map_range(samples, |i| {
        let mut r = rng::indexed(seed, "random-baseline", i as u64);
        loop {
            let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut r)).collect();
            let total = dot(&v, &v);
            if total > 0.0 {
                let head = dot(&v[..k], &v[..k]);
                return (head / total).sqrt();
            }
        }
    });
    let empirical = scores.iter().sum::<f64>() / samples as f64;
    Ok((analytic, empirical))
}
