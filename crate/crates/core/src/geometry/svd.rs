//! Thin singular value decomposition by one-sided (Hestenes) Jacobi rotations.

use crate::autodiff::{dot, Tensor};

const MAX_SWEEPS: usize = 80;
const ORTH_TOL: f64 = 1e-15;

/// `A = U diag(s) Vᵀ` with `U: m x r`, `V: n x r`, `r = min(m, n)`, and `s`
/// sorted in decreasing order.
#[derive(Clone, Debug)]
pub struct ThinSvd {
    pub u: Tensor,
    pub s: Vec<f64>,
    pub v: Tensor,
}

impl ThinSvd {
    pub fn new(a: &Tensor) -> Self {
        let (m, n) = a.dims2();
        if m < n {
            let t = Self::new(&a.transpose());
            return ThinSvd {
                u: t.v,
                s: t.s,
                v: t.u,
            };
        }

        // column-major working copies
        let mut cols: Vec<Vec<f64>> = (0..n).map(|j| a.column(j)).collect();
        let mut vcols: Vec<Vec<f64>> = (0..n)
            .map(|j| {
                let mut e = vec![0.0; n];
                e[j] = 1.0;
                e
            })
            .collect();

        for _ in 0..MAX_SWEEPS {
            let mut rotated = false;
            for p in 0..n {
                for q in p + 1..n {
                    let alpha = dot(&cols[p], &cols[p]);
                    let beta = dot(&cols[q], &cols[q]);
                    let gamma = dot(&cols[p], &cols[q]);
                    if gamma == 0.0 || gamma.abs() <= ORTH_TOL * (alpha * beta).sqrt() {
                        continue;
                    }
                    rotated = true;
                    let zeta = (beta - alpha) / (2.0 * gamma);
                    let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                    let c = 1.0 / (1.0 + t * t).sqrt();
                    let s = c * t;
                    rotate(&mut cols, p, q, c, s);
                    rotate(&mut vcols, p, q, c, s);
                }
            }
            if !rotated {
                break;
            }
        }

        let mut order: Vec<(usize, f64)> = cols
            .iter()
            .enumerate()
            .map(|(j, c)| (j, dot(c, c).sqrt()))
            .collect();
        order.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));

        let mut u = Tensor::zeros(&[m, n]);
        let mut v = Tensor::zeros(&[n, n]);
        let mut s = Vec::with_capacity(n);
        for (k, &(j, sigma)) in order.iter().enumerate() {
            s.push(sigma);
            for i in 0..m {
                let val = if sigma > 0.0 { cols[j][i] / sigma } else { 0.0 };
                u.set(i, k, val);
            }
            for i in 0..n {
                v.set(i, k, vcols[j][i]);
            }
        }
        ThinSvd { u, s, v }
    }

    /// `U diag(s) Vᵀ`
    pub fn reconstruct(&self) -> Tensor {
        let (m, r) = self.u.dims2();
        let n = self.v.rows();
        let mut out = Tensor::zeros(&[m, n]);
        for i in 0..m {
            for j in 0..n {
                let mut acc = 0.0;
                for k in 0..r {
                    acc += self.u.at(i, k) * self.s[k] * self.v.at(j, k);
                }
                out.set(i, j, acc);
            }
        }
        out
    }
}

fn rotate(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (lo, hi) = cols.split_at_mut(q);
    let (cp, cq) = (&mut lo[p], &mut hi[0]);
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let (a, b) = (*x, *y);
        *x = c * a - s * b;
        *y = s * a + c * b;
    }
}
