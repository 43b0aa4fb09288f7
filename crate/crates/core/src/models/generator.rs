use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::autodiff::{evaluate, Checkpoint, jacobian, Activation, DiffMap, Layer, Mlp, Tape, Tensor, Trace, Var};
use crate::error::{Error, Result};
use crate::geometry::{tangent_projector, Projector, ThinSvd, RANK_TOL};
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GeneratorKind {
    OracleAnalytic,
    LearnedDecoder,
}

/// Shape of the fixed random manifold `z ↦ W2ᵀ tanh(W1ᵀ z + b1) + b2` whose
/// outputs live on a `grid x grid` image.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    pub latent_dim: usize,
    pub grid: usize,
    pub hidden: usize,
    /// Gaussian blur width, in pixels, applied to every output pattern.
    pub smoothness: f64,
    /// Standard deviation of the hidden pre-activations for `z ~ N(0, I)`.
    pub latent_gain: f64,
    pub hidden_bias: f64,
    pub output_scale: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            latent_dim: 4,
            grid: 8,
            hidden: 32,
            smoothness: 1.0,
            latent_gain: 1.0,
            hidden_bias: 0.5,
            output_scale: 1.0,
        }
    }
}

impl OracleConfig {
    pub fn ambient_dim(&self) -> usize {
        self.grid * self.grid
    }
}

#[derive(Serialize, Deserialize)]
struct GeneratorFile {
    kind: GeneratorKind,
    net: Checkpoint,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Generator {
    kind: GeneratorKind,
    net: Mlp,
}

impl Generator {
    /// Builds the oracle generator and checks full column rank at 100 latent
    /// draws.
    pub fn oracle(cfg: &OracleConfig, seed: u64) -> Result<Self> {
        if cfg.latent_dim == 0 || cfg.grid == 0 || cfg.hidden < cfg.latent_dim {
            return Err(Error::Config(format!(
                "oracle generator needs 1 <= latent_dim <= hidden and grid >= 1 (got k={}, hidden={}, grid={})",
                cfg.latent_dim, cfg.hidden, cfg.grid
            )));
        }
        let d = cfg.ambient_dim();
        if cfg.latent_dim > d {
            return Err(Error::Config(format!("latent_dim {} exceeds ambient {d}", cfg.latent_dim)));
        }
        let (k, h) = (cfg.latent_dim, cfg.hidden);
        let mut r = rng::stream(seed, "oracle-generator");

        let std1 = cfg.latent_gain / (k as f64).sqrt();
        let w1: Vec<f64> = (0..k * h).map(|_| std1 * r.sample::<f64, _>(StandardNormal)).collect();
        let b1: Vec<f64> = (0..h).map(|_| cfg.hidden_bias * r.sample::<f64, _>(StandardNormal)).collect();

        let mut w2 = Vec::with_capacity(h * d);
        for _ in 0..h {
            let field = smooth_field(cfg.grid, cfg.smoothness, &mut r);
            w2.extend(field.into_iter().map(|v| v * cfg.output_scale));
        }
        let b2: Vec<f64> = smooth_field(cfg.grid, cfg.smoothness, &mut r)
            .into_iter()
            .map(|v| v * cfg.output_scale * 0.3 * (d as f64).sqrt())
            .collect();

        let net = Mlp::from_layers(vec![
            Layer::Linear {
                weight: Tensor::matrix(k, h, w1)?,
                bias: Tensor::row(b1),
            },
            Layer::Act(Activation::Tanh),
            Layer::Linear {
                weight: Tensor::matrix(h, d, w2)?,
                bias: Tensor::row(b2),
            },
        ])?;
        let g = Generator {
            kind: GeneratorKind::OracleAnalytic,
            net,
        };
        g.check_full_rank(100, rng::derive_str(seed, "rank-check"))?;
        Ok(g)
    }

    /// Wraps a trained decoder.
    pub fn learned(net: Mlp) -> Self {
        Generator {
            kind: GeneratorKind::LearnedDecoder,
            net,
        }
    }

    pub fn kind(&self) -> GeneratorKind {
        self.kind
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    pub fn latent_dim(&self) -> usize {
        self.net.input_dim()
    }

    pub fn ambient_dim(&self) -> usize {
        self.net.output_dim()
    }

    fn check_latent(&self, z: &[f64]) -> Result<()> {
        if z.len() != self.latent_dim() {
            return Err(Error::dim("sample_generator", format!("latent of length {} for k = {}", z.len(), self.latent_dim())));
        }
        Ok(())
    }

    pub fn sample(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.check_latent(z)?;
        Ok(evaluate(&self.net, &Tensor::vector(z.to_vec()))?.into_data())
    }

    /// `d x k` jacobian by reverse mode.
    pub fn jacobian(&self, z: &[f64]) -> Result<Tensor> {
        self.check_latent(z)?;
        jacobian(&self.net, &Tensor::vector(z.to_vec()))
    }

    /// Orthogonal projector onto the tangent space at `G(z)`.
    pub fn tangent(&self, z: &[f64]) -> Result<Projector> {
        let jac = self.jacobian(z)?;
        tangent_projector(&jac, self.sample(z)?)
    }

    /// Forward trace at `z` for pulling ambient gradients back to latent space.
    pub fn trace(&self, z: &[f64]) -> Result<Trace> {
        self.check_latent(z)?;
        Trace::new(&self.net, &Tensor::vector(z.to_vec()))
    }

    /// `G(0)`.
    pub fn basepoint(&self) -> Result<Vec<f64>> {
        self.sample(&vec![0.0; self.latent_dim()])
    }

    /// Closed-form jacobian `W2ᵀ diag(1 − tanh²(W1ᵀz + b1)) W1ᵀ` of a
    /// single-hidden-layer tanh generator, computed without the tape.
    pub fn analytic_jacobian(&self, z: &[f64]) -> Result<Tensor> {
        self.check_latent(z)?;
        let (w1, b1, w2) = match self.net.layers() {
            [Layer::Linear { weight: w1, bias: b1 }, Layer::Act(Activation::Tanh), Layer::Linear { weight: w2, .. }] => {
                (w1, b1, w2)
            }
            _ => return Err(Error::invalid("analytic jacobian needs a linear-tanh-linear generator")),
        };
        let (k, h) = w1.dims2();
        let d = w2.cols();
        let pre: Vec<f64> = (0..h)
            .map(|j| b1.data()[j] + (0..k).map(|a| z[a] * w1.at(a, j)).sum::<f64>())
            .collect();
        let slope: Vec<f64> = pre.iter().map(|p| 1.0 - p.tanh().powi(2)).collect();
        let mut jac = Tensor::zeros(&[d, k]);
        for i in 0..d {
            for a in 0..k {
                let v: f64 = (0..h).map(|j| w2.at(j, i) * slope[j] * w1.at(a, j)).sum();
                jac.set(i, a, v);
            }
        }
        Ok(jac)
    }

    /// Writes `{"kind", "net"}` with the net in checkpoint form.
    pub fn save(&self, path: &Path) -> Result<()> {
        let doc = GeneratorFile {
            kind: self.kind,
            net: self.net.to_checkpoint(),
        };
        std::fs::write(path, serde_json::to_vec(&doc)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let doc: GeneratorFile = serde_json::from_slice(&std::fs::read(path)?)?;
        Ok(Generator {
            kind: doc.kind,
            net: Mlp::from_checkpoint(&doc.net)?,
        })
    }

    /// Fails unless the jacobian has full column rank at `n` standard-normal
    /// latent draws.
    pub fn check_full_rank(&self, n: usize, seed: u64) -> Result<()> {
        let mut r = rng::stream(seed, "full-rank");
        for _ in 0..n {
            let z: Vec<f64> = (0..self.latent_dim()).map(|_| r.sample(StandardNormal)).collect();
            let s = ThinSvd::new(&self.jacobian(&z)?).s;
            if !(s[s.len() - 1] > RANK_TOL * s[0]) {
                return Err(Error::DegenerateTangent { spectrum: s });
            }
        }
        Ok(())
    }
}

impl DiffMap for Generator {
    fn input_dim(&self) -> usize {
        self.latent_dim()
    }
    fn output_dim(&self) -> usize {
        self.ambient_dim()
    }
    fn record(&self, tape: &mut Tape, input: Var) -> Result<Var> {
        self.net.record(tape, input)
    }
}

/// Unit-norm white noise on a `g x g` grid blurred by a Gaussian of width
/// `sigma` pixels (zero padding).
fn smooth_field<R: Rng + ?Sized>(g: usize, sigma: f64, r: &mut R) -> Vec<f64> {
    let noise: Vec<f64> = (0..g * g).map(|_| r.sample(StandardNormal)).collect();
    let mut out = if sigma > 0.0 {
        let radius = (3.0 * sigma).ceil() as isize;
        let kernel: Vec<f64> = (-radius..=radius)
            .map(|t| (-(t * t) as f64 / (2.0 * sigma * sigma)).exp())
            .collect();
        let blur = |src: &[f64], horizontal: bool| -> Vec<f64> {
            let mut dst = vec![0.0; g * g];
            for row in 0..g {
                for col in 0..g {
                    let mut acc = 0.0;
                    for (ki, &w) in kernel.iter().enumerate() {
                        let off = ki as isize - radius;
                        let (rr, cc) = if horizontal {
                            (row as isize, col as isize + off)
                        } else {
                            (row as isize + off, col as isize)
                        };
                        if rr >= 0 && cc >= 0 && (rr as usize) < g && (cc as usize) < g {
                            acc += w * src[rr as usize * g + cc as usize];
                        }
                    }
                    dst[row * g + col] = acc;
                }
            }
            dst
        };
        blur(&blur(&noise, true), false)
    } else {
        noise
    };
    let n = crate::autodiff::norm(&out);
    out.iter_mut().for_each(|v| *v /= n);
    out
}
