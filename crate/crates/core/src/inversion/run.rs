use std::sync::atomic::{AtomicUsize, Ordering};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::smoothing::{paa_gradient, taa_gradient};
use super::transforms::{grid_side, TransformSet};
use crate::autodiff::{DiffMap, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::models::{softmax, Classifier, Generator, LossKind};
use crate::rng;
use crate::training::{Optimizer, OptimizerConfig, OptimizerKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Smoothing {
    None,
    Paa,
    Taa,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LatentOptimizer {
    /// `z ← z − η g`
    Gradient,
    Adam,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InversionConfig {
    pub steps: usize,
    pub step_size: f64,
    /// Weight of the `½‖z‖²` latent prior.
    pub lambda: f64,
    pub loss: LossKind,
    pub smoothing: Smoothing,
    /// Samples per smoothed gradient.
    #[serde(rename = "K")]
    pub k: usize,
    /// Perturbation scale as a fraction of the image's dynamic range.
    pub alpha: f64,
    pub transforms: TransformSet,
    pub track_every: usize,
    pub optimizer: LatentOptimizer,
    /// Standard deviation of the initial latent.
    pub init_scale: f64,
    pub seed: u64,
}

impl Default for InversionConfig {
    fn default() -> Self {
        InversionConfig {
            steps: 100,
            step_size: 0.05,
            lambda: 0.01,
            loss: LossKind::Logit,
            smoothing: Smoothing::None,
            k: 50,
            alpha: 0.05,
            transforms: TransformSet::default(),
            track_every: 10,
            optimizer: LatentOptimizer::Gradient,
            init_scale: 1.0,
            seed: 0,
        }
    }
}

impl InversionConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.steps >= 1
            && self.k >= 1
            && self.track_every >= 1
            && self.step_size >= 0.0
            && self.lambda >= 0.0
            && self.alpha >= 0.0
            && self.init_scale >= 0.0;
        if !ok {
            return Err(Error::Config(format!(
                "inversion needs steps, K, track_every >= 1 and non-negative step size, lambda, alpha (got {self:?})"
            )));
        }
        Ok(())
    }
}

/// State at the start of one inversion step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub z: Vec<f64>,
    /// Class loss plus weighted prior.
    pub loss: f64,
    pub class_loss: f64,
    /// `softmax_y(f(G(z)))`
    pub confidence: f64,
    /// Alignment of the gradient used for the update, on tracked steps.
    pub as_inv: Option<f64>,
    /// Alignment of the unsmoothed class-loss gradient, on tracked steps.
    pub as_raw: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InversionRun {
    pub target: usize,
    pub records: Vec<StepRecord>,
    pub final_z: Vec<f64>,
    pub final_x: Vec<f64>,
    pub final_loss: f64,
    pub final_confidence: f64,
    /// Classifier gradient evaluations spent, a deterministic cost measure.
    pub gradient_evaluations: usize,
}

impl InversionRun {
    pub fn tracked(&self) -> impl Iterator<Item = &StepRecord> {
        self.records.iter().filter(|r| r.as_inv.is_some())
    }

    /// Alignment at the last tracked step.
    pub fn final_as_inv(&self) -> Option<f64> {
        self.records.iter().rev().find_map(|r| r.as_inv)
    }

    pub fn mean_as_inv(&self) -> Option<f64> {
        let v: Vec<f64> = self.records.iter().filter_map(|r| r.as_inv).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }
}

/// `L(f(G(z)), y) + λ ½‖z‖²` as a scalar map of `z`.
pub struct InversionObjective<'a> {
    pub classifier: &'a Classifier,
    pub generator: &'a Generator,
    pub target: usize,
    pub lambda: f64,
    pub loss: LossKind,
}

impl DiffMap for InversionObjective<'_> {
    fn input_dim(&self) -> usize {
        self.generator.latent_dim()
    }

    fn output_dim(&self) -> usize {
        1
    }

    fn record(&self, tape: &mut Tape, z: Var) -> Result<Var> {
        let x = self.generator.record(tape, z)?;
        let logits = self.classifier.net().record(tape, x)?;
        let cls = self.loss.record(tape, logits, self.target)?;
        if self.lambda == 0.0 {
            return Ok(cls);
        }
        let zz = tape.mul(z, z)?;
        let s = tape.sum(zz)?;
        let prior = tape.scale(s, 0.5 * self.lambda)?;
        tape.add(cls, prior)
    }
}

/// Value of the inversion objective at `z`.
pub fn inversion_loss(z: &[f64], y: usize, c: &Classifier, g: &Generator, lambda: f64, kind: LossKind) -> Result<f64> {
    let x = g.sample(z)?;
    Ok(c.class_loss(&x, y, kind)? + 0.5 * lambda * z.iter().map(|v| v * v).sum::<f64>())
}

/// Latent direction used by one plain step: `J_Gᵀ g̃ + λ z`, where `g̃` is the
/// (possibly smoothed) ambient class-loss gradient.
pub struct LatentStep {
    pub direction: Vec<f64>,
    pub ambient: Vec<f64>,
    pub raw_ambient: Vec<f64>,
    pub class_loss: f64,
    pub confidence: f64,
    pub x: Vec<f64>,
}

fn check_target(c: &Classifier, g: &Generator, y: usize) -> Result<()> {
    if y >= c.classes() {
        return Err(Error::invalid(format!("target {y} outside 0..{}", c.classes())));
    }
    if g.ambient_dim() != c.input_dim() {
        return Err(Error::dim(
            "invert",
            format!("generator emits {} values, classifier reads {}", g.ambient_dim(), c.input_dim()),
        ));
    }
    Ok(())
}

/// Computes the update direction at `z` for step `step` of a run.
pub fn latent_step(c: &Classifier, g: &Generator, y: usize, z: &[f64], step: usize, cfg: &InversionConfig, evals: &AtomicUsize) -> Result<LatentStep> {
    let mut trace = g.trace(z)?;
    let x = trace.output().into_data();
    let logits = c.logits(&x)?;
    let class_loss = cfg.loss.value(&logits, y);
    let confidence = softmax(&logits)[y];
    let grad = |v: &[f64]| -> Result<Vec<f64>> {
        evals.fetch_add(1, Ordering::Relaxed);
        c.loss_gradient(v, y, cfg.loss).map(|r| r.1)
    };
    let raw_ambient = grad(&x)?;
    let mut r = rng::indexed(cfg.seed, "smoothing", step as u64);
    let ambient = match cfg.smoothing {
        Smoothing::None => raw_ambient.clone(),
        Smoothing::Paa => paa_gradient(&x, &grad, cfg.k, cfg.alpha, &mut r)?,
        Smoothing::Taa => taa_gradient(&x, &grad, cfg.k, grid_side(x.len())?, &cfg.transforms, &mut r)?,
    };
    let pulled = trace.vjp(&Tensor::vector(ambient.clone()))?.into_data();
    let direction = pulled.iter().zip(z).map(|(a, b)| a + cfg.lambda * b).collect();
    Ok(LatentStep {
        direction,
        ambient,
        raw_ambient,
        class_loss,
        confidence,
        x,
    })
}

/// Starting latent for a run with this config.
pub fn initial_latent(k: usize, cfg: &InversionConfig) -> Vec<f64> {
    let mut r = rng::stream(cfg.seed, "initial-latent");
    (0..k).map(|_| cfg.init_scale * r.sample::<f64, _>(StandardNormal)).collect()
}

/// Latent-space attack on class `y`.
pub fn invert(c: &Classifier, g: &Generator, y: usize, cfg: &InversionConfig) -> Result<InversionRun> {
    invert_from(c, g, y, initial_latent(g.latent_dim(), cfg), cfg)
}

pub fn invert_from(c: &Classifier, g: &Generator, y: usize, z0: Vec<f64>, cfg: &InversionConfig) -> Result<InversionRun> {
    cfg.validate()?;
    check_target(c, g, y)?;
    if z0.len() != g.latent_dim() {
        return Err(Error::dim("invert", format!("initial latent of length {}", z0.len())));
    }
    let evals = AtomicUsize::new(0);
    let mut z = Tensor::vector(z0);
    let mut adam = match cfg.optimizer {
        LatentOptimizer::Adam => Some(Optimizer::new(
            OptimizerConfig {
                kind: OptimizerKind::Adam,
                learning_rate: cfg.step_size,
                ..OptimizerConfig::default()
            },
            &[&z],
        )),
        LatentOptimizer::Gradient => None,
    };
    let mut records = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let zv = z.data().to_vec();
        let ls = latent_step(c, g, y, &zv, step, cfg, &evals)?;
        let prior = 0.5 * cfg.lambda * zv.iter().map(|v| v * v).sum::<f64>();
        let loss = ls.class_loss + prior;
        if !loss.is_finite() || ls.direction.iter().any(|v| !v.is_finite()) {
            return Err(Error::InversionDiverged { step });
        }
        let (as_inv, as_raw) = if (step + 1) % cfg.track_every == 0 {
            match g.tangent(&zv) {
                Ok(p) => (
                    p.alignment_score(&ls.ambient).ok().map(|s| s.value),
                    p.alignment_score(&ls.raw_ambient).ok().map(|s| s.value),
                ),
                Err(Error::DegenerateTangent { .. }) => {
                    log::debug!("step {step}: rank-deficient generator jacobian, alignment not recorded");
                    (None, None)
                }
                Err(e) => return Err(e),
            }
        } else {
            (None, None)
        };
        records.push(StepRecord {
            step,
            z: zv,
            loss,
            class_loss: ls.class_loss,
            confidence: ls.confidence,
            as_inv,
            as_raw,
        });
        match adam.as_mut() {
            Some(opt) => opt.step(&mut [&mut z], &[Tensor::vector(ls.direction)])?,
            None => {
                let eta = cfg.step_size;
                z.data_mut().iter_mut().zip(&ls.direction).for_each(|(a, d)| *a -= eta * d);
            }
        }
    }
    let final_z = z.into_data();
    let final_x = g.sample(&final_z)?;
    let logits = c.logits(&final_x)?;
    let final_loss = cfg.loss.value(&logits, y) + 0.5 * cfg.lambda * final_z.iter().map(|v| v * v).sum::<f64>();
    if !final_loss.is_finite() {
        return Err(Error::InversionDiverged { step: cfg.steps });
    }
    Ok(InversionRun {
        target: y,
        records,
        final_z,
        final_x,
        final_loss,
        final_confidence: softmax(&logits)[y],
        gradient_evaluations: evals.into_inner(),
    })
}

/// One point of the mean alignment and confidence trajectory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DynamicsPoint {
    pub step: usize,
    pub mean_as_inv: f64,
    pub mean_confidence: f64,
    pub runs: usize,
}

/// Averages tracked alignment and confidence across runs, per tracked step.
pub fn alignment_dynamics(runs: &[InversionRun]) -> Vec<DynamicsPoint> {
    let mut acc: std::collections::BTreeMap<usize, (f64, f64, usize)> = Default::default();
    for run in runs {
        for r in run.tracked() {
            let e = acc.entry(r.step).or_insert((0.0, 0.0, 0));
            e.0 += r.as_inv.expect("tracked");
            e.1 += r.confidence;
            e.2 += 1;
        }
    }
    acc.into_iter()
        .map(|(step, (a, c, n))| DynamicsPoint {
            step,
            mean_as_inv: a / n as f64,
            mean_confidence: c / n as f64,
            runs: n,
        })
        .collect()
}
