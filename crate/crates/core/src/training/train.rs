use std::path::PathBuf;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::alignment::{as_tr_values, record_alignment_from};
use super::cache::{ProjectorCache, ProjectorSourceKind};
use super::optim::{Optimizer, OptimizerConfig};
use crate::autodiff::{Tape, Tensor};
use crate::data::ManifoldDataset;
use crate::error::{Error, Result};
use crate::models::{Classifier, LossKind};
use crate::{par, rng};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub optimizer: OptimizerConfig,
    pub epochs: usize,
    pub batch_size: usize,
    /// Weight of the alignment term; 0 gives plain cross-entropy training.
    pub beta: f64,
    pub seed: u64,
    pub projector_source: ProjectorSourceKind,
    /// When set, the classifier is written here after every epoch as
    /// `epoch-NNN.json`.
    #[serde(skip)]
    pub checkpoint_dir: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            optimizer: OptimizerConfig::default(),
            epochs: 30,
            batch_size: 32,
            beta: 0.0,
            seed: 0,
            projector_source: ProjectorSourceKind::Oracle,
            checkpoint_dir: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.optimizer.validate()?;
        if self.batch_size == 0 || !(self.beta >= 0.0) || !self.beta.is_finite() {
            return Err(Error::Config(format!(
                "batch_size must be positive and beta non-negative (got {}, {})",
                self.batch_size, self.beta
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    /// Mean batch objective over the epoch.
    pub train_loss: f64,
    /// Mean alignment term over samples that contributed one.
    pub train_alignment: Option<f64>,
    pub train_acc: f64,
    pub test_acc: f64,
    /// Mean training-time alignment over the cached training set after the
    /// epoch.
    pub as_tr_mean: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct Trained {
    pub classifier: Classifier,
    pub history: Vec<EpochMetrics>,
}

impl Trained {
    /// `epoch,train_loss,test_acc,as_tr_mean` rows with a header.
    pub fn history_csv(&self) -> String {
        let mut s = String::from("epoch,train_loss,train_acc,test_acc,as_tr_mean\n");
        for m in &self.history {
            let as_tr = m.as_tr_mean.map(|v| format!("{v:.12}")).unwrap_or_default();
            s.push_str(&format!(
                "{},{:.12},{:.12},{:.12},{}\n",
                m.epoch, m.train_loss, m.train_acc, m.test_acc, as_tr
            ));
        }
        s
    }
}

/// Standard cross-entropy training.
pub fn train_classifier(c: Classifier, train: &ManifoldDataset, test: &ManifoldDataset, cfg: &TrainConfig) -> Result<Trained> {
    if cfg.beta != 0.0 {
        return Err(Error::Config("train_classifier needs beta = 0; use train_aligned".into()));
    }
    run(c, train, test, None, cfg)
}

/// Cross-entropy minus `beta` times the alignment term of the summed input
/// gradient, differentiated through the input-gradient computation.
pub fn train_aligned(
    c: Classifier,
    train: &ManifoldDataset,
    test: &ManifoldDataset,
    cache: &ProjectorCache,
    cfg: &TrainConfig,
) -> Result<Trained> {
    cache.check_covers(train.len())?;
    run(c, train, test, Some(cache), cfg)
}

struct BatchResult {
    loss: f64,
    alignment: Option<f64>,
    grads: Vec<Tensor>,
}

fn sample_objective(
    c: &Classifier,
    x: &[f64],
    y: usize,
    projector: Option<&Tensor>,
    beta: f64,
    scale: f64,
) -> Result<BatchResult> {
    let net = c.net();
    let mut tape = Tape::new();
    let params = net.leaves(&mut tape);
    let xv = tape.leaf(Tensor::row(x.to_vec()));
    let logits = net.record_with(&mut tape, xv, &params)?;
    let ce = LossKind::CrossEntropy.record(&mut tape, logits, y)?;
    let mut objective = ce;
    let mut alignment = None;
    if beta != 0.0 {
        if let Some(basis) = projector {
            match record_alignment_from(&mut tape, xv, logits, basis)? {
                Some(a) => {
                    alignment = Some(tape.value(a).data()[0]);
                    let weighted = tape.scale(a, beta)?;
                    objective = tape.sub(ce, weighted)?;
                }
                None => log::debug!("summed input gradient vanished; alignment term skipped"),
            }
        }
    }
    let scaled = tape.scale(objective, scale)?;
    let loss = tape.value(objective).data()[0];
    let grads = tape.grad_values(scaled, &Tensor::scalar(1.0), &params)?;
    Ok(BatchResult { loss, alignment, grads })
}

fn run(
    mut c: Classifier,
    train: &ManifoldDataset,
    test: &ManifoldDataset,
    cache: Option<&ProjectorCache>,
    cfg: &TrainConfig,
) -> Result<Trained> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::invalid("empty training set"));
    }
    if let Some(dir) = &cfg.checkpoint_dir {
        std::fs::create_dir_all(dir)?;
    }
    let mut opt = Optimizer::new(cfg.optimizer.clone(), &c.net().params());
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..train.len()).collect();

    for epoch in 0..cfg.epochs {
        order.sort_unstable();
        order.shuffle(&mut rng::indexed(cfg.seed, "batch-order", epoch as u64));
        let (mut loss_sum, mut batches) = (0.0, 0usize);
        let (mut align_sum, mut align_n) = (0.0, 0usize);

        for batch in order.chunks(cfg.batch_size) {
            let scale = 1.0 / batch.len() as f64;
            let cref = &c;
            let results = par::map_slice(batch, |&i| {
                let s = &train.samples[i];
                let basis = cache.and_then(|k| k.get(i)).map(|p| p.basis());
                sample_objective(cref, &s.x, s.y, basis, cfg.beta, scale)
            });
            let mut total: Option<Vec<Tensor>> = None;
            let mut batch_loss = 0.0;
            for r in results {
                let r = r.map_err(|e| diverged(e, epoch))?;
                batch_loss += r.loss;
                if let Some(a) = r.alignment {
                    align_sum += a;
                    align_n += 1;
                }
                total = Some(match total {
                    None => r.grads,
                    Some(acc) => acc.iter().zip(&r.grads).map(|(a, b)| a.add(b)).collect(),
                });
            }
            let batch_loss = batch_loss * scale;
            if !batch_loss.is_finite() {
                return Err(Error::TrainingDiverged { epoch });
            }
            loss_sum += batch_loss;
            batches += 1;
            let grads = total.expect("non-empty batch");
            if grads.iter().any(|g| !g.is_finite()) {
                return Err(Error::TrainingDiverged { epoch });
            }
            opt.step(&mut c.net_mut().params_mut(), &grads)?;
        }

        let train_acc = accuracy(&c, train)?;
        let test_acc = if test.is_empty() { f64::NAN } else { accuracy(&c, test)? };
        let as_tr_mean = match cache {
            Some(k) => {
                let v = as_tr_values(&c, train, k)?;
                (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
            }
            None => None,
        };
        let m = EpochMetrics {
            epoch,
            train_loss: loss_sum / batches as f64,
            train_alignment: (align_n > 0).then(|| align_sum / align_n as f64),
            train_acc,
            test_acc,
            as_tr_mean,
        };
        log::debug!("epoch {epoch}: {m:?}");
        history.push(m);
        if let Some(dir) = &cfg.checkpoint_dir {
            c.net().save(&dir.join(format!("epoch-{epoch:03}.json")))?;
        }
    }
    Ok(Trained { classifier: c, history })
}

fn diverged(e: Error, epoch: usize) -> Error {
    match e {
        Error::NonFinite { .. } => Error::TrainingDiverged { epoch },
        other => other,
    }
}

/// Parallel accuracy over a dataset.
pub fn accuracy(c: &Classifier, ds: &ManifoldDataset) -> Result<f64> {
    if ds.is_empty() {
        return Err(Error::invalid("accuracy of an empty set"));
    }
    let hits = par::map_slice(&ds.samples, |s| c.predict(&s.x).map(|p| p == s.y));
    let mut n = 0usize;
    for h in hits {
        if h? {
            n += 1;
        }
    }
    Ok(n as f64 / ds.len() as f64)
}
