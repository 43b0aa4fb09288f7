use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::optim::{Optimizer, OptimizerConfig};
use crate::autodiff::{evaluate, Activation, DiffMap, Mlp, Tape, Tensor};
use crate::data::ManifoldDataset;
use crate::error::{Error, Result};
use crate::geometry::{Projector, ThinSvd};
use crate::models::Generator;
use crate::{par, rng};

/// Fraction of encoded training points allowed a rank-deficient decoder
/// jacobian.
pub const MAX_DEGENERATE_FRACTION: f64 = 0.01;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecoderConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerConfig,
    /// Held-out reconstruction MSE (per coordinate) the decoder must reach.
    pub mse_threshold: f64,
    pub holdout_fraction: f64,
    pub seed: u64,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        DecoderConfig {
            hidden: 64,
            epochs: 300,
            batch_size: 64,
            optimizer: OptimizerConfig {
                learning_rate: 3e-3,
                ..OptimizerConfig::default()
            },
            mse_threshold: 1e-3,
            holdout_fraction: 0.2,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainedDecoder {
    pub decoder: Generator,
    pub encoder: Mlp,
    pub train_mse: f64,
    pub holdout_mse: f64,
    /// Encoded training points whose decoder jacobian failed the rank check.
    pub degenerate: usize,
}

/// Trains a tanh autoencoder `d → hidden → k → hidden → d` on `ds`.
///
/// Fails with [`Error::DecoderUnderfit`] when the held-out MSE stays above the
/// threshold, and with [`Error::DegenerateDecoder`] when more than 1% of the
/// encoded training points give a rank-deficient jacobian.
pub fn train_decoder(ds: &ManifoldDataset, k: usize, cfg: &DecoderConfig) -> Result<TrainedDecoder> {
    cfg.optimizer.validate()?;
    if k == 0 || k > ds.ambient_dim || cfg.hidden == 0 || cfg.batch_size == 0 {
        return Err(Error::Config(format!("decoder needs 1 <= k <= d and positive sizes (k={k})")));
    }
    let (fit, held) = ds.split(cfg.holdout_fraction, rng::derive_str(cfg.seed, "decoder-holdout"));
    if fit.is_empty() {
        return Err(Error::invalid("no training samples left for the decoder"));
    }
    let d = ds.ambient_dim;
    let mut r = rng::stream(cfg.seed, "decoder-init");
    let mut encoder = Mlp::random(&[d, cfg.hidden, k], Activation::Tanh, 1.0, &mut r);
    let mut decoder = Mlp::random(&[k, cfg.hidden, d], Activation::Tanh, 1.0, &mut r);
    let mut all: Vec<&Tensor> = encoder.params();
    all.extend(decoder.params());
    let mut opt = Optimizer::new(cfg.optimizer.clone(), &all);

    let mut order: Vec<usize> = (0..fit.len()).collect();
    for epoch in 0..cfg.epochs {
        order.sort_unstable();
        order.shuffle(&mut rng::indexed(cfg.seed, "decoder-order", epoch as u64));
        for batch in order.chunks(cfg.batch_size) {
            let rows: Vec<f64> = batch.iter().flat_map(|&i| fit.samples[i].x.iter().copied()).collect();
            let x = Tensor::matrix(batch.len(), d, rows)?;
            let mut tape = Tape::new();
            let pe = encoder.leaves(&mut tape);
            let pd = decoder.leaves(&mut tape);
            let xv = tape.leaf(x);
            let z = encoder.record_with(&mut tape, xv, &pe)?;
            let out = decoder.record_with(&mut tape, z, &pd)?;
            let diff = tape.sub(out, xv)?;
            let sq = tape.mul(diff, diff)?;
            let total = tape.sum(sq)?;
            let loss = tape.scale(total, 1.0 / (batch.len() * d) as f64)?;
            if !tape.value(loss).data()[0].is_finite() {
                return Err(Error::TrainingDiverged { epoch });
            }
            let mut wrt = pe.clone();
            wrt.extend(&pd);
            let grads = tape
                .grad_values(loss, &Tensor::scalar(1.0), &wrt)
                .map_err(|_| Error::TrainingDiverged { epoch })?;
            let mut params = encoder.params_mut();
            params.extend(decoder.params_mut());
            opt.step(&mut params, &grads)?;
        }
        if epoch % 50 == 0 {
            log::debug!("decoder epoch {epoch}: train mse {:.3e}", reconstruction_mse(&encoder, &decoder, &fit)?);
        }
    }

    let train_mse = reconstruction_mse(&encoder, &decoder, &fit)?;
    let holdout_mse = if held.is_empty() { train_mse } else { reconstruction_mse(&encoder, &decoder, &held)? };
    if !(holdout_mse <= cfg.mse_threshold) {
        return Err(Error::DecoderUnderfit {
            mse: holdout_mse,
            threshold: cfg.mse_threshold,
        });
    }

    let decoder = Generator::learned(decoder);
    let enc = &encoder;
    let dec = &decoder;
    let failed = par::map_slice(&fit.samples, |s| -> Result<bool> {
        let z = evaluate(enc, &Tensor::vector(s.x.clone()))?.into_data();
        let sv = ThinSvd::new(&dec.jacobian(&z)?).s;
        Ok(!(sv[sv.len() - 1] > crate::geometry::RANK_TOL * sv[0]))
    });
    let mut degenerate = 0;
    for f in failed {
        if f? {
            degenerate += 1;
        }
    }
    if degenerate as f64 > MAX_DEGENERATE_FRACTION * fit.len() as f64 {
        return Err(Error::DegenerateDecoder {
            failed: degenerate,
            total: fit.len(),
        });
    }
    Ok(TrainedDecoder {
        decoder,
        encoder,
        train_mse,
        holdout_mse,
        degenerate,
    })
}

/// Mean squared reconstruction error per coordinate.
pub fn reconstruction_mse(encoder: &Mlp, decoder: &Mlp, ds: &ManifoldDataset) -> Result<f64> {
    if ds.is_empty() {
        return Err(Error::invalid("reconstruction error of an empty set"));
    }
    let d = ds.ambient_dim;
    let rows: Vec<f64> = ds.samples.iter().flat_map(|s| s.x.iter().copied()).collect();
    let x = Tensor::matrix(ds.len(), d, rows)?;
    let z = evaluate(encoder, &x)?;
    let out = evaluate(decoder, &z)?;
    debug_assert_eq!(decoder.output_dim(), d);
    Ok(out.sub(&x).data().iter().map(|v| v * v).sum::<f64>() / x.len() as f64)
}

/// Principal angles (radians, ascending) between two tangent spaces of equal
/// dimension.
pub fn principal_angles(a: &Projector, b: &Projector) -> Result<Vec<f64>> {
    if a.ambient_dim() != b.ambient_dim() || a.intrinsic_dim() != b.intrinsic_dim() {
        return Err(Error::dim("principal_angles", "projectors of different shapes"));
    }
    let m = a.basis().transpose().matmul(b.basis())?;
    let s = ThinSvd::new(&m).s;
    Ok(s.iter().map(|c| c.clamp(-1.0, 1.0).acos()).collect())
}
