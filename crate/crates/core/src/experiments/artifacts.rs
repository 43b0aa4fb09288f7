use std::path::{Path, PathBuf};

use serde::Serialize;

use super::{sha256_hex, ExperimentConfig};
use crate::autodiff::Mlp;
use crate::data::{make_dataset, ManifoldDataset};
use crate::error::{Error, Result};
use crate::metrics::EvalModel;
use crate::models::{Classifier, Generator};
use crate::rng;
use crate::training::{
    precompute_projectors, train_aligned, train_classifier, train_decoder, ProjectorCache, ProjectorSource,
    ProjectorSourceKind, TrainedDecoder,
};

/// What to do when a prerequisite artifact is absent or was built from a
/// different config.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Policy {
    /// Fail with a missing-artifact error.
    Require,
    /// Build it and keep it for later commands.
    TrainMissing,
    /// Build it even if a current copy exists.
    Rebuild,
}

fn key_of<T: Serialize>(parts: &T) -> String {
    sha256_hex(&serde_json::to_vec(parts).expect("key parts serialize"))
}

fn key_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".key");
    PathBuf::from(s)
}

/// Whether `path` exists and was built under `key`.
fn is_current(path: &Path, key: &str) -> bool {
    path.exists() && std::fs::read_to_string(key_path(path)).is_ok_and(|k| k.trim() == key)
}

fn mark(path: &Path, key: &str) -> Result<()> {
    std::fs::write(key_path(path), format!("{key}\n"))?;
    Ok(())
}

fn needs_build(path: &Path, key: &str, policy: Policy, command: &str) -> Result<bool> {
    match policy {
        Policy::Rebuild => Ok(true),
        _ if is_current(path, key) => Ok(false),
        Policy::TrainMissing => Ok(true),
        Policy::Require if path.exists() => Err(Error::MissingArtifact(format!(
            "{} was built from a different config; rerun `{command}`",
            path.display()
        ))),
        Policy::Require => Err(Error::MissingArtifact(format!("{} (run `{command}` first)", path.display()))),
    }
}

/// Data and model artifacts of one replicate seed, cached under
/// `<out>/artifacts/seed-<s>/`.
pub struct Replicate<'c> {
    pub cfg: &'c ExperimentConfig,
    pub seed: u64,
    pub dir: PathBuf,
    pub generator: Generator,
    pub private: ManifoldDataset,
    pub auxiliary: ManifoldDataset,
    pub train: ManifoldDataset,
    pub test: ManifoldDataset,
    data_key: String,
}

impl<'c> Replicate<'c> {
    pub fn open(cfg: &'c ExperimentConfig, out: &Path, seed: u64, policy: Policy) -> Result<Self> {
        cfg.validate()?;
        let dir = out.join("artifacts").join(format!("seed-{seed}"));
        let data = dir.join("data");
        let data_key = key_of(&(&cfg.dataset, seed));
        let marker = data.join("generator.json");
        let (generator, private, auxiliary) = if needs_build(&marker, &data_key, policy, "gen-data")? {
            let syn = make_dataset(&cfg.dataset, seed).map_err(|e| e.in_stage("gen-data"))?;
            std::fs::create_dir_all(&data)?;
            syn.private.save(&data.join("private"))?;
            syn.auxiliary.save(&data.join("auxiliary"))?;
            syn.generator.save(&marker)?;
            mark(&marker, &data_key)?;
            (syn.generator, syn.private, syn.auxiliary)
        } else {
            (
                Generator::load(&marker)?,
                ManifoldDataset::load(&data.join("private"))?,
                ManifoldDataset::load(&data.join("auxiliary"))?,
            )
        };
        let (train, test) = private.split(cfg.test_fraction, rng::derive_str(seed, "split"));
        Ok(Replicate {
            cfg,
            seed,
            dir,
            generator,
            private,
            auxiliary,
            train,
            test,
            data_key,
        })
    }

    fn models(&self) -> PathBuf {
        self.dir.join("models")
    }

    fn fresh_target(&self) -> Classifier {
        let t = &self.cfg.target;
        Classifier::random(
            self.generator.ambient_dim(),
            &t.hidden,
            self.cfg.dataset.private_classes,
            t.activation,
            &mut rng::stream(self.seed, "target-init"),
        )
    }

    fn classifier(
        &self,
        name: &str,
        key: &str,
        policy: Policy,
        command: &str,
        build: impl FnOnce() -> Result<crate::training::Trained>,
    ) -> Result<Classifier> {
        let path = self.models().join(format!("{name}.json"));
        if needs_build(&path, key, policy, command)? {
            let trained = build().map_err(|e| e.in_stage(format!("train {name}")))?;
            std::fs::create_dir_all(self.models())?;
            trained.classifier.net().save(&path)?;
            std::fs::write(self.models().join(format!("{name}-history.csv")), trained.history_csv())?;
            mark(&path, key)?;
            return Ok(trained.classifier);
        }
        Classifier::new(Mlp::load(&path)?)
    }

    fn target_key(&self) -> String {
        key_of(&(&self.data_key, self.cfg.test_fraction, &self.cfg.target, &self.cfg.training))
    }

    /// Vanilla target trained with cross-entropy only.
    pub fn target(&self, policy: Policy) -> Result<Classifier> {
        let tc = self.cfg.training.train_config(0.0, rng::derive_str(self.seed, "train"));
        self.classifier("target", &self.target_key(), policy, "train-target", || {
            train_classifier(self.fresh_target(), &self.train, &self.test, &tc)
        })
    }

    /// Alignment-aware target from the vanilla target's initialization.
    pub fn aligned(&self, beta: f64, policy: Policy) -> Result<Classifier> {
        let source = self.cfg.training.projector_source;
        let decoder_key = match source {
            ProjectorSourceKind::Oracle => None,
            ProjectorSourceKind::LearnedDecoder => Some(self.decoder_key()),
        };
        let key = key_of(&(self.target_key(), beta, decoder_key));
        let tc = self.cfg.training.train_config(beta, rng::derive_str(self.seed, "train"));
        self.classifier(&format!("aligned-beta-{beta}"), &key, policy, "train-aligned", || {
            let cache = self.projectors(policy)?;
            train_aligned(self.fresh_target(), &self.train, &self.test, &cache, &tc)
        })
    }

    /// Independent evaluation classifier, gated on its test accuracy.
    pub fn eval_model(&self, policy: Policy) -> Result<EvalModel> {
        let e = &self.cfg.eval;
        let key = key_of(&(&self.data_key, self.cfg.test_fraction, e));
        let tc = crate::training::TrainConfig {
            optimizer: e.optimizer.clone(),
            epochs: e.epochs,
            seed: rng::derive_str(self.seed, "eval-train"),
            ..Default::default()
        };
        let net = self.classifier("eval", &key, policy, "train-target", || {
            let init = Classifier::random(
                self.generator.ambient_dim(),
                &e.hidden,
                self.cfg.dataset.private_classes,
                e.activation,
                &mut rng::stream(self.seed, "eval-init"),
            );
            train_classifier(init, &self.train, &self.test, &tc)
        })?;
        EvalModel::new(net, &self.test, e.accuracy_floor).map_err(|err| err.in_stage("eval model"))
    }

    fn decoder_key(&self) -> String {
        key_of(&(&self.data_key, &self.cfg.decoder))
    }

    /// Autoencoder trained on the auxiliary split.
    pub fn decoder(&self, policy: Policy) -> Result<(Generator, Mlp, Option<TrainedDecoder>)> {
        let dec = self.models().join("decoder.json");
        let enc = self.models().join("encoder.json");
        let key = self.decoder_key();
        if needs_build(&dec, &key, policy, "train-decoder")? {
            let mut dc = self.cfg.decoder.clone();
            dc.seed = rng::derive(dc.seed, self.seed);
            let t = train_decoder(&self.auxiliary, self.generator.latent_dim(), &dc)
                .map_err(|e| e.in_stage("train decoder"))?;
            std::fs::create_dir_all(self.models())?;
            t.decoder.save(&dec)?;
            t.encoder.save(&enc)?;
            mark(&dec, &key)?;
            return Ok((t.decoder.clone(), t.encoder.clone(), Some(t)));
        }
        Ok((Generator::load(&dec)?, Mlp::load(&enc)?, None))
    }

    /// Tangent projectors at the training samples from the configured source.
    pub fn projectors(&self, policy: Policy) -> Result<ProjectorCache> {
        match self.cfg.training.projector_source {
            ProjectorSourceKind::Oracle => precompute_projectors(&self.train, &ProjectorSource::Oracle(&self.generator)),
            ProjectorSourceKind::LearnedDecoder => {
                let (decoder, encoder, _) = self.decoder(policy)?;
                precompute_projectors(
                    &self.train,
                    &ProjectorSource::Learned {
                        decoder: &decoder,
                        encoder: &encoder,
                    },
                )
            }
        }
        .map_err(|e| e.in_stage("projector cache"))
    }
}
