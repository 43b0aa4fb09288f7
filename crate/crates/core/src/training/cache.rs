use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::{evaluate, Mlp, Tensor};
use crate::data::ManifoldDataset;
use crate::error::{Error, Result};
use crate::geometry::{Projector, ProjectorRecord};
use crate::models::Generator;
use crate::par;

/// Fraction of samples allowed to fail the rank check before precomputation
/// is abandoned.
pub const MAX_SKIPPED_FRACTION: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProjectorSourceKind {
    Oracle,
    LearnedDecoder,
}

/// Where tangent spaces come from.
pub enum ProjectorSource<'a> {
    /// Jacobian of the true generator at each sample's latent.
    Oracle(&'a Generator),
    /// Jacobian of the decoder at the encoded sample.
    Learned { decoder: &'a Generator, encoder: &'a Mlp },
}

impl ProjectorSource<'_> {
    pub fn kind(&self) -> ProjectorSourceKind {
        match self {
            ProjectorSource::Oracle(_) => ProjectorSourceKind::Oracle,
            ProjectorSource::Learned { .. } => ProjectorSourceKind::LearnedDecoder,
        }
    }
}

/// Tangent projector per dataset index.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectorCache {
    pub source: ProjectorSourceKind,
    pub entries: BTreeMap<usize, Projector>,
    pub skipped: Vec<usize>,
}

impl ProjectorCache {
    pub fn get(&self, index: usize) -> Option<&Projector> {
        self.entries.get(&index)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Fails unless every index of a dataset of `n` samples is cached or
    /// recorded as skipped.
    pub fn check_covers(&self, n: usize) -> Result<()> {
        let covered = self.entries.len() + self.skipped.len();
        let in_range = self.entries.keys().chain(&self.skipped).all(|&i| i < n);
        if covered != n || !in_range {
            return Err(Error::invalid(format!(
                "projector cache covers {covered} indices, dataset has {n}"
            )));
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = CacheFile {
            source: self.source,
            skipped: self.skipped.clone(),
            entries: self
                .entries
                .iter()
                .map(|(&index, p)| CacheEntry {
                    index,
                    projector: p.to_record(),
                })
                .collect(),
        };
        std::fs::write(path, serde_json::to_vec(&file)?)?;
        Ok(())
    }

    /// Loads and re-validates every basis.
    pub fn load(path: &Path) -> Result<Self> {
        let file: CacheFile = serde_json::from_slice(&std::fs::read(path)?)?;
        let mut entries = BTreeMap::new();
        for e in file.entries {
            entries.insert(e.index, Projector::from_record(e.projector)?);
        }
        Ok(ProjectorCache {
            source: file.source,
            entries,
            skipped: file.skipped,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct CacheFile {
    source: ProjectorSourceKind,
    skipped: Vec<usize>,
    entries: Vec<CacheEntry>,
}

#[derive(Serialize, Deserialize)]
struct CacheEntry {
    index: usize,
    projector: ProjectorRecord,
}

/// Tangent projector for every sample; rank failures are skipped and logged.
pub fn precompute_projectors(ds: &ManifoldDataset, source: &ProjectorSource) -> Result<ProjectorCache> {
    let results = par::map_range(ds.len(), |i| -> Result<Projector> {
        let s = &ds.samples[i];
        match source {
            ProjectorSource::Oracle(g) => g.tangent(&s.z),
            ProjectorSource::Learned { decoder, encoder } => {
                let z = evaluate(*encoder, &Tensor::vector(s.x.clone()))?.into_data();
                decoder.tangent(&z)
            }
        }
    });
    let mut entries = BTreeMap::new();
    let mut skipped = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(p) => {
                entries.insert(i, p);
            }
            Err(Error::DegenerateTangent { spectrum }) => {
                log::warn!("sample {i}: rank-deficient tangent, skipped (spectrum {spectrum:?})");
                skipped.push(i);
            }
            Err(e) => return Err(e),
        }
    }
    if skipped.len() as f64 > MAX_SKIPPED_FRACTION * ds.len() as f64 {
        return Err(Error::DegenerateDecoder {
            failed: skipped.len(),
            total: ds.len(),
        });
    }
    Ok(ProjectorCache {
        source: source.kind(),
        entries,
        skipped,
    })
}
