//! Synthetic private and auxiliary datasets on a shared oracle manifold.
//!
//! On disk a dataset is a directory:
//!
//! | file            | contents                                              |
//! |-----------------|-------------------------------------------------------|
//! | `manifest.json` | metadata (see [`Manifest`])                           |
//! | `samples.f64le` | `n * ambient_dim` little-endian `f64`, row-major      |
//! | `labels.u32le`  | `n` little-endian `u32`                               |
//! | `latents.f64le` | `n * latent_dim` little-endian `f64`, row-major       |

use std::collections::BTreeSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::autodiff::norm;
use crate::error::{Error, Result};
use crate::models::{Generator, OracleConfig};
use crate::rng;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Private,
    Auxiliary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub oracle: OracleConfig,
    pub private_classes: usize,
    pub auxiliary_classes: usize,
    pub samples_per_class: usize,
    /// Standard deviation of isotropic ambient noise added after `G(z)`.
    pub noise_sigma: f64,
    /// Minimum distance between latent class means.
    pub separation: f64,
    /// Per-coordinate spread of each latent cluster.
    pub cluster_std: f64,
    /// Class centers are drawn uniformly from a latent ball of this radius.
    pub center_radius: f64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            oracle: OracleConfig::default(),
            private_classes: 8,
            auxiliary_classes: 8,
            samples_per_class: 200,
            noise_sigma: 0.0,
            separation: 0.8,
            cluster_std: 0.2,
            center_radius: 1.6,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub x: Vec<f64>,
    pub y: usize,
    pub z: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ManifoldDataset {
    pub samples: Vec<Sample>,
    pub generator_seed: u64,
    pub noise_sigma: f64,
    pub role: Role,
    pub ambient_dim: usize,
    pub latent_dim: usize,
    /// Latent cluster center for each label in `labels()` order.
    pub centers: Vec<(usize, Vec<f64>)>,
}

impl ManifoldDataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn labels(&self) -> BTreeSet<usize> {
        self.samples.iter().map(|s| s.y).collect()
    }

    pub fn pairs(&self) -> impl Iterator<Item = (&[f64], usize)> {
        self.samples.iter().map(|s| (s.x.as_slice(), s.y))
    }

    /// Deterministic split into `(first, rest)` with `fraction` of each class
    /// in `rest`.
    pub fn split(&self, fraction: f64, seed: u64) -> (ManifoldDataset, ManifoldDataset) {
        let mut keep = Vec::new();
        let mut held = Vec::new();
        for y in self.labels() {
            let mut idx: Vec<usize> = (0..self.len()).filter(|&i| self.samples[i].y == y).collect();
            idx.shuffle(&mut rng::indexed(seed, "split", y as u64));
            let n_held = (((idx.len() as f64) * fraction).round().max(0.0) as usize).min(idx.len());
            held.extend_from_slice(&idx[..n_held]);
            keep.extend_from_slice(&idx[n_held..]);
        }
        keep.sort_unstable();
        held.sort_unstable();
        let pick = |ix: &[usize]| ManifoldDataset {
            samples: ix.iter().map(|&i| self.samples[i].clone()).collect(),
            ..self.clone_meta()
        };
        (pick(&keep), pick(&held))
    }

    fn clone_meta(&self) -> ManifoldDataset {
        ManifoldDataset {
            samples: Vec::new(),
            generator_seed: self.generator_seed,
            noise_sigma: self.noise_sigma,
            role: self.role,
            ambient_dim: self.ambient_dim,
            latent_dim: self.latent_dim,
            centers: self.centers.clone(),
        }
    }

    /// Empirical latent mean of each class.
    pub fn latent_class_means(&self) -> Vec<(usize, Vec<f64>)> {
        self.labels()
            .into_iter()
            .map(|y| {
                let mut m = vec![0.0; self.latent_dim];
                let mut n = 0usize;
                for s in self.samples.iter().filter(|s| s.y == y) {
                    m.iter_mut().zip(&s.z).for_each(|(a, b)| *a += b);
                    n += 1;
                }
                m.iter_mut().for_each(|a| *a /= n as f64);
                (y, m)
            })
            .collect()
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let manifest = Manifest {
            format_version: FORMAT_VERSION,
            role: self.role,
            count: self.len(),
            ambient_dim: self.ambient_dim,
            latent_dim: self.latent_dim,
            noise_sigma: self.noise_sigma,
            generator_seed: self.generator_seed,
            labels: self.labels().into_iter().collect(),
            centers: self.centers.clone(),
        };
        std::fs::write(dir.join("manifest.json"), serde_json::to_vec_pretty(&manifest)?)?;
        let mut xs = Vec::with_capacity(self.len() * self.ambient_dim * 8);
        let mut ys = Vec::with_capacity(self.len() * 4);
        let mut zs = Vec::with_capacity(self.len() * self.latent_dim * 8);
        for s in &self.samples {
            s.x.iter().for_each(|v| xs.extend_from_slice(&v.to_le_bytes()));
            ys.extend_from_slice(&(s.y as u32).to_le_bytes());
            s.z.iter().for_each(|v| zs.extend_from_slice(&v.to_le_bytes()));
        }
        std::fs::write(dir.join("samples.f64le"), xs)?;
        std::fs::write(dir.join("labels.u32le"), ys)?;
        std::fs::write(dir.join("latents.f64le"), zs)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(dir.join("manifest.json"))?;
        let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| json_parse_error(&text, &e))?;
        for field in Manifest::REQUIRED {
            if value.get(field).is_none() {
                return Err(Error::MissingField(field.to_string()));
            }
        }
        let m: Manifest = serde_json::from_value(value)?;
        if m.format_version != FORMAT_VERSION {
            return Err(Error::invalid(format!("unsupported dataset format version {}", m.format_version)));
        }

        let xs = read_f64(&dir.join("samples.f64le"), m.count * m.ambient_dim)?;
        let ys = read_u32(&dir.join("labels.u32le"), m.count)?;
        let zs = read_f64(&dir.join("latents.f64le"), m.count * m.latent_dim)?;
        let allowed: BTreeSet<usize> = m.labels.iter().copied().collect();
        let mut samples = Vec::with_capacity(m.count);
        for i in 0..m.count {
            let y = ys[i] as usize;
            if !allowed.contains(&y) {
                return Err(Error::dim("load_dataset", format!("sample {i} has label {y} outside the manifest label set")));
            }
            samples.push(Sample {
                x: xs[i * m.ambient_dim..(i + 1) * m.ambient_dim].to_vec(),
                y,
                z: zs[i * m.latent_dim..(i + 1) * m.latent_dim].to_vec(),
            });
        }
        if samples.iter().any(|s| s.x.iter().chain(&s.z).any(|v| !v.is_finite())) {
            return Err(Error::invalid("dataset contains non-finite values"));
        }
        Ok(ManifoldDataset {
            samples,
            generator_seed: m.generator_seed,
            noise_sigma: m.noise_sigma,
            role: m.role,
            ambient_dim: m.ambient_dim,
            latent_dim: m.latent_dim,
            centers: m.centers,
        })
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub role: Role,
    pub count: usize,
    pub ambient_dim: usize,
    pub latent_dim: usize,
    pub noise_sigma: f64,
    pub generator_seed: u64,
    pub labels: Vec<usize>,
    pub centers: Vec<(usize, Vec<f64>)>,
}

impl Manifest {
    const REQUIRED: [&'static str; 9] = [
        "format_version",
        "role",
        "count",
        "ambient_dim",
        "latent_dim",
        "noise_sigma",
        "generator_seed",
        "labels",
        "centers",
    ];
}

fn json_parse_error(text: &str, e: &serde_json::Error) -> Error {
    let offset: usize = text
        .split_inclusive('\n')
        .take(e.line().saturating_sub(1))
        .map(str::len)
        .sum::<usize>()
        + e.column().saturating_sub(1);
    Error::Parse {
        offset,
        detail: format!("manifest.json: {e}"),
    }
}

fn read_exact(path: &Path, bytes: usize) -> Result<Vec<u8>> {
    let raw = std::fs::read(path)?;
    if raw.len() != bytes {
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("payload");
        return Err(Error::Parse {
            offset: raw.len().min(bytes),
            detail: format!("{name}: expected {bytes} bytes, found {}", raw.len()),
        });
    }
    Ok(raw)
}

fn read_f64(path: &Path, count: usize) -> Result<Vec<f64>> {
    let raw = read_exact(path, count * 8)?;
    Ok(raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect())
}

fn read_u32(path: &Path, count: usize) -> Result<Vec<u32>> {
    let raw = read_exact(path, count * 4)?;
    Ok(raw
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect())
}

/// Generated datasets together with the generator that produced them.
pub struct Synthetic {
    pub generator: Generator,
    pub private: ManifoldDataset,
    pub auxiliary: ManifoldDataset,
}

/// Samples class centers on the oracle manifold's latent space, then draws
/// private classes `0..P` and auxiliary classes `P..P+A` around them.
pub fn make_dataset(cfg: &DatasetConfig, seed: u64) -> Result<Synthetic> {
    let k = cfg.oracle.latent_dim;
    if cfg.private_classes == 0 || cfg.auxiliary_classes == 0 || cfg.samples_per_class == 0 {
        return Err(Error::Config("class counts and samples per class must be positive".into()));
    }
    if cfg.noise_sigma < 0.0 || cfg.cluster_std < 0.0 {
        return Err(Error::Config("noise and cluster spread must be non-negative".into()));
    }
    let gen_seed = rng::derive_str(seed, "generator");
    let generator = Generator::oracle(&cfg.oracle, gen_seed)?;
    let d = generator.ambient_dim();

    let total = cfg.private_classes + cfg.auxiliary_classes;
    // margin so the empirical means keep the configured separation
    let margin = 6.0 * cfg.cluster_std * (k as f64 / cfg.samples_per_class as f64).sqrt();
    let centers = sample_centers(total, k, cfg.center_radius, cfg.separation + margin, seed)?;

    let make = |role: Role, labels: std::ops::Range<usize>| -> Result<ManifoldDataset> {
        let mut samples = Vec::with_capacity(labels.len() * cfg.samples_per_class);
        for y in labels.clone() {
            let mut r = rng::indexed(seed, "class-samples", y as u64);
            for _ in 0..cfg.samples_per_class {
                let z: Vec<f64> = centers[y]
                    .iter()
                    .map(|c| c + cfg.cluster_std * r.sample::<f64, _>(StandardNormal))
                    .collect();
                let mut x = generator.sample(&z)?;
                if cfg.noise_sigma > 0.0 {
                    x.iter_mut()
                        .for_each(|v| *v += cfg.noise_sigma * r.sample::<f64, _>(StandardNormal));
                }
                samples.push(Sample { x, y, z });
            }
        }
        Ok(ManifoldDataset {
            samples,
            generator_seed: gen_seed,
            noise_sigma: cfg.noise_sigma,
            role,
            ambient_dim: d,
            latent_dim: k,
            centers: labels.map(|y| (y, centers[y].clone())).collect(),
        })
    };
    let private = make(Role::Private, 0..cfg.private_classes)?;
    let auxiliary = make(Role::Auxiliary, cfg.private_classes..total)?;

    if !private.labels().is_disjoint(&auxiliary.labels()) {
        return Err(Error::invalid("private and auxiliary label sets overlap"));
    }
    let sep = min_pairwise_distance(private.latent_class_means().iter().chain(&auxiliary.latent_class_means()).map(|(_, m)| m.as_slice()));
    if sep < cfg.separation {
        return Err(Error::invalid(format!("class means only {sep:.4} apart (configured {})", cfg.separation)));
    }
    Ok(Synthetic {
        generator,
        private,
        auxiliary,
    })
}

fn sample_centers(n: usize, k: usize, radius: f64, min_dist: f64, seed: u64) -> Result<Vec<Vec<f64>>> {
    let mut r = rng::stream(seed, "class-centers");
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut attempts = 0usize;
    while centers.len() < n {
        attempts += 1;
        if attempts > 200_000 {
            return Err(Error::Config(format!(
                "cannot place {n} class centers {min_dist:.3} apart inside radius {radius}"
            )));
        }
        // uniform in the ball: gaussian direction, radius ∝ u^(1/k)
        let dir: Vec<f64> = (0..k).map(|_| r.sample(StandardNormal)).collect();
        let len = norm(&dir);
        if len == 0.0 {
            continue;
        }
        let rad = radius * r.random::<f64>().powf(1.0 / k as f64);
        let c: Vec<f64> = dir.iter().map(|v| v / len * rad).collect();
        if centers.iter().all(|o| dist(o, &c) >= min_dist) {
            centers.push(c);
        }
    }
    Ok(centers)
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

pub fn min_pairwise_distance<'a>(points: impl Iterator<Item = &'a [f64]>) -> f64 {
    let pts: Vec<&[f64]> = points.collect();
    let mut best = f64::INFINITY;
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            best = best.min(dist(pts[i], pts[j]));
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> DatasetConfig {
        DatasetConfig {
            private_classes: 3,
            auxiliary_classes: 2,
            samples_per_class: 20,
            ..DatasetConfig::default()
        }
    }

    #[test]
    fn noiseless_samples_lie_on_the_generator() {
        let s = make_dataset(&small(), 5).unwrap();
        for smp in s.private.samples.iter().chain(&s.auxiliary.samples) {
            assert_eq!(smp.x, s.generator.sample(&smp.z).unwrap());
        }
        assert!(s.private.labels().is_disjoint(&s.auxiliary.labels()));
    }

    #[test]
    fn generation_is_deterministic() {
        let a = make_dataset(&small(), 9).unwrap();
        let b = make_dataset(&small(), 9).unwrap();
        assert_eq!(a.private, b.private);
        assert_eq!(a.auxiliary, b.auxiliary);
    }

    #[test]
    fn save_load_roundtrip_and_failures() {
        let s = make_dataset(&small(), 2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        s.private.save(dir.path()).unwrap();
        let back = ManifoldDataset::load(dir.path()).unwrap();
        assert_eq!(back, s.private);

        // truncated payload
        let p = dir.path().join("samples.f64le");
        let raw = std::fs::read(&p).unwrap();
        std::fs::write(&p, &raw[..raw.len() - 5]).unwrap();
        match ManifoldDataset::load(dir.path()) {
            Err(Error::Parse { offset, .. }) => assert_eq!(offset, raw.len() - 5),
            other => panic!("unexpected {other:?}"),
        }
        std::fs::write(&p, &raw).unwrap();

        // manifest without noise_sigma
        let mp = dir.path().join("manifest.json");
        let mut v: serde_json::Value = serde_json::from_slice(&std::fs::read(&mp).unwrap()).unwrap();
        v.as_object_mut().unwrap().remove("noise_sigma");
        std::fs::write(&mp, serde_json::to_vec(&v).unwrap()).unwrap();
        match ManifoldDataset::load(dir.path()) {
            Err(Error::MissingField(f)) => assert_eq!(f, "noise_sigma"),
            other => panic!("unexpected {other:?}"),
        }

        // truncated manifest
        std::fs::write(&mp, b"{\"format_version\": 1, \"role\": ").unwrap();
        assert!(matches!(ManifoldDataset::load(dir.path()), Err(Error::Parse { .. })));
    }

    #[test]
    fn split_is_stratified() {
        let s = make_dataset(&small(), 4).unwrap();
        let (a, b) = s.private.split(0.25, 1);
        assert_eq!(a.len() + b.len(), s.private.len());
        assert_eq!(b.len(), 15);
        assert_eq!(b.labels(), s.private.labels());
    }
}
