//! Attack-success metrics and distribution summaries.

use serde::{Deserialize, Serialize};

use crate::data::ManifoldDataset;
use crate::error::{Error, Result};
use crate::inversion::InversionRun;
use crate::models::Classifier;
use crate::par;
use crate::training::accuracy;

pub const HISTOGRAM_BINS: usize = 20;

/// Location and spread of a sample of scores, plus a histogram over `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
    pub min: f64,
    pub max: f64,
    /// `HISTOGRAM_BINS` uniform bins over `[0, 1]`; values outside are clamped
    /// into the end bins.
    pub histogram: Vec<usize>,
}

impl Summary {
    pub fn from_values(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("summary of an empty sample"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("summary of non-finite values"));
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let mut histogram = vec![0usize; HISTOGRAM_BINS];
        for &v in values {
            let b = ((v * HISTOGRAM_BINS as f64).floor().max(0.0) as usize).min(HISTOGRAM_BINS - 1);
            histogram[b] += 1;
        }
        Ok(Summary {
            count: values.len(),
            mean: values.iter().sum::<f64>() / values.len() as f64,
            median: quantile(&sorted, 0.5),
            q25: quantile(&sorted, 0.25),
            q75: quantile(&sorted, 0.75),
            min: sorted[0],
            max: sorted[sorted.len() - 1],
            histogram,
        })
    }

    /// `(bin_left, count)` rows.
    pub fn histogram_rows(&self) -> Vec<(f64, usize)> {
        self.histogram
            .iter()
            .enumerate()
            .map(|(i, &c)| (i as f64 / HISTOGRAM_BINS as f64, c))
            .collect()
    }
}

/// Linear-interpolation quantile of an ascending slice.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + frac * (sorted[hi] - sorted[lo])
    }
}

pub fn median(values: &[f64]) -> f64 {
    let mut s = values.to_vec();
    s.sort_by(f64::total_cmp);
    quantile(&s, 0.5)
}

/// Default test-accuracy floor an evaluation model must clear.
pub const DEFAULT_ACCURACY_FLOOR: f64 = 0.9;

/// Independent classifier used to score reconstructions.
#[derive(Clone, Debug)]
pub struct EvalModel {
    net: Classifier,
    test_accuracy: f64,
}

impl EvalModel {
    /// Accepts `net` only if its accuracy on `test` reaches `floor`.
    pub fn new(net: Classifier, test: &ManifoldDataset, floor: f64) -> Result<Self> {
        let acc = accuracy(&net, test)?;
        if acc < floor {
            return Err(Error::invalid(format!(
                "evaluation model accuracy {acc:.4} below floor {floor:.4}"
            )));
        }
        Ok(EvalModel {
            net,
            test_accuracy: acc,
        })
    }

    pub fn classifier(&self) -> &Classifier {
        &self.net
    }

    pub fn test_accuracy(&self) -> f64 {
        self.test_accuracy
    }

    pub fn features(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.net.features(x)
    }
}

/// Indices of the `n` largest entries, ties broken by lower index.
pub fn top_n(v: &[f64], n: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[b].total_cmp(&v[a]).then(a.cmp(&b)));
    idx.truncate(n);
    idx
}

/// `(acc1, acc5)` of the evaluation model on `(x̂, y)` pairs; top-5 becomes
/// top-`min(5, C)`.
pub fn attack_accuracy(recons: &[(Vec<f64>, usize)], eval: &EvalModel) -> Result<(f64, f64)> {
    if recons.is_empty() {
        return Err(Error::invalid("no reconstructions to score"));
    }
    let n5 = eval.net.classes().min(5);
    let hits = par::map_slice(recons, |(x, y)| -> Result<(bool, bool)> {
        let logits = eval.net.logits(x)?;
        let top = top_n(&logits, n5);
        Ok((top[0] == *y, top.contains(y)))
    });
    let (mut h1, mut h5) = (0usize, 0usize);
    for h in hits {
        let (a, b) = h?;
        h1 += a as usize;
        h5 += b as usize;
    }
    let n = recons.len() as f64;
    Ok((h1 as f64 / n, h5 as f64 / n))
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Mean over reconstructions of the distance, in the evaluation model's
/// penultimate features, to the nearest private sample of the same class.
pub fn knn_distance(recons: &[(Vec<f64>, usize)], private: &ManifoldDataset, eval: &EvalModel) -> Result<f64> {
    if recons.is_empty() {
        return Err(Error::invalid("no reconstructions to score"));
    }
    let feats = par::map_slice(&private.samples, |s| eval.features(&s.x));
    let mut by_class: std::collections::BTreeMap<usize, Vec<Vec<f64>>> = Default::default();
    for (s, f) in private.samples.iter().zip(feats) {
        by_class.entry(s.y).or_default().push(f?);
    }
    let dists = par::map_slice(recons, |(x, y)| -> Result<f64> {
        let pool = by_class
            .get(y)
            .ok_or_else(|| Error::invalid(format!("no private samples of class {y}")))?;
        let fx = eval.features(x)?;
        let best = pool.iter().map(|f| sq_dist(&fx, f)).fold(f64::INFINITY, f64::min);
        Ok(best.sqrt())
    });
    let mut total = 0.0;
    for d in dists {
        total += d?;
    }
    Ok(total / recons.len() as f64)
}

/// Summary of every tracked alignment score across runs.
pub fn as_distribution(runs: &[InversionRun]) -> Result<Summary> {
    let values: Vec<f64> = runs.iter().flat_map(|r| r.tracked().filter_map(|s| s.as_inv)).collect();
    if values.is_empty() {
        return Err(Error::invalid("runs contain no tracked alignment scores"));
    }
    Summary::from_values(&values)
}

/// Summary of each run's alignment at its last tracked step.
pub fn final_as_distribution(runs: &[InversionRun]) -> Result<Summary> {
    let values: Vec<f64> = runs.iter().filter_map(InversionRun::final_as_inv).collect();
    if values.is_empty() {
        return Err(Error::invalid("runs contain no tracked alignment scores"));
    }
    Summary::from_values(&values)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassBreakdown {
    pub class: usize,
    pub runs: usize,
    pub acc1: f64,
    pub acc5: f64,
    pub knn_dist: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackReport {
    pub acc1: f64,
    pub acc5: f64,
    pub knn_dist: f64,
    pub per_class: Vec<ClassBreakdown>,
    pub as_inv: Summary,
}

/// Scores completed runs against the evaluation model.
pub fn attack_report(runs: &[InversionRun], private: &ManifoldDataset, eval: &EvalModel) -> Result<AttackReport> {
    let recons: Vec<(Vec<f64>, usize)> = runs.iter().map(|r| (r.final_x.clone(), r.target)).collect();
    let (acc1, acc5) = attack_accuracy(&recons, eval)?;
    let knn_dist = knn_distance(&recons, private, eval)?;
    let mut classes: Vec<usize> = recons.iter().map(|r| r.1).collect();
    classes.sort_unstable();
    classes.dedup();
    let mut per_class = Vec::with_capacity(classes.len());
    for y in classes {
        let sub: Vec<(Vec<f64>, usize)> = recons.iter().filter(|r| r.1 == y).cloned().collect();
        let (a1, a5) = attack_accuracy(&sub, eval)?;
        per_class.push(ClassBreakdown {
            class: y,
            runs: sub.len(),
            acc1: a1,
            acc5: a5,
            knn_dist: knn_distance(&sub, private, eval)?,
        });
    }
    Ok(AttackReport {
        acc1,
        acc5,
        knn_dist,
        per_class,
        as_inv: as_distribution(runs)?,
    })
}

impl AttackReport {
    pub fn per_class_csv(&self) -> String {
        let mut s = String::from("class,runs,acc1,acc5,knn_dist\n");
        for c in &self.per_class {
            s.push_str(&format!("{},{},{:.12},{:.12},{:.12}\n", c.class, c.runs, c.acc1, c.acc5, c.knn_dist));
        }
        s
    }
}

/// `bin_left,count` rows.
pub fn histogram_csv(s: &Summary) -> String {
    let mut out = String::from("bin_left,count\n");
    for (left, n) in s.histogram_rows() {
        out.push_str(&format!("{left:.2},{n}\n"));
    }
    out
}

/// Spearman rank correlation (average ranks for ties).
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for t in i..=j {
                r[idx[t]] = avg;
            }
            i = j + 1;
        }
        r
    }
    assert_eq!(a.len(), b.len());
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let ma = ra.iter().sum::<f64>() / n;
    let mb = rb.iter().sum::<f64>() / n;
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    if va == 0.0 || vb == 0.0 {
        return 0.0;
    }
    cov / (va * vb).sqrt()
}
