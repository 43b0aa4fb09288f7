use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::artifacts::{Policy, Replicate};
use super::{write_csv, write_json, ExperimentConfig, ExperimentKind, Stamp, Stamped};
use crate::autodiff::{evaluate, Tensor};
use crate::data::min_pairwise_distance;
use crate::error::{Error, Result};
use crate::geometry::random_baseline;
use crate::inversion::{alignment_dynamics, invert, DynamicsPoint, InversionRun, Smoothing};
use crate::metrics::{
    as_distribution, attack_report, final_as_distribution, histogram_csv, median, AttackReport, EvalModel, Summary,
};
use crate::models::Classifier;
use crate::training::{accuracy, measure_as_tr, principal_angles, ProjectorCache};
use crate::{par, rng};

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// One attack of a replicate: target class, run index and derived seed.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
struct RunId {
    class: usize,
    run: usize,
    seed: u64,
}

fn run_ids(cfg: &ExperimentConfig, replicate: u64, per_class: usize) -> Vec<RunId> {
    let base = rng::derive(cfg.inversion.seed, replicate);
    (0..cfg.dataset.private_classes)
        .flat_map(|class| {
            (0..per_class).map(move |run| RunId {
                class,
                run,
                seed: rng::derive(base, ((class as u64) << 32) | run as u64),
            })
        })
        .collect()
}

fn attack(rep: &Replicate, c: &Classifier, smoothing: Smoothing, ids: &[RunId]) -> Result<Vec<InversionRun>> {
    let mut icfg = rep.cfg.inversion.clone();
    icfg.smoothing = smoothing;
    par::map_slice(ids, |id| {
        let mut ic = icfg.clone();
        ic.seed = id.seed;
        invert(c, &rep.generator, id.class, &ic)
            .map_err(|e| e.in_stage(format!("invert class {} run {}", id.class, id.run)))
    })
    .into_iter()
    .collect()
}

#[derive(Serialize)]
struct RunFile<'a> {
    class: usize,
    run: usize,
    seed: u64,
    smoothing: Smoothing,
    result: &'a InversionRun,
}

/// Per-run JSON plus run, score, dynamics and histogram CSVs.
fn write_attack(dir: &Path, stamp: &Stamp, smoothing: Smoothing, ids: &[RunId], runs: &[InversionRun]) -> Result<()> {
    let mut table = String::from("class,run,seed,final_confidence,final_loss,mean_as_inv,final_as_inv\n");
    let mut scores = String::from("class,run,step,as_inv,as_raw,confidence\n");
    for (id, r) in ids.iter().zip(runs) {
        write_json(
            &dir.join("runs").join(format!("c{}-r{}.json", id.class, id.run)),
            stamp,
            &RunFile {
                class: id.class,
                run: id.run,
                seed: id.seed,
                smoothing,
                result: r,
            },
        )?;
        let _ = writeln!(
            table,
            "{},{},{},{},{},{},{}",
            id.class,
            id.run,
            id.seed,
            r.final_confidence,
            r.final_loss,
            opt(r.mean_as_inv()),
            opt(r.final_as_inv())
        );
        for s in r.tracked() {
            let _ = writeln!(scores, "{},{},{},{},{},{}", id.class, id.run, s.step, opt(s.as_inv), opt(s.as_raw), s.confidence);
        }
    }
    let mut dynamics = String::from("step,mean_as_inv,mean_confidence,runs\n");
    for p in alignment_dynamics(runs) {
        let _ = writeln!(dynamics, "{},{},{},{}", p.step, p.mean_as_inv, p.mean_confidence, p.runs);
    }
    write_csv(&dir.join("runs.csv"), stamp, &table)?;
    write_csv(&dir.join("as_inv.csv"), stamp, &scores)?;
    write_csv(&dir.join("dynamics.csv"), stamp, &dynamics)?;
    write_csv(&dir.join("as_inv_histogram.csv"), stamp, &histogram_csv(&as_distribution(runs)?))?;
    Ok(())
}

fn analytic_baseline(rep: &Replicate) -> f64 {
    (rep.generator.latent_dim() as f64 / rep.generator.ambient_dim() as f64).sqrt()
}

#[derive(Serialize)]
struct Rows<'a, T> {
    rows: &'a [T],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataSummary {
    pub seed: u64,
    pub private: usize,
    pub auxiliary: usize,
    pub ambient_dim: usize,
    pub latent_dim: usize,
    pub min_class_separation: f64,
}

/// Generates and stores the private and auxiliary splits of every replicate.
pub fn cmd_gen_data(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<DataSummary>> {
    let stamp = cfg.stamp();
    let mut rows = Vec::new();
    for seed in cfg.replicate_seeds() {
        let rep = Replicate::open(cfg, out, seed, Policy::Rebuild)?;
        let means: Vec<_> = rep
            .private
            .latent_class_means()
            .into_iter()
            .chain(rep.auxiliary.latent_class_means())
            .collect();
        rows.push(DataSummary {
            seed,
            private: rep.private.len(),
            auxiliary: rep.auxiliary.len(),
            ambient_dim: rep.generator.ambient_dim(),
            latent_dim: rep.generator.latent_dim(),
            min_class_separation: min_pairwise_distance(means.iter().map(|(_, m)| m.as_slice())),
        });
    }
    write_json(&out.join("gen-data").join("report.json"), &stamp, &Rows { rows: &rows })?;
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub seed: u64,
    pub model: String,
    pub beta: f64,
    pub test_acc: f64,
    pub as_tr_mean: f64,
}

fn train_summary(rep: &Replicate, model: &str, beta: f64, c: &Classifier, cache: &ProjectorCache) -> Result<TrainSummary> {
    Ok(TrainSummary {
        seed: rep.seed,
        model: model.to_string(),
        beta,
        test_acc: accuracy(c, &rep.test)?,
        as_tr_mean: measure_as_tr(c, &rep.train, cache)?.mean,
    })
}

/// Trains the vanilla target and the evaluation model.
pub fn cmd_train_target(cfg: &ExperimentConfig, out: &Path, policy: Policy) -> Result<Vec<TrainSummary>> {
    let mut rows = Vec::new();
    for seed in cfg.replicate_seeds() {
        let rep = Replicate::open(cfg, out, seed, policy)?;
        let target = rep.target(Policy::Rebuild)?;
        let cache = rep.projectors(policy)?;
        rows.push(train_summary(&rep, "vanilla", 0.0, &target, &cache)?);
        let eval = rep.eval_model(Policy::Rebuild)?;
        rows.push(train_summary(&rep, "eval", 0.0, eval.classifier(), &cache)?);
    }
    write_json(&out.join("train-target").join("report.json"), &cfg.stamp(), &Rows { rows: &rows })?;
    Ok(rows)
}

/// Trains the alignment-aware target at `cfg.beta`.
pub fn cmd_train_aligned(cfg: &ExperimentConfig, out: &Path, policy: Policy) -> Result<Vec<TrainSummary>> {
    let mut rows = Vec::new();
    for seed in cfg.replicate_seeds() {
        let rep = Replicate::open(cfg, out, seed, policy)?;
        let c = rep.aligned(cfg.beta, Policy::Rebuild)?;
        let cache = rep.projectors(policy)?;
        rows.push(train_summary(&rep, &format!("aligned-beta-{}", cfg.beta), cfg.beta, &c, &cache)?);
    }
    write_json(&out.join("train-aligned").join("report.json"), &cfg.stamp(), &Rows { rows: &rows })?;
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecoderSummary {
    pub seed: u64,
    pub train_mse: f64,
    pub holdout_mse: f64,
    pub degenerate: usize,
    /// Mean principal angle, in radians, between decoder and oracle tangents
    /// at the private training samples.
    pub mean_principal_angle: f64,
}

/// Trains the autoencoder on the auxiliary split and compares its tangents
/// with the oracle's.
pub fn cmd_train_decoder(cfg: &ExperimentConfig, out: &Path, policy: Policy) -> Result<Vec<DecoderSummary>> {
    let mut rows = Vec::new();
    for seed in cfg.replicate_seeds() {
        let rep = Replicate::open(cfg, out, seed, policy)?;
        let (decoder, encoder, trained) = rep.decoder(Policy::Rebuild)?;
        let trained = trained.expect("rebuild trains");
        let angles = par::map_slice(&rep.train.samples, |s| -> Result<f64> {
            let z = evaluate(&encoder, &Tensor::vector(s.x.clone()))?.into_data();
            let a = principal_angles(&decoder.tangent(&z)?, &rep.generator.tangent(&s.z)?)?;
            Ok(a.iter().sum::<f64>() / a.len() as f64)
        });
        let angles: Vec<f64> = angles.into_iter().collect::<Result<_>>()?;
        rows.push(DecoderSummary {
            seed,
            train_mse: trained.train_mse,
            holdout_mse: trained.holdout_mse,
            degenerate: trained.degenerate,
            mean_principal_angle: angles.iter().sum::<f64>() / angles.len() as f64,
        });
    }
    write_json(&out.join("train-decoder").join("report.json"), &cfg.stamp(), &Rows { rows: &rows })?;
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasureReplicate {
    pub seed: u64,
    pub analytic_baseline: f64,
    pub empirical_baseline: f64,
    pub test_acc: f64,
    pub as_tr: Summary,
    pub as_inv: Summary,
    pub final_as_inv: Summary,
    pub final_confidence_median: f64,
    pub tracked_steps_per_run: usize,
    pub dynamics: Vec<DynamicsPoint>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasureReport {
    pub replicates: Vec<MeasureReplicate>,
}

/// Training- and inversion-time alignment of the vanilla target against the
/// random baseline.
pub fn cmd_measure_alignment(cfg: &ExperimentConfig, out: &Path, policy: Policy) -> Result<MeasureReport> {
    cfg.check_kind(ExperimentKind::MeasureAlignment)?;
    let stamp = cfg.stamp();
    let root = out.join("measure-alignment");
    let mut replicates = Vec::new();
    for seed in cfg.replicate_seeds() {
        let rep = Replicate::open(cfg, out, seed, policy)?;
        let target = rep.target(policy)?;
        let cache = rep.projectors(policy)?;
        let ids = run_ids(cfg, seed, cfg.runs_per_class);
        let runs = attack(&rep, &target, cfg.inversion.smoothing, &ids)?;
        let dir = root.join(format!("seed-{seed}"));
        write_attack(&dir, &stamp, cfg.inversion.smoothing, &ids, &runs)?;
        let (k, d) = (rep.generator.latent_dim(), rep.generator.ambient_dim());
        let (analytic, empirical) = random_baseline(k, d, 2000, rng::derive_str(seed, "baseline"))?;
        let r = MeasureReplicate {
            seed,
            analytic_baseline: analytic,
            empirical_baseline: empirical,
            test_acc: accuracy(&target, &rep.test)?,
            as_tr: measure_as_tr(&target, &rep.train, &cache)?,
            as_inv: as_distribution(&runs)?,
            final_as_inv: final_as_distribution(&runs)?,
            final_confidence_median: median(&runs.iter().map(|r| r.final_confidence).collect::<Vec<_>>()),
            tracked_steps_per_run: runs.iter().map(|r| r.tracked().count()).min().unwrap_or(0),
            dynamics: alignment_dynamics(&runs),
        };
        write_json(&dir.join("report.json"), &stamp, &r)?;
        replicates.push(r);
    }
    let report = MeasureReport { replicates };
    write_json(&root.join("report.json"), &stamp, &report)?;
    Ok(report)
}

/// One row of the alignment/utility/vulnerability table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HypothesisRow {
    pub model: String,
    pub beta: f64,
    pub as_tr: f64,
    pub test_acc: f64,
    pub acc1: f64,
    pub acc5: f64,
    pub knn_dist: f64,
    pub as_inv_median: f64,
    pub final_as_inv_median: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HypothesisReplicate {
    pub seed: u64,
    pub eval_accuracy: f64,
    /// Sorted by `as_tr`, ascending.
    pub rows: Vec<HypothesisRow>,
    /// Whether Acc@1, read in `as_tr` order, peaks strictly inside the sweep.
    pub interior_maximum: bool,
    pub vanilla_as_inv: Summary,
    pub aligned_as_inv: Summary,
    pub vanilla_dynamics: Vec<DynamicsPoint>,
    pub aligned_dynamics: Vec<DynamicsPoint>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HypothesisReport {
    pub analytic_baseline: f64,
    pub beta: f64,
    pub replicates: Vec<HypothesisReplicate>,
}

/// True when some row other than the first and last beats both ends.
pub fn has_interior_maximum(values: &[f64]) -> bool {
    let n = values.len();
    if n < 3 {
        return false;
    }
    let best = values[1..n - 1].iter().copied().fold(f64::NEG_INFINITY, f64::max);
    best > values[0] && best > values[n - 1]
}

fn table_csv(rows: &[HypothesisRow]) -> String {
    let mut s = String::from("model,beta,as_tr,test_acc,acc1,acc5,knn_dist,as_inv_median,final_as_inv_median\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            r.model, r.beta, r.as_tr, r.test_acc, r.acc1, r.acc5, r.knn_dist, r.as_inv_median, r.final_as_inv_median
        );
    }
    s
}

/// Vanilla versus alignment-aware targets across the beta sweep: training
/// alignment, utility and attack success.
pub fn cmd_hypothesis(cfg: &ExperimentConfig, out: &Path, policy: Policy) -> Result<HypothesisReport> {
    cfg.check_kind(ExperimentKind::Hypothesis)?;
    let stamp = cfg.stamp();
    let root = out.join("hypothesis");
    let mut betas = cfg.betas.clone();
    if !betas.contains(&cfg.beta) {
        betas.push(cfg.beta);
    }
    let mut replicates = Vec::new();
    let mut summary = String::from("seed,model,beta,as_tr,test_acc,acc1,acc5,knn_dist,as_inv_median,final_as_inv_median\n");
    let mut baseline = 0.0;
    for seed in cfg.replicate_seeds() {
        let rep = Replicate::open(cfg, out, seed, policy)?;
        baseline = analytic_baseline(&rep);
        let eval = rep.eval_model(Policy::TrainMissing)?;
        let cache = rep.projectors(policy)?;
        let ids = run_ids(cfg, seed, cfg.runs_per_class);
        let dir = root.join(format!("seed-{seed}"));

        let mut models = vec![("vanilla".to_string(), 0.0, rep.target(Policy::TrainMissing)?)];
        for &b in &betas {
            models.push((format!("aligned-beta-{b}"), b, rep.aligned(b, Policy::TrainMissing)?));
        }
        let mut rows = Vec::new();
        let mut vanilla_runs = Vec::new();
        let mut aligned_runs = Vec::new();
        for (name, beta, c) in &models {
            let runs = attack(&rep, c, cfg.inversion.smoothing, &ids).map_err(|e| e.in_stage(format!("attack {name}")))?;
            write_attack(&dir.join(name), &stamp, cfg.inversion.smoothing, &ids, &runs)?;
            let report: AttackReport = attack_report(&runs, &rep.private, &eval)?;
            rows.push(HypothesisRow {
                model: name.clone(),
                beta: *beta,
                as_tr: measure_as_tr(c, &rep.train, &cache)?.mean,
                test_acc: accuracy(c, &rep.test)?,
                acc1: report.acc1,
                acc5: report.acc5,
                knn_dist: report.knn_dist,
                as_inv_median: report.as_inv.median,
                final_as_inv_median: final_as_distribution(&runs)?.median,
            });
            if name == "vanilla" {
                vanilla_runs = runs;
            } else if *beta == cfg.beta {
                aligned_runs = runs;
            }
        }
        rows.sort_by(|a, b| a.as_tr.total_cmp(&b.as_tr));
        let acc1: Vec<f64> = rows.iter().map(|r| r.acc1).collect();
        for r in &rows {
            let _ = writeln!(
                summary,
                "{seed},{},{},{},{},{},{},{},{},{}",
                r.model, r.beta, r.as_tr, r.test_acc, r.acc1, r.acc5, r.knn_dist, r.as_inv_median, r.final_as_inv_median
            );
        }
        let vanilla_as_inv = as_distribution(&vanilla_runs)?;
        let aligned_as_inv = as_distribution(&aligned_runs)?;
        let mut comparison = String::from("bin_left,vanilla,aligned\n");
        for ((left, v), (_, a)) in vanilla_as_inv.histogram_rows().into_iter().zip(aligned_as_inv.histogram_rows()) {
            let _ = writeln!(comparison, "{left:.2},{v},{a}");
        }
        write_csv(&dir.join("table.csv"), &stamp, &table_csv(&rows))?;
        write_csv(&dir.join("as_inv_comparison.csv"), &stamp, &comparison)?;
        let r = HypothesisReplicate {
            seed,
            eval_accuracy: eval.test_accuracy(),
            interior_maximum: has_interior_maximum(&acc1),
            rows,
            vanilla_dynamics: alignment_dynamics(&vanilla_runs),
            aligned_dynamics: alignment_dynamics(&aligned_runs),
            vanilla_as_inv,
            aligned_as_inv,
        };
        write_json(&dir.join("report.json"), &stamp, &r)?;
        replicates.push(r);
    }
    write_csv(&root.join("summary.csv"), &stamp, &summary)?;
    let report = HypothesisReport {
        analytic_baseline: baseline,
        beta: cfg.beta,
        replicates,
    };
    write_json(&root.join("report.json"), &stamp, &report)?;
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodRow {
    pub method: Smoothing,
    pub acc1: f64,
    pub acc5: f64,
    pub knn_dist: f64,
    pub final_confidence_median: f64,
    pub as_inv_median: f64,
    pub final_as_inv_median: f64,
    pub gradient_evaluations: usize,
    /// Gradient evaluations relative to the unsmoothed attack.
    pub cost_ratio: f64,
}

/// Wall-clock cost of one method on the timed subset. Kept out of the
/// deterministic report files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub method: Smoothing,
    pub repeats: usize,
    pub runs: usize,
    pub seconds_median: f64,
    pub runtime_ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlignmiReplicate {
    pub seed: u64,
    pub eval_accuracy: f64,
    pub rows: Vec<MethodRow>,
    #[serde(skip)]
    pub timing: Vec<TimingRow>,
    /// Per-run `(none, paa, taa)` final confidences on shared seeds.
    pub final_confidences: Vec<[f64; 3]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlignmiReport {
    pub replicates: Vec<AlignmiReplicate>,
}

const METHODS: [Smoothing; 3] = [Smoothing::None, Smoothing::Paa, Smoothing::Taa];

fn method_name(s: Smoothing) -> &'static str {
    match s {
        Smoothing::None => "baseline",
        Smoothing::Paa => "paa",
        Smoothing::Taa => "taa",
    }
}

/// Baseline, PAA and TAA attacks on the vanilla target with shared seeds.
pub fn cmd_alignmi_eval(cfg: &ExperimentConfig, out: &Path, policy: Policy) -> Result<AlignmiReport> {
    cfg.check_kind(ExperimentKind::AlignmiEval)?;
    let stamp = cfg.stamp();
    let root = out.join("alignmi-eval");
    let mut replicates = Vec::new();
    let mut summary = String::from("seed,method,acc1,acc5,knn_dist,final_confidence_median,as_inv_median,final_as_inv_median,gradient_evaluations,cost_ratio\n");
    let mut timing_csv = String::from("seed,method,repeats,runs,seconds_median,runtime_ratio\n");
    for seed in cfg.replicate_seeds() {
        let rep = Replicate::open(cfg, out, seed, policy)?;
        let target = rep.target(policy)?;
        let eval: EvalModel = rep.eval_model(policy)?;
        let ids = run_ids(cfg, seed, cfg.runs_per_class);
        let dir = root.join(format!("seed-{seed}"));
        let mut all_runs = Vec::new();
        for m in METHODS {
            let runs = attack(&rep, &target, m, &ids).map_err(|e| e.in_stage(format!("attack {}", method_name(m))))?;
            write_attack(&dir.join(method_name(m)), &stamp, m, &ids, &runs)?;
            all_runs.push(runs);
        }
        let base_evals: usize = all_runs[0].iter().map(|r| r.gradient_evaluations).sum();
        let mut rows = Vec::new();
        for (m, runs) in METHODS.iter().zip(&all_runs) {
            let rep_m = attack_report(runs, &rep.private, &eval)?;
            let evals: usize = runs.iter().map(|r| r.gradient_evaluations).sum();
            rows.push(MethodRow {
                method: *m,
                acc1: rep_m.acc1,
                acc5: rep_m.acc5,
                knn_dist: rep_m.knn_dist,
                final_confidence_median: median(&runs.iter().map(|r| r.final_confidence).collect::<Vec<_>>()),
                as_inv_median: rep_m.as_inv.median,
                final_as_inv_median: final_as_distribution(runs)?.median,
                gradient_evaluations: evals,
                cost_ratio: evals as f64 / base_evals as f64,
            });
        }
        let mut table = String::from("method,acc1,acc5,knn_dist,final_confidence_median,as_inv_median,final_as_inv_median,gradient_evaluations,cost_ratio\n");
        for r in &rows {
            let line = format!(
                "{},{},{},{},{},{},{},{},{}",
                method_name(r.method),
                r.acc1,
                r.acc5,
                r.knn_dist,
                r.final_confidence_median,
                r.as_inv_median,
                r.final_as_inv_median,
                r.gradient_evaluations,
                r.cost_ratio
            );
            let _ = writeln!(table, "{line}");
            let _ = writeln!(summary, "{seed},{line}");
        }
        write_csv(&dir.join("table.csv"), &stamp, &table)?;

        let subset: Vec<RunId> = ids.iter().copied().filter(|id| id.run < cfg.timing_runs_per_class).collect();
        let mut timing = Vec::new();
        for m in METHODS {
            let mut secs = Vec::with_capacity(cfg.timing_repeats);
            for _ in 0..cfg.timing_repeats {
                let t = Instant::now();
                attack(&rep, &target, m, &subset)?;
                secs.push(t.elapsed().as_secs_f64());
            }
            timing.push(TimingRow {
                method: m,
                repeats: cfg.timing_repeats,
                runs: subset.len(),
                seconds_median: median(&secs),
                runtime_ratio: 0.0,
            });
        }
        let base = timing[0].seconds_median;
        for t in &mut timing {
            t.runtime_ratio = t.seconds_median / base;
            let _ = writeln!(
                timing_csv,
                "{seed},{},{},{},{},{}",
                method_name(t.method),
                t.repeats,
                t.runs,
                t.seconds_median,
                t.runtime_ratio
            );
        }
        let final_confidences = (0..ids.len())
            .map(|i| [0, 1, 2].map(|m| all_runs[m][i].final_confidence))
            .collect();
        let r = AlignmiReplicate {
            seed,
            eval_accuracy: eval.test_accuracy(),
            rows,
            timing,
            final_confidences,
        };
        write_json(&dir.join("report.json"), &stamp, &r)?;
        replicates.push(r);
    }
    write_csv(&root.join("summary.csv"), &stamp, &summary)?;
    write_csv(&root.join("timing.csv"), &stamp, &timing_csv)?;
    let report = AlignmiReport { replicates };
    write_json(&root.join("report.json"), &stamp, &report)?;
    Ok(report)
}

fn read_stamped<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Option<(String, T)>> {
    if !path.exists() {
        return Ok(None);
    }
    let doc: Stamped<T> = serde_json::from_slice(&std::fs::read(path)?)?;
    Ok(Some((doc.config_hash, doc.body)))
}

/// Collects whichever experiment reports exist under `out` into
/// `report.md`.
pub fn cmd_report(out: &Path) -> Result<String> {
    let mut md = format!("# invgeo report\n\nversion {}\n", crate::VERSION);
    let mut found = false;
    if let Some((hash, r)) = read_stamped::<MeasureReport>(&out.join("measure-alignment/report.json"))? {
        found = true;
        let _ = write!(
            md,
            "\n## measure-alignment\n\nconfig {hash}\n\n| seed | test acc | AS_tr mean | AS_inv median | final AS_inv median | sqrt(k/d) |\n|---|---|---|---|---|---|\n"
        );
        for x in &r.replicates {
            let _ = writeln!(
                md,
                "| {} | {:.4} | {:.4} | {:.4} | {:.4} | {:.4} |",
                x.seed, x.test_acc, x.as_tr.mean, x.as_inv.median, x.final_as_inv.median, x.analytic_baseline
            );
        }
    }
    if let Some((hash, r)) = read_stamped::<HypothesisReport>(&out.join("hypothesis/report.json"))? {
        found = true;
        let _ = write!(
            md,
            "\n## hypothesis\n\nconfig {hash}\n\n| seed | model | beta | AS_tr | test acc | Acc@1 | Acc@5 | KNN dist | AS_inv median |\n|---|---|---|---|---|---|---|---|---|\n"
        );
        for x in &r.replicates {
            for row in &x.rows {
                let _ = writeln!(
                    md,
                    "| {} | {} | {} | {:.4} | {:.4} | {:.4} | {:.4} | {:.4} | {:.4} |",
                    x.seed, row.model, row.beta, row.as_tr, row.test_acc, row.acc1, row.acc5, row.knn_dist, row.as_inv_median
                );
            }
        }
    }
    if let Some((hash, r)) = read_stamped::<AlignmiReport>(&out.join("alignmi-eval/report.json"))? {
        found = true;
        let _ = write!(
            md,
            "\n## alignmi-eval\n\nconfig {hash}\n\n| seed | method | Acc@1 | Acc@5 | KNN dist | final AS_inv median | cost ratio |\n|---|---|---|---|---|---|---|\n"
        );
        for x in &r.replicates {
            for row in &x.rows {
                let _ = writeln!(
                    md,
                    "| {} | {} | {:.4} | {:.4} | {:.4} | {:.4} | {:.2} |",
                    x.seed,
                    method_name(row.method),
                    row.acc1,
                    row.acc5,
                    row.knn_dist,
                    row.final_as_inv_median,
                    row.cost_ratio
                );
            }
        }
    }
    if !found {
        return Err(Error::MissingArtifact(format!(
            "no experiment reports under {} (run measure-alignment, hypothesis or alignmi-eval)",
            out.display()
        )));
    }
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("report.md"), &md)?;
    Ok(md)
}
