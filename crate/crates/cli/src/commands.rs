use std::fs;
use std::path::{Path, PathBuf};

use drt_core::data::Dataset;
use drt_core::ensemble::{
    check_mme_robustness, check_single_robustness, check_we_robustness, ensemble_radius_bound, eri_we,
    EnsembleRadiusBound, EnsembleSpec, EriReport, Protocol, RobustnessVerdict,
};
use drt_core::fmt::fmt17;
use drt_core::model::MlpClassifier;
use drt_core::numstats::RngStream;
use drt_core::smoothing::{
    certified_accuracy_curve, certify_dataset, certify_eas, certify_ebs, parse_records_csv, records_to_csv,
    run_with_jobs, AccuracyCurve, EasResult,
};
use drt_core::statsim::{
    bound_sweep, comparison_thresholds, lambda_proxies, n_threshold, roc_auc, simulate_transferability, spearman,
    sweep_to_csv, transfer_to_csv, ConfidenceDistribution, MarginModel,
};
use drt_core::training::{train, TrainingHistory};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{
    parse_config, CertifyRun, ConditionsRun, EvalRun, RocSpec, RunConfig, SimulateRun, Strategy, TrainRun,
};
use crate::{CliError, Result};

// Stream ids keep the commands' random streams apart for a shared seed.
const INIT_STREAM: u64 = 0x696e6974;
const CERTIFY_STREAM: u64 = 0x63657274;
const EAS_STREAM: u64 = 0x00656173;
const TRANSFER_STREAM: u64 = 0x7472616e;
const ROC_STREAM: u64 = 0x00726f63;

pub const MANIFEST: &str = "manifest.json";

/// Settings shared by every command.
#[derive(Debug, Clone)]
pub struct Context {
    /// Directory relative config paths are resolved against.
    pub base: PathBuf,
    pub out: PathBuf,
    /// Replaces every seed in the configuration.
    pub seed: Option<u64>,
    /// Worker threads; 0 lets rayon decide.
    pub jobs: Option<usize>,
}

impl Context {
    fn jobs(&self, config: Option<usize>) -> usize {
        self.jobs.or(config).unwrap_or(0)
    }

    fn checkpoints(&self, dir: &Option<PathBuf>) -> PathBuf {
        dir.as_ref().map_or_else(|| self.out.clone(), |d| self.base.join(d))
    }

    fn write(&self, name: &str, contents: &str) -> Result<PathBuf> {
        fs::create_dir_all(&self.out).map_err(|e| CliError::io(&self.out, e))?;
        let path = self.out.join(name);
        fs::write(&path, contents).map_err(|e| CliError::io(&path, e))?;
        Ok(path)
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf> {
        let mut s = serde_json::to_string_pretty(value).map_err(drt_core::Error::from)?;
        s.push('\n');
        self.write(name, &s)
    }
}

pub fn read_config<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    parse_config(&bytes)
}

pub fn run(config: RunConfig, ctx: &Context) -> Result<Vec<PathBuf>> {
    match config {
        RunConfig::Train(c) => run_train(c, ctx),
        RunConfig::Certify(c) => run_certify(c, ctx),
        RunConfig::Conditions(c) => run_conditions(c, ctx),
        RunConfig::Simulate(c) => run_simulate(c, ctx),
        RunConfig::Eval(c) => run_eval(c, ctx),
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub members: Vec<String>,
    pub config: TrainRun,
}

/// Loads the members listed in `dir/manifest.json`.
pub fn load_members(dir: &Path) -> Result<Vec<MlpClassifier>> {
    let manifest: Manifest = read_config(&dir.join(MANIFEST))?;
    manifest
        .members
        .iter()
        .map(|f| Ok(MlpClassifier::load(&dir.join(f))?))
        .collect()
}

pub fn run_train(mut cfg: TrainRun, ctx: &Context) -> Result<Vec<PathBuf>> {
    if let Some(seed) = ctx.seed {
        cfg.training.seed = seed;
        if let Some(p) = cfg.pretrain.as_mut() {
            p.seed = seed;
        }
    }
    if cfg.model.members == 0 {
        return Err(CliError::Config("model.members must be at least 1".into()));
    }
    let data = cfg.data.train(&ctx.base)?;
    let init = RngStream::new(cfg.training.seed, INIT_STREAM);
    let mut members = (0..cfg.model.members)
        .map(|i| {
            MlpClassifier::init_random(
                data.dim(),
                &cfg.model.hidden,
                data.num_classes(),
                cfg.model.activation,
                &mut init.substream(i as u64),
            )
        })
        .collect::<drt_core::Result<Vec<_>>>()?;
    let jobs = ctx.jobs(cfg.jobs);
    let history = run_with_jobs(jobs, || -> drt_core::Result<TrainingHistory> {
        let mut history = match &cfg.pretrain {
            Some(p) => train(&mut members, &data, p)?,
            None => TrainingHistory::default(),
        };
        let main = train(&mut members, &data, &cfg.training)?;
        let offset = history.epochs.len();
        history.adp_degenerate_draws += main.adp_degenerate_draws;
        history.epochs.extend(main.epochs.into_iter().map(|mut e| {
            e.epoch += offset;
            e
        }));
        Ok(history)
    })?;

    let mut written = Vec::new();
    let mut files = Vec::new();
    fs::create_dir_all(&ctx.out).map_err(|e| CliError::io(&ctx.out, e))?;
    for (i, m) in members.iter().enumerate() {
        let name = format!("member_{i}.json");
        let path = ctx.out.join(&name);
        m.save(&path)?;
        files.push(name);
        written.push(path);
    }
    written.push(ctx.write("history.csv", &history.to_csv())?);
    written.push(ctx.write_json(MANIFEST, &Manifest { members: files, config: cfg })?);
    Ok(written)
}

fn test_inputs(data: &Dataset, max: Option<usize>) -> (Vec<Vec<f64>>, Vec<usize>) {
    let n = max.map_or(data.len(), |m| m.min(data.len()));
    let xs = (0..n).map(|i| data.row(i).to_vec()).collect();
    (xs, data.labels()[..n].to_vec())
}

fn equal_weights(n: usize) -> Vec<f64> {
    vec![1.0 / n as f64; n]
}

#[derive(Debug, Serialize)]
struct EasSummary {
    records: usize,
    certified_accuracy: Vec<f64>,
    acr: f64,
}

#[derive(Debug, Serialize)]
struct CertifySummary {
    test_inputs: usize,
    protocol: Protocol,
    ebs: Option<AccuracyCurve>,
    eas: Option<EasSummary>,
}

pub const EAS_HEADER: &str = "id,label,prediction,radius,max_member_radius";

pub fn run_certify(mut cfg: CertifyRun, ctx: &Context) -> Result<Vec<PathBuf>> {
    if let Some(seed) = ctx.seed {
        cfg.seed = seed;
    }
    cfg.smoothing.validate()?;
    let members = load_members(&ctx.checkpoints(&cfg.checkpoints))?;
    let protocol = cfg
        .protocol
        .clone()
        .unwrap_or_else(|| Protocol::We { weights: equal_weights(members.len()) });
    let spec = EnsembleSpec::new(protocol.clone(), members)?;
    let test = cfg.data.test(&ctx.base)?;
    let (xs, labels) = test_inputs(&test, None);
    let ids: Vec<u64> = (0..xs.len() as u64).collect();
    let jobs = ctx.jobs(cfg.jobs);
    let mut written = Vec::new();

    let ebs = if matches!(cfg.strategy, Strategy::Ebs | Strategy::Both) {
        let rng = RngStream::new(cfg.seed, CERTIFY_STREAM);
        let records = certify_dataset(&spec, &cfg.smoothing, &xs, &labels, &ids, &rng, jobs)?;
        written.push(ctx.write("records_ebs.csv", &records_to_csv(&records))?);
        Some(certified_accuracy_curve(&records, &cfg.radii)?)
    } else {
        None
    };

    let eas = if matches!(cfg.strategy, Strategy::Eas | Strategy::Both) {
        let rng = RngStream::new(cfg.seed, EAS_STREAM);
        let results = run_with_jobs(jobs, || {
            xs.par_iter()
                .zip(&ids)
                .map(|(x, &id)| certify_eas(spec.members(), &cfg.smoothing, x, &rng.substream(id)))
                .collect::<drt_core::Result<Vec<EasResult>>>()
        })?;
        let mut csv = String::from(EAS_HEADER);
        csv.push('\n');
        for ((r, &y), id) in results.iter().zip(&labels).zip(&ids) {
            let max_member = r.member_radii.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            csv.push_str(&format!(
                "{id},{y},{},{},{}\n",
                r.prediction,
                fmt17(r.radius),
                fmt17(max_member)
            ));
        }
        written.push(ctx.write("eas_records.csv", &csv)?);
        let certified = |r: &EasResult, y: usize| r.prediction == y && r.raw_radius > 0.0;
        let n = results.len().max(1) as f64;
        Some(EasSummary {
            records: results.len(),
            certified_accuracy: cfg
                .radii
                .iter()
                .map(|&rad| {
                    results
                        .iter()
                        .zip(&labels)
                        .filter(|(r, &y)| certified(r, y) && r.radius >= rad)
                        .count() as f64
                        / n
                })
                .collect(),
            acr: results
                .iter()
                .zip(&labels)
                .filter(|(r, &y)| certified(r, y))
                .map(|(r, _)| r.radius)
                .sum::<f64>()
                / n,
        })
    } else {
        None
    };

    written.push(ctx.write_json(
        "summary.json",
        &CertifySummary {
            test_inputs: xs.len(),
            protocol,
            ebs,
            eas,
        },
    )?);
    Ok(written)
}

/// A per-input result that may have failed on its own.
#[derive(Debug, Serialize)]
#[serde(untagged)]
enum Outcome<T> {
    Ok(T),
    Err { error: String },
}

impl<T> From<drt_core::Result<T>> for Outcome<T> {
    fn from(r: drt_core::Result<T>) -> Self {
        match r {
            Ok(v) => Outcome::Ok(v),
            Err(e) => Outcome::Err { error: e.to_string() },
        }
    }
}

#[derive(Debug, Serialize)]
struct BoundOutcome {
    cos_theta: f64,
    bound: EnsembleRadiusBound,
}

#[derive(Debug, Serialize)]
struct ConditionsEntry {
    index: usize,
    label: usize,
    eri: Outcome<EriReport>,
    we: Outcome<RobustnessVerdict>,
    mme: Option<Outcome<RobustnessVerdict>>,
    single: Vec<Outcome<RobustnessVerdict>>,
    radius_bound: Option<Outcome<BoundOutcome>>,
}

#[derive(Debug, Serialize)]
struct ConditionsReport {
    beta: f64,
    r: f64,
    weights: Vec<f64>,
    inputs: Vec<ConditionsEntry>,
}

/// Cosine between the two members' margin gradients against the strongest
/// competitor of `y0` under the averaged confidences.
fn margin_gradient_cosine(members: &[MlpClassifier], x: &[f64], y0: usize) -> drt_core::Result<f64> {
    let mut avg = vec![0.0; members[0].num_classes()];
    for m in members {
        for (a, v) in avg.iter_mut().zip(m.confidences(x)?) {
            *a += v;
        }
    }
    let rival = (0..avg.len())
        .filter(|&j| j != y0)
        .max_by(|&a, &b| avg[a].total_cmp(&avg[b]))
        .ok_or_else(|| drt_core::Error::Domain("need at least two classes".into()))?;
    let g1 = members[0].margin_input_gradient(x, y0, rival)?;
    let g2 = members[1].margin_input_gradient(x, y0, rival)?;
    let dot: f64 = g1.iter().zip(&g2).map(|(a, b)| a * b).sum();
    let n1 = g1.iter().map(|a| a * a).sum::<f64>().sqrt();
    let n2 = g2.iter().map(|a| a * a).sum::<f64>().sqrt();
    if n1 == 0.0 || n2 == 0.0 {
        return Err(drt_core::Error::Domain("a margin gradient vanishes".into()));
    }
    Ok((dot / (n1 * n2)).clamp(-1.0, 1.0))
}

pub fn run_conditions(cfg: ConditionsRun, ctx: &Context) -> Result<Vec<PathBuf>> {
    let members = load_members(&ctx.checkpoints(&cfg.checkpoints))?;
    let weights = cfg.weights.clone().unwrap_or_else(|| equal_weights(members.len()));
    let spec = EnsembleSpec::new(Protocol::We { weights: weights.clone() }, members.clone())?;
    let test = cfg.data.test(&ctx.base)?;
    let (xs, labels) = test_inputs(&test, cfg.max_inputs);
    let pair = members.len() == 2;

    let inputs = xs
        .iter()
        .zip(&labels)
        .enumerate()
        .map(|(index, (x, &y))| {
            let radius_bound = pair.then(|| {
                let cos = match cfg.cos_theta {
                    Some(c) => Ok(c),
                    None => margin_gradient_cosine(&members, x, y),
                };
                cos.and_then(|cos_theta| {
                    ensemble_radius_bound(&spec, x, y, cfg.r, cfg.delta, cos_theta)
                        .map(|bound| BoundOutcome { cos_theta, bound })
                })
                .into()
            });
            ConditionsEntry {
                index,
                label: y,
                eri: eri_we(&members, &weights, x, y, cfg.r).into(),
                we: check_we_robustness(&members, &weights, x, y, cfg.r, cfg.beta).into(),
                mme: pair.then(|| check_mme_robustness(&members, x, y, cfg.r, cfg.beta).into()),
                single: members
                    .iter()
                    .map(|m| check_single_robustness(m, x, y, cfg.r, cfg.beta).into())
                    .collect(),
                radius_bound,
            }
        })
        .collect();

    let path = ctx.write_json(
        "conditions.json",
        &ConditionsReport {
            beta: cfg.beta,
            r: cfg.r,
            weights,
            inputs,
        },
    )?;
    Ok(vec![path])
}

#[derive(Debug, Default, Serialize)]
struct TransferSummary {
    trials: usize,
    clamped: usize,
    /// Rank correlation between λ₁/λ₂ and `radius_mme − radius_we`.
    spearman: Option<Outcome<f64>>,
}

#[derive(Debug, Default, Serialize)]
struct RocSummary {
    points: usize,
    skipped: usize,
    /// Why the first skipped input was skipped.
    first_skip_reason: Option<String>,
    positives: usize,
    auc: Option<Outcome<f64>>,
}

#[derive(Debug, Default, Serialize)]
struct SimulateSummary {
    transferability: Option<TransferSummary>,
    roc: Option<RocSummary>,
}

pub const THRESHOLD_HEADER: &str = "mu,lambda2,n_threshold";
pub const ROC_HEADER: &str = "index,label,lambda1,lambda2,threshold,score,radius_we,radius_mme,mme_higher";

pub fn run_simulate(mut cfg: SimulateRun, ctx: &Context) -> Result<Vec<PathBuf>> {
    if let Some(seed) = ctx.seed {
        cfg.seed = seed;
    }
    if cfg.transferability.is_none() && cfg.bound_sweep.is_none() && cfg.thresholds.is_none() && cfg.roc.is_none() {
        return Err(CliError::Config(
            "simulate needs at least one of transferability, bound_sweep, thresholds, roc".into(),
        ));
    }
    let jobs = ctx.jobs(cfg.jobs);
    let mut written = Vec::new();
    let mut summary = SimulateSummary::default();

    if let Some(t) = &cfg.transferability {
        let rng = RngStream::new(cfg.seed, TRANSFER_STREAM);
        let trials = run_with_jobs(jobs, || simulate_transferability(t, &rng))?;
        written.push(ctx.write("transferability.csv", &transfer_to_csv(&trials))?);
        let ratio: Vec<f64> = trials.iter().map(|t| t.lambda_ratio).collect();
        let diff: Vec<f64> = trials.iter().map(|t| t.diff).collect();
        summary.transferability = Some(TransferSummary {
            trials: trials.len(),
            clamped: trials.iter().filter(|t| t.clamped).count(),
            spearman: Some(spearman(&ratio, &diff).into()),
        });
    }

    if let Some(s) = &cfg.bound_sweep {
        let rows = bound_sweep(&s.base, &s.ns, &s.lambda1s, s.sigma)?;
        written.push(ctx.write("bound_sweep.csv", &sweep_to_csv(&rows))?);
    }

    if let Some(t) = &cfg.thresholds {
        let mut csv = String::from(THRESHOLD_HEADER);
        csv.push('\n');
        for &mu in &t.mus {
            let n = n_threshold(mu, t.lambda2)?;
            csv.push_str(&format!("{},{},{}\n", fmt17(mu), fmt17(t.lambda2), fmt17(n)));
        }
        written.push(ctx.write("n_threshold.csv", &csv)?);
    }

    if let Some(r) = &cfg.roc {
        let (csv, roc) = run_with_jobs(jobs, || simulate_roc(r, cfg.seed, ctx))?;
        written.push(ctx.write("roc.csv", &csv)?);
        summary.roc = Some(roc);
    }

    written.push(ctx.write_json("simulate_summary.json", &summary)?);
    Ok(written)
}

struct RocPoint {
    index: usize,
    label: usize,
    lambda1: f64,
    lambda2: f64,
    threshold: f64,
    radius_we: f64,
    radius_mme: f64,
}

impl RocPoint {
    fn score(&self) -> f64 {
        self.lambda1 / self.lambda2 - self.threshold
    }

    fn mme_higher(&self) -> bool {
        self.radius_mme > self.radius_we
    }
}

fn roc_point(
    we: &EnsembleSpec,
    mme: &EnsembleSpec,
    cfg: &RocSpec,
    x: &[f64],
    y: usize,
    index: usize,
    rng: &RngStream,
) -> drt_core::Result<RocPoint> {
    let n = we.members().len();
    let proxies = lambda_proxies(we, x, y, cfg.smoothing.sigma, cfg.m, &mut rng.substream(3 * index as u64))?;
    let model = MarginModel {
        lambda1: proxies.lambda1,
        lambda2: proxies.lambda2,
        lambda3: 1.0,
        p: 0.0,
        n,
        weights: None,
        distribution: ConfidenceDistribution::Symmetric {
            mu: proxies.mu,
            s: proxies.s,
            s_f: proxies.s_f,
        },
    };
    let threshold = comparison_thresholds(&model)?.mme_higher;
    let mut r_we = rng.substream(3 * index as u64 + 1);
    let mut r_mme = rng.substream(3 * index as u64 + 2);
    let rec_we = certify_ebs(we, &cfg.smoothing, x, y, index as u64, &mut r_we)?;
    let rec_mme = certify_ebs(mme, &cfg.smoothing, x, y, index as u64, &mut r_mme)?;
    Ok(RocPoint {
        index,
        label: y,
        lambda1: proxies.lambda1,
        lambda2: proxies.lambda2,
        threshold,
        radius_we: rec_we.radius,
        radius_mme: rec_mme.radius,
    })
}

fn simulate_roc(cfg: &RocSpec, seed: u64, ctx: &Context) -> Result<(String, RocSummary)> {
    cfg.smoothing.validate()?;
    let members = load_members(&ctx.checkpoints(&cfg.checkpoints))?;
    let we = EnsembleSpec::average(members.clone())?;
    let mme = EnsembleSpec::max_margin(members)?;
    let test = cfg.data.test(&ctx.base)?;
    let (xs, labels) = test_inputs(&test, cfg.max_inputs);
    let rng = RngStream::new(seed, ROC_STREAM);
    let results: Vec<drt_core::Result<RocPoint>> = xs
        .par_iter()
        .zip(&labels)
        .enumerate()
        .map(|(i, (x, &y))| roc_point(&we, &mme, cfg, x, y, i, &rng))
        .collect();
    let skipped = results.iter().filter(|r| r.is_err()).count();
    let first_skip_reason = results.iter().find_map(|r| r.as_ref().err().map(ToString::to_string));
    let points: Vec<RocPoint> = results.into_iter().filter_map(|r| r.ok()).collect();

    let mut csv = String::from(ROC_HEADER);
    csv.push('\n');
    for p in &points {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            p.index,
            p.label,
            fmt17(p.lambda1),
            fmt17(p.lambda2),
            fmt17(p.threshold),
            fmt17(p.score()),
            fmt17(p.radius_we),
            fmt17(p.radius_mme),
            u8::from(p.mme_higher())
        ));
    }
    let scores: Vec<f64> = points.iter().map(RocPoint::score).collect();
    let flags: Vec<bool> = points.iter().map(RocPoint::mme_higher).collect();
    let summary = RocSummary {
        points: points.len(),
        skipped,
        first_skip_reason,
        positives: flags.iter().filter(|&&f| f).count(),
        auc: (!points.is_empty()).then(|| roc_auc(&scores, &flags).into()),
    };
    Ok((csv, summary))
}

#[derive(Debug, Serialize)]
struct EvalSummary {
    records: usize,
    clean_accuracy: f64,
    abstain_rate: f64,
    curve: AccuracyCurve,
}

pub fn run_eval(cfg: EvalRun, ctx: &Context) -> Result<Vec<PathBuf>> {
    let path = ctx.base.join(&cfg.records);
    let bytes = fs::read(&path).map_err(|e| CliError::io(&path, e))?;
    let records = parse_records_csv(&bytes)?;
    let curve = certified_accuracy_curve(&records, &cfg.radii)?;
    let n = records.len() as f64;
    let summary = EvalSummary {
        records: records.len(),
        clean_accuracy: records.iter().filter(|r| r.correct() && !r.abstain).count() as f64 / n,
        abstain_rate: records.iter().filter(|r| r.abstain).count() as f64 / n,
        curve,
    };
    Ok(vec![ctx.write_json("eval_summary.json", &summary)?])
}
