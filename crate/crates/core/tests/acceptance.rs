//! Acceptance suite: one PASS/FAIL/SKIP line per criterion.
//!
//! `cargo test -p drt-core --test acceptance` runs everything; trailing numeric
//! arguments (`-- 3 4`) restrict the run to those criteria.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use drt_core::autodiff::{gradient_check, Graph, NodeId, Tensor};
use drt_core::data::{gen_two_moons, read_idx, split_and_subsample, Dataset};
use drt_core::ensemble::{check_we_robustness, mme_predict, we_predict, EnsembleSpec, Protocol, VerdictStatus};
use drt_core::model::{Activation, FnClassifier, MlpClassifier};
use drt_core::numstats::{clopper_pearson_lower, RngStream};
use drt_core::smoothing::{
    certified_accuracy_curve, certify_dataset, certify_ebs, compare_smoothing_strategies, smoothness_probe,
    SmoothingSpec, StrategyVerdict,
};
use drt_core::statsim::{
    bound_mme, bound_we, comparison_thresholds, n_threshold, simulate_transferability, spearman, var_min_uniform,
    ComparisonVerdict, ConfidenceDistribution, MarginModel, TransferConfig,
};
use drt_core::training::{cm_loss, gd_loss, train, MemberNodes, TrainingConfig, Variant};

// Criterion 1
const C1_MODELS: usize = 200;
const C1_MIN_SOUND: usize = 199;
const C1_MIN_MEAN_RATIO: f64 = 0.9;
const C1_BUDGET: Duration = Duration::from_secs(300);
// Criterion 2
const C2_MODELS: usize = 50;
const C2_SE_MULT: f64 = 4.0;
const C2_STEP_FRACTION: f64 = 0.9;
const C2_BUDGET: Duration = Duration::from_secs(600);
// Criteria 3 and 4
const MOONS_SEEDS: u64 = 5;
const MOONS_BUDGET: Duration = Duration::from_secs(1200);
// Criterion 5
const C5_PAIRS: usize = 20;
const C5_MAX_REL_ERR: f64 = 1e-3;
const C5_BUDGET: Duration = Duration::from_secs(60);
// Criterion 6
const C6_INPUTS: usize = 500;
const C6_INSTANCES: usize = 20;
const C6_GRID: usize = 100;
const C6_BETA_MULT: f64 = 2.0;
// Criterion 7
const C7_TRIALS: usize = 10_000;
const C7_ALPHA: f64 = 0.05;
const C7_SLACK: f64 = 0.01;
const C7_ANCHOR_TOL: f64 = 1e-10;
// Criterion 8
const C8_MIN_SPEARMAN: f64 = 0.2;
const C8_VAR_REL_TOL: f64 = 0.02;
const C8_MIN_GRID: usize = 1000;
const C8_N_THRESHOLD: f64 = 40.67;
const C8_N_THRESHOLD_TOL: f64 = 5e-3;
const C8_BUDGET: Duration = Duration::from_secs(600);
// Criterion 9
const C9_TOL: f64 = 1e-12;
// Criterion 10
const C10_BUDGET: Duration = Duration::from_secs(3600);

#[derive(Clone, Copy, PartialEq, Eq)]
enum Status {
    Pass,
    Fail,
    Skip,
}

struct Outcome {
    status: Status,
    detail: String,
}

fn verdict(ok: bool, detail: String) -> Outcome {
    Outcome {
        status: if ok { Status::Pass } else { Status::Fail },
        detail,
    }
}

fn within(start: Instant, budget: Duration) -> (bool, String) {
    let t = start.elapsed();
    (t <= budget, format!("{:.1}s of {}s", t.as_secs_f64(), budget.as_secs()))
}

fn unit_vector(rng: &mut RngStream, d: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..d).map(|_| rng.std_normal()).collect();
    let n = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    v.into_iter().map(|a| a / n).collect()
}

fn random_mlp(rng: &mut RngStream, d: usize, hidden: &[usize], c: usize) -> MlpClassifier {
    MlpClassifier::init_random(d, hidden, c, Activation::Softplus, rng).unwrap()
}

/// Linear classifiers: the smoothed boundary is the same hyperplane, so the
/// exact certified radius is the distance to it.
fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = RngStream::new(1, 0);
    let (mut sound, mut ratio_sum) = (0usize, 0.0);
    for i in 0..C1_MODELS {
        let sigma = if i % 2 == 0 { 0.25 } else { 0.5 };
        let w = unit_vector(&mut rng, 2);
        let b = rng.uniform_range(-1.0, 1.0);
        let dist = sigma * rng.uniform_range(0.1, 2.5);
        // x0 sits on the positive side at distance `dist`.
        let foot: Vec<f64> = w.iter().map(|wi| -b * wi).collect();
        let x0: Vec<f64> = foot.iter().zip(&w).map(|(f, wi)| f + dist * wi).collect();
        let wc = w.clone();
        let clf = FnClassifier::new(2, 2, move |x: &[f64]| usize::from(wc[0] * x[0] + wc[1] * x[1] + b > 0.0));
        let spec = SmoothingSpec {
            sigma,
            n0: 100,
            n: 100_000,
            alpha: 0.001,
        };
        let rec = certify_ebs(&clf, &spec, &x0, 1, i as u64, &mut rng.substream(i as u64)).unwrap();
        if rec.radius <= dist {
            sound += 1;
        }
        ratio_sum += if rec.prediction == 1 { rec.radius / dist } else { 0.0 };
    }
    let mean_ratio = ratio_sum / C1_MODELS as f64;
    let (fast, time) = within(start, C1_BUDGET);
    verdict(
        sound >= C1_MIN_SOUND && mean_ratio >= C1_MIN_MEAN_RATIO && fast,
        format!("sound {sound}/{C1_MODELS}, mean radius/distance {mean_ratio:.4}, {time}"),
    )
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let mut rng = RngStream::new(2, 0);
    let mut worst_excess = f64::NEG_INFINITY;
    let mut violations = 0;
    for i in 0..C2_MODELS {
        let sigma = [0.25, 0.5, 1.0][i % 3];
        let d = 2 + i % 4;
        let model = random_mlp(&mut rng, d, &[8], 3);
        let class = rng.below(3);
        let x: Vec<f64> = (0..d).map(|_| rng.std_normal()).collect();
        let u = unit_vector(&mut rng, d);
        let f = |rows: &[f64]| -> Vec<f64> {
            model.confidences_batch(rows).unwrap().chunks_exact(3).map(|p| p[class]).collect()
        };
        let est = smoothness_probe(&f, &x, &u, 0.5 * sigma, sigma, 20_000, &mut rng.substream(i as u64)).unwrap();
        let limit = 2.0 / (sigma * sigma) + C2_SE_MULT * est.std_error;
        worst_excess = worst_excess.max(est.value.abs() - limit);
        if est.value.abs() > limit {
            violations += 1;
        }
    }
    // 1-D step: the smoothed function is Φ(x/σ), whose curvature peaks at x = σ.
    let sigma = 0.5;
    let step = |rows: &[f64]| -> Vec<f64> { rows.iter().map(|&v| if v > 0.0 { 1.0 } else { 0.0 }).collect() };
    let est = smoothness_probe(&step, &[sigma], &[1.0], 0.2 * sigma, sigma, 4_000_000, &mut rng.substream(999)).unwrap();
    let peak = 1.0 / ((2.0 * std::f64::consts::PI * std::f64::consts::E).sqrt() * sigma * sigma);
    let attained = est.value.abs() / peak;
    let (fast, time) = within(start, C2_BUDGET);
    verdict(
        violations == 0 && attained >= C2_STEP_FRACTION && fast,
        format!(
            "{violations} MLP probes above 2/sigma^2 + 4 SE (worst excess {worst_excess:.3}), step attains {attained:.4} of the peak curvature, {time}"
        ),
    )
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum MoonsVariant {
    Baseline,
    Drt,
    GdOnly,
    CmOnly,
}

struct MoonsResult {
    variant: MoonsVariant,
    acr_we: Vec<f64>,
    acr_mme: Vec<f64>,
}

fn moons_experiment() -> (Vec<MoonsResult>, Duration) {
    let start = Instant::now();
    let train_set = gen_two_moons(400, 0.15, 0).unwrap();
    let test_set = gen_two_moons(100, 0.15, 999).unwrap();
    let xs = test_set.rows();
    let ids: Vec<u64> = (0..xs.len() as u64).collect();
    let spec = SmoothingSpec {
        sigma: 0.5,
        n0: 100,
        n: 10_000,
        alpha: 0.001,
    };
    let variants = [
        (MoonsVariant::Baseline, Variant::None, 0.0, 0.0),
        (MoonsVariant::Drt, Variant::DrtPairwise, 0.5, 2.0),
        (MoonsVariant::GdOnly, Variant::GdOnly, 0.5, 0.0),
        (MoonsVariant::CmOnly, Variant::CmOnly, 0.0, 2.0),
    ];
    let results = variants
        .into_iter()
        .map(|(variant, v, rho1, rho2)| {
            let (mut acr_we, mut acr_mme) = (Vec::new(), Vec::new());
            for seed in 0..MOONS_SEEDS {
                let mut init = RngStream::new(seed, 1);
                let mut members: Vec<MlpClassifier> = (0..3).map(|_| random_mlp(&mut init, 2, &[16, 16], 2)).collect();
                let cfg = TrainingConfig {
                    rho1,
                    rho2,
                    variant: v,
                    sigma: 0.5,
                    epochs: 40,
                    batch_size: 32,
                    lr: 0.05,
                    momentum: 0.9,
                    seed,
                    ..TrainingConfig::default()
                };
                train(&mut members, &train_set, &cfg).unwrap();
                let rng = RngStream::new(seed, 7);
                for (ens, out) in [
                    (EnsembleSpec::average(members.clone()).unwrap(), &mut acr_we),
                    (EnsembleSpec::max_margin(members).unwrap(), &mut acr_mme),
                ] {
                    let recs = certify_dataset(&ens, &spec, &xs, test_set.labels(), &ids, &rng, 0).unwrap();
                    out.push(certified_accuracy_curve(&recs, &[0.0]).unwrap().acr);
                }
            }
            MoonsResult {
                variant,
                acr_we,
                acr_mme,
            }
        })
        .collect();
    (results, start.elapsed())
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Mean and standard error of the per-seed differences `a − b`.
fn paired(a: &[f64], b: &[f64]) -> (f64, f64) {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let m = mean(&d);
    let var = d.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (d.len() as f64 - 1.0);
    (m, (var / d.len() as f64).sqrt())
}

fn fmt_acr(v: &[f64]) -> String {
    v.iter().map(|a| format!("{a:.4}")).collect::<Vec<_>>().join(",")
}

fn find(results: &[MoonsResult], v: MoonsVariant) -> &MoonsResult {
    results.iter().find(|r| r.variant == v).unwrap()
}

fn criterion_3(results: &[MoonsResult], elapsed: Duration) -> Outcome {
    let base = find(results, MoonsVariant::Baseline);
    let drt = find(results, MoonsVariant::Drt);
    let (we_b, we_d) = (median(&base.acr_we), median(&drt.acr_we));
    let (mme_b, mme_d) = (median(&base.acr_mme), median(&drt.acr_mme));
    let fast = elapsed <= MOONS_BUDGET;
    verdict(
        we_d > we_b && mme_d > mme_b && fast,
        format!(
            "median ACR WE drt {we_d:.4} vs baseline {we_b:.4}, MME drt {mme_d:.4} vs baseline {mme_b:.4} \
             [WE drt {}; base {}], {:.1}s for all four variants of {}s",
            fmt_acr(&drt.acr_we),
            fmt_acr(&base.acr_we),
            elapsed.as_secs_f64(),
            MOONS_BUDGET.as_secs()
        ),
    )
}

fn criterion_4(results: &[MoonsResult]) -> Outcome {
    let base = find(results, MoonsVariant::Baseline);
    let drt = find(results, MoonsVariant::Drt);
    let gd = find(results, MoonsVariant::GdOnly);
    let cm = find(results, MoonsVariant::CmOnly);
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, pick) in [
        ("WE", (|r: &MoonsResult| r.acr_we.clone()) as fn(&MoonsResult) -> Vec<f64>),
        ("MME", |r: &MoonsResult| r.acr_mme.clone()),
    ] {
        let (b, d, g, c) = (pick(base), pick(drt), pick(gd), pick(cm));
        let (gd_gain, gd_se) = paired(&g, &b);
        let (cm_gain, cm_se) = paired(&c, &b);
        // DRT against the better of the two ablations, by mean ACR.
        let best = if mean(&g) >= mean(&c) { &g } else { &c };
        let (drt_gain, drt_se) = paired(&d, best);
        ok &= gd_gain >= -gd_se && cm_gain >= -cm_se && drt_gain >= -drt_se;
        parts.push(format!(
            "{name}: GD-base {gd_gain:+.4} (SE {gd_se:.4}), CM-base {cm_gain:+.4} (SE {cm_se:.4}), \
             DRT-max(GD,CM) {drt_gain:+.4} (SE {drt_se:.4})"
        ));
    }
    verdict(ok, parts.join("; "))
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let mut rng = RngStream::new(5, 0);
    let mut worst: f64 = 0.0;
    let mut pairs = 0;
    while pairs < C5_PAIRS {
        let a = random_mlp(&mut rng, 3, &[6], 3);
        let b = random_mlp(&mut rng, 3, &[6], 3);
        let x: Vec<f64> = (0..3).map(|_| rng.std_normal()).collect();
        let y0 = a.predict(&x).unwrap().top;
        if b.predict(&x).unwrap().top != y0 {
            continue;
        }
        pairs += 1;
        for loss in [gd_loss, cm_loss] {
            let mut g = Graph::new();
            let input = g.input(Tensor::vector(x.clone()));
            let na = MemberNodes::new(&mut g, &a, input).unwrap();
            let nb = MemberNodes::new(&mut g, &b, input).unwrap();
            let out = loss(&mut g, &na, &nb, y0).unwrap();
            let leaves: Vec<NodeId> = na.params.leaves().into_iter().chain(nb.params.leaves()).collect();
            worst = worst.max(gradient_check(&mut g, out, &leaves, 1e-6).unwrap());
        }
    }
    let (fast, time) = within(start, C5_BUDGET);
    verdict(
        worst < C5_MAX_REL_ERR && fast,
        format!("max relative error {worst:.2e} over {C5_PAIRS} pairs (GD and CM), {time}"),
    )
}

fn brute_we(members: &[MlpClassifier], w: &[f64], x: &[f64]) -> usize {
    let c = members[0].num_classes();
    let mut total = vec![0.0; c];
    for (m, wi) in members.iter().zip(w) {
        for (t, p) in total.iter_mut().zip(m.confidences(x).unwrap()) {
            *t += wi * p;
        }
    }
    (0..c).fold(0, |best, j| if total[j] > total[best] { j } else { best })
}

fn brute_mme(members: &[MlpClassifier], x: &[f64]) -> usize {
    let mut best = (f64::NEG_INFINITY, 0);
    for m in members {
        let p = m.confidences(x).unwrap();
        let mut order: Vec<usize> = (0..p.len()).collect();
        order.sort_by(|&i, &j| p[j].total_cmp(&p[i]).then(i.cmp(&j)));
        let margin = p[order[0]] - p[order[1]];
        if margin > best.0 {
            best = (margin, order[0]);
        }
    }
    best.1
}

/// Largest spectral norm of the FD Hessian of any member margin over a polar
/// grid covering the ball of radius `r` around `x0` (d = 2).
fn margin_smoothness(members: &[MlpClassifier], x0: &[f64], y0: usize, r: f64) -> f64 {
    let h = 1e-4;
    let c = members[0].num_classes();
    let mut worst: f64 = 0.0;
    for ri in 0..=10 {
        for ai in 0..24 {
            let rad = r * ri as f64 / 10.0;
            let ang = 2.0 * std::f64::consts::PI * ai as f64 / 24.0;
            let x = [x0[0] + rad * ang.cos(), x0[1] + rad * ang.sin()];
            for m in members {
                for y in (0..c).filter(|&y| y != y0) {
                    let mut hess = [[0.0; 2]; 2];
                    for k in 0..2 {
                        let mut up = x;
                        let mut down = x;
                        up[k] += h;
                        down[k] -= h;
                        let gu = m.margin_input_gradient(&up, y0, y).unwrap();
                        let gd = m.margin_input_gradient(&down, y0, y).unwrap();
                        for j in 0..2 {
                            hess[j][k] = (gu[j] - gd[j]) / (2.0 * h);
                        }
                    }
                    let (a, b, d) = (hess[0][0], 0.5 * (hess[0][1] + hess[1][0]), hess[1][1]);
                    let spectral = 0.5 * (a + d).abs() + (0.25 * (a - d).powi(2) + b * b).sqrt();
                    worst = worst.max(spectral);
                }
            }
        }
    }
    worst
}

fn criterion_6() -> Outcome {
    let mut rng = RngStream::new(6, 0);
    let members: Vec<MlpClassifier> = (0..3).map(|_| random_mlp(&mut rng, 4, &[8], 4)).collect();
    let w = vec![0.5, 0.3, 0.2];
    let we = EnsembleSpec::new(Protocol::We { weights: w.clone() }, members.clone()).unwrap();
    let mme = EnsembleSpec::max_margin(members.clone()).unwrap();
    let mut mismatches = 0;
    for _ in 0..C6_INPUTS {
        let x: Vec<f64> = (0..4).map(|_| 2.0 * rng.std_normal()).collect();
        mismatches += usize::from(we_predict(&we, &x).unwrap() != brute_we(&members, &w, &x));
        let x: Vec<f64> = (0..4).map(|_| 2.0 * rng.std_normal()).collect();
        mismatches += usize::from(mme_predict(&mme, &x).unwrap() != brute_mme(&members, &x));
    }

    let (mut instances, mut flips, mut attempts) = (0, 0, 0);
    while instances < C6_INSTANCES && attempts < 5000 {
        attempts += 1;
        let n = 2 + attempts % 2;
        let ms: Vec<MlpClassifier> = (0..n).map(|_| random_mlp(&mut rng, 2, &[8], 3)).collect();
        let wts = vec![1.0 / n as f64; n];
        let x0 = [rng.std_normal(), rng.std_normal()];
        let y0 = brute_we(&ms, &wts, &x0);
        let r = [0.05, 0.1, 0.2][attempts % 3];
        let beta = C6_BETA_MULT * margin_smoothness(&ms, &x0, y0, r);
        let v = check_we_robustness(&ms, &wts, &x0, y0, r, beta).unwrap();
        if v.status != VerdictStatus::CertifiedRobust {
            continue;
        }
        instances += 1;
        for ri in 1..=C6_GRID {
            for ai in 0..C6_GRID {
                let rad = r * ri as f64 / C6_GRID as f64;
                let ang = 2.0 * std::f64::consts::PI * ai as f64 / C6_GRID as f64;
                let x = [x0[0] + rad * ang.cos(), x0[1] + rad * ang.sin()];
                flips += usize::from(brute_we(&ms, &wts, &x) != y0);
            }
        }
    }
    verdict(
        mismatches == 0 && instances == C6_INSTANCES && flips == 0,
        format!(
            "{mismatches} protocol mismatches over {} inputs; {instances} certified instances, {flips} flips over {} grid points",
            2 * C6_INPUTS,
            C6_GRID * C6_GRID
        ),
    )
}

fn criterion_7() -> Outcome {
    let mut rng = RngStream::new(7, 0);
    let n = 100u64;
    let mut misses = 0;
    for _ in 0..C7_TRIALS {
        let p = rng.uniform_range(0.05, 0.95);
        let k = (0..n).filter(|_| rng.uniform() < p).count() as u64;
        if clopper_pearson_lower(k, n, C7_ALPHA).unwrap() > p {
            misses += 1;
        }
    }
    let rate = misses as f64 / C7_TRIALS as f64;
    let mut anchor_err: f64 = 0.0;
    for (n, alpha) in [(1u64, 0.05), (10, 0.001), (100, 0.001), (1000, 0.01), (100_000, 0.001)] {
        let got = clopper_pearson_lower(n, n, alpha).unwrap();
        anchor_err = anchor_err.max((got - alpha.powf(1.0 / n as f64)).abs());
    }
    verdict(
        rate <= C7_ALPHA + C7_SLACK && anchor_err < C7_ANCHOR_TOL,
        format!("non-coverage {rate:.4} (alpha {C7_ALPHA}), k=n anchor error {anchor_err:.1e}"),
    )
}

fn margin_model(lambda1: f64, lambda2: f64, n: usize, distribution: ConfidenceDistribution) -> MarginModel {
    MarginModel {
        lambda1,
        lambda2,
        lambda3: 1.0,
        p: 0.0,
        n,
        weights: None,
        distribution,
    }
}

fn criterion_8() -> Outcome {
    let start = Instant::now();
    let mut ok = true;
    let mut parts = Vec::new();

    let mut rhos = Vec::new();
    for (i, n) in [3usize, 10, 20].into_iter().enumerate() {
        let cfg = TransferConfig {
            n,
            ..TransferConfig::default()
        };
        let trials = simulate_transferability(&cfg, &RngStream::new(8, i as u64)).unwrap();
        let ratio: Vec<f64> = trials.iter().map(|t| t.lambda_ratio).collect();
        let diff: Vec<f64> = trials.iter().map(|t| t.diff).collect();
        let rho = spearman(&ratio, &diff).unwrap();
        let (r2, d2): (Vec<f64>, Vec<f64>) = trials.iter().filter(|t| t.diff != 0.0).map(|t| (t.lambda_ratio, t.diff)).unzip();
        let rho_nonzero = spearman(&r2, &d2).unwrap_or(f64::NAN);
        ok &= rho > C8_MIN_SPEARMAN;
        rhos.push(format!("N={n}: {rho:.3} ({} of {} tied at 0; {rho_nonzero:.3} without them)", trials.len() - r2.len(), trials.len()));
    }
    parts.push(format!("spearman {}", rhos.join(", ")));

    let mut rng = RngStream::new(8, 100);
    let mut worst_var: f64 = 0.0;
    for (n, a, b) in [(3usize, 0.0, 1.0), (10, 0.3, 0.9), (20, 0.5, 1.0)] {
        let draws = 200_000;
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..draws {
            let m = (0..n).map(|_| rng.uniform_range(a, b)).fold(f64::INFINITY, f64::min);
            s += m;
            s2 += m * m;
        }
        let mc = s2 / draws as f64 - (s / draws as f64).powi(2);
        worst_var = worst_var.max((var_min_uniform(n, a, b).unwrap() / mc - 1.0).abs());
    }
    ok &= worst_var < C8_VAR_REL_TOL;
    parts.push(format!("var_min_uniform worst relative gap {worst_var:.4}"));

    let mut dists = Vec::new();
    for (a, b) in [(0.5, 1.0), (0.6, 0.9), (0.7, 1.0), (0.4, 0.8)] {
        dists.push(ConfidenceDistribution::Uniform { a, b });
    }
    for (mu, s, s_f) in [(0.8, 0.1, 0.05), (0.7, 0.15, 0.1), (0.9, 0.05, 0.02), (0.75, 0.2, 0.12)] {
        dists.push(ConfidenceDistribution::Symmetric { mu, s, s_f });
    }
    let (mut checked, mut contradictions) = (0, 0);
    for dist in &dists {
        for n in [2usize, 3, 5, 10, 20, 50] {
            for i in 1..=6 {
                for j in 1..=6 {
                    let (l1, l2) = (0.2 * i as f64, 0.2 * j as f64);
                    let m = margin_model(l1, l2, n, *dist);
                    let (Ok(th), Ok(we), Ok(mme)) = (comparison_thresholds(&m), bound_we(&m), bound_mme(&m)) else {
                        continue;
                    };
                    checked += 1;
                    let (w, v) = (we.variance.raw, mme.raw);
                    contradictions += usize::from(match th.verdict(l1 / l2) {
                        ComparisonVerdict::WeHigher => w < v - 1e-12,
                        ComparisonVerdict::MmeHigher => v < w - 1e-12,
                        ComparisonVerdict::Undetermined => false,
                    });
                }
            }
        }
    }
    ok &= checked >= C8_MIN_GRID && contradictions == 0;
    parts.push(format!("{contradictions} verdict contradictions over {checked} grid points"));

    let thr = n_threshold(0.8, 1.0).unwrap();
    let sweep_holds = |n: usize| {
        [(0.6, 1.0), (0.7, 0.9), (0.75, 0.85)].iter().all(|&(a, b)| {
            (1..=100).all(|k| {
                let m = margin_model(k as f64 / 100.0, 1.0, n, ConfidenceDistribution::Uniform { a, b });
                bound_mme(&m).unwrap().raw >= bound_we(&m).unwrap().variance.raw - 1e-12
            })
        })
    };
    let (at41, at40) = (sweep_holds(41), sweep_holds(40));
    ok &= (thr - C8_N_THRESHOLD).abs() < C8_N_THRESHOLD_TOL && at41;
    parts.push(format!(
        "n_threshold(0.8, 1) = {thr:.4}; MME >= WE for every swept lambda1 at N=41: {at41}, at N=40: {at40} \
         (the threshold is sufficient, not tight)"
    ));
    let (fast, time) = within(start, C8_BUDGET);
    ok &= fast;
    parts.push(time);
    verdict(ok, parts.join("; "))
}

fn criterion_9() -> Outcome {
    let grid = |lo: f64, hi: f64, k: usize| (0..k).map(move |i| lo + (hi - lo) * i as f64 / (k - 1) as f64);
    let (mut checked, mut contradictions, mut decided) = (0, 0, 0);
    for pa in grid(0.52, 0.98, 10) {
        for pb in grid(0.52, 0.98, 10) {
            let lo = (pa + pb - 1.0).max(0.0);
            let hi = pa.min(pb);
            for pab in grid(lo, hi, 10) {
                for p in grid(0.0, 1.0, 10) {
                    let Ok(c) = compare_smoothing_strategies(pa, pb, pab, p, 1.0) else {
                        continue;
                    };
                    checked += 1;
                    let bad = match c.verdict {
                        StrategyVerdict::EbsHigher => c.r_g < c.r_h - C9_TOL,
                        StrategyVerdict::EasHigherOrEqual => c.r_h < c.r_g - C9_TOL,
                        StrategyVerdict::Undetermined => false,
                    };
                    decided += usize::from(c.verdict != StrategyVerdict::Undetermined);
                    contradictions += usize::from(bad);
                }
            }
        }
    }
    verdict(
        contradictions == 0 && checked == 10_000,
        format!("{contradictions} contradictions over {checked} grid points ({decided} decided)"),
    )
}

fn mnist_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist5k")
}

fn criterion_10() -> Outcome {
    let dir = mnist_dir();
    let (images, labels) = (dir.join("images-idx3-ubyte"), dir.join("labels-idx1-ubyte"));
    if !images.is_file() || !labels.is_file() {
        return Outcome {
            status: Status::Skip,
            detail: format!("no IDX files under {} (see scripts/mnist5k_to_idx.py)", dir.display()),
        };
    }
    let start = Instant::now();
    let ds: Dataset = read_idx(&images, &labels).unwrap();
    let (train_set, test_set) = split_and_subsample(&ds, 0.8, None, 10, 0).unwrap();
    let (train_set, test_set) = (train_set.unwrap(), test_set.unwrap());
    let spec = SmoothingSpec {
        sigma: 0.25,
        n0: 100,
        n: 10_000,
        alpha: 0.001,
    };
    let mut init = RngStream::new(1, 1);
    let mut base: Vec<MlpClassifier> = (0..3).map(|_| random_mlp(&mut init, 784, &[64, 64], 10)).collect();
    let pretrain = TrainingConfig {
        sigma: 0.25,
        epochs: 5,
        batch_size: 32,
        lr: 0.05,
        momentum: 0.9,
        seed: 1,
        ..TrainingConfig::default()
    };
    train(&mut base, &train_set, &pretrain).unwrap();
    let ids: Vec<u64> = (0..test_set.len() as u64).collect();
    let xs = test_set.rows();
    let mut acc = Vec::new();
    for (variant, rho1, rho2) in [(Variant::None, 0.0, 0.0), (Variant::DrtPairwise, 0.1, 0.5)] {
        let mut members = base.clone();
        let cfg = TrainingConfig {
            rho1,
            rho2,
            variant,
            sigma: 0.25,
            epochs: 5,
            batch_size: 32,
            lr: 0.01,
            momentum: 0.9,
            seed: 2,
            ..TrainingConfig::default()
        };
        train(&mut members, &train_set, &cfg).unwrap();
        let ens = EnsembleSpec::average(members).unwrap();
        let recs = certify_dataset(&ens, &spec, &xs, test_set.labels(), &ids, &RngStream::new(77, 0), 0).unwrap();
        acc.push(certified_accuracy_curve(&recs, &[0.0, 0.25, 0.5]).unwrap().certified_accuracy);
    }
    let (fast, time) = within(start, C10_BUDGET);
    verdict(
        acc[1][1] >= acc[0][1] && fast && test_set.len() == 100,
        format!(
            "{} train / {} test; certified accuracy at r=0,0.25,0.5: gaussian {:?}, drt {:?}; {time}",
            train_set.len(),
            test_set.len(),
            acc[0],
            acc[1]
        ),
    )
}

fn main() -> ExitCode {
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let want = |k: u32| selected.is_empty() || selected.contains(&k);
    let mut outcomes: Vec<(u32, Outcome)> = Vec::new();
    let mut run = |k: u32, f: &dyn Fn() -> Outcome| {
        if want(k) {
            let o = f();
            println!("criterion {k:>2}: {} {}", label(o.status), o.detail);
            outcomes.push((k, o));
        }
    };
    run(1, &criterion_1);
    run(2, &criterion_2);
    if want(3) || want(4) {
        let (results, elapsed) = moons_experiment();
        run(3, &|| criterion_3(&results, elapsed));
        run(4, &|| criterion_4(&results));
    }
    run(5, &criterion_5);
    run(6, &criterion_6);
    run(7, &criterion_7);
    run(8, &criterion_8);
    run(9, &criterion_9);
    run(10, &criterion_10);

    let failed: Vec<u32> = outcomes.iter().filter(|(_, o)| o.status == Status::Fail).map(|(k, _)| *k).collect();
    println!(
        "acceptance: {} passed, {} failed, {} skipped",
        outcomes.iter().filter(|(_, o)| o.status == Status::Pass).count(),
        failed.len(),
        outcomes.iter().filter(|(_, o)| o.status == Status::Skip).count()
    );
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn label(s: Status) -> &'static str {
    match s {
        Status::Pass => "PASS",
        Status::Fail => "FAIL",
        Status::Skip => "SKIP",
    }
}
