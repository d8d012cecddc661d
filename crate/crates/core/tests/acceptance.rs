//! Acceptance suite. Runs every criterion, prints one line each and exits
//! non-zero if any fails.

use std::panic;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use statrs::distribution::{ContinuousCDF, Normal as StdNormal};

use triage_core::calibration::{brier, calibration_table, probability_surfaces, BrierVariant};
use triage_core::cohort::{
    stratified_split, synthesize_cohort, Cohort, LabelSystem, MarginalSpec, Provenance, StratumSelector,
};
use triage_core::features::{fit_schema, InputVariant};
use triage_core::metrics::{
    auc_delong, composite_ranking, metric_report, weighted_kappa, KappaWeighting, MetricOptions, PredictionSet,
    ProcessMetricsRow, GOLD_PROCESS,
};
use triage_core::models::dense::Dense;
use triage_core::models::feedforward::flatten_grads;
use triage_core::models::jepa::variance_term;
use triage_core::models::{
    evaluate, train_boosted, train_feedforward, BoostedConfig, Dataset, FeedForwardConfig, FeedForwardModel,
    JepaConfig, JepaModel, Probs,
};
use triage_core::run::{evaluate_run, RunConfig, MANIFEST_FILE};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn row(process: &str, mae: f64, rmse: f64, kappa: f64, spearman: f64) -> ProcessMetricsRow {
    ProcessMetricsRow { process: process.into(), mae, rmse, kappa, spearman }
}

fn composite_zero_sum() -> Outcome {
    let published = [4.902, 2.514, 0.438, -3.511, -4.343];
    let s: f64 = published.iter().sum();
    ensure(s.abs() < 5e-4, || format!("published scores sum to {s}"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let k = rng.random_range(2..8);
        let rows: Vec<_> = (0..k)
            .map(|i| {
                let mae = rng.random_range(0.0..2.0);
                row(&format!("p{i}"), mae, mae + rng.random_range(0.0..1.0), rng.random_range(-0.2..1.0), rng.random_range(-0.2..1.0))
            })
            .collect();
        for gold in [false, true] {
            let scores = composite_ranking(&rows, gold).map_err(|e| e.to_string())?;
            worst = worst.max(scores.iter().map(|c| c.composite).sum::<f64>().abs());
        }
    }
    ensure(worst < 1e-9, || format!("random normalization sets: |sum| up to {worst:e}"))?;

    let table = [
        row("URGENTIAPARSE", 0.228, 0.790, 0.800, 0.802),
        row("EMERGINET", 0.401, 0.979, 0.560, 0.602),
        row("TRIAGEMASTER", 0.637, 1.180, 0.370, 0.005),
        row("nurse", 1.393, 1.834, 0.080, 0.024),
    ];
    let mut scores = composite_ranking(&table, true).map_err(|e| e.to_string())?;
    scores.sort_by(|a, b| b.composite.total_cmp(&a.composite));
    let order: Vec<_> = scores.iter().map(|c| c.process.as_str()).collect();
    let expected = [GOLD_PROCESS, "URGENTIAPARSE", "EMERGINET", "TRIAGEMASTER", "nurse"];
    ensure(order == expected, || format!("recomputed ordering {order:?}"))?;
    Ok(format!("published sum {s:.3}, random |sum| <= {worst:.1e}, ordering {order:?}"))
}

fn pair_oracle(pos: &[f64], neg: &[f64]) -> f64 {
    let mut s = 0.0;
    for &p in pos {
        for &q in neg {
            s += if p > q { 1.0 } else if p == q { 0.5 } else { 0.0 };
        }
    }
    s / (pos.len() * neg.len()) as f64
}

fn dense_kappa(pred: &[u8], gold: &[u8]) -> f64 {
    let n = gold.len() as f64;
    let mut m = [[0.0f64; 6]; 6];
    for (&p, &g) in pred.iter().zip(gold) {
        m[g as usize - 1][p as usize - 1] += 1.0;
    }
    let rows: Vec<f64> = (0..6).map(|i| m[i].iter().sum()).collect();
    let cols: Vec<f64> = (0..6).map(|j| (0..6).map(|i| m[i][j]).sum()).collect();
    let (mut o, mut e) = (0.0, 0.0);
    for i in 0..6 {
        for j in 0..6 {
            let w = (i as f64 - j as f64).powi(2) / 25.0;
            o += w * m[i][j] / n;
            e += w * rows[i] * cols[j] / (n * n);
        }
    }
    1.0 - o / e
}

fn oracle_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut auc_err, mut kappa_err): (f64, f64) = (0.0, 0.0);
    let (mut aucs, mut kappas) = (0, 0);
    for _ in 0..200 {
        let n = rng.random_range(2..=50);
        let gold: Vec<u8> = (0..n).map(|_| rng.random_range(1..=6)).collect();
        let pred: Vec<u8> = (0..n).map(|_| rng.random_range(1..=6)).collect();
        // coarse scores so ties are common
        let scores: Vec<f64> = (0..n).map(|_| rng.random_range(0..10) as f64 / 10.0).collect();
        for class in 1..=6u8 {
            let pos: Vec<f64> = (0..n).filter(|&i| gold[i] == class).map(|i| scores[i]).collect();
            let neg: Vec<f64> = (0..n).filter(|&i| gold[i] != class).map(|i| scores[i]).collect();
            if pos.is_empty() || neg.is_empty() {
                continue;
            }
            let a = auc_delong(&pos, &neg, 0.05).map_err(|e| e.to_string())?.auc;
            auc_err = auc_err.max((a - pair_oracle(&pos, &neg)).abs());
            aucs += 1;
        }
        if let Ok(k) = weighted_kappa(&pred, &gold, KappaWeighting::Quadratic) {
            let o = dense_kappa(&pred, &gold);
            kappa_err = kappa_err.max((k - o).abs());
            kappas += 1;
        }
    }
    ensure(auc_err <= 1e-12 && kappa_err <= 1e-12, || format!("max errors auc {auc_err:e}, kappa {kappa_err:e}"))?;
    Ok(format!("{aucs} AUCs max err {auc_err:.1e}, {kappas} kappas max err {kappa_err:.1e}"))
}

fn perfect_predictor() -> Outcome {
    let gold: Vec<u8> = (0..60).map(|i| (i % 6) as u8 + 1).collect();
    let rows: Vec<(String, u8)> = gold.iter().enumerate().map(|(i, &g)| (format!("c{i}"), g)).collect();
    let set = PredictionSet::from_labels("perfect", rows.clone()).map_err(|e| e.to_string())?;
    let aligned = set.align(&rows).map_err(|e| e.to_string())?;
    let (r, _) = metric_report("perfect", "french", true, &aligned, &MetricOptions::default()).map_err(|e| e.to_string())?;
    let exact = [
        ("mae", r.mae, 0.0),
        ("rmse", r.rmse, 0.0),
        ("kappa", r.weighted_kappa, 1.0),
        ("spearman", r.spearman, 1.0),
        ("f1_micro", r.f1_micro, 1.0),
        ("f1_macro", r.f1_macro, 1.0),
        ("exact", r.exact_agreement, 1.0),
        ("near", r.near_agreement, 1.0),
        ("brier", brier(&aligned.probs, &aligned.gold, BrierVariant::SumOverClasses).map_err(|e| e.to_string())?, 0.0),
    ];
    for (name, got, want) in exact {
        ensure(got == want, || format!("{name} = {got}, expected {want}"))?;
    }
    for (i, a) in r.auc_per_class.iter().enumerate() {
        ensure(a.as_ref().map(|a| a.auc) == Some(1.0), || format!("class {} AUC {a:?}", i + 1))?;
    }
    let surfaces = probability_surfaces(&aligned.probs, &aligned.gold).map_err(|e| e.to_string())?;
    for (t, h) in surfaces.heatmap.iter().enumerate() {
        let want: Probs = std::array::from_fn(|c| if c == t { 1.0 } else { 0.0 });
        ensure(*h == Some(want), || format!("heatmap row {} = {h:?}", t + 1))?;
    }
    Ok("all metrics exact, identity heatmap".into())
}

fn closed_forms() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let gold: Vec<u8> = (0..97).map(|_| rng.random_range(1..=6)).collect();
    let uniform = vec![[1.0 / 6.0; 6]; gold.len()];
    let b = brier(&uniform, &gold, BrierVariant::SumOverClasses).map_err(|e| e.to_string())?;
    ensure((b - 5.0 / 6.0).abs() <= 1e-12, || format!("uniform Brier {b}"))?;

    let mut m = FeedForwardModel::init(9, [8, 7], 0.0, 1e-3, "s", 4);
    m.set_params(&vec![0.0; m.params().len()]);
    let x: Vec<Vec<f64>> = (0..20).map(|_| (0..9).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
    let y: Vec<usize> = (0..20).map(|i| i % 6).collect();
    let (loss, _) = m.loss_and_gradient::<ChaCha8Rng>(&x, &y, None);
    ensure((loss - 6f64.ln()).abs() <= 1e-12, || format!("uniform softmax log loss {loss}"))?;

    let gamma = 1.0;
    let z = vec![vec![0.7, -3.1, 2.2, 0.0]; 16];
    let v = variance_term(&z, gamma, 0.0);
    ensure((v - gamma).abs() <= 1e-12, || format!("variance term {v}"))?;
    Ok(format!("Brier {b}, log loss {loss}, variance term {v}"))
}

fn random_batch(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> (Vec<Vec<f64>>, Vec<usize>) {
    let x = (0..n).map(|_| (0..dim).map(|_| rng.random_range(-1.5..1.5)).collect()).collect();
    let y = (0..n).map(|_| rng.random_range(0..6)).collect();
    (x, y)
}

fn worst_relative(analytic: &[f64], base: &[f64], mut loss: impl FnMut(&[f64]) -> f64) -> f64 {
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for k in 0..base.len() {
        let mut p = base.to_vec();
        p[k] += h;
        let up = loss(&p);
        p[k] -= 2.0 * h;
        let down = loss(&p);
        let fd = (up - down) / (2.0 * h);
        worst = worst.max((fd - analytic[k]).abs() / fd.abs().max(analytic[k].abs()).max(1e-8));
    }
    worst
}

fn gradient_checks() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (x, y) = random_batch(&mut rng, 10, 6);

    let mut ff = FeedForwardModel::init(6, [8, 7], 0.0, 1e-3, "s", 5);
    // non-zero output layer and biases so every parameter carries gradient
    ff.layers[2] = Dense::he(7, 6, &mut rng);
    for l in &mut ff.layers {
        l.bias.iter_mut().for_each(|b| *b = rng.random_range(-0.1..0.1));
    }
    let (_, grads) = ff.loss_and_gradient::<ChaCha8Rng>(&x, &y, None);
    let base = ff.params();
    let mut probe = ff.clone();
    let ff_worst = worst_relative(&flatten_grads(&grads), &base, |p| {
        probe.set_params(p);
        probe.loss_and_gradient::<ChaCha8Rng>(&x, &y, None).0
    });

    let cfg = JepaConfig { hidden: 8, embed_dim: 4, seed: 5, ..Default::default() };
    let jepa = JepaModel::init(6, &cfg, "s");
    let (_, grad) = jepa.loss_and_gradient(&x, &y);
    let mut probe = jepa.clone();
    let jepa_worst = worst_relative(&grad.flatten(), &jepa.params(), |p| {
        probe.set_params(p);
        probe.loss_and_gradient(&x, &y).0
    });
    ensure(ff_worst <= 1e-4 && jepa_worst <= 1e-4, || format!("relative errors ff {ff_worst:e}, jepa {jepa_worst:e}"))?;
    Ok(format!("max relative error ff {ff_worst:.1e}, jepa {jepa_worst:.1e}"))
}

fn overfitting_signature() -> Outcome {
    let c = synthesize_cohort(&MarginalSpec::table1(), 128, 0).map_err(|e| e.to_string())?;
    let train = Cohort::new(c.records[..64].to_vec(), Provenance::Synthetic).map_err(|e| e.to_string())?;
    let val = Cohort::new(c.records[64..].to_vec(), Provenance::Synthetic).map_err(|e| e.to_string())?;
    let schema = fit_schema(&train, 256, 0).map_err(|e| e.to_string())?;
    let variant = InputVariant::Both;
    let dataset = |c: &Cohort| {
        let x: Vec<_> = c.records.iter().map(|r| variant.encode(r, &schema)).collect();
        let y: Vec<u8> = c.records.iter().map(|r| LabelSystem::French.gold_rank(r).expect("gold label")).collect();
        Dataset::from_vectors(&x, &y)
    };
    let tr = dataset(&train).map_err(|e| e.to_string())?;
    let va = dataset(&val).map_err(|e| e.to_string())?;
    let (ff, _) = train_feedforward(&tr, &va, &FeedForwardConfig::default()).map_err(|e| e.to_string())?;
    let (gb, _) = train_boosted(&tr, &va, &BoostedConfig::default()).map_err(|e| e.to_string())?;
    let accs = [
        ("feedforward", evaluate(&tr, |x| ff.predict_row(x)).0, evaluate(&va, |x| ff.predict_row(x)).0),
        ("boosted", evaluate(&tr, |x| gb.predict_row(x)).0, evaluate(&va, |x| gb.predict_row(x)).0),
    ];
    for (name, t, v) in accs {
        ensure(t >= 0.95 && t - v >= 0.15, || format!("{name}: train {t:.3}, val {v:.3}"))?;
    }
    Ok(accs.iter().map(|(n, t, v)| format!("{n} train {t:.3} val {v:.3}")).collect::<Vec<_>>().join(", "))
}

fn split_fixture() -> Outcome {
    let c = synthesize_cohort(&MarginalSpec::table1(), 657, 7).map_err(|e| e.to_string())?;
    let (train, test) = stratified_split(&c, 0.8, StratumSelector::GoldTriage, 7).map_err(|e| e.to_string())?;
    ensure((train.len(), test.len()) == (526, 131), || format!("sizes ({}, {})", train.len(), test.len()))?;
    let count = |c: &Cohort, k: u8| c.records.iter().filter(|r| LabelSystem::French.gold_rank(r) == Some(k)).count();
    let mut worst: f64 = 0.0;
    for k in 1..=6 {
        let target = 0.8 * count(&c, k) as f64;
        worst = worst.max((count(&train, k) as f64 - target).abs());
    }
    ensure(worst <= 1.0, || format!("per-class deviation {worst}"))?;
    Ok(format!("(526, 131), max per-class deviation {worst:.2}"))
}

fn calibration_consistency() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let n = 10_000;
    let class = 1u8;
    let mut probs = Vec::with_capacity(n);
    let mut gold = Vec::with_capacity(n);
    for _ in 0..n {
        let p: f64 = rng.random();
        let mut row = [(1.0 - p) / 5.0; 6];
        row[0] = p;
        probs.push(row);
        gold.push(if rng.random_bool(p) { class } else { rng.random_range(2..=6) });
    }
    let mut worst_gap: f64 = 0.0;
    for k in 1..=6u8 {
        let bins = calibration_table(&probs, &gold, k, 10).map_err(|e| e.to_string())?;
        let total: usize = bins.iter().map(|b| b.count).sum();
        let positives: usize = bins.iter().map(|b| b.positives).sum();
        let weighted = bins.iter().map(|b| b.count as f64 * b.observed).sum::<f64>() / total as f64;
        let prevalence = gold.iter().filter(|&&g| g == k).count() as f64 / n as f64;
        ensure(positives as f64 / total as f64 == prevalence, || format!("class {k}: positives/n != prevalence"))?;
        ensure((weighted - prevalence).abs() <= 1e-12, || format!("class {k}: weighted {weighted} vs {prevalence}"))?;
        if k == class {
            ensure(bins.len() == 10, || format!("{} bins", bins.len()))?;
            worst_gap = bins.iter().map(|b| b.gap.abs()).fold(0.0, f64::max);
        }
    }
    ensure(worst_gap < 0.05, || format!("max |gap| {worst_gap}"))?;
    Ok(format!("prevalence identity holds for 6 classes, max |gap| {worst_gap:.4}"))
}

fn delong_coverage() -> Outcome {
    let truth = StdNormal::standard().cdf(1.0 / 2f64.sqrt());
    let pos_dist = Normal::new(1.0, 1.0).unwrap();
    let neg_dist = Normal::new(0.0, 1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let reps = 500;
    let mut covered = 0;
    for _ in 0..reps {
        let pos: Vec<f64> = (0..100).map(|_| pos_dist.sample(&mut rng)).collect();
        let neg: Vec<f64> = (0..100).map(|_| neg_dist.sample(&mut rng)).collect();
        let a = auc_delong(&pos, &neg, 0.05).map_err(|e| e.to_string())?;
        if a.lower <= truth && truth <= a.upper {
            covered += 1;
        }
    }
    let rate = covered as f64 / reps as f64;
    ensure((0.92..=0.98).contains(&rate), || format!("coverage {rate}"))?;
    Ok(format!("coverage {rate:.3} of true AUC {truth:.4}"))
}

fn determinism() -> Outcome {
    let dirs = [tempfile::tempdir().map_err(|e| e.to_string())?, tempfile::tempdir().map_err(|e| e.to_string())?];
    let mut manifests = Vec::new();
    for d in &dirs {
        let cfg = RunConfig { seed: 21, out: d.path().to_path_buf(), ..RunConfig::default() };
        manifests.push(evaluate_run(&cfg).map_err(|e| e.to_string())?);
    }
    ensure(manifests[0].artifacts == manifests[1].artifacts, || "artifact checksums differ".into())?;
    for rel in manifests[0].artifacts.keys() {
        let a = std::fs::read(dirs[0].path().join(rel)).map_err(|e| e.to_string())?;
        let b = std::fs::read(dirs[1].path().join(rel)).map_err(|e| e.to_string())?;
        ensure(a == b, || format!("{rel} differs"))?;
    }
    ensure(!manifests[0].artifacts.contains_key(MANIFEST_FILE), || "manifest lists itself".into())?;

    let mut r = csv::Reader::from_path(dirs[0].path().join("tables/ranking.csv")).map_err(|e| e.to_string())?;
    let header = r.headers().map_err(|e| e.to_string())?.clone();
    let col = header.iter().position(|h| h == "composite").ok_or("no composite column")?;
    let scores: Vec<f64> = r
        .records()
        .map(|rec| rec.map_err(|e| e.to_string())?[col].parse::<f64>().map_err(|e| e.to_string()))
        .collect::<Result<_, _>>()?;
    let sum: f64 = scores.iter().sum();
    ensure(scores.len() == 4 && sum.abs() < 1e-9, || format!("{} ranking rows summing to {sum}", scores.len()))?;
    Ok(format!("{} artifacts byte-identical, {} ranking rows sum {sum:.1e}", manifests[0].artifacts.len(), scores.len()))
}

type Criterion = (&'static str, fn() -> Outcome, Duration);

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("composite zero-sum", composite_zero_sum, Duration::from_secs(1)),
        ("metric oracle equivalence", oracle_equivalence, Duration::from_secs(10)),
        ("perfect predictor", perfect_predictor, Duration::MAX),
        ("closed-form fixtures", closed_forms, Duration::MAX),
        ("gradient checks", gradient_checks, Duration::from_secs(30)),
        ("overfitting signature", overfitting_signature, Duration::from_secs(120)),
        ("split fixture", split_fixture, Duration::MAX),
        ("calibration consistency", calibration_consistency, Duration::from_secs(30)),
        ("DeLong coverage", delong_coverage, Duration::from_secs(120)),
        ("end-to-end determinism", determinism, Duration::MAX),
    ];
    let mut failed = 0;
    for (i, (name, check, budget)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let elapsed = start.elapsed();
        let outcome = outcome.and_then(|detail| {
            if elapsed > *budget {
                Err(format!("{detail}; took {elapsed:.2?}, budget {budget:.0?}"))
            } else {
                Ok(detail)
            }
        });
        match outcome {
            Ok(detail) => println!("criterion {} {name}: PASS ({detail}; {elapsed:.2?})", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {} {name}: FAIL ({why})", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
