//! End-to-end acceptance run over all six datasets. Prints one PASS/FAIL line
//! per criterion (with supporting numbers indented below) and exits non-zero
//! if any criterion fails.

mod common;

use std::collections::BTreeMap;
use std::time::Instant;

use koopdrift::config::{RunConfig, StrategyChoice};
use koopdrift::datasets::DriftKind;
use koopdrift::eval::{evaluate_weights, EvalMode};
use koopdrift::io::Envelope;
use koopdrift::koopman::{predict_weights, RolloutMode};
use koopdrift::pipeline::{self, CouplingSummary, RunReport};

struct Board {
    failed: Vec<String>,
    total: usize,
}

impl Board {
    fn record(&mut self, id: &str, title: &str, pass: bool, details: &[String]) {
        self.total += 1;
        println!("[{}] {id}. {title}", if pass { "PASS" } else { "FAIL" });
        for d in details {
            println!("       {d}");
        }
        if !pass {
            self.failed.push(id.to_string());
        }
    }
}

struct RawFourierF {
    rho_pre: f64,
    rho_post: f64,
    /// `None` when the rollout diverged numerically.
    auto_mean: Option<f64>,
}

struct WeightDecayOff {
    report: RunReport,
}

fn cli_all(kind: DriftKind, out: &std::path::Path) -> Vec<u8> {
    let code = koopdrift::cli::run(["koopdrift", "all", "--dataset", &kind.to_string(), "--out", &out.display().to_string()]);
    assert_eq!(code, 0, "cmd_all on {kind} failed");
    std::fs::read(out.join(pipeline::REPORT_JSON)).expect("report written")
}

fn raw_fourier_on_f() -> (RunReport, RawFourierF) {
    let cfg = RunConfig::new(DriftKind::Expanding);
    let train = pipeline::train(&cfg).unwrap();
    let model = pipeline::fit(&cfg, &train).unwrap();
    let roll = pipeline::rollout(&cfg, &train, &model).unwrap();
    let coupling = CouplingSummary::from_result(&pipeline::couple(&cfg, &train));
    let report = pipeline::build_report(&cfg, &train, &model, &roll, coupling).unwrap();

    let raw_cfg = RunConfig {
        strategy: StrategyChoice::Fourier,
        ..cfg.clone()
    };
    let raw = pipeline::fit(&raw_cfg, &train).unwrap();
    let auto_mean = predict_weights(&raw, raw_cfg.horizon(), RolloutMode::Autonomous)
        .ok()
        .and_then(|w| {
            evaluate_weights(&raw_cfg.spec, &raw_cfg.net(), EvalMode::KoopmanAuto, &w, raw_cfg.train_end, raw_cfg.test_size, raw_cfg.seed).ok()
        })
        .map(|s| s.mean);
    (
        report,
        RawFourierF {
            rho_pre: raw.spectral_radius_pre,
            rho_post: raw.spectral_radius,
            auto_mean,
        },
    )
}

fn weight_decay_off() -> WeightDecayOff {
    let mut cfg = RunConfig::new(DriftKind::Expanding);
    cfg.train.lambda_wd = 0.0;
    cfg.cold_ablation = false;
    let report = pipeline::run_all(&cfg).unwrap();
    WeightDecayOff { report }
}

fn main() {
    let started = Instant::now();
    let mut board = Board {
        failed: Vec::new(),
        total: 0,
    };
    use DriftKind::*;

    let tmp = tempfile::tempdir().unwrap();
    let first = cli_all(OrbitingMixture, &tmp.path().join("d1"));
    let second = cli_all(OrbitingMixture, &tmp.path().join("d2"));
    let d_env: Envelope<RunReport> = serde_json::from_slice(&first).unwrap();

    let mut reports: BTreeMap<char, RunReport> = BTreeMap::new();
    reports.insert('D', d_env.data);
    for kind in [SignFlip, OscillatingSeparation, Lissajous, SubclusterMixture] {
        reports.insert(kind.letter(), pipeline::run_all(&RunConfig::new(kind)).unwrap());
    }
    let (f_report, raw_f) = raw_fourier_on_f();
    reports.insert('F', f_report);
    let wd_off = weight_decay_off();
    let r = |c: char| &reports[&c];

    println!();
    println!("{}", pipeline::TABLE_HEADER);
    for rep in reports.values() {
        println!("{}", rep.table_row());
    }
    println!();

    // 1. autonomous rollout
    let targets = [('A', 0.96, Some(0.90)), ('B', 0.97, Some(0.92)), ('C', 0.97, Some(0.93)), ('D', 0.99, None), ('E', 0.98, None), ('F', 0.99, None)];
    let mut ok = true;
    let mut details = Vec::new();
    for (c, mean_min, min_min) in targets {
        let s = &r(c).koopman_auto;
        let pass = s.mean >= mean_min && min_min.is_none_or(|m| s.min >= m);
        ok &= pass;
        details.push(format!(
            "{c}: mean {:.4} (>= {mean_min}), min {:.4}{}, below 90%: {} [{}]",
            s.mean,
            s.min,
            min_min.map(|m| format!(" (>= {m})")).unwrap_or_default(),
            s.steps_below_90,
            if pass { "ok" } else { "miss" }
        ));
    }
    let clean = reports.values().filter(|x| x.koopman_auto.steps_below_90 == 0).count();
    ok &= clean >= 5;
    details.push(format!("datasets with zero steps below 90%: {clean}/6 (>= 5)"));
    board.record("1", "Koopman autonomous rollout accuracy", ok, &details);

    // 2. frozen collapse
    let mut ok = true;
    let mut details = Vec::new();
    for (c, rep) in &reports {
        let bound = if rep.n_params == 17 { 0.70 } else { 0.45 };
        let pass = rep.frozen.mean <= bound && rep.frozen.steps_below_90 >= 50;
        ok &= pass;
        details.push(format!(
            "{c}: frozen mean {:.4} (<= {bound}), below 90%: {}/100 (>= 50)",
            rep.frozen.mean, rep.frozen.steps_below_90
        ));
    }
    board.record("2", "Frozen baseline collapse", ok, &details);

    // 3. training floor
    let worst = reports
        .iter()
        .map(|(c, rep)| (rep.training.min_train_acc, *c))
        .fold((f64::INFINITY, ' '), |a, b| if b.0 < a.0 { b } else { a });
    board.record(
        "3",
        "Training accuracy floor over t=0..399",
        worst.0 >= 0.90,
        &[format!("lowest train accuracy {:.4} on {} (>= 0.90)", worst.0, worst.1)],
    );

    // 4. warm-start epoch reduction
    let mut ok = true;
    let mut details = Vec::new();
    for (c, rep) in &reports {
        let ratio = rep.training.epoch_ratio_cold_warm.unwrap_or(f64::NAN);
        ok &= ratio >= 3.0;
        details.push(format!(
            "{c}: warm {:.1}, cold {:.1}, ratio {ratio:.2} (>= 3)",
            rep.training.mean_epochs_warm,
            rep.training.mean_epochs_cold.unwrap_or(f64::NAN)
        ));
    }
    board.record("4", "Epoch reduction from carried optimizer moments", ok, &details);

    // 5. spectral structure
    let mut details = Vec::new();
    let mut post_ok = raw_f.rho_post <= 1.0 && wd_off.report.koopman.spectral_radius_post <= 1.0;
    for rep in reports.values() {
        post_ok &= rep.koopman.spectral_radius_post <= 1.0;
    }
    details.push(format!("post-enforcement rho <= 1 on every fit: {post_ok}"));
    let mut pre_ok = true;
    for c in ['A', 'B', 'C', 'D', 'E'] {
        let k = &r(c).koopman;
        let pass = (0.80..=1.01).contains(&k.spectral_radius_pre);
        pre_ok &= pass;
        details.push(format!(
            "{c}: rho pre {:.4} in [0.80, 1.01] (latent block {:.4})",
            k.spectral_radius_pre, k.latent_spectral_radius
        ));
    }
    let raw_ok = raw_f.rho_pre >= 1.5 && raw_f.auto_mean.is_none_or(|m| m <= 0.5);
    details.push(format!(
        "F raw fourier: rho pre {:.4} (>= 1.5), rollout {} (divergent or <= 0.5)",
        raw_f.rho_pre,
        raw_f.auto_mean.map(|m| format!("mean {m:.4}")).unwrap_or_else(|| "diverged".into())
    ));
    let detrend_ok = r('F').koopman_auto.mean >= 0.99;
    details.push(format!("F detrend_fourier: mean {:.4} (>= 0.99)", r('F').koopman_auto.mean));
    board.record("5", "Spectral structure", post_ok && pre_ok && raw_ok && detrend_ok, &details);

    // 6. PCA compression
    let mut ok = true;
    let mut details = Vec::new();
    for (c, rep) in &reports {
        let cap = if rep.n_params == 17 { 12 } else { 10 };
        ok &= rep.koopman.pca_components <= cap;
        details.push(format!("{c}: p = {} of {} (<= {cap})", rep.koopman.pca_components, rep.n_params));
    }
    board.record("6", "PCA compression at 99.5% variance", ok, &details);

    // 7. weight-decay ablation on F
    let off = &wd_off.report;
    let on = r('F');
    let pass = off.training.layer2_trend_fraction >= 0.90 && on.training.layer2_trend_fraction <= 0.10 && off.koopman_auto.mean <= 0.5;
    board.record(
        "7",
        "Weight-decay ablation on F",
        pass,
        &[
            format!("layer-2 trend fraction, lambda_wd = 0: {:.3} (>= 0.90)", off.training.layer2_trend_fraction),
            format!("layer-2 trend fraction, lambda_wd = 1e-3: {:.3} (<= 0.10)", on.training.layer2_trend_fraction),
            format!("autonomous mean at lambda_wd = 0: {:.4} (<= 0.5)", off.koopman_auto.mean),
        ],
    );

    // 8. oracle suites
    let grads = common::gradient_errors(100, 11);
    let worst_grad = grads.iter().copied().fold(0.0, f64::max);
    let edmd = common::edmd_recovery_error();
    let (sym, in_range, unit) = common::dcor_properties(200);
    let (dind, dq) = common::dcor_independence();
    let drate = common::dcor_independence_rate(20);
    let (tind, tq) = common::te_independence();
    let copy = common::te_copy_process();
    let (line_err, trip_err) = common::detrend_errors();
    let checks = [
        (edmd < 1e-8, format!("EDMD operator recovery error {edmd:.2e} (< 1e-8)")),
        (worst_grad < 1e-5, format!("worst relative gradient error over 100 draws {worst_grad:.2e} (< 1e-5)")),
        (sym < 1e-12 && in_range && unit < 1e-10, format!("dCor symmetry gap {sym:.1e}, range ok {in_range}, self/affine deviation {unit:.1e}")),
        (dind < dq && drate >= 0.9, format!("dCor independent pair {dind:.4} < null p95 {dq:.4}; trials below null {:.0}%", 100.0 * drate)),
        (tind < tq, format!("TE independent pair {tind:.4} < null p95 {tq:.4}")),
        (
            (copy.forward - 8f64.ln()).abs() < 0.01 && copy.backward < 0.01 && copy.strongest == (0, 1),
            format!("TE copy process: forward {:.4} (log 8 = {:.4}), backward {:.4}, strongest link {:?}", copy.forward, 8f64.ln(), copy.backward, copy.strongest),
        ),
        (line_err < 1e-10 && trip_err < 1e-10, format!("detrend line error {line_err:.1e}, retrend round trip {trip_err:.1e} (< 1e-10)")),
    ];
    let ok = checks.iter().all(|c| c.0);
    let details: Vec<String> = checks.iter().map(|(p, d)| format!("{} {d}", if *p { "ok  " } else { "miss" })).collect();
    board.record("8", "Oracle suites", ok, &details);

    // 9. coupling ordinals
    let dcor = |c: char| match &r(c).coupling {
        CouplingSummary::Reported { dcor_mean_offdiag, .. } => *dcor_mean_offdiag,
        CouplingSummary::NotReported { .. } => f64::NAN,
    };
    let te = |c: char| match &r(c).coupling {
        CouplingSummary::Reported { te_ratio_l1_l2, .. } => te_ratio_l1_l2.unwrap_or(f64::NAN),
        CouplingSummary::NotReported { .. } => f64::NAN,
    };
    let order_ok = dcor('B') > dcor('C') && dcor('C') > dcor('A');
    let te_ok = te('D') > te('E') && (te('D') - 1.95).abs() <= 0.5 && (te('E') - 1.22).abs() <= 0.5;
    board.record(
        "9",
        "Coupling ordinals",
        order_ok && te_ok,
        &[
            format!("mean dCor B {:.3} > C {:.3} > A {:.3}: {order_ok}", dcor('B'), dcor('C'), dcor('A')),
            format!("TE ratio D {:.3} (1.95 +- 0.5) > E {:.3} (1.22 +- 0.5): {te_ok}", te('D'), te('E')),
        ],
    );

    // 10. determinism
    board.record(
        "10",
        "Repeated cmd_all gives byte-identical report",
        first == second,
        &[format!("dataset D, {} bytes", first.len())],
    );

    println!();
    println!(
        "{}/{} criteria passed in {:.0}s{}",
        board.total - board.failed.len(),
        board.total,
        started.elapsed().as_secs_f64(),
        if board.failed.is_empty() { String::new() } else { format!("; failed: {}", board.failed.join(", ")) }
    );
    if !board.failed.is_empty() {
        std::process::exit(1);
    }
}
