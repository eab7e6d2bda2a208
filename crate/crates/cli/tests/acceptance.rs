//! Acceptance suite. Runs every criterion in sequence (so the timing
//! criteria are not disturbed by concurrent tests), prints one PASS/FAIL
//! line per criterion and a summary line. Failures make the process exit
//! non-zero only when `LSTMICA_ACCEPTANCE_STRICT` is set, so the report does
//! not stop the remaining test targets of a workspace run.

use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use lstmica::datagen::{fit_mixing_coeffs, generate_subject, SimConfig};
use lstmica::ica::{center_whiten, fast_ica, IcaOptions};
use lstmica::lstm::{mse_loss, DeepLstmModel, Mode, SequenceBatch};
use lstmica::numerics::{corrcoef, covariance, randn, SeededRng};
use lstmica::preprocess::{denormalize, normalize_channels, normalize_eeg};
use lstmica::removal::{compute_metrics, remove_eog, RemovalConfig};
use lstmica_cli::commands::{clean, evaluate, simulate, train};
use lstmica_cli::config::RunConfig;
use lstmica_cli::Reporter;
use ndarray::{Array1, Array2};
use tempfile::TempDir;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter().zip(b.iter()).fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()))
}

fn whitening() -> Outcome {
    let start = Instant::now();
    let mut rng = SeededRng::new(1001);
    let mut worst = 0.0_f64;
    for _ in 0..100 {
        let mixing = randn(5, 5, &mut rng);
        let mut sources = randn(5, 2000, &mut rng);
        for mut row in sources.rows_mut() {
            row *= rng.uniform_range(0.1, 10.0);
        }
        let x = mixing.dot(&sources);
        let (xw, _) = center_whiten(x.view()).expect("full-rank input");
        let c = covariance(xw.view()).unwrap();
        worst = worst.max(max_abs_diff(&c, &Array2::eye(5)));
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst < 1e-6 && secs < 5.0,
        format!("max |cov - I| = {worst:.2e}, {secs:.2} s"),
    )
}

/// Pairs every recovered component with the true source of largest |corr|.
fn ica_recovery() -> Outcome {
    let start = Instant::now();
    let (n, t) = (4, 5000);
    let mut worst_corr = 1.0_f64;
    let mut worst_orth = 0.0_f64;
    let mut one_to_one = true;
    for seed in 0..10u64 {
        let mut rng = SeededRng::new(2000 + seed);
        // Laplace sources: difference of two exponentials
        let s = Array2::from_shape_simple_fn((n, t), || {
            let (u, v) = (rng.uniform(), rng.uniform());
            (1.0 - u).ln() - (1.0 - v).ln()
        });
        let x = randn(n, n, &mut rng).dot(&s);
        let (xw, _) = center_whiten(x.view()).unwrap();
        let res = fast_ica(xw.view(), n, &mut rng, &IcaOptions::default()).unwrap();
        worst_orth = worst_orth.max(max_abs_diff(&res.w.t().dot(&res.w), &Array2::eye(n)));
        let mut taken = vec![false; n];
        for comp in res.sources.rows() {
            let (best, corr) = (0..n)
                .map(|k| (k, corrcoef(comp, s.row(k)).unwrap().abs()))
                .max_by(|a, b| a.1.total_cmp(&b.1))
                .unwrap();
            one_to_one &= !taken[best];
            taken[best] = true;
            worst_corr = worst_corr.min(corr);
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        one_to_one && worst_corr >= 0.95 && worst_orth < 1e-6 && secs < 10.0,
        format!(
            "min |corr| = {worst_corr:.4}, one-to-one = {one_to_one}, max |WᵀW - I| = {worst_orth:.2e}, {secs:.2} s"
        ),
    )
}

/// BPTT against central differences of the loss, tensor by tensor.
fn gradient_check() -> Outcome {
    let mut rng = SeededRng::new(3003);
    let model = DeepLstmModel::with_architecture(2, 3, &[0.0, 0.0], 2, &mut rng).unwrap();
    let x = randn(2, 5, &mut rng);
    let y = randn(2, 5, &mut rng);
    let target = SequenceBatch::from_sequences(&[y.view()]).unwrap();
    let loss = |m: &DeepLstmModel| {
        let (out, _) = m.forward(x.view(), Mode::Train, &mut SeededRng::new(0)).unwrap();
        mse_loss(out.view(), y.view()).unwrap()
    };
    let (_, cache) = model.forward(x.view(), Mode::Train, &mut SeededRng::new(0)).unwrap();
    let (grads, _) = model.backprop(cache.as_ref(), &target).unwrap();
    let analytic: Vec<Vec<f64>> = grads.param_slices().iter().map(|s| s.to_vec()).collect();
    let eps = 1e-5;
    let mut worst = 0.0_f64;
    for (ti, g) in analytic.iter().enumerate() {
        for (k, &gk) in g.iter().enumerate() {
            let mut plus = model.clone();
            plus.param_slices_mut()[ti][k] += eps;
            let mut minus = model.clone();
            minus.param_slices_mut()[ti][k] -= eps;
            let fd = (loss(&plus) - loss(&minus)) / (2.0 * eps);
            let rel = (gk - fd).abs() / gk.abs().max(fd.abs()).max(1e-10);
            worst = worst.max(rel);
        }
    }
    outcome(
        worst < 1e-4,
        format!("{} tensors, max relative error {worst:.2e}", analytic.len()),
    )
}

fn noop_removal() -> Outcome {
    let mut rng = SeededRng::new(4004);
    let mut worst = 0.0_f64;
    for _ in 0..10 {
        let x = randn(6, 6, &mut rng).dot(&randn(6, 1500, &mut rng)) * 20.0;
        let (xn, params) = normalize_eeg(x.view()).unwrap();
        let y_hat = randn(2, 1500, &mut rng);
        let config = RemovalConfig {
            threshold: 1.01,
            ..Default::default()
        };
        let out = remove_eog(xn.view(), y_hat.view(), &params, &config).unwrap();
        let reference = denormalize(xn.view(), params.eeg_means(), params.eeg_stds()).unwrap();
        worst = worst.max(max_abs_diff(&out.cleaned, &reference));
    }
    outcome(worst < 1e-6, format!("max |X_r - denormalize(X_N)| = {worst:.2e}"))
}

fn oracle_removal() -> Outcome {
    let d = generate_subject(0, 5005, &SimConfig::default()).unwrap();
    let (xn, yn, params) = normalize_channels(d.contaminated.view(), d.eog().view()).unwrap();
    let out = remove_eog(xn.view(), yn.view(), &params, &RemovalConfig::default()).unwrap();
    let mut worst = 0.0_f64;
    for c in 0..d.pure.nrows() {
        let cleaned = compute_metrics(d.pure.row(c), out.cleaned.row(c)).unwrap().mse;
        let contaminated = compute_metrics(d.pure.row(c), d.contaminated.row(c)).unwrap().mse;
        worst = worst.max(cleaned / contaminated);
    }
    outcome(
        worst < 0.5,
        format!(
            "worst channel MSE ratio {worst:.4}, removed sources {:?}",
            out.removed_source_ids
        ),
    )
}

struct DeskRun {
    elapsed: Duration,
    veog_corr: Vec<f64>,
    heog_corr: Vec<f64>,
    cleaned_mse: f64,
    contaminated_mse: f64,
}

fn desk_config(root: &Path) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.simulate.subjects = 20;
    cfg.simulate.duration_s = 30.0;
    cfg.paths.dataset = root.join("dataset");
    cfg.paths.model = root.join("model");
    cfg.paths.cleaned = root.join("cleaned");
    cfg.paths.evaluation = root.join("evaluation");
    cfg
}

fn desk_run(root: &Path) -> DeskRun {
    let cfg = desk_config(root);
    let rep = Reporter { quiet: false };
    let p = &cfg.paths;
    let start = Instant::now();
    simulate::run(&cfg, &p.dataset, &rep).unwrap();
    train::run(&cfg, &p.dataset, &p.model, &rep).unwrap();
    clean::run(&cfg, &p.model, &clean::CleanInput::Dataset(p.dataset.clone()), &p.cleaned, &rep).unwrap();
    let elapsed = start.elapsed();
    let summary = evaluate::run(&cfg, &p.cleaned, &p.dataset, &p.evaluation, &rep).unwrap();

    let mut reader = csv::Reader::from_path(p.evaluation.join("eog_errors.csv")).unwrap();
    let header = reader.headers().unwrap().clone();
    let col = |name: &str| header.iter().position(|h| h == name).unwrap();
    let (vc, hc) = (col("veog_corr"), col("heog_corr"));
    let (mut veog_corr, mut heog_corr) = (Vec::new(), Vec::new());
    for row in reader.records() {
        let row = row.unwrap();
        veog_corr.push(row[vc].parse().unwrap());
        heog_corr.push(row[hc].parse().unwrap());
    }
    DeskRun {
        elapsed,
        veog_corr,
        heog_corr,
        cleaned_mse: summary.cleaned_normalized.mse.mean,
        contaminated_mse: summary.contaminated_normalized.mse.mean,
    }
}

fn fmt_list(v: &[f64]) -> String {
    v.iter().map(|c| format!("{c:.3}")).collect::<Vec<_>>().join(", ")
}

fn desk_outcome(run: &DeskRun) -> Outcome {
    let min = |v: &[f64]| v.iter().cloned().fold(f64::INFINITY, f64::min);
    let corr_ok = !run.veog_corr.is_empty() && min(&run.veog_corr) >= 0.8 && min(&run.heog_corr) >= 0.8;
    let mse_ok = run.cleaned_mse <= 0.15;
    let better = run.cleaned_mse < run.contaminated_mse;
    let fast = run.elapsed < Duration::from_secs(600);
    outcome(
        corr_ok && mse_ok && better && fast,
        format!(
            "(a) corr VEOG [{}] HEOG [{}] {}; (b) cleaned MSE {:.4} {}; (c) contaminated MSE {:.4} {}; runtime {:.0} s {}",
            fmt_list(&run.veog_corr),
            fmt_list(&run.heog_corr),
            ok_word(corr_ok),
            run.cleaned_mse,
            ok_word(mse_ok),
            run.contaminated_mse,
            ok_word(better),
            run.elapsed.as_secs_f64(),
            ok_word(fast),
        ),
    )
}

fn ok_word(b: bool) -> &'static str {
    if b {
        "ok"
    } else {
        "FAIL"
    }
}

fn metric_definitions() -> Outcome {
    let mut rng = SeededRng::new(7007);
    let mut worst = 0.0_f64;
    for _ in 0..20 {
        let y = Array1::from_shape_simple_fn(500, || 30.0 * rng.normal());
        let c = 5.0 * rng.normal();
        let m = compute_metrics(y.view(), (&y + c).view()).unwrap();
        for (got, want) in [(m.mse, c * c), (m.mae, c.abs()), (m.me, -c)] {
            worst = worst.max((got - want).abs() / want.abs().max(1.0));
        }
    }
    outcome(worst < 1e-12, format!("max relative deviation {worst:.2e}"))
}

fn determinism(first: &Path, second: &Path) -> Outcome {
    let files = [
        "model/model.bin",
        "evaluation/channel_metrics.csv",
        "evaluation/subject_metrics.csv",
        "evaluation/summary.csv",
        "evaluation/eog_errors.csv",
    ];
    let differing: Vec<&str> = files
        .iter()
        .copied()
        .filter(|f| fs::read(first.join(f)).unwrap() != fs::read(second.join(f)).unwrap())
        .collect();
    outcome(
        differing.is_empty(),
        if differing.is_empty() {
            format!("{} files byte-identical", files.len())
        } else {
            format!("differ: {}", differing.join(", "))
        },
    )
}

fn contamination_model() -> Outcome {
    let cfg = SimConfig::default();
    let (mut residual, mut coeff) = (0.0_f64, 0.0_f64);
    for i in 0..20 {
        let d = generate_subject(i, 9009, &cfg).unwrap();
        for c in 0..d.pure.nrows() {
            for t in 0..d.pure.ncols() {
                let r = d.contaminated[[c, t]] - d.pure[[c, t]] - d.a * d.veog[t] - d.b * d.heog[t];
                residual = residual.max(r.abs());
            }
        }
        let (a, b) = fit_mixing_coeffs(d.contaminated.view(), d.pure.view(), d.veog.view(), d.heog.view()).unwrap();
        coeff = coeff.max((a - d.a).abs()).max((b - d.b).abs());
    }
    outcome(
        residual <= 1e-12 && coeff <= 1e-9,
        format!("20 subjects: max residual {residual:.2e}, max coefficient error {coeff:.2e}"),
    )
}

fn main() -> ExitCode {
    // libtest-style filter arguments are ignored; `--list` must print nothing.
    if std::env::args().any(|a| a == "--list") {
        return ExitCode::SUCCESS;
    }
    let mut results: Vec<(u32, &str, Outcome)> = Vec::new();
    let mut record = |n: u32, name: &'static str, o: Outcome| {
        println!("criterion {n} [{}] {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        results.push((n, name, o));
    };
    record(1, "whitening", whitening());
    record(2, "FastICA recovery", ica_recovery());
    record(3, "LSTM gradients", gradient_check());
    record(4, "no-op removal", noop_removal());
    record(5, "oracle removal", oracle_removal());

    let tmp = TempDir::new().unwrap();
    let (first, second) = (tmp.path().join("first"), tmp.path().join("second"));
    let run = desk_run(&first);
    record(6, "end-to-end desk run", desk_outcome(&run));
    record(7, "metric definitions", metric_definitions());
    desk_run(&second);
    record(8, "determinism", determinism(&first, &second));
    record(9, "contamination model", contamination_model());

    let failed: Vec<u32> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    println!(
        "acceptance: {} passed, {} failed{}",
        results.len() - failed.len(),
        failed.len(),
        if failed.is_empty() {
            String::new()
        } else {
            format!(" ({failed:?})")
        }
    );
    if failed.is_empty() || std::env::var_os("LSTMICA_ACCEPTANCE_STRICT").is_none() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
