use std::fs;
use std::path::Path;
use std::process::Command;

use dali_cli::runner::{checkpoint_path, read_metrics, seed_dir, METRICS_FILE, RESOLVED_CONFIG};
use dali_cli::{compare_variants, evaluate_checkpoint, run_experiment, RunError, RunOptions, TrainConfig};
use dali_core::{MixtureConfig, VariantKind};

fn quiet() -> RunOptions {
    RunOptions { quiet: true }
}

/// A config small enough to train in well under a second.
fn tiny(variant: VariantKind, out: &Path) -> TrainConfig {
    let mut c = TrainConfig {
        variant,
        batch_size: 32,
        total_steps: 20,
        eval_every: 10,
        seeds: vec![3, 4],
        output_dir: out.to_path_buf(),
        ..TrainConfig::default()
    };
    c.architecture.generator_hidden = vec![16, 16];
    c.architecture.discriminator_hidden = vec![16, 16];
    c.architecture.encoder_hidden = vec![8];
    c.eval.n_gen = 200;
    c.eval.test_m = 100;
    c
}

#[test]
fn zero_budget_writes_only_the_initial_evaluation() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = tiny(VariantKind::Dali, dir.path());
    c.total_steps = 0;
    c.seeds = vec![0];
    let summary = run_experiment(&c, &quiet()).unwrap();
    assert_eq!(summary.failed(), 0);
    let sd = seed_dir(dir.path(), 0);
    let rows = read_metrics(&sd.join(METRICS_FILE)).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].step, 0);
    assert!(rows[0].losses.l_d.is_nan());
    assert!(checkpoint_path(&sd, 0).exists());
    assert!(sd.join("samples_0.csv").exists());
    assert!(sd.join("recon_0.csv").exists());
    let entries = fs::read_dir(&sd).unwrap().count();
    assert_eq!(entries, 4);
}

#[test]
fn artifacts_exist_for_every_evaluated_step() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = tiny(VariantKind::Dali, dir.path());
    c.total_steps = 25;
    run_experiment(&c, &quiet()).unwrap();
    for seed in [3, 4] {
        let sd = seed_dir(dir.path(), seed);
        let rows = read_metrics(&sd.join(METRICS_FILE)).unwrap();
        let steps: Vec<u64> = rows.iter().map(|r| r.step).collect();
        assert_eq!(steps, vec![0, 10, 20, 25]);
        for s in steps {
            assert!(checkpoint_path(&sd, s).exists());
            let samples = fs::read_to_string(sd.join(format!("samples_{s}.csv"))).unwrap();
            assert!(samples.starts_with("x,y\n"));
            assert_eq!(samples.lines().count(), 201);
            let recon = fs::read_to_string(sd.join(format!("recon_{s}.csv"))).unwrap();
            assert!(recon.starts_with("x,y,x_rec,y_rec\n"));
            assert_eq!(recon.lines().nth(1).unwrap().split(',').count(), 4);
        }
        assert!(!checkpoint_path(&sd, 15).exists());
    }
    assert!(dir.path().join("summary.json").exists());
    assert!(dir.path().join("summary.txt").exists());
}

#[test]
fn repeated_runs_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ca = tiny(VariantKind::Dali, a.path());
    let cb = tiny(VariantKind::Dali, b.path());
    run_experiment(&ca, &quiet()).unwrap();
    run_experiment(&cb, &quiet()).unwrap();
    for seed in [3, 4] {
        for name in [METRICS_FILE.to_string(), "checkpoint_20".into(), "samples_20.csv".into()] {
            let fa = fs::read(seed_dir(a.path(), seed).join(&name)).unwrap();
            let fb = fs::read(seed_dir(b.path(), seed).join(&name)).unwrap();
            assert_eq!(fa, fb, "{name} differs for seed {seed}");
        }
    }
    // Different seeds give different runs.
    let m3 = fs::read(seed_dir(a.path(), 3).join(METRICS_FILE)).unwrap();
    let m4 = fs::read(seed_dir(a.path(), 4).join(METRICS_FILE)).unwrap();
    assert_ne!(m3, m4);
}

#[test]
fn resolved_config_reproduces_the_run() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_experiment(&tiny(VariantKind::DaliF, a.path()), &quiet()).unwrap();
    let text = fs::read_to_string(a.path().join(RESOLVED_CONFIG)).unwrap();
    let mut again = TrainConfig::from_json(&text).unwrap();
    assert_eq!(again.lambda, Some(0.5));
    again.output_dir = b.path().to_path_buf();
    run_experiment(&again, &quiet()).unwrap();
    for seed in [3, 4] {
        let fa = fs::read(seed_dir(a.path(), seed).join(METRICS_FILE)).unwrap();
        let fb = fs::read(seed_dir(b.path(), seed).join(METRICS_FILE)).unwrap();
        assert_eq!(fa, fb);
    }
}

#[test]
fn checkpoint_evaluation_matches_logged_rows() {
    let dir = tempfile::tempdir().unwrap();
    for variant in [VariantKind::Dali, VariantKind::Gan] {
        let out = dir.path().join(variant.label());
        let c = tiny(variant, &out);
        run_experiment(&c, &quiet()).unwrap();
        for seed in [3, 4] {
            let sd = seed_dir(&out, seed);
            for row in read_metrics(&sd.join(METRICS_FILE)).unwrap() {
                let again = evaluate_checkpoint(&checkpoint_path(&sd, row.step), &c, seed).unwrap();
                assert_eq!(again.step, row.step);
                assert!(again.same_evaluation(&row), "{variant:?} seed {seed} step {}", row.step);
                if variant == VariantKind::Gan {
                    assert!(again.recon_mse.is_nan());
                    assert!(!sd.join(format!("recon_{}.csv", row.step)).exists());
                }
            }
        }
    }
}

#[test]
fn checkpoint_from_another_architecture_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let c = tiny(VariantKind::Dali, dir.path());
    run_experiment(&c, &quiet()).unwrap();
    let mut other = c.clone();
    other.architecture.generator_hidden = vec![16, 17];
    let err = evaluate_checkpoint(&checkpoint_path(&seed_dir(dir.path(), 3), 20), &other, 3).unwrap_err();
    assert!(err.to_string().contains("generator"), "{err}");
}

#[test]
fn invalid_config_fails_before_running() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = tiny(VariantKind::Dali, dir.path());
    c.lambda = Some(-1.0);
    let err = run_experiment(&c, &quiet()).unwrap_err();
    assert!(matches!(err, RunError::Config(_)));
    assert_eq!(err.exit_code(), 1);
    assert!(!dir.path().join(RESOLVED_CONFIG).exists());
}

#[test]
fn diverging_seed_is_marked_failed_and_others_continue() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = tiny(VariantKind::Dali, dir.path());
    // A learning rate this large overflows within a few steps.
    c.optimizer.lr = 1e150;
    c.seeds = vec![1];
    let summary = run_experiment(&c, &quiet()).unwrap();
    assert_eq!(summary.failed(), 1);
    assert!(summary.seeds[0].error.is_some());
    assert!(summary.aggregate.modes_captured.is_none());
    let text = fs::read_to_string(dir.path().join("summary.txt")).unwrap();
    assert!(text.contains("FAILED"));

    let mut ok = tiny(VariantKind::Dali, dir.path());
    ok.seeds = vec![1, 2];
    let summary = run_experiment(&ok, &quiet()).unwrap();
    assert_eq!(summary.failed(), 0);
}

#[test]
fn comparison_table_has_one_row_per_variant() {
    let dir = tempfile::tempdir().unwrap();
    let configs = [
        tiny(VariantKind::Dali, &dir.path().join("dali")),
        tiny(VariantKind::Gan, &dir.path().join("gan")),
    ];
    let cmp = compare_variants(&configs, &quiet()).unwrap();
    assert_eq!(cmp.rows.len(), 2);
    let csv = cmp.to_csv();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 3);
    assert_eq!(lines[0], "variant,seeds_ok,modes_mean,modes_std,hq_frac_mean,hq_frac_std");
    assert!(lines[1].starts_with("DALI,2,"));
    assert!(lines[2].starts_with("GAN,2,"));
    assert_eq!(cmp.to_text().lines().count(), 3);

    // A second comparison reuses the finished runs.
    let stamp = fs::metadata(dir.path().join("dali/summary.json")).unwrap().modified().unwrap();
    let again = compare_variants(&configs, &quiet()).unwrap();
    assert_eq!(again, cmp);
    let stamp2 = fs::metadata(dir.path().join("dali/summary.json")).unwrap().modified().unwrap();
    assert_eq!(stamp, stamp2);
}

#[test]
fn comparison_rejects_mismatched_mixtures() {
    let dir = tempfile::tempdir().unwrap();
    let a = tiny(VariantKind::Dali, &dir.path().join("a"));
    let mut b = tiny(VariantKind::Gan, &dir.path().join("b"));
    b.mixture = MixtureConfig {
        sigma: 0.1,
        ..MixtureConfig::default()
    };
    let err = compare_variants(&[a, b], &quiet()).unwrap_err();
    assert!(matches!(err, RunError::Config(_)));
}

// Binary-level checks: exit codes and verbs.

fn dali() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dali"))
}

fn write_config(dir: &Path, c: &TrainConfig) -> std::path::PathBuf {
    let p = dir.join("config.json");
    fs::write(&p, c.to_json()).unwrap();
    p
}

#[test]
fn binary_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let cfg = write_config(dir.path(), &tiny(VariantKind::Dali, &out));

    let st = dali().args(["train", cfg.to_str().unwrap(), "--quiet", "--seed", "5", "--steps", "10"]).output().unwrap();
    assert_eq!(st.status.code(), Some(0), "{}", String::from_utf8_lossy(&st.stderr));
    let rows = read_metrics(&seed_dir(&out, 5).join(METRICS_FILE)).unwrap();
    assert_eq!(rows.last().unwrap().step, 10);

    let ck = checkpoint_path(&seed_dir(&out, 5), 10);
    let st = dali().args(["eval", ck.to_str().unwrap(), cfg.to_str().unwrap()]).output().unwrap();
    assert_eq!(st.status.code(), Some(0));
    let stdout = String::from_utf8(st.stdout).unwrap();
    let printed = dali_core::MetricsRecord::from_csv_row(stdout.lines().nth(1).unwrap()).unwrap();
    assert!(printed.same_evaluation(rows.last().unwrap()));

    let bad = dir.path().join("corrupt");
    fs::write(&bad, "dali-checkpoint 1\nentry generator.w0 2 16 trainable\n1 2 3\n").unwrap();
    let st = dali().args(["eval", bad.to_str().unwrap(), cfg.to_str().unwrap()]).output().unwrap();
    assert_eq!(st.status.code(), Some(2));

    let broken = dir.path().join("broken.json");
    fs::write(&broken, r#"{"lambda": "half"}"#).unwrap();
    let st = dali().args(["train", broken.to_str().unwrap()]).output().unwrap();
    assert_eq!(st.status.code(), Some(1));
    let st = dali().args(["train", dir.path().join("missing.json").to_str().unwrap()]).output().unwrap();
    assert_eq!(st.status.code(), Some(1));

    let mut failing = tiny(VariantKind::Dali, &dir.path().join("failing"));
    failing.optimizer.lr = 1e150;
    let fcfg = dir.path().join("failing.json");
    fs::write(&fcfg, failing.to_json()).unwrap();
    let st = dali().args(["train", fcfg.to_str().unwrap(), "--quiet"]).output().unwrap();
    assert_eq!(st.status.code(), Some(2));
}

#[test]
fn binary_compare_writes_tables() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    fs::write(&a, tiny(VariantKind::Dali, dir.path()).to_json()).unwrap();
    fs::write(&b, tiny(VariantKind::Gan, dir.path()).to_json()).unwrap();
    let out = dir.path().join("cmp");
    let st = dali()
        .args(["compare", a.to_str().unwrap(), b.to_str().unwrap(), "--quiet", "--steps", "10", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(st.status.code(), Some(0), "{}", String::from_utf8_lossy(&st.stderr));
    let csv = fs::read_to_string(out.join("comparison.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(out.join("comparison.txt").exists());
    assert!(out.join("dali").join("summary.json").exists());
    assert!(out.join("gan").join("summary.json").exists());
}

#[test]
fn shipped_configs_are_valid() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let c = TrainConfig::load(&path).unwrap().resolve().unwrap();
        assert!(c.output_dir.starts_with("runs"), "{}", path.display());
        n += 1;
    }
    assert!(n >= 3);
}
