//! Acceptance suite. Prints one PASS/FAIL line per criterion, then fails if
//! any criterion failed.
//!
//! The full-scale criteria (1, 2, 3 and 8) train the default configuration
//! for three seeds per variant, which takes a while on one core. Artifacts go
//! to `target/acceptance/`.

use std::f64::consts::PI;
use std::fs::{self, File};
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::time::Instant;

use dali_cli::runner::{checkpoint_path, seed_dir};
use dali_cli::{run_experiment, RunOptions, RunSummary, TrainConfig};
use dali_core::autodiff::finite_difference_check;
use dali_core::metrics::reconstruction_faithfulness;
use dali_core::model::{
    disc_loss_gan, fgan_gen_loss, fgan_value, gaussian_nll, gen_loss_gan, reconstruction_loss,
    PosteriorNodes,
};
use dali_core::nn::{read_checkpoint, BoundParams};
use dali_core::rng::{standard_normal, stream_rng, Stream};
use dali_core::{
    prior_log_constant, train_step, Activation, Matrix, MixtureConfig, ModelBundle, ModelConfig,
    NodeId, Optimizers, Tape, TrainSettings, VariantKind,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEEDS: [u64; 3] = [0, 1, 2];
const MAX_SECONDS_PER_SEED: f64 = 15.0 * 60.0;
const DALI_MIN_MODES: usize = 24;
const DALI_MIN_HQ: f64 = 0.60;
const DALI_F_MIN_MODES: f64 = 20.0;
const GRAD_TOL: f64 = 1e-4;
const GRAD_MAX_SECONDS: f64 = 60.0;
const NLL_TOL: f64 = 1e-12;
const ENTROPY_GAP_NATS: f64 = 2.0;
const SINGLE_MODE_STEPS: usize = 5000;
const FAITHFUL_MIN: f64 = 0.80;

struct Report {
    lines: Vec<(bool, String)>,
}

impl Report {
    fn record(&mut self, id: &str, pass: bool, detail: String) {
        let line = format!("{} criterion {id}: {detail}", if pass { "PASS" } else { "FAIL" });
        println!("{line}");
        self.lines.push((pass, line));
    }
}

fn out_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../target/acceptance")
}

struct FullRun {
    config: TrainConfig,
    summary: RunSummary,
    seconds_per_seed: f64,
}

fn full_run(variant: VariantKind) -> FullRun {
    let config = TrainConfig {
        variant,
        seeds: SEEDS.to_vec(),
        output_dir: out_root().join(variant.label().to_ascii_lowercase()),
        ..TrainConfig::default()
    };
    let start = Instant::now();
    let summary = run_experiment(&config, &RunOptions { quiet: true }).expect("run completes");
    let seconds_per_seed = start.elapsed().as_secs_f64() / SEEDS.len() as f64;
    println!("{}", summary.to_text().trim_end());
    FullRun {
        config: config.resolve().unwrap(),
        summary,
        seconds_per_seed,
    }
}

fn modes(run: &FullRun) -> Vec<usize> {
    run.summary.seeds.iter().map(|s| s.modes_captured.unwrap_or(0)).collect()
}

fn mean_modes(run: &FullRun) -> f64 {
    run.summary.aggregate.modes_captured.map_or(f64::NAN, |s| s.mean)
}

fn mean_hq(run: &FullRun) -> f64 {
    run.summary.aggregate.high_quality_fraction.map_or(f64::NAN, |s| s.mean)
}

fn criterion_1(r: &mut Report, dali: &FullRun) {
    let m = modes(dali);
    let all_done = dali.summary.failed() == 0;
    let pass = all_done
        && m.iter().all(|&k| k >= DALI_MIN_MODES)
        && mean_hq(dali) >= DALI_MIN_HQ
        && dali.seconds_per_seed <= MAX_SECONDS_PER_SEED;
    r.record(
        "1",
        pass,
        format!(
            "DALI modes per seed {m:?} (need >= {DALI_MIN_MODES} each), mean hq_frac {:.4} (need >= {DALI_MIN_HQ}), {:.0} s per seed (need <= {MAX_SECONDS_PER_SEED:.0})",
            mean_hq(dali),
            dali.seconds_per_seed
        ),
    );
}

fn criterion_2(r: &mut Report, dali: &FullRun, gan: &FullRun) {
    let pass = mean_modes(gan) < mean_modes(dali) && mean_hq(dali) > mean_hq(gan);
    r.record(
        "2",
        pass,
        format!(
            "mean modes DALI {:.2} vs GAN {:.2}; mean hq_frac DALI {:.4} vs GAN {:.4} (DALI must be strictly better on both)",
            mean_modes(dali),
            mean_modes(gan),
            mean_hq(dali),
            mean_hq(gan)
        ),
    );
}

fn criterion_3(r: &mut Report, dali_f: &FullRun) {
    let pass = mean_modes(dali_f) >= DALI_F_MIN_MODES;
    r.record(
        "3",
        pass,
        format!(
            "DALI-f mean modes {:.2} (need >= {DALI_F_MIN_MODES}), per seed {:?}, mean hq_frac {:.4}",
            mean_modes(dali_f),
            modes(dali_f),
            mean_hq(dali_f)
        ),
    );
}

#[derive(Clone, Copy, Debug)]
enum Loss {
    Disc,
    Gen,
    Latent,
    Rec,
    FganValue,
}

fn small_bundle(variant: VariantKind, seed: u64) -> ModelBundle {
    let mut cfg = ModelConfig::new(variant, 2);
    cfg.arch.generator_hidden = vec![6, 5];
    cfg.arch.discriminator_hidden = vec![6, 5];
    cfg.arch.encoder_hidden = vec![4];
    cfg.arch.generator_activation = Activation::Tanh;
    cfg.arch.discriminator_activation = Activation::Tanh;
    cfg.arch.encoder_activation = Activation::Tanh;
    ModelBundle::new(cfg, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

fn loss_gradient_error(bundle: &ModelBundle, loss: Loss, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let real = Matrix::from_shape_fn((8, 2), |_| rng.random_range(-2.0..2.0));
    let z = standard_normal(&mut rng, 8, 2);
    let store = bundle.to_store();
    let names: Vec<String> = store.iter().map(|(n, _)| n.to_string()).collect();
    let values: Vec<Matrix> = store.iter().map(|(_, e)| e.value.clone()).collect();
    finite_difference_check(&values, 1e-5, |t, ids| {
        let p: BoundParams = names.iter().cloned().zip(ids.iter().copied()).collect();
        let zn = t.constant(z.clone());
        let xr = t.constant(real.clone());
        let fake = bundle.generate_node(t, &p, zn)?;
        let (d_fake, feats) = bundle.discriminate_node(t, &p, fake)?;
        let (d_real, _) = bundle.discriminate_node(t, &p, xr)?;
        let latent = |t: &mut Tape| -> dali_core::Result<NodeId> {
            let input = bundle.encoder_input(t, &p, fake, feats)?;
            let post = bundle.encode_node(t, &p, input)?;
            gaussian_nll(t, zn, post)
        };
        match loss {
            Loss::Disc => disc_loss_gan(t, d_real, d_fake),
            Loss::Gen => gen_loss_gan(t, d_fake),
            Loss::Latent => latent(t),
            Loss::Rec => {
                let lg = gen_loss_gan(t, d_fake)?;
                let n = latent(t)?;
                reconstruction_loss(t, lg, n, 0.5)
            }
            Loss::FganValue => {
                let v = fgan_value(t, d_real, d_fake)?;
                let g = fgan_gen_loss(t, d_fake);
                t.add(v, g)
            }
        }
    })
    .unwrap()
}

fn criterion_4(r: &mut Report) {
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut worst_at = String::new();
    for seed in 0..5 {
        let dali = small_bundle(VariantKind::Dali, seed);
        let fgan = small_bundle(VariantKind::DaliF, seed);
        for (bundle, loss) in [
            (&dali, Loss::Disc),
            (&dali, Loss::Gen),
            (&dali, Loss::Latent),
            (&dali, Loss::Rec),
            (&fgan, Loss::FganValue),
        ] {
            let e = loss_gradient_error(bundle, loss, 1000 + seed);
            if e > worst {
                worst = e;
                worst_at = format!("{loss:?}, seed {seed}");
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    r.record(
        "4",
        worst < GRAD_TOL && secs < GRAD_MAX_SECONDS,
        format!("max relative gradient error {worst:.2e} ({worst_at}) over L_d, L_g, L_e, L_rec, f-GAN value; {secs:.1} s"),
    );
}

fn criterion_5(r: &mut Report) {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let n = rng.random_range(1..6);
        let d = rng.random_range(1..5);
        let z = Matrix::from_shape_fn((n, d), |_| rng.random_range(-3.0..3.0));
        let mu = Matrix::from_shape_fn((n, d), |_| rng.random_range(-3.0..3.0));
        let lv = Matrix::from_shape_fn((n, d), |_| rng.random_range(-10.0..10.0));
        let mut oracle = 0.0;
        for i in 0..n {
            for j in 0..d {
                let var = lv[[i, j]].exp();
                oracle += 0.5 * ((z[[i, j]] - mu[[i, j]]).powi(2) / var + var.ln() + (2.0 * PI).ln());
            }
        }
        oracle /= n as f64;
        let mut t = Tape::new();
        let post = PosteriorNodes {
            mu: t.constant(mu),
            log_var: t.constant(lv),
        };
        let zn = t.constant(z);
        let got = gaussian_nll(&mut t, zn, post).unwrap();
        worst = worst.max((t.scalar(got) - oracle).abs() / oracle.abs().max(1.0));
    }
    r.record("5", worst <= NLL_TOL, format!("max relative deviation from scalar oracle {worst:.2e} over 1000 cases"));
}

fn criterion_6(r: &mut Report) {
    let got = prior_log_constant(2);
    let want = -(1.0 + (2.0 * PI).ln());
    r.record("6", (got - want).abs() <= 1e-12, format!("prior_log_constant(2) = {got:.15} vs {want:.15}"));
}

fn criterion_7(r: &mut Report) {
    let seed = 0;
    let mix = MixtureConfig {
        grid_side: 1,
        ..MixtureConfig::default()
    }
    .build()
    .unwrap();
    let config = TrainConfig::default();
    let mut bundle = ModelBundle::new(config.model_config(), &mut stream_rng(seed, Stream::Init)).unwrap();
    let mut opts = Optimizers::new(&config.optimizer);
    let settings = TrainSettings::for_latent_dim(2);
    let mut data = stream_rng(seed, Stream::Data);
    let mut latent = stream_rng(seed, Stream::Latent);
    for _ in 0..SINGLE_MODE_STEPS {
        let real = mix.sample(config.batch_size, &mut data);
        train_step(&mut bundle, &real, &mut latent, &settings, &mut opts).unwrap();
    }
    let z = standard_normal(&mut stream_rng(seed, Stream::Eval), 2500, 2);
    let x = bundle.generate(&z).unwrap();
    let l_e = bundle.latent_nll(&z).unwrap();
    let post = bundle.posterior(&x).unwrap();
    let mean_log_var_sum = post.log_var.sum() / z.nrows() as f64;
    let floor = 0.5 * 2.0 * (1.0 + (2.0 * PI).ln()) + 0.5 * mean_log_var_sum;
    let centre = x.mean_axis(ndarray::Axis(0)).unwrap();
    let offset = (centre[0].powi(2) + centre[1].powi(2)).sqrt();
    let gap = l_e - floor;
    let pass = gap.abs() <= ENTROPY_GAP_NATS && offset <= 3.0 * mix.sigma();
    r.record(
        "7",
        pass,
        format!(
            "single mode after {SINGLE_MODE_STEPS} steps: L_e {l_e:.3}, entropy floor {floor:.3}, gap {gap:.3} nats (need |gap| <= {ENTROPY_GAP_NATS}); sample mean offset {offset:.4} (need <= {:.2})",
            3.0 * mix.sigma()
        ),
    );
}

fn criterion_8(r: &mut Report, dali: &FullRun) {
    let mix = dali.config.mixture.build().unwrap();
    let spacing = dali.config.mixture.spacing;
    let mut faith = Vec::new();
    let mut mse = Vec::new();
    for s in &dali.summary.seeds {
        let path = checkpoint_path(&seed_dir(&dali.config.output_dir, s.seed), dali.config.total_steps);
        let Ok(file) = File::open(&path) else {
            faith.push(f64::NAN);
            continue;
        };
        let store = read_checkpoint(BufReader::new(file)).unwrap();
        let mut bundle = ModelBundle::empty(dali.config.model_config()).unwrap();
        bundle.load_store(&store).unwrap();
        // Held out: a stream no training or evaluation draw uses.
        let x = mix.sample(1000, &mut ChaCha8Rng::seed_from_u64(0xfa17 + s.seed));
        faith.push(reconstruction_faithfulness(&bundle, &mix, &x, 3.0).unwrap());
        mse.push(s.recon_mse.unwrap_or(f64::NAN));
    }
    let limit = spacing * spacing / 100.0;
    let pass = faith.iter().all(|&f| f >= FAITHFUL_MIN) && mse.len() == SEEDS.len() && mse.iter().all(|&m| m < limit);
    r.record(
        "8",
        pass,
        format!("faithful fraction per seed {faith:.3?} (need >= {FAITHFUL_MIN}); recon_mse per seed {mse:.5?} (need < {limit})"),
    );
}

fn criterion_9(r: &mut Report) {
    let base = out_root().join("determinism");
    let mut files = Vec::new();
    for rep in ["a", "b"] {
        let mut c = TrainConfig {
            total_steps: 300,
            eval_every: 100,
            seeds: vec![7],
            output_dir: base.join(rep),
            ..TrainConfig::default()
        };
        c.eval.n_gen = 500;
        run_experiment(&c, &RunOptions { quiet: true }).unwrap();
        files.push(fs::read(seed_dir(&c.output_dir, 7).join("metrics.csv")).unwrap());
    }
    r.record(
        "9",
        files[0] == files[1],
        format!("two 300-step runs with seed 7: metrics.csv {} ({} bytes)", if files[0] == files[1] { "byte-identical" } else { "differs" }, files[0].len()),
    );
}

fn finish(r: Report, title: &str) {
    println!("\n{title}");
    for (_, line) in &r.lines {
        println!("{line}");
    }
    let failed = r.lines.iter().filter(|(p, _)| !p).count();
    assert!(failed == 0, "{failed} criteria failed");
}

#[test]
fn property_criteria() {
    let mut r = Report { lines: Vec::new() };
    criterion_4(&mut r);
    criterion_5(&mut r);
    criterion_6(&mut r);
    criterion_7(&mut r);
    criterion_9(&mut r);
    finish(r, "acceptance summary: property criteria");
}

#[test]
fn full_scale_criteria() {
    let mut r = Report { lines: Vec::new() };
    let dali = full_run(VariantKind::Dali);
    criterion_1(&mut r, &dali);
    criterion_8(&mut r, &dali);
    let gan = full_run(VariantKind::Gan);
    criterion_2(&mut r, &dali, &gan);
    let dali_f = full_run(VariantKind::DaliF);
    criterion_3(&mut r, &dali_f);
    finish(r, "acceptance summary: full-scale criteria");
}
