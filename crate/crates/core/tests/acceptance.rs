//! Acceptance criteria 1-9. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any criterion fails.

use std::collections::HashMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use phasecast::baselines::{hmm_baum_welch, BaumWelchOptions};
use phasecast::diffcore::{grad_check_many, Tape, Tensor, Var};
use phasecast::harness::{
    evaluation_windows, load_dataset, model_config, pretrain_windows, sweep_horizons, train_config, ExperimentConfig,
    Predictor, CONSTANT_MODEL, GAN_MODEL, HMM_MODEL, MODEL_COLUMNS,
};
use phasecast::metrics::{levenshtein, paired_t_test, transition_hit, HitMode};
use phasecast::seqmodels::{
    gumbel_softmax, DiscriminatorParams, DiscriminatorVars, GeneratorParams, GeneratorVars, ModelConfig,
};
use phasecast::synthgen::{generate_dataset, window_dataset, SynthConfig, Window, WorkflowGraph};
use phasecast::training::{discriminator_objective, generator_objective, past_accuracy, pretrain_encoder, LossWeights, TrainConfig};
use phasecast::{seeded_rng, Error, Rng};
use rand::Rng as _;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn diff(e: Error) -> phasecast::DiffError {
    match e {
        Error::Diff(d) => d,
        other => panic!("{other}"),
    }
}

fn tiny_model() -> ModelConfig {
    ModelConfig {
        n_phases: 3,
        hidden: 4,
        feature_dim: 4,
        noise_dim: 2,
        t_past: 3,
        t_future: 3,
        gumbel_tau: 1.0,
    }
}

fn tiny_windows() -> Vec<Window> {
    let g = WorkflowGraph::linear(&[2, 3, 2]);
    let cfg = SynthConfig {
        n_videos: 4,
        feature_dim: 4,
        ..Default::default()
    };
    let data = generate_dataset(&g, &cfg, 5).unwrap();
    window_dataset(&data.train, 3, 3, 1).unwrap()
}

/// Generator and discriminator gradients of their objectives against central
/// differences at fixed noise.
fn criterion_1() -> Outcome {
    let cfg = tiny_model();
    let windows = tiny_windows();
    let batch: Vec<&Window> = windows.iter().take(3).collect();
    let mut rng = seeded_rng(17);
    let gp = GeneratorParams::init(&cfg, &mut rng);
    let dp = DiscriminatorParams::init(&cfg, &mut rng);
    let w = LossWeights::default();
    let n_g = gp.tensors().len();
    let inputs: Vec<Tensor> = gp.tensors().into_iter().chain(dp.tensors()).cloned().collect();
    let gen_err = grad_check_many(
        |tape, vars| {
            let g = GeneratorVars::from_vars(&vars[..n_g], cfg.hidden);
            let d = DiscriminatorVars::from_vars(&vars[n_g..], cfg.hidden);
            let obj = generator_objective(tape, &g, Some(&d), &cfg, &batch, 2, &w, &mut seeded_rng(3)).map_err(diff)?;
            Ok(obj.total)
        },
        &inputs,
        1e-5,
    )
    .map_err(|e| e.to_string())?;

    let fakes: Vec<Tensor> = (0..cfg.t_future)
        .map(|t| {
            let rows: Vec<Vec<f64>> = (0..batch.len())
                .map(|b| {
                    let mut r = vec![0.1; cfg.n_phases];
                    r[(b + t) % cfg.n_phases] = 0.8;
                    r
                })
                .collect();
            Tensor::from_rows(&rows).unwrap()
        })
        .collect();
    let disc_inputs: Vec<Tensor> = dp.tensors().into_iter().cloned().collect();
    let disc_err = grad_check_many(
        |tape, vars| {
            let d = DiscriminatorVars::from_vars(vars, cfg.hidden);
            let f: Vec<Var> = fakes.iter().map(|t| tape.constant(t.clone())).collect();
            discriminator_objective(tape, &d, &cfg, &batch, &f).map_err(diff)
        },
        &disc_inputs,
        1e-5,
    )
    .map_err(|e| e.to_string())?;
    check(
        gen_err < 1e-3 && disc_err < 1e-3,
        format!("max relative error: generator objective {gen_err:.2e}, discriminator objective {disc_err:.2e} (tol 1e-3)"),
    )
}

fn criterion_2() -> Outcome {
    const N: usize = 10_000;
    let mut rng = seeded_rng(2);
    let k = 5;
    let mut logits = Tensor::zeros(N, k);
    for v in logits.data_mut() {
        *v = rng.random_range(-3.0..3.0);
    }
    let mut tape = Tape::new();
    let l = tape.constant(logits);
    let s = gumbel_softmax(&mut tape, l, 0.7, &mut rng).map_err(|e| e.to_string())?;
    let soft = tape.value(s.soft).clone();
    let mismatched = (0..N)
        .filter(|&r| {
            let row = soft.row_slice(r);
            let best = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            row[s.hard[r]] != best
        })
        .count();

    let m = 1000;
    let mut cold = Tensor::zeros(m, k);
    for v in cold.data_mut() {
        *v = rng.random_range(-3.0..3.0);
    }
    let c = tape.constant(cold);
    let sc = gumbel_softmax(&mut tape, c, 1e-4, &mut rng).map_err(|e| e.to_string())?;
    let cv = tape.value(sc.soft);
    let worst = (0..m)
        .map(|r| {
            (0..k)
                .map(|j| (cv.get(r, j) - if j == sc.hard[r] { 1.0 } else { 0.0 }).abs())
                .fold(0.0, f64::max)
        })
        .fold(0.0, f64::max);

    let u = tape.constant(Tensor::zeros(N, k));
    let su = gumbel_softmax(&mut tape, u, 1.0, &mut rng).map_err(|e| e.to_string())?;
    let mut counts = vec![0usize; k];
    su.hard.iter().for_each(|&h| counts[h] += 1);
    let p = 1.0 / k as f64;
    let sigma = (N as f64 * p * (1.0 - p)).sqrt();
    let worst_z = counts
        .iter()
        .map(|&c| (c as f64 - N as f64 * p).abs() / sigma)
        .fold(0.0, f64::max);
    check(
        mismatched == 0 && worst < 1e-6 && worst_z < 3.0,
        format!(
            "hard != argmax in {mismatched}/{N}; tau=1e-4 max distance to one-hot {worst:.1e} over {m} draws; uniform counts {counts:?}, max |z| {worst_z:.2}"
        ),
    )
}

/// Discrete HMM with soft-evidence observations, simulated independently of
/// the library.
fn simulate_hmm(a: &[[f64; 2]; 2], hit: f64, n_seq: usize, len: usize, rng: &mut Rng) -> Vec<Vec<Vec<f64>>> {
    let evidence = |o: usize| -> Vec<f64> { (0..2).map(|k| if k == o { hit } else { 1.0 - hit }).collect() };
    (0..n_seq)
        .map(|_| {
            let mut s = usize::from(rng.random_bool(0.5));
            (0..len)
                .map(|t| {
                    if t > 0 {
                        s = if rng.random_bool(a[s][0]) { 0 } else { 1 };
                    }
                    let o = if rng.random_bool(hit) { s } else { 1 - s };
                    evidence(o)
                })
                .collect()
        })
        .collect()
}

fn criterion_3() -> Outcome {
    let mut rng = seeded_rng(3);
    let mut worst_drop = f64::NEG_INFINITY;
    for run in 0..50 {
        let n = rng.random_range(2..5);
        let seqs: Vec<Vec<Vec<f64>>> = (0..rng.random_range(2..6))
            .map(|_| {
                (0..rng.random_range(5..40))
                    .map(|_| {
                        let mut v: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..1.0)).collect();
                        let s: f64 = v.iter().sum();
                        v.iter_mut().for_each(|x| *x /= s);
                        v
                    })
                    .collect()
            })
            .collect();
        let fit = hmm_baum_welch(
            &seqs,
            n,
            &BaumWelchOptions {
                iters: 25,
                seed: run,
                learn_confusion: run % 2 == 1,
                init: None,
            },
        )
        .map_err(|e| e.to_string())?;
        for w in fit.log_likelihoods.windows(2) {
            worst_drop = worst_drop.max(w[0] - w[1]);
        }
    }
    let a = [[0.9, 0.1], [0.2, 0.8]];
    let obs = simulate_hmm(&a, 0.8, 200, 100, &mut rng);
    let fit = hmm_baum_welch(&obs, 2, &BaumWelchOptions { iters: 100, ..Default::default() }).map_err(|e| e.to_string())?;
    let t = &fit.params.transition;
    let err = |perm: [usize; 2]| {
        (0..2)
            .flat_map(|i| (0..2).map(move |j| (i, j)))
            .map(|(i, j)| (t[perm[i]][perm[j]] - a[i][j]).abs())
            .fold(0.0, f64::max)
    };
    let rec = err([0, 1]).min(err([1, 0]));
    check(
        worst_drop <= 1e-8 && rec < 0.05,
        format!("largest log-likelihood decrease {worst_drop:.2e} over 50 runs (slack 1e-8); transition recovery error {rec:.4} (tol 0.05), fitted {t:.3?}"),
    )
}

fn oracle_ld(a: &[u8], b: &[u8], memo: &mut HashMap<(usize, usize), usize>) -> usize {
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    if let Some(&v) = memo.get(&(a.len(), b.len())) {
        return v;
    }
    let sub = oracle_ld(&a[1..], &b[1..], memo) + usize::from(a[0] != b[0]);
    let del = oracle_ld(&a[1..], b, memo) + 1;
    let ins = oracle_ld(a, &b[1..], memo) + 1;
    let v = sub.min(del).min(ins);
    memo.insert((a.len(), b.len()), v);
    v
}

fn all_sequences(max_len: usize, alphabet: u8) -> Vec<Vec<u8>> {
    let mut out = vec![vec![]];
    let mut frontier = vec![vec![]];
    for _ in 0..max_len {
        frontier = frontier
            .iter()
            .flat_map(|s: &Vec<u8>| {
                (0..alphabet).map(move |c| {
                    let mut n = s.clone();
                    n.push(c);
                    n
                })
            })
            .collect();
        out.extend(frontier.iter().cloned());
    }
    out
}

fn criterion_4() -> Outcome {
    let seqs = all_sequences(6, 3);
    let as_usize: Vec<Vec<usize>> = seqs.iter().map(|s| s.iter().map(|&c| c as usize).collect()).collect();
    let mut mismatches = 0usize;
    let mut pairs = 0usize;
    for (i, a) in seqs.iter().enumerate() {
        for (j, b) in seqs.iter().enumerate() {
            let mut memo = HashMap::new();
            if oracle_ld(a, b, &mut memo) != levenshtein(&as_usize[i], &as_usize[j]) {
                mismatches += 1;
            }
            pairs += 1;
        }
    }

    let mut rng = seeded_rng(4);
    let random_seq = |rng: &mut Rng| -> Vec<usize> { (0..rng.random_range(0..20)).map(|_| rng.random_range(0..4)).collect() };
    let mut axiom_failures = 0;
    for _ in 0..1000 {
        let (a, b, c) = (random_seq(&mut rng), random_seq(&mut rng), random_seq(&mut rng));
        let ab = levenshtein(&a, &b);
        let ok = levenshtein(&a, &a) == 0
            && (ab == 0) == (a == b)
            && ab == levenshtein(&b, &a)
            && levenshtein(&a, &c) <= ab + levenshtein(&b, &c);
        axiom_failures += usize::from(!ok);
    }

    // Differences 1..5: mean 3, sd sqrt(2.5), t = 3 / sqrt(0.5). For four
    // degrees of freedom, P(|T| > t) = 1 - sin(th) (1 + cos^2(th) / 2) with
    // th = atan(t / 2).
    let a = [2.0, 4.0, 6.0, 8.0, 10.0];
    let b = [1.0, 2.0, 3.0, 4.0, 5.0];
    let t_ref = 3.0 / 0.5f64.sqrt();
    let th = (t_ref / 2.0).atan();
    let p_ref = 1.0 - th.sin() * (1.0 + th.cos().powi(2) / 2.0);
    let r = paired_t_test(&a, &b).map_err(|e| e.to_string())?;
    let t_ok = (r.t - t_ref).abs() < 1e-3 && (r.p - p_ref).abs() < 1e-3 && r.df == 4;
    check(
        mismatches == 0 && axiom_failures == 0 && t_ok,
        format!(
            "levenshtein vs recursion: {mismatches} mismatches over {pairs} pairs; axiom failures {axiom_failures}/1000; t-test t={:.4} (ref {t_ref:.4}), p={:.5} (ref {p_ref:.5}), df={}",
            r.t, r.p, r.df
        ),
    )
}

fn benchmark_config(seed: u64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.seed = seed;
    cfg.data.graph = "mgh12".into();
    cfg.data.n_videos = 200;
    cfg.data.train_fraction = 0.75;
    cfg.train.gan_epochs = 300;
    cfg.train.lr = 1e-3;
    cfg.train.checkpoint_every = 1000;
    cfg.eval.n_plots = 0;
    cfg
}

const SEEDS: [u64; 3] = [1, 2, 3];

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Criteria 5 and 6 share one horizon sweep per seed; the (15, 15) row holds
/// the full four-way report used for the accuracy ordering.
fn benchmark_sweeps() -> Result<Vec<Vec<phasecast::harness::SweepRow>>, String> {
    SEEDS
        .iter()
        .map(|&s| {
            let start = Instant::now();
            let rows = sweep_horizons(&benchmark_config(s), None).map_err(|e| e.to_string())?;
            println!("  seed {s}: sweep finished in {:.0} s", start.elapsed().as_secs_f64());
            Ok(rows)
        })
        .collect()
}

/// The constant model can only hit a transition into the phase it already
/// predicts; checked on every test transition of one seed.
fn constant_structural_hits(seed: u64) -> Result<(usize, usize), String> {
    let mut cfg = benchmark_config(seed);
    cfg.train.pretrain_epochs = 2;
    let data = load_dataset(&cfg).map_err(|e| e.to_string())?;
    let model = model_config(&cfg, &data);
    let pre = pretrain_windows(&data, &model).map_err(|e| e.to_string())?;
    let (encoder, _) = pretrain_encoder(&pre, &model, &train_config(&cfg)).map_err(|e| e.to_string())?;
    let eval = evaluation_windows(&data, &model).map_err(|e| e.to_string())?;
    let sets = Predictor::Constant { encoder: &encoder }
        .predict(&eval.transitions, &model, 0)
        .map_err(|e| e.to_string())?;
    let (mut other, mut other_hits) = (0, 0);
    for (w, s) in eval.transitions.iter().zip(&sets) {
        let to = w.future_labels[0];
        let current = s.samples[0][0];
        if to != current {
            other += 1;
            other_hits += usize::from(transition_hit(s, &w.future_labels, to, cfg.eval.delta, HitMode::AnySample));
        }
    }
    Ok((other, other_hits))
}

fn criterion_5(sweeps: &[Vec<phasecast::harness::SweepRow>]) -> Outcome {
    let acc = |model: &str| -> Result<Vec<f64>, String> {
        sweeps
            .iter()
            .map(|rows| {
                let row = rows
                    .iter()
                    .find(|r| (r.t_past, r.t_future) == (15, 15))
                    .ok_or("no (15, 15) row")?;
                let rep = row.report.as_ref().ok_or("(15, 15) row invalid")?;
                rep.model(model)
                    .and_then(|m| m.overall.accuracy())
                    .ok_or_else(|| format!("{model} missing"))
            })
            .collect()
    };
    let (gan, constant, hmm) = (mean(&acc(GAN_MODEL)?), mean(&acc(CONSTANT_MODEL)?), mean(&acc(HMM_MODEL)?));
    let (other, other_hits) = constant_structural_hits(SEEDS[0])?;
    check(
        gan > constant && gan > hmm && other_hits == 0,
        format!(
            "mean overall accuracy over seeds {SEEDS:?}: SUPR-GAN {gan:.4}, constant {constant:.4}, HMM {hmm:.4}; constant hits on {other} transitions away from its predicted phase: {other_hits}"
        ),
    )
}

fn criterion_6(sweeps: &[Vec<phasecast::harness::SweepRow>]) -> Outcome {
    let nld = |tp: usize, tf: usize| -> Result<f64, String> {
        let v: Vec<f64> = sweeps
            .iter()
            .map(|rows| {
                rows.iter()
                    .find(|r| (r.t_past, r.t_future) == (tp, tf))
                    .and_then(|r| r.normalized_ld(GAN_MODEL))
                    .ok_or_else(|| format!("({tp}, {tf}) row missing or invalid"))
            })
            .collect::<Result<_, _>>()?;
        Ok(mean(&v))
    };
    let (a, b, c, d) = (nld(15, 10)?, nld(15, 45)?, nld(15, 15)?, nld(5, 15)?);
    check(
        b > a && d > c,
        format!("SUPR-GAN normalized LD: (15,45) {b:.3} vs (15,10) {a:.3}; (5,15) {d:.3} vs (15,15) {c:.3}"),
    )
}

const TINY_TOML: &str = r#"
seed = 7

[data]
n_videos = 12

[train]
pretrain_epochs = 3
gan_epochs = 6
epoch_size = 16
lr = 1e-3
checkpoint_every = 3
validate_every = 3
validation_windows = 8

[eval]
hmm_iters = 5
n_plots = 2
"#;

fn full_run(dir: &Path) -> Result<(), String> {
    let cfg_path = dir.join("tiny.toml");
    std::fs::write(&cfg_path, TINY_TOML).map_err(|e| e.to_string())?;
    let out = Command::new(env!("CARGO_BIN_EXE_phasecast"))
        .arg("--config")
        .arg(&cfg_path)
        .arg("--out")
        .arg(dir.join("run"))
        .arg("full-run")
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(String::from_utf8_lossy(&out.stderr).into_owned())
    }
}

fn criterion_7(run_dir: &Path) -> Outcome {
    let cfg = tiny_model();
    let windows = tiny_windows();
    let batch: Vec<&Window> = windows.iter().take(4).collect();
    let gp = GeneratorParams::init(&cfg, &mut seeded_rng(70));
    let w = LossWeights {
        w_dis: 0.6,
        w_rec: 0.35,
        w_past: 0.05,
    };
    let mut tape = Tape::new();
    let g = GeneratorVars::bind(&mut tape, &gp, true);
    let obj = generator_objective(&mut tape, &g, None, &cfg, &batch, 4, &w, &mut seeded_rng(71)).map_err(|e| e.to_string())?;
    let expected = w.w_rec * tape.value(obj.rec).item() + w.w_past * tape.value(obj.past).item();
    let bitwise = tape.value(obj.total).item().to_bits() == expected.to_bits() && obj.adv.is_none();

    let csv = std::fs::read_to_string(run_dir.join("run/metrics.csv")).map_err(|e| e.to_string())?;
    let header = csv.lines().next().unwrap_or_default().to_string();
    let want = format!("row,n,{}", MODEL_COLUMNS.join(","));
    check(
        bitwise && header == want,
        format!("objective without discriminator bit-identical to w_rec*L_rec + w_past*L_past: {bitwise}; report header '{header}'"),
    )
}

fn criterion_8() -> Outcome {
    let graph = WorkflowGraph::builtin("mgh12").ok_or("mgh12 missing")?;
    let model = |data: &phasecast::synthgen::Dataset| ModelConfig {
        n_phases: data.n_phases(),
        feature_dim: data.feature_dim(),
        ..ModelConfig::default()
    };
    let tc = TrainConfig {
        pretrain_epochs: 20,
        seed: 8,
        ..TrainConfig::default()
    };
    let accuracy = |sigma: f64| -> Result<(f64, f64), String> {
        let cfg = SynthConfig {
            noise_sigma: sigma,
            ..SynthConfig::default()
        };
        let data = generate_dataset(&graph, &cfg, 80).map_err(|e| e.to_string())?;
        let m = model(&data);
        let train = window_dataset(&data.train, m.t_past, m.t_future, m.t_past).map_err(|e| e.to_string())?;
        let test = window_dataset(&data.test, m.t_past, m.t_future, m.t_past).map_err(|e| e.to_string())?;
        let (p, _) = pretrain_encoder(&train, &m, &tc).map_err(|e| e.to_string())?;
        let acc = past_accuracy(&p, &test).map_err(|e| e.to_string())?;
        let mut counts = vec![0usize; m.n_phases];
        test.iter().flat_map(|w| &w.past_labels).for_each(|&l| counts[l] += 1);
        let total: usize = counts.iter().sum();
        let chance = (*counts.iter().max().unwrap() as f64 / total as f64).max(1.0 / m.n_phases as f64);
        Ok((acc, chance))
    };
    let (clean, _) = accuracy(0.0)?;
    let (noisy, chance) = accuracy(0.3)?;
    check(
        clean > 0.95 && noisy > chance && noisy < clean,
        format!("held-out past accuracy after 20 epochs: noise-free {clean:.4} (> 0.95); sigma 0.3 {noisy:.4}, chance {chance:.4}"),
    )
}

fn criterion_9(first: &Path) -> Outcome {
    let second = tempfile::tempdir().map_err(|e| e.to_string())?;
    full_run(second.path())?;
    let read = |d: &Path| std::fs::read(d.join("run/metrics.csv")).map_err(|e| e.to_string());
    let (a, b) = (read(first)?, read(second.path())?);
    check(
        a == b && !a.is_empty(),
        format!("two full runs with seed 7: metrics.csv {} bytes, identical: {}", a.len(), a == b),
    )
}

fn run(n: usize, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        Err(p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panic".into()))
    });
    let secs = start.elapsed().as_secs_f64();
    match outcome {
        Ok(d) => {
            println!("PASS criterion {n}: {d} [{secs:.1} s]");
            true
        }
        Err(d) => {
            println!("FAIL criterion {n}: {d} [{secs:.1} s]");
            false
        }
    }
}

fn main() {
    // `cargo test -- --list` and filters from other targets should not start the suite.
    let args: Vec<String> = std::env::args().collect();
    if args.iter().any(|a| a == "--list") {
        return;
    }
    let run_dir = tempfile::tempdir().expect("tempdir");
    let mut ok = vec![
        run(1, criterion_1),
        run(2, criterion_2),
        run(3, criterion_3),
        run(4, criterion_4),
    ];
    let run_ok = full_run(run_dir.path());
    ok.push(run(7, || {
        run_ok.clone()?;
        criterion_7(run_dir.path())
    }));
    ok.push(run(8, criterion_8));
    ok.push(run(9, || {
        run_ok.clone()?;
        criterion_9(run_dir.path())
    }));
    let start = Instant::now();
    let sweeps = benchmark_sweeps();
    println!("  benchmark sweeps: {:.0} s", start.elapsed().as_secs_f64());
    match sweeps {
        Ok(s) => {
            ok.push(run(5, || criterion_5(&s)));
            ok.push(run(6, || criterion_6(&s)));
        }
        Err(e) => {
            ok.push(run(5, || Err(e.clone())));
            ok.push(run(6, || Err(e.clone())));
        }
    }
    let passed = ok.iter().filter(|&&b| b).count();
    println!("acceptance: {passed}/{} criteria passed", ok.len());
    if passed != ok.len() {
        std::process::exit(1);
    }
}
