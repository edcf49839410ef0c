use std::path::Path;
use std::time::Instant;

use rand::Rng as _;

use super::log::{EpochRecord, Stage, TrainLog};
use super::losses::{discriminator_objective, generator_objective, variety_loss, LossWeights};
use super::{streams, TrainConfig};
use crate::diffcore::{AdamState, Tape, Tensor, Var};
use crate::seqmodels::{
    sample_predictions, Checkpoint, DiscriminatorParams, DiscriminatorVars, GeneratorParams, GeneratorVars,
    ModelConfig,
};
use crate::synthgen::Window;
use crate::{derive_seed, seeded_rng, Error, Result, Rng};

/// Parameters and optimizer moments after a completed epoch.
#[derive(Debug, Clone)]
pub struct GanState {
    /// Number of completed adversarial epochs.
    pub epoch: usize,
    pub generator: GeneratorParams,
    pub discriminator: DiscriminatorParams,
    pub gen_adam: AdamState,
    pub disc_adam: AdamState,
}

#[derive(Debug, Clone)]
pub struct GanRun {
    pub state: GanState,
    pub log: TrainLog,
    /// Epoch and value of the lowest validation variety loss seen.
    pub best: Option<(usize, f64)>,
}

struct BatchLosses {
    total: f64,
    rec: f64,
    past: f64,
    disc: Option<f64>,
}

#[allow(clippy::too_many_arguments)]
fn train_batch(
    state: &mut GanState,
    batch: &[&Window],
    cfg: &ModelConfig,
    tc: &TrainConfig,
    w: &LossWeights,
    use_discriminator: bool,
    noise_rng: &mut Rng,
) -> Result<BatchLosses> {
    let mut tape = Tape::new();
    let gvars = GeneratorVars::bind(&mut tape, &state.generator, true);
    let dvars = use_discriminator.then(|| DiscriminatorVars::bind(&mut tape, &state.discriminator, false));
    let obj = generator_objective(&mut tape, &gvars, dvars.as_ref(), cfg, batch, tc.n_samples, w, noise_rng)?;
    let g_grads = tape.backward(obj.total)?.collect(&gvars.all());

    let mut disc = None;
    if use_discriminator {
        // Sample 0 of every window, detached from the generator.
        let rows: Vec<usize> = (0..batch.len()).map(|b| b * tc.n_samples).collect();
        let fakes: Vec<Tensor> = obj
            .output
            .decoder
            .samples
            .iter()
            .map(|s| {
                let v = tape.value(s.soft);
                let data = rows.iter().flat_map(|&r| v.row_slice(r).to_vec()).collect();
                Tensor::new(vec![rows.len(), v.cols()], data).expect("consistent")
            })
            .collect();
        let mut dtape = Tape::new();
        let dv = DiscriminatorVars::bind(&mut dtape, &state.discriminator, true);
        let fake_vars: Vec<Var> = fakes.into_iter().map(|t| dtape.constant(t)).collect();
        let d_loss = discriminator_objective(&mut dtape, &dv, cfg, batch, &fake_vars)?;
        let d_grads = dtape.backward(d_loss)?.collect(&dv.all());
        state
            .disc_adam
            .update(&mut state.discriminator.tensors_mut(), &d_grads, tc.lr)?;
        disc = Some(dtape.value(d_loss).item());
    }
    state
        .gen_adam
        .update(&mut state.generator.tensors_mut(), &g_grads, tc.lr)?;
    Ok(BatchLosses {
        total: tape.value(obj.total).item(),
        rec: tape.value(obj.rec).item(),
        past: tape.value(obj.past).item(),
        disc,
    })
}

/// Mean best-of-samples variety loss over `windows`, drawn with a fixed seed.
fn validation_variety(params: &GeneratorParams, cfg: &ModelConfig, windows: &[Window], tc: &TrainConfig) -> Result<f64> {
    let mut rng = seeded_rng(derive_seed(tc.seed, streams::VALIDATION));
    let mut total = 0.0;
    for chunk in windows.chunks(32) {
        let feats: Vec<&Tensor> = chunk.iter().map(|w| &w.past_features).collect();
        let sets = sample_predictions(params, cfg, &feats, tc.n_samples, &mut rng)?;
        for (set, win) in sets.iter().zip(chunk) {
            total += variety_loss(set, &win.future_labels)?;
        }
    }
    Ok(total / windows.len() as f64)
}

/// Adversarial training from a pretrained generator. Each batch takes one
/// generator step and, with `use_discriminator`, one discriminator step on the
/// same batch's fakes. Without the discriminator the adversarial term is left
/// out of the generator objective altogether.
///
/// Checkpoints go to `checkpoint_dir` every `checkpoint_every` epochs
/// (`epoch_NNNNN.json`) and whenever the validation variety loss improves
/// (`best.json`). A non-finite value aborts with [`Error::Diverged`] carrying
/// the state after the last completed epoch.
#[allow(clippy::too_many_arguments)]
pub fn train_gan(
    windows: &[Window],
    generator: GeneratorParams,
    cfg: &ModelConfig,
    tc: &TrainConfig,
    w: &LossWeights,
    use_discriminator: bool,
    checkpoint_dir: Option<&Path>,
) -> Result<GanRun> {
    if windows.is_empty() {
        return Err(Error::Invalid("train_gan: empty dataset".into()));
    }
    cfg.validate()?;
    let v = tc.violations();
    if !v.is_empty() {
        return Err(Error::Config(v));
    }
    if let Some(bad) = windows
        .iter()
        .find(|x| x.t_past() != cfg.t_past || x.t_future() != cfg.t_future)
    {
        return Err(Error::Invalid(format!(
            "train_gan: window of {} at t0={} has horizons ({}, {}), model expects ({}, {})",
            bad.video_id,
            bad.t0,
            bad.t_past(),
            bad.t_future(),
            cfg.t_past,
            cfg.t_future
        )));
    }
    let discriminator = DiscriminatorParams::init(cfg, &mut seeded_rng(derive_seed(tc.seed, streams::INIT_DISCRIMINATOR)));
    let mut state = GanState {
        epoch: 0,
        gen_adam: AdamState::new(generator.tensors()),
        disc_adam: AdamState::new(discriminator.tensors()),
        generator,
        discriminator,
    };
    let mut window_rng = seeded_rng(derive_seed(tc.seed, streams::GAN_WINDOWS));
    let mut noise_rng = seeded_rng(derive_seed(tc.seed, streams::GAN_NOISE));
    let validation: Vec<Window> = {
        let mut r = seeded_rng(derive_seed(tc.seed, streams::VALIDATION));
        (0..tc.validation_windows.min(windows.len()))
            .map(|_| windows[r.random_range(0..windows.len())].clone())
            .collect()
    };
    if let Some(dir) = checkpoint_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let save = |state: &GanState, name: &str| -> Result<Option<std::path::PathBuf>> {
        let Some(dir) = checkpoint_dir else {
            return Ok(None);
        };
        let path = dir.join(name);
        Checkpoint {
            model: cfg.clone(),
            generator: state.generator.clone(),
            discriminator: use_discriminator.then(|| state.discriminator.clone()),
        }
        .save(&path)?;
        Ok(Some(path))
    };

    let mut log = TrainLog::default();
    let mut best: Option<(usize, f64)> = None;
    let start = Instant::now();
    for epoch in 0..tc.gan_epochs {
        let last_good = state.clone();
        let diverged = |e: Error, last_good: GanState| match e {
            Error::Diff(source) => Error::Diverged {
                epoch,
                source,
                last_good: Box::new(last_good),
            },
            other => other,
        };
        let picks: Vec<usize> = (0..tc.epoch_size)
            .map(|_| window_rng.random_range(0..windows.len()))
            .collect();
        let (mut total, mut rec, mut past, mut disc) = (0.0, 0.0, 0.0, 0.0);
        let mut n = 0;
        for chunk in picks.chunks(tc.batch_size) {
            let batch: Vec<&Window> = chunk.iter().map(|&i| &windows[i]).collect();
            let l = train_batch(&mut state, &batch, cfg, tc, w, use_discriminator, &mut noise_rng)
                .map_err(|e| diverged(e, last_good.clone()))?;
            total += l.total;
            rec += l.rec;
            past += l.past;
            disc += l.disc.unwrap_or(0.0);
            n += 1;
        }
        state.epoch = epoch + 1;
        let nf = n as f64;

        let mut val = None;
        let mut checkpoint = None;
        if state.epoch.is_multiple_of(tc.validate_every) || state.epoch == tc.gan_epochs {
            let v = validation_variety(&state.generator, cfg, &validation, tc)
                .map_err(|e| diverged(e, last_good.clone()))?;
            val = Some(v);
            if best.is_none_or(|(_, b)| v < b) {
                best = Some((state.epoch, v));
                save(&state, "best.json")?;
            }
        }
        if state.epoch.is_multiple_of(tc.checkpoint_every) {
            checkpoint = save(&state, &format!("epoch_{:05}.json", state.epoch))?;
        }
        log.push(EpochRecord {
            stage: Stage::Gan,
            epoch,
            gen_loss: total / nf,
            disc_loss: use_discriminator.then_some(disc / nf),
            variety_loss: Some(rec / nf),
            past_loss: past / nf,
            val_variety: val,
            seconds: start.elapsed().as_secs_f64(),
            checkpoint,
        });
    }
    Ok(GanRun { state, log, best })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::grad_check_many;
    use crate::synthgen::{generate_dataset, graph, window_dataset, SynthConfig};

    fn tiny() -> (ModelConfig, Vec<Window>) {
        let cfg = ModelConfig {
            n_phases: 3,
            hidden: 4,
            feature_dim: 4,
            noise_dim: 2,
            t_past: 3,
            t_future: 3,
            gumbel_tau: 1.0,
        };
        let g = graph::WorkflowGraph::linear(&[2, 3, 2]);
        let data = generate_dataset(
            &g,
            &SynthConfig {
                n_videos: 4,
                feature_dim: 4,
                ..Default::default()
            },
            11,
        )
        .unwrap();
        let windows = window_dataset(&data.train, 3, 3, 1).unwrap();
        (cfg, windows)
    }

    fn small_tc() -> TrainConfig {
        TrainConfig {
            n_samples: 3,
            gan_epochs: 3,
            epoch_size: 8,
            batch_size: 4,
            lr: 1e-3,
            validate_every: 2,
            validation_windows: 4,
            ..Default::default()
        }
    }

    #[test]
    fn objective_gradients_match_finite_differences() {
        let (cfg, windows) = tiny();
        let mut rng = seeded_rng(2);
        let gp = GeneratorParams::init(&cfg, &mut rng);
        let dp = DiscriminatorParams::init(&cfg, &mut rng);
        let batch: Vec<&Window> = windows.iter().take(2).collect();
        let inputs: Vec<Tensor> = gp
            .tensors()
            .into_iter()
            .chain(dp.tensors())
            .cloned()
            .collect();
        let w = LossWeights::default();
        let err = grad_check_many(
            |tape, vars| {
                let g = GeneratorVars::from_vars(&vars[..8], cfg.hidden);
                let d = DiscriminatorVars::from_vars(&vars[8..], cfg.hidden);
                let mut rng = seeded_rng(9);
                let obj = generator_objective(tape, &g, Some(&d), &cfg, &batch, 2, &w, &mut rng)
                    .map_err(|e| match e {
                        Error::Diff(d) => d,
                        other => panic!("{other}"),
                    })?;
                Ok(obj.total)
            },
            &inputs,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-3, "max relative error {err}");
    }

    #[test]
    fn objective_without_discriminator_is_weighted_sum() {
        let (cfg, windows) = tiny();
        let gp = GeneratorParams::init(&cfg, &mut seeded_rng(4));
        let batch: Vec<&Window> = windows.iter().take(3).collect();
        let w = LossWeights::default();
        let mut tape = Tape::new();
        let g = GeneratorVars::bind(&mut tape, &gp, true);
        let obj = generator_objective(&mut tape, &g, None, &cfg, &batch, 3, &w, &mut seeded_rng(1)).unwrap();
        let rec = tape.value(obj.rec).item();
        let past = tape.value(obj.past).item();
        assert!(obj.adv.is_none());
        assert_eq!(
            tape.value(obj.total).item().to_bits(),
            (w.w_rec * rec + w.w_past * past).to_bits()
        );
    }

    #[test]
    fn runs_are_deterministic() {
        let (cfg, windows) = tiny();
        let tc = small_tc();
        let gp = GeneratorParams::init(&cfg, &mut seeded_rng(4));
        let a = train_gan(&windows, gp.clone(), &cfg, &tc, &LossWeights::default(), true, None).unwrap();
        let b = train_gan(&windows, gp, &cfg, &tc, &LossWeights::default(), true, None).unwrap();
        assert_eq!(a.log.records.len(), 3);
        let la: Vec<_> = a.log.records.iter().map(EpochRecord::losses).collect();
        let lb: Vec<_> = b.log.records.iter().map(EpochRecord::losses).collect();
        assert_eq!(la, lb);
        assert_eq!(a.state.generator, b.state.generator);
        assert!(a.log.records.iter().all(|r| r.disc_loss.is_some()));
    }

    #[test]
    fn zero_learning_rate_changes_nothing() {
        let (cfg, windows) = tiny();
        let gp = GeneratorParams::init(&cfg, &mut seeded_rng(4));
        let mut state = GanState {
            epoch: 0,
            gen_adam: AdamState::new(gp.tensors()),
            discriminator: DiscriminatorParams::init(&cfg, &mut seeded_rng(5)),
            disc_adam: AdamState::new(DiscriminatorParams::zeros(&cfg).tensors()),
            generator: gp.clone(),
        };
        let before = state.clone();
        let tc = TrainConfig { lr: 0.0, n_samples: 2, ..small_tc() };
        let batch: Vec<&Window> = windows.iter().take(2).collect();
        train_batch(&mut state, &batch, &cfg, &tc, &LossWeights::default(), true, &mut seeded_rng(0)).unwrap();
        assert_eq!(state.generator, before.generator);
        assert_eq!(state.discriminator, before.discriminator);
    }

    #[test]
    fn divergence_keeps_last_good_state() {
        let (cfg, windows) = tiny();
        let gp = GeneratorParams::init(&cfg, &mut seeded_rng(4));
        let tc = TrainConfig {
            gan_epochs: 5,
            ..small_tc()
        };
        let w = LossWeights {
            w_rec: f64::MAX,
            ..Default::default()
        };
        match train_gan(&windows, gp.clone(), &cfg, &tc, &w, true, None) {
            Err(Error::Diverged { epoch, last_good, .. }) => {
                assert_eq!((epoch, last_good.epoch), (0, 0));
                assert_eq!(last_good.generator, gp);
            }
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn checkpoints_follow_schedule() {
        let (cfg, windows) = tiny();
        let dir = tempfile::tempdir().unwrap();
        let tc = TrainConfig {
            gan_epochs: 4,
            checkpoint_every: 2,
            ..small_tc()
        };
        let gp = GeneratorParams::init(&cfg, &mut seeded_rng(4));
        let run = train_gan(&windows, gp, &cfg, &tc, &LossWeights::default(), false, Some(dir.path())).unwrap();
        assert!(dir.path().join("epoch_00002.json").exists());
        assert!(dir.path().join("epoch_00004.json").exists());
        assert!(dir.path().join("best.json").exists());
        let ck = Checkpoint::load(&dir.path().join("epoch_00004.json")).unwrap();
        assert_eq!(ck.generator, run.state.generator);
        assert!(ck.discriminator.is_none());
        assert!(run.log.records.iter().all(|r| r.disc_loss.is_none()));
    }
}
