use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use log::{info, warn};
use mocap_core::augment::augment_dataset;
use mocap_core::classifier::{
    evaluate, prepare_task, train_classifier as fit_classifier, Classifier, ClassifierArch, ClassifierTrainConfig, LabeledSet, TaskSpec,
};
use mocap_core::dataset::{
    apply_zscore, fit_normalizer, load_trials, read_sequence_csv, resample_centered, resample_uniform, trim_to_motion,
    write_sequence_csv, MotionSequence, SequenceArchive, Strategy, TrimConfig, Weight, SEQ_LEN,
};
use mocap_core::gan::{
    generate as generate_sequence, noise_vector, train_gan as fit_gan, ConditionLabel, CriticHead, CriticSpec, GanData,
    GanKind, GanReport, GanTrainSpec, Generator, GeneratorSpec, COND_CLASSES,
};
use mocap_core::numerics::ModelState;
use mocap_core::render::{build_geometry, export_geometry, ExportFormat, RenderStyle, SkeletonTopology};
use serde::Serialize;

use crate::config::{self, overlay, required, Sampling};
use crate::{
    AugmentArgs, EvalClassifierArgs, GenerateArgs, IngestArgs, RenderArgs, StatsArgs, TrainClassifierArgs, TrainGanArgs,
    UsageError,
};

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n").with_context(|| format!("writing {}", path.display()))
}

fn prepare_out(out: &Path, cfg: &impl Serialize) -> Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    write_json(&out.join("config.json"), cfg)
}

fn load_archive(path: &Path) -> Result<SequenceArchive> {
    SequenceArchive::load(path).with_context(|| format!("loading archive {}", path.display()))
}

fn genuine(archive: SequenceArchive, path: &Path) -> Result<Vec<MotionSequence>> {
    if archive.sequences.iter().any(|s| s.normalized) {
        bail!(UsageError(format!("{} holds normalized sequences; pass the world-space archive", path.display())));
    }
    Ok(archive.sequences)
}

pub fn ingest(args: IngestArgs) -> Result<()> {
    let mut cfg: config::IngestConfig = config::load(args.config.as_deref())?;
    overlay!(cfg, args; input, out, speed_threshold, hold_frames, sampling);
    let (input, out) = (required(&cfg.input, "--input")?, required(&cfg.out, "--out")?);
    prepare_out(out, &cfg)?;

    let report = load_trials(input).with_context(|| format!("reading trials from {}", input.display()))?;
    info!(
        "{} trials loaded, {} skipped for missing C7, {} unreadable",
        report.trials.len(),
        report.skipped_missing_c7.len(),
        report.failures.len()
    );
    for (path, err) in &report.failures {
        warn!("{}: {err}", path.display());
    }
    let trim = TrimConfig { speed_threshold: cfg.speed_threshold, hold_frames: cfg.hold_frames };
    let mut sequences = Vec::with_capacity(report.trials.len());
    for trial in &report.trials {
        let seq = trim_to_motion(trial, trim).and_then(|t| match cfg.sampling {
            Sampling::Centered => resample_centered(&t),
            Sampling::Uniform => resample_uniform(&t),
        });
        match seq {
            Ok(s) => sequences.push(s),
            Err(e) => warn!("trial {}: {e}", trial.id),
        }
    }
    if sequences.is_empty() {
        bail!("no usable trials in {}", input.display());
    }
    let path = out.join("sequences.json");
    SequenceArchive::new(sequences, None).save(&path)?;
    info!("wrote {}", path.display());
    Ok(())
}

pub fn augment(args: AugmentArgs) -> Result<()> {
    let mut cfg: config::AugmentConfig = config::load(args.config.as_deref())?;
    overlay!(cfg, args; input, out);
    let a = &mut cfg.augment;
    overlay!(a, args; factor, seed);
    if let Some(v) = args.translate {
        a.translate_range = v;
    }
    a.scale_range = (args.scale_min.unwrap_or(a.scale_range.0), args.scale_max.unwrap_or(a.scale_range.1));
    a.rotate_range = (args.rotate_min.unwrap_or(a.rotate_range.0), args.rotate_max.unwrap_or(a.rotate_range.1));
    let (input, out) = (required(&cfg.input, "--input")?, required(&cfg.out, "--out")?);
    cfg.augment.validate().map_err(|e| UsageError(e.to_string()))?;
    prepare_out(out, &cfg)?;

    let seqs = genuine(load_archive(input)?, input)?;
    let augmented = augment_dataset(&seqs, &cfg.augment)?;
    info!("{} sequences → {}", seqs.len(), augmented.len());
    SequenceArchive::new(augmented, None).save(&out.join("sequences.json"))?;
    Ok(())
}

pub fn train_classifier(args: TrainClassifierArgs) -> Result<()> {
    let mut cfg: config::TrainClassifierConfig = config::load(args.config.as_deref())?;
    overlay!(cfg, args; input, out, task, epochs, batch, seed, augment_factor);
    if let Some(lr) = args.lr {
        cfg.learning_rate = lr;
    }
    if args.validation_size.is_some() {
        cfg.validation_size = args.validation_size;
    }
    if let Some(p) = &args.spec {
        let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        cfg.net = serde_json::from_str(&text).map_err(|e| UsageError(format!("network spec {}: {e}", p.display())))?;
    }
    let (input, out) = (required(&cfg.input, "--input")?, required(&cfg.out, "--out")?);
    prepare_out(out, &cfg)?;

    let seqs = genuine(load_archive(input)?, input)?;
    let mut task = TaskSpec::new(cfg.task);
    task.augment.factor = cfg.augment_factor;
    if let Some(v) = cfg.validation_size {
        task.validation_size = v;
    }
    let prepared = prepare_task(&seqs, &task, cfg.seed)?;
    info!(
        "{:?}: {} genuine training sequences ({} after augmentation), {} validation",
        cfg.task,
        prepared.genuine_train,
        prepared.train.len(),
        prepared.val.len()
    );
    let arch = ClassifierArch { spec: cfg.net.clone(), classes: cfg.task.classes(), task: Some(cfg.task) };
    let mut model = Classifier::build(arch, cfg.seed)?;
    info!("{} trainable parameters", model.param_count());
    let train_cfg = ClassifierTrainConfig {
        epochs: cfg.epochs,
        batch: cfg.batch,
        learning_rate: cfg.learning_rate,
        seed: cfg.seed,
        ..Default::default()
    };
    let mut optimizer = train_cfg.optimizer();
    let report = fit_classifier(&mut model, &prepared.train, &prepared.val, &train_cfg, &mut optimizer)?;
    if let Some(last) = report.epochs.last() {
        info!("final validation accuracy {:.3} (best at epoch {})", last.val_accuracy, report.best_epoch);
    }
    model.to_state(Some(optimizer), Some(&prepared.norm_stats)).save(&out.join("model.ckpt"))?;
    write_json(&out.join("report.json"), &report)?;
    fs::write(out.join("learning_curve.csv"), report.to_csv())?;
    Ok(())
}

pub fn eval_classifier(args: EvalClassifierArgs) -> Result<()> {
    let mut cfg: config::EvalClassifierConfig = config::load(args.config.as_deref())?;
    overlay!(cfg, args; model, input, out);
    let (model_path, input) = (required(&cfg.model, "--model")?, required(&cfg.input, "--input")?);

    let state = ModelState::load(model_path).with_context(|| format!("loading {}", model_path.display()))?;
    let (model, norm) = Classifier::from_state(&state)?;
    let task = model.arch().task.context("checkpoint does not record its labelling task")?;
    let norm = norm.context("checkpoint carries no normalization statistics")?;
    let seqs = genuine(load_archive(input)?, input)?;
    let mut kept = Vec::new();
    let mut labels = Vec::new();
    for s in &seqs {
        let meta = s.labels.as_ref().context("archive sequence without labels")?;
        if let Some(c) = task.label_of(meta) {
            kept.push(apply_zscore(s, &norm)?);
            labels.push(c);
        }
    }
    if kept.is_empty() {
        bail!("no sequences in {} carry a {:?} label", input.display(), task);
    }
    let eval = evaluate(&model, &LabeledSet::from_sequences(&kept, labels)?)?;
    println!("{:?}: {} sequences, accuracy {:.4}, loss {:.4}", task, kept.len(), eval.accuracy, eval.loss);
    for (name, row) in model.arch().classes.iter().zip(&eval.confusion.counts) {
        println!("  {name:>10} {row:?}");
    }
    if let Some(out) = &cfg.out {
        prepare_out(out, &cfg)?;
        write_json(&out.join("evaluation.json"), &eval)?;
    }
    Ok(())
}

fn gan_specs(cfg: &config::TrainGanConfig) -> (GeneratorSpec, CriticSpec) {
    let cond = if cfg.kind.is_conditional() { COND_CLASSES } else { 0 };
    let gen = cfg.generator.clone().unwrap_or(GeneratorSpec { cond_dim: cond, ..Default::default() });
    let critic = cfg.critic.clone().unwrap_or_else(|| match cfg.kind {
        GanKind::Dcgan => CriticSpec { head: CriticHead::Sigmoid, batchnorm: true, ..Default::default() },
        _ => CriticSpec { cond_dim: cond, ..Default::default() },
    });
    (gen, critic)
}

fn losses_csv(report: &GanReport) -> String {
    let mut out = String::from("generator_step,epoch,critic_loss,gradient_penalty,wasserstein,generator_loss\n");
    for s in &report.steps {
        let w = s.wasserstein.map(|w| w.to_string()).unwrap_or_default();
        out += &format!(
            "{},{},{},{},{},{}\n",
            s.generator_step, s.epoch, s.critic_loss, s.gradient_penalty, w, s.generator_loss
        );
    }
    out
}

pub fn train_gan(args: TrainGanArgs) -> Result<()> {
    let mut cfg: config::TrainGanConfig = config::load(args.config.as_deref())?;
    overlay!(cfg, args; input, out, kind, epochs, batch, critic_steps, gp_lambda, real_label, gen_batchnorm, seed,
        augment_factor, diversity_samples);
    if args.max_generator_steps.is_some() {
        cfg.max_generator_steps = args.max_generator_steps;
    }
    let (input, out) = (required(&cfg.input, "--input")?, required(&cfg.out, "--out")?);
    let spec = GanTrainSpec {
        kind: cfg.kind,
        batch: cfg.batch,
        critic_steps: cfg.critic_steps,
        gp_lambda: cfg.gp_lambda,
        real_label: cfg.real_label,
        generator_batchnorm: cfg.gen_batchnorm,
        epochs: cfg.epochs,
        seed: cfg.seed,
        max_generator_steps: cfg.max_generator_steps,
        generator_learning_rate: cfg.generator_learning_rate,
        critic_learning_rate: cfg.critic_learning_rate,
        diversity_samples: cfg.diversity_samples,
        ..Default::default()
    };
    spec.validate().map_err(|e| UsageError(e.to_string()))?;
    prepare_out(out, &cfg)?;

    let seqs = genuine(load_archive(input)?, input)?;
    let aug = mocap_core::augment::AugmentSpec { factor: cfg.augment_factor, seed: cfg.seed, ..Default::default() };
    let augmented = augment_dataset(&seqs, &aug)?;
    let stats = fit_normalizer(&augmented)?;
    let normalized = augmented.iter().map(|s| apply_zscore(s, &stats)).collect::<Result<Vec<_>, _>>()?;
    let data = GanData::from_sequences(&normalized, cfg.kind.is_conditional())?;
    info!("{:?}: {} genuine sequences → {} training samples", cfg.kind, seqs.len(), data.len());

    let (gen_spec, critic_spec) = gan_specs(&cfg);
    let trained = fit_gan(&spec, &data, gen_spec, critic_spec)?;
    let report = &trained.report;
    info!("{} generator steps over {} epochs", report.steps.len(), report.epochs.len());
    if let Some(e) = report.stationary_since {
        info!("losses stationary from epoch {e}");
    }
    if let Some(d) = &report.diversity {
        if d.collapsed {
            warn!("possible mode collapse: distance ratio {:.3}", d.ratio);
        } else {
            info!("diversity ratio {:.3}", d.ratio);
        }
    }
    trained.generator.to_state(Some(trained.generator_optimizer.clone()), Some(&stats)).save(&out.join("generator.ckpt"))?;
    trained.critic.to_state(Some(trained.critic_optimizer.clone())).save(&out.join("critic.ckpt"))?;
    write_json(&out.join("report.json"), report)?;
    fs::write(out.join("losses.csv"), losses_csv(report))?;
    Ok(())
}

pub fn generate(args: GenerateArgs) -> Result<()> {
    let mut cfg: config::GenerateConfig = config::load(args.config.as_deref())?;
    overlay!(cfg, args; model, out, count, format, seed);
    if args.label.is_some() {
        cfg.label = args.label.clone();
    }
    cfg.render |= args.render;
    let (model_path, out) = (required(&cfg.model, "--model")?, required(&cfg.out, "--out")?);
    let label = cfg.label.as_deref().map(ConditionLabel::parse).transpose().map_err(|e| UsageError(e.to_string()))?;

    let state = ModelState::load(model_path).with_context(|| format!("loading {}", model_path.display()))?;
    let (gen, stats) = Generator::from_state(&state)?;
    let stats = stats.context("generator checkpoint carries no normalization statistics")?;
    match (gen.spec().cond_dim > 0, label) {
        (true, None) => bail!(UsageError("conditional generator needs --label".into())),
        (false, Some(_)) => bail!(UsageError("--label given for an unconditional generator".into())),
        _ => {}
    }
    prepare_out(out, &cfg)?;
    let topo = SkeletonTopology::default();
    for i in 0..cfg.count {
        let z = noise_vector(cfg.seed, i as u64, gen.spec().noise_dim);
        let seq = generate_sequence(&gen, &z, label, &stats)?;
        write_sequence_csv(&seq, &out.join(format!("seq_{i:03}.csv")))?;
        if cfg.render {
            export_sequence(&seq, &topo, &cfg.style, cfg.format, &out.join(format!("render_{i:03}")))?;
        }
    }
    info!("wrote {} sequences to {}", cfg.count, out.display());
    Ok(())
}

fn export_sequence(
    seq: &MotionSequence,
    topo: &SkeletonTopology,
    style: &RenderStyle,
    format: ExportFormat,
    dir: &Path,
) -> Result<()> {
    let (frames, warnings) = build_geometry(seq, topo, style)?;
    for w in &warnings {
        warn!("frame {}: skipped bone {:?}", w.frame, w.bone);
    }
    export_geometry(&frames, format, dir, style)?;
    Ok(())
}

pub fn render(args: RenderArgs) -> Result<()> {
    let mut cfg: config::RenderConfig = config::load(args.config.as_deref())?;
    overlay!(cfg, args; input, out, format);
    if args.topology.is_some() {
        cfg.topology = args.topology.clone();
    }
    let (input, out) = (required(&cfg.input, "--input")?, required(&cfg.out, "--out")?);
    let topo = match &cfg.topology {
        Some(p) => SkeletonTopology::from_json(&fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)
            .map_err(|e| UsageError(format!("topology {}: {e}", p.display())))?,
        None => SkeletonTopology::default(),
    };
    let seqs = if input.extension().is_some_and(|e| e == "csv") {
        vec![read_sequence_csv(input)?]
    } else {
        genuine(load_archive(input)?, input)?
    };
    prepare_out(out, &cfg)?;
    if seqs.len() == 1 {
        export_sequence(&seqs[0], &topo, &cfg.style, cfg.format, out)?;
    } else {
        for (i, s) in seqs.iter().enumerate() {
            export_sequence(s, &topo, &cfg.style, cfg.format, &out.join(format!("seq_{i:03}")))?;
        }
    }
    info!("rendered {} sequence(s) of {} frames", seqs.len(), SEQ_LEN);
    Ok(())
}

#[derive(Serialize)]
struct Stats {
    trials: usize,
    skipped_missing_c7: usize,
    unreadable: usize,
    strategy: BTreeMap<char, usize>,
    weight: BTreeMap<&'static str, usize>,
    balanced: usize,
    unbalanced: usize,
}

pub fn stats(args: StatsArgs) -> Result<()> {
    let mut cfg: config::StatsConfig = config::load(args.config.as_deref())?;
    overlay!(cfg, args; input, out);
    let input = required(&cfg.input, "--input")?;
    let report = load_trials(input).with_context(|| format!("reading trials from {}", input.display()))?;
    let metas: Vec<_> = report.trials.iter().map(|t| &t.meta).collect();
    let balanced = metas.iter().filter(|m| m.balance == mocap_core::dataset::Balance::Balanced).count();
    let stats = Stats {
        trials: metas.len(),
        skipped_missing_c7: report.skipped_missing_c7.len(),
        unreadable: report.failures.len(),
        strategy: Strategy::ALL.iter().map(|&s| (s.letter(), metas.iter().filter(|m| m.strategy == s).count())).collect(),
        weight: Weight::ALL.iter().map(|&w| (w.name(), metas.iter().filter(|m| m.weight == w).count())).collect(),
        balanced,
        unbalanced: metas.len() - balanced,
    };
    println!("trials: {} ({} skipped for missing C7, {} unreadable)", stats.trials, stats.skipped_missing_c7, stats.unreadable);
    println!("strategy:");
    for (s, n) in &stats.strategy {
        println!("  {s} {n:>5}");
    }
    println!("weight:");
    for (w, n) in &stats.weight {
        println!("  {w:<9} {n:>5}");
    }
    println!("balance: {} balanced, {} unbalanced", stats.balanced, stats.unbalanced);
    if let Some(out) = &cfg.out {
        prepare_out(out, &cfg)?;
        write_json(&out.join("stats.json"), &stats)?;
    }
    Ok(())
}
