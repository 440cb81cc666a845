//! Command bodies behind the `multicam` binary. Each returns a summary
//! struct the caller prints, and an error that maps to the exit-code
//! contract: configuration problems exit 1, runtime failures exit 2.

use std::fmt;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ConfigError, RunConfig};
use crate::data::{
    generate_corpus, load_annotation, load_pool, save_annotation, save_pool, shots_from_annotation,
    split_scenes, DataError, EditAnnotation, FeaturePool,
};
use crate::edl::{autoregressive_edit, save_edl, EditDecisionList, EditOptions, EdlError};
use crate::eval::{
    evaluate, evaluation_groups, random_baseline, render_table, EvalError, EvalReport, GroupLayout,
};
use crate::model::checkpoint::{load_checkpoint, save_checkpoint, CheckpointError};
use crate::model::scoring::{register_params, score_group_on_tape};
use crate::model::{init_params, ModelConfig, ModelError, ModelParams, StreamMode};
use crate::numerics::{compare_gradients, finite_diff_grad, GradCheckReport, Tape, Tensor};
use crate::training::{train, TrainError};

#[derive(Debug, Error)]
pub enum CommandError {
    #[error("{}", .0.join("\n"))]
    Config(Vec<String>),
    #[error(transparent)]
    Runtime(Box<dyn std::error::Error + Send + Sync + 'static>),
}

impl CommandError {
    /// Exit-code contract: 1 for usage/config errors, 2 for runtime failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CommandError::Config(_) => 1,
            CommandError::Runtime(_) => 2,
        }
    }
}

macro_rules! runtime_from {
    ($($ty:ty),*) => {
        $(impl From<$ty> for CommandError {
            fn from(e: $ty) -> Self {
                CommandError::Runtime(Box::new(e))
            }
        })*
    };
}
runtime_from!(DataError, TrainError, EvalError, EdlError, ModelError, CheckpointError, std::io::Error);

impl From<ConfigError> for CommandError {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Invalid(problems) => CommandError::Config(problems),
            other => CommandError::Runtime(Box::new(other)),
        }
    }
}

fn validated(config: &RunConfig) -> Result<(), CommandError> {
    let problems = config.problems();
    if problems.is_empty() {
        Ok(())
    } else {
        Err(CommandError::Config(problems))
    }
}

// ── gen ──────────────────────────────────────────────────────────────

#[derive(Debug, Clone)]
pub struct GenSummary {
    pub scene_files: Vec<(PathBuf, PathBuf)>,
    pub total_shots: usize,
    pub median_shot_seconds: f64,
    pub mean_shot_seconds: f64,
    pub fps: f64,
}

impl fmt::Display for GenSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "wrote {} scene(s): {} shots, median {:.2} s, mean {:.2} s at {} fps",
            self.scene_files.len(),
            self.total_shots,
            self.median_shot_seconds,
            self.mean_shot_seconds,
            self.fps
        )
    }
}

/// Generate `scenes` synthetic scenes and write `scene_NNN.pool` /
/// `scene_NNN.ann` pairs under `out_dir`.
pub fn cmd_gen(
    config: &RunConfig,
    out_dir: &Path,
    scenes: usize,
) -> Result<GenSummary, CommandError> {
    validated(config)?;
    if scenes == 0 {
        return Err(CommandError::Config(vec!["gen: scenes must be ≥ 1".into()]));
    }
    std::fs::create_dir_all(out_dir)?;
    let corpus = generate_corpus(&config.generator, scenes)?;

    let mut scene_files = Vec::with_capacity(scenes);
    let mut lengths = Vec::new();
    for (i, (pool, ann)) in corpus.iter().enumerate() {
        let pool_path = out_dir.join(format!("scene_{i:03}.pool"));
        let ann_path = out_dir.join(format!("scene_{i:03}.ann"));
        save_pool(&pool_path, pool)?;
        save_annotation(&ann_path, ann)?;
        for shot in shots_from_annotation(ann)? {
            lengths.push(shot.seconds(pool.fps()));
        }
        scene_files.push((pool_path, ann_path));
    }
    lengths.sort_by(f64::total_cmp);
    let total = lengths.len();
    Ok(GenSummary {
        scene_files,
        total_shots: total,
        median_shot_seconds: lengths[total / 2],
        mean_shot_seconds: lengths.iter().sum::<f64>() / total as f64,
        fps: config.generator.fps,
    })
}

// ── train ────────────────────────────────────────────────────────────

/// Where the training scenes come from.
pub enum TrainData {
    /// Split the given scenes 4:1 with the seed (all train when only one
    /// scene is available).
    SplitFrom {
        scenes: Vec<(PathBuf, PathBuf)>,
        split_seed: u64,
    },
    /// Explicit train and test lists.
    Explicit {
        train: Vec<(PathBuf, PathBuf)>,
        test: Vec<(PathBuf, PathBuf)>,
    },
}

/// Which scene files ended up on each side of the split.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitManifest {
    pub train: Vec<(PathBuf, PathBuf)>,
    pub test: Vec<(PathBuf, PathBuf)>,
}

#[derive(Debug)]
pub struct TrainSummary {
    pub checkpoint: PathBuf,
    pub curve_path: Option<PathBuf>,
    pub manifest: SplitManifest,
    pub epochs: usize,
    pub groups_used: usize,
    pub clipped_groups: usize,
    pub final_epoch_loss: f64,
}

impl fmt::Display for TrainSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "trained {} epochs over {} groups ({} clipped at scene ends); final epoch mean loss {:.6}",
            self.epochs, self.groups_used, self.clipped_groups, self.final_epoch_loss
        )?;
        writeln!(
            f,
            "checkpoint: {} ({} train / {} test scenes)",
            self.checkpoint.display(),
            self.manifest.train.len(),
            self.manifest.test.len()
        )
    }
}

/// Pool/annotation pairs under a directory: every `*.pool` with a matching
/// `*.ann`, sorted by name.
pub fn discover_scenes(dir: &Path) -> Result<Vec<(PathBuf, PathBuf)>, CommandError> {
    let mut pairs = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.extension().is_some_and(|e| e == "pool") {
            let ann = path.with_extension("ann");
            if ann.exists() {
                pairs.push((path, ann));
            }
        }
    }
    pairs.sort();
    if pairs.is_empty() {
        return Err(CommandError::Config(vec![format!(
            "no scene files (*.pool with matching *.ann) under {}",
            dir.display()
        )]));
    }
    Ok(pairs)
}

fn load_scene(
    pool_path: &Path,
    ann_path: &Path,
) -> Result<(FeaturePool, EditAnnotation), CommandError> {
    let pool = load_pool(pool_path)?;
    let ann = load_annotation(ann_path)?;
    ann.matches_pool(&pool)?;
    Ok((pool, ann))
}

/// Train a checkpoint. Writes the checkpoint, the loss-curve table, and a
/// split manifest (`<checkpoint>.split.json`) naming the held-out scenes.
pub fn cmd_train(
    config: &RunConfig,
    data: TrainData,
    checkpoint_out: &Path,
    curve_out: Option<&Path>,
) -> Result<TrainSummary, CommandError> {
    validated(config)?;
    let manifest = match data {
        TrainData::Explicit { train, test } => SplitManifest { train, test },
        TrainData::SplitFrom { scenes, split_seed } => {
            if scenes.len() < 2 {
                SplitManifest {
                    train: scenes,
                    test: Vec::new(),
                }
            } else {
                let (train, test) = split_scenes(scenes, split_seed)?;
                SplitManifest { train, test }
            }
        }
    };
    if manifest.train.is_empty() {
        return Err(CommandError::Config(vec![
            "train: need at least one training scene".into(),
        ]));
    }

    let mut scenes = Vec::with_capacity(manifest.train.len());
    for (pool_path, ann_path) in &manifest.train {
        scenes.push(load_scene(pool_path, ann_path)?);
    }
    let outcome = train(&scenes, &config.model, &config.train)?;

    save_checkpoint(checkpoint_out, &outcome.params)?;
    if let Some(curve_path) = curve_out {
        std::fs::write(curve_path, outcome.curve.to_table())?;
    }
    let manifest_path = manifest_path_for(checkpoint_out);
    std::fs::write(
        &manifest_path,
        serde_json::to_string_pretty(&manifest)
            .map_err(|e| CommandError::Runtime(Box::new(e)))?,
    )?;

    Ok(TrainSummary {
        checkpoint: checkpoint_out.to_path_buf(),
        curve_path: curve_out.map(Path::to_path_buf),
        manifest,
        epochs: config.train.epochs,
        groups_used: outcome.groups_used,
        clipped_groups: outcome.clipped_groups,
        final_epoch_loss: *outcome
            .curve
            .epoch_means()
            .last()
            .expect("at least one epoch"),
    })
}

pub fn manifest_path_for(checkpoint: &Path) -> PathBuf {
    let mut name = checkpoint.file_name().unwrap_or_default().to_os_string();
    name.push(".split.json");
    checkpoint.with_file_name(name)
}

// ── eval ─────────────────────────────────────────────────────────────

#[derive(Debug)]
pub struct EvalSummary {
    pub model: EvalReport,
    pub random: EvalReport,
    pub mode: StreamMode,
    pub no_predicted_positives: bool,
}

impl EvalSummary {
    pub fn table(&self) -> String {
        let label = match self.mode {
            StreamMode::Full => "Model",
            StreamMode::TemporalOnly => "Model(temporal-only)",
            StreamMode::ContextualOnly => "Model(contextual-only)",
        };
        render_table(&[("Random", &self.random), (label, &self.model)])
    }
}

impl fmt::Display for EvalSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.table())?;
        if self.no_predicted_positives {
            writeln!(f, "warning: no instance scored at or above the threshold")?;
        }
        Ok(())
    }
}

/// Evaluate a checkpoint on test scenes; the report carries the model row
/// next to the seeded random baseline.
pub fn cmd_eval(
    config: &RunConfig,
    checkpoint_path: &Path,
    test_scenes: &[(PathBuf, PathBuf)],
    report_out: Option<&Path>,
    mode: StreamMode,
) -> Result<EvalSummary, CommandError> {
    if test_scenes.is_empty() {
        return Err(CommandError::Config(vec![
            "eval: need at least one test scene".into(),
        ]));
    }
    let params = load_checkpoint(checkpoint_path)?;
    let mut scenes = Vec::with_capacity(test_scenes.len());
    for (pool_path, ann_path) in test_scenes {
        let (pool, ann) = load_scene(pool_path, ann_path)?;
        if pool.dim() != params.config.d_in {
            return Err(CommandError::Runtime(Box::new(EdlError::DimMismatch {
                pool: pool.dim(),
                model: params.config.d_in,
            })));
        }
        scenes.push((pool, ann));
    }

    let model_report = evaluate(
        &params,
        &scenes,
        config.train.step,
        config.train.groups_per_boundary,
        mode,
    )?;
    let groups = evaluation_groups(
        params.config.w,
        &scenes,
        config.train.step,
        config.train.groups_per_boundary,
    )?;
    let layouts: Vec<GroupLayout> = groups.iter().map(GroupLayout::from).collect();
    let random = random_baseline(&layouts, config.eval.baseline_seed)?;

    let summary = EvalSummary {
        no_predicted_positives: model_report.precision_at_half == 0.0,
        model: model_report,
        random,
        mode,
    };
    if let Some(path) = report_out {
        std::fs::write(
            path,
            serde_json::to_string_pretty(&summary.model)
                .map_err(|e| CommandError::Runtime(Box::new(e)))?,
        )?;
    }
    Ok(summary)
}

// ── edit ─────────────────────────────────────────────────────────────

#[derive(Debug)]
pub struct EditSummary {
    pub edl: EditDecisionList,
    pub out: PathBuf,
    pub agreement_with_annotation: Option<f64>,
}

impl fmt::Display for EditSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "wrote {} with {} shots over {} frames",
            self.out.display(),
            self.edl.shots.len(),
            self.edl.frames()
        )?;
        if let Some(a) = self.agreement_with_annotation {
            writeln!(f, "agreement with reference annotation: {:.1}%", 100.0 * a)?;
        }
        Ok(())
    }
}

/// Cut a pool autoregressively and write the EDL. When an annotation file
/// sits next to the pool, the summary reports frame agreement against it.
pub fn cmd_edit(
    checkpoint_path: &Path,
    pool_path: &Path,
    out: &Path,
    options: &EditOptions,
) -> Result<EditSummary, CommandError> {
    let params = load_checkpoint(checkpoint_path)?;
    let pool = load_pool(pool_path)?;
    let edl = autoregressive_edit(&params, &pool, &pool_path.display().to_string(), options)?;
    save_edl(out, &edl)?;

    let ann_path = pool_path.with_extension("ann");
    let agreement_with_annotation = if ann_path.exists() {
        let ann = load_annotation(&ann_path)?;
        (ann.len() == pool.frames()).then(|| crate::edl::agreement(&edl, &ann))
    } else {
        None
    };
    Ok(EditSummary {
        edl,
        out: out.to_path_buf(),
        agreement_with_annotation,
    })
}

// ── gradcheck ────────────────────────────────────────────────────────

/// Gradient-check tolerance: worst relative error per tensor must stay
/// under this.
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

/// Check every parameter tensor's reverse-mode gradient against central
/// finite differences in f64 on one J-track sample group.
pub fn cmd_gradcheck(
    model_config: &ModelConfig,
    tracks: usize,
    seed: u64,
) -> Result<GradCheckReport, CommandError> {
    model_config.validate()?;
    if tracks == 0 {
        return Err(CommandError::Config(vec![
            "gradcheck: tracks must be ≥ 1".into(),
        ]));
    }
    let params = init_params(model_config)?.cast::<f64>();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let history = Tensor::<f64>::new(
        vec![model_config.w, model_config.d_in],
        (0..model_config.w * model_config.d_in)
            .map(|_| rng.random_range(-1.0..1.0))
            .collect(),
    )
    .map_err(ModelError::Tensor)?;
    let context = Tensor::<f64>::new(
        vec![tracks, model_config.d_in],
        (0..tracks * model_config.d_in)
            .map(|_| rng.random_range(-1.0..1.0))
            .collect(),
    )
    .map_err(ModelError::Tensor)?;
    let positive = rng.random_range(0..tracks);

    let (analytic, _) = model_loss_and_grads(&params, &history, &context, positive, true)?;
    let analytic = analytic.expect("gradients requested");

    let names: Vec<String> = params
        .named_tensors()
        .iter()
        .map(|(n, _)| n.clone())
        .collect();
    let mut numeric = Vec::with_capacity(names.len());
    for (idx, name) in names.iter().enumerate() {
        let x = params.named_tensors()[idx].1.clone();
        let grad = finite_diff_grad(
            |probe: &Tensor<f64>| {
                let mut perturbed = params.clone();
                *perturbed.tensors_mut()[idx] = probe.clone();
                model_loss_and_grads(&perturbed, &history, &context, positive, false)
                    .expect("loss evaluation")
                    .1
            },
            &x,
            1e-5,
        );
        numeric.push((name.clone(), grad));
    }

    Ok(compare_gradients(&analytic, &numeric, GRADCHECK_TOLERANCE))
}

/// Mean group BCE loss; optionally also the named analytic gradients.
#[allow(clippy::type_complexity)]
fn model_loss_and_grads(
    params: &ModelParams<f64>,
    history: &Tensor<f64>,
    context: &Tensor<f64>,
    positive: usize,
    want_grads: bool,
) -> Result<(Option<Vec<(String, Tensor<f64>)>>, f64), CommandError> {
    let mut tape = Tape::<f64>::new();
    let pv = register_params(&mut tape, params);
    let scores = score_group_on_tape(
        &mut tape,
        &pv,
        &params.config,
        history,
        context,
        StreamMode::Full,
    )?;
    let tracks = scores.len();
    let mut losses = Vec::with_capacity(tracks);
    for (j, &s) in scores.iter().enumerate() {
        losses.push(tape.bce(s, j == positive).map_err(ModelError::Tensor)?);
    }
    let total = tape.sum_vars(&losses);
    let loss = tape.scale(total, 1.0 / tracks as f64);
    let value = tape.value(loss).item();
    if !want_grads {
        return Ok((None, value));
    }
    let store = tape.backward(loss).map_err(ModelError::Tensor)?;
    let named: Vec<(String, Tensor<f64>)> = params
        .named_tensors()
        .iter()
        .zip(pv.trainable())
        .map(|((name, _), var)| (name.clone(), store.grad(var)))
        .collect();
    Ok((Some(named), value))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gradcheck_tiny_config_passes() {
        let report = cmd_gradcheck(&ModelConfig::tiny(), 3, 0).unwrap();
        assert!(report.passed(), "{report}");
        // Every trainable tensor shows up by name.
        let params = init_params(&ModelConfig::tiny()).unwrap();
        assert_eq!(report.checks.len(), params.named_tensors().len());
        for (name, _) in params.named_tensors() {
            assert!(report.checks.iter().any(|c| c.name == name), "missing {name}");
        }
    }

    #[test]
    fn corrupted_gradient_rule_fails_the_harness() {
        let cfg = ModelConfig::tiny();
        let params = init_params(&cfg).unwrap().cast::<f64>();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let history = Tensor::<f64>::new(
            vec![cfg.w, cfg.d_in],
            (0..cfg.w * cfg.d_in).map(|_| rng.random_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        let context = Tensor::<f64>::new(
            vec![3, cfg.d_in],
            (0..3 * cfg.d_in).map(|_| rng.random_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        let (grads, _) = model_loss_and_grads(&params, &history, &context, 1, true).unwrap();
        let mut analytic = grads.unwrap();
        // Corrupt one rule's output.
        for v in analytic[3].1.data_mut() {
            *v += 0.5;
        }
        let report = compare_gradients(&analytic, &analytic_clone_as_numeric(&params, &history, &context), GRADCHECK_TOLERANCE);
        assert!(!report.passed());
    }

    fn analytic_clone_as_numeric(
        params: &ModelParams<f64>,
        history: &Tensor<f64>,
        context: &Tensor<f64>,
    ) -> Vec<(String, Tensor<f64>)> {
        model_loss_and_grads(params, history, context, 1, true)
            .unwrap()
            .0
            .unwrap()
    }
}
