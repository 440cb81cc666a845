//! End-to-end on a small corpus: generate scenes, split 4:1, train the
//! scorer, then compare the model, its single-stream ablations and the
//! random baseline on the held-out scenes.
//!
//! Run with: cargo run --release --example train_and_evaluate
//! (takes a minute or two on a laptop)

use multicam::data::{generate_corpus, split_scenes, SyntheticSpec};
use multicam::eval::{evaluate, evaluation_groups, random_baseline, render_table, GroupLayout};
use multicam::model::{ModelConfig, StreamMode};
use multicam::training::{train, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let generator = SyntheticSpec {
        dim: 8,
        duration_frames: 720, // 30 s scenes keep this example quick
        seed: 21,
        ..SyntheticSpec::default()
    };
    let model_config = ModelConfig {
        d_in: 8,
        d_model: 32,
        n_heads: 4,
        n_layers_t: 1,
        n_layers_c: 1,
        w: 16,
        d_ff: 64,
        d_fuse: 32,
        seed: 21,
        ..ModelConfig::default()
    };
    let train_config = TrainConfig {
        epochs: 8,
        seed: 21,
        ..TrainConfig::default()
    };

    let corpus = generate_corpus(&generator, 8)?;
    let (train_scenes, test_scenes) = split_scenes(corpus, 21)?;
    println!(
        "{} train / {} test scenes; training {} epochs...",
        train_scenes.len(),
        test_scenes.len(),
        train_config.epochs
    );

    let outcome = train(&train_scenes, &model_config, &train_config)?;
    let means = outcome.curve.epoch_means();
    println!(
        "loss: {:.3} (epoch 1) → {:.3} (epoch {})\n",
        means[0],
        means.last().unwrap(),
        means.len()
    );

    let full = evaluate(&outcome.params, &test_scenes, 5, 6, StreamMode::Full)?;
    let temporal = evaluate(&outcome.params, &test_scenes, 5, 6, StreamMode::TemporalOnly)?;
    let contextual = evaluate(&outcome.params, &test_scenes, 5, 6, StreamMode::ContextualOnly)?;
    let layouts: Vec<GroupLayout> = evaluation_groups(model_config.w, &test_scenes, 5, 6)?
        .iter()
        .map(GroupLayout::from)
        .collect();
    let random = random_baseline(&layouts, 0)?;

    print!(
        "{}",
        render_table(&[
            ("Random", &random),
            ("Temporal-only", &temporal),
            ("Contextual-only", &contextual),
            ("Full model", &full),
        ])
    );
    println!("\nthe full model needs both streams: history to hold shots, context to pick cuts");
    Ok(())
}
