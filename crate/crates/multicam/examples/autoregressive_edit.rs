//! Cut a full show: train briefly, then sweep a fresh scene frame by
//! frame, feeding the model its own previous selections, and emit an
//! edit decision list.
//!
//! Run with: cargo run --release --example autoregressive_edit

use multicam::data::{generate_corpus, SyntheticSpec};
use multicam::edl::{agreement, autoregressive_edit, EditOptions};
use multicam::model::ModelConfig;
use multicam::training::{train, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let generator = SyntheticSpec {
        dim: 8,
        duration_frames: 720,
        seed: 33,
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
        seed: 33,
        ..ModelConfig::default()
    };
    let train_config = TrainConfig {
        epochs: 8,
        seed: 33,
        ..TrainConfig::default()
    };

    // Train on five scenes, then edit a sixth the model has never seen.
    let mut corpus = generate_corpus(&generator, 6)?;
    let (held_out_pool, held_out_ann) = corpus.pop().expect("six scenes");
    println!("training on {} scenes...", corpus.len());
    let outcome = train(&corpus, &model_config, &train_config)?;

    let options = EditOptions {
        decision_stride: 1,
        min_shot_frames: 24,
    };
    let edl = autoregressive_edit(&outcome.params, &held_out_pool, "held-out scene", &options)?;

    println!(
        "\nEDL for {} frames at {} fps — {} shots:",
        held_out_pool.frames(),
        edl.fps,
        edl.shots.len()
    );
    for shot in edl.shots.iter().take(12) {
        println!(
            "  track {} for {:5.2} s  [{:4}..{:4})",
            shot.track,
            shot.seconds(edl.fps),
            shot.start,
            shot.end
        );
    }
    if edl.shots.len() > 12 {
        println!("  ... {} more", edl.shots.len() - 12);
    }

    println!(
        "\nframe agreement with the hidden director: {:.1}%",
        100.0 * agreement(&edl, &held_out_ann)
    );
    Ok(())
}
