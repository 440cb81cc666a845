//! Round-trip every on-disk format: pool, annotation, checkpoint and EDL.
//! Each save/load pair must reproduce the original bit for bit.
//!
//! Run with: cargo run --release --example file_formats

use multicam::data::{
    generate_synthetic_show, load_annotation, load_pool, save_annotation, save_pool, SyntheticSpec,
};
use multicam::edl::{autoregressive_edit, load_edl, save_edl, EditOptions};
use multicam::model::checkpoint::{load_checkpoint, save_checkpoint};
use multicam::model::{init_params, ModelConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join("multicam_file_formats");
    std::fs::create_dir_all(&dir)?;

    let spec = SyntheticSpec {
        tracks: 4,
        dim: 6,
        duration_frames: 240,
        seed: 11,
        ..SyntheticSpec::default()
    };
    let (pool, ann) = generate_synthetic_show(&spec)?;

    let pool_path = dir.join("scene.pool");
    save_pool(&pool_path, &pool)?;
    assert_eq!(load_pool(&pool_path)?, pool);
    println!(
        "pool       {:>8} bytes  ({} frames × {} tracks × {} dims)",
        std::fs::metadata(&pool_path)?.len(),
        pool.frames(),
        pool.tracks(),
        pool.dim()
    );

    let ann_path = dir.join("scene.ann");
    save_annotation(&ann_path, &ann)?;
    assert_eq!(load_annotation(&ann_path)?, ann);
    println!(
        "annotation {:>8} bytes  ({} selections)",
        std::fs::metadata(&ann_path)?.len(),
        ann.len()
    );

    let config = ModelConfig {
        d_in: 6,
        d_model: 16,
        n_heads: 2,
        n_layers_t: 1,
        n_layers_c: 1,
        w: 8,
        d_ff: 32,
        d_fuse: 16,
        seed: 11,
        ..ModelConfig::default()
    };
    let params = init_params(&config)?;
    let ckpt_path = dir.join("model.ckpt");
    save_checkpoint(&ckpt_path, &params)?;
    assert_eq!(load_checkpoint(&ckpt_path)?, params);
    println!(
        "checkpoint {:>8} bytes  ({} tensors + positions)",
        std::fs::metadata(&ckpt_path)?.len(),
        params.named_tensors().len()
    );

    let edl = autoregressive_edit(&params, &pool, "scene.pool", &EditOptions::default())?;
    let edl_path = dir.join("scene.edl.json");
    save_edl(&edl_path, &edl)?;
    assert_eq!(load_edl(&edl_path)?, edl);
    println!(
        "edl        {:>8} bytes  ({} shots)",
        std::fs::metadata(&edl_path)?.len(),
        edl.shots.len()
    );

    println!("\nall four formats round-tripped exactly; files under {}", dir.display());
    Ok(())
}
