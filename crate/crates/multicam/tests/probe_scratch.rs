//! Temporary diagnostic (not part of the suite): per-group-type accuracy
//! breakdown on the saved benchmark run.

use multicam::data::{load_annotation, load_pool};
use multicam::eval::score_sample_groups;
use multicam::model::checkpoint::load_checkpoint;
use multicam::model::StreamMode;
use multicam::training::generate_boundary_samples;

#[test]
#[ignore]
fn breakdown() {
    let ckpt = std::env::var("CKPT").unwrap_or_else(|_| "/tmp/bench/model.ckpt".into());
    let params = load_checkpoint(&ckpt).unwrap();
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string("/tmp/bench/model.ckpt.split.json").unwrap())
            .unwrap();
    for side in ["test", "train"] {
        let files: Vec<(String, String)> = manifest[side]
            .as_array()
            .unwrap()
            .iter()
            .map(|pair| {
                (
                    pair[0].as_str().unwrap().to_string(),
                    pair[1].as_str().unwrap().to_string(),
                )
            })
            .collect();
        let files = if side == "train" { &files[..4] } else { &files[..] };

        let mut groups = Vec::new();
        let mut kinds = Vec::new(); // 0 = scene-start, 1 = hold, 2 = cut
        for (scene, (pool_path, ann_path)) in files.iter().enumerate() {
            let pool = load_pool(pool_path).unwrap();
            let ann = load_annotation(ann_path).unwrap();
            let got = generate_boundary_samples(&pool, &ann, scene, 16, 5, 6).unwrap();
            for g in &got.groups {
                let kind = if g.frame == 0 {
                    0
                } else if ann.track(g.frame - 1) == g.positive {
                    1
                } else {
                    2
                };
                kinds.push(kind);
            }
            groups.extend(got.groups);
        }
        for (mode, name) in [
            (StreamMode::Full, "full"),
            (StreamMode::TemporalOnly, "temporal"),
            (StreamMode::ContextualOnly, "contextual"),
        ] {
            let scored = score_sample_groups(&params, &groups, mode).unwrap();
            let mut hit = [0usize; 3];
            let mut tot = [0usize; 3];
            for (gs, &kind) in scored.iter().zip(&kinds) {
                let mut best = 0;
                for (j, &s) in gs.scores.iter().enumerate() {
                    if s > gs.scores[best] {
                        best = j;
                    }
                }
                tot[kind] += 1;
                if best == gs.positive {
                    hit[kind] += 1;
                }
            }
            println!(
                "{side:5} {name:10}: start {}/{} ({:.1}%)  hold {}/{} ({:.1}%)  cut {}/{} ({:.1}%)",
                hit[0], tot[0], 100.0 * hit[0] as f64 / tot[0].max(1) as f64,
                hit[1], tot[1], 100.0 * hit[1] as f64 / tot[1].max(1) as f64,
                hit[2], tot[2], 100.0 * hit[2] as f64 / tot[2].max(1) as f64,
            );
        }
    }
}
