//! Scene-level 4:1 train/test split. Splitting at scene granularity keeps
//! every frame of a recording on one side, so no window can leak across.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::DataError;

/// Seeded shuffle, then the first ⌈0.8·n⌉ scenes train and the rest test
/// (capped so at least one scene always tests).
pub fn split_scenes<S>(scenes: Vec<S>, seed: u64) -> Result<(Vec<S>, Vec<S>), DataError> {
    let n = scenes.len();
    if n < 2 {
        return Err(DataError::TooFewScenes(n));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let train_n = ((0.8 * n as f64).ceil() as usize).min(n - 1);

    let mut slots: Vec<Option<S>> = scenes.into_iter().map(Some).collect();
    let mut train = Vec::with_capacity(train_n);
    let mut test = Vec::with_capacity(n - train_n);
    for (pos, &idx) in order.iter().enumerate() {
        let scene = slots[idx].take().expect("each index visited once");
        if pos < train_n {
            train.push(scene);
        } else {
            test.push(scene);
        }
    }
    Ok((train, test))
}
