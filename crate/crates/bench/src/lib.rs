//! Benchmark fixtures shared by the criterion targets.

use mergeval_core::tensorstore::{write_checkpoint, Metadata, TensorWrite};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::path::{Path, PathBuf};

/// Write a base/vlm/code trio of F32 checkpoints with `tensors` backbone
/// tensors of `elements` values each.
pub fn bench_family(
    dir: &Path,
    tensors: usize,
    elements: usize,
    seed: u64,
) -> (PathBuf, PathBuf, PathBuf) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sets: [Vec<TensorWrite>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    for i in 0..tensors {
        let name = format!("model.layers.{i}.weight");
        let base: Vec<f32> = (0..elements)
            .map(|_| rng.random_range(0.5f32..2.0))
            .collect();
        for (idx, set) in sets.iter_mut().enumerate() {
            let values: Vec<f32> = if idx == 0 {
                base.clone()
            } else {
                base.iter()
                    .map(|b| b * (1.0 + rng.random_range(-0.2f32..0.2)))
                    .collect()
            };
            set.push(TensorWrite::f32(name.clone(), vec![elements], values));
        }
    }
    let paths = [
        dir.join("base.safetensors"),
        dir.join("vlm.safetensors"),
        dir.join("code.safetensors"),
    ];
    for (path, set) in paths.iter().zip(&sets) {
        write_checkpoint(path, set, &Metadata::new()).unwrap();
    }
    (paths[0].clone(), paths[1].clone(), paths[2].clone())
}

/// Deterministic pseudo-text of `words` words.
pub fn bench_text(words: usize, seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..words)
        .map(|_| {
            let len = rng.random_range(3..10);
            (0..len)
                .map(|_| (b'a' + rng.random_range(0..26u8)) as char)
                .collect::<String>()
        })
        .collect::<Vec<_>>()
        .join(" ")
}
