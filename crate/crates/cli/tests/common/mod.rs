//! Shared fixtures for CLI and acceptance tests.
#![allow(dead_code)] // each test crate uses a subset

use mergeval_core::tensorstore::{write_checkpoint, DType, Metadata, TensorData, TensorWrite};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::path::{Path, PathBuf};
use std::process::Command;

pub const BIN: &str = env!("CARGO_BIN_EXE_mergeval");

pub fn run(args: &[&str], dir: &Path) -> std::process::Output {
    Command::new(BIN)
        .args(args)
        .current_dir(dir)
        .env_remove("JUDGE_API_BASE")
        .env_remove("JUDGE_API_KEY")
        .env_remove("JUDGE_MODEL")
        .output()
        .expect("binary runs")
}

pub fn stdout_of(output: &std::process::Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

pub fn stderr_of(output: &std::process::Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

/// A base/vlm/code checkpoint family with mixed F32/BF16 backbone tensors
/// and distinct visual tensors, roughly a thousand parameters per file.
/// Donor values are fine-tune-scaled perturbations of the base.
pub fn checkpoint_family(dir: &Path, seed: u64) -> (PathBuf, PathBuf, PathBuf) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let backbone: &[(&str, usize, DType)] = &[
        ("model.embed_tokens.weight", 256, DType::BF16),
        ("model.layers.0.mlp.down_proj.weight", 256, DType::F32),
        ("model.layers.0.self_attn.q_proj.weight", 128, DType::BF16),
        ("lm_head.weight", 128, DType::F32),
    ];
    let visual: &[(&str, usize, DType)] = &[
        ("visual.blocks.0.attn.qkv.weight", 192, DType::F32),
        ("visual.merger.mlp.0.weight", 64, DType::BF16),
    ];

    let mut sets: [Vec<TensorWrite>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    for (name, n, dtype) in backbone {
        let base: Vec<f32> = (0..*n).map(|_| rng.random_range(0.5f32..2.0)).collect();
        for (idx, set) in sets.iter_mut().enumerate() {
            let values = if idx == 0 {
                base.clone()
            } else {
                base.iter()
                    .map(|b| b * (1.0 + rng.random_range(-0.2f32..0.2)))
                    .collect()
            };
            set.push(TensorWrite {
                name: (*name).into(),
                dtype: *dtype,
                shape: vec![*n],
                data: TensorData::F32(values),
            });
        }
    }
    for (name, n, dtype) in visual {
        // Distinct visual tensors everywhere, including base vs VLM.
        for set in sets.iter_mut() {
            let values: Vec<f32> = (0..*n).map(|_| rng.random_range(-1.0f32..1.0)).collect();
            set.push(TensorWrite {
                name: (*name).into(),
                dtype: *dtype,
                shape: vec![*n],
                data: TensorData::F32(values),
            });
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

pub fn write_recipe(dir: &Path, lambda: f64, output: &str) -> PathBuf {
    let recipe = serde_json::json!({
        "base": dir.join("base.safetensors"),
        "vlm": dir.join("vlm.safetensors"),
        "code": dir.join("code.safetensors"),
        "lambda": lambda,
        "output": dir.join(output),
    });
    let path = dir.join(format!("recipe_{output}.json"));
    std::fs::write(&path, serde_json::to_string_pretty(&recipe).unwrap()).unwrap();
    path
}
