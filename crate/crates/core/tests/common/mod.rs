#![allow(dead_code)]

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use aclnet::audio::{save_wav, AudioClip, LabeledClip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Class 0: a pure tone at a random pitch; class 1: uniform white noise.
pub fn toy_clip(index: usize, rate: u32, seconds: f64, rng: &mut ChaCha8Rng) -> (AudioClip, usize) {
    let len = (seconds * rate as f64) as usize;
    let target = index % 2;
    let samples = if target == 0 {
        let f = rng.random_range(200.0..2000.0);
        let phase = rng.random_range(0.0..2.0 * PI);
        (0..len)
            .map(|t| (0.5 * (2.0 * PI * f * t as f64 / rate as f64 + phase).sin()) as f32)
            .collect()
    } else {
        (0..len).map(|_| rng.random_range(-0.5f32..0.5)).collect()
    };
    (AudioClip::new(samples, rate), target)
}

pub fn toy_corpus(n: usize, rate: u32, seconds: f64, seed: u64) -> Vec<LabeledClip> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let (clip, target) = toy_clip(i, rate, seconds, &mut rng);
            LabeledClip {
                path: PathBuf::from(format!("toy{i:02}.wav")),
                clip,
                target,
            }
        })
        .collect()
}

/// Writes the toy corpus as WAV files plus a fold index (`fold = i % 5 + 1`)
/// into `dir`, returning the index path.
pub fn write_toy_dataset(dir: &Path, n: usize, rate: u32, seconds: f64, seed: u64) -> PathBuf {
    let audio = dir.join("audio");
    std::fs::create_dir_all(&audio).unwrap();
    let mut index = String::from("filename,fold,target,category\n");
    for (i, c) in toy_corpus(n, rate, seconds, seed).iter().enumerate() {
        let name = c.path.to_str().unwrap();
        save_wav(audio.join(name), &c.clip).unwrap();
        let category = if c.target == 0 { "tone" } else { "noise" };
        writeln!(index, "{name},{},{},{category}", i % 5 + 1, c.target).unwrap();
    }
    let path = dir.join("index.csv");
    std::fs::write(&path, index).unwrap();
    path
}
