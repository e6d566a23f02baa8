#![allow(dead_code)]

use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sdpc::image_io::load_pgm;
use sdpc::Image;

pub const FIXTURES: [&str; 3] = ["camera", "coffee", "chelsea"];

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/data")
        .join(format!("{name}.pgm"))
}

pub fn fixture(name: &str) -> Image {
    let bytes = std::fs::read(fixture_path(name)).expect("fixture readable");
    load_pgm(&bytes).expect("fixture is a valid P5 file")
}

/// Smooth texture plus noise: neighbouring blocks correlate, so prediction
/// actually does something.
pub fn synthetic(width: usize, height: usize, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (fx, fy, phase): (f64, f64, f64) = (rng.gen_range(0.02..0.3), rng.gen_range(0.02..0.3), rng.gen());
    let samples = (0..width * height)
        .map(|i| {
            let (x, y) = ((i % width) as f64, (i / width) as f64);
            let v = 128.0 + 70.0 * (fx * x + phase * 6.0).sin() * (fy * y).cos() + 0.2 * x
                + rng.gen_range(-12.0..12.0);
            v.round().clamp(0.0, 255.0) as u8
        })
        .collect();
    Image::new(width, height, samples).unwrap()
}

pub fn noise(width: usize, height: usize, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Image::new(width, height, (0..width * height).map(|_| rng.gen()).collect()).unwrap()
}
