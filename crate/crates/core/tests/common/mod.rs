#![allow(dead_code)]

use std::path::PathBuf;

use lpr_core::{load_image, ImagePlane};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Noise,
    Constant,
    Gradient,
}

pub struct Sample {
    pub name: String,
    pub image: ImagePlane,
}

fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data")
}

pub fn natural_images() -> Vec<Sample> {
    let mut out = Vec::new();
    let mut paths: Vec<_> = std::fs::read_dir(data_dir())
        .expect("test data directory")
        .map(|e| e.unwrap().path())
        .filter(|p| matches!(p.extension().and_then(|e| e.to_str()), Some("ppm" | "pgm")))
        .collect();
    paths.sort();
    for p in paths {
        let bytes = std::fs::read(&p).unwrap();
        out.push(Sample {
            name: p.file_name().unwrap().to_string_lossy().into_owned(),
            image: load_image(&bytes).unwrap(),
        });
    }
    out
}

pub fn synthetic(kind: Kind, h: usize, w: usize, c: usize, rng: &mut ChaCha8Rng) -> ImagePlane {
    let n = h * w * c;
    let samples = match kind {
        Kind::Noise => (0..n).map(|_| rng.gen()).collect(),
        Kind::Constant => vec![rng.gen(); n],
        Kind::Gradient => {
            let (a, b, off): (i64, i64, i64) = (
                rng.gen_range(-9..=9),
                rng.gen_range(-9..=9),
                rng.gen_range(0..256),
            );
            let mut s = Vec::with_capacity(n);
            for row in 0..h as i64 {
                for col in 0..w as i64 {
                    for ch in 0..c as i64 {
                        s.push((a * row + b * col + 37 * ch + off).rem_euclid(256) as u8);
                    }
                }
            }
            s
        }
    };
    ImagePlane::new(h, w, c, samples).unwrap()
}

/// Side length in 1..=256, log-scale and skewed towards small sides.
fn side(rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.gen_range(0.0..=1.0);
    let x = 8.0 * u * u * u;
    (2f64.powf(x).round() as usize).clamp(1, 256)
}

/// Randomized corpus of `count` images: noise, constant and gradient
/// planes, gray and RGB, sides from 1 to 256. The extremes 1×1 and
/// 256×256 are always included.
pub fn random_corpus(count: usize, seed: u64) -> Vec<Sample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let kinds = [Kind::Noise, Kind::Constant, Kind::Gradient];
    let mut out = Vec::with_capacity(count);
    for (i, &(h, w)) in [(1usize, 1usize), (256, 256)].iter().enumerate() {
        let kind = kinds[i % 3];
        out.push(Sample {
            name: format!("fixed{i}-{kind:?}-{h}x{w}"),
            image: synthetic(kind, h, w, 3, &mut rng),
        });
    }
    out.push(Sample {
        name: "fixed-noise-256x256".into(),
        image: synthetic(Kind::Noise, 256, 256, 3, &mut rng),
    });
    while out.len() < count {
        let kind = kinds[out.len() % 3];
        let (h, w) = (side(&mut rng), side(&mut rng));
        let c = if rng.gen_bool(0.5) { 1 } else { 3 };
        out.push(Sample {
            name: format!("rand{}-{kind:?}-{h}x{w}x{c}", out.len()),
            image: synthetic(kind, h, w, c, &mut rng),
        });
    }
    out
}
