//! Seeded piecewise-smooth test images: a shaded background with overlapping
//! ellipses, rectangles and half-plane cuts, each carrying its own intensity
//! ramp, plus a faint low-frequency texture. Stands in for natural images in
//! tests and desk-scale experiments.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::image::GrayImage;

enum Shape {
    Ellipse { cy: f64, cx: f64, ry: f64, rx: f64, cos: f64, sin: f64 },
    Rect { y0: f64, x0: f64, y1: f64, x1: f64 },
    HalfPlane { ny: f64, nx: f64, offset: f64 },
}

impl Shape {
    fn contains(&self, y: f64, x: f64) -> bool {
        match *self {
            Shape::Ellipse { cy, cx, ry, rx, cos, sin } => {
                let (dy, dx) = (y - cy, x - cx);
                let u = cos * dx + sin * dy;
                let v = -sin * dx + cos * dy;
                (u / rx).powi(2) + (v / ry).powi(2) <= 1.0
            }
            Shape::Rect { y0, x0, y1, x1 } => y >= y0 && y <= y1 && x >= x0 && x <= x1,
            Shape::HalfPlane { ny, nx, offset } => ny * y + nx * x > offset,
        }
    }
}

struct Ramp {
    base: f64,
    gy: f64,
    gx: f64,
}

impl Ramp {
    fn random(rng: &mut ChaCha8Rng, slope: f64) -> Self {
        Ramp { base: rng.gen_range(0.1..0.9), gy: rng.gen_range(-slope..slope), gx: rng.gen_range(-slope..slope) }
    }

    fn at(&self, y: f64, x: f64) -> f64 {
        self.base + self.gy * (y - 0.5) + self.gx * (x - 0.5)
    }
}

fn random_shape(rng: &mut ChaCha8Rng) -> Shape {
    match rng.gen_range(0..3) {
        0 => {
            let angle: f64 = rng.gen_range(0.0..std::f64::consts::PI);
            Shape::Ellipse {
                cy: rng.gen(),
                cx: rng.gen(),
                ry: rng.gen_range(0.05..0.35),
                rx: rng.gen_range(0.05..0.35),
                cos: angle.cos(),
                sin: angle.sin(),
            }
        }
        1 => {
            let (y0, x0): (f64, f64) = (rng.gen_range(-0.1..0.9), rng.gen_range(-0.1..0.9));
            Shape::Rect { y0, x0, y1: y0 + rng.gen_range(0.08..0.5), x1: x0 + rng.gen_range(0.08..0.5) }
        }
        _ => {
            let angle: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            let (ny, nx) = (angle.sin(), angle.cos());
            let (py, px): (f64, f64) = (rng.gen(), rng.gen());
            Shape::HalfPlane { ny, nx, offset: ny * py + nx * px }
        }
    }
}

/// A deterministic `height x width` piecewise-smooth image in [0, 1].
pub fn synthetic_image(height: usize, width: usize, seed: u64) -> Result<GrayImage> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let background = Ramp::random(&mut rng, 0.4);
    let count = rng.gen_range(4..10);
    let layers: Vec<(Shape, Ramp)> =
        (0..count).map(|_| (random_shape(&mut rng), Ramp::random(&mut rng, 0.3))).collect();
    let waves: Vec<(f64, f64, f64, f64)> = (0..3)
        .map(|_| {
            (
                rng.gen_range(0.005..0.02),
                rng.gen_range(-12.0..12.0),
                rng.gen_range(-12.0..12.0),
                rng.gen_range(0.0..std::f64::consts::TAU),
            )
        })
        .collect();
    let scale = height.max(width) as f64;
    GrayImage::from_fn(height, width, |r, c| {
        let (y, x) = (r as f64 / scale, c as f64 / scale);
        let mut v = background.at(y, x);
        for (shape, ramp) in &layers {
            if shape.contains(y, x) {
                v = ramp.at(y, x);
            }
        }
        for &(amp, fy, fx, phase) in &waves {
            v += amp * (fy * y + fx * x + phase).sin();
        }
        v.clamp(0.0, 1.0)
    })
}

/// `count` images with seeds `seed, seed + 1, …`.
pub fn synthetic_corpus(count: usize, height: usize, width: usize, seed: u64) -> Result<Vec<GrayImage>> {
    (0..count as u64).map(|k| synthetic_image(height, width, seed.wrapping_add(k))).collect()
}
