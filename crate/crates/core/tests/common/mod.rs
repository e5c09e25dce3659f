//! Helpers shared by the integration tests and the acceptance harness.
#![allow(dead_code)]

use landmark_expr::codec::landmark_distance;
use landmark_expr::data::{Image, TrainingPair};
use landmark_expr::metrics::psnr_images;
use landmark_expr::train::{Model, TrainConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Desk-scale configuration: 64x64 faces, narrow networks, otherwise the
/// default hyperparameters.
pub fn desk_config(max_steps: u64) -> TrainConfig {
    TrainConfig {
        resolution: 64,
        base_filters: 16,
        max_steps: Some(max_steps),
        ..Default::default()
    }
}

/// Tiny configuration for fast mechanical tests.
pub fn tiny_config(max_steps: u64) -> TrainConfig {
    TrainConfig {
        resolution: 32,
        base_filters: 4,
        max_steps: Some(max_steps),
        ..Default::default()
    }
}

/// Mean PSNR (dB) and mean landmark L2 (px) of deterministic generation on
/// training pairs.
pub fn pair_scores(model: &Model, pairs: &[TrainingPair]) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (mut psnr, mut l2) = (0.0, 0.0);
    for p in pairs {
        let g = model
            .generate(&p.x.image, &p.y.expression, p.y.intensity, true, &mut rng)
            .expect("generation");
        psnr += psnr_images(&g.face, &p.y.image).expect("psnr");
        l2 += landmark_distance(&g.landmarks, &p.y.landmarks);
    }
    let n = pairs.len() as f64;
    (psnr / n, l2 / n)
}

/// Independent PSNR: direct double loop over 8-bit values.
pub fn oracle_psnr(a: &Image, b: &Image) -> f64 {
    let to8 = |v: f32| (((v as f64 + 1.0) * 127.5).round()).clamp(0.0, 255.0);
    let mut se = 0.0;
    let mut n = 0.0;
    for r in 0..a.height() {
        for c in 0..a.width() {
            for ch in 0..3 {
                let d = to8(a.get(r, c, ch)) - to8(b.get(r, c, ch));
                se += d * d;
                n += 1.0;
            }
        }
    }
    if se == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (255.0 * 255.0 / (se / n)).log10()
    }
}

/// Independent SSIM: explicit 2-D Gaussian window evaluated at every valid
/// position, statistics accumulated directly (no separable filtering).
pub fn oracle_ssim(a: &Image, b: &Image) -> f64 {
    const K: usize = 11;
    const SIGMA: f64 = 1.5;
    let to8 = |v: f32| (((v as f64 + 1.0) * 127.5).round()).clamp(0.0, 255.0);
    let mut window = [[0.0f64; K]; K];
    let mut total = 0.0;
    for (u, row) in window.iter_mut().enumerate() {
        for (v, w) in row.iter_mut().enumerate() {
            let du = u as f64 - 5.0;
            let dv = v as f64 - 5.0;
            *w = (-(du * du + dv * dv) / (2.0 * SIGMA * SIGMA)).exp();
            total += *w;
        }
    }
    let c1 = (0.01f64 * 255.0).powi(2);
    let c2 = (0.03f64 * 255.0).powi(2);
    let (h, w) = (a.height(), a.width());
    let mut sum = 0.0;
    let mut count = 0.0;
    for ch in 0..3 {
        for i in 0..=h - K {
            for j in 0..=w - K {
                let (mut mx, mut my, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for u in 0..K {
                    for v in 0..K {
                        let wt = window[u][v] / total;
                        let x = to8(a.get(i + u, j + v, ch));
                        let y = to8(b.get(i + u, j + v, ch));
                        mx += wt * x;
                        my += wt * y;
                        sxx += wt * x * x;
                        syy += wt * y * y;
                        sxy += wt * x * y;
                    }
                }
                let vx = sxx - mx * mx;
                let vy = syy - my * my;
                let cov = sxy - mx * my;
                sum +=
                    ((2.0 * mx * my + c1) * (2.0 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
                count += 1.0;
            }
        }
    }
    sum / count
}

/// Random image with values on the 8-bit grid.
pub fn random_image(h: usize, w: usize, rng: &mut ChaCha8Rng) -> Image {
    use rand::Rng;
    let data = (0..h * w * 3)
        .map(|_| rng.random_range(0..=255u8) as f32 / 127.5 - 1.0)
        .collect();
    Image::new(h, w, data).expect("image")
}

/// Perturb an image by bounded noise (keeps structure so SSIM is non-trivial).
pub fn perturbed(img: &Image, amplitude: f32, rng: &mut ChaCha8Rng) -> Image {
    use rand::Rng;
    let data = img
        .data()
        .iter()
        .map(|v| (v + rng.random_range(-amplitude..=amplitude)).clamp(-1.0, 1.0))
        .collect();
    Image::new(img.height(), img.width(), data).expect("image")
}
