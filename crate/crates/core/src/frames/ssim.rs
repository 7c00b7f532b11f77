use crate::error::{Error, Result};
use crate::raster::GrayImage;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_C1: f64 = (0.01 * 255.0) * (0.01 * 255.0);
pub const SSIM_C2: f64 = (0.03 * 255.0) * (0.03 * 255.0);

fn gaussian_kernel() -> [f64; SSIM_WINDOW] {
    let c = (SSIM_WINDOW / 2) as f64;
    let mut k = [0.0; SSIM_WINDOW];
    for (i, v) in k.iter_mut().enumerate() {
        let d = i as f64 - c;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

/// Valid-mode separable filtering of a row-major `w × h` plane.
fn filter_valid(plane: &[f64], w: usize, h: usize, k: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let ow = w - SSIM_WINDOW + 1;
    let oh = h - SSIM_WINDOW + 1;
    let mut rows = vec![0.0; ow * h];
    for y in 0..h {
        let line = &plane[y * w..(y + 1) * w];
        for x in 0..ow {
            rows[y * ow + x] = k.iter().zip(&line[x..x + SSIM_WINDOW]).map(|(a, b)| a * b).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = k
                .iter()
                .enumerate()
                .map(|(i, kv)| kv * rows[(y + i) * ow + x])
                .sum();
        }
    }
    out
}

/// Local SSIM values over every full window, row-major, with the image
/// scaled to 0–255.
pub fn ssim_map(a: &GrayImage, b: &GrayImage) -> Result<Vec<f64>> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(Error::ShapeMismatch(format!(
            "ssim of {}x{} vs {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    let (w, h) = (a.width(), a.height());
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(Error::invalid(format!(
            "ssim needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels, got {w}x{h}"
        )));
    }
    let x: Vec<f64> = a.pixels().iter().map(|v| v * 255.0).collect();
    let y: Vec<f64> = b.pixels().iter().map(|v| v * 255.0).collect();
    let k = gaussian_kernel();
    let product = |p: &[f64], q: &[f64]| -> Vec<f64> { p.iter().zip(q).map(|(a, b)| a * b).collect() };
    let mu_x = filter_valid(&x, w, h, &k);
    let mu_y = filter_valid(&y, w, h, &k);
    let xx = filter_valid(&product(&x, &x), w, h, &k);
    let yy = filter_valid(&product(&y, &y), w, h, &k);
    let xy = filter_valid(&product(&x, &y), w, h, &k);
    Ok((0..mu_x.len())
        .map(|i| {
            let (mx, my) = (mu_x[i], mu_y[i]);
            let vx = xx[i] - mx * mx;
            let vy = yy[i] - my * my;
            let cov = xy[i] - mx * my;
            ((2.0 * mx * my + SSIM_C1) * (2.0 * cov + SSIM_C2))
                / ((mx * mx + my * my + SSIM_C1) * (vx + vy + SSIM_C2))
        })
        .collect())
}

/// Mean of [`ssim_map`].
pub fn ssim(a: &GrayImage, b: &GrayImage) -> Result<f64> {
    let map = ssim_map(a, b)?;
    Ok(map.iter().sum::<f64>() / map.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn pattern(seed: u64, w: usize, h: usize) -> GrayImage {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let phase: f64 = rng.gen_range(0.0..6.0);
        let noise: Vec<f64> = (0..w * h).map(|_| rng.gen_range(0.0..0.3)).collect();
        GrayImage::from_fn(w, h, |x, y| {
            let v = 0.35 + 0.3 * ((x as f64 * 0.7 + phase).sin() * (y as f64 * 0.4).cos()) + noise[y * w + x];
            v.clamp(0.0, 1.0)
        })
        .unwrap()
    }

    /// Direct per-window statistics with explicit 2D Gaussian weights.
    fn oracle(a: &GrayImage, b: &GrayImage) -> f64 {
        let c = 5.0;
        let mut wts = [[0.0; 11]; 11];
        let mut total = 0.0;
        for (i, row) in wts.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                let d2 = (i as f64 - c).powi(2) + (j as f64 - c).powi(2);
                *v = (-d2 / (2.0 * 1.5 * 1.5)).exp();
                total += *v;
            }
        }
        let mut sum = 0.0;
        let mut n = 0;
        for y0 in 0..=a.height() - 11 {
            for x0 in 0..=a.width() - 11 {
                let (mut mx, mut my) = (0.0, 0.0);
                for i in 0..11 {
                    for j in 0..11 {
                        let wgt = wts[i][j] / total;
                        mx += wgt * 255.0 * a.get(x0 + j, y0 + i);
                        my += wgt * 255.0 * b.get(x0 + j, y0 + i);
                    }
                }
                let (mut vx, mut vy, mut cxy) = (0.0, 0.0, 0.0);
                for i in 0..11 {
                    for j in 0..11 {
                        let wgt = wts[i][j] / total;
                        let dx = 255.0 * a.get(x0 + j, y0 + i) - mx;
                        let dy = 255.0 * b.get(x0 + j, y0 + i) - my;
                        vx += wgt * dx * dx;
                        vy += wgt * dy * dy;
                        cxy += wgt * dx * dy;
                    }
                }
                let c1 = 6.5025;
                let c2 = 58.5225;
                sum += ((2.0 * mx * my + c1) * (2.0 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
                n += 1;
            }
        }
        sum / n as f64
    }

    #[test]
    fn identity_is_one() {
        for seed in 0..5 {
            let x = pattern(seed, 32, 24);
            assert!((ssim(&x, &x).unwrap() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn inverted_image_is_negative() {
        let x = GrayImage::from_fn(32, 32, |x, y| if (x / 3 + y / 5) % 2 == 0 { 0.05 } else { 0.95 }).unwrap();
        let inv = GrayImage::from_fn(32, 32, |a, b| 1.0 - x.get(a, b)).unwrap();
        assert!(ssim(&x, &inv).unwrap() < 0.0);
    }

    #[test]
    fn matches_windowed_statistics_oracle() {
        for seed in 0..10 {
            let a = pattern(seed, 16, 16);
            let b = pattern(seed + 100, 16, 16);
            let got = ssim(&a, &b).unwrap();
            let want = oracle(&a, &b);
            assert!((got - want).abs() < 1e-9, "seed {seed}: {got} vs {want}");
            assert!((ssim(&b, &a).unwrap() - got).abs() < 1e-12);
        }
    }

    #[test]
    fn constants() {
        assert!((SSIM_C1 - 6.5025).abs() < 1e-12);
        assert!((SSIM_C2 - 58.5225).abs() < 1e-12);
    }

    #[test]
    fn errors() {
        let a = pattern(0, 16, 16);
        assert!(ssim(&a, &pattern(0, 16, 17)).is_err());
        let small = pattern(0, 10, 16);
        assert!(ssim(&small, &small).is_err());
    }
}
