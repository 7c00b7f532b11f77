use crate::error::{Error, Result};
use crate::raster::GrayImage;

/// Edge length of the square structuring element used by [`residual_handle`].
pub const STRUCTURING_SIZE: usize = 5;

/// Two-valued image, row-major, one byte per pixel (0 or 1).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("binary mask must be non-empty"));
        }
        if pixels.len() != width * height {
            return Err(Error::ShapeMismatch(format!(
                "{} pixels for a {width}x{height} mask",
                pixels.len()
            )));
        }
        if let Some(v) = pixels.iter().find(|&&p| p > 1) {
            return Err(Error::invalid(format!("binary mask value {v}")));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> bool) -> Result<Self> {
        let pixels = (0..height)
            .flat_map(|y| (0..width).map(move |x| (x, y)))
            .map(|(x, y)| u8::from(f(x, y)))
            .collect();
        Self::new(width, height, pixels)
    }

    /// Foreground wherever the pixel is strictly positive.
    pub fn binarize(image: &GrayImage) -> Self {
        Self {
            width: image.width(),
            height: image.height(),
            pixels: image.pixels().iter().map(|&p| u8::from(p > 0.0)).collect(),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.pixels[y * self.width + x] == 1
    }

    pub fn count(&self) -> usize {
        self.pixels.iter().map(|&p| p as usize).sum()
    }

    pub fn to_image(&self) -> GrayImage {
        GrayImage::new(
            self.width,
            self.height,
            self.pixels.iter().map(|&p| f64::from(p)).collect(),
        )
        .expect("mask dimensions are valid")
    }

    /// True where every pixel of `self` is also set in `other`.
    pub fn is_subset_of(&self, other: &Self) -> bool {
        self.width == other.width
            && self.height == other.height
            && self.pixels.iter().zip(&other.pixels).all(|(&a, &b)| a <= b)
    }
}

fn check_size(size: usize) -> Result<()> {
    if size == 0 || size % 2 == 0 {
        return Err(Error::invalid(format!(
            "structuring element size must be odd and positive, got {size}"
        )));
    }
    Ok(())
}

/// Max (`dilate`) or min over a `size × size` window clipped at the border,
/// done as two 1D passes.
fn window_extreme(mask: &BinaryMask, size: usize, dilate: bool) -> BinaryMask {
    let r = size / 2;
    let (w, h) = (mask.width, mask.height);
    let pick = |acc: u8, v: u8| if dilate { acc.max(v) } else { acc.min(v) };
    let init = if dilate { 0 } else { 1 };
    let mut rows = vec![0u8; w * h];
    for y in 0..h {
        let line = &mask.pixels[y * w..(y + 1) * w];
        for x in 0..w {
            let lo = x.saturating_sub(r);
            let hi = (x + r).min(w - 1);
            rows[y * w + x] = line[lo..=hi].iter().fold(init, |a, &v| pick(a, v));
        }
    }
    let mut out = vec![0u8; w * h];
    for y in 0..h {
        let lo = y.saturating_sub(r);
        let hi = (y + r).min(h - 1);
        for x in 0..w {
            out[y * w + x] = (lo..=hi).fold(init, |a, yy| pick(a, rows[yy * w + x]));
        }
    }
    BinaryMask {
        width: w,
        height: h,
        pixels: out,
    }
}

pub fn dilate(mask: &BinaryMask, size: usize) -> Result<BinaryMask> {
    check_size(size)?;
    Ok(window_extreme(mask, size, true))
}

pub fn erode(mask: &BinaryMask, size: usize) -> Result<BinaryMask> {
    check_size(size)?;
    Ok(window_extreme(mask, size, false))
}

/// Dilation followed by erosion.
pub fn close(mask: &BinaryMask, size: usize) -> Result<BinaryMask> {
    erode(&dilate(mask, size)?, size)
}

/// Erosion followed by dilation.
pub fn open(mask: &BinaryMask, size: usize) -> Result<BinaryMask> {
    dilate(&erode(mask, size)?, size)
}

/// Binarize (`> 0`), close, then open with the 5×5 element.
pub fn residual_handle(mask: &GrayImage) -> Result<BinaryMask> {
    if mask.width() == 0 || mask.height() == 0 {
        return Err(Error::invalid("residual_handle on an empty image"));
    }
    open(&close(&BinaryMask::binarize(mask), STRUCTURING_SIZE)?, STRUCTURING_SIZE)
}
