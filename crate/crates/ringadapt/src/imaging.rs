//! Image container and the geometric primitives used by the projection
//! pipeline: unit normalization, isocenter-shift padding, diagonal padding,
//! bilinear rotation, exact quarter turns, and the inverse crop.
//!
//! Intensities are held as `f64` throughout; quantization to 8 bits happens
//! only when datasets are written. All operations are pure.

use crate::error::{Error, Result};

/// 2-D grayscale raster, row-major, nominal intensity range `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    pixels: Vec<f64>,
}

impl Image {
    pub fn new(height: usize, width: usize, pixels: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::EmptyImage);
        }
        if pixels.len() != height * width {
            return Err(Error::BadPixelCount {
                height,
                width,
                len: pixels.len(),
            });
        }
        Ok(Self {
            height,
            width,
            pixels,
        })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            pixels: vec![0.0; height * width],
        }
    }

    /// Builds an image from 8-bit intensities, mapping `v` to `v / 255`.
    pub fn from_u8(height: usize, width: usize, bytes: &[u8]) -> Result<Self> {
        let pixels = bytes.iter().map(|&v| f64::from(v) / 255.0).collect();
        Self::new(height, width, pixels)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [f64] {
        &mut self.pixels
    }

    pub fn is_square(&self) -> bool {
        self.height == self.width
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.pixels[row * self.width + col] = value;
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.pixels[row * self.width..(row + 1) * self.width]
    }

    pub fn sum(&self) -> f64 {
        self.pixels.iter().sum()
    }

    pub fn min_max(&self) -> (f64, f64) {
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        for &p in &self.pixels {
            min = min.min(p);
            max = max.max(p);
        }
        (min, max)
    }

    /// Bilinear sample at fractional `(row, col)`; coordinates outside the
    /// raster read as 0.
    pub fn sample_bilinear(&self, row: f64, col: f64) -> f64 {
        if !row.is_finite() || !col.is_finite() {
            return 0.0;
        }
        if row <= -1.0 || col <= -1.0 || row >= self.height as f64 || col >= self.width as f64 {
            return 0.0;
        }
        let r0 = row.floor();
        let c0 = col.floor();
        let fr = row - r0;
        let fc = col - c0;
        let r0i = r0 as i64;
        let c0i = c0 as i64;

        let mut acc = 0.0;
        for (dr, wr) in [(0i64, 1.0 - fr), (1i64, fr)] {
            let r = r0i + dr;
            if wr == 0.0 || r < 0 || r >= self.height as i64 {
                continue;
            }
            for (dc, wc) in [(0i64, 1.0 - fc), (1i64, fc)] {
                let c = c0i + dc;
                if wc == 0.0 || c < 0 || c >= self.width as i64 {
                    continue;
                }
                acc += wr * wc * self.get(r as usize, c as usize);
            }
        }
        acc
    }
}

/// Placement record for the two padding steps, used to invert them exactly.
///
/// `top/bottom/left/right` are the shift pads; `padded_side` is the square
/// side after the shift pad (before diagonal padding).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PadPlan {
    pub top: usize,
    pub bottom: usize,
    pub left: usize,
    pub right: usize,
    pub padded_side: usize,
}

/// Rescales intensities affinely onto `[0, 1]`; a constant image maps to all
/// zeros.
pub fn normalize_unit(img: &Image) -> Image {
    let (min, max) = img.min_max();
    let range = max - min;
    if range <= 0.0 {
        return Image::zeros(img.height, img.width);
    }
    let pixels = img.pixels.iter().map(|&p| (p - min) / range).collect();
    Image {
        height: img.height,
        width: img.width,
        pixels,
    }
}

/// Zero-pads a square image so that the padded center sits at the shifted
/// isocenter.
///
/// For a signed shift `(dx, dy)` the top pad is `max(|dx|,|dy|) + dy` and the
/// left pad `max(|dx|,|dy|) + dx`, with the overall side kept at
/// `M = 2(max(|dx|,|dy|) + ceil(H/2))`. Positive `dy` pads the top, which
/// moves the isocenter up relative to the image content (the resulting rings
/// are centered `dy` rows above the image center).
pub fn pad_for_shift(img: &Image, dx: i64, dy: i64) -> Result<(Image, PadPlan)> {
    if !img.is_square() {
        return Err(Error::NonSquare {
            height: img.height,
            width: img.width,
        });
    }
    let side = img.height;
    let max_allowed = side / 2;
    if dx.unsigned_abs() as usize > max_allowed || dy.unsigned_abs() as usize > max_allowed {
        return Err(Error::ShiftOutOfRange {
            dx,
            dy,
            side,
            max: max_allowed,
        });
    }

    let m = dx.abs().max(dy.abs());
    let top = (m + dy) as usize;
    let left = (m + dx) as usize;
    let padded_side = 2 * (m as usize + side.div_ceil(2));
    let bottom = padded_side - side - top;
    let right = padded_side - side - left;

    let plan = PadPlan {
        top,
        bottom,
        left,
        right,
        padded_side,
    };

    let mut out = Image::zeros(padded_side, padded_side);
    for r in 0..side {
        let src = img.row(r);
        let dst_start = (r + top) * padded_side + left;
        out.pixels[dst_start..dst_start + side].copy_from_slice(src);
    }
    Ok((out, plan))
}

/// Side after diagonal padding of a square image of side `m`: `ceil(m * sqrt(2))`,
/// bumped by one when the growth is odd so the pad splits evenly and the
/// center is preserved.
pub fn diagonal_side(m: usize) -> usize {
    let q = (m as f64 * std::f64::consts::SQRT_2).ceil() as usize;
    if (q - m) % 2 == 1 {
        q + 1
    } else {
        q
    }
}

/// Zero-pads a square image to at least its diagonal so rotations during
/// forward projection cannot move content out of frame. The pad splits
/// equally between opposite edges, keeping the center fixed.
pub fn pad_to_diagonal(img: &Image) -> Result<Image> {
    if !img.is_square() {
        return Err(Error::NonSquare {
            height: img.height,
            width: img.width,
        });
    }
    let m = img.height;
    let q = diagonal_side(m);
    let offset = (q - m) / 2;
    let mut out = Image::zeros(q, q);
    for r in 0..m {
        let src = img.row(r);
        let dst_start = (r + offset) * q + offset;
        out.pixels[dst_start..dst_start + m].copy_from_slice(src);
    }
    Ok(out)
}

/// Rotates by `angle_deg` about the geometric center `((H-1)/2, (W-1)/2)`
/// with bilinear interpolation; samples falling outside the source read 0.
/// Output has the same shape as the input.
pub fn rotate_bilinear(img: &Image, angle_deg: f64) -> Image {
    let theta = angle_deg.to_radians();
    let (sin_t, cos_t) = theta.sin_cos();
    let cy = (img.height as f64 - 1.0) / 2.0;
    let cx = (img.width as f64 - 1.0) / 2.0;

    let mut out = Image::zeros(img.height, img.width);
    for r in 0..img.height {
        let dy = r as f64 - cy;
        for c in 0..img.width {
            let dx = c as f64 - cx;
            let src_c = cos_t * dx + sin_t * dy + cx;
            let src_r = -sin_t * dx + cos_t * dy + cy;
            out.set(r, c, img.sample_bilinear(src_r, src_c));
        }
    }
    out
}

/// Exact counterclockwise quarter turn: `out[r][c] = in[c][W-1-r]`.
/// A pure pixel permutation, no interpolation; output shape is `W x H`.
pub fn rotate90(img: &Image) -> Image {
    let (h, w) = (img.height, img.width);
    let mut out = Image::zeros(w, h);
    for r in 0..w {
        for c in 0..h {
            out.set(r, c, img.get(c, w - 1 - r));
        }
    }
    out
}

/// Inverts the placement of `pad_for_shift` followed by `pad_to_diagonal`,
/// recovering the original frame. Also accepts an image that skipped the
/// diagonal step (side equal to `plan.padded_side`).
pub fn crop(img: &Image, plan: &PadPlan) -> Result<Image> {
    if !img.is_square() {
        return Err(Error::BadCropPlan(format!(
            "expected square image, got {}x{}",
            img.height, img.width
        )));
    }
    let q = img.height;
    let m = plan.padded_side;
    if q < m {
        return Err(Error::BadCropPlan(format!(
            "image side {q} smaller than plan side {m}"
        )));
    }
    if (q - m) % 2 != 0 {
        return Err(Error::BadCropPlan(format!(
            "image side {q} not reachable from plan side {m} by symmetric padding"
        )));
    }
    let offset = (q - m) / 2;
    let h = m
        .checked_sub(plan.top + plan.bottom)
        .filter(|&h| h > 0)
        .ok_or_else(|| Error::BadCropPlan("pads exceed padded side".into()))?;
    let w = m
        .checked_sub(plan.left + plan.right)
        .filter(|&w| w > 0)
        .ok_or_else(|| Error::BadCropPlan("pads exceed padded side".into()))?;

    let mut out = Image::zeros(h, w);
    for r in 0..h {
        let src_row = offset + plan.top + r;
        let src_start = src_row * q + offset + plan.left;
        out.pixels[r * w..(r + 1) * w].copy_from_slice(&img.pixels[src_start..src_start + w]);
    }
    Ok(out)
}
