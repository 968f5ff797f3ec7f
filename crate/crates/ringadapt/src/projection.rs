//! Discrete forward projection and filtered backprojection.
//!
//! Forward projection is rotate-then-sum: the projection at angle theta is
//! the column-wise sum of the image rotated by -theta. The inverse ramp-
//! filters each projection in the Fourier domain and smears it back along
//! its angle. All functions are pure and bit-deterministic.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::imaging::{rotate_bilinear, Image};

/// Stack of projections: `num_angles` rows of `num_bins` line integrals,
/// angle-major. Bin `b` across all rows is one detector channel.
#[derive(Debug, Clone, PartialEq)]
pub struct Sinogram {
    num_angles: usize,
    num_bins: usize,
    values: Vec<f64>,
    angles_deg: Vec<f64>,
}

impl Sinogram {
    pub fn new(num_angles: usize, num_bins: usize, values: Vec<f64>) -> Result<Self> {
        if num_angles == 0 || num_bins == 0 {
            return Err(Error::SinogramShape(
                "sinogram must have at least one angle and one bin".into(),
            ));
        }
        if values.len() != num_angles * num_bins {
            return Err(Error::SinogramShape(format!(
                "expected {} values for {num_angles}x{num_bins}, got {}",
                num_angles * num_bins,
                values.len()
            )));
        }
        let angles_deg = uniform_angles(num_angles);
        Ok(Self {
            num_angles,
            num_bins,
            values,
            angles_deg,
        })
    }

    pub fn num_angles(&self) -> usize {
        self.num_angles
    }

    pub fn num_bins(&self) -> usize {
        self.num_bins
    }

    /// Angles in degrees, strictly increasing in `[0, 180)`.
    pub fn angles_deg(&self) -> &[f64] {
        &self.angles_deg
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Projection at angle index `k`.
    pub fn projection(&self, k: usize) -> &[f64] {
        &self.values[k * self.num_bins..(k + 1) * self.num_bins]
    }
}

/// Uniform half-turn sweep: `theta_k = k * 180 / count` degrees.
pub fn uniform_angles(count: usize) -> Vec<f64> {
    (0..count)
        .map(|k| k as f64 * 180.0 / count as f64)
        .collect()
}

/// Forward projects a square image at `num_angles` uniformly spaced angles
/// over `[0, 180)` degrees. The projection at `theta_k` is the column-wise
/// sum of the image rotated by `-theta_k`; bins equal the image side.
pub fn radon(img: &Image, num_angles: usize) -> Result<Sinogram> {
    if !img.is_square() {
        return Err(Error::NonSquare {
            height: img.height(),
            width: img.width(),
        });
    }
    if num_angles == 0 {
        return Err(Error::SinogramShape(
            "forward projection needs at least one angle".into(),
        ));
    }
    let n = img.height();
    let mut values = vec![0.0; num_angles * n];
    for (k, chunk) in values.chunks_mut(n).enumerate() {
        let theta = k as f64 * 180.0 / num_angles as f64;
        let rotated = rotate_bilinear(img, -theta);
        for r in 0..n {
            let row = rotated.row(r);
            for (acc, &v) in chunk.iter_mut().zip(row) {
                *acc += v;
            }
        }
    }
    Sinogram::new(num_angles, n, values)
}

/// Ramp (Ram-Lak) frequency response and FFT plans for one projection
/// length, reusable across projections.
pub struct RampFilter {
    bins: usize,
    padded: usize,
    response: Vec<f64>,
    forward: std::sync::Arc<dyn rustfft::Fft<f64>>,
    inverse: std::sync::Arc<dyn rustfft::Fft<f64>>,
}

impl RampFilter {
    /// Builds the filter for projections of length `bins`, padded to the
    /// next power of two at or above `2 * bins`.
    pub fn new(bins: usize) -> Result<Self> {
        if bins < 2 {
            return Err(Error::SinogramShape(
                "ramp filter needs at least 2 bins".into(),
            ));
        }
        let padded = (2 * bins).next_power_of_two();

        // Spatial ramp kernel in circular layout: 1/4 at offset zero,
        // -1/(pi n)^2 at odd offsets, zero at even offsets. Its DFT (doubled,
        // real part) is the band-limited |f| response.
        let mut kernel = vec![0.0f64; padded];
        kernel[0] = 0.25;
        let mut n = 1usize;
        while n <= padded / 2 {
            let v = -1.0 / (std::f64::consts::PI * n as f64).powi(2);
            kernel[n] = v;
            kernel[padded - n] = v;
            n += 2;
        }
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(padded);
        let inverse = planner.plan_fft_inverse(padded);

        let mut buf: Vec<Complex<f64>> = kernel.iter().map(|&x| Complex::new(x, 0.0)).collect();
        forward.process(&mut buf);
        let response = buf.iter().map(|c| 2.0 * c.re).collect();

        Ok(Self {
            bins,
            padded,
            response,
            forward,
            inverse,
        })
    }

    /// Filters one projection: zero-pad, multiply by the ramp response in
    /// the frequency domain, inverse-transform, truncate.
    pub fn apply(&self, projection: &[f64]) -> Result<Vec<f64>> {
        if projection.len() != self.bins {
            return Err(Error::SinogramShape(format!(
                "filter built for {} bins, got projection of {}",
                self.bins,
                projection.len()
            )));
        }
        let mut buf = vec![Complex::new(0.0, 0.0); self.padded];
        for (slot, &v) in buf.iter_mut().zip(projection) {
            slot.re = v;
        }
        self.forward.process(&mut buf);
        for (slot, &h) in buf.iter_mut().zip(&self.response) {
            *slot *= h;
        }
        self.inverse.process(&mut buf);
        let scale = 1.0 / self.padded as f64;
        Ok(buf[..self.bins].iter().map(|c| c.re * scale).collect())
    }
}

/// Convenience one-shot ramp filtering of a single projection.
pub fn ramp_filter(projection: &[f64]) -> Result<Vec<f64>> {
    RampFilter::new(projection.len())?.apply(projection)
}

/// Filtered backprojection onto an `out_side x out_side` image; `out_side`
/// must equal the sinogram's bin count.
///
/// Each ramp-filtered projection is smeared back along its angle, sampling
/// at `t = cos(theta) * sx + sin(theta) * sy + cx` with linear interpolation
/// (zero outside the detector); the sum is scaled by `pi / (2 A)`. Pixels
/// outside the inscribed circle are kept: callers difference two
/// reconstructions, so masking would only discard information.
pub fn iradon(sino: &Sinogram, out_side: usize) -> Result<Image> {
    if out_side != sino.num_bins {
        return Err(Error::SinogramShape(format!(
            "output side {out_side} must match detector bins {}",
            sino.num_bins
        )));
    }
    let n = out_side;
    let center = (n as f64 - 1.0) / 2.0;
    let filter = RampFilter::new(sino.num_bins)?;
    let mut out = Image::zeros(n, n);

    for k in 0..sino.num_angles {
        let filtered = filter.apply(sino.projection(k))?;
        let (sin_t, cos_t) = sino.angles_deg[k].to_radians().sin_cos();
        for r in 0..n {
            let sy = r as f64 - center;
            let base = cos_t * -center + sin_t * sy + center;
            for c in 0..n {
                // t = cos*sx + sin*sy + cx, with sx = c - center
                let t = base + cos_t * c as f64;
                if t <= -1.0 || t >= n as f64 {
                    continue;
                }
                let t0 = t.floor();
                let frac = t - t0;
                let i0 = t0 as i64;
                let mut v = 0.0;
                if i0 >= 0 && (i0 as usize) < n {
                    v += (1.0 - frac) * filtered[i0 as usize];
                }
                let i1 = i0 + 1;
                if frac > 0.0 && i1 >= 0 && (i1 as usize) < n {
                    v += frac * filtered[i1 as usize];
                }
                out.set(r, c, out.get(r, c) + v);
            }
        }
    }

    let scale = std::f64::consts::PI / (2.0 * sino.num_angles as f64);
    for p in out.pixels_mut() {
        *p *= scale;
    }
    Ok(out)
}
