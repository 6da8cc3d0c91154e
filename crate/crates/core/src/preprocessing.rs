//! Image loading, saliency, point-of-interest detection and patch whitening.
//!
//! The saliency map is a difference of Gaussians applied to a Sobel
//! gradient-magnitude image. Points of interest are taken greedily from it
//! with non-maximum suppression, and the square patch around each one is
//! whitened with a `f·exp(-(f/f0)^4)` frequency filter before encoding.

use std::path::Path;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Row-major luminance image with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::arg("image dimensions must be non-zero"));
        }
        if data.len() != width * height {
            return Err(Error::DimensionMismatch {
                expected: width * height,
                got: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite() || *v < 0.0 || *v > 1.0) {
            return Err(Error::arg("image values must be finite and in [0, 1]"));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Builds an image without range checks; used for intermediate maps
    /// (gradients, saliency before normalization) that are not luminance.
    pub(crate) fn from_raw(width: usize, height: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), width * height);
        Self {
            width,
            height,
            data,
        }
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self::from_raw(width, height, vec![value.clamp(0.0, 1.0); width * height])
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y).clamp(0.0, 1.0));
            }
        }
        Self::from_raw(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    /// Pixel lookup with replicated borders.
    #[inline]
    fn get_clamped(&self, x: isize, y: isize) -> f64 {
        let x = x.clamp(0, self.width as isize - 1) as usize;
        let y = y.clamp(0, self.height as isize - 1) as usize;
        self.data[y * self.width + x]
    }

    /// Bilinear sample at continuous coordinates, clamped to the image.
    pub fn sample_bilinear(&self, x: f64, y: f64) -> f64 {
        let x = x.clamp(0.0, (self.width - 1) as f64);
        let y = y.clamp(0.0, (self.height - 1) as f64);
        let x0 = x.floor() as usize;
        let y0 = y.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;
        let top = self.get(x0, y0) * (1.0 - fx) + self.get(x1, y0) * fx;
        let bottom = self.get(x0, y1) * (1.0 - fx) + self.get(x1, y1) * fx;
        top * (1.0 - fy) + bottom * fy
    }

    /// Converts to an 8-bit image for writing.
    pub fn to_luma8(&self) -> image::GrayImage {
        image::GrayImage::from_fn(self.width as u32, self.height as u32, |x, y| {
            let v = self.get(x as usize, y as usize).clamp(0.0, 1.0);
            image::Luma([(v * 255.0).round() as u8])
        })
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        self.to_luma8().save(path)?;
        Ok(())
    }
}

/// Salient image location around which a landmark patch is extracted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointOfInterest {
    pub x: usize,
    pub y: usize,
    pub saliency: f64,
}

/// Square whitened patch, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    side: usize,
    data: Vec<f64>,
}

impl Patch {
    pub fn new(side: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != side * side {
            return Err(Error::DimensionMismatch {
                expected: side * side,
                got: data.len(),
            });
        }
        Ok(Self { side, data })
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn dim(&self) -> usize {
        self.data.len()
    }

    /// Unit-L2 copy of the patch values (zero patches stay zero).
    pub fn normalized(&self) -> Vec<f64> {
        let mut v = self.data.clone();
        linalg::normalize(&mut v);
        v
    }
}

/// Detector and patch settings shared by every pipeline stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub patch_side: usize,
    pub max_pois: usize,
    pub nms_radius: f64,
    pub dog_sigma_small: f64,
    pub dog_sigma_large: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            patch_side: 32,
            max_pois: 20,
            nms_radius: 16.0,
            dog_sigma_small: 1.0,
            dog_sigma_large: 3.0,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.patch_side < 4 {
            return Err(Error::arg("patch side must be at least 4"));
        }
        if self.max_pois == 0 {
            return Err(Error::arg("max_pois must be at least 1"));
        }
        if !(self.dog_sigma_small > 0.0 && self.dog_sigma_small < self.dog_sigma_large) {
            return Err(Error::arg("DoG sigmas must satisfy 0 < small < large"));
        }
        if !(self.nms_radius >= 0.0) {
            return Err(Error::arg("NMS radius must be non-negative"));
        }
        Ok(())
    }

    /// Runs saliency, detection and patch extraction on one image.
    pub fn landmarks(&self, img: &GrayImage) -> Result<Vec<(PointOfInterest, Patch)>> {
        let sal = saliency_map(img, self.dog_sigma_small, self.dog_sigma_large)?;
        let pois = detect_pois_for_patches(&sal, self.max_pois, self.nms_radius, self.patch_side)?;
        pois.into_iter()
            .map(|p| extract_patch(img, &p, self.patch_side).map(|patch| (p, patch)))
            .collect()
    }
}

/// Loads a raster file as grayscale and resizes it bilinearly.
pub fn load_gray(path: &Path, target_width: usize, target_height: usize) -> Result<GrayImage> {
    if target_width == 0 || target_height == 0 {
        return Err(Error::arg("target dimensions must be non-zero"));
    }
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let decoded = image::load_from_memory(&bytes)?.to_luma32f();
    let (w, h) = decoded.dimensions();
    let data = decoded
        .into_raw()
        .into_iter()
        .map(|v| (v as f64).clamp(0.0, 1.0))
        .collect();
    let img = GrayImage::from_raw(w as usize, h as usize, data);
    resize_bilinear(&img, target_width, target_height)
}

/// Bilinear resize with pixel-centre alignment:
/// `src = (dst + 0.5) * src_len / dst_len - 0.5`, clamped to the image.
pub fn resize_bilinear(img: &GrayImage, width: usize, height: usize) -> Result<GrayImage> {
    if width == 0 || height == 0 {
        return Err(Error::arg("target dimensions must be non-zero"));
    }
    if width == img.width && height == img.height {
        return Ok(img.clone());
    }
    let sx = img.width as f64 / width as f64;
    let sy = img.height as f64 / height as f64;
    let mut data = Vec::with_capacity(width * height);
    for y in 0..height {
        let src_y = (y as f64 + 0.5) * sy - 0.5;
        for x in 0..width {
            let src_x = (x as f64 + 0.5) * sx - 0.5;
            data.push(img.sample_bilinear(src_x, src_y));
        }
    }
    Ok(GrayImage::from_raw(width, height, data))
}

/// Normalized sampled Gaussian with radius `ceil(3σ)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Separable Gaussian blur with replicated borders.
pub fn gaussian_blur(img: &GrayImage, sigma: f64) -> GrayImage {
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as isize;
    let (w, h) = (img.width, img.height);
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            tmp[y * w + x] = k
                .iter()
                .enumerate()
                .map(|(i, kv)| kv * img.get_clamped(x as isize + i as isize - r, y as isize))
                .sum();
        }
    }
    let tmp = GrayImage::from_raw(w, h, tmp);
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            out[y * w + x] = k
                .iter()
                .enumerate()
                .map(|(i, kv)| kv * tmp.get_clamped(x as isize, y as isize + i as isize - r))
                .sum();
        }
    }
    GrayImage::from_raw(w, h, out)
}

/// Sobel gradient magnitude with replicated borders.
pub fn edge_energy(img: &GrayImage) -> GrayImage {
    let (w, h) = (img.width, img.height);
    let mut out = vec![0.0; w * h];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let p = |dx: isize, dy: isize| img.get_clamped(x + dx, y + dy);
            let gx = (p(1, -1) + 2.0 * p(1, 0) + p(1, 1)) - (p(-1, -1) + 2.0 * p(-1, 0) + p(-1, 1));
            let gy = (p(-1, 1) + 2.0 * p(0, 1) + p(1, 1)) - (p(-1, -1) + 2.0 * p(0, -1) + p(1, -1));
            out[y as usize * w + x as usize] = (gx * gx + gy * gy).sqrt();
        }
    }
    GrayImage::from_raw(w, h, out)
}

/// Signed difference of Gaussians, `G_small * img - G_large * img`.
pub fn dog_response(img: &GrayImage, sigma_small: f64, sigma_large: f64) -> Vec<f64> {
    let a = gaussian_blur(img, sigma_small);
    let b = gaussian_blur(img, sigma_large);
    a.data.iter().zip(&b.data).map(|(x, y)| x - y).collect()
}

/// Saliency before min-max normalization: `|DoG(edge energy)|` with a zeroed
/// border of width `ceil(3·σ_large)`.
pub fn saliency_unnormalized(img: &GrayImage, sigma_small: f64, sigma_large: f64) -> Result<GrayImage> {
    if !(sigma_small > 0.0 && sigma_small < sigma_large) {
        return Err(Error::arg("DoG sigmas must satisfy 0 < small < large"));
    }
    let energy = edge_energy(img);
    let mut sal: Vec<f64> = dog_response(&energy, sigma_small, sigma_large)
        .into_iter()
        .map(f64::abs)
        .collect();
    let border = (3.0 * sigma_large).ceil() as usize;
    let (w, h) = (img.width, img.height);
    for y in 0..h {
        for x in 0..w {
            if x < border || y < border || x + border >= w || y + border >= h {
                sal[y * w + x] = 0.0;
            }
        }
    }
    Ok(GrayImage::from_raw(w, h, sal))
}

/// Saliency map min-max normalized to `[0, 1]`; flat responses map to zero.
pub fn saliency_map(img: &GrayImage, sigma_small: f64, sigma_large: f64) -> Result<GrayImage> {
    let mut sal = saliency_unnormalized(img, sigma_small, sigma_large)?;
    let (lo, hi) = sal
        .data
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let range = hi - lo;
    if range < 1e-12 {
        sal.data.iter_mut().for_each(|v| *v = 0.0);
    } else {
        sal.data.iter_mut().for_each(|v| *v = (*v - lo) / range);
    }
    Ok(sal)
}

const MIN_SALIENCY: f64 = 1e-4;

/// Greedy non-maximum suppression over the whole map.
pub fn detect_pois(sal: &GrayImage, max_pois: usize, min_separation: f64) -> Result<Vec<PointOfInterest>> {
    detect_in_window(sal, max_pois, min_separation, (0, sal.width, 0, sal.height))
}

/// Greedy non-maximum suppression restricted to centres whose
/// `patch_side` window (as cut by [`extract_patch`]) fits in the image.
pub fn detect_pois_for_patches(
    sal: &GrayImage,
    max_pois: usize,
    min_separation: f64,
    patch_side: usize,
) -> Result<Vec<PointOfInterest>> {
    let half = patch_side / 2;
    if patch_side > sal.width || patch_side > sal.height {
        return Ok(Vec::new());
    }
    let x_end = sal.width - patch_side + half + 1;
    let y_end = sal.height - patch_side + half + 1;
    detect_in_window(sal, max_pois, min_separation, (half, x_end, half, y_end))
}

fn detect_in_window(
    sal: &GrayImage,
    max_pois: usize,
    min_separation: f64,
    (x0, x1, y0, y1): (usize, usize, usize, usize),
) -> Result<Vec<PointOfInterest>> {
    if max_pois == 0 {
        return Err(Error::arg("max_pois must be at least 1"));
    }
    let w = sal.width;
    let mut values = sal.data.clone();
    let mut out = Vec::new();
    let r = min_separation.max(0.0);
    let reach = r.ceil() as isize;
    while out.len() < max_pois {
        let mut best: Option<(usize, usize, f64)> = None;
        for y in y0..y1 {
            for x in x0..x1 {
                let v = values[y * w + x];
                if best.map_or(true, |(_, _, b)| v > b) {
                    best = Some((x, y, v));
                }
            }
        }
        let Some((bx, by, bv)) = best else { break };
        if bv < MIN_SALIENCY {
            break;
        }
        out.push(PointOfInterest {
            x: bx,
            y: by,
            saliency: bv,
        });
        values[by * w + bx] = 0.0;
        for dy in -reach..=reach {
            for dx in -reach..=reach {
                let (x, y) = (bx as isize + dx, by as isize + dy);
                if x < 0 || y < 0 || x >= w as isize || y >= sal.height as isize {
                    continue;
                }
                if ((dx * dx + dy * dy) as f64) < r * r {
                    values[y as usize * w + x as usize] = 0.0;
                }
            }
        }
    }
    Ok(out)
}

/// Cuts the `side`×`side` window starting at `(x - side/2, y - side/2)` and
/// whitens it.
pub fn extract_patch(img: &GrayImage, poi: &PointOfInterest, side: usize) -> Result<Patch> {
    let half = side / 2;
    if poi.x < half || poi.y < half || poi.x - half + side > img.width || poi.y - half + side > img.height {
        return Err(Error::OutOfBounds(format!(
            "{side}px patch at ({}, {}) leaves the {}x{} image",
            poi.x, poi.y, img.width, img.height
        )));
    }
    let (x0, y0) = (poi.x - half, poi.y - half);
    let mut raw = Vec::with_capacity(side * side);
    for y in y0..y0 + side {
        raw.extend_from_slice(&img.data[y * img.width + x0..y * img.width + x0 + side]);
    }
    whiten(&raw, side)
}

/// Radial whitening gain at spatial frequency `(fx, fy)` in cycles/pixel:
/// `(f/f0)·exp(-(f/f0)^4)` with `f0 = 0.8 · Nyquist`.
pub fn whitening_gain(fx: f64, fy: f64) -> f64 {
    const F0: f64 = 0.8 * 0.5;
    let u = (fx * fx + fy * fy).sqrt() / F0;
    u * (-u.powi(4)).exp()
}

fn fft_freq(k: usize, n: usize) -> f64 {
    if k <= n / 2 {
        k as f64 / n as f64
    } else {
        (k as f64 - n as f64) / n as f64
    }
}

/// Mean removal followed by the frequency-domain whitening filter.
pub fn whiten(raw: &[f64], side: usize) -> Result<Patch> {
    if side < 4 {
        return Err(Error::arg("patch side must be at least 4"));
    }
    if raw.len() != side * side {
        return Err(Error::DimensionMismatch {
            expected: side * side,
            got: raw.len(),
        });
    }
    let m = linalg::mean(raw);
    let mut buf: Vec<Complex<f64>> = raw.iter().map(|v| Complex::new(v - m, 0.0)).collect();

    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(side);
    let inv = planner.plan_fft_inverse(side);
    fft2(&mut buf, side, fwd.as_ref());
    for ky in 0..side {
        let fy = fft_freq(ky, side);
        for kx in 0..side {
            buf[ky * side + kx] *= whitening_gain(fft_freq(kx, side), fy);
        }
    }
    fft2(&mut buf, side, inv.as_ref());

    let scale = 1.0 / (side * side) as f64;
    let mut data: Vec<f64> = buf.iter().map(|c| c.re * scale).collect();
    let residual_mean = linalg::mean(&data);
    data.iter_mut().for_each(|v| *v -= residual_mean);
    Patch::new(side, data)
}

fn fft2(buf: &mut [Complex<f64>], side: usize, fft: &dyn rustfft::Fft<f64>) {
    for row in buf.chunks_exact_mut(side) {
        fft.process(row);
    }
    let mut col = vec![Complex::new(0.0, 0.0); side];
    for x in 0..side {
        for y in 0..side {
            col[y] = buf[y * side + x];
        }
        fft.process(&mut col);
        for y in 0..side {
            buf[y * side + x] = col[y];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn peaks(w: usize, h: usize, pts: &[(usize, usize, f64)]) -> GrayImage {
        let mut data = vec![0.0; w * h];
        for &(x, y, v) in pts {
            data[y * w + x] = v;
        }
        GrayImage::from_raw(w, h, data)
    }

    #[test]
    fn image_rejects_bad_input() {
        assert!(GrayImage::new(2, 2, vec![0.0; 3]).is_err());
        assert!(GrayImage::new(1, 1, vec![1.5]).is_err());
        assert!(GrayImage::new(0, 1, vec![]).is_err());
    }

    #[test]
    fn resize_checkerboard_matches_hand_bilinear() {
        let img = GrayImage::new(2, 2, vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        let up = resize_bilinear(&img, 4, 4).unwrap();
        // source coordinates along each axis: -0.25→0, 0.25, 0.75, 1.25→1
        let t = [0.0, 0.25, 0.75, 1.0];
        for y in 0..4 {
            for x in 0..4 {
                let (fx, fy) = (t[x], t[y]);
                let expect = (1.0 - fy) * fx + fy * (1.0 - fx);
                assert!((up.get(x, y) - expect).abs() < 1e-12, "({x},{y})");
            }
        }
    }

    #[test]
    fn resize_rejects_zero_target() {
        let img = GrayImage::filled(4, 4, 0.5);
        assert!(resize_bilinear(&img, 0, 3).is_err());
    }

    #[test]
    fn constant_image_has_zero_saliency() {
        let img = GrayImage::filled(32, 32, 0.4);
        let sal = saliency_map(&img, 1.0, 2.0).unwrap();
        assert!(sal.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn saliency_rejects_bad_sigmas() {
        let img = GrayImage::filled(16, 16, 0.4);
        assert!(saliency_map(&img, 2.0, 1.0).is_err());
        assert!(saliency_map(&img, 0.0, 1.0).is_err());
    }

    #[test]
    fn isolated_peaks_both_returned_strongest_first() {
        let sal = peaks(80, 20, &[(10, 10, 0.6), (60, 10, 0.9)]);
        let p = detect_pois(&sal, 2, 10.0).unwrap();
        assert_eq!(p.len(), 2);
        assert_eq!((p[0].x, p[0].y), (60, 10));
        assert_eq!((p[1].x, p[1].y), (10, 10));
    }

    #[test]
    fn close_peaks_suppressed() {
        let sal = peaks(40, 20, &[(10, 10, 0.6), (15, 10, 0.9)]);
        let p = detect_pois(&sal, 5, 10.0).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!((p[0].x, p[0].y), (15, 10));
    }

    #[test]
    fn zero_saliency_yields_no_pois() {
        let sal = GrayImage::filled(16, 16, 0.0);
        assert!(detect_pois(&sal, 4, 2.0).unwrap().is_empty());
        assert!(detect_pois(&sal, 0, 2.0).is_err());
    }

    #[test]
    fn patch_detection_respects_window() {
        let sal = peaks(40, 40, &[(2, 2, 1.0), (20, 20, 0.5)]);
        let p = detect_pois_for_patches(&sal, 5, 1.0, 16).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!((p[0].x, p[0].y), (20, 20));
        let img = GrayImage::filled(40, 40, 0.5);
        assert!(extract_patch(&img, &p[0], 16).is_ok());
    }

    #[test]
    fn extract_patch_out_of_bounds() {
        let img = GrayImage::filled(20, 20, 0.5);
        let poi = PointOfInterest { x: 3, y: 10, saliency: 1.0 };
        assert!(matches!(extract_patch(&img, &poi, 8), Err(Error::OutOfBounds(_))));
        let poi = PointOfInterest { x: 16, y: 10, saliency: 1.0 };
        assert!(extract_patch(&img, &poi, 8).is_ok());
        let poi = PointOfInterest { x: 17, y: 10, saliency: 1.0 };
        assert!(extract_patch(&img, &poi, 8).is_err());
    }

    #[test]
    fn whiten_constant_is_zero() {
        let p = whiten(&vec![0.7; 64], 8).unwrap();
        assert!(p.data().iter().all(|v| v.abs() < 1e-12));
        assert!(whiten(&[0.0; 9], 3).is_err());
        assert!(whiten(&[0.0; 10], 4).is_err());
    }

    #[test]
    fn whiten_sinusoid_scales_by_gain() {
        let n = 16;
        for &(kx, ky) in &[(1usize, 0usize), (3, 2), (5, 7), (8, 0)] {
            let raw: Vec<f64> = (0..n * n)
                .map(|i| {
                    let (x, y) = ((i % n) as f64, (i / n) as f64);
                    0.5 + 0.3 * (2.0 * std::f64::consts::PI * (kx as f64 * x + ky as f64 * y) / n as f64).cos()
                })
                .collect();
            let gain = whitening_gain(kx as f64 / n as f64, ky as f64 / n as f64);
            let p = whiten(&raw, n).unwrap();
            for (out, inp) in p.data().iter().zip(&raw) {
                assert!((out - gain * (inp - 0.5)).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn whiten_noise_is_zero_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let raw: Vec<f64> = (0..256).map(|_| rng.gen()).collect();
        let p = whiten(&raw, 16).unwrap();
        assert!(linalg::mean(p.data()).abs() < 1e-9);
        assert!(linalg::norm(p.data()) > 0.0);
    }

    #[test]
    fn saliency_ignores_brightness_offset() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let base: Vec<f64> = (0..24 * 24).map(|_| rng.gen_range(0.1..0.8)).collect();
        let a = GrayImage::new(24, 24, base.clone()).unwrap();
        let b = GrayImage::new(24, 24, base.iter().map(|v| v + 0.15).collect()).unwrap();
        let sa = saliency_unnormalized(&a, 1.0, 2.0).unwrap();
        let sb = saliency_unnormalized(&b, 1.0, 2.0).unwrap();
        for (x, y) in sa.data().iter().zip(sb.data()) {
            assert!((x - y).abs() < 1e-9);
        }
    }
}
