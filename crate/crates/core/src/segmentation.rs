//! Two-thread spot segmentation.
//!
//! Both threads share gray conversion and median filtering. The dark-region
//! thread feeds the filtered image straight into the active contour; the
//! bright-region thread applies gamma correction first. Each thread ends
//! with an area opening, and the two masks are merged with a logical OR.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{gamma_correct, median_filter, to_grayscale, BinaryMask, GrayImage, RgbImage};
use crate::labeling;

/// Period (pixels) of the checkerboard level-set initialization.
pub const INIT_PERIOD: f64 = 16.0;
/// Phase offset (pixels) of the checkerboard. Without it the initial phases
/// split any pattern symmetric about a multiple of half the period evenly,
/// the region means coincide and the fit force vanishes.
const INIT_OFFSET: f64 = INIT_PERIOD / 8.0;

const TIME_STEP: f64 = 0.5;
const HEAVISIDE_EPS: f64 = 1.0;
/// Regularizes the curvature weights; too small a value freezes flat
/// plateaus of the level set.
const CURVATURE_ETA: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SegmentationParams {
    pub median_window: usize,
    pub gamma: f64,
    /// Contour-length weight.
    pub cv_mu: f64,
    /// Fit weight of the inside (positive level-set) region.
    pub cv_lambda1: f64,
    /// Fit weight of the outside region.
    pub cv_lambda2: f64,
    pub cv_iterations: usize,
    /// RMS level-set change per sweep below which the evolution stops.
    pub cv_tol: f64,
    pub area_min: usize,
    pub area_max: usize,
}

impl Default for SegmentationParams {
    fn default() -> Self {
        Self {
            median_window: 5,
            gamma: 2.2,
            cv_mu: 0.2,
            cv_lambda1: 1.0,
            cv_lambda2: 1.0,
            cv_iterations: 300,
            cv_tol: 1e-4,
            area_min: 15,
            area_max: 2500,
        }
    }
}

impl SegmentationParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if self.median_window == 0 || self.median_window % 2 == 0 {
            return bad(format!("median_window must be odd, got {}", self.median_window));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return bad(format!("gamma must be positive, got {}", self.gamma));
        }
        if !(self.cv_mu >= 0.0 && self.cv_mu.is_finite()) {
            return bad(format!("cv_mu must be non-negative, got {}", self.cv_mu));
        }
        for (name, v) in [("cv_lambda1", self.cv_lambda1), ("cv_lambda2", self.cv_lambda2)] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if self.cv_iterations == 0 {
            return bad("cv_iterations must be at least 1".into());
        }
        if !(self.cv_tol >= 0.0) {
            return bad(format!("cv_tol must be non-negative, got {}", self.cv_tol));
        }
        if self.area_min >= self.area_max {
            return bad(format!(
                "area band is empty: area_min {} >= area_max {}",
                self.area_min, self.area_max
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentationResult {
    pub mask: BinaryMask,
    pub dark_thread_mask: BinaryMask,
    pub bright_thread_mask: BinaryMask,
    pub params_used: SegmentationParams,
}

/// Outcome of a level-set run, exposed for diagnostics and tests.
#[derive(Debug, Clone)]
pub struct ContourRun {
    pub mask: BinaryMask,
    pub iterations: usize,
    pub converged: bool,
    pub energy: Vec<f64>,
}

#[inline]
fn heaviside(phi: f64) -> f64 {
    0.5 * (1.0 + (2.0 / PI) * (phi / HEAVISIDE_EPS).atan())
}

/// Unnormalized regularized delta; the 1/pi factor is folded into the time step.
#[inline]
fn dirac(phi: f64) -> f64 {
    HEAVISIDE_EPS / (HEAVISIDE_EPS * HEAVISIDE_EPS + phi * phi)
}

fn checkerboard(width: usize, height: usize) -> Vec<f64> {
    let k = PI / (INIT_PERIOD / 2.0);
    let mut phi = Vec::with_capacity(width * height);
    for y in 0..height {
        for x in 0..width {
            phi.push((k * (x as f64 + INIT_OFFSET)).sin() * (k * (y as f64 + INIT_OFFSET)).sin());
        }
    }
    phi
}

/// Region means `(inside, outside)` over the sharp partition `phi > 0`.
fn region_means(f: &[f64], phi: &[f64]) -> (f64, f64) {
    let (mut s1, mut w1, mut s2, mut w2) = (0.0, 0.0, 0.0, 0.0);
    for (&v, &p) in f.iter().zip(phi) {
        if p > 0.0 {
            s1 += v;
            w1 += 1.0;
        } else {
            s2 += v;
            w2 += 1.0;
        }
    }
    let c1 = if w1 > 0.0 { s1 / w1 } else { 0.0 };
    let c2 = if w2 > 0.0 { s2 / w2 } else { 0.0 };
    (c1, c2)
}

fn energy(f: &[f64], phi: &[f64], w: usize, h: usize, c1: f64, c2: f64, p: &SegmentationParams) -> f64 {
    let mut length = 0.0;
    let mut fit = 0.0;
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let hv = heaviside(phi[i]);
            let hx = if x + 1 < w { heaviside(phi[i + 1]) - hv } else { 0.0 };
            let hy = if y + 1 < h { heaviside(phi[i + w]) - hv } else { 0.0 };
            length += (hx * hx + hy * hy).sqrt();
            let d1 = f[i] - c1;
            let d2 = f[i] - c2;
            fit += p.cv_lambda1 * hv * d1 * d1 + p.cv_lambda2 * (1.0 - hv) * d2 * d2;
        }
    }
    p.cv_mu * length + fit
}

/// One semi-implicit Gauss–Seidel sweep of the Chan–Vese evolution with
/// replicated (Neumann) borders.
fn sweep(f: &[f64], phi: &mut [f64], w: usize, h: usize, c1: f64, c2: f64, p: &SegmentationParams) {
    let at = |phi: &[f64], x: isize, y: isize| -> f64 {
        let xc = x.clamp(0, w as isize - 1) as usize;
        let yc = y.clamp(0, h as isize - 1) as usize;
        phi[yc * w + xc]
    };
    let eta2 = CURVATURE_ETA * CURVATURE_ETA;
    for y in 0..h as isize {
        for x in 0..w as isize {
            let i = y as usize * w + x as usize;
            let c = phi[i];
            let (xp, xm, yp, ym) = (at(phi, x + 1, y), at(phi, x - 1, y), at(phi, x, y + 1), at(phi, x, y - 1));

            let c_xp = 1.0 / (eta2 + (xp - c).powi(2) + ((yp - ym) / 2.0).powi(2)).sqrt();
            let c_xm = 1.0
                / (eta2 + (c - xm).powi(2) + ((at(phi, x - 1, y + 1) - at(phi, x - 1, y - 1)) / 2.0).powi(2)).sqrt();
            let c_yp = 1.0 / (eta2 + ((xp - xm) / 2.0).powi(2) + (yp - c).powi(2)).sqrt();
            let c_ym = 1.0
                / (eta2 + ((at(phi, x + 1, y - 1) - at(phi, x - 1, y - 1)) / 2.0).powi(2) + (c - ym).powi(2)).sqrt();

            let dt_delta = TIME_STEP * dirac(c);
            let d1 = f[i] - c1;
            let d2 = f[i] - c2;
            let num = c + dt_delta
                * (p.cv_mu * (c_xp * xp + c_xm * xm + c_yp * yp + c_ym * ym) - p.cv_lambda1 * d1 * d1
                    + p.cv_lambda2 * d2 * d2);
            let den = 1.0 + dt_delta * p.cv_mu * (c_xp + c_xm + c_yp + c_ym);
            phi[i] = num / den;
        }
    }
}

/// Region-based (Chan–Vese) level-set segmentation, returning full run diagnostics.
///
/// The level set starts from a fixed checkerboard so that many disconnected
/// spots can be captured and repeated runs agree bit-for-bit. The brighter of
/// the two final phases is reported as foreground; if both phases have the
/// same mean (or one is empty) the mask is empty.
///
/// Intensities are min-max stretched to `[0, 1]` before evolving, so the
/// weights act on relative contrast. A flat image yields an empty mask
/// without iterating. Evolution stops once the RMS change of the level set
/// over one sweep falls below `cv_tol`, or at `cv_iterations`.
pub fn active_contours_run(img: &GrayImage, params: &SegmentationParams) -> Result<ContourRun> {
    params.validate()?;
    let (w, h) = (img.width(), img.height());
    let (lo, hi) = img
        .data()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if hi - lo <= 1e-12 {
        return Ok(ContourRun {
            mask: BinaryMask::empty(w, h)?,
            iterations: 0,
            converged: true,
            energy: Vec::new(),
        });
    }
    let f: Vec<f64> = img.data().iter().map(|&v| (v - lo) / (hi - lo)).collect();
    let f = &f[..];
    let mut phi = checkerboard(w, h);
    let mut energies = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    let (c1, c2) = region_means(f, &phi);
    energies.push(energy(f, &phi, w, h, c1, c2, params));
    while iterations < params.cv_iterations {
        let (c1, c2) = region_means(f, &phi);
        let before = phi.clone();
        sweep(f, &mut phi, w, h, c1, c2, params);
        iterations += 1;
        let (c1, c2) = region_means(f, &phi);
        energies.push(energy(f, &phi, w, h, c1, c2, params));
        let rms = (phi.iter().zip(&before).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / phi.len() as f64).sqrt();
        if rms < params.cv_tol {
            converged = true;
            break;
        }
    }

    let (mut s_in, mut n_in, mut s_out, mut n_out) = (0.0, 0usize, 0.0, 0usize);
    for (&v, &p) in f.iter().zip(&phi) {
        if p > 0.0 {
            s_in += v;
            n_in += 1;
        } else {
            s_out += v;
            n_out += 1;
        }
    }
    let data: Vec<bool> = if n_in == 0 || n_out == 0 {
        vec![false; w * h]
    } else {
        let (m_in, m_out) = (s_in / n_in as f64, s_out / n_out as f64);
        if m_in - m_out > 1e-12 {
            phi.iter().map(|&p| p > 0.0).collect()
        } else if m_out - m_in > 1e-12 {
            phi.iter().map(|&p| p <= 0.0).collect()
        } else {
            vec![false; w * h]
        }
    };
    Ok(ContourRun {
        mask: BinaryMask::new(w, h, data)?,
        iterations,
        converged,
        energy: energies,
    })
}

pub fn active_contours(img: &GrayImage, params: &SegmentationParams) -> Result<BinaryMask> {
    Ok(active_contours_run(img, params)?.mask)
}

/// Removes every 8-connected component whose pixel count lies outside
/// `[area_min, area_max]`.
pub fn area_open(mask: &BinaryMask, area_min: usize, area_max: usize) -> Result<BinaryMask> {
    if area_min >= area_max {
        return Err(Error::InvalidParameter(format!(
            "area band is empty: area_min {area_min} >= area_max {area_max}"
        )));
    }
    let comps = labeling::label(mask);
    let keep: Vec<bool> = comps
        .areas
        .iter()
        .map(|&a| (area_min..=area_max).contains(&a))
        .collect();
    let data = comps
        .labels
        .iter()
        .map(|&l| l > 0 && keep[l as usize - 1])
        .collect();
    BinaryMask::new(mask.width(), mask.height(), data)
}

fn thread(pre: &GrayImage, params: &SegmentationParams) -> Result<BinaryMask> {
    let contour = active_contours(pre, params)?;
    area_open(&contour, params.area_min, params.area_max)
}

/// Full two-thread pipeline on an RGB crop of the scale.
pub fn segment_scale(img: &RgbImage, params: &SegmentationParams) -> Result<SegmentationResult> {
    params.validate()?;
    let gray = to_grayscale(img);
    let filtered = median_filter(&gray, params.median_window)?;
    let (dark, bright) = rayon::join(
        || thread(&filtered, params),
        || gamma_correct(&filtered, params.gamma).and_then(|g| thread(&g, params)),
    );
    let (dark, bright) = (dark?, bright?);
    Ok(SegmentationResult {
        mask: dark.or(&bright)?,
        dark_thread_mask: dark,
        bright_thread_mask: bright,
        params_used: *params,
    })
}
