//! Seeded synthetic data: spot layouts, labelled corpora standing in for
//! field galleries, and spotted scale photographs with known ground truth.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::Vector2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gallery::{Gallery, GalleryRecord, LightCondition, Provenance, RecordMetadata, ScaleKey};
use crate::imaging::{BinaryMask, RgbImage};
use crate::registration::{Point, RigidTransform};

/// Dart-throwing Poisson-disc sampling in `[0, width) × [0, height)`.
/// Stops at `max_points` or after a fixed budget of rejected candidates.
pub fn poisson_disc<R: Rng>(rng: &mut R, width: f64, height: f64, min_dist: f64, max_points: usize) -> Vec<Point> {
    poisson_disc_in(rng, max_points, min_dist, |rng| {
        Some(Point::new(rng.random_range(0.0..width), rng.random_range(0.0..height)))
    })
}

fn poisson_disc_in<R: Rng>(
    rng: &mut R,
    max_points: usize,
    min_dist: f64,
    mut propose: impl FnMut(&mut R) -> Option<Point>,
) -> Vec<Point> {
    let mut pts: Vec<Point> = Vec::with_capacity(max_points);
    let budget = 200 * max_points.max(1);
    let mut failures = 0;
    let d2 = min_dist * min_dist;
    while pts.len() < max_points && failures < budget {
        match propose(rng) {
            Some(c) if pts.iter().all(|p| (p - c).norm_squared() >= d2) => pts.push(c),
            _ => failures += 1,
        }
    }
    pts
}

/// Rasterizes filled disks of `radius` pixels centred on `points`.
pub fn rasterize_spots(width: usize, height: usize, points: &[Point], radius: f64) -> Result<BinaryMask> {
    let mut mask = BinaryMask::empty(width, height)?;
    let r2 = radius * radius;
    for p in points {
        let x0 = (p.x - radius).floor().max(0.0) as usize;
        let y0 = (p.y - radius).floor().max(0.0) as usize;
        let x1 = ((p.x + radius).ceil().max(0.0) as usize).min(width.saturating_sub(1));
        let y1 = ((p.y + radius).ceil().max(0.0) as usize).min(height.saturating_sub(1));
        for y in y0..=y1 {
            for x in x0..=x1 {
                if (x as f64 - p.x).powi(2) + (y as f64 - p.y).powi(2) <= r2 {
                    mask.set(x, y, true);
                }
            }
        }
    }
    Ok(mask)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransformBounds {
    pub max_rotation_deg: f64,
    pub max_translation_px: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusParams {
    pub individuals: usize,
    pub samples_per: usize,
    pub jitter_sigma: f64,
    pub bounds: TransformBounds,
    pub width: usize,
    pub height: usize,
    pub spot_radius: f64,
    pub min_spots: usize,
    pub max_spots: usize,
    pub min_spacing: f64,
    pub seed: u64,
}

impl Default for CorpusParams {
    fn default() -> Self {
        Self {
            individuals: 30,
            samples_per: 3,
            jitter_sigma: 1.0,
            bounds: TransformBounds {
                max_rotation_deg: 8.0,
                max_translation_px: 8.0,
            },
            width: 256,
            height: 256,
            spot_radius: 3.0,
            min_spots: 10,
            max_spots: 40,
            min_spacing: 16.0,
            seed: 2016,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub gallery: Gallery,
    /// True identity of every generated scale.
    pub identities: BTreeMap<ScaleKey, String>,
    /// Noise-free base layout per individual.
    pub layouts: BTreeMap<String, Vec<Point>>,
}

pub fn individual_id(i: usize) -> String {
    format!("L{:03}", i + 1)
}

const LIGHT_CYCLE: [LightCondition; 3] = [LightCondition::Normal, LightCondition::Ideal, LightCondition::HardExposed];

/// Generates `individuals × samples_per` masks. Each individual gets a
/// Poisson-disc layout of `min_spots..=max_spots` spots inside a centred
/// disc; each sample jitters every spot (Gaussian, `jitter_sigma`), applies a
/// random rigid motion about the canvas centre within `bounds` and rasterizes
/// the spots. The same seed always yields the same corpus.
pub fn generate_synthetic_corpus(params: &CorpusParams) -> Result<SyntheticCorpus> {
    if params.individuals == 0 || params.samples_per == 0 {
        return Err(Error::InvalidParameter("corpus needs at least 1 individual and 1 sample".into()));
    }
    if params.min_spots == 0 || params.min_spots > params.max_spots {
        return Err(Error::InvalidParameter(format!(
            "spot count range {}..={} is empty",
            params.min_spots, params.max_spots
        )));
    }
    if !(params.jitter_sigma >= 0.0) || !(params.spot_radius > 0.0) || !(params.min_spacing > 0.0) {
        return Err(Error::InvalidParameter(
            "jitter_sigma must be >= 0; spot_radius and min_spacing must be > 0".into(),
        ));
    }
    let margin = params.spot_radius + params.bounds.max_translation_px.abs() + 3.0 * params.jitter_sigma + 2.0;
    let layout_radius = params.width.min(params.height) as f64 / 2.0 - margin;
    if layout_radius <= params.min_spacing {
        return Err(Error::InvalidParameter(format!(
            "canvas {}x{} leaves no room for spots after a {margin:.1} px margin",
            params.width, params.height
        )));
    }

    let centre = Vector2::new(params.width as f64 / 2.0, params.height as f64 / 2.0);
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let jitter = Normal::new(0.0, params.jitter_sigma.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut corpus = SyntheticCorpus {
        gallery: Gallery::default(),
        identities: BTreeMap::new(),
        layouts: BTreeMap::new(),
    };

    for i in 0..params.individuals {
        let id = individual_id(i);
        let want = rng.random_range(params.min_spots..=params.max_spots);
        let layout = poisson_disc_in(&mut rng, want, params.min_spacing, |rng| {
            let p = Vector2::new(
                rng.random_range(-layout_radius..layout_radius),
                rng.random_range(-layout_radius..layout_radius),
            );
            (p.norm() <= layout_radius).then(|| Point::from(centre + p))
        });
        if layout.len() < params.min_spots {
            return Err(Error::InvalidParameter(format!(
                "could only place {} of {} spots for {id}; lower min_spacing or enlarge the canvas",
                layout.len(),
                params.min_spots
            )));
        }

        for s in 0..params.samples_per {
            let angle = rng.random_range(-1.0..=1.0) * params.bounds.max_rotation_deg.to_radians();
            let t_len = params.bounds.max_translation_px * rng.random::<f64>().sqrt();
            let t_dir = rng.random_range(0.0..2.0 * PI);
            let motion = RigidTransform::from_angle(angle, Vector2::new(t_len * t_dir.cos(), t_len * t_dir.sin()));
            let about_centre = RigidTransform {
                rotation: motion.rotation,
                translation: centre - motion.rotation * centre + motion.translation,
            };
            let pts: Vec<Point> = layout
                .iter()
                .map(|p| {
                    let jittered = if params.jitter_sigma > 0.0 {
                        Point::new(p.x + jitter.sample(&mut rng), p.y + jitter.sample(&mut rng))
                    } else {
                        *p
                    };
                    about_centre.apply(&jittered)
                })
                .collect();
            let mask = rasterize_spots(params.width, params.height, &pts, params.spot_radius)?;
            let scale_id = format!("s{}", s + 1);
            let record = GalleryRecord::from_mask(
                &id,
                &scale_id,
                mask,
                RecordMetadata {
                    light_condition: LIGHT_CYCLE[s % LIGHT_CYCLE.len()],
                    provenance: Provenance::GroundTruth,
                },
            )?;
            corpus.identities.insert(record.key(), id.clone());
            corpus.gallery.insert(record)?;
        }
        corpus.layouts.insert(id, layout);
    }
    Ok(corpus)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneParams {
    pub width: usize,
    pub height: usize,
    pub spots_per_half: usize,
    pub spot_radius: f64,
    /// Background and spot intensity on the dim half.
    pub dark_background: f64,
    pub dark_spot: f64,
    /// Background and spot intensity on the overexposed half.
    pub bright_background: f64,
    pub bright_spot: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for SceneParams {
    fn default() -> Self {
        Self {
            width: 200,
            height: 150,
            spots_per_half: 6,
            spot_radius: 8.0,
            dark_background: 0.05,
            dark_spot: 0.35,
            bright_background: 0.3,
            bright_spot: 1.0,
            noise_sigma: 0.01,
            seed: 7,
        }
    }
}

/// A scale photograph whose left half is dim and right half overexposed,
/// with bright spots on both halves. Returns the image and its ground-truth mask.
pub fn spotted_scale_image(params: &SceneParams) -> Result<(RgbImage, BinaryMask)> {
    let (w, h) = (params.width as f64, params.height as f64);
    let half = w / 2.0;
    let gap = 2.0 * params.spot_radius;
    if half - 2.0 * gap <= 0.0 || h - 2.0 * gap <= 0.0 {
        return Err(Error::InvalidParameter("scene too small for the requested spot radius".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let spacing = 2.0 * params.spot_radius + 6.0;
    let mut spots = Vec::new();
    for offset in [0.0, half] {
        let placed = poisson_disc(&mut rng, half - 2.0 * gap, h - 2.0 * gap, spacing, params.spots_per_half);
        if placed.len() < params.spots_per_half {
            return Err(Error::InvalidParameter(format!(
                "could only place {} of {} spots per half",
                placed.len(),
                params.spots_per_half
            )));
        }
        spots.extend(placed.into_iter().map(|p| Point::new(p.x + offset + gap, p.y + gap)));
    }
    let gt = rasterize_spots(params.width, params.height, &spots, params.spot_radius)?;
    let noise = Normal::new(0.0, params.noise_sigma.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut data = Vec::with_capacity(params.width * params.height);
    for y in 0..params.height {
        for x in 0..params.width {
            let bright_half = x as f64 >= half;
            let v = match (bright_half, gt.get(x, y)) {
                (false, false) => params.dark_background,
                (false, true) => params.dark_spot,
                (true, false) => params.bright_background,
                (true, true) => params.bright_spot,
            };
            let n = if params.noise_sigma > 0.0 { noise.sample(&mut rng) } else { 0.0 };
            let g = (v + n).clamp(0.0, 1.0);
            data.push([g, g, g]);
        }
    }
    Ok((RgbImage::new(params.width, params.height, data)?, gt))
}
