use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::BinaryMask;
use crate::labeling::{label, Components};

/// Region counts per Hoover class at one tolerance. Correct, over, under and
/// missed count GT regions; noise counts machine regions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct HooverCounts {
    pub correct_detected: usize,
    pub over_segmented: usize,
    pub under_segmented: usize,
    pub missed: usize,
    pub noise: usize,
}

/// Class fractions at one tolerance. GT-side fractions are over the GT
/// region total and noise over the machine region total; `None` when the
/// relevant total is zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HooverPoint {
    pub tolerance: f64,
    pub counts: HooverCounts,
    pub correct_detected: Option<f64>,
    pub over_segmented: Option<f64>,
    pub under_segmented: Option<f64>,
    pub missed: Option<f64>,
    pub noise: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HooverCurves {
    pub gt_regions: usize,
    pub machine_regions: usize,
    pub points: Vec<HooverPoint>,
}

impl HooverCurves {
    pub fn tolerances(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.tolerance).collect()
    }
}

/// Sparse overlap table between GT and machine regions (0-based indices).
struct Overlaps {
    gt_area: Vec<usize>,
    seg_area: Vec<usize>,
    by_gt: Vec<BTreeMap<usize, usize>>,
    by_seg: Vec<BTreeMap<usize, usize>>,
}

impl Overlaps {
    fn new(gt: &Components, seg: &Components) -> Self {
        let mut by_gt = vec![BTreeMap::new(); gt.count()];
        let mut by_seg = vec![BTreeMap::new(); seg.count()];
        for (&g, &s) in gt.labels.iter().zip(&seg.labels) {
            if g > 0 && s > 0 {
                let (g, s) = (g as usize - 1, s as usize - 1);
                *by_gt[g].entry(s).or_insert(0) += 1;
                *by_seg[s].entry(g).or_insert(0) += 1;
            }
        }
        Self {
            gt_area: gt.areas.clone(),
            seg_area: seg.areas.clone(),
            by_gt,
            by_seg,
        }
    }
}

fn covers(overlap: usize, area: usize, t: f64) -> bool {
    overlap as f64 >= t * area as f64
}

fn classify(ov: &Overlaps, t: f64) -> HooverCounts {
    let (ng, ns) = (ov.gt_area.len(), ov.seg_area.len());
    let mut gt_done = vec![false; ng];
    let mut seg_done = vec![false; ns];
    let mut counts = HooverCounts::default();

    for g in 0..ng {
        for (&s, &o) in &ov.by_gt[g] {
            if !seg_done[s] && covers(o, ov.gt_area[g], t) && covers(o, ov.seg_area[s], t) {
                gt_done[g] = true;
                seg_done[s] = true;
                counts.correct_detected += 1;
                break;
            }
        }
    }

    for g in 0..ng {
        if gt_done[g] {
            continue;
        }
        let parts: Vec<(usize, usize)> = ov.by_gt[g]
            .iter()
            .filter(|&(&s, &o)| !seg_done[s] && covers(o, ov.seg_area[s], t))
            .map(|(&s, &o)| (s, o))
            .collect();
        let total: usize = parts.iter().map(|p| p.1).sum();
        if parts.len() >= 2 && covers(total, ov.gt_area[g], t) {
            gt_done[g] = true;
            for (s, _) in parts {
                seg_done[s] = true;
            }
            counts.over_segmented += 1;
        }
    }

    for s in 0..ns {
        if seg_done[s] {
            continue;
        }
        let parts: Vec<(usize, usize)> = ov.by_seg[s]
            .iter()
            .filter(|&(&g, &o)| !gt_done[g] && covers(o, ov.gt_area[g], t))
            .map(|(&g, &o)| (g, o))
            .collect();
        let total: usize = parts.iter().map(|p| p.1).sum();
        if parts.len() >= 2 && covers(total, ov.seg_area[s], t) {
            seg_done[s] = true;
            counts.under_segmented += parts.len();
            for (g, _) in parts {
                gt_done[g] = true;
            }
        }
    }

    counts.missed = gt_done.iter().filter(|d| !**d).count();
    counts.noise = seg_done.iter().filter(|d| !**d).count();
    counts
}

/// Hoover region classification of `seg` against `gt` at each tolerance.
///
/// Regions are 8-connected components. At tolerance `T` a GT/machine pair
/// whose overlap covers at least `T` of both areas is a correct detection;
/// a GT region covered by two or more machine regions (each at least `T`
/// inside it, together covering `T` of it) is over-segmented; the dual case
/// marks every involved GT region under-segmented. Remaining GT regions are
/// missed and remaining machine regions are noise.
pub fn hoover(gt: &BinaryMask, seg: &BinaryMask, tolerances: &[f64]) -> Result<HooverCurves> {
    if !gt.same_dims(seg) {
        return Err(Error::InvalidInput(format!(
            "ground truth is {}x{} but segmentation is {}x{}",
            gt.width(),
            gt.height(),
            seg.width(),
            seg.height()
        )));
    }
    if let Some(bad) = tolerances.iter().find(|t| !(**t > 0.5 && **t <= 1.0)) {
        return Err(Error::InvalidParameter(format!("Hoover tolerance {bad} is outside (0.5, 1]")));
    }
    let (gc, sc) = (label(gt), label(seg));
    let ov = Overlaps::new(&gc, &sc);
    let (ng, ns) = (gc.count(), sc.count());
    let frac = |n: usize, total: usize| (total > 0).then(|| n as f64 / total as f64);
    let points = tolerances
        .iter()
        .map(|&t| {
            let c = classify(&ov, t);
            HooverPoint {
                tolerance: t,
                counts: c,
                correct_detected: frac(c.correct_detected, ng),
                over_segmented: frac(c.over_segmented, ng),
                under_segmented: frac(c.under_segmented, ng),
                missed: frac(c.missed, ng),
                noise: frac(c.noise, ns),
            }
        })
        .collect();
    Ok(HooverCurves {
        gt_regions: ng,
        machine_regions: ns,
        points,
    })
}

/// Tolerances 0.55, 0.60, ..., 1.00.
pub fn default_tolerances() -> Vec<f64> {
    (11..=20).map(|k| k as f64 * 0.05).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rects(w: usize, h: usize, rs: &[(usize, usize, usize, usize)]) -> BinaryMask {
        BinaryMask::from_fn(w, h, |x, y| {
            rs.iter().any(|&(x0, y0, rw, rh)| (x0..x0 + rw).contains(&x) && (y0..y0 + rh).contains(&y))
        })
        .unwrap()
    }

    #[test]
    fn identical_masks_are_all_correct() {
        let gt = rects(20, 20, &[(1, 1, 3, 3), (8, 2, 5, 2), (3, 12, 6, 6)]);
        let h = hoover(&gt, &gt, &default_tolerances()).unwrap();
        for p in &h.points {
            assert_eq!(p.counts.correct_detected, 3);
            assert_eq!(p.correct_detected, Some(1.0));
            assert_eq!((p.over_segmented, p.under_segmented, p.missed, p.noise), (Some(0.0), Some(0.0), Some(0.0), Some(0.0)));
        }
    }

    #[test]
    fn split_blob_is_over_segmented() {
        // GT 11x4 blob; machine covers it with two 5x4 blobs separated by a gap column.
        let gt = rects(16, 8, &[(2, 2, 11, 4)]);
        let seg = rects(16, 8, &[(2, 2, 5, 4), (8, 2, 5, 4)]);
        let h = hoover(&gt, &seg, &[0.6]).unwrap();
        let c = h.points[0].counts;
        assert_eq!(c.correct_detected, 0);
        assert_eq!(c.over_segmented, 1);
        assert_eq!(c.noise, 0);
    }

    #[test]
    fn merged_blobs_are_under_segmented() {
        let gt = rects(16, 8, &[(2, 2, 5, 4), (8, 2, 5, 4)]);
        let seg = rects(16, 8, &[(2, 2, 11, 4)]);
        let h = hoover(&gt, &seg, &[0.6]).unwrap();
        let c = h.points[0].counts;
        assert_eq!((c.under_segmented, c.missed, c.noise), (2, 0, 0));
        assert_eq!(h.points[0].under_segmented, Some(1.0));
    }

    #[test]
    fn empty_segmentation_misses_everything() {
        let gt = rects(20, 20, &[(1, 1, 3, 3), (8, 2, 5, 2), (3, 12, 6, 6)]);
        let h = hoover(&gt, &BinaryMask::empty(20, 20).unwrap(), &[0.75]).unwrap();
        let p = h.points[0];
        assert_eq!(p.missed, Some(1.0));
        assert_eq!(p.counts.noise, 0);
        assert_eq!(p.noise, None);
    }

    #[test]
    fn tolerance_range_checked() {
        let m = BinaryMask::empty(4, 4).unwrap();
        assert!(hoover(&m, &m, &[0.5]).is_err());
        assert!(hoover(&m, &m, &[1.01]).is_err());
        assert!(hoover(&m, &m, &[1.0]).is_ok());
    }
}
