use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::BinaryMask;

/// Pixel confusion matrix with foreground as the positive class.
///
/// Percentages are column-normalized over the ground-truth classes: column 1
/// is GT background, column 2 GT foreground, row 1 segmented background and
/// row 2 segmented foreground. A column whose GT class has no pixels is
/// `None`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix2x2 {
    pub tn: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tp: u64,
    /// GT background segmented as background, in percent.
    pub x11: Option<f64>,
    /// GT foreground segmented as background.
    pub x12: Option<f64>,
    /// GT background segmented as foreground.
    pub x21: Option<f64>,
    /// GT foreground segmented as foreground.
    pub x22: Option<f64>,
}

impl ConfusionMatrix2x2 {
    pub fn from_counts(tn: u64, fp: u64, fn_: u64, tp: u64) -> Self {
        let pct = |part: u64, total: u64| (total > 0).then(|| 100.0 * part as f64 / total as f64);
        let (bg, fg) = (tn + fp, fn_ + tp);
        Self {
            tn,
            fp,
            fn_,
            tp,
            x11: pct(tn, bg),
            x12: pct(fn_, fg),
            x21: pct(fp, bg),
            x22: pct(tp, fg),
        }
    }

    pub fn total(&self) -> u64 {
        self.tn + self.fp + self.fn_ + self.tp
    }
}

pub fn confusion(gt: &BinaryMask, seg: &BinaryMask) -> Result<ConfusionMatrix2x2> {
    if !gt.same_dims(seg) {
        return Err(Error::InvalidInput(format!(
            "ground truth is {}x{} but segmentation is {}x{}",
            gt.width(),
            gt.height(),
            seg.width(),
            seg.height()
        )));
    }
    let mut counts = [0u64; 4];
    for (&g, &s) in gt.data().iter().zip(seg.data()) {
        counts[(g as usize) << 1 | s as usize] += 1;
    }
    let [tn, fp, fn_, tp] = counts;
    Ok(ConfusionMatrix2x2::from_counts(tn, fp, fn_, tp))
}

/// Precision, recall and F-measure; each is `None` when its denominator is zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f_measure: Option<f64>,
}

pub fn prf(counts: &ConfusionMatrix2x2) -> Prf {
    let ratio = |num: u64, den: u64| (den > 0).then(|| num as f64 / den as f64);
    let precision = ratio(counts.tp, counts.tp + counts.fp);
    let recall = ratio(counts.tp, counts.tp + counts.fn_);
    let f_measure = match (precision, recall) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        _ => None,
    };
    Prf {
        precision,
        recall,
        f_measure,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask(w: usize, h: usize, bits: &[u8]) -> BinaryMask {
        BinaryMask::new(w, h, bits.iter().map(|&b| b == 1).collect()).unwrap()
    }

    #[test]
    fn perfect_and_inverted() {
        let gt = mask(3, 2, &[1, 0, 0, 1, 1, 0]);
        let c = confusion(&gt, &gt).unwrap();
        assert_eq!((c.x11, c.x12, c.x21, c.x22), (Some(100.0), Some(0.0), Some(0.0), Some(100.0)));
        let c = confusion(&gt, &gt.not()).unwrap();
        assert_eq!((c.x11, c.x22), (Some(0.0), Some(0.0)));
        assert_eq!(c.total(), 6);
    }

    #[test]
    fn empty_gt_class_is_undefined() {
        let gt = BinaryMask::empty(4, 4).unwrap();
        let c = confusion(&gt, &gt).unwrap();
        assert_eq!(c.x11, Some(100.0));
        assert_eq!((c.x12, c.x22), (None, None));
        let p = prf(&c);
        assert_eq!((p.precision, p.recall, p.f_measure), (None, None, None));
    }

    #[test]
    fn dimension_mismatch() {
        let a = BinaryMask::empty(4, 4).unwrap();
        let b = BinaryMask::empty(4, 5).unwrap();
        assert!(matches!(confusion(&a, &b), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn prf_examples() {
        let p = prf(&ConfusionMatrix2x2::from_counts(10, 0, 0, 7));
        assert_eq!((p.precision, p.recall, p.f_measure), (Some(1.0), Some(1.0), Some(1.0)));

        let p = prf(&ConfusionMatrix2x2::from_counts(0, 5, 5, 5));
        assert_eq!(p.f_measure, Some(0.5));

        // tp=40, fp=17, fn=60: P = 40/57, R = 0.4, F = 80/157.
        let p = prf(&ConfusionMatrix2x2::from_counts(0, 17, 60, 40));
        assert!((p.precision.unwrap() - 0.701_754_385_964_912_3).abs() < 1e-12);
        assert_eq!(p.recall, Some(0.4));
        assert!((p.f_measure.unwrap() - 0.509_554_140_127_388_5).abs() < 1e-12);
    }

    #[test]
    fn zero_tp_gives_undefined_f() {
        let p = prf(&ConfusionMatrix2x2::from_counts(3, 2, 4, 0));
        assert_eq!((p.precision, p.recall, p.f_measure), (Some(0.0), Some(0.0), None));
    }
}
