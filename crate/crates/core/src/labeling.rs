//! 8-connected component labeling.

use crate::imaging::BinaryMask;

/// Component map of a mask. Label 0 is background; components are numbered
/// from 1 in row-major order of their first (topmost-leftmost) pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Components {
    pub width: usize,
    pub height: usize,
    pub labels: Vec<u32>,
    /// Pixel count per component; `areas[k]` belongs to label `k + 1`.
    pub areas: Vec<usize>,
}

impl Components {
    pub fn count(&self) -> usize {
        self.areas.len()
    }

    /// Centroid `(x, y)` of each component, in label order.
    pub fn centroids(&self) -> Vec<(f64, f64)> {
        let mut sums = vec![(0.0f64, 0.0f64); self.areas.len()];
        for (i, &l) in self.labels.iter().enumerate() {
            if l > 0 {
                let s = &mut sums[l as usize - 1];
                s.0 += (i % self.width) as f64;
                s.1 += (i / self.width) as f64;
            }
        }
        sums.iter()
            .zip(&self.areas)
            .map(|(&(sx, sy), &a)| (sx / a as f64, sy / a as f64))
            .collect()
    }
}

pub fn label(mask: &BinaryMask) -> Components {
    let (w, h) = (mask.width(), mask.height());
    let data = mask.data();
    let mut labels = vec![0u32; w * h];
    let mut areas = Vec::new();
    let mut stack = Vec::new();
    for start in 0..w * h {
        if !data[start] || labels[start] != 0 {
            continue;
        }
        let id = areas.len() as u32 + 1;
        labels[start] = id;
        stack.push(start);
        let mut area = 0usize;
        while let Some(i) = stack.pop() {
            area += 1;
            let (x, y) = ((i % w) as isize, (i / w) as isize);
            for dy in -1..=1isize {
                for dx in -1..=1isize {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                        continue;
                    }
                    let j = ny as usize * w + nx as usize;
                    if data[j] && labels[j] == 0 {
                        labels[j] = id;
                        stack.push(j);
                    }
                }
            }
        }
        areas.push(area);
    }
    Components {
        width: w,
        height: h,
        labels,
        areas,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_pixels_join() {
        let mask = BinaryMask::from_fn(4, 4, |x, y| x == y).unwrap();
        let c = label(&mask);
        assert_eq!(c.count(), 1);
        assert_eq!(c.areas, vec![4]);
    }

    #[test]
    fn ordering_follows_first_pixel() {
        // Component B starts on row 0 at x = 3; component A on row 1 at x = 0.
        let mask = BinaryMask::new(
            5,
            3,
            vec![
                false, false, false, true, false, //
                true, false, false, true, false, //
                true, false, false, false, false,
            ],
        )
        .unwrap();
        let c = label(&mask);
        assert_eq!(c.count(), 2);
        assert_eq!(c.centroids(), vec![(3.0, 0.5), (0.0, 1.5)]);
    }

    #[test]
    fn empty_mask_has_no_components() {
        let c = label(&BinaryMask::empty(3, 3).unwrap());
        assert_eq!(c.count(), 0);
        assert!(c.centroids().is_empty());
    }
}
