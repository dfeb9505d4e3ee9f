//! Independent oracles and random instance generators shared by the
//! integration and acceptance tests. Nothing here calls into the code under
//! test except for plain data types.

#![allow(dead_code)]

use rand::Rng;
use spotid_core::gallery::ScaleKey;
use spotid_core::imaging::BinaryMask;

// ---------------------------------------------------------------- Nelder–Mead

/// Downhill simplex minimization; returns `(argmin, min)`.
pub fn nelder_mead(f: &dyn Fn(&[f64]) -> f64, x0: &[f64], step: f64, max_iter: usize) -> (Vec<f64>, f64) {
    let n = x0.len();
    let mut simplex: Vec<Vec<f64>> = vec![x0.to_vec()];
    for i in 0..n {
        let mut v = x0.to_vec();
        v[i] += step;
        simplex.push(v);
    }
    let mut vals: Vec<f64> = simplex.iter().map(|v| f(v)).collect();
    for _ in 0..max_iter {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        vals = order.iter().map(|&i| vals[i]).collect();
        if (vals[n] - vals[0]).abs() <= 1e-18 * (1.0 + vals[0].abs()) {
            let size = simplex.iter().skip(1).map(|v| dist(v, &simplex[0])).fold(0.0, f64::max);
            if size < 1e-12 {
                break;
            }
        }
        let centroid: Vec<f64> = (0..n).map(|k| simplex[..n].iter().map(|v| v[k]).sum::<f64>() / n as f64).collect();
        let along = |t: f64| -> Vec<f64> { (0..n).map(|k| centroid[k] + t * (simplex[n][k] - centroid[k])).collect() };
        let xr = along(-1.0);
        let fr = f(&xr);
        if fr < vals[0] {
            let xe = along(-2.0);
            let fe = f(&xe);
            if fe < fr {
                simplex[n] = xe;
                vals[n] = fe;
            } else {
                simplex[n] = xr;
                vals[n] = fr;
            }
        } else if fr < vals[n - 1] {
            simplex[n] = xr;
            vals[n] = fr;
        } else {
            let xc = if fr < vals[n] { along(-0.5) } else { along(0.5) };
            let fc = f(&xc);
            if fc < vals[n].min(fr) {
                simplex[n] = xc;
                vals[n] = fc;
            } else {
                for i in 1..=n {
                    simplex[i] = (0..n).map(|k| simplex[0][k] + 0.5 * (simplex[i][k] - simplex[0][k])).collect();
                    vals[i] = f(&simplex[i]);
                }
            }
        }
    }
    let best = (0..=n).min_by(|&a, &b| vals[a].total_cmp(&vals[b])).unwrap();
    (simplex[best].clone(), vals[best])
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn standardize(pts: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let n = pts.len() as f64;
    let (mx, my) = pts.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0 / n, a.1 + p.1 / n));
    let c: Vec<(f64, f64)> = pts.iter().map(|p| (p.0 - mx, p.1 - my)).collect();
    let norm = c.iter().map(|p| p.0 * p.0 + p.1 * p.1).sum::<f64>().sqrt();
    c.iter().map(|p| (p.0 / norm, p.1 / norm)).collect()
}

/// Procrustes dissimilarity by direct numerical minimization of the residual
/// between standardized `x` and `s·R(θ)·y + t` over `(s, θ, tx, ty)`,
/// restarted from four starting angles and polished twice.
pub fn procrustes_oracle(x: &[(f64, f64)], y: &[(f64, f64)]) -> f64 {
    let (a, b) = (standardize(x), standardize(y));
    let residual = |p: &[f64]| -> f64 {
        let (s, th, tx, ty) = (p[0], p[1], p[2], p[3]);
        let (c, sn) = (th.cos(), th.sin());
        a.iter()
            .zip(&b)
            .map(|(u, v)| {
                let qx = s * (c * v.0 - sn * v.1) + tx;
                let qy = s * (sn * v.0 + c * v.1) + ty;
                (u.0 - qx).powi(2) + (u.1 - qy).powi(2)
            })
            .sum()
    };
    let mut best = f64::INFINITY;
    for k in 0..8 {
        let th0 = k as f64 * std::f64::consts::FRAC_PI_4;
        let (mut p, mut v) = nelder_mead(&residual, &[1.0, th0, 0.0, 0.0], 0.3, 20_000);
        for _ in 0..3 {
            let (p2, v2) = nelder_mead(&residual, &p, 1e-3, 20_000);
            p = p2;
            v = v2;
        }
        best = best.min(v);
    }
    best
}

// ---------------------------------------------------------- labeling & masks

/// 8-connected labeling by breadth-first search. Returns `(labels, areas)`
/// with labels in `1..=areas.len()` and 0 for background.
pub fn bfs_label(mask: &BinaryMask) -> (Vec<usize>, Vec<usize>) {
    let (w, h) = (mask.width(), mask.height());
    let mut labels = vec![0usize; w * h];
    let mut areas = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if !mask.get(x, y) || labels[y * w + x] != 0 {
                continue;
            }
            let id = areas.len() + 1;
            let mut queue = std::collections::VecDeque::from([(x, y)]);
            labels[y * w + x] = id;
            let mut area = 0;
            while let Some((cx, cy)) = queue.pop_front() {
                area += 1;
                for ny in cy.saturating_sub(1)..=(cy + 1).min(h - 1) {
                    for nx in cx.saturating_sub(1)..=(cx + 1).min(w - 1) {
                        if mask.get(nx, ny) && labels[ny * w + nx] == 0 {
                            labels[ny * w + nx] = id;
                            queue.push_back((nx, ny));
                        }
                    }
                }
            }
            areas.push(area);
        }
    }
    (labels, areas)
}

pub fn random_mask<R: Rng>(rng: &mut R, w: usize, h: usize, density: f64) -> BinaryMask {
    BinaryMask::from_fn(w, h, |_, _| rng.random_bool(density)).unwrap()
}

/// Random axis-aligned blobs (rectangles and disks) on a `w × h` canvas.
pub fn random_blobs<R: Rng>(rng: &mut R, w: usize, h: usize, count: usize) -> BinaryMask {
    let mut m = BinaryMask::empty(w, h).unwrap();
    for _ in 0..count {
        let cx = rng.random_range(0..w) as f64;
        let cy = rng.random_range(0..h) as f64;
        let r = rng.random_range(1.0..5.0);
        let disk = rng.random_bool(0.5);
        for y in 0..h {
            for x in 0..w {
                let (dx, dy) = (x as f64 - cx, y as f64 - cy);
                let inside = if disk { dx * dx + dy * dy <= r * r } else { dx.abs() <= r && dy.abs() <= r * 0.6 };
                if inside {
                    m.set(x, y, true);
                }
            }
        }
    }
    m
}

/// A plausible machine segmentation of `gt`: cut lines (over-segmentation),
/// bridges (under-segmentation), dropped blobs, noise blobs and pixel flips.
pub fn perturb_segmentation<R: Rng>(rng: &mut R, gt: &BinaryMask) -> BinaryMask {
    let (w, h) = (gt.width(), gt.height());
    let mut m = gt.clone();
    let (labels, areas) = bfs_label(gt);
    for l in 1..=areas.len() {
        if rng.random_bool(0.15) {
            for (i, &v) in labels.iter().enumerate() {
                if v == l {
                    m.set(i % w, i / w, false);
                }
            }
        }
    }
    for _ in 0..rng.random_range(0..3) {
        let x = rng.random_range(0..w);
        for y in 0..h {
            m.set(x, y, false);
        }
    }
    for _ in 0..rng.random_range(0..3) {
        let (y, x0) = (rng.random_range(0..h), rng.random_range(0..w));
        for x in x0..(x0 + rng.random_range(2..12)).min(w) {
            m.set(x, y, true);
        }
    }
    let extra = rng.random_range(0..3);
    let noise = random_blobs(rng, w, h, extra);
    m = m.or(&noise).unwrap();
    for _ in 0..rng.random_range(0..20) {
        let (x, y) = (rng.random_range(0..w), rng.random_range(0..h));
        let v = m.get(x, y);
        m.set(x, y, !v);
    }
    m
}

// ------------------------------------------------------------ metric oracles

/// `(tn, fp, fn, tp)` by direct pixel counting.
pub fn count_confusion(gt: &BinaryMask, seg: &BinaryMask) -> (u64, u64, u64, u64) {
    let (mut tn, mut fp, mut fn_, mut tp) = (0, 0, 0, 0);
    for y in 0..gt.height() {
        for x in 0..gt.width() {
            match (gt.get(x, y), seg.get(x, y)) {
                (false, false) => tn += 1,
                (false, true) => fp += 1,
                (true, false) => fn_ += 1,
                (true, true) => tp += 1,
            }
        }
    }
    (tn, fp, fn_, tp)
}

/// Hoover class counts `(correct, over, under, missed, noise)` from a dense
/// overlap table.
pub fn hoover_oracle(gt: &BinaryMask, seg: &BinaryMask, t: f64) -> (usize, usize, usize, usize, usize) {
    let (gl, ga) = bfs_label(gt);
    let (sl, sa) = bfs_label(seg);
    let (ng, ns) = (ga.len(), sa.len());
    let mut ov = vec![vec![0usize; ns]; ng];
    for (g, s) in gl.iter().zip(&sl) {
        if *g > 0 && *s > 0 {
            ov[g - 1][s - 1] += 1;
        }
    }
    let ok = |o: usize, a: usize| o as f64 >= t * a as f64;
    let (mut gd, mut sd) = (vec![false; ng], vec![false; ns]);
    let (mut correct, mut over, mut under) = (0, 0, 0);
    for g in 0..ng {
        for s in 0..ns {
            if !gd[g] && !sd[s] && ov[g][s] > 0 && ok(ov[g][s], ga[g]) && ok(ov[g][s], sa[s]) {
                gd[g] = true;
                sd[s] = true;
                correct += 1;
            }
        }
    }
    for g in 0..ng {
        if gd[g] {
            continue;
        }
        let parts: Vec<usize> = (0..ns).filter(|&s| !sd[s] && ov[g][s] > 0 && ok(ov[g][s], sa[s])).collect();
        if parts.len() >= 2 && ok(parts.iter().map(|&s| ov[g][s]).sum(), ga[g]) {
            gd[g] = true;
            parts.iter().for_each(|&s| sd[s] = true);
            over += 1;
        }
    }
    for s in 0..ns {
        if sd[s] {
            continue;
        }
        let parts: Vec<usize> = (0..ng).filter(|&g| !gd[g] && ov[g][s] > 0 && ok(ov[g][s], ga[g])).collect();
        if parts.len() >= 2 && ok(parts.iter().map(|&g| ov[g][s]).sum(), sa[s]) {
            sd[s] = true;
            parts.iter().for_each(|&g| gd[g] = true);
            under += parts.len();
        }
    }
    let missed = gd.iter().filter(|d| !**d).count();
    let noise = sd.iter().filter(|d| !**d).count();
    (correct, over, under, missed, noise)
}

/// Top-`n` hit rate by sorting each row's candidates with a plain tuple key.
pub fn n_rank_oracle(labels: &[ScaleKey], value: &dyn Fn(usize, usize) -> f64, n: usize) -> f64 {
    let m = labels.len();
    let mut hits = 0;
    for i in 0..m {
        let mut cand: Vec<(f64, String, String)> = (0..m)
            .filter(|&j| j != i)
            .map(|j| (value(i, j), labels[j].individual_id.clone(), labels[j].scale_id.clone()))
            .collect();
        cand.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        if cand.iter().take(n).any(|c| c.1 == labels[i].individual_id) {
            hits += 1;
        }
    }
    hits as f64 / m as f64
}

/// EER from a threshold at every distinct score (and 0), with FAR/FRR by
/// direct counting and linear interpolation at the first crossing.
pub fn eer_exhaustive_oracle(genuine: &[f64], impostor: &[f64]) -> f64 {
    let mut th: Vec<f64> = genuine.iter().chain(impostor).copied().filter(|v| v.is_finite()).collect();
    th.push(0.0);
    th.sort_by(|a, b| a.partial_cmp(b).unwrap());
    th.dedup();
    let far = |t: f64| impostor.iter().filter(|&&s| s <= t).count() as f64 / impostor.len() as f64;
    let frr = |t: f64| genuine.iter().filter(|&&s| s > t).count() as f64 / genuine.len() as f64;
    let mut prev: Option<(f64, f64)> = None;
    for &t in &th {
        let (a, r) = (far(t), frr(t));
        if a >= r {
            return match prev {
                None => (a + r) / 2.0,
                Some((pa, pr)) => {
                    let (d0, d1) = (pa - pr, a - r);
                    let u = -d0 / (d1 - d0);
                    pa + u * (a - pa)
                }
            };
        }
        prev = Some((a, r));
    }
    let (a, r) = prev.unwrap();
    (a + r) / 2.0
}

pub fn labels_for(groups: &[usize]) -> Vec<ScaleKey> {
    let mut out = Vec::new();
    for (i, &c) in groups.iter().enumerate() {
        for s in 0..c {
            out.push(ScaleKey::new(format!("I{i}"), format!("s{}", s + 1)));
        }
    }
    out
}

// ------------------------------------------------------------ registration

/// A registration instance: `n ∈ [20, 200]` uniform points in a `box_size`
/// square, and the same points rotated by at most `max_deg` about their
/// centroid and shifted by at most 20% of the box. Returns
/// `(source, target, angle_rad, (tx, ty))` with target = motion(source).
pub type RigidCase = (Vec<(f64, f64)>, Vec<(f64, f64)>, f64, (f64, f64));

pub fn rigid_case<R: Rng>(rng: &mut R, box_size: f64, max_deg: f64) -> RigidCase {
    let n = rng.random_range(20..=200);
    let src: Vec<(f64, f64)> = (0..n)
        .map(|_| (rng.random_range(0.0..box_size), rng.random_range(0.0..box_size)))
        .collect();
    let angle = rng.random_range(-max_deg..=max_deg).to_radians();
    let shift = 0.2 * box_size;
    let t = (rng.random_range(-shift..=shift), rng.random_range(-shift..=shift));
    let (cx, cy) = src.iter().fold((0.0, 0.0), |s, p| (s.0 + p.0 / n as f64, s.1 + p.1 / n as f64));
    let (c, s) = (angle.cos(), angle.sin());
    let tgt = src
        .iter()
        .map(|&(x, y)| {
            let (dx, dy) = (x - cx, y - cy);
            (cx + c * dx - s * dy + t.0, cy + s * dx + c * dy + t.1)
        })
        .collect();
    (src, tgt, angle, t)
}

/// Fraction of ground-truth foreground pixels also set in `seg`.
pub fn pixel_recall(gt: &BinaryMask, seg: &BinaryMask) -> f64 {
    let (_, _, fn_, tp) = count_confusion(gt, seg);
    tp as f64 / (tp + fn_) as f64
}

pub fn iou(a: &BinaryMask, b: &BinaryMask) -> f64 {
    let (_, fp, fn_, tp) = count_confusion(a, b);
    tp as f64 / (tp + fp + fn_) as f64
}
