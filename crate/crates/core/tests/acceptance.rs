//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails. Run with
//! `cargo test -p spotid-core --test acceptance -- --nocapture` (output is
//! printed either way since this target has no harness).

mod common;

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spotid_core::evaluation::*;
use spotid_core::imaging::{BinaryMask, GrayImage};
use spotid_core::labeling::label;
use spotid_core::matching::*;
use spotid_core::registration::*;
use spotid_core::segmentation::*;
use spotid_core::synthetic::*;

use common::*;

struct Report {
    failures: usize,
}

impl Report {
    fn line(&mut self, ok: bool, name: &str, detail: String) {
        if !ok {
            self.failures += 1;
        }
        println!("{} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
    }
}

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(f)
}

fn points(xy: &[(f64, f64)]) -> Vec<Point> {
    xy.iter().map(|&(x, y)| Point::new(x, y)).collect()
}

fn registration(rep: &mut Report) {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1001);
    let cases = 200;
    let (mut recovered, mut worst_rigid) = (0, 0.0f64);
    for _ in 0..cases {
        let (src, tgt, _, _) = rigid_case(&mut rng, 100.0, 30.0);
        let (s, t) = (points(&src), points(&tgt));
        let r = icp(&SpotCloud::new(s.clone()).unwrap(), &SpotCloud::new(t.clone()).unwrap(), &IcpParams::default()).unwrap();
        if r.objective < 1e-9 {
            recovered += 1;
        }
        let fit = estimate_rigid(&s, &t).unwrap();
        let res = s.iter().zip(&t).map(|(a, b)| (fit.apply(a) - b).norm()).fold(0.0, f64::max);
        worst_rigid = worst_rigid.max(res);
    }
    let secs = start.elapsed().as_secs_f64();
    let rate = recovered as f64 / cases as f64;
    rep.line(
        rate >= 0.99 && worst_rigid < 1e-6 && secs < 30.0,
        "registration recovery",
        format!(
            "ICP objective < 1e-9 in {recovered}/{cases} ({:.1}%, need >= 99%); max estimate_rigid residual {worst_rigid:.2e} (< 1e-6); {secs:.2} s (< 30 s)",
            100.0 * rate
        ),
    );
}

fn procrustes_criteria(rep: &mut Report) {
    let mut rng = ChaCha8Rng::seed_from_u64(1002);
    let mut worst_inv = 0.0f64;
    for _ in 0..100 {
        let n = rng.random_range(3..60);
        let x: Vec<Point> = (0..n).map(|_| Point::new(rng.random_range(0.0..100.0), rng.random_range(0.0..100.0))).collect();
        let scale = rng.random_range(0.5..=2.0);
        let motion = RigidTransform::from_angle(
            rng.random_range(-std::f64::consts::PI..std::f64::consts::PI),
            nalgebra::Vector2::new(rng.random_range(-1000.0..1000.0), rng.random_range(-1000.0..1000.0)),
        );
        let y: Vec<Point> = x.iter().map(|p| Point::from(motion.apply(p).coords * scale)).collect();
        worst_inv = worst_inv.max(procrustes(&x, &y).unwrap().dissimilarity);
    }
    let mut worst_oracle = 0.0f64;
    for _ in 0..20 {
        let n = rng.random_range(4..20);
        let x: Vec<(f64, f64)> = (0..n).map(|_| (rng.random_range(0.0..50.0), rng.random_range(0.0..50.0))).collect();
        let y: Vec<(f64, f64)> = x
            .iter()
            .map(|&(a, b)| (a + rng.random_range(-5.0..5.0), b + rng.random_range(-5.0..5.0)))
            .collect();
        let got = procrustes(&points(&x), &points(&y)).unwrap().dissimilarity;
        worst_oracle = worst_oracle.max((got - procrustes_oracle(&x, &y)).abs());
    }
    rep.line(
        worst_inv < 1e-9 && worst_oracle < 1e-6,
        "procrustes invariance",
        format!("max dissimilarity over 100 similarity copies {worst_inv:.2e} (< 1e-9); max |closed form - minimizer| over 20 perturbed shapes {worst_oracle:.2e} (< 1e-6)"),
    );
}

fn identification(rep: &mut Report) {
    let start = Instant::now();
    let corpus = generate_synthetic_corpus(&CorpusParams::default()).unwrap();
    let params = MatchParams::default();
    let icp_m = build_dissimilarity_matrix(&corpus.gallery, &corpus.gallery, MatchMethod::Icp, &params).unwrap();
    let pro_m = build_dissimilarity_matrix(&corpus.gallery, &corpus.gallery, MatchMethod::IcpProcrustes, &params).unwrap();
    let (icp1, pro1, pro5) = (n_rank(&icp_m, 1).unwrap(), n_rank(&pro_m, 1).unwrap(), n_rank(&pro_m, 5).unwrap());

    // Leave-one-out through identify must agree with the matrix ranking.
    let mut loo_hits = 0;
    for r in corpus.gallery.records() {
        let ranked = identify(&r.mask, "q", &corpus.gallery, MatchMethod::IcpProcrustes, &params, Some(&r.key())).unwrap();
        if ranked.scores[0].individual_id == r.individual_id {
            loo_hits += 1;
        }
    }
    let loo1 = loo_hits as f64 / corpus.gallery.len() as f64;
    let secs = start.elapsed().as_secs_f64();
    rep.line(
        pro1 >= 0.95 && pro5 >= 0.99 && pro1 >= icp1 && loo1 == pro1 && secs < 300.0,
        "synthetic identification",
        format!(
            "{} scales; ICP+Procrustes Top-1 {:.2}% (>= 95%), Top-5 {:.2}% (>= 99%); ICP Top-1 {:.2}% (<= ICP+Procrustes); leave-one-out identify Top-1 {:.2}%; {secs:.1} s (< 300 s)",
            corpus.gallery.len(),
            100.0 * pro1,
            100.0 * pro5,
            100.0 * icp1,
            100.0 * loo1
        ),
    );
}

fn eer_criteria(rep: &mut Report) {
    let mut rng = ChaCha8Rng::seed_from_u64(1004);
    let bound = 1.0 / DEFAULT_STEPS as f64;
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let g: Vec<f64> = (0..rng.random_range(1000..3000)).map(|_| rng.random_range(0.0..0.6)).collect();
        let i: Vec<f64> = (0..rng.random_range(5000..20000)).map(|_| rng.random_range(0.3..1.0)).collect();
        let swept = far_frr_scores(&g, &i, DEFAULT_STEPS).unwrap().eer;
        worst = worst.max((swept - eer_exhaustive_oracle(&g, &i)).abs());
    }
    let mut sep_ok = true;
    let mut half_worst = 0.0f64;
    for _ in 0..50 {
        let g: Vec<f64> = (0..rng.random_range(1..200)).map(|_| rng.random_range(0.0..1.0)).collect();
        let i: Vec<f64> = (0..rng.random_range(1..200)).map(|_| rng.random_range(1.01..2.0)).collect();
        sep_ok &= far_frr_scores(&g, &i, DEFAULT_STEPS).unwrap().eer == 0.0;
        let same: Vec<f64> = (0..rng.random_range(1..300)).map(|_| rng.random_range(0.0..5.0)).collect();
        half_worst = half_worst.max((far_frr_scores(&same, &same, DEFAULT_STEPS).unwrap().eer - 0.5).abs());
    }
    rep.line(
        worst <= bound && sep_ok && half_worst <= 0.02,
        "EER oracle equivalence",
        format!(
            "max |sweep - exhaustive oracle| {worst:.2e} (<= {bound:.0e}, 10 large overlapping sets); separable sets EER = 0: {sep_ok}; max |EER - 0.5| on identical multisets {half_worst:.2e} (<= 0.02)"
        ),
    );
}

fn metric_oracles(rep: &mut Report) {
    let mut rng = ChaCha8Rng::seed_from_u64(1005);
    let trials = 60;
    let (mut conf_ok, mut prf_ok, mut hoover_ok, mut rank_ok) = (0, 0, 0, 0);
    let tolerances = default_tolerances();
    for _ in 0..trials {
        let (w, h) = (rng.random_range(1..=32), rng.random_range(1..=32));
        let (dg, ds) = (rng.random_range(0.0..1.0), rng.random_range(0.0..1.0));
        let gt = random_mask(&mut rng, w, h, dg);
        let seg = random_mask(&mut rng, w, h, ds);
        let c = confusion(&gt, &seg).unwrap();
        let (tn, fp, fn_, tp) = count_confusion(&gt, &seg);
        if (c.tn, c.fp, c.fn_, c.tp) == (tn, fp, fn_, tp) {
            conf_ok += 1;
        }
        let p = prf(&c);
        let ratio = |a: u64, b: u64| (b > 0).then(|| a as f64 / b as f64);
        let (pp, rr) = (ratio(tp, tp + fp), ratio(tp, tp + fn_));
        let ff = match (pp, rr) {
            (Some(a), Some(b)) if a + b > 0.0 => Some(2.0 * a * b / (a + b)),
            _ => None,
        };
        let close = |a: Option<f64>, b: Option<f64>| match (a, b) {
            (Some(a), Some(b)) => (a - b).abs() < 1e-12,
            (None, None) => true,
            _ => false,
        };
        if p.precision == pp && p.recall == rr && close(p.f_measure, ff) {
            prf_ok += 1;
        }

        let (bw, bh) = (rng.random_range(8..=32), rng.random_range(8..=32));
        let blobs = rng.random_range(0..8);
        let bgt = random_blobs(&mut rng, bw, bh, blobs);
        let bseg = perturb_segmentation(&mut rng, &bgt);
        let curves = hoover(&bgt, &bseg, &tolerances).unwrap();
        if curves.points.iter().all(|p| {
            let k = p.counts;
            (k.correct_detected, k.over_segmented, k.under_segmented, k.missed, k.noise) == hoover_oracle(&bgt, &bseg, p.tolerance)
        }) {
            hoover_ok += 1;
        }

        let groups: Vec<usize> = (0..rng.random_range(1..=4)).map(|_| rng.random_range(2..=3)).collect();
        let labels = labels_for(&groups);
        let m = labels.len();
        let table: Vec<f64> = (0..m * m).map(|_| rng.random_range(0..6) as f64 * 0.25).collect();
        let mat = DissimilarityMatrix::from_fn(labels.clone(), |i, j| table[i * m + j]).unwrap();
        if (1..=m).all(|n| n_rank(&mat, n).unwrap() == n_rank_oracle(&labels, &|i, j| table[i * m + j], n)) {
            rank_ok += 1;
        }
    }
    let all = conf_ok == trials && prf_ok == trials && hoover_ok == trials && rank_ok == trials;
    rep.line(
        all,
        "metric oracles",
        format!(
            "exact agreement on {trials} random instances each: confusion {conf_ok}, prf {prf_ok}, hoover {hoover_ok}, n_rank {rank_ok} (masks <= 32x32, <= 12 scales)"
        ),
    );
}

fn segmentation(rep: &mut Report) {
    let mut worst_iou = 1.0f64;
    for &(size, r) in &[(64usize, 12.0f64), (80, 20.0), (96, 9.0), (128, 30.0)] {
        let c = size as f64 / 2.0 + 0.3;
        let img = GrayImage::from_fn(size, size, |x, y| {
            if (x as f64 - c).powi(2) + (y as f64 - c).powi(2) <= r * r { 0.85 } else { 0.15 }
        })
        .unwrap();
        let truth = BinaryMask::from_fn(size, size, |x, y| img.get(x, y) > 0.5).unwrap();
        let mask = active_contours(&img, &SegmentationParams::default()).unwrap();
        worst_iou = worst_iou.min(iou(&truth, &mask));
    }

    let params = SegmentationParams::default();
    let (mut worst_recall, mut invariants) = (1.0f64, true);
    let seeds = 7..12u64;
    for seed in seeds.clone() {
        let (img, gt) = spotted_scale_image(&SceneParams { seed, ..Default::default() }).unwrap();
        let r = segment_scale(&img, &params).unwrap();
        worst_recall = worst_recall.min(pixel_recall(&gt, &r.mask));
        invariants &= r.mask == r.dark_thread_mask.or(&r.bright_thread_mask).unwrap();
        for t in [&r.dark_thread_mask, &r.bright_thread_mask] {
            invariants &= label(t).areas.iter().all(|&a| (params.area_min..=params.area_max).contains(&a));
        }
    }
    rep.line(
        worst_iou >= 0.95 && worst_recall >= 0.8 && invariants,
        "segmentation synthetic suite",
        format!(
            "min disk IoU {worst_iou:.4} (>= 0.95, 4 disks); min spot recall {worst_recall:.4} (>= 0.8, {} half-dark/half-overexposed scenes); OR-merge and area-band invariants hold: {invariants}",
            seeds.count()
        ),
    );
}

fn determinism(rep: &mut Report) {
    let (img, _) = spotted_scale_image(&SceneParams::default()).unwrap();
    let p = SegmentationParams::default();
    let seg = |t| in_pool(t, || segment_scale(&img, &p).unwrap());
    let seg_ok = seg(1) == seg(8) && seg(1) == seg(3);

    let corpus = generate_synthetic_corpus(&CorpusParams {
        individuals: 10,
        samples_per: 3,
        ..Default::default()
    })
    .unwrap();
    let corpus_ok = corpus == generate_synthetic_corpus(&CorpusParams { individuals: 10, samples_per: 3, ..Default::default() }).unwrap();
    let q = &corpus.gallery.records()[4].mask;
    let mp = MatchParams::default();
    let ident = |t| in_pool(t, || identify(q, "q", &corpus.gallery, MatchMethod::IcpProcrustes, &mp, None).unwrap());
    let id_ok = ident(1) == ident(8);

    let matrix = |t| in_pool(t, || build_dissimilarity_matrix(&corpus.gallery, &corpus.gallery, MatchMethod::Icp, &mp).unwrap());
    let (m1, m8) = (matrix(1), matrix(8));
    let csv = |m: &DissimilarityMatrix| {
        let mut v = Vec::new();
        m.write_csv(&mut v).unwrap();
        v
    };
    let eval = |t, m: &DissimilarityMatrix| in_pool(t, || serde_json::to_string(&evaluate_identification(m, DEFAULT_STEPS).unwrap()).unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(1007);
    let pairs: Vec<(String, BinaryMask, BinaryMask)> = (0..6)
        .map(|k| {
            let gt = random_blobs(&mut rng, 32, 32, 6);
            let seg = perturb_segmentation(&mut rng, &gt);
            (format!("i{k}"), gt, seg)
        })
        .collect();
    let seg_eval = |t| in_pool(t, || serde_json::to_string(&evaluate_segmentation(&pairs, &default_tolerances()).unwrap()).unwrap());
    let eval_ok = csv(&m1) == csv(&m8) && eval(1, &m1) == eval(8, &m8) && seg_eval(1) == seg_eval(8);
    rep.line(
        seg_ok && corpus_ok && id_ok && eval_ok,
        "determinism",
        format!(
            "bit-identical across runs and 1/3/8 worker threads: segment {seg_ok}, synthetic corpus {corpus_ok}, identify {id_ok}, matrix + evaluation {eval_ok}"
        ),
    );
}

fn main() {
    let mut rep = Report { failures: 0 };
    registration(&mut rep);
    procrustes_criteria(&mut rep);
    identification(&mut rep);
    eer_criteria(&mut rep);
    metric_oracles(&mut rep);
    segmentation(&mut rep);
    determinism(&mut rep);
    println!("N/A  field database reproduction: the cited project database is not available; only the synthetic criteria above apply");
    if rep.failures > 0 {
        println!("{} acceptance criteria failed", rep.failures);
        std::process::exit(1);
    }
    println!("all acceptance criteria passed");
}
