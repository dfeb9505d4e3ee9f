use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use anyhow::{bail, Context};
use spotid_core::evaluation::{
    build_dissimilarity_matrix, default_tolerances, evaluate_identification, evaluate_segmentation, far_frr_exact,
    Calibration, DissimilarityMatrix, SegmentationReport, Stat,
};
use spotid_core::gallery::load_gallery;
use spotid_core::imaging::BinaryMask;
use spotid_core::matching::{MatchMethod, MatchParams};

use crate::ReportFormat;

fn output(out: Option<&Path>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(std::fs::File::create(p).with_context(|| format!("creating {}", p.display()))?),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn png_names(dir: &Path) -> anyhow::Result<BTreeMap<String, std::path::PathBuf>> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
        let path = entry?.path();
        if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")) {
            out.insert(path.file_name().unwrap().to_string_lossy().into_owned(), path);
        }
    }
    Ok(out)
}

pub fn eval_seg(gt_dir: &Path, seg_dir: &Path, format: ReportFormat, out: Option<&Path>) -> anyhow::Result<()> {
    let gt = png_names(gt_dir)?;
    let seg = png_names(seg_dir)?;
    let missing: Vec<&str> = gt.keys().filter(|k| !seg.contains_key(*k)).map(String::as_str).collect();
    if !missing.is_empty() {
        bail!("no machine mask in {} for: {}", seg_dir.display(), missing.join(", "));
    }
    if gt.is_empty() {
        bail!("no PNG masks in {}", gt_dir.display());
    }
    let pairs = gt
        .iter()
        .map(|(name, p)| Ok((name.clone(), BinaryMask::open_png(p)?, BinaryMask::open_png(&seg[name])?)))
        .collect::<anyhow::Result<Vec<_>>>()?;
    let report = evaluate_segmentation(&pairs, &default_tolerances())?;
    let mut w = output(out)?;
    match format {
        ReportFormat::Json => writeln!(w, "{}", serde_json::to_string_pretty(&report)?)?,
        ReportFormat::Csv => write_seg_csv(&report, w)?,
    }
    Ok(())
}

/// Long format: `image,metric,tolerance,value`; undefined values are empty.
/// Corpus rows use the image names `mean` and `std`.
fn write_seg_csv(report: &SegmentationReport, w: Box<dyn Write>) -> anyhow::Result<()> {
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(["image", "metric", "tolerance", "value"])?;
    let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for im in &report.images {
        let c = &im.confusion;
        let counts = [("tn", c.tn), ("fp", c.fp), ("fn", c.fn_), ("tp", c.tp)];
        for (k, v) in counts {
            csv.write_record([im.name.as_str(), k, "", &v.to_string()])?;
        }
        let rest = [
            ("x11", c.x11),
            ("x12", c.x12),
            ("x21", c.x21),
            ("x22", c.x22),
            ("precision", im.prf.precision),
            ("recall", im.prf.recall),
            ("f_measure", im.prf.f_measure),
        ];
        for (k, v) in rest {
            csv.write_record([im.name.as_str(), k, "", &fmt(v)])?;
        }
        for p in &im.hoover.points {
            let t = p.tolerance.to_string();
            for (k, v) in [
                ("correct_detected", p.correct_detected),
                ("over_segmented", p.over_segmented),
                ("under_segmented", p.under_segmented),
                ("missed", p.missed),
                ("noise", p.noise),
            ] {
                csv.write_record([im.name.as_str(), k, &t, &fmt(v)])?;
            }
        }
    }
    let mut summary = |metric: &str, tol: &str, s: Option<Stat>| -> csv::Result<()> {
        csv.write_record(["mean", metric, tol, &fmt(s.map(|s| s.mean))])?;
        csv.write_record(["std", metric, tol, &fmt(s.map(|s| s.std))])
    };
    for (k, s) in [
        ("x11", report.x11),
        ("x12", report.x12),
        ("x21", report.x21),
        ("x22", report.x22),
        ("precision", report.precision),
        ("recall", report.recall),
        ("f_measure", report.f_measure),
    ] {
        summary(k, "", s)?;
    }
    for p in &report.hoover {
        let t = p.tolerance.to_string();
        for (k, s) in [
            ("correct_detected", p.correct_detected),
            ("over_segmented", p.over_segmented),
            ("under_segmented", p.under_segmented),
            ("missed", p.missed),
            ("noise", p.noise),
        ] {
            summary(k, &t, s)?;
        }
    }
    csv.flush()?;
    Ok(())
}

pub fn eval_id(
    matrix: &Path,
    format: ReportFormat,
    steps: usize,
    calibrate: Option<&Path>,
    method: Option<MatchMethod>,
    out: Option<&Path>,
) -> anyhow::Result<()> {
    let m = DissimilarityMatrix::open_csv(matrix)?;
    let report = evaluate_identification(&m, steps)?;
    if let Some(dir) = calibrate {
        let method = method.context("--calibrate needs --method")?;
        Calibration::from_report(&report, method).save(dir)?;
        eprintln!("stored EER threshold {} in {}", report.eer_threshold, dir.display());
    }
    let mut w = output(out)?;
    match format {
        ReportFormat::Json => {
            let mut v = serde_json::to_value(&report)?;
            v["exact_eer"] = far_frr_exact(&m)?.eer.into();
            writeln!(w, "{}", serde_json::to_string_pretty(&v)?)?;
        }
        ReportFormat::Csv => {
            let mut csv = csv::Writer::from_writer(w);
            csv.write_record(["threshold", "far", "frr"])?;
            for ((t, a), r) in report.roc.thresholds.iter().zip(&report.roc.far).zip(&report.roc.frr) {
                csv.write_record([t.to_string(), a.to_string(), r.to_string()])?;
            }
            csv.flush()?;
        }
    }
    Ok(())
}

pub fn build_matrix(source: &Path, target: Option<&Path>, method: MatchMethod, out: &Path) -> anyhow::Result<()> {
    let src = load_gallery(source)?;
    let tgt = match target {
        Some(t) => load_gallery(t)?,
        None => src.clone(),
    };
    let m = build_dissimilarity_matrix(&src, &tgt, method, &MatchParams::default())?;
    m.save_csv(out)?;
    println!("wrote {}x{} {method} matrix to {}", m.len(), m.len(), out.display());
    Ok(())
}
