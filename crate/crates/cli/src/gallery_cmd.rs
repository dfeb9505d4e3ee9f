use std::path::Path;

use spotid_core::gallery::{self, load_gallery, save_gallery, Gallery, LightCondition, Provenance, RecordMetadata, ScaleKey, MANIFEST_FILE};
use spotid_core::imaging::BinaryMask;
use spotid_core::matching::{identify as rank, MatchMethod, MatchParams};
use spotid_core::synthetic::{generate_synthetic_corpus, CorpusParams, TransformBounds};

pub fn identify(mask: &Path, gallery_dir: &Path, method: MatchMethod, top: usize, exclude: Option<&str>, json: bool) -> anyhow::Result<()> {
    anyhow::ensure!(top >= 1, "--top must be at least 1");
    let query = BinaryMask::open_png(mask)?;
    let gallery = load_gallery(gallery_dir)?;
    let exclude = exclude.map(ScaleKey::parse).transpose()?;
    let query_id = mask.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let mut ranked = rank(&query, &query_id, &gallery, method, &MatchParams::default(), exclude.as_ref())?;
    ranked.scores.truncate(top);
    if json {
        println!("{}", serde_json::to_string_pretty(&ranked)?);
        return Ok(());
    }
    println!("{:>4}  {:<16} {:<10} dissimilarity", "rank", "individual", "scale");
    for (i, s) in ranked.scores.iter().enumerate() {
        println!("{:>4}  {:<16} {:<10} {:.6e}", i + 1, s.individual_id, s.scale_id, s.dissimilarity);
    }
    for u in &ranked.unmatchable {
        println!("skipped {}:{} ({})", u.individual_id, u.scale_id, u.reason);
    }
    Ok(())
}

pub fn synth(
    out: &Path,
    individuals: usize,
    samples: usize,
    jitter: f64,
    max_rotation_deg: f64,
    max_translation_px: f64,
    seed: u64,
) -> anyhow::Result<()> {
    let corpus = generate_synthetic_corpus(&CorpusParams {
        individuals,
        samples_per: samples,
        jitter_sigma: jitter,
        bounds: TransformBounds {
            max_rotation_deg,
            max_translation_px,
        },
        seed,
        ..Default::default()
    })?;
    save_gallery(&corpus.gallery, out)?;
    println!("wrote {} scales of {individuals} individuals to {}", corpus.gallery.len(), out.display());
    Ok(())
}

pub fn enroll(
    mask: &Path,
    gallery_dir: &Path,
    individual: &str,
    scale: Option<&str>,
    light_condition: LightCondition,
    provenance: Provenance,
) -> anyhow::Result<()> {
    let m = BinaryMask::open_png(mask)?;
    let current = if gallery_dir.join(MANIFEST_FILE).exists() {
        load_gallery(gallery_dir)?
    } else {
        Gallery::default()
    };
    let meta = RecordMetadata {
        light_condition,
        provenance,
    };
    let next = gallery::enroll(gallery_dir, &current, individual, scale, m, meta)?;
    let rec = next.records().iter().rev().find(|r| r.individual_id == individual).expect("just enrolled");
    println!("enrolled {} ({} spots), manifest version {}", rec.key(), rec.cloud.len(), next.manifest_version);
    Ok(())
}
