use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Serialize;
use spotid_core::imaging::RgbImage;
use spotid_core::labeling::label;
use spotid_core::segmentation::{segment_scale, SegmentationParams};
use spotid_core::synthetic::{spotted_scale_image, SceneParams};

#[derive(Serialize)]
struct Sidecar<'a> {
    input: &'a Path,
    width: usize,
    height: usize,
    spots: usize,
    dark_thread_mask: Option<PathBuf>,
    bright_thread_mask: Option<PathBuf>,
    params_used: SegmentationParams,
}

pub fn load_params(path: Option<&Path>) -> anyhow::Result<SegmentationParams> {
    let Some(path) = path else {
        return Ok(SegmentationParams::default());
    };
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let params: SegmentationParams = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    params.validate()?;
    Ok(params)
}

/// `mask.png` → `mask.<suffix>.png`
fn sibling(out: &Path, suffix: &str) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}.{suffix}.png"))
}

pub fn segment(input: &Path, params: Option<&Path>, out: &Path, emit_threads: bool) -> anyhow::Result<()> {
    let params = load_params(params)?;
    let img = RgbImage::open(input)?;
    let r = segment_scale(&img, &params)?;
    r.mask.save_png(out)?;
    let (mut dark, mut bright) = (None, None);
    if emit_threads {
        let (d, b) = (sibling(out, "dark"), sibling(out, "bright"));
        r.dark_thread_mask.save_png(&d)?;
        r.bright_thread_mask.save_png(&b)?;
        dark = Some(d);
        bright = Some(b);
    }
    let meta = Sidecar {
        input,
        width: r.mask.width(),
        height: r.mask.height(),
        spots: label(&r.mask).count(),
        dark_thread_mask: dark,
        bright_thread_mask: bright,
        params_used: r.params_used,
    };
    let side = out.with_extension("json");
    std::fs::write(&side, serde_json::to_vec_pretty(&meta)?).with_context(|| format!("writing {}", side.display()))?;
    println!("{}: {} spots -> {}", input.display(), meta.spots, out.display());
    Ok(())
}

pub fn synth_scene(image: &Path, gt: &Path, seed: u64) -> anyhow::Result<()> {
    let (img, truth) = spotted_scale_image(&SceneParams {
        seed,
        ..Default::default()
    })?;
    std::fs::write(image, img.encode_png()?).with_context(|| format!("writing {}", image.display()))?;
    truth.save_png(gt)?;
    Ok(())
}
