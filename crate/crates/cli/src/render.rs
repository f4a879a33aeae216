use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::Args;
use image::{Rgb, RgbImage};
use lost_core::lost::DEFAULT_K;
use lost_core::{
    localize_detailed, read_manifest, DegreeMap, LocalizeConfig, Localization, PixelBox,
    SimilarityMode,
};

use crate::detect::load_features;
use crate::inputs::{positive, ImageInputs};

const SEED_COLOR: Rgb<u8> = Rgb([230, 30, 30]);
const SEED_BOX_COLOR: Rgb<u8> = Rgb([250, 210, 20]);
const FINAL_BOX_COLOR: Rgb<u8> = Rgb([150, 40, 200]);
const OUTLINE: u32 = 2;

#[derive(Debug, Clone, Args)]
pub struct RenderArgs {
    /// Image manifest of the image to render.
    #[arg(long, value_name = "FILE")]
    pub manifest: PathBuf,
    /// The image itself; a gray canvas of the manifest's size is used when omitted.
    #[arg(long, value_name = "FILE")]
    pub image: Option<PathBuf>,
    /// Directory receiving `<id>_overlay.png` and `<id>_degrees.png`.
    #[arg(long, value_name = "DIR")]
    pub out_dir: PathBuf,
    #[arg(long, default_value = "key", value_name = "key|query|value|sym-qk")]
    pub mode: SimilarityMode,
    #[arg(long, default_value_t = DEFAULT_K, value_parser = positive)]
    pub k: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderOutput {
    pub overlay: PathBuf,
    pub heatmap: PathBuf,
}

pub fn cmd_render(args: &RenderArgs) -> anyhow::Result<RenderOutput> {
    let manifest = read_manifest(&args.manifest)
        .with_context(|| format!("reading {}", args.manifest.display()))?;
    let dir = args
        .manifest
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_default();
    let inputs = ImageInputs { manifest, dir };
    let manifest = &inputs.manifest;

    let mut canvas = match &args.image {
        Some(path) => {
            let img = image::open(path)
                .with_context(|| format!("reading {}", path.display()))?
                .to_rgb8();
            if img.dimensions() != (manifest.image_w, manifest.image_h) {
                bail!(
                    "{} is {}x{} but the manifest says {}x{}",
                    path.display(),
                    img.width(),
                    img.height(),
                    manifest.image_w,
                    manifest.image_h
                );
            }
            img
        }
        None => RgbImage::from_pixel(manifest.image_w, manifest.image_h, Rgb([128, 128, 128])),
    };

    let features = load_features(&inputs, args.mode)?;
    let config = LocalizeConfig::with_mode(args.mode, args.k);
    let loc = localize_detailed(&features, manifest, &config)
        .with_context(|| format!("localizing {}", manifest.image_id))?;

    draw_overlay(&mut canvas, &loc, manifest.patch_size);
    let heatmap = degree_heatmap(&loc.degrees, manifest.patch_size, manifest.image_w, manifest.image_h);

    std::fs::create_dir_all(&args.out_dir)
        .with_context(|| format!("creating {}", args.out_dir.display()))?;
    let out = RenderOutput {
        overlay: args.out_dir.join(format!("{}_overlay.png", manifest.image_id)),
        heatmap: args.out_dir.join(format!("{}_degrees.png", manifest.image_id)),
    };
    canvas
        .save(&out.overlay)
        .with_context(|| format!("writing {}", out.overlay.display()))?;
    heatmap
        .save(&out.heatmap)
        .with_context(|| format!("writing {}", out.heatmap.display()))?;
    log::info!(
        "{}: box ({}, {}, {}, {}) -> {}",
        manifest.image_id,
        loc.bbox.x_min,
        loc.bbox.y_min,
        loc.bbox.x_max,
        loc.bbox.y_max,
        out.overlay.display()
    );
    Ok(out)
}

/// Seed patch filled, seed-only box and final box outlined.
fn draw_overlay(canvas: &mut RgbImage, loc: &Localization, patch_size: u32) {
    let p = loc.seed_set.initial;
    let grid_w = loc.degrees.grid_w;
    let (row, col) = ((p / grid_w) as u32, (p % grid_w) as u32);
    fill_rect(
        canvas,
        col * patch_size,
        row * patch_size,
        (col + 1) * patch_size,
        (row + 1) * patch_size,
        SEED_COLOR,
    );
    outline(canvas, &loc.seed_only_box, SEED_BOX_COLOR);
    outline(canvas, &loc.bbox, FINAL_BOX_COLOR);
}

/// Fills `[x0, x1) x [y0, y1)`, clipped to the canvas.
fn fill_rect(canvas: &mut RgbImage, x0: u32, y0: u32, x1: u32, y1: u32, color: Rgb<u8>) {
    let (w, h) = canvas.dimensions();
    for y in y0.min(h)..y1.min(h) {
        for x in x0.min(w)..x1.min(w) {
            canvas.put_pixel(x, y, color);
        }
    }
}

fn outline(canvas: &mut RgbImage, b: &PixelBox, color: Rgb<u8>) {
    let x0 = b.x_min.floor().max(0.0) as u32;
    let y0 = b.y_min.floor().max(0.0) as u32;
    let x1 = b.x_max.ceil().max(0.0) as u32;
    let y1 = b.y_max.ceil().max(0.0) as u32;
    if x1 <= x0 || y1 <= y0 {
        return;
    }
    let t = OUTLINE;
    fill_rect(canvas, x0, y0, x1, (y0 + t).min(y1), color);
    fill_rect(canvas, x0, y1.saturating_sub(t).max(y0), x1, y1, color);
    fill_rect(canvas, x0, y0, (x0 + t).min(x1), y1, color);
    fill_rect(canvas, x1.saturating_sub(t).max(x0), y0, x1, y1, color);
}

/// Inverse degree per patch, min-max normalized, color-mapped and blown up
/// to image size (padding cropped away).
fn degree_heatmap(dm: &DegreeMap, patch_size: u32, image_w: u32, image_h: u32) -> RgbImage {
    let field = dm.inverse_degree_field();
    let lo = field.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = field.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    let colors: Vec<Rgb<u8>> = field
        .iter()
        .map(|&v| colormap(if span > 0.0 { (v - lo) / span } else { 0.0 }))
        .collect();
    let ps = patch_size.max(1);
    RgbImage::from_fn(image_w, image_h, |x, y| {
        let (row, col) = ((y / ps) as usize, (x / ps) as usize);
        colors[row * dm.grid_w + col]
    })
}

/// Dark blue through magenta to yellow for `t` in [0, 1].
fn colormap(t: f64) -> Rgb<u8> {
    const STOPS: [[f64; 3]; 4] = [
        [10.0, 10.0, 60.0],
        [120.0, 30.0, 140.0],
        [235.0, 90.0, 50.0],
        [250.0, 240.0, 90.0],
    ];
    let t = t.clamp(0.0, 1.0) * (STOPS.len() - 1) as f64;
    let i = (t.floor() as usize).min(STOPS.len() - 2);
    let f = t - i as f64;
    let c = |j: usize| (STOPS[i][j] + f * (STOPS[i + 1][j] - STOPS[i][j])).round() as u8;
    Rgb([c(0), c(1), c(2)])
}
