//! Synthetic dataset in the exported layout: features, attention, crop
//! descriptors, VOC annotations and images, with one planted object each.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::Args;
use image::{Rgb, RgbImage};
use lost_core::datasets::DatasetEntry;
use lost_core::synthetic::{opposed_pair, planted_object, PatchRect};
use lost_core::{
    write_attention_stack, write_crop_descriptors, write_feature_map, write_manifest,
    AttentionStack, CropDescriptor, DatasetManifest, FeatureKind, FeatureMap, ImageManifest,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::inputs::write_text;

pub const SYNTH_HEADS: usize = 6;

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    #[arg(long, default_value_t = 12)]
    pub images: usize,
    /// Patch grid side.
    #[arg(long, default_value_t = 14)]
    pub grid: usize,
    /// Patch size in pixels.
    #[arg(long, default_value_t = 16)]
    pub patch: u32,
    /// Feature dimension.
    #[arg(long, default_value_t = 32)]
    pub dim: usize,
    #[arg(long, default_value_t = 3)]
    pub classes: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// One synthetic image's object.
#[derive(Debug, Clone)]
struct Planted {
    id: String,
    class: usize,
    rect: PatchRect,
    manifest: ImageManifest,
}

fn class_name(class: usize) -> String {
    format!("shape{class}")
}

fn scaled(fm: &FeatureMap, kind: FeatureKind, factor: f32) -> anyhow::Result<FeatureMap> {
    let data = fm.data().iter().map(|v| v * factor).collect();
    Ok(FeatureMap::new(fm.grid_h(), fm.grid_w(), fm.dim(), kind, data)?)
}

/// Heads 0, 2 and 4 attend to the object, the others spread at random.
fn attention(rng: &mut impl Rng, grid: usize, rect: PatchRect) -> anyhow::Result<AttentionStack> {
    let mut data = Vec::with_capacity(SYNTH_HEADS * grid * grid);
    for head in 0..SYNTH_HEADS {
        for r in 0..grid {
            for c in 0..grid {
                let v = if head % 2 == 0 && rect.contains(r, c) {
                    rng.random_range(0.8f32..1.0)
                } else {
                    rng.random_range(0.0f32..0.3)
                };
                data.push(v);
            }
        }
    }
    Ok(AttentionStack::new(SYNTH_HEADS, grid, grid, data)?)
}

fn picture(rng: &mut impl Rng, p: &Planted, palette: &[Rgb<u8>]) -> RgbImage {
    let obj = p.rect.pixel_box(&p.manifest);
    let color = palette[p.class];
    RgbImage::from_fn(p.manifest.image_w, p.manifest.image_h, |x, y| {
        let (xf, yf) = (f64::from(x) + 0.5, f64::from(y) + 0.5);
        if xf > obj.x_min && xf < obj.x_max && yf > obj.y_min && yf < obj.y_max {
            color
        } else {
            let g = rng.random_range(90u8..130);
            Rgb([g, g, g.saturating_add(10)])
        }
    })
}

fn voc_xml(p: &Planted) -> String {
    let b = p.rect.pixel_box(&p.manifest);
    format!(
        "<annotation>\n  <folder>synth</folder>\n  <filename>{id}.png</filename>\n  <size>\n    \
         <width>{w}</width>\n    <height>{h}</height>\n    <depth>3</depth>\n  </size>\n  \
         <object>\n    <name>{name}</name>\n    <pose>Unspecified</pose>\n    <truncated>0</truncated>\n    \
         <difficult>0</difficult>\n    <bndbox>\n      <xmin>{x0}</xmin>\n      <ymin>{y0}</ymin>\n      \
         <xmax>{x1}</xmax>\n      <ymax>{y1}</ymax>\n    </bndbox>\n  </object>\n</annotation>\n",
        id = p.id,
        w = p.manifest.image_w,
        h = p.manifest.image_h,
        name = class_name(p.class),
        x0 = b.x_min + 1.0,
        y0 = b.y_min + 1.0,
        x1 = b.x_max,
        y1 = b.y_max,
    )
}

fn write_image_files(rng: &mut impl Rng, args: &SynthArgs, out: &Path, p: &Planted) -> anyhow::Result<()> {
    let (object, background) = opposed_pair(rng, args.dim);
    let key = planted_object(args.grid, args.grid, p.rect, &object, &background);
    write_feature_map(&key, out.join("features").join(format!("{}_key.lfea", p.id)))?;
    let query = scaled(&key, FeatureKind::Query, 0.5)?;
    write_feature_map(&query, out.join("features").join(format!("{}_query.lfea", p.id)))?;
    let value = scaled(&key, FeatureKind::Value, 2.0)?;
    write_feature_map(&value, out.join("features").join(format!("{}_value.lfea", p.id)))?;
    let att = attention(rng, args.grid, p.rect)?;
    write_attention_stack(&att, out.join("features").join(format!("{}_att.latt", p.id)))?;
    write_manifest(&p.manifest, out.join("features").join(format!("{}.json", p.id)))?;
    write_text(&out.join("Annotations").join(format!("{}.xml", p.id)), &voc_xml(p))?;
    Ok(())
}

pub fn cmd_synth(args: &SynthArgs) -> anyhow::Result<()> {
    if args.grid < 4 {
        bail!("--grid must be at least 4");
    }
    if args.patch < 2 || args.dim == 0 || args.classes == 0 {
        bail!("--patch must be at least 2, --dim and --classes positive");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let out = &args.out;
    for sub in ["features", "Annotations", "images"] {
        let dir = out.join(sub);
        std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    }

    let palette: Vec<Rgb<u8>> = (0..args.classes)
        .map(|_| Rgb([rng.random_range(0..256u32) as u8, rng.random_range(140..256u32) as u8, rng.random_range(0..80u32) as u8]))
        .collect();
    let prototypes: Vec<Vec<f32>> = (0..args.classes)
        .map(|_| (0..args.dim).map(|_| rng.random_range(-1.0f32..1.0)).collect())
        .collect();

    let side = args.grid as u32 * args.patch;
    let max_extent = args.grid / 2;
    let mut dataset = DatasetManifest::default();
    let mut crops = Vec::with_capacity(args.images);
    for i in 0..args.images {
        let id = format!("synth_{i:03}");
        // Padding below one patch keeps the grid while exercising clipping.
        let image_w = side - rng.random_range(0..args.patch);
        let image_h = side - rng.random_range(0..args.patch);
        let mut manifest = ImageManifest::padded(&id, image_w, image_h, args.patch);
        for (role, file) in [
            ("key", format!("{id}_key.lfea")),
            ("query", format!("{id}_query.lfea")),
            ("value", format!("{id}_value.lfea")),
            ("attention", format!("{id}_att.latt")),
        ] {
            manifest.feature_files.insert(role.into(), file.into());
        }
        let height = rng.random_range(2..=max_extent);
        let width = rng.random_range(2..=max_extent);
        let rect = PatchRect {
            row: rng.random_range(0..=args.grid - height),
            col: rng.random_range(0..=args.grid - width),
            height,
            width,
        };
        let planted = Planted {
            id: id.clone(),
            class: i % args.classes,
            rect,
            manifest,
        };

        write_image_files(&mut rng, args, out, &planted)?;
        let img = picture(&mut rng, &planted, &palette);
        let img_path = out.join("images").join(format!("{id}.png"));
        img.save(&img_path)
            .with_context(|| format!("writing {}", img_path.display()))?;

        let vector = prototypes[planted.class]
            .iter()
            .map(|v| v + rng.random_range(-0.1f32..0.1))
            .collect();
        crops.push(CropDescriptor {
            image_id: id.clone(),
            vector,
        });
        dataset.images.push(DatasetEntry {
            image_id: id.clone(),
            manifest: PathBuf::from("features").join(format!("{id}.json")),
            image_w,
            image_h,
            split: Some("synth".into()),
        });
    }

    write_crop_descriptors(&crops, out.join("crops.lcls"))?;
    dataset.write(out.join("dataset.json"))?;
    log::info!(
        "wrote {} synthetic images with {} classes to {}",
        args.images,
        args.classes,
        out.display()
    );
    Ok(())
}
