use std::path::PathBuf;
use std::time::Instant;

use clap::Args;
use stylesplat::extractor::{save_feature_map, LayerId, ToyExtractor};
use stylesplat::manifest::{write_atomic, RunManifest};
use stylesplat::render::{cameras_to_json, render, RenderChannel};
use stylesplat::scene::save_scene;
use stylesplat::toy::{orbit_cameras, style_images, toy_scene};

use crate::error::{usage, CliResult};
use crate::util::{create_dir, finish};

#[derive(Args)]
pub struct ToyArgs {
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 2000)]
    gaussians: usize,
    /// Number of training views.
    #[arg(long, default_value_t = 8)]
    views: usize,
    /// Orbit arc covered by the views, in degrees.
    #[arg(long, default_value_t = 90.0)]
    arc: f64,
    /// View and style image size in pixels; a multiple of 8.
    #[arg(long, default_value_t = 64)]
    size: usize,
    #[arg(long, default_value_t = 2)]
    styles: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Seed of the feature extractor used for the feature maps.
    #[arg(long, default_value_t = 7)]
    extractor_seed: u64,
}

/// Layout: `scene.ply`, `views/view_NNN.png`, `views/cameras.json`,
/// `features/view_NNN.gsfm`, `styles/style_N.png`.
pub fn run(a: ToyArgs) -> CliResult<()> {
    let start = Instant::now();
    if a.size == 0 || a.size % 8 != 0 {
        return Err(usage(format!("--size {} must be a positive multiple of 8", a.size)));
    }
    if a.gaussians == 0 {
        return Err(usage("--gaussians must be positive"));
    }
    let (views_dir, feats_dir, styles_dir) = (a.out.join("views"), a.out.join("features"), a.out.join("styles"));
    for d in [&views_dir, &feats_dir, &styles_dir] {
        create_dir(d)?;
    }
    let scene = toy_scene(a.seed, a.gaussians);
    let scene_path = a.out.join("scene.ply");
    save_scene(&scene, &scene_path)?;
    let cams = orbit_cameras(a.views, a.arc, a.size, a.size);
    write_atomic(&views_dir.join("cameras.json"), cameras_to_json(&cams).as_bytes())?;

    let ext = ToyExtractor::new(a.extractor_seed);
    for (i, cam) in cams.iter().enumerate() {
        let view = render(&scene, cam, RenderChannel::COLOR, &[0.0; 3])?.image;
        write_atomic(&views_dir.join(format!("view_{i:03}.png")), &view.to_png()?)?;
        let map = ext.extract_layer(&view, LayerId::EMBED)?;
        save_feature_map(&map, feats_dir.join(format!("view_{i:03}.gsfm")))?;
    }
    for (i, img) in style_images(a.styles, a.seed, a.size).iter().enumerate() {
        write_atomic(&styles_dir.join(format!("style_{i}.png")), &img.to_png()?)?;
    }

    let mut m = RunManifest::new("toy", a.seed);
    m.set("gaussians", a.gaussians)
        .set("views", a.views)
        .set("arc", a.arc)
        .set("size", a.size)
        .set("styles", a.styles)
        .set("extractor_seed", a.extractor_seed);
    m.outputs = vec![scene_path, views_dir, feats_dir, styles_dir];
    finish(m, &a.out, start)?;
    Ok(())
}
