use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, ValueEnum};
use stylesplat::embed::{embed_train, EmbedConfig, FeatureInit};
use stylesplat::extractor::load_feature_map;
use stylesplat::image::Image;
use stylesplat::manifest::{write_atomic, RunManifest};
use stylesplat::scene::save_scene;

use crate::error::{require_dir, usage, CliError, CliResult};
use crate::util::{files_with_ext, finish, read_cameras, read_scene, reject_ply};

#[derive(Clone, Copy, ValueEnum)]
enum Init {
    Random,
    Zero,
}

#[derive(Args)]
pub struct EmbedArgs {
    #[arg(long)]
    scene: PathBuf,
    /// Directory of view images, one PNG per camera in name order.
    #[arg(long)]
    views: PathBuf,
    /// Directory holding `<view stem>.gsfm` for every view.
    #[arg(long)]
    features: PathBuf,
    /// Cameras file [default: <views>/cameras.json].
    #[arg(long)]
    cameras: Option<PathBuf>,
    /// Output scene (native format).
    #[arg(long)]
    out: PathBuf,
    /// Affine lift checkpoint [default: <out> with extension gsaf].
    #[arg(long)]
    lift: Option<PathBuf>,
    /// Per-iteration loss as CSV.
    #[arg(long)]
    loss_csv: Option<PathBuf>,
    #[arg(long, default_value_t = 30_000)]
    iterations: usize,
    #[arg(long, default_value_t = 0.01)]
    lr_features: f64,
    #[arg(long, default_value_t = 0.001)]
    lr_affine: f64,
    /// Width of the rendered low-dimensional features.
    #[arg(long, default_value_t = 32)]
    d_low: usize,
    #[arg(long, value_enum, default_value_t = Init::Random)]
    init: Init,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

pub fn run(a: EmbedArgs) -> CliResult<()> {
    let start = Instant::now();
    require_dir(&a.views, "views")?;
    require_dir(&a.features, "features")?;
    reject_ply(&a.out, "--out")?;
    let cam_path = a.cameras.clone().unwrap_or_else(|| a.views.join("cameras.json"));
    let cams = read_cameras(&cam_path)?;
    let mut scene = read_scene(&a.scene)?;

    let views = files_with_ext(&a.views, "png")?;
    if views.len() != cams.len() {
        return Err(usage(format!("{} views in {} but {} cameras", views.len(), a.views.display(), cams.len())));
    }
    let mut maps = Vec::with_capacity(views.len());
    let mut m = RunManifest::new("embed", a.seed);
    for (i, (view, cam)) in views.iter().zip(&cams).enumerate() {
        let bytes = std::fs::read(view).map_err(|e| CliError::Runtime(format!("{}: {e}", view.display())))?;
        let img = Image::from_png(&bytes)?;
        if (img.width, img.height) != (cam.width, cam.height) {
            return Err(usage(format!(
                "view {} is {}×{} but camera {i} is {}×{}",
                view.display(),
                img.width,
                img.height,
                cam.width,
                cam.height
            )));
        }
        let stem = view.file_stem().unwrap_or_default().to_string_lossy();
        let feat = a.features.join(format!("{stem}.gsfm"));
        if !feat.is_file() {
            return Err(usage(format!("feature map {} for view {} is missing", feat.display(), view.display())));
        }
        maps.push(load_feature_map(&feat)?);
        m.input(format!("view.{stem}"), view)?;
        m.input(format!("features.{stem}"), &feat)?;
    }
    let first = maps.first().ok_or_else(|| usage(format!("no views in {}", a.views.display())))?;

    let cfg = EmbedConfig {
        iterations: a.iterations,
        lr_features: a.lr_features,
        lr_affine: a.lr_affine,
        d_low: a.d_low,
        d_high: first.channels(),
        layer: first.layer(),
        seed: a.seed,
        init: match a.init {
            Init::Random => FeatureInit::Random,
            Init::Zero => FeatureInit::Zero,
        },
        ..EmbedConfig::default()
    };
    log::info!("embedding {} Gaussians from {} views, {} iterations", scene.len(), cams.len(), cfg.iterations);
    let result = embed_train(&mut scene, &cams, &maps, &cfg)?;

    let lift_path = a.lift.clone().unwrap_or_else(|| a.out.with_extension("gsaf"));
    save_scene(&scene, &a.out)?;
    result.lift.save(&lift_path)?;
    let mut outputs = vec![a.out.clone(), lift_path];
    if let Some(csv) = &a.loss_csv {
        let mut text = String::from("iteration,view,loss\n");
        for (i, (l, v)) in result.losses.iter().zip(&result.views).enumerate() {
            text.push_str(&format!("{i},{v},{l:.9}\n"));
        }
        write_atomic(csv, text.as_bytes())?;
        outputs.push(csv.clone());
    }
    if let (Some(f), Some(l)) = (result.losses.first(), result.losses.last()) {
        log::info!("loss {f:.6} -> {l:.6}");
    }

    m.input("scene", &a.scene)?.input("cameras", &cam_path)?;
    m.set("iterations", a.iterations)
        .set("lr_features", a.lr_features)
        .set("lr_affine", a.lr_affine)
        .set("d_low", a.d_low)
        .set("d_high", cfg.d_high)
        .set("layer", format!("{:?}", cfg.layer))
        .set("init", format!("{:?}", cfg.init));
    m.series.insert("loss".into(), result.losses);
    m.outputs = outputs;
    finish(m, &a.out, start)?;
    Ok(())
}
