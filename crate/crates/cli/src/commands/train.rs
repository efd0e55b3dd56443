use std::path::PathBuf;
use std::time::Instant;

use clap::Args;
use stylesplat::decoder::{init_decoder_from, KnnDecoder, DEFAULT_K, DEFAULT_SCHEDULE};
use stylesplat::extractor::ToyExtractor;
use stylesplat::image::Image;
use stylesplat::manifest::RunManifest;
use stylesplat::render::scale_camera;
use stylesplat::scene::build_knn;
use stylesplat::style::crop_to_multiple;
use stylesplat::train::{train_decoder, StyleLossConfig, StyleTarget, TrainConfig, TrainProblem};

use crate::error::{require_dir, require_file, usage, CliError, CliResult};
use crate::util::{files_with_ext, finish, parse_list, read_cameras, read_scene};

#[derive(Args)]
pub struct TrainArgs {
    /// Scene with per-Gaussian features.
    #[arg(long)]
    scene: PathBuf,
    /// Directory of PNG style images.
    #[arg(long)]
    styles: PathBuf,
    #[arg(long)]
    cameras: PathBuf,
    /// Output decoder checkpoint.
    #[arg(long)]
    out: PathBuf,
    /// Start from another decoder; its shape must match --k and --schedule.
    #[arg(long)]
    init_from: Option<PathBuf>,
    #[arg(long, default_value_t = 3000)]
    iterations: usize,
    #[arg(long, default_value_t = 0.001)]
    lr: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Neighborhood size [default: 8, or that of --init-from].
    #[arg(long)]
    k: Option<usize>,
    /// Comma-separated channel widths, input first [default: D,256,128,64,32,3].
    #[arg(long)]
    schedule: Option<String>,
    /// Style loss weight.
    #[arg(long, default_value_t = 10.0)]
    lambda: f64,
    #[arg(long)]
    loss_csv: Option<PathBuf>,
    /// Render training views at 1/stride resolution.
    #[arg(long, default_value_t = 1)]
    stride: usize,
    #[arg(long, default_value_t = 7)]
    extractor_seed: u64,
}

pub fn run(a: TrainArgs) -> CliResult<()> {
    let start = Instant::now();
    require_dir(&a.styles, "styles")?;
    let scene = read_scene(&a.scene)?;
    let d = scene
        .high_feat()
        .map(|h| h.dim())
        .ok_or_else(|| usage(format!("scene {} has no features; run embed first", a.scene.display())))?;
    let cams = read_cameras(&a.cameras)?
        .iter()
        .map(|c| scale_camera(c, a.stride))
        .collect::<Result<Vec<_>, _>>()?;

    let source = match &a.init_from {
        Some(p) => {
            require_file(p, "--init-from decoder")?;
            Some(KnnDecoder::load(p)?)
        }
        None => None,
    };
    let k = a.k.or(source.as_ref().map(KnnDecoder::k)).unwrap_or(DEFAULT_K);
    let schedule = match (&a.schedule, &source) {
        (Some(s), _) => parse_list::<usize>(s, "schedule")?,
        (None, Some(src)) => src.schedule(),
        (None, None) => std::iter::once(d).chain(DEFAULT_SCHEDULE[1..].iter().copied()).collect(),
    };
    if schedule.first() != Some(&d) {
        return Err(usage(format!("schedule {schedule:?} must start with the feature width {d}")));
    }
    let mut decoder = match &source {
        Some(src) => init_decoder_from(src, k, &schedule)?,
        None => KnnDecoder::seeded(k, &schedule, a.seed)?,
    };

    let ext = ToyExtractor::new(a.extractor_seed);
    let style_files = files_with_ext(&a.styles, "png")?;
    if style_files.is_empty() {
        return Err(usage(format!("no PNG style images in {}", a.styles.display())));
    }
    let mut m = RunManifest::new("train", a.seed);
    let mut targets = Vec::with_capacity(style_files.len());
    for f in &style_files {
        let bytes = std::fs::read(f).map_err(|e| CliError::Runtime(format!("{}: {e}", f.display())))?;
        let img = crop_to_multiple(&Image::from_png(&bytes)?, 8)?;
        targets.push(StyleTarget::from_image(&ext, &img)?);
        m.input(format!("style.{}", f.file_stem().unwrap_or_default().to_string_lossy()), f)?;
    }

    let knn = build_knn(&scene, k)?;
    let loss = StyleLossConfig { lambda: a.lambda, ..StyleLossConfig::default() };
    let problem = TrainProblem::new(&scene, &cams, targets, &ext, &knn, loss)?;
    let cfg = TrainConfig { iterations: a.iterations, lr: a.lr, seed: a.seed };
    log::info!("training K={k} {schedule:?} on {} views × {} styles, {} iterations", cams.len(), style_files.len(), a.iterations);
    let report = train_decoder(&problem, &mut decoder, &cfg)?;
    decoder.save(&a.out)?;

    let mut outputs = vec![a.out.clone()];
    if let Some(csv) = &a.loss_csv {
        report.write_csv(csv)?;
        outputs.push(csv.clone());
    }
    m.input("scene", &a.scene)?.input("cameras", &a.cameras)?;
    if let Some(p) = &a.init_from {
        m.input("init_from", p)?;
    }
    m.set("iterations", a.iterations)
        .set("lr", a.lr)
        .set("k", k)
        .set("schedule", format!("{schedule:?}"))
        .set("lambda", a.lambda)
        .set("stride", a.stride)
        .set("extractor_seed", a.extractor_seed);
    m.series.insert("total_loss".into(), report.history.iter().map(|r| r.total).collect());
    m.outputs = outputs;
    finish(m, &a.out, start)?;
    Ok(())
}
