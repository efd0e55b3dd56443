use std::path::PathBuf;
use std::time::Instant;

use clap::Args;
use stylesplat::decoder::KnnDecoder;
use stylesplat::extractor::ToyExtractor;
use stylesplat::manifest::{write_atomic, RunManifest};
use stylesplat::metrics::{consistency_csv, consistency_for_pairs, measure_timing, time_renders, TimingReport};
use stylesplat::scene::build_knn;
use stylesplat::style::style_from_bytes;

use crate::error::{require_file, usage, CliError, CliResult};
use crate::util::{create_dir, finish, parse_pairs, read_cameras, read_scene};

#[derive(Args)]
pub struct MetricsArgs {
    /// Stylized scene.
    #[arg(long)]
    scene: PathBuf,
    #[arg(long)]
    cameras: PathBuf,
    /// Comma-separated `i-j` camera pairs [default: consecutive cameras].
    #[arg(long)]
    pairs: Option<String>,
    /// Output directory for consistency.csv and timing.csv.
    #[arg(long)]
    out: PathBuf,
    /// Rendered frames for the timing median.
    #[arg(long, default_value_t = 20)]
    frames: usize,
    /// With --style, also time one full transfer.
    #[arg(long, requires = "style")]
    decoder: Option<PathBuf>,
    #[arg(long, requires = "decoder")]
    style: Option<PathBuf>,
    #[arg(long, default_value_t = 7)]
    extractor_seed: u64,
}

pub fn run(a: MetricsArgs) -> CliResult<()> {
    let start = Instant::now();
    let scene = read_scene(&a.scene)?;
    if scene.styled_color().is_none() {
        return Err(usage(format!("scene {} has no styled_color; run stylize first", a.scene.display())));
    }
    let cams = read_cameras(&a.cameras)?;
    let pairs = match &a.pairs {
        Some(p) => parse_pairs(p)?,
        None if cams.len() == 1 => vec![(0, 0)],
        None => (1..cams.len()).map(|i| (i - 1, i)).collect(),
    };
    create_dir(&a.out)?;
    let reports = consistency_for_pairs(&scene, &cams, &pairs)?;
    let consistency = a.out.join("consistency.csv");
    write_atomic(&consistency, consistency_csv(&reports).as_bytes())?;
    for r in &reports {
        println!("pair {}-{}: rmse {:.6}, valid {:.3}", r.view_pair.0, r.view_pair.1, r.rmse, r.valid_fraction);
    }

    let mut m = RunManifest::new("metrics", 0);
    let timing = match (&a.decoder, &a.style) {
        (Some(d), Some(s)) => {
            require_file(d, "decoder")?;
            require_file(s, "style")?;
            let decoder = KnnDecoder::load(d)?;
            let bytes = std::fs::read(s).map_err(|e| CliError::Runtime(format!("{}: {e}", s.display())))?;
            let style = style_from_bytes(&bytes, &ToyExtractor::new(a.extractor_seed))?;
            let knn = build_knn(&scene, decoder.k())?;
            m.input("decoder", d)?.input("style", s)?;
            measure_timing(&mut scene.clone(), &decoder, &knn, &style, &cams, a.frames)?
        }
        _ => {
            let frames = a.frames.max(20);
            let cam = cams.first().ok_or_else(|| usage("timing needs at least one camera"))?;
            TimingReport {
                transfer_seconds: f64::NAN,
                render_seconds: time_renders(&scene, &cams, frames)?,
                frames,
                gaussians: scene.len(),
                width: cam.width,
                height: cam.height,
            }
        }
    };
    let timing_path = a.out.join("timing.csv");
    write_atomic(&timing_path, timing.to_csv().as_bytes())?;
    println!(
        "{} Gaussians at {}×{}: render {:.3} ms/frame, transfer {:.3} ms",
        timing.gaussians,
        timing.width,
        timing.height,
        timing.render_seconds * 1e3,
        timing.transfer_seconds * 1e3
    );

    m.input("scene", &a.scene)?.input("cameras", &a.cameras)?;
    m.set("pairs", format!("{pairs:?}")).set("frames", timing.frames);
    m.outputs = vec![consistency, timing_path];
    finish(m, &a.out, start)?;
    Ok(())
}
