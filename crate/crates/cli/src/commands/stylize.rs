use std::path::PathBuf;
use std::time::Instant;

use clap::Args;
use stylesplat::decoder::{stylize, stylize_blend, KnnDecoder};
use stylesplat::extractor::ToyExtractor;
use stylesplat::manifest::RunManifest;
use stylesplat::scene::{build_knn, save_scene};
use stylesplat::style::style_from_bytes;

use crate::error::{require_file, usage, CliError, CliResult};
use crate::util::{finish, parse_list, read_scene, reject_ply};

#[derive(Args)]
pub struct StylizeArgs {
    #[arg(long)]
    scene: PathBuf,
    #[arg(long)]
    decoder: PathBuf,
    /// Style as a PNG image, GSFM feature map or GSST statistics; repeat to blend.
    #[arg(long, required = true)]
    style: Vec<PathBuf>,
    /// Comma-separated blend weights, one per --style, summing to 1.
    #[arg(long)]
    interpolate: Option<String>,
    /// Output scene (native format).
    #[arg(long)]
    out: PathBuf,
    /// Seed of the feature extractor applied to style images.
    #[arg(long, default_value_t = 7)]
    extractor_seed: u64,
}

pub fn run(a: StylizeArgs) -> CliResult<()> {
    let start = Instant::now();
    reject_ply(&a.out, "--out")?;
    let weights = a.interpolate.as_deref().map(|w| parse_list::<f64>(w, "weights")).transpose()?;
    match &weights {
        Some(w) if w.len() != a.style.len() => {
            return Err(usage(format!("{} weights for {} styles", w.len(), a.style.len())));
        }
        None if a.style.len() > 1 => return Err(usage("blending several styles needs --interpolate weights")),
        _ => {}
    }
    let mut scene = read_scene(&a.scene)?;
    require_file(&a.decoder, "decoder")?;
    let decoder = KnnDecoder::load(&a.decoder)?;

    let ext = ToyExtractor::new(a.extractor_seed);
    let mut m = RunManifest::new("stylize", 0);
    let mut styles = Vec::with_capacity(a.style.len());
    for (i, p) in a.style.iter().enumerate() {
        require_file(p, "style")?;
        let bytes = std::fs::read(p).map_err(|e| CliError::Runtime(format!("{}: {e}", p.display())))?;
        let stats = style_from_bytes(&bytes, &ext)?;
        m.set(format!("style.{i}.id"), stats.source_hex());
        m.input(format!("style.{i}"), p)?;
        styles.push(stats);
    }

    let knn = build_knn(&scene, decoder.k())?;
    match &weights {
        None => stylize(&mut scene, &styles[0], &decoder, &knn)?,
        Some(w) => {
            let refs: Vec<_> = styles.iter().collect();
            stylize_blend(&mut scene, &refs, w, &decoder, &knn)?
        }
    }
    save_scene(&scene, &a.out)?;

    m.input("scene", &a.scene)?.input("decoder", &a.decoder)?;
    m.set("extractor_seed", a.extractor_seed);
    if let Some(w) = &weights {
        m.set("weights", format!("{w:?}"));
    }
    m.outputs = vec![a.out.clone()];
    finish(m, &a.out, start)?;
    Ok(())
}
