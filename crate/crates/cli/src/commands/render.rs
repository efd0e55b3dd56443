use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, ValueEnum};
use stylesplat::manifest::{write_atomic, RunManifest};
use stylesplat::render::{render, RenderChannel};

use crate::error::{usage, CliResult};
use crate::util::{create_dir, finish, parse_list, read_cameras, read_scene};

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Png,
    Gsim,
}

fn parse_channel(s: &str) -> Result<RenderChannel, String> {
    RenderChannel::parse(s).ok_or_else(|| {
        format!("unknown channel {s:?}; expected color, styled, low_feat, high_feat, transformed_feat or depth")
    })
}

#[derive(Args)]
pub struct RenderArgs {
    #[arg(long)]
    scene: PathBuf,
    #[arg(long)]
    cameras: PathBuf,
    /// Output directory for `frame_NNNN.<format>`.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "styled", value_parser = parse_channel)]
    channel: RenderChannel,
    /// PNG needs a 3-channel result; GSIM stores any channel count.
    #[arg(long, value_enum, default_value_t = Format::Png)]
    format: Format,
    /// Comma-separated background value, one per channel [default: zeros].
    #[arg(long)]
    background: Option<String>,
}

pub fn run(a: RenderArgs) -> CliResult<()> {
    let start = Instant::now();
    let scene = read_scene(&a.scene)?;
    let cams = read_cameras(&a.cameras)?;
    let dim = match a.channel {
        RenderChannel::Depth => 1,
        RenderChannel::Appearance(ap) => scene
            .channel(ap)
            .map(|c| c.dim)
            .ok_or_else(|| usage(format!("scene {} has no {ap:?} channel", a.scene.display())))?,
    };
    if a.format == Format::Png && dim != 3 {
        return Err(usage(format!("a {dim}-channel render cannot be written as PNG; use --format gsim")));
    }
    let background = match &a.background {
        Some(b) => parse_list::<f64>(b, "background")?,
        None => vec![0.0; dim],
    };
    if background.len() != dim {
        return Err(usage(format!("background has {} values for a {dim}-channel render", background.len())));
    }

    create_dir(&a.out)?;
    let mut outputs = Vec::with_capacity(cams.len());
    for (i, cam) in cams.iter().enumerate() {
        let img = render(&scene, cam, a.channel, &background)?.image;
        let (bytes, ext) = match a.format {
            Format::Png => (img.to_png()?, "png"),
            Format::Gsim => (img.to_gsim(), "gsim"),
        };
        let path = a.out.join(format!("frame_{i:04}.{ext}"));
        write_atomic(&path, &bytes)?;
        outputs.push(path);
    }
    log::info!("rendered {} frames", outputs.len());

    let mut m = RunManifest::new("render", 0);
    m.input("scene", &a.scene)?.input("cameras", &a.cameras)?;
    m.set("channel", format!("{:?}", a.channel)).set("frames", cams.len());
    m.outputs = outputs;
    finish(m, &a.out, start)?;
    Ok(())
}
