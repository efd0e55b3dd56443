use std::path::{Path, PathBuf};
use std::time::Instant;

use stylesplat::manifest::RunManifest;
use stylesplat::render::{parse_cameras, Camera};
use stylesplat::scene::{load_scene, GaussianScene};

use crate::error::{require_file, usage, CliError, CliResult};

/// `<out>.manifest`, beside the output file or directory.
pub fn manifest_path(out: &Path) -> PathBuf {
    let name = out.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| "run".into());
    out.with_file_name(format!("{name}.manifest"))
}

/// Records wall time and writes the manifest for `out`.
pub fn finish(mut manifest: RunManifest, out: &Path, start: Instant) -> CliResult<PathBuf> {
    manifest.wall_seconds = start.elapsed().as_secs_f64();
    let path = manifest_path(out);
    manifest.write(&path)?;
    log::info!("wrote {}", path.display());
    Ok(path)
}

pub fn read_scene(path: &Path) -> CliResult<GaussianScene> {
    require_file(path, "scene")?;
    Ok(load_scene(path)?)
}

pub fn read_cameras(path: &Path) -> CliResult<Vec<Camera>> {
    require_file(path, "cameras file")?;
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    Ok(parse_cameras(&text)?)
}

pub fn create_dir(path: &Path) -> CliResult<()> {
    std::fs::create_dir_all(path).map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", path.display())))
}

/// Files in `dir` with extension `ext`, sorted by name.
pub fn files_with_ext(dir: &Path, ext: &str) -> CliResult<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| CliError::Runtime(format!("{}: {e}", dir.display())))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|e| e.eq_ignore_ascii_case(ext)))
        .collect();
    files.sort();
    Ok(files)
}

pub fn parse_list<T: std::str::FromStr>(text: &str, what: &str) -> CliResult<Vec<T>> {
    text.split(',')
        .map(|s| s.trim().parse::<T>().map_err(|_| usage(format!("malformed {what} {text:?}: {s:?} is not a number"))))
        .collect()
}

/// Comma-separated `i-j` view pairs.
pub fn parse_pairs(text: &str) -> CliResult<Vec<(usize, usize)>> {
    text.split(',')
        .map(|p| {
            let (a, b) = p.trim().split_once('-').ok_or_else(|| usage(format!("malformed pair {p:?}; expected i-j")))?;
            match (a.parse(), b.parse()) {
                (Ok(a), Ok(b)) => Ok((a, b)),
                _ => Err(usage(format!("malformed pair {p:?}; expected i-j"))),
            }
        })
        .collect()
}

pub fn reject_ply(path: &Path, what: &str) -> CliResult<()> {
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("ply")) {
        return Err(usage(format!("{what} {} must not be a PLY file: PLY only holds geometry and base color", path.display())));
    }
    Ok(())
}
