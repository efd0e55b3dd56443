use std::path::PathBuf;
use std::sync::atomic::Ordering;
use std::time::Instant;

use clap::Args;
use stylesplat::manifest::RunManifest;
use stylesplat_serve::{serve, AppState, ServerConfig};

use crate::error::{require_dir, usage, CliError, CliResult};

#[derive(Args)]
pub struct ServeArgs {
    /// Directory of `.gssc`/`.ply` scenes with `<stem>.gsdc` or `decoder.gsdc` decoders.
    #[arg(long)]
    scenes: PathBuf,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    /// Port; 0 picks a free one.
    #[arg(long, default_value_t = 8080)]
    port: u16,
    /// Styles whose transferred features are kept per scene.
    #[arg(long, default_value_t = 8)]
    style_cache: usize,
    #[arg(long, default_value_t = 7)]
    extractor_seed: u64,
    /// Manifest written on shutdown [default: <scenes>/serve.manifest].
    #[arg(long)]
    manifest: Option<PathBuf>,
}

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {}
        _ = term => {}
    }
    log::info!("shutting down");
}

pub fn run(a: ServeArgs) -> CliResult<()> {
    let start = Instant::now();
    require_dir(&a.scenes, "scenes")?;
    let config = ServerConfig { extractor_seed: a.extractor_seed, style_cache: a.style_cache, ..ServerConfig::default() };
    let state = AppState::new(config);
    let loaded = state.load_dir(&a.scenes)?;
    log::info!("loaded {loaded} scenes from {}", a.scenes.display());

    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::Runtime(format!("cannot start the runtime: {e}")))?;
    let addr = rt.block_on(async {
        let listener = tokio::net::TcpListener::bind((a.host.as_str(), a.port))
            .await
            .map_err(|e| usage(format!("cannot listen on {}:{}: {e}", a.host, a.port)))?;
        let addr = listener.local_addr().map_err(|e| CliError::Runtime(e.to_string()))?;
        println!("listening on http://{addr}/v1");
        serve(listener, state.clone(), shutdown_signal())
            .await
            .map_err(|e| CliError::Runtime(format!("server failed: {e}")))?;
        Ok::<_, CliError>(addr)
    })?;

    let mut m = RunManifest::new("serve", 0);
    m.set("address", addr)
        .set("scenes", loaded)
        .set("style_cache", a.style_cache)
        .set("extractor_seed", a.extractor_seed)
        .set("frames", state.counters.frames.load(Ordering::Relaxed))
        .set("decodes", state.counters.decode.load(Ordering::Relaxed))
        .set("adain", state.counters.adain.load(Ordering::Relaxed))
        .set("frame_path_transfers", state.counters.frame_path_transfers.load(Ordering::Relaxed));
    m.wall_seconds = start.elapsed().as_secs_f64();
    let path = a.manifest.clone().unwrap_or_else(|| a.scenes.join("serve.manifest"));
    m.write(&path)?;
    log::info!("wrote {}", path.display());
    Ok(())
}
