use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};
use std::sync::OnceLock;

use stylesplat::decoder::{stylize, stylize_blend, KnnDecoder};
use stylesplat::embed::{embed_train, AffineLift, EmbedConfig};
use stylesplat::extractor::{load_feature_map, ToyExtractor};
use stylesplat::image::Image;
use stylesplat::manifest::RunManifest;
use stylesplat::metrics::{consistency_csv, consistency_for_pairs};
use stylesplat::render::{parse_cameras, render, RenderChannel};
use stylesplat::scene::{build_knn, load_scene, save_scene};
use stylesplat::style::{crop_to_multiple, style_from_bytes, StyleStats};
use stylesplat::train::{train_decoder, StyleLossConfig, StyleTarget, TrainConfig, TrainProblem};
use tempfile::TempDir;

fn stylesplat(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stylesplat")).args(args).env("RUST_LOG", "warn").output().unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[track_caller]
fn ok(out: &Output) {
    assert!(out.status.success(), "exit {:?}: {}", out.status.code(), String::from_utf8_lossy(&out.stderr));
}

#[track_caller]
fn exit(out: &Output, code: i32) -> String {
    let err = String::from_utf8_lossy(&out.stderr).into_owned();
    assert_eq!(out.status.code(), Some(code), "{err}");
    err
}

fn manifest(out: &Path) -> std::collections::BTreeMap<String, String> {
    let path = PathBuf::from(format!("{}.manifest", out.display()));
    RunManifest::parse(&std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display())))
}

const EMBED_ITERS: &str = "30";
const SCHEDULE: &str = "256,16,3";

/// A toy directory, an embedded scene, a small trained decoder and a
/// stylized scene, built once through the CLI.
struct Pipeline {
    _dir: TempDir,
    toy: PathBuf,
    cameras: PathBuf,
    styles: PathBuf,
    style: [PathBuf; 2],
    embedded: PathBuf,
    decoder: PathBuf,
    stylized: PathBuf,
}

fn pipeline() -> &'static Pipeline {
    static P: OnceLock<Pipeline> = OnceLock::new();
    P.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let toy = dir.path().join("toy");
        let pl = Pipeline {
            cameras: toy.join("views/cameras.json"),
            styles: toy.join("styles"),
            style: [toy.join("styles/style_0.png"), toy.join("styles/style_1.png")],
            embedded: dir.path().join("embedded.gssc"),
            decoder: dir.path().join("decoder.gsdc"),
            stylized: dir.path().join("stylized.gssc"),
            toy,
            _dir: dir,
        };
        let toy = &pl.toy;
        ok(&stylesplat(&["toy", "--out", p(toy), "--gaussians", "300", "--views", "3", "--size", "32", "--arc", "30", "--seed", "4"]));
        ok(&stylesplat(&[
            "embed", "--scene", p(&toy.join("scene.ply")), "--views", p(&toy.join("views")), "--features",
            p(&toy.join("features")), "--out", p(&pl.embedded), "--iterations", EMBED_ITERS, "--seed", "3",
        ]));
        ok(&stylesplat(&[
            "train", "--scene", p(&pl.embedded), "--styles", p(&pl.styles), "--cameras", p(&pl.cameras),
            "--out", p(&pl.decoder), "--iterations", "2", "--k", "4", "--schedule", SCHEDULE, "--seed", "5",
        ]));
        ok(&stylesplat(&[
            "stylize", "--scene", p(&pl.embedded), "--decoder", p(&pl.decoder), "--style", p(&pl.style[0]),
            "--out", p(&pl.stylized),
        ]));
        pl
    })
}

#[test]
fn toy_writes_views_features_styles_and_a_manifest() {
    let pl = pipeline();
    let toy = &pl.toy;
    let cams = parse_cameras(&std::fs::read_to_string(&pl.cameras).unwrap()).unwrap();
    assert_eq!(cams.len(), 3);
    for i in 0..3 {
        assert!(toy.join(format!("views/view_{i:03}.png")).is_file());
        assert_eq!(load_feature_map(toy.join(format!("features/view_{i:03}.gsfm"))).unwrap().channels(), 256);
    }
    assert!(pl.style[1].is_file());
    assert_eq!(load_scene(toy.join("scene.ply")).unwrap().len(), 300);
    let m = manifest(&toy);
    assert_eq!(m["command"], "toy");
    assert_eq!(m["seed"], "4");
    assert_eq!(stylesplat(&["toy", "--out", p(&toy), "--size", "30"]).status.code(), Some(2));
}

#[test]
fn embed_matches_the_library_run_byte_for_byte() {
    let pl = pipeline();
    let toy = &pl.toy;
    let mut scene = load_scene(toy.join("scene.ply")).unwrap();
    let cams = parse_cameras(&std::fs::read_to_string(&pl.cameras).unwrap()).unwrap();
    let maps: Vec<_> = (0..3).map(|i| load_feature_map(toy.join(format!("features/view_{i:03}.gsfm"))).unwrap()).collect();
    let cfg = EmbedConfig { iterations: EMBED_ITERS.parse().unwrap(), seed: 3, ..EmbedConfig::default() };
    let result = embed_train(&mut scene, &cams, &maps, &cfg).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let lib = dir.path().join("embedded.gssc");
    scene.name = "scene".into();
    save_scene(&scene, &lib).unwrap();
    assert_eq!(std::fs::read(&pl.embedded).unwrap(), std::fs::read(&lib).unwrap());
    assert_eq!(AffineLift::load(pl.embedded.with_extension("gsaf")).unwrap().to_bytes(), result.lift.to_bytes());

    let m = manifest(&pl.embedded);
    assert_eq!(m["config.iterations"], EMBED_ITERS);
    assert_eq!(m["series.loss"].split(',').count(), result.losses.len());
    assert!(m["input.scene"].contains("sha256:"));
}

#[test]
fn embed_contract_errors_exit_2() {
    let pl = pipeline();
    let toy = &pl.toy;
    let dir = tempfile::tempdir().unwrap();
    let scene = toy.join("scene.ply");
    let missing = dir.path().join("no-features");
    let err = exit(
        &stylesplat(&["embed", "--scene", p(&scene), "--views", p(&toy.join("views")), "--features", p(&missing), "--out", p(&dir.path().join("o.gssc"))]),
        2,
    );
    assert!(err.contains(p(&missing)), "{err}");

    // One feature map short.
    let partial = dir.path().join("partial");
    std::fs::create_dir(&partial).unwrap();
    std::fs::copy(toy.join("features/view_000.gsfm"), partial.join("view_000.gsfm")).unwrap();
    let err = exit(
        &stylesplat(&["embed", "--scene", p(&scene), "--views", p(&toy.join("views")), "--features", p(&partial), "--out", p(&dir.path().join("o.gssc"))]),
        2,
    );
    assert!(err.contains("view_001.gsfm"), "{err}");

    let ply_out = dir.path().join("o.ply");
    exit(
        &stylesplat(&["embed", "--scene", p(&scene), "--views", p(&toy.join("views")), "--features", p(&toy.join("features")), "--out", p(&ply_out)]),
        2,
    );
}

#[test]
fn zero_iteration_embed_keeps_the_geometry_and_writes_a_manifest() {
    let pl = pipeline();
    let toy = &pl.toy;
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("zero.gssc");
    ok(&stylesplat(&[
        "embed", "--scene", p(&toy.join("scene.ply")), "--views", p(&toy.join("views")), "--features",
        p(&toy.join("features")), "--out", p(&out), "--iterations", "0",
    ]));
    let input = load_scene(toy.join("scene.ply")).unwrap();
    let got = load_scene(&out).unwrap();
    assert_eq!(got.geometry_hash(), input.geometry_hash());
    assert_eq!(got.colors(), input.colors());
    assert_eq!(got.high_feat().unwrap().dim(), 256);
    assert_eq!(manifest(&out)["config.iterations"], "0");
}

#[test]
fn train_matches_the_library_run_byte_for_byte() {
    let pl = pipeline();
    let scene = load_scene(&pl.embedded).unwrap();
    let cams = parse_cameras(&std::fs::read_to_string(&pl.cameras).unwrap()).unwrap();
    let ext = ToyExtractor::new(7);
    let targets = (0..2)
        .map(|i| {
            let img = crop_to_multiple(&Image::from_png(&std::fs::read(&pl.style[i]).unwrap()).unwrap(), 8).unwrap();
            StyleTarget::from_image(&ext, &img).unwrap()
        })
        .collect();
    let knn = build_knn(&scene, 4).unwrap();
    let problem = TrainProblem::new(&scene, &cams, targets, &ext, &knn, StyleLossConfig::default()).unwrap();
    let mut decoder = KnnDecoder::seeded(4, &[256, 16, 3], 5).unwrap();
    let report = train_decoder(&problem, &mut decoder, &TrainConfig { iterations: 2, lr: 0.001, seed: 5 }).unwrap();
    assert_eq!(std::fs::read(&pl.decoder).unwrap(), decoder.to_bytes());
    let m = manifest(&pl.decoder);
    assert_eq!(m["series.total_loss"].split(',').count(), report.history.len());
}

#[test]
fn train_from_a_checkpoint_with_zero_iterations_copies_it() {
    let pl = pipeline();
    let dir = tempfile::tempdir().unwrap();
    let copy = dir.path().join("copy.gsdc");
    let csv = dir.path().join("loss.csv");
    let common = ["--scene", p(&pl.embedded), "--styles", p(&pl.styles), "--cameras", p(&pl.cameras)];
    let mut args = vec!["train"];
    args.extend(common);
    args.extend(["--out", p(&copy), "--init-from", p(&pl.decoder), "--iterations", "0", "--loss-csv", p(&csv)]);
    ok(&stylesplat(&args));
    assert_eq!(std::fs::read(&copy).unwrap(), std::fs::read(&pl.decoder).unwrap());
    assert_eq!(std::fs::read_to_string(&csv).unwrap(), "iteration,content,style,total\n");

    let mut bad = vec!["train"];
    bad.extend(common);
    bad.extend(["--out", p(&copy), "--init-from", p(&pl.decoder), "--schedule", "256,32,3", "--iterations", "0"]);
    let err = exit(&stylesplat(&bad), 2);
    assert!(err.contains("mismatch"), "{err}");

    let mut bad_k = vec!["train"];
    bad_k.extend(common);
    bad_k.extend(["--out", p(&copy), "--init-from", p(&pl.decoder), "--k", "8", "--iterations", "0"]);
    exit(&stylesplat(&bad_k), 2);

    let mut bad_width = vec!["train"];
    bad_width.extend(common);
    bad_width.extend(["--out", p(&copy), "--schedule", "64,3", "--iterations", "0"]);
    exit(&stylesplat(&bad_width), 2);
}

#[test]
fn train_needs_an_embedded_scene() {
    let pl = pipeline();
    let dir = tempfile::tempdir().unwrap();
    let err = exit(
        &stylesplat(&[
            "train", "--scene", p(&pl.toy.join("scene.ply")), "--styles", p(&pl.styles), "--cameras",
            p(&pl.cameras), "--out", p(&dir.path().join("d.gsdc")),
        ]),
        2,
    );
    assert!(err.contains("embed"), "{err}");
}

#[test]
fn stylize_matches_the_library_and_one_hot_blends() {
    let pl = pipeline();
    let mut scene = load_scene(&pl.embedded).unwrap();
    let decoder = KnnDecoder::load(&pl.decoder).unwrap();
    let knn = build_knn(&scene, decoder.k()).unwrap();
    let ext = ToyExtractor::new(7);
    let style = style_from_bytes(&std::fs::read(&pl.style[0]).unwrap(), &ext).unwrap();
    stylize(&mut scene, &style, &decoder, &knn).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let lib = dir.path().join("stylized.gssc");
    save_scene(&scene, &lib).unwrap();
    assert_eq!(std::fs::read(&pl.stylized).unwrap(), std::fs::read(&lib).unwrap());
    assert_eq!(manifest(&pl.stylized)["config.style.0.id"], style.source_hex());

    let blend = dir.path().join("blend.gssc");
    let base = ["stylize", "--scene", p(&pl.embedded), "--decoder", p(&pl.decoder)];
    let mut args = base.to_vec();
    args.extend(["--style", p(&pl.style[0]), "--style", p(&pl.style[1]), "--interpolate", "1,0", "--out", p(&blend)]);
    ok(&stylesplat(&args));
    let one_hot = load_scene(&blend).unwrap();
    let single = load_scene(&pl.stylized).unwrap();
    assert_eq!(one_hot.styled_color(), single.styled_color());
    assert_eq!(one_hot.transformed_feat(), single.transformed_feat());

    // A true blend agrees with the library blend.
    let mut args = base.to_vec();
    args.extend(["--style", p(&pl.style[0]), "--style", p(&pl.style[1]), "--interpolate", "0.3,0.7", "--out", p(&blend)]);
    ok(&stylesplat(&args));
    let other = style_from_bytes(&std::fs::read(&pl.style[1]).unwrap(), &ext).unwrap();
    let mut mixed = load_scene(&pl.embedded).unwrap();
    stylize_blend(&mut mixed, &[&style, &other], &[0.3, 0.7], &decoder, &knn).unwrap();
    assert_eq!(load_scene(&blend).unwrap().styled_color(), mixed.styled_color());

    // Precomputed statistics are stored as f32, so compare against the reloaded set.
    let gsst = dir.path().join("style.gsst");
    style.save(&gsst).unwrap();
    let from_stats = dir.path().join("from_stats.gssc");
    let mut args = base.to_vec();
    args.extend(["--style", p(&gsst), "--out", p(&from_stats)]);
    ok(&stylesplat(&args));
    let stored = StyleStats::load(&gsst).unwrap();
    assert_eq!(stored.source_hex(), style.source_hex());
    let mut lib_stats = load_scene(&pl.embedded).unwrap();
    stylize(&mut lib_stats, &stored, &decoder, &knn).unwrap();
    let got = load_scene(&from_stats).unwrap();
    assert_eq!(got.styled_color(), lib_stats.styled_color());
    let (a, b) = (got.styled_color().unwrap(), single.styled_color().unwrap());
    assert!(a.iter().flatten().zip(b.iter().flatten()).all(|(x, y)| (x - y).abs() < 1e-4));
}

#[test]
fn stylize_rejects_malformed_weights() {
    let pl = pipeline();
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x.gssc");
    let base = ["stylize", "--scene", p(&pl.embedded), "--decoder", p(&pl.decoder), "--out", p(&out)];
    let two = ["--style", p(&pl.style[0]), "--style", p(&pl.style[1])];
    for w in ["1,x", "0.5,0.6", "1", ""] {
        let mut args = base.to_vec();
        args.extend(two);
        args.extend(["--interpolate", w]);
        exit(&stylesplat(&args), 2);
    }
    let mut args = base.to_vec();
    args.extend(two);
    exit(&stylesplat(&args), 2);
    assert!(!out.exists());
}

#[test]
fn render_matches_the_library_frames() {
    let pl = pipeline();
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("frames");
    ok(&stylesplat(&["render", "--scene", p(&pl.stylized), "--cameras", p(&pl.cameras), "--out", p(&out)]));
    let scene = load_scene(&pl.stylized).unwrap();
    let cams = parse_cameras(&std::fs::read_to_string(&pl.cameras).unwrap()).unwrap();
    for (i, cam) in cams.iter().enumerate() {
        let want = render(&scene, cam, RenderChannel::STYLED, &[0.0; 3]).unwrap().image.to_png().unwrap();
        assert_eq!(std::fs::read(out.join(format!("frame_{i:04}.png"))).unwrap(), want);
    }
    assert_eq!(manifest(&out)["config.frames"], "3");

    let depth = dir.path().join("depth");
    exit(&stylesplat(&["render", "--scene", p(&pl.stylized), "--cameras", p(&pl.cameras), "--out", p(&depth), "--channel", "depth"]), 2);
    ok(&stylesplat(&[
        "render", "--scene", p(&pl.stylized), "--cameras", p(&pl.cameras), "--out", p(&depth), "--channel", "depth", "--format", "gsim",
    ]));
    let want = render(&scene, &cams[1], RenderChannel::Depth, &[0.0]).unwrap().image;
    assert_eq!(std::fs::read(depth.join("frame_0001.gsim")).unwrap(), want.to_gsim());
}

#[test]
fn render_edge_cases() {
    let pl = pipeline();
    let dir = tempfile::tempdir().unwrap();
    let none = dir.path().join("none.json");
    std::fs::write(&none, "[]").unwrap();
    let out = dir.path().join("empty");
    ok(&stylesplat(&["render", "--scene", p(&pl.stylized), "--cameras", p(&none), "--out", p(&out)]));
    assert_eq!(std::fs::read_dir(&out).unwrap().count(), 0);
    assert_eq!(manifest(&out)["config.frames"], "0");

    let err = exit(&stylesplat(&["render", "--scene", p(&pl.stylized), "--cameras", p(&none), "--out", p(&out), "--channel", "albedo"]), 2);
    assert!(err.contains("albedo"), "{err}");
    // The raw scene has nothing stylized to show.
    exit(&stylesplat(&["render", "--scene", p(&pl.toy.join("scene.ply")), "--cameras", p(&pl.cameras), "--out", p(&out)]), 2);
    exit(&stylesplat(&["render", "--scene", p(&dir.path().join("missing.gssc")), "--cameras", p(&none), "--out", p(&out)]), 2);
}

#[test]
fn metrics_match_the_library_reports() {
    let pl = pipeline();
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("metrics");
    ok(&stylesplat(&["metrics", "--scene", p(&pl.stylized), "--cameras", p(&pl.cameras), "--pairs", "0-0,0-1,2-1", "--out", p(&out)]));
    let scene = load_scene(&pl.stylized).unwrap();
    let cams = parse_cameras(&std::fs::read_to_string(&pl.cameras).unwrap()).unwrap();
    let reports = consistency_for_pairs(&scene, &cams, &[(0, 0), (0, 1), (2, 1)]).unwrap();
    assert_eq!(reports[0].rmse, 0.0);
    assert_eq!(std::fs::read_to_string(out.join("consistency.csv")).unwrap(), consistency_csv(&reports));
    let timing = std::fs::read_to_string(out.join("timing.csv")).unwrap();
    let mut lines = timing.lines();
    assert_eq!(lines.next(), Some("gaussians,width,height,frames,transfer_seconds,render_seconds"));
    assert!(lines.next().unwrap().starts_with("300,32,32,20,"));

    ok(&stylesplat(&[
        "metrics", "--scene", p(&pl.stylized), "--cameras", p(&pl.cameras), "--out", p(&out), "--decoder", p(&pl.decoder),
        "--style", p(&pl.style[1]),
    ]));
    let row = std::fs::read_to_string(out.join("timing.csv")).unwrap();
    let transfer: f64 = row.lines().nth(1).unwrap().split(',').nth(4).unwrap().parse().unwrap();
    assert!(transfer > 0.0);
    assert!(std::fs::read_to_string(out.join("consistency.csv")).unwrap().lines().count() == 3);
}

#[test]
fn metrics_need_a_stylized_scene() {
    let pl = pipeline();
    let dir = tempfile::tempdir().unwrap();
    let err = exit(&stylesplat(&["metrics", "--scene", p(&pl.embedded), "--cameras", p(&pl.cameras), "--out", p(&dir.path().join("m"))]), 2);
    assert!(err.contains("styled_color"), "{err}");
    exit(&stylesplat(&["metrics", "--scene", p(&pl.stylized), "--cameras", p(&pl.cameras), "--pairs", "0-9", "--out", p(&dir.path().join("m"))]), 2);
    exit(&stylesplat(&["metrics", "--scene", p(&pl.stylized), "--cameras", p(&pl.cameras), "--pairs", "0_1", "--out", p(&dir.path().join("m"))]), 2);
}

#[test]
fn io_failures_exit_3_and_flags_exit_2() {
    let pl = pipeline();
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("plain-file");
    std::fs::write(&file, "x").unwrap();
    let out = file.join("stylized.gssc");
    exit(&stylesplat(&["stylize", "--scene", p(&pl.embedded), "--decoder", p(&pl.decoder), "--style", p(&pl.style[0]), "--out", p(&out)]), 3);
    exit(&stylesplat(&["render", "--bogus"]), 2);
    exit(&stylesplat(&["--threads", "0", "toy", "--out", p(&dir.path().join("t"))]), 2);
}

#[test]
fn thread_count_comes_from_the_environment() {
    let pl = pipeline();
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("frames");
    let run = Command::new(env!("CARGO_BIN_EXE_stylesplat"))
        .args(["render", "--scene", p(&pl.stylized), "--cameras", p(&pl.cameras), "--out", p(&out)])
        .env("STYLESPLAT_THREADS", "1")
        .output()
        .unwrap();
    ok(&run);
    let scene = load_scene(&pl.stylized).unwrap();
    let cam = &parse_cameras(&std::fs::read_to_string(&pl.cameras).unwrap()).unwrap()[0];
    let want = render(&scene, cam, RenderChannel::STYLED, &[0.0; 3]).unwrap().image.to_png().unwrap();
    assert_eq!(std::fs::read(out.join("frame_0000.png")).unwrap(), want);
    let bad = Command::new(env!("CARGO_BIN_EXE_stylesplat")).args(["toy", "--out", p(&dir.path().join("t"))]).env("STYLESPLAT_THREADS", "many").output().unwrap();
    exit(&bad, 2);
}

fn http_get(addr: &str, path: &str) -> String {
    let mut s = std::net::TcpStream::connect(addr).unwrap();
    write!(s, "GET {path} HTTP/1.1\r\nHost: {addr}\r\nConnection: close\r\n\r\n").unwrap();
    let mut body = String::new();
    s.read_to_string(&mut body).unwrap();
    body
}

#[test]
fn serve_answers_and_shuts_down_cleanly_on_sigterm() {
    let pl = pipeline();
    let scenes = tempfile::tempdir().unwrap();
    std::fs::copy(&pl.stylized, scenes.path().join("demo.gssc")).unwrap();
    std::fs::copy(&pl.decoder, scenes.path().join("decoder.gsdc")).unwrap();
    let mut child = Command::new(env!("CARGO_BIN_EXE_stylesplat"))
        .args(["serve", "--scenes", p(scenes.path()), "--port", "0"])
        .env("RUST_LOG", "warn")
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
    let addr = line.trim().strip_prefix("listening on http://").and_then(|s| s.strip_suffix("/v1")).unwrap().to_string();

    let health = http_get(&addr, "/v1/healthz");
    assert!(health.starts_with("HTTP/1.1 200"), "{health}");
    assert!(health.contains(&format!("\"stylesplat\":\"{}\"", stylesplat::VERSION)), "{health}");
    let scenes_json = http_get(&addr, "/v1/scenes");
    assert!(scenes_json.contains("\"id\":\"demo\""), "{scenes_json}");
    assert!(scenes_json.contains("\"ready\":true"), "{scenes_json}");

    // A second server on the same port cannot start.
    let port = addr.rsplit(':').next().unwrap();
    let clash = stylesplat(&["serve", "--scenes", p(scenes.path()), "--port", port]);
    let err = exit(&clash, 2);
    assert!(err.contains("cannot listen"), "{err}");

    let status = Command::new("kill").args(["-TERM", &child.id().to_string()]).status().unwrap();
    assert!(status.success());
    let exit_status = child.wait().unwrap();
    assert_eq!(exit_status.code(), Some(0));
    let m = RunManifest::parse(&std::fs::read_to_string(scenes.path().join("serve.manifest")).unwrap());
    assert_eq!(m["command"], "serve");
    assert_eq!(m["config.scenes"], "1");
    assert_eq!(m["config.frame_path_transfers"], "0");
}

#[test]
fn serve_requires_a_scene_directory() {
    let dir = tempfile::tempdir().unwrap();
    let err = exit(&stylesplat(&["serve", "--scenes", p(&dir.path().join("nope")), "--port", "0"]), 2);
    assert!(err.contains("nope"), "{err}");
}
