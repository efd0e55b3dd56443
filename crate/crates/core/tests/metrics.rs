mod common;

use common::*;
use stylesplat::counters;
use stylesplat::decoder::KnnDecoder;
use stylesplat::metrics::{consistency_csv, consistency_for_pairs, measure_timing, warp_consistency};
use stylesplat::render::Camera;
use stylesplat::scene::build_knn;
use stylesplat::style::StyleStats;
use stylesplat::toy::{orbit_camera, toy_scene};

fn styled_toy() -> stylesplat::scene::GaussianScene {
    let mut scene = toy_scene(12, 800);
    let colors = scene.colors().iter().map(|c| [c[2], c[0], c[1]]).collect();
    scene.set_styled_color(colors).unwrap();
    scene
}

fn arc(n: usize) -> Vec<Camera> {
    (0..n).map(|i| orbit_camera(10.0 * i as f64, 3.2, 1.0, 48, 48)).collect()
}

#[test]
fn pair_reports_do_not_depend_on_request_order() {
    let scene = styled_toy();
    let cams = arc(4);
    let pairs = [(0, 1), (2, 3), (1, 2), (3, 0)];
    let reversed: Vec<_> = pairs.iter().rev().copied().collect();
    let fwd = consistency_for_pairs(&scene, &cams, &pairs).unwrap();
    let mut back = consistency_for_pairs(&scene, &cams, &reversed).unwrap();
    back.reverse();
    assert_eq!(fwd, back);
    for (rep, &(i, j)) in fwd.iter().zip(&pairs) {
        let single = warp_consistency(&scene, &cams[i], &cams[j]).unwrap();
        assert_eq!((rep.rmse, rep.valid_fraction), (single.rmse, single.valid_fraction));
        assert_eq!(rep.view_pair, (i, j));
    }
    assert_eq!(consistency_csv(&fwd).lines().count(), 5);
}

#[test]
fn nearby_toy_views_are_consistent() {
    let scene = styled_toy();
    let cams = arc(2);
    let r = warp_consistency(&scene, &cams[0], &cams[1]).unwrap();
    assert!(r.valid_fraction > 0.2, "{r:?}");
    assert!(r.rmse < 0.08, "{r:?}");
    let same = warp_consistency(&scene, &cams[0], &cams[0]).unwrap();
    assert_eq!(same.rmse, 0.0);
}

#[test]
fn timing_transfers_once_and_reports_a_row() {
    let mut r = rng(70);
    let mut scene = toy_scene(13, 300);
    scene.set_high_feat(16, uniform_f32(&mut r, 300 * 16, -1.0, 1.0)).unwrap();
    let knn = build_knn(&scene, 8).unwrap();
    let decoder = KnnDecoder::random(8, &[16, 8, 3], &mut r).unwrap();
    let style = StyleStats::new(vec![0.0; 16], vec![1.0; 16], [0; 32]).unwrap();
    let d0 = counters::decode_calls();
    let rep = measure_timing(&mut scene, &decoder, &knn, &style, &arc(3), 5).unwrap();
    assert_eq!(counters::decode_calls(), d0 + 1);
    assert_eq!(rep.frames, 20);
    assert_eq!((rep.gaussians, rep.width, rep.height), (300, 48, 48));
    assert!(rep.render_seconds > 0.0 && rep.transfer_seconds > 0.0);
    let csv = rep.to_csv();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "gaussians,width,height,frames,transfer_seconds,render_seconds");
    assert!(lines[1].starts_with("300,48,48,20,"));
    assert!(measure_timing(&mut scene, &decoder, &knn, &style, &[], 5).is_err());
}
