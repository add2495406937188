use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use surfclass_core::classify::{classify_batch, KnnModel};
use surfclass_core::eval::{
    evaluate_features, extract_manifest, load_manifest, read_report, write_report, EvalConfig,
    KnnClassifier, TrainSize,
};
use surfclass_core::features::{read_features, write_features, FeatureConfig};
use surfclass_core::imgio::{load_gray, load_image, Image};
use surfclass_core::rng::SplitMix64;

/// 128x64 RGB scene: left half strong noise around mid gray, right half a
/// faint ripple on a bright base.
fn write_scene(path: &Path) -> Vec<[u8; 3]> {
    let (w, h) = (128u32, 64u32);
    let mut rng = SplitMix64::new(11);
    let mut px = Vec::with_capacity((w * h) as usize);
    for y in 0..h {
        for x in 0..w {
            let v = if x < 64 {
                (128.0 + 45.0 * rng.gaussian()).clamp(0.0, 255.0)
            } else {
                200.0 + 3.0 * ((x + y) as f64 * 0.7).sin()
            };
            let g = v as u8;
            px.push([g, g.saturating_add(5), g.saturating_sub(5)]);
        }
    }
    let mut enc = png::Encoder::new(BufWriter::new(File::create(path).unwrap()), w, h);
    enc.set_color(png::ColorType::Rgb);
    enc.set_depth(png::BitDepth::Eight);
    let flat: Vec<u8> = px.iter().flatten().copied().collect();
    enc.write_header().unwrap().write_image_data(&flat).unwrap();
    px
}

#[test]
fn png_crops_through_features_classification_and_report() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let scene = write_scene(&root.join("scene.png"));

    match load_image(root.join("scene.png")).unwrap() {
        Image::Rgb(img) => assert_eq!(img.pixels(), &scene[..]),
        Image::Gray(_) => panic!("expected a color image"),
    }
    let gray = load_gray(root.join("scene.png")).unwrap();
    let [r, g, b] = scene[0];
    let expected = (299 * r as u32 + 587 * g as u32 + 114 * b as u32) as f64 / 1000.0;
    assert_eq!(gray.get(0, 0), expected);

    let mut manifest = String::from("#classes=rough|smooth\nsample_id,path,label,x0,y0,side\n");
    for i in 0..8 {
        let (x0, y0) = ((i % 4) * 12, (i / 4) * 24);
        manifest.push_str(&format!("r{i},scene.png,rough,{x0},{y0},16\n"));
        manifest.push_str(&format!("s{i},scene.png,smooth,{},{y0},16\n", 64 + x0));
    }
    std::fs::write(root.join("manifest.csv"), manifest).unwrap();
    let m = load_manifest(root.join("manifest.csv")).unwrap();
    assert_eq!(m.classes, ["rough", "smooth"]);
    assert_eq!(m.entries.len(), 16);

    let cfg = FeatureConfig::Stddev {
        windows: surfclass_core::filters::WindowSpec::defaults(),
        grid: 4,
    };
    let set = extract_manifest(&m, &cfg).unwrap();
    assert_eq!(set.dim, 3 * 16);
    write_features(root.join("features.csv"), &set).unwrap();
    assert_eq!(read_features(root.join("features.csv")).unwrap(), set);

    let model = KnnModel::new(set.samples.clone(), 1).unwrap();
    let queries: Vec<_> = set.samples.iter().map(|s| s.feature.clone()).collect();
    let preds = classify_batch(&model, &queries).unwrap();
    assert!(preds
        .iter()
        .zip(&set.samples)
        .all(|(p, s)| p.label == s.label));

    let eval = EvalConfig {
        sizes: vec![TrainSize::PerClass(2), TrainSize::Fraction(0.5)],
        trials: 4,
        seed: 9,
        stratified: true,
    };
    let report = evaluate_features(
        &set,
        &KnnClassifier {
            k: 1,
            minmax: false,
        },
        &eval,
    )
    .unwrap();
    for p in &report.points {
        assert_eq!(p.mean, 1.0, "rough and smooth crops should separate");
    }
    write_report(&report, root.join("report.csv")).unwrap();
    assert_eq!(read_report(root.join("report.csv")).unwrap(), report);
}

#[test]
fn manifest_crop_outside_image_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    write_scene(&tmp.path().join("scene.png"));
    std::fs::write(
        tmp.path().join("m.csv"),
        "sample_id,path,label,x0,y0,side\na,scene.png,x,120,0,16\n",
    )
    .unwrap();
    let m = load_manifest(tmp.path().join("m.csv")).unwrap();
    let err = extract_manifest(&m, &FeatureConfig::stddev_default()).unwrap_err();
    assert!(!err.is_io());
    assert!(err.to_string().contains('a'), "{err}");
}
