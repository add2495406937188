//! Acceptance gates. Runs every criterion, prints one PASS/FAIL line each,
//! and exits non-zero if any fails.

use std::f64::consts::PI;
use std::path::Path;
use std::time::{Duration, Instant};

use surfclass_core::classify::{classify_batch, l1_distance, KnnModel};
use surfclass_core::eval::{
    evaluate, evaluate_features, extract_manifest, format_report, mean_and_population_std,
    read_report, write_report, EvalConfig, KnnClassifier, TrainSize,
};
use surfclass_core::features::{FeatureConfig, FeatureVector, LabeledFeature, Method};
use surfclass_core::filters::{
    convolve_same, make_gabor_kernel, stddev_filter, GaborParams, Kernel, Padding, WindowSpec,
};
use surfclass_core::imgio::RealMap;
use surfclass_core::rng::SplitMix64;
use surfclass_core::synth::{gen_corpus, oracle, SynthConfig};

type Check = std::result::Result<String, String>;
type Criterion<'a> = (&'static str, u64, Box<dyn FnOnce() -> Check + 'a>);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn random_map(rng: &mut SplitMix64, w: usize, h: usize) -> RealMap {
    RealMap::new(w, h, (0..w * h).map(|_| rng.next_f64() * 255.0).collect()).unwrap()
}

/// Straight transcription of the Gabor formula, without the |xr| folding
/// the library applies.
fn gabor_reference(sx: f64, sy: f64, theta: f64, f: f64, x: f64, y: f64) -> f64 {
    let xr = x * theta.cos() + y * theta.sin();
    let yr = -x * theta.sin() + y * theta.cos();
    (-0.5 * (xr * xr / (sx * sx) + yr * yr / (sy * sy))).exp() * (2.0 * PI * f * xr).cos()
}

fn gabor_kernel_correctness() -> Check {
    let mut rng = SplitMix64::new(0xA11CE);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let sx = 0.5 + 9.5 * rng.next_f64();
        let sy = 0.5 + 9.5 * rng.next_f64();
        let theta = PI * rng.next_f64();
        let f = 0.01 + 0.49 * rng.next_f64();
        let half = 1 + rng.below(12);
        let p = GaborParams::new(sx, sy, theta, f, half).unwrap();
        let k = make_gabor_kernel(&p);
        let h = half as isize;
        for _ in 0..10 {
            let x = rng.below(2 * half + 1) as isize - h;
            let y = rng.below(2 * half + 1) as isize - h;
            let expected = gabor_reference(sx, sy, theta, f, x as f64, y as f64);
            worst = worst.max((k.at(x, y) - expected).abs());
        }
        for y in -h..=h {
            for x in -h..=h {
                ensure(k.at(x, y) == k.at(-x, -y), || {
                    format!("asymmetric tap at ({x},{y}) for {p:?}")
                })?;
            }
        }
    }
    ensure(worst <= 1e-12, || {
        format!("max tap error {worst:e} > 1e-12")
    })?;
    Ok(format!(
        "max |tap - formula| = {worst:.3e}; point symmetry exact"
    ))
}

fn convolution_oracle() -> Check {
    let mut rng = SplitMix64::new(0xC0DE);
    let mut worst = 0.0f64;
    let mut exact = 0;
    for _ in 0..100 {
        let side = 2 * rng.below(5) + 1;
        let w = side + rng.below(33 - side);
        let h = side + rng.below(33 - side);
        let img = random_map(&mut rng, w, h);
        let k = Kernel::new(
            side,
            (0..side * side)
                .map(|_| rng.next_f64() * 2.0 - 1.0)
                .collect(),
        )
        .unwrap();
        for pad in [Padding::Zero, Padding::Replicate] {
            let fast = convolve_same(img.view(), &k, pad).unwrap();
            let slow = oracle::oracle_convolve(img.view(), &k, pad);
            let diff = fast
                .values()
                .iter()
                .zip(slow.values())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            exact += usize::from(fast == slow);
            worst = worst.max(diff);
        }
    }
    ensure(worst <= 1e-12, || format!("max diff {worst:e}"))?;
    Ok(format!("{exact}/200 bit-identical, max diff {worst:.1e}"))
}

fn stddev_oracle() -> Check {
    let mut rng = SplitMix64::new(0x57D);
    let mut worst = 0.0f64;
    let mut worst_shift = 0.0f64;
    for _ in 0..100 {
        let w = 7 + rng.below(26);
        let h = 7 + rng.below(26);
        let img = random_map(&mut rng, w, h);
        let c = rng.next_f64() * 200.0 - 100.0;
        let shifted = RealMap::new(w, h, img.values().iter().map(|v| v + c).collect()).unwrap();
        for win in WindowSpec::defaults() {
            for pad in [Padding::Replicate, Padding::Zero] {
                let fast = stddev_filter(img.view(), win, pad).unwrap();
                let slow = oracle::oracle_stddev(img.view(), win.side(), pad);
                for (a, b) in fast.values().iter().zip(slow.values()) {
                    worst = worst.max((a - b).abs());
                }
            }
            let base = stddev_filter(img.view(), win, Padding::Replicate).unwrap();
            let moved = stddev_filter(shifted.view(), win, Padding::Replicate).unwrap();
            for (a, b) in base.values().iter().zip(moved.values()) {
                worst_shift = worst_shift.max((a - b).abs());
            }
        }
        let flat = RealMap::new(w, h, vec![rng.next_f64() * 255.0; w * h]).unwrap();
        for win in WindowSpec::defaults() {
            let out = stddev_filter(flat.view(), win, Padding::Replicate).unwrap();
            ensure(out.values().iter().all(|&v| v == 0.0), || {
                "constant image gave non-zero std-dev".into()
            })?;
        }
    }
    ensure(worst <= 1e-12, || format!("max oracle diff {worst:e}"))?;
    ensure(worst_shift <= 1e-9, || {
        format!("shift drift {worst_shift:e}")
    })?;
    Ok(format!(
        "max oracle diff {worst:.1e}, shift drift {worst_shift:.1e}, constant -> 0"
    ))
}

fn knn_oracle() -> Check {
    let mut rng = SplitMix64::new(0x4E4E);
    let classes = ["ice", "snow", "water"];
    for dim in [48usize, 192] {
        let vec_of = |rng: &mut SplitMix64| {
            FeatureVector::new(
                Method::Stddev,
                (0..dim).map(|_| rng.next_f64() * 50.0).collect(),
            )
            .unwrap()
        };
        let train: Vec<LabeledFeature> = (0..300)
            .map(|i| {
                LabeledFeature::new(vec_of(&mut rng), classes[rng.below(3)], format!("t{i:03}"))
            })
            .collect();
        let queries: Vec<FeatureVector> = (0..200).map(|_| vec_of(&mut rng)).collect();
        for k in [1, 5] {
            let model = KnnModel::new(train.clone(), k).unwrap();
            let preds = classify_batch(&model, &queries).unwrap();
            for (q, p) in queries.iter().zip(&preds) {
                let o = oracle::oracle_nn(&train, q, k);
                ensure(o.label == p.label && o.distances == p.distances, || {
                    format!("dim {dim} k {k}: oracle {:?} vs {:?}", o, p)
                })?;
            }
        }
        let model = KnnModel::new(train.clone(), 1).unwrap();
        let queries: Vec<FeatureVector> = train.iter().map(|s| s.feature.clone()).collect();
        let preds = classify_batch(&model, &queries).unwrap();
        let correct = preds
            .iter()
            .zip(&train)
            .filter(|(p, s)| p.label == s.label)
            .count();
        ensure(correct == train.len(), || {
            format!("leave-in {correct}/300 at dim {dim}")
        })?;
    }
    let mut min_slack = f64::INFINITY;
    for _ in 0..10_000 {
        let dim = 1 + rng.below(64);
        let mut v = || {
            FeatureVector::new(
                Method::Gabor,
                (0..dim).map(|_| rng.next_f64() * 200.0 - 100.0).collect(),
            )
            .unwrap()
        };
        let (a, b, c) = (v(), v(), v());
        let ab = l1_distance(&a, &b).unwrap();
        ensure(ab >= 0.0 && ab == l1_distance(&b, &a).unwrap(), || {
            "symmetry".into()
        })?;
        ensure(l1_distance(&a, &a).unwrap() == 0.0, || "identity".into())?;
        min_slack = min_slack.min(l1_distance(&a, &c).unwrap() + l1_distance(&c, &b).unwrap() - ab);
    }
    ensure(min_slack >= -1e-9, || {
        format!("triangle slack {min_slack:e}")
    })?;
    Ok(format!(
        "oracle match at dims 48/192, k 1/5; leave-in 100%; min triangle slack {min_slack:.2e}"
    ))
}

fn noise_corpus(dir: &Path) -> surfclass_core::eval::Manifest {
    gen_corpus(&SynthConfig::default_noise(20_240_601), dir.join("noise")).unwrap()
}

fn single_point(trials: usize, seed: u64) -> EvalConfig {
    EvalConfig {
        sizes: vec![TrainSize::Fraction(0.7)],
        trials,
        seed,
        stratified: true,
    }
}

const KNN1: KnnClassifier = KnnClassifier {
    k: 1,
    minmax: false,
};

fn variance_gate(dir: &Path) -> Check {
    let manifest = noise_corpus(dir);
    ensure(manifest.entries.len() == 300, || "corpus size".into())?;
    let report = evaluate(
        &manifest,
        &FeatureConfig::stddev_default(),
        &KNN1,
        &single_point(10, 1),
    )
    .unwrap();
    let p = &report.points[0];
    ensure(p.mean >= 0.90, || {
        format!("mean accuracy {:.4} < 0.90", p.mean)
    })?;
    Ok(format!(
        "mean accuracy {:.4} (std {:.4}) over 10 trials",
        p.mean, p.std
    ))
}

fn orientation_gate(dir: &Path) -> Check {
    let manifest = gen_corpus(&SynthConfig::gratings(77), dir.join("gratings")).unwrap();
    let report = evaluate(
        &manifest,
        &FeatureConfig::gabor_default(),
        &KNN1,
        &single_point(10, 2),
    )
    .unwrap();
    let p = &report.points[0];
    ensure(p.mean >= 0.95, || {
        format!("mean accuracy {:.4} < 0.95", p.mean)
    })?;
    Ok(format!(
        "mean accuracy {:.4} (std {:.4}) over 10 trials",
        p.mean, p.std
    ))
}

fn protocol_shape(dir: &Path) -> Check {
    let manifest = noise_corpus(dir);
    let cfg = EvalConfig {
        sizes: [5, 10, 20, 40, 60].map(TrainSize::PerClass).to_vec(),
        trials: 10,
        seed: 3,
        stratified: true,
    };
    let features = FeatureConfig::stddev_default();
    let a = dir.join("report_a.csv");
    let b = dir.join("report_b.csv");
    write_report(&evaluate(&manifest, &features, &KNN1, &cfg).unwrap(), &a).unwrap();
    write_report(&evaluate(&manifest, &features, &KNN1, &cfg).unwrap(), &b).unwrap();
    ensure(
        std::fs::read(&a).unwrap() == std::fs::read(&b).unwrap(),
        || "reports differ between identical runs".into(),
    )?;
    let report = read_report(&a).unwrap();
    ensure(report.points.len() == 5, || "expected 5 size points".into())?;
    let mut worst = 0.0f64;
    let mut summary = Vec::new();
    for p in &report.points {
        ensure(p.trials.len() == 10, || {
            "expected 10 trials per point".into()
        })?;
        for t in &p.trials {
            ensure(t.accuracy == t.correct as f64 / t.test_total as f64, || {
                "accuracy".into()
            })?;
            let rows: usize = t.confusion.iter().flatten().sum();
            ensure(rows == t.test_total, || "confusion total".into())?;
        }
        let accs: Vec<f64> = p.trials.iter().map(|t| t.accuracy).collect();
        let (m, s) = mean_and_population_std(&accs);
        worst = worst.max((m - p.mean).abs()).max((s - p.std).abs());
        summary.push(format!("{}:{:.3}±{:.3}", p.size, p.mean, p.std));
    }
    ensure(worst <= 1e-12, || format!("aggregate drift {worst:e}"))?;
    ensure(
        format_report(&report) == std::fs::read_to_string(&a).unwrap(),
        || "report does not re-serialize identically".into(),
    )?;
    Ok(format!("byte-identical reruns; {}", summary.join(" ")))
}

fn random_label_null(dir: &Path) -> Check {
    let manifest = noise_corpus(dir);
    let mut set = extract_manifest(&manifest, &FeatureConfig::stddev_default()).unwrap();
    let mut labels: Vec<String> = set.samples.iter().map(|s| s.label.clone()).collect();
    SplitMix64::new(0x5EED).shuffle(&mut labels);
    for (s, l) in set.samples.iter_mut().zip(labels) {
        s.label = l;
    }
    let report = evaluate_features(&set, &KNN1, &single_point(30, 4)).unwrap();
    let mean = report.points[0].mean;
    ensure((mean - 1.0 / 3.0).abs() <= 0.10, || {
        format!("mean {mean:.4} outside 1/3 ± 0.10")
    })?;
    Ok(format!("mean accuracy {mean:.4} over 30 trials"))
}

fn main() {
    let dir = tempfile::tempdir().expect("temp dir");
    let d = dir.path();
    let criteria: Vec<Criterion<'_>> = vec![
        (
            "gabor kernel correctness",
            5,
            Box::new(gabor_kernel_correctness),
        ),
        (
            "convolution oracle equivalence",
            10,
            Box::new(convolution_oracle),
        ),
        (
            "std-dev filter oracle equivalence",
            10,
            Box::new(stddev_oracle),
        ),
        ("k-NN oracle equivalence", 10, Box::new(knn_oracle)),
        (
            "variance-separable end-to-end gate",
            60,
            Box::new(|| variance_gate(d)),
        ),
        (
            "orientation-separable end-to-end gate",
            120,
            Box::new(|| orientation_gate(d)),
        ),
        (
            "protocol-shape reproduction",
            180,
            Box::new(|| protocol_shape(d)),
        ),
        (
            "random-label null check",
            120,
            Box::new(|| random_label_null(d)),
        ),
    ];
    let mut failed = 0;
    for (name, budget, check) in criteria {
        let start = Instant::now();
        let outcome = check();
        let elapsed = start.elapsed();
        let over = elapsed > Duration::from_secs(budget);
        let (status, detail) = match outcome {
            Ok(detail) if !over => ("PASS", detail),
            Ok(detail) => ("FAIL", format!("{detail}; exceeded {budget}s budget")),
            Err(why) => ("FAIL", why),
        };
        if status == "FAIL" {
            failed += 1;
        }
        println!(
            "[{status}] {name} ({:.2}s / {budget}s): {detail}",
            elapsed.as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all acceptance criteria passed");
}
