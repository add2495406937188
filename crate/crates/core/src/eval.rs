//! Dataset manifests, seeded train/test splits, repeated-trial evaluation
//! and the accuracy report.
//!
//! # Manifest
//!
//! ```text
//! #classes=water|snow|ice          (optional; otherwise sorted unique labels)
//! sample_id,path,label[,x0,y0,side]
//! water_0000,water/water_0000.pgm,water
//! ```
//!
//! Relative paths resolve against the manifest's directory. When the crop
//! columns are present and non-empty the patch is cropped after loading.
//!
//! # Splits
//!
//! Trial `t` shuffles with `SplitMix64::stream(seed, t)` (see [`crate::rng`]).
//! Stratified splits walk the classes in manifest order; each class's sample
//! indices (ascending) are shuffled in turn from the same stream and the
//! first `n_c` become training samples. For a fraction `f` the total
//! `round(f * N)` is apportioned by largest remainder of `f * size_c`, ties
//! to the earlier class. Unstratified splits shuffle all indices once. The
//! shuffle does not depend on the training size, so the training sets of one
//! trial are nested across sizes.
//!
//! # Report
//!
//! ```text
//! #config=<echo>
//! #classes=water|snow|ice
//! #error_bars=population_std
//! kind,train_size,trial,train_per_class,train_total,test_total,correct,accuracy,mean,std
//! trial,5,0,5|5|5,15,285,270,0.9473684210526315,,
//! aggregate,5,,,,,,,0.95,0.01
//! #confusion
//! train_size,trial,true_label,pred_water,pred_snow,pred_ice
//! 5,0,water,95,0,0
//! ```

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;

use crate::classify::{classify_batch, KnnModel};
use crate::error::{Error, Result};
use crate::features::{FeatureConfig, FeatureSet, FeatureVector, LabeledFeature, MinMaxScaler};
use crate::fsutil::{fmt_f64, read_to_string, write_atomic};
use crate::imgio::{crop_patch, load_gray, GrayImage};
use crate::rng::SplitMix64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CropRect {
    pub x0: usize,
    pub y0: usize,
    pub side: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub id: String,
    /// As written in the manifest; see [`Manifest::resolve`].
    pub path: PathBuf,
    pub label: String,
    pub crop: Option<CropRect>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    /// Directory that relative entry paths are resolved against.
    pub root: PathBuf,
    pub classes: Vec<String>,
    pub entries: Vec<ManifestEntry>,
}

fn usable_tag(tag: &str) -> bool {
    !tag.is_empty() && !tag.starts_with('#') && !tag.contains([',', '|', '"', '\n', '\r'])
}

impl Manifest {
    pub fn new(root: PathBuf, classes: Vec<String>, entries: Vec<ManifestEntry>) -> Result<Self> {
        let m = Self {
            root,
            classes,
            entries,
        };
        let problems = m.problems(false);
        if problems.is_empty() {
            Ok(m)
        } else {
            Err(Error::Validation(problems))
        }
    }

    fn problems(&self, check_files: bool) -> Vec<String> {
        let mut out = Vec::new();
        let mut seen_classes = HashSet::new();
        for c in &self.classes {
            if !usable_tag(c) {
                out.push(format!("unusable class tag {c:?}"));
            }
            if !seen_classes.insert(c) {
                out.push(format!("class {c:?} declared twice"));
            }
        }
        let mut ids = HashSet::new();
        for e in &self.entries {
            if !usable_tag(&e.id) {
                out.push(format!("unusable sample id {:?}", e.id));
            }
            if !ids.insert(e.id.as_str()) {
                out.push(format!("duplicate sample id {:?}", e.id));
            }
            if !self.classes.contains(&e.label) {
                out.push(format!("sample {:?}: unknown class {:?}", e.id, e.label));
            }
            let p = e.path.to_string_lossy();
            if p.is_empty() || p.contains([',', '"', '\n', '\r']) {
                out.push(format!("sample {:?}: malformed path {p:?}", e.id));
            } else if check_files && !self.resolve(e).is_file() {
                out.push(format!(
                    "sample {:?}: missing image file {}",
                    e.id,
                    self.resolve(e).display()
                ));
            }
        }
        out
    }

    pub fn resolve(&self, entry: &ManifestEntry) -> PathBuf {
        if entry.path.is_absolute() {
            entry.path.clone()
        } else {
            self.root.join(&entry.path)
        }
    }

    /// Loads the entry's image as grayscale and applies its crop.
    pub fn load_patch(&self, entry: &ManifestEntry) -> Result<GrayImage> {
        let img = load_gray(self.resolve(entry))?;
        match entry.crop {
            Some(c) => crop_patch(&img, c.x0, c.y0, c.side),
            None => Ok(img),
        }
    }

    pub fn to_csv(&self) -> String {
        let with_crop = self.entries.iter().any(|e| e.crop.is_some());
        let mut out = format!("#classes={}\nsample_id,path,label", self.classes.join("|"));
        if with_crop {
            out.push_str(",x0,y0,side");
        }
        out.push('\n');
        for e in &self.entries {
            // Forward slashes keep manifests portable.
            let path = e.path.to_string_lossy().replace('\\', "/");
            out.push_str(&format!("{},{},{}", e.id, path, e.label));
            if with_crop {
                match e.crop {
                    Some(c) => out.push_str(&format!(",{},{},{}", c.x0, c.y0, c.side)),
                    None => out.push_str(",,,"),
                }
            }
            out.push('\n');
        }
        out
    }
}

pub fn write_manifest(path: impl AsRef<Path>, manifest: &Manifest) -> Result<()> {
    write_atomic(path.as_ref(), manifest.to_csv().as_bytes())
}

/// Parses and validates a manifest, including that every image file exists.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<Manifest> {
    let path = path.as_ref();
    let text = read_to_string(path)?;
    let root = path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    let m = parse_manifest(&text, root, path)?;
    let problems = m.problems(true);
    if problems.is_empty() {
        Ok(m)
    } else {
        Err(Error::Validation(problems))
    }
}

/// Parses manifest text without touching the referenced images.
pub fn parse_manifest(text: &str, root: PathBuf, path: &Path) -> Result<Manifest> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut declared: Option<Vec<String>> = None;
    let mut header_seen = false;
    let mut with_crop = false;
    let mut entries = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::corrupt(path, e.to_string()))?;
        let line = i + 1;
        let first = rec.get(0).unwrap_or("");
        if let Some(rest) = first.strip_prefix("#classes=") {
            if header_seen || declared.is_some() {
                return Err(Error::corrupt(path, "#classes must precede the header"));
            }
            declared = Some(rest.split('|').map(str::to_owned).collect());
            continue;
        }
        if first.starts_with('#') {
            continue;
        }
        if !header_seen {
            let cols: Vec<&str> = rec.iter().collect();
            with_crop = match cols.as_slice() {
                ["sample_id", "path", "label"] => false,
                ["sample_id", "path", "label", "x0", "y0", "side"] => true,
                _ => {
                    return Err(Error::corrupt(
                        path,
                        format!("line {line}: expected header sample_id,path,label[,x0,y0,side]"),
                    ))
                }
            };
            header_seen = true;
            continue;
        }
        let want = if with_crop { 6 } else { 3 };
        if rec.len() != want {
            return Err(Error::corrupt(
                path,
                format!("line {line}: expected {want} columns, found {}", rec.len()),
            ));
        }
        let crop = if with_crop && !(rec[3].is_empty() && rec[4].is_empty() && rec[5].is_empty()) {
            let num = |s: &str| {
                s.parse::<usize>()
                    .map_err(|_| Error::corrupt(path, format!("line {line}: bad crop value {s:?}")))
            };
            Some(CropRect {
                x0: num(&rec[3])?,
                y0: num(&rec[4])?,
                side: num(&rec[5])?,
            })
        } else {
            None
        };
        entries.push(ManifestEntry {
            id: rec[0].to_owned(),
            path: PathBuf::from(&rec[1]),
            label: rec[2].to_owned(),
            crop,
        });
    }
    if !header_seen {
        return Err(Error::corrupt(path, "missing manifest header"));
    }
    let classes = declared.unwrap_or_else(|| {
        let mut c: Vec<String> = entries.iter().map(|e| e.label.clone()).collect();
        c.sort();
        c.dedup();
        c
    });
    Manifest::new(root, classes, entries)
}

/// Training-set size for one evaluation point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TrainSize {
    /// Fraction of the samples in `(0, 1)`.
    Fraction(f64),
    /// Samples per class.
    PerClass(usize),
}

impl fmt::Display for TrainSize {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TrainSize::Fraction(x) => f.write_str(&fmt_f64(*x)),
            TrainSize::PerClass(n) => write!(f, "{n}"),
        }
    }
}

impl FromStr for TrainSize {
    type Err = Error;

    /// Integers are per-class counts; anything with a decimal point or
    /// exponent is a fraction.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.contains(['.', 'e', 'E']) {
            s.parse()
                .map(TrainSize::Fraction)
                .map_err(|_| Error::invalid(format!("bad train fraction {s:?}")))
        } else {
            s.parse()
                .map(TrainSize::PerClass)
                .map_err(|_| Error::invalid(format!("bad train size {s:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitSpec {
    pub size: TrainSize,
    pub trials: usize,
    pub seed: u64,
    pub stratified: bool,
}

/// Sample indices of one trial's partition, each ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Partitions `labels` (indices into the sample list) for one trial.
pub fn split<L: AsRef<str>>(
    labels: &[L],
    classes: &[String],
    spec: &SplitSpec,
    trial: usize,
) -> Result<Split> {
    if spec.trials == 0 {
        return Err(Error::invalid("trials must be at least 1"));
    }
    if trial >= spec.trials {
        return Err(Error::invalid(format!(
            "trial {trial} out of range for {} trials",
            spec.trials
        )));
    }
    if let TrainSize::Fraction(f) = spec.size {
        if !(f > 0.0 && f < 1.0) {
            return Err(Error::invalid(format!(
                "train fraction {f} must lie in (0, 1)"
            )));
        }
    }
    let class_index: HashMap<&str, usize> = classes
        .iter()
        .enumerate()
        .map(|(i, c)| (c.as_str(), i))
        .collect();
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); classes.len()];
    for (i, l) in labels.iter().enumerate() {
        let c = class_index.get(l.as_ref()).ok_or_else(|| {
            Error::invalid(format!("label {:?} is not a declared class", l.as_ref()))
        })?;
        groups[*c].push(i);
    }
    if let TrainSize::PerClass(n) = spec.size {
        if n == 0 {
            return Err(Error::invalid("train size per class must be at least 1"));
        }
        let short: Vec<String> = classes
            .iter()
            .zip(&groups)
            .filter(|(_, g)| g.len() <= n)
            .map(|(c, g)| format!("class {c:?} has {} samples, cannot train on {n}", g.len()))
            .collect();
        if !short.is_empty() {
            return Err(Error::Validation(short));
        }
    }

    let mut rng = SplitMix64::stream(spec.seed, trial as u64);
    let mut train = Vec::new();
    let mut test = Vec::new();
    if spec.stratified {
        let quotas = match spec.size {
            TrainSize::PerClass(n) => vec![n; groups.len()],
            TrainSize::Fraction(f) => {
                apportion(f, &groups.iter().map(Vec::len).collect::<Vec<_>>())
            }
        };
        for (group, quota) in groups.iter_mut().zip(quotas) {
            rng.shuffle(group);
            train.extend_from_slice(&group[..quota]);
            test.extend_from_slice(&group[quota..]);
        }
    } else {
        let mut all: Vec<usize> = (0..labels.len()).collect();
        let n_train = match spec.size {
            TrainSize::PerClass(n) => n * classes.len(),
            TrainSize::Fraction(f) => (f * labels.len() as f64).round() as usize,
        }
        .min(labels.len());
        rng.shuffle(&mut all);
        train.extend_from_slice(&all[..n_train]);
        test.extend_from_slice(&all[n_train..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok(Split { train, test })
}

/// Largest-remainder allocation of `round(fraction * total)` across classes.
fn apportion(fraction: f64, sizes: &[usize]) -> Vec<usize> {
    let total: usize = sizes.iter().sum();
    let target = ((fraction * total as f64).round() as usize).min(total);
    let exact: Vec<f64> = sizes.iter().map(|&s| fraction * s as f64).collect();
    let mut quotas: Vec<usize> = exact
        .iter()
        .zip(sizes)
        .map(|(e, &s)| (e.floor() as usize).min(s))
        .collect();
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let mut left = target.saturating_sub(quotas.iter().sum());
    for &c in order.iter().cycle().take(order.len() * 2) {
        if left == 0 {
            break;
        }
        if quotas[c] < sizes[c] {
            quotas[c] += 1;
            left -= 1;
        }
    }
    quotas
}

/// Produces one predicted label per test sample given a training set.
pub trait TrialClassifier: Sync {
    fn describe(&self) -> String;

    fn predict(&self, train: &[&LabeledFeature], test: &[&LabeledFeature]) -> Result<Vec<String>>;
}

/// The L1 k-NN classifier, optionally on min-max scaled features fitted to
/// the training side only.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KnnClassifier {
    pub k: usize,
    pub minmax: bool,
}

impl TrialClassifier for KnnClassifier {
    fn describe(&self) -> String {
        format!("classifier=knn;k={};minmax={}", self.k, self.minmax)
    }

    fn predict(&self, train: &[&LabeledFeature], test: &[&LabeledFeature]) -> Result<Vec<String>> {
        let (train, queries): (Vec<LabeledFeature>, Vec<FeatureVector>) = if self.minmax {
            let scaler = MinMaxScaler::fit(train.iter().map(|s| &s.feature))?;
            (
                train
                    .iter()
                    .map(|s| {
                        Ok(LabeledFeature {
                            feature: scaler.transform(&s.feature)?,
                            ..(*s).clone()
                        })
                    })
                    .collect::<Result<_>>()?,
                test.iter()
                    .map(|s| scaler.transform(&s.feature))
                    .collect::<Result<_>>()?,
            )
        } else {
            (
                train.iter().map(|&s| s.clone()).collect(),
                test.iter().map(|s| s.feature.clone()).collect(),
            )
        };
        let model = KnnModel::new(train, self.k)?;
        Ok(classify_batch(&model, &queries)?
            .into_iter()
            .map(|p| p.label)
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub sizes: Vec<TrainSize>,
    pub trials: usize,
    pub seed: u64,
    pub stratified: bool,
}

impl EvalConfig {
    pub fn describe(&self) -> String {
        format!(
            "trials={};seed={};stratified={};train_sizes={}",
            self.trials,
            self.seed,
            self.stratified,
            self.sizes
                .iter()
                .map(ToString::to_string)
                .collect::<Vec<_>>()
                .join(" ")
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub trial: usize,
    /// Training samples per class, in class order.
    pub train_per_class: Vec<usize>,
    pub train_total: usize,
    pub test_total: usize,
    pub correct: usize,
    pub accuracy: f64,
    /// `confusion[true][predicted]`, classes in report order.
    pub confusion: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointReport {
    pub size: TrainSize,
    pub trials: Vec<TrialResult>,
    pub mean: f64,
    /// Population standard deviation over trials.
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub config: String,
    pub classes: Vec<String>,
    pub points: Vec<PointReport>,
}

/// Mean and population standard deviation (divisor `n`).
pub fn mean_and_population_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Loads every manifest entry and extracts its features, in parallel.
pub fn extract_manifest(manifest: &Manifest, cfg: &FeatureConfig) -> Result<FeatureSet> {
    let extractor = cfg.extractor()?;
    let samples = manifest
        .entries
        .par_iter()
        .map(|e| {
            let wrap = |err| Error::Sample {
                id: e.id.clone(),
                source: Box::new(err),
            };
            let patch = manifest.load_patch(e).map_err(wrap)?;
            let feature = extractor.extract(patch.view()).map_err(wrap)?;
            Ok(LabeledFeature::new(feature, &e.label, &e.id))
        })
        .collect::<Result<Vec<_>>>()?;
    let dim = match samples.first() {
        Some(s) => s.feature.dim(),
        None => return Err(Error::invalid("manifest has no entries")),
    };
    FeatureSet::new(cfg.method(), dim, manifest.classes.clone(), samples)
}

/// Extracts features once, then runs [`evaluate_features`] with k-NN.
pub fn evaluate(
    manifest: &Manifest,
    features: &FeatureConfig,
    classifier: &KnnClassifier,
    cfg: &EvalConfig,
) -> Result<EvalReport> {
    let set = extract_manifest(manifest, features)?;
    let mut report = evaluate_features(&set, classifier, cfg)?;
    let prefix = format!("method={};", set.method);
    let rest = report
        .config
        .strip_prefix(&prefix)
        .unwrap_or(&report.config);
    report.config = format!("{};{rest}", features.describe());
    Ok(report)
}

/// Runs every (training size, trial) pair over precomputed features.
pub fn evaluate_features(
    set: &FeatureSet,
    classifier: &dyn TrialClassifier,
    cfg: &EvalConfig,
) -> Result<EvalReport> {
    if cfg.sizes.is_empty() {
        return Err(Error::invalid("no training sizes given"));
    }
    let labels: Vec<&str> = set.samples.iter().map(|s| s.label.as_str()).collect();
    let class_index: HashMap<&str, usize> = set
        .classes
        .iter()
        .enumerate()
        .map(|(i, c)| (c.as_str(), i))
        .collect();
    let mut points = Vec::with_capacity(cfg.sizes.len());
    for &size in &cfg.sizes {
        let spec = SplitSpec {
            size,
            trials: cfg.trials,
            seed: cfg.seed,
            stratified: cfg.stratified,
        };
        let trials = (0..cfg.trials)
            .into_par_iter()
            .map(|trial| {
                let parts = split(&labels, &set.classes, &spec, trial)?;
                if parts.test.is_empty() {
                    return Err(Error::invalid(format!(
                        "training size {size} leaves no test samples"
                    )));
                }
                let train: Vec<&LabeledFeature> =
                    parts.train.iter().map(|&i| &set.samples[i]).collect();
                let test: Vec<&LabeledFeature> =
                    parts.test.iter().map(|&i| &set.samples[i]).collect();
                let predicted = classifier.predict(&train, &test)?;
                if predicted.len() != test.len() {
                    return Err(Error::invalid(
                        "classifier returned the wrong number of labels",
                    ));
                }
                let k = set.classes.len();
                let mut confusion = vec![vec![0usize; k]; k];
                let mut train_per_class = vec![0usize; k];
                for s in &train {
                    train_per_class[class_index[s.label.as_str()]] += 1;
                }
                let mut correct = 0;
                for (s, p) in test.iter().zip(&predicted) {
                    let t = class_index[s.label.as_str()];
                    let q = *class_index.get(p.as_str()).ok_or_else(|| {
                        Error::invalid(format!("classifier predicted unknown class {p:?}"))
                    })?;
                    confusion[t][q] += 1;
                    correct += usize::from(t == q);
                }
                Ok(TrialResult {
                    trial,
                    train_per_class,
                    train_total: train.len(),
                    test_total: test.len(),
                    correct,
                    accuracy: correct as f64 / test.len() as f64,
                    confusion,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let accs: Vec<f64> = trials.iter().map(|t| t.accuracy).collect();
        let (mean, std) = mean_and_population_std(&accs);
        points.push(PointReport {
            size,
            trials,
            mean,
            std,
        });
    }
    Ok(EvalReport {
        config: format!(
            "method={};{};{}",
            set.method,
            classifier.describe(),
            cfg.describe()
        ),
        classes: set.classes.clone(),
        points,
    })
}

const REPORT_HEADER: &str =
    "kind,train_size,trial,train_per_class,train_total,test_total,correct,accuracy,mean,std";

pub fn format_report(report: &EvalReport) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "#config={}\n",
        report.config.replace(['\n', '\r'], " ")
    ));
    out.push_str(&format!("#classes={}\n", report.classes.join("|")));
    out.push_str("#error_bars=population_std\n");
    out.push_str(REPORT_HEADER);
    out.push('\n');
    for p in &report.points {
        for t in &p.trials {
            let per_class: Vec<String> =
                t.train_per_class.iter().map(ToString::to_string).collect();
            out.push_str(&format!(
                "trial,{},{},{},{},{},{},{},,\n",
                p.size,
                t.trial,
                per_class.join("|"),
                t.train_total,
                t.test_total,
                t.correct,
                fmt_f64(t.accuracy)
            ));
        }
        out.push_str(&format!(
            "aggregate,{},,,,,,,{},{}\n",
            p.size,
            fmt_f64(p.mean),
            fmt_f64(p.std)
        ));
    }
    out.push_str("#confusion\ntrain_size,trial,true_label");
    for c in &report.classes {
        out.push_str(&format!(",pred_{c}"));
    }
    out.push('\n');
    for p in &report.points {
        for t in &p.trials {
            for (c, row) in report.classes.iter().zip(&t.confusion) {
                out.push_str(&format!("{},{},{c}", p.size, t.trial));
                for n in row {
                    out.push_str(&format!(",{n}"));
                }
                out.push('\n');
            }
        }
    }
    out
}

pub fn write_report(report: &EvalReport, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), format_report(report).as_bytes())
}

pub fn read_report(path: impl AsRef<Path>) -> Result<EvalReport> {
    let path = path.as_ref();
    parse_report(&read_to_string(path)?, path)
}

/// Inverse of [`format_report`].
pub fn parse_report(text: &str, path: &Path) -> Result<EvalReport> {
    let bad = |line: usize, msg: &str| Error::corrupt(path, format!("line {line}: {msg}"));
    let mut config = None;
    let mut classes: Vec<String> = Vec::new();
    let mut points: Vec<PointReport> = Vec::new();
    let mut in_confusion = false;
    let mut header_seen = false;
    for (i, line) in text.lines().enumerate() {
        let n = i + 1;
        if let Some(c) = line.strip_prefix("#config=") {
            config = Some(c.to_owned());
            continue;
        }
        if let Some(c) = line.strip_prefix("#classes=") {
            classes = c
                .split('|')
                .filter(|s| !s.is_empty())
                .map(str::to_owned)
                .collect();
            continue;
        }
        if line == "#confusion" {
            in_confusion = true;
            header_seen = false;
            continue;
        }
        if line.starts_with('#') || line.is_empty() {
            continue;
        }
        if !header_seen {
            header_seen = true;
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        let num = |s: &str| s.parse::<usize>().map_err(|_| bad(n, "bad integer"));
        let real = |s: &str| s.parse::<f64>().map_err(|_| bad(n, "bad number"));
        if in_confusion {
            if f.len() != 3 + classes.len() {
                return Err(bad(n, "wrong confusion row width"));
            }
            let size: TrainSize = f[0].parse().map_err(|_| bad(n, "bad train size"))?;
            let trial = num(f[1])?;
            let row = f[3..].iter().map(|s| num(s)).collect::<Result<Vec<_>>>()?;
            let t = points
                .iter_mut()
                .find(|p| p.size == size)
                .and_then(|p| p.trials.iter_mut().find(|t| t.trial == trial))
                .ok_or_else(|| bad(n, "confusion row for unknown trial"))?;
            t.confusion.push(row);
            continue;
        }
        if f.len() != 10 {
            return Err(bad(n, "expected 10 columns"));
        }
        let size: TrainSize = f[1].parse().map_err(|_| bad(n, "bad train size"))?;
        match f[0] {
            "trial" => {
                if points
                    .last()
                    .is_none_or(|p| p.size != size || !p.mean.is_nan())
                {
                    points.push(PointReport {
                        size,
                        trials: Vec::new(),
                        mean: f64::NAN,
                        std: f64::NAN,
                    });
                }
                let per_class = f[3].split('|').map(num).collect::<Result<Vec<_>>>()?;
                points
                    .last_mut()
                    .expect("pushed above")
                    .trials
                    .push(TrialResult {
                        trial: num(f[2])?,
                        train_per_class: per_class,
                        train_total: num(f[4])?,
                        test_total: num(f[5])?,
                        correct: num(f[6])?,
                        accuracy: real(f[7])?,
                        confusion: Vec::new(),
                    });
            }
            "aggregate" => {
                let p = points
                    .last_mut()
                    .filter(|p| p.size == size && p.mean.is_nan())
                    .ok_or_else(|| bad(n, "aggregate row without trial rows"))?;
                p.mean = real(f[8])?;
                p.std = real(f[9])?;
            }
            _ => return Err(bad(n, "unknown row kind")),
        }
    }
    let config = config.ok_or_else(|| Error::corrupt(path, "missing #config line"))?;
    Ok(EvalReport {
        config,
        classes,
        points,
    })
}
