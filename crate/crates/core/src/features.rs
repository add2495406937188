//! Fixed-length feature vectors built from filter responses, and the
//! feature CSV file format.
//!
//! Feature file layout (UTF-8):
//!
//! ```text
//! #method=stddev,dim=192,classes=ice|snow|water
//! snow,s0001,0.5,-1.25,...
//! ```
//!
//! Each row holds the label, the source id, then `dim` values rendered in the
//! shortest decimal form that parses back to the identical `f64`.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::filters::{
    convolve_same, make_gabor_bank, stddev_filter, BankConfig, Kernel, Padding, WindowSpec,
};
use crate::fsutil::{fmt_f64, read_to_string, write_atomic};
use crate::imgio::MapView;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Gabor,
    Stddev,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Gabor => "gabor",
            Method::Stddev => "stddev",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gabor" => Ok(Method::Gabor),
            "stddev" => Ok(Method::Stddev),
            other => Err(Error::invalid(format!("unknown feature method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    method: Method,
    values: Vec<f64>,
}

impl FeatureVector {
    pub fn new(method: Method, values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("feature vector must not be empty"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("feature vector contains non-finite values"));
        }
        Ok(Self { method, values })
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// Ok when both vectors share method and dimension.
    pub fn check_comparable(&self, other: &FeatureVector) -> Result<()> {
        if self.method != other.method {
            return Err(Error::MethodMismatch {
                left: self.method.to_string(),
                right: other.method.to_string(),
            });
        }
        if self.dim() != other.dim() {
            return Err(Error::DimMismatch {
                left: self.dim(),
                right: other.dim(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledFeature {
    pub feature: FeatureVector,
    pub label: String,
    pub source: String,
}

impl LabeledFeature {
    pub fn new(
        feature: FeatureVector,
        label: impl Into<String>,
        source: impl Into<String>,
    ) -> Self {
        Self {
            feature,
            label: label.into(),
            source: source.into(),
        }
    }
}

/// Homogeneous collection of labeled features with its declared class set.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    pub method: Method,
    pub dim: usize,
    pub classes: Vec<String>,
    pub samples: Vec<LabeledFeature>,
}

impl FeatureSet {
    pub fn new(
        method: Method,
        dim: usize,
        classes: Vec<String>,
        samples: Vec<LabeledFeature>,
    ) -> Result<Self> {
        let set = Self {
            method,
            dim,
            classes,
            samples,
        };
        set.validate()?;
        Ok(set)
    }

    /// Takes method and dimension from the first sample.
    pub fn from_samples(classes: Vec<String>, samples: Vec<LabeledFeature>) -> Result<Self> {
        let first = samples
            .first()
            .ok_or_else(|| Error::invalid("cannot infer method and dim from an empty list"))?;
        Self::new(
            first.feature.method(),
            first.feature.dim(),
            classes,
            samples,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::invalid("feature dim must be positive"));
        }
        for c in &self.classes {
            check_tag(c, "class")?;
        }
        for s in &self.samples {
            if s.feature.method() != self.method {
                return Err(Error::MethodMismatch {
                    left: self.method.to_string(),
                    right: s.feature.method().to_string(),
                });
            }
            if s.feature.dim() != self.dim {
                return Err(Error::DimMismatch {
                    left: self.dim,
                    right: s.feature.dim(),
                });
            }
            if !self.classes.contains(&s.label) {
                return Err(Error::Validation(vec![format!(
                    "sample {}: label {:?} not among declared classes",
                    s.source, s.label
                )]));
            }
            check_tag(&s.source, "source id")?;
        }
        Ok(())
    }
}

fn check_tag(tag: &str, what: &str) -> Result<()> {
    if tag.is_empty() || tag.starts_with('#') || tag.contains(['|', ',', '"', '\n', '\r']) {
        return Err(Error::invalid(format!("unusable {what} {tag:?}")));
    }
    Ok(())
}

/// How a Gabor response map becomes features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GaborPooling {
    /// Mean of `|response|` and population std of the response, per kernel.
    #[default]
    Energy,
    /// Every response value, kernel-major then row-major.
    Raw,
}

/// Gabor energy features: for each kernel in order, the mean absolute
/// response and the population standard deviation of the response under
/// replicate padding.
pub fn gabor_features(img: MapView<'_>, bank: &[Kernel]) -> Result<FeatureVector> {
    gabor_features_pooled(img, bank, GaborPooling::Energy)
}

pub fn gabor_features_pooled(
    img: MapView<'_>,
    bank: &[Kernel],
    pooling: GaborPooling,
) -> Result<FeatureVector> {
    if bank.is_empty() {
        return Err(Error::invalid("Gabor bank is empty"));
    }
    let mut values = Vec::new();
    for kernel in bank {
        let response = convolve_same(img, kernel, Padding::Replicate)?;
        let r = response.values();
        match pooling {
            GaborPooling::Energy => {
                let n = r.len() as f64;
                let mean_abs = r.iter().map(|v| v.abs()).sum::<f64>() / n;
                values.push(mean_abs);
                values.push(population_std(r));
            }
            GaborPooling::Raw => values.extend_from_slice(r),
        }
    }
    FeatureVector::new(Method::Gabor, values)
}

fn population_std(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n).sqrt()
}

/// Windowed std-dev maps (replicate padding) pooled into `grid` x `grid`
/// block means, window-major then block row-major.
///
/// `grid` equal to the patch side keeps the raw per-pixel maps.
pub fn stddev_features(
    img: MapView<'_>,
    windows: &[WindowSpec],
    grid: usize,
) -> Result<FeatureVector> {
    if windows.is_empty() {
        return Err(Error::invalid("no std-dev windows given"));
    }
    let (w, h) = (img.width, img.height);
    if grid == 0 || w % grid != 0 || h % grid != 0 {
        return Err(Error::invalid(format!(
            "{w}x{h} patch is not divisible into a {grid}x{grid} grid"
        )));
    }
    let (bw, bh) = (w / grid, h / grid);
    let block_n = (bw * bh) as f64;
    let mut values = Vec::with_capacity(windows.len() * grid * grid);
    for &window in windows {
        let map = stddev_filter(img, window, Padding::Replicate)?;
        for by in 0..grid {
            for bx in 0..grid {
                let mut sum = 0.0;
                for y in by * bh..(by + 1) * bh {
                    sum += map.values()[y * w + bx * bw..y * w + (bx + 1) * bw]
                        .iter()
                        .sum::<f64>();
                }
                values.push(sum / block_n);
            }
        }
    }
    FeatureVector::new(Method::Stddev, values)
}

/// Which extractor to run and with what settings.
#[derive(Debug, Clone, PartialEq)]
pub enum FeatureConfig {
    Gabor {
        bank: BankConfig,
        pooling: GaborPooling,
    },
    Stddev {
        windows: Vec<WindowSpec>,
        grid: usize,
    },
}

impl FeatureConfig {
    pub fn gabor_default() -> Self {
        FeatureConfig::Gabor {
            bank: BankConfig::default(),
            pooling: GaborPooling::Energy,
        }
    }

    pub fn stddev_default() -> Self {
        FeatureConfig::Stddev {
            windows: WindowSpec::defaults(),
            grid: 8,
        }
    }

    pub fn method(&self) -> Method {
        match self {
            FeatureConfig::Gabor { .. } => Method::Gabor,
            FeatureConfig::Stddev { .. } => Method::Stddev,
        }
    }

    /// Single-line `key=value;...` echo of every setting.
    pub fn describe(&self) -> String {
        let join = |v: &[f64]| v.iter().map(|&x| fmt_f64(x)).collect::<Vec<_>>().join(" ");
        match self {
            FeatureConfig::Gabor { bank, pooling } => format!(
                "method=gabor;orientations={};frequencies={};sigma_rule={};half_size_rule={};pooling={}",
                join(&bank.orientations),
                join(&bank.frequencies),
                fmt_f64(bank.sigma_rule),
                fmt_f64(bank.half_size_rule),
                match pooling {
                    GaborPooling::Energy => "energy",
                    GaborPooling::Raw => "raw",
                }
            ),
            FeatureConfig::Stddev { windows, grid } => format!(
                "method=stddev;windows={};grid={grid}",
                windows
                    .iter()
                    .map(|w| w.side().to_string())
                    .collect::<Vec<_>>()
                    .join(" ")
            ),
        }
    }

    /// Builds kernels once so the extractor can be reused across patches.
    pub fn extractor(&self) -> Result<Extractor> {
        Ok(match self {
            FeatureConfig::Gabor { bank, pooling } => Extractor::Gabor {
                kernels: make_gabor_bank(bank)?.into_iter().map(|(_, k)| k).collect(),
                pooling: *pooling,
            },
            FeatureConfig::Stddev { windows, grid } => Extractor::Stddev {
                windows: windows.clone(),
                grid: *grid,
            },
        })
    }
}

#[derive(Debug, Clone)]
pub enum Extractor {
    Gabor {
        kernels: Vec<Kernel>,
        pooling: GaborPooling,
    },
    Stddev {
        windows: Vec<WindowSpec>,
        grid: usize,
    },
}

impl Extractor {
    pub fn extract(&self, img: MapView<'_>) -> Result<FeatureVector> {
        match self {
            Extractor::Gabor { kernels, pooling } => gabor_features_pooled(img, kernels, *pooling),
            Extractor::Stddev { windows, grid } => stddev_features(img, windows, *grid),
        }
    }
}

/// Per-dimension min-max rescaling into `[0, 1]`, fitted on one set of
/// vectors and applied to others. Constant dimensions map to 0.
#[derive(Debug, Clone, PartialEq)]
pub struct MinMaxScaler {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl MinMaxScaler {
    pub fn fit<'a>(vectors: impl IntoIterator<Item = &'a FeatureVector>) -> Result<Self> {
        let mut iter = vectors.into_iter();
        let first = iter
            .next()
            .ok_or_else(|| Error::invalid("cannot fit a scaler on nothing"))?;
        let mut lo = first.values().to_vec();
        let mut hi = lo.clone();
        for v in iter {
            first.check_comparable(v)?;
            for (i, &x) in v.values().iter().enumerate() {
                lo[i] = lo[i].min(x);
                hi[i] = hi[i].max(x);
            }
        }
        Ok(Self { lo, hi })
    }

    pub fn transform(&self, v: &FeatureVector) -> Result<FeatureVector> {
        if v.dim() != self.lo.len() {
            return Err(Error::DimMismatch {
                left: self.lo.len(),
                right: v.dim(),
            });
        }
        let values = v
            .values()
            .iter()
            .zip(self.lo.iter().zip(&self.hi))
            .map(|(&x, (&lo, &hi))| if hi > lo { (x - lo) / (hi - lo) } else { 0.0 })
            .collect();
        FeatureVector::new(v.method(), values)
    }
}

/// Renders the feature file. Fails on heterogeneous sets.
pub fn format_features(set: &FeatureSet) -> Result<String> {
    set.validate()?;
    let mut w = csv::WriterBuilder::new()
        .flexible(true)
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::invalid(e.to_string());
    w.write_record([
        format!("#method={}", set.method),
        format!("dim={}", set.dim),
        format!("classes={}", set.classes.join("|")),
    ])
    .map_err(csv_err)?;
    for s in &set.samples {
        let mut record = vec![s.label.clone(), s.source.clone()];
        record.extend(s.feature.values().iter().map(|&v| fmt_f64(v)));
        w.write_record(&record).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn write_features(path: impl AsRef<Path>, set: &FeatureSet) -> Result<()> {
    write_atomic(path.as_ref(), format_features(set)?.as_bytes())
}

pub fn read_features(path: impl AsRef<Path>) -> Result<FeatureSet> {
    let path = path.as_ref();
    parse_features(&read_to_string(path)?, path)
}

pub fn parse_features(text: &str, path: &Path) -> Result<FeatureSet> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut records = reader.records();
    let header = records
        .next()
        .ok_or_else(|| Error::corrupt(path, "missing feature header"))?
        .map_err(|e| Error::corrupt(path, e.to_string()))?;
    let (mut method, mut dim, mut classes) = (None, None, None);
    for (i, field) in header.iter().enumerate() {
        let field = if i == 0 {
            field
                .strip_prefix('#')
                .ok_or_else(|| Error::corrupt(path, "feature header must start with '#'"))?
        } else {
            field
        };
        let (key, value) = field
            .split_once('=')
            .ok_or_else(|| Error::corrupt(path, format!("bad header field {field:?}")))?;
        match key {
            "method" => {
                method =
                    Some(value.parse::<Method>().map_err(|_| {
                        Error::corrupt(path, format!("unknown method tag {value:?}"))
                    })?)
            }
            "dim" => {
                dim = Some(
                    value
                        .parse::<usize>()
                        .map_err(|_| Error::corrupt(path, format!("bad dim {value:?}")))?,
                )
            }
            "classes" => {
                classes = Some(if value.is_empty() {
                    Vec::new()
                } else {
                    value.split('|').map(str::to_owned).collect::<Vec<_>>()
                })
            }
            other => {
                return Err(Error::corrupt(
                    path,
                    format!("unknown header key {other:?}"),
                ))
            }
        }
    }
    let (Some(method), Some(dim), Some(classes)) = (method, dim, classes) else {
        return Err(Error::corrupt(path, "header needs method, dim and classes"));
    };
    let mut samples = Vec::new();
    for (row, rec) in records.enumerate() {
        let rec = rec.map_err(|e| Error::corrupt(path, e.to_string()))?;
        let line = row + 2;
        if rec.len() != dim + 2 {
            return Err(Error::corrupt(
                path,
                format!(
                    "line {line}: expected {dim} values, found {}",
                    rec.len().saturating_sub(2)
                ),
            ));
        }
        let values = rec
            .iter()
            .skip(2)
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|_| Error::corrupt(path, format!("line {line}: bad value {t:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let feature = FeatureVector::new(method, values)
            .map_err(|e| Error::corrupt(path, format!("line {line}: {e}")))?;
        samples.push(LabeledFeature::new(feature, &rec[0], &rec[1]));
    }
    FeatureSet::new(method, dim, classes, samples).map_err(|e| Error::corrupt(path, e.to_string()))
}
