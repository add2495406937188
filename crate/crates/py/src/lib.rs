//! Python bindings. Images cross the boundary as flat row-major lists of
//! floats; filter outputs come back as lists of rows.

use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use surfclass_core as core;
use surfclass_core::eval::{EvalConfig, KnnClassifier, TrainSize};
use surfclass_core::features::{FeatureConfig, Method};
use surfclass_core::filters::{BankConfig, Padding, WindowSpec};
use surfclass_core::imgio::RealMap;
use surfclass_core::synth::SynthConfig;

fn to_py(e: core::Error) -> PyErr {
    if e.is_io() {
        PyOSError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

fn rows(map: &RealMap) -> Vec<Vec<f64>> {
    map.values()
        .chunks(map.width())
        .map(<[f64]>::to_vec)
        .collect()
}

fn parse<T: std::str::FromStr<Err = core::Error>>(s: &str) -> PyResult<T> {
    s.parse().map_err(to_py)
}

/// Grayscale image with pixel values in `[0, 255]`.
#[pyclass(module = "surfclass")]
struct GrayImage {
    inner: core::GrayImage,
}

#[pymethods]
impl GrayImage {
    #[new]
    fn new(width: usize, height: usize, pixels: Vec<f64>) -> PyResult<Self> {
        Ok(Self {
            inner: core::GrayImage::new(width, height, pixels).map_err(to_py)?,
        })
    }

    /// Reads a PGM or PNG file, converting color to gray.
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self {
            inner: core::imgio::load_gray(path).map_err(to_py)?,
        })
    }

    #[getter]
    fn width(&self) -> usize {
        self.inner.width()
    }

    #[getter]
    fn height(&self) -> usize {
        self.inner.height()
    }

    fn pixels(&self) -> Vec<f64> {
        self.inner.pixels().to_vec()
    }

    fn crop(&self, x0: usize, y0: usize, side: usize) -> PyResult<Self> {
        Ok(Self {
            inner: core::crop_patch(&self.inner, x0, y0, side).map_err(to_py)?,
        })
    }

    fn save_pgm(&self, path: &str) -> PyResult<()> {
        core::imgio::save_pgm(&self.inner, path).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!("GrayImage({}x{})", self.inner.width(), self.inner.height())
    }
}

/// Square convolution kernel.
#[pyclass(module = "surfclass")]
struct Kernel {
    inner: core::Kernel,
}

#[pymethods]
impl Kernel {
    #[new]
    fn new(side: usize, taps: Vec<f64>) -> PyResult<Self> {
        Ok(Self {
            inner: core::Kernel::new(side, taps).map_err(to_py)?,
        })
    }

    #[staticmethod]
    #[pyo3(signature = (theta, freq, sigma_x, sigma_y=None, half_size=None))]
    fn gabor(
        theta: f64,
        freq: f64,
        sigma_x: f64,
        sigma_y: Option<f64>,
        half_size: Option<usize>,
    ) -> PyResult<Self> {
        let sigma_y = sigma_y.unwrap_or(sigma_x);
        let half =
            half_size.unwrap_or_else(|| BankConfig::default().half_size_for(sigma_x.max(sigma_y)));
        let p = core::GaborParams::new(sigma_x, sigma_y, theta, freq, half).map_err(to_py)?;
        Ok(Self {
            inner: core::make_gabor_kernel(&p),
        })
    }

    #[getter]
    fn side(&self) -> usize {
        self.inner.side()
    }

    fn taps(&self) -> Vec<f64> {
        self.inner.taps().to_vec()
    }

    /// Tap at offset `(dx, dy)` from the center.
    fn at(&self, dx: isize, dy: isize) -> PyResult<f64> {
        let h = self.inner.half() as isize;
        if dx.abs() > h || dy.abs() > h {
            return Err(PyValueError::new_err(format!(
                "offset outside a {h}-half kernel"
            )));
        }
        Ok(self.inner.at(dx, dy))
    }

    fn to_text(&self) -> String {
        self.inner.to_text()
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save(path).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!("Kernel(side={})", self.inner.side())
    }
}

/// Nearest-neighbor outcome for one query.
#[pyclass(module = "surfclass", get_all)]
struct Prediction {
    label: String,
    neighbor_ids: Vec<String>,
    distances: Vec<f64>,
}

impl From<core::Prediction> for Prediction {
    fn from(p: core::Prediction) -> Self {
        Self {
            label: p.label,
            neighbor_ids: p.neighbor_ids,
            distances: p.distances,
        }
    }
}

#[pymethods]
impl Prediction {
    fn __repr__(&self) -> String {
        format!(
            "Prediction(label={:?}, distances={:?})",
            self.label, self.distances
        )
    }
}

/// L1 k-NN model over `(label, source, values)` training triples.
#[pyclass(module = "surfclass")]
struct KnnModel {
    inner: core::KnnModel,
    method: Method,
}

#[pymethods]
impl KnnModel {
    #[new]
    #[pyo3(signature = (train, k=1, method="stddev"))]
    fn new(train: Vec<(String, String, Vec<f64>)>, k: usize, method: &str) -> PyResult<Self> {
        let method: Method = parse(method)?;
        let samples = train
            .into_iter()
            .map(|(label, source, values)| {
                Ok(core::LabeledFeature::new(
                    core::FeatureVector::new(method, values)?,
                    label,
                    source,
                ))
            })
            .collect::<core::Result<Vec<_>>>()
            .map_err(to_py)?;
        Ok(Self {
            inner: core::KnnModel::new(samples, k).map_err(to_py)?,
            method,
        })
    }

    #[getter]
    fn k(&self) -> usize {
        self.inner.k()
    }

    fn classify(&self, query: Vec<f64>) -> PyResult<Prediction> {
        let q = core::FeatureVector::new(self.method, query).map_err(to_py)?;
        Ok(self.inner.classify(&q).map_err(to_py)?.into())
    }

    fn classify_batch(&self, py: Python<'_>, queries: Vec<Vec<f64>>) -> PyResult<Vec<Prediction>> {
        let qs = queries
            .into_iter()
            .map(|v| core::FeatureVector::new(self.method, v))
            .collect::<core::Result<Vec<_>>>()
            .map_err(to_py)?;
        let preds = py
            .detach(|| core::classify_batch(&self.inner, &qs))
            .map_err(to_py)?;
        Ok(preds.into_iter().map(Prediction::from).collect())
    }
}

#[pyfunction]
fn l1_distance(a: Vec<f64>, b: Vec<f64>) -> PyResult<f64> {
    let a = core::FeatureVector::new(Method::Stddev, a).map_err(to_py)?;
    let b = core::FeatureVector::new(Method::Stddev, b).map_err(to_py)?;
    core::l1_distance(&a, &b).map_err(to_py)
}

/// Same-size convolution; returns a list of rows.
#[pyfunction]
#[pyo3(signature = (image, kernel, padding="replicate"))]
fn convolve(image: &GrayImage, kernel: &Kernel, padding: &str) -> PyResult<Vec<Vec<f64>>> {
    let padding: Padding = parse(padding)?;
    let out = core::convolve_same(image.inner.view(), &kernel.inner, padding).map_err(to_py)?;
    Ok(rows(&out))
}

/// Local population standard deviation over a square window.
#[pyfunction]
#[pyo3(signature = (image, side, padding="replicate"))]
fn stddev_filter(image: &GrayImage, side: usize, padding: &str) -> PyResult<Vec<Vec<f64>>> {
    let padding: Padding = parse(padding)?;
    let window = WindowSpec::new(side).map_err(to_py)?;
    let out = core::stddev_filter(image.inner.view(), window, padding).map_err(to_py)?;
    Ok(rows(&out))
}

fn feature_config(method: &str, windows: Vec<usize>, grid: usize) -> PyResult<FeatureConfig> {
    Ok(match parse::<Method>(method)? {
        Method::Gabor => FeatureConfig::gabor_default(),
        Method::Stddev => FeatureConfig::Stddev {
            windows: windows
                .into_iter()
                .map(WindowSpec::new)
                .collect::<core::Result<_>>()
                .map_err(to_py)?,
            grid,
        },
    })
}

/// Feature vector of one image with the default settings for `method`.
#[pyfunction]
#[pyo3(signature = (image, method="stddev", windows=vec![3, 5, 7], grid=8))]
fn extract(
    image: &GrayImage,
    method: &str,
    windows: Vec<usize>,
    grid: usize,
) -> PyResult<Vec<f64>> {
    let cfg = feature_config(method, windows, grid)?;
    let fv = cfg
        .extractor()
        .and_then(|x| x.extract(image.inner.view()))
        .map_err(to_py)?;
    Ok(fv.values().to_vec())
}

/// Writes a synthetic corpus and returns the number of patches.
#[pyfunction]
#[pyo3(signature = (out, preset="noise", per_class=100, side=64, seed=0))]
fn synth_corpus(
    py: Python<'_>,
    out: &str,
    preset: &str,
    per_class: usize,
    side: usize,
    seed: u64,
) -> PyResult<usize> {
    let mut cfg = match preset {
        "noise" => SynthConfig::default_noise(seed),
        "gratings" => SynthConfig::gratings(seed),
        other => return Err(PyValueError::new_err(format!("unknown preset {other:?}"))),
    };
    cfg.per_class = per_class;
    cfg.patch_side = side;
    let manifest = py
        .detach(|| core::synth::gen_corpus(&cfg, out))
        .map_err(to_py)?;
    Ok(manifest.entries.len())
}

/// Features for every manifest entry as `(label, source, values)` triples.
#[pyfunction]
#[pyo3(signature = (manifest, method="stddev", out=None))]
fn extract_manifest(
    py: Python<'_>,
    manifest: &str,
    method: &str,
    out: Option<&str>,
) -> PyResult<Vec<(String, String, Vec<f64>)>> {
    let cfg = feature_config(method, vec![3, 5, 7], 8)?;
    let set = py
        .detach(|| {
            let m = core::load_manifest(manifest)?;
            let set = core::eval::extract_manifest(&m, &cfg)?;
            if let Some(path) = out {
                core::features::write_features(path, &set)?;
            }
            Ok(set)
        })
        .map_err(to_py)?;
    Ok(set
        .samples
        .into_iter()
        .map(|s| (s.label, s.source, s.feature.values().to_vec()))
        .collect())
}

#[derive(FromPyObject)]
enum SizeArg {
    PerClass(usize),
    Fraction(f64),
}

/// Repeated-split evaluation. Integer sizes are per-class counts, floats
/// are fractions. Returns one dict per size with the trial accuracies,
/// their mean and population standard deviation.
#[pyfunction]
#[pyo3(signature = (manifest, method="stddev", train_sizes=None, trials=10, k=1, seed=0, out=None))]
#[allow(clippy::too_many_arguments)]
fn evaluate<'py>(
    py: Python<'py>,
    manifest: &str,
    method: &str,
    train_sizes: Option<Vec<SizeArg>>,
    trials: usize,
    k: usize,
    seed: u64,
    out: Option<&str>,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let features = feature_config(method, vec![3, 5, 7], 8)?;
    let sizes = match train_sizes {
        Some(v) => v
            .into_iter()
            .map(|s| match s {
                SizeArg::PerClass(n) => TrainSize::PerClass(n),
                SizeArg::Fraction(f) => TrainSize::Fraction(f),
            })
            .collect(),
        None => [5, 10, 20, 40, 60].map(TrainSize::PerClass).to_vec(),
    };
    let cfg = EvalConfig {
        sizes,
        trials,
        seed,
        stratified: true,
    };
    let classifier = KnnClassifier { k, minmax: false };
    let report = py
        .detach(|| {
            let m = core::load_manifest(manifest)?;
            let report = core::evaluate(&m, &features, &classifier, &cfg)?;
            if let Some(path) = out {
                core::eval::write_report(&report, path)?;
            }
            Ok(report)
        })
        .map_err(to_py)?;
    report
        .points
        .iter()
        .map(|p| {
            let d = PyDict::new(py);
            d.set_item("train_size", p.size.to_string())?;
            d.set_item("mean", p.mean)?;
            d.set_item("std", p.std)?;
            d.set_item(
                "accuracies",
                p.trials.iter().map(|t| t.accuracy).collect::<Vec<_>>(),
            )?;
            Ok(d)
        })
        .collect()
}

#[pymodule]
fn surfclass(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<GrayImage>()?;
    m.add_class::<Kernel>()?;
    m.add_class::<Prediction>()?;
    m.add_class::<KnnModel>()?;
    m.add_function(wrap_pyfunction!(l1_distance, m)?)?;
    m.add_function(wrap_pyfunction!(convolve, m)?)?;
    m.add_function(wrap_pyfunction!(stddev_filter, m)?)?;
    m.add_function(wrap_pyfunction!(extract, m)?)?;
    m.add_function(wrap_pyfunction!(synth_corpus, m)?)?;
    m.add_function(wrap_pyfunction!(extract_manifest, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    Ok(())
}
