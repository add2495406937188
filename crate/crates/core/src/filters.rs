//! Gabor kernels and banks, same-size convolution, and the windowed
//! standard-deviation filter.
//!
//! Kernels and windows are square with odd side `2 * half + 1`. Taps are
//! stored row-major with the vertical offset as the row index, so the tap at
//! offset `(dx, dy)` lives at `(dy + half) * side + (dx + half)`.

use std::f64::consts::PI;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::fsutil::{fmt_f64, read_to_string, write_atomic};
use crate::imgio::{encode_pgm, GrayImage, MapView, RealMap};

/// How reads outside the image are resolved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Padding {
    /// Clamp coordinates to the nearest edge pixel.
    #[default]
    Replicate,
    /// Out-of-range reads are zero.
    Zero,
}

impl fmt::Display for Padding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Padding::Replicate => "replicate",
            Padding::Zero => "zero",
        })
    }
}

impl FromStr for Padding {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "replicate" => Ok(Padding::Replicate),
            "zero" => Ok(Padding::Zero),
            other => Err(Error::invalid(format!("unknown padding {other:?}"))),
        }
    }
}

/// Parameters of one real (cosine-phase) Gabor kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaborParams {
    pub sigma_x: f64,
    pub sigma_y: f64,
    /// Orientation in radians, `[0, pi)`.
    pub theta: f64,
    /// Carrier frequency in cycles per pixel.
    pub freq: f64,
    pub half_size: usize,
}

impl GaborParams {
    pub fn new(
        sigma_x: f64,
        sigma_y: f64,
        theta: f64,
        freq: f64,
        half_size: usize,
    ) -> Result<Self> {
        let p = Self {
            sigma_x,
            sigma_y,
            theta,
            freq,
            half_size,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.sigma_x) || !positive(self.sigma_y) {
            return Err(Error::invalid(format!(
                "Gabor sigmas must be positive, got ({}, {})",
                self.sigma_x, self.sigma_y
            )));
        }
        if !positive(self.freq) {
            return Err(Error::invalid(format!(
                "Gabor frequency must be positive, got {}",
                self.freq
            )));
        }
        if !(self.theta.is_finite() && (0.0..PI).contains(&self.theta)) {
            return Err(Error::invalid(format!(
                "Gabor orientation must lie in [0, pi), got {}",
                self.theta
            )));
        }
        if self.half_size == 0 {
            return Err(Error::invalid("Gabor half_size must be at least 1"));
        }
        Ok(())
    }

    pub fn side(&self) -> usize {
        2 * self.half_size + 1
    }

    /// Kernel value at integer offset `(x, y)`:
    /// `exp(-(xr^2 / sx^2 + yr^2 / sy^2) / 2) * cos(2 pi f xr)` with
    /// `xr = x cos t + y sin t` and `yr = -x sin t + y cos t`.
    ///
    /// `xr` enters only through even functions, so it is folded to `|xr|`;
    /// that keeps `tap(x, y) == tap(-x, -y)` bit-exact.
    pub fn tap(&self, x: f64, y: f64) -> f64 {
        let (sin, cos) = self.theta.sin_cos();
        let xr = (x * cos + y * sin).abs();
        let yr = (-x * sin + y * cos).abs();
        let envelope = (-0.5
            * (xr * xr / (self.sigma_x * self.sigma_x) + yr * yr / (self.sigma_y * self.sigma_y)))
            .exp();
        envelope * (2.0 * PI * self.freq * xr).cos()
    }
}

/// Square grid of finite taps with odd side.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    side: usize,
    taps: Vec<f64>,
}

impl Kernel {
    pub fn new(side: usize, taps: Vec<f64>) -> Result<Self> {
        if side.is_multiple_of(2) {
            return Err(Error::invalid(format!(
                "kernel side must be odd, got {side}"
            )));
        }
        if taps.len() != side * side {
            return Err(Error::invalid(format!(
                "kernel of side {side} needs {} taps, got {}",
                side * side,
                taps.len()
            )));
        }
        if taps.iter().any(|t| !t.is_finite()) {
            return Err(Error::invalid("kernel taps must be finite"));
        }
        Ok(Self { side, taps })
    }

    pub fn identity() -> Self {
        Self {
            side: 1,
            taps: vec![1.0],
        }
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn half(&self) -> usize {
        self.side / 2
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    /// Tap at signed offset `(dx, dy)` from the center.
    pub fn at(&self, dx: isize, dy: isize) -> f64 {
        let h = self.half() as isize;
        assert!(dx.abs() <= h && dy.abs() <= h, "offset outside kernel");
        self.taps[((dy + h) as usize) * self.side + (dx + h) as usize]
    }

    pub fn sum(&self) -> f64 {
        self.taps.iter().sum()
    }

    /// One row per line, taps separated by single spaces, full precision.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for row in self.taps.chunks_exact(self.side) {
            let line: Vec<String> = row.iter().map(|&t| fmt_f64(t)).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }

    /// Parses the output of [`Kernel::to_text`].
    pub fn from_text(text: &str) -> Result<Self> {
        let mut taps = Vec::new();
        let mut rows = 0;
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            for tok in line.split_whitespace() {
                taps.push(
                    tok.parse::<f64>()
                        .map_err(|_| Error::invalid(format!("bad kernel tap {tok:?}")))?,
                );
            }
            rows += 1;
        }
        Kernel::new(rows, taps)
    }

    /// Taps linearly rescaled so the minimum maps to 0 and the maximum to 255.
    pub fn to_gray(&self) -> GrayImage {
        let (lo, hi) = self
            .taps
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &t| {
                (lo.min(t), hi.max(t))
            });
        let span = hi - lo;
        let pixels = self
            .taps
            .iter()
            .map(|&t| {
                if span > 0.0 {
                    (t - lo) / span * 255.0
                } else {
                    128.0
                }
            })
            .collect();
        GrayImage::new(self.side, self.side, pixels).expect("rescaled taps are in range")
    }

    /// Writes a `.pgm` visualization or, for any other extension, the text grid.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        if path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("pgm"))
        {
            write_atomic(path, &encode_pgm(&self.to_gray()))
        } else {
            write_atomic(path, self.to_text().as_bytes())
        }
    }
}

pub fn make_gabor_kernel(p: &GaborParams) -> Kernel {
    let h = p.half_size as isize;
    let mut taps = Vec::with_capacity(p.side() * p.side());
    for y in -h..=h {
        for x in -h..=h {
            taps.push(p.tap(x as f64, y as f64));
        }
    }
    Kernel {
        side: p.side(),
        taps,
    }
}

/// Orientations, frequencies and the rules that size each kernel.
///
/// For a frequency `f` the envelope is isotropic with
/// `sigma = sigma_rule / f`, and `half_size = ceil(half_size_rule * sigma)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BankConfig {
    pub orientations: Vec<f64>,
    pub frequencies: Vec<f64>,
    pub sigma_rule: f64,
    pub half_size_rule: f64,
}

impl Default for BankConfig {
    /// Eight orientations `k pi / 8` and frequencies `1/16, 1/8, 1/4`, with
    /// `sigma = 0.56 / f` (about one octave of bandwidth) and a `3 sigma`
    /// support.
    fn default() -> Self {
        Self {
            orientations: (0..8).map(|k| k as f64 * PI / 8.0).collect(),
            frequencies: vec![1.0 / 16.0, 1.0 / 8.0, 1.0 / 4.0],
            sigma_rule: 0.56,
            half_size_rule: 3.0,
        }
    }
}

impl BankConfig {
    pub fn validate(&self) -> Result<()> {
        if self.orientations.is_empty() || self.frequencies.is_empty() {
            return Err(Error::invalid(
                "bank needs at least one orientation and frequency",
            ));
        }
        if !(self.sigma_rule.is_finite() && self.sigma_rule > 0.0) {
            return Err(Error::invalid("sigma_rule must be positive"));
        }
        if !(self.half_size_rule.is_finite() && self.half_size_rule > 0.0) {
            return Err(Error::invalid("half_size_rule must be positive"));
        }
        self.params().map(|_| ())
    }

    pub fn sigma_for(&self, freq: f64) -> f64 {
        self.sigma_rule / freq
    }

    pub fn half_size_for(&self, sigma: f64) -> usize {
        ((self.half_size_rule * sigma).ceil() as usize).max(1)
    }

    /// Kernel parameters, frequency-major then orientation.
    pub fn params(&self) -> Result<Vec<GaborParams>> {
        let mut out = Vec::with_capacity(self.orientations.len() * self.frequencies.len());
        for &freq in &self.frequencies {
            if !(freq.is_finite() && freq > 0.0) {
                return Err(Error::invalid(format!(
                    "bank frequency {freq} must be positive"
                )));
            }
            let sigma = self.sigma_for(freq);
            for &theta in &self.orientations {
                out.push(GaborParams::new(
                    sigma,
                    sigma,
                    theta,
                    freq,
                    self.half_size_for(sigma),
                )?);
            }
        }
        Ok(out)
    }

    /// `key = value` lines; lists are comma separated; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = BankConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::invalid(format!("bank line {}: expected key = value", lineno + 1))
            })?;
            let list = |v: &str| -> Result<Vec<f64>> {
                v.split(',')
                    .map(|t| {
                        t.trim().parse::<f64>().map_err(|_| {
                            Error::invalid(format!("bank line {}: bad number {t:?}", lineno + 1))
                        })
                    })
                    .collect()
            };
            let scalar = |v: &str| -> Result<f64> {
                v.trim().parse::<f64>().map_err(|_| {
                    Error::invalid(format!("bank line {}: bad number {v:?}", lineno + 1))
                })
            };
            match key.trim() {
                "orientations" => cfg.orientations = list(value)?,
                "frequencies" => cfg.frequencies = list(value)?,
                "sigma_rule" => cfg.sigma_rule = scalar(value)?,
                "half_size_rule" => cfg.half_size_rule = scalar(value)?,
                other => {
                    return Err(Error::invalid(format!(
                        "bank line {}: unknown key {other:?}",
                        lineno + 1
                    )))
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&read_to_string(path.as_ref())?)
    }

    pub fn to_text(&self) -> String {
        let join = |v: &[f64]| v.iter().map(|&x| fmt_f64(x)).collect::<Vec<_>>().join(", ");
        format!(
            "orientations = {}\nfrequencies = {}\nsigma_rule = {}\nhalf_size_rule = {}\n",
            join(&self.orientations),
            join(&self.frequencies),
            fmt_f64(self.sigma_rule),
            fmt_f64(self.half_size_rule)
        )
    }
}

/// One kernel per (frequency, orientation) pair, frequency-major.
pub fn make_gabor_bank(cfg: &BankConfig) -> Result<Vec<(GaborParams, Kernel)>> {
    cfg.validate()?;
    Ok(cfg
        .params()?
        .into_iter()
        .map(|p| {
            let k = make_gabor_kernel(&p);
            (p, k)
        })
        .collect())
}

/// Square averaging window for the standard-deviation filter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowSpec {
    side: usize,
}

impl WindowSpec {
    pub const DEFAULT_SIDES: [usize; 3] = [3, 5, 7];

    pub fn new(side: usize) -> Result<Self> {
        if side < 3 || side.is_multiple_of(2) {
            return Err(Error::invalid(format!(
                "window side must be odd and at least 3, got {side}"
            )));
        }
        Ok(Self { side })
    }

    pub fn defaults() -> Vec<WindowSpec> {
        Self::DEFAULT_SIDES
            .iter()
            .map(|&s| WindowSpec { side: s })
            .collect()
    }

    pub fn side(&self) -> usize {
        self.side
    }
}

/// Copy of `img` grown by `border` on every side.
fn pad(img: MapView<'_>, border: usize, padding: Padding) -> Vec<f64> {
    let pw = img.width + 2 * border;
    let ph = img.height + 2 * border;
    let mut out = vec![0.0; pw * ph];
    for py in 0..ph {
        let sy = py as isize - border as isize;
        let row = &mut out[py * pw..(py + 1) * pw];
        let src_y = match padding {
            Padding::Replicate => sy.clamp(0, img.height as isize - 1) as usize,
            Padding::Zero if (0..img.height as isize).contains(&sy) => sy as usize,
            Padding::Zero => continue,
        };
        let src = &img.values[src_y * img.width..(src_y + 1) * img.width];
        row[border..border + img.width].copy_from_slice(src);
        if padding == Padding::Replicate {
            row[..border].fill(src[0]);
            row[border + img.width..].fill(src[img.width - 1]);
        }
    }
    out
}

/// Same-size 2-D convolution: `out(x, y) = sum tap(dx, dy) * in(x - dx, y - dy)`.
///
/// Contributions are accumulated per output pixel in row-major tap order,
/// starting from zero. The loop runs taps outermost and pixels innermost so
/// independent output pixels share vector lanes without reassociating any
/// single pixel's sum.
pub fn convolve_same(img: MapView<'_>, kernel: &Kernel, padding: Padding) -> Result<RealMap> {
    let (w, h) = (img.width, img.height);
    if kernel.side() > w.min(h) {
        return Err(Error::invalid(format!(
            "kernel side {} exceeds {w}x{h} image",
            kernel.side()
        )));
    }
    let half = kernel.half();
    let pw = w + 2 * half;
    let padded = pad(img, half, padding);
    let mut out = vec![0.0; w * h];
    for (y, orow) in out.chunks_exact_mut(w).enumerate() {
        for (ky, trow) in kernel.taps.chunks_exact(kernel.side).enumerate() {
            // Input row y - dy with dy = ky - half, shifted by the border.
            let py = y + 2 * half - ky;
            let prow = &padded[py * pw..(py + 1) * pw];
            for (kx, &t) in trow.iter().enumerate() {
                let px = 2 * half - kx;
                for (o, &s) in orow.iter_mut().zip(&prow[px..px + w]) {
                    *o += t * s;
                }
            }
        }
    }
    Ok(RealMap::from_parts(w, h, out))
}

/// Population standard deviation over the window centered on each pixel.
///
/// Deviations are taken from the center value before the two-pass mean and
/// variance, which leaves the result unchanged mathematically and makes a
/// flat window produce exactly zero.
pub fn stddev_filter(img: MapView<'_>, window: WindowSpec, padding: Padding) -> Result<RealMap> {
    let (w, h) = (img.width, img.height);
    let side = window.side();
    if side > w.min(h) {
        return Err(Error::invalid(format!(
            "window side {side} exceeds {w}x{h} image"
        )));
    }
    let half = side / 2;
    let pw = w + 2 * half;
    let padded = pad(img, half, padding);
    let n = (side * side) as f64;
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let center = img.values[y * w + x];
            let rows = (y..y + side).map(|py| &padded[py * pw + x..py * pw + x + side]);
            let mean: f64 = rows.clone().flatten().map(|&v| v - center).sum::<f64>() / n;
            let ss: f64 = rows
                .flatten()
                .map(|&v| {
                    let d = v - center - mean;
                    d * d
                })
                .sum();
            out.push((ss / n).sqrt());
        }
    }
    Ok(RealMap::from_parts(w, h, out))
}
