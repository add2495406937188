//! Labeled synthetic texture corpora.
//!
//! Patches are analogs, not models of real surfaces: smooth low-variance
//! noise stands in for water, coarse high-variance grain for snow, and an
//! intermediate blurred grain for ice. A separate grating preset gives
//! classes that differ only in orientation.
//!
//! Every patch draws from its own [`SplitMix64::stream`] keyed by the master
//! seed and the patch's global index (`class_index * per_class + i`), so
//! generation is order-independent and reproducible.
//!
//! Recipe files hold one class per line:
//!
//! ```text
//! water noise base=110 roughness=6 blur=2
//! ice grating theta=0.5 freq=0.125 amplitude=50 noise=12 random_phase=true
//! ```

pub mod oracle;

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::eval::{write_manifest, Manifest, ManifestEntry};
use crate::filters::{convolve_same, Kernel, Padding};
use crate::fsutil::{fmt_f64, read_to_string};
use crate::imgio::{save_pgm, GrayImage, RealMap};
use crate::rng::SplitMix64;

#[derive(Debug, Clone, PartialEq)]
pub enum Recipe {
    /// `128 + amplitude * sin(2 pi freq (x cos theta + y sin theta) + phase)`
    /// plus Gaussian noise, clamped to `[0, 255]`. The phase is zero unless
    /// `random_phase` draws it uniformly from `[0, 2 pi)`.
    Grating {
        theta: f64,
        freq: f64,
        amplitude: f64,
        noise_sigma: f64,
        random_phase: bool,
    },
    /// `base + roughness * N(0, 1)` per pixel, box-blurred with a
    /// `(2 blur + 1)`-wide window under replicate padding, then clamped.
    Noise {
        base: f64,
        roughness: f64,
        blur_radius: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassRecipe {
    pub label: String,
    pub recipe: Recipe,
}

impl ClassRecipe {
    pub fn new(label: impl Into<String>, recipe: Recipe) -> Self {
        Self {
            label: label.into(),
            recipe,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub recipes: Vec<ClassRecipe>,
    pub per_class: usize,
    pub patch_side: usize,
    pub seed: u64,
}

impl SynthConfig {
    /// Three classes separable by local variance and grain size.
    pub fn default_noise(seed: u64) -> Self {
        let noise = |base, roughness, blur_radius| Recipe::Noise {
            base,
            roughness,
            blur_radius,
        };
        Self {
            recipes: vec![
                ClassRecipe::new("water", noise(110.0, 6.0, 2)),
                ClassRecipe::new("snow", noise(200.0, 40.0, 0)),
                ClassRecipe::new("ice", noise(160.0, 16.0, 1)),
            ],
            per_class: 100,
            patch_side: 64,
            seed,
        }
    }

    /// Three gratings at 0, pi/3 and 2 pi/3 with random phase and mild noise.
    pub fn gratings(seed: u64) -> Self {
        let grating = |theta| Recipe::Grating {
            theta,
            freq: 0.125,
            amplitude: 50.0,
            noise_sigma: 12.0,
            random_phase: true,
        };
        Self {
            recipes: vec![
                ClassRecipe::new("theta000", grating(0.0)),
                ClassRecipe::new("theta060", grating(PI / 3.0)),
                ClassRecipe::new("theta120", grating(2.0 * PI / 3.0)),
            ],
            per_class: 100,
            patch_side: 64,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.recipes.is_empty() {
            return Err(Error::invalid("synthetic corpus needs at least one recipe"));
        }
        if self.per_class == 0 {
            return Err(Error::invalid("per_class must be at least 1"));
        }
        let mut labels: Vec<&str> = self.recipes.iter().map(|r| r.label.as_str()).collect();
        labels.sort_unstable();
        if labels.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid("recipe labels must be unique"));
        }
        for r in &self.recipes {
            if r.label.is_empty()
                || !r
                    .label
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
            {
                return Err(Error::invalid(format!(
                    "unusable class label {:?}",
                    r.label
                )));
            }
            match r.recipe {
                Recipe::Grating {
                    freq,
                    amplitude,
                    noise_sigma,
                    theta,
                    ..
                } => {
                    if ![freq, amplitude, noise_sigma, theta]
                        .iter()
                        .all(|v| v.is_finite())
                        || freq <= 0.0
                        || noise_sigma < 0.0
                    {
                        return Err(Error::invalid(format!(
                            "bad grating recipe for {}",
                            r.label
                        )));
                    }
                }
                Recipe::Noise {
                    base,
                    roughness,
                    blur_radius,
                } => {
                    if !base.is_finite() || !roughness.is_finite() || roughness < 0.0 {
                        return Err(Error::invalid(format!("bad noise recipe for {}", r.label)));
                    }
                    if 2 * blur_radius + 1 > self.patch_side {
                        return Err(Error::invalid(format!(
                            "blur radius {blur_radius} too large for {}-pixel patches",
                            self.patch_side
                        )));
                    }
                }
            }
        }
        if self.patch_side < 8 {
            return Err(Error::invalid("patch side must be at least 8"));
        }
        Ok(())
    }
}

/// Renders one patch, drawing all randomness from `rng`.
pub fn render_patch(recipe: &Recipe, side: usize, rng: &mut SplitMix64) -> Result<GrayImage> {
    match *recipe {
        Recipe::Grating {
            theta,
            freq,
            amplitude,
            noise_sigma,
            random_phase,
        } => {
            let phase = if random_phase {
                2.0 * PI * rng.next_f64()
            } else {
                0.0
            };
            let (sin, cos) = theta.sin_cos();
            GrayImage::from_fn_clamped(side, side, |x, y| {
                let (x, y) = (x as f64, y as f64);
                let carrier = (2.0 * PI * freq * (x * cos + y * sin) + phase).sin();
                let noise = if noise_sigma > 0.0 {
                    noise_sigma * rng.gaussian()
                } else {
                    0.0
                };
                128.0 + amplitude * carrier + noise
            })
        }
        Recipe::Noise {
            base,
            roughness,
            blur_radius,
        } => {
            let field: Vec<f64> = (0..side * side)
                .map(|_| base + roughness * rng.gaussian())
                .collect();
            let mut field = RealMap::new(side, side, field)?;
            if blur_radius > 0 {
                let width = 2 * blur_radius + 1;
                let n = (width * width) as f64;
                let box_kernel = Kernel::new(width, vec![1.0 / n; width * width])?;
                field = convolve_same(field.view(), &box_kernel, Padding::Replicate)?;
            }
            GrayImage::from_fn_clamped(side, side, |x, y| field.get(x, y))
        }
    }
}

/// Writes `<out>/<class>/<class>_<nnnn>.pgm` for every patch plus
/// `<out>/manifest.csv`, and returns the manifest.
pub fn gen_corpus(cfg: &SynthConfig, out_dir: impl AsRef<Path>) -> Result<Manifest> {
    cfg.validate()?;
    let out_dir = out_dir.as_ref();
    let jobs: Vec<(usize, usize)> = (0..cfg.recipes.len())
        .flat_map(|c| (0..cfg.per_class).map(move |i| (c, i)))
        .collect();
    for r in &cfg.recipes {
        let dir = out_dir.join(&r.label);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    let entries = jobs
        .par_iter()
        .map(|&(c, i)| {
            let recipe = &cfg.recipes[c];
            let index = (c * cfg.per_class + i) as u64;
            let mut rng = SplitMix64::stream(cfg.seed, index);
            let patch = render_patch(&recipe.recipe, cfg.patch_side, &mut rng)?;
            let id = format!("{}_{i:04}", recipe.label);
            let rel = PathBuf::from(&recipe.label).join(format!("{id}.pgm"));
            save_pgm(&patch, out_dir.join(&rel))?;
            Ok(ManifestEntry {
                id,
                path: rel,
                label: recipe.label.clone(),
                crop: None,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let classes = cfg.recipes.iter().map(|r| r.label.clone()).collect();
    let manifest = Manifest::new(out_dir.to_path_buf(), classes, entries)?;
    write_manifest(out_dir.join("manifest.csv"), &manifest)?;
    Ok(manifest)
}

pub fn parse_recipes(text: &str) -> Result<Vec<ClassRecipe>> {
    let mut out = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let bad = |msg: String| Error::invalid(format!("recipe line {}: {msg}", lineno + 1));
        let mut tokens = line.split_whitespace();
        let label = tokens.next().expect("non-empty line");
        let kind = tokens
            .next()
            .ok_or_else(|| bad("missing recipe kind".into()))?;
        let mut kv = std::collections::BTreeMap::new();
        for tok in tokens {
            let (k, v) = tok
                .split_once('=')
                .ok_or_else(|| bad(format!("expected key=value, got {tok:?}")))?;
            kv.insert(k, v);
        }
        let mut take = |key: &str, default: Option<&str>| -> Result<String> {
            kv.remove(key)
                .or(default)
                .map(str::to_owned)
                .ok_or_else(|| bad(format!("missing {key}")))
        };
        let num = |s: String| {
            s.parse::<f64>()
                .map_err(|_| bad(format!("bad number {s:?}")))
        };
        let recipe = match kind {
            "grating" => Recipe::Grating {
                theta: num(take("theta", None)?)?,
                freq: num(take("freq", None)?)?,
                amplitude: num(take("amplitude", None)?)?,
                noise_sigma: num(take("noise", Some("0"))?)?,
                random_phase: take("random_phase", Some("false"))?
                    .parse()
                    .map_err(|_| bad("random_phase must be true or false".into()))?,
            },
            "noise" => Recipe::Noise {
                base: num(take("base", None)?)?,
                roughness: num(take("roughness", None)?)?,
                blur_radius: take("blur", Some("0"))?
                    .parse()
                    .map_err(|_| bad("blur must be a non-negative integer".into()))?,
            },
            other => return Err(bad(format!("unknown recipe kind {other:?}"))),
        };
        if let Some(extra) = kv.keys().next() {
            return Err(bad(format!("unknown key {extra:?}")));
        }
        out.push(ClassRecipe::new(label, recipe));
    }
    if out.is_empty() {
        return Err(Error::invalid("recipe file defines no classes"));
    }
    Ok(out)
}

pub fn load_recipes(path: impl AsRef<Path>) -> Result<Vec<ClassRecipe>> {
    parse_recipes(&read_to_string(path.as_ref())?)
}

pub fn recipes_to_text(recipes: &[ClassRecipe]) -> String {
    let mut out = String::new();
    for r in recipes {
        let line = match &r.recipe {
            Recipe::Grating {
                theta,
                freq,
                amplitude,
                noise_sigma,
                random_phase,
            } => format!(
                "{} grating theta={} freq={} amplitude={} noise={} random_phase={random_phase}",
                r.label,
                fmt_f64(*theta),
                fmt_f64(*freq),
                fmt_f64(*amplitude),
                fmt_f64(*noise_sigma)
            ),
            Recipe::Noise {
                base,
                roughness,
                blur_radius,
            } => format!(
                "{} noise base={} roughness={} blur={blur_radius}",
                r.label,
                fmt_f64(*base),
                fmt_f64(*roughness)
            ),
        };
        out.push_str(&line);
        out.push('\n');
    }
    out
}
