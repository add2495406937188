//! Brute-force reference implementations.
//!
//! Each oracle recomputes its result from scratch per output element with
//! explicit index arithmetic and shares no code with the fast paths it
//! checks. Summation orders are part of the contract:
//!
//! * [`oracle_convolve`]: per pixel, offsets `dy` then `dx` from `-half` to
//!   `+half`, accumulator starting at `0.0`.
//! * [`oracle_stddev`]: per pixel, window values gathered row-major, mean as
//!   their sum over `N`, then the sum of squared deviations over `N`.
//! * [`oracle_nn`]: per training sample, coordinates summed left to right.

use crate::classify::Prediction;
use crate::features::{FeatureVector, LabeledFeature};
use crate::filters::{Kernel, Padding};
use crate::imgio::{MapView, RealMap};

fn read(img: MapView<'_>, x: isize, y: isize, padding: Padding) -> f64 {
    let (w, h) = (img.width as isize, img.height as isize);
    match padding {
        Padding::Zero => {
            if x < 0 || y < 0 || x >= w || y >= h {
                0.0
            } else {
                img.values[(y * w + x) as usize]
            }
        }
        Padding::Replicate => {
            let cx = x.max(0).min(w - 1);
            let cy = y.max(0).min(h - 1);
            img.values[(cy * w + cx) as usize]
        }
    }
}

/// Quadruple-loop same-size convolution.
pub fn oracle_convolve(img: MapView<'_>, kernel: &Kernel, padding: Padding) -> RealMap {
    let half = kernel.half() as isize;
    let mut out = Vec::with_capacity(img.width * img.height);
    for y in 0..img.height as isize {
        for x in 0..img.width as isize {
            let mut acc = 0.0;
            for dy in -half..=half {
                for dx in -half..=half {
                    acc += kernel.at(dx, dy) * read(img, x - dx, y - dy, padding);
                }
            }
            out.push(acc);
        }
    }
    RealMap::new(img.width, img.height, out).expect("finite input gives finite output")
}

/// Population standard deviation recomputed for every window.
pub fn oracle_stddev(img: MapView<'_>, side: usize, padding: Padding) -> RealMap {
    let half = (side / 2) as isize;
    let mut out = Vec::with_capacity(img.width * img.height);
    for y in 0..img.height as isize {
        for x in 0..img.width as isize {
            let mut window = Vec::with_capacity(side * side);
            for dy in -half..=half {
                for dx in -half..=half {
                    window.push(read(img, x + dx, y + dy, padding));
                }
            }
            let n = window.len() as f64;
            let mut sum = 0.0;
            for v in &window {
                sum += v;
            }
            let mean = sum / n;
            let mut ss = 0.0;
            for v in &window {
                ss += (v - mean) * (v - mean);
            }
            out.push((ss / n).sqrt());
        }
    }
    RealMap::new(img.width, img.height, out).expect("finite input gives finite output")
}

/// Exhaustive k-nearest-neighbor scan.
///
/// Neighbors are picked one at a time as the unpicked sample with the
/// smallest `(distance, source id)`. The vote counts each label's
/// occurrences; ties go to the smaller summed distance, then the smaller label.
pub fn oracle_nn(train: &[LabeledFeature], query: &FeatureVector, k: usize) -> Prediction {
    let mut dist = Vec::with_capacity(train.len());
    for s in train {
        let a = s.feature.values();
        let b = query.values();
        assert_eq!(a.len(), b.len(), "oracle_nn needs equal dims");
        let mut d = 0.0;
        for i in 0..a.len() {
            d += (a[i] - b[i]).abs();
        }
        dist.push(d);
    }

    let mut picked = vec![false; train.len()];
    let mut order = Vec::with_capacity(k);
    for _ in 0..k.min(train.len()) {
        let mut best: Option<usize> = None;
        for i in 0..train.len() {
            if picked[i] {
                continue;
            }
            best = match best {
                None => Some(i),
                Some(j) => {
                    let closer = dist[i] < dist[j]
                        || (dist[i] == dist[j] && train[i].source < train[j].source);
                    Some(if closer { i } else { j })
                }
            };
        }
        let b = best.expect("k <= train size");
        picked[b] = true;
        order.push(b);
    }

    let mut labels: Vec<&str> = Vec::new();
    for &i in &order {
        if !labels.contains(&train[i].label.as_str()) {
            labels.push(&train[i].label);
        }
    }
    let mut winner = labels[0];
    let score = |label: &str| {
        let mut votes = 0;
        let mut total = 0.0;
        for &i in &order {
            if train[i].label == label {
                votes += 1;
                total += dist[i];
            }
        }
        (votes, total)
    };
    for &label in &labels[1..] {
        let (v, t) = score(label);
        let (wv, wt) = score(winner);
        if v > wv || (v == wv && (t < wt || (t == wt && label < winner))) {
            winner = label;
        }
    }

    Prediction {
        label: winner.to_owned(),
        neighbor_ids: order.iter().map(|&i| train[i].source.clone()).collect(),
        distances: order.iter().map(|&i| dist[i]).collect(),
    }
}
