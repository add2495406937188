//! Image containers, decoding, grayscale conversion and patch cropping.

use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use crate::error::{Error, Result};
use crate::fsutil::write_atomic;

/// Row-major grid of grayscale intensities in `[0, 255]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid(format!(
                "image dimensions must be positive, got {width}x{height}"
            )));
        }
        if pixels.len() != width * height {
            return Err(Error::invalid(format!(
                "{width}x{height} image needs {} pixels, got {}",
                width * height,
                pixels.len()
            )));
        }
        if let Some(bad) = pixels.iter().find(|v| !(0.0..=255.0).contains(*v)) {
            return Err(Error::invalid(format!("intensity {bad} outside [0, 255]")));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    /// Builds an image from `f(x, y)`, clamping each value into `[0, 255]`.
    pub fn from_fn_clamped(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self> {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                let v = f(x, y);
                if !v.is_finite() {
                    return Err(Error::invalid(format!(
                        "non-finite intensity at ({x}, {y})"
                    )));
                }
                pixels.push(v.clamp(0.0, 255.0));
            }
        }
        Self::new(width, height, pixels)
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    pub fn view(&self) -> MapView<'_> {
        MapView {
            width: self.width,
            height: self.height,
            values: &self.pixels,
        }
    }
}

/// Row-major 2-D grid of arbitrary finite reals, e.g. a filter response.
#[derive(Debug, Clone, PartialEq)]
pub struct RealMap {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl RealMap {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || values.len() != width * height {
            return Err(Error::invalid(format!(
                "{width}x{height} map with {} values",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("map contains non-finite values"));
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub(crate) fn from_parts(width: usize, height: usize, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), width * height);
        Self {
            width,
            height,
            values,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn view(&self) -> MapView<'_> {
        MapView {
            width: self.width,
            height: self.height,
            values: &self.values,
        }
    }
}

impl From<GrayImage> for RealMap {
    fn from(img: GrayImage) -> Self {
        RealMap::from_parts(img.width, img.height, img.pixels)
    }
}

/// Borrowed row-major grid accepted by the filters.
#[derive(Debug, Clone, Copy)]
pub struct MapView<'a> {
    pub width: usize,
    pub height: usize,
    pub values: &'a [f64],
}

impl MapView<'_> {
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }
}

/// Row-major 8-bit RGB pixels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    pixels: Vec<[u8; 3]>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, pixels: Vec<[u8; 3]>) -> Result<Self> {
        if width == 0 || height == 0 || pixels.len() != width * height {
            return Err(Error::invalid(format!(
                "{width}x{height} RGB image with {} pixels",
                pixels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[[u8; 3]] {
        &self.pixels
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Image {
    Rgb(RgbImage),
    Gray(GrayImage),
}

impl Image {
    pub fn into_gray(self) -> GrayImage {
        match self {
            Image::Rgb(rgb) => to_grayscale(&rgb),
            Image::Gray(g) => g,
        }
    }
}

/// Decodes a PNG or binary PGM (`P5`) file, choosing by magic bytes.
pub fn load_image(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(b"P5") {
        decode_pgm(&bytes, path).map(Image::Gray)
    } else if bytes.starts_with(b"\x89PNG\r\n\x1a\n") {
        decode_png(path)
    } else {
        Err(Error::UnsupportedFormat {
            path: path.to_path_buf(),
            reason: "expected PNG or binary PGM (P5)".into(),
        })
    }
}

/// [`load_image`] followed by grayscale conversion when needed.
pub fn load_gray(path: impl AsRef<Path>) -> Result<GrayImage> {
    load_image(path).map(Image::into_gray)
}

/// Parses a binary PGM: `P5`, ASCII width, height and maxval 255 separated by
/// whitespace (with optional `#` comments), one whitespace byte, then raw
/// row-major bytes.
pub fn decode_pgm(bytes: &[u8], path: &Path) -> Result<GrayImage> {
    if !bytes.starts_with(b"P5") {
        return Err(Error::UnsupportedFormat {
            path: path.to_path_buf(),
            reason: "missing P5 magic".into(),
        });
    }
    let mut pos = 2;
    let mut header = [0usize; 3];
    for (slot, name) in header.iter_mut().zip(["width", "height", "maxval"]) {
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(Error::corrupt(
                path,
                format!("missing {name} in PGM header"),
            ));
        }
        *slot = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::corrupt(path, format!("bad {name} in PGM header")))?;
    }
    let [width, height, maxval] = header;
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(Error::corrupt(path, "missing whitespace after PGM header"));
    }
    pos += 1;
    if maxval != 255 {
        return Err(Error::UnsupportedFormat {
            path: path.to_path_buf(),
            reason: format!("PGM maxval {maxval}, only 255 is supported"),
        });
    }
    if width == 0 || height == 0 {
        return Err(Error::corrupt(path, "zero PGM dimension"));
    }
    let payload = &bytes[pos..];
    let need = width
        .checked_mul(height)
        .ok_or_else(|| Error::corrupt(path, "PGM dimensions overflow"))?;
    if payload.len() < need {
        return Err(Error::corrupt(
            path,
            format!("truncated PGM payload: {} of {need} bytes", payload.len()),
        ));
    }
    let pixels = payload[..need].iter().map(|&b| f64::from(b)).collect();
    GrayImage::new(width, height, pixels)
}

/// Encodes as binary PGM, rounding intensities to the nearest byte.
pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend(img.pixels.iter().map(|v| v.round().clamp(0.0, 255.0) as u8));
    out
}

pub fn save_pgm(img: &GrayImage, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), &encode_pgm(img))
}

fn decode_png(path: &Path) -> Result<Image> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut decoder = png::Decoder::new(BufReader::new(file));
    decoder.set_transformations(png::Transformations::normalize_to_color8());
    let mut reader = decoder
        .read_info()
        .map_err(|e| Error::corrupt(path, e.to_string()))?;
    let mut buf = vec![
        0;
        reader
            .output_buffer_size()
            .ok_or_else(|| Error::corrupt(path, "PNG too large"))?
    ];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| Error::corrupt(path, e.to_string()))?;
    let (width, height) = (info.width as usize, info.height as usize);
    let data = &buf[..info.buffer_size()];
    let channels = info.color_type.samples();
    let rows = data.chunks_exact(info.line_size).take(height);
    match info.color_type {
        png::ColorType::Grayscale | png::ColorType::GrayscaleAlpha => {
            let pixels = rows
                .flat_map(|row| {
                    row.chunks_exact(channels)
                        .take(width)
                        .map(|p| f64::from(p[0]))
                })
                .collect();
            GrayImage::new(width, height, pixels).map(Image::Gray)
        }
        png::ColorType::Rgb | png::ColorType::Rgba => {
            let pixels = rows
                .flat_map(|row| {
                    row.chunks_exact(channels)
                        .take(width)
                        .map(|p| [p[0], p[1], p[2]])
                })
                .collect();
            RgbImage::new(width, height, pixels).map(Image::Rgb)
        }
        png::ColorType::Indexed => Err(Error::UnsupportedFormat {
            path: path.to_path_buf(),
            reason: "indexed PNG was not expanded".into(),
        }),
    }
}

/// BT.601 luma `0.299 r + 0.587 g + 0.114 b`, kept unrounded.
///
/// Evaluated in integer thousandths so that gray triples map back to their
/// exact value and white maps to exactly 255.
pub fn to_grayscale(img: &RgbImage) -> GrayImage {
    let pixels = img
        .pixels
        .iter()
        .map(|&[r, g, b]| {
            let milli = 299 * u32::from(r) + 587 * u32::from(g) + 114 * u32::from(b);
            f64::from(milli) / 1000.0
        })
        .collect();
    GrayImage {
        width: img.width,
        height: img.height,
        pixels,
    }
}

/// Copies the `side` x `side` block whose top-left corner is `(x0, y0)`.
pub fn crop_patch(img: &GrayImage, x0: usize, y0: usize, side: usize) -> Result<GrayImage> {
    let fits = side >= 1
        && x0.checked_add(side).is_some_and(|e| e <= img.width)
        && y0.checked_add(side).is_some_and(|e| e <= img.height);
    if !fits {
        return Err(Error::invalid(format!(
            "crop ({x0}, {y0}, side {side}) exceeds {}x{} image",
            img.width, img.height
        )));
    }
    let pixels = (y0..y0 + side)
        .flat_map(|y| {
            img.pixels[y * img.width + x0..y * img.width + x0 + side]
                .iter()
                .copied()
        })
        .collect();
    Ok(GrayImage {
        width: side,
        height: side,
        pixels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tmpdir() -> tempfile::TempDir {
        tempfile::tempdir().unwrap()
    }

    #[test]
    fn decodes_hand_written_pgm() {
        let dir = tmpdir();
        let path = dir.path().join("a.pgm");
        std::fs::write(&path, b"P5\n2 2\n255\n\x00\xff\x80\x07").unwrap();
        let img = load_image(&path).unwrap();
        let Image::Gray(g) = img else {
            panic!("expected gray")
        };
        assert_eq!((g.width(), g.height()), (2, 2));
        assert_eq!(g.pixels(), &[0.0, 255.0, 128.0, 7.0]);
    }

    #[test]
    fn pgm_header_comments_are_skipped() {
        let img = decode_pgm(b"P5 # made by hand\n1 1 255\n\x2a", Path::new("x")).unwrap();
        assert_eq!(img.pixels(), &[42.0]);
    }

    #[test]
    fn truncated_pgm_names_path() {
        let dir = tmpdir();
        let path = dir.path().join("short.pgm");
        std::fs::write(&path, b"P5\n2 2\n255\n\x00\xff").unwrap();
        let err = load_image(&path).unwrap_err();
        assert!(matches!(err, Error::Corrupt { .. }));
        assert!(err.to_string().contains("short.pgm"), "{err}");
    }

    #[test]
    fn rejects_non_255_maxval_and_unknown_formats() {
        let err = decode_pgm(b"P5\n1 1\n65535\n\x00\x00", Path::new("x")).unwrap_err();
        assert!(matches!(err, Error::UnsupportedFormat { .. }));
        let dir = tmpdir();
        let path = dir.path().join("a.bmp");
        std::fs::write(&path, b"BM....").unwrap();
        assert!(matches!(
            load_image(&path).unwrap_err(),
            Error::UnsupportedFormat { .. }
        ));
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = load_image("/nonexistent/definitely.pgm").unwrap_err();
        assert!(err.is_io());
    }

    fn write_png(path: &Path, w: u32, h: u32, color: png::ColorType, data: &[u8]) {
        let file = File::create(path).unwrap();
        let mut enc = png::Encoder::new(std::io::BufWriter::new(file), w, h);
        enc.set_color(color);
        enc.set_depth(png::BitDepth::Eight);
        enc.write_header().unwrap().write_image_data(data).unwrap();
    }

    #[test]
    fn decodes_single_white_rgb_png() {
        let dir = tmpdir();
        let path = dir.path().join("w.png");
        write_png(&path, 1, 1, png::ColorType::Rgb, &[255, 255, 255]);
        let Image::Rgb(rgb) = load_image(&path).unwrap() else {
            panic!("expected rgb")
        };
        assert_eq!(rgb.pixels(), &[[255, 255, 255]]);
    }

    #[test]
    fn png_alpha_is_dropped_and_gray_stays_gray() {
        let dir = tmpdir();
        let path = dir.path().join("rgba.png");
        write_png(&path, 2, 1, png::ColorType::Rgba, &[1, 2, 3, 9, 4, 5, 6, 0]);
        let Image::Rgb(rgb) = load_image(&path).unwrap() else {
            panic!()
        };
        assert_eq!(rgb.pixels(), &[[1, 2, 3], [4, 5, 6]]);

        let path = dir.path().join("g.png");
        write_png(&path, 2, 2, png::ColorType::Grayscale, &[0, 10, 20, 30]);
        let g = load_gray(&path).unwrap();
        assert_eq!(g.pixels(), &[0.0, 10.0, 20.0, 30.0]);
    }

    #[test]
    fn grayscale_examples() {
        let rgb = RgbImage::new(3, 1, vec![[255, 255, 255], [0, 0, 0], [255, 0, 0]]).unwrap();
        let g = to_grayscale(&rgb);
        assert_eq!(g.pixels(), &[255.0, 0.0, 76.245]);
    }

    #[test]
    fn crop_examples() {
        let img = GrayImage::new(4, 4, (0..16).map(f64::from).collect()).unwrap();
        assert_eq!(crop_patch(&img, 0, 0, 4).unwrap(), img);
        let c = crop_patch(&img, 1, 1, 2).unwrap();
        assert_eq!(c.pixels(), &[5.0, 6.0, 9.0, 10.0]);

        let big = GrayImage::filled(100, 100, 1.0).unwrap();
        assert!(crop_patch(&big, 60, 60, 64).is_err());
        assert!(crop_patch(&big, 0, 0, 0).is_err());
    }

    #[test]
    fn gray_image_rejects_out_of_range() {
        assert!(GrayImage::new(1, 1, vec![256.0]).is_err());
        assert!(GrayImage::new(1, 1, vec![f64::NAN]).is_err());
        assert!(GrayImage::new(2, 1, vec![1.0]).is_err());
    }

    proptest! {
        #[test]
        fn grayscale_is_convex(r: u8, g: u8, b: u8) {
            let v = to_grayscale(&RgbImage::new(1, 1, vec![[r, g, b]]).unwrap()).pixels()[0];
            let lo = f64::from(r.min(g).min(b));
            let hi = f64::from(r.max(g).max(b));
            prop_assert!(v >= lo && v <= hi);
        }

        #[test]
        fn gray_triples_map_to_themselves(v: u8) {
            let g = to_grayscale(&RgbImage::new(1, 1, vec![[v, v, v]]).unwrap());
            prop_assert_eq!(g.pixels()[0], f64::from(v));
        }

        #[test]
        fn recrop_is_idempotent(w in 1usize..20, h in 1usize..20, seed: u64, a in 0usize..20, b in 0usize..20, s in 1usize..20) {
            let mut rng = crate::rng::SplitMix64::new(seed);
            let img = GrayImage::from_fn_clamped(w, h, |_, _| rng.below(256) as f64).unwrap();
            if let Ok(c) = crop_patch(&img, a, b, s) {
                prop_assert_eq!(crop_patch(&c, 0, 0, s).unwrap(), c);
            }
        }

        #[test]
        fn pgm_round_trips(w in 1usize..16, h in 1usize..16, bytes in proptest::collection::vec(any::<u8>(), 256)) {
            let mut file = format!("P5\n{w} {h}\n255\n").into_bytes();
            file.extend_from_slice(&bytes[..w * h]);
            let img = decode_pgm(&file, Path::new("p")).unwrap();
            prop_assert_eq!(encode_pgm(&img), file);
        }
    }
}
