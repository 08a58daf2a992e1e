//! Frame and depth raster I/O, color conversion and overlay rendering.
//!
//! Color frames are read from binary PPM (P6) or PNG files and carried in
//! both RGB (for byte-preserving output) and BT.601 full-range YUV (for
//! everything downstream). Depth rasters are 16-bit binary PGM (P5) in
//! millimeters; zero marks an invalid return.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Mask, Point, Rect};

/// Largest depth accepted as valid, in millimeters.
pub const MAX_DEPTH_MM: u16 = 10_000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub index: usize,
    pub width: usize,
    pub height: usize,
    pub rgb: Vec<[u8; 3]>,
    pub yuv: Vec<[u8; 3]>,
    pub source_path: String,
}

impl Frame {
    pub fn from_rgb(index: usize, width: usize, height: usize, rgb: Vec<[u8; 3]>) -> Result<Self> {
        if width == 0 || height == 0 || rgb.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "{} pixels for a {width}x{height} frame",
                rgb.len()
            )));
        }
        let yuv = rgb.iter().map(|&[r, g, b]| convert_rgb_to_yuv(r, g, b)).collect();
        Ok(Self {
            index,
            width,
            height,
            rgb,
            yuv,
            source_path: String::new(),
        })
    }

    #[inline]
    pub fn yuv_at(&self, x: usize, y: usize) -> [u8; 3] {
        self.yuv[y * self.width + x]
    }

    /// Luma plane scaled to `0.0..=1.0`.
    pub fn luma(&self) -> Vec<f32> {
        self.yuv.iter().map(|p| p[0] as f32 / 255.0).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DepthRaster {
    pub width: usize,
    pub height: usize,
    pub z: Vec<u16>,
}

impl DepthRaster {
    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u16 {
        self.z[y * self.width + x]
    }

    /// Median of the valid depths in the `size × size` window centered on
    /// `(x, y)`, optionally restricted to pixels where `support` is set.
    pub fn median_in_window(&self, x: i32, y: i32, size: i32, support: Option<&Mask>) -> Option<u16> {
        let half = size / 2;
        let mut values = Vec::with_capacity((size * size) as usize);
        for yy in y - half..=y + half {
            for xx in x - half..=x + half {
                if xx < 0 || yy < 0 || xx as usize >= self.width || yy as usize >= self.height {
                    continue;
                }
                if let Some(s) = support {
                    if !s.get(xx as usize, yy as usize) {
                        continue;
                    }
                }
                let z = self.get(xx as usize, yy as usize);
                if z > 0 {
                    values.push(z);
                }
            }
        }
        if values.is_empty() {
            return None;
        }
        values.sort_unstable();
        Some(values[(values.len() - 1) / 2])
    }
}

/// BT.601 full-range RGB to YUV, rounded and clamped to `0..=255`.
pub fn convert_rgb_to_yuv(r: u8, g: u8, b: u8) -> [u8; 3] {
    let (r, g, b) = (r as f64, g as f64, b as f64);
    let y = 0.299 * r + 0.587 * g + 0.114 * b;
    let u = -0.168_736 * r - 0.331_264 * g + 0.5 * b + 128.0;
    let v = 0.5 * r - 0.418_688 * g - 0.081_312 * b + 128.0;
    [clamp_u8(y), clamp_u8(u), clamp_u8(v)]
}

/// Inverse of [`convert_rgb_to_yuv`] (exact up to rounding and clamping).
pub fn convert_yuv_to_rgb(y: u8, u: u8, v: u8) -> [u8; 3] {
    let (y, u, v) = (y as f64, u as f64 - 128.0, v as f64 - 128.0);
    let r = y + 1.402 * v;
    let g = y - 0.344_136 * u - 0.714_136 * v;
    let b = y + 1.772 * u;
    [clamp_u8(r), clamp_u8(g), clamp_u8(b)]
}

#[inline]
fn clamp_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

fn glob_match(pattern: &[u8], name: &[u8]) -> bool {
    match (pattern.first(), name.first()) {
        (None, None) => true,
        (Some(b'*'), _) => {
            glob_match(&pattern[1..], name) || (!name.is_empty() && glob_match(pattern, &name[1..]))
        }
        (Some(b'?'), Some(_)) => glob_match(&pattern[1..], &name[1..]),
        (Some(p), Some(n)) if p == n => glob_match(&pattern[1..], &name[1..]),
        _ => false,
    }
}

/// Numeric value of the last run of digits in the file stem.
fn numeric_suffix(path: &Path) -> Option<u64> {
    let stem = path.file_stem()?.to_str()?;
    let end = stem.rfind(|c: char| c.is_ascii_digit())? + 1;
    let start = stem[..end]
        .rfind(|c: char| !c.is_ascii_digit())
        .map_or(0, |i| i + 1);
    stem[start..end].parse().ok()
}

/// Lists files in `dir` whose names match the glob `pattern`, ordered by
/// numeric suffix with lexicographic tie-breaking.
pub fn list_sequence(dir: &Path, pattern: &str) -> Result<Vec<PathBuf>> {
    let mut paths = Vec::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if !path.is_file() {
            continue;
        }
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
            continue;
        };
        if glob_match(pattern.as_bytes(), name.as_bytes()) {
            paths.push(path);
        }
    }
    paths.sort_by(|a, b| {
        numeric_suffix(a)
            .cmp(&numeric_suffix(b))
            .then_with(|| a.file_name().cmp(&b.file_name()))
    });
    Ok(paths)
}

/// Loads every color frame in `directory` matching `pattern` (e.g. `frame_*`).
pub fn load_frame_sequence(directory: &Path, pattern: &str) -> Result<Vec<Frame>> {
    let paths = list_sequence(directory, pattern)?;
    if paths.is_empty() {
        return Err(Error::NoMatch {
            dir: directory.to_path_buf(),
            pattern: pattern.to_string(),
        });
    }
    let mut frames: Vec<Frame> = Vec::with_capacity(paths.len());
    for (index, path) in paths.iter().enumerate() {
        let frame = load_frame(path, index)?;
        if let Some(first) = frames.first() {
            if (first.width, first.height) != (frame.width, frame.height) {
                return Err(Error::DimensionMismatch(format!(
                    "{} is {}x{}, expected {}x{}",
                    path.display(),
                    frame.width,
                    frame.height,
                    first.width,
                    first.height
                )));
            }
        }
        frames.push(frame);
    }
    Ok(frames)
}

/// Loads one PPM (P6) or PNG color frame.
pub fn load_frame(path: &Path, index: usize) -> Result<Frame> {
    let bytes = fs::read(path)?;
    let decode_err = |reason: String| Error::Decode {
        path: path.to_path_buf(),
        reason,
    };
    let (width, height, rgb) = if bytes.starts_with(b"P6") {
        decode_ppm(&bytes).map_err(decode_err)?
    } else if bytes.starts_with(&[0x89, b'P', b'N', b'G']) {
        decode_png(&bytes).map_err(decode_err)?
    } else {
        return Err(decode_err("not a P6 PPM or PNG file".into()));
    };
    let mut frame = Frame::from_rgb(index, width, height, rgb)?;
    frame.source_path = path.display().to_string();
    Ok(frame)
}

/// Splits a netpbm header into `count` tokens, skipping comments; returns
/// the tokens and the offset of the first raster byte.
fn netpbm_header(bytes: &[u8], count: usize) -> Result<(Vec<String>, usize), String> {
    let mut tokens = Vec::with_capacity(count);
    let mut i = 0;
    while tokens.len() < count {
        while i < bytes.len() && (bytes[i].is_ascii_whitespace() || bytes[i] == b'#') {
            if bytes[i] == b'#' {
                while i < bytes.len() && bytes[i] != b'\n' {
                    i += 1;
                }
            } else {
                i += 1;
            }
        }
        let start = i;
        while i < bytes.len() && !bytes[i].is_ascii_whitespace() && bytes[i] != b'#' {
            i += 1;
        }
        if start == i {
            return Err("truncated header".into());
        }
        tokens.push(String::from_utf8_lossy(&bytes[start..i]).into_owned());
    }
    // exactly one whitespace byte separates the header from the raster
    if i >= bytes.len() || !bytes[i].is_ascii_whitespace() {
        return Err("missing raster".into());
    }
    Ok((tokens, i + 1))
}

fn parse_dim(token: &str, what: &str) -> Result<usize, String> {
    token
        .parse::<usize>()
        .map_err(|_| format!("bad {what} `{token}`"))
}

fn decode_ppm(bytes: &[u8]) -> Result<(usize, usize, Vec<[u8; 3]>), String> {
    let (tokens, offset) = netpbm_header(bytes, 4)?;
    let width = parse_dim(&tokens[1], "width")?;
    let height = parse_dim(&tokens[2], "height")?;
    let maxval = parse_dim(&tokens[3], "maxval")?;
    if maxval != 255 {
        return Err(format!("unsupported maxval {maxval}"));
    }
    let n = width * height;
    let raster = &bytes[offset..];
    if width == 0 || height == 0 || raster.len() < n * 3 {
        return Err(format!("raster too short for {width}x{height}"));
    }
    Ok((width, height, raster[..n * 3].chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect()))
}

fn decode_png(bytes: &[u8]) -> Result<(usize, usize, Vec<[u8; 3]>), String> {
    let mut decoder = png::Decoder::new(std::io::Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
    let mut reader = decoder.read_info().map_err(|e| e.to_string())?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| "image too large".to_string())?;
    let mut buf = vec![0; size];
    let info = reader.next_frame(&mut buf).map_err(|e| e.to_string())?;
    let (w, h) = (info.width as usize, info.height as usize);
    let data = &buf[..info.buffer_size()];
    let rgb = match info.color_type {
        png::ColorType::Rgb => data.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect(),
        png::ColorType::Rgba => data.chunks_exact(4).map(|c| [c[0], c[1], c[2]]).collect(),
        png::ColorType::Grayscale => data.iter().map(|&g| [g, g, g]).collect(),
        png::ColorType::GrayscaleAlpha => data.chunks_exact(2).map(|c| [c[0], c[0], c[0]]).collect(),
        png::ColorType::Indexed => return Err("indexed PNG was not expanded".into()),
    };
    Ok((w, h, rgb))
}

/// Loads a 16-bit binary PGM depth raster; values above 10 m become 0.
pub fn load_depth_raster(path: &Path) -> Result<DepthRaster> {
    let bytes = fs::read(path)?;
    let decode_err = |reason: String| Error::Decode {
        path: path.to_path_buf(),
        reason,
    };
    if !bytes.starts_with(b"P5") {
        return Err(decode_err("not a P5 PGM file".into()));
    }
    let (tokens, offset) = netpbm_header(&bytes, 4).map_err(decode_err)?;
    let width = parse_dim(&tokens[1], "width").map_err(decode_err)?;
    let height = parse_dim(&tokens[2], "height").map_err(decode_err)?;
    let maxval = parse_dim(&tokens[3], "maxval").map_err(decode_err)?;
    if maxval != 65535 {
        return Err(decode_err(format!("expected maxval 65535, got {maxval}")));
    }
    let n = width * height;
    let raster = &bytes[offset..];
    if width == 0 || height == 0 || raster.len() < n * 2 {
        return Err(decode_err(format!("raster too short for {width}x{height}")));
    }
    let z = raster[..n * 2]
        .chunks_exact(2)
        .map(|c| {
            let v = u16::from_be_bytes([c[0], c[1]]);
            if v > MAX_DEPTH_MM {
                0
            } else {
                v
            }
        })
        .collect();
    Ok(DepthRaster { width, height, z })
}

pub fn write_depth_raster(depth: &DepthRaster, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    write!(out, "P5\n{} {}\n65535\n", depth.width, depth.height)?;
    for &v in &depth.z {
        out.write_all(&v.to_be_bytes())?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_ppm(width: usize, height: usize, rgb: &[[u8; 3]], path: &Path) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    write!(out, "P6\n{width} {height}\n255\n")?;
    for px in rgb {
        out.write_all(px)?;
    }
    out.flush()?;
    Ok(())
}

/// Writes a mask as binary PBM (P4); set pixels are black (1).
pub fn write_pbm(mask: &Mask, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    write!(out, "P4\n{} {}\n", mask.width, mask.height)?;
    let row_bytes = mask.width.div_ceil(8);
    for y in 0..mask.height {
        let mut row = vec![0u8; row_bytes];
        for x in 0..mask.width {
            if mask.get(x, y) {
                row[x / 8] |= 0x80 >> (x % 8);
            }
        }
        out.write_all(&row)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_pbm(path: &Path) -> Result<Mask> {
    let bytes = fs::read(path)?;
    let decode_err = |reason: String| Error::Decode {
        path: path.to_path_buf(),
        reason,
    };
    if !bytes.starts_with(b"P4") {
        return Err(decode_err("not a P4 PBM file".into()));
    }
    let (tokens, offset) = netpbm_header(&bytes, 3).map_err(decode_err)?;
    let width = parse_dim(&tokens[1], "width").map_err(decode_err)?;
    let height = parse_dim(&tokens[2], "height").map_err(decode_err)?;
    let row_bytes = width.div_ceil(8);
    let raster = &bytes[offset..];
    if raster.len() < row_bytes * height {
        return Err(decode_err("raster too short".into()));
    }
    Ok(Mask::from_fn(width, height, |x, y| {
        raster[y * row_bytes + x / 8] & (0x80 >> (x % 8)) != 0
    }))
}

/// Something to draw over a frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shape {
    /// Rotated ellipse; `angle` is the major-axis direction in radians.
    Ellipse {
        center: (f64, f64),
        semi_axes: (f64, f64),
        angle: f64,
    },
    Rectangle { rect: Rect },
    Polyline { points: Vec<Point>, closed: bool },
    Text { at: Point, text: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlayItem {
    pub shape: Shape,
    pub label: String,
}

impl OverlayItem {
    pub fn new(shape: Shape, label: impl Into<String>) -> Self {
        Self {
            shape,
            label: label.into(),
        }
    }
}

/// Fixed palette keyed by overlay label.
pub fn palette_color(label: &str) -> [u8; 3] {
    match label {
        "head" => [255, 255, 0],
        "torso" => [255, 0, 0],
        "armL" | "armR" => [0, 255, 0],
        "leg1" | "leg2" | "leg3" | "leg4" => [0, 128, 255],
        "person" => [255, 255, 255],
        "box" => [255, 200, 0],
        "tracked_box" => [255, 0, 0],
        "event" => [255, 0, 255],
        _ => [255, 255, 0],
    }
}

struct Canvas<'a> {
    width: usize,
    height: usize,
    rgb: &'a mut [[u8; 3]],
    color: [u8; 3],
}

impl Canvas<'_> {
    fn plot(&mut self, x: i32, y: i32) {
        if x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height {
            self.rgb[y as usize * self.width + x as usize] = self.color;
        }
    }

    fn line(&mut self, a: Point, b: Point) {
        let (mut x, mut y) = (a.x, a.y);
        let dx = (b.x - a.x).abs();
        let dy = -(b.y - a.y).abs();
        let sx = if a.x < b.x { 1 } else { -1 };
        let sy = if a.y < b.y { 1 } else { -1 };
        let mut err = dx + dy;
        loop {
            self.plot(x, y);
            if x == b.x && y == b.y {
                break;
            }
            let e2 = 2 * err;
            if e2 >= dy {
                err += dy;
                x += sx;
            }
            if e2 <= dx {
                err += dx;
                y += sy;
            }
        }
    }

    fn ellipse(&mut self, center: (f64, f64), semi_axes: (f64, f64), angle: f64) {
        let (a, b) = semi_axes;
        // sample finely enough that consecutive samples are < 0.5 px apart
        let steps = ((2.0 * std::f64::consts::PI * a.max(b).max(1.0)) * 4.0).ceil() as usize;
        let (s, c) = angle.sin_cos();
        for i in 0..steps {
            let t = i as f64 * 2.0 * std::f64::consts::PI / steps as f64;
            let (ex, ey) = (a * t.cos(), b * t.sin());
            let x = center.0 + ex * c - ey * s;
            let y = center.1 + ex * s + ey * c;
            self.plot(x.round() as i32, y.round() as i32);
        }
    }

    fn text(&mut self, at: Point, text: &str) {
        for (i, ch) in text.chars().enumerate() {
            let Some(rows) = glyph(ch) else { continue };
            let ox = at.x + 4 * i as i32;
            for (ry, row) in rows.iter().enumerate() {
                for rx in 0..3 {
                    if row & (0b100 >> rx) != 0 {
                        self.plot(ox + rx, at.y + ry as i32);
                    }
                }
            }
        }
    }
}

/// 3×5 bitmap glyphs; lowercase letters render as uppercase.
fn glyph(ch: char) -> Option<[u8; 5]> {
    Some(match ch.to_ascii_uppercase() {
        '0' => [0b111, 0b101, 0b101, 0b101, 0b111],
        '1' => [0b010, 0b110, 0b010, 0b010, 0b111],
        '2' => [0b111, 0b001, 0b111, 0b100, 0b111],
        '3' => [0b111, 0b001, 0b111, 0b001, 0b111],
        '4' => [0b101, 0b101, 0b111, 0b001, 0b001],
        '5' => [0b111, 0b100, 0b111, 0b001, 0b111],
        '6' => [0b111, 0b100, 0b111, 0b101, 0b111],
        '7' => [0b111, 0b001, 0b001, 0b001, 0b001],
        '8' => [0b111, 0b101, 0b111, 0b101, 0b111],
        '9' => [0b111, 0b101, 0b111, 0b001, 0b111],
        'A' => [0b010, 0b101, 0b111, 0b101, 0b101],
        'B' => [0b110, 0b101, 0b110, 0b101, 0b110],
        'C' => [0b011, 0b100, 0b100, 0b100, 0b011],
        'D' => [0b110, 0b101, 0b101, 0b101, 0b110],
        'E' => [0b111, 0b100, 0b110, 0b100, 0b111],
        'F' => [0b111, 0b100, 0b110, 0b100, 0b100],
        'G' => [0b011, 0b100, 0b101, 0b101, 0b011],
        'H' => [0b101, 0b101, 0b111, 0b101, 0b101],
        'I' => [0b111, 0b010, 0b010, 0b010, 0b111],
        'J' => [0b001, 0b001, 0b001, 0b101, 0b010],
        'K' => [0b101, 0b101, 0b110, 0b101, 0b101],
        'L' => [0b100, 0b100, 0b100, 0b100, 0b111],
        'M' => [0b101, 0b111, 0b111, 0b101, 0b101],
        'N' => [0b110, 0b101, 0b101, 0b101, 0b101],
        'O' => [0b010, 0b101, 0b101, 0b101, 0b010],
        'P' => [0b110, 0b101, 0b110, 0b100, 0b100],
        'Q' => [0b010, 0b101, 0b101, 0b110, 0b011],
        'R' => [0b110, 0b101, 0b110, 0b101, 0b101],
        'S' => [0b011, 0b100, 0b010, 0b001, 0b110],
        'T' => [0b111, 0b010, 0b010, 0b010, 0b010],
        'U' => [0b101, 0b101, 0b101, 0b101, 0b111],
        'V' => [0b101, 0b101, 0b101, 0b101, 0b010],
        'W' => [0b101, 0b101, 0b111, 0b111, 0b101],
        'X' => [0b101, 0b101, 0b010, 0b101, 0b101],
        'Y' => [0b101, 0b101, 0b010, 0b010, 0b010],
        'Z' => [0b111, 0b001, 0b010, 0b100, 0b111],
        '.' => [0b000, 0b000, 0b000, 0b000, 0b010],
        ':' => [0b000, 0b010, 0b000, 0b010, 0b000],
        '-' => [0b000, 0b000, 0b111, 0b000, 0b000],
        '=' => [0b000, 0b111, 0b000, 0b111, 0b000],
        _ => return None,
    })
}

/// Rasterizes `overlays` onto a copy of the frame's RGB pixels.
pub fn render_overlays(frame: &Frame, overlays: &[OverlayItem]) -> Vec<[u8; 3]> {
    let mut rgb = frame.rgb.clone();
    for item in overlays {
        let mut canvas = Canvas {
            width: frame.width,
            height: frame.height,
            rgb: &mut rgb,
            color: palette_color(&item.label),
        };
        match &item.shape {
            Shape::Ellipse {
                center,
                semi_axes,
                angle,
            } => canvas.ellipse(*center, *semi_axes, *angle),
            Shape::Rectangle { rect } => {
                if rect.is_empty() {
                    continue;
                }
                let (x0, y0) = (rect.x, rect.y);
                let (x1, y1) = (rect.right() - 1, rect.bottom() - 1);
                canvas.line(Point::new(x0, y0), Point::new(x1, y0));
                canvas.line(Point::new(x1, y0), Point::new(x1, y1));
                canvas.line(Point::new(x1, y1), Point::new(x0, y1));
                canvas.line(Point::new(x0, y1), Point::new(x0, y0));
            }
            Shape::Polyline { points, closed } => {
                for pair in points.windows(2) {
                    canvas.line(pair[0], pair[1]);
                }
                if *closed && points.len() > 1 {
                    canvas.line(points[points.len() - 1], points[0]);
                }
                if points.len() == 1 {
                    canvas.plot(points[0].x, points[0].y);
                }
            }
            Shape::Text { at, text } => canvas.text(*at, text),
        }
    }
    rgb
}

/// Writes the frame with `overlays` drawn on top as a binary PPM.
pub fn write_annotated_frame(frame: &Frame, overlays: &[OverlayItem], path: &Path) -> Result<()> {
    let rgb = render_overlays(frame, overlays);
    write_ppm(frame.width, frame.height, &rgb, path)
}
