//! Binary rasters, morphology on pixel sets, distance transforms and
//! PNG/PGM input/output.
//!
//! A [`BinaryImage`] stores raw `{0, 1}` values. Two roles share the
//! storage: line drawings and contours use `0` for a pen stroke and `1` for
//! blank paper, while foreground masks use `1` for covered pixels. Every
//! function taking an image states which role it expects.

use std::collections::VecDeque;
use std::io::{Cursor, Read, Write};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BinaryImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl BinaryImage {
    pub fn new(width: usize, height: usize, fill: u8) -> Self {
        BinaryImage {
            width,
            height,
            data: vec![fill.min(1); width * height],
        }
    }

    /// Blank paper: no strokes.
    pub fn blank(width: usize, height: usize) -> Self {
        Self::new(width, height, 1)
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> u8) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y).min(1));
            }
        }
        BinaryImage {
            width,
            height,
            data,
        }
    }

    /// Stroke-role image whose strokes are the `true` entries.
    pub fn from_strokes(width: usize, height: usize, strokes: &[bool]) -> Self {
        assert_eq!(strokes.len(), width * height);
        BinaryImage {
            width,
            height,
            data: strokes.iter().map(|&s| u8::from(!s)).collect(),
        }
    }

    /// Foreground-role image whose covered pixels are the `true` entries.
    pub fn from_mask(width: usize, height: usize, covered: &[bool]) -> Self {
        assert_eq!(covered.len(), width * height);
        BinaryImage {
            width,
            height,
            data: covered.iter().map(|&c| u8::from(c)).collect(),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn values(&self) -> &[u8] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        self.data[y * self.width + x] = v.min(1);
    }

    pub fn count(&self, v: u8) -> usize {
        self.data.iter().filter(|&&d| d == v).count()
    }

    /// Pixels holding `v`, in raster order.
    pub fn pixels_with(&self, v: u8) -> impl Iterator<Item = (usize, usize)> + '_ {
        let w = self.width;
        self.data
            .iter()
            .enumerate()
            .filter(move |(_, &d)| d == v)
            .map(move |(i, _)| (i % w, i / w))
    }

    /// Stroke-role view: `true` on pen strokes.
    pub fn strokes(&self) -> Vec<bool> {
        self.data.iter().map(|&d| d == 0).collect()
    }

    /// Foreground-role view: `true` on covered pixels.
    pub fn covered(&self) -> Vec<bool> {
        self.data.iter().map(|&d| d == 1).collect()
    }

    pub fn stroke_count(&self) -> usize {
        self.count(0)
    }

    pub fn same_size(&self, other: &BinaryImage) -> Result<()> {
        if self.width != other.width || self.height != other.height {
            return Err(Error::ImageSize(format!(
                "{}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )));
        }
        Ok(())
    }

    /// Reads a PNG; pixels darker than mid-gray (after compositing over
    /// white) become `0`, everything else `1`.
    pub fn read_png(bytes: &[u8]) -> Result<Self> {
        let mut decoder = png::Decoder::new(Cursor::new(bytes));
        decoder.set_transformations(png::Transformations::normalize_to_color8());
        let mut reader = decoder
            .read_info()
            .map_err(|e| Error::format("PNG", e.to_string()))?;
        let size = reader
            .output_buffer_size()
            .ok_or_else(|| Error::format("PNG", "image too large"))?;
        let mut buf = vec![0u8; size];
        let info = reader
            .next_frame(&mut buf)
            .map_err(|e| Error::format("PNG", e.to_string()))?;
        let (w, h) = (info.width as usize, info.height as usize);
        let channels = info.color_type.samples();
        let stride = info.line_size;
        let mut data = Vec::with_capacity(w * h);
        for y in 0..h {
            let row = &buf[y * stride..y * stride + w * channels];
            for px in row.chunks_exact(channels) {
                let (lum, alpha) = match channels {
                    1 => (px[0] as f64, 255.0),
                    2 => (px[0] as f64, px[1] as f64),
                    3 => (luminance(px), 255.0),
                    _ => (luminance(px), px[3] as f64),
                };
                let a = alpha / 255.0;
                let composited = lum * a + 255.0 * (1.0 - a);
                data.push(u8::from(composited >= 128.0));
            }
        }
        Ok(BinaryImage {
            width: w,
            height: h,
            data,
        })
    }

    /// 8-bit grayscale PNG: `0` black, `1` white.
    pub fn to_png(&self) -> Result<Vec<u8>> {
        let gray: Vec<u8> = self.data.iter().map(|&d| d * 255).collect();
        encode_png(self.width, self.height, png::ColorType::Grayscale, &gray)
    }

    pub fn to_pgm(&self) -> Vec<u8> {
        let gray: Vec<u8> = self.data.iter().map(|&d| d * 255).collect();
        encode_pgm(self.width, self.height, &gray)
    }

    /// Reads binary (P5) or ASCII (P2) PGM with the PNG threshold rule.
    pub fn read_pgm(bytes: &[u8]) -> Result<Self> {
        let (w, h, gray) = decode_pgm(bytes)?;
        Ok(BinaryImage {
            width: w,
            height: h,
            data: gray.iter().map(|&g| u8::from(g >= 128)).collect(),
        })
    }

    /// Dispatches on the file signature.
    pub fn read_any(bytes: &[u8]) -> Result<Self> {
        if bytes.starts_with(b"\x89PNG") {
            Self::read_png(bytes)
        } else if bytes.starts_with(b"P5") || bytes.starts_with(b"P2") {
            Self::read_pgm(bytes)
        } else {
            Err(Error::format("image", "expected PNG or PGM"))
        }
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        Self::read_any(&bytes)
    }

    pub fn save_png(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        std::fs::File::create(path)?.write_all(&self.to_png()?)?;
        Ok(())
    }
}

fn luminance(px: &[u8]) -> f64 {
    0.299 * px[0] as f64 + 0.587 * px[1] as f64 + 0.114 * px[2] as f64
}

pub fn encode_png(width: usize, height: usize, color: png::ColorType, data: &[u8]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, width as u32, height as u32);
        enc.set_color(color);
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc
            .write_header()
            .map_err(|e| Error::format("PNG", e.to_string()))?;
        writer
            .write_image_data(data)
            .map_err(|e| Error::format("PNG", e.to_string()))?;
    }
    Ok(out)
}

pub fn encode_pgm(width: usize, height: usize, gray: &[u8]) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(gray);
    out
}

fn decode_pgm(bytes: &[u8]) -> Result<(usize, usize, Vec<u8>)> {
    let bad = |d: &str| Error::format("PGM", d.to_string());
    let mut pos = 0usize;
    let token = |pos: &mut usize| -> Result<String> {
        loop {
            while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
                *pos += 1;
            }
            if *pos < bytes.len() && bytes[*pos] == b'#' {
                while *pos < bytes.len() && bytes[*pos] != b'\n' {
                    *pos += 1;
                }
                continue;
            }
            break;
        }
        let start = *pos;
        while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if start == *pos {
            return Err(bad("unexpected end of header"));
        }
        Ok(String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
    };
    let magic = token(&mut pos)?;
    let num = |s: String| s.parse::<usize>().map_err(|_| bad("bad number"));
    let w = num(token(&mut pos)?)?;
    let h = num(token(&mut pos)?)?;
    let maxval = num(token(&mut pos)?)?;
    if maxval == 0 || maxval > 255 {
        return Err(bad("only 8-bit PGM is supported"));
    }
    let scale = |v: usize| ((v * 255) / maxval) as u8;
    match magic.as_str() {
        "P5" => {
            pos += 1;
            let data = bytes
                .get(pos..pos + w * h)
                .ok_or_else(|| bad("truncated pixel data"))?;
            Ok((w, h, data.iter().map(|&v| scale(v as usize)).collect()))
        }
        "P2" => {
            let mut data = Vec::with_capacity(w * h);
            for _ in 0..w * h {
                data.push(scale(num(token(&mut pos)?)?));
            }
            Ok((w, h, data))
        }
        _ => Err(bad("unknown magic")),
    }
}

const N4: [(isize, isize); 4] = [(1, 0), (-1, 0), (0, 1), (0, -1)];

/// 4-connected flood fill over `passable` pixels from `seed`.
pub fn flood_fill4(passable: &[bool], width: usize, height: usize, seed: (usize, usize)) -> Vec<bool> {
    let mut filled = vec![false; width * height];
    let start = seed.1 * width + seed.0;
    if !passable[start] {
        return filled;
    }
    let mut queue = VecDeque::from([seed]);
    filled[start] = true;
    while let Some((x, y)) = queue.pop_front() {
        for (dx, dy) in N4 {
            let (nx, ny) = (x as isize + dx, y as isize + dy);
            if nx < 0 || ny < 0 || nx >= width as isize || ny >= height as isize {
                continue;
            }
            let i = ny as usize * width + nx as usize;
            if passable[i] && !filled[i] {
                filled[i] = true;
                queue.push_back((nx as usize, ny as usize));
            }
        }
    }
    filled
}

/// Dilation by a `(2r+1)^2` square (8-connected, Chebyshev radius `r`).
pub fn dilate8(set: &[bool], width: usize, height: usize, radius: usize) -> Vec<bool> {
    box_filter(set, width, height, radius, true)
}

/// Erosion by a `(2r+1)^2` square. Pixels outside the image count as unset.
pub fn erode8(set: &[bool], width: usize, height: usize, radius: usize) -> Vec<bool> {
    box_filter(set, width, height, radius, false)
}

fn box_filter(set: &[bool], width: usize, height: usize, radius: usize, any: bool) -> Vec<bool> {
    let r = radius as isize;
    let (w, h) = (width as isize, height as isize);
    let pass = |src: &[bool], horizontal: bool| -> Vec<bool> {
        let mut out = vec![false; src.len()];
        for y in 0..h {
            for x in 0..w {
                let mut acc = !any;
                for d in -r..=r {
                    let (nx, ny) = if horizontal { (x + d, y) } else { (x, y + d) };
                    let v = nx >= 0 && ny >= 0 && nx < w && ny < h && src[(ny * w + nx) as usize];
                    if any {
                        acc |= v;
                    } else {
                        acc &= v;
                    }
                }
                out[(y * w + x) as usize] = acc;
            }
        }
        out
    };
    let tmp = pass(set, true);
    pass(&tmp, false)
}

/// Exact Euclidean distance from each pixel center to the nearest `site`
/// pixel center; `f64::INFINITY` everywhere when there are no sites.
pub fn distance_transform(sites: &[bool], width: usize, height: usize) -> Vec<f64> {
    const FAR: f64 = 1e30;
    let mut d2: Vec<f64> = sites.iter().map(|&s| if s { 0.0 } else { FAR }).collect();
    let mut f = vec![0.0; width.max(height)];
    let mut out = vec![0.0; width.max(height)];
    for x in 0..width {
        for y in 0..height {
            f[y] = d2[y * width + x];
        }
        squared_distance_1d(&f[..height], &mut out[..height]);
        for y in 0..height {
            d2[y * width + x] = out[y];
        }
    }
    for y in 0..height {
        let row = &mut d2[y * width..(y + 1) * width];
        f[..width].copy_from_slice(row);
        squared_distance_1d(&f[..width], &mut out[..width]);
        row.copy_from_slice(&out[..width]);
    }
    d2.into_iter()
        .map(|v| if v >= FAR / 2.0 { f64::INFINITY } else { v.sqrt() })
        .collect()
}

/// Lower envelope of parabolas (Felzenszwalb and Huttenlocher).
fn squared_distance_1d(f: &[f64], out: &mut [f64]) {
    let n = f.len();
    if n == 0 {
        return;
    }
    let mut v = vec![0usize; n];
    let mut z = vec![0.0f64; n + 1];
    let mut k = 0usize;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    let inter = |q: usize, p: usize| {
        let (q, p) = (q as f64, p as f64);
        ((f[q as usize] + q * q) - (f[p as usize] + p * p)) / (2.0 * (q - p))
    };
    for q in 1..n {
        let mut s = inter(q, v[k]);
        while s <= z[k] {
            k -= 1;
            s = inter(q, v[k]);
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = f64::INFINITY;
    }
    k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let d = q as f64 - v[k] as f64;
        *o = d * d + f[v[k]];
    }
}
