//! HDR images: PFM read/write and tone-mapped PNG previews.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::math::Rgb;
use crate::tonemap::to_srgb;

/// Row-major image, top row first.
#[derive(Debug, Clone, PartialEq)]
pub struct HdrImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<Rgb>,
}

impl HdrImage {
    pub fn new(width: usize, height: usize) -> Self {
        HdrImage {
            width,
            height,
            pixels: vec![Rgb::ZERO; width * height],
        }
    }

    pub fn get(&self, x: usize, y: usize) -> Rgb {
        self.pixels[y * self.width + x]
    }

    /// Channel values after the display map.
    pub fn to_srgb(&self) -> Vec<[f64; 3]> {
        self.pixels.iter().map(|p| p.0.map(to_srgb)).collect()
    }
}

/// Little-endian colour PFM (rows stored bottom to top). Values are f32.
pub fn write_pfm<W: Write>(mut w: W, img: &HdrImage) -> Result<()> {
    write!(w, "PF\n{} {}\n-1.0\n", img.width, img.height)?;
    let mut buf = Vec::with_capacity(img.width * img.height * 12);
    for y in (0..img.height).rev() {
        for x in 0..img.width {
            for c in img.get(x, y).0 {
                buf.extend_from_slice(&(c as f32).to_le_bytes());
            }
        }
    }
    w.write_all(&buf)?;
    Ok(())
}

fn header_token<R: BufRead>(r: &mut R) -> Result<String> {
    let mut tok = Vec::new();
    loop {
        let mut b = [0u8; 1];
        if r.read(&mut b)? == 0 {
            break;
        }
        if b[0].is_ascii_whitespace() {
            if tok.is_empty() {
                continue;
            }
            break;
        }
        tok.push(b[0]);
    }
    String::from_utf8(tok).map_err(|_| Error::Format("non-ASCII PFM header".into()))
}

/// Reads colour (`PF`) or grey (`Pf`) PFM in either byte order.
pub fn read_pfm<R: Read>(r: R) -> Result<HdrImage> {
    let mut r = BufReader::new(r);
    let channels = match header_token(&mut r)?.as_str() {
        "PF" => 3,
        "Pf" => 1,
        other => return Err(Error::Format(format!("not a PFM file (magic '{other}')"))),
    };
    let parse = |s: String| s.parse::<usize>().map_err(|_| Error::Format(format!("bad PFM size '{s}'")));
    let width = parse(header_token(&mut r)?)?;
    let height = parse(header_token(&mut r)?)?;
    let scale: f64 = header_token(&mut r)?.parse().map_err(|_| Error::Format("bad PFM scale".into()))?;
    if scale == 0.0 {
        return Err(Error::Format("PFM scale is zero".into()));
    }
    let little = scale < 0.0;
    let mut raw = vec![0u8; width * height * channels * 4];
    r.read_exact(&mut raw).map_err(|_| Error::Format("truncated PFM data".into()))?;
    let mut img = HdrImage::new(width, height);
    for (i, px) in raw.chunks_exact(channels * 4).enumerate() {
        let v: Vec<f64> = px
            .chunks_exact(4)
            .map(|b| {
                let b: [u8; 4] = b.try_into().unwrap();
                (if little { f32::from_le_bytes(b) } else { f32::from_be_bytes(b) }) as f64
            })
            .collect();
        let (x, row) = (i % width, i / width);
        let y = height - 1 - row;
        img.pixels[y * width + x] = if channels == 3 { Rgb([v[0], v[1], v[2]]) } else { Rgb::splat(v[0]) };
    }
    Ok(img)
}

pub fn save_pfm(path: &Path, img: &HdrImage) -> Result<()> {
    write_pfm(std::io::BufWriter::new(std::fs::File::create(path)?), img)
}

pub fn load_pfm(path: &Path) -> Result<HdrImage> {
    read_pfm(std::fs::File::open(path)?)
}

/// 8-bit sRGB preview.
pub fn save_png_preview(path: &Path, img: &HdrImage) -> Result<()> {
    let mut out = image::RgbImage::new(img.width as u32, img.height as u32);
    for (i, p) in img.to_srgb().into_iter().enumerate() {
        let px = p.map(|c| (c * 255.0).round() as u8);
        out.put_pixel((i % img.width) as u32, (i / img.width) as u32, image::Rgb(px));
    }
    out.save(path)?;
    Ok(())
}
