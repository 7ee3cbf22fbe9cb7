//! Grayscale snapshots of the lattice and image-domain neighbour similarity.
//!
//! Rendering maps row `y` of the lattice onto image row `y`, shifted left
//! by half a site per row so that the six triangular neighbours of a site
//! sit around it as in a hexagonal grid. The shift wraps cyclically within
//! each row, which keeps the canvas rectangular and every site's area intact.
//! The sheared canvas is then point-sampled on a `supersample x supersample`
//! grid per output pixel and box-averaged to 8-bit gray.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, IoContext, Result};
use crate::lattice::{Lattice, SiteType};
use crate::rng::RngStream;

pub const DEFAULT_DELTA_COL: u8 = 35;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Snapshot {
    pub width: usize,
    pub height: usize,
    /// Row-major, row 0 first.
    pub pixels: Vec<u8>,
    pub step: Option<u64>,
}

impl Snapshot {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 || pixels.len() != width * height {
            return Err(Error::InvalidImage {
                width,
                height,
                reason: "pixel buffer does not match dimensions",
            });
        }
        Ok(Self {
            width,
            height,
            pixels,
            step: None,
        })
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    pub fn mean_intensity(&self) -> f64 {
        self.pixels.iter().map(|&p| f64::from(p)).sum::<f64>() / self.pixels.len() as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RenderConfig {
    /// Output width in pixels; at most `L` (one pixel per site).
    pub target_width: usize,
    /// Sample points per output pixel along each axis.
    pub supersample: usize,
    pub delta_col: u8,
}

impl RenderConfig {
    pub fn new(target_width: usize) -> Self {
        Self {
            target_width,
            supersample: 1,
            delta_col: DEFAULT_DELTA_COL,
        }
    }

    pub fn with_supersample(mut self, factor: usize) -> Self {
        self.supersample = factor;
        self
    }
}

/// Output height for a given width, keeping the sites-per-pixel ratio equal
/// along both axes.
pub fn output_height(lattice_l: usize, lattice_m: usize, width: usize) -> usize {
    ((width * lattice_m + lattice_l / 2) / lattice_l).max(1)
}

pub fn render_snapshot(lattice: &Lattice, config: &RenderConfig) -> Result<Snapshot> {
    let dims = lattice.dims();
    let (l, m) = (dims.l(), dims.m());
    let w = config.target_width;
    let h = output_height(l, m, w);
    if w == 0 || w > l {
        return Err(Error::InvalidImage {
            width: w,
            height: h,
            reason: "target width must be between 1 and the lattice row length",
        });
    }
    if config.supersample == 0 {
        return Err(Error::InvalidImage {
            width: w,
            height: h,
            reason: "supersample factor must be at least 1",
        });
    }
    let s = config.supersample;
    let (ws, hs) = ((w * s) as u64, (h * s) as u64);
    let (l64, m64) = (l as u64, m as u64);
    // lattice row and site column of each sample, all in integer arithmetic
    let sample_row: Vec<u64> = (0..hs).map(|r| (2 * r + 1) * m64 / (2 * hs)).collect();
    let samples = (s * s) as u64;
    let mut pixels = Vec::with_capacity(w * h);
    for py in 0..h {
        for px in 0..w {
            let mut white = 0u64;
            for sy in 0..s {
                let y = sample_row[py * s + sy];
                for sx in 0..s {
                    let c = (px * s + sx) as u64;
                    let x = ((2 * c + 1) * l64 + y * ws) / (2 * ws) % l64;
                    let site = (y * l64 + x) as usize;
                    white += u64::from(lattice.get(site) == SiteType::A);
                }
            }
            pixels.push(((white * 255 + samples / 2) / samples) as u8);
        }
    }
    Ok(Snapshot {
        width: w,
        height: h,
        pixels,
        step: None,
    })
}

/// Which raster pixels count as neighbours in [`image_ffn`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum RasterNeighborhood {
    /// All eight surrounding pixels.
    #[default]
    Moore8,
    /// The six pixels that are lattice neighbours in a full-resolution
    /// render: left, right, and two in each adjacent row, offset by row
    /// parity.
    Hex6,
}

impl RasterNeighborhood {
    fn offsets(self, y: usize) -> &'static [(isize, isize)] {
        const MOORE: [(isize, isize); 8] = [
            (-1, -1),
            (0, -1),
            (1, -1),
            (-1, 0),
            (1, 0),
            (-1, 1),
            (0, 1),
            (1, 1),
        ];
        const HEX_EVEN: [(isize, isize); 6] = [(-1, 0), (1, 0), (-1, -1), (0, -1), (-1, 1), (0, 1)];
        const HEX_ODD: [(isize, isize); 6] = [(-1, 0), (1, 0), (0, -1), (1, -1), (0, 1), (1, 1)];
        match self {
            RasterNeighborhood::Moore8 => &MOORE,
            RasterNeighborhood::Hex6 if y.is_multiple_of(2) => &HEX_EVEN,
            RasterNeighborhood::Hex6 => &HEX_ODD,
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "moore8" => Some(Self::Moore8),
            "hex6" => Some(Self::Hex6),
            _ => None,
        }
    }
}

/// In-bounds neighbours of pixel `(x, y)`, written into `buf`.
fn raster_neighbors(
    snap: &Snapshot,
    nb: RasterNeighborhood,
    x: usize,
    y: usize,
    buf: &mut [u8; 8],
) -> usize {
    let mut k = 0;
    for &(dx, dy) in nb.offsets(y) {
        let (nx, ny) = (x as isize + dx, y as isize + dy);
        if nx >= 0 && ny >= 0 && (nx as usize) < snap.width && (ny as usize) < snap.height {
            buf[k] = snap.get(nx as usize, ny as usize);
            k += 1;
        }
    }
    k
}

#[inline]
fn similar(a: u8, b: u8, delta_col: u8) -> bool {
    a.abs_diff(b) < delta_col
}

fn check_ffn_input(snap: &Snapshot) -> Result<()> {
    if snap.width * snap.height < 2 {
        return Err(Error::InvalidImage {
            width: snap.width,
            height: snap.height,
            reason: "need at least two pixels",
        });
    }
    Ok(())
}

/// Image-domain fraction of first neighbours: each pixel draws one uniform
/// in-bounds neighbour and counts as similar when the intensities differ by
/// less than `delta_col`.
pub fn image_ffn(
    snap: &Snapshot,
    delta_col: u8,
    neighborhood: RasterNeighborhood,
    rng: &mut RngStream,
) -> Result<f64> {
    check_ffn_input(snap)?;
    let mut buf = [0u8; 8];
    let (mut sampled, mut same) = (0usize, 0usize);
    for y in 0..snap.height {
        for x in 0..snap.width {
            let k = raster_neighbors(snap, neighborhood, x, y, &mut buf);
            if k == 0 {
                continue;
            }
            let other = buf[rng.below(k)];
            sampled += 1;
            same += usize::from(similar(snap.get(x, y), other, delta_col));
        }
    }
    Ok(same as f64 / sampled as f64)
}

/// Expectation of [`image_ffn`] over the neighbour draws.
pub fn image_ffn_exact(
    snap: &Snapshot,
    delta_col: u8,
    neighborhood: RasterNeighborhood,
) -> Result<f64> {
    check_ffn_input(snap)?;
    let mut buf = [0u8; 8];
    let (mut sampled, mut total) = (0usize, 0.0);
    for y in 0..snap.height {
        for x in 0..snap.width {
            let k = raster_neighbors(snap, neighborhood, x, y, &mut buf);
            if k == 0 {
                continue;
            }
            let p = snap.get(x, y);
            let hits = buf[..k].iter().filter(|&&q| similar(p, q, delta_col)).count();
            total += hits as f64 / k as f64;
            sampled += 1;
        }
    }
    Ok(total / sampled as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ImageFormat {
    /// Binary portable graymap (P5, maxval 255).
    Pgm,
    Png,
}

impl ImageFormat {
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()? {
            "pgm" => Some(Self::Pgm),
            "png" => Some(Self::Png),
            _ => None,
        }
    }
}

pub fn encode_pgm(snap: &Snapshot) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", snap.width, snap.height).into_bytes();
    out.extend_from_slice(&snap.pixels);
    out
}

pub fn decode_pgm(bytes: &[u8]) -> std::result::Result<Snapshot, String> {
    // header: magic, width, height, maxval, each separated by whitespace,
    // with '#' comments; exactly one whitespace byte precedes the raster
    let mut pos = 0;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err("truncated header".into());
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|e| e.to_string())?);
    }
    if fields[0] != "P5" {
        return Err(format!("expected P5 magic, found {:?}", fields[0]));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|e| format!("bad header field {s:?}: {e}"));
    let (width, height, maxval) = (num(fields[1])?, num(fields[2])?, num(fields[3])?);
    if maxval != 255 {
        return Err(format!("unsupported maxval {maxval}"));
    }
    pos += 1;
    let raster = bytes.get(pos..).unwrap_or(&[]);
    if raster.len() != width * height {
        return Err(format!(
            "raster holds {} bytes, expected {}",
            raster.len(),
            width * height
        ));
    }
    Snapshot::new(width, height, raster.to_vec()).map_err(|e| e.to_string())
}

pub fn write_image(snap: &Snapshot, path: &Path, format: ImageFormat) -> Result<()> {
    let file = File::create(path).at(path)?;
    let mut w = BufWriter::new(file);
    match format {
        ImageFormat::Pgm => w.write_all(&encode_pgm(snap)).at(path)?,
        ImageFormat::Png => {
            let mut enc = png::Encoder::new(&mut w, snap.width as u32, snap.height as u32);
            enc.set_color(png::ColorType::Grayscale);
            enc.set_depth(png::BitDepth::Eight);
            let fmt_err = |e: png::EncodingError| Error::Format {
                path: path.to_path_buf(),
                reason: e.to_string(),
            };
            let mut writer = enc.write_header().map_err(fmt_err)?;
            writer.write_image_data(&snap.pixels).map_err(fmt_err)?;
            writer.finish().map_err(fmt_err)?;
        }
    }
    w.flush().at(path)
}

/// Reads a P5 or PNG grayscale image, chosen by content.
pub fn read_image(path: &Path) -> Result<Snapshot> {
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .at(path)?;
    let fmt_err = |reason: String| Error::Format {
        path: path.to_path_buf(),
        reason,
    };
    if bytes.starts_with(b"P5") {
        return decode_pgm(&bytes).map_err(fmt_err);
    }
    let file = File::open(path).at(path)?;
    let mut reader = png::Decoder::new(BufReader::new(file))
        .read_info()
        .map_err(|e| fmt_err(e.to_string()))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| fmt_err("image too large".into()))?;
    let mut buf = vec![0; size];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| fmt_err(e.to_string()))?;
    if info.color_type != png::ColorType::Grayscale || info.bit_depth != png::BitDepth::Eight {
        return Err(fmt_err("expected 8-bit grayscale".into()));
    }
    buf.truncate(info.buffer_size());
    Snapshot::new(info.width as usize, info.height as usize, buf)
}
