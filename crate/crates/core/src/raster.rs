//! Raster containers shared across the pipeline (saliency maps, fixation
//! maps, grayscale frames) and their on-disk formats.
//!
//! Storage formats:
//! - saliency maps: PFM grayscale (`Pf`, scale `-1.0` ⇒ little-endian
//!   float32, rows bottom-up), with an 8-bit PGM export for inspection
//! - fixation maps: PBM (`P4`, bit-packed, 1 = fixated pixel)
//! - video frames: binary PGM (`P5`)

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad {format} header: {detail}")]
    BadHeader { format: &'static str, detail: String },
    #[error("non-finite value at pixel {index}")]
    NonFinite { index: usize },
    #[error("raster dimensions {width}x{height} do not match {len} values")]
    LengthMismatch { width: u32, height: u32, len: usize },
}

/// Float raster holding observed or predicted gaze density for one frame.
///
/// Values are held as f64 in memory; the PFM storage format is float32 and
/// conversion happens at the I/O boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyMap {
    width: u32,
    height: u32,
    values: Vec<f64>,
}

impl SaliencyMap {
    pub fn zeros(width: u32, height: u32) -> Self {
        Self { width, height, values: vec![0.0; (width as usize) * (height as usize)] }
    }

    pub fn from_values(width: u32, height: u32, values: Vec<f64>) -> Result<Self, RasterError> {
        if values.len() != (width as usize) * (height as usize) {
            return Err(RasterError::LengthMismatch { width, height, len: values.len() });
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(RasterError::NonFinite { index });
        }
        Ok(Self { width, height, values })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, x: u32, y: u32) -> f64 {
        self.values[(y as usize) * (self.width as usize) + x as usize]
    }

    pub fn same_dims(&self, other: &SaliencyMap) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// True when the raster carries no mass at all ("blank" ground truth).
    pub fn is_blank(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, &v| m.max(v))
    }

    pub fn write_pfm(&self, path: &Path) -> Result<(), RasterError> {
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        write!(w, "Pf\n{} {}\n-1.0\n", self.width, self.height)?;
        // PFM scanlines run bottom-up.
        for y in (0..self.height).rev() {
            let row = (y as usize) * (self.width as usize);
            for x in 0..self.width as usize {
                w.write_f32::<LittleEndian>(self.values[row + x] as f32)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_pfm(path: &Path) -> Result<Self, RasterError> {
        let mut r = BufReader::new(std::fs::File::open(path)?);
        let magic = read_token(&mut r)?;
        if magic != "Pf" {
            return Err(RasterError::BadHeader {
                format: "PFM",
                detail: format!("expected magic 'Pf', found {magic:?}"),
            });
        }
        let width: u32 = parse_dim(&read_token(&mut r)?, "PFM")?;
        let height: u32 = parse_dim(&read_token(&mut r)?, "PFM")?;
        let scale: f64 = read_token(&mut r)?.parse().map_err(|_| RasterError::BadHeader {
            format: "PFM",
            detail: "unreadable scale".into(),
        })?;
        if scale >= 0.0 {
            return Err(RasterError::BadHeader {
                format: "PFM",
                detail: "big-endian PFM (scale >= 0) is not supported".into(),
            });
        }
        let n = (width as usize) * (height as usize);
        let mut values = vec![0.0f64; n];
        for y in (0..height).rev() {
            let row = (y as usize) * (width as usize);
            for x in 0..width as usize {
                values[row + x] = f64::from(r.read_f32::<LittleEndian>()?);
            }
        }
        Self::from_values(width, height, values)
    }

    /// 8-bit PGM export for visual inspection: values ×255, rounded.
    pub fn write_pgm(&self, path: &Path) -> Result<(), RasterError> {
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        write!(w, "P5\n{} {}\n255\n", self.width, self.height)?;
        let bytes: Vec<u8> =
            self.values.iter().map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8).collect();
        w.write_all(&bytes)?;
        w.flush()?;
        Ok(())
    }
}

/// Binary raster marking the discrete fixated pixels of one frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FixationMap {
    width: u32,
    height: u32,
    set: Vec<bool>,
}

impl FixationMap {
    pub fn zeros(width: u32, height: u32) -> Self {
        Self { width, height, set: vec![false; (width as usize) * (height as usize)] }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn is_set(&self, x: u32, y: u32) -> bool {
        self.set[(y as usize) * (self.width as usize) + x as usize]
    }

    pub fn mark(&mut self, x: u32, y: u32) {
        self.set[(y as usize) * (self.width as usize) + x as usize] = true;
    }

    pub fn count(&self) -> usize {
        self.set.iter().filter(|&&b| b).count()
    }

    pub fn pixels(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        let w = self.width;
        self.set
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(i, _)| ((i as u32) % w, (i as u32) / w))
    }

    pub fn write_pbm(&self, path: &Path) -> Result<(), RasterError> {
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        write!(w, "P4\n{} {}\n", self.width, self.height)?;
        let row_bytes = (self.width as usize + 7) / 8;
        let mut buf = vec![0u8; row_bytes];
        for y in 0..self.height {
            buf.iter_mut().for_each(|b| *b = 0);
            for x in 0..self.width {
                if self.is_set(x, y) {
                    buf[(x / 8) as usize] |= 0x80 >> (x % 8);
                }
            }
            w.write_all(&buf)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_pbm(path: &Path) -> Result<Self, RasterError> {
        let mut r = BufReader::new(std::fs::File::open(path)?);
        let magic = read_token(&mut r)?;
        if magic != "P4" {
            return Err(RasterError::BadHeader {
                format: "PBM",
                detail: format!("expected magic 'P4', found {magic:?}"),
            });
        }
        let width: u32 = parse_dim(&read_token(&mut r)?, "PBM")?;
        let height: u32 = parse_dim(&read_token(&mut r)?, "PBM")?;
        let row_bytes = (width as usize + 7) / 8;
        let mut map = Self::zeros(width, height);
        let mut buf = vec![0u8; row_bytes];
        for y in 0..height {
            r.read_exact(&mut buf)?;
            for x in 0..width {
                if buf[(x / 8) as usize] & (0x80 >> (x % 8)) != 0 {
                    map.mark(x, y);
                }
            }
        }
        Ok(map)
    }
}

/// Grayscale video frame, values in [0, 255].
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: u32,
    height: u32,
    pixels: Vec<f32>,
}

impl GrayImage {
    pub fn zeros(width: u32, height: u32) -> Self {
        Self { width, height, pixels: vec![0.0; (width as usize) * (height as usize)] }
    }

    pub fn from_pixels(width: u32, height: u32, pixels: Vec<f32>) -> Result<Self, RasterError> {
        if pixels.len() != (width as usize) * (height as usize) {
            return Err(RasterError::LengthMismatch { width, height, len: pixels.len() });
        }
        Ok(Self { width, height, pixels })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn get(&self, x: u32, y: u32) -> f32 {
        self.pixels[(y as usize) * (self.width as usize) + x as usize]
    }

    /// Clamped access: coordinates outside the raster read the nearest edge
    /// pixel.
    pub fn get_clamped(&self, x: i64, y: i64) -> f32 {
        let cx = x.clamp(0, self.width as i64 - 1) as u32;
        let cy = y.clamp(0, self.height as i64 - 1) as u32;
        self.get(cx, cy)
    }

    pub fn set(&mut self, x: u32, y: u32, v: f32) {
        self.pixels[(y as usize) * (self.width as usize) + x as usize] = v;
    }

    pub fn write_pgm(&self, path: &Path) -> Result<(), RasterError> {
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        write!(w, "P5\n{} {}\n255\n", self.width, self.height)?;
        let bytes: Vec<u8> =
            self.pixels.iter().map(|&v| v.round().clamp(0.0, 255.0) as u8).collect();
        w.write_all(&bytes)?;
        w.flush()?;
        Ok(())
    }

    pub fn read_pgm(path: &Path) -> Result<Self, RasterError> {
        let mut r = BufReader::new(std::fs::File::open(path)?);
        let magic = read_token(&mut r)?;
        if magic != "P5" {
            return Err(RasterError::BadHeader {
                format: "PGM",
                detail: format!("expected magic 'P5', found {magic:?}"),
            });
        }
        let width: u32 = parse_dim(&read_token(&mut r)?, "PGM")?;
        let height: u32 = parse_dim(&read_token(&mut r)?, "PGM")?;
        let maxval: u32 = parse_dim(&read_token(&mut r)?, "PGM")?;
        if maxval != 255 {
            return Err(RasterError::BadHeader {
                format: "PGM",
                detail: format!("only maxval 255 supported, found {maxval}"),
            });
        }
        let n = (width as usize) * (height as usize);
        let mut bytes = vec![0u8; n];
        r.read_exact(&mut bytes)?;
        let pixels = bytes.into_iter().map(f32::from).collect();
        Self::from_pixels(width, height, pixels)
    }
}

/// Read one whitespace-delimited header token, skipping `#` comment lines.
fn read_token<R: BufRead>(r: &mut R) -> Result<String, RasterError> {
    let mut tok = String::new();
    loop {
        let mut byte = [0u8; 1];
        match r.read(&mut byte)? {
            0 => {
                if tok.is_empty() {
                    return Err(RasterError::Io(std::io::Error::new(
                        std::io::ErrorKind::UnexpectedEof,
                        "truncated header",
                    )));
                }
                return Ok(tok);
            }
            _ => {
                let c = byte[0] as char;
                if c == '#' && tok.is_empty() {
                    let mut skip = String::new();
                    r.read_line(&mut skip)?;
                    continue;
                }
                if c.is_whitespace() {
                    if tok.is_empty() {
                        continue;
                    }
                    return Ok(tok);
                }
                tok.push(c);
            }
        }
    }
}

fn parse_dim(tok: &str, format: &'static str) -> Result<u32, RasterError> {
    tok.parse().map_err(|_| RasterError::BadHeader {
        format,
        detail: format!("bad dimension token {tok:?}"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn pfm_round_trips_bit_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.pfm");
        let values: Vec<f64> = (0..12).map(|i| f64::from(i) * 0.125 - 0.5).collect();
        let map = SaliencyMap::from_values(4, 3, values.clone()).unwrap();
        map.write_pfm(&path).unwrap();
        let back = SaliencyMap::read_pfm(&path).unwrap();
        assert_eq!(back.width(), 4);
        assert_eq!(back.height(), 3);
        for (a, b) in values.iter().zip(back.values()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn pfm_rejects_non_finite() {
        let err = SaliencyMap::from_values(2, 1, vec![1.0, f64::NAN]).unwrap_err();
        assert!(matches!(err, RasterError::NonFinite { index: 1 }));
    }

    #[test]
    fn pbm_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.pbm");
        let mut map = FixationMap::zeros(10, 4);
        map.mark(0, 0);
        map.mark(9, 3);
        map.mark(7, 2);
        map.write_pbm(&path).unwrap();
        let back = FixationMap::read_pbm(&path).unwrap();
        assert_eq!(map, back);
        assert_eq!(back.count(), 3);
    }

    #[test]
    fn pgm_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.pgm");
        let mut img = GrayImage::zeros(5, 2);
        img.set(3, 1, 200.0);
        img.write_pgm(&path).unwrap();
        let back = GrayImage::read_pgm(&path).unwrap();
        assert_eq!(img, back);
    }

    proptest! {
        #[test]
        fn pfm_round_trip_property(w in 1u32..12, h in 1u32..12, seed in 0u64..1000) {
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("p.pfm");
            let n = (w * h) as usize;
            let mut s = seed;
            let values: Vec<f64> = (0..n)
                .map(|_| {
                    s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                    // Keep the value f32-representable so the float32 file
                    // format round-trips exactly.
                    f64::from(((s >> 33) as f32) / (u32::MAX as f32))
                })
                .collect();
            let map = SaliencyMap::from_values(w, h, values).unwrap();
            map.write_pfm(&path).unwrap();
            let back = SaliencyMap::read_pfm(&path).unwrap();
            prop_assert_eq!(map, back);
        }
    }
}
