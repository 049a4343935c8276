//! Optical-flow propagation: reading dense flow fields, sampling them at
//! subpixel positions, and tracing fixation locations from neighboring
//! frames to a key frame.
//!
//! Flow interchange is the Middlebury `.flo` format, bit-exact: float32
//! magic 202021.25, int32 width and height, then height x width x 2
//! little-endian float32 with u and v interleaved. Directory layout is
//! `flow_fwd_%06d.flo` (frame k -> k+1) and `flow_bwd_%06d.flo`
//! (frame k -> k-1).

use crate::geometry::PixelPoint;
use crate::raster::GrayImage;
use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use std::collections::HashMap;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use thiserror::Error;

pub const FLO_MAGIC: f32 = 202021.25;

#[derive(Debug, Error)]
pub enum FlowError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad magic: not a .flo file")]
    BadMagic,
    #[error("truncated .flo file")]
    TruncatedFile,
    #[error("invalid flow dimensions {0}x{1}")]
    InvalidDimensions(i32, i32),
    #[error("point ({0}, {1}) outside the flow raster")]
    OutOfRaster(f64, f64),
    #[error("no flow available for step {from} -> {to}")]
    MissingFlow { from: u32, to: u32 },
    #[error("frame dimensions differ: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(u32, u32, u32, u32),
    #[error("flow contains non-finite values")]
    NonFinite,
}

/// Dense per-pixel displacement between two consecutive frames.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    width: u32,
    height: u32,
    /// Row-major, interleaved (u, v) per pixel.
    data: Vec<f32>,
}

impl FlowField {
    pub fn zeros(width: u32, height: u32) -> Self {
        Self { width, height, data: vec![0.0; (width as usize) * (height as usize) * 2] }
    }

    /// Uniform flow, handy for fixtures.
    pub fn constant(width: u32, height: u32, du: f32, dv: f32) -> Self {
        let mut f = Self::zeros(width, height);
        for px in f.data.chunks_exact_mut(2) {
            px[0] = du;
            px[1] = dv;
        }
        f
    }

    pub fn from_data(width: u32, height: u32, data: Vec<f32>) -> Result<Self, FlowError> {
        if data.len() != (width as usize) * (height as usize) * 2 {
            return Err(FlowError::InvalidDimensions(width as i32, height as i32));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(FlowError::NonFinite);
        }
        Ok(Self { width, height, data })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn get(&self, x: u32, y: u32) -> (f32, f32) {
        let i = ((y as usize) * (self.width as usize) + x as usize) * 2;
        (self.data[i], self.data[i + 1])
    }

    pub fn set(&mut self, x: u32, y: u32, du: f32, dv: f32) {
        let i = ((y as usize) * (self.width as usize) + x as usize) * 2;
        self.data[i] = du;
        self.data[i + 1] = dv;
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }
}

pub fn read_flo(path: &Path) -> Result<FlowField, FlowError> {
    read_flo_from(&mut BufReader::new(std::fs::File::open(path)?))
}

pub fn read_flo_from<R: Read>(r: &mut R) -> Result<FlowField, FlowError> {
    let magic = r.read_f32::<LittleEndian>().map_err(eof_to_truncated)?;
    if magic != FLO_MAGIC {
        return Err(FlowError::BadMagic);
    }
    let width = r.read_i32::<LittleEndian>().map_err(eof_to_truncated)?;
    let height = r.read_i32::<LittleEndian>().map_err(eof_to_truncated)?;
    if width <= 0 || height <= 0 || width > 1 << 16 || height > 1 << 16 {
        return Err(FlowError::InvalidDimensions(width, height));
    }
    let n = (width as usize) * (height as usize) * 2;
    let mut data = vec![0.0f32; n];
    for v in data.iter_mut() {
        *v = r.read_f32::<LittleEndian>().map_err(eof_to_truncated)?;
    }
    FlowField::from_data(width as u32, height as u32, data)
}

pub fn write_flo(path: &Path, flow: &FlowField) -> Result<(), FlowError> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    w.write_f32::<LittleEndian>(FLO_MAGIC)?;
    w.write_i32::<LittleEndian>(flow.width as i32)?;
    w.write_i32::<LittleEndian>(flow.height as i32)?;
    for &v in &flow.data {
        w.write_f32::<LittleEndian>(v)?;
    }
    w.flush()?;
    Ok(())
}

fn eof_to_truncated(e: std::io::Error) -> FlowError {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        FlowError::TruncatedFile
    } else {
        FlowError::Io(e)
    }
}

/// Bilinear interpolation of (u, v) at a subpixel position.
///
/// Valid for `0 <= x <= width-1` and `0 <= y <= height-1`.
pub fn sample_flow(flow: &FlowField, p: &PixelPoint) -> Result<(f64, f64), FlowError> {
    let w = flow.width as f64;
    let h = flow.height as f64;
    if !(p.x >= 0.0 && p.x <= w - 1.0 && p.y >= 0.0 && p.y <= h - 1.0) {
        return Err(FlowError::OutOfRaster(p.x, p.y));
    }
    // Anchor the cell so x0+1 stays in range even at the far edge.
    let x0 = (p.x.floor() as u32).min(flow.width.saturating_sub(2));
    let y0 = (p.y.floor() as u32).min(flow.height.saturating_sub(2));
    if flow.width == 1 && flow.height == 1 {
        let (u, v) = flow.get(0, 0);
        return Ok((f64::from(u), f64::from(v)));
    }
    let fx = p.x - f64::from(x0);
    let fy = p.y - f64::from(y0);
    let x1 = (x0 + 1).min(flow.width - 1);
    let y1 = (y0 + 1).min(flow.height - 1);

    let lerp2 = |c00: f32, c10: f32, c01: f32, c11: f32| -> f64 {
        let top = f64::from(c00) * (1.0 - fx) + f64::from(c10) * fx;
        let bot = f64::from(c01) * (1.0 - fx) + f64::from(c11) * fx;
        top * (1.0 - fy) + bot * fy
    };
    let (u00, v00) = flow.get(x0, y0);
    let (u10, v10) = flow.get(x1, y0);
    let (u01, v01) = flow.get(x0, y1);
    let (u11, v11) = flow.get(x1, y1);
    Ok((lerp2(u00, u10, u01, u11), lerp2(v00, v10, v01, v11)))
}

/// One step of flow handed out by a provider.
pub enum FlowStep {
    /// Field maps `from -> to` directly.
    Direct(Arc<FlowField>),
    /// Only the reverse field was available: sample at the current point and
    /// negate the displacement.
    Negated(Arc<FlowField>),
}

/// Frame-indexed source of single-step flow fields.
///
/// Implementations must be shareable read-only across workers.
pub trait FlowProvider: Sync {
    /// Flow for the unit step `from -> to` (`|from - to| == 1`).
    fn step(&self, from: u32, to: u32) -> Result<FlowStep, FlowError>;
}

/// In-memory provider backed by explicit forward and backward maps.
#[derive(Default)]
pub struct MemoryFlowProvider {
    /// key: frame k, field maps k -> k+1
    pub forward: HashMap<u32, Arc<FlowField>>,
    /// key: frame k, field maps k -> k-1
    pub backward: HashMap<u32, Arc<FlowField>>,
}

impl MemoryFlowProvider {
    pub fn insert_forward(&mut self, frame: u32, flow: FlowField) {
        self.forward.insert(frame, Arc::new(flow));
    }

    pub fn insert_backward(&mut self, frame: u32, flow: FlowField) {
        self.backward.insert(frame, Arc::new(flow));
    }
}

impl FlowProvider for MemoryFlowProvider {
    fn step(&self, from: u32, to: u32) -> Result<FlowStep, FlowError> {
        if to == from + 1 {
            self.forward.get(&from).map(|f| FlowStep::Direct(f.clone()))
        } else if from == to + 1 {
            self.backward.get(&from).cloned().map(FlowStep::Direct).or_else(|| {
                // Backward field missing: fall back to the negated forward
                // field of the target frame.
                self.forward.get(&to).map(|f| FlowStep::Negated(f.clone()))
            })
        } else {
            None
        }
        .ok_or(FlowError::MissingFlow { from, to })
    }
}

/// Directory-backed provider reading `flow_fwd_%06d.flo` / `flow_bwd_%06d.flo`
/// lazily, with a cache. When a backward file is missing the provider falls
/// back to the negated forward field of the target frame and logs a warning
/// once per frame pair.
pub struct DirFlowProvider {
    dir: PathBuf,
    cache: Mutex<HashMap<(u32, bool), Option<Arc<FlowField>>>>,
}

impl DirFlowProvider {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into(), cache: Mutex::new(HashMap::new()) }
    }

    pub fn forward_path(&self, frame: u32) -> PathBuf {
        self.dir.join(format!("flow_fwd_{frame:06}.flo"))
    }

    pub fn backward_path(&self, frame: u32) -> PathBuf {
        self.dir.join(format!("flow_bwd_{frame:06}.flo"))
    }

    fn load(&self, frame: u32, forward: bool) -> Result<Option<Arc<FlowField>>, FlowError> {
        if let Some(hit) = self.cache.lock().unwrap().get(&(frame, forward)) {
            return Ok(hit.clone());
        }
        let path = if forward { self.forward_path(frame) } else { self.backward_path(frame) };
        let loaded = if path.exists() { Some(Arc::new(read_flo(&path)?)) } else { None };
        self.cache.lock().unwrap().insert((frame, forward), loaded.clone());
        Ok(loaded)
    }
}

impl FlowProvider for DirFlowProvider {
    fn step(&self, from: u32, to: u32) -> Result<FlowStep, FlowError> {
        if to == from + 1 {
            return self
                .load(from, true)?
                .map(FlowStep::Direct)
                .ok_or(FlowError::MissingFlow { from, to });
        }
        if from == to + 1 {
            if let Some(f) = self.load(from, false)? {
                return Ok(FlowStep::Direct(f));
            }
            if let Some(f) = self.load(to, true)? {
                log::warn!(
                    "backward flow {} -> {} missing; using negated forward flow of frame {}",
                    from,
                    to,
                    to
                );
                return Ok(FlowStep::Negated(f));
            }
        }
        Err(FlowError::MissingFlow { from, to })
    }
}

/// Trace a point from `source_frame` to `key_frame` by integrating one flow
/// step per frame.
///
/// If any intermediate position leaves the raster it is clamped to the
/// boundary and the trace is flagged `exited`; integration then continues
/// from the boundary. Tracing with `source_frame == key_frame` is the
/// identity.
pub fn trace_to_key(
    p: &PixelPoint,
    source_frame: u32,
    key_frame: u32,
    flows: &dyn FlowProvider,
) -> Result<(PixelPoint, bool), FlowError> {
    let mut pos = *p;
    let mut exited = false;
    let mut frame = source_frame;
    while frame != key_frame {
        let next = if key_frame > frame { frame + 1 } else { frame - 1 };
        let (du, dv) = match flows.step(frame, next)? {
            FlowStep::Direct(f) => sample_flow(&f, &pos)?,
            FlowStep::Negated(f) => {
                let (du, dv) = sample_flow(&f, &pos)?;
                (-du, -dv)
            }
        };
        pos = PixelPoint::new(pos.x + du, pos.y + dv);
        // Raster extent comes from the field we just sampled; all fields of
        // one video share it.
        let (w, h) = match flows.step(frame, next)? {
            FlowStep::Direct(f) | FlowStep::Negated(f) => (f.width(), f.height()),
        };
        let clamped = PixelPoint::new(
            pos.x.clamp(0.0, f64::from(w - 1)),
            pos.y.clamp(0.0, f64::from(h - 1)),
        );
        if clamped != pos {
            exited = true;
            pos = clamped;
        }
        frame = next;
    }
    Ok((pos, exited))
}

/// Exhaustive block-matching flow between two grayscale frames: per-block
/// integer displacement minimizing the sum of absolute differences, ties
/// broken by smaller displacement magnitude and then lexicographic (du, dv).
/// The winning displacement is replicated across the block.
///
/// This is a fixture generator standing in for a real flow estimator.
pub fn block_match_flow(
    frame_a: &GrayImage,
    frame_b: &GrayImage,
    block: u32,
    radius: u32,
) -> Result<FlowField, FlowError> {
    if frame_a.width() != frame_b.width() || frame_a.height() != frame_b.height() {
        return Err(FlowError::DimensionMismatch(
            frame_a.width(),
            frame_a.height(),
            frame_b.width(),
            frame_b.height(),
        ));
    }
    let (w, h) = (frame_a.width(), frame_a.height());
    let block = block.max(1);
    let mut flow = FlowField::zeros(w, h);
    let r = radius as i64;

    let mut by = 0;
    while by < h {
        let mut bx = 0;
        while bx < w {
            let x1 = (bx + block).min(w);
            let y1 = (by + block).min(h);
            let mut best: Option<(f64, i64, i64)> = None;
            for dv in -r..=r {
                for du in -r..=r {
                    let mut sad = 0.0f64;
                    for y in by..y1 {
                        for x in bx..x1 {
                            let a = frame_a.get(x, y);
                            let b = frame_b.get_clamped(i64::from(x) + du, i64::from(y) + dv);
                            sad += f64::from((a - b).abs());
                        }
                    }
                    let better = match &best {
                        None => true,
                        Some((s, bu, bv)) => {
                            let mag = du * du + dv * dv;
                            let bmag = bu * bu + bv * bv;
                            sad < *s
                                || (sad == *s && mag < bmag)
                                || (sad == *s && mag == bmag && (du, dv) < (*bu, *bv))
                        }
                    };
                    if better {
                        best = Some((sad, du, dv));
                    }
                }
            }
            let (_, du, dv) = best.expect("search window is never empty");
            for y in by..y1 {
                for x in bx..x1 {
                    flow.set(x, y, du as f32, dv as f32);
                }
            }
            bx += block;
        }
        by += block;
    }
    Ok(flow)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_flow_file_reads_back_as_zeros() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("z.flo");
        write_flo(&path, &FlowField::zeros(2, 2)).unwrap();
        assert_eq!(std::fs::metadata(&path).unwrap().len(), 4 + 4 + 4 + 32);
        let f = read_flo(&path).unwrap();
        assert_eq!(f, FlowField::zeros(2, 2));
    }

    #[test]
    fn bad_magic_rejected() {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&0.0f32.to_le_bytes());
        bytes.extend_from_slice(&2i32.to_le_bytes());
        bytes.extend_from_slice(&2i32.to_le_bytes());
        assert!(matches!(read_flo_from(&mut bytes.as_slice()), Err(FlowError::BadMagic)));
    }

    #[test]
    fn truncated_file_rejected() {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&FLO_MAGIC.to_le_bytes());
        bytes.extend_from_slice(&2i32.to_le_bytes());
        bytes.extend_from_slice(&2i32.to_le_bytes());
        bytes.extend_from_slice(&1.0f32.to_le_bytes()); // 1 of 8 values
        assert!(matches!(read_flo_from(&mut bytes.as_slice()), Err(FlowError::TruncatedFile)));
    }

    #[test]
    fn writer_is_the_reader_oracle() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.flo");
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut flow = FlowField::zeros(7, 5);
        for y in 0..5 {
            for x in 0..7 {
                flow.set(x, y, rng.gen_range(-10.0..10.0), rng.gen_range(-10.0..10.0));
            }
        }
        write_flo(&path, &flow).unwrap();
        let back = read_flo(&path).unwrap();
        for (a, b) in flow.data().iter().zip(back.data()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        // And the bytes themselves round-trip through a rewrite.
        let path2 = dir.path().join("r2.flo");
        write_flo(&path2, &back).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
    }

    #[test]
    fn sampling_constant_field_at_integer_points() {
        let f = FlowField::constant(8, 8, 2.0, -1.0);
        let (du, dv) = sample_flow(&f, &PixelPoint::new(3.0, 4.0)).unwrap();
        assert_eq!((du, dv), (2.0, -1.0));
    }

    #[test]
    fn sampling_interpolates_linearly_between_columns() {
        let mut f = FlowField::zeros(2, 1);
        f.set(0, 0, 0.0, 0.0);
        f.set(1, 0, 4.0, 8.0);
        let (du, dv) = sample_flow(&f, &PixelPoint::new(0.5, 0.0)).unwrap();
        assert!((du - 2.0).abs() < 1e-12);
        assert!((dv - 4.0).abs() < 1e-12);
    }

    #[test]
    fn sampling_matches_four_corner_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let (w, h) = (16u32, 12u32);
        let mut f = FlowField::zeros(w, h);
        for y in 0..h {
            for x in 0..w {
                f.set(x, y, rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0));
            }
        }
        for _ in 0..100 {
            let p = PixelPoint::new(
                rng.gen_range(0.0..f64::from(w - 1)),
                rng.gen_range(0.0..f64::from(h - 1)),
            );
            let (du, dv) = sample_flow(&f, &p).unwrap();
            // Independent weighted-corner oracle.
            let x0 = p.x.floor() as u32;
            let y0 = p.y.floor() as u32;
            let (fx, fy) = (p.x - f64::from(x0), p.y - f64::from(y0));
            let weights = [
                (x0, y0, (1.0 - fx) * (1.0 - fy)),
                (x0 + 1, y0, fx * (1.0 - fy)),
                (x0, y0 + 1, (1.0 - fx) * fy),
                (x0 + 1, y0 + 1, fx * fy),
            ];
            let mut eu = 0.0;
            let mut ev = 0.0;
            for (x, y, wgt) in weights {
                let (u, v) = f.get(x.min(w - 1), y.min(h - 1));
                eu += f64::from(u) * wgt;
                ev += f64::from(v) * wgt;
            }
            assert!((du - eu).abs() < 1e-6, "du {du} vs oracle {eu}");
            assert!((dv - ev).abs() < 1e-6, "dv {dv} vs oracle {ev}");
        }
    }

    #[test]
    fn out_of_raster_sampling_rejected() {
        let f = FlowField::zeros(4, 4);
        assert!(matches!(
            sample_flow(&f, &PixelPoint::new(3.5, 0.0)),
            Err(FlowError::OutOfRaster(..))
        ));
    }

    fn constant_provider(n: u32, w: u32, h: u32, du: f32, dv: f32) -> MemoryFlowProvider {
        let mut p = MemoryFlowProvider::default();
        for k in 0..n {
            p.insert_forward(k, FlowField::constant(w, h, du, dv));
            if k > 0 {
                p.insert_backward(k, FlowField::constant(w, h, -du, -dv));
            }
        }
        p
    }

    #[test]
    fn trace_with_source_equal_key_is_identity() {
        let p = constant_provider(4, 8, 8, 1.0, 1.0);
        let start = PixelPoint::new(3.25, 4.5);
        let (end, exited) = trace_to_key(&start, 2, 2, &p).unwrap();
        assert_eq!(end, start);
        assert!(!exited);
    }

    #[test]
    fn constant_translation_accumulates_over_12_steps() {
        let p = constant_provider(30, 256, 256, 2.0, -1.0);
        let (end, exited) = trace_to_key(&PixelPoint::new(100.0, 100.0), 10, 22, &p).unwrap();
        assert!(!exited);
        assert!((end.x - 124.0).abs() < 1e-9);
        assert!((end.y - 88.0).abs() < 1e-9);
    }

    #[test]
    fn backward_trace_uses_backward_fields() {
        // Forward motion (3, 0): tracing a future-frame point back to the key
        // applies the backward fields (-3, 0) per step.
        let p = constant_provider(30, 256, 256, 3.0, 0.0);
        let (end, exited) = trace_to_key(&PixelPoint::new(100.0, 50.0), 22, 10, &p).unwrap();
        assert!(!exited);
        assert!((end.x - 64.0).abs() < 1e-9);
        assert!((end.y - 50.0).abs() < 1e-9);
    }

    #[test]
    fn missing_backward_falls_back_to_negated_forward() {
        let mut p = MemoryFlowProvider::default();
        for k in 0..5 {
            p.insert_forward(k, FlowField::constant(64, 64, 1.5, 0.5));
        }
        let (end, _) = trace_to_key(&PixelPoint::new(30.0, 30.0), 3, 1, &p).unwrap();
        assert!((end.x - 27.0).abs() < 1e-9);
        assert!((end.y - 29.0).abs() < 1e-9);
    }

    #[test]
    fn exit_is_clamped_and_flagged() {
        let p = constant_provider(20, 32, 32, 5.0, 0.0);
        let (end, exited) = trace_to_key(&PixelPoint::new(25.0, 10.0), 0, 12, &p).unwrap();
        assert!(exited);
        assert_eq!(end.x, 31.0);
        assert_eq!(end.y, 10.0);
    }

    #[test]
    fn missing_flow_is_reported_with_the_pair() {
        let p = MemoryFlowProvider::default();
        match trace_to_key(&PixelPoint::new(1.0, 1.0), 0, 2, &p) {
            Err(FlowError::MissingFlow { from: 0, to: 1 }) => {}
            other => panic!("expected MissingFlow(0, 1), got {other:?}"),
        }
    }

    #[test]
    fn rotation_field_matches_closed_form() {
        // Per-step rotation by a small angle about the raster center is an
        // affine field, so bilinear sampling is exact and 12 steps compose to
        // a rotation by 12 theta.
        let (w, h) = (512u32, 512u32);
        let theta = 1.0f64.to_radians();
        let (cx, cy) = (f64::from(w - 1) / 2.0, f64::from(h - 1) / 2.0);
        let mut field = FlowField::zeros(w, h);
        for y in 0..h {
            for x in 0..w {
                let (rx, ry) = (f64::from(x) - cx, f64::from(y) - cy);
                let du = rx * theta.cos() - ry * theta.sin() - rx;
                let dv = rx * theta.sin() + ry * theta.cos() - ry;
                field.set(x, y, du as f32, dv as f32);
            }
        }
        let mut p = MemoryFlowProvider::default();
        for k in 0..12 {
            p.insert_forward(k, field.clone());
        }
        let start = PixelPoint::new(300.0, 256.0);
        let (end, exited) = trace_to_key(&start, 0, 12, &p).unwrap();
        assert!(!exited);
        let total = 12.0 * theta;
        let (rx, ry) = (start.x - cx, start.y - cy);
        let expect = PixelPoint::new(
            cx + rx * total.cos() - ry * total.sin(),
            cy + rx * total.sin() + ry * total.cos(),
        );
        assert!(end.distance(&expect) < 0.1, "trace {end:?} vs closed form {expect:?}");
    }

    #[test]
    fn block_match_on_identical_frames_is_zero() {
        let mut img = GrayImage::zeros(16, 16);
        for y in 0..16 {
            for x in 0..16 {
                img.set(x, y, ((x * 7 + y * 13) % 251) as f32);
            }
        }
        let flow = block_match_flow(&img, &img, 8, 4).unwrap();
        assert!(flow.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn block_match_recovers_known_shift() {
        // frame_b is frame_a shifted by (3, 0) under a wrapping pattern, so
        // interior blocks should report exactly that displacement.
        let (w, h) = (32u32, 16u32);
        let pattern = |x: i64, y: i64| (((x.rem_euclid(32)) * 31 + y * 17) % 197) as f32;
        let mut a = GrayImage::zeros(w, h);
        let mut b = GrayImage::zeros(w, h);
        for y in 0..h {
            for x in 0..w {
                a.set(x, y, pattern(i64::from(x), i64::from(y)));
                b.set(x, y, pattern(i64::from(x) - 3, i64::from(y)));
            }
        }
        let flow = block_match_flow(&a, &b, 8, 4).unwrap();
        let (du, dv) = flow.get(12, 8);
        assert_eq!((du, dv), (3.0, 0.0));
    }

    #[test]
    fn block_match_on_noise_stays_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let (w, h) = (24u32, 24u32);
        let mut a = GrayImage::zeros(w, h);
        let mut b = GrayImage::zeros(w, h);
        for y in 0..h {
            for x in 0..w {
                a.set(x, y, rng.gen_range(0.0..255.0));
                b.set(x, y, rng.gen_range(0.0..255.0));
            }
        }
        let flow = block_match_flow(&a, &b, 8, 4).unwrap();
        assert!(flow.data().iter().all(|v| v.is_finite() && v.abs() <= 4.0));
    }

    proptest! {
        #[test]
        fn flo_round_trip_is_bit_exact(w in 1u32..10, h in 1u32..10, seed in 0u64..500) {
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("p.flo");
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut flow = FlowField::zeros(w, h);
            for y in 0..h {
                for x in 0..w {
                    flow.set(x, y, rng.gen_range(-100.0..100.0), rng.gen_range(-100.0..100.0));
                }
            }
            write_flo(&path, &flow).unwrap();
            let back = read_flo(&path).unwrap();
            prop_assert_eq!(flow, back);
        }

        #[test]
        fn tracing_zero_flow_is_identity(
            src in 0u32..10,
            key in 0u32..10,
            x in 0.0f64..31.0,
            y in 0.0f64..31.0,
        ) {
            let mut p = MemoryFlowProvider::default();
            for k in 0..10 {
                p.insert_forward(k, FlowField::zeros(32, 32));
                p.insert_backward(k, FlowField::zeros(32, 32));
            }
            let start = PixelPoint::new(x, y);
            let (end, exited) = trace_to_key(&start, src, key, &p).unwrap();
            prop_assert_eq!(end, start);
            prop_assert!(!exited);
        }

        #[test]
        fn tracing_composes_through_intermediate_frames(
            x in 5.0f64..50.0,
            y in 5.0f64..50.0,
            mid in 1u32..11,
        ) {
            let p = constant_provider(14, 128, 128, 0.5, -0.25);
            let start = PixelPoint::new(x, y);
            let (direct, _) = trace_to_key(&start, 0, 12, &p).unwrap();
            let (via_mid, _) = trace_to_key(&start, 0, mid, &p).unwrap();
            let (composed, _) = trace_to_key(&via_mid, mid, 12, &p).unwrap();
            prop_assert!(direct.distance(&composed) <= 0.01,
                "direct {:?} vs composed {:?}", direct, composed);
        }
    }
}
