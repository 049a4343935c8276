//! Homography estimation and gaze projection between the driver-view (ETG)
//! and rooftop (GAR) image planes.
//!
//! Estimation is the normalized (Hartley) DLT: both point sets are translated
//! to their centroid and scaled to mean radius sqrt(2), the 2n x 9
//! homogeneous system is solved through the eigenvector of the normal matrix
//! with the smallest eigenvalue, and the result is de-normalized. A seeded
//! RANSAC wrapper replaces the manual outlier correction pass applied to the
//! original data.

use nalgebra::{Matrix3, SMatrix};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::{BufWriter, Write};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("need at least 4 correspondences, got {0}")]
    InsufficientPoints(usize),
    #[error("degenerate point configuration")]
    DegenerateConfiguration,
    #[error("no consensus model found (best support {best})")]
    NoModelFound { best: usize },
    #[error("point maps to infinity")]
    PointAtInfinity,
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed file {path}: {detail}")]
    MalformedFile { path: String, detail: String },
}

/// A position in image pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PixelPoint {
    pub x: f64,
    pub y: f64,
}

impl PixelPoint {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn distance(&self, other: &PixelPoint) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2)).sqrt()
    }
}

/// A matched point pair: `src` in the ETG view, `dst` in the GAR view.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence {
    pub src: PixelPoint,
    pub dst: PixelPoint,
}

/// 3x3 projective map, row-major, normalized so that `m[2][2] = 1` when that
/// entry is away from zero and to unit Frobenius norm otherwise. Always full
/// rank.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography {
    m: Matrix3<f64>,
}

impl Homography {
    pub fn identity() -> Self {
        Self { m: Matrix3::identity() }
    }

    /// Build from row-major entries, normalizing and checking rank.
    pub fn from_rows(rows: [[f64; 3]; 3]) -> Result<Self, GeometryError> {
        let m = Matrix3::new(
            rows[0][0], rows[0][1], rows[0][2], //
            rows[1][0], rows[1][1], rows[1][2], //
            rows[2][0], rows[2][1], rows[2][2],
        );
        Self::from_matrix(m)
    }

    fn from_matrix(m: Matrix3<f64>) -> Result<Self, GeometryError> {
        if m.iter().any(|v| !v.is_finite()) {
            return Err(GeometryError::DegenerateConfiguration);
        }
        let mut m = m;
        if m[(2, 2)].abs() > 1e-12 {
            m /= m[(2, 2)];
        } else {
            let norm = m.norm();
            if norm == 0.0 {
                return Err(GeometryError::DegenerateConfiguration);
            }
            m /= norm;
            // Fix the projective sign so the representation is canonical.
            let lead = m.iter().cloned().fold(0.0f64, |a, v| if v.abs() > a.abs() { v } else { a });
            if lead < 0.0 {
                m = -m;
            }
        }
        if m.determinant().abs() <= 1e-12 {
            return Err(GeometryError::DegenerateConfiguration);
        }
        Ok(Self { m })
    }

    pub fn rows(&self) -> [[f64; 3]; 3] {
        [
            [self.m[(0, 0)], self.m[(0, 1)], self.m[(0, 2)]],
            [self.m[(1, 0)], self.m[(1, 1)], self.m[(1, 2)]],
            [self.m[(2, 0)], self.m[(2, 1)], self.m[(2, 2)]],
        ]
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.m[(row, col)]
    }

    pub fn inverse(&self) -> Result<Homography, GeometryError> {
        let inv = self.m.try_inverse().ok_or(GeometryError::DegenerateConfiguration)?;
        Homography::from_matrix(inv)
    }

    /// Composition: `(a.compose(b))(p) = a(b(p))`.
    pub fn compose(&self, other: &Homography) -> Result<Homography, GeometryError> {
        Homography::from_matrix(self.m * other.m)
    }
}

/// RANSAC parameters. The defaults (3 px, 0.995, 2000 iterations) are common
/// practice; the seed makes every run reproducible.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RansacConfig {
    pub inlier_threshold_px: f64,
    pub confidence: f64,
    pub max_iters: usize,
    pub seed: u64,
}

impl Default for RansacConfig {
    fn default() -> Self {
        Self { inlier_threshold_px: 3.0, confidence: 0.995, max_iters: 2000, seed: 0 }
    }
}

impl RansacConfig {
    fn validate(&self) -> Result<(), GeometryError> {
        if !(self.confidence > 0.0 && self.confidence < 1.0) || self.inlier_threshold_px <= 0.0 {
            return Err(GeometryError::DegenerateConfiguration);
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// DLT
// ---------------------------------------------------------------------------

struct Normalization {
    points: Vec<PixelPoint>,
    transform: Matrix3<f64>,
}

/// Hartley normalization: centroid to the origin, mean radius to sqrt(2).
fn normalize_points(points: &[PixelPoint]) -> Option<Normalization> {
    let n = points.len() as f64;
    let cx = points.iter().map(|p| p.x).sum::<f64>() / n;
    let cy = points.iter().map(|p| p.y).sum::<f64>() / n;
    let mean_dist =
        points.iter().map(|p| ((p.x - cx).powi(2) + (p.y - cy).powi(2)).sqrt()).sum::<f64>() / n;
    if mean_dist < 1e-12 {
        return None; // all points (near-)coincident
    }
    let s = std::f64::consts::SQRT_2 / mean_dist;
    let points =
        points.iter().map(|p| PixelPoint::new((p.x - cx) * s, (p.y - cy) * s)).collect();
    let transform = Matrix3::new(s, 0.0, -s * cx, 0.0, s, -s * cy, 0.0, 0.0, 1.0);
    Some(Normalization { points, transform })
}

/// True if any three of the points span a triangle of area below `threshold`.
fn has_collinear_triple(points: &[PixelPoint], threshold: f64) -> bool {
    for i in 0..points.len() {
        for j in (i + 1)..points.len() {
            for k in (j + 1)..points.len() {
                let (a, b, c) = (points[i], points[j], points[k]);
                let cross = (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
                if cross.abs() * 0.5 < threshold {
                    return true;
                }
            }
        }
    }
    false
}

/// Estimate `H` with `dst ~ H src` by the normalized DLT.
///
/// On noise-free inputs generated by a true homography the maximum transfer
/// error is below 1e-6 px. Minimal 4-point sets are rejected as degenerate
/// when any source triple is collinear (triangle area below 1e-6 in
/// normalized coordinates); larger sets are guarded by the rank check on the
/// resulting matrix.
pub fn estimate_homography_dlt(corrs: &[Correspondence]) -> Result<Homography, GeometryError> {
    let n = corrs.len();
    if n < 4 {
        return Err(GeometryError::InsufficientPoints(n));
    }
    let src: Vec<PixelPoint> = corrs.iter().map(|c| c.src).collect();
    let dst: Vec<PixelPoint> = corrs.iter().map(|c| c.dst).collect();
    let src_n = normalize_points(&src).ok_or(GeometryError::DegenerateConfiguration)?;
    let dst_n = normalize_points(&dst).ok_or(GeometryError::DegenerateConfiguration)?;
    if n == 4 && has_collinear_triple(&src_n.points, 1e-6) {
        return Err(GeometryError::DegenerateConfiguration);
    }

    // Accumulate the 9x9 normal matrix A^T A directly; each correspondence
    // contributes two rows of A.
    let mut normal = SMatrix::<f64, 9, 9>::zeros();
    let mut add_row = |row: [f64; 9]| {
        for j in 0..9 {
            if row[j] == 0.0 {
                continue;
            }
            for k in 0..9 {
                normal[(j, k)] += row[j] * row[k];
            }
        }
    };
    for (s, d) in src_n.points.iter().zip(dst_n.points.iter()) {
        let (x, y) = (s.x, s.y);
        let (u, v) = (d.x, d.y);
        add_row([-x, -y, -1.0, 0.0, 0.0, 0.0, u * x, u * y, u]);
        add_row([0.0, 0.0, 0.0, -x, -y, -1.0, v * x, v * y, v]);
    }

    let eig = nalgebra::SymmetricEigen::new(normal);
    let mut min_idx = 0;
    for i in 1..9 {
        if eig.eigenvalues[i] < eig.eigenvalues[min_idx] {
            min_idx = i;
        }
    }
    let h = eig.eigenvectors.column(min_idx);
    let h_norm = Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], h[8]);

    let t_dst_inv =
        dst_n.transform.try_inverse().ok_or(GeometryError::DegenerateConfiguration)?;
    Homography::from_matrix(t_dst_inv * h_norm * src_n.transform)
}

// ---------------------------------------------------------------------------
// RANSAC
// ---------------------------------------------------------------------------

/// Squared symmetric transfer error: mean of the squared forward and backward
/// transfer distances.
fn sym_transfer_sq(h: &Homography, h_inv: &Homography, c: &Correspondence) -> f64 {
    let fwd = match project_point(h, &c.src) {
        Ok(p) => p.distance(&c.dst).powi(2),
        Err(_) => return f64::INFINITY,
    };
    let bwd = match project_point(h_inv, &c.dst) {
        Ok(p) => p.distance(&c.src).powi(2),
        Err(_) => return f64::INFINITY,
    };
    0.5 * (fwd + bwd)
}

fn adaptive_iterations(inlier_ratio: f64, confidence: f64, cap: usize) -> usize {
    let p_good_sample = inlier_ratio.powi(4);
    if p_good_sample >= 1.0 {
        return 1;
    }
    if p_good_sample <= 0.0 {
        return cap;
    }
    let n = (1.0 - confidence).ln() / (1.0 - p_good_sample).ln();
    if !n.is_finite() || n >= cap as f64 {
        cap
    } else {
        n.ceil().max(1.0) as usize
    }
}

/// Robust homography estimation: seeded 4-point RANSAC with adaptive
/// iteration count, refit on the consensus set by DLT.
///
/// A correspondence is an inlier when its symmetric transfer error is below
/// `cfg.inlier_threshold_px`. The returned mask is evaluated against the
/// refit model. Deterministic for a fixed seed and input order.
pub fn estimate_homography_ransac(
    corrs: &[Correspondence],
    cfg: &RansacConfig,
) -> Result<(Homography, Vec<bool>), GeometryError> {
    let n = corrs.len();
    if n < 4 {
        return Err(GeometryError::InsufficientPoints(n));
    }
    cfg.validate()?;
    let thr_sq = cfg.inlier_threshold_px * cfg.inlier_threshold_px;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut best: Option<(Homography, usize)> = None;
    let mut needed = cfg.max_iters;
    let mut iter = 0;
    while iter < needed {
        iter += 1;
        let idx = rand::seq::index::sample(&mut rng, n, 4);
        let sample: Vec<Correspondence> = idx.iter().map(|i| corrs[i]).collect();
        let model = match estimate_homography_dlt(&sample) {
            Ok(h) => h,
            Err(_) => continue, // degenerate draw
        };
        let model_inv = match model.inverse() {
            Ok(h) => h,
            Err(_) => continue,
        };
        let support =
            corrs.iter().filter(|c| sym_transfer_sq(&model, &model_inv, c) < thr_sq).count();
        if best.as_ref().map_or(true, |(_, s)| support > *s) {
            best = Some((model, support));
            let ratio = support as f64 / n as f64;
            needed = needed.min(adaptive_iterations(ratio, cfg.confidence, cfg.max_iters));
        }
    }

    let (best_model, best_support) = best.ok_or(GeometryError::NoModelFound { best: 0 })?;
    if best_support < 4 {
        return Err(GeometryError::NoModelFound { best: best_support });
    }

    let best_inv = best_model.inverse()?;
    let consensus: Vec<Correspondence> = corrs
        .iter()
        .filter(|c| sym_transfer_sq(&best_model, &best_inv, c) < thr_sq)
        .cloned()
        .collect();
    let refit = estimate_homography_dlt(&consensus).unwrap_or(best_model);
    let refit_inv = refit.inverse()?;
    let mask: Vec<bool> =
        corrs.iter().map(|c| sym_transfer_sq(&refit, &refit_inv, c) < thr_sq).collect();
    Ok((refit, mask))
}

// ---------------------------------------------------------------------------
// Projection and frame clamping
// ---------------------------------------------------------------------------

/// Apply the projective map to a point.
pub fn project_point(h: &Homography, p: &PixelPoint) -> Result<PixelPoint, GeometryError> {
    let m = &h.m;
    let w = m[(2, 0)] * p.x + m[(2, 1)] * p.y + m[(2, 2)];
    if w.abs() <= 1e-12 {
        return Err(GeometryError::PointAtInfinity);
    }
    Ok(PixelPoint::new(
        (m[(0, 0)] * p.x + m[(0, 1)] * p.y + m[(0, 2)]) / w,
        (m[(1, 0)] * p.x + m[(1, 1)] * p.y + m[(1, 2)]) / w,
    ))
}

/// Push a point inside the frame by independent per-axis clamping, so an
/// off-frame gaze point keeps its horizontal side and its elevation.
///
/// Returns the clamped point and whether any component moved.
pub fn clamp_to_frame(p: &PixelPoint, width: u32, height: u32) -> (PixelPoint, bool) {
    debug_assert!(width > 0 && height > 0);
    let cx = p.x.clamp(0.0, f64::from(width - 1));
    let cy = p.y.clamp(0.0, f64::from(height - 1));
    let clamped = PixelPoint::new(cx, cy);
    let moved = cx != p.x || cy != p.y;
    (clamped, moved)
}

// ---------------------------------------------------------------------------
// File formats
// ---------------------------------------------------------------------------

const CORRESPONDENCE_HEADER: &str = "src_x,src_y,dst_x,dst_y";

pub fn read_correspondences(path: &Path) -> Result<Vec<Correspondence>, GeometryError> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == CORRESPONDENCE_HEADER => {}
        other => {
            return Err(GeometryError::MalformedFile {
                path: path.display().to_string(),
                detail: format!("bad header {other:?}"),
            })
        }
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let nums: Result<Vec<f64>, _> = line.split(',').map(|t| t.trim().parse()).collect();
        match nums {
            Ok(v) if v.len() == 4 => out.push(Correspondence {
                src: PixelPoint::new(v[0], v[1]),
                dst: PixelPoint::new(v[2], v[3]),
            }),
            _ => {
                return Err(GeometryError::MalformedFile {
                    path: path.display().to_string(),
                    detail: format!("malformed row at line {}", i + 2),
                })
            }
        }
    }
    Ok(out)
}

pub fn write_correspondences(path: &Path, corrs: &[Correspondence]) -> Result<(), GeometryError> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "{CORRESPONDENCE_HEADER}")?;
    for c in corrs {
        writeln!(w, "{},{},{},{}", c.src.x, c.src.y, c.dst.x, c.dst.y)?;
    }
    w.flush()?;
    Ok(())
}

/// `%.12g`-style text: 12 significant digits, scientific notation outside
/// the `%f` range, trailing zeros trimmed.
pub fn format_g12(v: f64) -> String {
    format_g(v, 12)
}

fn format_g(v: f64, sig: usize) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    let exp = v.abs().log10().floor() as i32;
    if exp < -4 || exp >= sig as i32 {
        let s = format!("{:.*e}", sig - 1, v);
        // trim trailing zeros in the mantissa: "1.230000e5" -> "1.23e5"
        if let Some(epos) = s.find('e') {
            let (mant, expo) = s.split_at(epos);
            let mant = mant.trim_end_matches('0').trim_end_matches('.');
            return format!("{mant}{expo}");
        }
        s
    } else {
        let decimals = (sig as i32 - 1 - exp).max(0) as usize;
        let s = format!("{:.*}", decimals, v);
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    }
}

/// One line of 9 row-major floats.
pub fn write_homography(path: &Path, h: &Homography) -> Result<(), GeometryError> {
    let rows = h.rows();
    let tokens: Vec<String> =
        rows.iter().flat_map(|r| r.iter().map(|&v| format_g12(v))).collect();
    std::fs::write(path, format!("{}\n", tokens.join(" ")))?;
    Ok(())
}

pub fn read_homography(path: &Path) -> Result<Homography, GeometryError> {
    let text = std::fs::read_to_string(path)?;
    let nums: Result<Vec<f64>, _> = text.split_whitespace().map(|t| t.parse()).collect();
    match nums {
        Ok(v) if v.len() == 9 => Homography::from_rows([
            [v[0], v[1], v[2]],
            [v[3], v[4], v[5]],
            [v[6], v[7], v[8]],
        ]),
        _ => Err(GeometryError::MalformedFile {
            path: path.display().to_string(),
            detail: "expected 9 floats".into(),
        }),
    }
}
