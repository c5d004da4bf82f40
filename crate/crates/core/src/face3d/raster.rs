//! Landmark images: one-pixel polylines over the 68-point topology.

use std::io::BufWriter;
use std::path::Path;

use super::camera::{project, CameraPose, Intrinsics};
use super::model::{FaceModel, Vec3, N_LANDMARKS};
use crate::error::{Error, Result};
use crate::nn::Tensor;

/// `(first, last_exclusive, closed, rgb)` in draw order.
pub const PARTS: [(usize, usize, bool, [f64; 3]); 8] = [
    (0, 17, false, [1.0, 1.0, 1.0]),
    (17, 22, false, [1.0, 0.5, 0.0]),
    (22, 27, false, [1.0, 0.5, 0.0]),
    (27, 36, false, [0.0, 0.8, 1.0]),
    (36, 42, true, [0.0, 1.0, 0.0]),
    (42, 48, true, [0.0, 1.0, 0.0]),
    (48, 60, true, [1.0, 0.0, 0.0]),
    (60, 68, true, [1.0, 0.0, 1.0]),
];

/// Rasterized landmarks, `H×W×3` row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct LandmarkFrame {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<f64>,
    pub points: Vec<[f64; 2]>,
}

impl LandmarkFrame {
    pub fn pixel(&self, x: usize, y: usize) -> [f64; 3] {
        let i = (y * self.width + x) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    /// Channel-first `[3, H, W]` copy.
    pub fn to_chw(&self) -> Tensor {
        hwc_to_chw(&self.pixels, self.height, self.width)
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        write_png(path, &self.pixels, self.width, self.height)
    }
}

pub(crate) fn hwc_to_chw(pixels: &[f64], h: usize, w: usize) -> Tensor {
    let mut out = vec![0.0; 3 * h * w];
    for (i, px) in pixels.chunks_exact(3).enumerate() {
        for c in 0..3 {
            out[c * h * w + i] = px[c];
        }
    }
    Tensor::from_parts(vec![3, h, w], out)
}

/// 8-bit RGB PNG of `H×W×3` values in `[0, 1]`.
pub fn write_png(path: &Path, pixels: &[f64], width: usize, height: usize) -> Result<()> {
    if pixels.len() != width * height * 3 {
        return Err(Error::Shape(format!("{} values for a {width}x{height} RGB image", pixels.len())));
    }
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut enc = png::Encoder::new(BufWriter::new(file), width as u32, height as u32);
    enc.set_color(png::ColorType::Rgb);
    enc.set_depth(png::BitDepth::Eight);
    let bytes: Vec<u8> = pixels.iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect();
    let mut w = enc
        .write_header()
        .map_err(|e| Error::io(path, std::io::Error::other(e)))?;
    w.write_image_data(&bytes)
        .map_err(|e| Error::io(path, std::io::Error::other(e)))
}

/// Liang–Barsky clip of a segment to `[lo_x, hi_x] × [lo_y, hi_y]`.
fn clip(a: [f64; 2], b: [f64; 2], lo: [f64; 2], hi: [f64; 2]) -> Option<([f64; 2], [f64; 2])> {
    let d = [b[0] - a[0], b[1] - a[1]];
    let (mut t0, mut t1) = (0.0f64, 1.0f64);
    for axis in 0..2 {
        for (p, q) in [(-d[axis], a[axis] - lo[axis]), (d[axis], hi[axis] - a[axis])] {
            if p == 0.0 {
                if q < 0.0 {
                    return None;
                }
            } else {
                let r = q / p;
                if p < 0.0 {
                    t0 = t0.max(r);
                } else {
                    t1 = t1.min(r);
                }
            }
        }
    }
    (t0 <= t1).then(|| {
        (
            [a[0] + t0 * d[0], a[1] + t0 * d[1]],
            [a[0] + t1 * d[0], a[1] + t1 * d[1]],
        )
    })
}

/// Integer Bresenham line, calling `plot` for every pixel.
pub fn bresenham(x0: i64, y0: i64, x1: i64, y1: i64, mut plot: impl FnMut(i64, i64)) {
    let dx = (x1 - x0).abs();
    let dy = -(y1 - y0).abs();
    let sx = if x0 < x1 { 1 } else { -1 };
    let sy = if y0 < y1 { 1 } else { -1 };
    let (mut x, mut y) = (x0, y0);
    let mut err = dx + dy;
    loop {
        plot(x, y);
        if x == x1 && y == y1 {
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

/// Draws the fixed topology on black. Pixel `(x, y)` covers
/// `[x, x+1) × [y, y+1)`; segments are clipped to a one-pixel margin
/// around the frame before scan conversion, and non-finite points are
/// skipped.
pub fn rasterize(points: &[[f64; 2]], height: usize, width: usize) -> Result<LandmarkFrame> {
    if points.len() != N_LANDMARKS {
        return Err(Error::LengthMismatch(format!(
            "{} landmarks, expected {N_LANDMARKS}",
            points.len()
        )));
    }
    if height < 64 || width < 64 {
        return Err(Error::InvalidArgument(format!("frame {width}x{height} is smaller than 64x64")));
    }
    let mut pixels = vec![0.0; height * width * 3];
    let lo = [-1.0, -1.0];
    let hi = [width as f64 + 1.0, height as f64 + 1.0];
    for &(first, last, closed, color) in &PARTS {
        let mut segs: Vec<(usize, usize)> = (first..last - 1).map(|i| (i, i + 1)).collect();
        if closed {
            segs.push((last - 1, first));
        }
        for (i, j) in segs {
            let (a, b) = (points[i], points[j]);
            if !a.iter().chain(&b).all(|v| v.is_finite()) {
                continue;
            }
            let Some((a, b)) = clip(a, b, lo, hi) else { continue };
            let (x0, y0) = (a[0].floor() as i64, a[1].floor() as i64);
            let (x1, y1) = (b[0].floor() as i64, b[1].floor() as i64);
            bresenham(x0, y0, x1, y1, |x, y| {
                if x >= 0 && y >= 0 && (x as usize) < width && (y as usize) < height {
                    let k = (y as usize * width + x as usize) * 3;
                    pixels[k..k + 3].copy_from_slice(&color);
                }
            });
        }
    }
    Ok(LandmarkFrame {
        width,
        height,
        pixels,
        points: points.to_vec(),
    })
}

/// Landmarks of the face driven by identity `s`, head vector `m_hed`
/// (offset from `rest`), upper-face and mouth parameters.
pub fn drive_landmarks(
    model: &FaceModel,
    s: &[f64],
    m_hed: &[f64],
    m_upp: &[f64],
    m_mou: &[f64],
    k: &Intrinsics,
    rest: Vec3,
) -> Result<Vec<[f64; 2]>> {
    let e = FaceModel::expression(m_upp, m_mou)?;
    let pose = CameraPose::from_head(m_hed, rest)?;
    project(&model.eval_landmarks(s, &e)?, &pose, k)
}

/// Per-frame landmarks for `[T, 6]` head, `[T, 23]` upper-face and
/// `[T, 28]` mouth tracks.
pub fn drive_track(
    model: &FaceModel,
    s: &[f64],
    head: &Tensor,
    upper: &Tensor,
    mouth: &Tensor,
    k: &Intrinsics,
    rest: Vec3,
) -> Result<Vec<Vec<[f64; 2]>>> {
    let t = head.dim(0);
    if upper.dim(0) != t || mouth.dim(0) != t {
        return Err(Error::LengthMismatch(format!(
            "head {t}, upper {}, mouth {} frames",
            upper.dim(0),
            mouth.dim(0)
        )));
    }
    (0..t)
        .map(|i| drive_landmarks(model, s, head.row(i), upper.row(i), mouth.row(i), k, rest))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn collapsed_points_light_one_pixel_in_last_part_color() {
        let f = rasterize(&[[10.5, 20.25]; 68], 64, 64).unwrap();
        for y in 0..64 {
            for x in 0..64 {
                let want = if (x, y) == (10, 20) { PARTS[7].3 } else { [0.0; 3] };
                assert_eq!(f.pixel(x, y), want);
            }
        }
    }

    #[test]
    fn far_out_of_frame_points_are_clipped() {
        let mut pts = [[32.0, 32.0]; 68];
        pts[0] = [1e300, -1e300];
        pts[5] = [-5e9, 40.0];
        pts[40] = [f64::NAN, 0.0];
        let a = rasterize(&pts, 64, 64).unwrap();
        assert_eq!(a.pixels, rasterize(&pts, 64, 64).unwrap().pixels);
        assert!(a.pixels.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn bresenham_octants_are_connected() {
        for (x1, y1) in [(7, 3), (3, 7), (-7, 3), (-3, -7), (0, 5), (5, 0)] {
            let mut px = Vec::new();
            bresenham(0, 0, x1, y1, |x, y| px.push((x, y)));
            assert_eq!(px.len() as i64, x1.abs().max(y1.abs()) + 1);
            for w in px.windows(2) {
                assert!((w[0].0 - w[1].0).abs() <= 1 && (w[0].1 - w[1].1).abs() <= 1);
            }
            assert_eq!(*px.last().unwrap(), (x1, y1));
        }
    }

    #[test]
    fn rejects_small_frames() {
        assert!(rasterize(&[[0.0; 2]; 68], 32, 64).is_err());
    }
}
