//! Procedural target speaker: textured frames painted from 2D landmarks,
//! plus the visible watermark stamped on synthesized output.

use serde::{Deserialize, Serialize};

use super::train::RenderSample;
use super::volume::{build_volume, PixelBox};
use crate::error::{Error, Result};
use crate::face3d::{hwc_to_chw, rasterize, N_LANDMARKS};
use crate::nn::Tensor;

const SKIN: [f64; 3] = [0.86, 0.66, 0.52];
const HAIR: [f64; 3] = [0.25, 0.16, 0.10];
const SHIRT: [f64; 3] = [0.20, 0.35, 0.60];
const BROW: [f64; 3] = [0.30, 0.20, 0.12];
const SCLERA: [f64; 3] = [0.95, 0.95, 0.95];
const IRIS: [f64; 3] = [0.15, 0.25, 0.30];
const LIP: [f64; 3] = [0.75, 0.30, 0.32];
const CAVITY: [f64; 3] = [0.25, 0.05, 0.08];
const NOSE: [f64; 3] = [0.72, 0.52, 0.42];

/// Boxes around the regions that move with speech.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpeakerBoxes {
    pub face: PixelBox,
    pub mouth: PixelBox,
    pub left_eye: PixelBox,
    pub right_eye: PixelBox,
}

impl SpeakerBoxes {
    pub fn from_landmarks(points: &[[f64; 2]], height: usize, width: usize) -> Result<Self> {
        check_points(points)?;
        Ok(Self {
            face: PixelBox::around(points, 2.0, height, width)?,
            mouth: PixelBox::around(&points[48..68], 2.0, height, width)?,
            left_eye: PixelBox::around(&points[36..42], 2.0, height, width)?,
            right_eye: PixelBox::around(&points[42..48], 2.0, height, width)?,
        })
    }

    /// Whether a pixel lies in the mouth or either eye box.
    pub fn in_moving_region(&self, x: usize, y: usize) -> bool {
        self.mouth.contains(x, y) || self.left_eye.contains(x, y) || self.right_eye.contains(x, y)
    }
}

fn check_points(points: &[[f64; 2]]) -> Result<()> {
    if points.len() != N_LANDMARKS {
        return Err(Error::LengthMismatch(format!(
            "{} landmarks, expected {N_LANDMARKS}",
            points.len()
        )));
    }
    if points.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("speaker landmarks".into()));
    }
    Ok(())
}

/// Even-odd point-in-polygon test.
fn inside(poly: &[[f64; 2]], x: f64, y: f64) -> bool {
    let mut c = false;
    let mut j = poly.len() - 1;
    for i in 0..poly.len() {
        let (a, b) = (poly[i], poly[j]);
        if (a[1] > y) != (b[1] > y) && x < (b[0] - a[0]) * (y - a[1]) / (b[1] - a[1]) + a[0] {
            c = !c;
        }
        j = i;
    }
    c
}

fn seg_dist(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let (qx, qy) = (a[0] + t * dx - p[0], a[1] + t * dy - p[1]);
    (qx * qx + qy * qy).sqrt()
}

fn near_polyline(line: &[[f64; 2]], p: [f64; 2], r: f64) -> bool {
    line.windows(2).any(|s| seg_dist(p, s[0], s[1]) <= r)
}

fn centroid(pts: &[[f64; 2]]) -> [f64; 2] {
    let n = pts.len() as f64;
    let s = pts.iter().fold([0.0, 0.0], |a, p| [a[0] + p[0], a[1] + p[1]]);
    [s[0] / n, s[1] / n]
}

/// Paints the speaker for one frame as `[3, H, W]` in `[0, 1]`. The
/// background and torso are static; head, brows, eyes, nose and lips
/// follow the landmarks. Pixels are sampled at their centres.
pub fn paint_speaker(points: &[[f64; 2]], height: usize, width: usize) -> Result<Tensor> {
    check_points(points)?;
    if height == 0 || width == 0 {
        return Err(Error::InvalidArgument("empty image".into()));
    }
    let jaw = &points[0..17];
    let brows: Vec<[f64; 2]> = points[17..27].iter().rev().copied().collect();
    let face_h = (jaw[8][1] - points[27][1]).abs().max(1.0);
    // Head outline: jaw, then the brows lifted into a forehead.
    let mut head: Vec<[f64; 2]> = jaw.to_vec();
    head.extend(brows.iter().map(|p| [p[0], p[1] - 0.35 * face_h]));
    // Everything in the head above this line is hair.
    let mut hair_cap: Vec<[f64; 2]> = brows.iter().map(|p| [p[0], p[1] - 0.25 * face_h]).collect();
    hair_cap.push([brows[brows.len() - 1][0], -1.0]);
    hair_cap.push([brows[0][0], -1.0]);
    let outer_lip = &points[48..60];
    let inner_lip = &points[60..68];
    let eyes = [&points[36..42], &points[42..48]];
    let iris_r = eyes
        .iter()
        .map(|e| (e[3][0] - e[0][0]).abs() * 0.22)
        .fold(f64::INFINITY, f64::min)
        .max(0.6);
    let line_r = (0.02 * face_h).max(0.5);

    let mut px = vec![0.0; height * width * 3];
    for y in 0..height {
        for x in 0..width {
            let p = [x as f64 + 0.5, y as f64 + 0.5];
            let (u, v) = (p[0] / width as f64, p[1] / height as f64);
            let stripe = if ((u * 6.0).floor() as i64) % 2 == 0 { 0.04 } else { 0.0 };
            let mut c = [0.55 + 0.25 * v + stripe, 0.60 + 0.15 * v + stripe, 0.68 - 0.1 * v + stripe];
            let dx = (u - 0.5) / 0.45;
            if v > 0.82 && dx * dx + ((v - 1.05) / 0.3).powi(2) < 1.0 {
                c = SHIRT;
            }
            if inside(&head, p[0], p[1]) {
                c = if inside(&hair_cap, p[0], p[1]) { HAIR } else { SKIN };
                if near_polyline(&points[27..31], p, line_r) || near_polyline(&points[31..36], p, line_r) {
                    c = NOSE;
                }
                if near_polyline(&points[17..22], p, 1.5 * line_r) || near_polyline(&points[22..27], p, 1.5 * line_r) {
                    c = BROW;
                }
                for e in eyes {
                    if inside(e, p[0], p[1]) {
                        let m = centroid(e);
                        let d = ((p[0] - m[0]).powi(2) + (p[1] - m[1]).powi(2)).sqrt();
                        c = if d <= iris_r { IRIS } else { SCLERA };
                    }
                }
                if inside(outer_lip, p[0], p[1]) {
                    c = if inside(inner_lip, p[0], p[1]) { CAVITY } else { LIP };
                }
            }
            px[(y * width + x) * 3..][..3].copy_from_slice(&c);
        }
    }
    Ok(hwc_to_chw(&px, height, width))
}

/// Rasterized landmark frames of a whole track, `[3, H, W]` each.
pub fn landmark_frames(track: &[Vec<[f64; 2]>], height: usize, width: usize) -> Result<Vec<Tensor>> {
    track.iter().map(|p| Ok(rasterize(p, height, width)?.to_chw())).collect()
}

/// Renderer training samples for the chosen frames: volumes over the
/// rasterized `driving` landmarks, targets painted from the `observed`
/// landmarks, and face boxes around the observed face.
pub fn speaker_samples(
    driving: &[Vec<[f64; 2]>],
    observed: &[Vec<[f64; 2]>],
    height: usize,
    width: usize,
    frames: &[usize],
) -> Result<Vec<RenderSample>> {
    if driving.len() != observed.len() {
        return Err(Error::LengthMismatch(format!(
            "{} driving and {} observed frames",
            driving.len(),
            observed.len()
        )));
    }
    let lm = landmark_frames(driving, height, width)?;
    frames
        .iter()
        .map(|&t| {
            let points = observed.get(t).ok_or(Error::IndexOutOfRange {
                what: "speaker frames",
                index: t,
                size: observed.len(),
            })?;
            Ok(RenderSample {
                volume: build_volume(&lm, t)?,
                target: paint_speaker(points, height, width)?,
                face_box: SpeakerBoxes::from_landmarks(points, height, width)?.face,
            })
        })
        .collect()
}

const GLYPH_W: usize = 3;
const GLYPH_H: usize = 5;

fn glyph(ch: char) -> [u8; GLYPH_H] {
    match ch {
        'S' => [0b111, 0b100, 0b111, 0b001, 0b111],
        'Y' => [0b101, 0b101, 0b010, 0b010, 0b010],
        'N' => [0b101, 0b111, 0b111, 0b111, 0b101],
        'T' => [0b111, 0b010, 0b010, 0b010, 0b010],
        'H' => [0b101, 0b101, 0b111, 0b101, 0b101],
        'E' => [0b111, 0b100, 0b110, 0b100, 0b111],
        'I' => [0b111, 0b010, 0b010, 0b010, 0b111],
        'C' => [0b111, 0b100, 0b100, 0b100, 0b111],
        _ => [0; GLYPH_H],
    }
}

pub const WATERMARK: &str = "SYNTHETIC";

/// Stamps [`WATERMARK`] in white on a dark band along the bottom-left
/// corner of a `[3, H, W]` image in `[0, 1]`. Text that does not fit is
/// cut at the right edge.
pub fn stamp_watermark(image: &mut Tensor) -> Result<()> {
    if image.rank() != 3 || image.dim(0) != 3 {
        return Err(Error::Shape(format!("watermark target {:?}, expected [3, H, W]", image.shape())));
    }
    let (h, w) = (image.dim(1), image.dim(2));
    if h < GLYPH_H + 2 {
        return Err(Error::InvalidArgument(format!("image height {h} too small for the watermark")));
    }
    let y0 = h - GLYPH_H - 1;
    let band = (WATERMARK.len() * (GLYPH_W + 1) + 1).min(w);
    let data = image.data_mut();
    for y in y0 - 1..h {
        for x in 0..band {
            for c in 0..3 {
                data[c * h * w + y * w + x] *= 0.3;
            }
        }
    }
    for (k, ch) in WATERMARK.chars().enumerate() {
        let rows = glyph(ch);
        for (gy, row) in rows.iter().enumerate() {
            for gx in 0..GLYPH_W {
                let x = 1 + k * (GLYPH_W + 1) + gx;
                if x < w && row >> (GLYPH_W - 1 - gx) & 1 == 1 {
                    for c in 0..3 {
                        data[c * h * w + (y0 + gy) * w + x] = 1.0;
                    }
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::face3d::canonical_landmarks_2d;

    #[test]
    fn watermark_changes_corner_only() {
        let mut img = Tensor::full([3, 32, 48], 0.5);
        stamp_watermark(&mut img).unwrap();
        assert_eq!(img.data()[0], 0.5);
        assert!(img.data().iter().any(|&v| v == 1.0));
        assert!(stamp_watermark(&mut Tensor::zeros([3, 4, 40])).is_err());
    }

    #[test]
    fn painting_is_deterministic_and_bounded() {
        let pts: Vec<[f64; 2]> = canonical_landmarks_2d().iter().map(|p| [32.0 + 20.0 * p[0], 30.0 + 20.0 * p[1]]).collect();
        let a = paint_speaker(&pts, 64, 64).unwrap();
        assert_eq!(a, paint_speaker(&pts, 64, 64).unwrap());
        assert!(a.data().iter().all(|v| (0.0..=1.0).contains(v)));
        let boxes = SpeakerBoxes::from_landmarks(&pts, 64, 64).unwrap();
        assert!(boxes.face.contains(boxes.mouth.x0, boxes.mouth.y0));
    }
}
