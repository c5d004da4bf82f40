//! Evaluation metrics on parameter tracks, face meshes and frames.

use crate::anim::{ssim_seq_value, SSIM_DELTA1, SSIM_DELTA2};
use crate::dataset::{MOUTH_DIM, UPPER_DIM};
use crate::error::{Error, Result};
use crate::face3d::{FaceModel, LIP_LANDMARKS};
use crate::nn::Tensor;

pub const SSIM_WINDOW: usize = 8;

fn same_tracks(a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() || a.rank() != 2 {
        return Err(Error::Shape(format!("tracks {:?} and {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

/// Mean squared difference over all entries.
pub fn mse_params(m: &Tensor, m_hat: &Tensor) -> Result<f64> {
    same_tracks(m, m_hat)?;
    if m.is_empty() {
        return Err(Error::InvalidArgument("empty tracks".into()));
    }
    Ok(m.data().iter().zip(m_hat.data()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / m.len() as f64)
}

/// Mean Euclidean distance between the 3D lip landmarks of the mesh
/// driven by `(upper, m)` and by `(upper, m_hat)`, without pose.
pub fn lmd_3d(model: &FaceModel, s: &[f64], m: &Tensor, m_hat: &Tensor, upper: &Tensor) -> Result<f64> {
    same_tracks(m, m_hat)?;
    if m.dim(1) != MOUTH_DIM || upper.shape() != [m.dim(0), UPPER_DIM] {
        return Err(Error::Shape(format!(
            "mouth {:?} / upper {:?}, expected [T, {MOUTH_DIM}] / [T, {UPPER_DIM}]",
            m.shape(),
            upper.shape()
        )));
    }
    if m.dim(0) == 0 {
        return Err(Error::InvalidArgument("empty tracks".into()));
    }
    let mut total = 0.0;
    for t in 0..m.dim(0) {
        let a = model.eval_landmarks(s, &FaceModel::expression(upper.row(t), m.row(t))?)?;
        let b = model.eval_landmarks(s, &FaceModel::expression(upper.row(t), m_hat.row(t))?)?;
        for i in LIP_LANDMARKS {
            let d: f64 = (0..3).map(|k| (a[i][k] - b[i][k]).powi(2)).sum();
            total += d.sqrt();
        }
    }
    Ok(total / (m.dim(0) * LIP_LANDMARKS.len()) as f64)
}

/// Mean per-dimension temporal SSIM.
pub fn ssim_param_metric(m: &Tensor, m_hat: &Tensor) -> Result<f64> {
    Ok(1.0 - ssim_seq_value(m, m_hat)?)
}

fn gray(img: &Tensor) -> Vec<f64> {
    let n = img.dim(1) * img.dim(2);
    let d = img.data();
    (0..n).map(|i| (d[i] + d[n + i] + d[2 * n + i]) / 3.0).collect()
}

/// Windowed SSIM of two `[3, H, W]` images in `[0, 1]` on their RGB-mean
/// luminance: non-overlapping 8×8 windows, population statistics,
/// averaged over windows. Partial windows at the right and bottom edges
/// are skipped.
pub fn ssim_image(a: &Tensor, b: &Tensor) -> Result<f64> {
    if a.shape() != b.shape() || a.rank() != 3 || a.dim(0) != 3 {
        return Err(Error::Shape(format!("images {:?} and {:?}", a.shape(), b.shape())));
    }
    let (h, w) = (a.dim(1), a.dim(2));
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::InvalidArgument(format!("image {w}x{h} smaller than one window")));
    }
    let (ga, gb) = (gray(a), gray(b));
    let n = (SSIM_WINDOW * SSIM_WINDOW) as f64;
    let mut total = 0.0;
    let mut count = 0usize;
    for y0 in (0..=h - SSIM_WINDOW).step_by(SSIM_WINDOW) {
        for x0 in (0..=w - SSIM_WINDOW).step_by(SSIM_WINDOW) {
            let idx = (0..SSIM_WINDOW).flat_map(|dy| (0..SSIM_WINDOW).map(move |dx| (y0 + dy) * w + x0 + dx));
            let (mut sa, mut sb) = (0.0, 0.0);
            for i in idx.clone() {
                sa += ga[i];
                sb += gb[i];
            }
            let (ma, mb) = (sa / n, sb / n);
            let (mut va, mut vb, mut cov) = (0.0, 0.0, 0.0);
            for i in idx {
                let (da, db) = (ga[i] - ma, gb[i] - mb);
                va += da * da;
                vb += db * db;
                cov += da * db;
            }
            let (va, vb, cov) = (va / n, vb / n, cov / n);
            total += (2.0 * ma * mb + SSIM_DELTA1) * (2.0 * cov + SSIM_DELTA2)
                / ((ma * ma + mb * mb + SSIM_DELTA1) * (va + vb + SSIM_DELTA2));
            count += 1;
        }
    }
    Ok(total / count as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mse_of_unit_offset() {
        let m = Tensor::full([4, 3], 0.2);
        assert!((mse_params(&m, &m.map(|v| v + 1.0)).unwrap() - 1.0).abs() < 1e-12);
        assert!(mse_params(&m, &Tensor::zeros([3, 4])).is_err());
    }

    #[test]
    fn image_ssim_of_identical_is_one() {
        let a = Tensor::new(vec![3, 16, 16], (0..768).map(|i| (i % 7) as f64 / 7.0).collect()).unwrap();
        assert!((ssim_image(&a, &a).unwrap() - 1.0).abs() < 1e-15);
    }
}
