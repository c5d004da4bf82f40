//! WebAssembly bindings for the static page in `www/`.
//!
//! Each operation has a plain Rust function that the tests call
//! natively and a thin `wasm_bindgen` wrapper.

use talkhead::anim::{l1_seq_value, ssim_seq_value};
use talkhead::face3d::{
    drive_landmarks, fit, initial_guess, mean_reprojection_error, rasterize, synthetic_problem, FaceModel,
    FitConfig, Intrinsics, BLENDSHAPES, REST_TRANSLATION, SHAPE_DIM,
};
use talkhead::nn::Tensor;
use talkhead::Result;
use wasm_bindgen::prelude::*;

pub const UPPER: usize = 23;
pub const MOUTH: usize = 28;
pub const FIT_SIZE: usize = 256;

/// Blendshapes offered as sliders, by index into [`BLENDSHAPES`].
pub const SLIDERS: [usize; 8] = [2, 3, 6, 7, 23, 29, 32, 33];

fn js(e: talkhead::Error) -> JsError {
    JsError::new(&e.to_string())
}

/// RGBA bytes of the rasterized landmarks for blendshape weights `expr`
/// (one per [`SLIDERS`] entry) and a 6-vector head offset.
pub fn face_rgba(model: &FaceModel, size: usize, expr: &[f64], head: &[f64]) -> Result<Vec<u8>> {
    if expr.len() != SLIDERS.len() {
        return Err(talkhead::Error::LengthMismatch(format!(
            "expected {} slider values, got {}",
            SLIDERS.len(),
            expr.len()
        )));
    }
    let mut upper = vec![0.0; UPPER];
    let mut mouth = vec![0.0; MOUTH];
    for (&j, &v) in SLIDERS.iter().zip(expr) {
        if j < UPPER {
            upper[j] = v;
        } else {
            mouth[j - UPPER] = v;
        }
    }
    let k = Intrinsics::for_image(size, size);
    let s = vec![0.0; SHAPE_DIM];
    let pts = drive_landmarks(model, &s, head, &upper, &mouth, &k, REST_TRANSLATION)?;
    let frame = rasterize(&pts, size, size)?;
    Ok(frame
        .pixels
        .chunks(3)
        .flat_map(|p| [to_byte(p[0]), to_byte(p[1]), to_byte(p[2]), 255])
        .collect())
}

fn to_byte(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitTrace {
    pub history: Vec<f64>,
    pub error_px: f64,
    pub iterations: usize,
    pub termination: String,
}

/// Fits the model to noise-free landmarks of a random face seen in
/// `keyframes` views.
pub fn fit_trace(model: &FaceModel, seed: u64, keyframes: usize, max_iters: usize) -> Result<FitTrace> {
    let k = Intrinsics::for_image(FIT_SIZE, FIT_SIZE);
    let (problem, _) = synthetic_problem(model, seed, keyframes, k)?;
    let init = initial_guess(model, &problem)?;
    let cfg = FitConfig {
        max_iters,
        ..Default::default()
    };
    let report = fit(model, &problem, &init, &cfg)?;
    Ok(FitTrace {
        error_px: mean_reprojection_error(model, &problem, &report.params)?,
        history: report.history,
        iterations: report.iterations,
        termination: format!("{:?}", report.termination),
    })
}

/// A smooth reference track in `[0, 1]` and a distorted copy.
pub fn probe_tracks(frames: usize, offset: f64, scale: f64, shift: i64) -> (Vec<f64>, Vec<f64>) {
    let at = |t: i64| {
        let x = t as f64 / 30.0;
        0.5 + 0.3 * (2.0 * std::f64::consts::PI * 1.3 * x).sin() + 0.15 * (2.0 * std::f64::consts::PI * 3.1 * x).cos()
    };
    let reference: Vec<f64> = (0..frames as i64).map(at).collect();
    let pred = (0..frames as i64)
        .map(|t| {
            let v = at(t - shift);
            (v + (scale - 1.0) * (v - 0.5) + offset).clamp(0.0, 1.0)
        })
        .collect();
    (reference, pred)
}

/// `[l1, 1 - ssim]` between two single-channel tracks.
pub fn sequence_losses(reference: &[f64], pred: &[f64]) -> Result<[f64; 2]> {
    let m = Tensor::new(vec![reference.len(), 1], reference.to_vec())?;
    let h = Tensor::new(vec![pred.len(), 1], pred.to_vec())?;
    Ok([l1_seq_value(&m, &h)?, ssim_seq_value(&m, &h)?])
}

#[wasm_bindgen]
pub fn slider_names() -> Vec<String> {
    SLIDERS.iter().map(|&j| BLENDSHAPES[j].to_string()).collect()
}

#[wasm_bindgen]
pub struct FaceRig {
    model: FaceModel,
    size: usize,
}

#[wasm_bindgen]
impl FaceRig {
    #[wasm_bindgen(constructor)]
    pub fn new(size: usize) -> FaceRig {
        FaceRig {
            model: FaceModel::procedural(7),
            size,
        }
    }

    pub fn render(&self, expr: &[f64], head: &[f64]) -> std::result::Result<Vec<u8>, JsError> {
        face_rgba(&self.model, self.size, expr, head).map_err(js)
    }

    /// Runs a landmark fit; returns `[error_px, iterations, F_0, F_1, ...]`.
    pub fn fit(&self, seed: u64, keyframes: usize, max_iters: usize) -> std::result::Result<Vec<f64>, JsError> {
        let t = fit_trace(&self.model, seed, keyframes, max_iters).map_err(js)?;
        let mut out = vec![t.error_px, t.iterations as f64];
        out.extend(t.history);
        Ok(out)
    }
}

/// Returns `[l1, ssim_loss, ref_0.., pred_0..]` for `frames` frames.
#[wasm_bindgen]
pub fn compare_tracks(frames: usize, offset: f64, scale: f64, shift: i32) -> std::result::Result<Vec<f64>, JsError> {
    let (r, p) = probe_tracks(frames, offset, scale, shift as i64);
    let [l1, ssim] = sequence_losses(&r, &p).map_err(js)?;
    let mut out = vec![l1, ssim];
    out.extend(r);
    out.extend(p);
    Ok(out)
}
