//! Multi-linear face model `U(s, e) = mean + Σ s_j S_j + Σ e_j E_j`.

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::dataset::{substream, MOUTH_DIM, UPPER_DIM};
use crate::error::{Error, Result};
use crate::nn::{Tensor, TensorFile};

pub const SHAPE_DIM: usize = 60;
pub const EXPR_DIM: usize = UPPER_DIM + MOUTH_DIM;
pub const N_LANDMARKS: usize = 68;
/// Lip landmarks of the 68-point layout (outer 48–59, inner 60–67).
pub const LIP_LANDMARKS: std::ops::Range<usize> = 48..68;

pub type Vec3 = [f64; 3];

#[derive(Clone, Debug, PartialEq)]
pub struct FaceModel {
    /// `[N, 3]`.
    pub mean: Tensor,
    /// `[60, N*3]`, rows scaled by their singular values.
    pub shape_basis: Tensor,
    /// `[51, N*3]`: 23 upper-face then 28 mouth blendshape deltas.
    pub expr_basis: Tensor,
    pub landmarks: Vec<usize>,
}

/// Blendshape names in expression-vector order.
pub const BLENDSHAPES: [&str; EXPR_DIM] = [
    "browDown_L", "browDown_R", "browInnerUp_L", "browInnerUp_R", "browOuterUp_L", "browOuterUp_R",
    "eyeBlink_L", "eyeBlink_R", "eyeSquint_L", "eyeSquint_R", "eyeWide_L", "eyeWide_R",
    "eyeLookUp_L", "eyeLookUp_R", "eyeLookDown_L", "eyeLookDown_R", "eyeLookIn_L", "eyeLookIn_R",
    "eyeLookOut_L", "eyeLookOut_R", "cheekSquint_L", "cheekSquint_R", "noseSneer",
    "jawOpen", "jawForward", "jawLeft", "jawRight", "mouthClose", "mouthFunnel", "mouthPucker",
    "mouthLeft", "mouthRight", "mouthSmile_L", "mouthSmile_R", "mouthFrown_L", "mouthFrown_R",
    "mouthDimple_L", "mouthDimple_R", "mouthStretch_L", "mouthStretch_R", "mouthRollLower",
    "mouthRollUpper", "mouthShrugLower", "mouthShrugUpper", "mouthPress_L", "mouthPress_R",
    "mouthLowerDown", "mouthUpperUp", "cheekPuff_L", "cheekPuff_R", "lipsTogether",
];

/// Centre (x, y), support radius and displacement of each blendshape in
/// model units. x to the subject's left is positive, y points down, z
/// points away from the camera.
const BLENDSHAPE_SUPPORT: [([f64; 2], f64, Vec3); EXPR_DIM] = [
    ([0.45, -0.58], 0.30, [0.0, 0.10, 0.0]),
    ([-0.45, -0.58], 0.30, [0.0, 0.10, 0.0]),
    ([0.2, -0.6], 0.22, [0.0, -0.12, 0.0]),
    ([-0.2, -0.6], 0.22, [0.0, -0.12, 0.0]),
    ([0.65, -0.58], 0.22, [0.0, -0.12, 0.0]),
    ([-0.65, -0.58], 0.22, [0.0, -0.12, 0.0]),
    ([0.4, -0.37], 0.12, [0.0, 0.12, 0.0]),
    ([-0.4, -0.37], 0.12, [0.0, 0.12, 0.0]),
    ([0.4, -0.23], 0.12, [0.0, -0.05, 0.0]),
    ([-0.4, -0.23], 0.12, [0.0, -0.05, 0.0]),
    ([0.4, -0.37], 0.12, [0.0, -0.06, 0.0]),
    ([-0.4, -0.37], 0.12, [0.0, -0.06, 0.0]),
    ([0.4, -0.3], 0.2, [0.0, -0.03, 0.0]),
    ([-0.4, -0.3], 0.2, [0.0, -0.03, 0.0]),
    ([0.4, -0.3], 0.2, [0.0, 0.03, 0.0]),
    ([-0.4, -0.3], 0.2, [0.0, 0.03, 0.0]),
    ([0.4, -0.3], 0.2, [-0.03, 0.0, 0.0]),
    ([-0.4, -0.3], 0.2, [0.03, 0.0, 0.0]),
    ([0.4, -0.3], 0.2, [0.03, 0.0, 0.0]),
    ([-0.4, -0.3], 0.2, [-0.03, 0.0, 0.0]),
    ([0.5, -0.1], 0.25, [0.0, -0.06, -0.02]),
    ([-0.5, -0.1], 0.25, [0.0, -0.06, -0.02]),
    ([0.0, 0.05], 0.25, [0.0, -0.05, -0.02]),
    ([0.0, 0.85], 0.75, [0.0, 0.30, 0.05]),
    ([0.0, 0.85], 0.7, [0.0, 0.0, -0.12]),
    ([0.0, 0.85], 0.7, [0.12, 0.0, 0.0]),
    ([0.0, 0.85], 0.7, [-0.12, 0.0, 0.0]),
    ([0.0, 0.55], 0.22, [0.0, -0.08, 0.0]),
    ([0.0, 0.5], 0.4, [0.0, 0.0, -0.1]),
    ([0.0, 0.5], 0.45, [0.0, 0.0, -0.12]),
    ([0.0, 0.5], 0.45, [0.12, 0.0, 0.0]),
    ([0.0, 0.5], 0.45, [-0.12, 0.0, 0.0]),
    ([0.35, 0.5], 0.25, [0.08, -0.1, 0.0]),
    ([-0.35, 0.5], 0.25, [-0.08, -0.1, 0.0]),
    ([0.35, 0.5], 0.25, [0.02, 0.1, 0.0]),
    ([-0.35, 0.5], 0.25, [-0.02, 0.1, 0.0]),
    ([0.42, 0.5], 0.18, [0.04, 0.0, 0.04]),
    ([-0.42, 0.5], 0.18, [-0.04, 0.0, 0.04]),
    ([0.35, 0.55], 0.3, [0.1, 0.04, 0.0]),
    ([-0.35, 0.55], 0.3, [-0.1, 0.04, 0.0]),
    ([0.0, 0.62], 0.28, [0.0, -0.05, 0.03]),
    ([0.0, 0.38], 0.28, [0.0, 0.05, 0.03]),
    ([0.0, 0.7], 0.3, [0.0, -0.07, 0.0]),
    ([0.0, 0.33], 0.3, [0.0, -0.06, 0.0]),
    ([0.25, 0.5], 0.2, [0.0, 0.0, 0.04]),
    ([-0.25, 0.5], 0.2, [0.0, 0.0, 0.04]),
    ([0.0, 0.64], 0.3, [0.0, 0.12, 0.0]),
    ([0.0, 0.36], 0.3, [0.0, -0.1, 0.0]),
    ([0.72, 0.3], 0.22, [0.05, 0.0, -0.12]),
    ([-0.72, 0.3], 0.22, [-0.05, 0.0, -0.12]),
    ([0.0, 0.5], 0.2, [0.0, 0.0, 0.03]),
];

/// Canonical frontal layout of the 68 landmarks, x right, y down.
pub fn canonical_landmarks_2d() -> Vec<[f64; 2]> {
    use std::f64::consts::PI;
    let mut p = Vec::with_capacity(N_LANDMARKS);
    // Jaw, image-left (subject right) ear to chin to image-right ear.
    for i in 0..17 {
        let phi = PI * i as f64 / 16.0;
        p.push([-0.95 * phi.cos(), -0.15 + 1.05 * phi.sin()]);
    }
    // Brows.
    for side in [-1.0, 1.0] {
        for i in 0..5 {
            let u = i as f64 / 4.0;
            let x = if side < 0.0 { -0.78 + 0.6 * u } else { 0.18 + 0.6 * u };
            let arch = ((if side < 0.0 { u } else { 1.0 - u }) * PI * 0.9).sin();
            p.push([x, -0.52 - 0.1 * arch]);
        }
    }
    // Nose bridge and base.
    for i in 0..4 {
        p.push([0.0, -0.35 + 0.15 * i as f64]);
    }
    for i in 0..5 {
        let u = i as f64 / 4.0 - 0.5;
        p.push([0.4 * u, 0.2 + 0.04 * (1.0 - 4.0 * u * u)]);
    }
    // Eyes: outer/inner corner, two upper, corner, two lower.
    let eye = |cx: f64, mirrored: bool| -> Vec<[f64; 2]> {
        let angles: [f64; 6] = [180.0, 135.0, 45.0, 0.0, -45.0, -135.0];
        angles
            .iter()
            .map(|a| {
                let r = a.to_radians();
                let x = 0.17 * r.cos();
                [cx + if mirrored { x } else { x }, -0.3 - 0.07 * r.sin()]
            })
            .collect()
    };
    p.extend(eye(-0.4, false));
    p.extend(eye(0.4, true));
    // Outer lip: left corner, upper arc, right corner, lower arc.
    for i in 0..12 {
        let a = (180.0 - 30.0 * i as f64).to_radians();
        p.push([0.35 * a.cos(), 0.5 - 0.15 * a.sin()]);
    }
    // Inner lip.
    for i in 0..8 {
        let a = (180.0 - 45.0 * i as f64).to_radians();
        p.push([0.22 * a.cos(), 0.5 - 0.05 * a.sin()]);
    }
    p
}

fn surface_depth(x: f64, y: f64) -> f64 {
    let q = 1.0 - (x / 1.05).powi(2) - (y / 1.3).powi(2);
    -0.9 * q.max(0.05).sqrt()
}

fn wendland(r: f64) -> f64 {
    if r >= 1.0 {
        0.0
    } else {
        (1.0 - r).powi(4) * (4.0 * r + 1.0)
    }
}

impl FaceModel {
    pub fn num_vertices(&self) -> usize {
        self.mean.dim(0)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.num_vertices();
        if self.mean.shape() != [n, 3]
            || self.shape_basis.shape() != [SHAPE_DIM, n * 3]
            || self.expr_basis.shape() != [EXPR_DIM, n * 3]
        {
            return Err(Error::Shape(format!(
                "face model blocks {:?} / {:?} / {:?}",
                self.mean.shape(),
                self.shape_basis.shape(),
                self.expr_basis.shape()
            )));
        }
        if self.landmarks.len() != N_LANDMARKS {
            return Err(Error::LengthMismatch(format!(
                "{} landmark indices, expected {N_LANDMARKS}",
                self.landmarks.len()
            )));
        }
        let mut seen = std::collections::BTreeSet::new();
        for &i in &self.landmarks {
            if i >= n {
                return Err(Error::IndexOutOfRange {
                    what: "landmark vertex",
                    index: i,
                    size: n,
                });
            }
            if !seen.insert(i) {
                return Err(Error::Malformed(format!("duplicate landmark vertex {i}")));
            }
        }
        Ok(())
    }

    /// Procedural stand-in model: an ellipsoidal face whose first 68
    /// vertices are the landmarks, a grid of surface vertices, smooth
    /// random orthogonalised shape modes scaled by decaying singular
    /// values, and compactly supported blendshapes.
    pub fn procedural(seed: u64) -> Self {
        let mut rng = substream(seed, 11);
        let mut verts: Vec<Vec3> = canonical_landmarks_2d()
            .into_iter()
            .map(|[x, y]| [x, y, surface_depth(x, y)])
            .collect();
        // Nose ridge protrudes towards the camera.
        for (k, v) in verts[27..31].iter_mut().enumerate() {
            v[2] -= 0.05 * (k as f64 + 1.0);
        }
        let grid = 15;
        for gy in 0..grid {
            for gx in 0..grid {
                let x = -1.0 + 2.0 * gx as f64 / (grid - 1) as f64;
                let y = -1.2 + 2.4 * gy as f64 / (grid - 1) as f64;
                if (x / 1.05).powi(2) + (y / 1.3).powi(2) < 0.95 {
                    verts.push([x, y, surface_depth(x, y)]);
                }
            }
        }
        let n = verts.len();

        // Shape modes: smooth random Fourier fields, Gram-Schmidt
        // orthonormalised, then scaled so the per-vertex RMS equals sigma_j.
        let normal = Normal::new(0.0, 1.5).expect("valid normal");
        let mut modes: Vec<Vec<f64>> = Vec::with_capacity(SHAPE_DIM);
        while modes.len() < SHAPE_DIM {
            let mut field = vec![0.0; n * 3];
            for c in 0..3 {
                for _ in 0..4 {
                    let w: Vec3 = [normal.sample(&mut rng), normal.sample(&mut rng), normal.sample(&mut rng)];
                    let phase = rng.random_range(0.0..std::f64::consts::TAU);
                    let amp = rng.random_range(0.5..1.0);
                    for (i, v) in verts.iter().enumerate() {
                        field[i * 3 + c] += amp * (w[0] * v[0] + w[1] * v[1] + w[2] * v[2] + phase).sin();
                    }
                }
            }
            for m in &modes {
                let d: f64 = m.iter().zip(&field).map(|(a, b)| a * b).sum();
                for (f, a) in field.iter_mut().zip(m) {
                    *f -= d * a;
                }
            }
            let norm = field.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-6 {
                modes.push(field.into_iter().map(|x| x / norm).collect());
            }
        }
        let mut shape = Vec::with_capacity(SHAPE_DIM * n * 3);
        for (j, m) in modes.iter().enumerate() {
            let sigma = 0.08 * 0.95f64.powi(j as i32) * (n as f64).sqrt();
            shape.extend(m.iter().map(|x| x * sigma));
        }

        let mut expr = vec![0.0; EXPR_DIM * n * 3];
        for (j, (centre, radius, dir)) in BLENDSHAPE_SUPPORT.iter().enumerate() {
            let radius = radius * rng.random_range(0.95..1.05);
            let gain = rng.random_range(0.9..1.1);
            for (i, v) in verts.iter().enumerate() {
                let r = ((v[0] - centre[0]).powi(2) + (v[1] - centre[1]).powi(2)).sqrt() / radius;
                let k = wendland(r) * gain;
                for c in 0..3 {
                    expr[j * n * 3 + i * 3 + c] = k * dir[c];
                }
            }
        }

        let mean = verts.iter().flatten().copied().collect();
        Self {
            mean: Tensor::from_parts(vec![n, 3], mean),
            shape_basis: Tensor::from_parts(vec![SHAPE_DIM, n * 3], shape),
            expr_basis: Tensor::from_parts(vec![EXPR_DIM, n * 3], expr),
            landmarks: (0..N_LANDMARKS).collect(),
        }
    }

    fn check_params(s: &[f64], e: &[f64]) -> Result<()> {
        if s.len() != SHAPE_DIM || e.len() != EXPR_DIM {
            return Err(Error::LengthMismatch(format!(
                "shape/expression lengths {}/{}, expected {SHAPE_DIM}/{EXPR_DIM}",
                s.len(),
                e.len()
            )));
        }
        Ok(())
    }

    fn vertex(&self, i: usize, s: &[f64], e: &[f64]) -> Vec3 {
        let n3 = self.num_vertices() * 3;
        let mut v = [0.0; 3];
        for (c, out) in v.iter_mut().enumerate() {
            let k = i * 3 + c;
            let mut x = self.mean.data()[k];
            for (j, sj) in s.iter().enumerate() {
                x += sj * self.shape_basis.data()[j * n3 + k];
            }
            for (j, ej) in e.iter().enumerate() {
                x += ej * self.expr_basis.data()[j * n3 + k];
            }
            *out = x;
        }
        v
    }

    /// All vertices of `U(s, e)`.
    pub fn eval(&self, s: &[f64], e: &[f64]) -> Result<Vec<Vec3>> {
        Self::check_params(s, e)?;
        Ok((0..self.num_vertices()).map(|i| self.vertex(i, s, e)).collect())
    }

    /// The 68 landmark vertices of `U(s, e)`.
    pub fn eval_landmarks(&self, s: &[f64], e: &[f64]) -> Result<Vec<Vec3>> {
        Self::check_params(s, e)?;
        Ok(self.landmarks.iter().map(|&i| self.vertex(i, s, e)).collect())
    }

    /// Basis rows restricted to landmark coordinates: mean `[204]`,
    /// shape `[204, 60]`, expression `[204, 51]`.
    pub fn landmark_blocks(&self) -> (Tensor, Tensor, Tensor) {
        let n3 = self.num_vertices() * 3;
        let rows = N_LANDMARKS * 3;
        let mut mean = Vec::with_capacity(rows);
        let mut shape = vec![0.0; rows * SHAPE_DIM];
        let mut expr = vec![0.0; rows * EXPR_DIM];
        for (li, &vi) in self.landmarks.iter().enumerate() {
            for c in 0..3 {
                let r = li * 3 + c;
                let k = vi * 3 + c;
                mean.push(self.mean.data()[k]);
                for j in 0..SHAPE_DIM {
                    shape[r * SHAPE_DIM + j] = self.shape_basis.data()[j * n3 + k];
                }
                for j in 0..EXPR_DIM {
                    expr[r * EXPR_DIM + j] = self.expr_basis.data()[j * n3 + k];
                }
            }
        }
        (
            Tensor::from_parts(vec![rows], mean),
            Tensor::from_parts(vec![rows, SHAPE_DIM], shape),
            Tensor::from_parts(vec![rows, EXPR_DIM], expr),
        )
    }

    /// Expression vector laid out as (upper, mouth).
    pub fn expression(upper: &[f64], mouth: &[f64]) -> Result<Vec<f64>> {
        if upper.len() != UPPER_DIM || mouth.len() != MOUTH_DIM {
            return Err(Error::LengthMismatch(format!(
                "upper/mouth lengths {}/{}, expected {UPPER_DIM}/{MOUTH_DIM}",
                upper.len(),
                mouth.len()
            )));
        }
        Ok(upper.iter().chain(mouth).copied().collect())
    }

    pub fn to_tensor_file(&self) -> TensorFile {
        let lm = Tensor::from_parts(vec![N_LANDMARKS], self.landmarks.iter().map(|&i| i as f64).collect());
        TensorFile {
            meta: BTreeMap::from([
                ("kind".to_string(), serde_json::json!("face_model")),
                ("vertices".to_string(), serde_json::json!(self.num_vertices())),
                ("blendshapes".to_string(), serde_json::json!(BLENDSHAPES.to_vec())),
            ]),
            tensors: vec![
                ("mean".into(), self.mean.clone()),
                ("shape_basis".into(), self.shape_basis.clone()),
                ("expr_basis".into(), self.expr_basis.clone()),
                ("landmarks".into(), lm),
            ],
        }
    }

    pub fn from_tensor_file(file: &TensorFile) -> Result<Self> {
        let landmarks = file
            .get("landmarks")?
            .data()
            .iter()
            .map(|&x| {
                if x < 0.0 || x.fract() != 0.0 {
                    Err(Error::Malformed(format!("landmark index {x} is not a vertex index")))
                } else {
                    Ok(x as usize)
                }
            })
            .collect::<Result<_>>()?;
        let m = Self {
            mean: file.get("mean")?.clone(),
            shape_basis: file.get("shape_basis")?.clone(),
            expr_basis: file.get("expr_basis")?.clone(),
            landmarks,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_tensor_file().save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_tensor_file(&TensorFile::load(path)?)
    }
}
