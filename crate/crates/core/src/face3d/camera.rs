//! Rigid pose and pinhole projection.

use serde::{Deserialize, Serialize};

use super::model::Vec3;
use crate::dataset::HEAD_DIM;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub focal: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Intrinsics {
    /// `f = W`, principal point at the image centre.
    pub fn for_image(width: usize, height: usize) -> Self {
        Self {
            focal: width as f64,
            cx: width as f64 / 2.0,
            cy: height as f64 / 2.0,
        }
    }
}

/// Camera-frame pose: XYZ Euler rotation, then translation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraPose {
    pub rotation: Vec3,
    pub translation: Vec3,
}

/// Head position that a zero `m_hed` offset maps to.
pub const REST_TRANSLATION: Vec3 = [0.0, 0.0, 4.5];

impl CameraPose {
    pub fn new(rotation: Vec3, translation: Vec3) -> Result<Self> {
        let p = Self { rotation, translation };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.rotation.iter().chain(&self.translation).all(|x| x.is_finite()) {
            return Err(Error::NonFinite("camera pose".into()));
        }
        if self.translation[2] <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "pose depth tz = {} must be positive",
                self.translation[2]
            )));
        }
        Ok(())
    }

    /// Pose from a head-motion vector `(rx, ry, rz, dx, dy, dz)` whose
    /// translation part is an offset from `rest`.
    pub fn from_head(m_hed: &[f64], rest: Vec3) -> Result<Self> {
        if m_hed.len() != HEAD_DIM {
            return Err(Error::LengthMismatch(format!("head vector has {} entries, expected {HEAD_DIM}", m_hed.len())));
        }
        Self::new(
            [m_hed[0], m_hed[1], m_hed[2]],
            [rest[0] + m_hed[3], rest[1] + m_hed[4], rest[2] + m_hed[5]],
        )
    }

    pub fn to_head(&self, rest: Vec3) -> [f64; HEAD_DIM] {
        let [rx, ry, rz] = self.rotation;
        let t = self.translation;
        [rx, ry, rz, t[0] - rest[0], t[1] - rest[1], t[2] - rest[2]]
    }

    pub fn to_vec(&self) -> [f64; 6] {
        let [a, b, c] = self.rotation;
        let [x, y, z] = self.translation;
        [a, b, c, x, y, z]
    }

    pub fn rotation_matrix(&self) -> [[f64; 3]; 3] {
        rotation_matrix(self.rotation)
    }

    pub fn transform(&self, p: Vec3) -> Vec3 {
        let r = self.rotation_matrix();
        let t = self.translation;
        [0, 1, 2].map(|i| r[i][0] * p[0] + r[i][1] * p[1] + r[i][2] * p[2] + t[i])
    }
}

/// `R = Rz(rz) · Ry(ry) · Rx(rx)`.
pub fn rotation_matrix(angles: Vec3) -> [[f64; 3]; 3] {
    let (sx, cx) = angles[0].sin_cos();
    let (sy, cy) = angles[1].sin_cos();
    let (sz, cz) = angles[2].sin_cos();
    [
        [cz * cy, cz * sy * sx - sz * cx, cz * sy * cx + sz * sx],
        [sz * cy, sz * sy * sx + cz * cx, sz * sy * cx - cz * sx],
        [-sy, cy * sx, cy * cx],
    ]
}

/// Perspective projection of model points after the rigid transform.
pub fn project(points: &[Vec3], pose: &CameraPose, k: &Intrinsics) -> Result<Vec<[f64; 2]>> {
    pose.validate()?;
    points
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let [x, y, z] = pose.transform(p);
            if !(z > 0.0) {
                return Err(Error::NonPositiveDepth { index: i, depth: z });
            }
            Ok([k.focal * x / z + k.cx, k.focal * y / z + k.cy])
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn origin_projects_to_principal_point() {
        let k = Intrinsics::for_image(64, 48);
        let pose = CameraPose::new([0.0; 3], [0.0, 0.0, 1.0]).unwrap();
        assert_eq!(project(&[[0.0; 3]], &pose, &k).unwrap(), vec![[32.0, 24.0]]);
    }

    #[test]
    fn doubling_depth_halves_offset() {
        let k = Intrinsics::for_image(64, 64);
        let near = CameraPose::new([0.0; 3], [0.0, 0.0, 2.0]).unwrap();
        let far = CameraPose::new([0.0; 3], [0.0, 0.0, 4.0]).unwrap();
        let a = project(&[[0.5, -0.25, 0.0]], &near, &k).unwrap()[0];
        let b = project(&[[0.5, -0.25, 0.0]], &far, &k).unwrap()[0];
        assert!(((a[0] - 32.0) - 2.0 * (b[0] - 32.0)).abs() < 1e-12);
        assert!(((a[1] - 32.0) - 2.0 * (b[1] - 32.0)).abs() < 1e-12);
    }

    #[test]
    fn rejects_points_behind_camera() {
        let k = Intrinsics::for_image(64, 64);
        let pose = CameraPose::new([0.0; 3], [0.0, 0.0, 1.0]).unwrap();
        assert!(matches!(
            project(&[[0.0, 0.0, 0.0], [0.0, 0.0, -2.0]], &pose, &k),
            Err(Error::NonPositiveDepth { index: 1, .. })
        ));
        assert!(CameraPose::new([0.0; 3], [0.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn head_offsets_round_trip() {
        let m = [0.1, -0.2, 0.05, 0.3, -0.1, 0.2];
        let pose = CameraPose::from_head(&m, REST_TRANSLATION).unwrap();
        let back = pose.to_head(REST_TRANSLATION);
        for (a, b) in m.iter().zip(back) {
            assert!((a - b).abs() < 1e-15);
        }
    }
}
