//! Multi-linear 3D face model, camera projection, landmark fitting and
//! landmark rasterization.

mod camera;
mod fit;
mod model;
mod raster;

pub use camera::{project, rotation_matrix, CameraPose, Intrinsics, REST_TRANSLATION};
pub use fit::{
    energy, fit, initial_guess, mean_reprojection_error, synthetic_problem, FitConfig, FitParams, FitProblem,
    FitReport, Termination,
};
pub use model::{
    canonical_landmarks_2d, FaceModel, Vec3, BLENDSHAPES, EXPR_DIM, LIP_LANDMARKS, N_LANDMARKS, SHAPE_DIM,
};
pub(crate) use raster::hwc_to_chw;
pub use raster::{bresenham, drive_landmarks, drive_track, rasterize, write_png, LandmarkFrame, PARTS};
