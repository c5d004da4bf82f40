//! Landmark-to-frame rendering.

mod loss;
mod nets;
mod speaker;
mod train;
mod volume;

pub use loss::{
    disc_loss, l1_mean, loss_video, perceptual, perceptual_value, FeaturePyramid, LossWeights, PyramidStage,
    VideoLossVars,
};
pub use nets::{
    fuse, fuse_values, RenderArch, RenderOutput, RenderVars, RendererNets, VideoDiscriminators, N_SCALES,
    SHARED_BLOCKS, VOLUME_CHANNELS, WINDOW,
};
pub use speaker::{landmark_frames, paint_speaker, speaker_samples, stamp_watermark, SpeakerBoxes, WATERMARK};
pub use train::{
    to_signed, to_unit, train_renderer, write_render_csv, RenderEpoch, RenderModel, RenderSample, RenderSchedule,
    PYRAMID_CHANNELS,
};
pub use volume::{build_volume, chw_to_hwc, PixelBox};
