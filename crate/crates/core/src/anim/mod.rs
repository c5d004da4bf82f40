//! Speaker-independent animation: mouth from phonemes, upper face and
//! head pose from words (and emotion), trained adversarially.

mod losses;
mod nets;
mod train;

pub use losses::{
    l1_seq, l1_seq_value, lsgan, lsgan_value, ssim_seq, ssim_seq_value, GanSide, SSIM_DELTA1, SSIM_DELTA2,
};
pub use nets::{AnimArch, Conditioning, Discriminator, Generator, Role, ENCODER_STRIDE};
pub use train::{
    default_lambda, reconstruction_loss, train_generator, write_loss_csv, AnimBundle, EpochLosses, Schedule,
    TrainOptions,
};
