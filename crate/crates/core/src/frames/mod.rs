//! 2D mask clean-up and rear-view frame detection.

mod morphology;
mod rear;
mod ssim;

pub use morphology::{close, dilate, erode, open, residual_handle, BinaryMask, STRUCTURING_SIZE};
pub use rear::{find_rear_frames, rear_frame_scores, FrameScore, RearFrameConfig};
pub use ssim::{ssim, ssim_map, SSIM_C1, SSIM_C2, SSIM_SIGMA, SSIM_WINDOW};
