//! Image-space primitives: normalization, masking, blur, resampling,
//! superpixels and raster IO.

mod blur;
mod io;
mod mask;
mod normalize;
mod resample;
mod slic;

use thiserror::Error;

pub use blur::{gaussian_blur, gaussian_weights};
pub use io::{decode_pgm, decode_png, encode_pgm16, encode_png, load_image, load_png, save_png};
pub use mask::{apply_mask, BinaryMaskGrid};
pub use normalize::{minmax_normalize, minmax_normalize_in_place};
pub use resample::{bilinear_upsample, resample_cell_centered, resample_window};
pub use slic::{slic_segment, slic_with, SegmentLabelMap, SlicParams};

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("cannot produce {requested} segments from {pixels} pixels")]
    TooManySegments { requested: usize, pixels: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("decode error: {0}")]
    Decode(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
