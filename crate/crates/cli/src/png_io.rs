//! Mask image IO. On disk a mask is an 8-bit grayscale PNG with foreground
//! 255 and background 0; in memory it is a float map in [0, 1]. Probability
//! maps scale linearly; anything loaded as input is re-binarized at 0.5.

use std::path::Path;

use image::{GrayImage, ImageFormat, ImageReader};
use skelex_core::Mask;

use crate::error::CliError;

/// Load a grayscale PNG as a binary mask: pixel value / 255, then >= 0.5.
pub fn load_mask(path: &Path) -> Result<Mask, CliError> {
    let reader = ImageReader::open(path).map_err(|e| CliError::io(path, e))?;
    let img = reader
        .decode()
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?
        .into_luma8();
    let (w, h) = img.dimensions();
    let pixels = img
        .into_raw()
        .into_iter()
        .map(|v| if f32::from(v) / 255.0 >= 0.5 { 1.0 } else { 0.0 })
        .collect();
    Mask::from_pixels(h as usize, w as usize, pixels).map_err(CliError::from)
}

/// Save a probability map, 0.0 -> 0 and 1.0 -> 255. Binary masks land on
/// exactly {0, 255}.
pub fn save_mask(path: &Path, mask: &Mask) -> Result<(), CliError> {
    let bytes: Vec<u8> = mask
        .pixels
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    let img = GrayImage::from_raw(mask.w as u32, mask.h as u32, bytes)
        .expect("pixel buffer matches declared dimensions");
    img.save_with_format(path, ImageFormat::Png)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}
