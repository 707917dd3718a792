//! Pad-crop-flip augmentation on raw 3×32×32 byte images.

use rand::Rng;

use crate::data::{IMAGE_BYTES, IMAGE_CHANNELS, IMAGE_SIDE};
use crate::error::{Error, Result};

/// Zero padding added on every side before cropping.
pub const CROP_PAD: usize = 4;

/// Side of the zero-padded image.
pub const PADDED_SIDE: usize = IMAGE_SIDE + 2 * CROP_PAD;

/// Largest crop offset for a `side`-wide crop.
pub fn max_offset(side: usize) -> usize {
    PADDED_SIDE.saturating_sub(side)
}

/// Offset of the test-time center crop.
pub fn center_offset(side: usize) -> usize {
    max_offset(side) / 2
}

/// Crops a `side × side` window at `(oy, ox)` of the zero-padded image, mirrored horizontally if `flip`.
pub fn crop_flip(image: &[u8], side: usize, oy: usize, ox: usize, flip: bool) -> Result<Vec<u8>> {
    if image.len() != IMAGE_BYTES {
        return Err(Error::invalid(
            "augment_sample",
            format!("expected {IMAGE_BYTES} bytes (3×32×32), got {}", image.len()),
        ));
    }
    if side == 0 || side > PADDED_SIDE || oy > max_offset(side) || ox > max_offset(side) {
        return Err(Error::invalid(
            "augment_sample",
            format!("crop {side} at ({oy},{ox}) leaves the padded {PADDED_SIDE}×{PADDED_SIDE} image"),
        ));
    }
    let plane = IMAGE_SIDE * IMAGE_SIDE;
    let mut out = vec![0u8; IMAGE_CHANNELS * side * side];
    for c in 0..IMAGE_CHANNELS {
        let src = &image[c * plane..(c + 1) * plane];
        for y in 0..side {
            // coordinates in the unpadded image
            let Some(sy) = (oy + y).checked_sub(CROP_PAD).filter(|&v| v < IMAGE_SIDE) else {
                continue;
            };
            for x in 0..side {
                let px = if flip { side - 1 - x } else { x };
                if let Some(sx) = (ox + px).checked_sub(CROP_PAD).filter(|&v| v < IMAGE_SIDE) {
                    out[(c * side + y) * side + x] = src[sy * IMAGE_SIDE + sx];
                }
            }
        }
    }
    Ok(out)
}

/// Random crop offsets uniform in `[0, max_offset]²` and a fair-coin horizontal flip.
pub fn augment_sample(image: &[u8], side: usize, rng: &mut impl Rng) -> Result<Vec<u8>> {
    let m = max_offset(side);
    let oy = rng.random_range(0..=m);
    let ox = rng.random_range(0..=m);
    let flip = rng.random_bool(0.5);
    crop_flip(image, side, oy, ox, flip)
}
