use std::io::Cursor;

use base64::Engine;
use image::{ImageFormat, Rgb, RgbImage};

use super::mask::Mask;
use crate::error::{Error, Result};
use crate::hash::sha256_hex;

/// Fill for pixels outside the mask when cropping an object for captioning.
pub const MASK_FILL: Rgb<u8> = Rgb([128, 128, 128]);

/// Decoded image together with its original bytes and content hash.
#[derive(Clone)]
pub struct LoadedImage {
    pub bytes: Vec<u8>,
    pub rgb: RgbImage,
    pub sha256: String,
}

impl std::fmt::Debug for LoadedImage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LoadedImage")
            .field("width", &self.rgb.width())
            .field("height", &self.rgb.height())
            .field("sha256", &self.sha256)
            .finish()
    }
}

impl LoadedImage {
    pub fn decode(bytes: Vec<u8>) -> Result<Self> {
        let rgb = image::load_from_memory(&bytes)
            .map_err(|e| Error::Image(e.to_string()))?
            .to_rgb8();
        let sha256 = sha256_hex(&bytes);
        Ok(Self { bytes, rgb, sha256 })
    }

    pub fn from_rgb(rgb: RgbImage) -> Self {
        let bytes = encode_png(&rgb);
        let sha256 = sha256_hex(&bytes);
        Self { bytes, rgb, sha256 }
    }

    pub fn width(&self) -> u32 {
        self.rgb.width()
    }

    pub fn height(&self) -> u32 {
        self.rgb.height()
    }

    pub fn pixel_count(&self) -> u64 {
        self.width() as u64 * self.height() as u64
    }

    pub fn to_b64(&self) -> String {
        base64::engine::general_purpose::STANDARD.encode(&self.bytes)
    }

    /// PNG of the image with every pixel outside `mask` set to mid-gray.
    pub fn masked_crop_png(&self, mask: &Mask) -> Result<Vec<u8>> {
        if mask.width != self.width() || mask.height != self.height() {
            return Err(Error::InvalidMask(format!(
                "mask is {}x{}, image is {}x{}",
                mask.width,
                mask.height,
                self.width(),
                self.height()
            )));
        }
        let mut out = RgbImage::from_pixel(self.width(), self.height(), MASK_FILL);
        for (x, y) in mask.foreground() {
            out.put_pixel(x, y, *self.rgb.get_pixel(x, y));
        }
        Ok(encode_png(&out))
    }

    pub fn masked_crop_b64(&self, mask: &Mask) -> Result<String> {
        Ok(base64::engine::general_purpose::STANDARD.encode(self.masked_crop_png(mask)?))
    }
}

pub(crate) fn encode_png(rgb: &RgbImage) -> Vec<u8> {
    let mut buf = Cursor::new(Vec::new());
    rgb.write_to(&mut buf, ImageFormat::Png)
        .expect("in-memory PNG encoding");
    buf.into_inner()
}

/// Decodes a base64 image payload back to raw bytes.
pub fn decode_b64(payload: &str) -> Result<Vec<u8>> {
    base64::engine::general_purpose::STANDARD
        .decode(payload)
        .map_err(|e| Error::Protocol(format!("bad base64 image: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn crop_grays_out_background() {
        let mut rgb = RgbImage::from_pixel(4, 3, Rgb([10, 20, 30]));
        rgb.put_pixel(1, 1, Rgb([200, 0, 0]));
        let img = LoadedImage::from_rgb(rgb);
        let mask = Mask::from_pixels(4, 3, &[(1, 1)]).unwrap();
        let crop = LoadedImage::decode(img.masked_crop_png(&mask).unwrap()).unwrap();
        assert_eq!(*crop.rgb.get_pixel(1, 1), Rgb([200, 0, 0]));
        assert_eq!(*crop.rgb.get_pixel(0, 0), MASK_FILL);
        assert_eq!(*crop.rgb.get_pixel(3, 2), MASK_FILL);
    }

    #[test]
    fn crop_rejects_mismatched_mask() {
        let img = LoadedImage::from_rgb(RgbImage::new(4, 4));
        let mask = Mask::from_pixels(2, 2, &[(0, 0)]).unwrap();
        assert!(img.masked_crop_png(&mask).is_err());
    }

    #[test]
    fn b64_round_trip() {
        let img = LoadedImage::from_rgb(RgbImage::new(2, 2));
        assert_eq!(decode_b64(&img.to_b64()).unwrap(), img.bytes);
    }
}
