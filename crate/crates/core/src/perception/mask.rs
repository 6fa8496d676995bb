//! Run-length encoded binary masks.
//!
//! Runs are row-major and alternate background/foreground, starting with a
//! (possibly zero-length) background run.

use serde::{Deserialize, Serialize};

use super::geometry::BBox;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Mask {
    pub width: u32,
    pub height: u32,
    pub rle: Vec<u32>,
}

impl Mask {
    /// Validates run lengths against the image size and requires at least one
    /// foreground pixel.
    pub fn new(width: u32, height: u32, rle: Vec<u32>) -> Result<Self> {
        let total: u64 = rle.iter().map(|&c| c as u64).sum();
        let expected = width as u64 * height as u64;
        if total != expected {
            return Err(Error::InvalidMask(format!(
                "run lengths sum to {total}, expected {width}x{height}={expected}"
            )));
        }
        let mask = Self { width, height, rle };
        if mask.area() == 0 {
            return Err(Error::EmptyMask);
        }
        Ok(mask)
    }

    /// Encodes a row-major bitmap (`true` = foreground).
    pub fn from_bitmap(width: u32, height: u32, bits: &[bool]) -> Result<Self> {
        if bits.len() != width as usize * height as usize {
            return Err(Error::InvalidMask(format!(
                "bitmap has {} pixels, expected {}",
                bits.len(),
                width as usize * height as usize
            )));
        }
        let mut rle = Vec::new();
        let mut current = false;
        let mut run = 0u32;
        for &bit in bits {
            if bit != current {
                rle.push(run);
                run = 0;
                current = bit;
            }
            run += 1;
        }
        rle.push(run);
        Self::new(width, height, rle)
    }

    /// Builds a mask from a list of foreground pixel coordinates.
    pub fn from_pixels(width: u32, height: u32, pixels: &[(u32, u32)]) -> Result<Self> {
        let mut bits = vec![false; width as usize * height as usize];
        for &(x, y) in pixels {
            if x >= width || y >= height {
                return Err(Error::InvalidMask(format!("pixel ({x}, {y}) out of bounds")));
            }
            bits[y as usize * width as usize + x as usize] = true;
        }
        Self::from_bitmap(width, height, &bits)
    }

    /// Filled rectangle `[x0, x0+w) x [y0, y0+h)`.
    pub fn rect(width: u32, height: u32, x0: u32, y0: u32, w: u32, h: u32) -> Result<Self> {
        let pixels: Vec<(u32, u32)> = (y0..y0 + h)
            .flat_map(|y| (x0..x0 + w).map(move |x| (x, y)))
            .collect();
        Self::from_pixels(width, height, &pixels)
    }

    pub fn to_bitmap(&self) -> Vec<bool> {
        let mut bits = Vec::with_capacity(self.width as usize * self.height as usize);
        for (i, &run) in self.rle.iter().enumerate() {
            bits.extend(std::iter::repeat_n(i % 2 == 1, run as usize));
        }
        bits
    }

    /// Foreground `(x, y)` coordinates in row-major order.
    pub fn foreground(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        let width = self.width.max(1) as u64;
        let mut offset = 0u64;
        self.rle.iter().enumerate().flat_map(move |(i, &run)| {
            let start = offset;
            offset += run as u64;
            let range = if i % 2 == 1 { start..start + run as u64 } else { 0..0 };
            range.map(move |p| ((p % width) as u32, (p / width) as u32))
        })
    }

    pub fn area(&self) -> u64 {
        self.rle.iter().skip(1).step_by(2).map(|&c| c as u64).sum()
    }

    pub fn contains(&self, x: u32, y: u32) -> bool {
        if x >= self.width || y >= self.height {
            return false;
        }
        let target = y as u64 * self.width as u64 + x as u64;
        let mut offset = 0u64;
        for (i, &run) in self.rle.iter().enumerate() {
            offset += run as u64;
            if target < offset {
                return i % 2 == 1;
            }
        }
        false
    }

    /// Tight bounding box of the foreground, in pixel units (a single pixel
    /// at `(x, y)` has box `(x, y, 1, 1)`).
    pub fn tight_bbox(&self) -> Result<BBox> {
        let mut it = self.foreground();
        let (fx, fy) = it.next().ok_or(Error::EmptyMask)?;
        let (mut x0, mut y0, mut x1, mut y1) = (fx, fy, fx, fy);
        for (x, y) in it {
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
        BBox::new(
            x0 as f64,
            y0 as f64,
            (x1 - x0 + 1) as f64,
            (y1 - y0 + 1) as f64,
        )
    }

    /// Stable digest of the mask geometry.
    pub fn digest(&self) -> String {
        crate::hash::json_digest(self)
    }
}

/// Mean foreground pixel coordinate.
pub fn mask_centroid(mask: &Mask) -> Result<(f64, f64)> {
    let (mut sx, mut sy, mut n) = (0.0f64, 0.0f64, 0u64);
    for (x, y) in mask.foreground() {
        sx += x as f64;
        sy += y as f64;
        n += 1;
    }
    if n == 0 {
        return Err(Error::EmptyMask);
    }
    Ok((sx / n as f64, sy / n as f64))
}
