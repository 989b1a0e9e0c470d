//! Grayscale conversion, 84x84 resize and the 4-deep frame stack.

use serde::{Deserialize, Serialize};

use super::raster::{RawFrame, FRAME_SIZE};

pub const PROCESSED_SIZE: usize = 84;
pub const STACK_DEPTH: usize = 4;

/// Single-channel plane, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plane<T> {
    pub width: usize,
    pub height: usize,
    pub data: Vec<T>,
}

impl<T: Copy> Plane<T> {
    pub fn filled(width: usize, height: usize, v: T) -> Self {
        Self {
            width,
            height,
            data: vec![v; width * height],
        }
    }

    pub fn at(&self, x: usize, y: usize) -> T {
        self.data[y * self.width + x]
    }
}

/// BT.601 luma, `round(0.299 r + 0.587 g + 0.114 b)`.
pub fn luma(rgb: [u8; 3]) -> u8 {
    let y = 0.299 * rgb[0] as f64 + 0.587 * rgb[1] as f64 + 0.114 * rgb[2] as f64;
    y.round().clamp(0.0, 255.0) as u8
}

pub fn to_grayscale(frame: &RawFrame) -> Plane<u8> {
    Plane {
        width: FRAME_SIZE,
        height: FRAME_SIZE,
        data: frame.pixels().map(luma).collect(),
    }
}

/// Region kept before resizing. The default keeps the full frame; there is no
/// status bar to trim off.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Crop {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

impl Default for Crop {
    fn default() -> Self {
        Self {
            x: 0,
            y: 0,
            width: FRAME_SIZE,
            height: FRAME_SIZE,
        }
    }
}

pub fn crop(plane: &Plane<u8>, c: Crop) -> Plane<u8> {
    if c.x == 0 && c.y == 0 && c.width == plane.width && c.height == plane.height {
        return plane.clone();
    }
    let mut data = Vec::with_capacity(c.width * c.height);
    for y in c.y..c.y + c.height {
        data.extend_from_slice(&plane.data[y * plane.width + c.x..y * plane.width + c.x + c.width]);
    }
    Plane {
        width: c.width,
        height: c.height,
        data,
    }
}

/// Source coordinate for output index `i` with pixel centers aligned
/// (`(i + 0.5) * in / out - 0.5`), clamped to the valid range.
fn source_coord(i: usize, input: usize, output: usize) -> (usize, usize, f64) {
    let s = ((i as f64 + 0.5) * input as f64 / output as f64 - 0.5).clamp(0.0, (input - 1) as f64);
    let i0 = s.floor() as usize;
    let i1 = (i0 + 1).min(input - 1);
    (i0, i1, s - i0 as f64)
}

/// Bilinear resize to 84x84, then scaling by 1/255 into [0, 1].
pub fn resize_84(plane: &Plane<u8>) -> Plane<f32> {
    let n = PROCESSED_SIZE;
    let cols: Vec<_> = (0..n).map(|x| source_coord(x, plane.width, n)).collect();
    let mut data = Vec::with_capacity(n * n);
    for y in 0..n {
        let (y0, y1, wy) = source_coord(y, plane.height, n);
        for &(x0, x1, wx) in &cols {
            let top = plane.at(x0, y0) as f64 * (1.0 - wx) + plane.at(x1, y0) as f64 * wx;
            let bottom = plane.at(x0, y1) as f64 * (1.0 - wx) + plane.at(x1, y1) as f64 * wx;
            let v = top * (1.0 - wy) + bottom * wy;
            data.push((v / 255.0).clamp(0.0, 1.0) as f32);
        }
    }
    Plane {
        width: n,
        height: n,
        data,
    }
}

/// The last four processed planes, oldest first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameStack {
    planes: Vec<Plane<f32>>,
}

impl FrameStack {
    /// Fresh stack holding four copies of the episode's first plane.
    pub fn new(first: Plane<f32>) -> Self {
        Self {
            planes: vec![first; STACK_DEPTH],
        }
    }

    pub fn push(&mut self, plane: Plane<f32>) {
        self.planes.remove(0);
        self.planes.push(plane);
    }

    pub fn planes(&self) -> &[Plane<f32>] {
        &self.planes
    }

    pub fn shape(&self) -> [usize; 3] {
        [STACK_DEPTH, PROCESSED_SIZE, PROCESSED_SIZE]
    }

    /// Plane-major, row-major flattening.
    pub fn to_vec(&self) -> Vec<f32> {
        self.planes.iter().flat_map(|p| p.data.iter().copied()).collect()
    }

    /// Little-endian f32 dump in `to_vec` order.
    pub fn to_le_bytes(&self) -> Vec<u8> {
        self.to_vec().iter().flat_map(|v| v.to_le_bytes()).collect()
    }
}
