//! Car-centric top-down software rasterizer.
//!
//! The camera follows the car: the car sits at a fixed anchor pixel with its
//! heading pointing up the screen. Road tiles are filled as convex quads by
//! testing pixel centers; the car is drawn as an outline so the surface under
//! the anchor pixel stays visible.

use serde::{Deserialize, Serialize};

use crate::env::{CarState, Track};
use crate::geom::{quad_contains, Vec2};

pub const FRAME_SIZE: usize = 96;

pub const GRASS: [u8; 3] = [102, 204, 102];
pub const ROAD: [u8; 3] = [102, 102, 102];
pub const CAR: [u8; 3] = [204, 0, 0];
pub const WHEEL: [u8; 3] = [0, 0, 0];

/// Pixels per world unit.
pub const ZOOM: f64 = 1.5;
pub const ANCHOR: (usize, usize) = (48, 72);

const CAR_HALF_WIDTH: f64 = 1.2;
const CAR_HALF_LENGTH: f64 = 2.2;

/// 96x96 RGB frame, row-major with interleaved channels.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawFrame {
    pub data: Vec<u8>,
}

impl std::fmt::Debug for RawFrame {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "RawFrame({}x{}x3)", FRAME_SIZE, FRAME_SIZE)
    }
}

impl RawFrame {
    pub fn filled(color: [u8; 3]) -> Self {
        let mut data = Vec::with_capacity(FRAME_SIZE * FRAME_SIZE * 3);
        for _ in 0..FRAME_SIZE * FRAME_SIZE {
            data.extend_from_slice(&color);
        }
        Self { data }
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * FRAME_SIZE + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set(&mut self, x: usize, y: usize, c: [u8; 3]) {
        let i = (y * FRAME_SIZE + x) * 3;
        self.data[i..i + 3].copy_from_slice(&c);
    }

    pub fn pixels(&self) -> impl Iterator<Item = [u8; 3]> + '_ {
        self.data.chunks_exact(3).map(|c| [c[0], c[1], c[2]])
    }
}

/// World-to-screen transform for one car pose.
struct Camera {
    origin: Vec2,
    forward: Vec2,
    right: Vec2,
}

impl Camera {
    fn new(car: &CarState) -> Self {
        let forward = car.forward();
        Self {
            origin: car.position,
            forward,
            right: forward.perp(),
        }
    }

    fn to_screen(&self, p: Vec2) -> Vec2 {
        let d = p - self.origin;
        Vec2::new(
            ANCHOR.0 as f64 + 0.5 + ZOOM * d.dot(self.right),
            ANCHOR.1 as f64 + 0.5 - ZOOM * d.dot(self.forward),
        )
    }
}

/// Radius (world units) around the car that can appear on screen.
pub fn view_radius() -> f64 {
    let dx = ANCHOR.0.max(FRAME_SIZE - ANCHOR.0) as f64;
    let dy = ANCHOR.1.max(FRAME_SIZE - ANCHOR.1) as f64;
    dx.hypot(dy) / ZOOM
}

fn fill_quad(frame: &mut RawFrame, quad: &[Vec2; 4], color: [u8; 3]) {
    let (mut x0, mut y0, mut x1, mut y1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
    for p in quad {
        x0 = x0.min(p.x);
        y0 = y0.min(p.y);
        x1 = x1.max(p.x);
        y1 = y1.max(p.y);
    }
    let lim = FRAME_SIZE as f64 - 1.0;
    if x1 < 0.0 || y1 < 0.0 || x0 > lim + 1.0 || y0 > lim + 1.0 {
        return;
    }
    let xs = x0.floor().clamp(0.0, lim) as usize;
    let xe = x1.ceil().clamp(0.0, lim) as usize;
    let ys = y0.floor().clamp(0.0, lim) as usize;
    let ye = y1.ceil().clamp(0.0, lim) as usize;
    for y in ys..=ye {
        for x in xs..=xe {
            if quad_contains(quad, Vec2::new(x as f64 + 0.5, y as f64 + 0.5)) {
                frame.set(x, y, color);
            }
        }
    }
}

fn draw_car(frame: &mut RawFrame) {
    let (ax, ay) = (ANCHOR.0 as i64, ANCHOR.1 as i64);
    let hw = (CAR_HALF_WIDTH * ZOOM).round() as i64;
    let hl = (CAR_HALF_LENGTH * ZOOM).round() as i64;
    let mut put = |x: i64, y: i64, c: [u8; 3]| {
        if (0..FRAME_SIZE as i64).contains(&x) && (0..FRAME_SIZE as i64).contains(&y) {
            frame.set(x as usize, y as usize, c);
        }
    };
    for x in -hw..=hw {
        put(ax + x, ay - hl, CAR);
        put(ax + x, ay + hl, CAR);
    }
    for y in -hl..=hl {
        put(ax - hw, ay + y, CAR);
        put(ax + hw, ay + y, CAR);
    }
    for (sx, sy) in [(-1, -1), (1, -1), (-1, 1), (1, 1)] {
        put(ax + sx * (hw + 1), ay + sy * (hl - 1), WHEEL);
    }
}

pub fn rasterize(track: &Track, car: &CarState) -> RawFrame {
    let mut frame = RawFrame::filled(GRASS);
    let camera = Camera::new(car);
    let reach = view_radius() + track.width + 4.0;
    for (i, tile) in track.tiles.iter().enumerate() {
        if track.tile_center(i).dist(car.position) > reach {
            continue;
        }
        let quad = tile.corners.map(|c| camera.to_screen(c));
        fill_quad(&mut frame, &quad, ROAD);
    }
    draw_car(&mut frame);
    frame
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{generate_track, TrackParams};

    #[test]
    fn anchor_shows_road_when_car_is_on_road() {
        let track = generate_track(7, &TrackParams::default()).unwrap();
        let dir = track.tile_direction(3);
        let car = CarState::at_rest(track.tile_center(3), dir.y.atan2(dir.x));
        let frame = rasterize(&track, &car);
        assert_eq!(frame.pixel(ANCHOR.0, ANCHOR.1), ROAD);
        assert!(frame.pixels().any(|p| p == CAR));
    }

    #[test]
    fn rendering_is_deterministic() {
        let track = generate_track(2, &TrackParams::default()).unwrap();
        let car = CarState::at_rest(track.tile_center(10), 1.0);
        assert_eq!(rasterize(&track, &car), rasterize(&track, &car));
    }

    #[test]
    fn far_from_track_only_grass_and_car() {
        let track = generate_track(2, &TrackParams::default()).unwrap();
        let far = track.playfield.max + Vec2::new(view_radius() + 50.0, 0.0);
        let frame = rasterize(&track, &CarState::at_rest(far, 0.4));
        assert!(frame
            .pixels()
            .all(|p| p == GRASS || p == CAR || p == WHEEL));
        assert!(!frame.pixels().any(|p| p == ROAD));
    }

    #[test]
    fn heading_points_up_the_screen() {
        // On a straight, the road extends above the anchor along the column.
        let track = crate::env::Track::stadium(250, 40.0, &TrackParams::default()).unwrap();
        let car = CarState::at_rest(track.tile_center(5), 0.0);
        let frame = rasterize(&track, &car);
        for y in 0..ANCHOR.1 - 6 {
            assert_eq!(frame.pixel(ANCHOR.0, y), ROAD, "row {y}");
        }
        // Road is 14 units wide => 21 px; columns 15 px to either side are grass.
        assert_eq!(frame.pixel(ANCHOR.0 - 15, 20), GRASS);
        assert_eq!(frame.pixel(ANCHOR.0 + 15, 20), GRASS);
    }
}
