//! Procedural closed-loop tracks.
//!
//! Checkpoints are scattered around a circle, joined by a closed Catmull-Rom
//! spline, resampled at (almost) equal arc steps and extruded sideways into
//! quadrilateral road tiles. Tile `i` spans centerline samples `i` and `i + 1`
//! so consecutive tiles share an edge exactly.

use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

use crate::error::{Error, Result};
use crate::geom::{quad_contains, Rect, Vec2};
use crate::rng::SplitMix64;

pub const MIN_TILES: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackParams {
    pub checkpoints: usize,
    pub radius: f64,
    /// Checkpoint radius is drawn from `[min_radius_frac * radius, radius]`.
    pub min_radius_frac: f64,
    pub angle_jitter: f64,
    pub arc_step: f64,
    pub width: f64,
    /// Playfield is the track bounding box with half-extents grown by this fraction.
    pub playfield_margin: f64,
    pub max_attempts: u32,
}

impl Default for TrackParams {
    fn default() -> Self {
        Self {
            checkpoints: 12,
            radius: 150.0,
            min_radius_frac: 0.55,
            angle_jitter: 0.3,
            arc_step: 3.0,
            width: 14.0,
            playfield_margin: 0.2,
            max_attempts: 64,
        }
    }
}

impl TrackParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParams(m.to_string()));
        if self.checkpoints < 8 {
            return bad("track checkpoint count must be >= 8");
        }
        if !(self.width > 0.0) {
            return bad("track width must be > 0");
        }
        if !(self.radius > 0.0) || !(self.arc_step > 0.0) {
            return bad("track radius and arc step must be > 0");
        }
        if !(self.min_radius_frac > 0.0 && self.min_radius_frac <= 1.0) {
            return bad("min_radius_frac must be in (0, 1]");
        }
        if !(self.angle_jitter >= 0.0) || !(self.playfield_margin >= 0.0) {
            return bad("angle_jitter and playfield_margin must be >= 0");
        }
        if self.max_attempts == 0 {
            return bad("max_attempts must be >= 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tile {
    /// `[right_i, left_i, left_{i+1}, right_{i+1}]` in the driver's frame (the
    /// world is y-down, so the +90 degree normal points to the driver's right).
    pub corners: [Vec2; 4],
    pub visited: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Track {
    pub seed: u64,
    pub centerline: Vec<Vec2>,
    pub tiles: Vec<Tile>,
    pub width: f64,
    pub playfield: Rect,
}

impl Track {
    /// Extrudes a closed centerline (last point joins back to the first) into tiles.
    /// Only `width` and `playfield_margin` are read from `params`.
    pub fn from_centerline(seed: u64, centerline: Vec<Vec2>, params: &TrackParams) -> Result<Track> {
        if centerline.len() < MIN_TILES {
            return Err(Error::InvalidParams(format!(
                "track needs at least {MIN_TILES} tiles, got {}",
                centerline.len()
            )));
        }
        let tiles = build_tiles(&centerline, params.width);
        if !is_valid(&centerline, &tiles, params) {
            return Err(Error::InvalidParams("self-intersecting or folded track".into()));
        }
        let bbox = Rect::bounding(tiles.iter().flat_map(|t| t.corners));
        Ok(Track {
            seed,
            centerline,
            tiles,
            width: params.width,
            playfield: bbox.inflated(params.playfield_margin),
        })
    }

    /// Stadium-shaped loop (two straights joined by half circles of `radius`)
    /// with exactly `tile_count` tiles of arc length `params.arc_step`.
    /// Tile 0 starts at the left end of the lower straight, heading +x.
    pub fn stadium(tile_count: usize, radius: f64, params: &TrackParams) -> Result<Track> {
        let length = tile_count as f64 * params.arc_step;
        let straight = (length - TAU * radius) / 2.0;
        if straight <= 0.0 {
            return Err(Error::InvalidParams("stadium radius too large for tile count".into()));
        }
        let half = straight / 2.0;
        let arc = std::f64::consts::PI * radius;
        let at = |s: f64| -> Vec2 {
            if s < straight {
                Vec2::new(-half + s, radius)
            } else if s < straight + arc {
                let phi = (s - straight) / radius;
                Vec2::new(half + radius * phi.sin(), radius * phi.cos())
            } else if s < 2.0 * straight + arc {
                Vec2::new(half - (s - straight - arc), -radius)
            } else {
                let phi = (s - 2.0 * straight - arc) / radius;
                Vec2::new(-half - radius * phi.sin(), -radius * phi.cos())
            }
        };
        let centerline = (0..tile_count)
            .map(|k| at(k as f64 * params.arc_step))
            .collect();
        Track::from_centerline(0, centerline, params)
    }

    pub fn tile_count(&self) -> usize {
        self.tiles.len()
    }

    pub fn visited_count(&self) -> usize {
        self.tiles.iter().filter(|t| t.visited).count()
    }

    pub fn right_edge(&self, i: usize) -> Vec2 {
        self.tiles[i % self.tiles.len()].corners[0]
    }

    pub fn left_edge(&self, i: usize) -> Vec2 {
        self.tiles[i % self.tiles.len()].corners[1]
    }

    /// Midpoint of tile `i` along the centerline.
    pub fn tile_center(&self, i: usize) -> Vec2 {
        let n = self.centerline.len();
        (self.centerline[i % n] + self.centerline[(i + 1) % n]) * 0.5
    }

    /// Unit direction of travel along tile `i`.
    pub fn tile_direction(&self, i: usize) -> Vec2 {
        let n = self.centerline.len();
        (self.centerline[(i + 1) % n] - self.centerline[i % n]).normalized()
    }

    /// Index of a tile containing `p`, searching outward from `hint`.
    pub fn locate(&self, p: Vec2, hint: Option<usize>) -> Option<usize> {
        let n = self.tiles.len();
        let start = hint.unwrap_or(0) % n;
        let reach = self.width * 1.5 + 4.0 * (self.centerline[1] - self.centerline[0]).norm();
        let check = |i: usize| {
            let c = self.tile_center(i);
            (c - p).norm() <= reach && quad_contains(&self.tiles[i].corners, p)
        };
        if check(start) {
            return Some(start);
        }
        for off in 1..=n / 2 {
            let fwd = (start + off) % n;
            if check(fwd) {
                return Some(fwd);
            }
            let back = (start + n - off) % n;
            if check(back) {
                return Some(back);
            }
        }
        None
    }

    /// Index of the centerline segment nearest to `p` and the nearest point on it.
    pub fn nearest_segment(&self, p: Vec2) -> (usize, Vec2) {
        let n = self.centerline.len();
        let mut best = (0, self.centerline[0], f64::INFINITY);
        for i in 0..n {
            let a = self.centerline[i];
            let b = self.centerline[(i + 1) % n];
            let t = crate::geom::project_on_segment(p, a, b);
            let q = a + (b - a) * t;
            let d = (q - p).norm();
            if d < best.2 {
                best = (i, q, d);
            }
        }
        (best.0, best.1)
    }
}

fn catmull_rom(p0: Vec2, p1: Vec2, p2: Vec2, p3: Vec2, t: f64) -> Vec2 {
    let t2 = t * t;
    let t3 = t2 * t;
    (p1 * 2.0
        + (p2 - p0) * t
        + (p0 * 2.0 - p1 * 5.0 + p2 * 4.0 - p3) * t2
        + (p1 * 3.0 - p0 - p2 * 3.0 + p3) * t3)
        * 0.5
}

const SPLINE_SUBDIV: usize = 64;

fn attempt(params: &TrackParams, rng: &mut SplitMix64) -> Option<Vec<Vec2>> {
    let n = params.checkpoints;
    let checkpoints: Vec<Vec2> = (0..n)
        .map(|i| {
            let angle = TAU * i as f64 / n as f64
                + rng.uniform(-params.angle_jitter, params.angle_jitter);
            let r = rng.uniform(params.min_radius_frac * params.radius, params.radius);
            Vec2::from_angle(angle) * r
        })
        .collect();

    let mut dense = Vec::with_capacity(n * SPLINE_SUBDIV + 1);
    for i in 0..n {
        let p0 = checkpoints[(i + n - 1) % n];
        let p1 = checkpoints[i];
        let p2 = checkpoints[(i + 1) % n];
        let p3 = checkpoints[(i + 2) % n];
        for s in 0..SPLINE_SUBDIV {
            dense.push(catmull_rom(p0, p1, p2, p3, s as f64 / SPLINE_SUBDIV as f64));
        }
    }
    dense.push(dense[0]);

    let mut cumulative = Vec::with_capacity(dense.len());
    cumulative.push(0.0);
    for w in dense.windows(2) {
        let last = *cumulative.last().unwrap();
        cumulative.push(last + (w[1] - w[0]).norm());
    }
    let length = *cumulative.last().unwrap();
    let count = (length / params.arc_step).round() as usize;
    if count < MIN_TILES {
        return None;
    }
    let step = length / count as f64;
    let mut samples = Vec::with_capacity(count);
    let mut seg = 0;
    for k in 0..count {
        let s = k as f64 * step;
        while cumulative[seg + 1] < s {
            seg += 1;
        }
        let span = cumulative[seg + 1] - cumulative[seg];
        let t = if span > 0.0 { (s - cumulative[seg]) / span } else { 0.0 };
        samples.push(dense[seg] + (dense[seg + 1] - dense[seg]) * t);
    }
    Some(samples)
}

fn build_tiles(centerline: &[Vec2], width: f64) -> Vec<Tile> {
    let n = centerline.len();
    let half = width * 0.5;
    let edges: Vec<(Vec2, Vec2)> = (0..n)
        .map(|i| {
            let tangent = (centerline[(i + 1) % n] - centerline[(i + n - 1) % n]).normalized();
            let normal = tangent.perp();
            (centerline[i] + normal * half, centerline[i] - normal * half)
        })
        .collect();
    (0..n)
        .map(|i| {
            let (r0, l0) = edges[i];
            let (r1, l1) = edges[(i + 1) % n];
            Tile {
                corners: [r0, l0, l1, r1],
                visited: false,
            }
        })
        .collect()
}

fn convex_nondegenerate(q: &[Vec2; 4]) -> bool {
    let mut sign = 0.0;
    for i in 0..4 {
        let a = q[i];
        let b = q[(i + 1) % 4];
        let c = q[(i + 2) % 4];
        let cr = (b - a).cross(c - b);
        if cr.abs() < 1e-9 {
            return false;
        }
        if sign == 0.0 {
            sign = cr.signum();
        } else if cr.signum() != sign {
            return false;
        }
    }
    true
}

fn is_valid(centerline: &[Vec2], tiles: &[Tile], params: &TrackParams) -> bool {
    if !tiles.iter().all(|t| convex_nondegenerate(&t.corners)) {
        return false;
    }
    // Parts of the loop that are far apart along the road must stay far apart in the plane.
    let n = centerline.len();
    let along = 3.0 * params.width;
    let clearance = 1.5 * params.width;
    let spacing = (centerline[1] - centerline[0]).norm();
    let min_sep = (along / spacing).ceil() as usize;
    for i in 0..n {
        for j in (i + 1)..n {
            let sep = (j - i).min(n - (j - i));
            if sep > min_sep && (centerline[i] - centerline[j]).norm() < clearance {
                return false;
            }
        }
    }
    true
}

/// Deterministic track for `seed`; retries internally with a per-attempt
/// sub-stream until a loop passes the self-intersection checks.
pub fn generate_track(seed: u64, params: &TrackParams) -> Result<Track> {
    params.validate()?;
    for a in 0..params.max_attempts {
        let mut rng = SplitMix64::derive(seed, a as u64);
        let Some(centerline) = attempt(params, &mut rng) else {
            continue;
        };
        if let Ok(track) = Track::from_centerline(seed, centerline, params) {
            return Ok(track);
        }
    }
    Err(Error::GenerationFailed {
        attempts: params.max_attempts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_gives_identical_track() {
        let p = TrackParams::default();
        let a = generate_track(7, &p).unwrap();
        let b = generate_track(7, &p).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn too_few_checkpoints_rejected() {
        let p = TrackParams {
            checkpoints: 4,
            ..Default::default()
        };
        assert!(matches!(generate_track(7, &p), Err(Error::InvalidParams(_))));
    }

    #[test]
    fn nonpositive_width_rejected() {
        let p = TrackParams {
            width: 0.0,
            ..Default::default()
        };
        assert!(matches!(generate_track(1, &p), Err(Error::InvalidParams(_))));
    }

    #[test]
    fn tile_count_in_empirical_range() {
        let t = generate_track(7, &TrackParams::default()).unwrap();
        assert!((50..=600).contains(&t.tile_count()), "N = {}", t.tile_count());
    }

    #[test]
    fn tiles_form_closed_loop_of_shared_edges() {
        let t = generate_track(11, &TrackParams::default()).unwrap();
        let n = t.tile_count();
        for i in 0..n {
            let a = &t.tiles[i].corners;
            let b = &t.tiles[(i + 1) % n].corners;
            assert_eq!(a[3], b[0]);
            assert_eq!(a[2], b[1]);
        }
    }

    #[test]
    fn centerline_inside_tiles_and_tiles_inside_playfield() {
        let t = generate_track(3, &TrackParams::default()).unwrap();
        for (i, tile) in t.tiles.iter().enumerate() {
            assert!(quad_contains(&tile.corners, t.tile_center(i)));
            for c in tile.corners {
                assert!(t.playfield.contains(c));
            }
        }
    }

    #[test]
    fn stadium_has_requested_tiles() {
        let t = Track::stadium(250, 40.0, &TrackParams::default()).unwrap();
        assert_eq!(t.tile_count(), 250);
        assert!((t.tile_direction(0) - Vec2::new(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn locate_finds_tile_centers() {
        let t = generate_track(5, &TrackParams::default()).unwrap();
        for i in 0..t.tile_count() {
            assert_eq!(t.locate(t.tile_center(i), Some(i)), Some(i));
        }
        assert_eq!(t.locate(Vec2::new(1e4, 1e4), None), None);
    }
}
