//! Low-dimensional observation: ray distances to the road edge plus a few
//! kinematic scalars, all in [-1, 1].
//!
//! Layout: `[ray_0 .. ray_{K-1}, speed, steer, lateral_offset, heading_error]`.
//! Rays fan out over [-pi/2, +pi/2] relative to the heading (negative = left).

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::env::{CarState, Physics, Track};
use crate::geom::{ray_segment, wrap_angle, Vec2};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    pub rays: usize,
    pub max_range: f64,
    pub speed_scale: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            rays: 9,
            max_range: 50.0,
            speed_scale: 30.0,
        }
    }
}

impl FeatureConfig {
    pub fn len(&self) -> usize {
        self.rays + 4
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn ray_angles(&self) -> Vec<f64> {
        match self.rays {
            0 => vec![],
            1 => vec![0.0],
            k => (0..k).map(|i| -PI / 2.0 + PI * i as f64 / (k - 1) as f64).collect(),
        }
    }
}

/// Distance from `origin` along unit `dir` to the first road-edge crossing, capped at `max_range`.
pub fn cast_ray(track: &Track, origin: Vec2, dir: Vec2, max_range: f64) -> f64 {
    let n = track.tile_count();
    let reach = max_range + track.width + 4.0;
    let mut best = max_range;
    for i in 0..n {
        if track.centerline[i].dist(origin) > reach {
            continue;
        }
        for (a, b) in [
            (track.right_edge(i), track.right_edge(i + 1)),
            (track.left_edge(i), track.left_edge(i + 1)),
        ] {
            if let Some(t) = ray_segment(origin, dir, a, b) {
                best = best.min(t);
            }
        }
    }
    best
}

pub fn observe_features(track: &Track, car: &CarState, physics: &Physics, cfg: &FeatureConfig) -> Vec<f32> {
    let mut out = Vec::with_capacity(cfg.len());
    for angle in cfg.ray_angles() {
        let dir = Vec2::from_angle(car.heading + angle);
        out.push(cast_ray(track, car.position, dir, cfg.max_range) / cfg.max_range);
    }

    let (seg, nearest) = track.nearest_segment(car.position);
    let tangent = track.tile_direction(seg);
    // perp() of the travel direction is the driver's right in the y-down world.
    let lateral = (car.position - nearest).dot(tangent.perp()) / (track.width / 2.0);
    let heading_error = wrap_angle(car.heading - tangent.y.atan2(tangent.x)) / PI;

    out.push(car.speed / cfg.speed_scale);
    out.push(car.steer_angle / physics.max_steer);
    out.push(lateral);
    out.push(heading_error);
    out.into_iter().map(|v| v.clamp(-1.0, 1.0) as f32).collect()
}
