//! Kinematic bicycle model.
//!
//! Per frame, with `steer`, `gas`, `brake` already clamped:
//!
//! ```text
//! speed   += (a_gas*gas - a_brake*brake - c_drag*speed) * dt   (clamped >= 0, then
//!            multiplied by the off-track factor when off the road)
//! heading += speed * tan(steer * max_steer) / wheelbase * dt
//! position += speed * dt * (cos heading, sin heading)
//! ```
//!
//! Heading and position use the updated speed (semi-implicit Euler). The
//! world is y-down like the screen, so a positive heading change is a
//! clockwise (rightward) turn and `steer = +1` means full right.

use serde::{Deserialize, Serialize};

use super::Control;
use crate::geom::{wrap_angle, Vec2};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Physics {
    pub dt: f64,
    pub max_steer: f64,
    pub wheelbase: f64,
    pub accel_gas: f64,
    pub accel_brake: f64,
    pub drag: f64,
    /// Speed multiplier applied on every frame that starts off the road.
    pub offtrack_factor: f64,
}

impl Default for Physics {
    fn default() -> Self {
        Self {
            dt: 0.02,
            max_steer: 0.42,
            wheelbase: 2.5,
            accel_gas: 20.0,
            accel_brake: 40.0,
            drag: 0.3,
            offtrack_factor: 0.996,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CarState {
    pub position: Vec2,
    pub heading: f64,
    pub speed: f64,
    pub steer_angle: f64,
}

impl CarState {
    pub fn at_rest(position: Vec2, heading: f64) -> Self {
        Self {
            position,
            heading,
            speed: 0.0,
            steer_angle: 0.0,
        }
    }

    pub fn forward(&self) -> Vec2 {
        Vec2::from_angle(self.heading)
    }
}

pub fn step_dynamics(state: &CarState, control: Control, physics: &Physics, on_track: bool) -> CarState {
    let c = control.clamped();
    let dt = physics.dt;
    let accel = physics.accel_gas * c.gas - physics.accel_brake * c.brake - physics.drag * state.speed;
    let mut speed = (state.speed + accel * dt).max(0.0);
    if !on_track {
        speed *= physics.offtrack_factor;
    }
    let steer_angle = c.steer * physics.max_steer;
    let heading = wrap_angle(state.heading + speed * steer_angle.tan() / physics.wheelbase * dt);
    let position = state.position + Vec2::from_angle(heading) * (speed * dt);
    CarState {
        position,
        heading,
        speed,
        steer_angle,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn car(speed: f64) -> CarState {
        CarState {
            speed,
            ..CarState::at_rest(Vec2::default(), 0.3)
        }
    }

    #[test]
    fn zero_speed_steer_keeps_heading() {
        let p = Physics::default();
        for steer in [-1.0, 1.0] {
            let next = step_dynamics(&car(0.0), Control::new(steer, 0.0, 0.0), &p, true);
            assert_eq!(next.heading, 0.3);
            assert_eq!(next.position, Vec2::default());
        }
    }

    #[test]
    fn drag_slows_coasting_car() {
        let next = step_dynamics(&car(10.0), Control::default(), &Physics::default(), true);
        assert!(next.speed < 10.0);
        assert!((next.speed - 9.94).abs() < 1e-12);
    }

    #[test]
    fn one_gas_frame_from_rest() {
        let next = step_dynamics(&car(0.0), Control::new(0.0, 1.0, 0.0), &Physics::default(), true);
        assert!((next.speed - 0.4).abs() < 1e-12);
        let moved = next.position - Vec2::default();
        assert!((moved.norm() - 0.4 * 0.02).abs() < 1e-12);
        assert!((moved.normalized().dot(Vec2::from_angle(0.3)) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn brake_clamps_at_zero() {
        let next = step_dynamics(&car(0.1), Control::new(0.0, 0.0, 1.0), &Physics::default(), true);
        assert_eq!(next.speed, 0.0);
    }

    #[test]
    fn offtrack_friction_applies() {
        let p = Physics::default();
        let on = step_dynamics(&car(10.0), Control::default(), &p, true);
        let off = step_dynamics(&car(10.0), Control::default(), &p, false);
        assert!((off.speed - on.speed * 0.996).abs() < 1e-12);
    }

    #[test]
    fn steer_angle_stays_bounded() {
        let next = step_dynamics(&car(5.0), Control::new(7.0, 0.0, 0.0), &Physics::default(), true);
        assert!(next.steer_angle.abs() <= 0.42 + 1e-15);
    }
}
