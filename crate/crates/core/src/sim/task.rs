//! Waypoint task: move to each target along a straight line, dwell, repeat.

use nalgebra::{UnitQuaternion, Vector3, Vector6};

use super::scenario::{TaskSpec, TaskStep};
use crate::controller::{Strategy, TaskDemand};
use crate::kinematics::{orientation_error, Pose};

#[derive(Debug, Clone, Copy, PartialEq)]
enum Phase {
    Moving,
    Dwelling { remaining: f64 },
    Done,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TaskEvent {
    StepDone { cycle: u32, step: usize, name: String },
    CycleDone { cycle: u32 },
}

#[derive(Debug, Clone)]
pub struct TaskRunner {
    steps: Vec<TaskStep>,
    cycles: u32,
    accel: f64,
    tolerance: f64,
    orientation_gain: f64,
    max_speed: f64,
    base_height: f64,
    hold: UnitQuaternion<f64>,
    cycle: u32,
    index: usize,
    phase: Phase,
    speed: f64,
}

/// Straight-line move time at `speed` with symmetric `accel` ramps.
pub fn move_duration(distance: f64, speed: f64, accel: f64) -> f64 {
    if distance <= 0.0 {
        0.0
    } else if distance >= speed * speed / accel {
        distance / speed + speed / accel
    } else {
        2.0 * (distance / accel).sqrt()
    }
}

impl TaskRunner {
    pub fn new(
        spec: &TaskSpec,
        strategy: Strategy,
        max_speed: f64,
        base_height: f64,
        hold: UnitQuaternion<f64>,
    ) -> Self {
        Self {
            steps: spec.steps_for(strategy),
            cycles: spec.cycles,
            accel: spec.max_accel,
            tolerance: spec.tolerance,
            orientation_gain: spec.orientation_gain,
            max_speed,
            base_height,
            hold,
            cycle: 0,
            index: 0,
            phase: Phase::Moving,
            speed: 0.0,
        }
    }

    pub fn pending(&self) -> bool {
        self.phase != Phase::Done
    }

    pub fn step_index(&self) -> usize {
        self.index
    }

    pub fn cycle(&self) -> u32 {
        self.cycle
    }

    fn target_in_base(&self) -> Vector3<f64> {
        let [x, y, z] = self.steps[self.index].target;
        Vector3::new(x, y, z - self.base_height)
    }

    /// Nominal full-speed time of one steady cycle, which starts where the
    /// previous one ended.
    pub fn nominal_cycle_time(&self) -> f64 {
        let Some(last) = self.steps.last() else {
            return 0.0;
        };
        let mut from = Vector3::from(last.target);
        let mut total = 0.0;
        for s in &self.steps {
            let to = Vector3::from(s.target);
            total += move_duration((to - from).norm(), self.max_speed, self.accel) + s.dwell;
            from = to;
        }
        total
    }

    /// Demand for this tick given the TCP pose in the base frame and the
    /// speed fraction currently in force.
    pub fn update(&mut self, tcp: &Pose, fraction: f64, dt: f64) -> (TaskDemand, Vec<TaskEvent>) {
        let mut events = Vec::new();
        if self.phase == Phase::Moving {
            let delta = self.target_in_base() - tcp.position;
            let dist = delta.norm();
            if dist <= self.tolerance {
                self.phase = Phase::Dwelling {
                    remaining: self.steps[self.index].dwell,
                };
                self.speed = 0.0;
            } else {
                self.speed = (self.speed + self.accel * dt)
                    .min((2.0 * self.accel * dist).sqrt())
                    .min(self.max_speed)
                    .min(dist / dt);
                let linear = delta * (self.speed / dist);
                let angular = orientation_error(&self.hold, &tcp.orientation) * self.orientation_gain;
                let twist = Vector6::new(linear.x, linear.y, linear.z, angular.x, angular.y, angular.z);
                return (TaskDemand { twist, active: true }, events);
            }
        }
        if let Phase::Dwelling { remaining } = self.phase {
            let remaining = if fraction > 0.0 { remaining - dt } else { remaining };
            if remaining <= 1e-12 {
                events.push(TaskEvent::StepDone {
                    cycle: self.cycle + 1,
                    step: self.index,
                    name: self.steps[self.index].name.clone(),
                });
                self.index += 1;
                self.phase = Phase::Moving;
                if self.index == self.steps.len() {
                    self.index = 0;
                    self.cycle += 1;
                    events.push(TaskEvent::CycleDone { cycle: self.cycle });
                    if self.cycle == self.cycles {
                        self.phase = Phase::Done;
                    }
                }
            } else {
                self.phase = Phase::Dwelling { remaining };
            }
        }
        (TaskDemand::idle(), events)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trapezoid_and_triangle_durations() {
        assert!((move_duration(1.0, 1.0, 2.0) - 1.5).abs() < 1e-15);
        assert!((move_duration(0.25, 1.0, 2.0) - 2.0 * 0.125f64.sqrt()).abs() < 1e-15);
        assert_eq!(move_duration(0.0, 1.0, 2.0), 0.0);
    }
}
