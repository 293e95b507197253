use crate::geometry::Vec3;
use crate::guidance::GuidanceState;
use crate::protocol::SimCommand;

/// Steers a needle using nothing but guidance readouts and the planned
/// direction the operator entered: pull the tip back onto the line, then
/// advance along it once close.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GuidanceController {
    /// Unit planned direction, entry to target.
    pub plan_dir: Vec3,
    /// Fraction of the lateral offset corrected per command.
    pub gain: f64,
    /// Largest lateral correction per command (m).
    pub max_step: f64,
    /// Advance per command along the plan (m).
    pub advance_step: f64,
    /// Advance only while the lateral offset is below this (m).
    pub advance_radius: f64,
    /// Stop advancing at this progress.
    pub goal_progress: f64,
}

impl GuidanceController {
    pub fn new(plan_dir: Vec3) -> Self {
        GuidanceController {
            plan_dir: plan_dir.normalize(),
            gain: 0.25,
            max_step: 2e-3,
            advance_step: 0.6e-3,
            advance_radius: 2e-3,
            goal_progress: 0.95,
        }
    }

    pub fn command(&self, state: &GuidanceState) -> Option<SimCommand> {
        let mut delta = -state.lateral_offset * self.gain;
        let n = delta.norm();
        if n > self.max_step {
            delta *= self.max_step / n;
        }
        if state.lateral_magnitude < self.advance_radius && state.progress < self.goal_progress {
            delta += self.plan_dir * self.advance_step;
        }
        if delta.norm() == 0.0 {
            return None;
        }
        Some(SimCommand::NudgeTranslate { delta })
    }
}
