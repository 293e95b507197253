use crate::geometry::{Pose, Quat, Vec3};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, UnitSphere};
use serde::{Deserialize, Serialize};

/// Gaussian tracking noise. Orientation noise is a small rotation about a
/// uniformly random axis with a normally distributed angle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    /// Meters, per axis.
    pub position_sigma: f64,
    /// Radians.
    pub orientation_sigma: f64,
    pub seed: u64,
}

impl NoiseModel {
    pub fn none(seed: u64) -> Self {
        NoiseModel { position_sigma: 0.0, orientation_sigma: 0.0, seed }
    }

    pub fn new(position_sigma: f64, orientation_sigma: f64, seed: u64) -> Self {
        NoiseModel { position_sigma, orientation_sigma, seed }
    }

    pub fn is_valid(&self) -> bool {
        self.position_sigma >= 0.0
            && self.orientation_sigma >= 0.0
            && self.position_sigma.is_finite()
            && self.orientation_sigma.is_finite()
    }

    pub fn is_zero(&self) -> bool {
        self.position_sigma == 0.0 && self.orientation_sigma == 0.0
    }

    /// Perturbs `pose`. Draws nothing from `rng` when noise is zero, so a
    /// noise-free stream is independent of the generator state.
    pub fn apply<R: Rng + ?Sized>(&self, pose: &Pose, rng: &mut R) -> Pose {
        let mut out = *pose;
        if self.position_sigma > 0.0 {
            let d = Vec3::new(
                rng.sample::<f64, _>(StandardNormal),
                rng.sample::<f64, _>(StandardNormal),
                rng.sample::<f64, _>(StandardNormal),
            );
            out.position += d * self.position_sigma;
        }
        if self.orientation_sigma > 0.0 {
            let axis: [f64; 3] = UnitSphere.sample(rng);
            let angle = rng.sample::<f64, _>(StandardNormal) * self.orientation_sigma;
            let delta = Quat::from_axis_angle(&Vec3::new(axis[0], axis[1], axis[2]), angle);
            out.orientation = (delta * out.orientation).normalized();
        }
        out
    }
}
