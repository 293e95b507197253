use crate::geometry::{Pose, Vec3};
use crate::protocol::{PixelFormat, VideoFrame};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub const SPECKLE_MAX: u8 = 80;
pub const TARGET_INTENSITY: u8 = 255;

/// A spherical echogenic target in the tracker frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SphereTarget {
    pub center: Vec3,
    pub radius: f64,
}

/// Image geometry of a simulated ultrasound probe.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UsImageSpec {
    pub width: u16,
    pub height: u16,
    /// Meters per pixel.
    pub spacing: f64,
    pub image_to_probe: Pose,
}

/// Where a target shows up in the image: center in pixels and disc radius
/// in pixels, or `None` when the sphere misses the scan plane.
pub fn target_disc(probe_pose: &Pose, spec: &UsImageSpec, target: &SphereTarget) -> Option<(f64, f64, f64)> {
    let image_to_world = probe_pose.compose(&spec.image_to_probe);
    let local = image_to_world.inverse().transform_point(&target.center);
    let d = local.z.abs();
    if d >= target.radius {
        return None;
    }
    let r = (target.radius * target.radius - d * d).sqrt();
    Some((local.x / spec.spacing, local.y / spec.spacing, r / spec.spacing))
}

/// Renders a gray8 frame: seeded speckle plus a bright disc per target that
/// intersects the scan plane.
#[allow(clippy::too_many_arguments)]
pub fn synth_us_frame(
    probe_pose: &Pose,
    scene: &[SphereTarget],
    spec: &UsImageSpec,
    seed: u64,
    stream_id: u16,
    sequence: u32,
    timestamp: f64,
) -> VideoFrame {
    let (w, h) = (spec.width as usize, spec.height as usize);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ((sequence as u64) << 32 | stream_id as u64));
    let mut data: Vec<u8> = (0..w * h).map(|_| rng.random_range(0..SPECKLE_MAX)).collect();
    for target in scene {
        let Some((cu, cv, r)) = target_disc(probe_pose, spec, target) else {
            continue;
        };
        let r2 = r * r;
        let v0 = ((cv - r).floor().max(0.0)) as usize;
        let v1 = ((cv + r).ceil().min(h as f64 - 1.0)).max(-1.0);
        let u0 = ((cu - r).floor().max(0.0)) as usize;
        let u1 = ((cu + r).ceil().min(w as f64 - 1.0)).max(-1.0);
        if v1 < 0.0 || u1 < 0.0 {
            continue;
        }
        for v in v0..=v1 as usize {
            for u in u0..=u1 as usize {
                let (du, dv) = (u as f64 - cu, v as f64 - cv);
                if du * du + dv * dv <= r2 {
                    data[v * w + u] = TARGET_INTENSITY;
                }
            }
        }
    }
    VideoFrame {
        stream_id,
        sequence,
        timestamp,
        width: spec.width,
        height: spec.height,
        format: PixelFormat::Gray8,
        data,
    }
}
