use crate::io::{read_recording, truth_for};
use needleguide_core::offline::{collect_samples, evaluate, run_routine, Routine, RoutineErrors, RoutineOptions, RoutineOutput};
use needleguide_core::protocol::Message;
use needleguide_core::{Pose, Vec3};
use std::path::Path;

/// Frame size of the first video frame, for the ultrasound error grid.
pub fn image_size(messages: &[Message]) -> Option<(f64, f64)> {
    messages.iter().find_map(|m| match m {
        Message::VideoFrame(v) => Some((v.width as f64, v.height as f64)),
        _ => None,
    })
}

pub fn run(routine: Routine, input: &Path, truth: Option<&Path>, pixel_spacing_mm: Option<f64>, json: bool) -> anyhow::Result<()> {
    let recording = read_recording(input)?;
    let truth = truth_for(&recording, truth)?;
    let samples = collect_samples(&recording.messages);
    let options = RoutineOptions { pixel_spacing: pixel_spacing_mm.map(|s| s * 1e-3), needle: None };
    let output = run_routine(routine, &samples, &options)?;
    let errors = evaluate(&output, &truth, image_size(&recording.messages));
    if json {
        let doc = serde_json::json!({ "routine": routine.name(), "result": output, "errors": errors });
        println!("{}", serde_json::to_string_pretty(&doc)?);
    } else {
        print!("{}", describe(&output));
        print!("{}", describe_errors(&errors));
    }
    Ok(())
}

fn v(p: &Vec3) -> String {
    format!("({:.6}, {:.6}, {:.6})", p.x, p.y, p.z)
}

fn pose(p: &Pose) -> String {
    let q = p.orientation;
    format!("position {} m, rotation ({:.6}, {:.6}, {:.6}, {:.6})", v(&p.position), q.w, q.x, q.y, q.z)
}

pub fn describe(output: &RoutineOutput) -> String {
    match output {
        RoutineOutput::Sphere(f) => format!(
            "sphere center {} m, radius {:.6} m, rms {:.4} mm over {} points\n",
            v(&f.center),
            f.radius,
            f.rms_residual * 1e3,
            f.point_count
        ),
        RoutineOutput::Circle(f) => format!(
            "circle center {} m, normal {}, radius {:.6} m, rms {:.4} mm\n",
            v(&f.center),
            v(&f.normal),
            f.radius,
            f.rms_residual * 1e3
        ),
        RoutineOutput::Tip(f) => format!(
            "tip offset {} m, pivot {} m, rms {:.4} mm\n",
            v(&f.tip_offset),
            v(&f.tip_world),
            f.rms * 1e3
        ),
        RoutineOutput::Axis(f) => format!("axis direction {}, rms {:.4} mm\n", v(&f.axis_dir), f.rms * 1e3),
        RoutineOutput::HandEye { fit, camera_pose } => {
            let mut s = format!(
                "hand-eye {}, residuals {:.4} deg / {:.4} mm\n",
                pose(&fit.x),
                fit.rotation_residual.to_degrees(),
                fit.translation_residual * 1e3
            );
            if let Some(c) = camera_pose {
                s += &format!("camera pose {}\n", pose(c));
            }
            s
        }
        RoutineOutput::UsPlane(c) => format!(
            "image to probe {}, pixel spacing {:.5} mm, rms {:.4} mm\n",
            pose(&c.image_to_probe),
            c.pixel_spacing * 1e3,
            c.rms_residual * 1e3
        ),
    }
}

pub fn describe_errors(e: &RoutineErrors) -> String {
    let rows = [
        ("tip error", e.tip_mm, "mm"),
        ("sphere center error", e.sphere_center_mm, "mm"),
        ("axis error", e.axis_deg, "deg"),
        ("hand-eye rotation error", e.hand_eye_deg, "deg"),
        ("hand-eye translation error", e.hand_eye_mm, "mm"),
        ("camera pose error", e.camera_pose_mm, "mm"),
        ("US plane RMS error", e.us_plane_mm, "mm"),
    ];
    rows.iter().filter_map(|(name, val, unit)| val.map(|x| format!("{name}: {x:.6} {unit}\n"))).collect()
}
