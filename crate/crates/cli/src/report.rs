use crate::calibrate::{describe_errors, image_size};
use crate::io::{read_recording, session_config, truth_for};
use needleguide_core::offline::{collect_samples, evaluate, run_routine, Routine, RoutineErrors, RoutineOptions};
use needleguide_core::protocol::Message;
use needleguide_core::simulator::TruthRecord;
use needleguide_server::replay::replay;
use needleguide_server::stats::Percentiles;
use serde::Serialize;
use std::collections::BTreeMap;
use std::path::Path;

/// The report was printed but records a failure; exit with a data error
/// without printing anything further.
#[derive(Debug)]
pub struct Reported;

impl std::fmt::Display for Reported {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("report lists failed routines")
    }
}

impl std::error::Error for Reported {}

#[derive(Debug, Default, Serialize)]
pub struct ReportSummary {
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub routines: BTreeMap<&'static str, RoutineErrors>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub routine_failures: BTreeMap<&'static str, String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub guidance_latency_ms: Option<Percentiles>,
    pub frames: FrameCounts,
}

#[derive(Debug, Default, Serialize)]
pub struct FrameCounts {
    pub received: u64,
    pub per_body: BTreeMap<u16, u64>,
    /// Gaps in per-body sequence numbers.
    pub dropped: u64,
    pub invalid: u64,
    pub out_of_order: u64,
    pub guidance: u64,
    pub lost_events: u64,
}

/// Routines the truth records can score.
fn applicable(truth: &[TruthRecord]) -> Vec<Routine> {
    let mut out = Vec::new();
    for t in truth {
        let rs: &[Routine] = match t {
            TruthRecord::NeedleTip { .. } => &[Routine::Sphere, Routine::Tip],
            TruthRecord::NeedleAxis { .. } => &[Routine::Axis],
            TruthRecord::HandEye { .. } => &[Routine::HandEye],
            TruthRecord::UsPlane { .. } => &[Routine::UsPlane],
            _ => &[],
        };
        for r in rs {
            if !out.contains(r) {
                out.push(*r);
            }
        }
    }
    out
}

fn sequence_gaps(messages: &[Message]) -> (BTreeMap<u16, u64>, u64) {
    let mut counts = BTreeMap::new();
    let mut last: BTreeMap<u16, u32> = BTreeMap::new();
    let mut dropped = 0;
    for m in messages {
        if let Message::RigidBodyFrame(f) = m {
            *counts.entry(f.body_id).or_insert(0) += 1;
            if let Some(prev) = last.insert(f.body_id, f.sequence) {
                dropped += u64::from(f.sequence.saturating_sub(prev).saturating_sub(1));
            }
        }
    }
    (counts, dropped)
}

pub fn summarize(
    messages: &[Message],
    truth: &[TruthRecord],
    pixel_spacing_mm: Option<f64>,
    config: needleguide_server::SessionConfig,
) -> ReportSummary {
    let mut summary = ReportSummary::default();
    let samples = collect_samples(messages);
    let options = RoutineOptions { pixel_spacing: pixel_spacing_mm.map(|s| s * 1e-3), needle: None };
    for routine in applicable(truth) {
        match run_routine(routine, &samples, &options) {
            Ok(out) => {
                summary.routines.insert(routine.name(), evaluate(&out, truth, image_size(messages)));
            }
            Err(e) => {
                summary.routine_failures.insert(routine.name(), e.to_string());
            }
        }
    }
    let r = replay(messages, config);
    if r.guidance_latency_ms.count > 0 {
        summary.guidance_latency_ms = Some(r.guidance_latency_ms);
    }
    let (per_body, dropped) = sequence_gaps(messages);
    summary.frames = FrameCounts {
        received: r.counters.frames_in,
        per_body,
        dropped,
        invalid: r.counters.invalid_frames,
        out_of_order: r.counters.out_of_order,
        guidance: r.counters.guidance_out,
        lost_events: r.counters.lost_events,
    };
    summary
}

pub fn run(input: &Path, truth: Option<&Path>, pixel_spacing_mm: Option<f64>, config: Option<&Path>, json: bool) -> anyhow::Result<()> {
    let recording = read_recording(input)?;
    let truth = truth_for(&recording, truth)?;
    let summary = summarize(&recording.messages, &truth, pixel_spacing_mm, session_config(config)?);
    if json {
        println!("{}", serde_json::to_string_pretty(&summary)?);
    } else {
        print!("{}", render(&summary));
    }
    if summary.routine_failures.is_empty() {
        Ok(())
    } else {
        Err(Reported.into())
    }
}

fn render(s: &ReportSummary) -> String {
    let mut out = String::new();
    for (name, e) in &s.routines {
        out += &format!("[{name}]\n{}", describe_errors(e));
    }
    for (name, e) in &s.routine_failures {
        out += &format!("[{name}] failed: {e}\n");
    }
    if let Some(p) = &s.guidance_latency_ms {
        out += &format!(
            "guidance latency over {} frames: p50 {:.4} ms, p95 {:.4} ms, p99 {:.4} ms, max {:.4} ms\n",
            p.count, p.p50, p.p95, p.p99, p.max
        );
    }
    let f = &s.frames;
    let bodies: Vec<String> = f.per_body.iter().map(|(b, n)| format!("{b}: {n}")).collect();
    out += &format!(
        "frames: {} received ({}), {} dropped, {} invalid, {} out of order; {} guidance, {} lost events\n",
        f.received,
        bodies.join(", "),
        f.dropped,
        f.invalid,
        f.out_of_order,
        f.guidance,
        f.lost_events
    );
    out
}
