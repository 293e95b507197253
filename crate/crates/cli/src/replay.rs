use crate::io::{output, read_recording, session_config};
use needleguide_core::recording::RecordLine;
use needleguide_server::session::{Outbound, Session};
use std::io::Write;
use std::path::Path;
use std::time::{Duration, Instant};

/// Broadcasts are written as recording lines. The session clock is the
/// recorded timestamp, so the output does not depend on `rate`.
pub fn run(input: &Path, rate: f64, config: Option<&Path>, out: Option<&Path>) -> anyhow::Result<()> {
    if !(rate >= 0.0 && rate.is_finite()) {
        anyhow::bail!("rate must be a non-negative number, got {rate}");
    }
    let recording = read_recording(input)?;
    let mut session = Session::new(session_config(config)?);
    let mut w = output(out)?;
    let started = Instant::now();
    let mut first = None;
    let mut clock = 0.0f64;
    let mut written = 0u64;
    for m in recording.messages {
        if let Some(t) = m.timestamp() {
            clock = clock.max(t);
            let t0 = *first.get_or_insert(t);
            if rate > 0.0 {
                let due = Duration::from_secs_f64(((t - t0) / rate).max(0.0));
                if let Some(wait) = due.checked_sub(started.elapsed()) {
                    w.flush()?;
                    std::thread::sleep(wait);
                }
            }
        }
        for o in session.ingest(m, clock) {
            if let Outbound::Broadcast(b) = o {
                writeln!(w, "{}", RecordLine::Message(b).to_json())?;
                written += 1;
            }
        }
    }
    w.flush()?;
    let c = session.counters();
    eprintln!(
        "replayed {} frames ({} invalid, {} out of order), {} guidance messages, {written} broadcasts",
        c.frames_in, c.invalid_frames, c.out_of_order, c.guidance_out
    );
    Ok(())
}
