//! Offline replay of a recording through a session, for latency and
//! frame-count reports without sockets.

use crate::session::{Counters, Outbound, Session};
use crate::stats::Percentiles;
use crate::SessionConfig;
use needleguide_core::protocol::{encode, Message};
use std::time::Instant;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReplayReport {
    pub counters: Counters,
    /// Messages the server would have broadcast.
    pub broadcasts: u64,
    /// Needle-frame ingest to encoded guidance, milliseconds.
    pub guidance_latency_ms: Percentiles,
}

pub fn replay(messages: &[Message], config: SessionConfig) -> ReplayReport {
    let needle = config.bodies.needle;
    let mut session = Session::new(config);
    let mut latencies = Vec::new();
    let mut broadcasts = 0;
    let epoch = Instant::now();
    for m in messages {
        let started = Instant::now();
        let is_needle = matches!(m, Message::RigidBodyFrame(f) if f.body_id == needle);
        let out = session.ingest(m.clone(), epoch.elapsed().as_secs_f64());
        let mut guided = false;
        for o in &out {
            if let Outbound::Broadcast(b) = o {
                // encoding is part of the broadcast path
                let _ = encode(b);
                broadcasts += 1;
                guided |= matches!(b, Message::Guidance(_));
            }
        }
        if is_needle && guided {
            latencies.push(started.elapsed().as_secs_f64() * 1e3);
        }
    }
    ReplayReport { counters: session.counters(), broadcasts, guidance_latency_ms: Percentiles::of(&latencies) }
}
