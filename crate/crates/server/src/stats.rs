use crate::session::Counters;
use parking_lot::Mutex;
use serde::Serialize;
use std::sync::atomic::{AtomicU64, Ordering};

/// Latency samples kept for percentiles; older ones are discarded.
const LATENCY_WINDOW: usize = 100_000;

#[derive(Debug, Default)]
pub struct Stats {
    messages_out: AtomicU64,
    video_replaced: AtomicU64,
    clients_connected: AtomicU64,
    clients_dropped: AtomicU64,
    malformed_clients: AtomicU64,
    encode_failures: AtomicU64,
    session: Mutex<Counters>,
    guidance_latency_ms: Mutex<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Percentiles {
    pub count: usize,
    pub p50: f64,
    pub p95: f64,
    pub p99: f64,
    pub max: f64,
}

impl Percentiles {
    /// Nearest-rank percentiles; all zero for an empty sample.
    pub fn of(samples: &[f64]) -> Self {
        if samples.is_empty() {
            return Percentiles::default();
        }
        let mut v = samples.to_vec();
        v.sort_by(f64::total_cmp);
        let rank = |p: f64| v[((p * v.len() as f64).ceil() as usize).clamp(1, v.len()) - 1];
        Percentiles { count: v.len(), p50: rank(0.5), p95: rank(0.95), p99: rank(0.99), max: v[v.len() - 1] }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct StatsSnapshot {
    pub frames_in: u64,
    pub invalid_frames: u64,
    pub out_of_order: u64,
    pub guidance_out: u64,
    pub lost_events: u64,
    pub messages_out: u64,
    pub video_replaced: u64,
    pub clients_connected: u64,
    pub clients_dropped: u64,
    pub malformed_clients: u64,
    pub encode_failures: u64,
    pub guidance_latency_ms: Percentiles,
}

impl Stats {
    pub fn add_out(&self, n: u64) {
        self.messages_out.fetch_add(n, Ordering::Relaxed);
    }

    pub fn video_replaced(&self) {
        self.video_replaced.fetch_add(1, Ordering::Relaxed);
    }

    pub fn client_connected(&self) {
        self.clients_connected.fetch_add(1, Ordering::Relaxed);
    }

    pub fn client_dropped(&self) {
        self.clients_dropped.fetch_add(1, Ordering::Relaxed);
    }

    pub fn client_malformed(&self) {
        self.malformed_clients.fetch_add(1, Ordering::Relaxed);
    }

    pub fn encode_failed(&self) {
        self.encode_failures.fetch_add(1, Ordering::Relaxed);
    }

    pub fn set_session(&self, c: Counters) {
        *self.session.lock() = c;
    }

    pub fn record_latency(&self, ms: f64) {
        let mut v = self.guidance_latency_ms.lock();
        if v.len() >= LATENCY_WINDOW {
            v.drain(..LATENCY_WINDOW / 2);
        }
        v.push(ms);
    }

    pub fn snapshot(&self) -> StatsSnapshot {
        let c = *self.session.lock();
        StatsSnapshot {
            frames_in: c.frames_in,
            invalid_frames: c.invalid_frames,
            out_of_order: c.out_of_order,
            guidance_out: c.guidance_out,
            lost_events: c.lost_events,
            messages_out: self.messages_out.load(Ordering::Relaxed),
            video_replaced: self.video_replaced.load(Ordering::Relaxed),
            clients_connected: self.clients_connected.load(Ordering::Relaxed),
            clients_dropped: self.clients_dropped.load(Ordering::Relaxed),
            malformed_clients: self.malformed_clients.load(Ordering::Relaxed),
            encode_failures: self.encode_failures.load(Ordering::Relaxed),
            guidance_latency_ms: Percentiles::of(&self.guidance_latency_ms.lock()),
        }
    }
}
