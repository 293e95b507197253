//! Per-body timestamped pose buffers answering "where was this body at time t".

use crate::geometry::{slerp, Pose};
use parking_lot::RwLock;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use std::sync::Arc;
use thiserror::Error;

pub const DEFAULT_CAPACITY: usize = 512;
pub const DEFAULT_RETENTION: f64 = 2.0;
/// Queries within this distance of a stored timestamp return it exactly.
pub const EXACT_MATCH_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum HistoryError {
    #[error("pose buffer is empty")]
    EmptyBuffer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryQuality {
    Exact,
    Interpolated,
    ClampedStale,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QueryResult {
    pub pose: Pose,
    pub quality: QueryQuality,
    /// Distance in seconds from the query to the nearest endpoint; zero
    /// unless clamped.
    pub staleness: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PushOutcome {
    Stored,
    Rejected,
}

#[derive(Debug, Clone)]
pub struct PoseBuffer {
    body_id: u16,
    capacity: usize,
    retention: f64,
    samples: VecDeque<Pose>,
    rejected: u64,
}

impl PoseBuffer {
    pub fn new(body_id: u16) -> Self {
        Self::with_limits(body_id, DEFAULT_CAPACITY, DEFAULT_RETENTION)
    }

    pub fn with_limits(body_id: u16, capacity: usize, retention: f64) -> Self {
        PoseBuffer {
            body_id,
            capacity: capacity.max(1),
            retention,
            samples: VecDeque::with_capacity(capacity.max(1)),
            rejected: 0,
        }
    }

    pub fn body_id(&self) -> u16 {
        self.body_id
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn retention(&self) -> f64 {
        self.retention
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn rejected(&self) -> u64 {
        self.rejected
    }

    pub fn latest(&self) -> Option<&Pose> {
        self.samples.back()
    }

    pub fn oldest(&self) -> Option<&Pose> {
        self.samples.front()
    }

    pub fn samples(&self) -> impl Iterator<Item = &Pose> {
        self.samples.iter()
    }

    /// Appends a sample. Samples not strictly newer than the latest one, or
    /// with a non-finite timestamp, are counted and dropped.
    pub fn push(&mut self, pose: Pose) -> PushOutcome {
        let newer = self.samples.back().is_none_or(|last| pose.timestamp > last.timestamp);
        if !pose.timestamp.is_finite() || !newer {
            self.rejected += 1;
            return PushOutcome::Rejected;
        }
        self.samples.push_back(pose);
        while self.samples.len() > self.capacity {
            self.samples.pop_front();
        }
        let newest = pose.timestamp;
        while let Some(front) = self.samples.front() {
            if newest - front.timestamp > self.retention {
                self.samples.pop_front();
            } else {
                break;
            }
        }
        PushOutcome::Stored
    }

    pub fn query_at(&self, t: f64) -> Result<QueryResult, HistoryError> {
        let (first, last) = match (self.samples.front(), self.samples.back()) {
            (Some(f), Some(l)) => (*f, *l),
            _ => return Err(HistoryError::EmptyBuffer),
        };
        // partition point: first sample with timestamp >= t
        let idx = self.samples.partition_point(|p| p.timestamp < t);
        for cand in [idx.checked_sub(1), Some(idx)].into_iter().flatten() {
            if let Some(p) = self.samples.get(cand) {
                if (p.timestamp - t).abs() <= EXACT_MATCH_TOLERANCE {
                    return Ok(QueryResult { pose: *p, quality: QueryQuality::Exact, staleness: 0.0 });
                }
            }
        }
        if t < first.timestamp {
            return Ok(QueryResult {
                pose: first,
                quality: QueryQuality::ClampedStale,
                staleness: first.timestamp - t,
            });
        }
        if t > last.timestamp {
            return Ok(QueryResult {
                pose: last,
                quality: QueryQuality::ClampedStale,
                staleness: t - last.timestamp,
            });
        }
        let a = &self.samples[idx - 1];
        let b = &self.samples[idx];
        let f = (t - a.timestamp) / (b.timestamp - a.timestamp);
        let pose = Pose {
            position: a.position + (b.position - a.position) * f,
            orientation: slerp(&a.orientation, &b.orientation, f),
            timestamp: t,
        };
        Ok(QueryResult { pose, quality: QueryQuality::Interpolated, staleness: 0.0 })
    }
}

/// A pose buffer shared between one writer and any number of readers.
/// Readers see whole samples only: every query runs under the read lock.
#[derive(Debug, Clone)]
pub struct SharedPoseBuffer {
    inner: Arc<RwLock<PoseBuffer>>,
}

impl SharedPoseBuffer {
    pub fn new(buffer: PoseBuffer) -> Self {
        SharedPoseBuffer { inner: Arc::new(RwLock::new(buffer)) }
    }

    pub fn push(&self, pose: Pose) -> PushOutcome {
        self.inner.write().push(pose)
    }

    pub fn query_at(&self, t: f64) -> Result<QueryResult, HistoryError> {
        self.inner.read().query_at(t)
    }

    pub fn latest(&self) -> Option<Pose> {
        self.inner.read().latest().copied()
    }

    pub fn snapshot(&self) -> PoseBuffer {
        self.inner.read().clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Quat, Vec3};
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

    fn at(t: f64, x: f64) -> Pose {
        Pose::new(Vec3::new(x, 0.0, 0.0), Quat::IDENTITY, t)
    }

    #[test]
    fn push_in_order() {
        let mut b = PoseBuffer::new(1);
        assert_eq!(b.push(at(1.0, 0.0)), PushOutcome::Stored);
        assert_eq!(b.push(at(2.0, 1.0)), PushOutcome::Stored);
        let ts: Vec<f64> = b.samples().map(|p| p.timestamp).collect();
        assert_eq!(ts, vec![1.0, 2.0]);
    }

    #[test]
    fn out_of_order_rejected() {
        let mut b = PoseBuffer::new(1);
        b.push(at(2.0, 0.0));
        assert_eq!(b.push(at(1.0, 0.0)), PushOutcome::Rejected);
        assert_eq!(b.push(at(2.0, 0.0)), PushOutcome::Rejected);
        assert_eq!(b.push(at(f64::NAN, 0.0)), PushOutcome::Rejected);
        assert_eq!(b.rejected(), 3);
        assert_eq!(b.len(), 1);
    }

    #[test]
    fn capacity_evicts_oldest() {
        let mut b = PoseBuffer::with_limits(1, 1000, f64::INFINITY);
        for i in 0..10_000 {
            b.push(at(i as f64 * 1e-3, 0.0));
        }
        assert_eq!(b.len(), 1000);
        assert!((b.oldest().unwrap().timestamp - 9.0).abs() < 1e-9);
    }

    #[test]
    fn retention_evicts_old() {
        let mut b = PoseBuffer::with_limits(1, 10_000, 2.0);
        for i in 0..1000 {
            b.push(at(i as f64 * 0.01, 0.0));
        }
        let span = b.latest().unwrap().timestamp - b.oldest().unwrap().timestamp;
        assert!(span <= 2.0);
    }

    #[test]
    fn exact_query() {
        let mut b = PoseBuffer::new(1);
        b.push(at(1.0, 3.0));
        b.push(at(2.0, 4.0));
        let r = b.query_at(1.0).unwrap();
        assert_eq!(r.quality, QueryQuality::Exact);
        assert_eq!(r.pose, at(1.0, 3.0));
        assert_eq!(r.staleness, 0.0);
    }

    #[test]
    fn midpoint_interpolation() {
        let mut b = PoseBuffer::new(1);
        b.push(Pose::new(Vec3::zeros(), Quat::IDENTITY, 1.0));
        b.push(Pose::new(Vec3::x(), Quat::from_axis_angle(&Vec3::z(), FRAC_PI_2), 2.0));
        let r = b.query_at(1.5).unwrap();
        assert_eq!(r.quality, QueryQuality::Interpolated);
        assert!((r.pose.position - Vec3::new(0.5, 0.0, 0.0)).norm() < 1e-15);
        let expected = Quat::from_axis_angle(&Vec3::z(), FRAC_PI_4);
        assert!(r.pose.orientation.angle_to(&expected) < 1e-12);
    }

    #[test]
    fn clamped_query() {
        let mut b = PoseBuffer::new(1);
        b.push(at(1.0, 0.0));
        b.push(at(2.0, 1.0));
        let r = b.query_at(5.0).unwrap();
        assert_eq!(r.quality, QueryQuality::ClampedStale);
        assert_eq!(r.pose, at(2.0, 1.0));
        assert_eq!(r.staleness, 3.0);
        let r = b.query_at(0.25).unwrap();
        assert_eq!(r.pose, at(1.0, 0.0));
        assert_eq!(r.staleness, 0.75);
    }

    #[test]
    fn empty_query_fails() {
        let b = PoseBuffer::new(1);
        assert_eq!(b.query_at(0.0), Err(HistoryError::EmptyBuffer));
    }

    #[test]
    fn shared_buffer_readers_see_whole_samples() {
        let shared = SharedPoseBuffer::new(PoseBuffer::with_limits(2, 64, 10.0));
        let writer = {
            let s = shared.clone();
            std::thread::spawn(move || {
                for i in 1..5000 {
                    let v = i as f64;
                    s.push(Pose::new(Vec3::new(v, v, v), Quat::IDENTITY, v * 1e-3));
                }
            })
        };
        for _ in 0..2000 {
            if let Some(p) = shared.latest() {
                assert!(p.position.x == p.position.y && p.position.y == p.position.z);
                assert!((p.timestamp - p.position.x * 1e-3).abs() < 1e-12);
            }
        }
        writer.join().unwrap();
        assert_eq!(shared.snapshot().len(), 64);
    }
}
