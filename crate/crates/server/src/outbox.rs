//! Per-client send queue.
//!
//! Reliable messages queue in order and are never dropped; a client whose
//! backlog passes the limit is disconnected instead. Video frames keep one
//! slot per stream: a newer frame replaces an unsent older one in place.

use bytes::Bytes;
use parking_lot::Mutex;
use std::collections::{HashMap, VecDeque};
use tokio::sync::Notify;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PushOutcome {
    Queued,
    /// A pending video frame of the same stream was replaced.
    Replaced,
    /// The outbox is closed, or this push overflowed it and closed it.
    Closed,
}

#[derive(Debug)]
enum Slot {
    Frame(Bytes),
    Video(u16),
}

#[derive(Debug, Default)]
struct Inner {
    queue: VecDeque<Slot>,
    video: HashMap<u16, Bytes>,
    reliable: usize,
    closed: bool,
    /// No more pushes; the queue drains and then reads as closed.
    finishing: bool,
    overflowed: bool,
    replaced: u64,
}

#[derive(Debug)]
pub struct Outbox {
    inner: Mutex<Inner>,
    notify: Notify,
    limit: usize,
}

impl Outbox {
    pub fn new(limit: usize) -> Self {
        Outbox { inner: Mutex::new(Inner::default()), notify: Notify::new(), limit: limit.max(1) }
    }

    pub fn push(&self, frame: Bytes) -> PushOutcome {
        let mut g = self.inner.lock();
        if g.closed || g.finishing {
            return PushOutcome::Closed;
        }
        if g.reliable >= self.limit {
            g.closed = true;
            g.overflowed = true;
            drop(g);
            self.notify.notify_one();
            return PushOutcome::Closed;
        }
        g.reliable += 1;
        g.queue.push_back(Slot::Frame(frame));
        drop(g);
        self.notify.notify_one();
        PushOutcome::Queued
    }

    pub fn push_video(&self, stream: u16, frame: Bytes) -> PushOutcome {
        let mut g = self.inner.lock();
        if g.closed || g.finishing {
            return PushOutcome::Closed;
        }
        if g.video.insert(stream, frame).is_some() {
            g.replaced += 1;
            return PushOutcome::Replaced;
        }
        g.queue.push_back(Slot::Video(stream));
        drop(g);
        self.notify.notify_one();
        PushOutcome::Queued
    }

    /// Next frame to send, or `None` once closed. Anything still queued at
    /// close time is discarded.
    pub fn try_pop(&self) -> Option<Bytes> {
        let mut g = self.inner.lock();
        if g.closed {
            return None;
        }
        match g.queue.pop_front()? {
            Slot::Frame(b) => {
                g.reliable -= 1;
                Some(b)
            }
            Slot::Video(stream) => g.video.remove(&stream),
        }
    }

    /// Waits for the next frame. Only one task may wait at a time.
    pub async fn pop(&self) -> Option<Bytes> {
        loop {
            {
                let g = self.inner.lock();
                if g.closed || (g.finishing && g.queue.is_empty()) {
                    return None;
                }
                if !g.queue.is_empty() {
                    drop(g);
                    if let Some(b) = self.try_pop() {
                        return Some(b);
                    }
                    continue;
                }
            }
            self.notify.notified().await;
        }
    }

    pub fn close(&self) {
        self.inner.lock().closed = true;
        self.notify.notify_one();
    }

    /// Stops accepting frames; the reader still receives what is queued.
    pub fn finish(&self) {
        self.inner.lock().finishing = true;
        self.notify.notify_one();
    }

    pub fn is_closed(&self) -> bool {
        self.inner.lock().closed
    }

    pub fn overflowed(&self) -> bool {
        self.inner.lock().overflowed
    }

    pub fn len(&self) -> usize {
        self.inner.lock().queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Video frames superseded before they were sent.
    pub fn replaced_video(&self) -> u64 {
        self.inner.lock().replaced
    }
}
