//! A bounded hand-off queue that never blocks the producer: when full, an
//! element already queued is evicted to make room.

use std::collections::VecDeque;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Condvar, Mutex};
use std::time::Duration;

type EvictFn<T> = Box<dyn Fn(&VecDeque<T>, &T) -> usize + Send + Sync>;

pub struct DropQueue<T> {
    inner: Mutex<State<T>>,
    ready: Condvar,
    capacity: usize,
    dropped: AtomicU64,
    evict: EvictFn<T>,
}

struct State<T> {
    items: VecDeque<T>,
    closed: bool,
}

#[derive(Debug, PartialEq, Eq)]
pub enum Pop<T> {
    Item(T),
    Timeout,
    Closed,
}

impl<T> DropQueue<T> {
    /// Evicts the oldest element when full.
    pub fn new(capacity: usize) -> Self {
        Self::with_eviction(capacity, |_, _| 0)
    }

    /// `evict(queue, incoming)` picks the index to drop when full.
    pub fn with_eviction(
        capacity: usize,
        evict: impl Fn(&VecDeque<T>, &T) -> usize + Send + Sync + 'static,
    ) -> Self {
        assert!(capacity > 0, "queue capacity must be positive");
        Self {
            inner: Mutex::new(State {
                items: VecDeque::with_capacity(capacity),
                closed: false,
            }),
            ready: Condvar::new(),
            capacity,
            dropped: AtomicU64::new(0),
            evict: Box::new(evict),
        }
    }

    /// Enqueues `item`, returning whatever had to be evicted for it.
    pub fn push(&self, item: T) -> Option<T> {
        let mut st = self.inner.lock().unwrap_or_else(|e| e.into_inner());
        let evicted = if st.items.len() >= self.capacity {
            let idx = (self.evict)(&st.items, &item).min(st.items.len() - 1);
            self.dropped.fetch_add(1, Ordering::Relaxed);
            st.items.remove(idx)
        } else {
            None
        };
        st.items.push_back(item);
        drop(st);
        self.ready.notify_one();
        evicted
    }

    pub fn pop_timeout(&self, timeout: Duration) -> Pop<T> {
        let st = self.inner.lock().unwrap_or_else(|e| e.into_inner());
        let (mut st, _) = self
            .ready
            .wait_timeout_while(st, timeout, |s| s.items.is_empty() && !s.closed)
            .unwrap_or_else(|e| e.into_inner());
        match st.items.pop_front() {
            Some(item) => Pop::Item(item),
            None if st.closed => Pop::Closed,
            None => Pop::Timeout,
        }
    }

    pub fn try_pop(&self) -> Option<T> {
        self.inner.lock().unwrap_or_else(|e| e.into_inner()).items.pop_front()
    }

    /// Wakes consumers; remaining items can still be drained.
    pub fn close(&self) {
        self.inner.lock().unwrap_or_else(|e| e.into_inner()).closed = true;
        self.ready.notify_all();
    }

    pub fn len(&self) -> usize {
        self.inner.lock().unwrap_or_else(|e| e.into_inner()).items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dropped(&self) -> u64 {
        self.dropped.load(Ordering::Relaxed)
    }
}
