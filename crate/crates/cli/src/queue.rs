use std::collections::VecDeque;
use std::sync::{Condvar, Mutex};

/// Bounded hand-off between pipeline stages. When full, `push` either
/// blocks or evicts the oldest item.
pub struct StageQueue<T> {
    state: Mutex<State<T>>,
    changed: Condvar,
    capacity: usize,
    drop_oldest: bool,
}

struct State<T> {
    items: VecDeque<T>,
    closed: bool,
    dropped: u64,
}

impl<T> StageQueue<T> {
    pub fn new(capacity: usize, drop_oldest: bool) -> Self {
        assert!(capacity >= 1, "queue capacity must be >= 1");
        Self {
            state: Mutex::new(State { items: VecDeque::with_capacity(capacity), closed: false, dropped: 0 }),
            changed: Condvar::new(),
            capacity,
            drop_oldest,
        }
    }

    pub fn push(&self, item: T) {
        let mut s = self.state.lock().expect("queue lock");
        if s.closed {
            return;
        }
        if self.drop_oldest {
            if s.items.len() == self.capacity {
                s.items.pop_front();
                s.dropped += 1;
                log::debug!("queue full, dropped oldest frame ({} so far)", s.dropped);
            }
        } else {
            while s.items.len() == self.capacity && !s.closed {
                s = self.changed.wait(s).expect("queue lock");
            }
            if s.closed {
                return;
            }
        }
        s.items.push_back(item);
        self.changed.notify_all();
    }

    /// No more items will arrive; `pop` drains what is left and later
    /// pushes are discarded.
    pub fn close(&self) {
        self.state.lock().expect("queue lock").closed = true;
        self.changed.notify_all();
    }

    /// Next item, or `None` once closed and empty.
    pub fn pop(&self) -> Option<T> {
        let mut s = self.state.lock().expect("queue lock");
        loop {
            if let Some(item) = s.items.pop_front() {
                self.changed.notify_all();
                return Some(item);
            }
            if s.closed {
                return None;
            }
            s = self.changed.wait(s).expect("queue lock");
        }
    }

    pub fn dropped(&self) -> u64 {
        self.state.lock().expect("queue lock").dropped
    }
}
