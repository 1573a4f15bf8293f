//! Experience replay: a fixed-capacity ring of transitions with uniform
//! sampling.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// One environment interaction. `truncated` marks the episode time limit;
/// targets still bootstrap through it because the limit is not a property
/// of the traffic system itself.
#[derive(Clone, Debug)]
pub struct Transition {
    pub state: Box<[f64]>,
    pub action: usize,
    pub reward: f64,
    pub next_state: Box<[f64]>,
    pub truncated: bool,
}

#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    items: Vec<Transition>,
    capacity: usize,
    cursor: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        ReplayBuffer {
            items: Vec::with_capacity(capacity.min(1 << 20)),
            capacity,
            cursor: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Insert, overwriting the oldest entry once full.
    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.cursor] = t;
        }
        self.cursor = (self.cursor + 1) % self.capacity;
    }

    pub fn get(&self, idx: usize) -> &Transition {
        &self.items[idx]
    }

    /// Uniform independent draws (with replacement).
    pub fn sample_indices(&self, rng: &mut ChaCha8Rng, count: usize) -> Vec<usize> {
        assert!(!self.items.is_empty(), "cannot sample an empty buffer");
        (0..count).map(|_| rng.gen_range(0..self.items.len())).collect()
    }
}
