use rand::Rng;

use crate::actor::NoiseRecord;

/// One stored environment interaction.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub state: Box<[f64]>,
    pub action: Box<[f64]>,
    pub reward: f64,
    pub next_state: Box<[f64]>,
    /// True only for genuine terminal states, never for time-limit cuts.
    pub terminal: bool,
    /// Noise the actor saw when choosing `action`, replayed during updates.
    pub noise: Option<NoiseRecord>,
}

/// Fixed-capacity ring buffer with uniform sampling.
#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    items: Vec<Transition>,
    capacity: usize,
    next: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be >= 1");
        Self {
            items: Vec::new(),
            capacity,
            next: 0,
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

    /// Appends, overwriting the oldest entry once full.
    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    pub fn get(&self, i: usize) -> Option<&Transition> {
        self.items.get(i)
    }

    /// `n` transitions drawn uniformly with replacement.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<&Transition> {
        if self.items.is_empty() {
            return Vec::new();
        }
        (0..n)
            .map(|_| &self.items[rng.random_range(0..self.items.len())])
            .collect()
    }
}
