//! Fixed-capacity FIFO replay memory.

use std::collections::VecDeque;

use rand::Rng;

#[derive(Clone, Debug)]
pub struct Replay<T> {
    capacity: usize,
    items: VecDeque<T>,
    pushed: u64,
}

impl<T> Replay<T> {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self { capacity, items: VecDeque::with_capacity(capacity.min(1 << 16)), pushed: 0 }
    }

    /// Appends, evicting the oldest entry at capacity.
    pub fn push(&mut self, item: T) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(item);
        self.pushed += 1;
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

    /// Total number of pushes since creation.
    pub fn pushed(&self) -> u64 {
        self.pushed
    }

    pub fn get(&self, i: usize) -> &T {
        &self.items[i]
    }

    /// `count` uniform draws with replacement.
    pub fn sample<'a, R: Rng + ?Sized>(&'a self, count: usize, rng: &mut R) -> Vec<&'a T> {
        (0..count).map(|_| &self.items[rng.gen_range(0..self.items.len())]).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, Stream};

    #[test]
    fn evicts_oldest_first() {
        let mut r = Replay::new(3);
        for i in 0..5 {
            r.push(i);
        }
        assert_eq!(r.len(), 3);
        assert_eq!((0..3).map(|i| *r.get(i)).collect::<Vec<_>>(), vec![2, 3, 4]);
        assert_eq!(r.pushed(), 5);
    }

    #[test]
    fn samples_come_from_contents() {
        let mut r = Replay::new(10);
        for i in 0..4 {
            r.push(i);
        }
        let mut rng = stream_rng(1, Stream::Replay, 0);
        assert!(r.sample(100, &mut rng).into_iter().all(|&v| v < 4));
    }
}
