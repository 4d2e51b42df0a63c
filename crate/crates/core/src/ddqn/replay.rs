use std::collections::VecDeque;

use rand::seq::index::sample;
use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub terminal: bool,
}

/// Fixed-capacity FIFO experience memory.
#[derive(Debug, Clone)]
pub struct ReplayBuffer<X> {
    items: VecDeque<X>,
    capacity: usize,
    pushed: u64,
}

impl<X> ReplayBuffer<X> {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        ReplayBuffer {
            items: VecDeque::with_capacity(capacity.min(1 << 16)),
            capacity,
            pushed: 0,
        }
    }

    pub fn push(&mut self, x: X) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(x);
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

    /// Total insertions, including evicted ones.
    pub fn pushed(&self) -> u64 {
        self.pushed
    }

    /// Oldest first.
    pub fn iter(&self) -> impl Iterator<Item = &X> {
        self.items.iter()
    }

    /// `batch` distinct entries, uniformly.
    pub fn sample(&self, batch: usize, rng: &mut impl Rng) -> Result<Vec<&X>> {
        if batch == 0 || self.items.len() < batch {
            return Err(Error::BufferTooSmall {
                size: self.items.len(),
                batch,
            });
        }
        Ok(sample(rng, self.items.len(), batch).into_iter().map(|i| &self.items[i]).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn evicts_oldest_first() {
        let mut b = ReplayBuffer::new(3);
        for i in 0..5 {
            b.push(i);
        }
        assert_eq!(b.iter().copied().collect::<Vec<_>>(), vec![2, 3, 4]);
        assert_eq!(b.pushed(), 5);
    }

    #[test]
    fn samples_are_distinct_and_bounded() {
        let mut b = ReplayBuffer::new(10);
        for i in 0..10 {
            b.push(i);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut s: Vec<i32> = b.sample(10, &mut rng).unwrap().into_iter().copied().collect();
        s.sort();
        assert_eq!(s, (0..10).collect::<Vec<_>>());
        assert!(matches!(b.sample(11, &mut rng), Err(Error::BufferTooSmall { size: 10, batch: 11 })));
    }
}
