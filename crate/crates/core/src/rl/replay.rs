use super::Transition;
use rand::seq::index::sample;
use rand::Rng;
use std::collections::VecDeque;

/// FIFO experience replay.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayBuffer {
    capacity: usize,
    items: VecDeque<Transition>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        Self { capacity: capacity.max(1), items: VecDeque::with_capacity(capacity.max(1)) }
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(t);
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

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.items.iter()
    }

    /// `n` distinct transitions, or `None` when fewer are stored.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Option<Vec<&Transition>> {
        if n > self.items.len() {
            return None;
        }
        Some(sample(rng, self.items.len(), n).into_iter().map(|i| &self.items[i]).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn t(r: f64) -> Transition {
        Transition { obs: vec![r], action: 0, reward: r, next_obs: vec![r], done: false }
    }

    #[test]
    fn fifo_at_capacity() {
        let mut b = ReplayBuffer::new(3);
        for i in 0..5 {
            b.push(t(i as f64));
        }
        let r: Vec<f64> = b.iter().map(|x| x.reward).collect();
        assert_eq!(r, vec![2.0, 3.0, 4.0]);
    }

    #[test]
    fn batches_have_no_repeats() {
        let mut b = ReplayBuffer::new(100);
        for i in 0..40 {
            b.push(t(i as f64));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let s = b.sample(32, &mut rng).unwrap();
            let mut r: Vec<i64> = s.iter().map(|x| x.reward as i64).collect();
            r.sort();
            r.dedup();
            assert_eq!(r.len(), 32);
        }
        assert!(b.sample(41, &mut rng).is_none());
    }
}
