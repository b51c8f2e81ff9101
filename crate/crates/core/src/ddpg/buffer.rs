use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub s: Vec<f64>,
    pub a: Vec<f64>,
    pub r: f64,
    pub s_next: Vec<f64>,
    pub terminal: bool,
}

/// Fixed-capacity FIFO of transitions.
#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    items: Vec<Transition>,
    capacity: usize,
    /// Slot the next push overwrites once full.
    head: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        Self {
            items: Vec::with_capacity(capacity.min(1 << 16)),
            capacity: capacity.max(1),
            head: 0,
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

    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.head] = t;
            self.head = (self.head + 1) % self.capacity;
        }
    }

    /// Oldest first.
    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        let (a, b) = self.items.split_at(self.head);
        b.iter().chain(a.iter())
    }

    /// Storage slot `i`; slot order is not insertion order once full.
    pub fn slot(&self, i: usize) -> Option<&Transition> {
        self.items.get(i)
    }

    /// `n` distinct transitions drawn uniformly.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<&Transition>> {
        if n > self.items.len() {
            return Err(Error::InsufficientData(format!(
                "replay buffer holds {} transitions, batch needs {n}",
                self.items.len()
            )));
        }
        Ok(rand::seq::index::sample(rng, self.items.len(), n)
            .into_iter()
            .map(|i| &self.items[i])
            .collect())
    }

    pub fn clear(&mut self) {
        self.items.clear();
        self.head = 0;
    }
}

/// Free-function forms.
pub fn buffer_push(buf: &mut ReplayBuffer, t: Transition) {
    buf.push(t);
}

pub fn buffer_sample<'a, R: Rng + ?Sized>(
    buf: &'a ReplayBuffer,
    n: usize,
    rng: &mut R,
) -> Result<Vec<&'a Transition>> {
    buf.sample(n, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn t(r: f64) -> Transition {
        Transition {
            s: vec![r],
            a: vec![0.0],
            r,
            s_next: vec![r],
            terminal: false,
        }
    }

    #[test]
    fn fifo_eviction() {
        let mut b = ReplayBuffer::new(3);
        for i in 0..4 {
            b.push(t(i as f64));
        }
        assert_eq!(b.len(), 3);
        let rs: Vec<f64> = b.iter().map(|x| x.r).collect();
        assert_eq!(rs, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn full_sample_is_a_permutation() {
        let mut b = ReplayBuffer::new(10);
        for i in 0..5 {
            b.push(t(i as f64));
        }
        let mut rs: Vec<f64> = b
            .sample(5, &mut ChaCha8Rng::seed_from_u64(0))
            .unwrap()
            .iter()
            .map(|x| x.r)
            .collect();
        rs.sort_by(f64::total_cmp);
        assert_eq!(rs, vec![0.0, 1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn seeded_sampling_is_deterministic() {
        let mut b = ReplayBuffer::new(100);
        for i in 0..50 {
            b.push(t(i as f64));
        }
        let pick = |seed| -> Vec<f64> {
            b.sample(8, &mut ChaCha8Rng::seed_from_u64(seed))
                .unwrap()
                .iter()
                .map(|x| x.r)
                .collect()
        };
        assert_eq!(pick(4), pick(4));
    }

    #[test]
    fn underfilled_sample_errors() {
        let b = ReplayBuffer::new(4);
        assert!(matches!(
            b.sample(1, &mut ChaCha8Rng::seed_from_u64(0)),
            Err(Error::InsufficientData(_))
        ));
    }
}
