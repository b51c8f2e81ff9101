use serde::{Deserialize, Serialize};

pub const VARIANCE_FLOOR: f64 = 1e-6;

/// Streaming per-feature mean and population variance (Welford).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservationNormalizer {
    pub mean: Vec<f64>,
    pub m2: Vec<f64>,
    pub count: u64,
}

impl ObservationNormalizer {
    pub fn new(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            m2: vec![0.0; dim],
            count: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn variance(&self) -> Vec<f64> {
        if self.count == 0 {
            return vec![1.0; self.dim()];
        }
        self.m2.iter().map(|m| m / self.count as f64).collect()
    }

    pub fn update(&mut self, obs: &[f64]) {
        debug_assert_eq!(obs.len(), self.dim());
        self.count += 1;
        let n = self.count as f64;
        for ((m, m2), &x) in self.mean.iter_mut().zip(&mut self.m2).zip(obs) {
            let d = x - *m;
            *m += d / n;
            *m2 += d * (x - *m);
        }
    }

    /// Identity until the first update.
    pub fn normalize(&self, obs: &[f64]) -> Vec<f64> {
        if self.count == 0 {
            return obs.to_vec();
        }
        let n = self.count as f64;
        obs.iter()
            .zip(&self.mean)
            .zip(&self.m2)
            .map(|((&x, &m), &m2)| (x - m) / (m2 / n + VARIANCE_FLOOR).sqrt())
            .collect()
    }
}

/// Updates the statistics first when `training` is set, then normalizes.
pub fn normalize_observation(
    norm: &mut ObservationNormalizer,
    obs: &[f64],
    training: bool,
) -> Vec<f64> {
    if training {
        norm.update(obs);
    }
    norm.normalize(obs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_before_first_update() {
        let n = ObservationNormalizer::new(2);
        assert_eq!(n.normalize(&[3.0, -1.0]), vec![3.0, -1.0]);
    }

    #[test]
    fn constant_stream_goes_to_zero() {
        let mut n = ObservationNormalizer::new(1);
        for _ in 0..10 {
            normalize_observation(&mut n, &[5.0], true);
        }
        assert!(n.normalize(&[5.0])[0].abs() < 1e-12);
    }

    #[test]
    fn alternating_stream_goes_to_unit() {
        let mut n = ObservationNormalizer::new(1);
        for i in 0..1000 {
            normalize_observation(&mut n, &[if i % 2 == 0 { 0.0 } else { 2.0 }], true);
        }
        assert!((n.normalize(&[2.0])[0] - 1.0).abs() < 1e-5);
        assert!((n.normalize(&[0.0])[0] + 1.0).abs() < 1e-5);
        assert_eq!(n.count, 1000);
    }
}
