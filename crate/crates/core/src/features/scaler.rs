use super::{ContextVector, NUM_FEATURES};
use serde::{Deserialize, Serialize};

const STD_FLOOR: f64 = 1e-6;

/// Welford's streaming mean and sum of squared deviations.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Welford {
    pub count: u64,
    pub mean: f64,
    pub m2: f64,
}

impl Welford {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    /// Unbiased sample variance; zero with fewer than two samples.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            (self.m2 / (self.count - 1) as f64).max(0.0)
        }
    }

    pub fn std_dev(&self) -> f64 {
        self.variance().sqrt()
    }
}

/// Online z-score standardiser over the non-bias features of a [`ContextVector`].
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RunningScaler {
    features: [Welford; NUM_FEATURES - 1],
}

impl RunningScaler {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn update(&mut self, raw: &ContextVector) {
        for (w, v) in self.features.iter_mut().zip(&raw.values[1..]) {
            w.push(*v);
        }
    }

    /// `(v - mean) / max(std, 1e-6)` per feature; identity until two samples have been seen.
    pub fn transform(&self, raw: &ContextVector) -> ContextVector {
        let mut out = *raw;
        for (v, w) in out.values[1..].iter_mut().zip(&self.features) {
            if w.count >= 2 {
                *v = (*v - w.mean) / w.std_dev().max(STD_FLOOR);
            }
        }
        out
    }

    pub fn count(&self) -> u64 {
        self.features[0].count
    }

    /// Running statistics for feature `i` of the full vector (`i >= 1`).
    pub fn feature(&self, i: usize) -> &Welford {
        &self.features[i - 1]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    fn cv(v: f64) -> ContextVector {
        ContextVector::from_features([v; NUM_FEATURES - 1]).unwrap()
    }

    #[test]
    fn first_sample_is_identity() {
        let mut s = RunningScaler::new();
        let x = ContextVector::from_features([3.0, -1.0, 0.5, 0.0, 7.0, 2.0, 1.0, 9.0]).unwrap();
        assert_eq!(s.transform(&x), x);
        s.update(&x);
        assert_eq!(s.transform(&x), x);
    }

    #[test]
    fn constant_stream_maps_to_zero() {
        let mut s = RunningScaler::new();
        for _ in 0..50 {
            s.update(&cv(4.25));
        }
        let z = s.transform(&cv(4.25));
        assert_eq!(z.values[0], 1.0);
        assert!(z.values[1..].iter().all(|v| *v == 0.0));
    }

    #[test]
    fn standard_normal_stream_is_standardised() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let raw: Vec<ContextVector> = (0..10_000)
            .map(|_| {
                let mut f = [0.0; NUM_FEATURES - 1];
                for (i, v) in f.iter_mut().enumerate() {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    *v = 3.0 * i as f64 + (1.0 + i as f64) * z;
                }
                ContextVector::from_features(f).unwrap()
            })
            .collect();
        let mut s = RunningScaler::new();
        raw.iter().for_each(|x| s.update(x));
        for j in 1..NUM_FEATURES {
            let mut w = Welford::default();
            raw.iter().for_each(|x| w.push(s.transform(x).values[j]));
            assert!(w.mean.abs() < 0.05, "feature {j} mean {}", w.mean);
            assert!((0.95..=1.05).contains(&w.std_dev()), "feature {j} std {}", w.std_dev());
        }
    }

    proptest! {
        #[test]
        fn bias_is_never_touched(stream in prop::collection::vec(prop::array::uniform8(-1e3f64..1e3), 0..40)) {
            let mut s = RunningScaler::new();
            for f in &stream {
                let x = ContextVector::from_features(*f).unwrap();
                s.update(&x);
                prop_assert_eq!(s.transform(&x).values[0], 1.0);
            }
        }
    }
}
