//! Walker/Vose alias table: O(n) build, O(1) per draw.

use rand::Rng;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AliasError {
    #[error("no items to sample from")]
    Empty,
    #[error("weight {index} is negative or not finite ({value})")]
    InvalidWeight { index: usize, value: String },
    #[error("all weights are zero")]
    AllZero,
}

#[derive(Debug, Clone)]
pub struct AliasTable {
    prob: Vec<f64>,
    alias: Vec<usize>,
}

impl AliasTable {
    pub fn new(weights: &[f64]) -> Result<Self, AliasError> {
        let n = weights.len();
        if n == 0 {
            return Err(AliasError::Empty);
        }
        for (index, &w) in weights.iter().enumerate() {
            if !w.is_finite() || w < 0.0 {
                return Err(AliasError::InvalidWeight {
                    index,
                    value: w.to_string(),
                });
            }
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(AliasError::AllZero);
        }

        let mut scaled: Vec<f64> = weights.iter().map(|w| w * n as f64 / total).collect();
        let mut prob = vec![0.0; n];
        let mut alias: Vec<usize> = (0..n).collect();
        let mut small = Vec::with_capacity(n);
        let mut large = Vec::with_capacity(n);
        for (i, &s) in scaled.iter().enumerate() {
            if s < 1.0 {
                small.push(i);
            } else {
                large.push(i);
            }
        }
        while let (Some(&s), Some(&l)) = (small.last(), large.last()) {
            small.pop();
            prob[s] = scaled[s];
            alias[s] = l;
            scaled[l] = (scaled[l] + scaled[s]) - 1.0;
            if scaled[l] < 1.0 {
                large.pop();
                small.push(l);
            }
        }
        // leftovers are 1 up to rounding
        for i in large.into_iter().chain(small) {
            prob[i] = 1.0;
        }
        // a zero-weight column must never be returned through its own slot
        for (i, w) in weights.iter().enumerate() {
            if *w == 0.0 {
                prob[i] = 0.0;
                if alias[i] == i {
                    alias[i] = weights.iter().position(|w| *w > 0.0).unwrap_or(i);
                }
            }
        }
        Ok(Self { prob, alias })
    }

    pub fn len(&self) -> usize {
        self.prob.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prob.is_empty()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let i = rng.random_range(0..self.prob.len());
        let u: f64 = rng.random();
        if u < self.prob[i] {
            i
        } else {
            self.alias[i]
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn rejects_bad_weights() {
        assert_eq!(AliasTable::new(&[]).unwrap_err(), AliasError::Empty);
        assert_eq!(AliasTable::new(&[0.0, 0.0]).unwrap_err(), AliasError::AllZero);
        assert!(matches!(
            AliasTable::new(&[1.0, -1.0]),
            Err(AliasError::InvalidWeight { index: 1, .. })
        ));
        assert!(AliasTable::new(&[1.0, f64::NAN]).is_err());
    }

    #[test]
    fn zero_weight_never_drawn() {
        let t = AliasTable::new(&[0.0, 3.0, 0.0, 1.0]).unwrap();
        let mut rng = seeded(3);
        for _ in 0..20_000 {
            let i = t.sample(&mut rng);
            assert!(i == 1 || i == 3);
        }
    }

    #[test]
    fn frequencies_track_weights() {
        let w = [1.0, 2.0, 3.0, 4.0];
        let t = AliasTable::new(&w).unwrap();
        let mut rng = seeded(11);
        let n = 100_000;
        let mut counts = [0usize; 4];
        for _ in 0..n {
            counts[t.sample(&mut rng)] += 1;
        }
        for (c, w) in counts.iter().zip(w) {
            let p = w / 10.0;
            let sd = (n as f64 * p * (1.0 - p)).sqrt();
            assert!((*c as f64 - n as f64 * p).abs() < 4.0 * sd, "{counts:?}");
        }
    }
}
