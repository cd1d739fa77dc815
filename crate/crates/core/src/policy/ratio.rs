use num_bigint::BigUint;
use num_traits::{One, ToPrimitive};

use crate::error::{invalid, Result};

/// Evenly spaced augmentation ratios `{0, 1/n, …, 1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct RatioPool {
    ratios: Vec<f64>,
    intervals: usize,
}

impl Default for RatioPool {
    fn default() -> Self {
        Self::with_intervals(10).expect("ten intervals")
    }
}

impl RatioPool {
    pub fn with_intervals(intervals: usize) -> Result<Self> {
        if intervals == 0 {
            return Err(invalid("ratio pool needs at least one interval"));
        }
        let ratios = (0..=intervals)
            .map(|i| i as f64 / intervals as f64)
            .collect();
        Ok(Self { ratios, intervals })
    }

    pub fn ratios(&self) -> &[f64] {
        &self.ratios
    }

    pub fn len(&self) -> usize {
        self.ratios.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn intervals(&self) -> usize {
        self.intervals
    }

    pub fn ratio(&self, index: usize) -> f64 {
        self.ratios[index]
    }

    /// `⌊ratio·b⌋`, evaluated exactly as `⌊index·b / intervals⌋`.
    pub fn k_for(&self, index: usize, b: usize) -> usize {
        index * b / self.intervals
    }

    pub fn contains(&self, ratio: f64) -> bool {
        self.ratios.contains(&ratio)
    }
}

/// Sizes of the hierarchical and flat selection action spaces.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionSpace {
    /// `C(b, ⌊p·b⌋)` for each pool ratio `p`.
    pub per_ratio: Vec<BigUint>,
    /// `2^b`, the space of independent per-sample decisions.
    pub flat: BigUint,
}

impl ActionSpace {
    pub fn largest_child_space(&self) -> &BigUint {
        self.per_ratio.iter().max().expect("non-empty pool")
    }

    /// `2^b / max_p C(b, ⌊p·b⌋)` as a float.
    pub fn reduction_factor(&self) -> f64 {
        let flat = self.flat.to_f64().unwrap_or(f64::INFINITY);
        let child = self.largest_child_space().to_f64().unwrap_or(f64::INFINITY);
        flat / child
    }
}

pub fn binomial(n: usize, k: usize) -> BigUint {
    if k > n {
        return BigUint::ZERO;
    }
    let k = k.min(n - k);
    let mut acc = BigUint::one();
    for i in 0..k {
        acc *= n - i;
        acc /= i + 1;
    }
    acc
}

pub fn action_space_size(b: usize, pool: &RatioPool) -> Result<ActionSpace> {
    if b == 0 {
        return Err(invalid("batch size must be at least 1"));
    }
    let per_ratio = (0..pool.len())
        .map(|i| binomial(b, pool.k_for(i, b)))
        .collect();
    Ok(ActionSpace {
        per_ratio,
        flat: BigUint::one() << b,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_pool() {
        let p = RatioPool::default();
        assert_eq!(p.len(), 11);
        assert_eq!(p.ratio(0), 0.0);
        assert_eq!(p.ratio(10), 1.0);
        assert!(p.ratios().windows(2).all(|w| w[0] < w[1]));
        assert!(RatioPool::with_intervals(0).is_err());
    }

    #[test]
    fn k_matches_floor_of_product() {
        for n in [1, 3, 5, 10, 20, 40] {
            let p = RatioPool::with_intervals(n).unwrap();
            for b in 1..=300 {
                for i in 0..p.len() {
                    let exact = (i * b) / n;
                    let float = (p.ratio(i) * b as f64 + 1e-9).floor() as usize;
                    assert_eq!(p.k_for(i, b), exact);
                    assert_eq!(exact, float, "n={n} b={b} i={i}");
                }
            }
        }
    }

    #[test]
    fn half_ratio_of_four() {
        let p = RatioPool::with_intervals(2).unwrap();
        let space = action_space_size(4, &p).unwrap();
        assert_eq!(space.per_ratio[1], BigUint::from(6u32));
        assert_eq!(space.flat, BigUint::from(16u32));
    }

    #[test]
    fn binomial_small_values() {
        assert_eq!(binomial(5, 2), BigUint::from(10u32));
        assert_eq!(binomial(5, 0), BigUint::one());
        assert_eq!(binomial(5, 6), BigUint::ZERO);
    }
}
