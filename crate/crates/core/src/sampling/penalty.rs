use super::{draw, Result, SamplingError, UserMultiset};
use crate::corpus::UserIdx;
use crate::num::Real;

/// `p_u = C^{M(u)} / Σ_v C^{M(v)}` over the underlying set of `combined`.
pub fn penalty_probabilities<T: Real>(combined: &UserMultiset, c: T) -> Vec<(UserIdx, T)> {
    let psi: Vec<(UserIdx, T)> = combined.iter().map(|(u, m)| (u, c.powi(m as i32))).collect();
    let total: T = psi.iter().map(|(_, w)| *w).sum();
    psi.into_iter().map(|(u, w)| (u, w / total)).collect()
}

/// Draws `n` users with replacement under the repetition penalty. The
/// probabilities are computed once from `combined` and stay fixed across
/// draws.
pub fn penalty_resampling<T: Real>(combined: &UserMultiset, n: usize, c: T, seed: u64) -> Result<UserMultiset> {
    if !(c > T::zero() && c < T::one()) {
        return Err(SamplingError::InvalidConfig("penalty base must lie in (0, 1)".into()));
    }
    draw(&penalty_probabilities(combined, c), n, seed)
}

/// Draws `n` users with probability proportional to multiplicity, i.e. a
/// uniform draw over the occurrences of `combined`. Baseline for the penalty.
pub fn proportional_resampling(combined: &UserMultiset, n: usize, seed: u64) -> Result<UserMultiset> {
    let total = combined.total() as f64;
    let p: Vec<(UserIdx, f64)> = combined.iter().map(|(u, m)| (u, m as f64 / total)).collect();
    draw(&p, n, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ms(pairs: &[(usize, usize)]) -> UserMultiset {
        let mut m = UserMultiset::new();
        for &(u, c) in pairs {
            m.insert(u, c);
        }
        m
    }

    #[test]
    fn hand_computed_probabilities() {
        let p = penalty_probabilities(&ms(&[(0, 1), (1, 2)]), 0.92f64);
        // ψ = {0.92, 0.8464}; Σ = 1.7664
        assert!((p[0].1 - 0.92 / 1.7664).abs() < 1e-12);
        assert!((p[1].1 - 0.8464 / 1.7664).abs() < 1e-12);
        assert!((p[0].1 - 0.5208).abs() < 5e-5 && (p[1].1 - 0.4792).abs() < 5e-5);
    }

    #[test]
    fn equal_multiplicities_uniform() {
        let p = penalty_probabilities(&ms(&[(0, 3), (1, 3), (2, 3)]), 0.5f64);
        assert!(p.iter().all(|(_, x)| (x - 1.0 / 3.0).abs() < 1e-12));
    }

    #[test]
    fn near_one_base_tends_to_uniform() {
        let p = penalty_probabilities(&ms(&[(0, 1), (1, 20)]), 0.999_999f64);
        assert!((p[0].1 - 0.5).abs() < 1e-4);
        let sum: f64 = p.iter().map(|x| x.1).sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_base() {
        assert!(penalty_resampling(&ms(&[(0, 1)]), 1, 1.0f64, 0).is_err());
        assert!(penalty_resampling(&ms(&[(0, 1)]), 1, 0.0f64, 0).is_err());
    }

    #[test]
    fn penalty_increases_diversity() {
        // skewed U₃: one heavy user and many light ones
        let mut combined = ms(&[(0, 40), (1, 25)]);
        for u in 2..30 {
            combined.insert(u, 1 + u % 3);
        }
        let trials = 200;
        let (mut pen, mut prop) = (0usize, 0usize);
        for t in 0..trials {
            pen += penalty_resampling(&combined, 60, 0.92f64, t).unwrap().distinct();
            prop += proportional_resampling(&combined, 60, t + 10_000).unwrap().distinct();
        }
        assert!(pen >= prop, "penalty {pen} vs proportional {prop}");
    }
}
