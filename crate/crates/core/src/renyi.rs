//! Large-probability-set constructions driven by Renyi entropy: an explicit
//! small set carrying almost all of a measure's mass, a matching lower bound
//! on how small such sets can be, and the Renyi-entropy curves bounding the
//! optimal fixed-length source-coding rate at error level δ.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::pmf::{renyi_entropy, Measure};

/// A subset of a measure's atoms keeping all but δ of its mass, with the
/// cardinality guarantee that came with the construction.
#[derive(Debug, Clone, PartialEq)]
pub struct HighMassSet {
    pub elements: BTreeSet<String>,
    pub mass: f64,
    pub cardinality_bound: f64,
    pub alpha: f64,
    pub delta: f64,
}

/// The threshold set { u : μ(u) > δ^{1/(1−α)} 2^{−H_α(μ)} } for 0 ≤ α < 1.
///
/// Its mass is at least μ(U) − δ and its size is at most
/// δ^{−α/(1−α)} 2^{H_α(μ)}. The threshold comparison is strict: atoms
/// sitting exactly on it are excluded.
pub fn high_mass_set(mu: &Measure, delta: f64, alpha: f64) -> Result<HighMassSet> {
    if alpha < 0.0 {
        return Err(Error::NegativeAlpha(alpha));
    }
    if alpha >= 1.0 {
        return Err(Error::ParamRange {
            what: "alpha",
            lo: 0.0,
            hi: 1.0,
            got: alpha,
        });
    }
    let total = mu.total_mass();
    if !(delta > 0.0 && delta < total) {
        return Err(Error::ParamRange {
            what: "delta",
            lo: 0.0,
            hi: total,
            got: delta,
        });
    }
    let h_alpha = renyi_entropy(mu, alpha)?;
    // The threshold δ^{1/(1−α)} 2^{−H_α} can underflow times overflow for α
    // near 1 on unnormalized measures; compare in log space instead.
    let log2_threshold = delta.log2() / (1.0 - alpha) - h_alpha;
    let mut elements = BTreeSet::new();
    let mut mass = 0.0;
    for (id, w) in mu.iter() {
        if w > 0.0 && w.log2() > log2_threshold {
            elements.insert(id.to_string());
            mass += w;
        }
    }
    let cardinality_bound = (-alpha / (1.0 - alpha) * delta.log2() + h_alpha).exp2();
    Ok(HighMassSet {
        elements,
        mass,
        cardinality_bound,
        alpha,
        delta,
    })
}

/// For α > 1: every set whose mass is at least μ(U) − δ has at least
/// (δ′)^{1/(α−1)} (μ(U) − δ − δ′) 2^{H_α(μ)} elements. Returns that bound.
pub fn cardinality_lower_bound(
    mu: &Measure,
    delta: f64,
    delta_prime: f64,
    alpha: f64,
) -> Result<f64> {
    if alpha <= 1.0 {
        return Err(Error::ParamRange {
            what: "alpha",
            lo: 1.0,
            hi: f64::INFINITY,
            got: alpha,
        });
    }
    let total = mu.total_mass();
    if !(delta > 0.0) {
        return Err(Error::ParamRange {
            what: "delta",
            lo: 0.0,
            hi: total,
            got: delta,
        });
    }
    if !(delta_prime > 0.0) || delta + delta_prime >= total {
        return Err(Error::ParamRange {
            what: "delta_prime",
            lo: 0.0,
            hi: total - delta,
            got: delta_prime,
        });
    }
    let h_alpha = renyi_entropy(mu, alpha)?;
    // Assembled in log space for the same overflow reason as the threshold
    // set; a true zero or infinite bound comes out of exp2 as such.
    let log2_bound =
        delta_prime.log2() / (alpha - 1.0) + (total - delta - delta_prime).log2() + h_alpha;
    Ok(log2_bound.exp2())
}

/// Normalized Renyi curves (1/n) H_α(μ_n) for a blocklength-n measure.
/// α > 1 points bound the δ-error coding rate from below, α < 1 points
/// from above; both curves are returned sorted by α.
pub fn source_coding_bounds(
    mu_n: &Measure,
    n: usize,
    alphas: &[f64],
) -> Result<(Vec<(f64, f64)>, Vec<(f64, f64)>)> {
    if n == 0 {
        return Err(Error::ParamRange {
            what: "blocklength n",
            lo: 1.0,
            hi: f64::INFINITY,
            got: 0.0,
        });
    }
    if alphas.iter().any(|&a| a == 1.0) {
        return Err(Error::AlphaOne);
    }
    if !alphas.iter().any(|&a| a < 1.0) || !alphas.iter().any(|&a| a > 1.0) {
        return Err(Error::DimensionMismatch(
            "alpha grid must contain points on both sides of 1".into(),
        ));
    }
    let mut lower = Vec::new();
    let mut upper = Vec::new();
    for &a in alphas {
        let v = renyi_entropy(mu_n, a)? / n as f64;
        if a > 1.0 {
            lower.push((a, v));
        } else {
            upper.push((a, v));
        }
    }
    lower.sort_by(|x, y| x.0.total_cmp(&y.0));
    upper.sort_by(|x, y| x.0.total_cmp(&y.0));
    Ok((lower, upper))
}

/// Heuristic α→1 extrapolation: a straight line through the two curve
/// points nearest α = 1, evaluated at 1. With one point, that point's
/// value. Informational only; no guarantee from the finite-α bounds
/// transfers to it.
pub fn extrapolate_at_one(curve: &[(f64, f64)]) -> Option<f64> {
    let mut pts: Vec<(f64, f64)> = curve.to_vec();
    pts.sort_by(|x, y| (x.0 - 1.0).abs().total_cmp(&(y.0 - 1.0).abs()));
    match pts.as_slice() {
        [] => None,
        [(_, v)] => Some(*v),
        [(a1, v1), (a2, v2), ..] => {
            if (a1 - a2).abs() < 1e-15 {
                return Some(*v1);
            }
            let slope = (v2 - v1) / (a2 - a1);
            Some(v1 + slope * (1.0 - a1))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn uniform(k: usize) -> Measure {
        Measure::from_probs(&vec![1.0 / k as f64; k])
    }

    fn bernoulli_block(p: f64, n: usize) -> Measure {
        let probs: Vec<f64> = (0..1usize << n)
            .map(|x| {
                let ones = x.count_ones() as i32;
                p.powi(ones) * (1.0 - p).powi(n as i32 - ones)
            })
            .collect();
        Measure::from_probs(&probs)
    }

    #[test]
    fn test_high_mass_uniform_keeps_everything() {
        let set = high_mass_set(&uniform(16), 0.25, 0.5).unwrap();
        assert_eq!(set.elements.len(), 16);
        assert!((set.mass - 1.0).abs() < 1e-12);
        assert!((set.cardinality_bound - 64.0).abs() < 1e-9);
    }

    #[test]
    fn test_high_mass_point_mass_alpha_zero() {
        let mu = Measure::from_pairs(&[("a", 1.0), ("b", 0.0)]).unwrap();
        let set = high_mass_set(&mu, 0.5, 0.0).unwrap();
        assert_eq!(set.elements.len(), 1);
        assert!(set.elements.contains("a"));
        assert!((set.cardinality_bound - 1.0).abs() < 1e-12);
    }

    #[test]
    fn test_high_mass_geometric_example() {
        let mu = Measure::from_probs(&[0.5, 0.25, 0.125, 0.125]);
        let set = high_mass_set(&mu, 0.1, 0.5).unwrap();
        // Threshold 0.00273 sits below the smallest atom, so all four stay.
        assert_eq!(set.elements.len(), 4);
        assert!((set.mass - 1.0).abs() < 1e-12);
        assert!((set.cardinality_bound - 36.642135623730944).abs() < 1e-9);
    }

    #[test]
    fn test_high_mass_threshold_is_strict() {
        // With H_0 = log2 2 and α=0, the threshold is δ/2; atoms exactly at
        // it must be excluded.
        let mu = Measure::from_pairs(&[("0", 0.25), ("1", 0.75)]).unwrap();
        let set = high_mass_set(&mu, 0.5, 0.0).unwrap();
        assert!(!set.elements.contains("0"));
        assert!(set.elements.contains("1"));
    }

    #[test]
    fn test_high_mass_preconditions() {
        let mu = uniform(4);
        assert!(matches!(
            high_mass_set(&mu, 0.1, 1.0),
            Err(Error::ParamRange { .. })
        ));
        assert!(matches!(
            high_mass_set(&mu, 0.1, -0.2),
            Err(Error::NegativeAlpha(_))
        ));
        assert!(matches!(
            high_mass_set(&mu, 1.5, 0.5),
            Err(Error::ParamRange { .. })
        ));
    }

    #[test]
    fn test_high_mass_postconditions_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        for _ in 0..1000 {
            let k = rng.gen_range(2..=64usize);
            let mut w: Vec<f64> = (0..k).map(|_| -rng.gen_range(1e-9..1.0f64).ln()).collect();
            // Unnormalized measures are in scope too.
            let scale = rng.gen_range(0.2..2.0);
            let sum: f64 = w.iter().sum();
            w.iter_mut().for_each(|x| *x *= scale / sum);
            let mu = Measure::from_probs(&w);
            let total = mu.total_mass();
            let delta = rng.gen_range(1e-3..total * 0.9);
            let alpha = rng.gen_range(0.0..0.999);
            let set = high_mass_set(&mu, delta, alpha).unwrap();
            assert!(
                set.mass >= total - delta - 1e-12,
                "mass {} below {} - {delta} (k={k}, alpha={alpha}, scale={scale})",
                set.mass,
                total
            );
            assert!(
                set.elements.len() as f64 <= set.cardinality_bound + 1e-9,
                "{} atoms exceed bound {}",
                set.elements.len(),
                set.cardinality_bound
            );
        }
    }

    #[test]
    fn test_lower_bound_uniform_arithmetic() {
        let b = cardinality_lower_bound(&uniform(16), 0.25, 0.25, 2.0).unwrap();
        assert!((b - 2.0).abs() < 1e-12);
    }

    #[test]
    fn test_lower_bound_sanity_vs_support() {
        let mut rng = ChaCha8Rng::seed_from_u64(67);
        for _ in 0..200 {
            let k = rng.gen_range(2..=32usize);
            let mut w: Vec<f64> = (0..k).map(|_| -rng.gen_range(1e-9..1.0f64).ln()).collect();
            let sum: f64 = w.iter().sum();
            w.iter_mut().for_each(|x| *x /= sum);
            let mu = Measure::from_probs(&w);
            let delta = rng.gen_range(0.01..0.4);
            let dp = rng.gen_range(0.01..0.4);
            let alpha = rng.gen_range(1.01..4.0);
            let b = cardinality_lower_bound(&mu, delta, dp, alpha).unwrap();
            assert!(b <= k as f64 + 1e-9, "bound {b} above support size {k}");
        }
    }

    #[test]
    fn test_lower_bound_point_mass() {
        let mu = Measure::from_pairs(&[("a", 1.0)]).unwrap();
        let b = cardinality_lower_bound(&mu, 0.2, 0.2, 2.0).unwrap();
        assert!(b <= 1.0 + 1e-12);
    }

    #[test]
    fn test_lower_bound_exhaustive_oracle() {
        // Every subset with enough mass must be at least as large as the
        // bound, checked against all 2^k subsets.
        let mut rng = ChaCha8Rng::seed_from_u64(71);
        for _ in 0..50 {
            let k = rng.gen_range(2..=12usize);
            let mut w: Vec<f64> = (0..k).map(|_| -rng.gen_range(1e-9..1.0f64).ln()).collect();
            let sum: f64 = w.iter().sum();
            w.iter_mut().for_each(|x| *x /= sum);
            let mu = Measure::from_probs(&w);
            let delta = rng.gen_range(0.05..0.4);
            let dp = rng.gen_range(0.05..(1.0 - delta - 0.05));
            let alpha = rng.gen_range(1.1..3.0);
            let bound = cardinality_lower_bound(&mu, delta, dp, alpha).unwrap();
            for mask in 0u32..1 << k {
                let mass: f64 = (0..k)
                    .filter(|&i| mask >> i & 1 == 1)
                    .map(|i| w[i])
                    .sum();
                if mass >= 1.0 - delta {
                    let size = mask.count_ones() as f64;
                    assert!(
                        size >= bound - 1e-9,
                        "set of mass {mass} has {size} atoms, bound {bound}"
                    );
                }
            }
        }
    }

    #[test]
    fn test_preconditions_lower_bound() {
        let mu = uniform(4);
        assert!(matches!(
            cardinality_lower_bound(&mu, 0.2, 0.2, 1.0),
            Err(Error::ParamRange { .. })
        ));
        assert!(matches!(
            cardinality_lower_bound(&mu, 0.6, 0.5, 2.0),
            Err(Error::ParamRange { .. })
        ));
    }

    #[test]
    fn test_source_coding_uniform_bit() {
        for n in [1usize, 4, 8] {
            let mu = uniform(1 << n);
            let (lower, upper) = source_coding_bounds(&mu, n, &[0.5, 2.0]).unwrap();
            assert!((lower[0].1 - 1.0).abs() < 1e-12);
            assert!((upper[0].1 - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn test_source_coding_bernoulli_brackets_entropy() {
        let h = 0.4689955935892812;
        let mu = bernoulli_block(0.1, 10);
        let (lower, upper) = source_coding_bounds(&mu, 10, &[0.8, 0.9, 1.1, 1.2]).unwrap();
        // upper = [(0.8, ...), (0.9, ...)], lower = [(1.1, ...), (1.2, ...)]
        assert!((upper[0].1 - 0.539479873638265).abs() < 1e-11);
        assert!((upper[1].1 - 0.5022322052063352).abs() < 1e-11);
        assert!((lower[0].1 - 0.43943115777724706).abs() < 1e-11);
        assert!((lower[1].1 - 0.41319060567143173).abs() < 1e-11);
        assert!(upper[0].1 >= upper[1].1 && upper[1].1 >= h);
        assert!(h >= lower[0].1 && lower[0].1 >= lower[1].1);
    }

    #[test]
    fn test_source_coding_normalized_constant_in_n() {
        let alphas = [0.8, 0.9, 1.1, 1.2];
        let base: Vec<f64> = alphas
            .iter()
            .map(|&a| renyi_entropy(&Measure::from_probs(&[0.9, 0.1]), a).unwrap())
            .collect();
        for n in [1usize, 2, 5, 10] {
            let mu = bernoulli_block(0.1, n);
            let (lower, upper) = source_coding_bounds(&mu, n, &alphas).unwrap();
            let got = [upper[0].1, upper[1].1, lower[0].1, lower[1].1];
            let want = [base[0], base[1], base[2], base[3]];
            for (g, w) in got.iter().zip(&want) {
                assert!((g - w).abs() < 1e-12, "n={n}: {g} vs {w}");
            }
        }
    }

    #[test]
    fn test_source_coding_point_mass() {
        let mu = Measure::from_pairs(&[("only", 1.0)]).unwrap();
        let (lower, upper) = source_coding_bounds(&mu, 3, &[0.5, 1.5]).unwrap();
        assert_eq!(lower[0].1, 0.0);
        assert_eq!(upper[0].1, 0.0);
    }

    #[test]
    fn test_source_coding_grid_validation() {
        let mu = uniform(4);
        assert!(matches!(
            source_coding_bounds(&mu, 1, &[0.5, 1.0, 1.5]),
            Err(Error::AlphaOne)
        ));
        assert!(matches!(
            source_coding_bounds(&mu, 1, &[0.5, 0.9]),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn test_extrapolation_is_linear() {
        let curve = [(1.2, 0.8), (1.1, 0.9)];
        let v = extrapolate_at_one(&curve).unwrap();
        assert!((v - 1.0).abs() < 1e-12);
        assert_eq!(extrapolate_at_one(&[]), None);
        assert_eq!(extrapolate_at_one(&[(1.3, 0.5)]), Some(0.5));
    }
}
