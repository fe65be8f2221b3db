//! Set-partition forms of the query exponent: the normalized-divergence
//! minimum over partitions of the terminal set, and its Gaussian
//! log-determinant counterpart for jointly Gaussian sources.

use std::collections::HashMap;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::pmf::{full_set, JointPmf, TerminalSet};

/// Partition enumeration cap: Bell(12) is about 4.2 million.
pub const MAX_PARTITION_TERMINALS: usize = 12;
/// Symmetry tolerance for covariance input.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// A partition of {1..m} into 2..=m disjoint nonempty blocks. Blocks are
/// ordered by their smallest element.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SetPartition {
    m: usize,
    blocks: Vec<TerminalSet>,
}

impl SetPartition {
    pub fn new(m: usize, blocks: Vec<TerminalSet>) -> Result<Self> {
        check_m(m)?;
        if blocks.len() < 2 || blocks.len() > m {
            return Err(Error::DimensionMismatch(format!(
                "partition must have 2..={m} blocks, got {}",
                blocks.len()
            )));
        }
        let full = full_set(m);
        let mut seen: TerminalSet = 0;
        let mut prev_min = -1i64;
        for &b in &blocks {
            if b == 0 {
                return Err(Error::EmptySubset);
            }
            if b & !full != 0 {
                return Err(Error::SubsetOutOfRange { subset: b, m });
            }
            if b & seen != 0 {
                return Err(Error::OverlappingSubsets(b, seen));
            }
            let lo = b.trailing_zeros() as i64;
            if lo <= prev_min {
                return Err(Error::DimensionMismatch(
                    "blocks must be ordered by smallest element".into(),
                ));
            }
            prev_min = lo;
            seen |= b;
        }
        if seen != full {
            return Err(Error::DimensionMismatch(format!(
                "blocks cover {seen:#b}, expected {full:#b}"
            )));
        }
        Ok(Self { m, blocks })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn blocks(&self) -> &[TerminalSet] {
        &self.blocks
    }

    pub fn k(&self) -> usize {
        self.blocks.len()
    }
}

fn check_m(m: usize) -> Result<()> {
    if m < 2 {
        return Err(Error::TooFewTerminals(m));
    }
    if m > MAX_PARTITION_TERMINALS {
        return Err(Error::TerminalRange {
            m,
            max: MAX_PARTITION_TERMINALS,
        });
    }
    Ok(())
}

/// Lazy enumeration of all nontrivial partitions of {1..m} via restricted
/// growth strings in lexicographic order; this is the canonical order that
/// tie-breaking refers to.
pub struct Partitions {
    rgs: Vec<u8>,
    done: bool,
    m: usize,
}

/// All Bell(m) − 1 partitions with at least two blocks.
pub fn enumerate_partitions(m: usize) -> Result<Partitions> {
    check_m(m)?;
    Ok(Partitions {
        rgs: vec![0; m],
        done: false,
        m,
    })
}

impl Partitions {
    fn advance(&mut self) -> bool {
        // Lexicographic successor: bump the rightmost digit that may grow,
        // zero everything after it.
        let mut prefix_max = vec![0u8; self.m];
        for i in 1..self.m {
            prefix_max[i] = prefix_max[i - 1].max(self.rgs[i - 1]);
        }
        for i in (1..self.m).rev() {
            if self.rgs[i] <= prefix_max[i] {
                self.rgs[i] += 1;
                for j in i + 1..self.m {
                    self.rgs[j] = 0;
                }
                return true;
            }
        }
        false
    }
}

impl Iterator for Partitions {
    type Item = SetPartition;

    fn next(&mut self) -> Option<SetPartition> {
        loop {
            if self.done || !self.advance() {
                self.done = true;
                return None;
            }
            let k = 1 + usize::from(*self.rgs.iter().max().unwrap());
            if k < 2 {
                continue;
            }
            let mut blocks = vec![0 as TerminalSet; k];
            for (i, &g) in self.rgs.iter().enumerate() {
                blocks[g as usize] |= 1 << i;
            }
            // Block g's smallest member is the first i with digit g, so the
            // ordering invariant holds by construction.
            return Some(SetPartition {
                m: self.m,
                blocks,
            });
        }
    }
}

/// min over nontrivial partitions π of
/// (Σ_i H(X_{π_i}) − H(X_M)) / (|π| − 1), which is the normalized
/// divergence of the joint from the block-product measure. Ties go to the
/// earliest partition in canonical order.
pub fn divergence_exponent(p: &JointPmf) -> Result<(f64, SetPartition)> {
    let m = p.m();
    check_m(m)?;
    let h_full = p.entropy(full_set(m))?;
    let mut cache: HashMap<TerminalSet, f64> = HashMap::new();
    let mut best: Option<(f64, SetPartition)> = None;
    for pi in enumerate_partitions(m)? {
        let mut sum = 0.0;
        for &blk in pi.blocks() {
            let h = match cache.get(&blk) {
                Some(&h) => h,
                None => {
                    let h = p.entropy(blk)?;
                    cache.insert(blk, h);
                    h
                }
            };
            sum += h;
        }
        let value = (sum - h_full) / (pi.k() as f64 - 1.0);
        if best.as_ref().map_or(true, |(v, _)| value < *v) {
            best = Some((value, pi));
        }
    }
    let (value, pi) = best.expect("m >= 2 yields at least one partition");
    Ok((value.max(0.0), pi))
}

#[derive(Debug, Clone, Deserialize)]
struct CovarianceRaw {
    matrix: Vec<Vec<f64>>,
}

/// Symmetric positive definite covariance of m jointly Gaussian terminals.
/// Definiteness is certified by a full Cholesky factorization on input.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(try_from = "CovarianceRaw")]
pub struct CovarianceMatrix {
    entries: Vec<Vec<f64>>,
}

impl TryFrom<CovarianceRaw> for CovarianceMatrix {
    type Error = Error;
    fn try_from(raw: CovarianceRaw) -> Result<Self> {
        CovarianceMatrix::new(raw.matrix)
    }
}

impl CovarianceMatrix {
    pub fn new(entries: Vec<Vec<f64>>) -> Result<Self> {
        let m = entries.len();
        if m < 2 {
            return Err(Error::TooFewTerminals(m));
        }
        for (i, row) in entries.iter().enumerate() {
            if row.len() != m {
                return Err(Error::DimensionMismatch(format!(
                    "row {i} has {} entries in an {m}x{m} matrix",
                    row.len()
                )));
            }
            for (j, &v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::DimensionMismatch(format!(
                        "entry ({i},{j}) is not finite"
                    )));
                }
            }
        }
        for i in 0..m {
            for j in i + 1..m {
                let dev = (entries[i][j] - entries[j][i]).abs();
                if dev > SYMMETRY_TOL {
                    return Err(Error::NotSymmetric { i, j, dev });
                }
            }
        }
        let cov = Self { entries };
        cov.log2_det_of(full_set(m))?;
        Ok(cov)
    }

    pub fn dim(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &[Vec<f64>] {
        &self.entries
    }

    /// log2 determinant of the principal submatrix on the given terminals,
    /// via Cholesky; failure of a pivot reports non-definiteness.
    fn log2_det_of(&self, s: TerminalSet) -> Result<f64> {
        let idx: Vec<usize> = (0..self.dim()).filter(|&i| s >> i & 1 == 1).collect();
        let k = idx.len();
        let mut l = vec![vec![0.0f64; k]; k];
        let mut log_det = 0.0;
        for r in 0..k {
            for c in 0..=r {
                let mut acc = self.entries[idx[r]][idx[c]];
                for t in 0..c {
                    acc -= l[r][t] * l[c][t];
                }
                if c == r {
                    if acc <= 0.0 {
                        return Err(Error::NotPositiveDefinite {
                            row: idx[r],
                            pivot: acc,
                        });
                    }
                    l[r][r] = acc.sqrt();
                    log_det += acc.log2();
                } else {
                    l[r][c] = acc / l[c][c];
                }
            }
        }
        Ok(log_det)
    }
}

/// Gaussian form of the exponent:
/// (Σ_i log2 |Σ_{π_i}| − log2 |Σ|) / (2(|π| − 1)), minimized over
/// nontrivial partitions, or evaluated at one given partition.
pub fn gaussian_exponent(sigma: &CovarianceMatrix, pi: Option<&SetPartition>) -> Result<f64> {
    let m = sigma.dim();
    check_m(m)?;
    let log_det_full = sigma.log2_det_of(full_set(m))?;
    let mut cache: HashMap<TerminalSet, f64> = HashMap::new();
    let mut eval = |pi: &SetPartition| -> Result<f64> {
        if pi.m() != m {
            return Err(Error::DimensionMismatch(format!(
                "partition of {} terminals against a {m}x{m} covariance",
                pi.m()
            )));
        }
        let mut sum = 0.0;
        for &blk in pi.blocks() {
            let d = match cache.get(&blk) {
                Some(&d) => d,
                None => {
                    let d = sigma.log2_det_of(blk)?;
                    cache.insert(blk, d);
                    d
                }
            };
            sum += d;
        }
        Ok((sum - log_det_full) / (2.0 * (pi.k() as f64 - 1.0)))
    };
    let value = match pi {
        Some(pi) => eval(pi)?,
        None => {
            let mut best = f64::INFINITY;
            for pi in enumerate_partitions(m)? {
                best = best.min(eval(&pi)?);
            }
            best
        }
    };
    Ok(value.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pmf::Measure;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_pmf<R: Rng>(sizes: &[usize], rng: &mut R) -> JointPmf {
        let atoms: usize = sizes.iter().product();
        let mut probs: Vec<f64> = (0..atoms)
            .map(|_| -rng.gen_range(1e-12..1.0f64).ln())
            .collect();
        let sum: f64 = probs.iter().sum();
        probs.iter_mut().for_each(|p| *p /= sum);
        JointPmf::new(sizes.to_vec(), probs).unwrap()
    }

    #[test]
    fn test_enumerate_m2() {
        let all: Vec<_> = enumerate_partitions(2).unwrap().collect();
        assert_eq!(all.len(), 1);
        assert_eq!(all[0].blocks(), &[0b01, 0b10]);
    }

    #[test]
    fn test_enumerate_m3_canonical_order() {
        let all: Vec<_> = enumerate_partitions(3).unwrap().collect();
        assert_eq!(all.len(), 4);
        assert_eq!(all[0].blocks(), &[0b011, 0b100]);
        assert_eq!(all[1].blocks(), &[0b101, 0b010]);
        assert_eq!(all[2].blocks(), &[0b001, 0b110]);
        assert_eq!(all[3].blocks(), &[0b001, 0b010, 0b100]);
    }

    #[test]
    fn test_enumerate_m4_count() {
        assert_eq!(enumerate_partitions(4).unwrap().count(), 14);
    }

    #[test]
    fn test_enumerate_rejects_out_of_range() {
        assert!(matches!(
            enumerate_partitions(1),
            Err(Error::TooFewTerminals(1))
        ));
        assert!(matches!(
            enumerate_partitions(13),
            Err(Error::TerminalRange { .. })
        ));
    }

    #[test]
    fn test_partition_validation() {
        assert!(SetPartition::new(3, vec![0b001, 0b110]).is_ok());
        assert!(SetPartition::new(3, vec![0b011, 0b110]).is_err());
        assert!(SetPartition::new(3, vec![0b001, 0b010]).is_err());
        assert!(SetPartition::new(3, vec![0b111]).is_err());
        assert!(SetPartition::new(3, vec![0b110, 0b001]).is_err());
    }

    #[test]
    fn test_divergence_m2_is_mutual_information() {
        let p = JointPmf::dsbs(0.1).unwrap();
        let (v, pi) = divergence_exponent(&p).unwrap();
        assert!((v - 0.5310044064107188).abs() < 1e-9);
        assert_eq!(pi.blocks(), &[0b01, 0b10]);
    }

    #[test]
    fn test_divergence_identical_bits() {
        let p = JointPmf::new(
            vec![2, 2, 2],
            vec![0.5, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.5],
        )
        .unwrap();
        let (v, pi) = divergence_exponent(&p).unwrap();
        assert!((v - 1.0).abs() < 1e-12);
        // Every partition scores 1; the canonical first must win ties.
        assert_eq!(pi.blocks(), &[0b011, 0b100]);
    }

    #[test]
    fn test_divergence_independent_is_zero() {
        let p = JointPmf::uniform(vec![2, 2, 3]).unwrap();
        let (v, _) = divergence_exponent(&p).unwrap();
        assert!(v.abs() < 1e-12);
    }

    #[test]
    fn test_divergence_closed_form_equals_direct_kl() {
        // Σ_i H(X_{π_i}) − H(X_M) must equal D(P ‖ Π P_{π_i}) computed the
        // long way from the product measure.
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for _ in 0..25 {
            let p = random_pmf(&[2, 3, 2], &mut rng);
            for pi in enumerate_partitions(3).unwrap() {
                let closed: f64 = pi
                    .blocks()
                    .iter()
                    .map(|&b| p.entropy(b).unwrap())
                    .sum::<f64>()
                    - p.entropy(0b111).unwrap();
                let margs: Vec<(TerminalSet, JointPmf)> = pi
                    .blocks()
                    .iter()
                    .map(|&b| (b, p.marginal(b).unwrap()))
                    .collect();
                let product: Vec<f64> = (0..p.atoms())
                    .map(|idx| {
                        let c = p.coords(idx);
                        margs
                            .iter()
                            .map(|(b, marg)| {
                                let mut j = 0usize;
                                for i in 0..3 {
                                    if b >> i & 1 == 1 {
                                        j = j * p.alphabet_sizes()[i] + c[i] as usize;
                                    }
                                }
                                marg.probs()[j]
                            })
                            .product()
                    })
                    .collect();
                let d = crate::pmf::kl_divergence(
                    &Measure::from_probs(p.probs()),
                    &Measure::from_probs(&product),
                )
                .unwrap();
                assert!(
                    (closed - d).abs() < 1e-10,
                    "closed {closed} vs direct {d} for {:?}",
                    pi.blocks()
                );
            }
        }
    }

    #[test]
    fn test_divergence_matches_lp_form_on_randoms() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        for _ in 0..30 {
            let m = rng.gen_range(2..=4usize);
            let sizes: Vec<usize> = (0..m).map(|_| rng.gen_range(2..=3)).collect();
            let p = random_pmf(&sizes, &mut rng);
            let (v, _) = divergence_exponent(&p).unwrap();
            let e = crate::fractional::query_exponent(&p, full_set(m)).unwrap();
            assert!((v - e).abs() < 1e-7, "partition {v} vs LP {e}");
        }
    }

    #[test]
    fn test_divergence_relabel_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(47);
        let p = random_pmf(&[2, 2, 2], &mut rng);
        let (v, _) = divergence_exponent(&p).unwrap();
        // Swap terminals 1 and 3.
        let mut probs = vec![0.0; 8];
        for idx in 0..8 {
            let c = p.coords(idx);
            let swapped = [(c[2]), c[1], c[0]];
            let j = ((swapped[0] * 2 + swapped[1]) * 2 + swapped[2]) as usize;
            probs[j] = p.probs()[idx];
        }
        let q = JointPmf::new(vec![2, 2, 2], probs).unwrap();
        let (vq, _) = divergence_exponent(&q).unwrap();
        assert!((v - vq).abs() < 1e-12);
        // Relabel symbols within terminal 2.
        let mut probs2 = vec![0.0; 8];
        for idx in 0..8 {
            let c = p.coords(idx);
            let j = ((c[0] * 2 + (1 - c[1])) * 2 + c[2]) as usize;
            probs2[j] = p.probs()[idx];
        }
        let r = JointPmf::new(vec![2, 2, 2], probs2).unwrap();
        let (vr, _) = divergence_exponent(&r).unwrap();
        assert!((v - vr).abs() < 1e-12);
    }

    fn equicorrelated(m: usize, rho: f64) -> CovarianceMatrix {
        let entries = (0..m)
            .map(|i| {
                (0..m)
                    .map(|j| if i == j { 1.0 } else { rho })
                    .collect()
            })
            .collect();
        CovarianceMatrix::new(entries).unwrap()
    }

    #[test]
    fn test_gaussian_2x2_rho_half() {
        let cov = equicorrelated(2, 0.5);
        let v = gaussian_exponent(&cov, None).unwrap();
        assert!((v - 0.2075187496394219).abs() < 1e-9);
    }

    #[test]
    fn test_gaussian_identity_is_zero() {
        for m in 2..=4 {
            let cov = equicorrelated(m, 0.0);
            assert!(gaussian_exponent(&cov, None).unwrap().abs() < 1e-12);
        }
    }

    #[test]
    fn test_gaussian_3x3_equicorrelated() {
        let cov = equicorrelated(3, 0.5);
        let v = gaussian_exponent(&cov, None).unwrap();
        // Full split wins: (0 − log2 0.5)/4 = 1/4; pair splits give 0.2925.
        assert!((v - 0.25).abs() < 1e-9);
        let mut brute = f64::INFINITY;
        for pi in enumerate_partitions(3).unwrap() {
            brute = brute.min(gaussian_exponent(&cov, Some(&pi)).unwrap());
        }
        assert!((v - brute).abs() < 1e-12);
    }

    #[test]
    fn test_gaussian_scale_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(53);
        for _ in 0..10 {
            let cov = random_spd(3, &mut rng);
            let v = gaussian_exponent(&cov, None).unwrap();
            for c in [0.25, 3.0, 10.0] {
                let scaled = CovarianceMatrix::new(
                    cov.entries()
                        .iter()
                        .map(|row| row.iter().map(|&x| c * x).collect())
                        .collect(),
                )
                .unwrap();
                let vs = gaussian_exponent(&scaled, None).unwrap();
                assert!((v - vs).abs() < 1e-9, "scale {c}: {v} vs {vs}");
            }
        }
    }

    #[test]
    fn test_gaussian_permutation_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(59);
        for _ in 0..10 {
            let cov = random_spd(4, &mut rng);
            let v = gaussian_exponent(&cov, None).unwrap();
            let mut perm: Vec<usize> = (0..4).collect();
            perm.shuffle(&mut rng);
            let permuted = CovarianceMatrix::new(
                (0..4)
                    .map(|i| (0..4).map(|j| cov.entries()[perm[i]][perm[j]]).collect())
                    .collect(),
            )
            .unwrap();
            let vp = gaussian_exponent(&permuted, None).unwrap();
            assert!((v - vp).abs() < 1e-9);
        }
    }

    #[test]
    fn test_covariance_validation() {
        assert!(matches!(
            CovarianceMatrix::new(vec![vec![1.0, 0.1], vec![0.2, 1.0]]),
            Err(Error::NotSymmetric { .. })
        ));
        assert!(matches!(
            CovarianceMatrix::new(vec![vec![1.0, 2.0], vec![2.0, 1.0]]),
            Err(Error::NotPositiveDefinite { .. })
        ));
        assert!(matches!(
            CovarianceMatrix::new(vec![vec![1.0]]),
            Err(Error::TooFewTerminals(1))
        ));
        assert!(matches!(
            CovarianceMatrix::new(vec![vec![1.0, 0.0], vec![0.0]]),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn test_covariance_json() {
        let cov: CovarianceMatrix =
            serde_json::from_str(r#"{"matrix": [[1.0, 0.5], [0.5, 1.0]]}"#).unwrap();
        assert_eq!(cov.dim(), 2);
        assert!(serde_json::from_str::<CovarianceMatrix>(
            r#"{"matrix": [[1.0, 2.0], [2.0, 1.0]]}"#
        )
        .is_err());
    }

    fn random_spd<R: Rng>(m: usize, rng: &mut R) -> CovarianceMatrix {
        // A A^T + I is symmetric positive definite.
        let a: Vec<Vec<f64>> = (0..m)
            .map(|_| (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let entries = (0..m)
            .map(|i| {
                (0..m)
                    .map(|j| {
                        let dot: f64 = (0..m).map(|k| a[i][k] * a[j][k]).sum();
                        dot + if i == j { 1.0 } else { 0.0 }
                    })
                    .collect()
            })
            .collect();
        CovarianceMatrix::new(entries).unwrap()
    }
}
