//! Exact finite-alphabet probability arithmetic: joint pmfs over m terminals,
//! Shannon and Renyi entropies, KL divergence, marginals, likelihood-ratio
//! sets, and entropy-typical sets.
//!
//! All information quantities are in bits (base-2 logarithms) and 0 log 0 is
//! taken as 0 throughout. Values are immutable after construction and safe to
//! share across threads.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for "sums to one" checks on input distributions.
pub const PROB_SUM_TOL: f64 = 1e-9;
/// Atoms below this mass are treated as absent when comparing supports.
pub const SUPPORT_PRUNE: f64 = 1e-15;
/// Hard cap on dense joint tables (product of alphabet sizes).
pub const MAX_JOINT_ATOMS: u64 = 1 << 24;
/// Terminal-count cap for subset-indexed structures (family size 2^m - 2).
pub const MAX_TERMINALS: usize = 16;

/// A set of terminals as a bitmask: bit k stands for terminal k+1.
pub type TerminalSet = u32;

/// The full set {1..m}.
pub fn full_set(m: usize) -> TerminalSet {
    ((1u64 << m) - 1) as TerminalSet
}

/// Members of a set in ascending order, 0-based.
pub fn set_members(s: TerminalSet) -> Vec<usize> {
    (0..32).filter(|k| s >> k & 1 == 1).collect()
}

/// Build a set from 1-based terminal indices, validating the range.
pub fn set_from_indices(m: usize, indices: &[usize]) -> Result<TerminalSet> {
    let mut s: TerminalSet = 0;
    for &i in indices {
        if i < 1 || i > m {
            return Err(Error::SubsetOutOfRange {
                subset: if i >= 1 && i <= 32 { 1 << (i - 1) } else { 0 },
                m,
            });
        }
        s |= 1 << (i - 1);
    }
    if s == 0 {
        return Err(Error::EmptySubset);
    }
    Ok(s)
}

#[derive(Debug, Clone, Deserialize)]
struct JointPmfRaw {
    alphabet_sizes: Vec<usize>,
    probs: Vec<f64>,
}

/// Full joint distribution of m finite-valued terminals.
///
/// Storage is dense row-major over the m-tuple of symbol indices, with the
/// last coordinate varying fastest. Entries are nonnegative and sum to 1
/// within [`PROB_SUM_TOL`]; the atom count is capped at [`MAX_JOINT_ATOMS`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "JointPmfRaw")]
pub struct JointPmf {
    alphabet_sizes: Vec<usize>,
    probs: Vec<f64>,
}

impl TryFrom<JointPmfRaw> for JointPmf {
    type Error = Error;
    fn try_from(raw: JointPmfRaw) -> Result<Self> {
        JointPmf::new(raw.alphabet_sizes, raw.probs)
    }
}

impl JointPmf {
    pub fn new(alphabet_sizes: Vec<usize>, probs: Vec<f64>) -> Result<Self> {
        let m = alphabet_sizes.len();
        if m < 2 {
            return Err(Error::TooFewTerminals(m));
        }
        if alphabet_sizes.iter().any(|&s| s == 0) {
            return Err(Error::EmptyAlphabet);
        }
        let atoms: u128 = alphabet_sizes.iter().map(|&s| s as u128).product();
        if atoms > MAX_JOINT_ATOMS as u128 {
            return Err(Error::SizeLimit {
                atoms,
                limit: MAX_JOINT_ATOMS,
            });
        }
        if probs.len() as u128 != atoms {
            return Err(Error::LengthMismatch {
                expected: atoms as usize,
                got: probs.len(),
            });
        }
        for (i, &p) in probs.iter().enumerate() {
            if !(p >= 0.0) || !p.is_finite() {
                return Err(Error::InvalidMass {
                    id: i.to_string(),
                    mass: p,
                });
            }
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > PROB_SUM_TOL {
            return Err(Error::NotNormalized {
                sum,
                tol: PROB_SUM_TOL,
            });
        }
        Ok(Self {
            alphabet_sizes,
            probs,
        })
    }

    /// Doubly symmetric binary source: X1 uniform, X2 = X1 xor Bern(flip).
    pub fn dsbs(flip: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&flip) {
            return Err(Error::ParamRange {
                what: "flip probability",
                lo: 0.0,
                hi: 1.0,
                got: flip,
            });
        }
        let a = 0.5 * (1.0 - flip);
        let b = 0.5 * flip;
        Self::new(vec![2, 2], vec![a, b, b, a])
    }

    /// Uniform joint over the given alphabets.
    pub fn uniform(alphabet_sizes: Vec<usize>) -> Result<Self> {
        let atoms: usize = alphabet_sizes.iter().product();
        Self::new(alphabet_sizes, vec![1.0 / atoms as f64; atoms])
    }

    /// Independent product of per-terminal pmfs.
    pub fn product(factors: &[Vec<f64>]) -> Result<Self> {
        let sizes: Vec<usize> = factors.iter().map(|f| f.len()).collect();
        let atoms: usize = sizes.iter().product();
        let mut probs = vec![1.0; atoms];
        for (idx, p) in probs.iter_mut().enumerate() {
            let mut rest = idx;
            for (i, f) in factors.iter().enumerate().rev() {
                *p *= f[rest % sizes[i]];
                rest /= sizes[i];
                let _ = i;
            }
        }
        Self::new(sizes, probs)
    }

    pub fn m(&self) -> usize {
        self.alphabet_sizes.len()
    }

    pub fn alphabet_sizes(&self) -> &[usize] {
        &self.alphabet_sizes
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn atoms(&self) -> usize {
        self.probs.len()
    }

    /// log2 of the joint alphabet size.
    pub fn log2_alphabet(&self) -> f64 {
        self.alphabet_sizes.iter().map(|&s| (s as f64).log2()).sum()
    }

    /// Decompose a row-major atom index into per-terminal symbols.
    pub fn coords(&self, mut idx: usize) -> Vec<u32> {
        let m = self.m();
        let mut c = vec![0u32; m];
        for i in (0..m).rev() {
            c[i] = (idx % self.alphabet_sizes[i]) as u32;
            idx /= self.alphabet_sizes[i];
        }
        c
    }

    /// Row-major atom index of a symbol tuple.
    pub fn index(&self, symbols: &[u32]) -> usize {
        debug_assert_eq!(symbols.len(), self.m());
        let mut idx = 0usize;
        for (i, &s) in symbols.iter().enumerate() {
            idx = idx * self.alphabet_sizes[i] + s as usize;
        }
        idx
    }

    fn check_subset(&self, s: TerminalSet) -> Result<()> {
        if s == 0 {
            return Err(Error::EmptySubset);
        }
        if s & !full_set(self.m()) != 0 {
            return Err(Error::SubsetOutOfRange {
                subset: s,
                m: self.m(),
            });
        }
        Ok(())
    }

    /// Dense marginal table over the members of `s`, ascending terminal order.
    fn marginal_table(&self, s: TerminalSet) -> (Vec<usize>, Vec<f64>) {
        let members = set_members(s);
        let out_sizes: Vec<usize> = members.iter().map(|&i| self.alphabet_sizes[i]).collect();
        let out_atoms: usize = out_sizes.iter().product();
        let mut table = vec![0.0f64; out_atoms];
        let m = self.m();
        // Per-coordinate contribution of symbol value to the output index.
        let mut weight = vec![0usize; m];
        {
            let mut stride = 1usize;
            for &i in members.iter().rev() {
                weight[i] = stride;
                stride *= self.alphabet_sizes[i];
            }
        }
        let mut coord = vec![0u32; m];
        for (idx, &p) in self.probs.iter().enumerate() {
            let _ = idx;
            let mut out = 0usize;
            for i in 0..m {
                out += weight[i] * coord[i] as usize;
            }
            table[out] += p;
            // Odometer increment keeps this O(1) amortized per atom.
            for i in (0..m).rev() {
                coord[i] += 1;
                if (coord[i] as usize) < self.alphabet_sizes[i] {
                    break;
                }
                coord[i] = 0;
            }
        }
        (out_sizes, table)
    }

    /// Marginal over the coordinates in `s`, kept in ascending terminal order.
    pub fn marginal(&self, s: TerminalSet) -> Result<JointPmf> {
        self.check_subset(s)?;
        let (sizes, table) = self.marginal_table(s);
        if sizes.len() == 1 {
            // A single-terminal marginal is still a pmf; model it with a
            // dummy size-1 second coordinate so the m >= 2 invariant holds.
            return JointPmf::new(vec![sizes[0], 1], table);
        }
        JointPmf::new(sizes, table)
    }

    /// Shannon entropy H(X_S) in bits.
    pub fn entropy(&self, s: TerminalSet) -> Result<f64> {
        self.check_subset(s)?;
        let (_, table) = self.marginal_table(s);
        Ok(entropy_of_table(&table))
    }

    /// H(X_B | X_given) = H(X_{B u given}) - H(X_given).
    pub fn conditional_entropy(&self, b: TerminalSet, given: TerminalSet) -> Result<f64> {
        self.check_subset(b)?;
        self.check_subset(given)?;
        if b & given != 0 {
            return Err(Error::OverlappingSubsets(b, given));
        }
        Ok(self.entropy(b | given)? - self.entropy(given)?)
    }

    /// The joint as a measure keyed by zero-padded atom index.
    pub fn to_measure(&self) -> Measure {
        Measure::from_probs(&self.probs)
    }
}

pub(crate) fn entropy_of_table(table: &[f64]) -> f64 {
    table
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.log2())
        .sum()
}

#[derive(Debug, Clone, Deserialize)]
struct MeasureRaw {
    weights: BTreeMap<String, f64>,
}

/// Nonnegative measure on a discrete ground set; need not sum to 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MeasureRaw")]
pub struct Measure {
    weights: BTreeMap<String, f64>,
}

impl TryFrom<MeasureRaw> for Measure {
    type Error = Error;
    fn try_from(raw: MeasureRaw) -> Result<Self> {
        Measure::new(raw.weights)
    }
}

impl Measure {
    pub fn new(weights: BTreeMap<String, f64>) -> Result<Self> {
        for (id, &w) in &weights {
            if !(w >= 0.0) || !w.is_finite() {
                return Err(Error::InvalidMass {
                    id: id.clone(),
                    mass: w,
                });
            }
        }
        Ok(Self { weights })
    }

    pub fn from_pairs(pairs: &[(&str, f64)]) -> Result<Self> {
        Self::new(
            pairs
                .iter()
                .map(|&(k, v)| (k.to_string(), v))
                .collect::<BTreeMap<_, _>>(),
        )
    }

    /// Keys are the indices zero-padded to a common width, so lexicographic
    /// order matches numeric order.
    pub fn from_probs(probs: &[f64]) -> Measure {
        let width = probs.len().saturating_sub(1).to_string().len();
        let weights = probs
            .iter()
            .enumerate()
            .map(|(i, &p)| (format!("{i:0width$}"), p))
            .collect();
        Measure { weights }
    }

    pub fn get(&self, id: &str) -> f64 {
        self.weights.get(id).copied().unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.weights.iter().map(|(k, &v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.values().sum()
    }

    /// Number of atoms with strictly positive mass.
    pub fn support_size(&self) -> usize {
        self.weights.values().filter(|&&w| w > 0.0).count()
    }

    fn require_pmf(&self) -> Result<()> {
        let sum = self.total_mass();
        if (sum - 1.0).abs() > PROB_SUM_TOL {
            return Err(Error::NotNormalized {
                sum,
                tol: PROB_SUM_TOL,
            });
        }
        Ok(())
    }
}

/// KL divergence D(p || q) in bits between two pmfs given as measures.
///
/// Atoms below [`SUPPORT_PRUNE`] are pruned before the support check; p must
/// be absolutely continuous with respect to q on what remains.
pub fn kl_divergence(p: &Measure, q: &Measure) -> Result<f64> {
    p.require_pmf()?;
    q.require_pmf()?;
    let mut d = 0.0;
    for (id, pw) in p.iter() {
        if pw < SUPPORT_PRUNE {
            continue;
        }
        let qw = q.get(id);
        if qw < SUPPORT_PRUNE {
            return Err(Error::AbsoluteContinuityViolation(id.to_string(), pw));
        }
        d += pw * (pw / qw).log2();
    }
    // Nonnegative by the log-sum inequality; rounding may dip a hair below 0.
    Ok(d.max(0.0))
}

/// Renyi entropy H_alpha(mu) = log2(sum mu(u)^alpha) / (1 - alpha) in bits.
///
/// Defined for nonnegative measures of positive total mass, alpha >= 0,
/// alpha != 1. H_0 is the log of the support size.
pub fn renyi_entropy(mu: &Measure, alpha: f64) -> Result<f64> {
    if alpha < 0.0 {
        return Err(Error::NegativeAlpha(alpha));
    }
    if alpha == 1.0 {
        return Err(Error::AlphaOne);
    }
    if !(mu.total_mass() > 0.0) {
        return Err(Error::ZeroMass);
    }
    if alpha == 0.0 {
        return Ok((mu.support_size() as f64).log2());
    }
    let power_sum: f64 = mu
        .iter()
        .map(|(_, w)| w)
        .filter(|&w| w > 0.0)
        .map(|w| w.powf(alpha))
        .sum();
    Ok(power_sum.log2() / (1.0 - alpha))
}

/// The measure-change set {v : q1(v) >= delta * q2(v)} for pmfs q1, q2.
///
/// Its q1-mass is at least 1 - delta: the excluded atoms each have
/// q1(v) < delta * q2(v) and the q2-masses sum to at most 1.
pub fn likelihood_ratio_set(q1: &Measure, q2: &Measure, delta: f64) -> Result<BTreeSet<String>> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::ParamRange {
            what: "delta",
            lo: 0.0,
            hi: 1.0,
            got: delta,
        });
    }
    q1.require_pmf()?;
    q2.require_pmf()?;
    Ok(q1
        .iter()
        .filter(|&(_, w)| w > 0.0)
        .filter(|&(id, w)| w >= delta * q2.get(id))
        .map(|(id, _)| id.to_string())
        .collect())
}

/// Entropy-typical set of blocklength-n sequences for a base pmf.
///
/// A sequence is a member iff for every nonempty S subset of the terminals,
/// the empirical per-symbol surprisal of its S-marginal is within `delta`
/// bits of H(X_S). Membership is deterministic.
#[derive(Debug)]
pub struct TypicalSet {
    base: JointPmf,
    n: usize,
    delta: f64,
    // Lazily filled per-subset (marginal table, entropy) caches; idempotent
    // initialization keeps the set shareable across threads.
    tables: Vec<OnceLock<(Vec<usize>, Vec<f64>, f64)>>,
}

impl TypicalSet {
    pub fn new(base: JointPmf, n: usize, delta: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::ParamRange {
                what: "blocklength n",
                lo: 1.0,
                hi: f64::INFINITY,
                got: 0.0,
            });
        }
        if !(delta >= 0.0) || !delta.is_finite() {
            return Err(Error::ParamRange {
                what: "delta",
                lo: 0.0,
                hi: f64::INFINITY,
                got: delta,
            });
        }
        let m = base.m();
        if m > MAX_TERMINALS {
            return Err(Error::TerminalRange {
                m,
                max: MAX_TERMINALS,
            });
        }
        let tables = (0..(1usize << m)).map(|_| OnceLock::new()).collect();
        Ok(Self {
            base,
            n,
            delta,
            tables,
        })
    }

    pub fn base(&self) -> &JointPmf {
        &self.base
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    fn subset_table(&self, s: TerminalSet) -> &(Vec<usize>, Vec<f64>, f64) {
        self.tables[s as usize].get_or_init(|| {
            let (sizes, table) = self.base.marginal_table(s);
            let h = entropy_of_table(&table);
            (sizes, table, h)
        })
    }

    /// True iff every subset's empirical surprisal is within delta of its
    /// entropy. `x` is a length-n slice of m-symbol tuples.
    pub fn contains(&self, x: &[Vec<u32>]) -> Result<bool> {
        let m = self.base.m();
        if x.len() != self.n {
            return Err(Error::DimensionMismatch(format!(
                "expected {} symbols, got {}",
                self.n,
                x.len()
            )));
        }
        for (t, xt) in x.iter().enumerate() {
            if xt.len() != m {
                return Err(Error::DimensionMismatch(format!(
                    "tuple {t} has {} coordinates, expected {m}",
                    xt.len()
                )));
            }
            for (i, &sym) in xt.iter().enumerate() {
                if sym as usize >= self.base.alphabet_sizes[i] {
                    return Err(Error::DimensionMismatch(format!(
                        "symbol {sym} out of range for terminal {}",
                        i + 1
                    )));
                }
            }
        }
        let full = full_set(m);
        for s in 1..=full {
            let (sizes, table, h) = self.subset_table(s);
            let members = set_members(s);
            let mut surprisal = 0.0;
            for xt in x {
                let mut idx = 0usize;
                for (pos, &i) in members.iter().enumerate() {
                    idx = idx * sizes[pos] + xt[i] as usize;
                }
                let p = table[idx];
                if p <= 0.0 {
                    return Ok(false);
                }
                surprisal -= p.log2();
            }
            if (surprisal / self.n as f64 - h).abs() > self.delta {
                return Ok(false);
            }
        }
        Ok(true)
    }
}
