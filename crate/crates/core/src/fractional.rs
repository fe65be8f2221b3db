//! Fractional partitions of a terminal set and the linear program behind the
//! optimum query exponent.
//!
//! For a target subset A of the terminals M = {1..m}, the relevant family is
//! B = { B : ∅ ≠ B ⊊ M, A ⊄ B }. A fractional partition puts weights
//! λ_B ∈ [0,1] on the family with Σ_{B∋i} λ_B = 1 for every terminal i. The
//! exponent is H(X_M) minus the maximum of Σ λ_B H(X_B|X_{B^c}) over all
//! fractional partitions; the maximum is found by a dense two-phase simplex
//! and certified through the dual.

use std::collections::HashMap;

use num_rational::BigRational;
use num_traits::ToPrimitive;

use crate::error::{Error, Result};
use crate::pmf::{full_set, JointPmf, TerminalSet, MAX_TERMINALS};
use crate::simplex;

/// Constraint tolerance for fractional-partition weights.
pub const WEIGHT_TOL: f64 = 1e-9;
/// Maximum accepted duality gap when certifying an LP optimum.
pub const CERT_TOL: f64 = 1e-8;
/// Terminal cap for the exact-rational route of [`certify_exact`].
pub const EXACT_MAX_TERMINALS: usize = 4;
/// Bits kept when freezing irrational objective coefficients to dyadics.
const DYADIC_BITS: u32 = 48;

/// The subset family B for a target set A, in ascending bitmask order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubsetFamily {
    m: usize,
    target: TerminalSet,
    members: Vec<TerminalSet>,
}

impl SubsetFamily {
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn target(&self) -> TerminalSet {
        self.target
    }

    pub fn members(&self) -> &[TerminalSet] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// Enumerate B = { B : ∅ ≠ B ⊊ M, A ⊄ B } in ascending mask order.
pub fn enumerate_family(m: usize, a: TerminalSet) -> Result<SubsetFamily> {
    if m < 2 {
        return Err(Error::TooFewTerminals(m));
    }
    if m > MAX_TERMINALS {
        return Err(Error::TerminalRange {
            m,
            max: MAX_TERMINALS,
        });
    }
    let full = full_set(m);
    if a == 0 {
        return Err(Error::EmptySubset);
    }
    if a & !full != 0 {
        return Err(Error::SubsetOutOfRange { subset: a, m });
    }
    let members = (1..full).filter(|&b| b & a != a).collect();
    Ok(SubsetFamily {
        m,
        target: a,
        members,
    })
}

/// Weights λ_B on a subset family satisfying the covering equalities.
#[derive(Debug, Clone, PartialEq)]
pub struct FractionalPartition {
    family: SubsetFamily,
    weights: Vec<f64>,
    lambda_sum: f64,
}

impl FractionalPartition {
    /// Validates the box bounds and the per-terminal unit sums.
    pub fn new(family: SubsetFamily, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != family.len() {
            return Err(Error::LengthMismatch {
                expected: family.len(),
                got: weights.len(),
            });
        }
        for (j, &w) in weights.iter().enumerate() {
            if !w.is_finite() || w < -WEIGHT_TOL || w > 1.0 + WEIGHT_TOL {
                return Err(Error::InvalidMass {
                    id: format!("lambda[{j}]"),
                    mass: w,
                });
            }
        }
        for i in 0..family.m {
            let sum: f64 = family
                .members
                .iter()
                .zip(&weights)
                .filter(|(&b, _)| b >> i & 1 == 1)
                .map(|(_, &w)| w)
                .sum();
            if (sum - 1.0).abs() > WEIGHT_TOL {
                return Err(Error::NotNormalized {
                    sum,
                    tol: WEIGHT_TOL,
                });
            }
        }
        let lambda_sum = weights.iter().sum();
        Ok(Self {
            family,
            weights,
            lambda_sum,
        })
    }

    /// No validation; lets tests and callers build degenerate weight vectors
    /// that the checked constructor would reject.
    #[doc(hidden)]
    pub fn from_raw(family: SubsetFamily, weights: Vec<f64>) -> Self {
        let lambda_sum = weights.iter().sum();
        Self {
            family,
            weights,
            lambda_sum,
        }
    }

    pub fn family(&self) -> &SubsetFamily {
        &self.family
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn lambda_sum(&self) -> f64 {
        self.lambda_sum
    }
}

/// Dual weights on complements of family members.
#[derive(Debug, Clone, PartialEq)]
pub struct DualPartition {
    complements: Vec<TerminalSet>,
    weights: Vec<f64>,
}

impl DualPartition {
    pub fn complements(&self) -> &[TerminalSet] {
        &self.complements
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

/// λ̄_{B^c} = λ_B / (λ_sum − 1). Defined only when λ_sum > 1; the dual is
/// again a fractional partition, which is re-validated here.
pub fn dual_of(fp: &FractionalPartition) -> Result<DualPartition> {
    let ls = fp.lambda_sum;
    if ls <= 1.0 + WEIGHT_TOL {
        return Err(Error::DegenerateDual(ls));
    }
    let full = full_set(fp.family.m);
    let complements: Vec<TerminalSet> = fp.family.members.iter().map(|&b| full & !b).collect();
    let weights: Vec<f64> = fp.weights.iter().map(|&w| w / (ls - 1.0)).collect();
    for i in 0..fp.family.m {
        let sum: f64 = complements
            .iter()
            .zip(&weights)
            .filter(|(&bc, _)| bc >> i & 1 == 1)
            .map(|(_, &w)| w)
            .sum();
        if (sum - 1.0).abs() > WEIGHT_TOL {
            return Err(Error::Internal(format!(
                "dual weights sum to {sum} at terminal {}",
                i + 1
            )));
        }
    }
    Ok(DualPartition {
        complements,
        weights,
    })
}

/// Per-member objective coefficients H(X_B | X_{B^c}), with the subset
/// entropies memoized across members.
fn conditional_entropy_costs(p: &JointPmf, family: &SubsetFamily) -> Result<Vec<f64>> {
    let full = full_set(family.m);
    let h_full = p.entropy(full)?;
    let mut cache: HashMap<TerminalSet, f64> = HashMap::new();
    let mut costs = Vec::with_capacity(family.len());
    for &b in &family.members {
        let bc = full & !b;
        let h_bc = match cache.get(&bc) {
            Some(&h) => h,
            None => {
                let h = p.entropy(bc)?;
                cache.insert(bc, h);
                h
            }
        };
        costs.push(h_full - h_bc);
    }
    Ok(costs)
}

fn constraint_rows(family: &SubsetFamily) -> Vec<Vec<f64>> {
    (0..family.m)
        .map(|i| {
            family
                .members
                .iter()
                .map(|&b| if b >> i & 1 == 1 { 1.0 } else { 0.0 })
                .collect()
        })
        .collect()
}

/// Independent optimality check: solve B^T y = c_B for the multipliers of
/// the final basis, then require dual feasibility and a tiny duality gap.
fn certify_duality(
    a: &[Vec<f64>],
    c: &[f64],
    value: f64,
    basis: &[usize],
) -> Result<()> {
    let m = a.len();
    let bt: Vec<Vec<f64>> = (0..m)
        .map(|r| (0..m).map(|i| a[i][basis[r]]).collect())
        .collect();
    let cb: Vec<f64> = basis.iter().map(|&j| c[j]).collect();
    let y = simplex::solve_linear(bt, cb, &1e-12)?;
    let mut worst: f64 = 0.0;
    for j in 0..c.len() {
        let slack: f64 = (0..m).map(|i| y[i] * a[i][j]).sum::<f64>() - c[j];
        worst = worst.min(slack);
    }
    let gap = (value - y.iter().sum::<f64>()).abs();
    if worst < -CERT_TOL || gap > CERT_TOL {
        return Err(Error::Certification {
            gap: gap.max(-worst),
        });
    }
    Ok(())
}

/// Maximize Σ λ_B H(X_B|X_{B^c}) over fractional partitions for target A.
/// Returns one optimal vertex and the optimal value, duality-certified.
pub fn solve_lp(p: &JointPmf, a: TerminalSet) -> Result<(FractionalPartition, f64)> {
    let family = enumerate_family(p.m(), a)?;
    if family.is_empty() {
        return Err(Error::Infeasible);
    }
    let costs = conditional_entropy_costs(p, &family)?;
    let rows = constraint_rows(&family);
    let b = vec![1.0; family.m];
    let sol = simplex::maximize(&rows, &b, &costs, &1e-9)?;
    certify_duality(&rows, &costs, sol.objective, &sol.basis)?;
    let weights: Vec<f64> = sol.x.iter().map(|&w| w.clamp(0.0, 1.0)).collect();
    let fp = FractionalPartition::new(family, weights)?;
    Ok((fp, sol.objective))
}

/// Re-solve the program in exact rational arithmetic (m ≤ 4) with the
/// objective frozen to 2^-48 dyadics, and check the float optimum against
/// the exact one. Returns the exact optimum rounded to f64.
pub fn certify_exact(p: &JointPmf, a: TerminalSet, value: f64) -> Result<f64> {
    let m = p.m();
    if m > EXACT_MAX_TERMINALS {
        return Err(Error::TerminalRange {
            m,
            max: EXACT_MAX_TERMINALS,
        });
    }
    let family = enumerate_family(m, a)?;
    if family.is_empty() {
        return Err(Error::Infeasible);
    }
    let costs = conditional_entropy_costs(p, &family)?;
    let zero = simplex::dyadic(0.0, 1);
    let one = simplex::dyadic(1.0, 1);
    let c: Vec<BigRational> = costs
        .iter()
        .map(|&x| simplex::dyadic(x, DYADIC_BITS))
        .collect();
    let rows: Vec<Vec<BigRational>> = constraint_rows(&family)
        .iter()
        .map(|row| {
            row.iter()
                .map(|&x| if x == 1.0 { one.clone() } else { zero.clone() })
                .collect()
        })
        .collect();
    let b = vec![one.clone(); m];
    let sol = simplex::maximize(&rows, &b, &c, &zero)?;
    let exact = sol
        .objective
        .to_f64()
        .ok_or_else(|| Error::Internal("rational optimum out of f64 range".into()))?;
    // Dyadic freezing moves the optimum by at most m * 2^-48, far below the
    // certification tolerance.
    let gap = (exact - value).abs();
    if gap > CERT_TOL {
        return Err(Error::Certification { gap });
    }
    Ok(exact)
}

/// E* = H(X_M) − (LP optimum), clamped to its a-priori range
/// [0, log2 |X_M|]. Also returns the optimizing fractional partition.
pub fn query_exponent_with(p: &JointPmf, a: TerminalSet) -> Result<(f64, FractionalPartition)> {
    let (fp, value) = solve_lp(p, a)?;
    let h_full = p.entropy(full_set(p.m()))?;
    let e = (h_full - value).clamp(0.0, p.log2_alphabet());
    Ok((e, fp))
}

/// The optimum query exponent for recovering shared randomness at the
/// terminals of A, in bits per symbol.
pub fn query_exponent(p: &JointPmf, a: TerminalSet) -> Result<f64> {
    Ok(query_exponent_with(p, a)?.0)
}

/// The same exponent through the rewritten program
/// min_λ [ Σ λ_B H(X_{B^c}) − (λ_sum − 1) H(X_M) ], evaluated literally at
/// its own argmin. Agrees with [`query_exponent`] to 1e-7.
pub fn query_exponent_alt(p: &JointPmf, a: TerminalSet) -> Result<f64> {
    let family = enumerate_family(p.m(), a)?;
    if family.is_empty() {
        return Err(Error::Infeasible);
    }
    let full = full_set(family.m());
    let h_full = p.entropy(full)?;
    let mut comp_entropy = Vec::with_capacity(family.len());
    let mut cache: HashMap<TerminalSet, f64> = HashMap::new();
    for &b in family.members() {
        let bc = full & !b;
        let h = match cache.get(&bc) {
            Some(&h) => h,
            None => {
                let h = p.entropy(bc)?;
                cache.insert(bc, h);
                h
            }
        };
        comp_entropy.push(h);
    }
    // Minimizing the rewrite is the LP above in disguise: flip the sign and
    // shift by H(X_M) per unit weight to get an equivalent maximization.
    let costs: Vec<f64> = comp_entropy.iter().map(|&h| h_full - h).collect();
    let rows = constraint_rows(&family);
    let b = vec![1.0; family.m()];
    let sol = simplex::maximize(&rows, &b, &costs, &1e-9)?;
    let lambda_sum: f64 = sol.x.iter().sum();
    let weighted: f64 = sol
        .x
        .iter()
        .zip(&comp_entropy)
        .map(|(&w, &h)| w * h)
        .sum();
    Ok(weighted - (lambda_sum - 1.0) * h_full)
}
