//! Seeded Monte Carlo for binned communication protocols, exact-posterior
//! query ranking, and the finite-model converse constructions.
//!
//! Everything here is deterministic given its seed: trials draw from
//! per-index ChaCha streams and aggregate order-independently, so results do
//! not depend on scheduling.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fractional::{dual_of, FractionalPartition};
use crate::pmf::{full_set, likelihood_ratio_set, JointPmf, Measure, PROB_SUM_TOL};
use crate::renyi::high_mass_set;

/// Ceiling on candidate enumeration, shared by decoding and rank walks.
pub const DECODE_BUDGET: u64 = 1 << 26;

/// Ceiling on the joint table of an explicit converse model.
pub const MODEL_ATOM_LIMIT: u64 = 1 << 20;

/// Keyed multiply-xor-shift hash of a symbol sequence, reduced mod `bins`.
///
/// One splitmix-style round per symbol; the key separates terminals so equal
/// sequences bin independently at different ones. The constants are part of
/// the output contract and must not change.
pub fn bin_hash(key: u64, symbols: &[u32], bins: u64) -> u64 {
    if bins <= 1 {
        return 0;
    }
    let mut h = key ^ 0x9e37_79b9_7f4a_7c15;
    for &s in symbols {
        h ^= u64::from(s);
        h = h.wrapping_mul(0xbf58_476d_1ce4_e5b9);
        h ^= h >> 27;
        h = h.wrapping_mul(0x94d0_49bb_1331_11eb);
        h ^= h >> 31;
    }
    h % bins
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProtocolKind {
    /// Terminal 1 sends a bin index; terminal 2 reconstructs terminal 1's
    /// sequence, which is the CR.
    SlepianWolf2,
    /// Every terminal sends a bin index; everyone reconstructs the full
    /// observation tuple, which is the CR.
    OmniscienceM,
    /// Nobody communicates; the CR is terminal 1's sequence and the other
    /// terminals guess it from their own observations alone.
    Silent,
}

/// One-round binning scheme: per-terminal rates, a shared rate margin, and
/// the seed keying the bin hash.
#[derive(Debug, Clone, PartialEq)]
pub struct Protocol {
    kind: ProtocolKind,
    rates: Vec<f64>,
    eta: f64,
    hash_seed: u64,
}

impl Protocol {
    pub fn new(kind: ProtocolKind, rates: Vec<f64>, eta: f64, hash_seed: u64) -> Result<Self> {
        if rates.len() < 2 {
            return Err(Error::TooFewTerminals(rates.len()));
        }
        for &r in &rates {
            if !(r.is_finite() && r >= 0.0) {
                return Err(Error::ParamRange {
                    what: "rate",
                    lo: 0.0,
                    hi: f64::INFINITY,
                    got: r,
                });
            }
        }
        if !(eta.is_finite() && eta >= 0.0) {
            return Err(Error::ParamRange {
                what: "eta",
                lo: 0.0,
                hi: f64::INFINITY,
                got: eta,
            });
        }
        match kind {
            ProtocolKind::SlepianWolf2 => {
                if rates.len() != 2 {
                    return Err(Error::TerminalRange {
                        m: rates.len(),
                        max: 2,
                    });
                }
                // The exact-posterior querier requires every communicating
                // terminal's sequence to be part of the CR; here the CR is
                // terminal 1's sequence, so terminal 2 must stay silent.
                if rates[1] != 0.0 {
                    return Err(Error::DimensionMismatch(
                        "slepian-wolf-2 keeps terminal 2 silent; its rate must be 0".into(),
                    ));
                }
            }
            ProtocolKind::Silent => {
                if rates.iter().any(|&r| r != 0.0) {
                    return Err(Error::DimensionMismatch(
                        "a silent protocol has all rates 0".into(),
                    ));
                }
            }
            ProtocolKind::OmniscienceM => {}
        }
        Ok(Self {
            kind,
            rates,
            eta,
            hash_seed,
        })
    }

    /// Binning from terminal 1 to terminal 2 at rate H(X1|X2) plus the margin.
    pub fn slepian_wolf_2(p: &JointPmf, eta: f64, hash_seed: u64) -> Result<Self> {
        if p.m() != 2 {
            return Err(Error::TerminalRange { m: p.m(), max: 2 });
        }
        let r = p.conditional_entropy(0b01, 0b10)?;
        Self::new(ProtocolKind::SlepianWolf2, vec![r, 0.0], eta, hash_seed)
    }

    /// Per-terminal binning at the uniform split of the minimum sum rate for
    /// recovering the full tuple everywhere, each terminal adding the margin.
    pub fn omniscience(p: &JointPmf, eta: f64, hash_seed: u64) -> Result<Self> {
        let m = p.m();
        let (_, sum_rate) = crate::fractional::solve_lp(p, full_set(m))?;
        Self::new(
            ProtocolKind::OmniscienceM,
            vec![sum_rate / m as f64; m],
            eta,
            hash_seed,
        )
    }

    pub fn silent(m: usize, hash_seed: u64) -> Result<Self> {
        Self::new(ProtocolKind::Silent, vec![0.0; m], 0.0, hash_seed)
    }

    pub fn kind(&self) -> ProtocolKind {
        self.kind
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn hash_seed(&self) -> u64 {
        self.hash_seed
    }

    pub fn m(&self) -> usize {
        self.rates.len()
    }

    fn key(&self, terminal: usize) -> u64 {
        self.hash_seed ^ terminal as u64
    }

    /// ceil(2^{n(R_i + eta)}) bins for a communicating terminal; a terminal
    /// with rate exactly 0 keeps a single bin and so sends nothing.
    pub fn bin_counts(&self, n: usize) -> Vec<u64> {
        self.rates
            .iter()
            .map(|&r| {
                if r == 0.0 {
                    1
                } else {
                    let b = (n as f64 * (r + self.eta)).exp2().ceil();
                    if b >= u64::MAX as f64 {
                        u64::MAX
                    } else {
                        b as u64
                    }
                }
            })
            .collect()
    }
}

fn check_n(n: usize) -> Result<()> {
    if n < 1 {
        return Err(Error::ParamRange {
            what: "n",
            lo: 0.0,
            hi: f64::INFINITY,
            got: n as f64,
        });
    }
    Ok(())
}

/// n i.i.d. draws from the joint, split into per-terminal symbol sequences.
pub fn sample_source(p: &JointPmf, n: usize, seed: u64) -> Result<Vec<Vec<u32>>> {
    sample_source_stream(p, n, seed, 0)
}

pub(crate) fn sample_source_stream(
    p: &JointPmf,
    n: usize,
    seed: u64,
    stream: u64,
) -> Result<Vec<Vec<u32>>> {
    check_n(n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let mut cum = Vec::with_capacity(p.atoms());
    let mut acc = 0.0;
    for &w in p.probs() {
        acc += w;
        cum.push(acc);
    }
    let m = p.m();
    let mut out = vec![vec![0u32; n]; m];
    for t in 0..n {
        let u: f64 = rng.gen();
        let mut idx = cum.partition_point(|&c| c <= u);
        if idx >= p.atoms() {
            idx = p.atoms() - 1;
        }
        let c = p.coords(idx);
        for (i, seq) in out.iter_mut().enumerate() {
            seq[t] = c[i];
        }
    }
    Ok(out)
}

/// One realized run: communication, CR value, and per-terminal estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct Transcript {
    /// Bin index announced by each terminal (0 for a silent one).
    pub f: Vec<u64>,
    /// The CR value, flattened terminal-major.
    pub l: Vec<u32>,
    /// Each terminal's reconstruction of the CR, same layout as `l`.
    pub estimates: Vec<Vec<u32>>,
    /// True iff every estimate equals the CR.
    pub success: bool,
}

fn checked_pow(base: u128, n: usize) -> Option<u128> {
    let mut acc: u128 = 1;
    for _ in 0..n {
        acc = acc.checked_mul(base)?;
    }
    Some(acc)
}

/// Candidates visited by all decoding terminals together.
fn decode_space(p: &JointPmf, proto: &Protocol, n: usize) -> u128 {
    let sizes = p.alphabet_sizes();
    match proto.kind() {
        ProtocolKind::SlepianWolf2 | ProtocolKind::Silent => {
            match checked_pow(sizes[0] as u128, n) {
                Some(c) => c.saturating_mul(p.m() as u128 - 1),
                None => u128::MAX,
            }
        }
        ProtocolKind::OmniscienceM => {
            let mut total: u128 = 0;
            for j in 0..p.m() {
                let reduced: u128 = sizes
                    .iter()
                    .enumerate()
                    .filter(|&(r, _)| r != j)
                    .map(|(_, &s)| s as u128)
                    .product();
                match checked_pow(reduced, n) {
                    Some(c) => total = total.saturating_add(c),
                    None => return u128::MAX,
                }
            }
            total
        }
    }
}

/// Candidates visited by one posterior-rank walk.
fn rank_space(p: &JointPmf, proto: &Protocol, n: usize) -> u128 {
    let base = match proto.kind() {
        ProtocolKind::SlepianWolf2 | ProtocolKind::Silent => p.alphabet_sizes()[0] as u128,
        ProtocolKind::OmniscienceM => p.atoms() as u128,
    };
    checked_pow(base, n).unwrap_or(u128::MAX)
}

fn check_budget(needed: u128) -> Result<()> {
    if needed > DECODE_BUDGET as u128 {
        return Err(Error::SearchBudget {
            needed,
            limit: DECODE_BUDGET,
        });
    }
    Ok(())
}

fn check_pair(p: &JointPmf, proto: &Protocol) -> Result<()> {
    if p.m() != proto.m() {
        return Err(Error::DimensionMismatch(format!(
            "protocol has {} rates but the source has {} terminals",
            proto.m(),
            p.m()
        )));
    }
    Ok(())
}

/// Lexicographic successor of a fixed-radix sequence; false once exhausted.
fn next_seq(seq: &mut [u32], radix: usize) -> bool {
    for d in seq.iter_mut().rev() {
        *d += 1;
        if (*d as usize) < radix {
            return true;
        }
        *d = 0;
    }
    false
}

/// MAP estimate of terminal 1's sequence at terminal `j` from its own
/// sequence and the announced bins: maximize the per-position pair
/// likelihood over candidates hashing into terminal 1's bin, ties to the
/// lexicographically smallest candidate. An empty bin decodes to all-zeros.
fn decode_first_terminal(
    p: &JointPmf,
    proto: &Protocol,
    n: usize,
    j: usize,
    own: &[u32],
    f: &[u64],
) -> Result<Vec<u32>> {
    if j == 0 {
        return Ok(own.to_vec());
    }
    let pair = p.marginal(0b1 | (1 << j))?;
    let s0 = pair.alphabet_sizes()[0];
    let sj = pair.alphabet_sizes()[1];
    let table: Vec<f64> = pair
        .probs()
        .iter()
        .map(|&w| if w > 0.0 { w.log2() } else { f64::NEG_INFINITY })
        .collect();
    let bins = proto.bin_counts(n);
    let key = proto.key(0);
    let mut cand = vec![0u32; n];
    let mut best: Option<Vec<u32>> = None;
    let mut best_score = f64::NEG_INFINITY;
    loop {
        if bin_hash(key, &cand, bins[0]) == f[0] {
            let mut score = 0.0;
            for t in 0..n {
                score += table[cand[t] as usize * sj + own[t] as usize];
            }
            if best.is_none() || score > best_score {
                best = Some(cand.clone());
                best_score = score;
            }
        }
        if !next_seq(&mut cand, s0) {
            break;
        }
    }
    Ok(best.unwrap_or_else(|| vec![0u32; n]))
}

/// MAP estimate of the full tuple at terminal `j`: own sequence fixed,
/// candidates for the others constrained by their bins, joint likelihood
/// maximized, ties to the lexicographically smallest flattened tuple.
fn decode_full_tuple(
    p: &JointPmf,
    proto: &Protocol,
    n: usize,
    j: usize,
    own: &[u32],
    f: &[u64],
) -> Result<Vec<u32>> {
    let m = p.m();
    let sizes = p.alphabet_sizes();
    let bins = proto.bin_counts(n);
    let others: Vec<usize> = (0..m).filter(|&r| r != j).collect();
    let reduced: usize = others.iter().map(|&r| sizes[r]).product();
    // Strides of the full atom index, most-significant first.
    let mut stride = vec![1usize; m];
    for i in (0..m - 1).rev() {
        stride[i] = stride[i + 1] * sizes[i + 1];
    }
    // Per reduced index: the other-terminal symbols and their contribution
    // to the full atom index.
    let mut sym_of = vec![vec![0u32; others.len()]; reduced];
    let mut partial = vec![0usize; reduced];
    for ri in 0..reduced {
        let mut rest = ri;
        for pos in (0..others.len()).rev() {
            let s = sizes[others[pos]];
            sym_of[ri][pos] = (rest % s) as u32;
            rest /= s;
        }
        partial[ri] = others
            .iter()
            .enumerate()
            .map(|(pos, &r)| sym_of[ri][pos] as usize * stride[r])
            .sum();
    }
    let log_table: Vec<f64> = p
        .probs()
        .iter()
        .map(|&w| if w > 0.0 { w.log2() } else { f64::NEG_INFINITY })
        .collect();
    let assemble = |cand: &[usize]| -> Vec<u32> {
        let mut flat = Vec::with_capacity(m * n);
        for r in 0..m {
            if r == j {
                flat.extend_from_slice(own);
            } else {
                let pos = others.iter().position(|&o| o == r).unwrap();
                flat.extend((0..n).map(|t| sym_of[cand[t]][pos]));
            }
        }
        flat
    };
    let mut cand = vec![0usize; n];
    let mut seq_buf = vec![0u32; n];
    let mut best: Option<Vec<usize>> = None;
    let mut best_score = f64::NEG_INFINITY;
    loop {
        let mut ok = true;
        for (pos, &r) in others.iter().enumerate() {
            if bins[r] > 1 {
                for t in 0..n {
                    seq_buf[t] = sym_of[cand[t]][pos];
                }
                if bin_hash(proto.key(r), &seq_buf, bins[r]) != f[r] {
                    ok = false;
                    break;
                }
            }
        }
        if ok {
            let mut score = 0.0;
            for t in 0..n {
                score += log_table[partial[cand[t]] + own[t] as usize * stride[j]];
            }
            let better = match &best {
                None => true,
                Some(b) => {
                    score > best_score
                        || (score == best_score && assemble(&cand) < assemble(b))
                }
            };
            if better {
                best = Some(cand.clone());
                best_score = score;
            }
        }
        // Odometer over reduced indices, lexicographic.
        let mut done = true;
        for d in cand.iter_mut().rev() {
            *d += 1;
            if *d < reduced {
                done = false;
                break;
            }
            *d = 0;
        }
        if done {
            break;
        }
    }
    Ok(assemble(&best.unwrap_or_else(|| vec![0usize; n])))
}

fn estimate_inner(
    p: &JointPmf,
    proto: &Protocol,
    n: usize,
    terminal: usize,
    own: &[u32],
    f: &[u64],
) -> Result<Vec<u32>> {
    match proto.kind() {
        ProtocolKind::SlepianWolf2 | ProtocolKind::Silent => {
            decode_first_terminal(p, proto, n, terminal, own, f)
        }
        ProtocolKind::OmniscienceM => decode_full_tuple(p, proto, n, terminal, own, f),
    }
}

/// Recompute terminal `terminal`'s CR estimate from its own sequence and the
/// bins alone. `run_protocol` fills transcripts with exactly these values,
/// so locality of the estimates is structural, not incidental.
pub fn reestimate(
    p: &JointPmf,
    proto: &Protocol,
    n: usize,
    terminal: usize,
    own: &[u32],
    f: &[u64],
) -> Result<Vec<u32>> {
    check_pair(p, proto)?;
    check_n(n)?;
    check_budget(decode_space(p, proto, n))?;
    if terminal >= p.m() {
        return Err(Error::DimensionMismatch(format!(
            "terminal {terminal} out of range for {} terminals",
            p.m()
        )));
    }
    if own.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            got: own.len(),
        });
    }
    let size = p.alphabet_sizes()[terminal];
    if own.iter().any(|&s| s as usize >= size) {
        return Err(Error::DimensionMismatch(format!(
            "symbol out of range for alphabet of size {size}"
        )));
    }
    let bins = proto.bin_counts(n);
    if f.len() != p.m() {
        return Err(Error::LengthMismatch {
            expected: p.m(),
            got: f.len(),
        });
    }
    for (i, &fi) in f.iter().enumerate() {
        if fi >= bins[i] {
            return Err(Error::ParamRange {
                what: "bin index",
                lo: 0.0,
                hi: bins[i] as f64,
                got: fi as f64,
            });
        }
    }
    estimate_inner(p, proto, n, terminal, own, f)
}

fn cr_value(kind: ProtocolKind, x: &[Vec<u32>]) -> Vec<u32> {
    match kind {
        ProtocolKind::SlepianWolf2 | ProtocolKind::Silent => x[0].clone(),
        ProtocolKind::OmniscienceM => x.iter().flatten().copied().collect(),
    }
}

fn run_trial(p: &JointPmf, proto: &Protocol, n: usize, seed: u64, stream: u64) -> Result<Transcript> {
    check_pair(p, proto)?;
    check_budget(decode_space(p, proto, n))?;
    let x = sample_source_stream(p, n, seed, stream)?;
    let bins = proto.bin_counts(n);
    let f: Vec<u64> = (0..p.m())
        .map(|i| bin_hash(proto.key(i), &x[i], bins[i]))
        .collect();
    let l = cr_value(proto.kind(), &x);
    let mut estimates = Vec::with_capacity(p.m());
    for j in 0..p.m() {
        estimates.push(estimate_inner(p, proto, n, j, &x[j], &f)?);
    }
    let success = estimates.iter().all(|e| *e == l);
    Ok(Transcript {
        f,
        l,
        estimates,
        success,
    })
}

/// Sample a source block, announce bins, and decode at every terminal.
pub fn run_protocol(p: &JointPmf, proto: &Protocol, n: usize, seed: u64) -> Result<Transcript> {
    run_trial(p, proto, n, seed, 0)
}

/// Query order for each communication value: a bijection from candidate CR
/// values to ranks 1..=len, stored as the values in rank order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryStrategy {
    orders: BTreeMap<u64, Vec<u64>>,
}

impl QueryStrategy {
    pub fn orders(&self) -> &BTreeMap<u64, Vec<u64>> {
        &self.orders
    }

    /// 1-based rank of `l` under communication value `i`.
    pub fn rank(&self, l: u64, i: u64) -> Result<u64> {
        let order = self.orders.get(&i).ok_or(Error::UnknownValue)?;
        order
            .iter()
            .position(|&v| v == l)
            .map(|p| p as u64 + 1)
            .ok_or(Error::UnknownValue)
    }
}

/// Rank candidates by descending posterior, ties by ascending value. This
/// order minimizes P(rank >= gamma) simultaneously for every gamma (moving
/// any higher-posterior value later can only push mass past the cutoff), so
/// it serves as the universal-strategy witness in the checks below.
pub fn optimal_strategy(posteriors: &BTreeMap<u64, BTreeMap<u64, f64>>) -> Result<QueryStrategy> {
    let mut orders = BTreeMap::new();
    for (&i, post) in posteriors {
        let mut sum = 0.0;
        for (&u, &w) in post {
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::InvalidMass {
                    id: format!("{i}/{u}"),
                    mass: w,
                });
            }
            sum += w;
        }
        if (sum - 1.0).abs() > PROB_SUM_TOL {
            return Err(Error::NotNormalized {
                sum,
                tol: PROB_SUM_TOL,
            });
        }
        let mut vals: Vec<(u64, f64)> = post.iter().map(|(&u, &w)| (u, w)).collect();
        vals.sort_by(|a, b| b.1.total_cmp(&a.1));
        orders.insert(i, vals.into_iter().map(|(u, _)| u).collect());
    }
    Ok(QueryStrategy { orders })
}

/// The rank q(l|i); errors if the pair is outside the strategy's domain.
pub fn query_count(q: &QueryStrategy, l: u64, i: u64) -> Result<u64> {
    q.rank(l, i)
}

/// Rank of the realized CR value under the exact-posterior querier that asks
/// candidates in descending-posterior order, ties by ascending flattened
/// value.
///
/// The posterior given the communication is proportional to the candidate's
/// prior times the indicator that it reproduces the observed bins: for all
/// three protocol kinds every communicating terminal's sequence is a
/// coordinate of the CR, so no marginalization over unseen sequences occurs.
pub fn posterior_rank(
    p: &JointPmf,
    proto: &Protocol,
    n: usize,
    f: &[u64],
    l: &[u32],
) -> Result<u64> {
    check_pair(p, proto)?;
    check_n(n)?;
    check_budget(rank_space(p, proto, n))?;
    let bins = proto.bin_counts(n);
    if f.len() != p.m() {
        return Err(Error::LengthMismatch {
            expected: p.m(),
            got: f.len(),
        });
    }
    for (i, &fi) in f.iter().enumerate() {
        if fi >= bins[i] {
            return Err(Error::ParamRange {
                what: "bin index",
                lo: 0.0,
                hi: bins[i] as f64,
                got: fi as f64,
            });
        }
    }
    match proto.kind() {
        ProtocolKind::SlepianWolf2 | ProtocolKind::Silent => {
            if l.len() != n {
                return Err(Error::LengthMismatch {
                    expected: n,
                    got: l.len(),
                });
            }
            let s0 = p.alphabet_sizes()[0];
            if l.iter().any(|&s| s as usize >= s0) {
                return Err(Error::UnknownValue);
            }
            let first = p.marginal(0b1)?;
            let w: Vec<f64> = first
                .probs()
                .iter()
                .map(|&v| if v > 0.0 { v.log2() } else { f64::NEG_INFINITY })
                .collect();
            let mut s_l = 0.0;
            for t in 0..n {
                s_l += w[l[t] as usize];
            }
            let mut l_index: u128 = 0;
            for t in 0..n {
                l_index = l_index * s0 as u128 + l[t] as u128;
            }
            let key = proto.key(0);
            let mut cand = vec![0u32; n];
            let mut idx: u128 = 0;
            let mut count: u64 = 0;
            loop {
                if bins[0] <= 1 || bin_hash(key, &cand, bins[0]) == f[0] {
                    let mut score = 0.0;
                    for t in 0..n {
                        score += w[cand[t] as usize];
                    }
                    if score > s_l || (score == s_l && idx < l_index) {
                        count += 1;
                    }
                }
                idx += 1;
                if !next_seq(&mut cand, s0) {
                    break;
                }
            }
            Ok(count + 1)
        }
        ProtocolKind::OmniscienceM => {
            let m = p.m();
            if l.len() != m * n {
                return Err(Error::LengthMismatch {
                    expected: m * n,
                    got: l.len(),
                });
            }
            let atoms = p.atoms();
            let coords_table: Vec<Vec<u32>> = (0..atoms).map(|a| p.coords(a)).collect();
            let log_table: Vec<f64> = p
                .probs()
                .iter()
                .map(|&v| if v > 0.0 { v.log2() } else { f64::NEG_INFINITY })
                .collect();
            let sizes = p.alphabet_sizes();
            for r in 0..m {
                if l[r * n..(r + 1) * n]
                    .iter()
                    .any(|&s| s as usize >= sizes[r])
                {
                    return Err(Error::UnknownValue);
                }
            }
            // The CR's per-position atom indices and score.
            let mut l_atoms = vec![0usize; n];
            for t in 0..n {
                let syms: Vec<u32> = (0..m).map(|r| l[r * n + t]).collect();
                l_atoms[t] = p.index(&syms);
            }
            let s_l: f64 = l_atoms.iter().map(|&a| log_table[a]).sum();
            let lex_less = |cand: &[usize]| -> bool {
                for r in 0..m {
                    for t in 0..n {
                        let c = coords_table[cand[t]][r];
                        let lv = l[r * n + t];
                        if c != lv {
                            return c < lv;
                        }
                    }
                }
                false
            };
            let mut cand = vec![0usize; n];
            let mut seq_buf = vec![0u32; n];
            let mut count: u64 = 0;
            loop {
                let mut ok = true;
                for r in 0..m {
                    if bins[r] > 1 {
                        for t in 0..n {
                            seq_buf[t] = coords_table[cand[t]][r];
                        }
                        if bin_hash(proto.key(r), &seq_buf, bins[r]) != f[r] {
                            ok = false;
                            break;
                        }
                    }
                }
                if ok {
                    let score: f64 = cand.iter().map(|&a| log_table[a]).sum();
                    if score > s_l || (score == s_l && lex_less(&cand)) {
                        count += 1;
                    }
                }
                let mut done = true;
                for d in cand.iter_mut().rev() {
                    *d += 1;
                    if *d < atoms {
                        done = false;
                        break;
                    }
                    *d = 0;
                }
                if done {
                    break;
                }
            }
            Ok(count + 1)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct TrialRecord {
    pub success: bool,
    pub rank: u64,
    /// log2(rank) / n.
    pub exponent: f64,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct SimulationReport {
    pub success_rate: f64,
    pub exponent_quantile: f64,
    /// Realized per-terminal rates log2(bins)/n.
    pub rates_used: Vec<f64>,
    pub bins: Vec<u64>,
    pub trials: Vec<TrialRecord>,
}

/// Run seeded trials in parallel and take the requested quantile of the
/// per-trial exponents. Failed recoveries are excluded from the quantile
/// unless `include_failures` is set; they always count against the success
/// rate. Trial t draws from ChaCha stream t of the seed, so the report is
/// independent of scheduling.
pub fn simulate(
    p: &JointPmf,
    proto: &Protocol,
    n: usize,
    trials: usize,
    quantile: f64,
    seed: u64,
    include_failures: bool,
) -> Result<SimulationReport> {
    if trials < 1 {
        return Err(Error::ParamRange {
            what: "trials",
            lo: 0.0,
            hi: f64::INFINITY,
            got: trials as f64,
        });
    }
    if !(quantile > 0.0 && quantile < 1.0) {
        return Err(Error::ParamRange {
            what: "quantile",
            lo: 0.0,
            hi: 1.0,
            got: quantile,
        });
    }
    check_pair(p, proto)?;
    check_n(n)?;
    check_budget(decode_space(p, proto, n))?;
    check_budget(rank_space(p, proto, n))?;
    let records: Vec<TrialRecord> = (0..trials)
        .into_par_iter()
        .map(|t| -> Result<TrialRecord> {
            let tr = run_trial(p, proto, n, seed, t as u64)?;
            let rank = posterior_rank(p, proto, n, &tr.f, &tr.l)?;
            Ok(TrialRecord {
                success: tr.success,
                rank,
                exponent: (rank as f64).log2() / n as f64,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let successes = records.iter().filter(|r| r.success).count();
    let mut exps: Vec<f64> = records
        .iter()
        .filter(|r| r.success || include_failures)
        .map(|r| r.exponent)
        .collect();
    if exps.is_empty() {
        return Err(Error::InsufficientSuccess);
    }
    exps.sort_by(f64::total_cmp);
    // Nearest-rank quantile: the ceil(q N)-th smallest.
    let pos = ((quantile * exps.len() as f64).ceil() as usize).clamp(1, exps.len());
    let bins = proto.bin_counts(n);
    Ok(SimulationReport {
        success_rate: successes as f64 / trials as f64,
        exponent_quantile: exps[pos - 1],
        rates_used: bins.iter().map(|&b| (b as f64).log2() / n as f64).collect(),
        bins,
        trials: records,
    })
}

/// Quantile of (1/n) log2 rank over successful trials.
pub fn empirical_exponent(
    p: &JointPmf,
    proto: &Protocol,
    n: usize,
    trials: usize,
    quantile: f64,
    seed: u64,
) -> Result<f64> {
    if trials < 100 {
        return Err(Error::ParamRange {
            what: "trials",
            lo: 99.0,
            hi: f64::INFINITY,
            got: trials as f64,
        });
    }
    Ok(simulate(p, proto, n, trials, quantile, seed, false)?.exponent_quantile)
}

fn check_uv(joint_uv: &JointPmf, gamma: f64, delta: f64) -> Result<()> {
    if joint_uv.m() != 2 {
        return Err(Error::DimensionMismatch(format!(
            "need a joint over (U, V) with 2 coordinates, got {}",
            joint_uv.m()
        )));
    }
    if joint_uv.atoms() as u64 > (1 << 16) {
        return Err(Error::SizeLimit {
            atoms: joint_uv.atoms() as u128,
            limit: 1 << 16,
        });
    }
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(Error::ParamRange {
            what: "gamma",
            lo: 0.0,
            hi: f64::INFINITY,
            got: gamma,
        });
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::ParamRange {
            what: "delta",
            lo: 0.0,
            hi: 1.0,
            got: delta,
        });
    }
    Ok(())
}

/// P(rank of U under the posterior-descending querier >= gamma), computed
/// exhaustively over the joint.
fn mass_rank_at_least(joint_uv: &JointPmf, gamma: f64) -> Result<f64> {
    let su = joint_uv.alphabet_sizes()[0];
    let sv = joint_uv.alphabet_sizes()[1];
    let probs = joint_uv.probs();
    let mut posteriors: BTreeMap<u64, BTreeMap<u64, f64>> = BTreeMap::new();
    for v in 0..sv {
        let pv: f64 = (0..su).map(|u| probs[u * sv + v]).sum();
        if pv <= 0.0 {
            continue;
        }
        let post: BTreeMap<u64, f64> = (0..su)
            .filter(|&u| probs[u * sv + v] > 0.0)
            .map(|u| (u as u64, probs[u * sv + v] / pv))
            .collect();
        posteriors.insert(v as u64, post);
    }
    let strategy = optimal_strategy(&posteriors)?;
    let mut mass = 0.0;
    for v in 0..sv {
        for u in 0..su {
            let pw = probs[u * sv + v];
            if pw <= 0.0 {
                continue;
            }
            let rank = strategy.rank(u as u64, v as u64)? as f64;
            if rank >= gamma - 1e-12 {
                mass += pw;
            }
        }
    }
    Ok(mass)
}

/// Forward direction: if P(P_{U|V} <= delta/gamma) >= 1 - delta then every
/// querier satisfies P(rank >= gamma) >= 1 - 2 delta. Checked with the
/// posterior-descending querier, which minimizes the left side over all
/// strategies; a failed hypothesis makes the implication vacuously true.
pub fn lemma2_forward_check(joint_uv: &JointPmf, gamma: f64, delta: f64) -> Result<bool> {
    check_uv(joint_uv, gamma, delta)?;
    let su = joint_uv.alphabet_sizes()[0];
    let sv = joint_uv.alphabet_sizes()[1];
    let probs = joint_uv.probs();
    let dg = delta / gamma;
    let mut hyp = 0.0;
    for v in 0..sv {
        let pv: f64 = (0..su).map(|u| probs[u * sv + v]).sum();
        if pv <= 0.0 {
            continue;
        }
        for u in 0..su {
            let pw = probs[u * sv + v];
            if pw > 0.0 && pw / pv <= dg + 1e-12 {
                hyp += pw;
            }
        }
    }
    if hyp < 1.0 - delta - 1e-12 {
        return Ok(true);
    }
    Ok(mass_rank_at_least(joint_uv, gamma)? >= 1.0 - 2.0 * delta - 1e-9)
}

/// Converse direction: if the posterior-descending querier already satisfies
/// P(rank >= gamma) >= 1 - eps' for some eps' <= (1 - sqrt(delta))^2, then
/// P(P_{U|V} <= 1/gamma) >= delta. An unsatisfiable premise (even the best
/// querier fails too often) makes the implication vacuously true.
pub fn lemma2_converse_check(joint_uv: &JointPmf, gamma: f64, delta: f64) -> Result<bool> {
    check_uv(joint_uv, gamma, delta)?;
    let eps_min = 1.0 - mass_rank_at_least(joint_uv, gamma)?;
    let threshold = (1.0 - delta.sqrt()).powi(2);
    if eps_min > threshold + 1e-12 {
        return Ok(true);
    }
    let su = joint_uv.alphabet_sizes()[0];
    let sv = joint_uv.alphabet_sizes()[1];
    let probs = joint_uv.probs();
    let inv_g = 1.0 / gamma;
    let mut mass = 0.0;
    for v in 0..sv {
        let pv: f64 = (0..su).map(|u| probs[u * sv + v]).sum();
        if pv <= 0.0 {
            continue;
        }
        for u in 0..su {
            let pw = probs[u * sv + v];
            if pw > 0.0 && pw / pv <= inv_g + 1e-12 {
                mass += pw;
            }
        }
    }
    Ok(mass >= delta - 1e-9)
}

/// Explicit finite model: a joint over (Y_1..Y_k), per-terminal one-shot
/// communication maps, the CR as a function of the full tuple, and each
/// terminal's estimate as a function of its own symbol and the full
/// communication tuple.
#[derive(Debug, Clone, PartialEq)]
pub struct CrModel {
    joint: JointPmf,
    comm: Vec<Vec<usize>>,
    comm_sizes: Vec<usize>,
    cr: Vec<u64>,
    estimates: Vec<Vec<Vec<u64>>>,
    f_of_atom: Vec<usize>,
}

impl CrModel {
    pub fn new(
        joint: JointPmf,
        comm: Vec<Vec<usize>>,
        cr: Vec<u64>,
        estimates: Vec<Vec<Vec<u64>>>,
    ) -> Result<Self> {
        let k = joint.m();
        let atoms = joint.atoms();
        if atoms as u64 > MODEL_ATOM_LIMIT {
            return Err(Error::SizeLimit {
                atoms: atoms as u128,
                limit: MODEL_ATOM_LIMIT,
            });
        }
        if comm.len() != k {
            return Err(Error::LengthMismatch {
                expected: k,
                got: comm.len(),
            });
        }
        let sizes = joint.alphabet_sizes().to_vec();
        let mut comm_sizes = Vec::with_capacity(k);
        for (j, map) in comm.iter().enumerate() {
            if map.len() != sizes[j] {
                return Err(Error::LengthMismatch {
                    expected: sizes[j],
                    got: map.len(),
                });
            }
            comm_sizes.push(map.iter().max().copied().unwrap_or(0) + 1);
        }
        let f_space: usize = comm_sizes.iter().product();
        if cr.len() != atoms {
            return Err(Error::LengthMismatch {
                expected: atoms,
                got: cr.len(),
            });
        }
        if estimates.len() != k {
            return Err(Error::LengthMismatch {
                expected: k,
                got: estimates.len(),
            });
        }
        for (j, table) in estimates.iter().enumerate() {
            if table.len() != sizes[j] {
                return Err(Error::LengthMismatch {
                    expected: sizes[j],
                    got: table.len(),
                });
            }
            for row in table {
                if row.len() != f_space {
                    return Err(Error::LengthMismatch {
                        expected: f_space,
                        got: row.len(),
                    });
                }
            }
        }
        let mut f_of_atom = Vec::with_capacity(atoms);
        for a in 0..atoms {
            let c = joint.coords(a);
            let mut i = 0usize;
            for j in 0..k {
                i = i * comm_sizes[j] + comm[j][c[j] as usize];
            }
            f_of_atom.push(i);
        }
        Ok(Self {
            joint,
            comm,
            comm_sizes,
            cr,
            estimates,
            f_of_atom,
        })
    }

    pub fn joint(&self) -> &JointPmf {
        &self.joint
    }

    pub fn k(&self) -> usize {
        self.joint.m()
    }

    pub fn comm_sizes(&self) -> &[usize] {
        &self.comm_sizes
    }

    pub fn comm_space(&self) -> usize {
        self.comm_sizes.iter().product()
    }

    /// Communication tuple index produced by atom `a`.
    pub fn comm_index(&self, a: usize) -> usize {
        self.f_of_atom[a]
    }

    pub fn cr(&self) -> &[u64] {
        &self.cr
    }

    pub fn estimate(&self, terminal: usize, symbol: usize, f: usize) -> u64 {
        self.estimates[terminal][symbol][f]
    }

    /// Exact probability that some terminal's estimate misses the CR.
    pub fn epsilon(&self) -> f64 {
        let k = self.k();
        let mut eps = 0.0;
        for (a, &p) in self.joint.probs().iter().enumerate() {
            if p <= 0.0 {
                continue;
            }
            let c = self.joint.coords(a);
            let f = self.f_of_atom[a];
            if (0..k).any(|j| self.estimates[j][c[j] as usize][f] != self.cr[a]) {
                eps += p;
            }
        }
        eps
    }
}

/// The converse construction assembled from an explicit model: the
/// likelihood-ratio core, its per-communication cells, the surviving
/// communication values, the per-value measures and shortlists, and the
/// resulting query strategy with its verified guarantee.
#[derive(Debug, Clone)]
pub struct ConverseConstruction {
    pub theta: f64,
    pub delta: f64,
    pub epsilon: f64,
    /// Atoms whose joint-to-product likelihood ratio is at most theta.
    pub t0: Vec<usize>,
    /// cells[i][l]: atoms of t0 with communication i on which all terminals
    /// estimate l. Disjoint across l for fixed i by construction.
    pub cells: BTreeMap<u64, BTreeMap<u64, Vec<usize>>>,
    pub i1: BTreeSet<u64>,
    pub i2: BTreeSet<u64>,
    pub i0: BTreeSet<u64>,
    /// Conditional mass of each cell, per surviving communication value.
    pub mu: BTreeMap<u64, Measure>,
    /// High-mass shortlist per surviving communication value, in query order.
    pub shortlist: BTreeMap<u64, Vec<u64>>,
    pub strategy: QueryStrategy,
    /// (theta / delta^2)^{1/(k-1)}.
    pub bound: f64,
    /// (1 - delta - sqrt(delta + epsilon))^2.
    pub guarantee: f64,
    /// P(rank of the CR <= bound), by full enumeration.
    pub success: f64,
}

/// Build the strategy asking shortlist values first and verify its success
/// probability against the guarantee.
///
/// The shortlist membership threshold is applied directly at
/// 1 - sqrt(epsilon + delta) rather than through an existential averaging
/// step; that can only enlarge the surviving set and preserves the stated
/// guarantee.
pub fn build_theorem3_strategy(
    model: &CrModel,
    delta: f64,
    epsilon: f64,
) -> Result<ConverseConstruction> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::ParamRange {
            what: "delta",
            lo: 0.0,
            hi: 1.0,
            got: delta,
        });
    }
    if !(0.0..1.0).contains(&epsilon) {
        return Err(Error::ParamRange {
            what: "epsilon",
            lo: 0.0,
            hi: 1.0,
            got: epsilon,
        });
    }
    let actual = model.epsilon();
    if actual > epsilon + 1e-12 {
        return Err(Error::CrContract {
            got: 1.0 - actual,
            need: 1.0 - epsilon,
        });
    }
    let g = 1.0 - delta - (delta + epsilon).sqrt();
    if g <= 0.0 {
        return Err(Error::VacuousRegime(g));
    }
    let k = model.k();
    let joint = model.joint();
    let probs = joint.probs();
    let atoms = joint.atoms();
    let sizes = joint.alphabet_sizes();
    // Single-terminal marginals.
    let mut marg: Vec<Vec<f64>> = sizes.iter().map(|&s| vec![0.0; s]).collect();
    let coords_table: Vec<Vec<u32>> = (0..atoms).map(|a| joint.coords(a)).collect();
    for a in 0..atoms {
        for j in 0..k {
            marg[j][coords_table[a][j] as usize] += probs[a];
        }
    }
    // Likelihood ratio against the product of marginals, positive atoms only.
    let mut ratio = vec![0.0f64; atoms];
    let mut order: Vec<usize> = Vec::new();
    for a in 0..atoms {
        if probs[a] <= 0.0 {
            continue;
        }
        let prod: f64 = (0..k).map(|j| marg[j][coords_table[a][j] as usize]).product();
        ratio[a] = probs[a] / prod;
        order.push(a);
    }
    order.sort_by(|&x, &y| ratio[x].total_cmp(&ratio[y]));
    // theta: smallest ratio value whose lower set carries mass >= 1 - delta.
    let mut theta = ratio[*order.last().expect("pmf has a positive atom")];
    let mut cum = 0.0;
    for &a in &order {
        cum += probs[a];
        if cum >= 1.0 - delta - 1e-12 {
            theta = ratio[a];
            break;
        }
    }
    let in_t0: Vec<bool> = (0..atoms)
        .map(|a| probs[a] > 0.0 && ratio[a] <= theta)
        .collect();
    let t0: Vec<usize> = (0..atoms).filter(|&a| in_t0[a]).collect();
    // Communication pushforwards: the true one and the product-of-marginals
    // one (the per-terminal maps make the latter a product over coordinates).
    let f_space = model.comm_space();
    let mut pf = vec![0.0f64; f_space];
    for a in 0..atoms {
        pf[model.comm_index(a)] += probs[a];
    }
    let comm_sizes = model.comm_sizes().to_vec();
    let mut q_push: Vec<Vec<f64>> = comm_sizes.iter().map(|&s| vec![0.0; s]).collect();
    for j in 0..k {
        for (y, &w) in marg[j].iter().enumerate() {
            q_push[j][model.comm[j][y]] += w;
        }
    }
    let mut prod_pf = vec![0.0f64; f_space];
    for (i, slot) in prod_pf.iter_mut().enumerate() {
        let mut rest = i;
        let mut w = 1.0;
        for j in (0..k).rev() {
            w *= q_push[j][rest % comm_sizes[j]];
            rest /= comm_sizes[j];
        }
        *slot = w;
    }
    // Cells and the exact-recovery mass per communication value.
    let mut cells: BTreeMap<u64, BTreeMap<u64, Vec<usize>>> = BTreeMap::new();
    let mut exact = vec![0.0f64; f_space];
    for &a in &t0 {
        let i = model.comm_index(a);
        let c = &coords_table[a];
        let first = model.estimate(0, c[0] as usize, i);
        if (1..k).all(|j| model.estimate(j, c[j] as usize, i) == first) {
            cells
                .entry(i as u64)
                .or_default()
                .entry(first)
                .or_default()
                .push(a);
            if first == model.cr()[a] {
                exact[i] += probs[a];
            }
        }
    }
    let keep = 1.0 - (epsilon + delta).sqrt();
    let i1: BTreeSet<u64> = (0..f_space)
        .filter(|&i| pf[i] > 0.0 && exact[i] / pf[i] >= keep - 1e-12)
        .map(|i| i as u64)
        .collect();
    let i2: BTreeSet<u64> = likelihood_ratio_set(
        &Measure::from_probs(&pf),
        &Measure::from_probs(&prod_pf),
        delta,
    )?
    .into_iter()
    .map(|id| id.parse::<u64>().map_err(|_| Error::Internal("bad measure key".into())))
    .collect::<Result<_>>()?;
    let i0: BTreeSet<u64> = i1.intersection(&i2).copied().collect();
    // Candidate CR values: everything the tables can produce.
    let mut values: BTreeSet<u64> = model.cr().iter().copied().collect();
    for table in &model.estimates {
        for row in table {
            values.extend(row.iter().copied());
        }
    }
    let width = values
        .iter()
        .next_back()
        .map(|v| v.to_string().len())
        .unwrap_or(1);
    let mut mu: BTreeMap<u64, Measure> = BTreeMap::new();
    let mut shortlist: BTreeMap<u64, Vec<u64>> = BTreeMap::new();
    for &i in &i0 {
        let by_l = cells
            .get(&i)
            .expect("surviving communication values have agreeing cells");
        let pfi = pf[i as usize];
        let weights: BTreeMap<String, f64> = by_l
            .iter()
            .map(|(&l, atoms_of)| {
                let mass: f64 = atoms_of.iter().map(|&a| probs[a]).sum();
                (format!("{l:0width$}"), mass / pfi)
            })
            .collect();
        let mu_i = Measure::new(weights)?;
        let hms = high_mass_set(&mu_i, delta, 1.0 / k as f64)?;
        let mut listed: Vec<u64> = hms
            .elements
            .iter()
            .map(|id| id.parse::<u64>().map_err(|_| Error::Internal("bad measure key".into())))
            .collect::<Result<_>>()?;
        listed.sort_by(|&x, &y| {
            let wx = mu_i.get(&format!("{x:0width$}"));
            let wy = mu_i.get(&format!("{y:0width$}"));
            wy.total_cmp(&wx).then(x.cmp(&y))
        });
        mu.insert(i, mu_i);
        shortlist.insert(i, listed);
    }
    let mut orders: BTreeMap<u64, Vec<u64>> = BTreeMap::new();
    for i in 0..f_space {
        if pf[i] <= 0.0 {
            continue;
        }
        let i = i as u64;
        let mut order: Vec<u64> = Vec::with_capacity(values.len());
        if let Some(listed) = shortlist.get(&i) {
            order.extend(listed.iter().copied());
            order.extend(values.iter().copied().filter(|v| !listed.contains(v)));
        } else {
            order.extend(values.iter().copied());
        }
        orders.insert(i, order);
    }
    let strategy = QueryStrategy { orders };
    let bound = (theta / (delta * delta)).powf(1.0 / (k as f64 - 1.0));
    let mut rank_of: HashMap<u64, HashMap<u64, u64>> = HashMap::new();
    for (&i, order) in strategy.orders() {
        rank_of.insert(
            i,
            order
                .iter()
                .enumerate()
                .map(|(r, &v)| (v, r as u64 + 1))
                .collect(),
        );
    }
    let mut success = 0.0;
    for a in 0..atoms {
        if probs[a] <= 0.0 {
            continue;
        }
        let i = model.comm_index(a) as u64;
        let rank = rank_of[&i][&model.cr()[a]] as f64;
        if rank <= bound * (1.0 + 1e-12) + 1e-12 {
            success += probs[a];
        }
    }
    Ok(ConverseConstruction {
        theta,
        delta,
        epsilon,
        t0,
        cells,
        i1,
        i2,
        i0,
        mu,
        shortlist,
        strategy,
        bound,
        guarantee: g * g,
        success,
    })
}

/// Numeric guarantee (theta / kappa(delta))^{lambda_sum - 1} with
/// kappa(delta) = (m 2^m)^{-m} delta^{m+1} and theta the dual-weighted
/// product of the per-complement thresholds over the base threshold.
pub fn theorem5_bound(
    lambda: &FractionalPartition,
    theta_0: f64,
    theta_complements: &[f64],
    delta: f64,
) -> Result<f64> {
    let dual = dual_of(lambda)?;
    if theta_complements.len() != dual.complements().len() {
        return Err(Error::LengthMismatch {
            expected: dual.complements().len(),
            got: theta_complements.len(),
        });
    }
    if !(theta_0.is_finite() && theta_0 > 0.0) {
        return Err(Error::ParamRange {
            what: "theta_0",
            lo: 0.0,
            hi: f64::INFINITY,
            got: theta_0,
        });
    }
    for &t in theta_complements {
        if !(t.is_finite() && t > 0.0) {
            return Err(Error::ParamRange {
                what: "theta",
                lo: 0.0,
                hi: f64::INFINITY,
                got: t,
            });
        }
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::ParamRange {
            what: "delta",
            lo: 0.0,
            hi: 1.0,
            got: delta,
        });
    }
    let log2_theta: f64 = dual
        .weights()
        .iter()
        .zip(theta_complements)
        .map(|(&w, &t)| w * t.log2())
        .sum::<f64>()
        - theta_0.log2();
    let m = lambda.family().m() as f64;
    let log2_kappa = -m * (m.log2() + m) + (m + 1.0) * delta.log2();
    Ok(((log2_theta - log2_kappa) * (lambda.lambda_sum() - 1.0)).exp2())
}

/// Random explicit model for exercising the construction: a hidden value,
/// noisy per-terminal copies, small quantized communication, the CR a
/// function of terminal 1, and exact MAP estimates elsewhere. Returns the
/// model with a delta and its exact epsilon, resampling until the guarantee
/// regime has margin at least 0.05.
pub(crate) fn random_cr_model<R: Rng>(rng: &mut R, k: usize) -> (CrModel, f64, f64) {
    let mut attempts = 0usize;
    loop {
        attempts += 1;
        let noise_cap = if attempts > 50 { 0.0 } else { 0.15 };
        let w_size = rng.gen_range(2..=4usize);
        let mut pw: Vec<f64> = (0..w_size).map(|_| rng.gen_range(0.2..1.0f64)).collect();
        let total: f64 = pw.iter().sum();
        pw.iter_mut().for_each(|p| *p /= total);
        let noise: Vec<f64> = (0..k).map(|_| rng.gen_range(0.0..=noise_cap)).collect();
        let sizes = vec![w_size; k];
        let atoms: usize = sizes.iter().product();
        let mut probs = vec![0.0f64; atoms];
        for (a, slot) in probs.iter_mut().enumerate() {
            let mut coords = vec![0usize; k];
            let mut rest = a;
            for j in (0..k).rev() {
                coords[j] = rest % w_size;
                rest /= w_size;
            }
            let mut p = 0.0;
            for (w, &pw_w) in pw.iter().enumerate() {
                let mut term = pw_w;
                for j in 0..k {
                    term *= if coords[j] == w {
                        1.0 - noise[j]
                    } else {
                        noise[j] / (w_size as f64 - 1.0)
                    };
                }
                p += term;
            }
            *slot = p;
        }
        let joint = JointPmf::new(sizes.clone(), probs).expect("mixture table is a pmf");
        let comm: Vec<Vec<usize>> = (0..k)
            .map(|_| {
                let c_size = rng.gen_range(1..=2usize);
                (0..w_size).map(|_| rng.gen_range(0..c_size)).collect()
            })
            .collect();
        let identity = rng.gen_bool(0.5);
        let g: Vec<u64> = (0..w_size)
            .map(|y| {
                if identity {
                    y as u64
                } else {
                    rng.gen_range(0..w_size) as u64
                }
            })
            .collect();
        let cr: Vec<u64> = (0..atoms).map(|a| g[joint.coords(a)[0] as usize]).collect();
        // Terminal 1 knows the CR; the rest take the exact MAP estimate of it
        // given their own symbol and the communication tuple.
        let mut comm_sizes = vec![0usize; k];
        for j in 0..k {
            comm_sizes[j] = comm[j].iter().max().copied().unwrap_or(0) + 1;
        }
        let f_space: usize = comm_sizes.iter().product();
        let f_of = |a: usize| -> usize {
            let c = joint.coords(a);
            let mut i = 0usize;
            for j in 0..k {
                i = i * comm_sizes[j] + comm[j][c[j] as usize];
            }
            i
        };
        let mut estimates: Vec<Vec<Vec<u64>>> = Vec::with_capacity(k);
        for j in 0..k {
            let mut table = vec![vec![0u64; f_space]; w_size];
            if j == 0 {
                for (y, row) in table.iter_mut().enumerate() {
                    row.iter_mut().for_each(|e| *e = g[y]);
                }
            } else {
                for (y, row) in table.iter_mut().enumerate() {
                    for (f, slot) in row.iter_mut().enumerate() {
                        let mut mass: BTreeMap<u64, f64> = BTreeMap::new();
                        for a in 0..atoms {
                            if joint.probs()[a] > 0.0
                                && joint.coords(a)[j] as usize == y
                                && f_of(a) == f
                            {
                                *mass.entry(cr[a]).or_insert(0.0) += joint.probs()[a];
                            }
                        }
                        *slot = mass
                            .iter()
                            .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(a.0)))
                            .map(|(&l, _)| l)
                            .unwrap_or(0);
                    }
                }
            }
            estimates.push(table);
        }
        let model = CrModel::new(joint, comm, cr, estimates).expect("generated tables are aligned");
        let epsilon = model.epsilon();
        let delta = rng.gen_range(0.05..0.3);
        if 1.0 - delta - (delta + epsilon).sqrt() >= 0.05 {
            return (model, delta, epsilon);
        }
    }
}
