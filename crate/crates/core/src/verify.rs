//! Named invariant suites behind the `verify` command: each one replays a
//! seeded batch of random instances through the crate's checks and reports
//! pass/fail per property, with the first counterexample dumped on failure.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fractional::{query_exponent, query_exponent_alt};
use crate::partition::divergence_exponent;
use crate::pmf::{full_set, JointPmf, Measure};
use crate::renyi::{cardinality_lower_bound, high_mass_set};
use crate::secrecy::{s_in, s_var, strong_converse_gap, KeyTranscriptPmf};
use crate::sim::{
    build_theorem3_strategy, lemma2_converse_check, lemma2_forward_check, random_cr_model,
};

pub const SUITES: &[&str] = &[
    "lemma2",
    "lemma3",
    "theorem1-equiv",
    "theorem3",
    "secrecy",
    "all",
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropertyResult {
    pub name: String,
    pub instances: usize,
    pub failures: usize,
    pub passed: bool,
    /// First counterexample when any instance failed, otherwise empty.
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub suite: String,
    pub seed: u64,
    pub passed: bool,
    pub properties: Vec<PropertyResult>,
}

/// Run one named suite. The `all` suite is the concatenation of the other
/// five at the same seed, so its outcome matches running them one by one.
pub fn run_suite(name: &str, seed: u64) -> Result<SuiteReport> {
    let properties = match name {
        "lemma2" => lemma2_suite(seed),
        "lemma3" => lemma3_suite(seed),
        "theorem1-equiv" => theorem1_suite(seed),
        "theorem3" => theorem3_suite(seed),
        "secrecy" => secrecy_suite(seed),
        "all" => {
            let mut props = lemma2_suite(seed);
            props.extend(lemma3_suite(seed));
            props.extend(theorem1_suite(seed));
            props.extend(theorem3_suite(seed));
            props.extend(secrecy_suite(seed));
            props
        }
        other => return Err(Error::UnknownSuite(other.to_string())),
    };
    Ok(SuiteReport {
        suite: name.to_string(),
        seed,
        passed: properties.iter().all(|p| p.passed),
        properties,
    })
}

struct Tally {
    name: &'static str,
    instances: usize,
    failures: usize,
    detail: String,
}

impl Tally {
    fn new(name: &'static str) -> Self {
        Tally {
            name,
            instances: 0,
            failures: 0,
            detail: String::new(),
        }
    }

    fn pass(&mut self) {
        self.instances += 1;
    }

    fn fail(&mut self, dump: String) {
        self.instances += 1;
        if self.failures == 0 {
            self.detail = dump;
        }
        self.failures += 1;
    }

    fn check(&mut self, ok: bool, dump: impl FnOnce() -> String) {
        if ok {
            self.pass()
        } else {
            self.fail(dump())
        }
    }

    fn finish(self) -> PropertyResult {
        PropertyResult {
            name: self.name.to_string(),
            instances: self.instances,
            failures: self.failures,
            passed: self.failures == 0,
            detail: self.detail,
        }
    }
}

/// Decorrelated per-suite stream of one base seed, so `all` reproduces the
/// standalone runs exactly.
fn suite_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Exponentially weighted random pmf with a sprinkling of zero atoms.
fn random_joint<R: Rng>(rng: &mut R, sizes: Vec<usize>) -> JointPmf {
    let atoms: usize = sizes.iter().product();
    loop {
        let mut probs: Vec<f64> = (0..atoms)
            .map(|_| {
                if rng.gen_bool(0.15) {
                    0.0
                } else {
                    -rng.gen_range(1e-9..1.0f64).ln()
                }
            })
            .collect();
        let sum: f64 = probs.iter().sum();
        if sum <= 0.0 {
            continue;
        }
        probs.iter_mut().for_each(|p| *p /= sum);
        return JointPmf::new(sizes.clone(), probs).expect("normalized random table");
    }
}

/// Unnormalized random measure on `atoms` atoms.
fn random_measure<R: Rng>(rng: &mut R, atoms: usize) -> Measure {
    let scale = rng.gen_range(0.2..3.0);
    let masses: Vec<f64> = (0..atoms)
        .map(|_| -rng.gen_range(1e-9..1.0f64).ln() * scale)
        .collect();
    Measure::from_probs(&masses)
}

fn lemma2_suite(seed: u64) -> Vec<PropertyResult> {
    let mut rng = suite_rng(seed, 1);
    let mut fwd = Tally::new("lemma2/forward-implication");
    let mut conv = Tally::new("lemma2/converse-implication");
    for idx in 0..500 {
        let su = rng.gen_range(2..=64usize);
        let sv = rng.gen_range(2..=64usize);
        let p = random_joint(&mut rng, vec![su, sv]);
        let gamma = rng.gen_range(1.0..64.0f64);
        let delta = rng.gen_range(0.02..0.5f64);
        let dump = |what: &str| {
            format!("instance {idx}: sizes {su}x{sv}, gamma={gamma}, delta={delta}: {what}")
        };
        match lemma2_forward_check(&p, gamma, delta) {
            Ok(ok) => fwd.check(ok, || dump("forward implication violated")),
            Err(e) => fwd.fail(dump(&format!("error {e}"))),
        }
        match lemma2_converse_check(&p, gamma, delta) {
            Ok(ok) => conv.check(ok, || dump("converse implication violated")),
            Err(e) => conv.fail(dump(&format!("error {e}"))),
        }
    }
    vec![fwd.finish(), conv.finish()]
}

fn lemma3_suite(seed: u64) -> Vec<PropertyResult> {
    let mut rng = suite_rng(seed, 2);
    let mut core = Tally::new("lemma3/high-mass-core");
    let mut floor = Tally::new("lemma3/subset-floor-exhaustive");
    for idx in 0..1000 {
        let atoms = rng.gen_range(2..=64usize);
        let mu = random_measure(&mut rng, atoms);
        let total = mu.total_mass();
        let delta = total * rng.gen_range(0.001..0.9);
        let alpha = rng.gen_range(0.0..0.98f64);
        match high_mass_set(&mu, delta, alpha) {
            Ok(h) => {
                let small_enough =
                    (h.elements.len() as f64) <= h.cardinality_bound * (1.0 + 1e-12) + 1e-9;
                let massive_enough = h.mass >= total - delta - 1e-9;
                core.check(small_enough && massive_enough, || {
                    format!(
                        "instance {idx}: atoms={atoms} delta={delta} alpha={alpha}: \
                         mass {} of {total}, size {} vs bound {}",
                        h.mass,
                        h.elements.len(),
                        h.cardinality_bound
                    )
                });
            }
            Err(e) => core.fail(format!("instance {idx}: error {e}")),
        }
    }
    for idx in 0..200 {
        let atoms = rng.gen_range(2..=16usize);
        let mu = random_measure(&mut rng, atoms);
        let total = mu.total_mass();
        let delta = total * rng.gen_range(0.02..0.6);
        let headroom = total - delta;
        let delta_prime = rng.gen_range(0.05 * headroom..0.8 * headroom);
        let alpha = rng.gen_range(1.05..3.0f64);
        match cardinality_lower_bound(&mu, delta, delta_prime, alpha) {
            Ok(bound) => {
                let masses: Vec<f64> = mu.iter().map(|(_, w)| w).collect();
                // Every subset clearly keeping mass >= total - delta must
                // have at least `bound` atoms; borderline masses are skipped
                // as float-ambiguous.
                let mut ok = true;
                let mut bad = String::new();
                for s in 0u32..1 << atoms {
                    let mass: f64 = (0..atoms)
                        .filter(|&i| s >> i & 1 == 1)
                        .map(|i| masses[i])
                        .sum();
                    if mass >= total - delta + 1e-9 && f64::from(s.count_ones()) < bound - 1e-9 {
                        ok = false;
                        bad = format!(
                            "instance {idx}: atoms={atoms} delta={delta} \
                             delta_prime={delta_prime} alpha={alpha}: subset {s:#x} \
                             with mass {mass} has {} elements, bound {bound}",
                            s.count_ones()
                        );
                        break;
                    }
                }
                floor.check(ok, || bad);
            }
            Err(e) => floor.fail(format!("instance {idx}: error {e}")),
        }
    }
    vec![core.finish(), floor.finish()]
}

fn theorem1_suite(seed: u64) -> Vec<PropertyResult> {
    let mut rng = suite_rng(seed, 3);
    let mut full = Tally::new("theorem1-equiv/full-set-three-forms");
    let mut sub = Tally::new("theorem1-equiv/subset-two-forms");
    for idx in 0..200 {
        let m = 2 + idx % 3;
        let sizes: Vec<usize> = (0..m).map(|_| rng.gen_range(2..=3usize)).collect();
        let p = random_joint(&mut rng, sizes.clone());
        let a = full_set(m);
        let outcome = query_exponent(&p, a).and_then(|lp| {
            let alt = query_exponent_alt(&p, a)?;
            let (part, _) = divergence_exponent(&p)?;
            Ok((lp, alt, part))
        });
        match outcome {
            Ok((lp, alt, part)) => {
                full.check((lp - alt).abs() <= 1e-7 && (lp - part).abs() <= 1e-7, || {
                    format!(
                        "instance {idx}: m={m} sizes={sizes:?}: lp={lp} rewrite={alt} \
                         partition={part}"
                    )
                });
            }
            Err(e) => full.fail(format!("instance {idx}: error {e}")),
        }
        let a_sub = loop {
            let mask = rng.gen_range(1..1u32 << m);
            if mask.count_ones() >= 2 {
                break mask;
            }
        };
        let outcome = query_exponent(&p, a_sub)
            .and_then(|lp| query_exponent_alt(&p, a_sub).map(|alt| (lp, alt)));
        match outcome {
            Ok((lp, alt)) => {
                sub.check((lp - alt).abs() <= 1e-7, || {
                    format!(
                        "instance {idx}: m={m} sizes={sizes:?} a={a_sub:#b}: lp={lp} \
                         rewrite={alt}"
                    )
                });
            }
            Err(e) => sub.fail(format!("instance {idx}: error {e}")),
        }
    }
    vec![full.finish(), sub.finish()]
}

fn theorem3_suite(seed: u64) -> Vec<PropertyResult> {
    let mut rng = suite_rng(seed, 4);
    let mut guar = Tally::new("theorem3/success-meets-guarantee");
    let mut inv = Tally::new("theorem3/internal-invariants");
    for idx in 0..200 {
        let k = 2 + idx % 2;
        let (model, delta, epsilon) = random_cr_model(&mut rng, k);
        match build_theorem3_strategy(&model, delta, epsilon) {
            Ok(c) => {
                guar.check(c.success >= c.guarantee - 1e-12, || {
                    format!(
                        "instance {idx}: k={k} delta={delta} epsilon={epsilon}: \
                         success {} below guarantee {}",
                        c.success, c.guarantee
                    )
                });
                let i0_ok = c
                    .i0
                    .iter()
                    .all(|i| c.i1.contains(i) && c.i2.contains(i))
                    && c.i1.intersection(&c.i2).all(|i| c.i0.contains(i));
                let mut cells_ok = true;
                for by_l in c.cells.values() {
                    let mut seen = std::collections::BTreeSet::new();
                    for atoms in by_l.values() {
                        for &a in atoms {
                            if !seen.insert(a) {
                                cells_ok = false;
                            }
                        }
                    }
                }
                let prefix_ok = c.shortlist.iter().all(|(i, listed)| {
                    c.strategy.orders()[i].len() >= listed.len()
                        && c.strategy.orders()[i][..listed.len()] == listed[..]
                });
                let expect_bound = (c.theta / (delta * delta)).powf(1.0 / (k as f64 - 1.0));
                let bound_ok = (c.bound - expect_bound).abs() <= 1e-9 * expect_bound.max(1.0);
                inv.check(i0_ok && cells_ok && prefix_ok && bound_ok, || {
                    format!(
                        "instance {idx}: k={k} delta={delta} epsilon={epsilon}: \
                         i0={i0_ok} cells={cells_ok} prefix={prefix_ok} bound={bound_ok}"
                    )
                });
            }
            Err(e) => {
                guar.fail(format!("instance {idx}: error {e}"));
                inv.fail(format!("instance {idx}: error {e}"));
            }
        }
    }
    vec![guar.finish(), inv.finish()]
}

fn secrecy_suite(seed: u64) -> Vec<PropertyResult> {
    let mut rng = suite_rng(seed, 5);
    let mut ident = Tally::new("secrecy/divergence-identity");
    let mut pin = Tally::new("secrecy/pinsker-floor");
    let mut env = Tally::new("secrecy/strong-converse-envelope");
    for idx in 0..500 {
        let k = rng.gen_range(2..=64usize);
        let f = rng.gen_range(2..=16usize);
        let p = random_joint(&mut rng, vec![k, f]);
        let kt = match KeyTranscriptPmf::new(p) {
            Ok(kt) => kt,
            Err(e) => {
                ident.fail(format!("instance {idx}: error {e}"));
                pin.fail(format!("instance {idx}: error {e}"));
                env.fail(format!("instance {idx}: error {e}"));
                continue;
            }
        };
        // s_in cross-checks its entropy and divergence forms internally and
        // errors out past 1e-10, so an Ok return is the identity check.
        match s_in(&kt) {
            Ok(si) => {
                ident.pass();
                let sv = s_var(&kt);
                let floor = 0.5 * std::f64::consts::LOG2_E * sv * sv;
                pin.check(
                    si >= 0.0 && (0.0..=2.0 + 1e-12).contains(&sv) && si + 1e-12 >= floor,
                    || {
                        format!(
                            "instance {idx}: sizes {k}x{f}: s_in={si} s_var={sv} \
                             pinsker floor {floor}"
                        )
                    },
                );
                let (lhs, rhs) = strong_converse_gap(&kt);
                env.check(lhs <= rhs + 1e-12, || {
                    format!("instance {idx}: sizes {k}x{f}: lhs={lhs} rhs={rhs}")
                });
            }
            Err(e) => {
                ident.fail(format!("instance {idx}: sizes {k}x{f}: error {e}"));
                pin.fail(format!("instance {idx}: error {e}"));
                env.fail(format!("instance {idx}: error {e}"));
            }
        }
    }
    vec![ident.finish(), pin.finish(), env.finish()]
}
