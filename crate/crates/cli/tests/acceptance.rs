//! Release gate: ten criteria, one test each, every test printing a single
//! `criterion N: PASS` or `criterion N: FAIL (...)` line before asserting.
//! Oracles here are computed from raw probabilities inside this file, not
//! through the library paths under test.

use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crquery_core::fractional::{query_exponent, query_exponent_alt};
use crquery_core::partition::{divergence_exponent, gaussian_exponent, CovarianceMatrix};
use crquery_core::pmf::{JointPmf, Measure};
use crquery_core::renyi::source_coding_bounds;
use crquery_core::secrecy::{s_in, strong_converse_gap, KeyTranscriptPmf};
use crquery_core::sim::{simulate, Protocol};
use crquery_core::verify::run_suite;

fn verdict(n: u32, ok: bool, detail: &str) {
    if ok {
        println!("criterion {n}: PASS");
    } else {
        println!("criterion {n}: FAIL ({detail})");
    }
    assert!(ok, "criterion {n}: {detail}");
}

/// Fully positive random joint with the given alphabet sizes.
fn random_pmf(rng: &mut ChaCha8Rng, sizes: Vec<usize>) -> JointPmf {
    let atoms: usize = sizes.iter().product();
    let mut probs: Vec<f64> = (0..atoms).map(|_| rng.gen_range(0.05..1.0f64).exp()).collect();
    let total: f64 = probs.iter().sum();
    for p in &mut probs {
        *p /= total;
    }
    JointPmf::new(sizes, probs).expect("valid joint")
}

fn own_entropy(probs: &[f64]) -> f64 {
    probs
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.log2())
        .sum()
}

#[test]
fn criterion_01_two_terminal_exponent_is_mutual_information() {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let start = Instant::now();
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let s1 = rng.gen_range(2..=4usize);
        let s2 = rng.gen_range(2..=4usize);
        let p = random_pmf(&mut rng, vec![s1, s2]);
        let probs = p.probs();
        let mut m1 = vec![0.0; s1];
        let mut m2 = vec![0.0; s2];
        for i in 0..s1 {
            for j in 0..s2 {
                m1[i] += probs[i * s2 + j];
                m2[j] += probs[i * s2 + j];
            }
        }
        let mi = own_entropy(&m1) + own_entropy(&m2) - own_entropy(probs);
        let e = query_exponent(&p, 0b11).expect("solvable");
        worst = worst.max((e - mi).abs());
    }
    let elapsed = start.elapsed();
    let ok = worst <= 1e-9 && elapsed.as_secs_f64() < 1.0;
    verdict(
        1,
        ok,
        &format!("worst |E - I| = {worst:.3e}, elapsed {elapsed:?}"),
    );
}

#[test]
fn criterion_02_three_forms_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let start = Instant::now();
    let mut worst = 0.0f64;
    for idx in 0..200 {
        let m = 2 + idx % 3;
        let sizes: Vec<usize> = (0..m).map(|_| rng.gen_range(2..=3usize)).collect();
        let p = random_pmf(&mut rng, sizes);
        let lp = query_exponent(&p, (1u32 << m) - 1).expect("lp form");
        let rewrite = query_exponent_alt(&p, (1u32 << m) - 1).expect("rewrite form");
        let (partition, _) = divergence_exponent(&p).expect("partition form");
        worst = worst.max((lp - rewrite).abs());
        worst = worst.max((lp - partition).abs());
    }
    let elapsed = start.elapsed();
    let ok = worst <= 1e-7 && elapsed.as_secs_f64() < 30.0;
    verdict(
        2,
        ok,
        &format!("worst pairwise gap = {worst:.3e}, elapsed {elapsed:?}"),
    );
}

#[test]
fn criterion_03_gaussian_closed_forms() {
    let sigma2 = CovarianceMatrix::new(vec![vec![1.0, 0.5], vec![0.5, 1.0]]).unwrap();
    let c2 = gaussian_exponent(&sigma2, None).expect("2x2");
    let oracle2 = -0.5 * (0.75f64).log2();
    let mut worst = (c2 - oracle2).abs();
    for rho in [0.3, 0.5, 0.7] {
        let sigma = CovarianceMatrix::new(vec![
            vec![1.0, rho, rho],
            vec![rho, 1.0, rho],
            vec![rho, rho, 1.0],
        ])
        .unwrap();
        let c = gaussian_exponent(&sigma, None).expect("3x3");
        // Closed-form determinants: the full matrix has (1-rho)^2 (1+2rho),
        // every 2x2 principal block has 1-rho^2.
        let det3 = (1.0 - rho) * (1.0 - rho) * (1.0 + 2.0 * rho);
        let det2 = 1.0 - rho * rho;
        let singletons = -det3.log2() / 4.0;
        let pair = (det2.log2() - det3.log2()) / 2.0;
        // The four nontrivial partitions of three terminals: all singletons,
        // plus the three singleton-against-pair splits (equal by symmetry).
        let oracle = singletons.min(pair).min(pair).min(pair);
        worst = worst.max((c - oracle).abs());
    }
    verdict(3, worst <= 1e-9, &format!("worst gap = {worst:.3e}"));
}

#[test]
fn criterion_04_set_size_suite() {
    let start = Instant::now();
    let report = run_suite("lemma3", 0).expect("suite runs");
    let elapsed = start.elapsed();
    let detail: Vec<String> = report
        .properties
        .iter()
        .map(|p| format!("{} {}/{} failed", p.name, p.failures, p.instances))
        .collect();
    let ok = report.passed && elapsed.as_secs_f64() < 60.0;
    verdict(
        4,
        ok,
        &format!("{}; elapsed {elapsed:?}", detail.join(", ")),
    );
}

#[test]
fn criterion_05_rank_suite() {
    let report = run_suite("lemma2", 0).expect("suite runs");
    let detail: Vec<String> = report
        .properties
        .iter()
        .map(|p| format!("{} {}/{} failed", p.name, p.failures, p.instances))
        .collect();
    verdict(5, report.passed, &detail.join(", "));
}

#[test]
fn criterion_06_strategy_suite() {
    let report = run_suite("theorem3", 0).expect("suite runs");
    let detail: Vec<String> = report
        .properties
        .iter()
        .map(|p| format!("{} {}/{} failed", p.name, p.failures, p.instances))
        .collect();
    verdict(6, report.passed, &detail.join(", "));
}

#[test]
fn criterion_07_binning_simulation_quantiles() {
    let start = Instant::now();
    let p = JointPmf::dsbs(0.1).unwrap();
    let proto = Protocol::slepian_wolf_2(&p, 0.2, 7).unwrap();
    let mut quantiles = Vec::new();
    let mut success16 = 0.0;
    for n in [8usize, 12, 16] {
        let r = simulate(&p, &proto, n, 500, 0.1, 7, false).expect("simulation runs");
        println!(
            "  n={n}: success_rate={:.4}, exponent 0.1-quantile={:.6}",
            r.success_rate, r.exponent_quantile
        );
        if n == 16 {
            success16 = r.success_rate;
        }
        quantiles.push(r.exponent_quantile);
    }
    let elapsed = start.elapsed();
    let nondecreasing = quantiles.windows(2).all(|w| w[1] >= w[0] - 1e-12);
    let floor = 0.531 - 0.15;
    let meets_floor = quantiles[2] >= floor;
    let ok = success16 >= 0.8 && nondecreasing && meets_floor && elapsed.as_secs_f64() < 120.0;
    verdict(
        7,
        ok,
        &format!(
            "success@16 = {success16:.4}, quantiles = {quantiles:?}, floor {floor:.3}, \
             elapsed {elapsed:?}"
        ),
    );
}

#[test]
fn criterion_08_secrecy_indices() {
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let mut worst_identity = 0.0f64;
    let mut converse_violations = 0u32;
    for _ in 0..500 {
        let k_size = rng.gen_range(2..=64usize);
        let f_size = rng.gen_range(2..=16usize);
        let atoms = k_size * f_size;
        let mut probs: Vec<f64> = (0..atoms)
            .map(|_| {
                if rng.gen_bool(0.1) {
                    0.0
                } else {
                    rng.gen_range(0.0f64..2.0).exp()
                }
            })
            .collect();
        let total: f64 = probs.iter().sum();
        if total <= 0.0 {
            continue;
        }
        for p in &mut probs {
            *p /= total;
        }
        let joint = JointPmf::new(vec![k_size, f_size], probs.clone()).unwrap();
        let kt = KeyTranscriptPmf::new(joint).unwrap();
        let si = s_in(&kt).expect("identity holds inside the library");
        let mut p_f = vec![0.0; f_size];
        for k in 0..k_size {
            for f in 0..f_size {
                p_f[f] += probs[k * f_size + f];
            }
        }
        let mut divergence = 0.0;
        for k in 0..k_size {
            for f in 0..f_size {
                let p = probs[k * f_size + f];
                if p > 0.0 {
                    divergence += p * (p / (p_f[f] / k_size as f64)).log2();
                }
            }
        }
        worst_identity = worst_identity.max((si - divergence.max(0.0)).abs());
        let (lhs, rhs) = strong_converse_gap(&kt);
        if lhs > rhs + 1e-12 {
            converse_violations += 1;
        }
    }
    let ok = worst_identity <= 1e-10 && converse_violations == 0;
    verdict(
        8,
        ok,
        &format!(
            "worst identity gap = {worst_identity:.3e}, converse violations = \
             {converse_violations}"
        ),
    );
}

#[test]
fn criterion_09_renyi_rate_brackets() {
    let alphas = [0.8, 0.9, 1.1, 1.2];
    let frozen = [
        (0.8, 0.539479873638265),
        (0.9, 0.5022322052063352),
        (1.1, 0.43943115777724706),
        (1.2, 0.41319060567143173),
    ];
    let h = 0.4689955935892812;
    let mut per_alpha: Vec<Vec<(f64, f64)>> = Vec::new();
    for n in [1usize, 2, 4, 8] {
        let mut probs = Vec::with_capacity(1 << n);
        for atom in 0u32..(1 << n) as u32 {
            let w = atom.count_ones();
            probs.push(0.1f64.powi(w as i32) * 0.9f64.powi((n as u32 - w) as i32));
        }
        let mu = Measure::from_probs(&probs);
        let (lower, upper) = source_coding_bounds(&mu, n, &alphas).expect("curves");
        let mut all: Vec<(f64, f64)> = upper;
        all.extend(lower);
        all.sort_by(|a, b| a.0.total_cmp(&b.0));
        per_alpha.push(all);
    }
    let mut worst_const = 0.0f64;
    let mut worst_frozen = 0.0f64;
    for row in &per_alpha {
        for (i, &(alpha, v)) in row.iter().enumerate() {
            worst_const = worst_const.max((v - per_alpha[0][i].1).abs());
            let (fa, fv) = frozen[i];
            assert_eq!(alpha, fa);
            worst_frozen = worst_frozen.max((v - fv).abs());
        }
    }
    let base = &per_alpha[0];
    let bracket = base[0].1 > base[1].1 && base[1].1 > h && h > base[2].1 && base[2].1 > base[3].1;
    let ok = worst_const <= 1e-12 && worst_frozen <= 1e-12 && bracket;
    verdict(
        9,
        ok,
        &format!(
            "constancy gap = {worst_const:.3e}, frozen gap = {worst_frozen:.3e}, \
             bracket chain held = {bracket}"
        ),
    );
}

#[test]
fn criterion_10_byte_identical_reruns() {
    let manifest = env!("CARGO_MANIFEST_DIR");
    let dsbs = format!("{manifest}/tests/fixtures/dsbs.json");
    let commands: [Vec<&str>; 2] = [
        vec![
            "simulate",
            "--pmf",
            &dsbs,
            "--protocol",
            "sw2",
            "--n",
            "8",
            "--trials",
            "100",
            "--eta",
            "0.2",
            "--seed",
            "42",
            "--reproducible",
        ],
        vec!["verify", "--suite", "all", "--seed", "1", "--reproducible"],
    ];
    let mut ok = true;
    let mut detail = String::new();
    for args in &commands {
        let run = || {
            Command::new(env!("CARGO_BIN_EXE_crquery"))
                .args(args)
                .output()
                .expect("binary runs")
        };
        let a = run();
        let b = run();
        if !a.status.success() || !b.status.success() {
            ok = false;
            detail = format!("{} exited nonzero", args[0]);
            break;
        }
        if a.stdout != b.stdout {
            ok = false;
            detail = format!("{} output differs between reruns", args[0]);
            break;
        }
    }
    verdict(10, ok, &detail);
}
