//! Security indices for a key-transcript pair (K, F): divergence from an
//! ideal uniform-and-independent key, average variational distance from
//! uniform, and the two sides of the strong-converse inequality relating
//! them.

use crate::error::{Error, Result};
use crate::pmf::JointPmf;

/// Joint pmf of a key K and a transcript F, with K on coordinate 0.
#[derive(Debug, Clone, PartialEq)]
pub struct KeyTranscriptPmf {
    joint: JointPmf,
    p_f: Vec<f64>,
}

impl KeyTranscriptPmf {
    pub fn new(joint: JointPmf) -> Result<Self> {
        if joint.m() != 2 {
            return Err(Error::DimensionMismatch(format!(
                "key-transcript pmf needs exactly 2 coordinates, got {}",
                joint.m()
            )));
        }
        let f_size = joint.alphabet_sizes()[1];
        let mut p_f = vec![0.0; f_size];
        for (idx, &p) in joint.probs().iter().enumerate() {
            p_f[idx % f_size] += p;
        }
        Ok(Self { joint, p_f })
    }

    pub fn joint(&self) -> &JointPmf {
        &self.joint
    }

    /// Number of key values ‖K‖.
    pub fn key_size(&self) -> usize {
        self.joint.alphabet_sizes()[0]
    }

    pub fn transcript_size(&self) -> usize {
        self.joint.alphabet_sizes()[1]
    }

    fn prob(&self, k: usize, f: usize) -> f64 {
        self.joint.probs()[k * self.transcript_size() + f]
    }
}

/// s_in(K;F) = log2 ‖K‖ − H(K|F), equal to the divergence of P_{K,F} from
/// P_unif × P_F. Both forms are evaluated and must agree to 1e-10.
pub fn s_in(kt: &KeyTranscriptPmf) -> Result<f64> {
    let k_size = kt.key_size();
    let log_k = (k_size as f64).log2();
    let h_kf = kt.joint.entropy(0b11)?;
    let h_f = kt.joint.entropy(0b10)?;
    let entropy_form = log_k - (h_kf - h_f);
    let mut divergence_form = 0.0;
    for k in 0..k_size {
        for f in 0..kt.transcript_size() {
            let p = kt.prob(k, f);
            if p > 0.0 {
                divergence_form += p * (p / (kt.p_f[f] / k_size as f64)).log2();
            }
        }
    }
    let gap = (entropy_form - divergence_form).abs();
    if gap > 1e-10 {
        return Err(Error::Internal(format!(
            "divergence identity violated by {gap}"
        )));
    }
    Ok(entropy_form.max(0.0))
}

/// s_var(K;F) = Σ_i P_F(i) Σ_k |P_{K|F}(k|i) − 1/‖K‖|, in [0, 2].
pub fn s_var(kt: &KeyTranscriptPmf) -> f64 {
    let k_size = kt.key_size();
    let unif = 1.0 / k_size as f64;
    let mut total = 0.0;
    for (f, &pf) in kt.p_f.iter().enumerate() {
        if pf <= 0.0 {
            continue;
        }
        let dist: f64 = (0..k_size)
            .map(|k| (kt.prob(k, f) / pf - unif).abs())
            .sum();
        total += pf * dist;
    }
    total
}

/// The strong-converse inequality E|log2(‖K‖ P_{K|F}(K|F))| ≤
/// s_var log2(‖K‖²/s_var), returned as (lhs, rhs). When s_var is exactly 0
/// the left side vanishes and (0, 0) is returned.
pub fn strong_converse_gap(kt: &KeyTranscriptPmf) -> (f64, f64) {
    let sv = s_var(kt);
    if sv == 0.0 {
        return (0.0, 0.0);
    }
    let k_size = kt.key_size() as f64;
    let mut lhs = 0.0;
    for k in 0..kt.key_size() {
        for f in 0..kt.transcript_size() {
            let p = kt.prob(k, f);
            if p > 0.0 {
                let cond = p / kt.p_f[f];
                lhs += p * (k_size * cond).log2().abs();
            }
        }
    }
    let rhs = sv * (k_size * k_size / sv).log2();
    (lhs, rhs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn kt_from(sizes: [usize; 2], probs: Vec<f64>) -> KeyTranscriptPmf {
        KeyTranscriptPmf::new(JointPmf::new(sizes.to_vec(), probs).unwrap()).unwrap()
    }

    fn random_kt<R: Rng>(rng: &mut R) -> KeyTranscriptPmf {
        let k = rng.gen_range(2..=8usize);
        let f = rng.gen_range(2..=8usize);
        let mut probs: Vec<f64> = (0..k * f)
            .map(|_| -rng.gen_range(1e-12..1.0f64).ln())
            .collect();
        let sum: f64 = probs.iter().sum();
        probs.iter_mut().for_each(|p| *p /= sum);
        kt_from([k, f], probs)
    }

    #[test]
    fn test_uniform_independent_key_is_ideal() {
        let kt = kt_from([4, 4], vec![1.0 / 16.0; 16]);
        assert_eq!(s_in(&kt).unwrap(), 0.0);
        assert_eq!(s_var(&kt), 0.0);
        assert_eq!(strong_converse_gap(&kt), (0.0, 0.0));
    }

    #[test]
    fn test_fully_leaked_key_on_four() {
        // K = F, uniform on 4.
        let mut probs = vec![0.0; 16];
        for i in 0..4 {
            probs[i * 4 + i] = 0.25;
        }
        let kt = kt_from([4, 4], probs);
        assert!((s_in(&kt).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn test_leaked_bit_indices() {
        // K = F uniform on 2: s_var = 1, lhs = 1, rhs = 2.
        let kt = kt_from([2, 2], vec![0.5, 0.0, 0.0, 0.5]);
        assert!((s_var(&kt) - 1.0).abs() < 1e-12);
        let (lhs, rhs) = strong_converse_gap(&kt);
        assert!((lhs - 1.0).abs() < 1e-12);
        assert!((rhs - 2.0).abs() < 1e-12);
    }

    #[test]
    fn test_indices_on_random_joints() {
        let mut rng = ChaCha8Rng::seed_from_u64(73);
        for _ in 0..500 {
            let kt = random_kt(&mut rng);
            let si = s_in(&kt).unwrap();
            let sv = s_var(&kt);
            assert!(si >= 0.0);
            assert!((0.0..=2.0).contains(&sv), "s_var {sv} outside [0,2]");
            let (lhs, rhs) = strong_converse_gap(&kt);
            assert!(
                lhs <= rhs + 1e-12,
                "strong converse violated: {lhs} > {rhs}"
            );
            // Pinsker chain: s_in >= (log2 e / 2) s_var^2.
            let pinsker = 0.5 * std::f64::consts::LOG2_E * sv * sv;
            assert!(
                si >= pinsker - 1e-12,
                "Pinsker violated: {si} < {pinsker}"
            );
        }
    }

    #[test]
    fn test_near_uniform_keys_stay_consistent() {
        // Joints close to ideal exercise the small-s_var branch of the
        // inequality, where the rhs coefficient log2(K^2/s_var) blows up.
        let mut rng = ChaCha8Rng::seed_from_u64(79);
        for _ in 0..200 {
            let k = rng.gen_range(2..=6usize);
            let f = rng.gen_range(2..=6usize);
            let mut probs: Vec<f64> = (0..k * f)
                .map(|_| 1.0 + 1e-6 * rng.gen_range(-1.0..1.0f64))
                .collect();
            let sum: f64 = probs.iter().sum();
            probs.iter_mut().for_each(|p| *p /= sum);
            let kt = kt_from([k, f], probs);
            let (lhs, rhs) = strong_converse_gap(&kt);
            assert!(lhs <= rhs + 1e-12, "{lhs} > {rhs}");
        }
    }

    #[test]
    fn test_requires_two_coordinates() {
        let j = JointPmf::uniform(vec![2, 2, 2]).unwrap();
        assert!(matches!(
            KeyTranscriptPmf::new(j),
            Err(Error::DimensionMismatch(_))
        ));
    }
}
