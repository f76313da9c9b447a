use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use super::PacketError;

/// Largest bit count for which the binomial expectation is summed exactly.
const EXACT_LIMIT_BITS: u64 = 1 << 16;
const QUADRATURE_SIGMAS: f64 = 10.0;
const QUADRATURE_STEPS: usize = 4000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PayloadStats {
    /// Payload length in bits.
    pub n_bits: u64,
    pub n1: u64,
    pub n0: u64,
    /// Fraction of bytes in `[32, 127]`.
    pub printable_fraction: f64,
    /// Base-2 bit entropy in `[0, 1]`.
    pub bit_entropy: f64,
}

/// `-(1/N) * sum_i n_i * log2(n_i / N)` with `0 * log 0 = 0`.
pub fn bit_entropy(n1: u64, n_bits: u64) -> f64 {
    if n_bits == 0 || n1 == 0 || n1 >= n_bits {
        return 0.0;
    }
    let p = n1 as f64 / n_bits as f64;
    entropy_p(p)
}

fn entropy_p(p: f64) -> f64 {
    if p <= 0.0 || p >= 1.0 {
        return 0.0;
    }
    -(p * p.log2() + (1.0 - p) * (1.0 - p).log2())
}

pub(crate) fn payload_stats_of(payload: &[u8]) -> Result<PayloadStats, PacketError> {
    if payload.is_empty() {
        return Err(PacketError::EmptyPayload);
    }
    let n1: u64 = payload.iter().map(|b| u64::from(b.count_ones())).sum();
    let printable = payload.iter().filter(|&&b| (32..=127).contains(&b)).count();
    let n_bits = 8 * payload.len() as u64;
    Ok(PayloadStats {
        n_bits,
        n1,
        n0: n_bits - n1,
        printable_fraction: printable as f64 / payload.len() as f64,
        bit_entropy: bit_entropy(n1, n_bits),
    })
}

pub fn payload_stats(payload: &[u8]) -> Result<PayloadStats, PacketError> {
    payload_stats_of(payload)
}

/// Mean and standard deviation of the bit entropy of an `l`-byte payload
/// whose bits are i.i.d. fair coins. Memoized per length.
pub fn uniform_entropy_stats(l: usize) -> (f64, f64) {
    assert!(l >= 1, "payload length must be at least one byte");
    static CACHE: OnceLock<Mutex<HashMap<usize, (f64, f64)>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(&v) = cache.lock().expect("cache poisoned").get(&l) {
        return v;
    }
    let n = 8 * l as u64;
    let v = if n <= EXACT_LIMIT_BITS { exact_stats(n) } else { normal_stats(n) };
    cache.lock().expect("cache poisoned").insert(l, v);
    v
}

/// Moments are accumulated on the deficit `1 - h`, which stays small, so
/// the variance does not cancel catastrophically near `h = 1`.
fn mean_sd(d1: f64, d2: f64) -> (f64, f64) {
    (1.0 - d1, (d2 - d1 * d1).max(0.0).sqrt())
}

/// Sums over all `n1` in `0..=n` with pmf `C(n, k) / 2^n` in log space.
fn exact_stats(n: u64) -> (f64, f64) {
    let ln2n = n as f64 * std::f64::consts::LN_2;
    let mut ln_c = 0.0f64;
    let (mut m1, mut m2) = (0.0, 0.0);
    for k in 0..=n {
        if k > 0 {
            ln_c += ((n - k + 1) as f64).ln() - (k as f64).ln();
        }
        let w = (ln_c - ln2n).exp();
        let d = 1.0 - bit_entropy(k, n);
        m1 += w * d;
        m2 += w * d * d;
    }
    mean_sd(m1, m2)
}

/// Treats `n1` as normal with mean `n/2` and variance `n/4`, integrating by
/// Simpson's rule over +-10 standard deviations.
fn normal_stats(n: u64) -> (f64, f64) {
    let nf = n as f64;
    let sd = nf.sqrt() / 2.0;
    let lo = -QUADRATURE_SIGMAS;
    let step = 2.0 * QUADRATURE_SIGMAS / QUADRATURE_STEPS as f64;
    let (mut m1, mut m2, mut wsum) = (0.0, 0.0, 0.0);
    for i in 0..=QUADRATURE_STEPS {
        let z = lo + i as f64 * step;
        let simpson = if i == 0 || i == QUADRATURE_STEPS { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
        let w = simpson * (-0.5 * z * z).exp();
        let p = ((nf / 2.0 + z * sd) / nf).clamp(0.0, 1.0);
        let d = 1.0 - entropy_p(p);
        m1 += w * d;
        m2 += w * d * d;
        wsum += w;
    }
    mean_sd(m1 / wsum, m2 / wsum)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{RngCore, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn degenerate_payloads() {
        let s = payload_stats(&[0u8; 100]).unwrap();
        assert_eq!((s.n1, s.n0, s.n_bits), (0, 800, 800));
        assert_eq!(s.bit_entropy, 0.0);
        assert_eq!(s.printable_fraction, 0.0);

        let s = payload_stats(&[0xaa; 100]).unwrap();
        assert_eq!((s.n1, s.n_bits), (400, 800));
        assert_eq!(s.bit_entropy, 1.0);
        assert_eq!(s.printable_fraction, 0.0);

        assert_eq!(payload_stats(&[0xff; 3]).unwrap().bit_entropy, 0.0);
        assert_eq!(payload_stats(&[]), Err(PacketError::EmptyPayload));
    }

    #[test]
    fn printable_bounds_are_inclusive() {
        assert_eq!(payload_stats(&[31, 32, 127, 128]).unwrap().printable_fraction, 0.5);
    }

    #[test]
    fn random_bytes_match_uniform_model() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut buf = vec![0u8; 10_000];
        rng.fill_bytes(&mut buf);
        let s = payload_stats(&buf).unwrap();
        assert!((s.printable_fraction - 96.0 / 256.0).abs() <= 0.02, "{}", s.printable_fraction);
        let (hu, sigma) = uniform_entropy_stats(buf.len());
        assert!((s.bit_entropy - hu).abs() <= 3.0 * sigma, "{} vs {hu} +- {sigma}", s.bit_entropy);
    }

    #[test]
    fn one_byte_matches_nine_term_sum() {
        let binom = [1.0, 8.0, 28.0, 56.0, 70.0, 56.0, 28.0, 8.0, 1.0];
        let h = |k: f64| {
            if k == 0.0 || k == 8.0 {
                0.0
            } else {
                -(k / 8.0 * (k / 8.0).log2() + (8.0 - k) / 8.0 * ((8.0 - k) / 8.0).log2())
            }
        };
        let mean: f64 = (0..9).map(|k| binom[k] / 256.0 * h(k as f64)).sum();
        let second: f64 = (0..9).map(|k| binom[k] / 256.0 * h(k as f64).powi(2)).sum();
        let (hu, sigma) = uniform_entropy_stats(1);
        assert!((hu - mean).abs() < 1e-12);
        assert!((sigma - (second - mean * mean).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn mean_below_one_and_converging() {
        let mut last = 0.0;
        for l in [1, 8, 64, 512, 4096, 20_000, 1_000_000] {
            let (hu, _) = uniform_entropy_stats(l);
            assert!(hu < 1.0 && hu > last, "l={l} hu={hu}");
            last = hu;
        }
        assert!(1.0 - last < 1e-6);
    }

    #[test]
    fn sigma_shrinks_with_length() {
        let s: Vec<f64> = [64, 256, 1024].iter().map(|&l| uniform_entropy_stats(l).1).collect();
        assert!(s[0] > s[1] && s[1] > s[2], "{s:?}");
    }

    #[test]
    fn approximation_agrees_at_switch_point() {
        let n = EXACT_LIMIT_BITS;
        let (e_mean, e_sd) = exact_stats(n);
        let (a_mean, a_sd) = normal_stats(n);
        assert!((e_mean - a_mean).abs() < 1e-8, "{e_mean} {a_mean}");
        assert!((e_sd - a_sd).abs() / e_sd < 0.01, "{e_sd} {a_sd}");
    }

    #[test]
    fn sampled_statistics_match_model() {
        let l = 200;
        let (hu, sigma) = uniform_entropy_stats(l);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut buf = vec![0u8; l];
        let samples: Vec<f64> = (0..20_000)
            .map(|_| {
                rng.fill_bytes(&mut buf);
                payload_stats(&buf).unwrap().bit_entropy
            })
            .collect();
        let mean = samples.iter().sum::<f64>() / samples.len() as f64;
        let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (samples.len() - 1) as f64;
        assert!((mean - hu).abs() < 4.0 * sigma / (samples.len() as f64).sqrt());
        assert!((var.sqrt() / sigma - 1.0).abs() < 0.05);
    }

    proptest! {
        #[test]
        fn complement_symmetry(payload in proptest::collection::vec(any::<u8>(), 1..300)) {
            let inv: Vec<u8> = payload.iter().map(|b| !b).collect();
            let a = payload_stats(&payload).unwrap();
            let b = payload_stats(&inv).unwrap();
            prop_assert_eq!(a.n1, b.n0);
            prop_assert!((a.bit_entropy - b.bit_entropy).abs() < 1e-12);
        }

        #[test]
        fn stats_in_range(payload in proptest::collection::vec(any::<u8>(), 1..300)) {
            let s = payload_stats(&payload).unwrap();
            prop_assert_eq!(s.n0 + s.n1, s.n_bits);
            prop_assert!((0.0..=1.0).contains(&s.bit_entropy));
            prop_assert!((0.0..=1.0).contains(&s.printable_fraction));
        }
    }
}
