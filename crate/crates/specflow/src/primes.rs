//! Primality utilities: a sieve for dense small-prime enumeration and a
//! probabilistic test for the large pinned denominators.

use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::{One, Zero};
use rand::RngCore;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// All primes `<= limit`, ascending.
pub fn sieve(limit: u64) -> Vec<u64> {
    if limit < 2 {
        return vec![];
    }
    let n = limit as usize;
    let mut composite = vec![false; n + 1];
    let mut out = Vec::new();
    for p in 2..=n {
        if composite[p] {
            continue;
        }
        out.push(p as u64);
        let mut k = p * p;
        while k <= n {
            composite[k] = true;
            k += p;
        }
    }
    out
}

/// Miller-Rabin with `rounds` random bases drawn from a seeded stream.
/// Composites slip through with probability at most `4^-rounds`; the callers
/// pair this with pinned inputs, so a failure here is a data bug, not chance.
pub fn is_probable_prime(n: &BigUint, rounds: u32, seed: u64) -> bool {
    let two = BigUint::from(2u32);
    if n < &two {
        return false;
    }
    if n == &two {
        return true;
    }
    if n.is_even() {
        return false;
    }
    // Knock out small factors before any modexp.
    for p in sieve(1000) {
        let pb = BigUint::from(p);
        if &pb * &pb > *n {
            return true;
        }
        if (n % &pb).is_zero() {
            return n == &pb;
        }
    }
    let n_minus_1 = n - BigUint::one();
    let s = n_minus_1.trailing_zeros().unwrap_or(0);
    let d = &n_minus_1 >> s;
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let bits = n.bits();
    'witness: for _ in 0..rounds {
        // Uniform-enough base in [2, n-2]: random bits reduced mod (n-3).
        let mut raw = vec![0u8; (bits as usize + 64) / 8];
        rng.fill_bytes(&mut raw);
        let span = n - BigUint::from(3u32);
        let a = BigUint::from_bytes_le(&raw) % &span + &two;
        let mut x = a.modpow(&d, n);
        if x.is_one() || x == n_minus_1 {
            continue;
        }
        for _ in 1..s {
            x = (&x * &x) % n;
            if x == n_minus_1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sieve_matches_known_prefix() {
        assert_eq!(sieve(30), vec![2, 3, 5, 7, 11, 13, 17, 19, 23, 29]);
        assert_eq!(sieve(1).len(), 0);
        let p = sieve(100_000);
        assert_eq!(p.len(), 9592);
        assert_eq!(*p.last().unwrap(), 99_991);
    }

    #[test]
    fn probable_prime_agrees_with_sieve_below_ten_thousand() {
        let primes: std::collections::HashSet<u64> = sieve(10_000).into_iter().collect();
        for n in 0u64..10_000 {
            let got = is_probable_prime(&BigUint::from(n), 16, 7);
            assert_eq!(got, primes.contains(&n), "n = {n}");
        }
    }

    #[test]
    fn probable_prime_handles_large_known_cases() {
        // 2^127 - 1 is prime; 2^67 - 1 = 193707721 * 761838257287 is not.
        let m127 = (BigUint::one() << 127u32) - BigUint::one();
        assert!(is_probable_prime(&m127, 24, 1));
        let m67 = (BigUint::one() << 67u32) - BigUint::one();
        assert!(!is_probable_prime(&m67, 24, 1));
        // A 330-bit semiprime built from two pinned primes must fail.
        let a: BigUint = "1000000000000000000000000000057".parse().unwrap();
        let b: BigUint = "1000000000000000000000000000099".parse().unwrap();
        assert!(is_probable_prime(&a, 24, 2));
        assert!(is_probable_prime(&b, 24, 2));
        assert!(!is_probable_prime(&(&a * &b), 24, 2));
    }
}
