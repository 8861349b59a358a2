//! Shared numeric helpers: log-domain sums, big-integer logarithms, a small
//! deterministic RNG and stable float formatting.

use num_bigint::BigUint;
use num_traits::ToPrimitive;

/// log(e^a + e^b) without overflow.
#[inline]
pub fn logsumexp2(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    if a > b {
        a + (b - a).exp().ln_1p()
    } else {
        b + (a - b).exp().ln_1p()
    }
}

/// log(sum e^x) over a slice.
pub fn logsumexp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let s: f64 = xs.iter().map(|x| (x - m).exp()).sum();
    m + s.ln()
}

/// Natural logarithm of a positive big integer, accurate to ~1e-15 relative.
pub fn big_ln(n: &BigUint) -> f64 {
    let bits = n.bits();
    if bits == 0 {
        return f64::NEG_INFINITY;
    }
    if bits <= 53 {
        return n.to_f64().expect("fits in f64").ln();
    }
    // take the top 53 bits as a mantissa and account for the shift
    let shift = bits - 53;
    let top: BigUint = n >> shift;
    top.to_f64().expect("53 bits fit").ln() + (shift as f64) * std::f64::consts::LN_2
}

/// Ratio of two positive big integers as f64 (num/den), stable for huge values.
pub fn big_ratio_f64(num: &BigUint, den: &BigUint) -> f64 {
    use num_traits::Zero;
    if num.is_zero() {
        return 0.0;
    }
    (big_ln(num) - big_ln(den)).exp()
}

/// SplitMix64: tiny deterministic RNG used for seeded randomized checks.
#[derive(Clone, Debug)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E3779B97F4A7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
        z ^ (z >> 31)
    }

    /// Uniform in [0, 1).
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in [lo, hi).
    pub fn range_f64(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in [0, n).
    pub fn below(&mut self, n: usize) -> usize {
        (self.next_u64() % n as u64) as usize
    }
}

/// FNV-1a hash of a byte slice, rendered as fixed-width hex. Used to fingerprint
/// command inputs in reports.
pub fn fnv1a_hex(bytes: &[u8]) -> String {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    format!("{h:016x}")
}

/// Render a float with 17 significant digits, the shortest form that
/// round-trips every f64. All CLI artifacts use this formatting.
pub fn fmt_g17(x: f64) -> String {
    format!("{x:.16e}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigUint;
    use num_traits::One;

    #[test]
    fn logsumexp_matches_naive_in_range() {
        let xs = [0.3f64, -1.2, 2.5];
        let naive = xs.iter().map(|x| x.exp()).sum::<f64>().ln();
        assert!((logsumexp(&xs) - naive).abs() < 1e-14);
    }

    #[test]
    fn logsumexp_survives_large_inputs() {
        let v = logsumexp(&[1000.0, 1000.0]);
        assert!((v - (1000.0 + 2f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn big_ln_agrees_with_f64_ln() {
        let n = BigUint::from(123456789u64);
        assert!((big_ln(&n) - (123456789f64).ln()).abs() < 1e-12);
        // 2^200
        let big: BigUint = BigUint::one() << 200;
        assert!((big_ln(&big) - 200.0 * std::f64::consts::LN_2).abs() < 1e-10);
    }

    #[test]
    fn splitmix_is_deterministic() {
        let mut a = SplitMix64::new(42);
        let mut b = SplitMix64::new(42);
        for _ in 0..16 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }
}
