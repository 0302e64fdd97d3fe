//! Small exact integer helpers shared by the group, oracle and
//! post-processing code. Everything here works on `u64` values below
//! 2^63 and widens to `u128`/`i128` for products.

pub fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

pub fn lcm(a: u64, b: u64) -> u64 {
    if a == 0 || b == 0 {
        return 0;
    }
    a / gcd(a, b) * b
}

/// Extended Euclid: returns `(g, s, t)` with `s*a + t*b = g = gcd(a, b) >= 0`.
pub fn ext_gcd(a: i128, b: i128) -> (i128, i128, i128) {
    let (mut old_r, mut r) = (a, b);
    let (mut old_s, mut s) = (1i128, 0i128);
    let (mut old_t, mut t) = (0i128, 1i128);
    while r != 0 {
        let q = old_r.div_euclid(r);
        (old_r, r) = (r, old_r - q * r);
        (old_s, s) = (s, old_s - q * s);
        (old_t, t) = (t, old_t - q * t);
    }
    if old_r < 0 {
        (-old_r, -old_s, -old_t)
    } else {
        (old_r, old_s, old_t)
    }
}

pub fn mul_mod(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

pub fn pow_mod(base: u64, mut exp: u64, m: u64) -> u64 {
    if m == 1 {
        return 0;
    }
    let mut result = 1u64;
    let mut b = base % m;
    while exp > 0 {
        if exp & 1 == 1 {
            result = mul_mod(result, b, m);
        }
        b = mul_mod(b, b, m);
        exp >>= 1;
    }
    result
}

/// Inverse of `a` modulo `m`, if it exists.
pub fn inv_mod(a: u64, m: u64) -> Option<u64> {
    if m == 1 {
        return Some(0);
    }
    let (g, s, _) = ext_gcd(a as i128, m as i128);
    (g == 1).then(|| s.rem_euclid(m as i128) as u64)
}

/// Trial-division factorisation into `(prime, exponent)` pairs, primes ascending.
pub fn factorize(mut n: u64) -> Vec<(u64, u32)> {
    let mut out = Vec::new();
    let mut p = 2u64;
    while p * p <= n {
        if n.is_multiple_of(p) {
            let mut e = 0;
            while n.is_multiple_of(p) {
                n /= p;
                e += 1;
            }
            out.push((p, e));
        }
        p += if p == 2 { 1 } else { 2 };
    }
    if n > 1 {
        out.push((n, 1));
    }
    out
}

pub fn is_prime(n: u64) -> bool {
    n >= 2 && factorize(n) == [(n, 1)]
}

/// Multiplicative order of `a` modulo `n` by direct iteration.
pub fn multiplicative_order(a: u64, n: u64) -> Option<u64> {
    if n == 1 {
        return Some(1);
    }
    if gcd(a % n, n) != 1 {
        return None;
    }
    let a = a % n;
    let mut x = a;
    let mut k = 1;
    while x != 1 {
        x = mul_mod(x, a, n);
        k += 1;
    }
    Some(k)
}

/// Combine `x = a1 mod m1` and `x = a2 mod m2` (moduli need not be coprime).
/// Returns `None` when the congruences are inconsistent.
pub fn crt_pair(a1: u64, m1: u64, a2: u64, m2: u64) -> Option<(u64, u64)> {
    let (g, s, _) = ext_gcd(m1 as i128, m2 as i128);
    let diff = a2 as i128 - a1 as i128;
    if diff.rem_euclid(g) != 0 {
        return None;
    }
    let l = (m1 as i128 / g) * m2 as i128;
    let k = (diff / g * s).rem_euclid(m2 as i128 / g);
    let x = (a1 as i128 + m1 as i128 * k).rem_euclid(l);
    Some((x as u64, l as u64))
}

/// `ceil(log2(n))` for `n >= 1`.
pub fn ceil_log2(n: u64) -> u32 {
    if n <= 1 {
        0
    } else {
        64 - (n - 1).leading_zeros()
    }
}

/// Largest `e` such that `p^e` divides `n` (`n > 0`).
pub fn valuation(mut n: u64, p: u64) -> u32 {
    let mut e = 0;
    while n.is_multiple_of(p) {
        n /= p;
        e += 1;
    }
    e
}

/// SplitMix64 finaliser, used to derive independent per-trial seeds from a
/// master seed so replays do not depend on scheduling order.
pub fn derive_seed(master: u64, stream: u64, index: u64) -> u64 {
    let mut z = master
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(index.wrapping_mul(0xD1B5_4A32_D192_ED03))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gcd_and_lcm() {
        assert_eq!(gcd(12, 18), 6);
        assert_eq!(gcd(0, 7), 7);
        assert_eq!(lcm(4, 6), 12);
        assert_eq!(lcm(1, 1), 1);
    }

    #[test]
    fn ext_gcd_identity() {
        for a in -20i128..20 {
            for b in -20i128..20 {
                let (g, s, t) = ext_gcd(a, b);
                assert_eq!(s * a + t * b, g);
                assert_eq!(g, gcd(a.unsigned_abs() as u64, b.unsigned_abs() as u64) as i128);
            }
        }
    }

    #[test]
    fn orders_mod_n() {
        assert_eq!(multiplicative_order(2, 15), Some(4));
        assert_eq!(multiplicative_order(4, 15), Some(2));
        assert_eq!(multiplicative_order(2, 21), Some(6));
        assert_eq!(multiplicative_order(3, 15), None);
    }

    #[test]
    fn factorisation() {
        assert_eq!(factorize(12), vec![(2, 2), (3, 1)]);
        assert_eq!(factorize(1), vec![]);
        assert_eq!(factorize(97), vec![(97, 1)]);
        assert!(is_prime(13) && !is_prime(15));
    }

    #[test]
    fn crt_general_moduli() {
        assert_eq!(crt_pair(1, 2, 2, 3), Some((5, 6)));
        assert_eq!(crt_pair(1, 4, 3, 6), Some((9, 12)));
        assert_eq!(crt_pair(0, 4, 1, 6), None);
    }

    #[test]
    fn inverses() {
        assert_eq!(inv_mod(3, 7), Some(5));
        assert_eq!(inv_mod(2, 4), None);
        assert_eq!(ceil_log2(15), 4);
        assert_eq!(ceil_log2(16), 4);
        assert_eq!(ceil_log2(17), 5);
    }
}
