//! Exact binomial masses in big rationals, and brute-force expectation of
//! the frequency operator over every basis tuple.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

/// C(n,k) p^k (1−p)^{n−k} with p taken as the exact value of the f64,
/// rounded once at the end. p is dyadic, so every mass is an integer over
/// the common denominator 2^{e·n}.
pub fn exact_binomial_pmf(n: u64, p: f64) -> Vec<f64> {
    let exact = BigRational::from_float(p).expect("finite probability");
    let e = exact.denom().bits() - 1;
    let a = exact.numer().clone();
    let b = (BigInt::one() << e) - &a;
    let mut b_pows = vec![BigInt::one()];
    for j in 1..=n as usize {
        let next = &b_pows[j - 1] * &b;
        b_pows.push(next);
    }
    let scale = -((e * n) as i64);
    let mut out = Vec::with_capacity(n as usize + 1);
    let mut choose = BigInt::one();
    let mut a_pow = BigInt::one();
    for k in 0..=n {
        if k > 0 {
            choose = choose * BigInt::from(n - k + 1) / BigInt::from(k);
            a_pow *= &a;
        }
        out.push(scaled_to_f64(&(&choose * &a_pow * &b_pows[(n - k) as usize]), scale));
    }
    out
}

/// x · 2^shift for a non-negative integer x, correct to well under an ulp.
fn scaled_to_f64(x: &BigInt, shift: i64) -> f64 {
    if x.is_zero() {
        return 0.0;
    }
    let bits = x.bits() as i64;
    let drop = (bits - 64).max(0);
    let top = (x >> drop as u64).to_u64().expect("64 leading bits");
    let mut v = top as f64;
    let mut exp = drop + shift;
    while exp < -1000 {
        v *= 2f64.powi(-1000);
        exp += 1000;
    }
    while exp > 1000 {
        v *= 2f64.powi(1000);
        exp -= 1000;
    }
    v * 2f64.powi(exp as i32)
}

fn pow(x: &BigRational, e: u64) -> BigRational {
    let mut acc = BigRational::one();
    let mut base = x.clone();
    let mut e = e;
    while e > 0 {
        if e & 1 == 1 {
            acc *= &base;
        }
        base = &base * &base;
        e >>= 1;
    }
    acc
}

/// Σ over all label tuples of Π p(ℓᵢ) · count(label)/n, exactly.
pub fn tuple_expectation(probabilities: &[f64], n: u32, label: usize) -> f64 {
    let probs: Vec<BigRational> = probabilities.iter().map(|&p| BigRational::from_float(p).expect("finite")).collect();
    let k = probs.len();
    let mut total = BigRational::zero();
    for code in 0..k.pow(n) {
        let mut c = code;
        let mut w = BigRational::one();
        let mut hits = 0i64;
        for _ in 0..n {
            let l = c % k;
            c /= k;
            w *= &probs[l];
            if l == label {
                hits += 1;
            }
        }
        total += w * BigRational::new(hits.into(), (n as i64).into());
    }
    let norm: BigRational = probs.iter().fold(BigRational::zero(), |a, b| a + b);
    (total / pow(&norm, n as u64)).to_f64().unwrap_or(f64::NAN)
}
