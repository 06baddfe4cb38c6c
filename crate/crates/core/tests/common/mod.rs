//! Oracles shared by the integration tests.
#![allow(dead_code)]

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};

pub fn choose(n: u64, k: u64) -> BigUint {
    let mut acc = BigUint::one();
    for i in 0..k {
        acc = acc * BigUint::from(n - i) / BigUint::from(i + 1);
    }
    acc
}

/// Correctly scaled `num / den` as f64 for big positive integers.
pub fn ratio_to_f64(num: &BigUint, den: &BigUint) -> f64 {
    if num.is_zero() {
        return 0.0;
    }
    let shift = (den.bits() as i64 - num.bits() as i64 + 80).max(0) as u32;
    let q: BigUint = (num << shift) / den;
    q.to_f64().unwrap() * 2f64.powi(-(shift as i32))
}

/// Enumerates the full hypergeometric support in exact integer arithmetic.
pub fn fisher_oracle(a: u64, b: u64, c: u64, d: u64) -> f64 {
    let (r1, r2, c1) = (a + b, c + d, a + c);
    let lo = c1.saturating_sub(r2);
    let hi = r1.min(c1);
    let weights: Vec<BigUint> = (lo..=hi).map(|x| choose(r1, x) * choose(r2, c1 - x)).collect();
    let observed = &weights[(a - lo) as usize];
    let total: BigUint = weights.iter().sum();
    let selected: BigUint = weights.iter().filter(|w| *w <= observed).sum();
    ratio_to_f64(&selected, &total)
}

/// Pearson statistic `N (ad - bc)^2 / (r1 r2 c1 c2)` in exact integers.
pub fn chi_square_stat_oracle(a: u64, b: u64, c: u64, d: u64) -> f64 {
    let n = BigUint::from(a + b + c + d);
    let (ad, bc) = (BigUint::from(a) * d, BigUint::from(b) * c);
    let diff = if ad >= bc { ad - bc } else { bc - ad };
    let num = n * &diff * &diff;
    let den = BigUint::from(a + b) * (c + d) * (a + c) * (b + d);
    ratio_to_f64(&num, &den)
}

#[derive(serde::Deserialize)]
pub struct Golden {
    pub response: String,
    pub label: probe_core::taxonomy::Category,
}

pub fn golden_corpus() -> Vec<Golden> {
    include_str!("../data/golden_corpus.jsonl").lines().map(|l| serde_json::from_str(l).expect("golden line")).collect()
}
