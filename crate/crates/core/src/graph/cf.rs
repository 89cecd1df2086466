//! Exact concentration-factor vectors.
//!
//! A vector stores one numerator per reagent over a shared power-of-two
//! denominator `2^exp`. The numerators always sum to exactly `2^exp`, and the
//! representation is kept reduced (some numerator is odd, or `exp == 0`).

use std::fmt;

use serde::Serialize;
use thiserror::Error;

/// Deepest denominator kept exactly. Mixing beyond it rounds half-up.
pub const MAX_EXP: u32 = 120;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Error)]
#[error("concentration vectors over {left} and {right} reagents cannot be mixed")]
pub struct ReagentUniverseMismatch {
    pub left: usize,
    pub right: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct CfVector {
    exp: u32,
    nums: Vec<u128>,
}

impl CfVector {
    /// Pure reagent `k` out of `len`.
    pub fn unit(len: usize, k: usize) -> Self {
        assert!(k < len, "reagent index {k} out of {len}");
        let mut nums = vec![0; len];
        nums[k] = 1;
        CfVector { exp: 0, nums }
    }

    /// Builds `nums / 2^exp`; `None` unless the numerators sum to `2^exp`.
    pub fn from_dyadic(nums: Vec<u128>, exp: u32) -> Option<Self> {
        if exp > MAX_EXP || nums.is_empty() {
            return None;
        }
        let sum = nums.iter().try_fold(0u128, |acc, &n| acc.checked_add(n))?;
        if sum != 1u128 << exp {
            return None;
        }
        let mut v = CfVector { exp, nums };
        v.reduce();
        Some(v)
    }

    pub fn len(&self) -> usize {
        self.nums.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nums.is_empty()
    }

    pub fn exp(&self) -> u32 {
        self.exp
    }

    pub fn numerators(&self) -> &[u128] {
        &self.nums
    }

    /// Numerators rescaled to denominator `2^exp`, for `exp >= self.exp()`.
    pub fn scaled_to(&self, exp: u32) -> Vec<u128> {
        debug_assert!(exp >= self.exp);
        self.nums.iter().map(|n| n << (exp - self.exp)).collect()
    }

    pub fn sums_to_one(&self) -> bool {
        self.nums.iter().sum::<u128>() == 1u128 << self.exp
    }

    pub fn component(&self, k: usize) -> f64 {
        self.nums[k] as f64 / (1u128 << self.exp) as f64
    }

    /// Reorders components from reagent order `from` into `to`. Reagents
    /// missing from `to` must have zero weight; new ones get zero.
    pub fn remap(&self, from: &[String], to: &[String]) -> Option<CfVector> {
        let mut nums = vec![0u128; to.len()];
        for (k, name) in from.iter().enumerate() {
            let n = *self.nums.get(k)?;
            match to.iter().position(|x| x == name) {
                Some(j) => nums[j] = n,
                None if n == 0 => {}
                None => return None,
            }
        }
        CfVector::from_dyadic(nums, self.exp)
    }

    fn reduce(&mut self) {
        while self.exp > 0 && self.nums.iter().all(|n| n % 2 == 0) {
            self.exp -= 1;
            for n in &mut self.nums {
                *n /= 2;
            }
        }
    }

    /// Numerators over `2^n` after [`round_cf`].
    pub fn rounded_numerators(&self, n: u32) -> Vec<u128> {
        round_cf(self, n).scaled_to(n)
    }

    /// Smallest integer ratio of the vector rounded to `n` bits, e.g. `(1:2:1)`.
    pub fn ratio(&self, n: u32) -> String {
        let nums = self.rounded_numerators(n);
        let g = nums.iter().fold(0u128, |g, &x| gcd(g, x)).max(1);
        let parts: Vec<String> = nums.iter().map(|x| (x / g).to_string()).collect();
        format!("({})", parts.join(":"))
    }

    /// Components as `a/2^n` fractions, e.g. `[16/32, 16/32]`.
    pub fn fractions(&self, n: u32) -> String {
        let den = 1u128 << n;
        let parts: Vec<String> = self
            .rounded_numerators(n)
            .iter()
            .map(|x| format!("{x}/{den}"))
            .collect();
        format!("[{}]", parts.join(", "))
    }
}

impl fmt::Display for CfVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let den = 1u128 << self.exp;
        let parts: Vec<String> = self.nums.iter().map(|x| format!("{x}/{den}")).collect();
        write!(f, "[{}]", parts.join(", "))
    }
}

fn gcd(a: u128, b: u128) -> u128 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// One (1:1) mix-split: the component-wise average of `a` and `b`.
pub fn cf_mix(a: &CfVector, b: &CfVector) -> Result<CfVector, ReagentUniverseMismatch> {
    if a.len() != b.len() {
        return Err(ReagentUniverseMismatch { left: a.len(), right: b.len() });
    }
    let exp = a.exp.max(b.exp);
    let nums: Vec<u128> = a
        .scaled_to(exp)
        .into_iter()
        .zip(b.scaled_to(exp))
        .map(|(x, y)| x + y)
        .collect();
    let mut v = CfVector { exp: exp + 1, nums };
    v.reduce();
    if v.exp > MAX_EXP {
        v = round_cf(&v, MAX_EXP);
    }
    Ok(v)
}

/// Rounds every component half-up to a multiple of `2^-n`, then restores
/// the exact sum by adjusting the largest components first.
pub fn round_cf(cf: &CfVector, n: u32) -> CfVector {
    if cf.exp <= n {
        return cf.clone();
    }
    let shift = cf.exp - n;
    let half = 1u128 << (shift - 1);
    let mut q: Vec<i128> = cf.nums.iter().map(|&x| ((x + half) >> shift) as i128).collect();
    let target = 1i128 << n;
    let mut residual = target - q.iter().sum::<i128>();

    // Largest original component first; ties broken by reagent order.
    let mut order: Vec<usize> = (0..q.len()).collect();
    order.sort_by(|&i, &j| cf.nums[j].cmp(&cf.nums[i]).then(i.cmp(&j)));
    if residual > 0 {
        q[order[0]] += residual;
    } else {
        for &i in &order {
            if residual == 0 {
                break;
            }
            let take = q[i].min(-residual);
            q[i] -= take;
            residual += take;
        }
    }
    let mut v = CfVector { exp: n, nums: q.into_iter().map(|x| x as u128).collect() };
    v.reduce();
    v
}
