use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

/// A 2x2 table. Rows are the two groups being compared, columns the two
/// outcomes:
///
/// ```text
///            outcome 1   outcome 2
/// group 1        a           b
/// group 2        c           d
/// ```
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ContingencyTable {
    pub a: u64,
    pub b: u64,
    pub c: u64,
    pub d: u64,
}

impl ContingencyTable {
    pub fn new(a: u64, b: u64, c: u64, d: u64) -> Self {
        ContingencyTable { a, b, c, d }
    }

    pub fn total(&self) -> u64 {
        self.a + self.b + self.c + self.d
    }

    pub fn swap_rows(self) -> Self {
        ContingencyTable::new(self.c, self.d, self.a, self.b)
    }

    pub fn swap_columns(self) -> Self {
        ContingencyTable::new(self.b, self.a, self.d, self.c)
    }

    pub fn transpose(self) -> Self {
        ContingencyTable::new(self.a, self.c, self.b, self.d)
    }
}

/// Which tables count as at least as extreme as the observed one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tails {
    /// Top-left cell at most the observed value.
    Less,
    /// Top-left cell at least the observed value.
    Greater,
    /// Every table no more probable than the observed one.
    #[default]
    Two,
}

fn binomial(n: u64, k: u64) -> BigUint {
    if k > n {
        return BigUint::zero();
    }
    let k = k.min(n - k);
    let mut acc = BigUint::one();
    for i in 0..k {
        acc = acc * (n - i) / (i + 1);
    }
    acc
}

/// Exact p-value. Tables with an empty row or column give exactly 1.
pub fn fisher_exact_rational(t: &ContingencyTable, tails: Tails) -> BigRational {
    let (r1, r2) = (t.a + t.b, t.c + t.d);
    let c1 = t.a + t.c;
    let n = t.total();
    if r1 == 0 || r2 == 0 || c1 == 0 || c1 == n {
        return BigRational::one();
    }
    let lo = c1.saturating_sub(r2);
    let hi = r1.min(c1);
    // weight of the table whose top-left cell is x; the common
    // denominator C(n, c1) is applied at the end
    let weight = |x: u64| binomial(r1, x) * binomial(r2, c1 - x);
    let observed = weight(t.a);
    let sum: BigUint = (lo..=hi)
        .filter(|&x| match tails {
            Tails::Less => x <= t.a,
            Tails::Greater => x >= t.a,
            Tails::Two => true,
        })
        .map(weight)
        .filter(|w| tails != Tails::Two || *w <= observed)
        .sum();
    let p = BigRational::new(BigInt::from(sum), BigInt::from(binomial(n, c1)));
    p.min(BigRational::one())
}

pub fn fisher_exact(t: &ContingencyTable, tails: Tails) -> f64 {
    fisher_exact_rational(t, tails).to_f64().unwrap_or(1.0).clamp(0.0, 1.0)
}
