//! Characteristic functionals, Schwinger functions and moments of a
//! Gaussian field with covariance `D`.

use std::collections::HashMap;

use num_complex::Complex;
use num_traits::{One, Zero};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::LatticeField;
use crate::multiplier::CovarianceOperator;
use crate::scalar::{Real, C};

/// Largest point count accepted by [`pairing_oracle`].
pub const ORACLE_MAX_POINTS: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Method {
    Recursion,
    PairingOracle,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchwingerEvaluation<T: Real> {
    pub points: Vec<usize>,
    pub value: C<T>,
    pub method: Method,
}

/// `S(f) = exp(−½ ⟨f̄, D f⟩)`.
pub fn characteristic<T: Real>(d: &CovarianceOperator<T>, f: &LatticeField<T>) -> Result<C<T>> {
    Ok((d.bilinear(f, f)? * T::lit(-0.5)).exp())
}

fn check_points<T: Real>(d: &CovarianceOperator<T>, points: &[usize]) -> Result<()> {
    let n = d.grid().total_sites();
    match points.iter().find(|&&p| p >= n) {
        Some(&p) => Err(Error::InvalidParameter(format!("site {p} outside grid of {n} sites"))),
        None => Ok(()),
    }
}

/// `S_n(x₁, …, x_n)` from the Gaussian recursion with `S₂(x, y) = D(x − y)`.
pub fn schwinger<T: Real>(d: &CovarianceOperator<T>, points: &[usize]) -> Result<SchwingerEvaluation<T>> {
    check_points(d, points)?;
    Ok(SchwingerEvaluation {
        points: points.to_vec(),
        value: schwinger_with(points, |x, y| d.entry(x, y)),
        method: Method::Recursion,
    })
}

/// Recursion `S_n = Σ_{j ≥ 2} S₂(x₁, x_j) S_{n−2}(…)` for any symmetric
/// two-point function of point labels, memoized on sorted label multisets.
pub fn schwinger_with<T: Real>(points: &[usize], two_point: impl Fn(usize, usize) -> C<T>) -> C<T> {
    if points.len() % 2 == 1 {
        return C::zero();
    }
    let mut key = points.to_vec();
    key.sort_unstable();
    let mut memo = HashMap::new();
    recurse(&key, &two_point, &mut memo)
}

fn recurse<T: Real>(
    pts: &[usize],
    two_point: &impl Fn(usize, usize) -> C<T>,
    memo: &mut HashMap<Vec<usize>, C<T>>,
) -> C<T> {
    if pts.is_empty() {
        return C::one();
    }
    if let Some(v) = memo.get(pts) {
        return *v;
    }
    let first = pts[0];
    let mut acc = C::zero();
    let mut rest = Vec::with_capacity(pts.len() - 2);
    for j in 1..pts.len() {
        rest.clear();
        rest.extend(pts[1..].iter().enumerate().filter(|(i, _)| i + 1 != j).map(|(_, p)| *p));
        acc += two_point(first, pts[j]) * recurse(&rest, two_point, memo);
    }
    memo.insert(pts.to_vec(), acc);
    acc
}

/// Sum over all perfect matchings of `Π D(x_a − x_b)`, enumerated directly.
pub fn pairing_oracle<T: Real>(d: &CovarianceOperator<T>, points: &[usize]) -> Result<SchwingerEvaluation<T>> {
    check_points(d, points)?;
    Ok(SchwingerEvaluation {
        points: points.to_vec(),
        value: pairing_oracle_with(points, |x, y| d.entry(x, y))?,
        method: Method::PairingOracle,
    })
}

/// Matching enumeration by mixed-radix codes: digit `r` picks the partner
/// of the last unmatched point among the `n − 2r − 1` others.
pub fn pairing_oracle_with<T: Real>(points: &[usize], two_point: impl Fn(usize, usize) -> C<T>) -> Result<C<T>> {
    let n = points.len();
    if n > ORACLE_MAX_POINTS {
        return Err(Error::OracleTooLarge {
            n,
            max: ORACLE_MAX_POINTS,
        });
    }
    if n % 2 == 1 {
        return Ok(C::zero());
    }
    let radices: Vec<usize> = (0..n / 2).map(|r| n - 2 * r - 1).collect();
    let count: usize = radices.iter().product();
    let mut total = C::zero();
    let mut remaining = Vec::with_capacity(n);
    for code in 0..count {
        remaining.clear();
        remaining.extend_from_slice(points);
        let mut c = code;
        let mut term = C::one();
        for &radix in &radices {
            let digit = c % radix;
            c /= radix;
            let last = remaining.pop().expect("even count");
            let partner = remaining.remove(digit);
            term *= two_point(last, partner);
        }
        total += term;
    }
    Ok(total)
}

/// `(2k − 1)!!`, with `(−1)!! = 1`.
pub fn double_factorial_odd<T: Real>(k: usize) -> T {
    (1..=k).fold(T::one(), |acc, i| acc * T::from_usize_lossy(2 * i - 1))
}

/// `⟨Φ(f)ⁿ⟩ = (n − 1)!! ⟨f̄, D f⟩^{n/2}` for even `n`, zero for odd `n`.
pub fn moment<T: Real>(d: &CovarianceOperator<T>, f: &LatticeField<T>, n: usize) -> Result<C<T>> {
    let q = d.bilinear(f, f)?;
    Ok(moment_from_pairing(q, n))
}

pub(crate) fn moment_from_pairing<T: Real>(q: C<T>, n: usize) -> C<T> {
    if n % 2 == 1 {
        return C::zero();
    }
    q.powu((n / 2) as u32) * double_factorial_odd::<T>(n / 2)
}

/// Partial sums `Σ_{n ≤ order} iⁿ/n! ⟨Φ(f)ⁿ⟩`, one entry per order.
pub fn characteristic_series<T: Real>(
    d: &CovarianceOperator<T>,
    f: &LatticeField<T>,
    order: usize,
) -> Result<Vec<C<T>>> {
    let q = d.bilinear(f, f)?;
    let mut sums = Vec::with_capacity(order + 1);
    let mut acc = C::<T>::zero();
    let mut ipow = C::<T>::one();
    let mut fact = T::one();
    for n in 0..=order {
        if n > 0 {
            ipow *= Complex::i();
            fact *= T::from_usize_lossy(n);
        }
        acc += ipow * moment_from_pairing(q, n) / fact;
        sums.push(acc);
    }
    Ok(sums)
}

/// `vol^n Σ_{x₁…x_n} f(x₁)…f(x_n) S_n(x₁, …, x_n)` by brute force over the
/// support of `f`. Exponential in `n`; meant for small supports.
pub fn smeared_schwinger<T: Real>(d: &CovarianceOperator<T>, f: &LatticeField<T>, n: usize) -> Result<C<T>> {
    let support: Vec<usize> = (0..f.values().len())
        .filter(|&s| !f.values()[s].is_zero())
        .collect();
    let vol = d.grid().cell_volume();
    if n == 0 {
        return Ok(C::one());
    }
    let m = support.len();
    if m == 0 {
        return Ok(C::zero());
    }
    let mut total = C::<T>::zero();
    let mut idx = vec![0usize; n];
    let mut pts = vec![0usize; n];
    loop {
        let mut w = C::<T>::one();
        for (slot, &i) in idx.iter().enumerate() {
            pts[slot] = support[i];
            w *= f.values()[support[i]];
        }
        total += w * schwinger_with(&pts, |x, y| d.entry(x, y));
        let mut pos = 0;
        loop {
            idx[pos] += 1;
            if idx[pos] < m {
                break;
            }
            idx[pos] = 0;
            pos += 1;
            if pos == n {
                return Ok(total * vol.powi(n as i32));
            }
        }
    }
}
