//! Unnormalized complex DFT along one axis of a row-major array.
//!
//! Radix-2 when the length is a power of two, a direct O(n²) sum otherwise.

use num_traits::Zero;

use crate::scalar::{cis, Real, C};

/// `sign = -1` gives `Σ x_n e^{-2πi kn/N}`, `sign = +1` the inverse kernel.
pub(crate) fn dft_inplace<T: Real>(data: &mut [C<T>], sign: i32) {
    let n = data.len();
    if n <= 1 {
        return;
    }
    if n.is_power_of_two() {
        radix2(data, sign);
    } else {
        direct(data, sign);
    }
}

fn direct<T: Real>(data: &mut [C<T>], sign: i32) {
    let n = data.len();
    let base = T::lit(sign as f64) * T::TAU() / T::from_usize_lossy(n);
    let tw: Vec<C<T>> = (0..n).map(|j| cis(base * T::from_usize_lossy(j))).collect();
    let out: Vec<C<T>> = (0..n)
        .map(|k| {
            let mut acc = C::zero();
            for (j, x) in data.iter().enumerate() {
                acc += *x * tw[(j * k) % n];
            }
            acc
        })
        .collect();
    data.copy_from_slice(&out);
}

fn radix2<T: Real>(data: &mut [C<T>], sign: i32) {
    let n = data.len();
    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = i.reverse_bits() >> (usize::BITS - bits);
        if j > i {
            data.swap(i, j);
        }
    }
    let mut len = 2;
    while len <= n {
        let ang = T::lit(sign as f64) * T::TAU() / T::from_usize_lossy(len);
        let half = len / 2;
        let tw: Vec<C<T>> = (0..half).map(|j| cis(ang * T::from_usize_lossy(j))).collect();
        for start in (0..n).step_by(len) {
            for j in 0..half {
                let u = data[start + j];
                let v = data[start + j + half] * tw[j];
                data[start + j] = u + v;
                data[start + j + half] = u - v;
            }
        }
        len <<= 1;
    }
}

/// Applies [`dft_inplace`] along `axis` of a row-major array with `shape`.
pub(crate) fn dft_axis<T: Real>(data: &mut [C<T>], shape: &[usize], axis: usize, sign: i32) {
    let n = shape[axis];
    let inner: usize = shape[axis + 1..].iter().product();
    let outer: usize = shape[..axis].iter().product();
    let mut line = vec![C::zero(); n];
    for o in 0..outer {
        for i in 0..inner {
            let base = o * n * inner + i;
            for (j, slot) in line.iter_mut().enumerate() {
                *slot = data[base + j * inner];
            }
            dft_inplace(&mut line, sign);
            for (j, v) in line.iter().enumerate() {
                data[base + j * inner] = *v;
            }
        }
    }
}
