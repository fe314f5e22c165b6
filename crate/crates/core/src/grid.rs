//! Product lattices with half-offset sites, coordinate reflections,
//! half-space selections, translations and a unitary DFT.
//!
//! Sites are stored row-major with axis 0 (time) slowest. On every axis the
//! coordinates are `x_n = (n + 1/2) a - N a / 2`, so reflection `x -> -x` is
//! the fixed-point-free permutation `n -> N - 1 - n`.

use std::sync::Arc;

use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::dft_axis;
use crate::scalar::{cis, Real, C};

/// Line axes are embedded in a circle this many times longer when kernels
/// are synthesized, so that displacements across the whole window (and well
/// beyond it) are available with negligible wrap-around.
pub const LINE_PADDING: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AxisKind {
    Line,
    Circle,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisSpec<T: Real> {
    pub kind: AxisKind,
    pub sites: usize,
    pub spacing: T,
}

impl<T: Real> AxisSpec<T> {
    /// Truncated line of `sites` points with spacing `spacing`.
    pub fn line(sites: usize, spacing: T) -> Self {
        Self {
            kind: AxisKind::Line,
            sites,
            spacing,
        }
    }

    /// Circle of circumference `length` carrying `sites` points.
    pub fn circle(sites: usize, length: T) -> Self {
        let spacing = if sites == 0 {
            T::zero()
        } else {
            length / T::from_usize_lossy(sites)
        };
        Self {
            kind: AxisKind::Circle,
            sites,
            spacing,
        }
    }

    pub fn extent(&self) -> T {
        self.spacing * T::from_usize_lossy(self.sites)
    }

    /// Circumference for circles.
    pub fn length(&self) -> Option<T> {
        match self.kind {
            AxisKind::Circle => Some(self.extent()),
            AxisKind::Line => None,
        }
    }

    /// Number of points of the periodic embedding used for kernels.
    pub fn embedding_sites(&self) -> usize {
        match self.kind {
            AxisKind::Line => self.sites * LINE_PADDING,
            AxisKind::Circle => self.sites,
        }
    }

    fn validate(&self, axis: usize) -> Result<()> {
        if self.sites == 0 || self.sites % 2 != 0 {
            return Err(Error::OddSites {
                axis,
                sites: self.sites,
            });
        }
        if !(self.spacing > T::zero()) || !self.spacing.is_finite() {
            return Err(Error::NonPositiveSpacing { axis });
        }
        Ok(())
    }
}

/// Signed momentum index in FFT order: `i` for `i < N/2`, `i - N` otherwise.
#[inline]
pub fn signed_mode(i: usize, n: usize) -> isize {
    if i < n / 2 {
        i as isize
    } else {
        i as isize - n as isize
    }
}

/// Momenta `2π m / (N a)` in FFT order for a periodic axis of `n` points.
pub fn fft_momenta<T: Real>(n: usize, spacing: T) -> Vec<T> {
    let extent = spacing * T::from_usize_lossy(n);
    (0..n)
        .map(|i| T::TAU() * T::from_isize_lossy(signed_mode(i, n)) / extent)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HalfSpace {
    Positive,
    Negative,
}

#[derive(Debug)]
struct Inner<T: Real> {
    axes: Vec<AxisSpec<T>>,
    shape: Vec<usize>,
    strides: Vec<usize>,
    total: usize,
    coords: Vec<Vec<T>>,
    momenta: Vec<Vec<T>>,
    reflections: Vec<Vec<usize>>,
}

/// Immutable product lattice; clones share storage.
#[derive(Debug, Clone)]
pub struct SpacetimeGrid<T: Real> {
    inner: Arc<Inner<T>>,
}

impl<T: Real> PartialEq for SpacetimeGrid<T> {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.inner, &other.inner) || self.inner.axes == other.inner.axes
    }
}

impl<T: Real> SpacetimeGrid<T> {
    pub fn new(axes: Vec<AxisSpec<T>>) -> Result<Self> {
        if axes.is_empty() {
            return Err(Error::EmptyGrid);
        }
        for (j, ax) in axes.iter().enumerate() {
            ax.validate(j)?;
        }
        let shape: Vec<usize> = axes.iter().map(|a| a.sites).collect();
        let strides = row_major_strides(&shape);
        let total = shape.iter().product();
        let coords = axes
            .iter()
            .map(|a| {
                let half = a.extent() * T::lit(0.5);
                (0..a.sites)
                    .map(|n| (T::from_usize_lossy(n) + T::lit(0.5)) * a.spacing - half)
                    .collect()
            })
            .collect();
        let momenta = axes.iter().map(|a| fft_momenta(a.sites, a.spacing)).collect();
        let mut inner = Inner {
            axes,
            shape,
            strides,
            total,
            coords,
            momenta,
            reflections: Vec::new(),
        };
        inner.reflections = (0..inner.axes.len())
            .map(|j| {
                (0..total)
                    .map(|s| {
                        let n = (s / inner.strides[j]) % inner.shape[j];
                        let r = inner.shape[j] - 1 - n;
                        s + r * inner.strides[j] - n * inner.strides[j]
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            inner: Arc::new(inner),
        })
    }

    pub fn dim(&self) -> usize {
        self.inner.axes.len()
    }

    pub fn axes(&self) -> &[AxisSpec<T>] {
        &self.inner.axes
    }

    pub fn axis(&self, j: usize) -> Result<&AxisSpec<T>> {
        self.inner.axes.get(j).ok_or(Error::InvalidAxis { axis: j })
    }

    pub fn shape(&self) -> &[usize] {
        &self.inner.shape
    }

    pub fn strides(&self) -> &[usize] {
        &self.inner.strides
    }

    pub fn total_sites(&self) -> usize {
        self.inner.total
    }

    /// Product of the spacings.
    pub fn cell_volume(&self) -> T {
        self.inner.axes.iter().map(|a| a.spacing).fold(T::one(), |p, a| p * a)
    }

    /// Product of the extents.
    pub fn volume(&self) -> T {
        self.inner.axes.iter().map(|a| a.extent()).fold(T::one(), |p, a| p * a)
    }

    pub fn multi_index(&self, site: usize) -> Vec<usize> {
        self.inner
            .shape
            .iter()
            .zip(&self.inner.strides)
            .map(|(&n, &s)| (site / s) % n)
            .collect()
    }

    pub fn site(&self, index: &[usize]) -> usize {
        index.iter().zip(&self.inner.strides).map(|(i, s)| i * s).sum()
    }

    #[inline]
    pub fn axis_index(&self, site: usize, j: usize) -> usize {
        (site / self.inner.strides[j]) % self.inner.shape[j]
    }

    pub fn axis_coords(&self, j: usize) -> &[T] {
        &self.inner.coords[j]
    }

    pub fn axis_momenta(&self, j: usize) -> &[T] {
        &self.inner.momenta[j]
    }

    pub fn coords(&self, site: usize) -> Vec<T> {
        (0..self.dim())
            .map(|j| self.inner.coords[j][self.axis_index(site, j)])
            .collect()
    }

    /// Momentum vector of the dual point with flat index `kindex`.
    pub fn momentum(&self, kindex: usize) -> Vec<T> {
        (0..self.dim())
            .map(|j| self.inner.momenta[j][self.axis_index(kindex, j)])
            .collect()
    }

    /// Flat index of `-k`.
    pub fn negate_momentum(&self, kindex: usize) -> usize {
        self.flip_momentum(kindex, |_| true)
    }

    /// Flat index of `π_j k`: component `j` negated.
    pub fn reflect_momentum(&self, kindex: usize, j: usize) -> usize {
        self.flip_momentum(kindex, |a| a == j)
    }

    fn flip_momentum(&self, kindex: usize, flip: impl Fn(usize) -> bool) -> usize {
        (0..self.dim())
            .map(|a| {
                let n = self.inner.shape[a];
                let i = self.axis_index(kindex, a);
                let i = if flip(a) { (n - i) % n } else { i };
                i * self.inner.strides[a]
            })
            .sum()
    }

    /// Site permutation of the reflection `x_j -> -x_j`.
    pub fn reflect(&self, j: usize) -> Result<&[usize]> {
        self.inner
            .reflections
            .get(j)
            .map(|v| v.as_slice())
            .ok_or(Error::InvalidAxis { axis: j })
    }

    /// Sites with `x_j > 0` (or `< 0`), ascending.
    pub fn halfspace(&self, j: usize, side: HalfSpace) -> Result<Vec<usize>> {
        let n = self.axis(j)?.sites;
        Ok((0..self.inner.total)
            .filter(|&s| {
                let i = self.axis_index(s, j);
                match side {
                    HalfSpace::Positive => i >= n / 2,
                    HalfSpace::Negative => i < n / 2,
                }
            })
            .collect())
    }

    /// Diagonal of the half-space projector.
    pub fn halfspace_mask(&self, j: usize, side: HalfSpace) -> Result<Vec<bool>> {
        let mut mask = vec![false; self.inner.total];
        for s in self.halfspace(j, side)? {
            mask[s] = true;
        }
        Ok(mask)
    }

    /// `(T f)(x) = f(x - n a_j e_j)`.
    pub fn translate(&self, j: usize, steps: isize) -> Result<Translation> {
        let ax = *self.axis(j)?;
        let n = ax.sites as isize;
        let stride = self.inner.strides[j];
        let map = (0..self.inner.total)
            .map(|s| {
                let i = self.axis_index(s, j) as isize;
                let t = i + steps;
                let t = match ax.kind {
                    AxisKind::Circle => t.rem_euclid(n),
                    AxisKind::Line if (0..n).contains(&t) => t,
                    AxisKind::Line => return None,
                };
                Some((s as isize + (t - i) * stride as isize) as usize)
            })
            .collect();
        Ok(Translation {
            axis: j,
            steps,
            unitary: ax.kind == AxisKind::Circle || steps == 0,
            map,
        })
    }

    /// Unitary DFT `f̃(k) = N^{-1/2} Σ_x f(x) e^{-ik·x}`.
    pub fn dft(&self, field: &LatticeField<T>) -> Result<LatticeField<T>> {
        self.check_field(field)?;
        let mut data = field.values.clone();
        self.transform(&mut data, -1);
        Ok(LatticeField {
            grid: self.clone(),
            values: data,
        })
    }

    /// Inverse of [`Self::dft`].
    pub fn idft(&self, field: &LatticeField<T>) -> Result<LatticeField<T>> {
        self.check_field(field)?;
        let mut data = field.values.clone();
        self.transform(&mut data, 1);
        Ok(LatticeField {
            grid: self.clone(),
            values: data,
        })
    }

    fn transform(&self, data: &mut [C<T>], sign: i32) {
        let sgn = T::lit(sign as f64);
        for j in 0..self.dim() {
            let ax = self.inner.axes[j];
            let offset = ax.spacing * T::lit(0.5) - ax.extent() * T::lit(0.5);
            let norm = T::one() / T::from_usize_lossy(ax.sites).sqrt();
            let phases: Vec<C<T>> = self.inner.momenta[j]
                .iter()
                .map(|&k| cis(sgn * k * offset) * norm)
                .collect();
            if sign > 0 {
                self.scale_axis(data, j, &phases);
                dft_axis(data, &self.inner.shape, j, sign);
            } else {
                dft_axis(data, &self.inner.shape, j, sign);
                self.scale_axis(data, j, &phases);
            }
        }
    }

    fn scale_axis(&self, data: &mut [C<T>], j: usize, factors: &[C<T>]) {
        for (s, v) in data.iter_mut().enumerate() {
            *v = *v * factors[self.axis_index(s, j)];
        }
    }

    fn check_field(&self, field: &LatticeField<T>) -> Result<()> {
        if field.grid != *self {
            return Err(Error::GridMismatch("field lives on a different grid".into()));
        }
        Ok(())
    }
}

pub(crate) fn row_major_strides(shape: &[usize]) -> Vec<usize> {
    let mut strides = vec![1; shape.len()];
    for j in (0..shape.len().saturating_sub(1)).rev() {
        strides[j] = strides[j + 1] * shape[j + 1];
    }
    strides
}

/// Site map of a translation; `None` marks sites shifted off a Line window.
#[derive(Debug, Clone)]
pub struct Translation {
    pub axis: usize,
    pub steps: isize,
    pub unitary: bool,
    map: Vec<Option<usize>>,
}

impl Translation {
    /// Destination of the value at `site`.
    pub fn target(&self, site: usize) -> Option<usize> {
        self.map[site]
    }

    pub fn apply<T: Real>(&self, f: &LatticeField<T>) -> LatticeField<T> {
        let mut out = vec![C::zero(); f.values.len()];
        for (s, dst) in self.map.iter().enumerate() {
            if let Some(d) = dst {
                out[*d] = f.values[s];
            }
        }
        LatticeField {
            grid: f.grid.clone(),
            values: out,
        }
    }
}

/// Complex values attached to every site of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeField<T: Real> {
    grid: SpacetimeGrid<T>,
    values: Vec<C<T>>,
}

impl<T: Real> LatticeField<T> {
    pub fn new(grid: &SpacetimeGrid<T>, values: Vec<C<T>>) -> Result<Self> {
        if values.len() != grid.total_sites() {
            return Err(Error::LengthMismatch {
                expected: grid.total_sites(),
                found: values.len(),
            });
        }
        Ok(Self {
            grid: grid.clone(),
            values,
        })
    }

    pub fn zeros(grid: &SpacetimeGrid<T>) -> Self {
        Self {
            grid: grid.clone(),
            values: vec![C::zero(); grid.total_sites()],
        }
    }

    /// Samples `f` at the site coordinates.
    pub fn from_fn(grid: &SpacetimeGrid<T>, mut f: impl FnMut(&[T]) -> C<T>) -> Self {
        let values = (0..grid.total_sites()).map(|s| f(&grid.coords(s))).collect();
        Self {
            grid: grid.clone(),
            values,
        }
    }

    pub fn grid(&self) -> &SpacetimeGrid<T> {
        &self.grid
    }

    pub fn values(&self) -> &[C<T>] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [C<T>] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<C<T>> {
        self.values
    }

    /// Plain Euclidean norm of the value vector.
    pub fn norm(&self) -> T {
        self.values.iter().map(|z| z.norm_sqr()).sum::<T>().sqrt()
    }

    pub fn conj(&self) -> Self {
        Self {
            grid: self.grid.clone(),
            values: self.values.iter().map(|z| z.conj()).collect(),
        }
    }

    /// `(π_j f)(x) = f(π_j x)`.
    pub fn reflect(&self, j: usize) -> Result<Self> {
        let perm = self.grid.reflect(j)?;
        Ok(Self {
            grid: self.grid.clone(),
            values: perm.iter().map(|&p| self.values[p]).collect(),
        })
    }

    pub fn scale(&self, c: C<T>) -> Self {
        Self {
            grid: self.grid.clone(),
            values: self.values.iter().map(|z| *z * c).collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch("fields live on different grids".into()));
        }
        Ok(Self {
            grid: self.grid.clone(),
            values: self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect(),
        })
    }

    /// First site where the field is nonzero outside `allowed`.
    pub fn first_outside(&self, allowed: &[bool]) -> Option<usize> {
        self.values
            .iter()
            .zip(allowed)
            .position(|(v, ok)| !ok && !v.is_zero())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid2() -> SpacetimeGrid<f64> {
        SpacetimeGrid::new(vec![AxisSpec::line(6, 0.5), AxisSpec::circle(8, 4.0)]).unwrap()
    }

    #[test]
    fn half_offset_coordinates() {
        let g = SpacetimeGrid::new(vec![AxisSpec::line(4, 0.5)]).unwrap();
        assert_eq!(g.axis_coords(0), &[-0.75, -0.25, 0.25, 0.75]);
        let c = SpacetimeGrid::new(vec![AxisSpec::circle(8, std::f64::consts::TAU)]).unwrap();
        assert!((c.axes()[0].spacing - std::f64::consts::FRAC_PI_4).abs() < 1e-15);
        assert!((c.axis_coords(0)[0] + 7.0 * std::f64::consts::PI / 8.0).abs() < 1e-14);
    }

    #[test]
    fn rejects_bad_axes() {
        assert_eq!(
            SpacetimeGrid::new(vec![AxisSpec::line(5, 1.0)]).unwrap_err(),
            Error::OddSites { axis: 0, sites: 5 }
        );
        assert_eq!(
            SpacetimeGrid::new(vec![AxisSpec::line(4, 1.0), AxisSpec::line(4, 0.0)]).unwrap_err(),
            Error::NonPositiveSpacing { axis: 1 }
        );
        assert_eq!(SpacetimeGrid::<f64>::new(vec![]).unwrap_err(), Error::EmptyGrid);
    }

    #[test]
    fn reflection_pairs_sites() {
        let g = SpacetimeGrid::new(vec![AxisSpec::line(4, 0.5)]).unwrap();
        assert_eq!(g.reflect(0).unwrap(), &[3, 2, 1, 0]);
        let c = SpacetimeGrid::new(vec![AxisSpec::circle(8, 8.0)]).unwrap();
        let r = c.reflect(0).unwrap();
        assert_eq!(c.axis_coords(0)[7], 3.5);
        assert_eq!(c.axis_coords(0)[r[7]], -3.5);
        let g = grid2();
        for j in 0..2 {
            let r = g.reflect(j).unwrap();
            for s in 0..g.total_sites() {
                assert_ne!(r[s], s);
                assert_eq!(r[r[s]], s);
                assert!((g.coords(r[s])[j] + g.coords(s)[j]).abs() < 1e-14);
            }
        }
        let (r0, r1) = (g.reflect(0).unwrap(), g.reflect(1).unwrap());
        for s in 0..g.total_sites() {
            assert_eq!(r0[r1[s]], r1[r0[s]]);
        }
        assert!(g.reflect(2).is_err());
    }

    #[test]
    fn halfspaces_split_evenly() {
        let g = grid2();
        for j in 0..2 {
            let p = g.halfspace_mask(j, HalfSpace::Positive).unwrap();
            let m = g.halfspace_mask(j, HalfSpace::Negative).unwrap();
            assert_eq!(p.iter().filter(|&&b| b).count(), g.total_sites() / 2);
            let r = g.reflect(j).unwrap();
            for s in 0..g.total_sites() {
                assert!(p[s] ^ m[s]);
                assert_eq!(p[s], g.coords(s)[j] > 0.0);
                assert_eq!(p[r[s]], m[s]);
            }
        }
    }

    #[test]
    fn translations() {
        let c = SpacetimeGrid::new(vec![AxisSpec::circle(8, 8.0)]).unwrap();
        let t = c.translate(0, 8).unwrap();
        assert!(t.unitary);
        for s in 0..8 {
            assert_eq!(t.target(s), Some(s));
        }
        let g = grid2();
        let f = LatticeField::from_fn(&g, |x| Complex64::new(x[0] + 3.0 * x[1], x[1]));
        let back = g.translate(0, -1).unwrap().apply(&g.translate(0, 1).unwrap().apply(&f));
        assert!(!g.translate(0, 1).unwrap().unitary);
        for s in 0..g.total_sites() {
            let i = g.axis_index(s, 0);
            if i + 1 < 6 {
                assert_eq!(back.values()[s], f.values()[s]);
            } else {
                assert_eq!(back.values()[s], Complex64::new(0.0, 0.0));
            }
        }
        let a = g.translate(1, 3).unwrap().apply(&f.reflect(0).unwrap());
        let b = g.translate(1, 3).unwrap().apply(&f).reflect(0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn dft_is_unitary_and_inverts() {
        let g = grid2();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let vals = (0..g.total_sites())
                .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                .collect();
            let f = LatticeField::new(&g, vals).unwrap();
            let ft = g.dft(&f).unwrap();
            assert!((ft.norm() - f.norm()).abs() <= 1e-12 * f.norm());
            let back = g.idft(&ft).unwrap();
            let err = back.sub(&f).unwrap().norm();
            assert!(err <= 1e-12 * f.norm());
        }
    }

    #[test]
    fn dft_of_constant_and_even_fields() {
        let g = grid2();
        let ones = LatticeField::from_fn(&g, |_| Complex64::new(1.0, 0.0));
        let ft = g.dft(&ones).unwrap();
        let n = g.total_sites() as f64;
        assert!((ft.values()[0].re - n.sqrt()).abs() < 1e-12);
        assert!(ft.values()[1..].iter().all(|z| z.norm() < 1e-12));
        let even = LatticeField::from_fn(&g, |x| Complex64::new((x[0] * x[0] + x[1].cos()).exp(), 0.0));
        assert!(g.dft(&even).unwrap().values().iter().all(|z| z.im.abs() < 1e-12 * even.norm()));
    }

    #[test]
    fn momentum_negation() {
        let g = grid2();
        for k in 0..g.total_sites() {
            let nk = g.negate_momentum(k);
            assert_eq!(g.negate_momentum(nk), k);
            let (p, q) = (g.momentum(k), g.momentum(nk));
            for j in 0..2 {
                let nyq = g.axis_index(k, j) == g.shape()[j] / 2;
                assert!(nyq || (p[j] + q[j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn field_length_checked() {
        let g = grid2();
        assert!(matches!(
            LatticeField::new(&g, vec![Complex64::new(0.0, 0.0); 3]),
            Err(Error::LengthMismatch { expected: 48, found: 3 })
        ));
    }
}
