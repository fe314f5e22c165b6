//! Translation-invariant covariances given by their Fourier symbol
//! `D̃(k) = K̃(k) + i L̃(k)`.
//!
//! Two samplings of a symbol are kept apart:
//!
//! * `values` are the raw symbol on the grid's own momenta. Flags, bounds,
//!   square roots and diagnostics read these.
//! * kernels are synthesized on the periodic embedding (Line axes padded by
//!   [`LINE_PADDING`](crate::grid::LINE_PADDING)). For the built-in continuum
//!   families the symbol is first summed over the aliases `k₀ + 2πn/a₀` of
//!   the time axis, in closed form where one exists, so that the time
//!   dependence of the kernel is the continuum kernel sampled at lattice
//!   times rather than a band-limited approximation of it.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex;
use num_traits::{One, Zero};

use crate::error::{Error, Result};
use crate::fft::dft_axis;
use crate::grid::{fft_momenta, row_major_strides, AxisKind, LatticeField, SpacetimeGrid};
use crate::linalg::CMatrix;
use crate::scalar::{cr, Real, C};

pub type RealFn<T> = Arc<dyn Fn(&[T]) -> T + Send + Sync>;
pub type ComplexFn<T> = Arc<dyn Fn(&[T]) -> C<T> + Send + Sync>;

/// A real function of momentum, either closed-form or tabulated per grid
/// momentum index.
#[derive(Clone)]
pub enum Profile<T: Real> {
    Closure(RealFn<T>),
    Table(Vec<T>),
}

impl<T: Real> Profile<T> {
    pub fn closure(f: impl Fn(&[T]) -> T + Send + Sync + 'static) -> Self {
        Profile::Closure(Arc::new(f))
    }

    pub fn zero() -> Self {
        Profile::closure(|_| T::zero())
    }
}

impl<T: Real> fmt::Debug for Profile<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Profile::Closure(_) => f.write_str("Closure(..)"),
            Profile::Table(t) => write!(f, "Table(len={})", t.len()),
        }
    }
}

#[derive(Clone)]
pub enum MultiplierSpec<T: Real> {
    /// `(k² + m²)^{-1}`.
    FreeField { mass: T },
    /// `(Σ k̂_j² + m²)^{-1}` with `k̂_j = (2/a_j) sin(k_j a_j / 2)`.
    LatticeFreeField { mass: T },
    /// `(k² + m²)^{-p}`.
    PowerCovariance { mass: T, power: T },
    /// Free field seen from a frame moving with imaginary-time velocity `v`
    /// along axis 1: `(2μ)^{-1} [ (E₊ + i k₀)^{-1} + (E₋ − i k₀)^{-1} ]`
    /// with `μ² = k̄² + m²` and `E± = μ ± v k₁`. Complex, symmetric and
    /// time-reflection covariant for `|v| < 1`.
    BoostedFreeField { mass: T, velocity: T },
    Explicit { k_tilde: Profile<T>, l_tilde: Profile<T> },
    Symbol(ComplexFn<T>),
}

impl<T: Real> fmt::Debug for MultiplierSpec<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::FreeField { mass } => write!(f, "FreeField {{ mass: {mass} }}"),
            Self::LatticeFreeField { mass } => write!(f, "LatticeFreeField {{ mass: {mass} }}"),
            Self::PowerCovariance { mass, power } => {
                write!(f, "PowerCovariance {{ mass: {mass}, power: {power} }}")
            }
            Self::BoostedFreeField { mass, velocity } => {
                write!(f, "BoostedFreeField {{ mass: {mass}, velocity: {velocity} }}")
            }
            Self::Explicit { k_tilde, l_tilde } => {
                write!(f, "Explicit {{ k_tilde: {k_tilde:?}, l_tilde: {l_tilde:?} }}")
            }
            Self::Symbol(_) => f.write_str("Symbol(..)"),
        }
    }
}

impl<T: Real> MultiplierSpec<T> {
    pub fn symbol(f: impl Fn(&[T]) -> C<T> + Send + Sync + 'static) -> Self {
        Self::Symbol(Arc::new(f))
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::FreeField { .. } => "FreeField",
            Self::LatticeFreeField { .. } => "LatticeFreeField",
            Self::PowerCovariance { .. } => "PowerCovariance",
            Self::BoostedFreeField { .. } => "BoostedFreeField",
            Self::Explicit { .. } => "Explicit",
            Self::Symbol(_) => "Symbol",
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |s: &str| Err(Error::InvalidParameter(s.to_string()));
        match *self {
            Self::FreeField { mass } | Self::LatticeFreeField { mass } if !(mass > T::zero()) => {
                bad("mass must be positive")
            }
            Self::PowerCovariance { mass, power } if !(mass > T::zero()) || !(power > T::zero()) => {
                bad("mass and power must be positive")
            }
            Self::BoostedFreeField { mass, velocity }
                if !(mass > T::zero()) || !(velocity.abs() < T::one()) =>
            {
                bad("boosted field needs mass > 0 and |velocity| < 1")
            }
            _ => Ok(()),
        }
    }

    fn has_table(&self) -> bool {
        matches!(
            self,
            Self::Explicit { k_tilde: Profile::Table(_), .. } | Self::Explicit { l_tilde: Profile::Table(_), .. }
        )
    }

    /// Raw symbol at momentum `k`; `index` addresses tables.
    fn raw(&self, k: &[T], spacings: &[T], index: usize) -> C<T> {
        match self {
            Self::FreeField { mass } => cr(T::one() / (norm_sq(k) + *mass * *mass)),
            Self::LatticeFreeField { mass } => {
                let s: T = k
                    .iter()
                    .zip(spacings)
                    .map(|(&kj, &a)| {
                        let h = (T::lit(2.0) / a) * (kj * a * T::lit(0.5)).sin();
                        h * h
                    })
                    .sum();
                cr(T::one() / (s + *mass * *mass))
            }
            Self::PowerCovariance { mass, power } => cr((norm_sq(k) + *mass * *mass).powf(-*power)),
            Self::BoostedFreeField { mass, velocity } => {
                let (mu, ep, em) = boost_energies(k, *mass, *velocity);
                let i = Complex::i();
                let k0 = k[0];
                (C::<T>::one() / (cr(ep) + i * k0) + C::<T>::one() / (cr(em) - i * k0)) / (mu + mu)
            }
            Self::Explicit { k_tilde, l_tilde } => {
                Complex::new(eval_profile(k_tilde, k, index), eval_profile(l_tilde, k, index))
            }
            Self::Symbol(f) => f(k),
        }
    }

    /// Symbol summed over the time-axis aliases `k₀ + 2πn/a₀`.
    fn folded(&self, k: &[T], spacings: &[T], index: usize) -> C<T> {
        let a = spacings[0];
        match self {
            Self::FreeField { mass } => {
                let mu = (norm_sq(&k[1..]) + *mass * *mass).sqrt();
                cr(fold_pole(k[0], mu, a))
            }
            Self::PowerCovariance { mass, power } => {
                let mu = (norm_sq(&k[1..]) + *mass * *mass).sqrt();
                if *power == T::one() {
                    cr(fold_pole(k[0], mu, a))
                } else if *power == T::lit(2.0) {
                    cr(fold_double_pole(k[0], mu, a))
                } else if *power > T::lit(0.5) {
                    cr(fold_power(k[0], mu, a, *power))
                } else {
                    self.raw(k, spacings, index)
                }
            }
            Self::BoostedFreeField { mass, velocity } => {
                let (mu, ep, em) = boost_energies(k, *mass, *velocity);
                let half_a = a * T::lit(0.5);
                let i = Complex::i();
                let zp = (cr(ep) + i * k[0]) * half_a;
                let zm = (cr(em) - i * k[0]) * half_a;
                (coth(zp) + coth(zm)) * (a / (T::lit(4.0) * mu))
            }
            _ => self.raw(k, spacings, index),
        }
    }
}

fn norm_sq<T: Real>(k: &[T]) -> T {
    k.iter().map(|&x| x * x).sum()
}

fn boost_energies<T: Real>(k: &[T], mass: T, v: T) -> (T, T, T) {
    let mu = (norm_sq(&k[1..]) + mass * mass).sqrt();
    let k1 = k.get(1).copied().unwrap_or_else(T::zero);
    (mu, mu + v * k1, mu - v * k1)
}

fn eval_profile<T: Real>(p: &Profile<T>, k: &[T], index: usize) -> T {
    match p {
        Profile::Closure(f) => f(k),
        Profile::Table(t) => t[index],
    }
}

fn coth<T: Real>(z: C<T>) -> C<T> {
    // Re z > 0 here, so e^{-2z} is bounded.
    let e = (-(z + z)).exp();
    (C::<T>::one() + e) / (C::<T>::one() - e)
}

/// `Σ_n ((k + 2πn/a)² + μ²)^{-1} = (a / 2μ) sinh(μa) / (cosh(μa) − cos(ka))`.
fn fold_pole<T: Real>(k: T, mu: T, a: T) -> T {
    let q = (-mu * a).exp();
    let c = (k * a).cos();
    a / (mu + mu) * pole_ratio(q, c)
}

fn pole_ratio<T: Real>(q: T, c: T) -> T {
    (T::one() - q * q) / (T::one() - (q + q) * c + q * q)
}

/// `Σ_n ((k + 2πn/a)² + μ²)^{-2}`, the `-∂/∂μ²` derivative of [`fold_pole`].
fn fold_double_pole<T: Real>(k: T, mu: T, a: T) -> T {
    let q = (-mu * a).exp();
    let c = (k * a).cos();
    let den = T::one() - (q + q) * c + q * q;
    let s = (T::one() - q * q) / den;
    let ds = (-(q + q) * den - (T::one() - q * q) * ((q + q) - (c + c))) / (den * den);
    a / (T::lit(4.0) * mu * mu * mu) * (s + mu * a * q * ds)
}

/// Direct alias sum with an integral tail estimate, for general `p > 1/2`.
fn fold_power<T: Real>(k: T, mu: T, a: T, p: T) -> T {
    const R: i64 = 2000;
    let step = T::TAU() / a;
    let mu2 = mu * mu;
    let mut s = T::zero();
    for n in -R..=R {
        let kn = k + T::lit(n as f64) * step;
        s += (kn * kn + mu2).powf(-p);
    }
    let two_p = p + p;
    let tail = (T::lit(2.0) / step) * (T::lit(R as f64 + 0.5) * step).powf(T::one() - two_p)
        / (two_p - T::one());
    s + tail
}

/// Symmetry flags of a sampled symbol.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MultiplierFlags {
    /// `D̃(k) = D̃(−k)`.
    pub symmetric: bool,
    /// `D̃(−k) = conj D̃(k)`.
    pub real_kernel: bool,
    /// `D̃(k)` real.
    pub hermitian: bool,
    pub symmetry_defect: f64,
}

const FLAG_TOL: f64 = 1e-12;

/// A symbol sampled on a grid's momenta.
#[derive(Debug, Clone)]
pub struct FourierMultiplier<T: Real> {
    grid: SpacetimeGrid<T>,
    values: Vec<C<T>>,
    flags: MultiplierFlags,
    spec: Option<MultiplierSpec<T>>,
}

/// Samples `f` at a momentum; components on Nyquist modes are averaged over
/// both signs so that `k -> -k` maps the sample set onto itself.
fn sample_symmetrized<T: Real>(
    k: &mut [T],
    nyquist: &[usize],
    f: &mut impl FnMut(&[T]) -> C<T>,
) -> C<T> {
    if nyquist.is_empty() {
        return f(k);
    }
    let combos = 1usize << nyquist.len();
    let base: Vec<T> = k.to_vec();
    let mut acc = C::zero();
    for mask in 0..combos {
        for (b, &ax) in nyquist.iter().enumerate() {
            k[ax] = if mask >> b & 1 == 1 { -base[ax] } else { base[ax] };
        }
        acc += f(k);
    }
    k.copy_from_slice(&base);
    acc / T::from_usize_lossy(combos)
}

/// Evaluates `f(k, flat_index)` on the FFT momenta of `shape` with `spacings`.
fn sample_on<T: Real>(
    shape: &[usize],
    spacings: &[T],
    mut f: impl FnMut(&[T], usize) -> C<T>,
) -> Vec<C<T>> {
    let momenta: Vec<Vec<T>> = shape
        .iter()
        .zip(spacings)
        .map(|(&n, &a)| fft_momenta(n, a))
        .collect();
    let strides = row_major_strides(shape);
    let total: usize = shape.iter().product();
    let d = shape.len();
    let mut k = vec![T::zero(); d];
    let mut nyq = Vec::with_capacity(d);
    (0..total)
        .map(|idx| {
            nyq.clear();
            for j in 0..d {
                let i = (idx / strides[j]) % shape[j];
                k[j] = momenta[j][i];
                if i == shape[j] / 2 {
                    nyq.push(j);
                }
            }
            sample_symmetrized(&mut k, &nyq, &mut |kk| f(kk, idx))
        })
        .collect()
}

impl<T: Real> FourierMultiplier<T> {
    /// Samples a spec on the grid momenta; `K̃` must be strictly positive.
    pub fn sample(spec: MultiplierSpec<T>, grid: &SpacetimeGrid<T>) -> Result<Self> {
        spec.validate()?;
        let n = grid.total_sites();
        if let MultiplierSpec::Explicit { k_tilde, l_tilde } = &spec {
            for p in [k_tilde, l_tilde] {
                if let Profile::Table(t) = p {
                    if t.len() != n {
                        return Err(Error::LengthMismatch {
                            expected: n,
                            found: t.len(),
                        });
                    }
                }
            }
        }
        let spacings: Vec<T> = grid.axes().iter().map(|a| a.spacing).collect();
        let values = if spec.has_table() {
            (0..n).map(|i| spec.raw(&grid.momentum(i), &spacings, i)).collect()
        } else {
            sample_on(grid.shape(), &spacings, |k, i| spec.raw(k, &spacings, i))
        };
        let m = Self::from_values(grid, values)?;
        m.check_positive()?;
        Ok(Self {
            spec: Some(spec),
            ..m
        })
    }

    /// Wraps precomputed symbol values; no positivity requirement.
    pub fn from_values(grid: &SpacetimeGrid<T>, values: Vec<C<T>>) -> Result<Self> {
        if values.len() != grid.total_sites() {
            return Err(Error::LengthMismatch {
                expected: grid.total_sites(),
                found: values.len(),
            });
        }
        let flags = compute_flags(grid, &values);
        Ok(Self {
            grid: grid.clone(),
            values,
            flags,
            spec: None,
        })
    }

    /// Fails at the first momentum where `K̃ ≤ 0`.
    pub fn check_positive(&self) -> Result<()> {
        match self.values.iter().position(|z| !(z.re > T::zero())) {
            Some(index) => Err(Error::HermitianPartNotPositive { index }),
            None => Ok(()),
        }
    }

    pub fn grid(&self) -> &SpacetimeGrid<T> {
        &self.grid
    }

    pub fn values(&self) -> &[C<T>] {
        &self.values
    }

    pub fn flags(&self) -> MultiplierFlags {
        self.flags
    }

    pub fn spec(&self) -> Option<&MultiplierSpec<T>> {
        self.spec.as_ref()
    }

    pub fn k_tilde(&self) -> Vec<T> {
        self.values.iter().map(|z| z.re).collect()
    }

    pub fn l_tilde(&self) -> Vec<T> {
        self.values.iter().map(|z| z.im).collect()
    }

    /// Multiplier with values `D̃(−k)`, the symbol of the transpose.
    pub fn reversed(&self) -> Self {
        let values = (0..self.values.len())
            .map(|k| self.values[self.grid.negate_momentum(k)])
            .collect();
        Self::from_values(&self.grid, values).expect("same grid")
    }

    /// Multiplier with values `conj D̃(k)`, the symbol of the adjoint.
    pub fn conjugated(&self) -> Self {
        let values = self.values.iter().map(|z| z.conj()).collect();
        Self::from_values(&self.grid, values).expect("same grid")
    }

    /// Pointwise product `self(k) · other(k)`.
    pub fn product(&self, other: &Self) -> Result<Self> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch("multipliers on different grids".into()));
        }
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a * b).collect();
        Self::from_values(&self.grid, values)
    }

    /// Kernel of a symmetric multiplier.
    pub fn kernel(&self) -> Result<CovarianceOperator<T>> {
        if !self.flags.symmetric {
            return Err(Error::NotACovariance {
                defect: self.flags.symmetry_defect,
            });
        }
        self.operator()
    }

    /// Kernel without the symmetry requirement (used for the `+−` block of
    /// charged fields).
    pub fn operator(&self) -> Result<CovarianceOperator<T>> {
        let grid = &self.grid;
        let shape: Vec<usize> = grid.axes().iter().map(|a| a.embedding_sites()).collect();
        let spacings: Vec<T> = grid.axes().iter().map(|a| a.spacing).collect();
        let padded = grid.axes().iter().any(|a| a.kind == AxisKind::Line);
        let symbol = match &self.spec {
            Some(spec) if !spec.has_table() => {
                sample_on(&shape, &spacings, |k, i| spec.folded(k, &spacings, i))
            }
            _ if padded => {
                return Err(Error::GridMismatch(
                    "tabulated symbols cannot be synthesized on Line axes".into(),
                ))
            }
            _ => self.values.clone(),
        };
        let label = self
            .spec
            .as_ref()
            .map(|s| format!("{s:?}"))
            .unwrap_or_else(|| "tabulated".to_string());
        CovarianceOperator::from_symbol(grid, shape, symbol, label)
    }

    /// Field symbol `σ̃ = K̃^{1/2} (1 + i L̃/K̃)^{1/2}`, principal root, so
    /// that `σ̃² = D̃` and `Re σ̃ > 0`.
    pub fn sigma(&self) -> Result<Self> {
        self.check_positive()?;
        let values = self
            .values
            .iter()
            .map(|z| {
                let ratio = Complex::new(T::one(), z.im / z.re);
                ratio.sqrt() * z.re.sqrt()
            })
            .collect();
        Self::from_values(&self.grid, values)
    }

    /// `max_k |conj σ̃(−π_j k) − σ̃(k)|`, where `−π_j k` flips every component
    /// except the `j`-th.
    pub fn reflection_covariance_defect(&self, j: usize) -> Result<T> {
        self.grid.axis(j)?;
        Ok((0..self.values.len())
            .map(|k| {
                let partner = self.grid.reflect_momentum(self.grid.negate_momentum(k), j);
                (self.values[partner].conj() - self.values[k]).norm()
            })
            .fold(T::zero(), T::max))
    }

    /// Pointwise constants comparing `D` with `C = (−Δ + m²)^{-1}`.
    pub fn estimate_bounds(&self, m_ref: T) -> Result<BoundEstimates<T>> {
        let m2 = m_ref * m_ref;
        let mut m1 = T::infinity();
        let mut mx = T::zero();
        let mut m3 = T::zero();
        for (i, z) in self.values.iter().enumerate() {
            let k2 = norm_sq(&self.grid.momentum(i));
            if !(z.re > T::zero()) {
                return Err(Error::BoundsFailed {
                    index: i,
                    reason: "hermitian part not positive".into(),
                });
            }
            let r = z.re * (k2 + m2);
            let l = (z.im / z.re).abs();
            if !r.is_finite() || !l.is_finite() {
                return Err(Error::BoundsFailed {
                    index: i,
                    reason: "unbounded ratio".into(),
                });
            }
            m1 = m1.min(r);
            mx = mx.max(r);
            m3 = m3.max(l);
        }
        let factor = (T::one() + m3 * m3).sqrt() * mx;
        let mut worst = T::zero();
        for (i, z) in self.values.iter().enumerate() {
            let c = T::one() / (norm_sq(&self.grid.momentum(i)) + m2);
            let ratio = z.norm() / (factor * c);
            worst = worst.max(ratio);
            if ratio > T::one() + T::lit(1e3) * T::epsilon() {
                return Err(Error::BoundsFailed {
                    index: i,
                    reason: format!("|D| exceeds bound by ratio {ratio}"),
                });
            }
        }
        Ok(BoundEstimates {
            m1,
            m2: mx,
            m3,
            m_ref,
            max_abs_ratio: worst,
        })
    }

    /// Compares `⟨δ⊗h, |D| δ⊗h⟩` with `(1 + M₃²)^{1/2} M₂ ‖h‖²` in the
    /// `(2μ)^{-1}` norm, `μ = (k̄² + m_ref²)^{1/2}`.
    pub fn time_zero_norm(&self, h: &LatticeField<T>, m_ref: T) -> Result<TimeZeroNorm<T>> {
        if self.grid.dim() < 2 {
            return Err(Error::NoSpatialAxis);
        }
        let spatial = SpacetimeGrid::new(self.grid.axes()[1..].to_vec())?;
        if *h.grid() != spatial {
            return Err(Error::GridMismatch("h must live on the spatial sub-grid".into()));
        }
        let bounds = self.estimate_bounds(m_ref)?;
        let ht = spatial.dft(h)?;
        let n0 = self.grid.shape()[0];
        let l0 = self.grid.axes()[0].extent();
        let nbar = spatial.total_sites();
        let mut lhs = T::zero();
        let mut norm = T::zero();
        for kb in 0..nbar {
            let w = ht.values()[kb].norm_sqr();
            let s: T = (0..n0).map(|k0| self.values[k0 * nbar + kb].norm()).sum();
            lhs += w * s / l0;
            let mu = (norm_sq(&spatial.momentum(kb)) + m_ref * m_ref).sqrt();
            norm += w / (mu + mu);
        }
        let rhs = (T::one() + bounds.m3 * bounds.m3).sqrt() * bounds.m2 * norm;
        Ok(TimeZeroNorm {
            lhs,
            rhs,
            h_norm_sq: norm,
        })
    }
}

fn compute_flags<T: Real>(grid: &SpacetimeGrid<T>, values: &[C<T>]) -> MultiplierFlags {
    let scale = values.iter().map(|z| z.norm()).fold(T::zero(), T::max);
    let tol = T::lit(FLAG_TOL) * scale.max(T::min_positive_value());
    let mut sym = T::zero();
    let mut real = T::zero();
    let mut herm = T::zero();
    for (k, z) in values.iter().enumerate() {
        let w = values[grid.negate_momentum(k)];
        sym = sym.max((w - z).norm());
        real = real.max((w - z.conj()).norm());
        herm = herm.max(z.im.abs());
    }
    MultiplierFlags {
        symmetric: sym <= tol,
        real_kernel: real <= tol,
        hermitian: herm <= tol,
        symmetry_defect: (sym / scale.max(T::min_positive_value())).as_f64(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundEstimates<T: Real> {
    pub m1: T,
    pub m2: T,
    pub m3: T,
    pub m_ref: T,
    /// `max_k |D̃(k)| / ((1 + M₃²)^{1/2} M₂ C̃(k))`, at most one.
    pub max_abs_ratio: T,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeZeroNorm<T: Real> {
    pub lhs: T,
    pub rhs: T,
    pub h_norm_sq: T,
}

impl<T: Real> TimeZeroNorm<T> {
    pub fn ratio(&self) -> T {
        if self.rhs == T::zero() {
            T::zero()
        } else {
            self.lhs / self.rhs
        }
    }
}

/// Translation-invariant kernel `D(x − x′)` on a grid.
///
/// The kernel is stored for every displacement of the periodic embedding,
/// so entries are available for the whole window and, on Line axes, well
/// beyond it. Operator action and quadratic forms carry the cell volume.
#[derive(Debug, Clone)]
pub struct CovarianceOperator<T: Real> {
    grid: SpacetimeGrid<T>,
    embed: Vec<usize>,
    estrides: Vec<usize>,
    kernel: Vec<C<T>>,
    label: String,
}

impl<T: Real> CovarianceOperator<T> {
    fn from_symbol(
        grid: &SpacetimeGrid<T>,
        shape: Vec<usize>,
        mut symbol: Vec<C<T>>,
        label: String,
    ) -> Result<Self> {
        for j in 0..shape.len() {
            dft_axis(&mut symbol, &shape, j, 1);
        }
        let vol: T = grid
            .axes()
            .iter()
            .zip(&shape)
            .map(|(a, &e)| a.spacing * T::from_usize_lossy(e))
            .fold(T::one(), |p, x| p * x);
        let inv = T::one() / vol;
        for v in symbol.iter_mut() {
            *v = *v * inv;
        }
        Self::from_kernel(grid, shape, symbol, label)
    }

    /// Wraps kernel values indexed by displacement on a periodic embedding
    /// of shape `embed` (row-major, displacement `d_j` stored at `d_j mod E_j`).
    pub fn from_kernel(
        grid: &SpacetimeGrid<T>,
        embed: Vec<usize>,
        kernel: Vec<C<T>>,
        label: impl Into<String>,
    ) -> Result<Self> {
        if embed.len() != grid.dim() {
            return Err(Error::GridMismatch("embedding rank differs from grid".into()));
        }
        for (j, (&e, ax)) in embed.iter().zip(grid.axes()).enumerate() {
            let ok = match ax.kind {
                AxisKind::Circle => e == ax.sites,
                AxisKind::Line => e >= 2 * ax.sites,
            };
            if !ok {
                return Err(Error::GridMismatch(format!(
                    "embedding size {e} unsuitable for axis {j}"
                )));
            }
        }
        let total: usize = embed.iter().product();
        if kernel.len() != total {
            return Err(Error::LengthMismatch {
                expected: total,
                found: kernel.len(),
            });
        }
        let estrides = row_major_strides(&embed);
        Ok(Self {
            grid: grid.clone(),
            embed,
            estrides,
            kernel,
            label: label.into(),
        })
    }

    pub fn grid(&self) -> &SpacetimeGrid<T> {
        &self.grid
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn embedding_shape(&self) -> &[usize] {
        &self.embed
    }

    pub fn kernel_values(&self) -> &[C<T>] {
        &self.kernel
    }

    /// Flat kernel index of a displacement given in lattice steps.
    #[inline]
    pub fn displacement_index(&self, disp: &[isize]) -> usize {
        disp.iter()
            .zip(&self.embed)
            .zip(&self.estrides)
            .map(|((&d, &e), &s)| d.rem_euclid(e as isize) as usize * s)
            .sum()
    }

    /// Signed displacement (in steps, centred on zero) of a flat kernel index.
    pub fn displacement_of(&self, idx: usize) -> Vec<isize> {
        self.embed
            .iter()
            .zip(&self.estrides)
            .map(|(&e, &s)| {
                let i = (idx / s) % e;
                if i < e / 2 {
                    i as isize
                } else {
                    i as isize - e as isize
                }
            })
            .collect()
    }

    pub fn kernel_at(&self, disp: &[isize]) -> C<T> {
        self.kernel[self.displacement_index(disp)]
    }

    /// `D(x − y)` for sites `x`, `y`.
    #[inline]
    pub fn entry(&self, x: usize, y: usize) -> C<T> {
        let g = &self.grid;
        let mut idx = 0;
        for j in 0..self.embed.len() {
            let d = g.axis_index(x, j) as isize - g.axis_index(y, j) as isize;
            idx += d.rem_euclid(self.embed[j] as isize) as usize * self.estrides[j];
        }
        self.kernel[idx]
    }

    /// Kernel matrix `[D(x_i − x_j)]` over all sites.
    pub fn dense(&self) -> CMatrix<T> {
        let n = self.grid.total_sites();
        CMatrix::from_fn(n, n, |i, j| self.entry(i, j))
    }

    /// `(D f)(x) = vol Σ_y D(x − y) f(y)`.
    pub fn apply(&self, f: &LatticeField<T>) -> Result<LatticeField<T>> {
        self.check(f)?;
        let n = self.grid.total_sites();
        let vol = self.grid.cell_volume();
        let out = (0..n)
            .map(|x| {
                let s: C<T> = (0..n).map(|y| self.entry(x, y) * f.values()[y]).sum();
                s * vol
            })
            .collect();
        LatticeField::new(&self.grid, out)
    }

    /// `⟨f, D g⟩ = vol² Σ conj f(x) D(x − y) g(y)`.
    pub fn sesquilinear(&self, f: &LatticeField<T>, g: &LatticeField<T>) -> Result<C<T>> {
        self.form(f, g, true, None)
    }

    /// `vol² Σ f(x) D(x − y) g(y)`; `S(f) = exp(−½ B(f, f))`.
    pub fn bilinear(&self, f: &LatticeField<T>, g: &LatticeField<T>) -> Result<C<T>> {
        self.form(f, g, false, None)
    }

    /// `⟨f, π_j D g⟩ = vol² Σ conj f(x) D(π_j x − y) g(y)`.
    pub fn reflected_sesquilinear(
        &self,
        j: usize,
        f: &LatticeField<T>,
        g: &LatticeField<T>,
    ) -> Result<C<T>> {
        self.form(f, g, true, Some(j))
    }

    fn form(
        &self,
        f: &LatticeField<T>,
        g: &LatticeField<T>,
        conj_left: bool,
        reflect: Option<usize>,
    ) -> Result<C<T>> {
        self.check(f)?;
        self.check(g)?;
        let perm = match reflect {
            Some(j) => Some(self.grid.reflect(j)?),
            None => None,
        };
        let n = self.grid.total_sites();
        let vol = self.grid.cell_volume();
        let gv = g.values();
        let nz: Vec<usize> = (0..n).filter(|&y| !gv[y].is_zero()).collect();
        let mut acc = C::zero();
        for (x, fx) in f.values().iter().enumerate() {
            if fx.is_zero() {
                continue;
            }
            let fx = if conj_left { fx.conj() } else { *fx };
            let xr = perm.map_or(x, |p| p[x]);
            let row: C<T> = nz.iter().map(|&y| self.entry(xr, y) * gv[y]).sum();
            acc += fx * row;
        }
        Ok(acc * (vol * vol))
    }

    fn check(&self, f: &LatticeField<T>) -> Result<()> {
        if *f.grid() != self.grid {
            return Err(Error::GridMismatch("field and covariance grids differ".into()));
        }
        Ok(())
    }

    fn scale(&self) -> T {
        self.kernel
            .iter()
            .map(|z| z.norm())
            .fold(T::zero(), T::max)
            .max(T::min_positive_value())
    }

    /// `max_d |D(d) − D(−d)| / max |D|`.
    pub fn symmetry_defect(&self) -> T {
        let mut worst = T::zero();
        for idx in 0..self.kernel.len() {
            let d: Vec<isize> = self.displacement_of(idx).iter().map(|x| -x).collect();
            worst = worst.max((self.kernel[idx] - self.kernel_at(&d)).norm());
        }
        worst / self.scale()
    }

    pub fn is_symmetric(&self, tol: T) -> bool {
        self.symmetry_defect() <= tol
    }

    /// Defect of `π_j D π_j = D*`: `max_d |D(π_j d) − conj D(−d)| / max |D|`.
    pub fn reflection_covariance_defect(&self, j: usize) -> Result<T> {
        self.grid.axis(j)?;
        let mut worst = T::zero();
        for idx in 0..self.kernel.len() {
            let d = self.displacement_of(idx);
            let mut pd = d.clone();
            pd[j] = -pd[j];
            let neg: Vec<isize> = d.iter().map(|x| -x).collect();
            worst = worst.max((self.kernel_at(&pd) - self.kernel_at(&neg).conj()).norm());
        }
        Ok(worst / self.scale())
    }

    fn map_kernel(&self, f: impl Fn(usize) -> C<T>, label: &str) -> Self {
        Self {
            kernel: (0..self.kernel.len()).map(f).collect(),
            label: format!("{label}({})", self.label),
            ..self.clone()
        }
    }

    /// Kernel `D(−d)`.
    pub fn transpose(&self) -> Self {
        self.map_kernel(
            |i| {
                let d: Vec<isize> = self.displacement_of(i).iter().map(|x| -x).collect();
                self.kernel_at(&d)
            },
            "transpose",
        )
    }

    /// Kernel `conj D(d)`.
    pub fn conj(&self) -> Self {
        self.map_kernel(|i| self.kernel[i].conj(), "conj")
    }

    pub fn adjoint(&self) -> Self {
        self.transpose().conj()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::AxisSpec;
    use num_complex::Complex64;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn circle1(n: usize, l: f64) -> SpacetimeGrid<f64> {
        SpacetimeGrid::new(vec![AxisSpec::circle(n, l)]).unwrap()
    }

    #[test]
    fn free_field_at_zero_momentum() {
        let g = circle1(16, 8.0);
        let m = FourierMultiplier::sample(MultiplierSpec::FreeField { mass: 1.0 }, &g).unwrap();
        assert_eq!(m.values()[0], Complex64::new(1.0, 0.0));
        let f = m.flags();
        assert!(f.symmetric && f.real_kernel && f.hermitian);
    }

    #[test]
    fn explicit_flags() {
        let g = SpacetimeGrid::new(vec![AxisSpec::circle(8, 4.0), AxisSpec::circle(8, 4.0)]).unwrap();
        let spec = MultiplierSpec::Explicit {
            k_tilde: Profile::closure(|k: &[f64]| 1.0 / (1.0 + k[0] * k[0] + k[1] * k[1])),
            l_tilde: Profile::zero(),
        };
        let m = FourierMultiplier::sample(spec, &g).unwrap();
        assert!(m.flags().hermitian);
        let odd = MultiplierSpec::Explicit {
            k_tilde: Profile::closure(|_: &[f64]| 1.0),
            l_tilde: Profile::closure(|k: &[f64]| 0.1 * k[0].sin()),
        };
        let m = FourierMultiplier::sample(odd, &g).unwrap();
        assert!(!m.flags().symmetric);
        assert!(m.flags().real_kernel);
        assert!(matches!(m.kernel(), Err(Error::NotACovariance { .. })));
    }

    #[test]
    fn non_positive_symbol_rejected() {
        let g = circle1(8, 4.0);
        let spec = MultiplierSpec::Explicit {
            k_tilde: Profile::closure(|k: &[f64]| k[0].cos()),
            l_tilde: Profile::zero(),
        };
        assert!(matches!(
            FourierMultiplier::sample(spec, &g),
            Err(Error::HermitianPartNotPositive { .. })
        ));
    }

    #[test]
    fn circle_kernel_matches_image_sum() {
        let (l, m) = (16.0, 1.0);
        let g = circle1(256, l);
        let d = FourierMultiplier::sample(MultiplierSpec::FreeField { mass: m }, &g)
            .unwrap()
            .kernel()
            .unwrap();
        let a = l / 256.0;
        for step in [0isize, 1, 5, 40, 100, 128] {
            let x = step as f64 * a;
            let want = (m * (l / 2.0 - x.abs())).cosh() / (2.0 * m * (m * l / 2.0).sinh());
            let got = d.kernel_at(&[step]);
            assert!((got.re - want).abs() <= 1e-6 * want, "x={x}: {got} vs {want}");
            assert!(got.im.abs() < 1e-12);
        }
    }

    #[test]
    fn line_kernel_is_sampled_continuum_kernel() {
        let g = SpacetimeGrid::new(vec![AxisSpec::line(32, 0.25)]).unwrap();
        let d = FourierMultiplier::sample(MultiplierSpec::FreeField { mass: 1.0 }, &g)
            .unwrap()
            .kernel()
            .unwrap();
        for step in 0..32isize {
            let x = step as f64 * 0.25;
            assert!((d.kernel_at(&[step]).re - (-x).exp() / 2.0).abs() < 1e-12);
        }
        let p = FourierMultiplier::sample(MultiplierSpec::PowerCovariance { mass: 1.0, power: 2.0 }, &g)
            .unwrap()
            .kernel()
            .unwrap();
        for step in 0..32isize {
            let x = step as f64 * 0.25;
            assert!((p.kernel_at(&[step]).re - (1.0 + x) * (-x).exp() / 4.0).abs() < 1e-12);
        }
    }

    #[test]
    fn numeric_fold_agrees_with_closed_forms() {
        for &(k, mu, a) in &[(0.0f64, 1.0f64, 0.25f64), (1.3, 0.7, 0.1), (-2.0, 2.5, 0.5)] {
            let one = fold_power(k, mu, a, 1.0);
            let two = fold_power(k, mu, a, 2.0);
            assert!((one - fold_pole(k, mu, a)).abs() < 1e-9 * one);
            assert!((two - fold_double_pole(k, mu, a)).abs() < 1e-12 * two);
        }
    }

    #[test]
    fn constant_symbol_gives_delta_kernel() {
        let g = SpacetimeGrid::new(vec![AxisSpec::circle(8, 4.0), AxisSpec::circle(4, 2.0)]).unwrap();
        let c = 2.5;
        let m = FourierMultiplier::from_values(&g, vec![Complex64::new(c, 0.0); 32]).unwrap();
        let d = m.kernel().unwrap();
        let vol = g.cell_volume();
        for (i, z) in d.kernel_values().iter().enumerate() {
            let want = if i == 0 { c / vol } else { 0.0 };
            assert!((z - want).norm() < 1e-12);
        }
    }

    #[test]
    fn hermitian_kernel_has_hermitian_matrix() {
        let g = SpacetimeGrid::new(vec![AxisSpec::line(8, 0.5), AxisSpec::circle(6, 3.0)]).unwrap();
        let d = FourierMultiplier::sample(MultiplierSpec::FreeField { mass: 1.0 }, &g)
            .unwrap()
            .kernel()
            .unwrap();
        assert!(d.dense().hermiticity_defect() < 1e-12);
        assert!(d.symmetry_defect() < 1e-12);
    }

    #[test]
    fn sigma_branch() {
        let g = circle1(4, 2.0);
        let vals = vec![
            Complex64::new(1.0, 1.0),
            Complex64::new(2.0, 0.0),
            Complex64::new(0.5, -3.0),
            Complex64::new(2.0, 0.0),
        ];
        let m = FourierMultiplier::from_values(&g, vals.clone()).unwrap();
        let s = m.sigma().unwrap();
        for (sv, dv) in s.values().iter().zip(&vals) {
            assert!((sv * sv - dv).norm() < 1e-12 * dv.norm());
            assert!(sv.re > 0.0);
        }
        let bad = FourierMultiplier::from_values(&g, vec![Complex64::new(-1.0, 0.0); 4]).unwrap();
        assert!(matches!(bad.sigma(), Err(Error::HermitianPartNotPositive { index: 0 })));
    }

    #[test]
    fn free_field_reflection_covariant() {
        let g = SpacetimeGrid::new(vec![AxisSpec::circle(8, 4.0), AxisSpec::circle(8, 4.0)]).unwrap();
        let m = FourierMultiplier::sample(MultiplierSpec::FreeField { mass: 1.0 }, &g).unwrap();
        let s = m.sigma().unwrap();
        for j in 0..2 {
            assert!(s.reflection_covariance_defect(j).unwrap() < 1e-12);
        }
        for (k, v) in s.values().iter().enumerate() {
            let prod = v * s.values()[g.negate_momentum(k)];
            assert!((prod - m.values()[k]).norm() < 1e-12);
        }
    }

    #[test]
    fn odd_and_even_imaginary_parts() {
        let g = SpacetimeGrid::new(vec![AxisSpec::circle(8, 4.0), AxisSpec::circle(8, 4.0)]).unwrap();
        let base = |k: &[f64]| 1.0 / (1.0 + k[0] * k[0] + k[1] * k[1]);
        let odd = MultiplierSpec::Explicit {
            k_tilde: Profile::closure(base),
            l_tilde: Profile::closure(move |k: &[f64]| 0.3 * k[0] * k[1] * base(k) * base(k)),
        };
        let m = FourierMultiplier::sample(odd, &g).unwrap();
        assert!(m.sigma().unwrap().reflection_covariance_defect(0).unwrap() < 1e-12);
        let even = MultiplierSpec::Explicit {
            k_tilde: Profile::closure(base),
            l_tilde: Profile::closure(move |k: &[f64]| 0.3 * base(k)),
        };
        let m = FourierMultiplier::sample(even, &g).unwrap();
        assert!(m.sigma().unwrap().reflection_covariance_defect(0).unwrap() > 1e-3);
    }

    #[test]
    fn boosted_family_is_symmetric_and_covariant() {
        let g = SpacetimeGrid::new(vec![AxisSpec::line(8, 0.5), AxisSpec::circle(8, 4.0)]).unwrap();
        let m = FourierMultiplier::sample(
            MultiplierSpec::BoostedFreeField { mass: 1.0, velocity: 0.4 },
            &g,
        )
        .unwrap();
        assert!(m.flags().symmetric);
        assert!(!m.flags().hermitian);
        assert!(m.sigma().unwrap().reflection_covariance_defect(0).unwrap() < 1e-12);
        let d = m.kernel().unwrap();
        assert!(d.symmetry_defect() < 1e-12);
        assert!(d.reflection_covariance_defect(0).unwrap() < 1e-12);
    }

    #[test]
    fn bounds() {
        let g = SpacetimeGrid::new(vec![AxisSpec::<f64>::circle(8, 4.0), AxisSpec::circle(8, 4.0)]).unwrap();
        let m = FourierMultiplier::sample(MultiplierSpec::FreeField { mass: 1.0 }, &g).unwrap();
        let b = m.estimate_bounds(1.0).unwrap();
        assert!((b.m1 - 1.0).abs() < 1e-15 && (b.m2 - 1.0).abs() < 1e-15);
        assert_eq!(b.m3, 0.0);
        let half = MultiplierSpec::Explicit {
            k_tilde: Profile::closure(|k: &[f64]| 1.0 / (1.0 + k[0] * k[0] + k[1] * k[1])),
            l_tilde: Profile::closure(|k: &[f64]| 0.5 / (1.0 + k[0] * k[0] + k[1] * k[1])),
        };
        let b = FourierMultiplier::sample(half, &g).unwrap().estimate_bounds(1.0).unwrap();
        assert!((b.m3 - 0.5).abs() < 1e-15);
        assert!((b.max_abs_ratio - 1.0).abs() < 1e-14);
    }

    #[test]
    fn time_zero_norm_bound() {
        let g = SpacetimeGrid::new(vec![AxisSpec::line(64, 0.25), AxisSpec::circle(8, 4.0)]).unwrap();
        let m = FourierMultiplier::sample(MultiplierSpec::FreeField { mass: 1.0 }, &g).unwrap();
        let spatial = SpacetimeGrid::new(vec![AxisSpec::circle(8, 4.0)]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h = LatticeField::from_fn(&spatial, |_| Complex64::new(rng.random(), rng.random()));
        let r = m.time_zero_norm(&h, 1.0).unwrap();
        assert!(r.ratio() <= 1.0 + 1e-10);
        let zero = LatticeField::zeros(&spatial);
        let z = m.time_zero_norm(&zero, 1.0).unwrap();
        assert_eq!((z.lhs, z.rhs), (0.0, 0.0));
        let one = FourierMultiplier::sample(MultiplierSpec::FreeField { mass: 1.0 }, &circle1(8, 4.0)).unwrap();
        assert_eq!(one.time_zero_norm(&zero, 1.0).unwrap_err(), Error::NoSpatialAxis);
    }

    #[test]
    fn transpose_and_adjoint_symbols() {
        let g = SpacetimeGrid::new(vec![AxisSpec::circle(6, 3.0), AxisSpec::circle(4, 2.0)]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let vals: Vec<Complex64> = (0..24)
            .map(|_| Complex64::new(rng.random_range(0.5..1.5), rng.random_range(-1.0..1.0)))
            .collect();
        let m = FourierMultiplier::from_values(&g, vals).unwrap();
        let d = m.operator().unwrap();
        let dt = m.reversed().operator().unwrap();
        let da = m.conjugated().operator().unwrap();
        assert!((&d.dense().transpose() - &dt.dense()).max_abs() < 1e-12);
        assert!((&d.dense().adjoint() - &da.dense()).max_abs() < 1e-12);
        assert!((&d.transpose().dense() - &dt.dense()).max_abs() < 1e-12);
        assert!((&d.adjoint().dense() - &da.dense()).max_abs() < 1e-12);
        let r = FourierMultiplier::from_values(
            &g,
            (0..24).map(|k| m.values()[k] + m.values()[g.negate_momentum(k)].conj()).collect(),
        )
        .unwrap();
        assert!(r.flags().real_kernel);
        let dm = r.operator().unwrap().dense();
        assert!((&dm - &dm.conj()).max_abs() < 1e-12);
    }

    #[test]
    fn tables_rejected_on_line_axes() {
        let g = SpacetimeGrid::new(vec![AxisSpec::line(4, 0.5)]).unwrap();
        let spec = MultiplierSpec::Explicit {
            k_tilde: Profile::Table(vec![1.0; 4]),
            l_tilde: Profile::Table(vec![0.0; 4]),
        };
        let m = FourierMultiplier::sample(spec, &g).unwrap();
        assert!(matches!(m.kernel(), Err(Error::GridMismatch(_))));
    }
}
