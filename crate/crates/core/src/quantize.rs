//! Reconstruction of a Hilbert space, transfer matrices and a Hamiltonian
//! from the positive-time form `⟨f, ϑ D g⟩`.
//!
//! Axis 0 must be a Line (time) and every other axis a Circle, so that the
//! form block-diagonalizes over spatial momenta `k̄`. Within a block the
//! positive-time slabs `t_i = (i + ½) a₀` carry the Gram matrix
//! `G_{ii′} = D̂(−(i + i′ + 1); k̄)` where `D̂(d₀; k̄)` is the kernel at time
//! displacement `d₀` steps, Fourier transformed over space.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fft::dft_axis;
use crate::grid::{AxisKind, SpacetimeGrid};
use crate::linalg::{spectral_norm, CMatrix, HermitianEigen};
use crate::multiplier::CovarianceOperator;
use crate::scalar::{cr, Real, C};

pub const DEFAULT_RANK_TOL: f64 = 1e-10;

fn check_grid<T: Real>(grid: &SpacetimeGrid<T>) -> Result<()> {
    if grid.axes()[0].kind != AxisKind::Line {
        return Err(Error::GridMismatch("time axis 0 must be a line".into()));
    }
    if let Some(j) = grid.axes()[1..].iter().position(|a| a.kind != AxisKind::Circle) {
        return Err(Error::GridMismatch(format!(
            "spatial axis {} must be a circle",
            j + 1
        )));
    }
    Ok(())
}

/// Number of spatial momentum blocks.
pub fn momentum_blocks<T: Real>(grid: &SpacetimeGrid<T>) -> usize {
    grid.shape()[1..].iter().product()
}

/// Spatial momentum of block `index` (row-major over axes `1..`).
pub fn block_momentum<T: Real>(grid: &SpacetimeGrid<T>, index: usize) -> Vec<T> {
    let mut rest = index;
    let mut out = vec![T::zero(); grid.dim() - 1];
    for j in (1..grid.dim()).rev() {
        let n = grid.shape()[j];
        out[j - 1] = grid.axis_momenta(j)[rest % n];
        rest /= n;
    }
    out
}

/// Spatially transformed kernel `D̂(d₀; k̄) = ā Σ_{d̄} D(d₀, d̄) e^{−i k̄·d̄ ā}`
/// for every momentum block, as `slabs[block][d₀ mod E₀]`.
pub struct SlabKernel<T: Real> {
    grid: SpacetimeGrid<T>,
    time_embed: usize,
    slabs: Vec<Vec<C<T>>>,
}

impl<T: Real> SlabKernel<T> {
    pub fn new(d: &CovarianceOperator<T>) -> Result<Self> {
        let grid = d.grid().clone();
        check_grid(&grid)?;
        let shape = d.embedding_shape().to_vec();
        let mut data = d.kernel_values().to_vec();
        for j in 1..shape.len() {
            dft_axis(&mut data, &shape, j, -1);
        }
        let cell: T = grid.axes()[1..]
            .iter()
            .map(|a| a.spacing)
            .fold(T::one(), |p, x| p * x);
        let blocks: usize = shape[1..].iter().product();
        let e0 = shape[0];
        let slabs = (0..blocks)
            .map(|b| (0..e0).map(|t| data[t * blocks + b] * cell).collect())
            .collect();
        Ok(Self {
            grid,
            time_embed: e0,
            slabs,
        })
    }

    pub fn blocks(&self) -> usize {
        self.slabs.len()
    }

    /// `D̂(d₀; k̄_block)`; `None` outside the stored range.
    pub fn at(&self, block: usize, d0: isize) -> Option<C<T>> {
        let half = (self.time_embed / 2) as isize;
        if d0 < -half || d0 >= half {
            return None;
        }
        Some(self.slabs[block][d0.rem_euclid(self.time_embed as isize) as usize])
    }

    fn slabs_positive(&self) -> usize {
        self.grid.shape()[0] / 2
    }

    /// `G(s)_{ii′} = D̂(−(i + i′ + 1 + s))`, the form `⟨f, ϑ D T(s) g⟩` per block.
    pub fn shifted_gram(&self, block: usize, s: isize) -> Result<CMatrix<T>> {
        if s < 0 {
            return Err(Error::NegativeTimeStep { steps: s });
        }
        if block >= self.blocks() {
            return Err(Error::InvalidParameter(format!("no momentum block {block}")));
        }
        let m = self.slabs_positive();
        let far = -((2 * m) as isize - 1 + s);
        if self.at(block, far).is_none() {
            return Err(Error::InvalidParameter(format!(
                "time shift {s} exceeds the stored kernel range"
            )));
        }
        Ok(CMatrix::from_fn(m, m, |i, k| {
            self.at(block, -((i + k + 1) as isize + s)).expect("range checked")
        }))
    }
}

/// Positive-time Gram matrix of block `block`.
pub fn os_gram<T: Real>(d: &CovarianceOperator<T>, block: usize) -> Result<CMatrix<T>> {
    SlabKernel::new(d)?.shifted_gram(block, 0)
}

#[derive(Debug, Clone)]
pub struct QuotientBasis<T: Real> {
    /// `V_r Λ_r^{-1/2}`; columns map quotient coordinates to slab vectors.
    pub basis: CMatrix<T>,
    pub dimension: usize,
    /// Ascending eigenvalues of the Hermitian part of the Gram matrix.
    pub gram_eigenvalues: Vec<T>,
    pub gram_herm_defect: T,
}

/// Keeps eigenpairs of the Gram matrix above `rank_tol · λ_max`.
pub fn quotient<T: Real>(gram: &CMatrix<T>, rank_tol: T) -> Result<QuotientBasis<T>> {
    let eig = HermitianEigen::new(gram);
    let lmax = eig.max();
    if !(lmax > T::zero()) {
        return Err(Error::ZeroSpace);
    }
    let keep: Vec<usize> = (0..eig.values.len())
        .filter(|&i| eig.values[i] > rank_tol * lmax)
        .collect();
    if keep.is_empty() {
        return Err(Error::ZeroSpace);
    }
    let n = gram.nrows();
    let basis = CMatrix::from_fn(n, keep.len(), |r, c| {
        eig.vectors[(r, keep[c])] / eig.values[keep[c]].sqrt()
    });
    Ok(QuotientBasis {
        basis,
        dimension: keep.len(),
        gram_eigenvalues: eig.values,
        gram_herm_defect: gram.hermiticity_defect(),
    })
}

/// OS reconstruction restricted to one spatial momentum block.
#[derive(Debug, Clone)]
pub struct OSQuantization<T: Real> {
    pub block: usize,
    pub momentum: Vec<T>,
    pub time_step: T,
    pub rank_tol: T,
    pub gram: CMatrix<T>,
    pub quotient: QuotientBasis<T>,
    grams: Vec<CMatrix<T>>,
}

impl<T: Real> OSQuantization<T> {
    /// `R(s) = B* G(s) B` on the quotient.
    pub fn transfer(&self, s: isize) -> Result<CMatrix<T>> {
        if s < 0 {
            return Err(Error::NegativeTimeStep { steps: s });
        }
        let g = self
            .grams
            .get(s as usize)
            .ok_or_else(|| Error::InvalidParameter(format!("transfer step {s} not prepared")))?;
        let b = &self.quotient.basis;
        Ok(&(&b.adjoint() * g) * b)
    }

    pub fn max_step(&self) -> usize {
        self.grams.len() - 1
    }

    /// `‖R(s)R(s′) − R(s + s′)‖₂ / ‖R(s + s′)‖₂`.
    pub fn semigroup_defect(&self, s: isize, s2: isize) -> Result<T> {
        let lhs = &self.transfer(s)? * &self.transfer(s2)?;
        let rhs = self.transfer(s + s2)?;
        let scale = spectral_norm(&rhs).max(T::min_positive_value());
        Ok(spectral_norm(&(&lhs - &rhs)) / scale)
    }

    /// `h = −log(P)/a₀` with `P = (R(1)* R(1))^{1/2}`.
    pub fn hamiltonian(&self) -> Result<Hamiltonian<T>> {
        let r = self.transfer(1)?;
        let rr = &r.adjoint() * &r;
        let eig = HermitianEigen::new(&rr);
        let sv: Vec<T> = eig.values.iter().map(|&l| l.max(T::zero()).sqrt()).collect();
        let smax = sv.last().copied().unwrap_or_else(T::zero);
        let smin = sv.first().copied().unwrap_or_else(T::zero);
        if !(smin > T::epsilon() * smax) || !(smin > T::zero()) {
            return Err(Error::HamiltonianUndefined { smallest: smin.as_f64() });
        }
        let a = self.time_step;
        let matrix = eig.apply_fn(|l| -(l.sqrt().ln()) / a);
        let mut eigenvalues: Vec<T> = sv.iter().map(|&s| -s.ln() / a).collect();
        eigenvalues.sort_by(|x, y| x.partial_cmp(y).expect("finite"));
        Ok(Hamiltonian {
            matrix,
            eigenvalues,
            transfer_norm: smax,
            antihermitian_defect: r.hermiticity_defect(),
        })
    }
}

#[derive(Debug, Clone)]
pub struct Hamiltonian<T: Real> {
    pub matrix: CMatrix<T>,
    /// Ascending.
    pub eigenvalues: Vec<T>,
    /// `‖R(1)‖₂`.
    pub transfer_norm: T,
    /// Relative Frobenius defect `‖R(1) − R(1)*‖/‖R(1)‖`.
    pub antihermitian_defect: T,
}

impl<T: Real> Hamiltonian<T> {
    pub fn min(&self) -> T {
        self.eigenvalues.first().copied().unwrap_or_else(T::zero)
    }
}

/// OS data for one block with transfer matrices up to `max_step` steps.
pub fn quantize_block<T: Real>(
    kernel: &SlabKernel<T>,
    block: usize,
    rank_tol: T,
    max_step: usize,
) -> Result<OSQuantization<T>> {
    let grams = (0..=max_step)
        .map(|s| kernel.shifted_gram(block, s as isize))
        .collect::<Result<Vec<_>>>()?;
    let gram = grams[0].clone();
    let q = quotient(&gram, rank_tol)?;
    Ok(OSQuantization {
        block,
        momentum: block_momentum(&kernel.grid, block),
        time_step: kernel.grid.axes()[0].spacing,
        rank_tol,
        gram,
        quotient: q,
        grams,
    })
}

pub fn quantize<T: Real>(
    d: &CovarianceOperator<T>,
    block: usize,
    rank_tol: T,
    max_step: usize,
) -> Result<OSQuantization<T>> {
    quantize_block(&SlabKernel::new(d)?, block, rank_tol, max_step)
}

/// One line of a dispersion table.
#[derive(Debug, Clone, Serialize)]
pub struct DispersionRow {
    pub block: usize,
    pub momentum: Vec<f64>,
    pub quotient_dim: usize,
    pub min_h: f64,
    pub transfer_norm: f64,
    pub semigroup_defect: f64,
    pub antihermitian_defect: f64,
    pub dispersion_ref: Option<f64>,
    pub rel_error: Option<f64>,
}

/// Quantizes the listed blocks and compares the lowest energy with
/// `√(k̄² + m²)` when a mass is given.
pub fn dispersion<T: Real>(
    d: &CovarianceOperator<T>,
    blocks: &[usize],
    rank_tol: T,
    mass: Option<T>,
) -> Result<Vec<DispersionRow>> {
    let kernel = SlabKernel::new(d)?;
    blocks
        .iter()
        .map(|&b| {
            let q = quantize_block(&kernel, b, rank_tol, 3)?;
            let h = q.hamiltonian()?;
            let reference = mass.map(|m| {
                (q.momentum.iter().map(|&k| k * k).fold(T::zero(), |s, x| s + x) + m * m).sqrt()
            });
            let min_h = h.min();
            Ok(DispersionRow {
                block: b,
                momentum: q.momentum.iter().map(|k| k.as_f64()).collect(),
                quotient_dim: q.quotient.dimension,
                min_h: min_h.as_f64(),
                transfer_norm: h.transfer_norm.as_f64(),
                semigroup_defect: q.semigroup_defect(1, 2)?.as_f64(),
                antihermitian_defect: h.antihermitian_defect.as_f64(),
                dispersion_ref: reference.map(|r| r.as_f64()),
                rel_error: reference.map(|r| ((min_h - r) / r).abs().as_f64()),
            })
        })
        .collect()
}

/// Block index of the spatial momentum with signed mode numbers `modes`.
pub fn block_of_modes<T: Real>(grid: &SpacetimeGrid<T>, modes: &[isize]) -> Result<usize> {
    if modes.len() + 1 != grid.dim() {
        return Err(Error::LengthMismatch {
            expected: grid.dim() - 1,
            found: modes.len(),
        });
    }
    let mut idx = 0;
    for (j, &m) in modes.iter().enumerate() {
        let n = grid.shape()[j + 1] as isize;
        if m < -n / 2 || m >= n / 2 {
            return Err(Error::InvalidParameter(format!("mode {m} outside axis {}", j + 1)));
        }
        idx = idx * n as usize + m.rem_euclid(n) as usize;
    }
    Ok(idx)
}

/// Rank-one Gram matrix `c^{i+i′}` scaled to `c`, for synthetic checks.
pub fn geometric_gram<T: Real>(n: usize, c: T, shift: usize) -> CMatrix<T> {
    CMatrix::from_fn(n, n, |i, k| cr(c.powi((i + k + 1 + shift) as i32)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::AxisSpec;
    use crate::multiplier::{FourierMultiplier, MultiplierSpec};

    fn identity_defect(m: &CMatrix<f64>) -> f64 {
        (m - &CMatrix::identity(m.nrows())).max_abs()
    }

    fn lattice_free(n0: usize, a: f64, n1: usize, len: f64) -> CovarianceOperator<f64> {
        let g = SpacetimeGrid::new(vec![AxisSpec::line(n0, a), AxisSpec::circle(n1, len)]).unwrap();
        FourierMultiplier::sample(MultiplierSpec::LatticeFreeField { mass: 1.0 }, &g)
            .unwrap()
            .kernel()
            .unwrap()
    }

    #[test]
    fn slab_kernel_matches_direct_sum() {
        let d = lattice_free(8, 0.5, 8, 4.0);
        let sk = SlabKernel::new(&d).unwrap();
        let g = d.grid();
        for block in [0usize, 3, 5] {
            let k = block_momentum(g, block)[0];
            for d0 in [-3isize, 0, 2] {
                let direct: C<f64> = (0..8isize)
                    .map(|s| d.kernel_at(&[d0, s]) * C::from_polar(0.5, -k * s as f64 * 0.5))
                    .sum();
                assert!((sk.at(block, d0).unwrap() - direct).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn rank_one_gram() {
        let c = (-0.3f64).exp();
        let g = geometric_gram(6, c, 0);
        let q = quotient(&g, 1e-10).unwrap();
        assert_eq!(q.dimension, 1);
        assert!(matches!(quotient(&CMatrix::<f64>::zeros(3, 3), 1e-10), Err(Error::ZeroSpace)));
    }

    #[test]
    fn lattice_free_field_block() {
        let d = lattice_free(32, 0.1, 16, 1.6);
        let q = quantize(&d, 0, 1e-10, 3).unwrap();
        assert_eq!(q.quotient.dimension, 1);
        assert!(identity_defect(&q.transfer(0).unwrap()) < 1e-10);
        let h = q.hamiltonian().unwrap();
        let exact = 2.0 / 0.1 * (0.1f64 / 2.0).asinh();
        assert!((h.min() - exact).abs() < 1e-8, "{} vs {exact}", h.min());
        assert!(h.transfer_norm <= 1.0 + 1e-10);
        assert!(q.semigroup_defect(1, 2).unwrap() < 1e-8);
        assert!(matches!(q.transfer(-1), Err(Error::NegativeTimeStep { steps: -1 })));
    }

    #[test]
    fn dispersion_improves_with_spacing() {
        let worst = |n: usize, a: f64| {
            let d = lattice_free(n, a, n, 6.4);
            let blocks: Vec<usize> = (-3..=3).map(|m| block_of_modes(d.grid(), &[m]).unwrap()).collect();
            let rows = dispersion(&d, &blocks, 1e-10, Some(1.0)).unwrap();
            for r in &rows {
                assert_eq!(r.quotient_dim, 1);
                assert!(r.transfer_norm <= 1.0 + 1e-10);
                assert!(r.semigroup_defect <= 1e-8);
            }
            rows.iter().map(|r| r.rel_error.unwrap()).fold(0.0, f64::max)
        };
        let coarse = worst(64, 0.1);
        let fine = worst(128, 0.05);
        assert!(coarse < 0.05, "{coarse}");
        assert!(fine < coarse, "{fine} vs {coarse}");
    }

    #[test]
    fn rejects_unsuitable_grids() {
        let g = SpacetimeGrid::new(vec![AxisSpec::line(8, 0.5), AxisSpec::line(8, 0.5)]).unwrap();
        let d = FourierMultiplier::sample(MultiplierSpec::FreeField { mass: 1.0 }, &g)
            .unwrap()
            .kernel()
            .unwrap();
        assert!(matches!(SlabKernel::new(&d), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn modes_to_blocks() {
        let d = lattice_free(8, 0.5, 8, 4.0);
        let g = d.grid();
        let b = block_of_modes(g, &[-2]).unwrap();
        let k = block_momentum(g, b)[0];
        assert!((k + 2.0 * std::f64::consts::TAU / 4.0).abs() < 1e-14);
    }
}
