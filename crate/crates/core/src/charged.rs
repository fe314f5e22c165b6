//! Two-component charged fields.
//!
//! The doubled space is two stacked copies of lattice L₂ in charge-major
//! order (`+` block first). The covariance is
//!
//! ```text
//! 𝑫 = [[0, D], [Dᵀ, 0]]
//! ```
//!
//! with `D` the `+−` two-point kernel. Charge conjugation swaps the blocks.

use std::fmt;
use std::str::FromStr;

use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::pairing_oracle_with;
use crate::grid::{HalfSpace, LatticeField, SpacetimeGrid};
use crate::linalg::CMatrix;
use crate::multiplier::{CovarianceOperator, FourierMultiplier, MultiplierSpec};
use crate::rp_check::{check_matrix, split_axis_arg, MatrixCheck, Verdict, WitnessResult};
use crate::scalar::{Real, C};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Charge {
    Plus,
    Minus,
}

impl Charge {
    pub fn flip(self) -> Self {
        match self {
            Charge::Plus => Charge::Minus,
            Charge::Minus => Charge::Plus,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ChargedCovariance<T: Real> {
    d: CovarianceOperator<T>,
    d_transpose: CovarianceOperator<T>,
    sigma_plus: Option<FourierMultiplier<T>>,
    sigma_minus: Option<FourierMultiplier<T>>,
}

impl<T: Real> ChargedCovariance<T> {
    /// `σ₊ = σ₋` the even square root of a symmetric spec; `D` is the spec
    /// kernel itself. Works on any grid.
    pub fn from_spec(spec: MultiplierSpec<T>, grid: &SpacetimeGrid<T>) -> Result<Self> {
        let m = FourierMultiplier::sample(spec, grid)?;
        let sigma = m.sigma()?;
        let d = m.kernel()?;
        Ok(Self {
            d_transpose: d.transpose(),
            d,
            sigma_plus: Some(sigma.clone()),
            sigma_minus: Some(sigma),
        })
    }

    /// `D̃(k) = σ̃₊(k) σ̃₋(−k)`. The kernel is synthesized from the sampled
    /// product, so every axis must be a Circle.
    pub fn from_sigmas(sigma_plus: &FourierMultiplier<T>, sigma_minus: &FourierMultiplier<T>) -> Result<Self> {
        let d = Self::product_symbol(sigma_plus, sigma_minus)?.operator()?;
        Ok(Self {
            d_transpose: d.transpose(),
            d,
            sigma_plus: Some(sigma_plus.clone()),
            sigma_minus: Some(sigma_minus.clone()),
        })
    }

    /// `σ̃₊(k) σ̃₋(−k)` on the common grid.
    pub fn product_symbol(
        sigma_plus: &FourierMultiplier<T>,
        sigma_minus: &FourierMultiplier<T>,
    ) -> Result<FourierMultiplier<T>> {
        if sigma_plus.grid() != sigma_minus.grid() {
            return Err(Error::GridMismatch("σ₊ and σ₋ sampled on different grids".into()));
        }
        sigma_plus.product(&sigma_minus.reversed())
    }

    pub fn from_operator(d: CovarianceOperator<T>) -> Self {
        Self {
            d_transpose: d.transpose(),
            d,
            sigma_plus: None,
            sigma_minus: None,
        }
    }

    pub fn grid(&self) -> &SpacetimeGrid<T> {
        self.d.grid()
    }

    /// The `+−` kernel `D`.
    pub fn d(&self) -> &CovarianceOperator<T> {
        &self.d
    }

    pub fn d_transpose(&self) -> &CovarianceOperator<T> {
        &self.d_transpose
    }

    pub fn sigmas(&self) -> Option<(&FourierMultiplier<T>, &FourierMultiplier<T>)> {
        self.sigma_plus.as_ref().zip(self.sigma_minus.as_ref())
    }

    /// `⟨Φ_a(x) Φ_b(y)⟩`; zero for equal charges.
    pub fn two_point(&self, a: Charge, x: usize, b: Charge, y: usize) -> C<T> {
        match (a, b) {
            (Charge::Plus, Charge::Minus) => self.d.entry(x, y),
            (Charge::Minus, Charge::Plus) => self.d_transpose.entry(x, y),
            _ => C::zero(),
        }
    }

    /// Dense `2N × 2N` block matrix `𝑫`.
    pub fn block_matrix(&self) -> CMatrix<T> {
        let n = self.grid().total_sites();
        CMatrix::from_fn(2 * n, 2 * n, |r, c| {
            let (a, x) = split(r, n);
            let (b, y) = split(c, n);
            self.two_point(a, x, b, y)
        })
    }

    /// `𝒞𝑫𝒞`: the covariance with `D` and `Dᵀ` exchanged.
    pub fn conjugate_covariance(&self) -> Self {
        Self {
            d: self.d_transpose.clone(),
            d_transpose: self.d.clone(),
            sigma_plus: self.sigma_minus.clone(),
            sigma_minus: self.sigma_plus.clone(),
        }
    }

    /// Expectation of `Π Φ_{c_i}(x_i)` as a sum over matchings of the block
    /// two-point function.
    pub fn expectation(&self, points: &[(Charge, usize)]) -> Result<C<T>> {
        let labels: Vec<usize> = (0..points.len()).collect();
        pairing_oracle_with(&labels, |i, j| {
            let (a, x) = points[i];
            let (b, y) = points[j];
            self.two_point(a, x, b, y)
        })
    }
}

fn split(i: usize, n: usize) -> (Charge, usize) {
    if i < n {
        (Charge::Plus, i)
    } else {
        (Charge::Minus, i - n)
    }
}

/// `2N × 2N` block swap.
pub fn charge_conjugation_matrix<T: Real>(n: usize) -> CMatrix<T> {
    CMatrix::from_fn(2 * n, 2 * n, |r, c| {
        if (r + n) % (2 * n) == c {
            C::one()
        } else {
            C::zero()
        }
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChargedTestFunction<T: Real> {
    pub plus: LatticeField<T>,
    pub minus: LatticeField<T>,
}

impl<T: Real> ChargedTestFunction<T> {
    pub fn new(plus: LatticeField<T>, minus: LatticeField<T>) -> Result<Self> {
        if plus.grid() != minus.grid() {
            return Err(Error::GridMismatch("charge components on different grids".into()));
        }
        Ok(Self { plus, minus })
    }

    pub fn stacked(&self) -> Vec<C<T>> {
        self.plus.values().iter().chain(self.minus.values()).copied().collect()
    }
}

/// `(f₊, f₋) -> (f₋, f₊)`.
pub fn charge_conjugate<T: Real>(f: &ChargedTestFunction<T>) -> ChargedTestFunction<T> {
    ChargedTestFunction {
        plus: f.minus.clone(),
        minus: f.plus.clone(),
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ChargedCharacteristic<T: Real> {
    /// `exp(−⟨f̄₊, D f₋⟩)`.
    pub direct: C<T>,
    /// `exp(−½ ⟨𝒇̄, 𝑫 𝒇⟩)` from the dense block matrix.
    pub block: C<T>,
    pub defect: T,
    pub consistent: bool,
}

pub fn charged_characteristic<T: Real>(
    cov: &ChargedCovariance<T>,
    f: &ChargedTestFunction<T>,
) -> Result<ChargedCharacteristic<T>> {
    if f.plus.grid() != cov.grid() {
        return Err(Error::GridMismatch("test function and covariance grids differ".into()));
    }
    let direct = (-cov.d.bilinear(&f.plus, &f.minus)?).exp();
    let v = f.stacked();
    let m = cov.block_matrix();
    let mv = m.mul_vec(&v);
    let vol = cov.grid().cell_volume();
    let q: C<T> = v.iter().zip(&mv).map(|(a, b)| *a * *b).sum::<C<T>>() * (vol * vol);
    let block = (q * T::lit(-0.5)).exp();
    let scale = direct.norm().max(block.norm()).max(T::min_positive_value());
    let defect = (direct - block).norm() / scale;
    Ok(ChargedCharacteristic {
        direct,
        block,
        defect,
        consistent: defect <= T::lit(1e-12),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ChargedCondition {
    /// `0 ≤ 𝒞𝑫` on the doubled space.
    ChargedMeasure,
    /// `0 ≤ ϑ𝒞𝑫` on the positive-time half.
    ChargedTimeRP,
    /// `0 ≤ 𝒞𝑫ϑ` on the positive-time half.
    ChargedAltTimeRP,
    ChargedSpatialRP(usize),
    ChargedAltSpatialRP(usize),
}

impl ChargedCondition {
    pub fn axis(&self) -> Option<usize> {
        match *self {
            Self::ChargedMeasure => None,
            Self::ChargedTimeRP | Self::ChargedAltTimeRP => Some(0),
            Self::ChargedSpatialRP(j) | Self::ChargedAltSpatialRP(j) => Some(j),
        }
    }

    fn reflect_left(&self) -> bool {
        matches!(self, Self::ChargedTimeRP | Self::ChargedSpatialRP(_))
    }
}

impl fmt::Display for ChargedCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::ChargedMeasure => f.write_str("ChargedMeasure"),
            Self::ChargedTimeRP => f.write_str("ChargedTimeRP"),
            Self::ChargedAltTimeRP => f.write_str("ChargedAltTimeRP"),
            Self::ChargedSpatialRP(j) => write!(f, "ChargedSpatialRP({j})"),
            Self::ChargedAltSpatialRP(j) => write!(f, "ChargedAltSpatialRP({j})"),
        }
    }
}

impl FromStr for ChargedCondition {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let (name, axis) = split_axis_arg(s)?;
        let need = |a: Option<usize>| a.ok_or_else(|| format!("`{name}` needs an axis"));
        match name {
            "ChargedMeasure" => Ok(Self::ChargedMeasure),
            "ChargedTimeRP" => Ok(Self::ChargedTimeRP),
            "ChargedAltTimeRP" => Ok(Self::ChargedAltTimeRP),
            "ChargedSpatialRP" => Ok(Self::ChargedSpatialRP(need(axis)?)),
            "ChargedAltSpatialRP" => Ok(Self::ChargedAltSpatialRP(need(axis)?)),
            _ => Err(format!("unknown charged condition `{s}`")),
        }
    }
}

impl Serialize for ChargedCondition {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ChargedCondition {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BlockReport {
    /// `"+"` (the `Dᵀ` block), `"-"` (the `D` block) or `"full"`.
    pub block: String,
    pub dimension: usize,
    pub herm_defect: f64,
    pub min_eig: f64,
    pub norm: f64,
    pub verdict: Verdict,
}

impl BlockReport {
    fn new<T: Real>(block: &str, mc: &MatrixCheck<T>) -> Self {
        Self {
            block: block.to_string(),
            dimension: mc.dimension,
            herm_defect: mc.herm_defect.as_f64(),
            min_eig: mc.min_eig.as_f64(),
            norm: mc.norm.as_f64(),
            verdict: mc.verdict,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ChargedReport<T: Real> {
    pub condition: ChargedCondition,
    pub tol: f64,
    pub blocks: Vec<BlockReport>,
    /// The same condition evaluated on the assembled doubled matrix.
    pub full: BlockReport,
    /// Conjunction of the block verdicts.
    pub verdict: Verdict,
    /// Whether the doubled-matrix verdict equals the block conjunction.
    pub consistent: bool,
    #[serde(skip)]
    pub witness: Option<(String, WitnessResult<T>)>,
}

/// Runs a charged condition blockwise on `diag(·Dᵀ·, ·D·)` and on the
/// assembled doubled matrix.
pub fn check_charged<T: Real>(cond: ChargedCondition, cov: &ChargedCovariance<T>, tol: T) -> Result<ChargedReport<T>> {
    let grid = cov.grid().clone();
    let n = grid.total_sites();
    if let Some(j) = cond.axis() {
        if j >= grid.dim() {
            let na = BlockReport {
                block: "full".into(),
                dimension: 0,
                herm_defect: 0.0,
                min_eig: 0.0,
                norm: 0.0,
                verdict: Verdict::NotApplicable,
            };
            return Ok(ChargedReport {
                condition: cond,
                tol: tol.as_f64(),
                blocks: Vec::new(),
                full: na,
                verdict: Verdict::NotApplicable,
                consistent: true,
                witness: None,
            });
        }
    }
    let sites = match cond.axis() {
        Some(j) => grid.halfspace(j, HalfSpace::Positive)?,
        None => (0..n).collect(),
    };
    let perm: Vec<usize> = match cond.axis() {
        Some(j) => grid.reflect(j)?.to_vec(),
        None => (0..n).collect(),
    };
    let left = cond.reflect_left();
    let measure = cond.axis().is_none();
    let compress = |op: &CovarianceOperator<T>| {
        let m = sites.len();
        CMatrix::from_fn(m, m, |r, c| {
            let (x, y) = (sites[r], sites[c]);
            if measure {
                op.entry(x, y)
            } else if left {
                op.entry(perm[x], y)
            } else {
                op.entry(x, perm[y])
            }
        })
    };

    let mut blocks = Vec::new();
    let mut witness = None;
    let mut verdict = Verdict::Pass;
    for (tag, op) in [("+", &cov.d_transpose), ("-", &cov.d)] {
        let mc = check_matrix(&compress(op), tol);
        verdict = verdict.and(mc.verdict);
        if witness.is_none() {
            if let Some((v, lambda, kind)) = &mc.failing_direction {
                let mut field = LatticeField::zeros(&grid);
                for (s, val) in sites.iter().zip(v) {
                    field.values_mut()[*s] = *val;
                }
                let value = match cond.axis() {
                    None => op.sesquilinear(&field, &field)?,
                    Some(j) if left => op.reflected_sesquilinear(j, &field, &field)?,
                    Some(j) => op.sesquilinear(&field, &field.reflect(j)?)?,
                };
                witness = Some((
                    tag.to_string(),
                    WitnessResult {
                        field,
                        value,
                        eigenvalue: *lambda,
                        kind: *kind,
                    },
                ));
            }
        }
        blocks.push(BlockReport::new(tag, &mc));
    }

    // Doubled matrix: reflection, block swap and 𝑫 composed entrywise.
    let big = cov.block_matrix();
    let idx: Vec<usize> = sites.iter().copied().chain(sites.iter().map(|s| s + n)).collect();
    let swap = |i: usize| (i + n) % (2 * n);
    let refl = |i: usize| if i < n { perm[i] } else { perm[i - n] + n };
    let m = idx.len();
    let full_matrix = CMatrix::from_fn(m, m, |r, c| {
        let (p, q) = (idx[r], idx[c]);
        if measure {
            big[(swap(p), q)]
        } else if left {
            big[(swap(refl(p)), q)]
        } else {
            big[(swap(p), refl(q))]
        }
    });
    let full_check = check_matrix(&full_matrix, tol);
    let full = BlockReport::new("full", &full_check);
    Ok(ChargedReport {
        condition: cond,
        tol: tol.as_f64(),
        consistent: full.verdict == verdict,
        blocks,
        full,
        verdict,
        witness,
    })
}

/// `max_k |conj σ̃±(−π_j k) − σ̃∓(k)|` over both pairings.
pub fn check_charged_reflection_covariance<T: Real>(
    sigma_plus: &FourierMultiplier<T>,
    sigma_minus: &FourierMultiplier<T>,
    axis: usize,
) -> Result<T> {
    let grid = sigma_plus.grid();
    if grid != sigma_minus.grid() {
        return Err(Error::GridMismatch("σ₊ and σ₋ sampled on different grids".into()));
    }
    grid.axis(axis)?;
    let (p, m) = (sigma_plus.values(), sigma_minus.values());
    Ok((0..p.len())
        .map(|k| {
            let partner = grid.reflect_momentum(grid.negate_momentum(k), axis);
            (p[partner].conj() - m[k]).norm().max((m[partner].conj() - p[k]).norm())
        })
        .fold(T::zero(), T::max))
}

/// `σ̃₋(k) := conj σ̃₊(−π_j k)`, the partner making the pair reflection covariant.
pub fn conjugate_reflected<T: Real>(sigma_plus: &FourierMultiplier<T>, axis: usize) -> Result<FourierMultiplier<T>> {
    let grid = sigma_plus.grid();
    grid.axis(axis)?;
    let values = (0..grid.total_sites())
        .map(|k| sigma_plus.values()[grid.reflect_momentum(grid.negate_momentum(k), axis)].conj())
        .collect();
    FourierMultiplier::from_values(grid, values)
}

/// Permanent by expansion over permutations (small matrices only).
pub fn permanent<T: Real>(m: &CMatrix<T>) -> C<T> {
    fn rec<T: Real>(m: &CMatrix<T>, row: usize, used: &mut Vec<bool>) -> C<T> {
        if row == m.nrows() {
            return C::one();
        }
        let mut acc = C::zero();
        for c in 0..m.ncols() {
            if !used[c] {
                used[c] = true;
                acc += m[(row, c)] * rec(m, row + 1, used);
                used[c] = false;
            }
        }
        acc
    }
    rec(m, 0, &mut vec![false; m.ncols()])
}
