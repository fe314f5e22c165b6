//! Named positivity checks on covariance operators.
//!
//! Every reflection condition compresses a kernel matrix to the sites on one
//! side of a coordinate hyperplane, composes it with the reflection, and
//! tests the Hermitian part for positive semidefiniteness. Hermiticity is
//! measured separately rather than assumed.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{HalfSpace, LatticeField};
use crate::linalg::{CMatrix, HermitianEigen};
use crate::multiplier::CovarianceOperator;
use crate::scalar::{Real, C};

pub const DEFAULT_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RPCondition {
    /// `0 ≤ D` on all of lattice L₂.
    MeasurePositivity,
    /// `0 ≤ ϑD` on the positive-time half.
    TimeRP,
    /// `0 ≤ Dϑ` on the positive-time half.
    AltTimeRP,
    /// `0 ≤ π_j D` on the `j`-positive half.
    SpatialRP(usize),
    /// `0 ≤ D π_j` on the `j`-positive half.
    AltSpatialRP(usize),
    /// Both of the above for axis `j`.
    DoublyRP(usize),
}

impl RPCondition {
    pub fn axis(&self) -> Option<usize> {
        match *self {
            Self::MeasurePositivity => None,
            Self::TimeRP | Self::AltTimeRP => Some(0),
            Self::SpatialRP(j) | Self::AltSpatialRP(j) | Self::DoublyRP(j) => Some(j),
        }
    }
}

impl fmt::Display for RPCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::MeasurePositivity => f.write_str("MeasurePositivity"),
            Self::TimeRP => f.write_str("TimeRP"),
            Self::AltTimeRP => f.write_str("AltTimeRP"),
            Self::SpatialRP(j) => write!(f, "SpatialRP({j})"),
            Self::AltSpatialRP(j) => write!(f, "AltSpatialRP({j})"),
            Self::DoublyRP(j) => write!(f, "DoublyRP({j})"),
        }
    }
}

/// Splits `Name(3)` into `("Name", Some(3))`.
pub(crate) fn split_axis_arg(s: &str) -> std::result::Result<(&str, Option<usize>), String> {
    let s = s.trim();
    match s.find('(') {
        None => Ok((s, None)),
        Some(open) => {
            let inner = s[open + 1..]
                .strip_suffix(')')
                .ok_or_else(|| format!("unbalanced parentheses in `{s}`"))?;
            let axis = inner
                .trim()
                .parse()
                .map_err(|_| format!("bad axis `{inner}` in `{s}`"))?;
            Ok((&s[..open], Some(axis)))
        }
    }
}

impl FromStr for RPCondition {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let (name, axis) = split_axis_arg(s)?;
        let need = |a: Option<usize>| a.ok_or_else(|| format!("`{name}` needs an axis, e.g. {name}(1)"));
        match name {
            "MeasurePositivity" => Ok(Self::MeasurePositivity),
            "TimeRP" => Ok(Self::TimeRP),
            "AltTimeRP" => Ok(Self::AltTimeRP),
            "SpatialRP" => Ok(Self::SpatialRP(need(axis)?)),
            "AltSpatialRP" => Ok(Self::AltSpatialRP(need(axis)?)),
            "DoublyRP" => Ok(Self::DoublyRP(need(axis)?)),
            _ => Err(format!("unknown condition `{s}`")),
        }
    }
}

impl Serialize for RPCondition {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for RPCondition {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Pass,
    Fail,
    NotApplicable,
}

impl Verdict {
    pub fn and(self, other: Verdict) -> Verdict {
        use Verdict::*;
        match (self, other) {
            (Fail, _) | (_, Fail) => Fail,
            (NotApplicable, _) | (_, NotApplicable) => NotApplicable,
            _ => Pass,
        }
    }

    pub fn is_pass(self) -> bool {
        self == Verdict::Pass
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WitnessKind {
    /// Eigenvector of a negative eigenvalue of the Hermitian part.
    NegativeDirection,
    /// Eigenvector of the anti-Hermitian part.
    NonHermitian,
}

/// A test function certifying a violated positivity condition.
#[derive(Debug, Clone)]
pub struct WitnessResult<T: Real> {
    pub field: LatticeField<T>,
    /// The form `⟨f, π D f⟩` (or the variant matching the condition),
    /// recomputed from the covariance rather than from the eigenproblem.
    pub value: C<T>,
    pub eigenvalue: T,
    pub kind: WitnessKind,
}

/// Outcome of one check. Numbers are reported in `f64` whatever the scalar.
#[derive(Debug, Clone, Serialize)]
pub struct RPReport<T: Real> {
    pub condition: RPCondition,
    pub dimension: usize,
    pub herm_defect: f64,
    pub min_eig: f64,
    pub norm: f64,
    pub tol: f64,
    pub verdict: Verdict,
    #[serde(skip)]
    pub witness: Option<WitnessResult<T>>,
}

impl<T: Real> RPReport<T> {
    fn not_applicable(condition: RPCondition, tol: T) -> Self {
        Self {
            condition,
            dimension: 0,
            herm_defect: 0.0,
            min_eig: 0.0,
            norm: 0.0,
            tol: tol.as_f64(),
            verdict: Verdict::NotApplicable,
            witness: None,
        }
    }
}

/// Spectral summary of a compressed matrix.
#[derive(Debug, Clone)]
pub struct MatrixCheck<T: Real> {
    pub dimension: usize,
    pub herm_defect: T,
    pub min_eig: T,
    pub norm: T,
    pub verdict: Verdict,
    /// Unit eigenvector behind a failure: the most negative direction of
    /// the Hermitian part, or the dominant direction of the anti-Hermitian
    /// part when only hermiticity fails.
    pub failing_direction: Option<(Vec<C<T>>, T, WitnessKind)>,
}

/// Pass iff `‖A − A*‖_F / ‖A‖_F ≤ tol` and `λ_min((A + A*)/2) ≥ −tol ‖(A + A*)/2‖₂`.
pub fn check_matrix<T: Real>(a: &CMatrix<T>, tol: T) -> MatrixCheck<T> {
    let dimension = a.nrows();
    if dimension == 0 {
        return MatrixCheck {
            dimension,
            herm_defect: T::zero(),
            min_eig: T::zero(),
            norm: T::zero(),
            verdict: Verdict::Pass,
            failing_direction: None,
        };
    }
    let herm_defect = a.hermiticity_defect();
    let eig = HermitianEigen::new(a);
    let norm = eig.spectral_radius();
    let min_eig = eig.min();
    let negative = min_eig < -tol * norm;
    let skewed = herm_defect > tol;
    let failing_direction = if negative {
        Some((eig.vectors.column(0), min_eig, WitnessKind::NegativeDirection))
    } else if skewed {
        let anti = HermitianEigen::new(&a.antihermitian_part());
        let (col, val) = if anti.max().abs() >= anti.min().abs() {
            (dimension - 1, anti.max())
        } else {
            (0, anti.min())
        };
        Some((anti.vectors.column(col), val, WitnessKind::NonHermitian))
    } else {
        None
    };
    MatrixCheck {
        dimension,
        herm_defect,
        min_eig,
        norm,
        verdict: if negative || skewed {
            Verdict::Fail
        } else {
            Verdict::Pass
        },
        failing_direction,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Side {
    /// `π D`: rows reflected.
    Left,
    /// `D π`: columns reflected.
    Right,
    /// `D`.
    Plain,
}

/// Compressed matrix for a reflection on the `j`-positive half.
fn compressed<T: Real>(d: &CovarianceOperator<T>, j: Option<usize>, side: Side) -> Result<(Vec<usize>, CMatrix<T>)> {
    let grid = d.grid();
    let sites = match j {
        Some(j) => grid.halfspace(j, HalfSpace::Positive)?,
        None => (0..grid.total_sites()).collect(),
    };
    let perm: Vec<usize> = match j {
        Some(j) => grid.reflect(j)?.to_vec(),
        None => (0..grid.total_sites()).collect(),
    };
    let n = sites.len();
    let a = CMatrix::from_fn(n, n, |r, c| {
        let (x, y) = (sites[r], sites[c]);
        match side {
            Side::Left => d.entry(perm[x], y),
            Side::Right => d.entry(x, perm[y]),
            Side::Plain => d.entry(x, y),
        }
    });
    Ok((sites, a))
}

/// The matrix whose positivity a condition asserts (the first factor for
/// [`RPCondition::DoublyRP`]).
pub fn compressed_matrix<T: Real>(cond: RPCondition, d: &CovarianceOperator<T>) -> Result<CMatrix<T>> {
    let (j, side) = parts(cond)[0];
    Ok(compressed(d, j, side)?.1)
}

fn parts(cond: RPCondition) -> Vec<(Option<usize>, Side)> {
    match cond {
        RPCondition::MeasurePositivity => vec![(None, Side::Plain)],
        RPCondition::TimeRP => vec![(Some(0), Side::Left)],
        RPCondition::AltTimeRP => vec![(Some(0), Side::Right)],
        RPCondition::SpatialRP(j) => vec![(Some(j), Side::Left)],
        RPCondition::AltSpatialRP(j) => vec![(Some(j), Side::Right)],
        RPCondition::DoublyRP(j) => vec![(Some(j), Side::Left), (Some(j), Side::Right)],
    }
}

fn require_symmetric<T: Real>(d: &CovarianceOperator<T>, tol: T) -> Result<()> {
    let defect = d.symmetry_defect();
    if defect > tol.max(T::lit(1e-12)) {
        return Err(Error::NotACovariance {
            defect: defect.as_f64(),
        });
    }
    Ok(())
}

/// Runs one named condition.
pub fn check<T: Real>(cond: RPCondition, d: &CovarianceOperator<T>, tol: T) -> Result<RPReport<T>> {
    require_symmetric(d, tol)?;
    if let Some(j) = cond.axis() {
        if j >= d.grid().dim() {
            return Ok(RPReport::not_applicable(cond, tol));
        }
    }
    let mut report: Option<RPReport<T>> = None;
    for (j, side) in parts(cond) {
        let (sites, a) = compressed(d, j, side)?;
        let mc = check_matrix(&a, tol);
        let witness = match &mc.failing_direction {
            Some((v, lambda, kind)) => Some(make_witness(d, j, side, &sites, v, *lambda, *kind)?),
            None => None,
        };
        let part = RPReport {
            condition: cond,
            dimension: mc.dimension,
            herm_defect: mc.herm_defect.as_f64(),
            min_eig: mc.min_eig.as_f64(),
            norm: mc.norm.as_f64(),
            tol: tol.as_f64(),
            verdict: mc.verdict,
            witness,
        };
        report = Some(match report {
            None => part,
            Some(prev) => merge(prev, part),
        });
    }
    Ok(report.expect("at least one part"))
}

fn merge<T: Real>(a: RPReport<T>, b: RPReport<T>) -> RPReport<T> {
    RPReport {
        condition: a.condition,
        dimension: a.dimension.max(b.dimension),
        herm_defect: a.herm_defect.max(b.herm_defect),
        min_eig: a.min_eig.min(b.min_eig),
        norm: a.norm.max(b.norm),
        tol: a.tol,
        verdict: a.verdict.and(b.verdict),
        witness: a.witness.or(b.witness),
    }
}

fn make_witness<T: Real>(
    d: &CovarianceOperator<T>,
    j: Option<usize>,
    side: Side,
    sites: &[usize],
    v: &[C<T>],
    eigenvalue: T,
    kind: WitnessKind,
) -> Result<WitnessResult<T>> {
    let grid = d.grid();
    let mut field = LatticeField::zeros(grid);
    for (s, val) in sites.iter().zip(v) {
        field.values_mut()[*s] = *val;
    }
    let value = match (j, side) {
        (Some(j), Side::Left) => d.reflected_sesquilinear(j, &field, &field)?,
        (Some(j), Side::Right) => d.sesquilinear(&field, &field.reflect(j)?)?,
        _ => d.sesquilinear(&field, &field)?,
    };
    Ok(WitnessResult {
        field,
        value,
        eigenvalue,
        kind,
    })
}

/// Negative direction of `π_j D` on the `j`-positive half, if any.
pub fn find_witness<T: Real>(d: &CovarianceOperator<T>, j: usize, tol: T) -> Result<Option<WitnessResult<T>>> {
    require_symmetric(d, tol)?;
    d.grid().axis(j)?;
    let (sites, a) = compressed(d, Some(j), Side::Left)?;
    let mc = check_matrix(&a, tol);
    match mc.failing_direction {
        Some((v, lambda, WitnessKind::NegativeDirection)) => Ok(Some(make_witness(
            d,
            Some(j),
            Side::Left,
            &sites,
            &v,
            lambda,
            WitnessKind::NegativeDirection,
        )?)),
        _ => Ok(None),
    }
}

fn check_support<T: Real>(d: &CovarianceOperator<T>, j: usize, fs: &[LatticeField<T>]) -> Result<()> {
    let mask = d.grid().halfspace_mask(j, HalfSpace::Positive)?;
    for (i, f) in fs.iter().enumerate() {
        if *f.grid() != *d.grid() {
            return Err(Error::GridMismatch(format!("test function {i} lives on another grid")));
        }
        if let Some(site) = f.first_outside(&mask) {
            return Err(Error::SupportError { field: i, site });
        }
    }
    Ok(())
}

/// `S(f) = exp(−½ B(f, f))` with the bilinear form of `D`.
fn characteristic<T: Real>(d: &CovarianceOperator<T>, f: &LatticeField<T>) -> Result<C<T>> {
    Ok((d.bilinear(f, f)? * T::lit(-0.5)).exp())
}

/// `M_{ab} = S(f_b − π_j conj f_a)` for test functions in the `j`-positive half.
pub fn build_m<T: Real>(d: &CovarianceOperator<T>, j: usize, fs: &[LatticeField<T>]) -> Result<CMatrix<T>> {
    check_support(d, j, fs)?;
    let reflected: Vec<LatticeField<T>> = fs
        .iter()
        .map(|f| f.conj().reflect(j))
        .collect::<Result<_>>()?;
    let n = fs.len();
    let mut m = CMatrix::zeros(n, n);
    for a in 0..n {
        for b in 0..n {
            let g = fs[b].sub(&reflected[a])?;
            m[(a, b)] = characteristic(d, &g)?;
        }
    }
    Ok(m)
}

/// The Hermitian-form identity
/// `c* M c = Σ conj(d_a) d_b exp⟨f_a, π_j D f_b⟩`, `d_a = c_a S(f_a)`.
#[derive(Debug, Clone, Copy)]
pub struct GaussianIdentity<T: Real> {
    pub lhs: C<T>,
    pub rhs: C<T>,
    /// `|lhs − rhs| / max(|lhs|, |rhs|)`.
    pub defect: T,
    /// Reflection-covariance defect of `D`; the identity relies on it.
    pub covariance_defect: T,
}

pub fn verify_gaussian_identity<T: Real>(
    d: &CovarianceOperator<T>,
    j: usize,
    fs: &[LatticeField<T>],
    cs: &[C<T>],
) -> Result<GaussianIdentity<T>> {
    if fs.len() != cs.len() {
        return Err(Error::LengthMismatch {
            expected: fs.len(),
            found: cs.len(),
        });
    }
    let m = build_m(d, j, fs)?;
    let lhs = m.sesquilinear(cs, cs);
    let ds: Vec<C<T>> = fs
        .iter()
        .zip(cs)
        .map(|(f, c)| Ok(*c * characteristic(d, f)?))
        .collect::<Result<_>>()?;
    let mut rhs = C::zero();
    for (a, fa) in fs.iter().enumerate() {
        for (b, fb) in fs.iter().enumerate() {
            rhs += ds[a].conj() * ds[b] * d.reflected_sesquilinear(j, fa, fb)?.exp();
        }
    }
    let scale = lhs.norm().max(rhs.norm());
    let defect = if scale == T::zero() {
        T::zero()
    } else {
        (lhs - rhs).norm() / scale
    };
    Ok(GaussianIdentity {
        lhs,
        rhs,
        defect,
        covariance_defect: d.reflection_covariance_defect(j)?,
    })
}

/// Spectrum of `𝒦_{ab} = exp ⟨f_a, π_j D f_b⟩`.
#[derive(Debug, Clone)]
pub struct KBoundReport<T: Real> {
    pub kappa: CMatrix<T>,
    pub min_eig: T,
    /// Smallest eigenvalue of `𝒦 − J`, `J` the all-ones matrix.
    pub min_eig_minus_ones: T,
    /// `𝒦 ≥ 0`.
    pub psd: bool,
    /// `𝒦 ≥ J`.
    pub geq_ones: bool,
    /// `𝒦 ≥ I`.
    pub geq_identity: bool,
}

pub fn check_k_geq_i<T: Real>(
    d: &CovarianceOperator<T>,
    j: usize,
    fs: &[LatticeField<T>],
    tol: T,
) -> Result<KBoundReport<T>> {
    check_support(d, j, fs)?;
    let n = fs.len();
    let mut kappa = CMatrix::zeros(n, n);
    for a in 0..n {
        for b in 0..n {
            kappa[(a, b)] = d.reflected_sesquilinear(j, &fs[a], &fs[b])?.exp();
        }
    }
    let eig = HermitianEigen::new(&kappa);
    let scale = eig.spectral_radius().max(T::one());
    let ones = CMatrix::from_fn(n, n, |_, _| C::one());
    let shifted = HermitianEigen::new(&(&kappa - &ones));
    let min_eig = eig.min();
    let min_eig_minus_ones = shifted.min();
    Ok(KBoundReport {
        min_eig,
        min_eig_minus_ones,
        psd: min_eig >= -tol * scale,
        geq_ones: min_eig_minus_ones >= -tol * scale,
        geq_identity: n == 0 || min_eig >= T::one() - tol,
        kappa,
    })
}

/// Agreement of `0 ≤ π_j D` and `0 ≤ D π_j` on the `j`-positive half.
#[derive(Debug, Clone)]
pub struct EquivalenceReport<T: Real> {
    pub forward: RPReport<T>,
    pub backward: RPReport<T>,
    /// Both pass or both fail.
    pub agree: bool,
    /// `max |D[x, y] − conj D[π x, π y]| / max |D|` over all sites.
    pub identity_defect: T,
    pub verdict: Verdict,
}

pub fn check_equivalence_vi2<T: Real>(
    d: &CovarianceOperator<T>,
    j: usize,
    tol: T,
) -> Result<EquivalenceReport<T>> {
    let grid = d.grid();
    let (fwd_cond, bwd_cond) = if j == 0 {
        (RPCondition::TimeRP, RPCondition::AltTimeRP)
    } else {
        (RPCondition::SpatialRP(j), RPCondition::AltSpatialRP(j))
    };
    let na = |tol| EquivalenceReport {
        forward: RPReport::not_applicable(fwd_cond, tol),
        backward: RPReport::not_applicable(bwd_cond, tol),
        agree: false,
        identity_defect: T::zero(),
        verdict: Verdict::NotApplicable,
    };
    if j >= grid.dim() || d.symmetry_defect() > tol.max(T::lit(1e-12)) {
        return Ok(na(tol));
    }
    if d.reflection_covariance_defect(j)? > tol.max(T::lit(1e-12)) {
        return Ok(na(tol));
    }
    let forward = check(fwd_cond, d, tol)?;
    let backward = check(bwd_cond, d, tol)?;
    let perm = grid.reflect(j)?;
    let n = grid.total_sites();
    let mut worst = T::zero();
    let mut scale = T::min_positive_value();
    for x in 0..n {
        for y in 0..n {
            let e = d.entry(x, y);
            scale = scale.max(e.norm());
            worst = worst.max((e - d.entry(perm[x], perm[y]).conj()).norm());
        }
    }
    let identity_defect = worst / scale;
    let agree = forward.verdict == backward.verdict;
    let verdict = if agree && identity_defect <= tol {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    Ok(EquivalenceReport {
        forward,
        backward,
        agree,
        identity_defect,
        verdict,
    })
}

/// `⟨f, π_j D f⟩` evaluated by a direct double sum over sites.
pub fn reflected_form_direct<T: Real>(d: &CovarianceOperator<T>, j: usize, f: &LatticeField<T>) -> Result<C<T>> {
    let grid = d.grid();
    let perm = grid.reflect(j)?;
    let vol = grid.cell_volume();
    let v = f.values();
    let mut acc = Complex::zero();
    for x in 0..v.len() {
        for y in 0..v.len() {
            acc += v[x].conj() * d.entry(perm[x], y) * v[y];
        }
    }
    Ok(acc * (vol * vol))
}
