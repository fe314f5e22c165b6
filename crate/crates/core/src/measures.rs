//! Hilbert-Schmidt diagnostics and the Gaussian/phase decomposition of a
//! complex covariance with commuting real and imaginary parts.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::SpacetimeGrid;
use crate::multiplier::{FourierMultiplier, MultiplierSpec};
use crate::scalar::{Real, C};

/// Log-log growth rate of `Σλ²` under refinement above which the sweep
/// reports divergence.
pub const DIVERGENCE_SLOPE: f64 = 0.5;

#[derive(Debug, Clone, Serialize)]
pub struct YngvasonReport {
    /// `λ(k) = L̃(k)/K̃(k)` in grid momentum order.
    pub lambda: Vec<f64>,
    pub hs_norm_sq: f64,
    /// `(Π_{j ≤ n} (1 + λ_j²))^{1/2}` with `|λ_j|` descending.
    pub z_partial: Vec<f64>,
    pub z_final: f64,
    /// `ln z_final`, finite even when `z_final` overflows.
    pub log_z: f64,
    /// Whether the multiset of `λ` is symmetric under `λ ↦ −λ`.
    pub spectrum_even: bool,
    pub divergence_flag: bool,
    pub sweep: Vec<SweepPoint>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepPoint {
    pub modes: usize,
    pub hs_norm_sq: f64,
    pub log_z: f64,
}

fn lambdas<T: Real>(k: &[T], l: &[T]) -> Result<Vec<T>> {
    if k.len() != l.len() {
        return Err(Error::LengthMismatch {
            expected: k.len(),
            found: l.len(),
        });
    }
    k.iter()
        .zip(l)
        .enumerate()
        .map(|(i, (&kk, &ll))| {
            if kk > T::zero() {
                Ok(ll / kk)
            } else {
                Err(Error::HermitianPartNotPositive { index: i })
            }
        })
        .collect()
}

fn is_even<T: Real>(lambda: &[T]) -> bool {
    let scale = lambda.iter().fold(T::zero(), |m, x| m.max(x.abs()));
    let mut pos: Vec<T> = lambda.to_vec();
    let mut neg: Vec<T> = lambda.iter().map(|&x| -x).collect();
    pos.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    neg.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let tol = T::lit(1e-12) * scale.max(T::one());
    pos.iter().zip(&neg).all(|(a, b)| (*a - *b).abs() <= tol)
}

/// Diagnostics from pointwise symbols `K̃ > 0` and `L̃`.
pub fn yngvason_from_values<T: Real>(k: &[T], l: &[T]) -> Result<YngvasonReport> {
    let lambda = lambdas(k, l)?;
    let hs: T = lambda.iter().map(|&x| x * x).sum();
    let mut sorted = lambda.clone();
    sorted.sort_by(|a, b| b.abs().partial_cmp(&a.abs()).expect("finite"));
    let mut log_z = T::zero();
    let mut z_partial = Vec::with_capacity(sorted.len());
    for x in &sorted {
        log_z += (T::one() + *x * *x).ln() * T::lit(0.5);
        z_partial.push(log_z.exp().as_f64());
    }
    Ok(YngvasonReport {
        spectrum_even: is_even(&lambda),
        lambda: lambda.iter().map(|x| x.as_f64()).collect(),
        hs_norm_sq: hs.as_f64(),
        z_final: log_z.exp().as_f64(),
        z_partial,
        log_z: log_z.as_f64(),
        divergence_flag: false,
        sweep: Vec::new(),
    })
}

pub fn yngvason<T: Real>(m: &FourierMultiplier<T>) -> Result<YngvasonReport> {
    yngvason_from_values(&m.k_tilde(), &m.l_tilde())
}

/// Diagnostics on the finest grid plus the trend of `Σλ²` over all grids.
/// The flag is set when the fitted log-log slope against mode count
/// reaches [`DIVERGENCE_SLOPE`].
pub fn yngvason_sweep<T: Real>(spec: &MultiplierSpec<T>, grids: &[SpacetimeGrid<T>]) -> Result<YngvasonReport> {
    if grids.is_empty() {
        return Err(Error::InvalidParameter("refinement sweep needs at least one grid".into()));
    }
    let mut sweep = Vec::with_capacity(grids.len());
    let mut last = None;
    for g in grids {
        let r = yngvason(&FourierMultiplier::sample(spec.clone(), g)?)?;
        sweep.push(SweepPoint {
            modes: g.total_sites(),
            hs_norm_sq: r.hs_norm_sq,
            log_z: r.log_z,
        });
        last = Some(r);
    }
    let mut report = last.expect("nonempty");
    report.divergence_flag = growth_slope(&sweep).is_some_and(|s| s >= DIVERGENCE_SLOPE);
    report.sweep = sweep;
    Ok(report)
}

/// Least-squares slope of `ln Σλ²` against `ln modes`.
pub fn growth_slope(sweep: &[SweepPoint]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = sweep
        .iter()
        .filter(|p| p.hs_norm_sq > 0.0)
        .map(|p| ((p.modes as f64).ln(), p.hs_norm_sq.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    Some(pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / sxx)
}

#[derive(Debug, Clone, Serialize)]
pub struct MeasureDecomposition {
    /// `G̃ = (K̃² + L̃²)/K̃`.
    pub g_tilde: Vec<f64>,
    /// `Ỹ = L̃/(K̃² + L̃²)`.
    pub y_tilde: Vec<f64>,
    pub z: f64,
    pub log_z: f64,
    /// `max |D̃⁻¹ − (G̃⁻¹ − iỸ)| / max |D̃⁻¹|`.
    pub identity_defect: f64,
    pub spectrum_even: bool,
}

pub fn decompose<T: Real>(k: &[T], l: &[T]) -> Result<MeasureDecomposition> {
    let y = yngvason_from_values(k, l)?;
    let mut g = Vec::with_capacity(k.len());
    let mut yt = Vec::with_capacity(k.len());
    let mut worst = T::zero();
    let mut scale = T::zero();
    for (&kk, &ll) in k.iter().zip(l) {
        let mod2 = kk * kk + ll * ll;
        let gt = kk + ll * ll / kk;
        let ytv = ll / mod2;
        let inv = C::new(T::one(), T::zero()) / C::new(kk, ll);
        let rebuilt = C::new(T::one() / gt, -ytv);
        worst = worst.max((inv - rebuilt).norm());
        scale = scale.max(inv.norm());
        g.push(gt.as_f64());
        yt.push(ytv.as_f64());
    }
    let defect = if scale > T::zero() { worst / scale } else { T::zero() };
    Ok(MeasureDecomposition {
        g_tilde: g,
        y_tilde: yt,
        z: y.z_final,
        log_z: y.log_z,
        identity_defect: defect.as_f64(),
        spectrum_even: y.spectrum_even,
    })
}

pub fn decompose_multiplier<T: Real>(m: &FourierMultiplier<T>) -> Result<MeasureDecomposition> {
    decompose(&m.k_tilde(), &m.l_tilde())
}
