//! Compactification of a Line axis by summing kernel images.

use num_traits::Zero;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{AxisKind, AxisSpec, SpacetimeGrid};
use crate::multiplier::CovarianceOperator;
use crate::rp_check::{check, RPCondition, RPReport, Verdict};
use crate::scalar::{Real, C};

pub const DEFAULT_PERIODIZE_TOL: f64 = 1e-12;

/// Decay ratio above which the image sum is refused.
pub const MAX_TAIL_RATIO: f64 = 0.5;

#[derive(Debug, Clone)]
pub struct PeriodizationResult<T: Real> {
    pub covariance: CovarianceOperator<T>,
    /// `2N* + 1` images `n ∈ [−N*, N*]`.
    pub images_used: usize,
    /// Max-norm of the first omitted image pair relative to the partial sum.
    pub truncation_residual: T,
    /// Max kernel size on `|d_i| ∈ [2ℓ, 3ℓ)` over that on `[ℓ, 2ℓ)`.
    pub tail_ratio: T,
    pub axis: usize,
    pub period: T,
}

#[derive(Debug, Clone, Serialize)]
pub struct PeriodizationSummary {
    pub axis: usize,
    pub period: f64,
    pub images_used: usize,
    pub truncation_residual: f64,
    pub tail_ratio: f64,
}

impl<T: Real> PeriodizationResult<T> {
    pub fn summary(&self) -> PeriodizationSummary {
        PeriodizationSummary {
            axis: self.axis,
            period: self.period.as_f64(),
            images_used: self.images_used,
            truncation_residual: self.truncation_residual.as_f64(),
            tail_ratio: self.tail_ratio.as_f64(),
        }
    }
}

/// Lattice steps in one period, if `period` is an even multiple of `spacing`.
fn period_steps<T: Real>(period: T, spacing: T) -> Option<usize> {
    let r = period / spacing;
    let n = r.round();
    let ok = n >= T::lit(2.0) && (r - n).abs() <= T::lit(1e-9) * r;
    let n = n.to_usize()?;
    (ok && n % 2 == 0).then_some(n)
}

/// Replaces Line axis `axis` by a circle of circumference `period`:
/// `D_c(x) = Σ_n D(x + n ℓ e_i)`, adding image pairs `±n` until the next
/// pair is below `tol` times the partial sum in max-norm.
pub fn periodize<T: Real>(
    d: &CovarianceOperator<T>,
    axis: usize,
    period: T,
    tol: T,
) -> Result<PeriodizationResult<T>> {
    let grid = d.grid();
    let ax = *grid.axis(axis)?;
    if ax.kind != AxisKind::Line {
        return Err(Error::GridMismatch(format!("axis {axis} is already periodic")));
    }
    if !(tol > T::zero()) {
        return Err(Error::InvalidParameter("tolerance must be positive".into()));
    }
    let p = period_steps(period, ax.spacing).ok_or_else(|| {
        Error::GridMismatch(format!(
            "period {period} is not an even multiple of spacing {}",
            ax.spacing
        ))
    })?;
    if ax.sites < 3 * p {
        return Err(Error::GridMismatch(format!(
            "axis {axis} spans {} sites; at least {} needed for period {period}",
            ax.sites,
            3 * p
        )));
    }

    let embed = d.embedding_shape().to_vec();
    let e = embed[axis] as isize;
    let half = e / 2;
    let p = p as isize;

    // Empirical decay along the axis.
    let kernel = d.kernel_values();
    let mut near = T::zero();
    let mut far = T::zero();
    for (idx, v) in kernel.iter().enumerate() {
        let di = d.displacement_of(idx)[axis].abs();
        if di >= p && di < 2 * p {
            near = near.max(v.norm());
        } else if di >= 2 * p && di < 3 * p {
            far = far.max(v.norm());
        }
    }
    let tail_ratio = if near > T::zero() { far / near } else { T::zero() };
    if tail_ratio >= T::lit(MAX_TAIL_RATIO) {
        return Err(Error::NoDecay {
            axis,
            ratio: tail_ratio.as_f64(),
        });
    }

    let mut new_embed = embed.clone();
    new_embed[axis] = p as usize;
    let new_total: usize = new_embed.iter().product();
    let new_strides = crate::grid::row_major_strides(&new_embed);
    // Centred displacement of every new kernel slot, as the base for images.
    let bases: Vec<Vec<isize>> = (0..new_total)
        .map(|idx| {
            new_embed
                .iter()
                .zip(&new_strides)
                .map(|(&n, &s)| {
                    let i = ((idx / s) % n) as isize;
                    if i < n as isize / 2 {
                        i
                    } else {
                        i - n as isize
                    }
                })
                .collect()
        })
        .collect();

    let image = |base: &[isize], n: isize| -> Option<C<T>> {
        let di = base[axis] + n * p;
        if di < -half || di >= half {
            return None;
        }
        let mut disp = base.to_vec();
        disp[axis] = di;
        Some(d.kernel_at(&disp))
    };

    let mut sum: Vec<C<T>> = bases.iter().map(|b| image(b, 0).expect("centre image")).collect();
    let mut n = 1isize;
    let residual;
    loop {
        let scale = sum.iter().map(|z| z.norm()).fold(T::zero(), T::max);
        let mut pair = Vec::with_capacity(new_total);
        let mut complete = true;
        let mut size = T::zero();
        for b in &bases {
            match (image(b, n), image(b, -n)) {
                (Some(u), Some(v)) => {
                    size = size.max((u + v).norm().max(u.norm()).max(v.norm()));
                    pair.push(u + v);
                }
                _ => {
                    complete = false;
                    break;
                }
            }
        }
        if !complete {
            // Out of stored displacements; the last pair added is the residual estimate.
            let last = (n - 1).max(1);
            let mut est = T::zero();
            for b in &bases {
                let u = image(b, last).unwrap_or_else(C::zero);
                let v = image(b, -last).unwrap_or_else(C::zero);
                est = est.max(u.norm()).max(v.norm());
            }
            let rel = if scale > T::zero() { est / scale } else { T::zero() };
            if rel < tol {
                residual = rel;
                break;
            }
            return Err(Error::Truncation {
                residual: rel.as_f64(),
                images: (2 * (n - 1) + 1) as usize,
            });
        }
        if size <= tol * scale {
            residual = if scale > T::zero() { size / scale } else { T::zero() };
            break;
        }
        for (s, v) in sum.iter_mut().zip(pair) {
            *s += v;
        }
        n += 1;
    }
    let images_used = (2 * (n - 1) + 1) as usize;

    let mut axes = grid.axes().to_vec();
    axes[axis] = AxisSpec::circle(p as usize, ax.spacing * T::from_isize_lossy(p));
    axes[axis].spacing = ax.spacing;
    let new_grid = SpacetimeGrid::new(axes)?;
    let label = format!("periodized[{axis}]({})", d.label());
    let covariance = CovarianceOperator::from_kernel(&new_grid, new_embed, sum, label)?;
    Ok(PeriodizationResult {
        covariance,
        images_used,
        truncation_residual: residual,
        tail_ratio,
        axis,
        period,
    })
}

/// Periodizes every Line axis in turn, in the given order.
pub fn compactify_all<T: Real>(
    d: &CovarianceOperator<T>,
    order: &[usize],
    periods: &[T],
    tol: T,
) -> Result<CovarianceOperator<T>> {
    if order.len() != periods.len() {
        return Err(Error::LengthMismatch {
            expected: order.len(),
            found: periods.len(),
        });
    }
    let mut cur = d.clone();
    for (&axis, &period) in order.iter().zip(periods) {
        cur = periodize(&cur, axis, period, tol)?.covariance;
    }
    Ok(cur)
}

#[derive(Debug, Clone)]
pub struct CompactificationRP<T: Real> {
    pub periodization: PeriodizationResult<T>,
    pub before: RPReport<T>,
    pub after: RPReport<T>,
    pub verdict: Verdict,
}

/// `DoublyRP(j)` on `D` and on `D` with axis `i` compactified to period `ℓ`.
pub fn verify_compactification_rp<T: Real>(
    d: &CovarianceOperator<T>,
    axis: usize,
    period: T,
    checked_axis: usize,
    tol: T,
) -> Result<CompactificationRP<T>> {
    let cond = RPCondition::DoublyRP(checked_axis);
    let before = check(cond, d, tol)?;
    let periodization = periodize(d, axis, period, T::lit(DEFAULT_PERIODIZE_TOL))?;
    let after = check(cond, &periodization.covariance, tol)?;
    let verdict = before.verdict.and(after.verdict);
    Ok(CompactificationRP {
        periodization,
        before,
        after,
        verdict,
    })
}
