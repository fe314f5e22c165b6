//! Executes configured checks against one grid and multiplier.

use std::cell::OnceCell;

use anyhow::{anyhow, bail, Context, Result};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use rplab::charged::check_charged;
use rplab::compactify::{periodize, DEFAULT_PERIODIZE_TOL};
use rplab::gaussian::{pairing_oracle, schwinger, ORACLE_MAX_POINTS};
use rplab::measures::{growth_slope, yngvason, yngvason_sweep, YngvasonReport};
use rplab::quantize::{block_of_modes, dispersion, momentum_blocks, DEFAULT_RANK_TOL};
use rplab::rp_check::{check, check_equivalence_vi2, check_k_geq_i, verify_gaussian_identity};
use rplab::{
    ChargedCovariance, CovarianceOperator, HalfSpace, LatticeField, RPCondition, SpacetimeGrid, Verdict, WitnessResult,
};

use crate::config::{complex_json, CheckSpec, Family, RunConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Outcome {
    Pass,
    Fail,
    NotApplicable,
    Error,
}

impl From<Verdict> for Outcome {
    fn from(v: Verdict) -> Self {
        match v {
            Verdict::Pass => Outcome::Pass,
            Verdict::Fail => Outcome::Fail,
            Verdict::NotApplicable => Outcome::NotApplicable,
        }
    }
}

/// A CSV spectrum produced by a check.
pub struct Table {
    pub stem: &'static str,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

pub struct CheckOutput {
    pub verdict: Outcome,
    pub detail: Value,
    pub witness: Option<Value>,
    pub table: Option<Table>,
}

pub fn label(spec: &CheckSpec) -> String {
    match spec {
        CheckSpec::Rp { condition, .. } => condition.to_string(),
        CheckSpec::Charged { condition, .. } => condition.to_string(),
        CheckSpec::Equivalence { axis, .. } | CheckSpec::GaussianIdentity { axis, .. } => format!("axis {axis}"),
        CheckSpec::Compactify { axis, period, .. } => format!("axis {axis}, period {period}"),
        CheckSpec::Schwinger { .. } => "moments".into(),
        CheckSpec::Quantize { .. } => "momentum blocks".into(),
        CheckSpec::Yngvason { refine } if refine.is_empty() => "single grid".into(),
        CheckSpec::Yngvason { refine } => format!("refine {refine:?}"),
    }
}

/// Per-check RNG seed: each check draws from its own stream, fixed by the
/// run seed and the check's position in the plan.
pub fn check_seed(seed: u64, index: usize) -> u64 {
    seed ^ (index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

pub struct Session<'a> {
    cfg: &'a RunConfig,
    grid: SpacetimeGrid,
    kernel: OnceCell<std::result::Result<CovarianceOperator, String>>,
}

impl<'a> Session<'a> {
    pub fn new(cfg: &'a RunConfig) -> Result<Self> {
        Ok(Self {
            cfg,
            grid: cfg.grid()?,
            kernel: OnceCell::new(),
        })
    }

    fn kernel(&self) -> Result<&CovarianceOperator> {
        self.kernel
            .get_or_init(|| {
                self.cfg
                    .multiplier_on(&self.grid)
                    .and_then(|m| m.kernel().context("kernel"))
                    .map_err(|e| format!("{e:#}"))
            })
            .as_ref()
            .map_err(|e| anyhow!("{e}"))
    }

    pub fn run(&self, index: usize, spec: &CheckSpec) -> Result<CheckOutput> {
        let global = self.cfg.tol;
        match spec {
            CheckSpec::Rp { condition, tol } => self.rp(*condition, tol.unwrap_or(global)),
            CheckSpec::Equivalence { axis, tol } => {
                let r = check_equivalence_vi2(self.kernel()?, *axis, tol.unwrap_or(global))?;
                Ok(plain(
                    r.verdict.into(),
                    json!({
                        "axis": axis,
                        "forward": r.forward,
                        "backward": r.backward,
                        "agree": r.agree,
                        "identity_defect": r.identity_defect,
                    }),
                ))
            }
            CheckSpec::GaussianIdentity {
                axis,
                functions,
                amplitude,
                tol,
            } => self.gaussian_identity(
                index,
                *axis,
                functions.unwrap_or(6),
                amplitude.unwrap_or(0.3),
                tol.unwrap_or(global),
            ),
            CheckSpec::Charged { condition, tol } => {
                let tol = tol.unwrap_or(global);
                let spec = self.cfg.multiplier_spec(self.grid.dim())?;
                let cov = ChargedCovariance::from_spec(spec, &self.grid)?;
                let r = check_charged(*condition, &cov, tol)?;
                let witness = r
                    .witness
                    .as_ref()
                    .map(|(block, w)| witness_json(&self.grid, &condition.to_string(), Some(block), w));
                let mut detail = serde_json::to_value(&r)?;
                attach_witness_summary(&mut detail, r.witness.as_ref().map(|(_, w)| w));
                Ok(CheckOutput {
                    verdict: r.verdict.into(),
                    detail,
                    witness,
                    table: None,
                })
            }
            CheckSpec::Schwinger {
                points,
                coords,
                random,
                order,
                tol,
            } => self.schwinger(index, points, coords, *random, *order, tol.unwrap_or(global)),
            CheckSpec::Quantize {
                modes,
                rank_tol,
                mass_ref,
                tol,
            } => self.quantize(modes.as_deref(), rank_tol.unwrap_or(DEFAULT_RANK_TOL), *mass_ref, *tol),
            CheckSpec::Compactify {
                axis,
                period,
                check_axis,
                image_tol,
                tol,
            } => self.compactify(
                *axis,
                *period,
                check_axis.unwrap_or(*axis),
                image_tol.unwrap_or(DEFAULT_PERIODIZE_TOL),
                tol.unwrap_or(global),
            ),
            CheckSpec::Yngvason { refine } => self.yngvason(refine),
        }
    }

    fn rp(&self, condition: RPCondition, tol: f64) -> Result<CheckOutput> {
        let r = check(condition, self.kernel()?, tol)?;
        let witness = r
            .witness
            .as_ref()
            .map(|w| witness_json(&self.grid, &condition.to_string(), None, w));
        let mut detail = serde_json::to_value(&r)?;
        attach_witness_summary(&mut detail, r.witness.as_ref());
        Ok(CheckOutput {
            verdict: r.verdict.into(),
            detail,
            witness,
            table: None,
        })
    }

    fn gaussian_identity(&self, index: usize, axis: usize, n: usize, amp: f64, tol: f64) -> Result<CheckOutput> {
        let d = self.kernel()?;
        let mut rng = ChaCha8Rng::seed_from_u64(check_seed(self.cfg.seed, index));
        let half = self.grid.halfspace(axis, HalfSpace::Positive)?;
        let draw = |rng: &mut ChaCha8Rng| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let fs: Vec<LatticeField> = (0..n)
            .map(|_| {
                let mut f = LatticeField::zeros(&self.grid);
                for &s in &half {
                    f.values_mut()[s] = draw(&mut rng) * amp;
                }
                f
            })
            .collect();
        let cs: Vec<Complex64> = (0..n).map(|_| draw(&mut rng)).collect();
        let gi = verify_gaussian_identity(d, axis, &fs, &cs)?;
        let kb = check_k_geq_i(d, axis, &fs, tol)?;
        let pass = gi.defect <= tol && kb.psd;
        Ok(plain(
            if pass { Outcome::Pass } else { Outcome::Fail },
            json!({
                "axis": axis,
                "functions": n,
                "amplitude": amp,
                "tol": tol,
                "lhs": complex_json(gi.lhs),
                "rhs": complex_json(gi.rhs),
                "identity_defect": gi.defect,
                "covariance_defect": gi.covariance_defect,
                "kappa_min_eig": kb.min_eig,
                "kappa_minus_ones_min_eig": kb.min_eig_minus_ones,
                "kappa_psd": kb.psd,
                "kappa_geq_ones": kb.geq_ones,
                "kappa_geq_identity": kb.geq_identity,
            }),
        ))
    }

    fn schwinger(
        &self,
        index: usize,
        points: &[Vec<usize>],
        coords: &[Vec<Vec<f64>>],
        random: Option<usize>,
        order: Option<usize>,
        tol: f64,
    ) -> Result<CheckOutput> {
        let d = self.kernel()?;
        let mut tuples: Vec<Vec<usize>> = points.to_vec();
        for (t, tuple) in coords.iter().enumerate() {
            let sites = tuple
                .iter()
                .map(|c| site_at(&self.grid, c))
                .collect::<Result<Vec<_>>>()
                .with_context(|| format!("coords[{t}]"))?;
            tuples.push(sites);
        }
        let random = match random {
            None if tuples.is_empty() => Some(8),
            r => r,
        };
        if let Some(count) = random {
            let order = order.unwrap_or(4);
            let n = self.grid.total_sites();
            let mut rng = ChaCha8Rng::seed_from_u64(check_seed(self.cfg.seed, index));
            for _ in 0..count {
                tuples.push((0..order).map(|_| rng.random_range(0..n)).collect());
            }
        }
        let mut rows = Vec::with_capacity(tuples.len());
        let mut pass = true;
        for pts in &tuples {
            let rec = schwinger(d, pts)?.value;
            let (oracle, diff) = if pts.len() <= ORACLE_MAX_POINTS {
                let o = pairing_oracle(d, pts)?.value;
                let scale = rec.norm().max(o.norm());
                let diff = if scale == 0.0 { 0.0 } else { (rec - o).norm() / scale };
                pass &= diff <= tol;
                (Some(complex_json(o)), Some(diff))
            } else {
                (None, None)
            };
            rows.push(json!({
                "points": pts,
                "value": complex_json(rec),
                "oracle": oracle,
                "rel_diff": diff,
            }));
        }
        Ok(plain(
            if pass { Outcome::Pass } else { Outcome::Fail },
            json!({ "tol": tol, "evaluations": rows }),
        ))
    }

    fn quantize(
        &self,
        modes: Option<&[Vec<isize>]>,
        rank_tol: f64,
        mass_ref: Option<f64>,
        tol: Option<f64>,
    ) -> Result<CheckOutput> {
        let d = self.kernel()?;
        let blocks: Vec<usize> = match modes {
            Some(ms) => ms
                .iter()
                .map(|m| block_of_modes(&self.grid, m).with_context(|| format!("modes {m:?}")))
                .collect::<Result<_>>()?,
            None => (0..momentum_blocks(&self.grid)).collect(),
        };
        let mass = mass_ref.or(match self.cfg.multiplier.family {
            Family::FreeField | Family::LatticeFreeField => Some(self.cfg.multiplier.mass),
            _ => None,
        });
        let spatial = self.grid.dim() - 1;
        let mut header: Vec<String> = (1..=spatial).map(|j| format!("k{j}")).collect();
        header.extend(["quotient_dim", "min_h", "dispersion_ref", "rel_error"].map(String::from));
        let mut rows = Vec::new();
        let mut entries = Vec::new();
        let mut pass = true;
        for &b in &blocks {
            match dispersion(d, &[b], rank_tol, mass) {
                Ok(mut r) => {
                    let row = r.remove(0);
                    pass &= row.quotient_dim > 0;
                    if let (Some(t), Some(e)) = (tol, row.rel_error) {
                        pass &= e <= t;
                    }
                    let mut csv: Vec<String> = row.momentum.iter().map(|k| k.to_string()).collect();
                    csv.push(row.quotient_dim.to_string());
                    csv.push(row.min_h.to_string());
                    csv.push(row.dispersion_ref.map(|x| x.to_string()).unwrap_or_default());
                    csv.push(row.rel_error.map(|x| x.to_string()).unwrap_or_default());
                    rows.push(csv);
                    entries.push(serde_json::to_value(&row)?);
                }
                Err(e) => {
                    pass = false;
                    entries.push(json!({ "block": b, "error": e.to_string() }));
                }
            }
        }
        Ok(CheckOutput {
            verdict: if pass { Outcome::Pass } else { Outcome::Fail },
            detail: json!({
                "rank_tol": rank_tol,
                "mass_ref": mass,
                "tol": tol,
                "blocks": entries,
            }),
            witness: None,
            table: Some(Table {
                stem: "quantize",
                header,
                rows,
            }),
        })
    }

    fn compactify(&self, axis: usize, period: f64, checked: usize, image_tol: f64, tol: f64) -> Result<CheckOutput> {
        let d = self.kernel()?;
        let cond = RPCondition::DoublyRP(checked);
        let before = check(cond, d, tol)?;
        let per = periodize(d, axis, period, image_tol)?;
        let after = check(cond, &per.covariance, tol)?;
        let verdict = before.verdict.and(after.verdict);
        let failing = after.witness.as_ref().or(before.witness.as_ref());
        let witness = failing.map(|w| {
            let g = if after.witness.is_some() { per.covariance.grid() } else { &self.grid };
            witness_json(g, &cond.to_string(), None, w)
        });
        Ok(CheckOutput {
            verdict: verdict.into(),
            detail: json!({
                "periodization": per.summary(),
                "image_tol": image_tol,
                "condition": cond,
                "before": before,
                "after": after,
            }),
            witness,
            table: None,
        })
    }

    fn yngvason(&self, refine: &[usize]) -> Result<CheckOutput> {
        let (report, grid) = if refine.is_empty() {
            let m = self.cfg.multiplier_on(&self.grid)?;
            (yngvason(&m)?, self.grid.clone())
        } else {
            if refine.contains(&0) {
                bail!("refine factors must be positive");
            }
            let grids = refine
                .iter()
                .map(|&r| self.cfg.grid_refined(r))
                .collect::<Result<Vec<_>>>()?;
            let spec = self.cfg.multiplier_spec(self.grid.dim())?;
            let last = grids.last().cloned().expect("nonempty");
            (yngvason_sweep(&spec, &grids)?, last)
        };
        let table = yngvason_table(&grid, &report);
        Ok(CheckOutput {
            verdict: Outcome::Pass,
            detail: json!({
                "modes": report.lambda.len(),
                "hs_norm_sq": report.hs_norm_sq,
                "z_final": report.z_final,
                "log_z": report.log_z,
                "spectrum_even": report.spectrum_even,
                "divergence_flag": report.divergence_flag,
                "growth_slope": growth_slope(&report.sweep),
                "sweep": report.sweep,
            }),
            witness: None,
            table: Some(table),
        })
    }
}

fn plain(verdict: Outcome, detail: Value) -> CheckOutput {
    CheckOutput {
        verdict,
        detail,
        witness: None,
        table: None,
    }
}

fn attach_witness_summary(detail: &mut Value, w: Option<&WitnessResult>) {
    if let (Some(w), Value::Object(map)) = (w, detail) {
        map.insert(
            "witness".into(),
            json!({ "kind": w.kind, "eigenvalue": w.eigenvalue, "form": complex_json(w.value) }),
        );
    }
}

/// The witness field as a sparse site list.
fn witness_json(grid: &SpacetimeGrid, condition: &str, block: Option<&str>, w: &WitnessResult) -> Value {
    let sites: Vec<Value> = w
        .field
        .values()
        .iter()
        .enumerate()
        .filter(|(_, v)| v.norm() > 0.0)
        .map(|(s, v)| {
            json!({
                "site": s,
                "index": grid.multi_index(s),
                "coords": grid.coords(s),
                "value": complex_json(*v),
            })
        })
        .collect();
    json!({
        "condition": condition,
        "block": block,
        "kind": w.kind,
        "eigenvalue": w.eigenvalue,
        "form": complex_json(w.value),
        "shape": grid.shape(),
        "sites": sites,
    })
}

/// Lattice site whose coordinates match `c` to within a small fraction of
/// the spacing.
fn site_at(grid: &SpacetimeGrid, c: &[f64]) -> Result<usize> {
    if c.len() != grid.dim() {
        bail!("expected {} coordinates, got {}", grid.dim(), c.len());
    }
    let mut idx = Vec::with_capacity(c.len());
    for (j, &x) in c.iter().enumerate() {
        let tol = 1e-9 * grid.axes()[j].spacing.max(1.0);
        let i = grid
            .axis_coords(j)
            .iter()
            .position(|&y| (y - x).abs() <= tol)
            .ok_or_else(|| anyhow!("coordinate {x} is not a site on axis {j}"))?;
        idx.push(i);
    }
    Ok(grid.site(&idx))
}

/// Rows `(rank, k, λ, partial product)` in the order the product is taken.
fn yngvason_table(grid: &SpacetimeGrid, r: &YngvasonReport) -> Table {
    let mut order: Vec<usize> = (0..r.lambda.len()).collect();
    order.sort_by(|&a, &b| r.lambda[b].abs().total_cmp(&r.lambda[a].abs()));
    let mut header = vec!["rank".to_string()];
    header.extend((0..grid.dim()).map(|j| format!("k{j}")));
    header.extend(["lambda", "partial"].map(String::from));
    let rows = order
        .iter()
        .enumerate()
        .map(|(n, &i)| {
            let mut row = vec![(n + 1).to_string()];
            row.extend(grid.momentum(i).iter().map(|k| k.to_string()));
            row.push(r.lambda[i].to_string());
            row.push(r.z_partial.get(n).map(|z| z.to_string()).unwrap_or_default());
            row
        })
        .collect();
    Table {
        stem: "yngvason",
        header,
        rows,
    }
}
