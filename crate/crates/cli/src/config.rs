//! Run configuration: grid, multiplier and the ordered list of checks.

use std::path::Path;

use anyhow::{bail, Context, Result};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use rplab::{
    AxisKind, AxisSpec, ChargedCondition, FourierMultiplier, MultiplierSpec, Profile, RPCondition, SpacetimeGrid,
    DEFAULT_TOL,
};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_tol")]
    pub tol: f64,
    pub grid: GridConfig,
    pub multiplier: MultiplierConfig,
    #[serde(default)]
    pub checks: Vec<CheckSpec>,
}

fn default_tol() -> f64 {
    DEFAULT_TOL
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub axes: Vec<AxisConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisConfig {
    pub kind: AxisKind,
    pub sites: usize,
    /// Lattice spacing; required for lines.
    pub spacing: Option<f64>,
    /// Circumference; required for circles.
    pub length: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Family {
    FreeField,
    LatticeFreeField,
    PowerCovariance,
    BoostedFreeField,
    /// `K̃ = (k² + m²)⁻¹`, `L̃ = c k₀ k₁ (k² + m²)⁻²`.
    OddPair,
    /// Per-momentum tables `k_table`, `l_table` in FFT order.
    Table,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MultiplierConfig {
    pub family: Family,
    #[serde(default = "one")]
    pub mass: f64,
    pub power: Option<f64>,
    pub velocity: Option<f64>,
    pub coupling: Option<f64>,
    pub k_table: Option<Vec<f64>>,
    pub l_table: Option<Vec<f64>>,
    /// CSV with columns `index, k_tilde, l_tilde`, relative to the config file.
    pub table_csv: Option<String>,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CheckSpec {
    Rp {
        condition: RPCondition,
        tol: Option<f64>,
    },
    Equivalence {
        axis: usize,
        tol: Option<f64>,
    },
    GaussianIdentity {
        #[serde(default)]
        axis: usize,
        functions: Option<usize>,
        amplitude: Option<f64>,
        tol: Option<f64>,
    },
    Charged {
        condition: ChargedCondition,
        tol: Option<f64>,
    },
    Schwinger {
        /// Tuples of site indices.
        #[serde(default)]
        points: Vec<Vec<usize>>,
        /// Tuples of site coordinates, each matched to a lattice site.
        #[serde(default)]
        coords: Vec<Vec<Vec<f64>>>,
        random: Option<usize>,
        order: Option<usize>,
        tol: Option<f64>,
    },
    Quantize {
        modes: Option<Vec<Vec<isize>>>,
        rank_tol: Option<f64>,
        mass_ref: Option<f64>,
        tol: Option<f64>,
    },
    Compactify {
        axis: usize,
        period: f64,
        check_axis: Option<usize>,
        image_tol: Option<f64>,
        tol: Option<f64>,
    },
    Yngvason {
        #[serde(default)]
        refine: Vec<usize>,
    },
}

impl CheckSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::Rp { .. } => "rp",
            Self::Equivalence { .. } => "equivalence",
            Self::GaussianIdentity { .. } => "gaussian_identity",
            Self::Charged { .. } => "charged",
            Self::Schwinger { .. } => "schwinger",
            Self::Quantize { .. } => "quantize",
            Self::Compactify { .. } => "compactify",
            Self::Yngvason { .. } => "yngvason",
        }
    }

    fn tol(&self) -> Option<f64> {
        match self {
            Self::Rp { tol, .. }
            | Self::Equivalence { tol, .. }
            | Self::GaussianIdentity { tol, .. }
            | Self::Charged { tol, .. }
            | Self::Schwinger { tol, .. }
            | Self::Quantize { tol, .. }
            | Self::Compactify { tol, .. } => *tol,
            Self::Yngvason { .. } => None,
        }
    }

    fn axes(&self) -> Vec<usize> {
        match self {
            Self::Rp { condition, .. } => condition.axis().into_iter().collect(),
            Self::Charged { condition, .. } => condition.axis().into_iter().collect(),
            Self::Equivalence { axis, .. } | Self::GaussianIdentity { axis, .. } => vec![*axis],
            Self::Compactify { axis, check_axis, .. } => std::iter::once(*axis).chain(*check_axis).collect(),
            _ => Vec::new(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse_in(&text, base).with_context(|| format!("in {}", path.display()))
    }

    #[cfg(test)]
    pub fn parse(text: &str) -> Result<Self> {
        Self::parse_in(text, Path::new("."))
    }

    fn parse_in(text: &str, base: &Path) -> Result<Self> {
        let mut cfg: RunConfig = toml::from_str(text)?;
        if let Some(rel) = &cfg.multiplier.table_csv {
            let (k, l) = read_table(&base.join(rel)).context("multiplier.table_csv")?;
            cfg.multiplier.k_table = Some(k);
            cfg.multiplier.l_table = Some(l);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            bail!("tol: must be positive, got {}", self.tol);
        }
        if self.grid.axes.is_empty() {
            bail!("grid.axes: at least one axis is required");
        }
        for (i, a) in self.grid.axes.iter().enumerate() {
            match a.kind {
                AxisKind::Line if a.spacing.is_none() => bail!("grid.axes[{i}]: a line needs `spacing`"),
                AxisKind::Circle if a.length.is_none() => bail!("grid.axes[{i}]: a circle needs `length`"),
                _ => {}
            }
        }
        let dim = self.grid.axes.len();
        for (i, c) in self.checks.iter().enumerate() {
            for axis in c.axes() {
                if axis >= dim {
                    bail!("checks[{i}] ({}): axis {axis} does not exist on a {dim}-axis grid", c.kind());
                }
            }
            if let Some(t) = c.tol() {
                if !(t > 0.0) {
                    bail!("checks[{i}].tol: must be positive, got {t}");
                }
            }
        }
        self.grid()?;
        self.multiplier_spec(dim)?;
        Ok(())
    }

    pub fn grid(&self) -> Result<SpacetimeGrid> {
        self.grid_refined(1)
    }

    /// The grid with every axis carrying `factor` times as many sites over
    /// the same extent.
    pub fn grid_refined(&self, factor: usize) -> Result<SpacetimeGrid> {
        let axes = self
            .grid
            .axes
            .iter()
            .map(|a| match a.kind {
                AxisKind::Line => AxisSpec::line(a.sites * factor, a.spacing.unwrap_or(0.0) / factor as f64),
                AxisKind::Circle => AxisSpec::circle(a.sites * factor, a.length.unwrap_or(0.0)),
            })
            .collect();
        SpacetimeGrid::new(axes).context("grid")
    }

    pub fn multiplier_spec(&self, dim: usize) -> Result<MultiplierSpec> {
        let m = &self.multiplier;
        let need = |v: Option<f64>, name: &str| v.with_context(|| format!("multiplier.{name} is required for {:?}", m.family));
        let mass = m.mass;
        Ok(match m.family {
            Family::FreeField => MultiplierSpec::FreeField { mass },
            Family::LatticeFreeField => MultiplierSpec::LatticeFreeField { mass },
            Family::PowerCovariance => MultiplierSpec::PowerCovariance {
                mass,
                power: need(m.power, "power")?,
            },
            Family::BoostedFreeField => {
                if dim < 2 {
                    bail!("multiplier: BoostedFreeField needs a spatial axis");
                }
                MultiplierSpec::BoostedFreeField {
                    mass,
                    velocity: need(m.velocity, "velocity")?,
                }
            }
            Family::OddPair => {
                if dim < 2 {
                    bail!("multiplier: OddPair needs a spatial axis");
                }
                let c = need(m.coupling, "coupling")?;
                let base = move |k: &[f64]| k.iter().map(|x| x * x).sum::<f64>() + mass * mass;
                MultiplierSpec::Explicit {
                    k_tilde: Profile::closure(move |k| 1.0 / base(k)),
                    l_tilde: Profile::closure(move |k| c * k[0] * k[1] / base(k).powi(2)),
                }
            }
            Family::Table => MultiplierSpec::Explicit {
                k_tilde: Profile::Table(m.k_table.clone().context("multiplier.k_table is required for Table")?),
                l_tilde: match &m.l_table {
                    Some(t) => Profile::Table(t.clone()),
                    None => Profile::zero(),
                },
            },
        })
    }

    pub fn multiplier_on(&self, grid: &SpacetimeGrid) -> Result<FourierMultiplier> {
        FourierMultiplier::sample(self.multiplier_spec(grid.dim())?, grid).context("multiplier")
    }
}

#[derive(Deserialize)]
struct TableRow {
    index: usize,
    k_tilde: f64,
    l_tilde: f64,
}

fn read_table(path: &Path) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("reading {}", path.display()))?;
    let mut rows: Vec<TableRow> = Vec::new();
    for (line, row) in rdr.deserialize().enumerate() {
        rows.push(row.with_context(|| format!("{} row {}", path.display(), line + 1))?);
    }
    rows.sort_by_key(|r| r.index);
    for (i, r) in rows.iter().enumerate() {
        if r.index != i {
            bail!("{}: momentum indices must be 0..{} without gaps or repeats", path.display(), rows.len());
        }
    }
    Ok(rows.iter().map(|r| (r.k_tilde, r.l_tilde)).unzip())
}

pub fn complex_json(z: Complex64) -> [f64; 2] {
    [z.re, z.im]
}
