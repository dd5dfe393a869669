//! Smooth-side references: weighted Ricci curvature of `e^{-ψ}`-weighted
//! Euclidean space by finite differences, and one-dimensional monotone
//! rearrangement with its Jacobian inequality.

use serde::{Deserialize, Serialize};

use crate::comparison::{comparison_beta, ComparisonParams, Dimension};
use crate::error::{Error, Result};
use crate::space::Weight;
use crate::SCHEMA_VERSION;

/// `ψ` sampled on a uniform grid over an axis-aligned box in `R^n`, `n ≤ 3`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalarFieldSpec {
    #[serde(default = "schema_version")]
    pub schema_version: u32,
    pub dims: usize,
    /// `[lo, hi]` per axis.
    #[serde(rename = "box")]
    pub bounds: Vec<[f64; 2]>,
    pub step: f64,
    /// Row-major samples, last axis fastest.
    pub values: Vec<f64>,
}

fn schema_version() -> u32 {
    SCHEMA_VERSION
}

impl ScalarFieldSpec {
    pub fn from_fn<F: Fn(&[f64]) -> f64>(bounds: Vec<[f64; 2]>, step: f64, psi: F) -> Result<Self> {
        let dims = bounds.len();
        let mut field = Self {
            schema_version: SCHEMA_VERSION,
            dims,
            bounds,
            step,
            values: Vec::new(),
        };
        let counts = field.counts()?;
        let total: usize = counts.iter().product();
        let mut values = Vec::with_capacity(total);
        let mut idx = vec![0usize; dims];
        for flat in 0..total {
            let mut rest = flat;
            for axis in (0..dims).rev() {
                idx[axis] = rest % counts[axis];
                rest /= counts[axis];
            }
            values.push(psi(&field.position(&idx)));
        }
        field.values = values;
        field.check()?;
        Ok(field)
    }

    /// Points per axis.
    pub fn counts(&self) -> Result<Vec<usize>> {
        if self.dims == 0 || self.dims > 3 || self.bounds.len() != self.dims {
            return Err(Error::Dimension(format!(
                "fields have 1 to 3 axes matching the box, got dims = {} with {} box rows",
                self.dims,
                self.bounds.len()
            )));
        }
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(Error::InvalidInput(format!("step must be positive, got {}", self.step)));
        }
        self.bounds
            .iter()
            .map(|[lo, hi]| {
                let cells = (hi - lo) / self.step;
                let rounded = cells.round();
                if !(rounded >= 0.0) || (cells - rounded).abs() > 1e-6 {
                    Err(Error::InvalidInput(format!(
                        "step {} does not divide the axis [{lo}, {hi}]",
                        self.step
                    )))
                } else {
                    Ok(rounded as usize + 1)
                }
            })
            .collect()
    }

    pub fn check(&self) -> Result<()> {
        let counts = self.counts()?;
        let total: usize = counts.iter().product();
        if self.values.len() != total {
            return Err(Error::InvalidInput(format!(
                "field has {} values for {total} grid points",
                self.values.len()
            )));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("field values must be finite".into()));
        }
        Ok(())
    }

    pub fn position(&self, idx: &[usize]) -> Vec<f64> {
        idx.iter()
            .zip(&self.bounds)
            .map(|(&i, [lo, _])| lo + i as f64 * self.step)
            .collect()
    }

    fn value(&self, counts: &[usize], idx: &[isize]) -> f64 {
        let flat = idx
            .iter()
            .zip(counts)
            .fold(0usize, |acc, (&i, &c)| acc * c + i as usize);
        self.values[flat]
    }

    /// `max(1, max |ψ|)`, the scale of finite-difference tolerances.
    pub fn scale(&self) -> f64 {
        self.values.iter().fold(1.0_f64, |m, v| m.max(v.abs()))
    }

    /// `10 · step² · scale`.
    pub fn fd_tolerance(&self) -> f64 {
        10.0 * self.step * self.step * self.scale()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let field: Self =
            serde_json::from_str(text).map_err(|e| Error::InvalidInput(format!("field file: {e}")))?;
        if field.schema_version != SCHEMA_VERSION {
            return Err(Error::InvalidInput(format!(
                "unsupported schema_version {}",
                field.schema_version
            )));
        }
        field.check()?;
        Ok(field)
    }
}

/// Finite-difference stencil.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stencil {
    /// Central differences with the grid step.
    #[default]
    Central,
    /// Richardson combination of steps `h` and `2h`.
    Richardson,
}

struct Derivatives {
    gradient: Vec<f64>,
    hessian: Vec<Vec<f64>>,
}

fn derivatives(field: &ScalarFieldSpec, x: &[usize], stencil: Stencil) -> Result<Derivatives> {
    let counts = field.counts()?;
    field.check()?;
    if x.len() != field.dims {
        return Err(Error::Dimension(format!(
            "grid index has {} coordinates, field has {} axes",
            x.len(),
            field.dims
        )));
    }
    if x.iter().zip(&counts).any(|(&i, &c)| i < 2 || i + 2 >= c) {
        return Err(Error::Boundary { index: x.to_vec() });
    }
    let n = field.dims;
    let base: Vec<isize> = x.iter().map(|&i| i as isize).collect();
    let at = |offsets: &[(usize, isize)]| {
        let mut idx = base.clone();
        for &(axis, o) in offsets {
            idx[axis] += o;
        }
        field.value(&counts, &idx)
    };
    let centre = at(&[]);
    let diff_at = |s: isize| {
        let h = field.step * s as f64;
        let gradient: Vec<f64> = (0..n)
            .map(|a| (at(&[(a, s)]) - at(&[(a, -s)])) / (2.0 * h))
            .collect();
        let hessian: Vec<Vec<f64>> = (0..n)
            .map(|a| {
                (0..n)
                    .map(|b| {
                        if a == b {
                            (at(&[(a, s)]) - 2.0 * centre + at(&[(a, -s)])) / (h * h)
                        } else {
                            (at(&[(a, s), (b, s)]) - at(&[(a, s), (b, -s)]) - at(&[(a, -s), (b, s)])
                                + at(&[(a, -s), (b, -s)]))
                                / (4.0 * h * h)
                        }
                    })
                    .collect()
            })
            .collect();
        Derivatives { gradient, hessian }
    };
    let fine = diff_at(1);
    Ok(match stencil {
        Stencil::Central => fine,
        Stencil::Richardson => {
            let coarse = diff_at(2);
            let mix = |f: f64, c: f64| (4.0 * f - c) / 3.0;
            Derivatives {
                gradient: fine.gradient.iter().zip(&coarse.gradient).map(|(f, c)| mix(*f, *c)).collect(),
                hessian: fine
                    .hessian
                    .iter()
                    .zip(&coarse.hessian)
                    .map(|(fr, cr)| fr.iter().zip(cr).map(|(f, c)| mix(*f, *c)).collect())
                    .collect(),
            }
        }
    })
}

struct Directional {
    hess_vv: f64,
    grad_v: f64,
}

fn directional(field: &ScalarFieldSpec, x: &[usize], v: &[f64], stencil: Stencil) -> Result<Directional> {
    if v.len() != field.dims {
        return Err(Error::Dimension(format!(
            "direction has {} components, field has {} axes",
            v.len(),
            field.dims
        )));
    }
    let norm = v.iter().map(|c| c * c).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidInput(format!("direction must be a unit vector, |v| = {norm}")));
    }
    let d = derivatives(field, x, stencil)?;
    let hess_vv = (0..v.len())
        .map(|a| (0..v.len()).map(|b| d.hessian[a][b] * v[a] * v[b]).sum::<f64>())
        .sum();
    let grad_v = d.gradient.iter().zip(v).map(|(g, c)| g * c).sum();
    Ok(Directional { hess_vv, grad_v })
}

/// `Ric_N(v) = Hess ψ(v, v) − ⟨∇ψ, v⟩² / (N − n)` on flat `R^n`.
///
/// `N = n` gives `−∞` unless the directional derivative vanishes within the
/// finite-difference tolerance; `N = ∞` drops the gradient term.
pub fn weighted_ricci(field: &ScalarFieldSpec, x: &[usize], v: &[f64], n: Dimension) -> Result<f64> {
    weighted_ricci_with(field, x, v, n, Stencil::Central)
}

pub fn weighted_ricci_with(
    field: &ScalarFieldSpec,
    x: &[usize],
    v: &[f64],
    n: Dimension,
    stencil: Stencil,
) -> Result<f64> {
    let dim = field.dims as f64;
    if let Dimension::Finite(nv) = n {
        if nv < dim {
            return Err(Error::Dimension(format!("N = {nv} is below the base dimension {dim}")));
        }
    }
    let d = directional(field, x, v, stencil)?;
    Ok(match n {
        Dimension::Infinite => d.hess_vv,
        Dimension::Finite(nv) if nv == dim => {
            if d.grad_v.abs() < field.fd_tolerance() {
                d.hess_vv
            } else {
                f64::NEG_INFINITY
            }
        }
        Dimension::Finite(nv) => d.hess_vv - d.grad_v * d.grad_v / (nv - dim),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NrVerdict {
    pub holds: bool,
    pub margin: f64,
    pub tolerance: f64,
}

/// Whether `Hess ψ(v, v) − ⟨∇ψ, v⟩² / (N − n) ≥ 0` at a grid point.
pub fn nr_condition(field: &ScalarFieldSpec, x: &[usize], v: &[f64], n: f64) -> Result<NrVerdict> {
    let margin = weighted_ricci(field, x, v, Dimension::Finite(n))?;
    let tolerance = field.fd_tolerance();
    Ok(NrVerdict {
        holds: margin >= -tolerance,
        margin,
        tolerance,
    })
}

/// Two densities on a common uniform 1-D grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityPair1D {
    pub grid: Vec<f64>,
    pub rho0: Vec<f64>,
    pub rho1: Vec<f64>,
}

fn trapezoid_cumulative(grid: &[f64], rho: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(grid.len());
    let mut acc = 0.0;
    out.push(0.0);
    for i in 1..grid.len() {
        acc += 0.5 * (rho[i] + rho[i - 1]) * (grid[i] - grid[i - 1]);
        out.push(acc);
    }
    out
}

impl DensityPair1D {
    pub fn new(grid: Vec<f64>, rho0: Vec<f64>, rho1: Vec<f64>) -> Result<Self> {
        if grid.len() < 3 {
            return Err(Error::Resolution { points: grid.len() });
        }
        if rho0.len() != grid.len() || rho1.len() != grid.len() {
            return Err(Error::InvalidInput("densities must match the grid length".into()));
        }
        let step = grid[1] - grid[0];
        if !(step > 0.0) || grid.windows(2).any(|w| ((w[1] - w[0]) - step).abs() > 1e-9 * step) {
            return Err(Error::InvalidInput("grid must be uniform and increasing".into()));
        }
        for rho in [&rho0, &rho1] {
            if rho.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
                return Err(Error::InvalidInput("densities must be nonnegative reals".into()));
            }
            let total = *trapezoid_cumulative(&grid, rho).last().unwrap();
            if (total - 1.0).abs() > 1e-8 {
                return Err(Error::InvalidInput(format!("density integrates to {total}, not 1")));
            }
        }
        Ok(Self { grid, rho0, rho1 })
    }

    /// Rescales each density to unit trapezoidal integral.
    pub fn normalized(grid: Vec<f64>, rho0: Vec<f64>, rho1: Vec<f64>) -> Result<Self> {
        if rho0.len() != grid.len() || rho1.len() != grid.len() {
            return Err(Error::InvalidInput("densities must match the grid length".into()));
        }
        let scale = |rho: Vec<f64>| -> Result<Vec<f64>> {
            let total = *trapezoid_cumulative(&grid, &rho).last().unwrap_or(&0.0);
            if !(total > 0.0) {
                return Err(Error::InvalidInput("density has zero integral".into()));
            }
            Ok(rho.into_iter().map(|v| v / total).collect())
        };
        let (rho0, rho1) = (scale(rho0)?, scale(rho1)?);
        Self::new(grid, rho0, rho1)
    }

    pub fn step(&self) -> f64 {
        self.grid[1] - self.grid[0]
    }
}

/// Samples of the monotone rearrangement `F = G⁻¹ ∘ H` and of `F′`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotoneMap {
    pub x: Vec<f64>,
    pub f: Vec<f64>,
    pub df: Vec<f64>,
    /// First and last grid index where `ρ0 > 0`.
    pub support: (usize, usize),
}

pub fn monotone_map_1d(pair: &DensityPair1D) -> Result<MonotoneMap> {
    let first = pair.rho0.iter().position(|&v| v > 0.0).ok_or(Error::EmptySet)?;
    let last = pair.rho0.iter().rposition(|&v| v > 0.0).unwrap();
    if let Some(hole) = (first..=last).find(|&i| pair.rho0[i] <= 0.0) {
        return Err(Error::Support(hole));
    }
    let grid = &pair.grid;
    let h_cdf = trapezoid_cumulative(grid, &pair.rho0);
    let g_cdf = trapezoid_cumulative(grid, &pair.rho1);
    let (h_total, g_total) = (*h_cdf.last().unwrap(), *g_cdf.last().unwrap());
    let g: Vec<f64> = g_cdf.iter().map(|v| v / g_total).collect();
    let inverse = |u: f64| -> f64 {
        if u >= 1.0 {
            let k = g.iter().position(|&v| v >= 1.0).unwrap_or(g.len() - 1);
            return grid[k];
        }
        // Skip segments that end at or below u, then interpolate linearly.
        let k = g[1..].partition_point(|&v| v <= u);
        let (g0, g1) = (g[k], g[k + 1]);
        if g1 > g0 {
            let w = ((u - g0) / (g1 - g0)).clamp(0.0, 1.0);
            grid[k] + w * (grid[k + 1] - grid[k])
        } else {
            grid[k]
        }
    };
    let f: Vec<f64> = h_cdf.iter().map(|v| inverse(v / h_total)).collect();
    let n = grid.len();
    let step = pair.step();
    let df = (0..n)
        .map(|i| {
            if i == 0 {
                (f[1] - f[0]) / step
            } else if i == n - 1 {
                (f[n - 1] - f[n - 2]) / step
            } else {
                (f[i + 1] - f[i - 1]) / (2.0 * step)
            }
        })
        .collect();
    Ok(MonotoneMap {
        x: grid.clone(),
        f,
        df,
        support: (first, last),
    })
}

fn interpolate_linear(grid: &[f64], values: &[f64], x: f64) -> f64 {
    if x <= grid[0] {
        return values[0];
    }
    if x >= grid[grid.len() - 1] {
        return values[values.len() - 1];
    }
    let k = grid.partition_point(|&g| g <= x).saturating_sub(1).min(grid.len() - 2);
    let w = (x - grid[k]) / (grid[k + 1] - grid[k]);
    values[k] + w * (values[k + 1] - values[k])
}

/// `sup |ρ1(F(x)) F′(x) − ρ0(x)|` over grid points at least one cell inside
/// the support of `ρ0`.
pub fn monge_ampere_residual(pair: &DensityPair1D, map: &MonotoneMap) -> f64 {
    let (first, last) = map.support;
    (first + 1..last)
        .map(|i| (interpolate_linear(&pair.grid, &pair.rho1, map.f[i]) * map.df[i] - pair.rho0[i]).abs())
        .fold(0.0, f64::max)
}

/// Weighted Jacobian inequality along `F_t = (1 − t) id + t F` at grid
/// index `i`, with `J_t = e^{ψ(x) − ψ(F_t x)} F_t′(x)`.
///
/// Finite `N`: `J_t^{1/N} − (1−t) β^{1−t}(d)^{1/N} − t β^t(d)^{1/N} J_1^{1/N}`.
/// `N = ∞`: `log J_t − t log J_1 − (K/2) t (1−t) d²`. Here `d = |F(x) − x|`.
pub fn jacobian_ineq_residual_1d(
    map: &MonotoneMap,
    weight: &Weight,
    params: ComparisonParams,
    t: f64,
    i: usize,
) -> Result<f64> {
    if !(t > 0.0 && t < 1.0) {
        return Err(Error::Domain(format!("t must lie in (0, 1), got {t}")));
    }
    if i >= map.x.len() {
        return Err(Error::InvalidInput(format!("grid index {i} out of range")));
    }
    let x = map.x[i];
    let fx = map.f[i];
    let ft = (1.0 - t) * x + t * fx;
    let dft = (1.0 - t) + t * map.df[i];
    let psi = |y: f64| weight.psi(&[y]);
    let jt = (psi(x) - psi(ft)).exp() * dft;
    let j1 = (psi(x) - psi(fx)).exp() * map.df[i];
    let d = (fx - x).abs();
    match params.n {
        Dimension::Infinite => {
            Ok(jt.ln() - t * j1.ln() - 0.5 * params.k * t * (1.0 - t) * d * d)
        }
        Dimension::Finite(n) => {
            let inv = 1.0 / n;
            let b_head = comparison_beta(params, 1.0 - t, d)?;
            let b_tail = comparison_beta(params, t, d)?;
            Ok(jt.powf(inv) - (1.0 - t) * b_head.powf(inv) - t * b_tail.powf(inv) * j1.max(0.0).powf(inv))
        }
    }
}
