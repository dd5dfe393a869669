//! Finite metric measure spaces, their discrete geodesics and model generators.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::PI;
use std::sync::OnceLock;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::SCHEMA_VERSION;

/// Relative tolerance for metric identities (triangle inequality, zero slack).
pub const METRIC_TOL: f64 = 1e-9;

/// Default cap on catalogued paths per ordered pair.
pub const DEFAULT_MAX_PATHS: usize = 64;

/// A discretized `(X, d, m)`: labelled points, a possibly asymmetric distance
/// matrix and strictly positive point masses.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteMetricMeasureSpace {
    labels: Vec<String>,
    dist: Vec<f64>,
    mass: Vec<f64>,
    symmetric: bool,
    coords: Option<Vec<Vec<f64>>>,
    mesh: Option<f64>,
}

/// On-disk layout of a space.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceFile {
    pub schema_version: u32,
    pub labels: Vec<String>,
    /// Row-major `n × n` distances.
    pub dist: Vec<f64>,
    pub mass: Vec<f64>,
    pub symmetric: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coords: Option<Vec<Vec<f64>>>,
    /// Grid step of generated spaces.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mesh: Option<f64>,
}

impl FiniteMetricMeasureSpace {
    /// Builds a space from row-major distances. Only shapes and finiteness are
    /// checked here; metric invariants are reported by [`validate`].
    pub fn new(labels: Vec<String>, dist: Vec<f64>, mass: Vec<f64>, symmetric: bool) -> Result<Self> {
        let n = mass.len();
        if labels.len() != n {
            return Err(Error::InvalidInput(format!(
                "{} labels for {n} masses",
                labels.len()
            )));
        }
        if dist.len() != n * n {
            return Err(Error::InvalidInput(format!(
                "distance matrix has {} entries, expected {n}² = {}",
                dist.len(),
                n * n
            )));
        }
        if dist.iter().chain(&mass).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("distances and masses must be finite".into()));
        }
        Ok(Self {
            labels,
            dist,
            mass,
            symmetric,
            coords: None,
            mesh: None,
        })
    }

    /// Numbered labels `"0"`, `"1"`, ...
    pub fn from_matrix(dist: Vec<f64>, mass: Vec<f64>, symmetric: bool) -> Result<Self> {
        let labels = (0..mass.len()).map(|i| i.to_string()).collect();
        Self::new(labels, dist, mass, symmetric)
    }

    pub fn with_coords(mut self, coords: Vec<Vec<f64>>) -> Result<Self> {
        if coords.len() != self.len() {
            return Err(Error::InvalidInput(format!(
                "{} coordinate rows for {} points",
                coords.len(),
                self.len()
            )));
        }
        self.coords = Some(coords);
        Ok(self)
    }

    pub fn with_mesh(mut self, h: f64) -> Self {
        self.mesh = Some(h);
        self
    }

    pub fn len(&self) -> usize {
        self.mass.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mass.is_empty()
    }

    #[inline]
    pub fn d(&self, i: usize, j: usize) -> f64 {
        self.dist[i * self.len() + j]
    }

    pub fn dist_row_major(&self) -> &[f64] {
        &self.dist
    }

    pub fn masses(&self) -> &[f64] {
        &self.mass
    }

    pub fn mass(&self, i: usize) -> f64 {
        self.mass[i]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn coords(&self) -> Option<&[Vec<f64>]> {
        self.coords.as_deref()
    }

    pub fn total_mass(&self) -> f64 {
        self.mass.iter().sum()
    }

    pub fn mass_of(&self, set: &[usize]) -> f64 {
        set.iter().map(|&i| self.mass[i]).sum()
    }

    pub fn diameter(&self) -> f64 {
        self.dist.iter().copied().fold(0.0, f64::max)
    }

    /// Stored grid step, or the largest nearest-neighbour distance.
    pub fn mesh(&self) -> f64 {
        self.mesh.unwrap_or_else(|| {
            let n = self.len();
            (0..n)
                .map(|i| {
                    (0..n)
                        .filter(|&j| j != i)
                        .map(|j| self.d(i, j))
                        .fold(f64::INFINITY, f64::min)
                })
                .filter(|v| v.is_finite())
                .fold(0.0, f64::max)
        })
    }

    pub fn to_file(&self) -> SpaceFile {
        SpaceFile {
            schema_version: SCHEMA_VERSION,
            labels: self.labels.clone(),
            dist: self.dist.clone(),
            mass: self.mass.clone(),
            symmetric: self.symmetric,
            coords: self.coords.clone(),
            mesh: self.mesh,
        }
    }

    pub fn from_file(file: SpaceFile) -> Result<Self> {
        if file.schema_version != SCHEMA_VERSION {
            return Err(Error::InvalidInput(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                file.schema_version
            )));
        }
        let mut space = Self::new(file.labels, file.dist, file.mass, file.symmetric)?;
        if let Some(c) = file.coords {
            space = space.with_coords(c)?;
        }
        space.mesh = file.mesh;
        Ok(space)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("space serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: SpaceFile =
            serde_json::from_str(text).map_err(|e| Error::InvalidInput(format!("space file: {e}")))?;
        Self::from_file(file)
    }
}

/// A broken invariant of a space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "violation", rename_all = "snake_case")]
pub enum Violation {
    NonzeroDiagonal { i: usize, value: f64 },
    NonpositiveDistance { i: usize, j: usize, value: f64 },
    /// `d(i,k) > d(i,j) + d(j,k)` by `excess`.
    TriangleViolation { i: usize, j: usize, k: usize, excess: f64 },
    AsymmetricPair { i: usize, j: usize, difference: f64 },
    NonpositiveMass { i: usize, value: f64 },
}

/// Upper bound on reported violations.
const MAX_VIOLATIONS: usize = 10_000;

/// Every broken invariant, up to a reporting cap.
pub fn validate(space: &FiniteMetricMeasureSpace) -> Vec<Violation> {
    let n = space.len();
    let mut out = Vec::new();
    for i in 0..n {
        if space.mass(i) <= 0.0 {
            out.push(Violation::NonpositiveMass { i, value: space.mass(i) });
        }
        if space.d(i, i) != 0.0 {
            out.push(Violation::NonzeroDiagonal { i, value: space.d(i, i) });
        }
    }
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            if space.d(i, j) <= 0.0 {
                out.push(Violation::NonpositiveDistance { i, j, value: space.d(i, j) });
            }
            if space.is_symmetric() && i < j && space.d(i, j) != space.d(j, i) {
                out.push(Violation::AsymmetricPair {
                    i,
                    j,
                    difference: space.d(i, j) - space.d(j, i),
                });
            }
        }
    }
    let tol = METRIC_TOL * space.diameter().max(1.0);
    let triangles: Vec<Violation> = (0..n)
        .into_par_iter()
        .flat_map_iter(|i| {
            let mut local = Vec::new();
            for j in 0..n {
                let dij = space.d(i, j);
                for k in 0..n {
                    let excess = space.d(i, k) - (dij + space.d(j, k));
                    if excess > tol {
                        local.push(Violation::TriangleViolation { i, j, k, excess });
                    }
                }
            }
            local
        })
        .collect();
    out.extend(triangles);
    out.truncate(MAX_VIOLATIONS);
    out
}

/// Open forward ball `{ y : d(x, y) < r }`.
pub fn ball(space: &FiniteMetricMeasureSpace, x: usize, r: f64) -> Vec<usize> {
    (0..space.len()).filter(|&y| space.d(x, y) < r).collect()
}

/// A chain of points with normalized cumulative-length parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscretePath {
    pub vertices: Vec<usize>,
    pub params: Vec<f64>,
    /// Path length minus the distance between its endpoints.
    pub slack: f64,
}

impl DiscretePath {
    fn from_vertices(space_dist: impl Fn(usize, usize) -> f64, vertices: Vec<usize>) -> Self {
        let mut cumulative = Vec::with_capacity(vertices.len());
        let mut length = 0.0;
        cumulative.push(0.0);
        for w in vertices.windows(2) {
            length += space_dist(w[0], w[1]);
            cumulative.push(length);
        }
        let params = if length > 0.0 {
            let mut p: Vec<f64> = cumulative.iter().map(|c| c / length).collect();
            *p.last_mut().unwrap() = 1.0;
            p
        } else {
            vec![0.0; vertices.len()]
        };
        let chord = space_dist(vertices[0], *vertices.last().unwrap());
        Self {
            vertices,
            params,
            slack: (length - chord).max(0.0),
        }
    }

    pub fn start(&self) -> usize {
        self.vertices[0]
    }

    pub fn end(&self) -> usize {
        *self.vertices.last().unwrap()
    }

    /// Index of the vertex whose parameter is nearest `t`, ties toward the
    /// smaller parameter.
    pub fn nearest_index(&self, t: f64) -> usize {
        let mut best = 0;
        let mut best_gap = f64::INFINITY;
        for (idx, &p) in self.params.iter().enumerate() {
            let gap = (p - t).abs();
            if gap < best_gap - 1e-12 {
                best = idx;
                best_gap = gap;
            }
        }
        best
    }

    /// The vertex `e_t(γ)` under nearest-parameter snapping.
    pub fn eval(&self, t: f64) -> usize {
        self.vertices[self.nearest_index(t)]
    }

    /// Largest single step along the chain, in parameter units.
    pub fn max_step(&self) -> f64 {
        self.params
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone)]
struct PairPaths {
    paths: Vec<DiscretePath>,
    pruned: bool,
}

/// Slack-bounded chains between every ordered pair of points, searched lazily
/// and cached. Chains move along elementary hops: pairs `(u, v)` with no third
/// point `w` satisfying `d(u,w) + d(w,v) ≤ d(u,v)` up to rounding. The direct
/// two-point chain is always included.
#[derive(Debug)]
pub struct GeodesicCatalogue {
    n: usize,
    dist: Vec<f64>,
    eps_geo: f64,
    max_paths: usize,
    tol: f64,
    hops: Vec<Vec<usize>>,
    cells: Vec<OnceLock<PairPaths>>,
}

/// A pair whose path list hit the per-pair cap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CataloguePruned {
    pub from: usize,
    pub to: usize,
}

pub fn enumerate_geodesics(
    space: &FiniteMetricMeasureSpace,
    eps_geo: f64,
    max_paths_per_pair: usize,
) -> Result<GeodesicCatalogue> {
    if !(eps_geo >= 0.0) {
        return Err(Error::InvalidInput(format!("ε_geo must be >= 0, got {eps_geo}")));
    }
    if max_paths_per_pair == 0 {
        return Err(Error::InvalidInput("max_paths_per_pair must be positive".into()));
    }
    let n = space.len();
    let tol = METRIC_TOL * space.diameter().max(1e-300);
    let hops: Vec<Vec<usize>> = (0..n)
        .into_par_iter()
        .map(|u| {
            (0..n)
                .filter(|&v| {
                    v != u && {
                        let duv = space.d(u, v);
                        !(0..n).any(|w| {
                            w != u && w != v && space.d(u, w) + space.d(w, v) <= duv + tol
                        })
                    }
                })
                .collect()
        })
        .collect();
    Ok(GeodesicCatalogue {
        n,
        dist: space.dist_row_major().to_vec(),
        eps_geo,
        max_paths: max_paths_per_pair,
        tol,
        hops,
        cells: (0..n * n).map(|_| OnceLock::new()).collect(),
    })
}

#[derive(Debug)]
struct Partial {
    key: i64,
    depth: usize,
    seq: u64,
    vertices: Vec<usize>,
    length: f64,
}

impl PartialEq for Partial {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Partial {}
impl PartialOrd for Partial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Partial {
    // Max-heap: shortest estimate first, then deepest, then earliest pushed.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .key
            .cmp(&self.key)
            .then(self.depth.cmp(&other.depth))
            .then(other.seq.cmp(&self.seq))
    }
}

impl GeodesicCatalogue {
    #[inline]
    fn d(&self, i: usize, j: usize) -> f64 {
        self.dist[i * self.n + j]
    }

    pub fn eps_geo(&self) -> f64 {
        self.eps_geo
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Catalogued paths from `i` to `j`, best first: least slack, then the
    /// finest step, then lexicographic vertex order.
    pub fn paths(&self, i: usize, j: usize) -> &[DiscretePath] {
        &self.cell(i, j).paths
    }

    /// The preferred path from `i` to `j`.
    pub fn best(&self, i: usize, j: usize) -> &DiscretePath {
        &self.paths(i, j)[0]
    }

    /// All paths whose slack is minimal up to rounding.
    pub fn min_slack_paths(&self, i: usize, j: usize) -> &[DiscretePath] {
        let paths = self.paths(i, j);
        let min = paths[0].slack;
        let count = paths
            .iter()
            .take_while(|p| p.slack <= min + self.tol)
            .count();
        &paths[..count]
    }

    fn cell(&self, i: usize, j: usize) -> &PairPaths {
        self.cells[i * self.n + j].get_or_init(|| self.search(i, j))
    }

    /// Fills every pair in parallel.
    pub fn materialize(&self) {
        (0..self.n * self.n).into_par_iter().for_each(|c| {
            let _ = self.cell(c / self.n, c % self.n);
        });
    }

    /// Pairs searched so far whose path list was truncated by the cap.
    pub fn pruned_pairs(&self) -> Vec<CataloguePruned> {
        self.cells
            .iter()
            .enumerate()
            .filter_map(|(c, cell)| {
                cell.get().filter(|p| p.pruned).map(|_| CataloguePruned {
                    from: c / self.n,
                    to: c % self.n,
                })
            })
            .collect()
    }

    fn search(&self, i: usize, j: usize) -> PairPaths {
        let d = |a: usize, b: usize| self.d(a, b);
        if i == j {
            return PairPaths {
                paths: vec![DiscretePath {
                    vertices: vec![i],
                    params: vec![0.0],
                    slack: 0.0,
                }],
                pruned: false,
            };
        }
        let dij = self.d(i, j);
        let bound = dij + self.eps_geo + self.tol;
        let inside: Vec<bool> = (0..self.n)
            .map(|k| self.d(i, k) + self.d(k, j) <= bound)
            .collect();
        let quantum = self.tol;
        let key_of = |estimate: f64| (estimate / quantum).round() as i64;

        let mut heap = BinaryHeap::new();
        let mut seq = 0u64;
        heap.push(Partial {
            key: key_of(dij),
            depth: 1,
            seq,
            vertices: vec![i],
            length: 0.0,
        });
        let mut found: Vec<Vec<usize>> = Vec::new();
        let mut pruned = false;
        while let Some(p) = heap.pop() {
            let v = *p.vertices.last().unwrap();
            if v == j {
                found.push(p.vertices);
                if found.len() == self.max_paths {
                    pruned = !heap.is_empty();
                    break;
                }
                continue;
            }
            for &w in &self.hops[v] {
                if !inside[w] || p.vertices.contains(&w) {
                    continue;
                }
                let length = p.length + self.d(v, w);
                let estimate = length + self.d(w, j);
                if estimate > bound {
                    continue;
                }
                let mut vertices = p.vertices.clone();
                vertices.push(w);
                seq += 1;
                heap.push(Partial {
                    key: key_of(estimate),
                    depth: vertices.len(),
                    seq,
                    vertices,
                    length,
                });
            }
        }
        if !found.iter().any(|v| v.len() == 2) {
            found.push(vec![i, j]);
        }
        let mut paths: Vec<DiscretePath> = found
            .into_iter()
            .map(|v| DiscretePath::from_vertices(d, v))
            .collect();
        let tol = self.tol;
        paths.sort_by(|a, b| {
            let sa = (a.slack / tol).round() as i64;
            let sb = (b.slack / tol).round() as i64;
            sa.cmp(&sb)
                .then(a.max_step().total_cmp(&b.max_step()))
                .then(a.vertices.cmp(&b.vertices))
        });
        PairPaths { paths, pruned }
    }
}

/// `Z_t(A, B)`: snapped time-`t` points of catalogued paths from `A` to `B`.
///
/// A path contributes its nearest-parameter vertex only when that vertex lies
/// within half a mesh step of the exact time-`t` position, so coarse chains
/// that skip over the target region contribute nothing.
pub fn z_set(
    space: &FiniteMetricMeasureSpace,
    catalogue: &GeodesicCatalogue,
    a_set: &[usize],
    b_set: &[usize],
    t: f64,
) -> Result<Vec<usize>> {
    if a_set.is_empty() || b_set.is_empty() {
        return Err(Error::EmptySet);
    }
    if !(t > 0.0 && t < 1.0) {
        return Err(Error::Domain(format!("Z_t needs t in (0, 1), got {t}")));
    }
    let half_mesh = 0.5 * space.mesh();
    let mut hit = vec![false; space.len()];
    for &a in a_set {
        for &b in b_set {
            let dab = space.d(a, b);
            let window = if dab > 0.0 { half_mesh / dab + 1e-12 } else { f64::INFINITY };
            for path in catalogue.paths(a, b) {
                let idx = path.nearest_index(t);
                if (path.params[idx] - t).abs() <= window {
                    hit[path.vertices[idx]] = true;
                }
            }
        }
    }
    Ok((0..space.len()).filter(|&p| hit[p]).collect())
}

/// A map `Y → X` claimed to be `ε`-approximating.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApproximationMap {
    pub assignment: Vec<usize>,
    pub epsilon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApproximationVerdict {
    pub holds: bool,
    pub epsilon: f64,
    /// `(y, z, |d_X(φy, φz) − d_Y(y, z)|)` for the worst pair.
    pub worst_distortion: (usize, usize, f64),
    /// `(x, distance from x's nearest image point)` for the worst point of X.
    pub worst_coverage: (usize, f64),
    pub distortion_defect: f64,
    pub coverage_defect: f64,
}

pub fn check_approximation(
    map: &ApproximationMap,
    y: &FiniteMetricMeasureSpace,
    x: &FiniteMetricMeasureSpace,
) -> Result<ApproximationVerdict> {
    if map.assignment.len() != y.len() {
        return Err(Error::InvalidInput(format!(
            "assignment covers {} of {} points",
            map.assignment.len(),
            y.len()
        )));
    }
    if let Some(&bad) = map.assignment.iter().find(|&&p| p >= x.len()) {
        return Err(Error::InvalidInput(format!("assignment target {bad} is not a point")));
    }
    let mut worst_distortion = (0, 0, 0.0);
    for a in 0..y.len() {
        for b in 0..y.len() {
            let gap = (x.d(map.assignment[a], map.assignment[b]) - y.d(a, b)).abs();
            if gap > worst_distortion.2 {
                worst_distortion = (a, b, gap);
            }
        }
    }
    let mut image = vec![false; x.len()];
    for &p in &map.assignment {
        image[p] = true;
    }
    let mut worst_coverage = (0, 0.0);
    for p in 0..x.len() {
        let gap = (0..x.len())
            .filter(|&q| image[q])
            .map(|q| x.d(q, p))
            .fold(f64::INFINITY, f64::min);
        if gap > worst_coverage.1 {
            worst_coverage = (p, gap);
        }
    }
    let slack = 1e-12 * x.diameter().max(y.diameter()).max(1.0);
    let distortion_defect = (worst_distortion.2 - map.epsilon).max(0.0);
    let coverage_defect = (worst_coverage.1 - map.epsilon).max(0.0);
    Ok(ApproximationVerdict {
        holds: distortion_defect <= slack && coverage_defect <= slack,
        epsilon: map.epsilon,
        worst_distortion,
        worst_coverage,
        distortion_defect,
        coverage_defect,
    })
}

/// Weight exponent `ψ` of a generated measure `e^{-ψ} · Lebesgue`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Weight {
    #[default]
    Flat,
    /// `ψ(x) = k0 |x − center|² / 2`; a missing center means the origin.
    Gaussian {
        k0: f64,
        #[serde(default)]
        center: Vec<f64>,
    },
    /// `ψ(x) = ⟨gradient, x⟩`.
    Linear { gradient: Vec<f64> },
}

impl Weight {
    pub fn psi(&self, x: &[f64]) -> f64 {
        match self {
            Weight::Flat => 0.0,
            Weight::Gaussian { k0, center } => {
                let sq: f64 = x
                    .iter()
                    .enumerate()
                    .map(|(i, xi)| {
                        let c = center.get(i).copied().unwrap_or(0.0);
                        (xi - c) * (xi - c)
                    })
                    .sum();
                0.5 * k0 * sq
            }
            Weight::Linear { gradient } => x
                .iter()
                .zip(gradient.iter().chain(std::iter::repeat(&0.0)))
                .map(|(xi, g)| xi * g)
                .sum(),
        }
    }
}

fn check_step(h: f64) -> Result<()> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidInput(format!("step must be positive, got {h}")));
    }
    Ok(())
}

/// Number of cells of width close to `h` covering a length.
fn cell_count(length: f64, h: f64) -> Result<usize> {
    let cells = (length / h).round();
    if !(cells >= 2.0) {
        return Err(Error::Resolution { points: cells.max(0.0) as usize + 1 });
    }
    if cells > 1e7 {
        return Err(Error::InvalidInput(format!("step {h} gives too many points")));
    }
    Ok(cells as usize)
}

fn one_dim_space(xs: Vec<f64>, mass: Vec<f64>, h: f64) -> Result<FiniteMetricMeasureSpace> {
    let n = xs.len();
    let mut dist = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            dist[i * n + j] = (xs[i] - xs[j]).abs();
        }
    }
    let labels = xs.iter().map(|x| format!("{x}")).collect();
    Ok(FiniteMetricMeasureSpace::new(labels, dist, mass, true)?
        .with_coords(xs.into_iter().map(|x| vec![x]).collect())?
        .with_mesh(h))
}

/// `[a, b]` with step close to `h` (adjusted to divide `b − a`), endpoint
/// half cells and masses `e^{-ψ(x)} · cell`.
pub fn gen_interval(a: f64, b: f64, h: f64, weight: &Weight) -> Result<FiniteMetricMeasureSpace> {
    check_step(h)?;
    if !(b > a) {
        return Err(Error::InvalidInput(format!("empty interval [{a}, {b}]")));
    }
    let cells = cell_count(b - a, h)?;
    let step = (b - a) / cells as f64;
    let xs: Vec<f64> = (0..=cells)
        .map(|i| if i == cells { b } else { a + step * i as f64 })
        .collect();
    let mass = xs
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let cell = if i == 0 || i == cells { 0.5 * step } else { step };
            (-weight.psi(&[x])).exp() * cell
        })
        .collect();
    one_dim_space(xs, mass, step)
}

/// The model space `[0, π]` with measure `sin^{N-1}(x) dx`, the CD(N-1, N)
/// comparison space. Interior masses use the midpoint rule on each cell; the
/// two half cells at the ends use their own midpoints.
pub fn gen_model_space(n: f64, h: f64) -> Result<FiniteMetricMeasureSpace> {
    check_step(h)?;
    if !(n >= 1.0 && n.is_finite()) {
        return Err(Error::InvalidInput(format!("model space needs finite N >= 1, got {n}")));
    }
    let cells = cell_count(PI, h)?;
    let step = PI / cells as f64;
    let xs: Vec<f64> = (0..=cells)
        .map(|i| if i == cells { PI } else { step * i as f64 })
        .collect();
    let density = |x: f64| x.sin().powf(n - 1.0);
    let mass = (0..=cells)
        .map(|i| {
            if i == 0 || i == cells {
                density(0.25 * step) * 0.5 * step
            } else {
                density(xs[i]) * step
            }
        })
        .collect();
    one_dim_space(xs, mass, step)
}

/// Product grid with `counts[k]` points of spacing `h` along axis `k`,
/// origin at zero, trapezoidal cell volumes and a distance given by `norm`.
fn gen_grid(
    counts: &[usize],
    h: f64,
    weight: &Weight,
    norm: impl Fn(&[f64]) -> f64,
) -> Result<FiniteMetricMeasureSpace> {
    check_step(h)?;
    if counts.is_empty() || counts.len() > 3 {
        return Err(Error::Dimension(format!("grids have 1 to 3 axes, got {}", counts.len())));
    }
    let total: usize = counts.iter().product();
    if total < 3 {
        return Err(Error::Resolution { points: total });
    }
    if total > 20_000 {
        return Err(Error::InvalidInput(format!("grid of {total} points is too large")));
    }
    let mut coords = Vec::with_capacity(total);
    let mut mass = Vec::with_capacity(total);
    for flat in 0..total {
        let mut rest = flat;
        let mut idx = vec![0usize; counts.len()];
        for axis in (0..counts.len()).rev() {
            idx[axis] = rest % counts[axis];
            rest /= counts[axis];
        }
        let x: Vec<f64> = idx.iter().map(|&i| i as f64 * h).collect();
        let cell: f64 = idx
            .iter()
            .zip(counts)
            .map(|(&i, &c)| if c == 1 { 1.0 } else if i == 0 || i == c - 1 { 0.5 * h } else { h })
            .product();
        mass.push((-weight.psi(&x)).exp() * cell);
        coords.push(x);
    }
    let mut dist = vec![0.0; total * total];
    let mut diff = vec![0.0; counts.len()];
    for i in 0..total {
        for j in 0..total {
            for (k, d) in diff.iter_mut().enumerate() {
                *d = coords[i][k] - coords[j][k];
            }
            dist[i * total + j] = norm(&diff);
        }
    }
    let labels = coords
        .iter()
        .map(|c| {
            c.iter().map(|v| format!("{v}")).collect::<Vec<_>>().join(",")
        })
        .collect();
    Ok(FiniteMetricMeasureSpace::new(labels, dist, mass, true)?
        .with_coords(coords)?
        .with_mesh(h))
}

pub fn gen_grid_euclidean(counts: &[usize], h: f64, weight: &Weight) -> Result<FiniteMetricMeasureSpace> {
    gen_grid(counts, h, weight, |v| v.iter().map(|x| x * x).sum::<f64>().sqrt())
}

/// Lebesgue grid with the `ℓ_p` distance, `1 ≤ p ≤ ∞`.
pub fn gen_lp_grid(p: f64, counts: &[usize], h: f64) -> Result<FiniteMetricMeasureSpace> {
    if !(p >= 1.0) {
        return Err(Error::InvalidInput(format!("ℓ_p needs p >= 1, got {p}")));
    }
    if p.is_infinite() {
        gen_grid(counts, h, &Weight::Flat, |v| v.iter().fold(0.0, |m, x| m.max(x.abs())))
    } else if p == 1.0 {
        gen_grid(counts, h, &Weight::Flat, |v| v.iter().map(|x| x.abs()).sum())
    } else if p == 2.0 {
        gen_grid_euclidean(counts, h, &Weight::Flat)
    } else {
        gen_grid(counts, h, &Weight::Flat, |v| {
            v.iter().map(|x| x.abs().powf(p)).sum::<f64>().powf(1.0 / p)
        })
    }
}

/// Circle of the given radius with arclength distance and uniform masses;
/// the step is adjusted so that it divides the circumference.
pub fn gen_circle(radius: f64, h: f64) -> Result<FiniteMetricMeasureSpace> {
    check_step(h)?;
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::InvalidInput(format!("radius must be positive, got {radius}")));
    }
    let circumference = 2.0 * PI * radius;
    let cells = (circumference / h).round();
    if cells < 3.0 {
        return Err(Error::Resolution { points: cells.max(0.0) as usize });
    }
    let n = cells as usize;
    let step = circumference / n as f64;
    let mut dist = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let k = i.abs_diff(j).min(n - i.abs_diff(j));
            dist[i * n + j] = k as f64 * step;
        }
    }
    let coords = (0..n)
        .map(|i| {
            let angle = 2.0 * PI * i as f64 / n as f64;
            vec![radius * angle.cos(), radius * angle.sin()]
        })
        .collect();
    let labels = (0..n).map(|i| format!("{}", i as f64 * step)).collect();
    Ok(FiniteMetricMeasureSpace::new(labels, dist, vec![step; n], true)?
        .with_coords(coords)?
        .with_mesh(step))
}
