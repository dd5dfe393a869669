//! Exact quadratic-cost optimal transport on finite spaces, dynamical plans
//! over the geodesic catalogue and displacement interpolation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::space::{DiscretePath, FiniteMetricMeasureSpace, GeodesicCatalogue};
use crate::SCHEMA_VERSION;

/// Tolerance on the total mass of a probability vector.
pub const MASS_TOL: f64 = 1e-12;

/// Coupling entries at or below this mass are treated as rounding noise.
const NOISE_MASS: f64 = 1e-15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityVector {
    mass: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureFile {
    pub schema_version: u32,
    pub mass: Vec<f64>,
}

impl ProbabilityVector {
    pub fn new(mass: Vec<f64>) -> Result<Self> {
        if mass.is_empty() {
            return Err(Error::EmptySet);
        }
        if let Some((i, v)) = mass.iter().enumerate().find(|(_, v)| !(**v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidInput(format!("mass[{i}] = {v} is not a nonnegative real")));
        }
        let total: f64 = mass.iter().sum();
        if (total - 1.0).abs() > MASS_TOL * mass.len().max(1) as f64 {
            return Err(Error::InvalidInput(format!("masses sum to {total}, not 1")));
        }
        Ok(Self { mass })
    }

    /// Normalizes nonnegative weights with positive total.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidInput("weights must be nonnegative reals".into()));
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::InvalidInput("weights have zero total".into()));
        }
        Ok(Self {
            mass: weights.iter().map(|w| w / total).collect(),
        })
    }

    pub fn dirac(n: usize, at: usize) -> Result<Self> {
        if at >= n {
            return Err(Error::InvalidInput(format!("point {at} is outside 0..{n}")));
        }
        let mut mass = vec![0.0; n];
        mass[at] = 1.0;
        Ok(Self { mass })
    }

    /// The normalized restriction of the space's measure to `set`.
    pub fn restricted(space: &FiniteMetricMeasureSpace, set: &[usize]) -> Result<Self> {
        if set.is_empty() {
            return Err(Error::EmptySet);
        }
        let mut w = vec![0.0; space.len()];
        for &i in set {
            if i >= space.len() {
                return Err(Error::InvalidInput(format!("point {i} is outside the space")));
            }
            w[i] = space.mass(i);
        }
        Self::from_weights(&w)
    }

    pub(crate) fn from_raw(mass: Vec<f64>) -> Self {
        Self { mass }
    }

    pub fn len(&self) -> usize {
        self.mass.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mass.is_empty()
    }

    pub fn masses(&self) -> &[f64] {
        &self.mass
    }

    pub fn support(&self) -> Vec<usize> {
        (0..self.mass.len()).filter(|&i| self.mass[i] > 0.0).collect()
    }

    /// Density `ρ = μ / m` with respect to the space's measure.
    pub fn density(&self, space: &FiniteMetricMeasureSpace) -> Vec<f64> {
        self.mass.iter().zip(space.masses()).map(|(p, m)| p / m).collect()
    }

    pub fn check_on(&self, space: &FiniteMetricMeasureSpace) -> Result<()> {
        if self.len() != space.len() {
            return Err(Error::InvalidInput(format!(
                "measure has {} entries for a space of {} points",
                self.len(),
                space.len()
            )));
        }
        Ok(())
    }

    pub fn to_file(&self) -> MeasureFile {
        MeasureFile {
            schema_version: SCHEMA_VERSION,
            mass: self.mass.clone(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: MeasureFile =
            serde_json::from_str(text).map_err(|e| Error::InvalidInput(format!("measure file: {e}")))?;
        if file.schema_version != SCHEMA_VERSION {
            return Err(Error::InvalidInput(format!(
                "unsupported schema_version {}",
                file.schema_version
            )));
        }
        Self::new(file.mass)
    }
}

/// Sparse transport plan between two probability vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coupling {
    /// `(source, target, mass)` with `mass > 0`.
    pub entries: Vec<(usize, usize, f64)>,
    /// `Σ mass · d(source, target)²`.
    pub cost: f64,
}

impl Coupling {
    pub fn marginals(&self, n: usize) -> (Vec<f64>, Vec<f64>) {
        let mut first = vec![0.0; n];
        let mut second = vec![0.0; n];
        for &(i, j, w) in &self.entries {
            first[i] += w;
            second[j] += w;
        }
        (first, second)
    }
}

/// `W₂(μ0, μ1)` and an optimal coupling.
pub fn w2(space: &FiniteMetricMeasureSpace, mu0: &ProbabilityVector, mu1: &ProbabilityVector) -> Result<(f64, Coupling)> {
    let coupling = optimal_coupling(space, mu0, mu1, |i, j| {
        let d = space.d(i, j);
        d * d
    })?;
    Ok((coupling.cost.max(0.0).sqrt(), coupling))
}

/// `W₂` only.
pub fn w2_distance(space: &FiniteMetricMeasureSpace, mu0: &ProbabilityVector, mu1: &ProbabilityVector) -> Result<f64> {
    w2(space, mu0, mu1).map(|(d, _)| d)
}

/// Optimal coupling for an arbitrary cost; the reported `cost` is always the
/// squared-distance cost of the returned plan.
pub fn optimal_coupling<C: Fn(usize, usize) -> f64>(
    space: &FiniteMetricMeasureSpace,
    mu0: &ProbabilityVector,
    mu1: &ProbabilityVector,
    cost: C,
) -> Result<Coupling> {
    mu0.check_on(space)?;
    mu1.check_on(space)?;
    let rows = mu0.support();
    let cols = mu1.support();
    let supply: Vec<f64> = rows.iter().map(|&i| mu0.masses()[i]).collect();
    let demand: Vec<f64> = cols.iter().map(|&j| mu1.masses()[j]).collect();
    let basis = transport_simplex(&supply, &demand, |r, c| cost(rows[r], cols[c]))?;
    let entries: Vec<(usize, usize, f64)> = basis
        .into_iter()
        .filter(|&(_, _, x)| x > NOISE_MASS)
        .map(|(r, c, x)| (rows[r], cols[c], x))
        .collect();
    let cost = entries
        .iter()
        .map(|&(i, j, w)| {
            let d = space.d(i, j);
            w * d * d
        })
        .sum();
    Ok(Coupling { entries, cost })
}

/// Transportation simplex (u-v method) on a spanning-tree basis, started from
/// the north-west corner rule. Returns the basic cells with their values.
fn transport_simplex<C: Fn(usize, usize) -> f64>(
    supply: &[f64],
    demand: &[f64],
    cost: C,
) -> Result<Vec<(usize, usize, f64)>> {
    let m = supply.len();
    let k = demand.len();
    if m == 0 || k == 0 {
        return Err(Error::EmptySet);
    }
    let c: Vec<f64> = (0..m * k).map(|x| cost(x / k, x % k)).collect();
    if c.iter().any(|v| !v.is_finite()) {
        return Err(Error::Solver("non-finite transport cost".into()));
    }
    let scale = c.iter().fold(0.0_f64, |a, b| a.max(b.abs())).max(1e-300);
    let price_tol = 1e-12 * scale;

    // North-west corner: m + k - 1 cells forming a staircase tree.
    let mut s = supply.to_vec();
    let mut d = demand.to_vec();
    let mut basis: Vec<(usize, usize, f64)> = Vec::with_capacity(m + k - 1);
    let (mut i, mut j) = (0, 0);
    loop {
        let q = s[i].min(d[j]).max(0.0);
        basis.push((i, j, q));
        s[i] -= q;
        d[j] -= q;
        if i == m - 1 && j == k - 1 {
            break;
        }
        if i == m - 1 {
            j += 1;
        } else if j == k - 1 || s[i] <= d[j] {
            i += 1;
        } else {
            j += 1;
        }
    }
    if m == 1 || k == 1 {
        return Ok(basis);
    }

    let nodes = m + k;
    let max_iter = 100 * nodes * nodes + 1000;
    let mut adjacency: Vec<Vec<usize>> = vec![Vec::new(); nodes];
    let mut potential = vec![0.0; nodes];
    let mut parent_edge = vec![usize::MAX; nodes];
    let mut depth = vec![0usize; nodes];
    let mut order = Vec::with_capacity(nodes);
    for _ in 0..max_iter {
        for a in adjacency.iter_mut() {
            a.clear();
        }
        for (e, &(r, col, _)) in basis.iter().enumerate() {
            adjacency[r].push(e);
            adjacency[m + col].push(e);
        }
        // Potentials u_r + v_c = cost on basic cells, rooted at row 0.
        order.clear();
        order.push(0);
        parent_edge.iter_mut().for_each(|p| *p = usize::MAX);
        potential[0] = 0.0;
        depth[0] = 0;
        let mut visited = vec![false; nodes];
        visited[0] = true;
        let mut head = 0;
        while head < order.len() {
            let node = order[head];
            head += 1;
            for &e in &adjacency[node] {
                let (r, col, _) = basis[e];
                let other = if node == r { m + col } else { r };
                if visited[other] {
                    continue;
                }
                visited[other] = true;
                parent_edge[other] = e;
                depth[other] = depth[node] + 1;
                potential[other] = c[r * k + col] - potential[node];
                order.push(other);
            }
        }
        if order.len() != nodes {
            return Err(Error::Solver("basis is not a spanning tree".into()));
        }

        // Dantzig pricing.
        let mut entering = None;
        let mut best = -price_tol;
        for r in 0..m {
            for col in 0..k {
                let reduced = c[r * k + col] - potential[r] - potential[m + col];
                if reduced < best {
                    best = reduced;
                    entering = Some((r, col));
                }
            }
        }
        let Some((er, ec)) = entering else {
            return Ok(basis);
        };

        // Tree path from the column node to the row node closes the cycle.
        let other_end = |e: usize, node: usize| {
            let (r, col, _) = basis[e];
            if node == r { m + col } else { r }
        };
        let mut from_col = Vec::new();
        let mut from_row = Vec::new();
        let (mut a, mut b) = (m + ec, er);
        while a != b {
            if depth[a] >= depth[b] {
                let e = parent_edge[a];
                from_col.push(e);
                a = other_end(e, a);
            } else {
                let e = parent_edge[b];
                from_row.push(e);
                b = other_end(e, b);
            }
        }
        from_row.reverse();
        let cycle: Vec<usize> = from_col.into_iter().chain(from_row).collect();
        // Odd positions along the cycle (starting after the entering cell) lose mass.
        let mut leave = usize::MAX;
        let mut theta = f64::INFINITY;
        for (pos, &e) in cycle.iter().enumerate() {
            if pos % 2 == 0 && basis[e].2 < theta {
                theta = basis[e].2;
                leave = e;
            }
        }
        if leave == usize::MAX {
            return Err(Error::Solver("unbounded pivot".into()));
        }
        for (pos, &e) in cycle.iter().enumerate() {
            if pos % 2 == 0 {
                basis[e].2 -= theta;
            } else {
                basis[e].2 += theta;
            }
        }
        basis[leave] = (er, ec, theta);
    }
    Err(Error::Solver(format!(
        "transportation simplex did not converge in {max_iter} pivots"
    )))
}

/// Largest supported spanning-tree count for vertex enumeration.
const MAX_TREES: f64 = 2e6;
/// Largest common denominator for the assignment route.
const MAX_DENOMINATOR: usize = 12;

/// Exact `W₂` by exhaustive search, for at most 6 support points.
///
/// Small instances enumerate every vertex of the transport polytope (one per
/// spanning tree of the bipartite support graph). Larger instances with
/// masses that are multiples of `1/Q`, `Q ≤ 12`, are split into unit atoms and
/// solved as an assignment problem by subset dynamic programming.
pub fn brute_force_w2(space: &FiniteMetricMeasureSpace, mu0: &ProbabilityVector, mu1: &ProbabilityVector) -> Result<f64> {
    mu0.check_on(space)?;
    mu1.check_on(space)?;
    let rows = mu0.support();
    let cols = mu1.support();
    let mut combined: Vec<usize> = rows.iter().chain(&cols).copied().collect();
    combined.sort_unstable();
    combined.dedup();
    if combined.len() > 6 {
        return Err(Error::TooLarge(format!("combined support has {} points", combined.len())));
    }
    let cost = |i: usize, j: usize| {
        let d = space.d(i, j);
        d * d
    };
    let (m, k) = (rows.len(), cols.len());
    let trees = (m as f64).powi(k as i32 - 1) * (k as f64).powi(m as i32 - 1);
    if trees <= MAX_TREES {
        let supply: Vec<f64> = rows.iter().map(|&i| mu0.masses()[i]).collect();
        let demand: Vec<f64> = cols.iter().map(|&j| mu1.masses()[j]).collect();
        let best = enumerate_vertices(&supply, &demand, |r, c| cost(rows[r], cols[c]));
        return Ok(best.max(0.0).sqrt());
    }
    for q in 1..=MAX_DENOMINATOR {
        let units = |mu: &ProbabilityVector, support: &[usize]| -> Option<Vec<usize>> {
            let mut atoms = Vec::new();
            for &i in support {
                let scaled = mu.masses()[i] * q as f64;
                let count = scaled.round();
                if (scaled - count).abs() > 1e-9 {
                    return None;
                }
                atoms.extend(std::iter::repeat_n(i, count as usize));
            }
            (atoms.len() == q).then_some(atoms)
        };
        if let (Some(a), Some(b)) = (units(mu0, &rows), units(mu1, &cols)) {
            let best = assignment_dp(&a, &b, cost) / q as f64;
            return Ok(best.max(0.0).sqrt());
        }
    }
    Err(Error::TooLarge(format!(
        "{m}×{k} support with irrational masses exceeds the enumeration cap"
    )))
}

/// Minimum cost over all spanning-tree basic solutions that are feasible.
fn enumerate_vertices<C: Fn(usize, usize) -> f64>(supply: &[f64], demand: &[f64], cost: C) -> f64 {
    let (m, k) = (supply.len(), demand.len());
    let cells: Vec<(usize, usize)> = (0..m).flat_map(|r| (0..k).map(move |c| (r, c))).collect();
    let need = m + k - 1;
    let mut best = f64::INFINITY;
    let mut chosen = Vec::with_capacity(need);
    fn find(parent: &mut [usize], x: usize) -> usize {
        let mut x = x;
        while parent[x] != x {
            x = parent[x];
        }
        x
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse<C: Fn(usize, usize) -> f64>(
        start: usize,
        cells: &[(usize, usize)],
        need: usize,
        m: usize,
        chosen: &mut Vec<(usize, usize)>,
        supply: &[f64],
        demand: &[f64],
        cost: &C,
        best: &mut f64,
    ) {
        if chosen.len() == need {
            if let Some(value) = tree_solution(chosen, supply, demand, cost) {
                *best = best.min(value);
            }
            return;
        }
        if cells.len() - start < need - chosen.len() {
            return;
        }
        for idx in start..cells.len() {
            let (r, c) = cells[idx];
            let mut parent: Vec<usize> = (0..m + demand.len()).collect();
            for &(a, b) in chosen.iter() {
                let (x, y) = (find(&mut parent, a), find(&mut parent, m + b));
                parent[x] = y;
            }
            if find(&mut parent, r) == find(&mut parent, m + c) {
                continue;
            }
            chosen.push((r, c));
            recurse(idx + 1, cells, need, m, chosen, supply, demand, cost, best);
            chosen.pop();
        }
    }
    recurse(0, &cells, need, m, &mut chosen, supply, demand, &cost, &mut best);
    best
}

/// Solves the tree's unique flow by leaf peeling; `None` if infeasible.
fn tree_solution<C: Fn(usize, usize) -> f64>(
    tree: &[(usize, usize)],
    supply: &[f64],
    demand: &[f64],
    cost: &C,
) -> Option<f64> {
    let m = supply.len();
    let mut residual: Vec<f64> = supply.iter().chain(demand).copied().collect();
    let mut degree = vec![0usize; residual.len()];
    for &(r, c) in tree {
        degree[r] += 1;
        degree[m + c] += 1;
    }
    let mut alive = vec![true; tree.len()];
    let mut total = 0.0;
    for _ in 0..tree.len() {
        let (e, leaf) = tree.iter().enumerate().filter(|(e, _)| alive[*e]).find_map(|(e, &(r, c))| {
            if degree[r] == 1 {
                Some((e, r))
            } else if degree[m + c] == 1 {
                Some((e, m + c))
            } else {
                None
            }
        })?;
        let (r, c) = tree[e];
        let other = if leaf == r { m + c } else { r };
        let x = residual[leaf];
        if x < -1e-12 {
            return None;
        }
        residual[other] -= x;
        residual[leaf] = 0.0;
        degree[r] -= 1;
        degree[m + c] -= 1;
        alive[e] = false;
        total += x.max(0.0) * cost(r, c);
    }
    Some(total)
}

/// Minimum-cost perfect matching between two equal-size atom lists.
fn assignment_dp<C: Fn(usize, usize) -> f64>(a: &[usize], b: &[usize], cost: C) -> f64 {
    let q = a.len();
    let mut table = vec![f64::INFINITY; 1 << q];
    table[0] = 0.0;
    for mask in 0usize..(1 << q) {
        let row = mask.count_ones() as usize;
        if row >= q || !table[mask].is_finite() {
            continue;
        }
        for (col, &target) in b.iter().enumerate() {
            if mask & (1 << col) == 0 {
                let next = mask | (1 << col);
                let value = table[mask] + cost(a[row], target);
                if value < table[next] {
                    table[next] = value;
                }
            }
        }
    }
    table[(1 << q) - 1]
}

/// How coupling mass is distributed over catalogued paths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanPolicy {
    /// The single preferred path: least slack, finest steps, lexicographic.
    MinSlack,
    /// Equal shares over every minimal-slack path.
    Split,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanAtom {
    pub path: DiscretePath,
    pub mass: f64,
}

/// A probability measure on catalogued paths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicalPlan {
    pub n: usize,
    pub atoms: Vec<PlanAtom>,
}

impl DynamicalPlan {
    /// The `(e_0, e_1)` pushforward, one entry per atom.
    pub fn endpoint_coupling(&self) -> Vec<(usize, usize, f64)> {
        self.atoms
            .iter()
            .map(|a| (a.path.start(), a.path.end(), a.mass))
            .collect()
    }
}

pub fn build_plan(
    catalogue: &GeodesicCatalogue,
    coupling: &Coupling,
    policy: PlanPolicy,
) -> Result<DynamicalPlan> {
    let n = catalogue.len();
    let mut atoms = Vec::new();
    for &(i, j, w) in &coupling.entries {
        if w <= 0.0 {
            continue;
        }
        if i >= n || j >= n {
            return Err(Error::MissingGeodesic { from: i, to: j });
        }
        let paths = catalogue.min_slack_paths(i, j);
        if paths.is_empty() {
            return Err(Error::MissingGeodesic { from: i, to: j });
        }
        match policy {
            PlanPolicy::MinSlack => atoms.push(PlanAtom {
                path: paths[0].clone(),
                mass: w,
            }),
            PlanPolicy::Split => {
                let share = w / paths.len() as f64;
                atoms.extend(paths.iter().map(|p| PlanAtom {
                    path: p.clone(),
                    mass: share,
                }));
            }
        }
    }
    Ok(DynamicalPlan { n, atoms })
}

/// `α(t) = (e_t)♯Π` with nearest-parameter snapping.
pub fn interpolate(plan: &DynamicalPlan, t: f64) -> Result<ProbabilityVector> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::Domain(format!("interpolation time {t} is outside [0, 1]")));
    }
    let mut mass = vec![0.0; plan.n];
    for atom in &plan.atoms {
        mass[atom.path.eval(t)] += atom.mass;
    }
    Ok(ProbabilityVector::from_raw(mass))
}

/// Worst deviation of `t ↦ α(t)` from a constant-speed `W₂` geodesic over
/// all ordered pairs of the given sample times.
pub fn geodesic_check(space: &FiniteMetricMeasureSpace, plan: &DynamicalPlan, samples: &[f64]) -> Result<f64> {
    let total = w2_distance(space, &interpolate(plan, 0.0)?, &interpolate(plan, 1.0)?)?;
    let curve: Vec<ProbabilityVector> = samples
        .iter()
        .map(|&t| interpolate(plan, t))
        .collect::<Result<_>>()?;
    let mut worst: f64 = 0.0;
    for a in 0..samples.len() {
        for b in a + 1..samples.len() {
            let (s, t) = if samples[a] <= samples[b] { (a, b) } else { (b, a) };
            let measured = if samples[s] == samples[t] {
                0.0
            } else {
                w2_distance(space, &curve[s], &curve[t])?
            };
            worst = worst.max((measured - (samples[t] - samples[s]) * total).abs());
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::{enumerate_geodesics, gen_interval, Weight, DEFAULT_MAX_PATHS};
    use approx::assert_relative_eq;

    fn collinear() -> FiniteMetricMeasureSpace {
        FiniteMetricMeasureSpace::from_matrix(
            vec![0.0, 1.0, 3.0, 1.0, 0.0, 2.0, 3.0, 2.0, 0.0],
            vec![1.0; 3],
            true,
        )
        .unwrap()
    }

    #[test]
    fn dirac_pair() {
        let s = collinear();
        let (d, c) = w2(&s, &ProbabilityVector::dirac(3, 0).unwrap(), &ProbabilityVector::dirac(3, 2).unwrap()).unwrap();
        assert_eq!(d, 3.0);
        assert_eq!(c.entries, vec![(0, 2, 1.0)]);
    }

    #[test]
    fn identical_measures() {
        let s = collinear();
        let mu = ProbabilityVector::new(vec![0.2, 0.3, 0.5]).unwrap();
        let (d, c) = w2(&s, &mu, &mu).unwrap();
        assert_eq!(d, 0.0);
        assert!(c.entries.iter().all(|&(i, j, _)| i == j));
    }

    #[test]
    fn three_point_example_matches_oracle() {
        let s = collinear();
        let mu0 = ProbabilityVector::new(vec![0.5, 0.5, 0.0]).unwrap();
        let mu1 = ProbabilityVector::new(vec![0.0, 0.5, 0.5]).unwrap();
        let exact = w2_distance(&s, &mu0, &mu1).unwrap();
        let oracle = brute_force_w2(&s, &mu0, &mu1).unwrap();
        assert_relative_eq!(exact, oracle, epsilon = 1e-12);
        // Optimum moves 1/2 from 0 to 1 and 1/2 from 1 to 2: cost (1 + 4)/2.
        assert_relative_eq!(exact, 2.5f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn oracle_routes() {
        let s = gen_interval(0.0, 1.0, 0.2, &Weight::Flat).unwrap();
        let third = 1.0 / 3.0;
        let mu0 = ProbabilityVector::new(vec![third, third, third, 0.0, 0.0, 0.0]).unwrap();
        let mu1 = ProbabilityVector::new(vec![0.0, 0.0, 0.0, third, third, third]).unwrap();
        assert_relative_eq!(brute_force_w2(&s, &mu0, &mu1).unwrap(), 0.6, epsilon = 1e-12);
        let sixth = 1.0 / 6.0;
        let full = ProbabilityVector::new(vec![sixth; 6]).unwrap();
        let skew = ProbabilityVector::new(vec![0.5, 0.0, 0.0, 0.0, 0.25, 0.25]).unwrap();
        assert_relative_eq!(
            brute_force_w2(&s, &full, &skew).unwrap(),
            w2_distance(&s, &full, &skew).unwrap(),
            epsilon = 1e-12
        );
        let big = gen_interval(0.0, 1.0, 0.1, &Weight::Flat).unwrap();
        let spread = ProbabilityVector::from_weights(&[1.0; 11]).unwrap();
        assert!(matches!(brute_force_w2(&big, &spread, &spread), Err(Error::TooLarge(_))));
    }

    #[test]
    fn split_plan_over_collinear_paths() {
        let s = collinear();
        let cat = enumerate_geodesics(&s, 0.0, DEFAULT_MAX_PATHS).unwrap();
        let coupling = Coupling { entries: vec![(0, 2, 1.0)], cost: 9.0 };
        let plan = build_plan(&cat, &coupling, PlanPolicy::Split).unwrap();
        assert_eq!(plan.atoms.len(), 2);
        assert!(plan.atoms.iter().all(|a| a.mass == 0.5));
        let single = build_plan(&cat, &coupling, PlanPolicy::MinSlack).unwrap();
        assert_eq!(single.atoms.len(), 1);
        assert_eq!(single.atoms[0].path.vertices, vec![0, 1, 2]);
    }

    #[test]
    fn interpolation_endpoints_and_midpoint() {
        let s = gen_interval(0.0, 1.0, 0.1, &Weight::Flat).unwrap();
        let cat = enumerate_geodesics(&s, 0.0, DEFAULT_MAX_PATHS).unwrap();
        let mu0 = ProbabilityVector::dirac(11, 0).unwrap();
        let mu1 = ProbabilityVector::dirac(11, 10).unwrap();
        let (_, c) = w2(&s, &mu0, &mu1).unwrap();
        let plan = build_plan(&cat, &c, PlanPolicy::MinSlack).unwrap();
        assert_eq!(interpolate(&plan, 0.0).unwrap(), mu0);
        assert_eq!(interpolate(&plan, 1.0).unwrap(), mu1);
        assert_eq!(interpolate(&plan, 0.5).unwrap(), ProbabilityVector::dirac(11, 5).unwrap());
        let defect = geodesic_check(&s, &plan, &[0.0, 0.25, 0.5, 0.75, 1.0]).unwrap();
        assert!(defect <= s.mesh() + 1e-12, "defect {defect}");
        assert_eq!(geodesic_check(&s, &plan, &[0.3, 0.3]).unwrap(), 0.0);
    }

    #[test]
    fn suboptimal_plan_reports_defect() {
        // Two atoms at 0 and 1 swapped to 2 and 3 crosswise on a line.
        let s = gen_interval(0.0, 3.0, 1.0, &Weight::Flat).unwrap();
        let cat = enumerate_geodesics(&s, 0.0, DEFAULT_MAX_PATHS).unwrap();
        let swap = Coupling { entries: vec![(0, 3, 0.5), (1, 2, 0.5)], cost: 5.0 };
        let plan = build_plan(&cat, &swap, PlanPolicy::MinSlack).unwrap();
        let defect = geodesic_check(&s, &plan, &[0.0, 0.5, 1.0]).unwrap();
        assert!(defect > 0.0);
    }

    #[test]
    fn measure_validation() {
        assert!(ProbabilityVector::new(vec![0.5, 0.4]).is_err());
        assert!(ProbabilityVector::new(vec![1.5, -0.5]).is_err());
        assert!(ProbabilityVector::dirac(2, 2).is_err());
        let mu = ProbabilityVector::from_weights(&[1.0, 3.0]).unwrap();
        assert_eq!(mu.masses(), &[0.25, 0.75]);
    }
}
