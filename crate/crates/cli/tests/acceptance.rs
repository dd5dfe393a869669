//! End-to-end acceptance gates. Run with `cargo test --test acceptance`;
//! prints one PASS/FAIL line per criterion and exits nonzero on any failure.

use std::f64::consts::PI;
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use synthcurv::cdcheck::{
    bishop_gromov_residual, bonnet_myers_check, cd_check, cd_residual, lichnerowicz_residual, max_k, mcp_residual,
    CdVariant, PairGenerator, TrialConfig, Verdict,
};
use synthcurv::comparison::{comparison_s, domain_limit, ComparisonParams, ConvexityFunctionSpec, Dimension};
use synthcurv::smooth::{
    jacobian_ineq_residual_1d, monge_ampere_residual, monotone_map_1d, weighted_ricci, DensityPair1D, ScalarFieldSpec,
};
use synthcurv::space::{
    ball, enumerate_geodesics, gen_grid_euclidean, gen_interval, gen_model_space, FiniteMetricMeasureSpace, Weight,
    DEFAULT_MAX_PATHS,
};
use synthcurv::transport::{brute_force_w2, w2, PlanPolicy, ProbabilityVector};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn planar_space(pts: &[(f64, f64)]) -> FiniteMetricMeasureSpace {
    let n = pts.len();
    let dist = (0..n * n)
        .map(|k| {
            let (i, j) = (k / n, k % n);
            (pts[i].0 - pts[j].0).hypot(pts[i].1 - pts[j].1)
        })
        .collect();
    FiniteMetricMeasureSpace::from_matrix(dist, vec![1.0; n], true).unwrap()
}

/// Random planar instances on at most six points; even draws use generic
/// masses on supports small enough for vertex enumeration, odd draws use
/// masses in multiples of a shared `1/q` on arbitrary supports.
fn ot_instance(rng: &mut ChaCha8Rng, rational: bool) -> (FiniteMetricMeasureSpace, ProbabilityVector, ProbabilityVector) {
    loop {
        let n = rng.gen_range(2..=6);
        let pts: Vec<(f64, f64)> = (0..n).map(|_| (rng.gen(), rng.gen())).collect();
        let gap = (0..n)
            .flat_map(|i| (0..i).map(move |j| (i, j)))
            .map(|(i, j)| (pts[i].0 - pts[j].0).hypot(pts[i].1 - pts[j].1))
            .fold(f64::INFINITY, f64::min);
        if gap < 1e-3 {
            continue;
        }
        let q = rng.gen_range(2..=12);
        let weights = |rng: &mut ChaCha8Rng| -> Vec<f64> {
            if rational {
                let mut w = vec![0.0; n];
                for _ in 0..q {
                    w[rng.gen_range(0..n)] += 1.0;
                }
                w
            } else {
                (0..n).map(|_| if rng.gen_bool(0.7) { rng.gen_range(0.01..1.0) } else { 0.0 }).collect()
            }
        };
        let (wa, wb) = (weights(rng), weights(rng));
        let (m, k) = (
            wa.iter().filter(|v| **v > 0.0).count() as i32,
            wb.iter().filter(|v| **v > 0.0).count() as i32,
        );
        if m == 0 || k == 0 || (!rational && (m as f64).powi(k - 1) * (k as f64).powi(m - 1) > 2e6) {
            continue;
        }
        let space = planar_space(&pts);
        return (space, ProbabilityVector::from_weights(&wa).unwrap(), ProbabilityVector::from_weights(&wb).unwrap());
    }
}

fn ac01() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    let instances = 240;
    for i in 0..instances {
        let (space, mu0, mu1) = ot_instance(&mut rng, i % 2 == 1);
        let (dist, _) = w2(&space, &mu0, &mu1).map_err(|e| e.to_string())?;
        let brute = brute_force_w2(&space, &mu0, &mu1).map_err(|e| e.to_string())?;
        worst = worst.max((dist - brute).abs());
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        worst <= 1e-9 && secs < 10.0,
        format!("{instances} instances, max |w2 - brute| = {worst:.2e}, {secs:.2} s"),
    )
}

fn ac02() -> Outcome {
    // Radii stay below 1 so that |s| is O(1): the second difference carries a
    // rounding floor of about 4 ε |s| / h², 4e-8 |s| at this step.
    let h = 1e-4;
    let mut worst: f64 = 0.0;
    let mut points = 0;
    for &k in &[-3.0, -1.0, -0.25, 0.0, 0.25, 1.0, 3.0] {
        for &n in &[1.5, 2.0, 3.0, 5.0, 10.0, 50.0] {
            let p = ComparisonParams::finite(k, n).unwrap();
            let top = domain_limit(p).min(1.0) - 2.0 * h;
            for i in 0..25 {
                let r = 2.0 * h + (top - 2.0 * h) * i as f64 / 24.0;
                let s = |x: f64| comparison_s(p, x).unwrap();
                let second = (s(r + h) - 2.0 * s(r) + s(r - h)) / (h * h);
                worst = worst.max((second + k / (n - 1.0) * s(r)).abs());
                points += 1;
            }
        }
    }
    check(worst <= 1e-6 && points >= 1000, format!("{points} grid points, max residual {worst:.2e}"))
}

fn ac03() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for &k0 in &[0.5, 1.0, 2.0] {
        for dims in 1..=2usize {
            let field = ScalarFieldSpec::from_fn(vec![[-1.0, 1.0]; dims], 1e-2, |x| {
                0.5 * k0 * x.iter().map(|v| v * v).sum::<f64>()
            })
            .unwrap();
            let counts = field.counts().unwrap();
            for _ in 0..20 {
                let idx: Vec<usize> = counts.iter().map(|&c| rng.gen_range(2..c - 2)).collect();
                let v: Vec<f64> = if dims == 1 {
                    vec![if rng.gen_bool(0.5) { 1.0 } else { -1.0 }]
                } else {
                    let a: f64 = rng.gen_range(0.0..2.0 * PI);
                    vec![a.cos(), a.sin()]
                };
                let ric = weighted_ricci(&field, &idx, &v, Dimension::Infinite).map_err(|e| e.to_string())?;
                worst = worst.max((ric - k0).abs());
            }
        }
    }
    check(worst <= 1e-6, format!("K0 in {{0.5, 1, 2}}, n in {{1, 2}}, max |Ric - K0| = {worst:.2e}"))
}

/// Dirac mass at the pole against the first `M` points, `M` a multiple of 12
/// so that the times 1/2, 1/3 and 1/4 pull back to whole cells.
fn model_space_trials(space: &FiniteMetricMeasureSpace, h: f64) -> Vec<(Vec<f64>, Vec<f64>)> {
    [2.2, 2.5, 2.8]
        .iter()
        .map(|&r| {
            let m = ((r / h) as usize / 12) * 12;
            let a = ProbabilityVector::dirac(space.len(), 0).unwrap();
            let b = ProbabilityVector::restricted(space, &(0..m).collect::<Vec<_>>()).unwrap();
            (a.masses().to_vec(), b.masses().to_vec())
        })
        .collect()
}

fn ac04() -> Outcome {
    let mut deltas = Vec::new();
    let mut lines = Vec::new();
    let mut ok = true;
    for div in [50.0, 100.0, 200.0] {
        let start = Instant::now();
        let h = PI / div;
        let space = gen_model_space(3.0, h).unwrap();
        let cat = enumerate_geodesics(&space, 0.0, DEFAULT_MAX_PATHS).unwrap();
        let config = TrialConfig {
            t_samples: vec![0.25, 1.0 / 3.0, 0.5],
            generator: PairGenerator::UserSupplied {
                pairs: model_space_trials(&space, h),
            },
            tol: Some(1.5 * h),
            ..TrialConfig::default()
        };
        let result = max_k(&space, &cat, Dimension::Finite(3.0), (0.0, 4.0), &config, CdVariant::Standard)
            .map_err(|e| e.to_string())?;
        let delta = (result.k_max - 2.0).abs();
        let secs = start.elapsed().as_secs_f64();
        ok &= delta <= 8.0 * h && result.verdict == Verdict::Holds && secs < 300.0;
        lines.push(format!("h=pi/{div}: K={:.4} delta/h={:.2} ({secs:.1} s)", result.k_max, delta / h));
        deltas.push(delta);
    }
    ok &= deltas.windows(2).all(|w| w[1] < w[0]);
    check(ok, lines.join("; "))
}

/// Uniform blocks translated by a whole number of cells divisible by 4, away
/// from the half-weight end cells.
fn translation_trials(space: &FiniteMetricMeasureSpace) -> Vec<(Vec<f64>, Vec<f64>)> {
    let n = space.len();
    let width = n / 8;
    let shift = ((n * 5) / 8) / 4 * 4;
    [1, n / 8]
        .iter()
        .map(|&start| {
            let a = ProbabilityVector::restricted(space, &(start..start + width).collect::<Vec<_>>()).unwrap();
            let b = ProbabilityVector::restricted(space, &(start + shift..start + shift + width).collect::<Vec<_>>())
                .unwrap();
            (a.masses().to_vec(), b.masses().to_vec())
        })
        .collect()
}

fn ac05() -> Outcome {
    let mut ok = true;
    let mut lines = Vec::new();
    for div in [25.0, 50.0, 100.0] {
        let h = 1.0 / div;
        let cases = [
            ("flat", Weight::Flat, 0.0, 4.0),
            ("gaussian", Weight::Gaussian { k0: 1.0, center: vec![0.5] }, 1.0, 8.0),
        ];
        for (name, weight, k0, bound) in cases {
            let space = gen_interval(0.0, 1.0, h, &weight).unwrap();
            let cat = enumerate_geodesics(&space, 0.0, DEFAULT_MAX_PATHS).unwrap();
            let config = TrialConfig {
                t_samples: vec![0.25, 0.5],
                generator: PairGenerator::UserSupplied {
                    pairs: translation_trials(&space),
                },
                tol: Some(0.1 * h),
                ..TrialConfig::default()
            };
            let result = max_k(&space, &cat, Dimension::Infinite, (k0 - 2.0, k0 + 2.0), &config, CdVariant::Standard)
                .map_err(|e| e.to_string())?;
            let dev = (result.k_max - k0).abs();
            ok &= dev <= bound * h;
            lines.push(format!("{name} h=1/{div}: K={:.4} ({:.2}h)", result.k_max, dev / h));
        }
    }
    check(ok, lines.join("; "))
}

fn ac06() -> Outcome {
    let mut ok = true;
    let mut lines = Vec::new();
    // Lattice balls: every cell centred inside B(r) lies in B(r + δ) and covers
    // B(r − δ), δ the half cell diagonal, giving a first-order excess bound.
    for &h in &[0.05f64, 0.025] {
        for dims in 1..=2usize {
            let n = (1.0 / h).round() as usize + 1;
            let space = if dims == 1 {
                gen_interval(0.0, 1.0, h, &Weight::Flat).unwrap()
            } else {
                gen_grid_euclidean(&[n, n], h, &Weight::Flat).unwrap()
            };
            let centre = if dims == 1 { n / 2 } else { (n / 2) * n + n / 2 };
            let nd = dims as f64;
            let params = ComparisonParams::finite(0.0, nd).unwrap();
            let mut worst_c: f64 = f64::NEG_INFINITY;
            for &r in &[0.15, 0.2, 0.25] {
                for &big in &[0.3, 0.4, 0.45] {
                    let (r, big) = (r + 0.5 * h, big + 0.5 * h);
                    let rec = bishop_gromov_residual(&space, centre, r, big, params).map_err(|e| e.to_string())?;
                    let c = nd.powf(1.5) * (big / r).powf(nd) * (1.0 / r + 1.0 / big);
                    let excess = rec.lhs - (big / r).powf(nd);
                    ok &= excess <= c * h;
                    worst_c = worst_c.max(excess / (c * h));
                }
            }
            lines.push(format!("flat n={dims} h={h}: max excess/(C h) = {worst_c:.2}"));
        }
    }
    for div in [50.0, 100.0, 200.0] {
        let h = PI / div;
        let space = gen_model_space(3.0, h).unwrap();
        let params = ComparisonParams::finite(2.0, 3.0).unwrap();
        let snap = |v: f64| ((v / h).floor() + 0.5) * h;
        let mut worst = f64::INFINITY;
        let mut triples = 0;
        for frac in [0.0, 0.06, 0.2, 0.5, 0.8] {
            let x = ((frac * (space.len() - 1) as f64).round()) as usize;
            for &r in &[0.6, 1.0, 1.4] {
                for &big in &[1.5, 2.0, 2.5, 3.0] {
                    let rec = bishop_gromov_residual(&space, x, snap(r), snap(big), params).map_err(|e| e.to_string())?;
                    worst = worst.min(rec.residual);
                    triples += 1;
                }
            }
        }
        ok &= worst >= -8.0 * h && triples >= 50;
        lines.push(format!("model h=pi/{div}: {triples} triples, worst {:.2}h", worst / h));
    }
    check(ok, lines.join("; "))
}

fn ac07() -> Outcome {
    let mut ok = true;
    let mut lines = Vec::new();
    for &n in &[2.0, 3.0, 4.0, 6.0] {
        for h in [PI / 50.0, PI / 100.0, 0.01] {
            let space = gen_model_space(n, h).unwrap();
            let params = ComparisonParams::finite(n - 1.0, n).unwrap();
            let report = bonnet_myers_check(&space, params, h, h).map_err(|e| e.to_string())?;
            let antipodes = report.details["max_antipodes"].as_u64().unwrap_or(u64::MAX);
            ok &= report.worst_residual == 0.0 && antipodes <= 1 && report.verdict == Verdict::Holds;
            if report.worst_residual != 0.0 || antipodes > 1 {
                lines.push(format!("N={n} h={h:.4}: residual {:e}, antipodes {antipodes}", report.worst_residual));
            }
        }
    }
    if lines.is_empty() {
        lines.push("N in {2, 3, 4, 6}, 3 meshes each: residual 0, at most 1 antipode".into());
    }
    check(ok, lines.join("; "))
}

/// Second eigenvalue of `−(sin u′)′ = λ sin u` on `[0, π]` by linear finite
/// elements and Sturm counts of the tridiagonal pencil.
fn sturm_liouville_lambda1(cells: usize) -> f64 {
    let h = PI / cells as f64;
    let n = cells + 1;
    let gauss = [(-0.774_596_669_241_483_4, 5.0 / 9.0), (0.0, 8.0 / 9.0), (0.774_596_669_241_483_4, 5.0 / 9.0)];
    let mut a_diag = vec![0.0; n];
    let mut a_off = vec![0.0; n];
    let mut b_diag = vec![0.0; n];
    let mut b_off = vec![0.0; n];
    for e in 0..cells {
        let (x0, x1) = (e as f64 * h, (e + 1) as f64 * h);
        let stiff = (x0.cos() - x1.cos()) / (h * h);
        a_diag[e] += stiff;
        a_diag[e + 1] += stiff;
        a_off[e + 1] -= stiff;
        let (mut m00, mut m01, mut m11) = (0.0, 0.0, 0.0);
        for &(g, w) in &gauss {
            let s = 0.5 * (1.0 + g);
            let weight = w * 0.5 * h * (x0 + s * h).sin();
            m00 += weight * (1.0 - s) * (1.0 - s);
            m01 += weight * (1.0 - s) * s;
            m11 += weight * s * s;
        }
        b_diag[e] += m00;
        b_diag[e + 1] += m11;
        b_off[e + 1] += m01;
    }
    let below = |lambda: f64| -> usize {
        let mut count = 0;
        let mut d = 0.0;
        for i in 0..n {
            let diag = a_diag[i] - lambda * b_diag[i];
            d = if i == 0 {
                diag
            } else {
                let off = a_off[i] - lambda * b_off[i];
                diag - off * off / if d == 0.0 { 1e-300 } else { d }
            };
            if d < 0.0 {
                count += 1;
            }
        }
        count
    };
    let (mut lo, mut hi) = (0.5, 6.0);
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if below(mid) >= 2 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

fn ac08() -> Outcome {
    let h = PI / 400.0;
    let space = gen_model_space(2.0, h).unwrap();
    let params = ComparisonParams::finite(1.0, 2.0).unwrap();
    let f: Vec<f64> = space.coords().unwrap().iter().map(|c| c[0].cos()).collect();
    let rec = lichnerowicz_residual(&space, &f, params, None).map_err(|e| e.to_string())?;
    let ratio = rec.residual.abs() / rec.lhs;
    let lambda = sturm_liouville_lambda1(400);
    check(
        ratio <= 0.02 && (lambda - 2.0).abs() <= 1e-3,
        format!("|residual|/sum f^2 m = {ratio:.4}, Sturm-Liouville lambda1 = {lambda:.6}"),
    )
}

fn ac09() -> Outcome {
    let mut ok = true;
    let mut lines = Vec::new();
    for h in [0.02, 0.01] {
        let space = gen_interval(0.0, 1.0, h, &Weight::Flat).unwrap();
        let cat = enumerate_geodesics(&space, 0.0, DEFAULT_MAX_PATHS).unwrap();
        let params = ComparisonParams::finite(0.0, 1.0).unwrap();
        let mut worst = f64::INFINITY;
        for x in 0..space.len() {
            for t in [0.25, 0.5, 0.75] {
                worst = worst.min(mcp_residual(&space, &cat, x, params, t).map_err(|e| e.to_string())?.residual);
            }
        }
        ok &= worst >= -4.0 * h;
        lines.push(format!("MCP(0,1) h={h}: worst {:.3}h", worst / h));
    }
    for div in [50.0, 100.0] {
        let h = PI / div;
        let space = gen_model_space(3.0, h).unwrap();
        let cat = enumerate_geodesics(&space, 0.0, DEFAULT_MAX_PATHS).unwrap();
        let params = ComparisonParams::finite(2.0, 3.0).unwrap();
        let mut worst = f64::INFINITY;
        for x in (0..space.len()).step_by(5) {
            for t in [0.25, 0.5, 0.75] {
                worst = worst.min(mcp_residual(&space, &cat, x, params, t).map_err(|e| e.to_string())?.residual);
            }
        }
        ok &= worst >= -8.0 * h;
        lines.push(format!("MCP(2,3) h=pi/{div}: worst {:.3}h", worst / h));
    }
    check(ok, lines.join("; "))
}

fn ac10() -> Outcome {
    let h = PI / 40.0;
    let space = gen_model_space(3.0, h).unwrap();
    let cat = enumerate_geodesics(&space, 0.0, DEFAULT_MAX_PATHS).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let u = ConvexityFunctionSpec::renyi(3.0);
    let (mut records, mut bad) = (0usize, 0usize);
    while records < 600 {
        let c0 = rng.gen_range(0..space.len());
        let c1 = rng.gen_range(0..space.len());
        let mu0 = ProbabilityVector::restricted(&space, &ball(&space, c0, rng.gen_range(0.2..0.6))).unwrap();
        let mu1 = ProbabilityVector::restricted(&space, &ball(&space, c1, rng.gen_range(0.2..0.6))).unwrap();
        let t = rng.gen_range(0.1..0.9);
        let k1 = rng.gen_range(-2.0..2.0);
        let k2 = k1 + rng.gen_range(0.0..1.5);
        let eval = |k: f64| {
            cd_residual(&space, &cat, &mu0, &mu1, ComparisonParams::finite(k, 3.0).unwrap(), t, &u, PlanPolicy::MinSlack)
        };
        if let (Ok(a), Ok(b)) = (eval(k1), eval(k2)) {
            records += 1;
            if a.rhs < b.rhs - 1e-12 || a.lhs != b.lhs {
                bad += 1;
            }
        }
    }
    let ks = [-1.0, 0.0, 1.0, 2.0, 3.0];
    let finite = [2.0, 3.0, 6.0, 10.0].map(Dimension::Finite);
    let cases = [
        (ConvexityFunctionSpec::relative_entropy(), [finite[0], finite[1], finite[3], Dimension::Infinite]),
        (ConvexityFunctionSpec::renyi(10.0), finite),
    ];
    let (mut implications, mut verdict_bad) = (0usize, 0usize);
    for (functional, ns) in cases {
        for seed in 0..4u64 {
            let config = TrialConfig {
                trials: 4,
                seed,
                tol: Some(h),
                functional: Some(functional.clone()),
                ..TrialConfig::default()
            };
            let mut verdicts = Vec::new();
            for &k in &ks {
                for &n in &ns {
                    let params = ComparisonParams::new(k, n).unwrap();
                    let report = cd_check(&space, &cat, params, &config, CdVariant::Standard).map_err(|e| e.to_string())?;
                    records += report.records.len();
                    verdicts.push((k, n, report.verdict == Verdict::Holds));
                }
            }
            for a in &verdicts {
                for b in &verdicts {
                    if a.2 && b.0 <= a.0 && a.1.le(b.1) {
                        implications += 1;
                        verdict_bad += usize::from(!b.2);
                    }
                }
            }
        }
    }
    check(
        bad == 0 && verdict_bad == 0 && records >= 500,
        format!(
            "{records} records; rhs-in-K counterexamples {bad}; verdict implications {implications}, counterexamples {verdict_bad}"
        ),
    )
}

fn random_density(rng: &mut ChaCha8Rng, grid: &[f64]) -> Vec<f64> {
    let bumps: Vec<(f64, f64, f64)> = (0..rng.gen_range(1..4))
        .map(|_| (rng.gen_range(0.1..0.9), rng.gen_range(0.05..0.3), rng.gen_range(0.2..2.0)))
        .collect();
    let floor = rng.gen_range(0.05..0.5);
    grid.iter()
        .map(|&x| floor + bumps.iter().map(|(c, w, a)| a * (-((x - c) / w).powi(2) / 2.0).exp()).sum::<f64>())
        .collect()
}

fn ac11() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let cells = 200;
    let step = 1.0 / cells as f64;
    let grid: Vec<f64> = (0..=cells).map(|i| i as f64 * step).collect();
    let mut worst = f64::INFINITY;
    for _ in 0..100 {
        let pair = DensityPair1D::normalized(grid.clone(), random_density(&mut rng, &grid), random_density(&mut rng, &grid))
            .map_err(|e| e.to_string())?;
        let map = monotone_map_1d(&pair).map_err(|e| e.to_string())?;
        for &n in &[1.0, 2.0, 5.0] {
            let params = ComparisonParams::finite(0.0, n).unwrap();
            for t in [0.25, 0.5, 0.75] {
                for i in 0..grid.len() {
                    let r = jacobian_ineq_residual_1d(&map, &Weight::Flat, params, t, i).map_err(|e| e.to_string())?;
                    worst = worst.min(r);
                }
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(111);
    let (shape0, shape1): (Vec<f64>, Vec<f64>) = ((0..6).map(|_| rng.gen()).collect(), (0..6).map(|_| rng.gen()).collect());
    let smooth = |shape: &[f64], x: f64| {
        0.3 + shape[0] * (-((x - 0.2 - 0.6 * shape[1]) / (0.1 + 0.2 * shape[2])).powi(2)).exp()
            + shape[3] * (-((x - 0.2 - 0.6 * shape[4]) / (0.1 + 0.2 * shape[5])).powi(2)).exp()
    };
    let levels = [50usize, 100, 200, 400, 800];
    let mut errors = Vec::new();
    for &cells in &levels {
        let g: Vec<f64> = (0..=cells).map(|i| i as f64 / cells as f64).collect();
        let pair = DensityPair1D::normalized(
            g.clone(),
            g.iter().map(|&x| smooth(&shape0, x)).collect(),
            g.iter().map(|&x| smooth(&shape1, x)).collect(),
        )
        .map_err(|e| e.to_string())?;
        let map = monotone_map_1d(&pair).map_err(|e| e.to_string())?;
        errors.push(monge_ampere_residual(&pair, &map));
    }
    // Least-squares slope of log error against log step; pairwise ratios
    // fluctuate with the phase of the interpolation error within a cell.
    let xs: Vec<f64> = levels.iter().map(|&c| (1.0 / c as f64).ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let (mx, my) = (xs.iter().sum::<f64>() / xs.len() as f64, ys.iter().sum::<f64>() / ys.len() as f64);
    let order = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
        / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
    check(
        worst >= -4.0 * step && order >= 0.9,
        format!(
            "100 pairs, worst Jacobian residual {:.3} step; Monge-Ampere errors {:?}, fitted order {order:.2}",
            worst / step,
            errors.iter().map(|e| format!("{e:.2e}")).collect::<Vec<_>>(),
        ),
    )
}

fn ac12() -> Outcome {
    let space = gen_model_space(3.0, PI / 40.0).unwrap();
    let cat = enumerate_geodesics(&space, 0.0, DEFAULT_MAX_PATHS).unwrap();
    let config = TrialConfig::default();
    let params = ComparisonParams::finite(2.0, 3.0).unwrap();
    let runs: Vec<String> = (0..3)
        .map(|_| cd_check(&space, &cat, params, &config, CdVariant::Standard).map(|r| r.to_json()))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let library_same = runs.windows(2).all(|w| w[0] == w[1]);

    let dir = std::env::temp_dir().join(format!("synthcurv-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
    let bin = env!("CARGO_BIN_EXE_synthcurv");
    let space_path = dir.join("space.json");
    let status = Command::new(bin)
        .args(["gen", "interval", "--h", "0.02", "-o"])
        .arg(&space_path)
        .output()
        .map_err(|e| e.to_string())?;
    if !status.status.success() {
        return Err("gen failed".into());
    }
    let mut reports = Vec::new();
    let report = dir.join("report.json");
    for _ in 0..2 {
        Command::new(bin)
            .arg("check-cd")
            .arg(&space_path)
            .args(["--K", "0", "--N", "inf", "--report"])
            .arg(&report)
            .output()
            .map_err(|e| e.to_string())?;
        reports.push(std::fs::read(&report).map_err(|e| e.to_string())?);
    }
    let _ = std::fs::remove_dir_all(&dir);
    let cli_same = reports[0] == reports[1] && !reports[0].is_empty();
    check(
        library_same && cli_same,
        format!("library reports identical: {library_same}; CLI reports byte-identical: {cli_same}"),
    )
}

type Criterion = (&'static str, &'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 12] = [
        ("AC-01", "OT oracle equivalence", ac01),
        ("AC-02", "comparison ODE", ac02),
        ("AC-03", "Gaussian weight recovery", ac03),
        ("AC-04", "model-space max-K", ac04),
        ("AC-05", "flat and Gaussian interval max-K", ac05),
        ("AC-06", "Bishop-Gromov", ac06),
        ("AC-07", "Bonnet-Myers", ac07),
        ("AC-08", "Lichnerowicz near-equality", ac08),
        ("AC-09", "measure contraction", ac09),
        ("AC-10", "CD monotonicity", ac10),
        ("AC-11", "Jacobian inequality and Monge-Ampere", ac11),
        ("AC-12", "determinism", ac12),
    ];
    let mut failures = 0;
    for (id, name, run) in criteria {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("[PASS] {id} {name} ({secs:.1} s): {detail}"),
            Err(detail) => {
                failures += 1;
                println!("[FAIL] {id} {name} ({secs:.1} s): {detail}");
            }
        }
    }
    println!("{} of {} acceptance criteria passed", criteria.len() - failures, criteria.len());
    if failures > 0 {
        std::process::exit(1);
    }
}
