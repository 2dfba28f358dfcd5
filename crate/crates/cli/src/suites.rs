//! The five experiment suites.

use std::time::Instant;

use ou_riesz::experiments::{
    bmo_divergence_s_star, classify_growth, duality_transfer_table, lower_bound_functional_r1, run_ladder,
    s_star_h1_functional, verify_pointwise_bounds, Class, CounterexampleGeometry, CounterexampleRule, Direction,
    GrowthSeries, LadderSettings, COMPUTED_CELLS,
};
use ou_riesz::hermite::random_expansion;
use ou_riesz::hormander::{hormander_bmo, hormander_h1, HormanderSampling};
use ou_riesz::kernel::{apply_via_kernel, grad_kernel, kernel, kernel_s_star_dual, KernelKind, SampledFunction, Variable};
use ou_riesz::quadrature::{rho_integrate, QuadratureSpec};
use ou_riesz::spaces::AdmissibleRegion;
use ou_riesz::{apply_riesz, duality_residual, HermiteExpansion, MultiIndex, Point, RieszFamily, RieszKind, SpectralMultiplier};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::RunConfig;
use crate::report::{Case, CsvRow, Report};

fn spec(cfg: &RunConfig) -> QuadratureSpec {
    QuadratureSpec::with_tolerances(cfg.abs_tol, cfg.rel_tol)
}

fn max_abs_coeff(f: &HermiteExpansion) -> f64 {
    f.terms().map(|(_, c)| c.abs()).fold(0.0, f64::max)
}

/// `sum_alpha c_alpha H_{alpha + shift e_i}` scaled per term, built
/// coefficient by coefficient.
fn relabel(f: &HermiteExpansion, i: usize, down: bool) -> HermiteExpansion {
    let terms = f.terms().filter_map(|(a, c)| {
        let mut e = a.entries().to_vec();
        let n = e[i - 1];
        if down {
            if n == 0 {
                return None;
            }
            e[i - 1] = n - 1;
            Some((MultiIndex::new(e), 2.0 * n as f64 * c))
        } else {
            e[i - 1] = n + 1;
            Some((MultiIndex::new(e), c))
        }
    });
    HermiteExpansion::from_terms(f.dim(), terms.collect::<Vec<_>>()).expect("dimensions agree")
}

fn unit(f: HermiteExpansion) -> HermiteExpansion {
    let n = f.norm_gamma();
    f.scale(1.0 / n)
}

/// Exact identities in coefficient space and adjointness of every pairing.
pub fn spectral_check(cfg: &RunConfig) -> Report {
    let mut rep = Report::new("spectral-check");
    let multiplier = if cfg.inject_m0 {
        SpectralMultiplier::new(|j| if j == 0 { 1.0 } else { (j as f64).powf(-0.5) })
    } else {
        SpectralMultiplier::inverse_sqrt()
    };
    for &d in &cfg.dims {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ d as u64);
        let (mut e_del, mut e_star, mut e_lap, mut e_m) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
        let mut failure = None;
        for _ in 0..50 {
            let f = random_expansion(&mut rng, d, 10, true);
            let run = || -> ou_riesz::Result<(f64, f64, f64, f64)> {
                let mut a = 0.0f64;
                let mut b = 0.0f64;
                let mut m = 0.0f64;
                let mut lap = HermiteExpansion::zero(d);
                for i in 1..=d {
                    a = a.max(max_abs_coeff(&f.apply_partial(i)?.sub(&relabel(&f, i, true))?));
                    b = b.max(max_abs_coeff(&f.apply_partial_star(i)?.sub(&relabel(&f, i, false))?));
                    lap = lap.add(&f.apply_partial(i)?.apply_partial_star(i)?)?;
                    let mi = apply_riesz(RieszKind::new(RieszFamily::M, i), &f)?;
                    let half = apply_riesz(RieszKind::new(RieszFamily::R, i), &f)?
                        .add(&apply_riesz(RieszKind::new(RieszFamily::SStar, i), &f)?)?
                        .scale(0.5);
                    let scale = max_abs_coeff(&mi).max(1.0);
                    m = m.max(max_abs_coeff(&mi.sub(&half)?) / scale);
                }
                let l = max_abs_coeff(&lap.sub(&f.apply_ou().scale(2.0))?);
                Ok((a, b, l, m))
            };
            match run() {
                Ok((a, b, l, m)) => {
                    e_del = e_del.max(a);
                    e_star = e_star.max(b);
                    e_lap = e_lap.max(l);
                    e_m = e_m.max(m);
                }
                Err(e) => failure = Some(e),
            }
        }
        if let Some(e) = failure {
            rep.push(Case::failed(format!("identities d={d}"), e));
            continue;
        }
        rep.push(Case::at_most(format!("d_i H_n = 2n H_(n-1), d={d}"), e_del, 0.0));
        rep.push(Case::at_most(format!("d_i* H_n = H_(n+1), d={d}"), e_star, 0.0));
        rep.push(Case::at_most(format!("sum d_i* d_i = 2L, d={d}"), e_lap, 0.0));
        rep.push(Case::at_most(format!("M_i = (R_i + S_i*)/2, d={d}"), e_m, 8.0 * f64::EPSILON));
        match multiplier.apply(&HermiteExpansion::monomial(MultiIndex::zero(d), 1.0)) {
            Ok(h) => rep.push(Case::at_most(format!("M(L) H_0 = 0, d={d}"), max_abs_coeff(&h), 0.0)),
            Err(e) => rep.push(Case::failed(format!("M(L) H_0 = 0, d={d}"), e)),
        }
        let mut worst = [0.0f64; 4];
        let mut failure = None;
        for _ in 0..cfg.pairs {
            let f = unit(random_expansion(&mut rng, d, 10, false));
            let g = unit(random_expansion(&mut rng, d, 10, false));
            let i = rng.gen_range(1..=d);
            for (k, fam) in [RieszFamily::R, RieszFamily::S, RieszFamily::M].into_iter().enumerate() {
                match duality_residual(RieszKind::new(fam, i), &f, &g) {
                    Ok(r) => worst[k] = worst[k].max(r),
                    Err(e) => failure = Some(e),
                }
            }
            let lhs = multiplier.apply(&f).and_then(|mf| mf.inner_product_gamma(&g));
            let rhs = multiplier.apply(&g).and_then(|mg| f.inner_product_gamma(&mg));
            match (lhs, rhs) {
                (Ok(a), Ok(b)) => worst[3] = worst[3].max((a - b).abs()),
                (Err(e), _) | (_, Err(e)) => failure = Some(e),
            }
        }
        if let Some(e) = failure {
            rep.push(Case::failed(format!("adjointness d={d}"), e));
            continue;
        }
        for (k, name) in ["R/R*", "S/S*", "M/M*", "M(L)/M(L)"].iter().enumerate() {
            rep.push(Case::at_most(format!("adjoint {name}, d={d}"), worst[k], 1e-10));
        }
    }
    rep
}

/// Deterministic evaluation points where `|H_alpha|` is not small.
fn evaluation_points(h: &HermiteExpansion, d: usize, count: usize) -> Vec<Vec<f64>> {
    let base = [0.37, -0.81, 1.23, -1.52, 0.64, 1.91, -0.22, 0.95, -1.17, 0.12, 1.58, -0.49];
    let mut cands: Vec<Vec<f64>> = (0..base.len())
        .map(|k| (0..d).map(|j| base[(k + 5 * j) % base.len()]).collect())
        .collect();
    cands.sort_by(|a, b| h.eval_slice(b).abs().total_cmp(&h.eval_slice(a).abs()));
    cands.truncate(count);
    cands
}

fn random_pair(rng: &mut ChaCha8Rng, d: usize) -> (Point, Point) {
    loop {
        let x: Vec<f64> = (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let y: Vec<f64> = (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let dist: f64 = x.iter().zip(&y).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        if dist > 0.3 {
            return (Point(x), Point(y));
        }
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

/// Kernel quadrature against spectral values, the two `S*` forms, gradients
/// against finite differences and closed-form `rho` integrals.
pub fn kernel_check(cfg: &RunConfig) -> Report {
    let mut rep = Report::new("kernel-check");
    let s = spec(cfg);
    // finer tolerances get finer grids
    let fine = cfg.rel_tol < 1e-10;
    for &d in &cfg.dims {
        let indices: Vec<Vec<u32>> = match d {
            1 => (1..=4).map(|n| vec![n]).collect(),
            2 => vec![vec![0, 1], vec![1, 1], vec![2, 1], vec![2, 2]],
            _ => vec![vec![1; d.min(4)].into_iter().chain(std::iter::repeat(0).take(d.saturating_sub(4))).collect()],
        };
        let res = match (d, fine) {
            (1, false) => (16, 10),
            (1, true) => (32, 12),
            (_, false) => (4, 6),
            (_, true) => (8, 8),
        };
        let mut worst = 0.0f64;
        let mut failure = None;
        for alpha in indices {
            let n: u32 = alpha.iter().sum();
            let h = HermiteExpansion::monomial(alpha.clone(), 1.0);
            let g = h.clone();
            let f = match SampledFunction::new(vec![-8.0; d], vec![8.0; d], move |y| g.eval_slice(y)) {
                Ok(f) => f.with_resolution(res.0, res.1),
                Err(e) => {
                    failure = Some(e);
                    break;
                }
            };
            for x in evaluation_points(&h, d, 5) {
                let expect = h.eval_slice(&x) / (n as f64).sqrt();
                match apply_via_kernel(KernelKind::M, 0, &f, &Point(x), &s) {
                    Ok(v) => worst = worst.max(rel(v, expect)),
                    Err(e) => failure = Some(e),
                }
            }
        }
        match failure {
            Some(e) => rep.push(Case::failed(format!("M(L) kernel vs spectral, d={d}"), e)),
            None => rep.push(Case::at_most(format!("M(L) kernel vs spectral, d={d}"), worst, 1e-3)),
        }

        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(17 * d as u64));
        let mut dual = 0.0f64;
        let mut failure = None;
        for _ in 0..20 {
            let (x, y) = random_pair(&mut rng, d);
            let i = rng.gen_range(1..=d);
            match kernel_s_star_dual(i, &x, &y, &s) {
                Ok((a, b)) => dual = dual.max(rel(a.value, b.value)),
                Err(e) => failure = Some(e),
            }
        }
        match failure {
            Some(e) => rep.push(Case::failed(format!("S* dual forms, d={d}"), e)),
            None => rep.push(Case::at_most(format!("S* dual forms, d={d}"), dual, 1e-8)),
        }

        let fd_spec = QuadratureSpec::with_tolerances(1e-15, 1e-11_f64.max(cfg.rel_tol * 1e-1).min(1e-11));
        for kind in [KernelKind::R, KernelKind::SStar] {
            let mut worst = 0.0f64;
            let mut failure = None;
            for _ in 0..10 {
                let (x, y) = random_pair(&mut rng, d);
                let i = rng.gen_range(1..=d);
                let which = if rng.gen_bool(0.5) { Variable::X } else { Variable::Y };
                let run = || -> ou_riesz::Result<f64> {
                    let g = grad_kernel(kind, i, which, &x, &y, &fd_spec)?;
                    let mut err = 0.0f64;
                    let scale = g.iter().map(|v| v.value.abs()).fold(0.0, f64::max);
                    for j in 0..d {
                        let h = 1e-4;
                        let shift = |t: f64| {
                            let (mut a, mut b) = (x.coords().to_vec(), y.coords().to_vec());
                            match which {
                                Variable::X => a[j] += t,
                                Variable::Y => b[j] += t,
                            }
                            kernel(kind, i, &Point(a), &Point(b), &fd_spec).map(|v| v.value)
                        };
                        let fd = (shift(h)? - shift(-h)?) / (2.0 * h);
                        err = err.max((fd - g[j].value).abs() / scale);
                    }
                    Ok(err)
                };
                match run() {
                    Ok(e) => worst = worst.max(e),
                    Err(e) => failure = Some(e),
                }
            }
            let name = format!("grad {kind} vs finite differences, d={d}");
            match failure {
                Some(e) => rep.push(Case::failed(name, e)),
                None => rep.push(Case::at_most(name, worst, 1e-4)),
            }
        }
    }
    let closed = [
        ("rho: int r d rho = sqrt(pi)", std::f64::consts::PI.sqrt(), 1),
        ("rho: int r^3 d rho = sqrt(pi/3)", (std::f64::consts::PI / 3.0).sqrt(), 3),
    ];
    for (name, exact, p) in closed {
        match rho_integrate(|q| q.r.powi(p), &s) {
            Ok(v) => rep.push(Case::at_most(name, rel(v.value, exact), 1e-10)),
            Err(e) => rep.push(Case::failed(name, e)),
        }
    }
    rep
}

fn sampling(cfg: &RunConfig) -> HormanderSampling {
    let mut s = HormanderSampling::default();
    if cfg.order > 0 {
        s.radial_order = cfg.order;
        s.angular_order = cfg.order;
    }
    s
}

fn rule(cfg: &RunConfig) -> CounterexampleRule {
    let mut r = CounterexampleRule::default();
    if cfg.order > 0 {
        r.order = cfg.order;
    }
    r
}

fn maximal_ball(xi: f64, d: usize) -> AdmissibleRegion {
    let mut c = vec![0.0; d];
    c[0] = xi;
    AdmissibleRegion::maximal_ball(Point(c))
}

/// Hörmander functionals over maximal balls, with node doubling.
pub fn hormander(cfg: &RunConfig) -> Report {
    let mut rep = Report::new("hormander");
    let s = spec(cfg);
    let samp = sampling(cfg);
    for &d in &cfg.dims {
        type Functional = fn(KernelKind, usize, &AdmissibleRegion, &HormanderSampling, &QuadratureSpec) -> ou_riesz::Result<f64>;
        let positives: [(&str, KernelKind, RieszFamily, Direction, Functional); 2] = [
            ("h1 S*", KernelKind::SStar, RieszFamily::SStar, Direction::H1ToL1, hormander_h1),
            ("bmo R", KernelKind::R, RieszFamily::R, Direction::LinfToBmo, hormander_bmo),
        ];
        for (name, kind, fam, dir, func) in positives {
            let mut values = Vec::new();
            for &xi in &cfg.xi {
                let ball = maximal_ball(xi, d);
                match (func(kind, 1, &ball, &samp, &s), func(kind, 1, &ball, &samp.doubled(), &s)) {
                    (Ok(a), Ok(b)) => {
                        rep.push(Case::at_most(format!("{name} doubling, d={d} xi={xi}"), rel(a, b), 0.1));
                        rep.rows.push(CsvRow::point(fam.name(), d, dir, xi, b));
                        values.push(b);
                    }
                    (Err(e), _) | (_, Err(e)) => {
                        rep.push(Case::failed(format!("{name}, d={d} xi={xi}"), e));
                        rep.inconclusive = true;
                    }
                }
            }
            if values.len() == cfg.xi.len() && !values.is_empty() {
                let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
                rep.push(Case::at_most(format!("{name} common bound max/min, d={d}"), max / min, 2.0));
                if let Ok(series) = GrowthSeries::new(fam, d, dir, cfg.xi.clone(), values) {
                    rep.verdicts.push(classify_growth(&series, series.default_threshold()));
                }
            }
        }
        // observational: the cells expected to grow in d >= 2
        for (name, kind, fam, dir, func) in [
            ("h1 R", KernelKind::R, RieszFamily::R, Direction::H1ToL1, hormander_h1 as Functional),
            ("bmo S*", KernelKind::SStar, RieszFamily::SStar, Direction::LinfToBmo, hormander_bmo as Functional),
        ] {
            for &xi in &cfg.xi {
                match func(kind, 1, &maximal_ball(xi, d), &samp, &s) {
                    Ok(v) => {
                        rep.rows.push(CsvRow::point(fam.name(), d, dir, xi, v));
                        rep.text.push_str(&format!("observed {name}, d={d} xi={xi}: {v:.6}\n"));
                    }
                    Err(e) => rep.text.push_str(&format!("observed {name}, d={d} xi={xi}: error {e}\n")),
                }
            }
        }
        for &xi in &cfg.xi {
            match s_star_h1_functional(&maximal_ball(xi, d), &samp, &s) {
                Ok(r) => rep.push(Case::check(
                    format!("S* H1 functional <= majorant, d={d} xi={xi}"),
                    r.functional,
                    r.majorant,
                    r.functional <= r.majorant,
                )),
                Err(e) => rep.push(Case::failed(format!("S* H1 majorant, d={d} xi={xi}"), e)),
            }
        }
    }
    rep
}

fn ladder_cases(rep: &mut Report, name: &str, series: &GrowthSeries) {
    let thr = series.default_threshold();
    rep.push(Case::check(
        format!("{name} strictly increasing"),
        series.values.last().copied().unwrap_or(f64::NAN),
        series.values[0],
        series.strictly_increasing(),
    ));
    rep.push(Case::at_least(format!("{name} r^2"), series.r2, 0.9));
    rep.push(Case::check(format!("{name} slope above threshold"), series.slope, thr, series.slope > thr));
    rep.rows.extend(CsvRow::ladder(series));
    rep.verdicts.push(classify_growth(series, thr));
}

/// The `d >= 2` divergence ladders and the pointwise-bound suite.
pub fn counterexample(cfg: &RunConfig) -> Report {
    let mut rep = Report::new("counterexample");
    let s = spec(cfg);
    let r = rule(cfg);
    for &d in &cfg.dims {
        if d < 2 {
            rep.text.push_str(&format!("d={d}: the counterexample needs d >= 2; skipped\n"));
            continue;
        }
        let mut lower = Vec::new();
        let mut diverge = Vec::new();
        for &xi in &cfg.xi {
            let geom = match CounterexampleGeometry::new(xi, d) {
                Ok(g) => g,
                Err(e) => {
                    rep.push(Case::failed(format!("geometry d={d} xi={xi}"), e));
                    rep.inconclusive = true;
                    continue;
                }
            };
            match lower_bound_functional_r1(&geom, &r) {
                Ok(v) => {
                    rep.push(Case::at_least(format!("R1 integrand >= 0, d={d} xi={xi}"), v.min_integrand, 0.0));
                    lower.push(v.value);
                }
                Err(e) => {
                    rep.push(Case::failed(format!("R1 lower bound d={d} xi={xi}"), e));
                    rep.inconclusive = true;
                }
            }
            match bmo_divergence_s_star(&geom, &r, &s) {
                Ok(v) => {
                    rep.push(Case::at_least(format!("S1* integrand >= 0, d={d} xi={xi}"), v.min_integrand, 0.0));
                    diverge.push(v.value);
                }
                Err(e) => {
                    rep.push(Case::failed(format!("S1* divergence d={d} xi={xi}"), e));
                    rep.inconclusive = true;
                }
            }
        }
        for (name, fam, dir, vals) in [
            ("R1 lower bound", RieszFamily::R, Direction::H1ToL1, lower),
            ("S1* reflection", RieszFamily::SStar, Direction::LinfToBmo, diverge),
        ] {
            match GrowthSeries::new(fam, d, dir, cfg.xi.clone(), vals) {
                Ok(series) => ladder_cases(&mut rep, &format!("{name}, d={d}"), &series),
                Err(e) => {
                    rep.push(Case::failed(format!("{name} ladder, d={d}"), e));
                    rep.inconclusive = true;
                }
            }
        }
        let xi_p = cfg.xi.last().copied().unwrap_or(64.0).max(16.0);
        if let Ok(geom) = CounterexampleGeometry::new(xi_p, d) {
            let p = verify_pointwise_bounds(&geom, cfg.samples, cfg.seed);
            let tag = format!("d={d} xi={xi_p}");
            rep.push(Case::at_most(format!("(y1 - r x1)/(xi - x1) < 1/2 count, {tag}"), p.dis2_violations as f64, 0.0));
            rep.push(Case::at_most(format!("tau >= 1 count, {tag}"), p.tau_violations as f64, 0.0));
            let c = p.recorded;
            rep.push(Case::check(format!("(1-r^2)/eta^2 max, {tag}"), p.dis1.max, c.dis1.1, p.dis1.within(c.dis1.0, c.dis1.1)));
            rep.push(Case::at_least(format!("exp(-|phi|^2) min, {tag}"), p.dis3.min, c.dis3_min));
            rep.push(Case::check(format!("(1-e^-tau)/(y2/eta) max, {tag}"), p.dis4.max, c.dis4.1, p.dis4.within(c.dis4.0, c.dis4.1)));
            rep.text.push_str(&format!(
                "pointwise ratios, {tag}, {} samples, seed {}:\n  (1-r^2)/eta^2 in [{:.4}, {:.4}]\n  (y1-r x1)/(xi-x1) in [{:.4}, {:.4}]\n  exp(-|phi|^2) in [{:.4}, {:.4}]\n  (1-e^-tau)/(y2/eta) in [{:.4}, {:.4}]\n  tau in [{:.4}, {:.4}]\n",
                p.samples, p.seed, p.dis1.min, p.dis1.max, p.dis2.min, p.dis2.max, p.dis3.min, p.dis3.max,
                p.dis4.min, p.dis4.max, p.tau.min, p.tau.max
            ));
        }
    }
    rep
}

fn expected_pattern(d: usize) -> (&'static str, &'static str) {
    if d == 1 {
        ("B B B B", "B B B B")
    } else {
        ("U U B B", "B B U U")
    }
}

/// Ladders for `R` and `S*` in each dimension, completed by duality.
pub fn table(cfg: &RunConfig) -> Report {
    let mut rep = Report::new("table");
    for &d in &cfg.dims {
        let mut settings = LadderSettings::for_dim(d);
        settings.xi = cfg.xi.clone();
        settings.hormander_xi = cfg.xi.clone();
        settings.spec = spec(cfg);
        settings.rule = rule(cfg);
        settings.sampling = sampling(cfg);
        let mut computed = Vec::new();
        let mut conclusive = true;
        for (op, dir) in COMPUTED_CELLS {
            let t = Instant::now();
            match run_ladder(op, dir, d, &settings) {
                Ok(series) => {
                    let v = classify_growth(&series, series.default_threshold());
                    rep.text.push_str(&format!(
                        "d={d} {op} {dir}: {} slope {:.4} (threshold {:.4}) r2 {:.3} [{:.1} s]\n",
                        v.class,
                        v.slope,
                        series.default_threshold(),
                        v.r2,
                        t.elapsed().as_secs_f64()
                    ));
                    rep.rows.extend(CsvRow::ladder(&series));
                    computed.push(v);
                }
                Err(e) => {
                    rep.text.push_str(&format!("d={d} {op} {dir}: inconclusive ({e})\n"));
                    rep.push(Case::failed(format!("{op} {dir} ladder, d={d}"), e));
                    conclusive = false;
                }
            }
        }
        if !conclusive {
            rep.inconclusive = true;
            continue;
        }
        match duality_transfer_table(d, &computed) {
            Ok(t) => {
                let (h1, bmo) = (t.row_string(Direction::H1ToL1), t.row_string(Direction::LinfToBmo));
                rep.text.push_str(&format!(
                    "\nd = {d}         R  S  R* S*\n  H1   -> L1   {}\n  Linf -> BMO  {}\n  duality residual {:.2e}\n\n",
                    h1.replace(' ', "  "),
                    bmo.replace(' ', "  "),
                    t.duality_residual
                ));
                let (e1, e2) = expected_pattern(d);
                rep.push(Case::check(format!("pattern H1->L1 d={d}: {h1}"), 0.0, 0.0, h1 == e1));
                rep.push(Case::check(format!("pattern Linf->BMO d={d}: {bmo}"), 0.0, 0.0, bmo == e2));
                rep.push(Case::at_most(format!("duality residual d={d}"), t.duality_residual, 1e-10));
                rep.verdicts.extend(t.cells);
            }
            Err(e) => {
                rep.push(Case::failed(format!("duality transfer d={d}"), e));
                rep.inconclusive = true;
            }
        }
    }
    rep
}

/// Class counts, for quick inspection in tests.
pub fn count_class(rep: &Report, class: Class) -> usize {
    rep.verdicts.iter().filter(|v| v.class == class).count()
}
