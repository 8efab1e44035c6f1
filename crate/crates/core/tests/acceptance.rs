//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each
//! and exits non-zero if any criterion fails.

use std::panic::{self, AssertUnwindSafe};
use std::time::Instant;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use satlaw::alloc::{
    nopt_asymptotic, nopt_chinchilla, nopt_finite, solve_budget, solve_budget_from, solve_target, PriceModel,
};
use satlaw::eval::{mbe_log, rmse_log, split_high_axis, split_kfold};
use satlaw::fit::{
    e_hinge_penalty, fit, huber, objective, objective_gradient, objective_unconstrained, restart_rng, sample_init,
    EHinge, FitConfig,
};
use satlaw::eval::bootstrap;
use satlaw::forms::{predict, to_unconstrained, Axis, EvalContext, FormId, FormParams, OursParams, Point};
use satlaw::gridio::{cap_unique_data, clip_loss, Grid, LossKind, Preprocess, RunRecord};
use satlaw::verify::{
    check_limits, chinchilla_equivalent, chinchilla_map, recovery_gap, synth_grid, SynthDesign, LIMIT_TOL,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

fn log_uniform(r: &mut ChaCha20Rng, lo: f64, hi: f64) -> f64 {
    r.random_range(lo.ln()..hi.ln()).exp()
}

fn rel(a: f64, b: f64) -> f64 {
    (a / b - 1.0).abs()
}

const L0: f64 = 10.373_491_181_781_864; // ln 32000

/// Constants of the worked allocation example.
fn reference_law() -> OursParams {
    OursParams { e: L0 - 9.13, a: 44.5, alpha: 0.34, b: 45.0, beta: 0.28, c: 2e3, gamma: 0.5, delta: 1.0 }
}

fn truth() -> OursParams {
    OursParams { e: 1.8, a: 30.0, alpha: 0.35, b: 40.0, beta: 0.3, c: 60.0, gamma: 0.5, delta: 0.9 }
}

fn limits() -> Outcome {
    let start = Instant::now();
    let mut r = rng(1);
    let mut worst = 0.0f64;
    let mut ours_fail = 0;
    let mut chin_fail = 0;
    for _ in 0..100 {
        let e = r.random_range(0.5..3.0);
        let l0 = e + r.random_range(1.0..10.0);
        let mut coef = || log_uniform(&mut r, 0.1, 10.0);
        let (a, b, c) = (coef(), coef(), coef());
        let mut expo = || r.random_range(0.75..2.0);
        let p = OursParams { e, a, alpha: expo(), b, beta: expo(), c, gamma: expo(), delta: expo() };
        let ctx = EvalContext::new(l0);
        let rep = check_limits(&p.into(), &ctx);
        for row in &rep.rows {
            worst = worst.max(row.deviation / ((l0 - e) * LIMIT_TOL));
        }
        ours_fail += (!rep.all_pass()) as usize;
        let chin = check_limits(&chinchilla_equivalent(&p, l0).unwrap(), &ctx);
        chin_fail += (chin.pattern()[..5] != [false; 5]) as usize;
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        ours_fail == 0 && chin_fail == 0 && secs < 5.0,
        format!(
            "{ours_fail}/100 saturating sets failing, {chin_fail}/100 additive sets off the fail pattern, \
             worst deviation {worst:.2e} of tolerance, {secs:.2}s"
        ),
    )
}

fn recovery() -> Outcome {
    let e = 1.69;
    let l0 = e + 9.13;
    let (a, b) = chinchilla_map(406.0, 411.0, e, l0).unwrap();
    let mapped = (a - 44.5).abs() < 0.05 && (b - 45.0).abs() < 0.05;
    let p = OursParams { e, a, alpha: 0.34, b, beta: 0.28, c: 0.0, gamma: 0.0, delta: 0.0 };
    let mut r = rng(2);
    let (mut kept, mut violations, mut worst) = (0, 0, 0.0f64);
    while kept < 1000 {
        let n = log_uniform(&mut r, 1e8, 1e16);
        let d = log_uniform(&mut r, 1e9, 1e17);
        let g = recovery_gap(&p, l0, &Point::new(n, d, d).unwrap()).unwrap();
        if g.h > 0.1 {
            continue;
        }
        kept += 1;
        worst = worst.max(g.gap / g.bound);
        violations += (g.holds() != Some(true)) as usize;
    }
    outcome(
        mapped && violations == 0,
        format!("a = {a:.2}, b = {b:.2}; {violations}/1000 points over the bound, worst gap/bound {worst:.3}"),
    )
}

fn identification_design(sigma: f64, seed: u64) -> SynthDesign {
    SynthDesign {
        n: SynthDesign::log_space(1e6, 1e10, 6),
        d: SynthDesign::log_space(1e7, 1e12, 6),
        epochs: vec![1.0, 4.0, 16.0, 64.0, 256.0],
        sigma,
        seed,
    }
}

fn preds(params: &FormParams, grid: &Grid, ctx: &EvalContext) -> Vec<f64> {
    grid.points().map(|pt| predict(params, &pt, ctx).unwrap()).collect()
}

fn synthetic() -> Outcome {
    let truth = truth();
    let design = identification_design(0.0, 0);
    let grid = synth_grid(&truth, L0, &design).unwrap();
    let cfg = FitConfig::default();
    let start = Instant::now();
    let fitted = fit(FormId::Ours, &grid, &cfg).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let ctx = fitted.context;
    let obs: Vec<f64> = grid.losses().collect();
    let in_lattice = rmse_log(&preds(&fitted.params, &grid, &ctx), &obs).unwrap();
    let ext = synth_grid(&truth, L0, &design.extended(2.0)).unwrap();
    let ext_obs: Vec<f64> = ext.losses().collect();
    let extended = rmse_log(&preds(&fitted.params, &ext, &ctx), &ext_obs).unwrap();
    let got = OursParams::try_from(&fitted.params).unwrap().to_array();
    let want = truth.to_array();
    let mut worst_main = 0.0f64;
    let mut worst_over = 0.0f64;
    for (i, (g, w)) in got.iter().zip(want).enumerate() {
        if i >= 5 {
            worst_over = worst_over.max(rel(*g, w));
        } else {
            worst_main = worst_main.max(rel(*g, w));
        }
    }

    let sigma = 0.01;
    let noisy = synth_grid(&truth, L0, &identification_design(sigma, 7)).unwrap();
    let split = split_high_axis(&noisy, Axis::C, 0.1, cfg.k).unwrap();
    let train = noisy.subset(&split.train);
    let hold = noisy.subset(&split.holdout);
    let nf = fit(FormId::Ours, &train, &cfg).unwrap();
    let hold_obs: Vec<f64> = hold.losses().collect();
    let noisy_rmse = rmse_log(&preds(&nf.params, &hold, &nf.context), &hold_obs).unwrap();

    let pass = in_lattice < 1e-6
        && extended < 1e-3
        && worst_main < 0.01
        && worst_over < 0.05
        && noisy_rmse <= 2.0 * sigma
        && noisy_rmse >= 0.5 * sigma
        && secs < 120.0;
    outcome(
        pass,
        format!(
            "{} cells, fit {secs:.1}s; log-RMSE {in_lattice:.1e} in-lattice, {extended:.1e} extended; \
             worst rel error {worst_main:.1e} (e,a,alpha,b,beta), {worst_over:.1e} (c,gamma,delta); \
             noisy high-c holdout RMSE {noisy_rmse:.4} at sigma {sigma}",
            grid.len()
        ),
    )
}

/// Golden-section refinement of a dense log-grid minimum.
fn brute_min(f: impl Fn(f64) -> f64, lo: f64, hi: f64, step: f64) -> f64 {
    let count = ((hi - lo) / step) as usize;
    let best = (0..=count).map(|i| lo + i as f64 * step).min_by(|a, b| f(*a).total_cmp(&f(*b))).unwrap();
    let (mut a, mut b) = (best - step, best + step);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..200 {
        let (x1, x2) = (b - g * (b - a), a + g * (b - a));
        if f(x1) < f(x2) {
            b = x2;
        } else {
            a = x1;
        }
    }
    0.5 * (a + b)
}

fn random_law(r: &mut ChaCha20Rng) -> OursParams {
    OursParams {
        e: 1.0,
        a: log_uniform(r, 1.0, 1e3),
        alpha: r.random_range(0.25..0.75),
        b: log_uniform(r, 1.0, 1e3),
        beta: r.random_range(0.25..0.75),
        c: log_uniform(r, 1.0, 1e3),
        gamma: r.random_range(0.25..0.75),
        delta: r.random_range(0.5..1.0),
    }
}

fn closed_forms() -> Outcome {
    let mut r = rng(4);
    let (mut brute, mut to_chin, mut to_asym) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..100 {
        let p = random_law(&mut r);
        let d = log_uniform(&mut r, 1e6, 1e13);
        let c_flops = log_uniform(&mut r, 1e15, 1e25);
        let h_inf = |x: f64| p.a * (-p.alpha * x).exp() + (p.c.ln() + p.gamma * x - p.delta * d.ln()).exp();
        let oracle = brute_min(h_inf, -50.0, 200.0, 0.01).exp();
        let closed = nopt_asymptotic(&p, d).unwrap();
        brute = brute.max(rel(closed, oracle));
        to_chin = to_chin.max(rel(nopt_finite(&p, c_flops, 1e300, 6.0).unwrap(), nopt_chinchilla(&p, c_flops, 6.0).unwrap()));
        to_asym = to_asym.max(rel(nopt_finite(&p, 1e300, d, 6.0).unwrap(), closed));
    }
    let p = reference_law();
    let n1 = nopt_asymptotic(&p, 3.2e11).unwrap();
    let n2 = nopt_asymptotic(&p, 3.2e9).unwrap();
    // Dense-grid minimizations of h over n for the reference constants.
    let frozen = rel(n1, 338_648_142_774.7).max(rel(n2, 1_408_628_000.3));
    let printed = format!("{n1:.2e}") == "3.39e11" && format!("{n2:.2e}") == "1.41e9";
    outcome(
        brute < 1e-6 && to_chin < 1e-6 && to_asym < 1e-6 && frozen < 1e-6 && printed,
        format!(
            "vs brute force {brute:.1e}, d->1e300 {to_chin:.1e}, C->1e300 {to_asym:.1e}; \
             n* = {n1:.4e} (rel {:.2e} to 3.39e11) and {n2:.4e} (rel {:.2e} to 1.41e9), frozen oracles {frozen:.1e}",
            rel(n1, 3.39e11),
            rel(n2, 1.41e9)
        ),
    )
}

fn allocation_scenario(name: &str, p: OursParams, l0: f64, prices: PriceModel, budget: f64, seed: u64) -> (bool, String) {
    let start = Instant::now();
    let base = solve_budget(&p, l0, &prices, budget).unwrap();
    let mut r = rng(seed);
    let mut spread = 0.0f64;
    for _ in 0..10 {
        let d = budget * r.random_range(0.01..0.99) / prices.rho_d;
        let n = base.n_star * log_uniform(&mut r, 1e-3, 1e3);
        let s = solve_budget_from(&p, l0, &prices, budget, Some((n, d))).unwrap();
        spread = spread.max(rel(s.n_star, base.n_star)).max(rel(s.d_star, base.d_star)).max(rel(s.t_star, base.t_star));
    }
    let back = solve_target(&p, l0, &prices, base.loss).unwrap();
    let round = rel(back.cost, budget)
        .max(rel(back.n_star, base.n_star))
        .max(rel(back.d_star, base.d_star))
        .max(rel(back.t_star, base.t_star));
    let foc = base.foc_residual.max(back.foc_residual);

    let span = 100f64.ln();
    let axis = |centre: f64| -> Vec<f64> { (0..41).map(|i| centre.ln() - span + 2.0 * span * i as f64 / 40.0).collect() };
    let (us, vs, ws) = (axis(base.n_star), axis(base.d_star), axis(base.t_star));
    let mut best = f64::INFINITY;
    for &u in &us {
        for &v in &vs {
            for &w in &ws {
                let (n, d, t) = (u.exp(), v.exp(), w.exp());
                if prices.cost(n, d, t) <= budget {
                    let h = p.a * n.powf(-p.alpha) + p.b * t.powf(-p.beta) + p.c * n.powf(p.gamma) * d.powf(-p.delta);
                    best = best.min(h);
                }
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = spread < 1e-4 && round < 1e-4 && foc <= 1e-6 && best >= base.h * (1.0 - 1e-9) && secs < 30.0;
    (
        pass,
        format!(
            "{name}: starts {spread:.1e}, round trip {round:.1e}, foc {foc:.1e}, grid/solver h {:.4}, {secs:.2}s",
            best / base.h
        ),
    )
}

fn allocation() -> Outcome {
    let toy = OursParams { e: 1.0, a: 1.0, alpha: 1.0, b: 1.0, beta: 1.0, c: 1.0, gamma: 1.0, delta: 1.0 };
    let unit = PriceModel { rho_d: 1.0, rho_c: 1.0, k: 1.0 };
    let scenarios = [
        allocation_scenario("toy", toy, 3.0, unit, 1e4, 51),
        allocation_scenario(
            "reference eta=1e12",
            reference_law(),
            L0,
            PriceModel { rho_d: 1e12, rho_c: 1.0, k: 6.0 },
            1e22,
            52,
        ),
        allocation_scenario("fitted-like", truth(), L0, PriceModel { rho_d: 1e9, rho_c: 1.0, k: 6.0 }, 1e21, 53),
    ];
    let pass = scenarios.iter().all(|s| s.0);
    outcome(pass, scenarios.iter().map(|s| s.1.as_str()).collect::<Vec<_>>().join("; "))
}

fn table_trends() -> Outcome {
    let p = reference_law();
    let k: f64 = 6.0;
    let n0: f64 = 5.2e9;
    let flops = ((p.alpha + p.beta) * n0.ln() + (p.beta * p.b).ln() + p.beta * k.ln() - (p.alpha * p.a).ln()) / p.beta;
    let budget = flops.exp();
    let rows: Vec<_> = [0.0, 1e10, 1e12, 1e13]
        .iter()
        .map(|&eta| solve_budget(&p, L0, &PriceModel { rho_d: eta, rho_c: 1.0, k }, budget).unwrap())
        .collect();
    let d_down = rows.windows(2).all(|w| w[1].d_star < w[0].d_star);
    let ep_up = rows.windows(2).all(|w| w[1].epochs > w[0].epochs);
    let share_up = rows.windows(2).all(|w| w[1].data_share > w[0].data_share);
    let last = &rows[3];
    let pass = rel(rows[0].n_star, n0) < 1e-6
        && d_down
        && ep_up
        && share_up
        && (300.0..3000.0).contains(&last.epochs)
        && last.data_share > 0.8;
    let cells: Vec<String> = rows
        .iter()
        .skip(1)
        .map(|r| format!("n {:.2e} d {:.2e} {:.1} epochs {:.1}%", r.n_star, r.d_star, r.epochs, 100.0 * r.data_share))
        .collect();
    outcome(pass, format!("budget {budget:.3e}; {}", cells.join(" | ")))
}

fn small_grid() -> Grid {
    let design = SynthDesign {
        n: SynthDesign::log_space(1e6, 1e10, 4),
        d: SynthDesign::log_space(1e7, 1e12, 4),
        epochs: vec![1.0, 16.0, 256.0],
        sigma: 0.0,
        seed: 0,
    };
    synth_grid(&truth(), L0, &design).unwrap()
}

fn fitting_details() -> Outcome {
    let tau = 0.05;
    let quad = 0.5 * tau * tau;
    let lin = (tau - 0.5 * tau) * tau;
    let h = 1e-7;
    let slope_l = (huber(tau, tau) - huber(tau - h, tau)) / h;
    let slope_r = (huber(tau + h, tau) - huber(tau, tau)) / h;
    let knee = huber(tau, tau) == quad && quad == lin && (slope_l - tau).abs() < 1e-6 && (slope_r - tau).abs() < 1e-6;

    let grid = small_grid();
    let m = grid.losses().fold(f64::INFINITY, f64::min);
    let plain = FitConfig::default();
    let mut hinged = FitConfig { e_hinge: Some(EHinge { kappa: 1.5, lambda_per_row: 0.25 }), ..FitConfig::default() };
    let mut noop = true;
    for e in [m / 1.5, m / 1.5 * 1.01, m * 0.9] {
        let fp: FormParams = OursParams { e, ..truth() }.into();
        noop &= objective(&fp, &grid, &plain).unwrap().to_bits() == objective(&fp, &grid, &hinged).unwrap().to_bits();
    }
    let closed = 10.0 * 2f64.ln().powi(2);
    hinged.e_hinge = Some(EHinge { kappa: 1.5, lambda_per_row: 10.0 / grid.len() as f64 });
    let fp: FormParams = OursParams { e: m / 3.0, ..truth() }.into();
    let through = objective(&fp, &grid, &hinged).unwrap() - objective(&fp, &grid, &plain).unwrap();
    let direct = e_hinge_penalty(0.5, 1.5, 1.5, 10.0);
    let hinge = noop && (direct - closed).abs() < 1e-12 && (through - closed).abs() < 1e-12;

    let l0 = 4.0;
    let ceiling = l0 - 0.01;
    let mut r = rng(7);
    let mut clip = clip_loss(RunRecord::new(1e6, 1e7, 1e7, ceiling), l0, 0.01).1 == false;
    let mut capped = true;
    for _ in 0..1000 {
        let loss = ceiling + r.random_range(-0.005..0.005);
        let (out, fired) = clip_loss(RunRecord::new(1e6, 1e7, 1e7, loss), l0, 0.01);
        clip &= fired == (loss > ceiling) && out.loss == loss.min(ceiling);
        let rec = RunRecord::new(1e6, log_uniform(&mut r, 1e5, 1e9), log_uniform(&mut r, 1e5, 1e9), 2.0);
        capped &= cap_unique_data(cap_unique_data(rec.clone())) == cap_unique_data(rec);
    }
    let raw: Vec<RunRecord> = (0..200)
        .map(|_| {
            let d = [1e6, 1e7, 1e8][r.random_range(0..3)];
            let t = [1e6, 1e7, 1e8][r.random_range(0..3)];
            RunRecord::new(1e6, d, t, r.random_range(1.0..4.5))
        })
        .collect();
    let pre = Preprocess::default();
    let (once, _) = Grid::from_records("g", l0, LossKind::CrossEntropy, raw, &pre).unwrap();
    let again: Vec<RunRecord> = once.records().iter().map(|x| RunRecord::new(x.n, x.d, x.t, x.loss)).collect();
    let (twice, rep) = Grid::from_records("g", l0, LossKind::CrossEntropy, again, &pre).unwrap();
    capped &= once == twice && rep.capped == 0 && rep.clipped == 0;

    let fitted = fit(FormId::Ours, &grid, &FitConfig::default()).unwrap();
    let report = bootstrap(&fitted, &grid, None, &plain, 200, 11).unwrap();
    let widest = report
        .params
        .iter()
        .map(|(name, iv)| (iv.width() / fitted.params.get(name).unwrap().abs().max(1.0), name.clone()))
        .fold((0.0, "all".to_string()), |acc, x| if x.0 > acc.0 { x } else { acc });
    let boot = report.failed == 0 && widest.0 <= BOOT_TOL;

    outcome(
        knee && hinge && clip && capped && boot,
        format!(
            "knee {knee}, hinge {hinge} (closed form {direct:.15}, via objective {through:.15}), clip {clip}, \
             cap idempotent {capped}, bootstrap widest relative width {:.1e} ({}) over {} resamples",
            widest.0, widest.1, report.resamples
        ),
    )
}

/// Relative parameter precision a converged warm refit reaches on exact data.
const BOOT_TOL: f64 = 1e-6;

fn farseer_anchor() -> Vec<f64> {
    vec![1.0, -0.1, 0.3, 2.0, -0.05, 1.0, 0.5, -0.1, -2.5]
}

fn gradients() -> Outcome {
    let grid = small_grid();
    let cfg = FitConfig { farseer_anchor: Some(farseer_anchor()), ..FitConfig::default() };
    let mut worst = (0.0f64, FormId::Ours);
    let mut short = Vec::new();
    for form in FormId::ALL {
        let mut checked = 0;
        for i in 0..2000 {
            if checked == 20 {
                break;
            }
            let v = sample_init(form, &mut restart_rng(8, i), &cfg.init, cfg.farseer_anchor.as_deref(), grid.l0()).unwrap();
            let Ok(x) = FormParams::new(form, v).and_then(|fp| to_unconstrained(&fp)) else { continue };
            let (f, g) = objective_gradient(form, &x, &grid, &cfg).unwrap();
            if !f.is_finite() {
                continue;
            }
            let mut fd = Vec::with_capacity(x.len());
            let mut finite = true;
            for j in 0..x.len() {
                let step = 1e-6 * x[j].abs().max(1.0);
                let (mut hi, mut lo) = (x.clone(), x.clone());
                hi[j] += step;
                lo[j] -= step;
                let (fh, fl) = (
                    objective_unconstrained(form, &hi, &grid, &cfg).unwrap(),
                    objective_unconstrained(form, &lo, &grid, &cfg).unwrap(),
                );
                finite &= fh.is_finite() && fl.is_finite();
                fd.push((fh - fl) / (2.0 * step));
            }
            if !finite {
                continue;
            }
            // Central differences cannot resolve slopes below ~eps |f| / step.
            let scale = g.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-6 * f.abs().max(1.0));
            let err = g.iter().zip(&fd).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())) / scale;
            if err > worst.0 {
                worst = (err, form);
            }
            checked += 1;
        }
        if checked < 20 {
            short.push(format!("{form} ({checked})"));
        }
    }
    outcome(
        worst.0 <= 1e-4 && short.is_empty(),
        format!(
            "13 forms x 20 points, worst relative gap {:.1e} ({}){}",
            worst.0,
            worst.1,
            if short.is_empty() { String::new() } else { format!(", too few valid points: {}", short.join(", ")) }
        ),
    )
}

fn splits() -> Outcome {
    let mut r = rng(9);
    let (mut grouped, mut share, mut partition, mut worst_id) = (true, f64::INFINITY, true, 0.0f64);
    for case in 0..50 {
        let values = |r: &mut ChaCha20Rng, k: usize| -> Vec<f64> { (0..k).map(|_| log_uniform(r, 1e6, 1e10).round()).collect() };
        let (ns, ds, ms) = (values(&mut r, 5), values(&mut r, 5), [1.0, 2.0, 4.0]);
        let rows = r.random_range(20..120);
        let raw: Vec<RunRecord> = (0..rows)
            .map(|_| {
                let d = ds[r.random_range(0..5)];
                RunRecord::new(ns[r.random_range(0..5)], d, d * ms[r.random_range(0..3)], r.random_range(1.0..3.0))
            })
            .collect();
        let (grid, _) = Grid::from_records("s", 4.0, LossKind::CrossEntropy, raw, &Preprocess::default()).unwrap();
        for axis in [Axis::N, Axis::D, Axis::T, Axis::C] {
            let Ok(s) = split_high_axis(&grid, axis, 0.1, 6.0) else { continue };
            let key = |i: usize| grid.records()[i].point().axis_value(axis, 6.0).to_bits();
            let held: std::collections::BTreeSet<u64> = s.holdout.iter().map(|&i| key(i)).collect();
            grouped &= s.train.iter().all(|&i| !held.contains(&key(i)));
            grouped &= s.train.len() + s.holdout.len() == grid.len();
            share = share.min(s.holdout.len() as f64 / grid.len() as f64);
        }
        let k = 2 + case % 9;
        let len = r.random_range(k..200);
        let folds = split_kfold(len, k, case as u64).unwrap();
        let mut seen = vec![0usize; len];
        for f in &folds {
            for &i in &f.holdout {
                seen[i] += 1;
            }
            partition &= f.train.len() + f.holdout.len() == len && f.train.iter().all(|i| f.holdout.binary_search(i).is_err());
        }
        partition &= folds.len() == k && seen.iter().all(|&c| c == 1);

        let p: Vec<f64> = (0..len).map(|_| log_uniform(&mut r, 0.5, 5.0)).collect();
        let o: Vec<f64> = (0..len).map(|_| log_uniform(&mut r, 0.5, 5.0)).collect();
        let res: Vec<f64> = p.iter().zip(&o).map(|(a, b)| a.ln() - b.ln()).collect();
        let mean = res.iter().sum::<f64>() / len as f64;
        let var = res.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / len as f64;
        let (rm, mb) = (rmse_log(&p, &o).unwrap(), mbe_log(&p, &o).unwrap());
        worst_id = worst_id.max((rm * rm - (mb * mb + var)).abs());
    }
    outcome(
        grouped && share >= 0.1 && partition && worst_id <= 1e-12,
        format!(
            "groups intact {grouped}, smallest holdout share {:.1}%, kfold exact {partition}, \
             |rmse^2 - mbe^2 - var| <= {worst_id:.1e}",
            100.0 * share
        ),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("limit suite", limits),
        ("additive recovery", recovery),
        ("synthetic identification", synthetic),
        ("closed forms", closed_forms),
        ("allocation convexity and duality", allocation),
        ("allocation trends", table_trends),
        ("fitting details", fitting_details),
        ("gradients", gradients),
        ("split machinery", splits),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let out = panic::catch_unwind(AssertUnwindSafe(run))
            .unwrap_or_else(|e| {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                outcome(false, format!("panicked: {msg}"))
            });
        failed += (!out.pass) as usize;
        println!(
            "criterion {} {name}: {} [{:.1}s] {}",
            i + 1,
            if out.pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64(),
            out.detail
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
