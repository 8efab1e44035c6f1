use proptest::prelude::*;
use satlaw::alloc::{nopt_asymptotic, nopt_chinchilla, nopt_finite, solve_budget, solve_target, PriceModel};
use satlaw::forms::{difficulty, predict, EvalContext, OursParams, Point};
use satlaw::verify::check_limits;

fn law() -> impl Strategy<Value = OursParams> {
    (
        0.5f64..3.0,
        prop::array::uniform3(0.0f64..3.0),
        prop::array::uniform4(0.2f64..1.2),
    )
        .prop_map(|(e, [a, b, c], [alpha, beta, gamma, delta])| OursParams {
            e,
            a: 10f64.powf(a),
            alpha,
            b: 10f64.powf(b),
            beta,
            c: 10f64.powf(c),
            gamma,
            delta,
        })
}

fn h_at(p: &OursParams, u: f64, v: f64, w: f64) -> f64 {
    difficulty(p, &Point::new(u.exp(), v.exp(), w.exp()).unwrap()).unwrap().value
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn loss_stays_between_floor_and_baseline(
        p in law(),
        gap in 0.5f64..10.0,
        ln in prop::array::uniform3(5.0f64..30.0),
    ) {
        let l0 = p.e + gap;
        let pt = Point::new(ln[0].exp(), ln[1].exp(), (ln[1] + ln[2] / 10.0).exp()).unwrap();
        let l = predict(&p.into(), &pt, &EvalContext::new(l0)).unwrap();
        prop_assert!(l >= p.e && l <= l0);
    }

    #[test]
    fn more_data_or_steps_never_hurt(p in law(), ln in prop::array::uniform3(5.0f64..30.0), bump in 0.01f64..3.0) {
        let ctx = EvalContext::new(p.e + 5.0);
        let f = |d: f64, t: f64| predict(&p.into(), &Point::new(ln[0].exp(), d.exp(), t.exp()).unwrap(), &ctx).unwrap();
        // One ulp of slack: the wrapper is evaluated in floating point.
        let base = f(ln[1], ln[2]) * (1.0 + f64::EPSILON);
        prop_assert!(f(ln[1] + bump, ln[2]) <= base);
        prop_assert!(f(ln[1], ln[2] + bump) <= base);
    }

    #[test]
    fn difficulty_is_convex_in_log_resources(p in law(), x in prop::array::uniform3(5.0f64..25.0)) {
        let s = 1e-3;
        let f = |dx: [f64; 3]| h_at(&p, x[0] + dx[0], x[1] + dx[1], x[2] + dx[2]);
        let f0 = f([0.0; 3]);
        let mut hess = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                let mut pp = [0.0; 3];
                let mut pm = [0.0; 3];
                let mut mp = [0.0; 3];
                let mut mm = [0.0; 3];
                pp[i] += s; pp[j] += s;
                pm[i] += s; pm[j] -= s;
                mp[i] -= s; mp[j] += s;
                mm[i] -= s; mm[j] -= s;
                hess[i][j] = (f(pp) - f(pm) - f(mp) + f(mm)) / (4.0 * s * s);
            }
        }
        // Leading principal minors, with slack for difference noise.
        let tol = 1e-6 * f0;
        let m2 = hess[0][0] * hess[1][1] - hess[0][1] * hess[1][0];
        let det = hess[0][0] * (hess[1][1] * hess[2][2] - hess[1][2] * hess[2][1])
            - hess[0][1] * (hess[1][0] * hess[2][2] - hess[1][2] * hess[2][0])
            + hess[0][2] * (hess[1][0] * hess[2][1] - hess[1][1] * hess[2][0]);
        prop_assert!(hess[0][0] >= -tol && hess[1][1] >= -tol && hess[2][2] >= -tol);
        prop_assert!(m2 >= -tol * f0.max(1.0) && det >= -tol * f0.max(1.0).powi(2));
    }

    #[test]
    fn finite_compute_optimum_is_below_both_limits(
        p in law(),
        c in 15.0f64..25.0,
        d in 6.0f64..13.0,
    ) {
        let (c, d) = (10f64.powf(c), 10f64.powf(d));
        let n = nopt_finite(&p, c, d, 6.0).unwrap();
        prop_assert!(n <= nopt_chinchilla(&p, c, 6.0).unwrap() * (1.0 + 1e-12));
        prop_assert!(n <= nopt_asymptotic(&p, d).unwrap() * (1.0 + 1e-12));
    }

    #[test]
    fn limit_suite_holds_for_steep_laws(
        e in 0.5f64..3.0,
        gap in 1.0f64..10.0,
        coefs in prop::array::uniform3(-1.0f64..1.0),
        exps in prop::array::uniform4(0.75f64..2.0),
    ) {
        let [a, b, c] = coefs.map(|x| 10f64.powf(x));
        let p = OursParams { e, a, alpha: exps[0], b, beta: exps[1], c, gamma: exps[2], delta: exps[3] };
        let rep = check_limits(&p.into(), &EvalContext::new(e + gap));
        prop_assert!(rep.all_pass(), "{}", rep.to_markdown());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn budget_is_spent_and_buys_lower_loss(
        p in law(),
        rho_d in -3.0f64..3.0,
        budget in 8.0f64..16.0,
    ) {
        let prices = PriceModel { rho_d: 10f64.powf(rho_d), rho_c: 1.0, k: 6.0 };
        let l0 = p.e + 8.0;
        let small = solve_budget(&p, l0, &prices, 10f64.powf(budget)).unwrap();
        let large = solve_budget(&p, l0, &prices, 10f64.powf(budget + 0.5)).unwrap();
        prop_assert!((small.cost / 10f64.powf(budget) - 1.0).abs() < 1e-9);
        prop_assert!(large.loss <= small.loss);
        prop_assert!(small.foc_residual <= 1e-6);
    }

    #[test]
    fn harder_targets_cost_more(p in law(), rho_d in -3.0f64..3.0, q in 0.2f64..0.8) {
        let prices = PriceModel { rho_d: 10f64.powf(rho_d), rho_c: 1.0, k: 6.0 };
        let l0 = p.e + 8.0;
        let easy = solve_target(&p, l0, &prices, p.e + 8.0 * q).unwrap();
        let hard = solve_target(&p, l0, &prices, p.e + 8.0 * q * 0.9).unwrap();
        prop_assert!(hard.cost > easy.cost);
        prop_assert!((easy.loss - (p.e + 8.0 * q)).abs() < 1e-9 * l0);
    }
}
