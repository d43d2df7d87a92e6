mod common;

use num_complex::Complex64;
use proptest::prelude::*;

use bdp_integral::contfrac::{denominator_ratio, wallis_convergent, BdpFraction, ContFrac, Lentz};
use bdp_integral::laplace::{transition_probability, InversionPlan};
use bdp_integral::modelspec::{make_model, BdpModel, ModelKind, RateFunction, Rates, TabooSet};
use bdp_integral::passage::AbsorbedModel;
use bdp_integral::reward::{reward_cdf, reward_density, RewardModel};

fn complex() -> impl Strategy<Value = Complex64> {
    (-1.0f64..1.0, -1.0f64..1.0).prop_map(|(re, im)| Complex64::new(re, im))
}

/// Partial denominators bounded away from zero by more than the numerators
/// can pull, so every convergent is well conditioned.
fn fraction(max_depth: usize) -> impl Strategy<Value = ContFrac> {
    (1..=max_depth).prop_flat_map(|depth| {
        (
            prop::collection::vec(complex(), depth),
            prop::collection::vec((2.5f64..5.0, 0.0f64..std::f64::consts::TAU), depth),
        )
            .prop_map(|(a, b)| {
                let b = b.into_iter().map(|(r, th)| Complex64::from_polar(r, th)).collect();
                ContFrac::new(a, b)
            })
    })
}

fn lentz_at(cf: &ContFrac, depth: usize) -> bdp_integral::contfrac::LentzState {
    let mut l = Lentz::new(cf);
    for _ in 0..depth {
        l.step();
    }
    *l.state()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn lentz_agrees_with_wallis(cf in fraction(25)) {
        for k in 1..=cf.depth() {
            let (a, b) = wallis_convergent(&cf, k);
            let w = a / b;
            let l = lentz_at(&cf, k).value;
            prop_assert!((l - w).norm() <= 1e-12 * w.norm().max(1e-3), "depth {k}: {l} vs {w}");
        }
    }

    #[test]
    fn z_recurrence_matches_direct_ratio(cf in fraction(25), m in 0usize..10, j in 0usize..12) {
        prop_assume!(m + j <= cf.depth() && m < cf.depth());
        let d = lentz_at(&cf, m + 1).d;
        let z = denominator_ratio(&cf, m, j, d);
        let direct = wallis_convergent(&cf, m + j).1 / wallis_convergent(&cf, m).1;
        prop_assert!((z - direct).norm() <= 1e-10 * direct.norm(), "m={m} j={j}: {z} vs {direct}");
    }
}

/// A random infinite chain with polynomial rates.
fn random_chain() -> impl Strategy<Value = BdpModel> {
    (0.05f64..2.0, 0.05f64..2.0, 0.0f64..2.0, 0.0f64..0.05, 0.0f64..0.05).prop_map(|(l, m, imm, l2, m2)| {
        BdpModel::new(
            RateFunction::closure(move |n| {
                let n = n as f64;
                l * n + imm + l2 * n * n
            }),
            RateFunction::closure(move |n| {
                let n = n as f64;
                m * n + m2 * n * n
            }),
            TabooSet::lower(0),
            RateFunction::constant(1.0),
            None,
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn truncation_bound_holds(model in random_chain(), re in 0.05f64..5.0, im in -200.0f64..200.0, k in 3usize..40) {
        prop_assume!(im.abs() > 1e-3);
        let s = Complex64::new(re, im);
        let cf = BdpFraction::new(&model, s);
        let mut l = Lentz::new(&cf);
        for _ in 0..k {
            l.step();
        }
        let at_k = *l.state();
        for _ in 0..50 {
            l.step();
        }
        let ahead = l.state().value;
        let (bound, rigorous) = at_k.error_bound();
        prop_assert!(rigorous);
        let gap = (at_k.value - ahead).norm();
        prop_assert!(gap <= bound * (1.0 + 1e-9) + 1e-14 * ahead.norm(), "gap {gap:e} > bound {bound:e}");
    }

    #[test]
    fn unit_reward_leaves_rates_unchanged(model in random_chain(), cap in prop::option::of(5usize..60), upper in prop::option::of(3usize..40)) {
        let model = match cap {
            Some(c) => BdpModel::new(
                RateFunction::table((0..=c).map(|n| model.birth(n)).collect()),
                RateFunction::table((0..=c).map(|n| model.death(n)).collect()),
                TabooSet::lower(0),
                RateFunction::constant(1.0),
                Some(c),
            ),
            None => model,
        };
        let taboo = match upper {
            Some(b) => TabooSet::both(0, b).unwrap(),
            None => TabooSet::lower(0),
        };
        let model = model.with_taboo(taboo);
        let modified = RewardModel::new(&model).unwrap();
        let absorbed = AbsorbedModel::new(&model, taboo);
        for n in 0..200 {
            prop_assert_eq!(modified.birth(n).to_bits(), absorbed.birth(n).to_bits());
            prop_assert_eq!(modified.death(n).to_bits(), absorbed.death(n).to_bits());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn cdf_is_a_distribution_function(lambda in 0.05f64..0.9, mu in 0.3f64..2.0, i in 1usize..6) {
        let model = make_model(&ModelKind::Kendall { lambda, mu }).unwrap();
        let grid: Vec<f64> = (1..=60).map(|k| 0.25 * k as f64).collect();
        let c = reward_cdf(&model, i, &grid, &InversionPlan::default()).unwrap();
        let cdf = c.cdf.unwrap();
        for (k, p) in cdf.iter().enumerate() {
            prop_assert!(*p >= -c.err[k] && *p <= 1.0 + c.err[k], "F({}) = {p}", grid[k]);
            if k > 0 {
                prop_assert!(*p >= cdf[k - 1] - c.err[k] - c.err[k - 1], "decrease at {}", grid[k]);
            }
        }
    }

    #[test]
    fn density_is_derivative_of_cdf(lambda in 0.05f64..0.9, mu in 0.3f64..2.0, i in 1usize..5, w in 0.5f64..20.0) {
        let model = make_model(&ModelKind::Kendall { lambda, mu }).unwrap();
        let h = 1e-3;
        let plan = InversionPlan::default();
        let f = reward_cdf(&model, i, &[w - h, w + h], &plan).unwrap();
        let d = reward_density(&model, i, &[w], &plan).unwrap();
        let cdf = f.cdf.unwrap();
        let fd = (cdf[1] - cdf[0]) / (2.0 * h);
        let tol = 1e-5f64.max(10.0 * d.err[0]);
        prop_assert!((fd - d.density.unwrap()[0]).abs() <= tol, "w={w}: {fd}");
    }
}

#[test]
fn transition_rows_sum_to_one() {
    let model = make_model(&ModelKind::Moran { population: 10, fitness_1: 0.5, fitness_2: 1.0, u: 0.1, v: 0.1 }).unwrap();
    let plan = InversionPlan::default();
    for t in [0.05, 0.3, 2.0] {
        let total: f64 = (0..=10).map(|j| transition_probability(&model, 4, j, t, &plan).unwrap().value).sum();
        assert!((total - 1.0).abs() < 1e-8, "t={t}: {total}");
    }
}

#[test]
fn transition_matches_uniformization() {
    let model = make_model(&ModelKind::Moran { population: 10, fitness_1: 0.5, fitness_2: 1.0, u: 0.1, v: 0.1 }).unwrap();
    let plan = InversionPlan::default();
    for t in [0.05, 0.3, 2.0] {
        let row = common::transient_row(&model, 10, 4, t);
        for (j, expect) in row.iter().enumerate() {
            let p = transition_probability(&model, 4, j, t, &plan).unwrap();
            assert!((p.value - expect).abs() <= 1e-9, "t={t} j={j}: {} vs {expect}", p.value);
            assert!((p.value - expect).abs() <= p.err + 1e-12, "t={t} j={j}: outside budget {}", p.err);
        }
    }
}
