//! Property tests over random kernels, activation functions and arrival
//! sequences.

use proptest::prelude::*;

use stochmatch::arrivals::{extended_rates, sample_stream, ArrivalModel, ArrivalSampler};
use stochmatch::engines::{run_esm, run_esm_extended, run_suggested, run_with_key_filter};
use stochmatch::instance::{Instance, OnlineSpec, WeightSpec, XSpec};
use stochmatch::lp::{check_feasibility, solve_instance, LP_TOL};
use stochmatch::output::format_f64;
use stochmatch::ratiocalc::{check_all, cons1, cons2, r1, r2, z_of};
use stochmatch::{y_star, Graph, KernelInstance, PiecewiseConstantF, TOL};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Kernel on `n` offline vertices: a second-class type on every pair with
/// `x = c_jk` on both edges, topped up by a first-class type per vertex.
fn kernel_instance(n: usize, c: &[f64], beta: f64) -> Instance {
    let ids: Vec<String> = (0..n).map(|j| format!("v{j}")).collect();
    let mut pairs = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            pairs.push((a, b));
        }
    }
    let mut load = vec![0.0; n];
    for (p, &(a, b)) in pairs.iter().enumerate() {
        load[a] += c[p];
        load[b] += c[p];
    }
    let max = load.iter().cloned().fold(0.0, f64::max);
    let scale = beta / max;
    let mut online = Vec::new();
    let mut x = Vec::new();
    for (p, &(a, b)) in pairs.iter().enumerate() {
        let cp = c[p] * scale;
        let id = format!("s{a}_{b}");
        online.push(OnlineSpec { id: id.clone(), rate: 2.0 * cp, neighbors: vec![ids[a].clone(), ids[b].clone()] });
        x.push(XSpec { i: id.clone(), j: ids[a].clone(), x: cp });
        x.push(XSpec { i: id, j: ids[b].clone(), x: cp });
    }
    for j in 0..n {
        let y = 1.0 - load[j] * scale;
        if y > 1e-12 {
            let id = format!("f{j}");
            online.push(OnlineSpec { id: id.clone(), rate: y, neighbors: vec![ids[j].clone()] });
            x.push(XSpec { i: id, j: ids[j].clone(), x: y });
        }
    }
    let weights = online
        .iter()
        .flat_map(|o| o.neighbors.iter().map(|j| WeightSpec { i: o.id.clone(), j: j.clone(), w: 1.0 }))
        .collect();
    Instance { online, offline: ids, weights, x: Some(x) }
}

fn arb_kernel() -> impl Strategy<Value = KernelInstance> {
    (2usize..=5)
        .prop_flat_map(|n| (Just(n), prop::collection::vec(0.8f64..=1.0, n * (n - 1) / 2), 0.87f64..=1.0))
        .prop_map(|(n, c, beta)| KernelInstance::from_instance(&kernel_instance(n, &c, beta), TOL).unwrap())
}

fn arb_activation() -> impl Strategy<Value = PiecewiseConstantF> {
    prop::collection::vec(0.0f64..=2.0, 1..=12).prop_map(|mut v| {
        v.sort_by(f64::total_cmp);
        PiecewiseConstantF::new(v).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn stream_times_are_increasing_in_unit_interval(rate in 0.0f64..20.0, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let times = sample_stream(rate, &mut rng);
        prop_assert!(times.iter().all(|&t| (0.0..1.0).contains(&t)));
        prop_assert!(times.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn generated_kernels_have_expected_structure(k in arb_kernel()) {
        for j in 0..k.graph().num_offline() {
            prop_assert!(k.y(j) <= y_star() + TOL);
            let total: f64 = k.competitors_of(j).iter().map(|&(_, c)| c).sum();
            prop_assert!((total - (1.0 - k.y(j))).abs() < 1e-9, "{total} vs {}", 1.0 - k.y(j));
        }
    }

    #[test]
    fn extended_rates_are_conserved(k in arb_kernel(), f in arb_activation(), t in 0.0f64..1.0) {
        let level = f.eval(t);
        for r in extended_rates(&k, &f, t) {
            let lam = k.graph().rate(r.online);
            prop_assert!((r.total - lam).abs() < 1e-12);
            let parts = r.discard + r.first_only.iter().sum::<f64>() + r.both.iter().sum::<f64>();
            prop_assert!((parts - lam).abs() < 1e-12);
            for s in 0..2 {
                prop_assert!((r.first_only[s] + r.both[s] - r.any_first[s]).abs() < 1e-12);
                prop_assert!((r.any_first[s] - lam / 2.0 * level.min(1.0)).abs() < 1e-12);
                prop_assert!((r.both[s] - lam / 2.0 * (level - 1.0).max(0.0)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn engines_agree_and_produce_valid_matchings(
        k in arb_kernel(), f in arb_activation(), seed: u64, trial in 0u64..1000,
    ) {
        let events = ArrivalSampler::new(k.graph(), seed, ArrivalModel::Poisson).sample(trial);
        let a = run_esm(&k, &f, &events).unwrap();
        let b = run_esm_extended(&k, &f, &events).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert!(a.validate(k.graph(), &events).is_ok());
        let zero_filter = run_with_key_filter(&k, &f, &events, 0, 0.0).unwrap();
        prop_assert_eq!(&a, &zero_filter);
    }

    #[test]
    fn constant_one_is_suggested_matching(k in arb_kernel(), seed: u64, trial in 0u64..1000) {
        let one = PiecewiseConstantF::constant(1.0).unwrap();
        let events = ArrivalSampler::new(k.graph(), seed, ArrivalModel::Poisson).sample(trial);
        let esm = run_esm(&k, &one, &events).unwrap();
        let sm = run_suggested(k.graph(), k.solution(), &events).unwrap();
        prop_assert_eq!(esm, sm);
    }

    #[test]
    fn key_filter_keeps_vertices_free_longer(
        k in arb_kernel(), f in arb_activation(), seed: u64, trial in 0u64..1000,
        x in 0.0f64..=1.0, t in 0.0f64..=1.0,
    ) {
        let events = ArrivalSampler::new(k.graph(), seed, ArrivalModel::Poisson).sample(trial);
        let plain = run_esm(&k, &f, &events).unwrap();
        let n = k.graph().num_offline();
        for key in 0..n {
            let filtered = run_with_key_filter(&k, &f, &events, key, x).unwrap();
            prop_assert!(filtered.validate(k.graph(), &events).is_ok());
            for j in 0..n {
                if plain.unmatched_at(j, t) {
                    prop_assert!(filtered.unmatched_at(j, t), "key {key}, j {j}, x {x}, t {t}");
                }
            }
        }
    }

    #[test]
    fn refinement_preserves_bounds(f in arb_activation(), factor in 2usize..=4) {
        let g = f.refine(factor);
        let y = y_star();
        prop_assert!((r1(&f, y) - r1(&g, y)).abs() < 1e-12);
        prop_assert!((r2(&f, y) - r2(&g, y)).abs() < 1e-12);
        prop_assert!((cons1(&f) - cons1(&g)).abs() < 1e-12);
        prop_assert!((cons2(&f) - cons2(&g)).abs() < 1e-12);
        prop_assert!((f.total() - g.total()).abs() < 1e-12);
    }

    #[test]
    fn cumulative_activation_and_threshold(f in arb_activation(), t in 0.0f64..=1.0) {
        let ft = f.cumulative(t);
        prop_assert!(ft >= -1e-15 && ft <= 2.0 * t + 1e-12);
        let ts = f.t_star();
        let fs = f.cumulative_at_t_star();
        prop_assert!(fs <= ts + 1e-12);
        prop_assert!((z_of(&f, ts).unwrap() - fs).abs() < 1e-12);
        prop_assert_eq!(z_of(&f, t).is_ok(), t >= ts);
    }

    #[test]
    fn reported_bounds_are_in_range(f in arb_activation()) {
        let r = check_all(&f);
        prop_assert!(r.r1.is_finite() && r.r2.is_finite());
        prop_assert!(r.min <= r.r1.min(r.r2) + 1e-15);
        prop_assert!((0.0..=1.0).contains(&r.r1), "r1 = {}", r.r1);
        prop_assert!((0.0..=1.0).contains(&r.r2), "r2 = {}", r.r2);
    }

    #[test]
    fn floats_round_trip(x in any::<f64>().prop_filter("finite", |x| x.is_finite())) {
        prop_assert_eq!(format_f64(x).parse::<f64>().unwrap(), x);
    }
}

fn small_instance(rates: &[f64], adj: &[Vec<usize>], n: usize, w: &[f64]) -> Instance {
    let offline: Vec<String> = (0..n).map(|j| format!("o{j}")).collect();
    let online: Vec<OnlineSpec> = rates
        .iter()
        .zip(adj)
        .enumerate()
        .map(|(i, (&rate, nb))| OnlineSpec {
            id: format!("a{i}"),
            rate,
            neighbors: nb.iter().map(|&j| offline[j].clone()).collect(),
        })
        .collect();
    let mut k = 0;
    let mut weights = Vec::new();
    for o in &online {
        for j in &o.neighbors {
            weights.push(WeightSpec { i: o.id.clone(), j: j.clone(), w: w[k % w.len()] });
            k += 1;
        }
    }
    Instance { online, offline, weights, x: None }
}

fn arb_general() -> impl Strategy<Value = Instance> {
    (1usize..=3, 1usize..=3)
        .prop_flat_map(|(m, n)| {
            (
                prop::collection::vec(0.1f64..2.0, m),
                prop::collection::vec(prop::sample::subsequence((0..n).collect::<Vec<_>>(), 1..=n), m),
                Just(n),
                prop::collection::vec(0.0f64..5.0, 1..=9),
            )
        })
        .prop_map(|(rates, adj, n, w)| small_instance(&rates, &adj, n, &w))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn lp_solution_is_feasible_and_scales(inst in arb_general(), c in 0.1f64..10.0) {
        let g = Graph::build(&inst).unwrap();
        let sol = solve_instance(&g, LP_TOL).unwrap();
        prop_assert!(check_feasibility(&g, &sol.x, 1e-7).ok);
        prop_assert!((sol.x.objective(&g) - sol.objective).abs() < 1e-7);
        let mut scaled = inst.clone();
        for w in &mut scaled.weights {
            w.w *= c;
        }
        let gs = Graph::build(&scaled).unwrap();
        let ss = solve_instance(&gs, LP_TOL).unwrap();
        prop_assert!((ss.objective - c * sol.objective).abs() <= 1e-6 * (1.0 + c * sol.objective));
    }
}
