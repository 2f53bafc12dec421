use proptest::prelude::*;
use psq_core::checks::{dominated_pairs, dynamics_catalog};
use psq_core::dynamics::{departure_schedule, fluid_oracle_phi, gamma, phi, step, ForwardQueue};
use psq_core::input::{Dist, InputModel, MarkedInputGenerator};
use psq_core::measures::CountingMeasure;
use psq_core::rates::RateFunction;
use psq_core::stationary::{lindley_w, stationary_profile_gginf};

fn profile() -> impl Strategy<Value = CountingMeasure> {
    prop::collection::vec(0.0f64..10.0, 0..=10).prop_map(|a| CountingMeasure::from_atoms(a).unwrap())
}

fn rate() -> impl Strategy<Value = RateFunction> {
    let catalog = dynamics_catalog();
    (0..catalog.len()).prop_map(move |i| catalog[i].clone())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn closed_form_matches_fluid(mu in profile(), x in 0.0f64..20.0, r in rate()) {
        let closed = phi(&mu, x, &r).unwrap();
        prop_assert_eq!(closed.tv_distance_within(&fluid_oracle_phi(&mu, x, &r), 1e-9), 0);
    }

    #[test]
    fn survivors_lose_exactly_gamma(mu in profile(), x in 0.0f64..20.0, r in rate()) {
        let out = phi(&mu, x, &r).unwrap();
        prop_assert!(out.num_atoms() <= mu.num_atoms());
        if !out.is_zero() {
            let g = gamma(&mu, x, &r).unwrap();
            let top = mu.atoms().last().unwrap();
            prop_assert!((top - g - out.largest_atom()).abs() < 1e-9);
        }
    }

    #[test]
    fn departures_happen_within_the_cycle(mu in profile(), x in 0.0f64..20.0, r in rate()) {
        prop_assume!(!mu.is_zero());
        let s = departure_schedule(&mu, &r, 0.0, x).unwrap();
        let left = mu.num_atoms() - phi(&mu, x, &r).unwrap().num_atoms();
        prop_assert_eq!(s.last_departure_index, left);
        for t in &s.departure_times[..left] {
            prop_assert!(*t <= x + 1e-6);
        }
        for t in &s.departure_times[left..] {
            prop_assert!(*t > x - 1e-6);
        }
    }

    #[test]
    fn monotone_in_profile(mu in profile(), bumps in prop::collection::vec(0.0f64..2.0, 10), extra in prop::collection::vec(0.0f64..10.0, 0..3), x in 0.0f64..20.0, r in rate()) {
        let mut atoms: Vec<f64> = mu.atoms().iter().zip(&bumps).map(|(a, b)| a + b).collect();
        atoms.extend(extra);
        let nu = CountingMeasure::from_atoms(atoms).unwrap();
        prop_assert!(mu.leq(&nu));
        prop_assert!(phi(&mu, x, &r).unwrap().leq(&phi(&nu, x, &r).unwrap()));
    }

    #[test]
    fn monotone_in_rate(mu in profile(), x in 0.0f64..20.0, pick in 0usize..5) {
        let (slow, fast) = &dominated_pairs()[pick];
        prop_assert!(phi(&mu, x, fast).unwrap().leq(&phi(&mu, x, slow).unwrap()));
    }

    #[test]
    fn forward_queue_tracks_step(marks in prop::collection::vec((0.0f64..5.0, 0.0f64..3.0), 1..40), r in rate()) {
        let mut q = ForwardQueue::new(r.clone());
        let mut mu = CountingMeasure::zero();
        for (sigma, xi) in marks {
            q.step(sigma, xi).unwrap();
            mu = step(&mu, sigma, xi, &r).unwrap();
            prop_assert_eq!(q.profile().tv_distance_within(&mu, 1e-9), 0);
        }
    }

    #[test]
    fn generator_shift_is_index_translation(seed in any::<u64>(), k in -1000i64..1000, n in -1000i64..1000) {
        let model = InputModel::iid(Dist::Exponential { mean: 2.0 }, Dist::Uniform { a: 0.0, b: 3.0 }).unwrap();
        let g = MarkedInputGenerator::new(model, seed);
        prop_assert_eq!(g.shift(k).sample(n), g.sample(n + k));
        prop_assert_eq!(g.shift(k).shift(-k), g);
    }

    #[test]
    fn gginf_profile_satisfies_its_recursion(seed in any::<u64>()) {
        let model = InputModel::iid(Dist::Exponential { mean: 1.0 }, Dist::Exponential { mean: 2.0 }).unwrap();
        let g = MarkedInputGenerator::new(model, seed);
        let here = stationary_profile_gginf(&g, 1_000_000);
        let next = stationary_profile_gginf(&g.shift(1), 1_000_000);
        let mk = g.sample(0);
        let stepped = step(&here.profile, mk.sigma, mk.xi, &RateFunction::pure_delay()).unwrap();
        prop_assert_eq!(stepped.tv_distance_within(&next.profile, 1e-9), 0);
    }

    #[test]
    fn lindley_dominates_every_valid_rate(seed in any::<u64>(), pick in 0usize..4) {
        let r = psq_core::checks::coupling_catalog()[pick].clone();
        let model = InputModel::iid(Dist::Exponential { mean: 3.0 }, Dist::Exponential { mean: 1.0 }).unwrap();
        let g = MarkedInputGenerator::new(model, seed);
        let k = r.floor();
        let mut w = lindley_w(&g, k, 1_000_000).unwrap().value;
        let mut q = ForwardQueue::new(r);
        for n in 0..300 {
            let mk = g.sample(n);
            q.step(mk.sigma, mk.xi).unwrap();
            w = (w + mk.sigma - k * mk.xi).max(0.0);
            prop_assert!(q.workload() <= w + 1e-9);
        }
    }
}
