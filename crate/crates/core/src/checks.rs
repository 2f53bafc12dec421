//! Randomized invariant suites over the recursion and the backward
//! constructions. Each suite is deterministic given its seed and returns a
//! [`SuiteOutcome`] instead of panicking, so it can back both tests and a
//! command-line verifier.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::dynamics::{fluid_oracle_phi, gamma, gamma_values, last_departure_index, phi, step, ForwardQueue};
use crate::input::{replication_seed, Dist, InputModel, MarkedInputGenerator};
use crate::measures::{CountingMeasure, ATOM_EPS};
use crate::rates::{RateFormula, RateFunction, RateTable, TableExtension};
use crate::stationary::{backward_coupling_ps, lindley_w, loynes_l, stationary_profile_gginf};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct SuiteOutcome {
    pub name: &'static str,
    pub cases: u64,
    pub failures: u64,
    pub detail: String,
}

impl SuiteOutcome {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }

    fn new(name: &'static str) -> Self {
        Self { name, cases: 0, failures: 0, detail: String::new() }
    }

    fn record(&mut self, ok: bool, describe: impl FnOnce() -> String) {
        self.cases += 1;
        if !ok {
            if self.failures == 0 {
                self.detail = describe();
            }
            self.failures += 1;
        }
    }

    fn fail(&mut self, detail: String) {
        self.failures += 1;
        if self.detail.is_empty() {
            self.detail = detail;
        }
    }

    fn summary(mut self, text: String) -> Self {
        if self.detail.is_empty() {
            self.detail = text;
        } else {
            self.detail = format!("{text}; first failure: {}", self.detail);
        }
        self
    }
}

struct Sampler(ChaCha8Rng);

impl Sampler {
    fn new(seed: u64) -> Self {
        Self(ChaCha8Rng::seed_from_u64(seed))
    }

    fn unit(&mut self) -> f64 {
        (self.0.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    fn uniform(&mut self, a: f64, b: f64) -> f64 {
        a + (b - a) * self.unit()
    }

    fn below(&mut self, n: usize) -> usize {
        ((self.unit() * n as f64) as usize).min(n - 1)
    }

    fn profile(&mut self, max_atoms: usize, hi: f64) -> CountingMeasure {
        let n = self.below(max_atoms + 1);
        let atoms = (0..n).map(|_| self.uniform(0.0, hi)).collect();
        CountingMeasure::from_atoms(atoms).expect("uniform atoms are valid")
    }
}

/// Rate functions exercised by the dynamics suites.
pub fn dynamics_catalog() -> Vec<RateFunction> {
    vec![
        RateFunction::pure_delay(),
        RateFunction::classical_ps(),
        RateFunction::half_interference(),
        RateFunction::nominal_table(),
        RateFunction::constant_throughput(0.7).expect("positive throughput"),
        RateFunction::formula(RateFormula::PowerLaw { scale: 1.0, exponent: 0.5 }, 1.0, false)
            .expect("valid power law"),
    ]
}

/// Valid single-server rates with a positive floor, as required for
/// perfect sampling.
pub fn coupling_catalog() -> Vec<RateFunction> {
    vec![
        RateFunction::classical_ps(),
        RateFunction::half_interference(),
        degrading_table(),
        RateFunction::constant_throughput(0.75).expect("positive throughput"),
    ]
}

/// The nominal degradation table extended at constant throughput 0.8, which
/// keeps it single-server for every `n`.
pub fn degrading_table() -> RateFunction {
    let table = RateTable::new(
        vec![(1, 1.0), (2, 0.495), (3, 0.3), (100, 0.008)],
        TableExtension::HoldThroughput,
    )
    .expect("static table is well formed");
    RateFunction::table(table, 0.8, true).expect("valid floor")
}

/// Pairs `(r, r_tilde)` with `r <= r_tilde` pointwise.
pub fn dominated_pairs() -> Vec<(RateFunction, RateFunction)> {
    vec![
        (RateFunction::half_interference(), RateFunction::classical_ps()),
        (RateFunction::classical_ps(), RateFunction::pure_delay()),
        (degrading_table(), RateFunction::classical_ps()),
        (RateFunction::half_interference(), degrading_table()),
        (RateFunction::constant_throughput(0.5).expect("positive"), RateFunction::half_interference()),
    ]
}

fn mm_input(mean_xi: f64, mean_sigma: f64) -> InputModel {
    InputModel::iid(Dist::Exponential { mean: mean_xi }, Dist::Exponential { mean: mean_sigma })
        .expect("positive means")
}

/// The closed-form update agrees with event-by-event fluid simulation.
pub fn oracle_equivalence(seed: u64, cases: u64) -> SuiteOutcome {
    let catalog = dynamics_catalog();
    let mut s = Sampler::new(seed);
    let mut out = SuiteOutcome::new("oracle equivalence");
    for _ in 0..cases {
        let mu = s.profile(10, 10.0);
        let x = s.uniform(0.0, 20.0);
        let r = &catalog[s.below(catalog.len())];
        let closed = phi(&mu, x, r).expect("valid inputs");
        let fluid = fluid_oracle_phi(&mu, x, r);
        out.record(closed.tv_distance_within(&fluid, ATOM_EPS) == 0, || {
            format!("{:?} x={x} r={:?}: {:?} vs {:?}", mu.atoms(), r.tag(), closed.atoms(), fluid.atoms())
        });
    }
    out
}

/// `gamma` is the largest `gamma_i`, attained at the first survivor, and
/// the `gamma_i` rise up to there and fall afterwards.
pub fn gamma_unimodality(seed: u64, cases: u64) -> SuiteOutcome {
    let catalog = dynamics_catalog();
    let mut s = Sampler::new(seed);
    let mut out = SuiteOutcome::new("gamma unimodality");
    for _ in 0..cases {
        let mu = s.profile(10, 10.0);
        if mu.is_zero() {
            continue;
        }
        let x = s.uniform(0.0, 20.0);
        let r = &catalog[s.below(catalog.len())];
        let gs = gamma_values(&mu, x, r);
        let g = gamma(&mu, x, r).expect("valid inputs");
        let ir = last_departure_index(&mu, x, r).expect("nonempty");
        let max = gs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let peak = ir.min(gs.len() - 1);
        let tol = |v: f64| 1e-8 * (1.0 + v.abs());
        let rising = gs[..=peak].windows(2).all(|w| w[1] >= w[0] - tol(w[0]));
        let falling = gs[peak..].windows(2).all(|w| w[1] <= w[0] + tol(w[0]));
        out.record(g == max && rising && falling, || {
            format!("{:?} x={x} r={:?}: gamma={g} gammas={gs:?} i_r={ir}", mu.atoms(), r.tag())
        });
    }
    out
}

/// `mu <= nu` implies `Phi(mu, x) <= Phi(nu, x)`.
pub fn profile_monotonicity(seed: u64, cases: u64) -> SuiteOutcome {
    let catalog = dynamics_catalog();
    let mut s = Sampler::new(seed);
    let mut out = SuiteOutcome::new("monotonicity in the profile");
    for _ in 0..cases {
        let mu = s.profile(10, 10.0);
        let inflated: Vec<f64> = mu.atoms().iter().map(|a| a + s.uniform(0.0, 2.0)).collect();
        let extra = s.below(3);
        let mut atoms = inflated;
        atoms.extend((0..extra).map(|_| s.uniform(0.0, 10.0)));
        let nu = CountingMeasure::from_atoms(atoms).expect("valid atoms");
        debug_assert!(mu.leq(&nu));
        let x = s.uniform(0.0, 20.0);
        let r = &catalog[s.below(catalog.len())];
        let (a, b) = (phi(&mu, x, r).expect("valid"), phi(&nu, x, r).expect("valid"));
        out.record(a.leq(&b), || format!("{:?} <= {:?}, x={x}, r={:?}: {:?} vs {:?}", mu.atoms(), nu.atoms(), r.tag(), a.atoms(), b.atoms()));
    }
    out
}

/// `r <= r_tilde` implies `Phi^{r_tilde}(mu, x) <= Phi^r(mu, x)`.
pub fn rate_monotonicity(seed: u64, cases: u64) -> SuiteOutcome {
    let pairs = dominated_pairs();
    let mut s = Sampler::new(seed);
    let mut out = SuiteOutcome::new("monotonicity in the rate");
    for _ in 0..cases {
        let mu = s.profile(10, 10.0);
        let x = s.uniform(0.0, 20.0);
        let (r, rt) = &pairs[s.below(pairs.len())];
        let fast = phi(&mu, x, rt).expect("valid");
        let slow = phi(&mu, x, r).expect("valid");
        out.record(fast.leq(&slow), || {
            format!("{:?} x={x} r={:?} r~={:?}: {:?} vs {:?}", mu.atoms(), r.tag(), rt.tag(), fast.atoms(), slow.atoms())
        });
    }
    out
}

/// Stationary infinite-server profile: the one-step equation under the
/// shift and agreement of its largest atom with `L`.
pub fn gginf_fixed_point(seed: u64, replications: u64, max_lookback: u64) -> SuiteOutcome {
    let base = MarkedInputGenerator::new(mm_input(3.0, 1.0), seed);
    let pd = RateFunction::pure_delay();
    let mut out = SuiteOutcome::new("infinite-server fixed point");
    let mut converged = 0;
    for i in 0..replications {
        let g = base.with_seed(replication_seed(seed, i));
        let here = stationary_profile_gginf(&g, max_lookback);
        let next = stationary_profile_gginf(&g.shift(1), max_lookback);
        let l = loynes_l(&g, max_lookback);
        if !(here.converged && next.converged && l.converged) {
            continue;
        }
        converged += 1;
        let mk = g.sample(0);
        let stepped = step(&here.profile, mk.sigma, mk.xi, &pd).expect("valid marks");
        out.record(stepped.tv_distance_within(&next.profile, ATOM_EPS) == 0, || {
            format!("replication {i}: {:?} vs {:?}", stepped.atoms(), next.profile.atoms())
        });
        let z = here.profile.largest_atom();
        out.record((z - l.value).abs() <= ATOM_EPS, || format!("replication {i}: Z = {z}, L = {}", l.value));
    }
    if converged == 0 {
        out.fail(String::from("no replication converged"));
    }
    out.summary(format!("{converged}/{replications} converged"))
}

/// `L o theta = [max(L, sigma_0) - xi_0]^+` and
/// `W o theta = [W + sigma_0 - K xi_0]^+`.
pub fn backward_fixed_points(seed: u64, replications: u64, max_lookback: u64) -> SuiteOutcome {
    let base = MarkedInputGenerator::new(mm_input(3.0, 1.0), seed);
    let mut out = SuiteOutcome::new("Loynes and Lindley fixed points");
    let mut converged = 0;
    for i in 0..replications {
        let g = base.with_seed(replication_seed(seed, i));
        let mk = g.sample(0);
        let (l0, l1) = (loynes_l(&g, max_lookback), loynes_l(&g.shift(1), max_lookback));
        if l0.converged && l1.converged {
            converged += 1;
            let want = (l0.value.max(mk.sigma) - mk.xi).max(0.0);
            out.record((l1.value - want).abs() <= ATOM_EPS, || format!("L replication {i}: {} vs {want}", l1.value));
        }
        for k in [0.5, 1.0] {
            let w0 = lindley_w(&g, k, max_lookback).expect("positive drain");
            let w1 = lindley_w(&g.shift(1), k, max_lookback).expect("positive drain");
            if w0.converged && w1.converged {
                converged += 1;
                let want = (w0.value + mk.sigma - k * mk.xi).max(0.0);
                out.record((w1.value - want).abs() <= ATOM_EPS, || {
                    format!("W (K={k}) replication {i}: {} vs {want}", w1.value)
                });
            }
        }
    }
    if converged < 3 * replications {
        out.fail(format!("only {converged} of {} constructions converged", 3 * replications));
    }
    out.summary(format!("{converged}/{} converged", 3 * replications))
}

/// Coupling frequency of perfect sampling and the stationary equation
/// between the samples at index 0 and 1.
pub fn perfect_sampling(seed: u64, replications: u64, max_lookback: u64, min_coupling_freq: f64) -> SuiteOutcome {
    let base = MarkedInputGenerator::new(mm_input(3.0, 1.0), seed);
    let r = RateFunction::half_interference();
    let mut out = SuiteOutcome::new("perfect sampling");
    let mut coupled = 0;
    for i in 0..replications {
        let g = base.with_seed(replication_seed(seed, i));
        let a = backward_coupling_ps(&g, &r, max_lookback).expect("valid rate");
        let b = backward_coupling_ps(&g.shift(1), &r, max_lookback).expect("valid rate");
        let (Some(pa), Some(pb)) = (a.stationary_profile, b.stationary_profile) else {
            continue;
        };
        coupled += 1;
        let mk = g.sample(0);
        let stepped = step(&pa, mk.sigma, mk.xi, &r).expect("valid marks");
        out.record(stepped.tv_distance_within(&pb, ATOM_EPS) == 0, || {
            format!("replication {i}: {:?} vs {:?}", stepped.atoms(), pb.atoms())
        });
    }
    let freq = coupled as f64 / replications.max(1) as f64;
    if freq < min_coupling_freq {
        out.fail(format!("coupling frequency {freq} below {min_coupling_freq}"));
    }
    out.summary(format!("coupled {coupled}/{replications}"))
}

/// With `r(n) = K/n` the total workload follows the Lindley recursion
/// exactly; for any valid `r` it stays below the floor-`K_r` workload.
pub fn workload_domination(seed: u64, steps: u64) -> SuiteOutcome {
    let g = MarkedInputGenerator::new(mm_input(3.0, 1.0), seed);
    let mut out = SuiteOutcome::new("workload identity and domination");

    for k in [0.5, 1.0] {
        let start = lindley_w(&g, k, 1_000_000).expect("positive drain");
        if !start.converged {
            out.fail(format!("W with K={k} did not converge"));
            continue;
        }
        let r = RateFunction::constant_throughput(k).expect("positive");
        let zeta = if start.value > 0.0 {
            CountingMeasure::from_atoms(vec![start.value]).expect("valid")
        } else {
            CountingMeasure::zero()
        };
        let mut q = ForwardQueue::with_profile(r, &zeta);
        let mut w = start.value;
        let mut worst: f64 = 0.0;
        for n in 0..steps {
            let mk = g.sample(n as i64);
            q.step(mk.sigma, mk.xi).expect("valid marks");
            w = (w + mk.sigma - k * mk.xi).max(0.0);
            worst = worst.max((q.workload() - w).abs());
        }
        out.record(worst <= ATOM_EPS, || format!("K={k}: workload deviates from Lindley by {worst}"));
    }

    for r in coupling_catalog() {
        let k = r.floor();
        let start = lindley_w(&g, k, 1_000_000).expect("positive drain");
        if !start.converged {
            out.fail(format!("W with K={k} did not converge"));
            continue;
        }
        let mut q = ForwardQueue::new(r.clone());
        let mut w = start.value;
        let mut excess = f64::NEG_INFINITY;
        for n in 0..steps {
            let mk = g.sample(n as i64);
            q.step(mk.sigma, mk.xi).expect("valid marks");
            w = (w + mk.sigma - k * mk.xi).max(0.0);
            excess = excess.max(q.workload() - w);
        }
        out.record(excess <= ATOM_EPS, || format!("{:?}: workload exceeds W by {excess}", r.tag()));
    }
    out
}

/// Every suite at the given scale.
pub fn all_suites(seed: u64, cases: u64, replications: u64, steps: u64) -> Vec<SuiteOutcome> {
    vec![
        oracle_equivalence(seed, cases),
        gamma_unimodality(seed ^ 1, cases),
        profile_monotonicity(seed ^ 2, cases),
        rate_monotonicity(seed ^ 3, cases),
        gginf_fixed_point(seed ^ 4, replications, 1_000_000),
        backward_fixed_points(seed ^ 5, replications, 1_000_000),
        perfect_sampling(seed ^ 6, replications, 10_000, 0.99),
        workload_domination(seed ^ 7, steps),
    ]
}
