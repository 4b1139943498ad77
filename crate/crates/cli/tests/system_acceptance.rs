//! Acceptance suite: one PASS/FAIL line per criterion, each checked at its
//! stated tolerance and wall-clock budget. Exits non-zero if any fails.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rydberg_anneal::analysis::{adiabatic_time_estimate, gap_scaling_fit, DEFAULT_GRID_POINTS};
use rydberg_anneal::dressing::j_perturbative;
use rydberg_anneal::ising::alternating_pattern;
use rydberg_anneal::{
    benchmark_chain, brute_force_ground, diagonalize_pair, evolve_closed, evolve_open, evolve_trajectories,
    j_closed_form, readout, run, AnnealSpec, DressingParams, ExperimentConfig, IntegratorConfig, IsingProblem,
    NoiseModel, RunOptions,
};

const COUPLING_KHZ: f64 = 470.0;
const B_X_KHZ: f64 = 470.0;
const DELTA_E_TOTAL_KHZ: f64 = 118.5;
const T_PER_QUBIT_US: f64 = 17.5;
const GAMMA_MAX_KHZ: f64 = 0.1;

struct Outcome {
    pass: bool,
    detail: String,
}

/// Drift figures gathered from every propagation in the suite.
#[derive(Default)]
struct Conservation {
    closed_max: f64,
    closed_runs: usize,
    open_max: f64,
    open_runs: usize,
}

impl Conservation {
    fn closed(&mut self, drift: f64) {
        self.closed_max = self.closed_max.max(drift);
        self.closed_runs += 1;
    }
    fn open(&mut self, drift: f64) {
        self.open_max = self.open_max.max(drift);
        self.open_runs += 1;
    }
}

fn chain_spec(n: usize, t_total_us: f64, gamma_khz: f64) -> AnnealSpec {
    let mut spec =
        AnnealSpec::linear(benchmark_chain(n, COUPLING_KHZ, DELTA_E_TOTAL_KHZ).unwrap(), B_X_KHZ, t_total_us);
    spec.noise = NoiseModel::with_rate(gamma_khz);
    spec
}

fn linspace(a: f64, b: f64, k: usize) -> Vec<f64> {
    (0..k).map(|i| a + (b - a) * i as f64 / (k - 1) as f64).collect()
}

fn c1_closed_form_oracle() -> Outcome {
    let omegas = linspace(0.5, 20.0, 50);
    // 25 red and 25 blue detunings
    let deltas: Vec<f64> = linspace(1.0, 40.0, 25).into_iter().flat_map(|d| [-d, d]).collect();
    let mut worst: f64 = 0.0;
    for &o in &omegas {
        for &d in &deltas {
            let p = DressingParams::perfect(o, d, 0.0);
            let num = diagonalize_pair(&p).unwrap().j_coupling_mhz;
            let exact = j_closed_form(&p);
            worst = worst.max(((num - exact) / exact).abs());
        }
    }
    Outcome { pass: worst <= 1e-10, detail: format!("max relative deviation {worst:.2e} over 50x50 grid (tol 1e-10)") }
}

fn c2_perturbative_limit() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut points = 0;
    for &o in &linspace(0.1, 4.0, 50) {
        for &d in &linspace(1.0, 400.0, 50) {
            for d in [-d, d] {
                if (o / d).abs() > 0.1 {
                    continue;
                }
                let p = DressingParams::perfect(o, d, 0.0);
                let num = diagonalize_pair(&p).unwrap().j_coupling_mhz;
                worst = worst.max(((num - j_perturbative(&p)) / num).abs());
                points += 1;
            }
        }
    }
    Outcome {
        pass: points > 0 && worst <= 0.05,
        detail: format!("max relative deviation {worst:.4} over {points} points with |omega/delta| <= 0.1 (tol 0.05)"),
    }
}

fn c3_admixture_and_scattering() -> Outcome {
    let r = diagonalize_pair(&DressingParams::perfect(10.0, 8.0, 0.53)).unwrap();
    let admix_ok = (r.admixture_pair - 0.20).abs() <= 0.05;
    let gamma_hz = r.scattering_rate_khz * 1e3;
    let gamma_ok = (gamma_hz - 100.0).abs() <= 50.0;
    Outcome {
        pass: admix_ok && gamma_ok,
        detail: format!(
            "pair admixture {:.4} (target 0.20 +- 0.05: {}), single-atom admixture {:.4}; \
             scattering {gamma_hz:.1} Hz (target 100 +- 50 Hz: {})",
            r.admixture_pair,
            verdict(admix_ok),
            r.admixture_single,
            verdict(gamma_ok)
        ),
    }
}

fn benchmark_success(n: usize, gamma_khz: f64, cons: &mut Conservation) -> f64 {
    let spec = chain_spec(n, T_PER_QUBIT_US * n as f64, gamma_khz);
    let cfg = IntegratorConfig::default();
    let target = alternating_pattern(n);
    if gamma_khz == 0.0 {
        let ev = evolve_closed(&spec, &cfg).unwrap();
        cons.closed(ev.stats.norm_drift);
        readout(&ev.state).prob(&target)
    } else {
        let ev = evolve_open(&spec, &spec.noise, &cfg).unwrap();
        cons.open(ev.stats.norm_drift);
        readout(&ev.state).prob(&target)
    }
}

fn c4_two_qubit_benchmark(cons: &mut Conservation) -> Outcome {
    let noisy = benchmark_success(2, GAMMA_MAX_KHZ, cons);
    let clean = benchmark_success(2, 0.0, cons);
    let noisy_ok = (0.987..=1.0).contains(&noisy);
    let clean_ok = clean >= 0.99;
    Outcome {
        pass: noisy_ok && clean_ok,
        detail: format!(
            "with scattering {noisy:.5} (band [0.987, 1]: {}); noise off {clean:.5} (>= 0.99: {})",
            verdict(noisy_ok),
            verdict(clean_ok)
        ),
    }
}

fn c5_larger_benchmarks(cons: &mut Conservation) -> Outcome {
    let p3 = benchmark_success(3, GAMMA_MAX_KHZ, cons);
    let p4 = benchmark_success(4, GAMMA_MAX_KHZ, cons);
    let c3 = benchmark_success(3, 0.0, cons);
    let c4 = benchmark_success(4, 0.0, cons);
    Outcome {
        pass: p3 >= 0.98 && p4 >= 0.98,
        detail: format!("n=3 (T=52.5 us) {p3:.5}, n=4 (T=70 us) {p4:.5} (each >= 0.98); noise off {c3:.5}, {c4:.5}"),
    }
}

/// Random instance with a unique ground state separated by at least
/// `min_final_gap` from the first excited level.
fn random_instance(rng: &mut ChaCha8Rng, min_final_gap: f64) -> IsingProblem {
    loop {
        let n = rng.random_range(2..=4);
        let bias: Vec<f64> = (0..n).map(|_| rng.random_range(-300.0..300.0)).collect();
        let mut couplings = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                couplings.push((i, j, rng.random_range(-500.0..500.0)));
            }
        }
        let p = IsingProblem::new(bias, couplings, 0.0).unwrap();
        let g = brute_force_ground(&p).unwrap();
        if g.degeneracy == 1 && g.gap >= min_final_gap {
            return p;
        }
    }
}

fn c6_random_instances(cons: &mut Conservation) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let cfg = IntegratorConfig::default();
    let mut worst = f64::INFINITY;
    let mut failures = Vec::new();
    let mut longest: f64 = 0.0;
    for k in 0..25 {
        let p = random_instance(&mut rng, 20.0);
        let ground = brute_force_ground(&p).unwrap().configuration;
        let mut spec = AnnealSpec::linear(p, B_X_KHZ, 1.0);
        let heuristic = adiabatic_time_estimate(&spec, DEFAULT_GRID_POINTS).unwrap();
        spec.t_total_us = 10.0 * heuristic.time_scale_us;
        longest = longest.max(spec.t_total_us);
        let ev = evolve_closed(&spec, &cfg).unwrap();
        cons.closed(ev.stats.norm_drift);
        let dist = readout(&ev.state);
        let p_ground = dist.prob(&ground);
        worst = worst.min(p_ground);
        if dist.mode() != ground || p_ground < 0.95 {
            failures.push(format!("#{k} (n={}, p={p_ground:.4})", spec.n()));
        }
    }
    Outcome {
        pass: failures.is_empty(),
        detail: format!(
            "25 instances, lowest ground probability {worst:.5} (>= 0.95, modal), longest T {longest:.1} us{}",
            if failures.is_empty() { String::new() } else { format!("; failing: {}", failures.join(", ")) }
        ),
    }
}

fn c7_gap_scaling() -> Outcome {
    let family = |n: usize| Ok(chain_spec(n, T_PER_QUBIT_US * n as f64, 0.0));
    let s = gap_scaling_fit(family, &[2, 3, 4, 5, 6], DEFAULT_GRID_POINTS).unwrap();
    let alpha = s.fit.exponent;
    let in_band = (-1.5..=-0.6).contains(&alpha);
    let gaps: Vec<String> = s.min_gaps.iter().map(|g| format!("{g:.1}")).collect();
    Outcome {
        pass: in_band && s.monotone_decreasing,
        detail: format!(
            "exponent {alpha:.3} (band [-1.5, -0.6]: {}), min gaps [{}] kHz (monotone: {})",
            verdict(in_band),
            gaps.join(", "),
            verdict(s.monotone_decreasing)
        ),
    }
}

fn c8_conservation(cons: &mut Conservation) -> Outcome {
    let n_traj = 10_000;
    let spec = chain_spec(2, 2.0 * T_PER_QUBIT_US, GAMMA_MAX_KHZ);
    let cfg = IntegratorConfig::default();
    let tr = evolve_trajectories(&spec, &spec.noise, &cfg, n_traj, 8).unwrap();
    let me = evolve_open(&spec, &spec.noise, &cfg).unwrap();
    cons.open(me.stats.norm_drift);
    let me_dist = readout(&me.state);
    let mut worst_z: f64 = 0.0;
    for (&p, &q) in me_dist.probabilities().iter().zip(tr.distribution.probabilities()) {
        let sigma = (p * (1.0 - p) / n_traj as f64).sqrt();
        let z = if sigma > 0.0 {
            (p - q).abs() / sigma
        } else if p == q {
            0.0
        } else {
            f64::INFINITY
        };
        worst_z = worst_z.max(z);
    }
    let closed_ok = cons.closed_max <= 1e-6;
    let open_ok = cons.open_max <= 1e-6;
    let traj_ok = worst_z <= 3.0;
    Outcome {
        pass: closed_ok && open_ok && traj_ok,
        detail: format!(
            "closed norm drift max {:.1e} over {} runs; trace+leak drift max {:.1e} over {} runs (each <= 1e-6); \
             trajectories vs master equation max {worst_z:.2} sigma at 1e4 trajectories (<= 3)",
            cons.closed_max, cons.closed_runs, cons.open_max, cons.open_runs
        ),
    }
}

fn c9_adiabatic_convergence(cons: &mut Conservation) -> Outcome {
    let cfg = IntegratorConfig::default();
    let target = alternating_pattern(2);
    let infid: Vec<f64> = [35.0, 70.0, 140.0, 280.0]
        .iter()
        .map(|&t| {
            let ev = evolve_closed(&chain_spec(2, t, 0.0), &cfg).unwrap();
            cons.closed(ev.stats.norm_drift);
            1.0 - readout(&ev.state).prob(&target)
        })
        .collect();
    let monotone = infid.windows(2).all(|w| w[1] < w[0]);
    let last = infid[3];
    Outcome {
        pass: monotone && last < 1e-3,
        detail: format!(
            "infidelity at T = 35/70/140/280 us: {} (monotone: {}, final < 1e-3: {})",
            infid.iter().map(|x| format!("{x:.2e}")).collect::<Vec<_>>().join(", "),
            verdict(monotone),
            verdict(last < 1e-3)
        ),
    }
}

fn c10_determinism() -> Outcome {
    let base = r#"{
        "mode": "anneal", "seed": 11,
        "problem": {"benchmark_chain": {"n": 3, "coupling_khz": 470, "delta_e_total_khz": 118.5}},
        "schedule": {"b_x_khz": 470, "t_total_us": 52.5},
        "noise": {"gamma_max_khz": 1.0},
        "method": "METHOD", "trajectories": {"n_traj": 2000}
    }"#;
    let dir = tempfile::tempdir().unwrap();
    let mut mismatches = Vec::new();
    for method in ["master_equation", "trajectories"] {
        let cfg = ExperimentConfig::from_json(&base.replace("METHOD", method)).unwrap();
        let bytes: Vec<Vec<u8>> = [1, 4]
            .iter()
            .map(|&threads| {
                let out = dir.path().join(format!("{method}-{threads}"));
                let opts = RunOptions { threads: Some(threads), plot_data: false };
                run(&cfg, &out, &opts).unwrap();
                std::fs::read(out.join("results.json")).unwrap()
            })
            .collect();
        if bytes[0] != bytes[1] {
            mismatches.push(method);
        }
    }
    Outcome {
        pass: mismatches.is_empty(),
        detail: if mismatches.is_empty() {
            "results.json byte-identical at 1 and 4 threads (master equation and trajectories)".into()
        } else {
            format!("results.json differs across thread counts for {mismatches:?}")
        },
    }
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "yes"
    } else {
        "no"
    }
}

fn timed(id: u32, budget: Option<Duration>, f: impl FnOnce() -> Outcome) -> (u32, bool, String) {
    let start = Instant::now();
    let out = f();
    let elapsed = start.elapsed();
    let in_time = budget.is_none_or(|b| elapsed <= b);
    let pass = out.pass && in_time;
    let budget_note = match budget {
        Some(b) => format!("{:.2} s of {:.0} s budget", elapsed.as_secs_f64(), b.as_secs_f64()),
        None => format!("{:.2} s", elapsed.as_secs_f64()),
    };
    let line = format!("criterion {id:>2}: {} - {} [{budget_note}]", if pass { "PASS" } else { "FAIL" }, out.detail);
    (id, pass, line)
}

fn main() {
    let mut cons = Conservation::default();
    let secs = |s| Some(Duration::from_secs(s));
    // criterion 8 aggregates drifts from the other runs, so it goes last
    let mut results = [
        timed(1, secs(1), c1_closed_form_oracle),
        timed(2, None, c2_perturbative_limit),
        timed(3, None, c3_admixture_and_scattering),
        timed(4, secs(10), || c4_two_qubit_benchmark(&mut cons)),
        timed(5, None, || c5_larger_benchmarks(&mut cons)),
        timed(6, secs(300), || c6_random_instances(&mut cons)),
        timed(7, secs(60), c7_gap_scaling),
        timed(9, None, || c9_adiabatic_convergence(&mut cons)),
        timed(8, None, || c8_conservation(&mut cons)),
        timed(10, None, c10_determinism),
    ];
    results.sort_by_key(|r| r.0);
    for (_, _, line) in &results {
        println!("{line}");
    }
    let failed = results.iter().filter(|r| !r.1).count();
    println!("acceptance: {} of {} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
