//! End-to-end use of the public API: from a QUBO to a scored anneal.

use proptest::prelude::*;
use rydberg_anneal::{
    adiabatic_time_estimate, brute_force_ground, evolve_closed, evolve_open, fidelity_report, qubo_to_ising, readout,
    scan_gap, AnnealSpec, IntegratorConfig, NoiseModel, QuboProblem,
};

/// Minimise `f(x) = -x0 - x1 + 3 x0 x1`: exactly one of the two bits set,
/// and the tie is broken by a small preference for `x1`.
fn two_bit_qubo() -> QuboProblem {
    QuboProblem::new(vec![-100.0, -120.0], vec![vec![0.0, 300.0], vec![300.0, 0.0]]).unwrap()
}

#[test]
fn qubo_minimum_survives_the_ising_mapping_and_the_anneal() {
    let q = two_bit_qubo();
    let p = qubo_to_ising(&q);
    let ground = brute_force_ground(&p).unwrap();
    // x = (0, 1) is the QUBO minimum
    assert_eq!(ground.configuration.qubo_assignment(), vec![0, 1]);
    assert!((q.evaluate(&[0, 1]) - p.total_energy(&ground.configuration)).abs() < 1e-9);

    let mut spec = AnnealSpec::linear(p.clone(), 300.0, 1.0);
    let scan = scan_gap(&spec, 101).unwrap();
    assert!(scan.min_gap > 0.0);
    spec.t_total_us = 10.0 * adiabatic_time_estimate(&spec, 101).unwrap().time_scale_us;
    let ev = evolve_closed(&spec, &IntegratorConfig::default()).unwrap();
    let dist = readout(&ev.state);
    let report = fidelity_report(&dist, &p, 0.999, None).unwrap();
    assert_eq!(report.target, ground.configuration);
    assert_eq!(dist.mode(), ground.configuration);
    assert!(report.success_probability > 0.9, "{}", report.success_probability);
}

#[test]
fn scattering_lowers_success_but_conserves_probability() {
    let p = qubo_to_ising(&two_bit_qubo());
    let spec = AnnealSpec::linear(p.clone(), 300.0, 60.0);
    let cfg = IntegratorConfig::default();
    let target = brute_force_ground(&p).unwrap().configuration;
    let clean = readout(&evolve_closed(&spec, &cfg).unwrap().state).prob(&target);
    let noisy_ev = evolve_open(&spec, &NoiseModel::with_rate(1.0), &cfg).unwrap();
    let noisy = readout(&noisy_ev.state);
    assert!(noisy.prob(&target) < clean);
    assert!((noisy.total() - 1.0).abs() < 1e-9);
    assert!(noisy_ev.state.leaked_mass() > 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    /// Readout is a probability distribution for any rate, profile and split.
    #[test]
    fn readout_is_normalised(gamma in 0.0f64..20.0, split in 0.0f64..=1.0, constant in any::<bool>()) {
        let p = qubo_to_ising(&two_bit_qubo());
        let spec = AnnealSpec::linear(p, 300.0, 10.0);
        let noise = NoiseModel {
            gamma_max_khz: gamma,
            time_profile: if constant {
                rydberg_anneal::TimeProfile::Constant
            } else {
                rydberg_anneal::TimeProfile::Schedule
            },
            readout_split: split,
        };
        let ev = evolve_open(&spec, &noise, &IntegratorConfig::default()).unwrap();
        let d = readout(&ev.state);
        prop_assert!((d.total() - 1.0).abs() < 1e-8);
        prop_assert!(d.probabilities().iter().all(|&x| x >= -1e-12));
    }
}
