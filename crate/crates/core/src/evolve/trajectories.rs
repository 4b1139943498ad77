use std::collections::BTreeMap;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::{Distribution, Integrator, IntegratorConfig, IntegratorStats, NoiseModel, QuantumState, Schrodinger};
use crate::error::{Error, Result};
use crate::hamiltonian::{AnnealSpec, DrivenHamiltonian};
use crate::ising::SpinConfiguration;

type C = Complex64;

#[derive(Clone, Debug, Serialize)]
pub struct TrajectoryResult {
    pub n_traj: usize,
    pub seed: u64,
    /// Trajectories in which a scattering event occurred.
    pub jumps: u64,
    pub counts: BTreeMap<String, u64>,
    pub distribution: Distribution,
    pub stats: IntegratorStats,
    /// Normalised state at `T` conditioned on no scattering.
    #[serde(skip)]
    pub no_jump_state: QuantumState,
}

fn norm_sqr(psi: &[C]) -> f64 {
    psi.iter().map(|z| z.norm_sqr()).sum()
}

/// Index drawn with probability proportional to `|psi_b|^2`.
fn sample_basis(psi: &[C], rng: &mut ChaCha8Rng) -> usize {
    let total = norm_sqr(psi);
    let target = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for (b, z) in psi.iter().enumerate() {
        acc += z.norm_sqr();
        if acc > target {
            return b;
        }
    }
    // rounding left target at the very top; take the last populated state
    psi.iter().rposition(|z| z.norm_sqr() > 0.0).unwrap_or(0)
}

/// Monte Carlo unravelling of the scattering model.
///
/// Each trajectory draws `u ~ U(0, 1)` and follows the no-jump evolution
/// `-i w H psi - (Gamma / 2) psi` until `|psi|^2` falls below `u`; the jump
/// time is located by bisection within the accepted step. The scattering
/// qubit is chosen in proportion to its rate, the remaining qubits are read
/// from `|psi|^2` at the jump and the scattered one from the readout split.
/// Since a scatter ends the coherent evolution, all trajectories share one
/// no-jump integration. Trajectory `k` uses stream `k` of a ChaCha8
/// generator seeded with `seed`, so results do not depend on thread count.
pub fn evolve_trajectories(
    spec: &AnnealSpec,
    noise: &NoiseModel,
    cfg: &IntegratorConfig,
    n_traj: usize,
    seed: u64,
) -> Result<TrajectoryResult> {
    if n_traj == 0 {
        return Err(Error::InvalidParameter("need at least one trajectory".into()));
    }
    noise.validate()?;
    let n = spec.n();
    let ham = DrivenHamiltonian::new(spec)?;
    let sys = Schrodinger::new(&ham, noise);
    let noisy = sys.noise.is_some();
    let t_end = spec.t_total_us;

    let mut rngs: Vec<ChaCha8Rng> = (0..n_traj)
        .map(|k| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            r.set_stream(k as u64);
            r
        })
        .collect();
    let thresholds: Vec<f64> = rngs.iter_mut().map(|r| r.random::<f64>()).collect();
    // trajectories in the order their thresholds are crossed
    let mut order: Vec<usize> = (0..n_traj).collect();
    order.sort_by(|&a, &b| thresholds[b].total_cmp(&thresholds[a]).then(a.cmp(&b)));

    let psi0 = match QuantumState::plus(n).representation {
        super::Representation::Pure(a) => a,
        super::Representation::Density(_) => unreachable!(),
    };
    let mut outcomes: Vec<Option<usize>> = vec![None; n_traj];
    let mut next = 0;
    let mut it = Integrator::new(&sys, 0.0, psi0, *cfg)?.with_horizon(t_end);
    let split = noise.readout_split;

    while it.t() < t_end {
        let start = noisy.then(|| (it.t(), it.y().to_vec(), it.dy().to_vec()));
        it.advance(t_end)?;
        let Some((t0, y0, f0)) = start else { continue };
        let norm_now = norm_sqr(it.y());
        let first = next;
        while next < n_traj && thresholds[order[next]] > norm_now {
            next += 1;
        }
        if first == next {
            continue;
        }
        let h = it.t() - t0;
        let group = &order[first..next];
        let results: Vec<(usize, usize)> = group
            .par_iter()
            .map(|&k| {
                let u = thresholds[k];
                let (mut lo, mut hi) = (0.0, h);
                let mut psi_hi = it.y().to_vec();
                for _ in 0..60 {
                    if hi - lo <= 1e-12 * t_end {
                        break;
                    }
                    let mid = 0.5 * (lo + hi);
                    let psi = it.single_step(t0, &y0, &f0, mid);
                    if norm_sqr(&psi) < u {
                        hi = mid;
                        psi_hi = psi;
                    } else {
                        lo = mid;
                    }
                }
                let mut rng = rngs[k].clone();
                // all qubits scatter at the same rate
                let qubit = rng.random_range(0..n);
                let mut b = sample_basis(&psi_hi, &mut rng);
                if rng.random::<f64>() < split {
                    b |= 1 << qubit;
                } else {
                    b &= !(1 << qubit);
                }
                (k, b)
            })
            .collect();
        for (k, b) in results {
            outcomes[k] = Some(b);
        }
    }

    let (psi_t, mut stats) = it.into_state();
    let survivors = &order[next..];
    let tail: Vec<(usize, usize)> = survivors
        .par_iter()
        .map(|&k| {
            let mut rng = rngs[k].clone();
            (k, sample_basis(&psi_t, &mut rng))
        })
        .collect();
    for (k, b) in tail {
        outcomes[k] = Some(b);
    }

    let dim = 1usize << n;
    let mut hist = vec![0u64; dim];
    for b in outcomes.iter().map(|o| o.expect("every trajectory resolved")) {
        hist[b] += 1;
    }
    let counts = hist
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0)
        .map(|(b, &c)| (SpinConfiguration::from_index(b, n).to_string(), c))
        .collect();
    let distribution = Distribution::new(n, hist.iter().map(|&c| c as f64 / n_traj as f64).collect())?;

    let survival = norm_sqr(&psi_t);
    let expected = (-(n as f64) * noise.integrated_rate(ham.schedule())).exp();
    stats.norm_drift = (survival - if noisy { expected } else { 1.0 }).abs();
    let normalised: Vec<C> = if noisy {
        let scale = survival.sqrt();
        psi_t.iter().map(|z| z / scale).collect()
    } else {
        psi_t
    };
    let mut no_jump_state = QuantumState::pure(n, normalised)?;
    no_jump_state.ledger.readout_split = split;

    Ok(TrajectoryResult { n_traj, seed, jumps: next as u64, counts, distribution, stats, no_jump_state })
}
