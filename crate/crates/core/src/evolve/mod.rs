//! Time evolution under `H(t)`, with and without Rydberg scattering.
//!
//! The coherent part integrates `d psi / dt = -i w H(t) psi` with
//! `w = 2 pi * 1e-3` rad/us per kHz, starting from `|+>^n`.
//!
//! Scattering is modelled as a per-qubit loss channel at rate
//! `gamma_i(t) = 2 pi * gamma_max * profile(t)`. A scattered atom leaves the
//! coherent evolution for good and the whole register is then read out from
//! a snapshot: the other qubits keep the computational-basis statistics they
//! had at the moment of the scatter, and the scattered qubit reads 1 with
//! probability `readout_split`. The master equation tracks this through a
//! leak ledger `S_i[b]`, the accumulated rate of scatters of qubit `i` while
//! the register was in basis state `b`; [`evolve_trajectories`] samples the
//! same process event by event.

mod integrator;
mod open;
mod trajectories;

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::ser::SerializeMap;
use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::hamiltonian::{AnnealSpec, DrivenHamiltonian, Schedule};
use crate::ising::SpinConfiguration;
use crate::units::{khz_to_rad_per_us, rate_khz_to_per_us};

pub use integrator::{Integrator, IntegratorConfig, IntegratorStats, OdeSystem};
pub use open::{evolve_open, MASTER_EQUATION_CAP};
pub use trajectories::{evolve_trajectories, TrajectoryResult};

type C = Complex64;

/// Cs ground state: 7 of the 16 Zeeman sublevels lie in F = 3 (logical 1).
pub const DEFAULT_READOUT_SPLIT: f64 = 7.0 / 16.0;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeProfile {
    /// Rate follows the problem envelope `B(t)`.
    #[default]
    Schedule,
    Constant,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseModel {
    /// Peak per-qubit scattering rate `gamma_r / 2 pi`.
    #[serde(default)]
    pub gamma_max_khz: f64,
    #[serde(default)]
    pub time_profile: TimeProfile,
    /// Probability that a scattered atom reads out as logical 1.
    #[serde(default = "default_split")]
    pub readout_split: f64,
}

fn default_split() -> f64 {
    DEFAULT_READOUT_SPLIT
}

impl Default for NoiseModel {
    fn default() -> Self {
        NoiseModel { gamma_max_khz: 0.0, time_profile: TimeProfile::Schedule, readout_split: DEFAULT_READOUT_SPLIT }
    }
}

impl NoiseModel {
    pub fn with_rate(gamma_max_khz: f64) -> Self {
        NoiseModel { gamma_max_khz, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma_max_khz >= 0.0 && self.gamma_max_khz.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "scattering rate must be non-negative, got {} kHz",
                self.gamma_max_khz
            )));
        }
        if !(0.0..=1.0).contains(&self.readout_split) {
            return Err(Error::InvalidParameter(format!(
                "readout split must lie in [0, 1], got {}",
                self.readout_split
            )));
        }
        Ok(())
    }

    pub fn is_noiseless(&self) -> bool {
        self.gamma_max_khz == 0.0
    }

    /// Per-qubit scattering probability per microsecond at time `t`.
    pub fn rate_per_us(&self, schedule: &Schedule, t: f64) -> f64 {
        let profile = match self.time_profile {
            TimeProfile::Schedule => schedule.envelopes_clamped(t).1,
            TimeProfile::Constant => 1.0,
        };
        rate_khz_to_per_us(self.gamma_max_khz) * profile
    }

    /// `int_0^T gamma_i(t) dt` for one qubit.
    pub fn integrated_rate(&self, schedule: &Schedule) -> f64 {
        let mean = match self.time_profile {
            TimeProfile::Schedule => schedule.mean_problem_envelope(),
            TimeProfile::Constant => 1.0,
        };
        rate_khz_to_per_us(self.gamma_max_khz) * mean * schedule.total_time_us()
    }
}

/// Population that scattered out of the coherent evolution, resolved by the
/// scattering qubit and by the basis state the register was in at the time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeakLedger {
    pub readout_split: f64,
    /// `snapshots[i][b]`: mass removed by scatters of qubit `i` from basis
    /// state `b`.
    pub snapshots: Vec<Vec<f64>>,
}

impl LeakLedger {
    pub fn empty(n: usize, readout_split: f64) -> Self {
        LeakLedger { readout_split, snapshots: vec![vec![0.0; 1 << n]; n] }
    }

    pub fn per_qubit(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.iter().sum()).collect()
    }

    pub fn total(&self) -> f64 {
        self.snapshots.iter().flatten().sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Representation {
    Pure(Vec<C>),
    /// Column-major `dim x dim` density matrix.
    Density(nalgebra::DMatrix<C>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct QuantumState {
    n: usize,
    pub representation: Representation,
    pub ledger: LeakLedger,
}

impl QuantumState {
    pub fn pure(n: usize, amplitudes: Vec<C>) -> Result<Self> {
        if amplitudes.len() != 1 << n {
            return Err(Error::InvalidParameter("amplitude vector length is not 2^n".into()));
        }
        Ok(QuantumState {
            n,
            representation: Representation::Pure(amplitudes),
            ledger: LeakLedger::empty(n, DEFAULT_READOUT_SPLIT),
        })
    }

    /// `|+>^n`, the ground state of the transverse field.
    pub fn plus(n: usize) -> Self {
        let amp = C::new((1.0 / (1usize << n) as f64).sqrt(), 0.0);
        QuantumState::pure(n, vec![amp; 1 << n]).expect("length matches")
    }

    pub fn basis(config: &SpinConfiguration) -> Self {
        let n = config.len();
        let mut amps = vec![C::new(0.0, 0.0); 1 << n];
        amps[config.index()] = C::new(1.0, 0.0);
        QuantumState::pure(n, amps).expect("length matches")
    }

    pub fn n_qubits(&self) -> usize {
        self.n
    }

    /// Computational-basis populations of the coherent part.
    pub fn coherent_populations(&self) -> Vec<f64> {
        match &self.representation {
            Representation::Pure(a) => a.iter().map(|z| z.norm_sqr()).collect(),
            Representation::Density(rho) => (0..rho.nrows()).map(|k| rho[(k, k)].re).collect(),
        }
    }

    /// Norm squared or trace of the coherent part.
    pub fn coherent_weight(&self) -> f64 {
        self.coherent_populations().iter().sum()
    }

    pub fn leaked_mass(&self) -> f64 {
        self.ledger.total()
    }

    /// Coherent weight plus leaked mass; one for an exact evolution.
    pub fn total_probability(&self) -> f64 {
        self.coherent_weight() + self.leaked_mass()
    }
}

/// Probability distribution over logical bitstrings (qubit 0 first).
#[derive(Clone, Debug, PartialEq)]
pub struct Distribution {
    n: usize,
    probs: Vec<f64>,
}

impl Distribution {
    pub fn new(n: usize, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != 1 << n {
            return Err(Error::InvalidParameter("distribution length is not 2^n".into()));
        }
        Ok(Distribution { n, probs })
    }

    pub fn n_qubits(&self) -> usize {
        self.n
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, config: &SpinConfiguration) -> f64 {
        self.probs[config.index()]
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    /// Most likely outcome; ties go to the lowest basis index.
    pub fn mode(&self) -> SpinConfiguration {
        let mut best = 0;
        for (k, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = k;
            }
        }
        SpinConfiguration::from_index(best, self.n)
    }

    pub fn to_map(&self) -> BTreeMap<String, f64> {
        self.probs
            .iter()
            .enumerate()
            .filter(|(_, &p)| p != 0.0)
            .map(|(k, &p)| (SpinConfiguration::from_index(k, self.n).to_string(), p))
            .collect()
    }
}

impl Serialize for Distribution {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let map = self.to_map();
        let mut m = s.serialize_map(Some(map.len()))?;
        for (k, v) in &map {
            m.serialize_entry(k, v)?;
        }
        m.end()
    }
}

/// Logical readout: coherent populations plus the leak ledger, where a
/// scatter of qubit `i` from basis state `b'` reports `b'` with bit `i`
/// replaced by 1 (probability `readout_split`) or 0.
pub fn readout(state: &QuantumState) -> Distribution {
    let n = state.n;
    let mut probs = state.coherent_populations();
    let split = state.ledger.readout_split;
    for (i, snap) in state.ledger.snapshots.iter().enumerate() {
        let bit = 1usize << i;
        for (b, p) in probs.iter_mut().enumerate() {
            let w = if b & bit != 0 { split } else { 1.0 - split };
            *p += w * (snap[b] + snap[b ^ bit]);
        }
    }
    Distribution { n, probs }
}

/// State plus integrator diagnostics.
#[derive(Clone, Debug)]
pub struct Evolution {
    pub state: QuantumState,
    pub stats: IntegratorStats,
}

/// `-i w H(t) psi - (Gamma(t) / 2) psi`, the loss term only when scattering
/// is on.
pub(crate) struct Schrodinger<'a> {
    pub ham: &'a DrivenHamiltonian,
    pub omega: f64,
    pub noise: Option<NoiseModel>,
}

impl<'a> Schrodinger<'a> {
    pub fn new(ham: &'a DrivenHamiltonian, noise: &NoiseModel) -> Self {
        Schrodinger { ham, omega: khz_to_rad_per_us(1.0), noise: (!noise.is_noiseless()).then_some(*noise) }
    }

    pub fn total_loss_rate(&self, t: f64) -> f64 {
        self.noise.map_or(0.0, |nm| self.ham.n_qubits() as f64 * nm.rate_per_us(self.ham.schedule(), t))
    }
}

impl OdeSystem for Schrodinger<'_> {
    fn rhs(&self, t: f64, y: &[C], dy: &mut [C]) {
        self.ham.apply(t, y, dy);
        let w = self.omega;
        for z in dy.iter_mut() {
            *z = C::new(w * z.im, -w * z.re);
        }
        if self.noise.is_some() {
            let half = 0.5 * self.total_loss_rate(t);
            for (z, x) in dy.iter_mut().zip(y) {
                *z -= x * half;
            }
        }
    }
}

/// Closed-system anneal from `|+>^n` over `[0, T]`.
pub fn evolve_closed(spec: &AnnealSpec, cfg: &IntegratorConfig) -> Result<Evolution> {
    let ham = DrivenHamiltonian::new(spec)?;
    let sys = Schrodinger::new(&ham, &NoiseModel::default());
    let n = spec.n();
    let psi0 = match QuantumState::plus(n).representation {
        Representation::Pure(a) => a,
        Representation::Density(_) => unreachable!(),
    };
    let mut it = Integrator::new(&sys, 0.0, psi0, *cfg)?.with_horizon(spec.t_total_us);
    it.integrate_to(spec.t_total_us)?;
    let (psi, mut stats) = it.into_state();
    let mut state = QuantumState::pure(n, psi)?;
    state.ledger.readout_split = spec.noise.readout_split;
    stats.norm_drift = (state.coherent_weight() - 1.0).abs();
    Ok(Evolution { state, stats })
}
