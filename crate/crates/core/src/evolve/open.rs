use nalgebra::DMatrix;
use num_complex::Complex64;

use super::{Evolution, Integrator, IntegratorConfig, LeakLedger, OdeSystem, QuantumState, Representation};
use crate::error::{Error, Result};
use crate::hamiltonian::{AnnealSpec, DrivenHamiltonian};
use crate::units::khz_to_rad_per_us;

type C = Complex64;

/// Largest register evolved as a density matrix (128 x 128).
pub const MASTER_EQUATION_CAP: usize = 7;

/// Packed state: column-major `rho` (`dim^2` entries) followed by the leak
/// ledger `S_i[b]` (`n * dim` entries, real parts used).
struct MasterEquation<'a> {
    ham: &'a DrivenHamiltonian,
    noise: super::NoiseModel,
    omega: f64,
    n: usize,
    dim: usize,
}

impl OdeSystem for MasterEquation<'_> {
    fn rhs(&self, t: f64, y: &[C], dy: &mut [C]) {
        let dim = self.dim;
        let rho = &y[..dim * dim];
        let (drho, dledger) = dy.split_at_mut(dim * dim);

        // M = H rho, column by column
        for col in 0..dim {
            self.ham.apply(t, &rho[col * dim..(col + 1) * dim], &mut drho[col * dim..(col + 1) * dim]);
        }
        let gamma_q = self.noise.rate_per_us(self.ham.schedule(), t);
        let gamma_total = self.n as f64 * gamma_q;
        let w = self.omega;
        // d rho = -i w (M - M^dagger) - Gamma rho, filled one (r, c) / (c, r)
        // pair at a time because both entries read M_rc and M_cr
        for c in 0..dim {
            for r in 0..=c {
                let m_rc = drho[c * dim + r];
                let m_cr = drho[r * dim + c];
                let comm_rc = m_rc - m_cr.conj();
                let v_rc = C::new(w * comm_rc.im, -w * comm_rc.re) - rho[c * dim + r] * gamma_total;
                if r == c {
                    drho[c * dim + r] = v_rc;
                } else {
                    let comm_cr = m_cr - m_rc.conj();
                    let v_cr = C::new(w * comm_cr.im, -w * comm_cr.re) - rho[r * dim + c] * gamma_total;
                    drho[c * dim + r] = v_rc;
                    drho[r * dim + c] = v_cr;
                }
            }
        }
        for q in 0..self.n {
            for b in 0..dim {
                dledger[q * dim + b] = C::new(gamma_q * rho[b * dim + b].re, 0.0);
            }
        }
    }
}

/// Master-equation anneal from `|+><+|` with per-qubit scattering into the
/// leak ledger. The final density matrix is checked for Hermiticity and
/// positivity, and `trace + leaked` for conservation.
pub fn evolve_open(spec: &AnnealSpec, noise: &super::NoiseModel, cfg: &IntegratorConfig) -> Result<Evolution> {
    noise.validate()?;
    let n = spec.n();
    if n > MASTER_EQUATION_CAP {
        return Err(Error::SizeCap { n, cap: MASTER_EQUATION_CAP });
    }
    let ham = DrivenHamiltonian::new(spec)?;
    let dim = 1usize << n;
    let sys = MasterEquation { ham: &ham, noise: *noise, omega: khz_to_rad_per_us(1.0), n, dim };
    let mut y0 = vec![C::new(0.0, 0.0); dim * dim + n * dim];
    for z in &mut y0[..dim * dim] {
        *z = C::new(1.0 / dim as f64, 0.0);
    }
    let mut it = Integrator::new(&sys, 0.0, y0, *cfg)?.with_horizon(spec.t_total_us);
    it.integrate_to(spec.t_total_us)?;
    let (y, mut stats) = it.into_state();

    let rho = DMatrix::from_column_slice(dim, dim, &y[..dim * dim]);
    let ledger = LeakLedger {
        readout_split: noise.readout_split,
        snapshots: (0..n)
            .map(|q| y[dim * dim + q * dim..dim * dim + (q + 1) * dim].iter().map(|z| z.re).collect())
            .collect(),
    };

    let tol = 10.0 * cfg.rel_tol + dim as f64 * cfg.abs_tol;
    let hermiticity = (&rho - rho.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
    if hermiticity > tol {
        return Err(Error::Positivity { min_eigenvalue: -hermiticity });
    }
    let herm = (&rho + rho.adjoint()) * C::new(0.5, 0.0);
    let min_eig = herm
        .clone()
        .try_symmetric_eigen(1e-14, 10_000)
        .ok_or_else(|| Error::Eigensolver("density-matrix spectrum did not converge".into()))?
        .eigenvalues
        .min();
    if min_eig < -tol {
        return Err(Error::Positivity { min_eigenvalue: min_eig });
    }

    let state = QuantumState { n, representation: Representation::Density(rho), ledger };
    stats.norm_drift = (state.total_probability() - 1.0).abs();
    Ok(Evolution { state, stats })
}
