//! Rydberg-dressed pair interaction.
//!
//! A ground-state atom `|g>` is off-resonantly coupled to a Rydberg level
//! `|r>` with Rabi frequency `omega` and detuning `delta` (MHz, rotating
//! frame, `H_1 = [[0, omega/2], [omega/2, -delta]]`). Two atoms coupled in
//! the symmetric subspace `{|gg>, |bright>, |rr>}` see
//!
//! ```text
//!        | 0          omega/√2     0              |
//! H_2 =  | omega/√2   -delta       omega/√2       |
//!        | 0          omega/√2     -2 delta + V   |
//! ```
//!
//! with `V` the dipole-dipole shift of the doubly excited level. The
//! entangling shift is `J = E_2 - 2 E_1`, where `E_1` and `E_2` are the
//! dressed energies adiabatically connected to `|g>` and `|gg>`. Under
//! perfect blockade (`V = ∞`) the `|rr>` level drops out and
//!
//! ```text
//! J = ½ (Δ + √(Δ² + 2Ω²) − 2 √(Δ² + Ω²))          (Δ > 0)
//! ```
//!
//! which is negative for blue detuning and reduces to `−Ω⁴ / (8Δ³)` when
//! `|Ω/Δ| ≪ 1`.

use std::io::Write;

use nalgebra::{Matrix2, Matrix3};
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::units::KHZ_PER_MHZ;

const EIGEN_EPS: f64 = 1e-15;
const EIGEN_MAX_ITER: usize = 500;

/// Doubly-excited level shift.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Blockade {
    /// `V_dd = +∞`: the pair never holds two Rydberg excitations.
    Perfect,
    /// Finite shift in MHz.
    Finite(f64),
}

impl Blockade {
    pub fn as_mhz(&self) -> f64 {
        match self {
            Blockade::Perfect => f64::INFINITY,
            Blockade::Finite(v) => *v,
        }
    }
}

impl Serialize for Blockade {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Blockade::Perfect => s.serialize_str("inf"),
            Blockade::Finite(v) => s.serialize_f64(*v),
        }
    }
}

impl<'de> Deserialize<'de> for Blockade {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Number(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Number(v) if v.is_finite() => Ok(Blockade::Finite(v)),
            Raw::Text(s) if matches!(s.as_str(), "inf" | "infinity" | "perfect") => Ok(Blockade::Perfect),
            _ => Err(serde::de::Error::custom("blockade shift must be a finite number of MHz or \"inf\"")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DressingParams {
    pub omega_mhz: f64,
    /// Laser minus atomic frequency; positive is blue detuning.
    pub delta_mhz: f64,
    /// Rydberg linewidth `Γ_r / 2π`.
    #[serde(default)]
    pub gamma_line_khz: f64,
    #[serde(default = "perfect_blockade")]
    pub vdd_mhz: Blockade,
}

fn perfect_blockade() -> Blockade {
    Blockade::Perfect
}

impl DressingParams {
    pub fn perfect(omega_mhz: f64, delta_mhz: f64, gamma_line_khz: f64) -> Self {
        DressingParams { omega_mhz, delta_mhz, gamma_line_khz, vdd_mhz: Blockade::Perfect }
    }

    pub fn with_blockade(self, vdd_mhz: Blockade) -> Self {
        DressingParams { vdd_mhz, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.omega_mhz > 0.0 && self.omega_mhz.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "Rabi frequency must be positive, got {} MHz",
                self.omega_mhz
            )));
        }
        if !self.delta_mhz.is_finite() {
            return Err(Error::InvalidParameter("detuning must be finite".into()));
        }
        if !(self.gamma_line_khz >= 0.0 && self.gamma_line_khz.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "linewidth must be non-negative, got {} kHz",
                self.gamma_line_khz
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DressedPairResult {
    /// `J = pair_light_shift - 2 single_light_shift` (MHz).
    pub j_coupling_mhz: f64,
    pub single_light_shift_mhz: f64,
    pub pair_light_shift_mhz: f64,
    /// Rydberg population of the single-atom dressed ground state.
    pub admixture_single: f64,
    /// Bright-state population of the dressed pair ground state.
    pub admixture_pair: f64,
    /// Expected number of Rydberg excitations in the dressed pair state
    /// (bright population plus twice the `|rr>` population).
    pub pair_rydberg_population: f64,
    /// `γ_r / 2π = pair_rydberg_population * Γ_r / 2π` (kHz).
    pub scattering_rate_khz: f64,
    /// `|J| / γ_r`; infinite when the linewidth is zero.
    pub kappa: f64,
    /// Distance from the connected pair level to the nearest other pair
    /// level (MHz); `√(2Ω² + Δ²)` under perfect blockade.
    pub dressed_gap_mhz: f64,
}

/// Closed-form `J` under perfect blockade.
///
/// Evaluated as `−sgn(Δ) Ω⁴ / ((a + b)(a + |Δ|)(b + |Δ|))` with
/// `a = √(Δ² + Ω²)`, `b = √(Δ² + 2Ω²)`, which is algebraically identical to
/// the half-sum form but free of cancellation. For red detuning the
/// adiabatically connected branch flips sign; `Δ = 0` uses the blue branch
/// so the function is total.
pub fn j_closed_form(p: &DressingParams) -> f64 {
    let o2 = p.omega_mhz * p.omega_mhz;
    let d = p.delta_mhz.abs();
    let a = (d * d + o2).sqrt();
    let b = (d * d + 2.0 * o2).sqrt();
    if o2 == 0.0 {
        return 0.0;
    }
    let sign = if p.delta_mhz >= 0.0 { -1.0 } else { 1.0 };
    sign * o2 * o2 / ((a + b) * (a + d) * (b + d))
}

/// Weak-dressing approximation `−Ω⁴ / (8Δ³)`.
pub fn j_perturbative(p: &DressingParams) -> f64 {
    -p.omega_mhz.powi(4) / (8.0 * p.delta_mhz.powi(3))
}

/// Dressed energy and eigenvector of an irreducible symmetric tridiagonal
/// ladder, following the level adiabatically connected to bare level 0.
struct Connected {
    energy: f64,
    /// Normalised populations of the bare levels.
    populations: Vec<f64>,
    gap: f64,
}

/// `diag[0]` must be the reference level (zero for both ladders used here).
fn connected_level(diag: &[f64], off: &[f64]) -> Result<Connected> {
    let m = diag.len();
    let scale = diag.iter().chain(off).fold(0.0_f64, |s, x| s.max(x.abs()));
    let tie = 1e-12 * scale;
    let mut rank = 0;
    for &d in &diag[1..] {
        if (d - diag[0]).abs() <= tie {
            return Err(Error::AmbiguousConnection(format!(
                "bare level {d} MHz is degenerate with the ground level {} MHz",
                diag[0]
            )));
        }
        if d < diag[0] {
            rank += 1;
        }
    }

    let mut eigenvalues = match m {
        2 => {
            let h = Matrix2::new(diag[0], off[0], off[0], diag[1]);
            h.try_symmetric_eigen(EIGEN_EPS, EIGEN_MAX_ITER).map(|e| e.eigenvalues.iter().copied().collect::<Vec<_>>())
        }
        3 => {
            let h = Matrix3::new(diag[0], off[0], 0.0, off[0], diag[1], off[1], 0.0, off[1], diag[2]);
            h.try_symmetric_eigen(EIGEN_EPS, EIGEN_MAX_ITER).map(|e| e.eigenvalues.iter().copied().collect::<Vec<_>>())
        }
        _ => unreachable!("ladders have two or three levels"),
    }
    .ok_or_else(|| Error::Eigensolver("symmetric eigensolver did not converge".into()))?;
    if eigenvalues.iter().any(|e| !e.is_finite()) {
        return Err(Error::Eigensolver("non-finite eigenvalue".into()));
    }
    eigenvalues.sort_by(f64::total_cmp);

    // Newton refinement on the continued-fraction secular function
    //   F(E) = E - d0 - c1^2 / (E - d1 - c2^2 / (E - d2))
    // restores full relative precision when E is small compared with the
    // matrix scale (weak dressing).
    let tail = |e: f64| -> (f64, f64) {
        // returns g(E) = E - d1 - c2^2/(E - d2) and g'(E)
        if m == 3 {
            let r = e - diag[2];
            (e - diag[1] - off[1] * off[1] / r, 1.0 + off[1] * off[1] / (r * r))
        } else {
            (e - diag[1], 1.0)
        }
    };
    let mut e = eigenvalues[rank];
    for _ in 0..60 {
        let (g, dg) = tail(e);
        let f = e - diag[0] - off[0] * off[0] / g;
        let df = 1.0 + off[0] * off[0] * dg / (g * g);
        let step = f / df;
        if !step.is_finite() {
            return Err(Error::Eigensolver("secular refinement diverged".into()));
        }
        e -= step;
        if step.abs() <= 2.0 * f64::EPSILON * e.abs() || f == 0.0 {
            break;
        }
    }
    let lo = if rank > 0 { eigenvalues[rank - 1] } else { f64::NEG_INFINITY };
    let hi = eigenvalues.get(rank + 1).copied().unwrap_or(f64::INFINITY);
    if !(e > lo && e < hi) {
        return Err(Error::Eigensolver(format!("refined level {e} left its bracket ({lo}, {hi})")));
    }

    // eigenvector with v0 = 1, built from the far end to avoid E - d0
    let (g, _) = tail(e);
    let v1 = off[0] / g;
    let mut v = vec![1.0, v1];
    if m == 3 {
        v.push(off[1] * v1 / (e - diag[2]));
    }
    let norm: f64 = v.iter().map(|x| x * x).sum();
    let populations = v.iter().map(|x| x * x / norm).collect();
    let gap = (e - lo).min(hi - e);
    Ok(Connected { energy: e, populations, gap })
}

/// Numerically diagonalises the single-atom and pair ladders.
pub fn diagonalize_pair(p: &DressingParams) -> Result<DressedPairResult> {
    p.validate()?;
    let omega = p.omega_mhz;
    let delta = p.delta_mhz;

    let single = connected_level(&[0.0, -delta], &[omega / 2.0])?;
    let c = omega / std::f64::consts::SQRT_2;
    let pair = match p.vdd_mhz {
        Blockade::Perfect => connected_level(&[0.0, -delta], &[c])?,
        Blockade::Finite(v) => connected_level(&[0.0, -delta, -2.0 * delta + v], &[c, c])?,
    };

    let admixture_pair = pair.populations[1];
    let doubly = pair.populations.get(2).copied().unwrap_or(0.0);
    let pair_rydberg_population = admixture_pair + 2.0 * doubly;
    let j = pair.energy - 2.0 * single.energy;
    let (scattering_rate_khz, kappa) = merit(j, pair_rydberg_population, p.gamma_line_khz);
    Ok(DressedPairResult {
        j_coupling_mhz: j,
        single_light_shift_mhz: single.energy,
        pair_light_shift_mhz: pair.energy,
        admixture_single: single.populations[1],
        admixture_pair,
        pair_rydberg_population,
        scattering_rate_khz,
        kappa,
        dressed_gap_mhz: pair.gap,
    })
}

fn merit(j_mhz: f64, rydberg_population: f64, gamma_line_khz: f64) -> (f64, f64) {
    let gamma = rydberg_population * gamma_line_khz;
    let kappa = if gamma > 0.0 { j_mhz.abs() * KHZ_PER_MHZ / gamma } else { f64::INFINITY };
    (gamma, kappa)
}

/// Pair scattering rate `γ_r / 2π` (kHz) and figure of merit `κ = |J| / γ_r`.
pub fn scattering_and_merit(p: &DressingParams) -> Result<(f64, f64)> {
    let r = diagonalize_pair(p)?;
    Ok((r.scattering_rate_khz, r.kappa))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailRegime {
    /// Resonant dipole-dipole, `r^-3`.
    Forster,
    /// Second-order dipole-dipole, `r^-6`.
    VanDerWaals,
}

impl TailRegime {
    pub fn exponent(&self) -> i32 {
        match self {
            TailRegime::Forster => 3,
            TailRegime::VanDerWaals => 6,
        }
    }
}

/// `J(r)`: flat inside the blockade radius `r0`, power-law tail outside.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TailModel {
    pub regime: TailRegime,
    pub reference_distance_um: f64,
    pub reference_coupling_mhz: f64,
}

pub fn j_at_distance(tail: &TailModel, r_um: f64) -> Result<f64> {
    if !(tail.reference_distance_um > 0.0 && tail.reference_distance_um.is_finite()) {
        return Err(Error::InvalidParameter("reference distance must be positive".into()));
    }
    if !(r_um > 0.0 && r_um.is_finite()) {
        return Err(Error::InvalidParameter(format!("distance must be positive, got {r_um} um")));
    }
    if r_um <= tail.reference_distance_um {
        return Ok(tail.reference_coupling_mhz);
    }
    let ratio = tail.reference_distance_um / r_um;
    Ok(tail.reference_coupling_mhz * ratio.powi(tail.regime.exponent()))
}

/// One sweep axis: explicit values or an inclusive uniform range.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Axis {
    Values(Vec<f64>),
    Range { start: f64, stop: f64, points: usize },
}

impl Axis {
    pub fn values(&self) -> Result<Vec<f64>> {
        let v = match self {
            Axis::Values(v) => v.clone(),
            Axis::Range { start, stop, points } => match points {
                0 => Vec::new(),
                1 => vec![*start],
                _ => (0..*points).map(|k| start + (stop - start) * k as f64 / (*points - 1) as f64).collect(),
            },
        };
        if v.is_empty() {
            return Err(Error::InvalidParameter("sweep axis is empty".into()));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter("sweep axis values must be finite".into()));
        }
        Ok(v)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepGrid {
    pub omega_mhz: Axis,
    pub delta_mhz: Axis,
    #[serde(default = "default_vdd_axis")]
    pub vdd_mhz: Vec<Blockade>,
    #[serde(default)]
    pub gamma_line_khz: f64,
}

fn default_vdd_axis() -> Vec<Blockade> {
    vec![Blockade::Perfect]
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub params: DressingParams,
    pub result: DressedPairResult,
    pub j_closed_form_mhz: f64,
}

/// Evaluates every grid point (omega-major, then delta, then blockade).
/// The first failing point aborts the sweep and is named in the error.
pub fn sweep(grid: &SweepGrid) -> Result<Vec<SweepRow>> {
    let omegas = grid.omega_mhz.values()?;
    let deltas = grid.delta_mhz.values()?;
    if grid.vdd_mhz.is_empty() {
        return Err(Error::InvalidParameter("blockade axis is empty".into()));
    }
    let mut points = Vec::with_capacity(omegas.len() * deltas.len() * grid.vdd_mhz.len());
    for &o in &omegas {
        for &d in &deltas {
            for &v in &grid.vdd_mhz {
                points.push(DressingParams {
                    omega_mhz: o,
                    delta_mhz: d,
                    gamma_line_khz: grid.gamma_line_khz,
                    vdd_mhz: v,
                });
            }
        }
    }
    points
        .par_iter()
        .map(|p| {
            let result = diagonalize_pair(p).map_err(|e| annotate(e, p))?;
            Ok(SweepRow { params: *p, result, j_closed_form_mhz: j_closed_form(p) })
        })
        .collect()
}

fn annotate(e: Error, p: &DressingParams) -> Error {
    let at = format!(" (omega = {} MHz, delta = {} MHz, vdd = {} MHz)", p.omega_mhz, p.delta_mhz, p.vdd_mhz.as_mhz());
    match e {
        Error::AmbiguousConnection(m) => Error::AmbiguousConnection(m + &at),
        Error::Eigensolver(m) => Error::Eigensolver(m + &at),
        Error::InvalidParameter(m) => Error::InvalidParameter(m + &at),
        other => other,
    }
}

/// Writes sweep rows as CSV. `plot_data` appends the light shifts, dressed
/// gap, pair Rydberg population and closed-form `J`.
pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], out: W, plot_data: bool) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header =
        vec!["omega_mhz", "delta_mhz", "vdd_mhz", "j_mhz", "admixture_single", "admixture_pair", "gamma_khz", "kappa"];
    if plot_data {
        header.extend([
            "single_light_shift_mhz",
            "pair_light_shift_mhz",
            "dressed_gap_mhz",
            "pair_rydberg_population",
            "j_closed_form_mhz",
        ]);
    }
    w.write_record(&header)?;
    for row in rows {
        let r = &row.result;
        let mut rec = vec![
            row.params.omega_mhz,
            row.params.delta_mhz,
            row.params.vdd_mhz.as_mhz(),
            r.j_coupling_mhz,
            r.admixture_single,
            r.admixture_pair,
            r.scattering_rate_khz,
            r.kappa,
        ];
        if plot_data {
            rec.extend([
                r.single_light_shift_mhz,
                r.pair_light_shift_mhz,
                r.dressed_gap_mhz,
                r.pair_rydberg_population,
                row.j_closed_form_mhz,
            ]);
        }
        w.write_record(rec.iter().map(|x| x.to_string()))?;
    }
    w.flush()?;
    Ok(())
}
