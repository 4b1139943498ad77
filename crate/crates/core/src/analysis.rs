//! Spectral diagnostics along the schedule and success statistics.

use std::io::Write;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::evolve::Distribution;
use crate::hamiltonian::{AnnealSpec, DrivenHamiltonian};
use crate::ising::{brute_force_ground, IsingProblem, SpinConfiguration};
use crate::units::khz_to_rad_per_us;

/// Largest register for dense spectral analysis.
pub const ANALYSIS_CAP: usize = 10;

pub const DEFAULT_GRID_POINTS: usize = 201;

const GOLDEN: f64 = 0.618_033_988_749_894_9;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GapScan {
    /// Grid times including the refined point, sorted (us).
    pub times: Vec<f64>,
    /// `E_1 - E_0` at each time (kHz).
    pub gaps: Vec<f64>,
    pub ground_energies: Vec<f64>,
    pub first_excited_energies: Vec<f64>,
    /// Index of the golden-section point within `times`, if one was added.
    pub refined_index: Option<usize>,
    pub min_gap: f64,
    pub min_gap_time: f64,
}

fn spectrum(ham: &DrivenHamiltonian, t: f64) -> Result<nalgebra::SymmetricEigen<f64, nalgebra::Dyn>> {
    let h: DMatrix<f64> = ham.operator_at(t)?.to_dense();
    h.try_symmetric_eigen(1e-15, 10_000).ok_or_else(|| Error::Eigensolver(format!("no convergence at t = {t} us")))
}

/// Lowest two eigenvalues of `H(t)`.
fn lowest_pair(ham: &DrivenHamiltonian, t: f64) -> Result<(f64, f64)> {
    let eig = spectrum(ham, t)?;
    let mut ev: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    Ok((ev[0], ev[1]))
}

fn check_size(spec: &AnnealSpec) -> Result<()> {
    if spec.n() > ANALYSIS_CAP {
        return Err(Error::SizeCap { n: spec.n(), cap: ANALYSIS_CAP });
    }
    Ok(())
}

/// Scans the lowest gap of `H(t)` over a uniform grid, then refines the
/// minimum by golden-section search between the neighbours of the coarse
/// minimum and inserts the refined point. Gaps below `1e-12` of the
/// spectral scale are reported as exact crossings (zero).
pub fn scan_gap(spec: &AnnealSpec, grid_points: usize) -> Result<GapScan> {
    check_size(spec)?;
    if grid_points < 2 {
        return Err(Error::InvalidParameter("gap scan needs at least two grid points".into()));
    }
    let ham = DrivenHamiltonian::new(spec)?;
    let total = spec.t_total_us;
    let scale = spec.n() as f64 * spec.b_x_khz + spec.problem.scale();
    let crossing_tol = 1e-12 * scale;
    let clean = |e0: f64, e1: f64| {
        let g = e1 - e0;
        if g <= crossing_tol {
            0.0
        } else {
            g
        }
    };

    let mut times: Vec<f64> = (0..grid_points).map(|k| total * (k as f64 / (grid_points - 1) as f64)).collect();
    let pairs = times.par_iter().map(|&t| lowest_pair(&ham, t)).collect::<Result<Vec<_>>>()?;
    let mut e0: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let mut e1: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let mut gaps: Vec<f64> = pairs.iter().map(|&(a, b)| clean(a, b)).collect();

    let coarse = argmin(&gaps);
    let mut refined_index = None;
    if gaps[coarse] > 0.0 {
        let lo = times[coarse.saturating_sub(1)];
        let hi = times[(coarse + 1).min(grid_points - 1)];
        let gap_at = |t: f64| lowest_pair(&ham, t).map(|(a, b)| clean(a, b));
        let (mut a, mut b) = (lo, hi);
        let mut x1 = b - GOLDEN * (b - a);
        let mut x2 = a + GOLDEN * (b - a);
        let mut f1 = gap_at(x1)?;
        let mut f2 = gap_at(x2)?;
        for _ in 0..200 {
            if b - a <= 1e-10 * total {
                break;
            }
            if f1 < f2 {
                b = x2;
                x2 = x1;
                f2 = f1;
                x1 = b - GOLDEN * (b - a);
                f1 = gap_at(x1)?;
            } else {
                a = x1;
                x1 = x2;
                f1 = f2;
                x2 = a + GOLDEN * (b - a);
                f2 = gap_at(x2)?;
            }
        }
        let t_star = 0.5 * (a + b);
        let (p0, p1) = lowest_pair(&ham, t_star)?;
        let g = clean(p0, p1);
        if g < gaps[coarse] {
            let at = times.partition_point(|&t| t < t_star);
            if times.get(at) != Some(&t_star) {
                times.insert(at, t_star);
                e0.insert(at, p0);
                e1.insert(at, p1);
                gaps.insert(at, g);
                refined_index = Some(at);
            }
        }
    }
    let k = argmin(&gaps);
    Ok(GapScan {
        min_gap: gaps[k],
        min_gap_time: times[k],
        times,
        gaps,
        ground_energies: e0,
        first_excited_energies: e1,
        refined_index,
    })
}

fn argmin(v: &[f64]) -> usize {
    let mut best = 0;
    for (k, &x) in v.iter().enumerate() {
        if x < v[best] {
            best = k;
        }
    }
    best
}

/// Writes one CSV row per grid time. `plot_data` adds the schedule
/// fraction, both energies and a refined-point marker.
pub fn write_gap_csv<W: Write>(scan: &GapScan, out: W, plot_data: bool) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["time_us", "gap_khz"];
    if plot_data {
        header.extend(["s", "e0_khz", "e1_khz", "refined"]);
    }
    w.write_record(&header)?;
    let total = scan.times.last().copied().unwrap_or(1.0);
    for k in 0..scan.times.len() {
        let mut rec = vec![scan.times[k].to_string(), scan.gaps[k].to_string()];
        if plot_data {
            rec.push((scan.times[k] / total).to_string());
            rec.push(scan.ground_energies[k].to_string());
            rec.push(scan.first_excited_energies[k].to_string());
            rec.push(u8::from(scan.refined_index == Some(k)).to_string());
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PowerLawFit {
    /// `alpha` in `gap ~ c n^alpha`.
    pub exponent: f64,
    pub prefactor: f64,
    /// RMS residual of the log-log fit.
    pub residual: f64,
}

/// Least-squares fit of `ln y = ln c + alpha ln x`.
pub fn fit_power_law(xs: &[f64], ys: &[f64]) -> Result<PowerLawFit> {
    if xs.len() != ys.len() {
        return Err(Error::InvalidParameter("fit inputs differ in length".into()));
    }
    if xs.len() < 3 {
        return Err(Error::DegenerateFit(format!("need at least 3 sizes, got {}", xs.len())));
    }
    if xs.iter().chain(ys).any(|&v| !(v > 0.0 && v.is_finite())) {
        return Err(Error::DegenerateFit("sizes and gaps must be positive".into()));
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let m = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / m;
    let my = ly.iter().sum::<f64>() / m;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx <= 1e-12 * m {
        return Err(Error::DegenerateFit("all sizes are equal".into()));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let exponent = sxy / sxx;
    let intercept = my - exponent * mx;
    let residual = (lx.iter().zip(&ly).map(|(x, y)| (y - intercept - exponent * x).powi(2)).sum::<f64>() / m).sqrt();
    Ok(PowerLawFit { exponent, prefactor: intercept.exp(), residual })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GapScaling {
    pub sizes: Vec<usize>,
    pub min_gaps: Vec<f64>,
    pub min_gap_times: Vec<f64>,
    pub fit: PowerLawFit,
    /// Whether the minimum gap strictly decreases with `n`.
    pub monotone_decreasing: bool,
}

/// Scans every member of a problem family and fits the minimum gaps.
pub fn gap_scaling_fit<F>(family: F, sizes: &[usize], grid_points: usize) -> Result<GapScaling>
where
    F: Fn(usize) -> Result<AnnealSpec>,
{
    let scans = sizes.iter().map(|&n| family(n).and_then(|s| scan_gap(&s, grid_points))).collect::<Result<Vec<_>>>()?;
    let min_gaps: Vec<f64> = scans.iter().map(|s| s.min_gap).collect();
    let xs: Vec<f64> = sizes.iter().map(|&n| n as f64).collect();
    let fit = fit_power_law(&xs, &min_gaps)?;
    Ok(GapScaling {
        sizes: sizes.to_vec(),
        monotone_decreasing: min_gaps.windows(2).all(|w| w[1] < w[0]),
        min_gap_times: scans.iter().map(|s| s.min_gap_time).collect(),
        min_gaps,
        fit,
    })
}

/// Smallest `k >= 1` with `1 - (1 - p)^k >= confidence`; `None` when
/// `p = 0` (no number of repetitions suffices).
pub fn trials_to_confidence(p: f64, confidence: f64) -> Option<u64> {
    if p >= 1.0 {
        return Some(1);
    }
    if p <= 0.0 {
        return None;
    }
    let estimate = ((1.0 - confidence).ln() / (1.0 - p).ln()).ceil().max(1.0);
    let mut k = estimate as u64;
    let reached = |k: u64| 1.0 - (1.0 - p).powi(k as i32) >= confidence;
    // ceil() can overshoot by one when the ratio is an integer in exact
    // arithmetic, or undershoot by rounding
    while k > 1 && reached(k - 1) {
        k -= 1;
    }
    while !reached(k) {
        k += 1;
    }
    Some(k)
}

fn serialize_trials<S: Serializer>(k: &Option<u64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match k {
        Some(k) => s.serialize_u64(*k),
        None => s.serialize_str("inf"),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FidelityReport {
    pub target: SpinConfiguration,
    pub success_probability: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fidelity_closed: Option<f64>,
    pub confidence: f64,
    /// `None` (serialised as `"inf"`) when the success probability is zero.
    #[serde(serialize_with = "serialize_trials")]
    pub trials_to_confidence: Option<u64>,
}

/// Probability mass on the (unique) ground configuration of `p` and the
/// number of independent repetitions needed to see it with the given
/// confidence.
pub fn fidelity_report(
    result: &Distribution,
    p: &IsingProblem,
    confidence: f64,
    fidelity_closed: Option<f64>,
) -> Result<FidelityReport> {
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::InvalidParameter(format!("confidence must lie in (0, 1), got {confidence}")));
    }
    if result.n_qubits() != p.n() {
        return Err(Error::InvalidParameter("distribution and problem sizes differ".into()));
    }
    let ground = brute_force_ground(p)?;
    if ground.degeneracy > 1 {
        return Err(Error::DegenerateGround { count: ground.degeneracy });
    }
    let success = result.prob(&ground.configuration).clamp(0.0, 1.0);
    Ok(FidelityReport {
        target: ground.configuration,
        success_probability: success,
        fidelity_closed,
        confidence,
        trials_to_confidence: trials_to_confidence(success, confidence),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AdiabaticEstimate {
    /// `max_s max_m |<m| dH/ds |0>| / (E_m - E_0)^2` (1/kHz).
    pub max_ratio_per_khz: f64,
    /// Schedule fraction where the maximum occurs.
    pub at_s: f64,
    /// The same ratio expressed as an annealing time (us). Informational:
    /// nothing in the crate sets `T` from it automatically.
    pub time_scale_us: f64,
}

/// Adiabaticity heuristic on a uniform grid in `s = t / T`.
pub fn adiabatic_time_estimate(spec: &AnnealSpec, grid_points: usize) -> Result<AdiabaticEstimate> {
    check_size(spec)?;
    if grid_points < 2 {
        return Err(Error::InvalidParameter("need at least two grid points".into()));
    }
    let ham = DrivenHamiltonian::new(spec)?;
    let total = spec.t_total_us;
    let scale = spec.n() as f64 * spec.b_x_khz + spec.problem.scale();
    let ratios = (0..grid_points)
        .into_par_iter()
        .map(|k| {
            let s = k as f64 / (grid_points - 1) as f64;
            let t = total * s;
            // dH/ds = T dH/dt by central differences (one-sided at the ends)
            let d = 1e-6 * total;
            let (ta, tb) = ((t - d).max(0.0), (t + d).min(total));
            let dh = (ham.operator_at(tb)?.to_dense() - ham.operator_at(ta)?.to_dense()) * (total / (tb - ta));
            let eig = spectrum(&ham, t)?;
            let mut idx: Vec<usize> = (0..eig.eigenvalues.len()).collect();
            idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
            let v0 = eig.eigenvectors.column(idx[0]);
            let dv0 = &dh * v0;
            let mut worst: f64 = 0.0;
            for &m in &idx[1..] {
                let gap = eig.eigenvalues[m] - eig.eigenvalues[idx[0]];
                let elem = eig.eigenvectors.column(m).dot(&dv0).abs();
                let r = if gap <= 1e-12 * scale {
                    if elem > 1e-12 * scale {
                        f64::INFINITY
                    } else {
                        0.0
                    }
                } else {
                    elem / (gap * gap)
                };
                worst = worst.max(r);
            }
            Ok((s, worst))
        })
        .collect::<Result<Vec<_>>>()?;
    let (at_s, max_ratio) =
        ratios.iter().copied().fold((0.0, 0.0_f64), |acc, (s, r)| if r > acc.1 { (s, r) } else { acc });
    Ok(AdiabaticEstimate { max_ratio_per_khz: max_ratio, at_s, time_scale_us: max_ratio / khz_to_rad_per_us(1.0) })
}
