//! Many-qubit operators and the annealing Hamiltonian
//! `H(t) = A(t) H_B + B(t) H_P`.
//!
//! All operators are real symmetric in the computational basis (energies in
//! kHz). Basis index bit `k` is qubit `k`, with bit value 0 meaning
//! `sigma_z = +1`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolve::NoiseModel;
use crate::ising::{DressingAssignment, IsingProblem};

/// Largest register for which operators are built.
pub const MAX_QUBITS: usize = 16;

/// Registers smaller than this are stored densely.
pub const DENSE_BELOW: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StoragePolicy {
    /// Dense below [`DENSE_BELOW`] qubits, CSR otherwise.
    Auto,
    Dense,
    Sparse,
}

#[derive(Clone, Debug, PartialEq)]
enum Storage {
    Dense(Vec<f64>),
    Csr { row_ptr: Vec<usize>, cols: Vec<usize>, values: Vec<f64> },
}

/// Real symmetric operator on `n` qubits.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseOperator {
    n: usize,
    storage: Storage,
}

fn check_qubits(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidParameter("operators need at least one qubit".into()));
    }
    if n > MAX_QUBITS {
        return Err(Error::SizeCap { n, cap: MAX_QUBITS });
    }
    Ok(())
}

impl SparseOperator {
    /// Builds an operator from `(row, col, value)` entries; duplicates are
    /// summed and exact zeros dropped.
    pub fn from_triplets(
        n: usize,
        triplets: impl IntoIterator<Item = (usize, usize, f64)>,
        policy: StoragePolicy,
    ) -> Result<Self> {
        check_qubits(n)?;
        let dim = 1usize << n;
        let mut t: Vec<(usize, usize, f64)> = triplets.into_iter().collect();
        if t.iter().any(|&(r, c, _)| r >= dim || c >= dim) {
            return Err(Error::InvalidParameter("operator entry out of range".into()));
        }
        t.sort_by_key(|&(r, c, _)| (r, c));
        let mut merged: Vec<(usize, usize, f64)> = Vec::with_capacity(t.len());
        for (r, c, v) in t {
            match merged.last_mut() {
                Some(last) if last.0 == r && last.1 == c => last.2 += v,
                _ => merged.push((r, c, v)),
            }
        }
        merged.retain(|e| e.2 != 0.0);

        let dense = match policy {
            StoragePolicy::Auto => n < DENSE_BELOW,
            StoragePolicy::Dense => true,
            StoragePolicy::Sparse => false,
        };
        let storage = if dense {
            let mut a = vec![0.0; dim * dim];
            for (r, c, v) in merged {
                a[r * dim + c] = v;
            }
            Storage::Dense(a)
        } else {
            let mut row_ptr = vec![0usize; dim + 1];
            for &(r, _, _) in &merged {
                row_ptr[r + 1] += 1;
            }
            for r in 0..dim {
                row_ptr[r + 1] += row_ptr[r];
            }
            Storage::Csr {
                row_ptr,
                cols: merged.iter().map(|e| e.1).collect(),
                values: merged.iter().map(|e| e.2).collect(),
            }
        };
        Ok(SparseOperator { n, storage })
    }

    pub fn diagonal_from(n: usize, diag: &[f64], policy: StoragePolicy) -> Result<Self> {
        check_qubits(n)?;
        if diag.len() != 1 << n {
            return Err(Error::InvalidParameter("diagonal length is not 2^n".into()));
        }
        Self::from_triplets(n, diag.iter().enumerate().map(|(k, &v)| (k, k, v)), policy)
    }

    pub fn zero(n: usize) -> Result<Self> {
        Self::from_triplets(n, [], StoragePolicy::Auto)
    }

    pub fn n_qubits(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        1 << self.n
    }

    pub fn is_dense(&self) -> bool {
        matches!(self.storage, Storage::Dense(_))
    }

    /// Nonzero entries in row-major order.
    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        let dim = self.dim();
        match &self.storage {
            Storage::Dense(a) => (0..dim)
                .flat_map(|r| (0..dim).map(move |c| (r, c)))
                .filter_map(|(r, c)| {
                    let v = a[r * dim + c];
                    (v != 0.0).then_some((r, c, v))
                })
                .collect(),
            Storage::Csr { row_ptr, cols, values } => (0..dim)
                .flat_map(|r| (row_ptr[r]..row_ptr[r + 1]).map(move |k| (r, k)))
                .map(|(r, k)| (r, cols[k], values[k]))
                .collect(),
        }
    }

    pub fn nnz(&self) -> usize {
        self.triplets().len()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let dim = self.dim();
        let mut m = DMatrix::zeros(dim, dim);
        for (r, c, v) in self.triplets() {
            m[(r, c)] = v;
        }
        m
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.dim()];
        for (r, c, v) in self.triplets() {
            if r == c {
                d[r] = v;
            }
        }
        d
    }

    pub fn is_diagonal(&self) -> bool {
        self.triplets().iter().all(|&(r, c, _)| r == c)
    }

    /// `max |A_rc - A_cr|` does not exceed `tol`.
    pub fn is_hermitian(&self, tol: f64) -> bool {
        let m = self.to_dense();
        (&m - m.transpose()).amax() <= tol
    }

    /// `sum_k c_k A_k`, stored according to `policy`.
    pub fn linear_combination(terms: &[(f64, &SparseOperator)], policy: StoragePolicy) -> Result<Self> {
        let n =
            terms.first().map(|t| t.1.n).ok_or_else(|| Error::InvalidParameter("empty linear combination".into()))?;
        if terms.iter().any(|t| t.1.n != n) {
            return Err(Error::InvalidParameter("operators act on different registers".into()));
        }
        let entries = terms.iter().flat_map(|&(c, op)| op.triplets().into_iter().map(move |(r, k, v)| (r, k, c * v)));
        Self::from_triplets(n, entries, policy)
    }

    pub fn max_abs_diff(&self, other: &SparseOperator) -> f64 {
        (self.to_dense() - other.to_dense()).amax()
    }

    /// `y = A x`.
    pub fn apply(&self, x: &[Complex64], y: &mut [Complex64]) {
        let dim = self.dim();
        assert!(x.len() == dim && y.len() == dim, "vector length mismatch");
        match &self.storage {
            Storage::Dense(a) => {
                for (r, yr) in y.iter_mut().enumerate() {
                    let row = &a[r * dim..(r + 1) * dim];
                    let mut s = Complex64::new(0.0, 0.0);
                    for (v, xc) in row.iter().zip(x) {
                        s += xc * *v;
                    }
                    *yr = s;
                }
            }
            Storage::Csr { row_ptr, cols, values } => {
                for (r, yr) in y.iter_mut().enumerate() {
                    let mut s = Complex64::new(0.0, 0.0);
                    for k in row_ptr[r]..row_ptr[r + 1] {
                        s += x[cols[k]] * values[k];
                    }
                    *yr = s;
                }
            }
        }
    }

    /// `<x| A |x>` for a real symmetric operator.
    pub fn expectation(&self, x: &[Complex64]) -> f64 {
        let mut y = vec![Complex64::new(0.0, 0.0); self.dim()];
        self.apply(x, &mut y);
        x.iter().zip(&y).map(|(a, b)| (a.conj() * b).re).sum()
    }
}

/// `sigma_z` eigenvalue of qubit `k` in basis state `index`.
#[inline]
pub fn z_sign(index: usize, k: usize) -> f64 {
    if (index >> k) & 1 == 0 {
        1.0
    } else {
        -1.0
    }
}

pub fn pauli_x(n: usize, k: usize) -> Result<SparseOperator> {
    check_qubits(n)?;
    let bit = 1usize << k;
    SparseOperator::from_triplets(n, (0..1usize << n).map(|i| (i, i ^ bit, 1.0)), StoragePolicy::Auto)
}

pub fn pauli_z(n: usize, k: usize) -> Result<SparseOperator> {
    check_qubits(n)?;
    SparseOperator::from_triplets(n, (0..1usize << n).map(|i| (i, i, z_sign(i, k))), StoragePolicy::Auto)
}

/// `H_B = -B_x sum_k sigma_x^(k)`.
pub fn build_h_b(n: usize, b_x_khz: f64) -> Result<SparseOperator> {
    build_h_b_with(n, b_x_khz, StoragePolicy::Auto)
}

pub fn build_h_b_with(n: usize, b_x_khz: f64, policy: StoragePolicy) -> Result<SparseOperator> {
    check_qubits(n)?;
    let entries = (0..1usize << n).flat_map(move |i| (0..n).map(move |k| (i, i ^ (1 << k), -b_x_khz)));
    SparseOperator::from_triplets(n, entries, policy)
}

/// Diagonal of `H_P` (offset excluded), built from Pauli-Z products.
pub fn problem_diagonal(p: &IsingProblem) -> Vec<f64> {
    let n = p.n();
    (0..1usize << n)
        .map(|idx| {
            let fields: f64 = p.bias().iter().enumerate().map(|(k, h)| h * z_sign(idx, k)).sum();
            let bonds: f64 = p.couplings().iter().map(|c| c.value * z_sign(idx, c.i) * z_sign(idx, c.j)).sum();
            fields + bonds
        })
        .collect()
}

/// `H_P = sum_i h_i Z_i + sum_{i<j} J_ij Z_i Z_j`.
pub fn build_h_p(p: &IsingProblem) -> Result<SparseOperator> {
    check_qubits(p.n())?;
    SparseOperator::diagonal_from(p.n(), &problem_diagonal(p), StoragePolicy::Auto)
}

/// Physical dressed-pair interaction `sum_edges J |d_i d_j><d_i d_j|` for a
/// dressing assignment, with `j_khz` the (negative) pair shift.
pub fn dressed_interaction(n: usize, assignment: &DressingAssignment, j_khz: f64) -> Result<SparseOperator> {
    check_qubits(n)?;
    let bit = |idx: usize, k: usize| ((idx >> k) & 1) as u8;
    let diag: Vec<f64> = (0..1usize << n)
        .map(|idx| {
            assignment
                .edges
                .iter()
                .filter(|e| bit(idx, e.i) == e.dressed_state.0 && bit(idx, e.j) == e.dressed_state.1)
                .count() as f64
                * j_khz
        })
        .collect();
    SparseOperator::diagonal_from(n, &diag, StoragePolicy::Auto)
}

/// Coefficient of `Z_i Z_j` in a diagonal operator:
/// `2^-n sum_x d(x) z_i(x) z_j(x)`.
pub fn zz_coefficient(op: &SparseOperator, i: usize, j: usize) -> f64 {
    let d = op.diagonal();
    d.iter().enumerate().map(|(x, v)| v * z_sign(x, i) * z_sign(x, j)).sum::<f64>() / d.len() as f64
}

/// Envelope shape: linear ramps or a piecewise-linear table of
/// `[t_us, A, B]` rows.
#[derive(Clone, Debug, PartialEq, Default)]
pub enum ScheduleShape {
    #[default]
    Linear,
    Piecewise(Vec<[f64; 3]>),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum ShapeRepr {
    Named(String),
    Points(Vec<[f64; 3]>),
}

impl Serialize for ScheduleShape {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            ScheduleShape::Linear => ShapeRepr::Named("linear".into()).serialize(s),
            ScheduleShape::Piecewise(p) => ShapeRepr::Points(p.clone()).serialize(s),
        }
    }
}

impl<'de> Deserialize<'de> for ScheduleShape {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        match ShapeRepr::deserialize(d)? {
            ShapeRepr::Named(s) if s == "linear" => Ok(ScheduleShape::Linear),
            ShapeRepr::Named(s) => Err(serde::de::Error::custom(format!(
                "unknown schedule {s:?}; expected \"linear\" or [[t_us, a, b], ...]"
            ))),
            ShapeRepr::Points(p) => Ok(ScheduleShape::Piecewise(p)),
        }
    }
}

/// Envelopes `A(t)`, `B(t)` on `[0, T]` with `A(0) = B(T) = 1`,
/// `A(T) = B(0) = 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct Schedule {
    total_time_us: f64,
    shape: ScheduleShape,
}

impl Schedule {
    pub fn linear(total_time_us: f64) -> Result<Self> {
        Self::new(total_time_us, ScheduleShape::Linear)
    }

    pub fn new(total_time_us: f64, shape: ScheduleShape) -> Result<Self> {
        if !(total_time_us > 0.0 && total_time_us.is_finite()) {
            return Err(Error::InvalidParameter(format!("total time must be positive, got {total_time_us} us")));
        }
        if let ScheduleShape::Piecewise(pts) = &shape {
            if pts.len() < 2 {
                return Err(Error::InvalidParameter("piecewise schedule needs at least two points".into()));
            }
            if pts.iter().flatten().any(|x| !x.is_finite()) {
                return Err(Error::InvalidParameter("schedule entries must be finite".into()));
            }
            let first = pts[0];
            let last = pts[pts.len() - 1];
            if first != [0.0, 1.0, 0.0] {
                return Err(Error::InvalidParameter("schedule must start at [0, 1, 0]".into()));
            }
            if last != [total_time_us, 0.0, 1.0] {
                return Err(Error::InvalidParameter(format!("schedule must end at [{total_time_us}, 0, 1]")));
            }
            if pts.windows(2).any(|w| w[1][0] <= w[0][0]) {
                return Err(Error::InvalidParameter("schedule times must increase strictly".into()));
            }
        }
        Ok(Schedule { total_time_us, shape })
    }

    pub fn total_time_us(&self) -> f64 {
        self.total_time_us
    }

    pub fn shape(&self) -> &ScheduleShape {
        &self.shape
    }

    /// `(A(t), B(t))`; errors outside `[0, T]`.
    pub fn envelopes(&self, t: f64) -> Result<(f64, f64)> {
        if !(0.0..=self.total_time_us).contains(&t) {
            return Err(Error::TimeOutOfRange { t, total: self.total_time_us });
        }
        Ok(self.envelopes_clamped(t))
    }

    /// As [`envelopes`](Self::envelopes) but clamps `t` into `[0, T]`; used
    /// inside integrators whose stages can overshoot by rounding.
    pub fn envelopes_clamped(&self, t: f64) -> (f64, f64) {
        let t = t.clamp(0.0, self.total_time_us);
        match &self.shape {
            ScheduleShape::Linear => {
                let s = t / self.total_time_us;
                (1.0 - s, s)
            }
            ScheduleShape::Piecewise(pts) => {
                let k = pts.partition_point(|p| p[0] <= t).clamp(1, pts.len() - 1);
                let (p0, p1) = (pts[k - 1], pts[k]);
                if t == p0[0] {
                    return (p0[1], p0[2]);
                }
                if t == p1[0] {
                    return (p1[1], p1[2]);
                }
                let w = (t - p0[0]) / (p1[0] - p0[0]);
                (p0[1] + w * (p1[1] - p0[1]), p0[2] + w * (p1[2] - p0[2]))
            }
        }
    }

    /// Time average of `B(t)` over the schedule.
    pub fn mean_problem_envelope(&self) -> f64 {
        match &self.shape {
            ScheduleShape::Linear => 0.5,
            ScheduleShape::Piecewise(pts) => {
                pts.windows(2).map(|w| 0.5 * (w[0][2] + w[1][2]) * (w[1][0] - w[0][0])).sum::<f64>()
                    / self.total_time_us
            }
        }
    }
}

/// A complete annealing run description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnealSpec {
    pub problem: IsingProblem,
    pub b_x_khz: f64,
    pub t_total_us: f64,
    #[serde(default)]
    pub schedule: ScheduleShape,
    #[serde(default)]
    pub noise: NoiseModel,
    /// Keep the site fields at full strength throughout instead of ramping
    /// them with `B(t)`.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub hold_biases: bool,
}

impl AnnealSpec {
    pub fn linear(problem: IsingProblem, b_x_khz: f64, t_total_us: f64) -> Self {
        AnnealSpec {
            problem,
            b_x_khz,
            t_total_us,
            schedule: ScheduleShape::Linear,
            noise: NoiseModel::default(),
            hold_biases: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.b_x_khz > 0.0 && self.b_x_khz.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "transverse field must be positive, got {} kHz",
                self.b_x_khz
            )));
        }
        check_qubits(self.problem.n())?;
        self.noise.validate()?;
        self.schedule().map(|_| ())
    }

    pub fn schedule(&self) -> Result<Schedule> {
        Schedule::new(self.t_total_us, self.schedule.clone())
    }

    pub fn n(&self) -> usize {
        self.problem.n()
    }
}

/// `H(t)` split into its fixed pieces so it can be applied without
/// rebuilding a matrix at every time.
#[derive(Clone, Debug)]
pub struct DrivenHamiltonian {
    schedule: Schedule,
    h_b: SparseOperator,
    bias_diag: Vec<f64>,
    coupling_diag: Vec<f64>,
    hold_biases: bool,
}

impl DrivenHamiltonian {
    pub fn new(spec: &AnnealSpec) -> Result<Self> {
        spec.validate()?;
        let p = &spec.problem;
        let n = p.n();
        let fields_only = IsingProblem::new(p.bias().to_vec(), [], 0.0)?;
        let bonds_only = IsingProblem::new(vec![0.0; n], p.couplings().iter().map(|c| (c.i, c.j, c.value)), 0.0)?;
        Ok(DrivenHamiltonian {
            schedule: spec.schedule()?,
            h_b: build_h_b(n, spec.b_x_khz)?,
            bias_diag: problem_diagonal(&fields_only),
            coupling_diag: problem_diagonal(&bonds_only),
            hold_biases: spec.hold_biases,
        })
    }

    pub fn n_qubits(&self) -> usize {
        self.h_b.n_qubits()
    }

    pub fn dim(&self) -> usize {
        self.h_b.dim()
    }

    pub fn schedule(&self) -> &Schedule {
        &self.schedule
    }

    /// `(A, B_fields, B_bonds)` at time `t` (clamped into the schedule).
    pub fn coefficients(&self, t: f64) -> (f64, f64, f64) {
        let (a, b) = self.schedule.envelopes_clamped(t);
        (a, if self.hold_biases { 1.0 } else { b }, b)
    }

    /// Diagonal of the problem part at time `t`.
    pub fn problem_diagonal_at(&self, t: f64) -> Vec<f64> {
        let (_, bf, bc) = self.coefficients(t);
        self.bias_diag.iter().zip(&self.coupling_diag).map(|(h, j)| bf * h + bc * j).collect()
    }

    /// `y = H(t) x` in kHz.
    pub fn apply(&self, t: f64, x: &[Complex64], y: &mut [Complex64]) {
        let (a, bf, bc) = self.coefficients(t);
        self.h_b.apply(x, y);
        for k in 0..y.len() {
            let d = bf * self.bias_diag[k] + bc * self.coupling_diag[k];
            y[k] = y[k] * a + x[k] * d;
        }
    }

    /// Assembles `H(t)` as an operator; errors outside `[0, T]`.
    pub fn operator_at(&self, t: f64) -> Result<SparseOperator> {
        self.schedule.envelopes(t)?;
        let (a, bf, bc) = self.coefficients(t);
        let n = self.n_qubits();
        let diag: Vec<f64> = self.bias_diag.iter().zip(&self.coupling_diag).map(|(h, j)| bf * h + bc * j).collect();
        let h_p = SparseOperator::diagonal_from(n, &diag, StoragePolicy::Auto)?;
        SparseOperator::linear_combination(&[(a, &self.h_b), (1.0, &h_p)], StoragePolicy::Auto)
    }

    pub fn transverse(&self) -> &SparseOperator {
        &self.h_b
    }
}

/// The instantaneous Hamiltonian `H(t)`.
pub fn h_of_t(spec: &AnnealSpec, t: f64) -> Result<SparseOperator> {
    DrivenHamiltonian::new(spec)?.operator_at(t)
}
