//! QUBO and Ising problem instances.
//!
//! Conventions used throughout the crate:
//!
//! * Qubit state `|0>` is spin up, the `+1` eigenstate of `sigma_z`; `|1>` is
//!   spin down (`-1`).
//! * Bitstrings are written qubit 0 first, so `"10"` means qubit 0 in `|1>`
//!   and qubit 1 in `|0>`.
//! * Qubit `k` is bit `k` of a computational-basis index (qubit 0 is the least
//!   significant bit), so `"10"` is basis index 1.
//! * Quadratic sums run over unordered pairs `i < j`; matrices are stored
//!   symmetric with a zero diagonal.
//! * A QUBO variable is the projector `x_i = (1 + sigma_z_i) / 2`, so
//!   `x_i = 1` is the qubit state `|0>`. [`SpinConfiguration::qubo_assignment`]
//!   performs that translation.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_ENUMERATION_CAP: usize = 12;

/// Mandatory tag on serialized problems, pinning `|0>` to `sigma_z = +1`.
pub const CONVENTION_TAG: &str = "spin_up_is_plus_one";

const SYMMETRY_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct QuboProblem {
    linear: Vec<f64>,
    quadratic: Vec<Vec<f64>>,
}

impl QuboProblem {
    pub fn new(linear: Vec<f64>, quadratic: Vec<Vec<f64>>) -> Result<Self> {
        Self::with_cap(linear, quadratic, DEFAULT_ENUMERATION_CAP)
    }

    pub fn with_cap(linear: Vec<f64>, quadratic: Vec<Vec<f64>>, cap: usize) -> Result<Self> {
        let n = linear.len();
        if n == 0 {
            return Err(Error::InvalidProblem("QUBO needs at least one variable".into()));
        }
        if n > cap {
            return Err(Error::SizeCap { n, cap });
        }
        check_finite(&linear, "linear")?;
        check_symmetric_zero_diagonal(&quadratic, n)?;
        Ok(QuboProblem { linear, quadratic })
    }

    pub fn n(&self) -> usize {
        self.linear.len()
    }

    pub fn linear(&self) -> &[f64] {
        &self.linear
    }

    pub fn quadratic(&self) -> &[Vec<f64>] {
        &self.quadratic
    }

    /// `f(x) = sum_i h_i x_i + sum_{i<j} J_ij x_i x_j`.
    pub fn evaluate(&self, x: &[u8]) -> f64 {
        assert_eq!(x.len(), self.n(), "assignment length mismatch");
        let mut f = 0.0;
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0 {
                continue;
            }
            f += self.linear[i];
            for j in (i + 1)..self.n() {
                if x[j] != 0 {
                    f += self.quadratic[i][j];
                }
            }
        }
        f
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Coupling {
    pub i: usize,
    pub j: usize,
    pub value: f64,
}

/// `H_P = sum_i bias_i Z_i + sum_{i<j} coupling_ij Z_i Z_j`, in kHz, plus a
/// constant `energy_offset` that is kept out of the operator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ProblemDocument", into = "ProblemDocument")]
pub struct IsingProblem {
    bias: Vec<f64>,
    couplings: Vec<Coupling>,
    energy_offset: f64,
}

impl IsingProblem {
    /// Builds a problem from biases and `(i, j, value)` couplings. Pairs may
    /// be given in either order; zero couplings are dropped.
    pub fn new(
        bias: Vec<f64>,
        couplings: impl IntoIterator<Item = (usize, usize, f64)>,
        energy_offset: f64,
    ) -> Result<Self> {
        let n = bias.len();
        if n == 0 {
            return Err(Error::InvalidProblem("Ising problem needs at least one spin".into()));
        }
        check_finite(&bias, "bias")?;
        if !energy_offset.is_finite() {
            return Err(Error::InvalidProblem("energy offset is not finite".into()));
        }
        let mut list: Vec<Coupling> = Vec::new();
        for (a, b, value) in couplings {
            if a == b {
                return Err(Error::InvalidProblem(format!("self-coupling on spin {a}")));
            }
            if a >= n || b >= n {
                return Err(Error::InvalidProblem(format!("coupling ({a}, {b}) out of range for {n} spins")));
            }
            if !value.is_finite() {
                return Err(Error::InvalidProblem(format!("coupling ({a}, {b}) is not finite")));
            }
            let (i, j) = if a < b { (a, b) } else { (b, a) };
            if list.iter().any(|c| c.i == i && c.j == j) {
                return Err(Error::InvalidProblem(format!("duplicate coupling ({i}, {j})")));
            }
            if value != 0.0 {
                list.push(Coupling { i, j, value });
            }
        }
        list.sort_by_key(|c| (c.i, c.j));
        Ok(IsingProblem { bias, couplings: list, energy_offset })
    }

    /// Builds a problem from a dense symmetric coupling matrix.
    pub fn from_matrix(bias: Vec<f64>, matrix: &[Vec<f64>], energy_offset: f64) -> Result<Self> {
        let n = bias.len();
        check_symmetric_zero_diagonal(matrix, n)?;
        let pairs = (0..n)
            .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
            .map(|(i, j)| (i, j, matrix[i][j]))
            .collect::<Vec<_>>();
        Self::new(bias, pairs, energy_offset)
    }

    pub fn n(&self) -> usize {
        self.bias.len()
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn couplings(&self) -> &[Coupling] {
        &self.couplings
    }

    pub fn energy_offset(&self) -> f64 {
        self.energy_offset
    }

    pub fn coupling(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i < j { (i, j) } else { (j, i) };
        self.couplings.iter().find(|c| c.i == i && c.j == j).map_or(0.0, |c| c.value)
    }

    pub fn coupling_matrix(&self) -> Vec<Vec<f64>> {
        let n = self.n();
        let mut m = vec![vec![0.0; n]; n];
        for c in &self.couplings {
            m[c.i][c.j] = c.value;
            m[c.j][c.i] = c.value;
        }
        m
    }

    /// Nonzero couplings only between neighbours `|i - j| = 1`.
    pub fn is_chain(&self) -> bool {
        self.couplings.iter().all(|c| c.j == c.i + 1)
    }

    /// Ising energy of a configuration, excluding `energy_offset`.
    pub fn energy(&self, config: &SpinConfiguration) -> f64 {
        assert_eq!(config.len(), self.n(), "configuration length mismatch");
        let spin = |k: usize| config.spin(k);
        let mut e = 0.0;
        for (k, h) in self.bias.iter().enumerate() {
            e += h * spin(k);
        }
        for c in &self.couplings {
            e += c.value * spin(c.i) * spin(c.j);
        }
        e
    }

    /// Energy including the constant offset; equals the QUBO cost for
    /// problems produced by [`qubo_to_ising`].
    pub fn total_energy(&self, config: &SpinConfiguration) -> f64 {
        self.energy(config) + self.energy_offset
    }

    /// Sum of coefficient magnitudes, used as the scale for tolerances.
    pub fn scale(&self) -> f64 {
        self.bias.iter().map(|h| h.abs()).sum::<f64>() + self.couplings.iter().map(|c| c.value.abs()).sum::<f64>()
    }
}

/// Assignment of the `n` qubits to `{0, 1}`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct SpinConfiguration {
    bits: Vec<u8>,
}

impl SpinConfiguration {
    pub fn from_bits(bits: Vec<u8>) -> Result<Self> {
        if bits.iter().any(|&b| b > 1) {
            return Err(Error::InvalidParameter("bits must be 0 or 1".into()));
        }
        Ok(SpinConfiguration { bits })
    }

    pub fn from_index(index: usize, n: usize) -> Self {
        SpinConfiguration { bits: (0..n).map(|k| ((index >> k) & 1) as u8).collect() }
    }

    pub fn index(&self) -> usize {
        self.bits.iter().enumerate().fold(0, |acc, (k, &b)| acc | ((b as usize) << k))
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    /// `sigma_z` eigenvalue of qubit `k`.
    pub fn spin(&self, k: usize) -> f64 {
        if self.bits[k] == 0 {
            1.0
        } else {
            -1.0
        }
    }

    /// QUBO variables represented by this qubit state (`x_i = 1` on `|0>`).
    pub fn qubo_assignment(&self) -> Vec<u8> {
        self.bits.iter().map(|b| 1 - b).collect()
    }

    /// Inverse of [`qubo_assignment`](Self::qubo_assignment).
    pub fn from_qubo_assignment(x: &[u8]) -> Result<Self> {
        if x.iter().any(|&b| b > 1) {
            return Err(Error::InvalidParameter("QUBO variables must be 0 or 1".into()));
        }
        Ok(SpinConfiguration { bits: x.iter().map(|b| 1 - b).collect() })
    }
}

impl fmt::Display for SpinConfiguration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.bits {
            write!(f, "{b}")?;
        }
        Ok(())
    }
}

impl FromStr for SpinConfiguration {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bits = s
            .chars()
            .map(|c| match c {
                '0' => Ok(0),
                '1' => Ok(1),
                _ => Err(Error::InvalidParameter(format!("bad bitstring {s:?}"))),
            })
            .collect::<Result<Vec<u8>>>()?;
        Ok(SpinConfiguration { bits })
    }
}

impl TryFrom<String> for SpinConfiguration {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<SpinConfiguration> for String {
    fn from(c: SpinConfiguration) -> String {
        c.to_string()
    }
}

/// Substitutes `x_i = (1 + Z_i) / 2`: `J~_ij = J_ij / 4`,
/// `h~_i = h_i / 2 + sum_j J~_ij`, constant `sum_i h_i / 2 + sum_{i<j} J_ij / 4`.
pub fn qubo_to_ising(q: &QuboProblem) -> IsingProblem {
    let n = q.n();
    let mut bias: Vec<f64> = q.linear.iter().map(|h| h / 2.0).collect();
    let mut offset: f64 = q.linear.iter().sum::<f64>() / 2.0;
    let mut pairs = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let jt = q.quadratic[i][j] / 4.0;
            if jt != 0.0 {
                bias[i] += jt;
                bias[j] += jt;
                offset += jt;
                pairs.push((i, j, jt));
            }
        }
    }
    IsingProblem::new(bias, pairs, offset).expect("validated QUBO maps to a valid Ising problem")
}

/// Antiferromagnetic chain with equally spaced site fields.
///
/// Bond `(i, i+1)` carries `coupling_khz` on `Z_i Z_{i+1}`; site `i` (1-based)
/// carries `-(i/n) * delta_e_total_khz` on `Z_i`, so the ground state
/// alternates and the last qubit reads 0: `|10>`, `|010>`, `|1010>`, ...
pub fn benchmark_chain(n: usize, coupling_khz: f64, delta_e_total_khz: f64) -> Result<IsingProblem> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!("benchmark chain needs n >= 2, got {n}")));
    }
    if !(coupling_khz > 0.0 && coupling_khz.is_finite()) {
        return Err(Error::InvalidParameter(format!("chain coupling must be positive, got {coupling_khz}")));
    }
    if !(delta_e_total_khz > 0.0) {
        return Err(Error::InvalidParameter(format!("field spread must be positive, got {delta_e_total_khz}")));
    }
    // n * dE < J with dE = delta_e_total / n
    if delta_e_total_khz >= coupling_khz {
        return Err(Error::InvalidParameter(format!(
            "n * dE = {delta_e_total_khz} kHz must stay below J = {coupling_khz} kHz"
        )));
    }
    let bias = (1..=n).map(|i| -(i as f64 / n as f64) * delta_e_total_khz).collect();
    let bonds = (0..n - 1).map(|i| (i, i + 1, coupling_khz));
    IsingProblem::new(bias, bonds, 0.0)
}

/// Expected ground configuration of [`benchmark_chain`]: alternating bits
/// ending in 0.
pub fn alternating_pattern(n: usize) -> SpinConfiguration {
    SpinConfiguration { bits: (0..n).map(|k| ((n - 1 - k) % 2) as u8).collect() }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundState {
    pub configuration: SpinConfiguration,
    /// Energy including the problem's constant offset (kHz).
    pub energy: f64,
    /// Distance to the next distinct energy level (kHz); zero when every
    /// configuration is degenerate.
    pub gap: f64,
    pub degeneracy: usize,
}

pub fn brute_force_ground(p: &IsingProblem) -> Result<GroundState> {
    brute_force_ground_capped(p, DEFAULT_ENUMERATION_CAP)
}

/// Exhaustive search over all `2^n` configurations.
///
/// Energies within `1e-12 * scale` of each other count as degenerate; the
/// reported configuration is the lexicographically smallest bitstring among
/// the degenerate minima.
pub fn brute_force_ground_capped(p: &IsingProblem, cap: usize) -> Result<GroundState> {
    let n = p.n();
    if n > cap {
        return Err(Error::SizeCap { n, cap });
    }
    let energies: Vec<f64> =
        (0..1usize << n).into_par_iter().map(|idx| p.energy(&SpinConfiguration::from_index(idx, n))).collect();
    let tol = 1e-12 * p.scale();
    let e_min = energies.iter().copied().fold(f64::INFINITY, f64::min);
    let mut best: Option<SpinConfiguration> = None;
    let mut degeneracy = 0;
    let mut e_next = f64::INFINITY;
    for (idx, &e) in energies.iter().enumerate() {
        if e <= e_min + tol {
            degeneracy += 1;
            let c = SpinConfiguration::from_index(idx, n);
            if best.as_ref().is_none_or(|b| c < *b) {
                best = Some(c);
            }
        } else if e < e_next {
            e_next = e;
        }
    }
    let gap = if e_next.is_finite() { e_next - e_min } else { 0.0 };
    Ok(GroundState {
        configuration: best.expect("at least one configuration"),
        energy: e_min + p.energy_offset(),
        gap,
        degeneracy,
    })
}

/// How one coupled pair is dressed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeDressing {
    pub i: usize,
    pub j: usize,
    /// The computational pair state `|x_i x_j>` that the Rydberg laser dresses.
    pub dressed_state: (u8, u8),
    /// Sign of the resulting `Z_i Z_j` coefficient.
    pub effective_sign: i8,
}

/// Per-atom choice of which qubit state the Rydberg laser dresses.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DressingAssignment {
    pub atom_states: Vec<u8>,
    pub edges: Vec<EdgeDressing>,
}

/// Chooses, for each atom, whether its `|0>` or its `|1>` state is dressed so
/// that a negative physical pair shift `J |x_i x_j><x_i x_j|` reproduces the
/// sign of every coupling in `p`.
///
/// Expanding the projector gives `(J/4) s_i s_j Z_i Z_j` with `s = +1` for a
/// dressed `|0>` and `-1` for a dressed `|1>`. With `J < 0`, antiferromagnetic
/// bonds need differently dressed neighbours and ferromagnetic bonds need
/// equally dressed ones. That is a two-colouring with parity constraints; it
/// always exists on trees (and chains) and fails on frustrated cycles.
pub fn sign_mask_for_couplings(p: &IsingProblem) -> Result<DressingAssignment> {
    let n = p.n();
    let mut adjacency: Vec<Vec<(usize, bool)>> = vec![Vec::new(); n];
    for c in p.couplings() {
        let differ = c.value > 0.0;
        adjacency[c.i].push((c.j, differ));
        adjacency[c.j].push((c.i, differ));
    }
    let mut label: Vec<Option<u8>> = vec![None; n];
    for root in 0..n {
        if label[root].is_some() {
            continue;
        }
        label[root] = Some(0);
        let mut queue = VecDeque::from([root]);
        while let Some(u) = queue.pop_front() {
            let lu = label[u].unwrap();
            for &(v, differ) in &adjacency[u] {
                if label[v].is_none() {
                    label[v] = Some(if differ { 1 - lu } else { lu });
                    queue.push_back(v);
                }
            }
        }
    }
    let atom_states: Vec<u8> = label.into_iter().map(|l| l.unwrap()).collect();

    let mut frustrated = Vec::new();
    let mut edges = Vec::with_capacity(p.couplings().len());
    for c in p.couplings() {
        let (a, b) = (atom_states[c.i], atom_states[c.j]);
        let wants_differ = c.value > 0.0;
        if (a != b) != wants_differ {
            frustrated.push((c.i, c.j));
        }
        // sign of (J/4) s_i s_j with J < 0
        let effective_sign = if a == b { -1 } else { 1 };
        edges.push(EdgeDressing { i: c.i, j: c.j, dressed_state: (a, b), effective_sign });
    }
    if !frustrated.is_empty() {
        return Err(Error::FrustratedCouplings { edges: frustrated });
    }
    Ok(DressingAssignment { atom_states, edges })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProblemKind {
    #[default]
    Ising,
    Qubo,
}

impl ProblemKind {
    fn is_ising(&self) -> bool {
        *self == ProblemKind::Ising
    }
}

/// On-disk form of a problem instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemDocument {
    pub n: usize,
    #[serde(default, skip_serializing_if = "ProblemKind::is_ising")]
    pub kind: ProblemKind,
    pub linear_khz: Vec<f64>,
    pub quadratic_khz: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub energy_offset_khz: f64,
    pub convention: String,
}

fn is_zero(x: &f64) -> bool {
    *x == 0.0
}

impl ProblemDocument {
    fn validate_shape(&self) -> Result<()> {
        if self.convention != CONVENTION_TAG {
            return Err(Error::InvalidProblem(format!(
                "convention must be {CONVENTION_TAG:?}, got {:?}",
                self.convention
            )));
        }
        if self.linear_khz.len() != self.n {
            return Err(Error::InvalidProblem(format!(
                "n = {} but {} linear coefficients",
                self.n,
                self.linear_khz.len()
            )));
        }
        Ok(())
    }

    pub fn into_qubo(self) -> Result<QuboProblem> {
        self.validate_shape()?;
        if self.kind != ProblemKind::Qubo {
            return Err(Error::InvalidProblem("document is not a QUBO".into()));
        }
        QuboProblem::new(self.linear_khz, self.quadratic_khz)
    }
}

impl TryFrom<ProblemDocument> for IsingProblem {
    type Error = Error;

    fn try_from(doc: ProblemDocument) -> Result<Self> {
        doc.validate_shape()?;
        match doc.kind {
            ProblemKind::Ising => IsingProblem::from_matrix(doc.linear_khz, &doc.quadratic_khz, doc.energy_offset_khz),
            ProblemKind::Qubo => {
                let offset = doc.energy_offset_khz;
                let q = QuboProblem::new(doc.linear_khz, doc.quadratic_khz)?;
                let p = qubo_to_ising(&q);
                IsingProblem::new(
                    p.bias.clone(),
                    p.couplings.iter().map(|c| (c.i, c.j, c.value)),
                    p.energy_offset + offset,
                )
            }
        }
    }
}

impl From<IsingProblem> for ProblemDocument {
    fn from(p: IsingProblem) -> Self {
        ProblemDocument {
            n: p.n(),
            kind: ProblemKind::Ising,
            quadratic_khz: p.coupling_matrix(),
            linear_khz: p.bias,
            energy_offset_khz: p.energy_offset,
            convention: CONVENTION_TAG.to_string(),
        }
    }
}

impl From<&QuboProblem> for ProblemDocument {
    fn from(q: &QuboProblem) -> Self {
        ProblemDocument {
            n: q.n(),
            kind: ProblemKind::Qubo,
            linear_khz: q.linear.clone(),
            quadratic_khz: q.quadratic.clone(),
            energy_offset_khz: 0.0,
            convention: CONVENTION_TAG.to_string(),
        }
    }
}

fn check_finite(v: &[f64], what: &str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidProblem(format!("{what} coefficients must be finite")))
    }
}

fn check_symmetric_zero_diagonal(m: &[Vec<f64>], n: usize) -> Result<()> {
    if m.len() != n || m.iter().any(|row| row.len() != n) {
        return Err(Error::InvalidProblem(format!("quadratic matrix must be {n}x{n}")));
    }
    let scale = m.iter().flatten().fold(0.0_f64, |acc, x| acc.max(x.abs()));
    for i in 0..n {
        if !m[i].iter().all(|x| x.is_finite()) {
            return Err(Error::InvalidProblem("quadratic coefficients must be finite".into()));
        }
        if m[i][i] != 0.0 {
            return Err(Error::InvalidProblem(format!(
                "diagonal entry ({i}, {i}) = {} must be zero; fold x_i^2 = x_i into the linear term",
                m[i][i]
            )));
        }
        for j in (i + 1)..n {
            if (m[i][j] - m[j][i]).abs() > SYMMETRY_TOL * scale {
                return Err(Error::InvalidProblem(format!("quadratic matrix not symmetric at ({i}, {j})")));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg(s: &str) -> SpinConfiguration {
        s.parse().unwrap()
    }

    // Independent enumeration: evaluates spins straight from the basis index.
    fn exhaustive_min(p: &IsingProblem) -> (usize, f64) {
        let n = p.n();
        let m = p.coupling_matrix();
        let mut best = (0, f64::INFINITY);
        for idx in 0..(1usize << n) {
            let s: Vec<f64> = (0..n).map(|k| 1.0 - 2.0 * ((idx >> k) & 1) as f64).collect();
            let mut e = 0.0;
            for i in 0..n {
                e += p.bias()[i] * s[i];
                for j in (i + 1)..n {
                    e += m[i][j] * s[i] * s[j];
                }
            }
            if e < best.1 - 1e-12 {
                best = (idx, e);
            }
        }
        best
    }

    #[test]
    fn single_variable_mapping() {
        let q = QuboProblem::new(vec![4.0], vec![vec![0.0]]).unwrap();
        let p = qubo_to_ising(&q);
        assert_eq!(p.bias(), &[2.0]);
        assert!(p.couplings().is_empty());
        assert_eq!(p.energy_offset(), 2.0);
    }

    #[test]
    fn two_variable_mapping_matches_all_configurations() {
        let q = QuboProblem::new(vec![0.0, 0.0], vec![vec![0.0, 4.0], vec![4.0, 0.0]]).unwrap();
        let p = qubo_to_ising(&q);
        assert_eq!(p.coupling(0, 1), 1.0);
        assert_eq!(p.bias(), &[1.0, 1.0]);
        assert_eq!(p.energy_offset(), 1.0);
        for idx in 0..4 {
            let x = [(idx & 1) as u8, ((idx >> 1) & 1) as u8];
            let c = SpinConfiguration::from_qubo_assignment(&x).unwrap();
            assert_eq!(q.evaluate(&x), p.total_energy(&c));
        }
    }

    #[test]
    fn rejects_bad_quadratic() {
        let asym = QuboProblem::new(vec![0.0, 0.0], vec![vec![0.0, 1.0], vec![2.0, 0.0]]);
        assert!(matches!(asym, Err(Error::InvalidProblem(_))));
        let diag = QuboProblem::new(vec![0.0, 0.0], vec![vec![1.0, 0.0], vec![0.0, 0.0]]);
        assert!(matches!(diag, Err(Error::InvalidProblem(_))));
        let big = QuboProblem::with_cap(vec![0.0; 3], vec![vec![0.0; 3]; 3], 2);
        assert!(matches!(big, Err(Error::SizeCap { n: 3, cap: 2 })));
    }

    #[test]
    fn benchmark_ground_patterns() {
        assert_eq!(brute_force_ground(&benchmark_chain(2, 470.0, 118.5).unwrap()).unwrap().configuration, cfg("10"));
        assert_eq!(brute_force_ground(&benchmark_chain(3, 470.0, 118.5).unwrap()).unwrap().configuration, cfg("010"));
        assert_eq!(brute_force_ground(&benchmark_chain(4, 470.0, 118.5).unwrap()).unwrap().configuration, cfg("1010"));
        for n in 2..=10 {
            let p = benchmark_chain(n, 470.0, 118.5).unwrap();
            assert!(p.is_chain());
            let g = brute_force_ground(&p).unwrap();
            assert_eq!(g.configuration, alternating_pattern(n), "n = {n}");
            assert_eq!(g.degeneracy, 1);
        }
    }

    #[test]
    fn benchmark_rejects_strong_fields() {
        assert!(benchmark_chain(3, 100.0, 100.0).is_err());
        assert!(benchmark_chain(1, 470.0, 118.5).is_err());
    }

    #[test]
    fn fully_degenerate_problem() {
        let p = IsingProblem::new(vec![0.0; 4], [], 0.0).unwrap();
        let g = brute_force_ground(&p).unwrap();
        assert_eq!(g.degeneracy, 16);
        assert_eq!(g.gap, 0.0);
        assert_eq!(g.configuration, cfg("0000"));
    }

    #[test]
    fn enumeration_cap() {
        let p = IsingProblem::new(vec![1.0; 5], [], 0.0).unwrap();
        assert!(matches!(brute_force_ground_capped(&p, 4), Err(Error::SizeCap { .. })));
    }

    #[test]
    fn sign_mask_two_qubits() {
        let afm = IsingProblem::new(vec![0.0, 0.0], [(0, 1, 1.0)], 0.0).unwrap();
        let a = sign_mask_for_couplings(&afm).unwrap();
        let (x1, x2) = a.edges[0].dressed_state;
        assert_ne!(x1, x2);
        assert_eq!(a.edges[0].effective_sign, 1);

        let fm = IsingProblem::new(vec![0.0, 0.0], [(0, 1, -1.0)], 0.0).unwrap();
        let a = sign_mask_for_couplings(&fm).unwrap();
        let (x1, x2) = a.edges[0].dressed_state;
        assert_eq!(x1, x2);
        assert_eq!(a.edges[0].effective_sign, -1);
    }

    #[test]
    fn sign_mask_chains_alternate() {
        for n in 2..=8 {
            let p = benchmark_chain(n, 470.0, 118.5).unwrap();
            let a = sign_mask_for_couplings(&p).unwrap();
            for k in 0..n - 1 {
                assert_ne!(a.atom_states[k], a.atom_states[k + 1]);
            }
        }
    }

    #[test]
    fn sign_mask_reports_frustration() {
        let triangle = IsingProblem::new(vec![0.0; 3], [(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)], 0.0).unwrap();
        match sign_mask_for_couplings(&triangle) {
            Err(Error::FrustratedCouplings { edges }) => assert_eq!(edges, vec![(1, 2)]),
            other => panic!("expected frustration, got {other:?}"),
        }
        // an even cycle of antiferromagnetic bonds is fine
        let square =
            IsingProblem::new(vec![0.0; 4], [(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0), (0, 3, 1.0)], 0.0).unwrap();
        assert!(sign_mask_for_couplings(&square).is_ok());
    }

    #[test]
    fn document_round_trip_and_convention() {
        let p = benchmark_chain(3, 470.0, 118.5).unwrap();
        let json = serde_json::to_string(&p).unwrap();
        assert!(json.contains("\"convention\":\"spin_up_is_plus_one\""));
        let back: IsingProblem = serde_json::from_str(&json).unwrap();
        assert_eq!(back, p);

        let bad = json.replace("spin_up_is_plus_one", "spin_up_is_minus_one");
        assert!(serde_json::from_str::<IsingProblem>(&bad).is_err());
        let missing = r#"{"n":1,"linear_khz":[1.0],"quadratic_khz":[[0.0]]}"#;
        assert!(serde_json::from_str::<IsingProblem>(missing).is_err());
    }

    #[test]
    fn qubo_document_maps_through() {
        let doc =
            r#"{"n":1,"kind":"qubo","linear_khz":[4.0],"quadratic_khz":[[0.0]],"convention":"spin_up_is_plus_one"}"#;
        let p: IsingProblem = serde_json::from_str(doc).unwrap();
        assert_eq!(p.bias(), &[2.0]);
        assert_eq!(p.energy_offset(), 2.0);
    }

    fn arb_qubo() -> impl Strategy<Value = QuboProblem> {
        (1usize..=6).prop_flat_map(|n| {
            (prop::collection::vec(-100.0..100.0f64, n), prop::collection::vec(-100.0..100.0f64, n * n)).prop_map(
                move |(h, raw)| {
                    let mut m = vec![vec![0.0; n]; n];
                    for i in 0..n {
                        for j in (i + 1)..n {
                            m[i][j] = raw[i * n + j];
                            m[j][i] = raw[i * n + j];
                        }
                    }
                    QuboProblem::new(h, m).unwrap()
                },
            )
        })
    }

    fn arb_ising() -> impl Strategy<Value = IsingProblem> {
        (1usize..=7).prop_flat_map(|n| {
            (prop::collection::vec(-50.0..50.0f64, n), prop::collection::vec(-50.0..50.0f64, n * n)).prop_map(
                move |(h, raw)| {
                    let pairs = (0..n)
                        .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
                        .map(|(i, j)| (i, j, raw[i * n + j]))
                        .collect::<Vec<_>>();
                    IsingProblem::new(h, pairs, 0.0).unwrap()
                },
            )
        })
    }

    proptest! {
        #[test]
        fn mapping_identity(q in arb_qubo()) {
            let p = qubo_to_ising(&q);
            let n = q.n();
            for idx in 0..(1usize << n) {
                let x: Vec<u8> = (0..n).map(|k| ((idx >> k) & 1) as u8).collect();
                let c = SpinConfiguration::from_qubo_assignment(&x).unwrap();
                let f = q.evaluate(&x);
                let e = p.total_energy(&c);
                let scale = 1.0 + q.linear().iter().map(|v| v.abs()).sum::<f64>()
                    + q.quadratic().iter().flatten().map(|v| v.abs()).sum::<f64>();
                prop_assert!((f - e).abs() <= 1e-12 * scale, "f = {f}, E = {e}");
            }
        }

        #[test]
        fn ground_invariant_under_offset(p in arb_ising(), shift in -1e3..1e3f64) {
            let shifted = IsingProblem::new(
                p.bias().to_vec(),
                p.couplings().iter().map(|c| (c.i, c.j, c.value)),
                shift,
            ).unwrap();
            let a = brute_force_ground(&p).unwrap();
            let b = brute_force_ground(&shifted).unwrap();
            prop_assert_eq!(a.configuration, b.configuration);
            prop_assert!((b.energy - a.energy - shift).abs() < 1e-9);
        }

        #[test]
        fn oracle_agrees_with_independent_enumeration(p in arb_ising()) {
            let g = brute_force_ground(&p).unwrap();
            let (idx, e) = exhaustive_min(&p);
            prop_assert!((g.energy - e).abs() < 1e-9);
            if g.degeneracy == 1 {
                prop_assert_eq!(g.configuration.index(), idx);
            }
        }
    }
}
