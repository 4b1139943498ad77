//! Batch experiments driven by a JSON config: parsing with key-level error
//! pointers, the four run modes, and atomic artifact output.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::{
    adiabatic_time_estimate, fidelity_report, fit_power_law, scan_gap, write_gap_csv, AdiabaticEstimate,
    FidelityReport, GapScan, PowerLawFit, DEFAULT_GRID_POINTS,
};
use crate::dressing::{diagonalize_pair, sweep, write_sweep_csv, DressedPairResult, DressingParams, SweepGrid};
use crate::error::{Error, Result};
use crate::evolve::{
    evolve_closed, evolve_open, evolve_trajectories, readout, Distribution, IntegratorConfig, IntegratorStats,
    NoiseModel, MASTER_EQUATION_CAP,
};
use crate::hamiltonian::{AnnealSpec, ScheduleShape};
use crate::ising::{benchmark_chain, IsingProblem};

pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    DressingSweep,
    Anneal,
    GapScan,
    BenchmarkSuite,
}

impl FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_owned()))
            .map_err(|_| Error::config("/mode", format!("unknown mode {s:?}")))
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::DressingSweep => "dressing-sweep",
            Mode::Anneal => "anneal",
            Mode::GapScan => "gap-scan",
            Mode::BenchmarkSuite => "benchmark-suite",
        })
    }
}

/// How the anneal is propagated. `Auto` picks the closed system without
/// noise, the master equation up to its size cap and trajectories beyond.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[default]
    Auto,
    Closed,
    MasterEquation,
    Trajectories,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainSource {
    pub n: usize,
    pub coupling_khz: f64,
    pub delta_e_total_khz: f64,
}

/// Where the Ising instance comes from. A bare string is a path resolved
/// relative to the config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProblemSource {
    Path(PathBuf),
    Chain { benchmark_chain: ChainSource },
    Inline(IsingProblem),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSection {
    pub b_x_khz: f64,
    pub t_total_us: f64,
    #[serde(default)]
    pub shape: ScheduleShape,
    #[serde(default)]
    pub hold_biases: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrajectorySection {
    pub n_traj: usize,
}

impl Default for TrajectorySection {
    fn default() -> Self {
        TrajectorySection { n_traj: 10_000 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkSection {
    #[serde(default = "default_sizes")]
    pub sizes: Vec<usize>,
    pub coupling_khz: f64,
    pub b_x_khz: f64,
    pub delta_e_total_khz: f64,
    /// The anneal time grows linearly with the register.
    pub t_per_qubit_us: f64,
}

fn default_sizes() -> Vec<usize> {
    vec![2, 3, 4]
}

fn default_confidence() -> f64 {
    0.99
}

fn default_grid_points() -> usize {
    DEFAULT_GRID_POINTS
}

/// A complete, typed experiment description. Every dimensioned key carries
/// its unit as a suffix (`_khz`, `_mhz`, `_us`); unknown keys are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: Mode,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub problem: Option<ProblemSource>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<ScheduleSection>,
    #[serde(default)]
    pub noise: NoiseModel,
    #[serde(default)]
    pub method: Method,
    #[serde(default)]
    pub trajectories: TrajectorySection,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    /// Laser parameters of the dressing scheme; reported alongside anneals
    /// (the problem couplings themselves are anchored in kHz).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dressing: Option<DressingParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepGrid>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub benchmark: Option<BenchmarkSection>,
    #[serde(default = "default_grid_points")]
    pub grid_points: usize,
    #[serde(default = "default_confidence")]
    pub confidence: f64,
    /// Output directory; not part of the config hash.
    #[serde(default, skip_serializing)]
    pub out_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Parses config text, reporting the JSON pointer of the first offending
    /// key.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let pointer = json_pointer(e.path());
            Error::config(pointer, e.into_inner().to_string())
        })
    }

    /// Reads a config file and inlines any problem referenced by path, so
    /// the result is self-contained.
    pub fn load(path: &Path) -> Result<Self> {
        let text =
            fs::read_to_string(path).map_err(|e| Error::config("", format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text)?;
        cfg.resolve_problem(path.parent().unwrap_or(Path::new(".")))?;
        Ok(cfg)
    }

    pub fn resolve_problem(&mut self, base: &Path) -> Result<()> {
        if let Some(ProblemSource::Path(rel)) = &self.problem {
            let path = base.join(rel);
            let text = fs::read_to_string(&path)
                .map_err(|e| Error::config("/problem", format!("cannot read {}: {e}", path.display())))?;
            let de = &mut serde_json::Deserializer::from_str(&text);
            let p: IsingProblem = serde_path_to_error::deserialize(de).map_err(|e| {
                Error::config(
                    format!("/problem{}", json_pointer(e.path())),
                    format!("{}: {}", path.display(), e.into_inner()),
                )
            })?;
            self.problem = Some(ProblemSource::Inline(p));
        }
        Ok(())
    }

    /// SHA-256 of the canonical serialisation of the typed config. Formatting,
    /// key order, spelled-out defaults and the output directory do not
    /// affect it.
    pub fn hash(&self) -> Result<String> {
        let canonical = serde_json::to_vec(self)?;
        Ok(hex::encode(Sha256::digest(&canonical)))
    }

    fn problem(&self) -> Result<IsingProblem> {
        match &self.problem {
            None => Err(Error::config("/problem", "this mode needs a problem")),
            Some(ProblemSource::Inline(p)) => Ok(p.clone()),
            Some(ProblemSource::Chain { benchmark_chain: c }) => {
                benchmark_chain(c.n, c.coupling_khz, c.delta_e_total_khz)
                    .map_err(|e| Error::config("/problem/benchmark_chain", e.to_string()))
            }
            Some(ProblemSource::Path(p)) => {
                Err(Error::config("/problem", format!("problem path {} was not resolved", p.display())))
            }
        }
    }

    /// The anneal described by `problem`, `schedule` and `noise`.
    pub fn anneal_spec(&self) -> Result<AnnealSpec> {
        let problem = self.problem()?;
        let s = self.schedule.as_ref().ok_or_else(|| Error::config("/schedule", "this mode needs a schedule"))?;
        let spec = AnnealSpec {
            problem,
            b_x_khz: s.b_x_khz,
            t_total_us: s.t_total_us,
            schedule: s.shape.clone(),
            noise: self.noise,
            hold_biases: s.hold_biases,
        };
        spec.validate().map_err(|e| match e {
            Error::SizeCap { .. } => Error::config("/problem", e.to_string()),
            e => Error::config("/schedule", e.to_string()),
        })?;
        Ok(spec)
    }

    fn validate_common(&self) -> Result<()> {
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(Error::config("/confidence", "must lie in (0, 1)"));
        }
        if self.grid_points < 2 {
            return Err(Error::config("/grid_points", "need at least 2 points"));
        }
        if self.trajectories.n_traj == 0 {
            return Err(Error::config("/trajectories/n_traj", "need at least 1 trajectory"));
        }
        self.noise.validate().map_err(|e| Error::config("/noise", e.to_string()))?;
        self.integrator.validate().map_err(|e| Error::config("/integrator", e.to_string()))?;
        if let Some(d) = &self.dressing {
            d.validate().map_err(|e| Error::config("/dressing", e.to_string()))?;
        }
        Ok(())
    }
}

fn json_pointer(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut out = String::new();
    for seg in path.iter() {
        out.push('/');
        match seg {
            Segment::Seq { index } => out.push_str(&index.to_string()),
            Segment::Map { key } | Segment::Enum { variant: key } => {
                out.push_str(&key.replace('~', "~0").replace('/', "~1"))
            }
            Segment::Unknown => out.push('?'),
        }
    }
    out
}

/// Outcome of a single anneal.
#[derive(Clone, Debug, Serialize)]
pub struct AnnealResult {
    pub spec: AnnealSpec,
    pub method: Method,
    pub final_distribution: Distribution,
    pub success_probability: f64,
    /// Success probability of the same anneal without scattering.
    pub success_probability_closed: f64,
    pub fidelity: FidelityReport,
    pub leaked_mass: f64,
    pub integrator_stats: IntegratorStats,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trajectory_jumps: Option<u64>,
}

fn resolve_method(method: Method, spec: &AnnealSpec) -> Method {
    match method {
        Method::Auto if spec.noise.is_noiseless() => Method::Closed,
        Method::Auto if spec.n() <= MASTER_EQUATION_CAP => Method::MasterEquation,
        Method::Auto => Method::Trajectories,
        m => m,
    }
}

/// Runs one anneal with the chosen propagation method and scores it
/// against the brute-force ground state.
pub fn run_anneal(
    spec: &AnnealSpec,
    method: Method,
    cfg: &IntegratorConfig,
    n_traj: usize,
    seed: u64,
    confidence: f64,
) -> Result<AnnealResult> {
    let method = resolve_method(method, spec);
    let closed = evolve_closed(spec, cfg)?;
    let closed_dist = readout(&closed.state);
    let closed_report = fidelity_report(&closed_dist, &spec.problem, confidence, None)?;
    let noise = &spec.noise;
    let (dist, leaked, stats, jumps) = match method {
        Method::Closed | Method::Auto => (closed_dist, closed.state.leaked_mass(), closed.stats, None),
        Method::MasterEquation => {
            let ev = evolve_open(spec, noise, cfg)?;
            (readout(&ev.state), ev.state.leaked_mass(), ev.stats, None)
        }
        Method::Trajectories => {
            let tr = evolve_trajectories(spec, noise, cfg, n_traj, seed)?;
            let leaked = tr.jumps as f64 / n_traj as f64;
            (tr.distribution, leaked, tr.stats, Some(tr.jumps))
        }
    };
    let fidelity = fidelity_report(&dist, &spec.problem, confidence, Some(closed_report.success_probability))?;
    Ok(AnnealResult {
        spec: spec.clone(),
        method,
        success_probability: fidelity.success_probability,
        success_probability_closed: closed_report.success_probability,
        final_distribution: dist,
        fidelity,
        leaked_mass: leaked,
        integrator_stats: stats,
        trajectory_jumps: jumps,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct BenchmarkRow {
    pub n: usize,
    pub t_total_us: f64,
    pub success_probability: f64,
    pub success_probability_closed: f64,
    pub leaked_mass: f64,
    pub min_gap_khz: f64,
    pub min_gap_time_us: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct BenchmarkSuite {
    pub rows: Vec<BenchmarkRow>,
    /// Power-law fit of the minimum gaps; absent below three sizes.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gap_fit: Option<PowerLawFit>,
}

#[derive(Clone, Debug, Serialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum ExperimentResults {
    DressingSweep {
        points: usize,
    },
    Anneal {
        #[serde(flatten)]
        result: Box<AnnealResult>,
        #[serde(skip_serializing_if = "Option::is_none")]
        dressing: Option<DressedPairResult>,
    },
    GapScan {
        min_gap_khz: f64,
        min_gap_time_us: f64,
        grid_points: usize,
        adiabatic: AdiabaticEstimate,
    },
    BenchmarkSuite(BenchmarkSuite),
}

#[derive(Clone, Debug, Serialize)]
pub struct Manifest {
    pub config_sha256: String,
    pub code_version: &'static str,
    pub mode: Mode,
    pub seed: u64,
    pub threads: usize,
    pub wall_time_s: f64,
    pub outputs: Vec<String>,
}

/// Per-run settings that are not part of the experiment itself.
#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Worker threads; rayon's default when absent.
    pub threads: Option<usize>,
    pub plot_data: bool,
}

/// Writes `bytes` to `dir/name` through a temporary file in the same
/// directory, so readers never observe a partial artifact.
fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> Result<()> {
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(dir.join(name)).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

fn to_json(value: &impl Serialize) -> Result<Vec<u8>> {
    let mut v = serde_json::to_vec_pretty(value)?;
    v.push(b'\n');
    Ok(v)
}

/// Executes the experiment and writes `results.json`, the mode's CSV and
/// `manifest.json` into `out_dir`. All numerical outputs are independent of
/// the thread count.
pub fn run(cfg: &ExperimentConfig, out_dir: &Path, opts: &RunOptions) -> Result<Manifest> {
    let start = Instant::now();
    cfg.validate_common()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(k) = opts.threads {
        if k == 0 {
            return Err(Error::InvalidParameter("thread count must be positive".into()));
        }
        builder = builder.num_threads(k);
    }
    let pool = builder.build().map_err(|e| Error::InvalidParameter(format!("cannot build thread pool: {e}")))?;
    let threads = pool.current_num_threads();
    let (results, csv) = pool.install(|| execute(cfg, opts.plot_data))?;

    fs::create_dir_all(out_dir)?;
    let mut outputs = vec!["results.json".to_owned()];
    write_atomic(out_dir, "results.json", &to_json(&results)?)?;
    if let Some((name, bytes)) = csv {
        write_atomic(out_dir, name, &bytes)?;
        outputs.push(name.to_owned());
    }
    outputs.push("manifest.json".to_owned());
    let manifest = Manifest {
        config_sha256: cfg.hash()?,
        code_version: CODE_VERSION,
        mode: cfg.mode,
        seed: cfg.seed,
        threads,
        wall_time_s: start.elapsed().as_secs_f64(),
        outputs,
    };
    write_atomic(out_dir, "manifest.json", &to_json(&manifest)?)?;
    Ok(manifest)
}

type CsvArtifact = Option<(&'static str, Vec<u8>)>;

fn execute(cfg: &ExperimentConfig, plot_data: bool) -> Result<(ExperimentResults, CsvArtifact)> {
    match cfg.mode {
        Mode::DressingSweep => {
            let grid =
                cfg.sweep.as_ref().ok_or_else(|| Error::config("/sweep", "dressing-sweep mode needs a sweep grid"))?;
            let rows = sweep(grid)?;
            let mut buf = Vec::new();
            write_sweep_csv(&rows, &mut buf, plot_data)?;
            Ok((ExperimentResults::DressingSweep { points: rows.len() }, Some(("sweep.csv", buf))))
        }
        Mode::Anneal => {
            let spec = cfg.anneal_spec()?;
            let result =
                run_anneal(&spec, cfg.method, &cfg.integrator, cfg.trajectories.n_traj, cfg.seed, cfg.confidence)?;
            let dressing = cfg.dressing.as_ref().map(diagonalize_pair).transpose()?;
            Ok((ExperimentResults::Anneal { result: Box::new(result), dressing }, None))
        }
        Mode::GapScan => {
            let spec = cfg.anneal_spec()?;
            let scan = scan_gap(&spec, cfg.grid_points)?;
            let adiabatic = adiabatic_time_estimate(&spec, cfg.grid_points)?;
            let mut buf = Vec::new();
            write_gap_csv(&scan, &mut buf, plot_data)?;
            Ok((
                ExperimentResults::GapScan {
                    min_gap_khz: scan.min_gap,
                    min_gap_time_us: scan.min_gap_time,
                    grid_points: scan.times.len(),
                    adiabatic,
                },
                Some(("gaps.csv", buf)),
            ))
        }
        Mode::BenchmarkSuite => {
            let b = cfg
                .benchmark
                .as_ref()
                .ok_or_else(|| Error::config("/benchmark", "benchmark-suite mode needs a benchmark section"))?;
            if b.sizes.is_empty() {
                return Err(Error::config("/benchmark/sizes", "no sizes given"));
            }
            let mut rows = Vec::new();
            let mut scans: Vec<(usize, GapScan)> = Vec::new();
            for (k, &n) in b.sizes.iter().enumerate() {
                let problem = benchmark_chain(n, b.coupling_khz, b.delta_e_total_khz)
                    .map_err(|e| Error::config(format!("/benchmark/sizes/{k}"), e.to_string()))?;
                let spec = AnnealSpec {
                    problem,
                    b_x_khz: b.b_x_khz,
                    t_total_us: b.t_per_qubit_us * n as f64,
                    schedule: ScheduleShape::Linear,
                    noise: cfg.noise,
                    hold_biases: false,
                };
                spec.validate().map_err(|e| Error::config("/benchmark", e.to_string()))?;
                let r =
                    run_anneal(&spec, cfg.method, &cfg.integrator, cfg.trajectories.n_traj, cfg.seed, cfg.confidence)?;
                let scan = scan_gap(&spec, cfg.grid_points)?;
                rows.push(BenchmarkRow {
                    n,
                    t_total_us: spec.t_total_us,
                    success_probability: r.success_probability,
                    success_probability_closed: r.success_probability_closed,
                    leaked_mass: r.leaked_mass,
                    min_gap_khz: scan.min_gap,
                    min_gap_time_us: scan.min_gap_time,
                });
                scans.push((n, scan));
            }
            let gap_fit = if rows.len() >= 3 {
                let xs: Vec<f64> = rows.iter().map(|r| r.n as f64).collect();
                let ys: Vec<f64> = rows.iter().map(|r| r.min_gap_khz).collect();
                Some(fit_power_law(&xs, &ys)?)
            } else {
                None
            };
            let csv = benchmark_gap_csv(&scans, plot_data)?;
            Ok((ExperimentResults::BenchmarkSuite(BenchmarkSuite { rows, gap_fit }), Some(("gaps.csv", csv))))
        }
    }
}

/// Concatenates per-size gap scans with a leading `n` column.
fn benchmark_gap_csv(scans: &[(usize, GapScan)], plot_data: bool) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    for (k, (n, scan)) in scans.iter().enumerate() {
        let mut buf = Vec::new();
        write_gap_csv(scan, &mut buf, plot_data)?;
        let text = String::from_utf8(buf).expect("csv output is utf-8");
        for (line_no, line) in text.lines().enumerate() {
            if line_no == 0 {
                if k == 0 {
                    writeln!(out, "n,{line}")?;
                }
            } else {
                writeln!(out, "{n},{line}")?;
            }
        }
    }
    Ok(out)
}
