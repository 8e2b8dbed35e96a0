use std::f64::consts::FRAC_PI_2;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use pexcite::adaptive::{
    check_affine_set_membership, check_error_regulation, lyapunov_trace, retention_experiment,
    simulate_gradient_law, AdaptiveProblem, Integrator, RetentionReport,
};
use pexcite::estimator::{estimate_pe_subspace, EstimatorConfig, PEReport, DEFAULT_EIG_TOL, DEFAULT_N_DIRS};
use pexcite::excitation::{build_gram_sweep, directional_pe_test, matrix_pe_test, GramSweep, PEVerdict};
use pexcite::geometry::{complement, pe_decompose, Subspace};
use pexcite::signal::{
    envelope_scale, pulse_train_pair, read_csv, sample_sinusoid_mix, stack, write_csv, SampledSignal,
    TimeGrid,
};

use crate::config::{write_atomic, write_json, write_manifest};
use crate::CliError;

/// Largest relative reconstruction residual `decompose` accepts.
const RESIDUAL_TOL: f64 = 1e-9;

pub enum Outcome {
    Pass,
    Fail,
}

impl From<bool> for Outcome {
    fn from(pass: bool) -> Self {
        if pass {
            Outcome::Pass
        } else {
            Outcome::Fail
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    /// `mixing · (amps·sin(freqs·t + phases))`; (sin t, cos t) by default.
    Sinusoid,
    /// The pulse-train pair (γ·c, (1 − γ)·c) with doubling interval lengths.
    Pathological,
    /// A sinusoid mix under the envelope e^{−rate·t}.
    Vanishing,
    Constant,
    Zero,
    /// (sin t, cos t, e^{−rate·t}): PE on the first two axes only.
    Regular,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from(".")
}

fn default_dt() -> f64 {
    1e-3
}

fn default_rate() -> f64 {
    1.0
}

fn default_value() -> Vec<f64> {
    vec![1.0]
}

fn default_dim() -> usize {
    1
}

fn default_eig_tol() -> f64 {
    DEFAULT_EIG_TOL
}

fn default_n_dirs() -> usize {
    DEFAULT_N_DIRS
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateConfig {
    kind: Kind,
    horizon: f64,
    #[serde(default = "default_dt")]
    dt: f64,
    #[serde(default)]
    t0: f64,
    #[serde(default)]
    freqs: Option<Vec<f64>>,
    #[serde(default)]
    amps: Option<Vec<f64>>,
    #[serde(default)]
    phases: Option<Vec<f64>>,
    /// Rows of the mixing matrix; identity when absent.
    #[serde(default)]
    mixing: Option<Vec<Vec<f64>>>,
    #[serde(default = "default_rate")]
    rate: f64,
    #[serde(default = "default_value")]
    value: Vec<f64>,
    #[serde(default = "default_dim")]
    dim: usize,
    #[serde(default)]
    out: Option<PathBuf>,
    #[serde(default = "default_output_dir")]
    output_dir: PathBuf,
}

impl GenerateConfig {
    fn sinusoid(&self, grid: TimeGrid) -> Result<SampledSignal, CliError> {
        let (freqs, default_phases) = match &self.freqs {
            Some(f) => (f.clone(), vec![0.0; f.len()]),
            None => (vec![1.0, 1.0], vec![0.0, FRAC_PI_2]),
        };
        let m = freqs.len();
        let amps = self.amps.clone().unwrap_or_else(|| vec![1.0; m]);
        let phases = self.phases.clone().unwrap_or(default_phases);
        let mixing = match &self.mixing {
            Some(rows) => matrix_from_rows(rows, "mixing")?,
            None => DMatrix::identity(m, m),
        };
        Ok(sample_sinusoid_mix(&freqs, &amps, &phases, &mixing, grid)?)
    }

    fn build(&self) -> Result<SampledSignal, CliError> {
        let grid = TimeGrid::covering(self.t0, self.horizon, self.dt)?;
        let w = match self.kind {
            Kind::Sinusoid => self.sinusoid(grid)?,
            Kind::Pathological => {
                let pair = pulse_train_pair(grid)?;
                if self.value == [1.0] {
                    pair
                } else {
                    let c = DVector::from_column_slice(&self.value);
                    let l = stack_blocks(&c);
                    pexcite::signal::apply_linear_map(&l, &pair)?
                }
            }
            Kind::Vanishing => envelope_scale(&self.sinusoid(grid)?, self.rate)?,
            Kind::Constant => SampledSignal::constant(&self.value, grid)?,
            Kind::Zero => SampledSignal::zeros(self.dim, grid),
            Kind::Regular => {
                let sc = self.sinusoid(grid)?;
                let decay = envelope_scale(&SampledSignal::constant(&[1.0], grid)?, self.rate)?;
                stack(&sc, &decay)?
            }
        };
        Ok(w)
    }
}

/// `[c 0; 0 c]`, mapping `(γ, 1 − γ)` to `(γ·c, (1 − γ)·c)`.
fn stack_blocks(c: &DVector<f64>) -> DMatrix<f64> {
    let q = c.len();
    let mut l = DMatrix::zeros(2 * q, 2);
    l.view_mut((0, 0), (q, 1)).copy_from(c);
    l.view_mut((q, 1), (q, 1)).copy_from(c);
    l
}

fn matrix_from_rows(rows: &[Vec<f64>], name: &str) -> Result<DMatrix<f64>, CliError> {
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(CliError::Usage(format!("{name} rows have different lengths")));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

pub fn generate(cfg: GenerateConfig) -> Result<Outcome, CliError> {
    let w = cfg.build()?;
    let out = cfg.out.clone().unwrap_or_else(|| cfg.output_dir.join("signal.csv"));
    write_signal(&out, &w)?;
    let manifest = write_manifest(&cfg.output_dir, "generate", &cfg, std::slice::from_ref(&out))?;
    println!(
        "wrote {} ({} samples, dimension {}); manifest {}",
        out.display(),
        w.len(),
        w.dim(),
        manifest.display()
    );
    Ok(Outcome::Pass)
}

fn write_signal(path: &Path, w: &SampledSignal) -> Result<(), CliError> {
    write_atomic(path, |f| Ok(write_csv(w, f)?))
}

fn load_signal(path: &Path) -> Result<SampledSignal, CliError> {
    let file = File::open(path)
        .map_err(|e| CliError::Usage(format!("cannot open signal {}: {e}", path.display())))?;
    read_csv(BufReader::new(file))
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalyzeConfig {
    signal: PathBuf,
    #[serde(rename = "T")]
    window: f64,
    beta: f64,
    #[serde(default)]
    t_tail: Option<f64>,
    #[serde(default = "default_output_dir")]
    output_dir: PathBuf,
}

/// Matrix verdict plus one directional verdict per coordinate axis.
#[derive(Debug, Serialize, Deserialize)]
pub struct AnalyzeReport {
    pub matrix: PEVerdict,
    pub directional: Vec<PEVerdict>,
}

pub fn analyze_signal(sweep: &GramSweep, window: f64, t_tail: f64, beta: f64) -> pexcite::Result<AnalyzeReport> {
    let q = sweep.dim();
    let matrix = matrix_pe_test(sweep, window, t_tail, beta)?;
    let directional = (0..q)
        .map(|i| {
            let mut e = vec![0.0; q];
            e[i] = 1.0;
            directional_pe_test(sweep, &e, window, t_tail, beta)
        })
        .collect::<pexcite::Result<Vec<_>>>()?;
    Ok(AnalyzeReport { matrix, directional })
}

pub fn analyze(cfg: AnalyzeConfig) -> Result<Outcome, CliError> {
    let w = load_signal(&cfg.signal)?;
    let sweep = build_gram_sweep(&w);
    let t_tail = cfg.t_tail.unwrap_or(w.grid().t0());
    let report = analyze_signal(&sweep, cfg.window, t_tail, cfg.beta)?;
    let out = cfg.output_dir.join("analyze.json");
    write_json(&out, &report)?;
    write_manifest(&cfg.output_dir, "analyze", &cfg, &[out])?;
    println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    Ok(report.matrix.pass.into())
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnoseConfig {
    signal: PathBuf,
    #[serde(rename = "T")]
    window: f64,
    beta: f64,
    #[serde(default)]
    t_tail: Option<f64>,
    #[serde(default = "default_eig_tol")]
    eig_tol: f64,
    #[serde(default = "default_n_dirs")]
    n_dirs: usize,
    #[serde(default)]
    seed: u64,
    #[serde(default = "default_output_dir")]
    output_dir: PathBuf,
}

fn estimate(
    w: &SampledSignal,
    window: f64,
    beta: f64,
    t_tail: Option<f64>,
    eig_tol: f64,
    n_dirs: usize,
    seed: u64,
) -> Result<PEReport, CliError> {
    let sweep = build_gram_sweep(w);
    let cfg = EstimatorConfig {
        window,
        t_tail: t_tail.unwrap_or(w.grid().t0()),
        beta,
        eig_tol,
        n_dirs,
        seed,
    };
    Ok(estimate_pe_subspace(&sweep, &cfg)?)
}

fn fmt_vec(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.6}")).collect();
    format!("[{}]", parts.join(", "))
}

pub fn diagnose(cfg: DiagnoseConfig) -> Result<Outcome, CliError> {
    let w = load_signal(&cfg.signal)?;
    let report = estimate(&w, cfg.window, cfg.beta, cfg.t_tail, cfg.eig_tol, cfg.n_dirs, cfg.seed)?;
    let out = cfg.output_dir.join("diagnose.json");
    write_json(&out, &report)?;
    write_manifest(&cfg.output_dir, "diagnose", &cfg, &[out])?;

    println!("signal dimension     {}", w.dim());
    println!("PE subspace dim      {}", report.q_pe);
    for (i, col) in report.pe_subspace.basis().column_iter().enumerate() {
        let v: Vec<f64> = col.iter().copied().collect();
        println!("  basis {:<3}          {}", i + 1, fmt_vec(&v));
    }
    println!("eigenvalues          {}", fmt_vec(&report.eigenvalues));
    let ev = &report.regular_evidence;
    println!("probes               {} (seed {})", ev.probes, ev.seed);
    println!(
        "regularity           {}",
        serde_json::to_value(ev.flag).expect("flag serializes").as_str().unwrap_or_default()
    );
    for wit in &ev.witnesses {
        println!(
            "  witness {:?} {} beta* = {:.3e}",
            wit.kind,
            fmt_vec(&wit.direction),
            wit.verdict.beta_star
        );
    }
    println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    Ok(report.is_regular().into())
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecomposeConfig {
    signal: PathBuf,
    #[serde(default)]
    subspace: Option<PathBuf>,
    #[serde(default)]
    complement: Option<PathBuf>,
    #[serde(default)]
    estimate: bool,
    #[serde(rename = "T", default)]
    window: Option<f64>,
    #[serde(default)]
    beta: Option<f64>,
    #[serde(default)]
    t_tail: Option<f64>,
    #[serde(default = "default_eig_tol")]
    eig_tol: f64,
    #[serde(default = "default_n_dirs")]
    n_dirs: usize,
    #[serde(default)]
    seed: u64,
    #[serde(default = "default_output_dir")]
    output_dir: PathBuf,
}

#[derive(Debug, Serialize)]
struct DecomposeReport<'a> {
    pe_subspace: &'a Subspace,
    complement_subspace: &'a Subspace,
    residual: f64,
    residual_tol: f64,
    pass: bool,
}

/// Reads a subspace JSON, or the estimated subspace out of a `diagnose` report.
fn load_subspace(path: &Path) -> Result<Subspace, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read subspace {}: {e}", path.display())))?;
    let mut value: Value = serde_json::from_str(&text)
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    if let Some(w) = value.get_mut("W_hat") {
        value = w.take();
    }
    serde_json::from_value(value).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

pub fn decompose(cfg: DecomposeConfig) -> Result<Outcome, CliError> {
    let w = load_signal(&cfg.signal)?;
    let pe = match (&cfg.subspace, cfg.estimate) {
        (Some(path), false) => load_subspace(path)?,
        (None, true) => {
            let (Some(window), Some(beta)) = (cfg.window, cfg.beta) else {
                return Err(CliError::Usage("--estimate needs T and beta".into()));
            };
            estimate(&w, window, beta, cfg.t_tail, cfg.eig_tol, cfg.n_dirs, cfg.seed)?.pe_subspace
        }
        _ => return Err(CliError::Usage("give exactly one of --subspace and --estimate".into())),
    };
    let comp = match &cfg.complement {
        Some(path) => load_subspace(path)?,
        None => complement(&pe),
    };
    let dec = pe_decompose(&w, &pe, &comp)?;
    let residual = dec.reconstruction_residual(&w)?;
    let pass = residual <= RESIDUAL_TOL;

    let pe_out = cfg.output_dir.join("w_pe.csv");
    let perp_out = cfg.output_dir.join("w_perp.csv");
    let report_out = cfg.output_dir.join("decompose.json");
    write_signal(&pe_out, &dec.w_pe)?;
    write_signal(&perp_out, &dec.w_perp)?;
    let report = DecomposeReport {
        pe_subspace: &dec.pe_subspace,
        complement_subspace: &dec.complement_subspace,
        residual,
        residual_tol: RESIDUAL_TOL,
        pass,
    };
    write_json(&report_out, &report)?;
    write_manifest(&cfg.output_dir, "decompose", &cfg, &[pe_out, perp_out, report_out])?;
    println!("dim W = {}, dim V = {}", pe.dim(), comp.dim());
    println!("max reconstruction residual (relative): {residual:e}");
    Ok(pass.into())
}

/// `g` for `Γ = g·I`, or the rows of a full gain matrix.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Gain {
    Scalar(f64),
    Matrix(Vec<Vec<f64>>),
}

fn default_gain() -> Gain {
    Gain::Scalar(1.0)
}

fn default_integrator() -> Integrator {
    Integrator::Rk4
}

fn default_tail_fraction() -> f64 {
    0.25
}

fn default_tol() -> f64 {
    1e-2
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    signal: PathBuf,
    psi_true: Vec<f64>,
    psi_hat0: Vec<f64>,
    #[serde(default = "default_gain")]
    gain: Gain,
    #[serde(default)]
    dt: Option<f64>,
    #[serde(default)]
    t_end: Option<f64>,
    #[serde(default = "default_integrator")]
    integrator: Integrator,
    #[serde(default = "default_tail_fraction")]
    tail_fraction: f64,
    #[serde(default = "default_tol")]
    tol: f64,
    #[serde(default)]
    subspace: Option<PathBuf>,
    #[serde(default = "default_tol")]
    membership_tol: f64,
    #[serde(default)]
    retention: bool,
    #[serde(default = "default_output_dir")]
    output_dir: PathBuf,
}

#[derive(Debug, Serialize)]
struct Membership {
    distance: f64,
    tol: f64,
    pass: bool,
}

#[derive(Debug, Serialize)]
struct SimulateReport {
    integrator: Integrator,
    dt: f64,
    t_end: f64,
    psi_hat_final: Vec<f64>,
    final_error: f64,
    max_tail_error: f64,
    regulated: bool,
    /// `None` when the gain is not positive definite.
    lyapunov_non_increasing: Option<bool>,
    membership: Option<Membership>,
    retention: Option<RetentionReport>,
    pass: bool,
}

pub fn simulate(cfg: SimulateConfig) -> Result<Outcome, CliError> {
    let w = load_signal(&cfg.signal)?;
    let q = w.dim();
    let dt = cfg.dt.unwrap_or(w.grid().dt());
    let t_end = cfg.t_end.unwrap_or(w.grid().end());
    let gain = match &cfg.gain {
        Gain::Scalar(g) => DMatrix::identity(q, q) * *g,
        Gain::Matrix(rows) => matrix_from_rows(rows, "gain")?,
    };
    let problem = AdaptiveProblem::new(
        w,
        DVector::from_column_slice(&cfg.psi_true),
        DVector::from_column_slice(&cfg.psi_hat0),
        gain,
    )?;
    let pe = cfg.subspace.as_deref().map(load_subspace).transpose()?;

    let (run, retention) = if cfg.retention {
        let Some(pe) = &pe else {
            return Err(CliError::Usage("retention needs a subspace".into()));
        };
        if cfg.integrator != Integrator::Rk4 {
            return Err(CliError::Usage("retention runs use the rk4 integrator".into()));
        }
        let (report, run) = retention_experiment(&problem, pe, dt, t_end, cfg.membership_tol)?;
        (run, Some(report))
    } else {
        (simulate_gradient_law(&problem, dt, t_end, cfg.integrator)?, None)
    };

    let regulated = check_error_regulation(&run, cfg.tail_fraction, cfg.tol)?;
    let (start, end) = (run.times[0], *run.times.last().expect("run has samples"));
    let from = end - cfg.tail_fraction * (end - start);
    let max_tail_error = run
        .times
        .iter()
        .zip(&run.errors)
        .filter(|(&t, _)| t >= from)
        .fold(0.0_f64, |m, (_, e)| m.max(e.abs()));
    let lyapunov_non_increasing = lyapunov_trace(&problem, &run).ok().map(|v| {
        v.windows(2).all(|p| p[1] <= p[0] + 1e-8 * p[0].abs().max(1.0))
    });
    let last = run.psi_hat_final();
    let membership = match &pe {
        Some(pe) => {
            let (pass, distance) =
                check_affine_set_membership(&last, &problem.psi_true, pe, cfg.membership_tol)?;
            Some(Membership { distance, tol: cfg.membership_tol, pass })
        }
        None => None,
    };
    let pass = regulated
        && lyapunov_non_increasing.unwrap_or(true)
        && membership.as_ref().is_none_or(|m| m.pass)
        && retention.as_ref().is_none_or(|r| r.pass);
    let report = SimulateReport {
        integrator: run.integrator,
        dt: run.dt,
        t_end,
        psi_hat_final: last.iter().copied().collect(),
        final_error: *run.errors.last().expect("run has samples"),
        max_tail_error,
        regulated,
        lyapunov_non_increasing,
        membership,
        retention,
        pass,
    };

    let traj_out = cfg.output_dir.join("trajectory.csv");
    let report_out = cfg.output_dir.join("simulate.json");
    write_atomic(&traj_out, |f| Ok(run.write_csv(f)?))?;
    write_json(&report_out, &report)?;
    write_manifest(&cfg.output_dir, "simulate", &cfg, &[traj_out, report_out])?;
    println!("psi_hat(t_end)  {}", fmt_vec(&report.psi_hat_final));
    println!("max |e| on tail {:.3e} (tol {:.1e})", max_tail_error, cfg.tol);
    if let Some(m) = &report.membership {
        println!("affine-set gap  {:.3e} (tol {:.1e})", m.distance, m.tol);
    }
    if let Some(r) = &report.retention {
        println!("retention gap   {:.3e} (target {})", r.gap, fmt_vec(&r.target));
    }
    println!("{}", if pass { "PASS" } else { "FAIL" });
    Ok(pass.into())
}
