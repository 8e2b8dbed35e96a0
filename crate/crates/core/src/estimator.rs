//! PE subspace estimation and regularity diagnostics.
//!
//! Estimation is two-stage: eigenvectors of the tail-averaged Gram matrix give
//! candidate directions, and each candidate must then pass the sliding-window
//! directional test to enter the estimated PE subspace. Averaging alone is not
//! enough: the pulse-train pair `(γ, 1 − γ)` has a full-rank average Gram matrix
//! while neither axis is PE.
//!
//! The regularity diagnostic samples directions inside the estimate (must pass),
//! inside its complement (must fail) and mixed directions with a sizeable PE
//! component (must pass). Any violation is a witness of non-regularity. This is
//! evidence on a finite horizon, not a proof.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{input, range, Result};
use crate::excitation::{directional_pe_test, GramSweep, PEVerdict};
use crate::geometry::{complement, Subspace};

pub const DEFAULT_EIG_TOL: f64 = 1e-6;
pub const DEFAULT_N_DIRS: usize = 50;
/// Minimum norm of the PE component of a mixed probe direction.
pub const MIXED_PE_FRACTION: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    #[serde(rename = "T")]
    pub window: f64,
    pub t_tail: f64,
    pub beta: f64,
    pub eig_tol: f64,
    pub n_dirs: usize,
    pub seed: u64,
}

impl EstimatorConfig {
    pub fn new(window: f64, t_tail: f64, beta: f64) -> Self {
        Self {
            window,
            t_tail,
            beta,
            eig_tol: DEFAULT_EIG_TOL,
            n_dirs: DEFAULT_N_DIRS,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegularityFlag {
    ConsistentWithRegular,
    NonRegularEvidence,
}

/// Where a probe direction was drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProbeKind {
    /// Inside the estimated PE subspace; expected to pass.
    PeSubspace,
    /// Inside the complement; expected to fail.
    Complement,
    /// PE component of norm at least [`MIXED_PE_FRACTION`]; expected to pass.
    Mixed,
}

/// A probe direction whose verdict contradicts regularity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub kind: ProbeKind,
    pub direction: Vec<f64>,
    pub verdict: PEVerdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularityReport {
    pub flag: RegularityFlag,
    pub witnesses: Vec<Witness>,
    pub n_dirs: usize,
    pub seed: u64,
    /// Total number of directional tests run.
    pub probes: usize,
}

/// Result of [`estimate_pe_subspace`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PEReport {
    #[serde(rename = "W_hat")]
    pub pe_subspace: Subspace,
    pub q_pe: usize,
    pub beta_used: f64,
    #[serde(rename = "T_used")]
    pub window_used: f64,
    pub t_tail: f64,
    /// Eigenvalues of the tail-averaged Gram matrix, descending.
    pub eigenvalues: Vec<f64>,
    /// Verdicts for every eigen-direction: kept candidates first, then the complement basis.
    pub per_direction: Vec<PEVerdict>,
    pub regular_evidence: RegularityReport,
}

impl PEReport {
    pub fn is_regular(&self) -> bool {
        self.regular_evidence.flag == RegularityFlag::ConsistentWithRegular
    }
}

fn sorted_eigen(m: DMatrix<f64>) -> Vec<(f64, DVector<f64>)> {
    let eig = SymmetricEigen::new(m);
    let mut pairs: Vec<(f64, DVector<f64>)> = eig
        .eigenvalues
        .iter()
        .zip(eig.eigenvectors.column_iter())
        .map(|(&l, v)| (l, v.into_owned()))
        .collect();
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    pairs
}

/// Estimates the PE subspace of the swept signal on the tail `[t_tail, end]`.
pub fn estimate_pe_subspace(sweep: &GramSweep, cfg: &EstimatorConfig) -> Result<PEReport> {
    if !(cfg.beta.is_finite() && cfg.beta > 0.0) {
        return input(format!("beta must be positive, got {}", cfg.beta));
    }
    let grid = *sweep.grid();
    let q = sweep.dim();
    let tail_len = grid.end() - cfg.t_tail;
    if !(tail_len >= cfg.window && tail_len > 0.0) {
        return range(format!(
            "tail [{}, {}] is shorter than the window {}",
            cfg.t_tail,
            grid.end(),
            cfg.window
        ));
    }
    let tail_gram = sweep.window_gram(cfg.t_tail, tail_len)?;
    let pairs = if q == 0 { Vec::new() } else { sorted_eigen(tail_gram) };
    let eigenvalues: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let lmax = eigenvalues.first().copied().unwrap_or(0.0).max(0.0);

    let mut kept = Vec::new();
    let mut kept_verdicts = Vec::new();
    let mut rejected = Vec::new();
    let mut rejected_verdicts = Vec::new();
    for (lambda, v) in pairs {
        let verdict = directional_pe_test(sweep, v.as_slice(), cfg.window, cfg.t_tail, cfg.beta)?;
        if lmax > 0.0 && lambda >= cfg.eig_tol * lmax && verdict.pass {
            kept.push(v);
            kept_verdicts.push(verdict);
        } else {
            rejected.push(v);
            rejected_verdicts.push(verdict);
        }
    }
    let pe_subspace = if kept.is_empty() {
        Subspace::zero(q)
    } else {
        Subspace::from_orthonormal(DMatrix::from_columns(&kept))?
    };

    let mut report = diagnose(sweep, &pe_subspace, &rejected, cfg)?;
    // complement basis directions that pass are witnesses as well
    for (v, verdict) in rejected.iter().zip(&rejected_verdicts) {
        if verdict.pass {
            report.witnesses.push(Witness {
                kind: ProbeKind::Complement,
                direction: v.iter().copied().collect(),
                verdict: verdict.clone(),
            });
        }
    }
    report.probes += rejected.len();
    report.flag = flag_for(&report.witnesses);

    let mut per_direction = kept_verdicts;
    per_direction.extend(rejected_verdicts);
    Ok(PEReport {
        q_pe: pe_subspace.dim(),
        pe_subspace,
        beta_used: cfg.beta,
        window_used: cfg.window,
        t_tail: per_direction.first().map_or(cfg.t_tail, |v| v.t_tail),
        eigenvalues,
        per_direction,
        regular_evidence: report,
    })
}

/// Directional verdicts for each probe direction; failing ones sample the non-PE set.
pub fn probe_nonpe_set(
    sweep: &GramSweep,
    directions: &[DVector<f64>],
    beta: f64,
    window: f64,
    t_tail: f64,
) -> Result<Vec<(DVector<f64>, PEVerdict)>> {
    directions
        .iter()
        .map(|d| Ok((d.clone(), directional_pe_test(sweep, d.as_slice(), window, t_tail, beta)?)))
        .collect()
}

/// Randomized check that the non-PE set of the swept signal behaves like the
/// subspace `complement(pe_subspace)`.
pub fn regularity_diagnostic(
    sweep: &GramSweep,
    pe_subspace: &Subspace,
    n_dirs: usize,
    seed: u64,
    beta: f64,
    window: f64,
    t_tail: f64,
) -> Result<RegularityReport> {
    let comp = complement(pe_subspace);
    let basis: Vec<DVector<f64>> = comp.basis().column_iter().map(|c| c.into_owned()).collect();
    let cfg = EstimatorConfig {
        window,
        t_tail,
        beta,
        eig_tol: DEFAULT_EIG_TOL,
        n_dirs,
        seed,
    };
    diagnose(sweep, pe_subspace, &basis, &cfg)
}

fn flag_for(witnesses: &[Witness]) -> RegularityFlag {
    if witnesses.is_empty() {
        RegularityFlag::ConsistentWithRegular
    } else {
        RegularityFlag::NonRegularEvidence
    }
}

/// `complement_basis` must be an orthonormal basis of the complement of `pe_subspace`.
fn diagnose(
    sweep: &GramSweep,
    pe_subspace: &Subspace,
    complement_basis: &[DVector<f64>],
    cfg: &EstimatorConfig,
) -> Result<RegularityReport> {
    if cfg.n_dirs == 0 {
        return input("n_dirs must be at least 1");
    }
    let q = sweep.dim();
    if pe_subspace.ambient_dim() != q {
        return input(format!(
            "subspace lives in ℝ^{} but signal has dimension {q}",
            pe_subspace.ambient_dim()
        ));
    }
    let comp = if complement_basis.is_empty() {
        Subspace::zero(q)
    } else {
        Subspace::from_orthonormal(DMatrix::from_columns(complement_basis))?
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    // (direction, kind, level at which it must pass / below which it must fail)
    let mut probes: Vec<(DVector<f64>, ProbeKind, f64)> = Vec::new();

    // pairwise sums and differences of the complement basis
    for i in 0..complement_basis.len() {
        for j in i + 1..complement_basis.len() {
            let (a, b) = (&complement_basis[i], &complement_basis[j]);
            let s = std::f64::consts::FRAC_1_SQRT_2;
            probes.push(((a + b) * s, ProbeKind::Complement, cfg.beta));
            probes.push(((a - b) * s, ProbeKind::Complement, cfg.beta));
        }
    }
    for _ in 0..cfg.n_dirs {
        if let Some(u) = pe_subspace.random_unit(&mut rng) {
            probes.push((u, ProbeKind::PeSubspace, cfg.beta));
        }
        if let Some(v) = comp.random_unit(&mut rng) {
            probes.push((v, ProbeKind::Complement, cfg.beta));
        }
    }
    if pe_subspace.dim() > 0 && comp.dim() > 0 {
        for _ in 0..cfg.n_dirs {
            let a: f64 = rng.random_range(MIXED_PE_FRACTION..=1.0);
            let u = pe_subspace.random_unit(&mut rng).expect("non-empty");
            let v = comp.random_unit(&mut rng).expect("non-empty");
            // the PE part alone carries energy a²·β
            probes.push((u * a + v * (1.0 - a * a).max(0.0).sqrt(), ProbeKind::Mixed, a * a * cfg.beta));
        }
    }

    let mut witnesses = Vec::new();
    for (d, kind, level) in &probes {
        let verdict = directional_pe_test(sweep, d.as_slice(), cfg.window, cfg.t_tail, *level)?;
        let expected_pass = !matches!(kind, ProbeKind::Complement);
        if verdict.pass != expected_pass {
            witnesses.push(Witness {
                kind: *kind,
                direction: d.iter().copied().collect(),
                verdict,
            });
        }
    }
    Ok(RegularityReport {
        flag: flag_for(&witnesses),
        witnesses,
        n_dirs: cfg.n_dirs,
        seed: cfg.seed,
        probes: probes.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::largest_principal_angle;
    use crate::signal::{
        envelope_scale, pulse_train_pair, sample_sinusoid_mix, stack, SampledSignal, TimeGrid,
    };
    use std::f64::consts::{FRAC_PI_2, PI};

    fn grid(end: f64) -> TimeGrid {
        TimeGrid::covering(0.0, end, 1e-2).unwrap()
    }

    fn sin1(g: TimeGrid) -> SampledSignal {
        sample_sinusoid_mix(&[1.0], &[1.0], &[0.0], &DMatrix::identity(1, 1), g).unwrap()
    }

    fn decay(g: TimeGrid, rate: f64) -> SampledSignal {
        envelope_scale(&SampledSignal::constant(&[1.0], g).unwrap(), rate).unwrap()
    }

    fn axis(q: usize, i: usize) -> Subspace {
        let mut v = DVector::zeros(q);
        v[i] = 1.0;
        crate::geometry::span(q, &[v], 1e-10).unwrap()
    }

    #[test]
    fn sin_cos_full_rank() {
        let g = grid(60.0);
        let w = sample_sinusoid_mix(&[1.0, 1.0], &[1.0, 1.0], &[0.0, FRAC_PI_2], &DMatrix::identity(2, 2), g).unwrap();
        let r = estimate_pe_subspace(&GramSweep::new(&w), &EstimatorConfig::new(2.0 * PI, 0.0, 0.25)).unwrap();
        assert_eq!(r.q_pe, 2);
        assert!(r.is_regular());
        assert!(r.eigenvalues.iter().all(|l| (l - 0.5).abs() < 1e-2));
    }

    #[test]
    fn repeated_sine_rank_one() {
        let g = grid(60.0);
        let s = sin1(g);
        let w = stack(&s, &s).unwrap();
        let r = estimate_pe_subspace(&GramSweep::new(&w), &EstimatorConfig::new(2.0 * PI, 0.0, 0.25)).unwrap();
        assert_eq!(r.q_pe, 1);
        let expected = crate::geometry::span(2, &[DVector::from_vec(vec![1.0, 1.0])], 1e-10).unwrap();
        assert!(largest_principal_angle(&r.pe_subspace, &expected).unwrap() < 1e-8);
        assert!(r.is_regular(), "{:?}", r.regular_evidence.witnesses);
    }

    #[test]
    fn transient_component_dropped() {
        let g = grid(60.0);
        let w = stack(&sin1(g), &decay(g, 1.0)).unwrap();
        let r = estimate_pe_subspace(&GramSweep::new(&w), &EstimatorConfig::new(2.0 * PI, 30.0, 0.2)).unwrap();
        assert_eq!(r.q_pe, 1);
        assert!(largest_principal_angle(&r.pe_subspace, &axis(2, 0)).unwrap() < 1e-6);
        assert!(r.is_regular(), "{:?}", r.regular_evidence.witnesses);
        assert!(r.per_direction[0].pass && !r.per_direction[1].pass);
    }

    #[test]
    fn degenerate_tail() {
        let w = sin1(grid(10.0));
        let s = GramSweep::new(&w);
        assert!(matches!(
            estimate_pe_subspace(&s, &EstimatorConfig::new(2.0, 9.0, 0.1)),
            Err(crate::Error::Range(_))
        ));
        assert!(matches!(
            estimate_pe_subspace(&s, &EstimatorConfig::new(2.0, 0.0, 0.0)),
            Err(crate::Error::Input(_))
        ));
    }

    #[test]
    fn cross_shaped_nonpe_set() {
        let g = grid(126.0);
        let s = GramSweep::new(&pulse_train_pair(g).unwrap());
        let dirs = [
            DVector::from_vec(vec![1.0, 0.0]),
            DVector::from_vec(vec![0.0, 1.0]),
            DVector::from_vec(vec![1.0, 1.0]),
        ];
        let v = probe_nonpe_set(&s, &dirs, 0.1, 4.0, 0.0).unwrap();
        assert!(!v[0].1.pass && !v[1].1.pass && v[2].1.pass);
        assert!(probe_nonpe_set(&s, &[DVector::zeros(2)], 0.1, 4.0, 0.0).is_err());
    }

    #[test]
    fn vanishing_and_sin_cos_probes() {
        let g = grid(60.0);
        let sc = sample_sinusoid_mix(&[1.0, 1.0], &[1.0, 1.0], &[0.0, FRAC_PI_2], &DMatrix::identity(2, 2), g).unwrap();
        let dirs: Vec<_> = (0..12)
            .map(|k| {
                let th = k as f64 * PI / 12.0;
                DVector::from_vec(vec![th.cos(), th.sin()])
            })
            .collect();
        let all_pass = probe_nonpe_set(&GramSweep::new(&sc), &dirs, 0.25, 2.0 * PI, 0.0).unwrap();
        assert!(all_pass.iter().all(|(_, v)| v.pass));
        let van = envelope_scale(&sc, 1.0).unwrap();
        let all_fail = probe_nonpe_set(&GramSweep::new(&van), &dirs, 1e-9, 2.0 * PI, 30.0).unwrap();
        assert!(all_fail.iter().all(|(_, v)| !v.pass));
    }

    #[test]
    fn diagnostic_regular_signal() {
        let g = grid(60.0);
        let w = stack(&sin1(g), &decay(g, 1.0)).unwrap();
        let s = GramSweep::new(&w);
        let r = regularity_diagnostic(&s, &axis(2, 0), 50, 1, 0.2, 2.0 * PI, 30.0).unwrap();
        assert_eq!(r.flag, RegularityFlag::ConsistentWithRegular);
        assert!(r.probes >= 150);
        assert!(regularity_diagnostic(&s, &axis(2, 0), 0, 1, 0.2, 2.0 * PI, 30.0).is_err());
    }

    #[test]
    fn diagnostic_pulse_train() {
        let g = grid(126.0);
        let s = GramSweep::new(&pulse_train_pair(g).unwrap());
        let r = estimate_pe_subspace(&s, &EstimatorConfig::new(4.0, 0.0, 0.1)).unwrap();
        assert_eq!(r.q_pe, 0);
        assert_eq!(r.regular_evidence.flag, RegularityFlag::NonRegularEvidence);
        let diag = std::f64::consts::FRAC_1_SQRT_2;
        assert!(r.regular_evidence.witnesses.iter().any(|w| {
            (w.direction[0].abs() - diag).abs() < 1e-9 && (w.direction[1].abs() - diag).abs() < 1e-9
        }));
    }

    #[test]
    fn diagnostic_zero_signal() {
        let s = GramSweep::new(&SampledSignal::zeros(2, grid(20.0)));
        let r = estimate_pe_subspace(&s, &EstimatorConfig::new(2.0, 0.0, 0.1)).unwrap();
        assert_eq!(r.q_pe, 0);
        assert!(r.is_regular());
    }

    #[test]
    fn deterministic_given_seed() {
        let g = grid(60.0);
        let w = stack(&stack(&sin1(g), &decay(g, 1.0)).unwrap(), &sin1(g)).unwrap();
        let s = GramSweep::new(&w);
        let mut cfg = EstimatorConfig::new(2.0 * PI, 30.0, 0.1);
        cfg.seed = 42;
        let a = estimate_pe_subspace(&s, &cfg).unwrap();
        let b = estimate_pe_subspace(&s, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn scale_equivariance() {
        let g = grid(60.0);
        let s = sin1(g);
        let w = stack(&stack(&s, &decay(g, 1.0)).unwrap(), &s).unwrap();
        let cfg = EstimatorConfig::new(2.0 * PI, 30.0, 0.1);
        let a = estimate_pe_subspace(&GramSweep::new(&w), &cfg).unwrap();
        for c in [-3.0, 0.01, 7.5] {
            let mut scaled = cfg;
            scaled.beta *= c * c;
            let b = estimate_pe_subspace(&GramSweep::new(&w.scale(c)), &scaled).unwrap();
            assert_eq!(a.q_pe, b.q_pe);
            assert!(largest_principal_angle(&a.pe_subspace, &b.pe_subspace).unwrap() < 1e-8);
        }
    }

    #[test]
    fn json_field_names() {
        let g = grid(30.0);
        let r = estimate_pe_subspace(&GramSweep::new(&sin1(g)), &EstimatorConfig::new(2.0 * PI, 0.0, 0.1)).unwrap();
        let v = serde_json::to_value(&r).unwrap();
        for key in ["W_hat", "q_pe", "beta_used", "T_used", "t_tail", "eigenvalues", "per_direction", "regular_evidence"] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        assert_eq!(v["regular_evidence"]["flag"], "consistent-with-regular");
    }
}
