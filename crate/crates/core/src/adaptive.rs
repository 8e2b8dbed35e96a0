//! Gradient adaptive law under the static error model.
//!
//! The estimate follows `ψ̂′ = −Γ·w(t)·e(t)` with `e = wᵀ(t)(ψ̂ − ψ)`, so the
//! parameter error `ψ̃ = ψ̂ − ψ` obeys `ψ̃′ = −Γ·w·wᵀ·ψ̃`. When `e → 0` the
//! error ends up in the non-PE set of `w`, i.e. `ψ̂` approaches the affine set
//! `ψ + W^⊥`. With `Γ = g·I` the component of `ψ̃` orthogonal to the PE subspace
//! stays where it started, which is what the retention experiment checks.

use std::io::Write;

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{input, range, Error, Result};
use crate::geometry::Subspace;
use crate::signal::SampledSignal;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Integrator {
    Rk4,
    Euler,
}

impl std::fmt::Display for Integrator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Integrator::Rk4 => "rk4",
            Integrator::Euler => "euler",
        })
    }
}

/// Regressor, true parameter, initial estimate and adaptation gain.
#[derive(Debug, Clone)]
pub struct AdaptiveProblem {
    pub w: SampledSignal,
    pub psi_true: DVector<f64>,
    pub psi_hat0: DVector<f64>,
    pub gain: DMatrix<f64>,
}

impl AdaptiveProblem {
    /// Validates dimensions and that the gain is symmetric positive semidefinite.
    ///
    /// A zero gain is accepted (frozen estimate); Lyapunov quantities need a
    /// positive definite gain and check it themselves.
    pub fn new(
        w: SampledSignal,
        psi_true: DVector<f64>,
        psi_hat0: DVector<f64>,
        gain: DMatrix<f64>,
    ) -> Result<Self> {
        let q = w.dim();
        if psi_true.len() != q || psi_hat0.len() != q {
            return input(format!(
                "parameter vectors have lengths {} and {}, regressor has dimension {q}",
                psi_true.len(),
                psi_hat0.len()
            ));
        }
        if gain.nrows() != q || gain.ncols() != q {
            return input(format!("gain must be {q} × {q}"));
        }
        if psi_true.iter().chain(psi_hat0.iter()).chain(gain.iter()).any(|v| !v.is_finite()) {
            return input("parameters and gain must be finite");
        }
        let asym = (&gain - gain.transpose()).abs().max();
        if q > 0 && asym > 1e-12 * gain.abs().max().max(1.0) {
            return input(format!("gain is not symmetric (asymmetry {asym:.2e})"));
        }
        if q > 0 && gain.clone().symmetric_eigenvalues().min() < -1e-12 * gain.abs().max() {
            return input("gain must be positive semidefinite");
        }
        Ok(Self {
            w,
            psi_true,
            psi_hat0,
            gain,
        })
    }

    /// `Γ = g·I`.
    pub fn with_scalar_gain(w: SampledSignal, psi_true: DVector<f64>, psi_hat0: DVector<f64>, g: f64) -> Result<Self> {
        let q = w.dim();
        Self::new(w, psi_true, psi_hat0, DMatrix::identity(q, q) * g)
    }

    pub fn dim(&self) -> usize {
        self.w.dim()
    }

    /// `g` when the gain is `g·I` with `g > 0`.
    pub fn scalar_gain(&self) -> Option<f64> {
        let q = self.dim();
        let g = if q == 0 { return None } else { self.gain[(0, 0)] };
        let dev = (&self.gain - DMatrix::identity(q, q) * g).abs().max();
        (g > 0.0 && dev <= 1e-12 * g).then_some(g)
    }
}

/// Sampled trajectory of an adaptive-law run.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub times: Vec<f64>,
    /// `q × (steps + 1)`; column `k` is `ψ̂(t_k)`.
    pub trajectory: DMatrix<f64>,
    /// `e(t_k) = wᵀ(t_k)(ψ̂(t_k) − ψ)`.
    pub errors: Vec<f64>,
    pub integrator: Integrator,
    pub dt: f64,
}

impl RunResult {
    pub fn psi_hat_final(&self) -> DVector<f64> {
        self.trajectory.column(self.trajectory.ncols() - 1).into_owned()
    }

    /// Writes `t,psi_hat_1,...,psi_hat_q,e`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut writer = csv::Writer::from_writer(out);
        let q = self.trajectory.nrows();
        let mut header = vec!["t".to_string()];
        header.extend((1..=q).map(|i| format!("psi_hat_{i}")));
        header.push("e".into());
        writer.write_record(&header)?;
        for (k, &t) in self.times.iter().enumerate() {
            let mut row = vec![t.to_string()];
            row.extend(self.trajectory.column(k).iter().map(|v| v.to_string()));
            row.push(self.errors[k].to_string());
            writer.write_record(&row)?;
        }
        writer.flush()?;
        Ok(())
    }
}

/// Integrates `ψ̂′ = −Γ·w·wᵀ·(ψ̂ − ψ)` from the regressor's start time to `t_end`.
///
/// `w` is linearly interpolated between its grid points; the grid must be at least
/// as fine as `dt`.
pub fn simulate_gradient_law(
    problem: &AdaptiveProblem,
    dt: f64,
    t_end: f64,
    integrator: Integrator,
) -> Result<RunResult> {
    if !(dt.is_finite() && dt > 0.0) {
        return input(format!("step must be positive, got {dt}"));
    }
    let grid = *problem.w.grid();
    if grid.dt() > dt * (1.0 + 1e-9) {
        return input(format!(
            "regressor step {} is coarser than the integration step {dt}",
            grid.dt()
        ));
    }
    let t0 = grid.t0();
    if t_end.is_nan() || t_end <= t0 || t_end > grid.end() + 1e-9 * dt {
        return range(format!(
            "t_end {t_end} outside the regressor horizon ({t0}, {}]",
            grid.end()
        ));
    }
    let steps = ((t_end - t0) / dt).round() as usize;
    let q = problem.dim();
    let psi = &problem.psi_true;
    let gain = &problem.gain;
    let end = grid.end();
    let w_at = |t: f64| problem.w.value_at(t.min(end));
    let rhs = |t: f64, x: &DVector<f64>| -> Result<DVector<f64>> {
        let w = w_at(t)?;
        let e = w.dot(&(x - psi));
        Ok(gain * (w * -e))
    };

    let mut trajectory = DMatrix::zeros(q, steps + 1);
    let mut times = Vec::with_capacity(steps + 1);
    let mut errors = Vec::with_capacity(steps + 1);
    let mut x = problem.psi_hat0.clone();
    for k in 0..=steps {
        let t = t0 + k as f64 * dt;
        times.push(t);
        errors.push(w_at(t)?.dot(&(&x - psi)));
        trajectory.set_column(k, &x);
        if k == steps {
            break;
        }
        x = match integrator {
            Integrator::Euler => &x + rhs(t, &x)? * dt,
            Integrator::Rk4 => {
                let k1 = rhs(t, &x)?;
                let k2 = rhs(t + 0.5 * dt, &(&x + &k1 * (0.5 * dt)))?;
                let k3 = rhs(t + 0.5 * dt, &(&x + &k2 * (0.5 * dt)))?;
                let k4 = rhs(t + dt, &(&x + &k3 * dt))?;
                &x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0)
            }
        };
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence {
                step: k + 1,
                time: t + dt,
            });
        }
    }
    Ok(RunResult {
        times,
        trajectory,
        errors,
        integrator,
        dt,
    })
}

/// `max |e(t)|` over the last `tail_fraction` of the run is at most `tol`.
pub fn check_error_regulation(result: &RunResult, tail_fraction: f64, tol: f64) -> Result<bool> {
    if !(tail_fraction > 0.0 && tail_fraction < 1.0) {
        return input(format!("tail_fraction must lie in (0, 1), got {tail_fraction}"));
    }
    let (start, end) = (result.times[0], *result.times.last().unwrap());
    let from = end - tail_fraction * (end - start);
    let worst = result
        .times
        .iter()
        .zip(&result.errors)
        .filter(|(&t, _)| t >= from)
        .map(|(_, e)| e.abs())
        .fold(0.0, f64::max);
    Ok(worst <= tol)
}

fn check_dims(a: &DVector<f64>, b: &DVector<f64>, w: &Subspace) -> Result<()> {
    if a.len() != b.len() || a.len() != w.ambient_dim() {
        return input(format!(
            "dimension mismatch: vectors of length {} and {}, subspace in ℝ^{}",
            a.len(),
            b.len(),
            w.ambient_dim()
        ));
    }
    Ok(())
}

/// Distance `‖P_W(ψ̂ − ψ)‖` of the estimate from the affine set `ψ + W^⊥`.
pub fn check_affine_set_membership(
    psi_hat_final: &DVector<f64>,
    psi_true: &DVector<f64>,
    pe_subspace: &Subspace,
    tol: f64,
) -> Result<(bool, f64)> {
    check_dims(psi_hat_final, psi_true, pe_subspace)?;
    let distance = pe_subspace.project(&(psi_hat_final - psi_true)).norm();
    Ok((distance <= tol, distance))
}

/// Point of `ψ + W^⊥` closest to the nominal `ψ_o`: `ψ_o + P_W(ψ − ψ_o)`.
pub fn prior_knowledge_target(
    psi_o: &DVector<f64>,
    psi_true: &DVector<f64>,
    pe_subspace: &Subspace,
) -> Result<DVector<f64>> {
    check_dims(psi_o, psi_true, pe_subspace)?;
    Ok(psi_o + pe_subspace.project(&(psi_true - psi_o)))
}

/// `V(t_k) = ψ̃ᵀ Γ^{-1} ψ̃` along a run; needs a positive definite gain.
pub fn lyapunov_trace(problem: &AdaptiveProblem, result: &RunResult) -> Result<Vec<f64>> {
    let chol = Cholesky::new(problem.gain.clone())
        .ok_or_else(|| Error::Input("Lyapunov function needs a positive definite gain".into()))?;
    Ok(result
        .trajectory
        .column_iter()
        .map(|col| {
            let err = col - &problem.psi_true;
            err.dot(&chol.solve(&err))
        })
        .collect())
}

/// Outcome of [`retention_experiment`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetentionReport {
    pub psi_o: Vec<f64>,
    pub psi_true: Vec<f64>,
    pub target: Vec<f64>,
    pub psi_hat_final: Vec<f64>,
    pub gap: f64,
    pub tol: f64,
    pub pass: bool,
    pub gain: f64,
}

/// Runs the law from `ψ̂(0) = ψ_o` with `Γ = g·I` and compares the limit with
/// [`prior_knowledge_target`].
pub fn retention_experiment(
    problem: &AdaptiveProblem,
    pe_subspace: &Subspace,
    dt: f64,
    t_end: f64,
    tol: f64,
) -> Result<(RetentionReport, RunResult)> {
    let g = problem.scalar_gain().ok_or_else(|| {
        Error::Input("retention needs a gain of the form g·I with g > 0".into())
    })?;
    let psi_o = &problem.psi_hat0;
    let target = prior_knowledge_target(psi_o, &problem.psi_true, pe_subspace)?;
    let run = simulate_gradient_law(problem, dt, t_end, Integrator::Rk4)?;
    let last = run.psi_hat_final();
    let gap = (&last - &target).norm();
    let report = RetentionReport {
        psi_o: psi_o.iter().copied().collect(),
        psi_true: problem.psi_true.iter().copied().collect(),
        target: target.iter().copied().collect(),
        psi_hat_final: last.iter().copied().collect(),
        gap,
        tol,
        pass: gap <= tol,
        gain: g,
    };
    Ok((report, run))
}
