//! Sliding-window excitation tests.
//!
//! A [`GramSweep`] holds trapezoidal prefix integrals `S(t) = ∫_{t0}^{t} w wᵀ dτ`
//! so that any window average `M(t, T) = (S(t + T) − S(t)) / T` costs `O(q²)`.
//! Window ends that fall between grid points integrate the piecewise-linear
//! interpolant of `w wᵀ`, which agrees with the trapezoid rule on grid points.
//!
//! The PE tests are finite-horizon surrogates: a regressor is "PE at `(β, T)` with
//! tail `t_tail`" when every window starting on a grid point in
//! `[t_tail, end − T]` has its average Gram matrix (or directional energy) at
//! least `β`.

use std::io::Write;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{input, range, Result};
use crate::signal::{SampledSignal, TimeGrid};

/// Prefix integrals of `w(τ) wᵀ(τ)` on the signal grid.
#[derive(Debug, Clone)]
pub struct GramSweep {
    grid: TimeGrid,
    q: usize,
    values: DMatrix<f64>,
    // row-major q×q blocks, one per grid point
    prefix: Vec<f64>,
}

/// Range of grid-aligned window starts for a window of given length.
#[derive(Debug, Clone, Copy)]
struct Windows {
    first: usize,
    last: usize,
    cells: f64,
}

impl GramSweep {
    pub fn new(w: &SampledSignal) -> Self {
        let grid = *w.grid();
        let q = w.dim();
        let n = grid.len();
        let qq = q * q;
        let half_dt = 0.5 * grid.dt();
        let mut prefix = vec![0.0; n * qq];
        for j in 1..n {
            let a = w.sample(j - 1);
            let b = w.sample(j);
            let (done, rest) = prefix.split_at_mut(j * qq);
            let prev = &done[(j - 1) * qq..];
            let cur = &mut rest[..qq];
            for r in 0..q {
                for c in r..q {
                    let inc = half_dt * (a[r] * a[c] + b[r] * b[c]);
                    let v = prev[r * q + c] + inc;
                    cur[r * q + c] = v;
                    cur[c * q + r] = v;
                }
            }
        }
        Self {
            grid,
            q,
            values: w.values().clone(),
            prefix,
        }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.q
    }

    /// Prefix integral at grid index `j`.
    pub fn prefix(&self, j: usize) -> DMatrix<f64> {
        let qq = self.q * self.q;
        DMatrix::from_row_slice(self.q, self.q, &self.prefix[j * qq..(j + 1) * qq])
    }

    /// Prefix integral at fractional grid coordinate `x ∈ [0, n − 1]`.
    fn prefix_at(&self, x: f64) -> DMatrix<f64> {
        let (j, theta) = self.split(x);
        let mut s = self.prefix(j);
        if theta > 0.0 {
            let a = self.values.column(j);
            let b = self.values.column(j + 1);
            let fa = a * a.transpose();
            let fb = b * b.transpose();
            let dt = self.grid.dt();
            s += (&fa * theta + (fb - &fa) * (0.5 * theta * theta)) * dt;
        }
        s
    }

    /// `αᵀ S(x) α` without forming the matrix.
    fn quad_prefix_at(&self, x: f64, alpha: &[f64]) -> f64 {
        let (j, theta) = self.split(x);
        let qq = self.q * self.q;
        let block = &self.prefix[j * qq..(j + 1) * qq];
        let mut acc = 0.0;
        for r in 0..self.q {
            let mut row = 0.0;
            for c in 0..self.q {
                row += block[r * self.q + c] * alpha[c];
            }
            acc += alpha[r] * row;
        }
        if theta > 0.0 {
            let ya = self.project(j, alpha);
            let yb = self.project(j + 1, alpha);
            let (fa, fb) = (ya * ya, yb * yb);
            acc += self.grid.dt() * (theta * fa + 0.5 * theta * theta * (fb - fa));
        }
        acc
    }

    fn project(&self, j: usize, alpha: &[f64]) -> f64 {
        self.values.column(j).iter().zip(alpha).map(|(a, b)| a * b).sum()
    }

    fn split(&self, x: f64) -> (usize, f64) {
        let n = self.grid.len();
        if x >= (n - 1) as f64 {
            return (n - 1, 0.0);
        }
        let j = x.floor() as usize;
        (j, x - j as f64)
    }

    /// Window length in cells; a window must cover at least one grid step after rounding.
    fn cells(&self, window: f64) -> Result<f64> {
        if !(window.is_finite() && window > 0.0) {
            return range(format!("window length must be positive, got {window}"));
        }
        let x = window / self.grid.dt();
        let r = x.round();
        if r < 1.0 {
            return range(format!(
                "window length {window} spans no samples at dt = {}",
                self.grid.dt()
            ));
        }
        Ok(if (x - r).abs() <= 1e-9 * r { r } else { x })
    }

    fn windows(&self, window: f64, t_tail: f64) -> Result<Windows> {
        let cells = self.cells(window)?;
        let last_coord = (self.grid.len() - 1) as f64 - cells;
        if last_coord < 0.0 {
            return range(format!(
                "window {window} longer than the horizon {}",
                self.grid.span()
            ));
        }
        let last = (last_coord + 1e-9).floor() as usize;
        let tail = self.grid.coordinate(t_tail).round();
        if tail < 0.0 || tail > last as f64 {
            return range(format!(
                "no window starts in [{t_tail}, {}] for T = {window}",
                self.grid.time(last)
            ));
        }
        Ok(Windows {
            first: tail as usize,
            last,
            cells,
        })
    }

    /// Average Gram matrix `M(t, T)` over `[t, t + T]`.
    ///
    /// `t` and `t + T` may fall between grid points; the window must lie on the grid
    /// and span at least one step.
    pub fn window_gram(&self, t: f64, window: f64) -> Result<DMatrix<f64>> {
        let cells = self.cells(window)?;
        let x0 = self.grid.coordinate(t);
        let x1 = x0 + cells;
        let last = (self.grid.len() - 1) as f64;
        if x0 < 0.0 || x1 > last + 1e-9 {
            return range(format!(
                "window [{t}, {}] exits grid [{}, {}]",
                t + window,
                self.grid.t0(),
                self.grid.end()
            ));
        }
        let x1 = x1.min(last);
        let len = (x1 - x0) * self.grid.dt();
        Ok((self.prefix_at(x1) - self.prefix_at(x0)) / len)
    }

    /// `αᵀ M(t, T) α` at the grid-aligned start `i`.
    fn window_quad(&self, i: usize, cells: f64, alpha: &[f64]) -> f64 {
        let x0 = i as f64;
        let x1 = (x0 + cells).min((self.grid.len() - 1) as f64);
        (self.quad_prefix_at(x1, alpha) - self.quad_prefix_at(x0, alpha)) / (cells * self.grid.dt())
    }

    fn window_gram_at(&self, i: usize, cells: f64) -> DMatrix<f64> {
        let x0 = i as f64;
        let x1 = (x0 + cells).min((self.grid.len() - 1) as f64);
        (self.prefix_at(x1) - self.prefix(i)) / (cells * self.grid.dt())
    }

    /// Average of `(αᵀw)² / ‖α‖²` over the whole horizon.
    pub fn mean_power(&self, alpha: &[f64]) -> Result<f64> {
        let norm2 = check_alpha(alpha, self.q)?;
        let last = (self.grid.len() - 1) as f64;
        Ok(self.quad_prefix_at(last, alpha) / (norm2 * self.grid.span()))
    }
}

/// Builds the prefix-integral sweep for `w`.
pub fn build_gram_sweep(w: &SampledSignal) -> GramSweep {
    GramSweep::new(w)
}

fn check_alpha(alpha: &[f64], q: usize) -> Result<f64> {
    if alpha.len() != q {
        return input(format!("direction has {} components, signal has {q}", alpha.len()));
    }
    if alpha.iter().any(|v| !v.is_finite()) {
        return input("direction must be finite");
    }
    let norm2: f64 = alpha.iter().map(|a| a * a).sum();
    if norm2 == 0.0 {
        return input("direction must be non-zero");
    }
    Ok(norm2)
}

/// Outcome of a matrix or directional PE test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PEVerdict {
    /// Probed direction; `None` for the matrix test.
    pub alpha: Option<Vec<f64>>,
    #[serde(rename = "T")]
    pub window: f64,
    /// Grid time of the first window start considered.
    pub t_tail: f64,
    pub beta: f64,
    /// Worst window level found.
    pub beta_star: f64,
    pub pass: bool,
    /// Start of the worst window.
    pub argmin_window: f64,
}

/// Smallest eigenvalue of `M(t, T)` over all grid-aligned window starts after `t_tail`.
pub fn matrix_pe_test(sweep: &GramSweep, window: f64, t_tail: f64, beta: f64) -> Result<PEVerdict> {
    let win = sweep.windows(window, t_tail)?;
    let mut worst = f64::INFINITY;
    let mut arg = win.first;
    for i in win.first..=win.last {
        let m = sweep.window_gram_at(i, win.cells);
        let lmin = if sweep.q == 0 {
            0.0
        } else {
            SymmetricEigen::new(m).eigenvalues.min()
        };
        if lmin < worst {
            worst = lmin;
            arg = i;
        }
    }
    Ok(PEVerdict {
        alpha: None,
        window,
        t_tail: sweep.grid.time(win.first),
        beta,
        beta_star: worst,
        pass: worst >= beta,
        argmin_window: sweep.grid.time(arg),
    })
}

/// Minimum over window starts of `αᵀ M(t, T) α / ‖α‖²`.
pub fn directional_pe_test(
    sweep: &GramSweep,
    alpha: &[f64],
    window: f64,
    t_tail: f64,
    beta: f64,
) -> Result<PEVerdict> {
    let norm2 = check_alpha(alpha, sweep.q)?;
    let win = sweep.windows(window, t_tail)?;
    let mut worst = f64::INFINITY;
    let mut arg = win.first;
    for i in win.first..=win.last {
        let e = sweep.window_quad(i, win.cells, alpha) / norm2;
        if e < worst {
            worst = e;
            arg = i;
        }
    }
    Ok(PEVerdict {
        alpha: Some(alpha.to_vec()),
        window,
        t_tail: sweep.grid.time(win.first),
        beta,
        beta_star: worst,
        pass: worst >= beta,
        argmin_window: sweep.grid.time(arg),
    })
}

/// The set of window starts at which direction `α` is excited at level `β`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcitationTimes {
    pub alpha: Vec<f64>,
    pub beta: f64,
    #[serde(rename = "T")]
    pub window: f64,
    /// Qualifying window starts, ascending.
    pub times: Vec<f64>,
    /// Largest gap between consecutive qualifying starts (0 for a single time).
    pub max_gap: Option<f64>,
    pub last: Option<f64>,
    /// First and last admissible window starts.
    pub candidate_range: (f64, f64),
    #[serde(skip)]
    mask: Vec<bool>,
}

impl ExcitationTimes {
    pub fn first(&self) -> Option<f64> {
        self.times.first().copied()
    }

    /// Gaps between consecutive qualifying starts.
    pub fn gaps(&self) -> Vec<f64> {
        self.times.windows(2).map(|p| p[1] - p[0]).collect()
    }

    /// Writes `t,qualifies` for every admissible window start.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut writer = csv::Writer::from_writer(out);
        writer.write_record(["t", "qualifies"])?;
        let (t0, t1) = self.candidate_range;
        let n = self.mask.len();
        let step = if n > 1 { (t1 - t0) / (n - 1) as f64 } else { 0.0 };
        for (j, &q) in self.mask.iter().enumerate() {
            writer.write_record([format!("{}", t0 + j as f64 * step), u8::from(q).to_string()])?;
        }
        writer.flush()?;
        Ok(())
    }
}

/// All grid-aligned `t` with `αᵀ M(t, T) α ≥ β ‖α‖²`.
pub fn excitation_times(sweep: &GramSweep, alpha: &[f64], beta: f64, window: f64) -> Result<ExcitationTimes> {
    let norm2 = check_alpha(alpha, sweep.q)?;
    let win = sweep.windows(window, sweep.grid.t0())?;
    let threshold = beta * norm2;
    let mut mask = Vec::with_capacity(win.last + 1);
    let mut times = Vec::new();
    for i in 0..=win.last {
        let ok = sweep.window_quad(i, win.cells, alpha) >= threshold;
        mask.push(ok);
        if ok {
            times.push(sweep.grid.time(i));
        }
    }
    let max_gap = match times.len() {
        0 => None,
        1 => Some(0.0),
        _ => times.windows(2).map(|p| p[1] - p[0]).reduce(f64::max),
    };
    Ok(ExcitationTimes {
        alpha: alpha.to_vec(),
        beta,
        window,
        last: times.last().copied(),
        times,
        max_gap,
        candidate_range: (sweep.grid.t0(), sweep.grid.time(win.last)),
        mask,
    })
}

/// Recurrence behaviour of a direction's excitation times.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Recurrence {
    /// Some probed `(β, T)` gives a relatively dense set of excitation times.
    Persistent,
    /// Every probed `(β, T)` stops qualifying before the cutoff.
    Terminating,
    /// Excitation keeps recurring but never densely.
    Irregular,
}

/// Gap statistics for one `(β, T)` probe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeEvidence {
    pub beta: f64,
    #[serde(rename = "T")]
    pub window: f64,
    pub count: usize,
    pub first: Option<f64>,
    pub last: Option<f64>,
    pub max_gap: Option<f64>,
    /// Lengths of the inactivity stretches (gaps longer than 1.5·dt), in time order.
    pub inactivity_gaps: Vec<f64>,
    pub relatively_dense: bool,
    pub recurs_past_cutoff: bool,
    /// Late inactivity gaps at least twice the early ones.
    pub gaps_grow: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecurrenceClass {
    pub label: Recurrence,
    /// Density length `T_d = horizon_split · horizon`.
    pub density_length: f64,
    /// Terminating cutoff time `t0 + horizon_split · horizon`.
    pub cutoff: f64,
    pub evidence: Vec<ProbeEvidence>,
}

impl RecurrenceClass {
    /// True when some probe recurs past the cutoff with growing inactivity gaps.
    pub fn growing_gaps(&self) -> bool {
        self.evidence.iter().any(|p| p.recurs_past_cutoff && p.gaps_grow)
    }
}

/// `β` levels `1e-4 … 1` relative to the mean power of `αᵀw`.
pub fn default_beta_grid(sweep: &GramSweep, alpha: &[f64]) -> Result<Vec<f64>> {
    let p = sweep.mean_power(alpha)?.max(f64::MIN_POSITIVE);
    Ok([1e-4, 1e-3, 1e-2, 1e-1, 1.0].iter().map(|r| r * p).collect())
}

/// Five log-spaced window lengths from `10·dt` to `horizon / 8`.
pub fn default_window_grid(grid: &TimeGrid) -> Vec<f64> {
    let lo = 10.0 * grid.dt();
    let hi = (grid.span() / 8.0).max(lo);
    let n = 5;
    (0..n)
        .map(|k| lo * (hi / lo).powf(k as f64 / (n - 1) as f64))
        .collect()
}

/// Default fraction of the horizon used as the density length `T_d`.
pub const DEFAULT_HORIZON_SPLIT: f64 = 0.1;

/// Classifies how the excitation of direction `α` recurs over the horizon.
///
/// With `T_d = horizon_split · horizon`:
/// - persistent: some probe has its first start within `T_d` of `t0`, all gaps
///   `≤ T_d` and its last start within `T_d` of the last admissible start;
/// - terminating: for every probe the last qualifying start precedes
///   `t0 + T_d` (or nothing qualifies);
/// - irregular: otherwise.
pub fn classify_recurrence(
    sweep: &GramSweep,
    alpha: &[f64],
    beta_grid: &[f64],
    window_grid: &[f64],
    horizon_split: f64,
) -> Result<RecurrenceClass> {
    check_alpha(alpha, sweep.q)?;
    if beta_grid.is_empty() || window_grid.is_empty() {
        return input("probing grids must be non-empty");
    }
    if !(horizon_split > 0.0 && horizon_split < 1.0) {
        return input(format!("horizon_split must lie in (0, 1), got {horizon_split}"));
    }
    let grid = sweep.grid;
    let density_length = horizon_split * grid.span();
    let cutoff = grid.t0() + density_length;
    let mut evidence = Vec::with_capacity(beta_grid.len() * window_grid.len());
    for &window in window_grid {
        for &beta in beta_grid {
            let set = excitation_times(sweep, alpha, beta, window)?;
            evidence.push(probe_evidence(&set, grid.dt(), density_length, cutoff));
        }
    }
    let label = if evidence.iter().any(|p| p.relatively_dense) {
        Recurrence::Persistent
    } else if evidence.iter().all(|p| p.last.is_none_or(|l| l < cutoff)) {
        Recurrence::Terminating
    } else {
        Recurrence::Irregular
    };
    Ok(RecurrenceClass {
        label,
        density_length,
        cutoff,
        evidence,
    })
}

fn probe_evidence(set: &ExcitationTimes, dt: f64, density_length: f64, cutoff: f64) -> ProbeEvidence {
    let (t_first, t_last) = set.candidate_range;
    let inactivity_gaps: Vec<f64> = set.gaps().into_iter().filter(|&g| g > 1.5 * dt).collect();
    let relatively_dense = match (set.first(), set.last, set.max_gap) {
        (Some(first), Some(last), Some(gap)) => {
            first - t_first <= density_length && t_last - last <= density_length && gap <= density_length
        }
        _ => false,
    };
    let gaps_grow = {
        let k = inactivity_gaps.len();
        if k < 2 {
            false
        } else {
            let third = k.div_ceil(3);
            let early = inactivity_gaps[..third].iter().copied().fold(0.0, f64::max);
            let late = inactivity_gaps[k - third..].iter().copied().fold(0.0, f64::max);
            late >= 2.0 * early
        }
    };
    ProbeEvidence {
        beta: set.beta,
        window: set.window,
        count: set.times.len(),
        first: set.first(),
        last: set.last,
        max_gap: set.max_gap,
        inactivity_gaps,
        relatively_dense,
        recurs_past_cutoff: set.last.is_some_and(|l| l >= cutoff),
        gaps_grow,
    }
}
