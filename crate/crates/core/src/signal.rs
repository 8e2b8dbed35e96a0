//! Sampled regressor signals on uniform time grids.
//!
//! A [`SampledSignal`] stores a `q`-dimensional regressor `w(t)` as a `q × n`
//! matrix whose column `j` is `w(t0 + j·dt)`. Generators in this module declare
//! a [`Continuity`] tag for the signals they produce; the tag is never inferred
//! from samples.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector, DVectorView};
use serde::{Deserialize, Serialize};

use crate::error::{input, range, Error, Result};

/// Uniform time grid `t_j = t0 + j·dt`, `j = 0..n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    t0: f64,
    dt: f64,
    n: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, dt: f64, n: usize) -> Result<Self> {
        if !t0.is_finite() {
            return input("grid start must be finite");
        }
        if !(dt.is_finite() && dt > 0.0) {
            return input(format!("grid step must be positive, got {dt}"));
        }
        if n < 2 {
            return input(format!("grid needs at least 2 samples, got {n}"));
        }
        Ok(Self { t0, dt, n })
    }

    /// Grid starting at `t0` whose last point is the grid point nearest to `t_end`.
    pub fn covering(t0: f64, t_end: f64, dt: f64) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return input(format!("grid step must be positive, got {dt}"));
        }
        if !(t_end.is_finite() && t_end > t0) {
            return input(format!("grid end {t_end} must exceed start {t0}"));
        }
        let cells = ((t_end - t0) / dt).round() as usize;
        Self::new(t0, dt, cells + 1)
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn time(&self, j: usize) -> f64 {
        self.t0 + j as f64 * self.dt
    }

    /// Last grid time.
    pub fn end(&self) -> f64 {
        self.time(self.n - 1)
    }

    /// Length of the sampled interval, `(n − 1)·dt`.
    pub fn span(&self) -> f64 {
        (self.n - 1) as f64 * self.dt
    }

    /// Fractional grid coordinate of `t`, snapped to the nearest integer when it is
    /// within `1e-9` of one so that grid-aligned times stay exact.
    pub fn coordinate(&self, t: f64) -> f64 {
        let x = (t - self.t0) / self.dt;
        let r = x.round();
        if (x - r).abs() <= 1e-9 * r.abs().max(1.0) {
            r
        } else {
            x
        }
    }

    /// Index of the grid point nearest to `t`, or a range error if `t` is off the grid.
    pub fn nearest_index(&self, t: f64) -> Result<usize> {
        let x = self.coordinate(t).round();
        if !(0.0..=(self.n - 1) as f64).contains(&x) {
            return range(format!(
                "time {t} outside grid [{}, {}]",
                self.t0,
                self.end()
            ));
        }
        Ok(x as usize)
    }
}

/// Declared regularity class of a generated signal.
///
/// Ordered from weakest to strongest so that `min` gives the tag of a combination.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Continuity {
    Unknown,
    UniformlyPiecewiseContinuous,
    UniformlyContinuous,
}

/// A `q`-dimensional regressor sampled on a [`TimeGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct SampledSignal {
    grid: TimeGrid,
    values: DMatrix<f64>,
    continuity: Continuity,
}

impl SampledSignal {
    pub fn new(grid: TimeGrid, values: DMatrix<f64>, continuity: Continuity) -> Result<Self> {
        if values.ncols() != grid.len() {
            return input(format!(
                "signal has {} samples but grid has {}",
                values.ncols(),
                grid.len()
            ));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            let (row, col) = (pos % values.nrows().max(1), pos / values.nrows().max(1));
            return input(format!("non-finite sample at component {row}, index {col}"));
        }
        Ok(Self {
            grid,
            values,
            continuity,
        })
    }

    /// Samples `f(t)` at every grid point.
    pub fn from_fn<F>(grid: TimeGrid, q: usize, continuity: Continuity, mut f: F) -> Result<Self>
    where
        F: FnMut(f64) -> DVector<f64>,
    {
        let mut values = DMatrix::zeros(q, grid.len());
        for j in 0..grid.len() {
            let v = f(grid.time(j));
            if v.len() != q {
                return input(format!("generator returned {} components, expected {q}", v.len()));
            }
            values.set_column(j, &v);
        }
        Self::new(grid, values, continuity)
    }

    pub fn zeros(q: usize, grid: TimeGrid) -> Self {
        Self {
            grid,
            values: DMatrix::zeros(q, grid.len()),
            continuity: Continuity::UniformlyContinuous,
        }
    }

    /// The constant signal `w(t) ≡ c`.
    pub fn constant(c: &[f64], grid: TimeGrid) -> Result<Self> {
        let col = DVector::from_column_slice(c);
        Self::from_fn(grid, c.len(), Continuity::UniformlyContinuous, |_| col.clone())
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn into_values(self) -> DMatrix<f64> {
        self.values
    }

    pub fn continuity(&self) -> Continuity {
        self.continuity
    }

    /// Signal dimension `q`.
    pub fn dim(&self) -> usize {
        self.values.nrows()
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn sample(&self, j: usize) -> DVectorView<'_, f64> {
        self.values.column(j)
    }

    /// Linear interpolation of `w` at time `t`.
    pub fn value_at(&self, t: f64) -> Result<DVector<f64>> {
        let x = self.grid.coordinate(t);
        let last = (self.grid.len() - 1) as f64;
        if !(0.0..=last).contains(&x) {
            return range(format!(
                "time {t} outside signal horizon [{}, {}]",
                self.grid.t0(),
                self.grid.end()
            ));
        }
        let j = (x.floor() as usize).min(self.grid.len() - 2);
        let theta = x - j as f64;
        let a = self.values.column(j);
        let b = self.values.column(j + 1);
        Ok(a * (1.0 - theta) + b * theta)
    }

    /// Sum of two signals on the same grid; the continuity tag is the weaker of the two.
    pub fn add(&self, other: &SampledSignal) -> Result<SampledSignal> {
        self.check_same_grid(other)?;
        if self.dim() != other.dim() {
            return input(format!("cannot add signals of dims {} and {}", self.dim(), other.dim()));
        }
        Ok(SampledSignal {
            grid: self.grid,
            values: &self.values + &other.values,
            continuity: self.continuity.min(other.continuity),
        })
    }

    pub fn scale(&self, c: f64) -> SampledSignal {
        SampledSignal {
            grid: self.grid,
            values: &self.values * c,
            continuity: self.continuity,
        }
    }

    fn check_same_grid(&self, other: &SampledSignal) -> Result<()> {
        if self.grid != other.grid {
            return input(format!(
                "grid mismatch: {:?} vs {:?}",
                self.grid, other.grid
            ));
        }
        Ok(())
    }
}

/// Mixed sinusoids: column `j` is `mixing · s(t_j)` with `s_i(t) = amps_i·sin(freqs_i·t + phases_i)`.
pub fn sample_sinusoid_mix(
    freqs: &[f64],
    amps: &[f64],
    phases: &[f64],
    mixing: &DMatrix<f64>,
    grid: TimeGrid,
) -> Result<SampledSignal> {
    let m = freqs.len();
    if amps.len() != m || phases.len() != m {
        return input(format!(
            "sinusoid lists differ in length: {} freqs, {} amps, {} phases",
            m,
            amps.len(),
            phases.len()
        ));
    }
    if mixing.ncols() != m {
        return input(format!("mixing has {} columns, expected {m}", mixing.ncols()));
    }
    if mixing.iter().chain(freqs).chain(amps).chain(phases).any(|v| !v.is_finite()) {
        return input("sinusoid parameters must be finite");
    }
    let mut s = DVector::zeros(m);
    SampledSignal::from_fn(grid, mixing.nrows(), Continuity::UniformlyContinuous, |t| {
        for i in 0..m {
            s[i] = amps[i] * (freqs[i] * t + phases[i]).sin();
        }
        mixing * &s
    })
}

/// The partition of `[0, ∞)` into consecutive intervals of length `2^k`, `k = 1, 2, …`,
/// with `γ = 1` on odd-indexed intervals.
///
/// Interval `k` is `[2^k − 2, 2^{k+1} − 2)`; the stored boundaries are
/// `0, 2, 6, 14, …` up to the first one at or beyond the requested horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaSchedule {
    boundaries: Vec<f64>,
    odd_active: bool,
}

impl GammaSchedule {
    pub fn new(horizon: f64) -> Result<Self> {
        if !(horizon.is_finite() && horizon >= 0.0) {
            return input(format!("schedule horizon must be non-negative, got {horizon}"));
        }
        let mut boundaries = vec![0.0];
        let mut len = 2.0;
        while *boundaries.last().unwrap() < horizon || boundaries.len() < 2 {
            let next = boundaries.last().unwrap() + len;
            boundaries.push(next);
            len *= 2.0;
        }
        Ok(Self {
            boundaries,
            odd_active: true,
        })
    }

    pub fn boundaries(&self) -> &[f64] {
        &self.boundaries
    }

    /// `true` when odd-indexed intervals carry `γ = 1`.
    pub fn odd_active(&self) -> bool {
        self.odd_active
    }

    /// Index `k ≥ 1` of the interval containing `t ≥ 0` (half-open on the right).
    pub fn interval_index(&self, t: f64) -> usize {
        match self.boundaries.iter().position(|&b| b > t) {
            Some(k) => k,
            None => {
                // beyond the stored horizon: keep doubling
                let mut k = self.boundaries.len() - 1;
                let mut hi = *self.boundaries.last().unwrap();
                while hi <= t {
                    k += 1;
                    hi += 2f64.powi(k as i32);
                }
                k
            }
        }
    }
}

/// `γ(t)` for the `2^k` schedule: 1 on odd intervals, 0 on even ones, right-continuous.
pub fn gamma_eval(schedule: &GammaSchedule, t: f64) -> Result<u8> {
    if t.is_nan() || t < 0.0 {
        return input(format!("gamma is defined for t ≥ 0, got {t}"));
    }
    let odd = schedule.interval_index(t) % 2 == 1;
    Ok(u8::from(odd == schedule.odd_active))
}

/// Splits `v` into `(γ·v, (1 − γ)·v)`.
///
/// Grid times within `1e-9` of an integer are snapped to it before evaluating `γ`
/// so that boundaries that are grid points land in the right interval.
pub fn pathological_pair(v: &SampledSignal) -> Result<(SampledSignal, SampledSignal)> {
    let grid = *v.grid();
    if grid.t0() < 0.0 {
        return input(format!("pathological pair needs t0 ≥ 0, got {}", grid.t0()));
    }
    let schedule = GammaSchedule::new(grid.end())?;
    let q = v.dim();
    let mut on = DMatrix::zeros(q, grid.len());
    let mut off = DMatrix::zeros(q, grid.len());
    for j in 0..grid.len() {
        let t = grid.time(j);
        let r = t.round();
        let t = if (t - r).abs() <= 1e-9 * r.max(1.0) { r } else { t };
        if gamma_eval(&schedule, t)? == 1 {
            on.set_column(j, &v.values().column(j));
        } else {
            off.set_column(j, &v.values().column(j));
        }
    }
    let tag = v.continuity().min(Continuity::UniformlyPiecewiseContinuous);
    Ok((
        SampledSignal::new(grid, on, tag)?,
        SampledSignal::new(grid, off, tag)?,
    ))
}

/// The scalar `2^k` pulse-train pair `(γ, 1 − γ)` stacked into a 2-dimensional signal.
pub fn pulse_train_pair(grid: TimeGrid) -> Result<SampledSignal> {
    let one = SampledSignal::constant(&[1.0], grid)?;
    let (w1, w2) = pathological_pair(&one)?;
    stack(&w1, &w2)
}

/// `t ↦ L·w(t)`.
pub fn apply_linear_map(l: &DMatrix<f64>, w: &SampledSignal) -> Result<SampledSignal> {
    if l.ncols() != w.dim() {
        return input(format!(
            "map has {} columns but signal has dimension {}",
            l.ncols(),
            w.dim()
        ));
    }
    if l.iter().any(|v| !v.is_finite()) {
        return input("linear map must be finite");
    }
    SampledSignal::new(*w.grid(), l * w.values(), w.continuity())
}

/// Concatenates `w1` over `w2` component-wise.
pub fn stack(w1: &SampledSignal, w2: &SampledSignal) -> Result<SampledSignal> {
    w1.check_same_grid(w2)?;
    let (q1, q2) = (w1.dim(), w2.dim());
    let mut values = DMatrix::zeros(q1 + q2, w1.len());
    values.rows_mut(0, q1).copy_from(w1.values());
    values.rows_mut(q1, q2).copy_from(w2.values());
    Ok(SampledSignal {
        grid: *w1.grid(),
        values,
        continuity: w1.continuity().min(w2.continuity()),
    })
}

/// Multiplies each sample by `e^{−rate·t_j}`.
pub fn envelope_scale(w: &SampledSignal, rate: f64) -> Result<SampledSignal> {
    if !(rate.is_finite() && rate >= 0.0) {
        return input(format!("envelope rate must be non-negative, got {rate}"));
    }
    if rate == 0.0 {
        return Ok(w.clone());
    }
    let grid = *w.grid();
    let mut values = w.values().clone();
    for (j, mut col) in values.column_iter_mut().enumerate() {
        col *= (-rate * grid.time(j)).exp();
    }
    SampledSignal::new(grid, values, w.continuity())
}

fn fmt_f64(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || (1e-5..1e16).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

/// Writes `t,w1,...,wq` CSV, one row per grid point, shortest round-trip decimals.
pub fn write_csv<W: Write>(w: &SampledSignal, out: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string()];
    header.extend((1..=w.dim()).map(|i| format!("w{i}")));
    writer.write_record(&header)?;
    let mut row = Vec::with_capacity(w.dim() + 1);
    for j in 0..w.len() {
        row.clear();
        row.push(fmt_f64(w.grid().time(j)));
        row.extend(w.sample(j).iter().map(|&v| fmt_f64(v)));
        writer.write_record(&row)?;
    }
    writer.flush()?;
    Ok(())
}

/// Reads a signal written by [`write_csv`]. The grid step is recovered from the
/// time column; the continuity tag is [`Continuity::Unknown`] since files carry none.
pub fn read_csv<R: Read>(input_data: R) -> Result<SampledSignal> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(input_data);
    let header = reader.headers()?.clone();
    if header.get(0) != Some("t") {
        return Err(Error::Parse {
            line: 1,
            message: "first column must be `t`".into(),
        });
    }
    let q = header.len() - 1;
    let mut times = Vec::new();
    let mut data = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != q + 1 {
            return Err(Error::Parse {
                line,
                message: format!("expected {} fields, found {}", q + 1, rec.len()),
            });
        }
        for (i, field) in rec.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| Error::Parse {
                line,
                message: format!("cannot parse `{field}` as a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line,
                    message: format!("non-finite value `{field}`"),
                });
            }
            if i == 0 {
                times.push(v);
            } else {
                data.push(v);
            }
        }
    }
    if times.len() < 2 {
        return Err(Error::Parse {
            line: times.len() as u64 + 1,
            message: "signal needs at least 2 rows".into(),
        });
    }
    let n = times.len();
    let t0 = times[0];
    let raw_dt = (times[n - 1] - t0) / (n - 1) as f64;
    // prefer the short decimal the writer most likely started from
    let short: f64 = format!("{raw_dt:.12e}").parse().unwrap_or(raw_dt);
    let dt = if ((short - raw_dt) / raw_dt).abs() < 1e-9 { short } else { raw_dt };
    let grid = TimeGrid::new(t0, dt, n).map_err(|e| Error::Parse {
        line: 2,
        message: e.to_string(),
    })?;
    for (j, &t) in times.iter().enumerate() {
        if (t - grid.time(j)).abs() > 1e-6 * dt {
            return Err(Error::Parse {
                line: j as u64 + 2,
                message: format!("time {t} breaks the uniform grid (expected {})", grid.time(j)),
            });
        }
    }
    let values = DMatrix::from_column_slice(q, n, &data);
    SampledSignal::new(grid, values, Continuity::Unknown)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn grid(end: f64, dt: f64) -> TimeGrid {
        TimeGrid::covering(0.0, end, dt).unwrap()
    }

    #[test]
    fn grid_contract() {
        assert!(TimeGrid::new(0.0, 0.0, 10).is_err());
        assert!(TimeGrid::new(0.0, 0.1, 1).is_err());
        let g = grid(1.0, 0.1);
        assert_eq!(g.len(), 11);
        assert!((g.end() - 1.0).abs() < 1e-15);
        assert!(g.nearest_index(1.2).is_err());
        assert_eq!(g.nearest_index(0.31).unwrap(), 3);
    }

    #[test]
    fn sinusoid_sin_cos() {
        let g = grid(10.0, 0.01);
        let w = sample_sinusoid_mix(&[1.0, 1.0], &[1.0, 1.0], &[0.0, FRAC_PI_2], &DMatrix::identity(2, 2), g)
            .unwrap();
        for j in (0..g.len()).step_by(37) {
            let t = g.time(j);
            assert!((w.values()[(0, j)] - t.sin()).abs() < 1e-14);
            assert!((w.values()[(1, j)] - t.cos()).abs() < 1e-14);
        }
        assert_eq!(w.continuity(), Continuity::UniformlyContinuous);
    }

    #[test]
    fn sinusoid_zero_amplitude() {
        let g = grid(5.0, 0.01);
        let w = sample_sinusoid_mix(&[1.0], &[0.0], &[0.0], &DMatrix::identity(1, 1), g).unwrap();
        assert!(w.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn sinusoid_rank_one_mixing() {
        let g = grid(5.0, 0.01);
        let mixing = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 1.0, 0.0]);
        let w = sample_sinusoid_mix(&[1.0, 1.0], &[1.0, 2.0], &[0.0, 0.3], &mixing, g).unwrap();
        // every column proportional to (1, 1)
        for j in 0..g.len() {
            assert_eq!(w.values()[(0, j)], w.values()[(1, j)]);
        }
    }

    #[test]
    fn sinusoid_dimension_mismatch() {
        let g = grid(1.0, 0.1);
        let err = sample_sinusoid_mix(&[1.0, 2.0], &[1.0], &[0.0, 0.0], &DMatrix::identity(2, 2), g);
        assert!(matches!(err, Err(Error::Input(_))));
        let err = sample_sinusoid_mix(&[1.0], &[1.0], &[0.0], &DMatrix::identity(2, 2), g);
        assert!(matches!(err, Err(Error::Input(_))));
    }

    #[test]
    fn gamma_values() {
        let s = GammaSchedule::new(300.0).unwrap();
        assert_eq!(gamma_eval(&s, 1.0).unwrap(), 1);
        assert_eq!(gamma_eval(&s, 3.0).unwrap(), 0);
        assert_eq!(gamma_eval(&s, 2.0).unwrap(), 0);
        assert_eq!(gamma_eval(&s, 0.0).unwrap(), 1);
        assert_eq!(gamma_eval(&s, 6.0).unwrap(), 1);
        assert_eq!(gamma_eval(&s, 13.999).unwrap(), 1);
        assert_eq!(gamma_eval(&s, 14.0).unwrap(), 0);
        // past the stored boundaries
        assert_eq!(gamma_eval(&s, 300.0).unwrap(), 0); // interval 8 = [254, 510)
        assert_eq!(gamma_eval(&s, 600.0).unwrap(), 1); // interval 9 = [510, 1022)
        assert_eq!(gamma_eval(&s, 1022.0).unwrap(), 0);
        assert!(matches!(gamma_eval(&s, -0.5), Err(Error::Input(_))));
    }

    #[test]
    fn gamma_interval_lengths() {
        let s = GammaSchedule::new(5000.0).unwrap();
        let b = s.boundaries();
        assert_eq!(b[0], 0.0);
        for k in 1..b.len() {
            assert_eq!(b[k] - b[k - 1], 2f64.powi(k as i32));
        }
        // partial-sum oracle
        let mut acc = 0.0;
        for (k, &bk) in b.iter().enumerate().skip(1) {
            acc += 2f64.powi(k as i32);
            assert_eq!(bk, acc);
        }
    }

    #[test]
    fn pathological_constant_one() {
        let g = grid(30.0, 0.5);
        let v = SampledSignal::constant(&[1.0], g).unwrap();
        let (w1, w2) = pathological_pair(&v).unwrap();
        for j in 0..g.len() {
            let t = g.time(j);
            let expected = if t < 2.0 || (6.0..14.0).contains(&t) || (30.0..62.0).contains(&t) { 1.0 } else { 0.0 };
            assert_eq!(w1.values()[(0, j)], expected, "t = {t}");
            assert_eq!(w1.values()[(0, j)] + w2.values()[(0, j)], 1.0);
        }
        assert_eq!(w1.continuity(), Continuity::UniformlyPiecewiseContinuous);
    }

    #[test]
    fn pathological_zero_and_sin() {
        let g = grid(40.0, 0.01);
        let zero = SampledSignal::zeros(1, g);
        let (a, b) = pathological_pair(&zero).unwrap();
        assert!(a.values().iter().chain(b.values().iter()).all(|&v| v == 0.0));

        let s = sample_sinusoid_mix(&[1.0], &[1.0], &[0.0], &DMatrix::identity(1, 1), g).unwrap();
        let (w1, w2) = pathological_pair(&s).unwrap();
        for j in 0..g.len() {
            assert_eq!(w1.values()[(0, j)] * w2.values()[(0, j)], 0.0);
            assert_eq!(w1.values()[(0, j)] + w2.values()[(0, j)], s.values()[(0, j)]);
        }
    }

    #[test]
    fn boundary_snapping_with_inexact_step() {
        // 0.001 is not representable; grid times near 2, 6, 14 must still land right
        let g = grid(20.0, 0.001);
        let one = SampledSignal::constant(&[1.0], g).unwrap();
        let (w1, _) = pathological_pair(&one).unwrap();
        for (b, expected) in [(2.0, 0.0), (6.0, 1.0), (14.0, 0.0)] {
            let j = g.nearest_index(b).unwrap();
            assert_eq!(w1.values()[(0, j)], expected, "boundary {b}");
            assert_eq!(w1.values()[(0, j - 1)], 1.0 - expected, "just before {b}");
        }
    }

    #[test]
    fn linear_map_cases() {
        let g = grid(20.0, 0.01);
        let w = pulse_train_pair(g).unwrap();
        let id = apply_linear_map(&DMatrix::identity(2, 2), &w).unwrap();
        assert_eq!(id, w);
        let sum = apply_linear_map(&DMatrix::from_row_slice(1, 2, &[1.0, 1.0]), &w).unwrap();
        assert!(sum.values().iter().all(|&v| v == 1.0));
        let zero = apply_linear_map(&DMatrix::zeros(3, 2), &w).unwrap();
        assert_eq!(zero.dim(), 3);
        assert!(zero.values().iter().all(|&v| v == 0.0));
        assert_eq!(zero.continuity(), w.continuity());
        assert!(apply_linear_map(&DMatrix::zeros(2, 3), &w).is_err());
    }

    #[test]
    fn stack_cases() {
        let g = grid(5.0, 0.01);
        let s = sample_sinusoid_mix(&[1.0], &[1.0], &[0.0], &DMatrix::identity(1, 1), g).unwrap();
        let c = sample_sinusoid_mix(&[1.0], &[1.0], &[FRAC_PI_2], &DMatrix::identity(1, 1), g).unwrap();
        let w = stack(&s, &c).unwrap();
        assert_eq!(w.dim(), 2);
        assert_eq!(w.values().row(1), c.values().row(0));

        let p = pulse_train_pair(g).unwrap();
        assert_eq!(stack(&s, &p).unwrap().continuity(), Continuity::UniformlyPiecewiseContinuous);

        let other = SampledSignal::zeros(1, grid(5.0, 0.02));
        assert!(matches!(stack(&s, &other), Err(Error::Input(_))));
    }

    #[test]
    fn envelope_cases() {
        let g = grid(5.0, 0.01);
        let one = SampledSignal::constant(&[1.0], g).unwrap();
        assert_eq!(envelope_scale(&one, 0.0).unwrap(), one);
        let e = envelope_scale(&one, 1.0).unwrap();
        for j in 0..g.len() {
            assert!((e.values()[(0, j)] - (-g.time(j)).exp()).abs() < 1e-15);
        }
        assert!(envelope_scale(&one, -1.0).is_err());
    }

    #[test]
    fn interpolation() {
        let g = grid(2.0 * PI, 0.001);
        let s = sample_sinusoid_mix(&[1.0], &[1.0], &[0.0], &DMatrix::identity(1, 1), g).unwrap();
        let v = s.value_at(1.00005).unwrap();
        assert!((v[0] - 1.00005f64.sin()).abs() < 1e-7);
        assert!(s.value_at(-0.1).is_err());
        assert!(s.value_at(g.end()).is_ok());
    }

    #[test]
    fn csv_round_trip() {
        let g = TimeGrid::covering(0.0, 3.0, 0.001).unwrap();
        let w = sample_sinusoid_mix(&[1.0, 2.5], &[1.0, 1e-7], &[0.0, 0.4], &DMatrix::identity(2, 2), g).unwrap();
        let mut buf = Vec::new();
        write_csv(&w, &mut buf).unwrap();
        assert!(buf.starts_with(b"t,w1,w2\n"));
        let back = read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.grid(), w.grid());
        assert_eq!(back.values(), w.values());
        assert_eq!(back.continuity(), Continuity::Unknown);
    }

    #[test]
    fn csv_errors_carry_line_numbers() {
        let bad = "t,w1\n0,1\n0.1,abc\n";
        match read_csv(bad.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        let ragged = "t,w1\n0,1\n0.1,1,2\n";
        assert!(matches!(read_csv(ragged.as_bytes()), Err(Error::Parse { .. })));
        let nonuniform = "t,w1\n0,1\n0.1,1\n0.3,1\n";
        match read_csv(nonuniform.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(read_csv("x,w1\n0,1\n".as_bytes()), Err(Error::Parse { line: 1, .. })));
    }
}
