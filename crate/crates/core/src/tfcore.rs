//! Sampled signals on uniform grids and the basic time-frequency toolkit.
//!
//! Continuous integrals over the real line become Riemann sums weighted by the
//! sample spacing. Off-grid shifts are realized by frequency-domain phase
//! ramps, so every shift is periodic on the grid; callers keep their signals
//! well inside the grid.

use std::cell::RefCell;
use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan(n: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if inverse {
            p.plan_fft_inverse(n)
        } else {
            p.plan_fft_forward(n)
        }
    })
}

pub(crate) fn fft_in_place(buf: &mut [Complex64]) {
    plan(buf.len(), false).process(buf);
}

/// Unnormalized inverse transform.
pub(crate) fn ifft_in_place(buf: &mut [Complex64]) {
    plan(buf.len(), true).process(buf);
}

/// Signed DFT bin index for position `m` of an `n`-point transform.
pub(crate) fn signed_bin(m: usize, n: usize) -> i64 {
    if m < n / 2 {
        m as i64
    } else {
        m as i64 - n as i64
    }
}

/// A uniform sampling grid `t0 + i*dt`, `i = 0..n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub t0: f64,
    pub dt: f64,
    pub n: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, dt: f64, n: usize) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(invalid("dt", format!("must be positive, got {dt}")));
        }
        if n < 2 || n % 2 != 0 {
            return Err(invalid("n", format!("must be even and at least 2, got {n}")));
        }
        if !t0.is_finite() {
            return Err(invalid("t0", "must be finite"));
        }
        Ok(Self { t0, dt, n })
    }

    /// Grid whose midpoint sample sits at `center`.
    pub fn centered_at(center: f64, dt: f64, n: usize) -> Result<Self> {
        Self::new(center - (n / 2) as f64 * dt, dt, n)
    }

    /// Grid whose midpoint sample sits at zero.
    pub fn centered(dt: f64, n: usize) -> Result<Self> {
        Self::centered_at(0.0, dt, n)
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.dt
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n).map(|i| self.time(i))
    }

    pub fn midpoint(&self) -> f64 {
        self.time(self.n / 2)
    }

    pub fn span(&self) -> f64 {
        self.n as f64 * self.dt
    }

    pub fn end(&self) -> f64 {
        self.time(self.n - 1)
    }

    /// The companion frequency grid: spacing `1/(n dt)` over `[-1/(2dt), 1/(2dt))`.
    pub fn frequency_grid(&self) -> TimeGrid {
        TimeGrid {
            t0: -0.5 / self.dt,
            dt: 1.0 / (self.n as f64 * self.dt),
            n: self.n,
        }
    }

    /// Index of the sample nearest to `t` if `t` lies on the grid (to rounding).
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let r = (t - self.t0) / self.dt;
        let k = r.round();
        if (r - k).abs() < 1e-9 && k >= 0.0 && (k as usize) < self.n {
            Some(k as usize)
        } else {
            None
        }
    }

    pub fn same_as(&self, other: &TimeGrid) -> bool {
        self.n == other.n
            && (self.dt - other.dt).abs() <= 1e-12 * self.dt
            && (self.t0 - other.t0).abs() <= 1e-9 * self.dt
    }
}

/// Complex samples of a function of time.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledSignal {
    pub grid: TimeGrid,
    pub values: Vec<Complex64>,
}

impl SampledSignal {
    pub fn new(grid: TimeGrid, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.n {
            return Err(Error::GridMismatch(format!(
                "{} values for a grid of {} samples",
                values.len(),
                grid.n
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: TimeGrid) -> Self {
        Self {
            grid,
            values: vec![Complex64::new(0.0, 0.0); grid.n],
        }
    }

    pub fn from_fn<F: FnMut(f64) -> Complex64>(grid: TimeGrid, mut f: F) -> Self {
        Self {
            grid,
            values: grid.times().map(&mut f).collect(),
        }
    }

    pub fn norm_sqr(&self) -> f64 {
        self.grid.dt * self.values.iter().map(|v| v.norm_sqr()).sum::<f64>()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    /// `<self, other> = dt * sum self * conj(other)`.
    pub fn inner(&self, other: &SampledSignal) -> Complex64 {
        debug_assert!(self.grid.same_as(&other.grid));
        let s: Complex64 = self.values.iter().zip(&other.values).map(|(a, b)| a * b.conj()).sum();
        s * self.grid.dt
    }

    pub fn scaled(&self, c: Complex64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|v| v * c).collect(),
        }
    }

    pub fn add_scaled(&mut self, other: &SampledSignal, c: Complex64) {
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += b * c;
        }
    }

    pub fn sub(&self, other: &SampledSignal) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Copies the samples onto another grid with the same spacing whose nodes
    /// coincide with this one's; samples falling outside are dropped and new
    /// positions are zero-filled.
    pub fn regrid(&self, target: TimeGrid) -> Result<Self> {
        if (target.dt - self.grid.dt).abs() > 1e-12 * self.grid.dt {
            return Err(Error::GridMismatch("regrid requires equal spacing".into()));
        }
        let shift = (target.t0 - self.grid.t0) / self.grid.dt;
        let offset = shift.round();
        if (shift - offset).abs() > 1e-6 {
            return Err(Error::GridMismatch(
                "regrid requires grids with coinciding nodes".into(),
            ));
        }
        let offset = offset as i64;
        let mut out = SampledSignal::zeros(target);
        for (j, v) in out.values.iter_mut().enumerate() {
            let i = j as i64 + offset;
            if i >= 0 && (i as usize) < self.grid.n {
                *v = self.values[i as usize];
            }
        }
        Ok(out)
    }
}

/// Complex samples on a product grid; rows index the frequency axis, columns
/// the time/delay axis.
#[derive(Debug, Clone, PartialEq)]
pub struct TFGridFunction {
    pub x_grid: TimeGrid,
    pub w_grid: TimeGrid,
    pub values: DMatrix<Complex64>,
}

impl TFGridFunction {
    pub fn from_fn<F: FnMut(f64, f64) -> Complex64>(x_grid: TimeGrid, w_grid: TimeGrid, mut f: F) -> Self {
        let values = DMatrix::from_fn(w_grid.n, x_grid.n, |r, c| f(x_grid.time(c), w_grid.time(r)));
        Self { x_grid, w_grid, values }
    }

    /// Value at delay/time index `xi` and frequency index `wi`.
    pub fn at(&self, xi: usize, wi: usize) -> Complex64 {
        self.values[(wi, xi)]
    }

    pub fn cell_area(&self) -> f64 {
        self.x_grid.dt * self.w_grid.dt
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn max_imag(&self) -> f64 {
        self.values.iter().map(|v| v.im.abs()).fold(0.0, f64::max)
    }

    /// `sum self * conj(other) * dx * dw`.
    pub fn inner(&self, other: &TFGridFunction) -> Complex64 {
        let s: Complex64 = self
            .values
            .iter()
            .zip(other.values.iter())
            .map(|(a, b)| a * b.conj())
            .sum();
        s * self.cell_area()
    }

    pub fn integral(&self) -> Complex64 {
        self.values.iter().sum::<Complex64>() * self.cell_area()
    }
}

/// `(T_x f)(t) = f(t - x)`. Whole-sample shifts are exact circular shifts;
/// other shifts use a band-limited phase ramp.
pub fn translate(f: &SampledSignal, x: f64) -> SampledSignal {
    let n = f.grid.n;
    let r = x / f.grid.dt;
    let m = r.round();
    if (r - m).abs() <= 1e-12 * r.abs().max(1.0) {
        let m = (m as i64).rem_euclid(n as i64) as usize;
        let mut values = f.values.clone();
        values.rotate_right(m);
        return SampledSignal { grid: f.grid, values };
    }
    let mut buf = f.values.clone();
    fft_in_place(&mut buf);
    for (k, v) in buf.iter_mut().enumerate() {
        let bin = signed_bin(k, n) as f64;
        *v *= Complex64::from_polar(1.0 / n as f64, -2.0 * PI * bin * r / n as f64);
    }
    ifft_in_place(&mut buf);
    SampledSignal {
        grid: f.grid,
        values: buf,
    }
}

/// `(M_w f)(t) = exp(2 pi i w t) f(t)`.
pub fn modulate(f: &SampledSignal, w: f64) -> SampledSignal {
    if w == 0.0 {
        return f.clone();
    }
    SampledSignal {
        grid: f.grid,
        values: f
            .values
            .iter()
            .enumerate()
            .map(|(i, v)| v * Complex64::from_polar(1.0, 2.0 * PI * w * f.grid.time(i)))
            .collect(),
    }
}

/// Continuous-normalization transform `dt * sum_i v_i exp(-2 pi i nu_m t_i)`
/// evaluated on the companion frequency grid of `grid`.
fn dft_on_grid(grid: &TimeGrid, values: &[Complex64]) -> Vec<Complex64> {
    let n = grid.n;
    let freq = grid.frequency_grid();
    let mut buf: Vec<Complex64> = values
        .iter()
        .enumerate()
        .map(|(i, v)| if i % 2 == 0 { *v } else { -v })
        .collect();
    fft_in_place(&mut buf);
    for (m, v) in buf.iter_mut().enumerate() {
        *v *= Complex64::from_polar(grid.dt, -2.0 * PI * freq.time(m) * grid.t0);
    }
    debug_assert_eq!(buf.len(), n);
    buf
}

/// Unitary Fourier transform `f^(nu) = int f(t) exp(-2 pi i nu t) dt`, sampled
/// on the companion frequency grid.
pub fn fourier(f: &SampledSignal) -> SampledSignal {
    SampledSignal {
        grid: f.grid.frequency_grid(),
        values: dft_on_grid(&f.grid, &f.values),
    }
}

/// Inverse of [`fourier`]: returns the time samples on `time_grid`, whose
/// companion frequency grid must be the grid of `fhat`.
pub fn inverse_fourier(fhat: &SampledSignal, time_grid: TimeGrid) -> Result<SampledSignal> {
    if !time_grid.frequency_grid().same_as(&fhat.grid) {
        return Err(Error::GridMismatch(
            "frequency grid does not match the requested time grid".into(),
        ));
    }
    let mut buf: Vec<Complex64> = fhat
        .values
        .iter()
        .enumerate()
        .map(|(m, v)| v * Complex64::from_polar(1.0, 2.0 * PI * fhat.grid.time(m) * time_grid.t0))
        .collect();
    ifft_in_place(&mut buf);
    let dnu = fhat.grid.dt;
    for (i, v) in buf.iter_mut().enumerate() {
        *v *= if i % 2 == 0 { dnu } else { -dnu };
    }
    SampledSignal::new(time_grid, buf)
}

/// Default grid for a Gaussian of scale `s`: `n` samples balanced so that the
/// time span and the frequency span carry equal Gaussian tails.
pub fn balanced_grid(s: f64, n: usize) -> Result<TimeGrid> {
    if !(s > 0.0) {
        return Err(invalid("s", format!("must be positive, got {s}")));
    }
    TimeGrid::centered((s / n as f64).sqrt(), n)
}

/// Unit-norm Gaussian `exp(-pi t^2 / s)` centered at the grid midpoint.
pub fn gaussian_window(s: f64, grid: &TimeGrid) -> Result<SampledSignal> {
    if !(s > 0.0 && s.is_finite()) {
        return Err(invalid("s", format!("must be positive, got {s}")));
    }
    let half = 0.5 * grid.span();
    // Tail mass beyond the edges in time and beyond Nyquist in frequency.
    let time_tail = (-2.0 * PI * half * half / s).exp();
    let nyq = 0.5 / grid.dt;
    let freq_tail = (-2.0 * PI * s * nyq * nyq).exp();
    if time_tail > 1e-12 || freq_tail > 1e-12 {
        return Err(Error::GridTooSmall(format!(
            "Gaussian of scale {s} is truncated (time tail {time_tail:.1e}, frequency tail {freq_tail:.1e})"
        )));
    }
    let c = grid.midpoint();
    let amp = (2.0 / s).powf(0.25);
    let mut g = SampledSignal::from_fn(*grid, |t| Complex64::new(amp * (-PI * (t - c).powi(2) / s).exp(), 0.0));
    let norm = g.norm();
    for v in &mut g.values {
        *v /= norm;
    }
    Ok(g)
}

/// Band-limited upsampling by two: samples at spacing `dt/2` starting at `t0`.
fn upsample2(f: &SampledSignal) -> Vec<Complex64> {
    let n = f.grid.n;
    let mut spec = f.values.clone();
    fft_in_place(&mut spec);
    let mut padded = vec![Complex64::new(0.0, 0.0); 2 * n];
    for (m, v) in spec.iter().enumerate() {
        let k = signed_bin(m, n);
        padded[k.rem_euclid(2 * n as i64) as usize] = *v;
    }
    ifft_in_place(&mut padded);
    for v in &mut padded {
        *v /= n as f64;
    }
    padded
}

fn check_same_grid(f: &SampledSignal, g: &SampledSignal) -> Result<()> {
    if f.grid.same_as(&g.grid) {
        Ok(())
    } else {
        Err(Error::GridMismatch("signals live on different grids".into()))
    }
}

/// Cross-ambiguity `A(f,g)(x,w) = int f(t+x/2) conj(g(t-x/2)) exp(-2 pi i t w) dt`.
///
/// The delay axis is the centered grid with the signal's spacing; the frequency
/// axis is the companion frequency grid.
pub fn cross_ambiguity(f: &SampledSignal, g: &SampledSignal) -> Result<TFGridFunction> {
    check_same_grid(f, g)?;
    let n = f.grid.n;
    let fu = upsample2(f);
    let gu = upsample2(g);
    let two_n = 2 * n as i64;
    let x_grid = TimeGrid::centered(f.grid.dt, n)?;
    let w_grid = f.grid.frequency_grid();
    let mut values = DMatrix::zeros(n, n);
    let mut h = vec![Complex64::new(0.0, 0.0); n];
    for j in 0..n {
        let lag = j as i64 - (n / 2) as i64;
        for (i, hv) in h.iter_mut().enumerate() {
            let a = (2 * i as i64 + lag).rem_euclid(two_n) as usize;
            let b = (2 * i as i64 - lag).rem_euclid(two_n) as usize;
            *hv = fu[a] * gu[b].conj();
        }
        let col = dft_on_grid(&f.grid, &h);
        for (m, v) in col.into_iter().enumerate() {
            values[(m, j)] = v;
        }
    }
    Ok(TFGridFunction { x_grid, w_grid, values })
}

/// Cross-Wigner distribution `W(f,g)(x,w) = int f(x+t/2) conj(g(x-t/2)) exp(-2 pi i t w) dt`
/// on the signal's time grid times the companion frequency grid.
pub fn cross_wigner(f: &SampledSignal, g: &SampledSignal) -> Result<TFGridFunction> {
    check_same_grid(f, g)?;
    let n = f.grid.n;
    let fu = upsample2(f);
    let gu = upsample2(g);
    let two_n = 2 * n as i64;
    let lag_grid = TimeGrid::centered(f.grid.dt, n)?;
    let w_grid = f.grid.frequency_grid();
    let mut values = DMatrix::zeros(n, n);
    let mut h = vec![Complex64::new(0.0, 0.0); n];
    for j in 0..n {
        for (i, hv) in h.iter_mut().enumerate() {
            let lag = i as i64 - (n / 2) as i64;
            let a = (2 * j as i64 + lag).rem_euclid(two_n) as usize;
            let b = (2 * j as i64 - lag).rem_euclid(two_n) as usize;
            *hv = fu[a] * gu[b].conj();
        }
        let col = dft_on_grid(&lag_grid, &h);
        for (m, v) in col.into_iter().enumerate() {
            values[(m, j)] = v;
        }
    }
    Ok(TFGridFunction {
        x_grid: f.grid,
        w_grid,
        values,
    })
}

/// Exponential envelope `|f(t)| <= amplitude * exp(-rate |t - center|)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayEnvelope {
    /// Least-squares intercept of the log-linear fit.
    pub amplitude: f64,
    /// Fitted decay rate per unit of the grid variable.
    pub rate: f64,
    /// Smallest amplitude for which the envelope dominates every resolved sample.
    pub envelope_amplitude: f64,
    pub center: f64,
    pub fit_samples: usize,
}

/// Fits `log|f|` against `|t - center|` on the tail region
/// `1e-12 < |f|/max|f| < 1e-2`.
pub fn decay_envelope_fit(f: &SampledSignal) -> Result<DecayEnvelope> {
    decay_envelope_fit_window(f, 1e-12, 1e-2)
}

/// [`decay_envelope_fit`] with an explicit relative magnitude window.
pub fn decay_envelope_fit_window(f: &SampledSignal, lo: f64, hi: f64) -> Result<DecayEnvelope> {
    let mags: Vec<f64> = f.values.iter().map(|v| v.norm()).collect();
    let (imax, &peak) = mags
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .ok_or(Error::InsufficientTail { samples: 0 })?;
    if peak <= 0.0 {
        return Err(Error::InsufficientTail { samples: 0 });
    }
    let center = f.grid.time(imax);
    let pts: Vec<(f64, f64)> = mags
        .iter()
        .enumerate()
        .filter(|(_, &m)| m > lo * peak && m < hi * peak)
        .map(|(i, &m)| ((f.grid.time(i) - center).abs(), m.ln()))
        .collect();
    if pts.len() < 8 {
        return Err(Error::InsufficientTail { samples: pts.len() });
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx <= 0.0 {
        return Err(Error::InsufficientTail { samples: pts.len() });
    }
    let slope = sxy / sxx;
    let rate = -slope;
    let amplitude = (my - slope * mx).exp();
    let envelope_amplitude = mags
        .iter()
        .enumerate()
        .filter(|(_, &m)| m > lo * peak)
        .map(|(i, &m)| m * (rate * (f.grid.time(i) - center).abs()).exp())
        .fold(0.0, f64::max);
    Ok(DecayEnvelope {
        amplitude,
        rate,
        envelope_amplitude,
        center,
        fit_samples: pts.len(),
    })
}

/// Exponential envelope of a self-ambiguity function built from the time and
/// frequency envelopes of the signal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AmbiguityEnvelope {
    /// Common amplitude `C` dominating both the time and frequency envelopes.
    pub amplitude: f64,
    pub time_rate: f64,
    pub freq_rate: f64,
    /// `max |A(f,f)(x,w)| / (C² e^{-(c1|x| + c2|w|)/4})` over resolved grid points.
    pub ratio: f64,
}

/// Fits `|f(t)| <= C e^{-c1|t|}` and `|f^(w)| <= C e^{-c2|w|}` and measures how
/// tightly `C² e^{-(c1|x| + c2|w|)/4}` dominates `|A(f,f)|`. Points where the
/// ambiguity is below `1e-12` of its peak are treated as unresolved.
pub fn ambiguity_envelope(f: &SampledSignal) -> Result<AmbiguityEnvelope> {
    let time = decay_envelope_fit(f)?;
    let freq = decay_envelope_fit(&fourier(f))?;
    let amplitude = time.envelope_amplitude.max(freq.envelope_amplitude);
    let amb = cross_ambiguity(f, f)?;
    let peak = amb.max_abs();
    let mut ratio = 0.0f64;
    for c in 0..amb.x_grid.n {
        let x = amb.x_grid.time(c);
        for r in 0..amb.w_grid.n {
            let v = amb.values[(r, c)].norm();
            if v <= 1e-12 * peak {
                continue;
            }
            let w = amb.w_grid.time(r);
            let env = amplitude * amplitude * (-0.25 * (time.rate * x.abs() + freq.rate * w.abs())).exp();
            ratio = ratio.max(v / env);
        }
    }
    Ok(AmbiguityEnvelope {
        amplitude,
        time_rate: time.rate,
        freq_rate: freq.rate,
        ratio,
    })
}
