//! Weyl–Heisenberg systems: the frame operator, the canonical tight window
//! `S^{-1/2} g`, and the orthonormal transmit / tight receive families built
//! from it.
//!
//! The frame operator is assembled as a dense real symmetric matrix on a
//! periodic sample grid. When the receive steps are whole numbers of samples
//! and of frequency bins the lattice closes on the torus and the discrete
//! system is exactly a finite Gabor frame; [`choose_frame_grid`] looks for such
//! a grid near the requested size and falls back to a plain balanced grid.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::tfcore::{decay_envelope_fit, fourier, gaussian_window, modulate, translate, SampledSignal, TimeGrid};

/// Largest admissible condition number of the discretized frame operator.
pub const MAX_CONDITION: f64 = 1e12;
pub const TOL_GRAM: f64 = 1e-6;
pub const TOL_TIGHT: f64 = 1e-6;
pub const DEFAULT_GRID_N: usize = 1024;

/// Inclusive integer index interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexRange {
    pub lo: i64,
    pub hi: i64,
}

impl IndexRange {
    pub fn new(lo: i64, hi: i64) -> Self {
        Self { lo, hi }
    }

    pub fn symmetric(m: i64) -> Self {
        Self { lo: -m, hi: m }
    }

    pub fn len(&self) -> usize {
        if self.hi < self.lo {
            0
        } else {
            (self.hi - self.lo + 1) as usize
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = i64> {
        self.lo..=self.hi
    }

    pub fn contains(&self, i: i64) -> bool {
        i >= self.lo && i <= self.hi
    }
}

/// Lattice `{(a k, b l)}` over finite index ranges.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lattice {
    pub a: f64,
    pub b: f64,
    pub k_range: IndexRange,
    pub l_range: IndexRange,
}

impl Lattice {
    pub fn new(a: f64, b: f64, k_range: IndexRange, l_range: IndexRange) -> Result<Self> {
        if !(a > 0.0) {
            return Err(invalid("a", format!("time step must be positive, got {a}")));
        }
        if !(b > 0.0) {
            return Err(invalid("b", format!("frequency step must be positive, got {b}")));
        }
        Ok(Self { a, b, k_range, l_range })
    }

    pub fn len(&self) -> usize {
        self.k_range.len() * self.l_range.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Index pairs in row-major `(k, l)` order.
    pub fn indices(&self) -> Vec<(i64, i64)> {
        self.k_range
            .iter()
            .flat_map(|k| self.l_range.iter().map(move |l| (k, l)))
            .collect()
    }

    /// Number of lattice points inside `[t0, t1] x [w0, w1]`.
    pub fn points_in_box(&self, t0: f64, t1: f64, w0: f64, w1: f64) -> usize {
        let count = |step: f64, lo: f64, hi: f64| ((hi / step).floor() - (lo / step).ceil() + 1.0).max(0.0) as usize;
        count(self.a, t0, t1) * count(self.b, w0, w1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemKind {
    TransmitOrthonormal,
    ReceiveTight,
}

/// A window together with the lattice it is shifted over. Atoms are
/// `M_{b l} T_{a k} window`; the window is a function centered at `t = 0`
/// sampled on its grid.
#[derive(Debug, Clone)]
pub struct GaborSystem {
    pub window: SampledSignal,
    pub lattice: Lattice,
    pub rho: f64,
    pub s: f64,
    pub kind: SystemKind,
}

impl GaborSystem {
    /// Orthonormal system `{M_{rho b l} T_{rho a k} psi}` for a unit-norm tight window.
    pub fn transmit(
        psi: &SampledSignal,
        a: f64,
        b: f64,
        rho: f64,
        s: f64,
        k_range: IndexRange,
        l_range: IndexRange,
    ) -> Result<Self> {
        Ok(Self {
            window: psi.clone(),
            lattice: Lattice::new(rho * a, rho * b, k_range, l_range)?,
            rho,
            s,
            kind: SystemKind::TransmitOrthonormal,
        })
    }

    /// Tight frame `{(1/rho) M_{b l / rho} T_{a k / rho} psi}` with frame bound one.
    pub fn receive(
        psi: &SampledSignal,
        a: f64,
        b: f64,
        rho: f64,
        s: f64,
        k_range: IndexRange,
        l_range: IndexRange,
    ) -> Result<Self> {
        Ok(Self {
            window: psi.scaled(Complex64::new(1.0 / rho, 0.0)),
            lattice: Lattice::new(a / rho, b / rho, k_range, l_range)?,
            rho,
            s,
            kind: SystemKind::ReceiveTight,
        })
    }

    /// Receive system whose index ranges cover the periodic grid of the window
    /// exactly once (when the lattice closes on it) or cover the grid span and
    /// the full frequency band otherwise.
    pub fn receive_covering(psi: &SampledSignal, a: f64, b: f64, rho: f64, s: f64) -> Result<Self> {
        let grid = psi.grid;
        let (ar, br) = (a / rho, b / rho);
        let (k_range, l_range) = match closing_periods(&grid, ar, br) {
            Some((nk, nl)) => (
                IndexRange::new(-(nk as i64) / 2, (nk as i64 + 1) / 2 - 1),
                IndexRange::new(-(nl as i64) / 2, (nl as i64 + 1) / 2 - 1),
            ),
            None => (
                IndexRange::symmetric((0.5 * grid.span() / ar).ceil() as i64),
                IndexRange::symmetric((0.5 / (grid.dt * br)).ceil() as i64),
            ),
        };
        Self::receive(psi, a, b, rho, s, k_range, l_range)
    }

    pub fn grid(&self) -> TimeGrid {
        self.window.grid
    }

    pub fn len(&self) -> usize {
        self.lattice.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lattice.is_empty()
    }

    /// Time-frequency position of atom `(k, l)`.
    pub fn position(&self, k: i64, l: i64) -> (f64, f64) {
        (self.lattice.a * k as f64, self.lattice.b * l as f64)
    }

    pub fn atom(&self, k: i64, l: i64) -> SampledSignal {
        let (t, w) = self.position(k, l);
        modulate(&translate(&self.window, t), w)
    }

    /// The same system re-sampled on another grid with coinciding nodes.
    pub fn on_grid(&self, grid: TimeGrid) -> Result<Self> {
        Ok(Self {
            window: self.window.regrid(grid)?,
            ..self.clone()
        })
    }
}

/// Coefficients indexed by `(k, l)`; rows follow `k`, columns follow `l`.
#[derive(Debug, Clone, PartialEq)]
pub struct Coefficients {
    pub k_range: IndexRange,
    pub l_range: IndexRange,
    pub values: DMatrix<Complex64>,
}

impl Coefficients {
    pub fn zeros(k_range: IndexRange, l_range: IndexRange) -> Self {
        Self {
            k_range,
            l_range,
            values: DMatrix::zeros(k_range.len(), l_range.len()),
        }
    }

    pub fn get(&self, k: i64, l: i64) -> Complex64 {
        self.values[((k - self.k_range.lo) as usize, (l - self.l_range.lo) as usize)]
    }

    pub fn set(&mut self, k: i64, l: i64, v: Complex64) {
        self.values[((k - self.k_range.lo) as usize, (l - self.l_range.lo) as usize)] = v;
    }

    pub fn energy(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum()
    }

    /// `sum self * conj(other)`.
    pub fn inner(&self, other: &Coefficients) -> Complex64 {
        self.values
            .iter()
            .zip(other.values.iter())
            .map(|(a, b)| a * b.conj())
            .sum()
    }
}

/// `exp(sign * 2 pi i w t_i)` for every grid time.
fn phase_row(grid: &TimeGrid, w: f64, sign: f64) -> Vec<Complex64> {
    grid.times()
        .map(|t| Complex64::from_polar(1.0, sign * 2.0 * PI * w * t))
        .collect()
}

fn analysis_with(
    f: &SampledSignal,
    window: &SampledSignal,
    a: f64,
    b: f64,
    k_range: IndexRange,
    l_range: IndexRange,
) -> Result<Coefficients> {
    if !f.grid.same_as(&window.grid) {
        return Err(Error::GridMismatch("signal and window grids differ".into()));
    }
    let grid = f.grid;
    let mut out = Coefficients::zeros(k_range, l_range);
    let step = phase_row(&grid, b, -1.0);
    let start = phase_row(&grid, b * l_range.lo as f64, -1.0);
    for (ki, k) in k_range.iter().enumerate() {
        let shifted = translate(window, a * k as f64);
        let h: Vec<Complex64> = f
            .values
            .iter()
            .zip(&shifted.values)
            .map(|(x, g)| x * g.conj())
            .collect();
        let mut ph = start.clone();
        for li in 0..l_range.len() {
            let s: Complex64 = h.iter().zip(&ph).map(|(x, p)| x * p).sum();
            out.values[(ki, li)] = s * grid.dt;
            for (p, z) in ph.iter_mut().zip(&step) {
                *p *= z;
            }
        }
    }
    Ok(out)
}

fn synthesis_with(coeffs: &Coefficients, window: &SampledSignal, a: f64, b: f64) -> SampledSignal {
    let grid = window.grid;
    let mut out = SampledSignal::zeros(grid);
    let step = phase_row(&grid, b, 1.0);
    let start = phase_row(&grid, b * coeffs.l_range.lo as f64, 1.0);
    for (ki, k) in coeffs.k_range.iter().enumerate() {
        let row = coeffs.values.row(ki);
        if row.iter().all(|c| *c == Complex64::new(0.0, 0.0)) {
            continue;
        }
        let mut u = vec![Complex64::new(0.0, 0.0); grid.n];
        let mut ph = start.clone();
        for c in row.iter() {
            for (ui, p) in u.iter_mut().zip(&ph) {
                *ui += c * p;
            }
            for (p, z) in ph.iter_mut().zip(&step) {
                *p *= z;
            }
        }
        let shifted = translate(window, a * k as f64);
        for ((o, ui), g) in out.values.iter_mut().zip(&u).zip(&shifted.values) {
            *o += ui * g;
        }
    }
    out
}

/// `(C f)_{k,l} = <f, psi_{k,l}>` over the system's index ranges.
pub fn analysis_coefficients(f: &SampledSignal, sys: &GaborSystem) -> Result<Coefficients> {
    let lat = &sys.lattice;
    analysis_with(f, &sys.window, lat.a, lat.b, lat.k_range, lat.l_range)
}

/// `C* c = sum c_{k,l} psi_{k,l}`.
pub fn synthesis(coeffs: &Coefficients, sys: &GaborSystem) -> Result<SampledSignal> {
    let lat = &sys.lattice;
    if coeffs.k_range != lat.k_range || coeffs.l_range != lat.l_range {
        return Err(Error::GridMismatch(
            "coefficient ranges differ from the system's".into(),
        ));
    }
    Ok(synthesis_with(coeffs, &sys.window, lat.a, lat.b))
}

/// Result of a truncated frame-operator application.
#[derive(Debug, Clone)]
pub struct FrameApplication {
    pub output: SampledSignal,
    /// Norm of the contribution of the outermost lattice rows and columns.
    pub boundary_norm: f64,
    /// Set when the boundary contribution exceeds `1e-10 * norm(f)`.
    pub truncation_warning: bool,
}

/// `S f = sum_{|k|<=k_max, |l|<=l_max} <f, M_{bl} T_{ak} g> M_{bl} T_{ak} g`.
pub fn frame_operator_apply(
    window: &SampledSignal,
    a: f64,
    b: f64,
    f: &SampledSignal,
    k_max: usize,
    l_max: usize,
) -> Result<FrameApplication> {
    let kr = IndexRange::symmetric(k_max as i64);
    let lr = IndexRange::symmetric(l_max as i64);
    let coeffs = analysis_with(f, window, a, b, kr, lr)?;
    let output = synthesis_with(&coeffs, window, a, b);
    let mut edge = coeffs.clone();
    for ki in 0..kr.len() {
        for li in 0..lr.len() {
            let on_edge = ki == 0 || ki + 1 == kr.len() || li == 0 || li + 1 == lr.len();
            if !on_edge {
                edge.values[(ki, li)] = Complex64::new(0.0, 0.0);
            }
        }
    }
    let boundary_norm = synthesis_with(&edge, window, a, b).norm();
    let truncation_warning = boundary_norm > 1e-10 * f.norm();
    Ok(FrameApplication {
        output,
        boundary_norm,
        truncation_warning,
    })
}

/// Truncation `(k_max, l_max)` covering `|a k| <= span/2 + 8/rate` in time and
/// the analogous band in frequency, with rates from exponential envelope fits.
pub fn default_truncation(window: &SampledSignal, a: f64, b: f64) -> (usize, usize) {
    let grid = window.grid;
    let rate_t = decay_envelope_fit(window).map(|e| e.rate).unwrap_or(f64::INFINITY);
    let rate_w = decay_envelope_fit(&fourier(window))
        .map(|e| e.rate)
        .unwrap_or(f64::INFINITY);
    let k = ((0.5 * grid.span() + 8.0 / rate_t) / a).ceil();
    let l = ((0.5 / grid.dt + 8.0 / rate_w) / b).ceil();
    (k as usize, l as usize)
}

/// Number of distinct translates and modulations when the lattice
/// `(a, b)` closes on the periodic grid, or `None` otherwise.
pub fn closing_periods(grid: &TimeGrid, a: f64, b: f64) -> Option<(usize, usize)> {
    let near_int = |x: f64| {
        let r = x.round();
        ((x - r).abs() < 1e-9 * x.abs().max(1.0) && r >= 1.0).then_some(r as usize)
    };
    let p = near_int(a / grid.dt)?;
    let q = near_int(b * grid.span())?;
    (grid.n % p == 0 && grid.n % q == 0).then(|| (grid.n / p, grid.n / q))
}

/// A sample grid for the frame operator of `(g_s, a_r, b_r)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameGrid {
    pub grid: TimeGrid,
    /// Whether the lattice closes on the periodic grid.
    pub commensurate: bool,
}

/// Picks a grid for the frame operator of the lattice with steps
/// `(a_r, b_r)` and Gaussian scale `s`, near `target_n` samples.
///
/// Prefers grids on which `a_r` is a whole number of samples and `b_r` a whole
/// number of frequency bins, with both periods dividing the grid size. Among
/// those, the choice minimizes the distance to `target_n` and to the balanced
/// spacing `sqrt(s/n)`. Without such a grid, the balanced grid of size
/// `target_n` is returned.
pub fn choose_frame_grid(s: f64, a_r: f64, b_r: f64, target_n: usize) -> Result<FrameGrid> {
    if !(s > 0.0 && a_r > 0.0 && b_r > 0.0) {
        return Err(invalid("s", "scale and lattice steps must be positive"));
    }
    if target_n < 16 {
        return Err(invalid("n", format!("grid too small: {target_n}")));
    }
    // On a grid with spacing a_r/p and span q/b_r, the grid has n = r p q samples.
    let r = 1.0 / (a_r * b_r);
    let is_int = |x: f64| (x - x.round()).abs() < 1e-9 * x.abs().max(1.0);
    let mut best: Option<(f64, usize, f64)> = None;
    let max_n = (target_n as f64 * 1.3) as usize;
    let min_n = target_n / 2;
    for p in 1..=1024usize {
        let rp = r * p as f64;
        if !is_int(rp) {
            continue;
        }
        for q in 1..=1024usize {
            let rq = r * q as f64;
            if !is_int(rq) {
                continue;
            }
            let n = (rp * q as f64).round() as usize;
            if n > max_n {
                break;
            }
            if n < min_n || n % 2 != 0 {
                continue;
            }
            let dt = a_r / p as f64;
            let balance = (dt * (n as f64 / s).sqrt()).ln().abs();
            let size = (n as f64 / target_n as f64).ln().abs();
            let score = balance + size;
            if best.map_or(true, |b| score < b.0 - 1e-12) {
                best = Some((score, n, dt));
            }
        }
    }
    let make = |n: usize, dt: f64, commensurate: bool| -> Result<FrameGrid> {
        let grid = TimeGrid::centered(dt, n)?;
        Ok(FrameGrid { grid, commensurate })
    };
    match best {
        // Reject badly unbalanced candidates; the Gaussian must fit both ways.
        Some((score, n, dt)) if score < 1.0 => {
            let fg = make(n, dt, true)?;
            if gaussian_window(s, &fg.grid).is_ok() {
                return Ok(fg);
            }
            make(target_n, (s / target_n as f64).sqrt(), false)
        }
        _ => make(target_n, (s / target_n as f64).sqrt(), false),
    }
}

/// Dense discretization of the frame operator of a real window.
#[derive(Debug, Clone)]
pub struct FrameMatrix {
    pub grid: TimeGrid,
    pub matrix: DMatrix<f64>,
    eigen: SymmetricEigen<f64, nalgebra::Dyn>,
}

impl FrameMatrix {
    /// Frame operator of `(g, a, b)` on the periodic grid of `g`. The window must be real.
    pub fn build(g: &SampledSignal, a: f64, b: f64) -> Result<Self> {
        let grid = g.grid;
        let n = grid.n;
        let gr: Vec<f64> = g.values.iter().map(|v| v.re).collect();
        let mut h = DMatrix::<f64>::zeros(n, n);
        let shifts: Vec<Vec<f64>> = match closing_periods(&grid, a, b) {
            Some((nk, _)) => {
                let p = n / nk;
                (0..nk)
                    .map(|k| {
                        let mut v = gr.clone();
                        v.rotate_right(k * p);
                        v
                    })
                    .collect()
            }
            None => {
                let km = (0.5 * grid.span() / a).ceil() as i64;
                (-km..=km)
                    .map(|k| translate(g, a * k as f64).values.iter().map(|v| v.re).collect())
                    .collect()
            }
        };
        for v in &shifts {
            let col = DVector::from_column_slice(v);
            h.ger(1.0, &col, &col, 1.0);
        }
        let diag_sum: Vec<f64> = match closing_periods(&grid, a, b) {
            Some((_, nl)) => (0..n).map(|d| if d % nl == 0 { nl as f64 } else { 0.0 }).collect(),
            None => {
                let lm = (0.5 / (grid.dt * b)).ceil() as i64;
                (0..n)
                    .map(|d| {
                        let x = d as f64 * grid.dt;
                        (-lm..=lm).map(|l| (2.0 * PI * b * l as f64 * x).cos()).sum()
                    })
                    .collect()
            }
        };
        for j in 0..n {
            for i in 0..n {
                h[(i, j)] *= grid.dt * diag_sum[i.abs_diff(j)];
            }
        }
        let eigen = SymmetricEigen::new(h.clone());
        Ok(Self { grid, matrix: h, eigen })
    }

    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigen.eigenvalues
    }

    pub fn condition_number(&self) -> f64 {
        let ev = &self.eigen.eigenvalues;
        let max = ev.max();
        let min = ev.min();
        if min <= 0.0 {
            f64::INFINITY
        } else {
            max / min
        }
    }

    pub fn apply(&self, f: &SampledSignal) -> SampledSignal {
        apply_real_matrix(&self.matrix, f)
    }

    /// `S^{p} f` through the eigendecomposition.
    pub fn apply_power(&self, f: &SampledSignal, p: f64) -> SampledSignal {
        let ev = &self.eigen.eigenvalues;
        let v = &self.eigen.eigenvectors;
        let scaled = DVector::from_iterator(ev.len(), ev.iter().map(|l| l.powf(p)));
        let m = v * DMatrix::from_diagonal(&scaled) * v.transpose();
        apply_real_matrix(&m, f)
    }

    /// `S^{-1/2} f` computed without forming the inverse root.
    pub fn apply_inv_sqrt(&self, f: &SampledSignal) -> SampledSignal {
        let ev = &self.eigen.eigenvalues;
        let v = &self.eigen.eigenvectors;
        let re = DVector::from_iterator(f.grid.n, f.values.iter().map(|x| x.re));
        let im = DVector::from_iterator(f.grid.n, f.values.iter().map(|x| x.im));
        let mut cr = v.transpose() * re;
        let mut ci = v.transpose() * im;
        for (i, l) in ev.iter().enumerate() {
            let w = 1.0 / l.sqrt();
            cr[i] *= w;
            ci[i] *= w;
        }
        let (yr, yi) = (v * cr, v * ci);
        SampledSignal {
            grid: f.grid,
            values: yr.iter().zip(yi.iter()).map(|(a, b)| Complex64::new(*a, *b)).collect(),
        }
    }
}

fn apply_real_matrix(m: &DMatrix<f64>, f: &SampledSignal) -> SampledSignal {
    let re = DVector::from_iterator(f.grid.n, f.values.iter().map(|v| v.re));
    let im = DVector::from_iterator(f.grid.n, f.values.iter().map(|v| v.im));
    let (yr, yi) = (m * re, m * im);
    SampledSignal {
        grid: f.grid,
        values: yr.iter().zip(yi.iter()).map(|(a, b)| Complex64::new(*a, *b)).collect(),
    }
}

/// A tight window together with diagnostics of its construction.
#[derive(Debug, Clone)]
pub struct TightWindow {
    /// Unit-norm window; `(psi, a, b)` scaled by `rho` is orthonormal, `(psi/rho, a/rho, b/rho)` is tight with bound one.
    pub window: SampledSignal,
    pub condition_number: f64,
    pub commensurate: bool,
    pub s: f64,
    pub a: f64,
    pub b: f64,
    pub rho: f64,
}

impl TightWindow {
    pub fn transmit(&self, k_range: IndexRange, l_range: IndexRange) -> Result<GaborSystem> {
        GaborSystem::transmit(&self.window, self.a, self.b, self.rho, self.s, k_range, l_range)
    }

    pub fn receive(&self, k_range: IndexRange, l_range: IndexRange) -> Result<GaborSystem> {
        GaborSystem::receive(&self.window, self.a, self.b, self.rho, self.s, k_range, l_range)
    }

    pub fn receive_covering(&self) -> Result<GaborSystem> {
        GaborSystem::receive_covering(&self.window, self.a, self.b, self.rho, self.s)
    }
}

fn check_lattice(s: f64, a: f64, b: f64, rho: f64) -> Result<()> {
    if !(s > 0.0 && s.is_finite()) {
        return Err(invalid("s", format!("must be positive, got {s}")));
    }
    if !(a > 0.0 && b > 0.0) {
        return Err(invalid("a", "lattice steps must be positive"));
    }
    if ((a * b) - 1.0).abs() > 1e-9 {
        return Err(invalid("a", format!("lattice must satisfy a*b = 1, got {}", a * b)));
    }
    if !(rho > 1.0) {
        return Err(Error::BalianLow { rho });
    }
    Ok(())
}

/// `psi_s = S^{-1/2} g_s` for the frame `(g_s, a/rho, b/rho)`, on a grid chosen
/// by [`choose_frame_grid`] near [`DEFAULT_GRID_N`] samples.
pub fn tight_window(s: f64, a: f64, b: f64, rho: f64) -> Result<TightWindow> {
    tight_window_sized(s, a, b, rho, DEFAULT_GRID_N)
}

/// [`tight_window`] with a target grid size.
pub fn tight_window_sized(s: f64, a: f64, b: f64, rho: f64, target_n: usize) -> Result<TightWindow> {
    check_lattice(s, a, b, rho)?;
    let fg = choose_frame_grid(s, a / rho, b / rho, target_n)?;
    tight_window_on(s, a, b, rho, fg.grid)
}

/// [`tight_window`] on an explicit centered grid.
pub fn tight_window_on(s: f64, a: f64, b: f64, rho: f64, grid: TimeGrid) -> Result<TightWindow> {
    check_lattice(s, a, b, rho)?;
    let g = gaussian_window(s, &grid)?;
    let frame = FrameMatrix::build(&g, a / rho, b / rho)?;
    let condition_number = frame.condition_number();
    if !(condition_number <= MAX_CONDITION) {
        return Err(Error::IllConditioned {
            condition: condition_number,
        });
    }
    let mut psi = frame.apply_inv_sqrt(&g);
    let norm = psi.norm();
    for v in &mut psi.values {
        *v = Complex64::new(v.re / norm, 0.0);
    }
    Ok(TightWindow {
        window: psi,
        condition_number,
        commensurate: closing_periods(&grid, a / rho, b / rho).is_some(),
        s,
        a,
        b,
        rho,
    })
}

/// Gram matrix `<phi_j, phi_i>` of the system's atoms in `(k, l)` row-major order.
pub fn gram_matrix(sys: &GaborSystem) -> DMatrix<Complex64> {
    let atoms: Vec<SampledSignal> = sys.lattice.indices().into_iter().map(|(k, l)| sys.atom(k, l)).collect();
    let m = atoms.len();
    let mut g = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in 0..=i {
            let v = atoms[j].inner(&atoms[i]);
            g[(i, j)] = v;
            g[(j, i)] = v.conj();
        }
    }
    g
}

/// `max |G - I|` over the Gram matrix.
pub fn gram_max_deviation(sys: &GaborSystem) -> f64 {
    let g = gram_matrix(sys);
    let mut worst = 0.0f64;
    for i in 0..g.nrows() {
        for j in 0..g.ncols() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g[(i, j)] - Complex64::new(target, 0.0)).norm());
        }
    }
    worst
}

/// Writes `index,time,re,im` rows.
pub fn write_signal_csv<W: Write>(f: &SampledSignal, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["index", "time", "re", "im"])?;
    for (i, v) in f.values.iter().enumerate() {
        w.write_record(&[
            i.to_string(),
            f.grid.time(i).to_string(),
            v.re.to_string(),
            v.im.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `row,col,re,im` rows for a complex matrix.
pub fn write_matrix_csv<W: Write>(m: &DMatrix<Complex64>, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["row", "col", "re", "im"])?;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            let v = m[(i, j)];
            w.write_record(&[i.to_string(), j.to_string(), v.re.to_string(), v.im.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}
