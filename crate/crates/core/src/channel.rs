//! Linear time-varying channels as Weyl operators.
//!
//! The operator convention used throughout is
//!
//! ```text
//! L s(t) = ∬ h(w, x) e^{-πixw} (T_{-x} M_w s)(t) dw dx
//!        = ∬ h(w, x) e^{πixw} e^{2πiwt} s(t + x) dw dx
//! ```
//!
//! with spreading function `h`. Its Weyl symbol is the symplectic transform
//! `σ(t, ξ) = ∬ h(w, x) e^{2πi(wt + xξ)} dw dx`, and composition of operators
//! corresponds to the twisted convolution
//! `(h1 ♮ h2)(w, x) = ∬ h1(w', x') h2(w - w', x - x') e^{πi(w x' - x w')} dw' dx'`.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::gabor::{analysis_coefficients, GaborSystem};
use crate::quadrature::{nodes_with_breaks, panel_nodes};
use crate::tfcore::{translate, SampledSignal, TFGridFunction, TimeGrid};

/// Truncation level for spreading-function tails.
pub const EPS_QUAD: f64 = 1e-10;
/// Largest number of quadrature nodes a grid spreading function may carry.
pub const NODE_BUDGET: usize = 10_000_000;
/// Tolerance on the imaginary residue of a computed real symbol.
pub const SYMBOL_IMAG_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpreadingKind {
    SeparableExponential,
    LtiLimitFamily,
    CustomGrid,
    PointMasses,
}

/// `C e^{-β|w| - α|x|}` times a unimodular linear phase, or the normalized
/// Doppler family `(β/2) e^{-β|w|} e^{-α|x|}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Separable {
    pub kind: SpreadingKind,
    pub amplitude: f64,
    pub alpha: f64,
    pub beta: f64,
    pub phase_seed: u64,
    pub n_index: Option<usize>,
    /// Phase slope along the Doppler axis.
    pub theta_doppler: f64,
    /// Phase slope along the delay axis.
    pub theta_delay: f64,
}

impl Separable {
    fn normalized(&self) -> bool {
        self.kind == SpreadingKind::LtiLimitFamily
    }

    /// Doppler profile `a(w)`.
    pub fn doppler(&self, w: f64) -> Complex64 {
        let mag = (-self.beta * w.abs()).exp();
        if self.normalized() {
            Complex64::new(0.5 * self.beta * mag, 0.0)
        } else {
            Complex64::from_polar(mag, self.theta_doppler * w)
        }
    }

    /// Delay profile `b(x)`.
    pub fn delay(&self, x: f64) -> Complex64 {
        Complex64::from_polar((-self.alpha * x.abs()).exp(), self.theta_delay * x)
    }

    /// `∫ a(w) e^{2πiwτ} dw` for the phase-free profile.
    fn doppler_profile_transform(&self, tau: f64) -> f64 {
        let b = self.beta;
        let d = b * b + (2.0 * PI * tau).powi(2);
        if self.normalized() {
            b * b / d
        } else {
            2.0 * b / d
        }
    }

    /// `∫ a(w) e^{2πiwτ} dw`, real for both families.
    pub fn doppler_transform(&self, tau: f64) -> f64 {
        self.doppler_profile_transform(tau + self.theta_doppler / (2.0 * PI))
    }

    /// `∫ b(x) e^{-2πiνx} dx`.
    pub fn delay_fourier(&self, nu: f64) -> f64 {
        let a = self.alpha;
        2.0 * a / (a * a + (2.0 * PI * nu - self.theta_delay).powi(2))
    }

    /// `∫ b(x) e^{2πixξ} dx`.
    pub fn delay_transform(&self, xi: f64) -> f64 {
        self.delay_fourier(-xi)
    }

    pub fn eval(&self, w: f64, x: f64) -> Complex64 {
        self.doppler(w) * self.delay(x) * self.amplitude
    }

    /// Weyl symbol `σ(t, ξ)`.
    pub fn symbol(&self, t: f64, xi: f64) -> f64 {
        self.amplitude * self.doppler_transform(t) * self.delay_transform(xi)
    }

    /// Constant `C` of the envelope `|h(w, x)| <= C e^{-β|w| - α|x|}`.
    pub fn envelope_constant(&self) -> f64 {
        if self.normalized() {
            0.5 * self.beta * self.amplitude
        } else {
            self.amplitude
        }
    }

    /// `S = conj(σ) ♯ σ` at one point, via `S(t, ξ) = C² |G(t, ξ)|²` with
    /// `G(t, ξ) = ∫ b(q) e^{2πiqξ} ǎ(t - q/2) dq` for the phase-free profiles.
    /// Linear phases shift the argument.
    pub fn symbol_s_at(&self, t: f64, xi: f64) -> f64 {
        let t = t + self.theta_doppler / (2.0 * PI);
        let xi = xi + self.theta_delay / (2.0 * PI);
        let alpha = self.alpha;
        let q_max = 40.0 / alpha;
        let width = (0.5 / (xi.abs() + 1.0)).min(self.beta / (2.0 * PI)).min(0.25);
        let mut g = Complex64::new(0.0, 0.0);
        for (q, wgt) in nodes_with_breaks(-q_max, q_max, &[0.0, 2.0 * t], width) {
            let val = (-alpha * q.abs()).exp() * self.doppler_profile_transform(t - 0.5 * q);
            g += Complex64::from_polar(val * wgt, 2.0 * PI * q * xi);
        }
        self.amplitude * self.amplitude * g.norm_sqr()
    }
}

/// A weighted Dirac mass at `(w, x)` in the spreading plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointMass {
    pub w: f64,
    pub x: f64,
    pub weight: Complex64,
}

/// Spreading function `h(w, x)` of a channel.
#[derive(Debug, Clone, PartialEq)]
pub enum SpreadingFunction {
    Separable(Separable),
    /// Samples on a centered product grid: `x_grid` is the delay axis,
    /// `w_grid` the Doppler axis; integrals use the cell area as weight.
    Grid(TFGridFunction),
    Points(Vec<PointMass>),
}

fn check_rates(alpha: f64, beta: f64) -> Result<()> {
    if !(alpha >= 1.0 && alpha.is_finite()) {
        return Err(invalid("alpha", format!("must be at least 1, got {alpha}")));
    }
    if !(beta >= 1.0 && beta.is_finite()) {
        return Err(invalid("beta", format!("must be at least 1, got {beta}")));
    }
    Ok(())
}

/// Linear phase slopes derived from a seed; zero for seed zero.
fn phase_slopes(seed: u64) -> (f64, f64) {
    if seed == 0 {
        return (0.0, 0.0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (rng.gen_range(-0.5 * PI..0.5 * PI), rng.gen_range(-0.5 * PI..0.5 * PI))
}

/// Builds a separable spreading function of the given kind.
pub fn make_spreading(
    kind: SpreadingKind,
    amplitude: f64,
    alpha: f64,
    beta: f64,
    phase_seed: u64,
) -> Result<SpreadingFunction> {
    check_rates(alpha, beta)?;
    if !(amplitude >= 0.0 && amplitude.is_finite()) {
        return Err(invalid("amplitude", format!("must be nonnegative, got {amplitude}")));
    }
    match kind {
        SpreadingKind::SeparableExponential => {
            let (theta_doppler, theta_delay) = phase_slopes(phase_seed);
            Ok(SpreadingFunction::Separable(Separable {
                kind,
                amplitude,
                alpha,
                beta,
                phase_seed,
                n_index: None,
                theta_doppler,
                theta_delay,
            }))
        }
        SpreadingKind::LtiLimitFamily => Ok(SpreadingFunction::Separable(Separable {
            kind,
            amplitude: 1.0,
            alpha,
            beta,
            phase_seed: 0,
            n_index: None,
            theta_doppler: 0.0,
            theta_delay: 0.0,
        })),
        SpreadingKind::CustomGrid | SpreadingKind::PointMasses => Err(invalid(
            "kind",
            "grid and point-mass channels are built from their samples",
        )),
    }
}

/// Member `n` of the time-invariant limit family with Doppler rate `beta_n`.
pub fn lti_family(alpha: f64, beta_n: f64, n_index: usize) -> Result<SpreadingFunction> {
    let mut sf = make_spreading(SpreadingKind::LtiLimitFamily, 1.0, alpha, beta_n, 0)?;
    if let SpreadingFunction::Separable(s) = &mut sf {
        s.n_index = Some(n_index);
    }
    Ok(sf)
}

impl SpreadingFunction {
    pub fn identity() -> Self {
        Self::point(0.0, 0.0, Complex64::new(1.0, 0.0))
    }

    pub fn point(w: f64, x: f64, weight: Complex64) -> Self {
        Self::Points(vec![PointMass { w, x, weight }])
    }

    pub fn kind(&self) -> SpreadingKind {
        match self {
            Self::Separable(s) => s.kind,
            Self::Grid(_) => SpreadingKind::CustomGrid,
            Self::Points(_) => SpreadingKind::PointMasses,
        }
    }

    /// Value at `(w, x)`; grid samples are interpolated bilinearly and point
    /// masses evaluate to their weight at the exact location.
    pub fn eval(&self, w: f64, x: f64) -> Complex64 {
        match self {
            Self::Separable(s) => s.eval(w, x),
            Self::Grid(g) => bilinear(g, x, w).unwrap_or_default(),
            Self::Points(ps) => ps.iter().filter(|p| p.w == w && p.x == x).map(|p| p.weight).sum(),
        }
    }

    /// Spreading function of the adjoint operator: `conj(h(-w, -x))`.
    pub fn adjoint(&self) -> Self {
        match self {
            Self::Separable(s) => {
                // The linear-phase family is invariant under the conjugate flip.
                Self::Separable(*s)
            }
            Self::Grid(g) => Self::Grid(conjugate_flip(g)),
            Self::Points(ps) => Self::Points(
                ps.iter()
                    .map(|p| PointMass {
                        w: -p.w,
                        x: -p.x,
                        weight: p.weight.conj(),
                    })
                    .collect(),
            ),
        }
    }

    /// Weyl symbol at `(t, ξ)`.
    pub fn symbol(&self, t: f64, xi: f64) -> Complex64 {
        match self {
            Self::Separable(s) => Complex64::new(s.symbol(t, xi), 0.0),
            Self::Grid(g) => {
                let mut acc = Complex64::new(0.0, 0.0);
                for c in 0..g.x_grid.n {
                    let x = g.x_grid.time(c);
                    for r in 0..g.w_grid.n {
                        let v = g.values[(r, c)];
                        if v != Complex64::new(0.0, 0.0) {
                            acc += v * Complex64::from_polar(1.0, 2.0 * PI * (g.w_grid.time(r) * t + x * xi));
                        }
                    }
                }
                acc * g.cell_area()
            }
            Self::Points(ps) => ps
                .iter()
                .map(|p| p.weight * Complex64::from_polar(1.0, 2.0 * PI * (p.w * t + p.x * xi)))
                .sum(),
        }
    }

    /// Samples on a product grid (`x_grid` delay, `w_grid` Doppler).
    pub fn sample(&self, x_grid: TimeGrid, w_grid: TimeGrid) -> TFGridFunction {
        TFGridFunction::from_fn(x_grid, w_grid, |x, w| self.eval(w, x))
    }
}

fn conjugate_flip(g: &TFGridFunction) -> TFGridFunction {
    let (nw, nx) = (g.w_grid.n, g.x_grid.n);
    let mut out = g.clone();
    for r in 0..nw {
        for c in 0..nx {
            // On a centered grid index i holds (i - n/2) h; its mirror is n - i.
            let (mr, mc) = (nw - r, nx - c);
            out.values[(r, c)] = if mr < nw && mc < nx {
                g.values[(mr, mc)].conj()
            } else {
                Complex64::new(0.0, 0.0)
            };
        }
    }
    out
}

/// Symbol and spreading samples of one channel.
#[derive(Debug, Clone)]
pub struct WeylSymbolGrid {
    /// `σ(t, ξ)`: `x_grid` is time, `w_grid` frequency.
    pub sigma: TFGridFunction,
    /// `h(w, x)`: `x_grid` is delay, `w_grid` Doppler.
    pub sigma_hat: TFGridFunction,
}

impl WeylSymbolGrid {
    /// Samples both the spreading function and its symbol.
    pub fn sample(
        sf: &SpreadingFunction,
        spread_x: TimeGrid,
        spread_w: TimeGrid,
        t_grid: TimeGrid,
        xi_grid: TimeGrid,
    ) -> Self {
        let sigma_hat = sf.sample(spread_x, spread_w);
        let sigma = TFGridFunction::from_fn(t_grid, xi_grid, |t, xi| sf.symbol(t, xi));
        Self { sigma, sigma_hat }
    }

    /// `max |σ - F_s h|` with the symplectic transform taken by direct
    /// quadrature over the spreading samples.
    pub fn transform_mismatch(&self) -> f64 {
        let via = SpreadingFunction::Grid(self.sigma_hat.clone());
        let mut worst = 0.0f64;
        for c in 0..self.sigma.x_grid.n {
            for r in 0..self.sigma.w_grid.n {
                let t = self.sigma.x_grid.time(c);
                let xi = self.sigma.w_grid.time(r);
                worst = worst.max((via.symbol(t, xi) - self.sigma.values[(r, c)]).norm());
            }
        }
        worst
    }
}

/// Band-limited product-integration weights `w(m) = h ∫_{-B}^{B} b^(ν) e^{2πiνmh} dν`,
/// `B = 1/(2h)`, for `m = -(n-1)..=(n-1)` (index `m + n - 1`).
fn delay_weights(sep: &Separable, grid: &TimeGrid) -> Vec<Complex64> {
    let n = grid.n;
    let h = grid.dt;
    let band = 0.5 / h;
    let nodes = nodes_with_breaks(-band, band, &[self_peak(sep)], band / 128.0);
    let vals: Vec<(f64, f64)> = nodes.iter().map(|&(nu, w)| (nu, w * sep.delay_fourier(nu))).collect();
    (0..2 * n - 1)
        .map(|idx| {
            let m = idx as f64 - (n - 1) as f64;
            let s: Complex64 = vals
                .iter()
                .map(|&(nu, fw)| Complex64::from_polar(fw, 2.0 * PI * nu * m * h))
                .sum();
            s * h
        })
        .collect()
}

fn self_peak(sep: &Separable) -> f64 {
    sep.theta_delay / (2.0 * PI)
}

/// Applies the Weyl operator with spreading function `sf` to `s`.
///
/// Separable channels use the exact kernel `k(t, y) = C b(y - t) ǎ((t + y)/2)`
/// with band-limited product-integration weights along the delay kink; grid
/// channels sum their nodes directly; point masses are applied exactly.
pub fn apply_weyl(sf: &SpreadingFunction, s: &SampledSignal) -> Result<SampledSignal> {
    match sf {
        Spreading::Separable(sep) => Ok(WeylKernel::new(sep, &s.grid).apply(s)),
        Spreading::Grid(g) => apply_grid(g, s),
        Spreading::Points(ps) => Ok(apply_points(ps, s)),
    }
}

use SpreadingFunction as Spreading;

/// Precomputed kernel factors of a separable channel on one grid.
#[derive(Debug, Clone)]
pub struct WeylKernel {
    grid: TimeGrid,
    amplitude: f64,
    weights: Vec<Complex64>,
    /// `ǎ(t0 + j h / 2)` for `j = 0..2n-1`.
    doppler: Vec<f64>,
}

impl WeylKernel {
    pub fn new(sep: &Separable, grid: &TimeGrid) -> Self {
        let n = grid.n;
        let doppler = (0..2 * n - 1)
            .map(|j| sep.doppler_transform(grid.t0 + 0.5 * j as f64 * grid.dt))
            .collect();
        Self {
            grid: *grid,
            amplitude: sep.amplitude,
            weights: delay_weights(sep, grid),
            doppler,
        }
    }

    pub fn apply(&self, s: &SampledSignal) -> SampledSignal {
        debug_assert!(s.grid.same_as(&self.grid));
        let n = self.grid.n;
        let support: Vec<usize> = (0..n).filter(|&j| s.values[j] != Complex64::new(0.0, 0.0)).collect();
        let values = (0..n)
            .map(|i| {
                let mut acc = Complex64::new(0.0, 0.0);
                for &j in &support {
                    let w = self.weights[j + n - 1 - i];
                    acc += w * (self.doppler[i + j] * s.values[j]);
                }
                acc * self.amplitude
            })
            .collect();
        SampledSignal { grid: s.grid, values }
    }
}

fn apply_points(ps: &[PointMass], s: &SampledSignal) -> SampledSignal {
    let mut out = SampledSignal::zeros(s.grid);
    for p in ps {
        let shifted = translate(s, -p.x);
        let c = p.weight * Complex64::from_polar(1.0, PI * p.x * p.w);
        for (i, (o, v)) in out.values.iter_mut().zip(&shifted.values).enumerate() {
            *o += c * Complex64::from_polar(1.0, 2.0 * PI * p.w * s.grid.time(i)) * v;
        }
    }
    out
}

fn apply_grid(g: &TFGridFunction, s: &SampledSignal) -> Result<SampledSignal> {
    let nodes = g.values.iter().filter(|v| v.norm() > 0.0).count();
    if nodes > NODE_BUDGET {
        return Err(Error::QuadratureBudget {
            nodes,
            limit: NODE_BUDGET,
        });
    }
    let n = s.grid.n;
    let area = g.cell_area();
    let mut out = SampledSignal::zeros(s.grid);
    for c in 0..g.x_grid.n {
        let col = g.values.column(c);
        if col.iter().all(|v| *v == Complex64::new(0.0, 0.0)) {
            continue;
        }
        let x = g.x_grid.time(c);
        let shifted = translate(s, -x);
        // Doppler sum for every output time: Σ_r h_rc e^{πixw_r} e^{2πiw_r t}.
        let mut kappa = vec![Complex64::new(0.0, 0.0); n];
        for r in 0..g.w_grid.n {
            let v = col[r];
            if v == Complex64::new(0.0, 0.0) {
                continue;
            }
            let w = g.w_grid.time(r);
            let c0 = v * Complex64::from_polar(area, PI * x * w);
            let step = Complex64::from_polar(1.0, 2.0 * PI * w * s.grid.dt);
            let mut ph = Complex64::from_polar(1.0, 2.0 * PI * w * s.grid.t0);
            for k in kappa.iter_mut() {
                *k += c0 * ph;
                ph *= step;
            }
        }
        for ((o, k), v) in out.values.iter_mut().zip(&kappa).zip(&shifted.values) {
            *o += k * v;
        }
    }
    Ok(out)
}

/// Optional sign fault for exercising the validation suite.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TwistFault {
    #[default]
    None,
    /// Negates the `w x'` term of the twisting phase.
    FlipSign,
}

fn twist_phase(w: f64, x: f64, wp: f64, xp: f64, fault: TwistFault) -> f64 {
    let first = match fault {
        TwistFault::None => w * xp,
        TwistFault::FlipSign => -w * xp,
    };
    PI * (first - x * wp)
}

/// Twisted convolution of two point-mass spreading functions (exact).
pub fn twisted_points(p1: &[PointMass], p2: &[PointMass], fault: TwistFault) -> Vec<PointMass> {
    let mut out = Vec::with_capacity(p1.len() * p2.len());
    for a in p1 {
        for b in p2 {
            let (w, x) = (a.w + b.w, a.x + b.x);
            let ph = twist_phase(w, x, a.w, a.x, fault);
            out.push(PointMass {
                w,
                x,
                weight: a.weight * b.weight * Complex64::from_polar(1.0, ph),
            });
        }
    }
    out
}

fn edge_max(g: &TFGridFunction) -> f64 {
    let (nr, nc) = (g.values.nrows(), g.values.ncols());
    let mut m = 0.0f64;
    for r in 0..nr {
        m = m.max(g.values[(r, 0)].norm()).max(g.values[(r, nc - 1)].norm());
    }
    for c in 0..nc {
        m = m.max(g.values[(0, c)].norm()).max(g.values[(nr - 1, c)].norm());
    }
    m
}

/// `(h1 ♮ h2)(w, x)` on the common centered grid by direct quadrature.
pub fn twisted_convolution(h1: &TFGridFunction, h2: &TFGridFunction) -> Result<TFGridFunction> {
    twisted_convolution_with(h1, h2, TwistFault::None)
}

/// [`twisted_convolution`] with an optional injected fault.
pub fn twisted_convolution_with(h1: &TFGridFunction, h2: &TFGridFunction, fault: TwistFault) -> Result<TFGridFunction> {
    if !h1.x_grid.same_as(&h2.x_grid) || !h1.w_grid.same_as(&h2.w_grid) {
        return Err(Error::GridMismatch("twisted convolution needs a common grid".into()));
    }
    let (xg, wg) = (h1.x_grid, h1.w_grid);
    for g in [&xg, &wg] {
        if (g.midpoint()).abs() > 1e-12 * g.dt {
            return Err(Error::GridMismatch("twisted convolution needs centered grids".into()));
        }
    }
    let x_ext = 0.5 * xg.span();
    let w_ext = 0.5 * wg.span();
    if x_ext * wg.dt > 0.5 || w_ext * xg.dt > 0.5 {
        return Err(Error::Nyquist(format!(
            "steps ({}, {}) over extents ({x_ext}, {w_ext}) under-resolve the phase",
            xg.dt, wg.dt
        )));
    }
    let scale = h1.max_abs().max(h2.max_abs());
    if scale > 0.0 && (edge_max(h1) > 1e-12 * scale || edge_max(h2) > 1e-12 * scale) {
        return Err(Error::GridTooSmall(
            "spreading samples do not decay below 1e-12 at the grid edges".into(),
        ));
    }
    let (nw, nx) = (wg.n, xg.n);
    let (hw, hx) = (nw as i64 / 2, nx as i64 / 2);
    let area = h1.cell_area();
    let mut out = DMatrix::<Complex64>::zeros(nw, nx);
    let nz: Vec<(usize, usize, Complex64)> = (0..nx)
        .flat_map(|c| (0..nw).map(move |r| (r, c)))
        .filter_map(|(r, c)| {
            let v = h1.values[(r, c)];
            (v != Complex64::new(0.0, 0.0)).then_some((r, c, v))
        })
        .collect();
    for c in 0..nx {
        let x = xg.time(c);
        for r in 0..nw {
            let w = wg.time(r);
            let mut acc = Complex64::new(0.0, 0.0);
            for &(rp, cp, v) in &nz {
                let r2 = r as i64 - rp as i64 + hw;
                let c2 = c as i64 - cp as i64 + hx;
                if r2 < 0 || c2 < 0 || r2 >= nw as i64 || c2 >= nx as i64 {
                    continue;
                }
                let u = h2.values[(r2 as usize, c2 as usize)];
                if u == Complex64::new(0.0, 0.0) {
                    continue;
                }
                let ph = twist_phase(w, x, wg.time(rp), xg.time(cp), fault);
                acc += v * u * Complex64::from_polar(1.0, ph);
            }
            out[(r, c)] = acc * area;
        }
    }
    Ok(TFGridFunction {
        x_grid: xg,
        w_grid: wg,
        values: out,
    })
}

/// Spreading function of the composition `L_{h1} L_{h2}`, where it can be
/// formed: point masses exactly, grids by quadrature.
pub fn compose(h1: &SpreadingFunction, h2: &SpreadingFunction) -> Result<SpreadingFunction> {
    compose_with(h1, h2, TwistFault::None)
}

pub fn compose_with(h1: &SpreadingFunction, h2: &SpreadingFunction, fault: TwistFault) -> Result<SpreadingFunction> {
    match (h1, h2) {
        (Spreading::Points(a), Spreading::Points(b)) => Ok(Spreading::Points(twisted_points(a, b, fault))),
        (Spreading::Grid(a), Spreading::Grid(b)) => Ok(Spreading::Grid(twisted_convolution_with(a, b, fault)?)),
        _ => Err(invalid("kind", "composition needs two point-mass or two grid channels")),
    }
}

/// Symbol `S = conj(σ) ♯ σ` of `L*L` on the product grid `t_grid x xi_grid`.
pub fn symbol_s(sf: &SpreadingFunction, t_grid: TimeGrid, xi_grid: TimeGrid) -> Result<TFGridFunction> {
    symbol_s_with(sf, t_grid, xi_grid, TwistFault::None)
}

/// [`symbol_s`] with an optional injected fault in the twisted convolution.
pub fn symbol_s_with(
    sf: &SpreadingFunction,
    t_grid: TimeGrid,
    xi_grid: TimeGrid,
    fault: TwistFault,
) -> Result<TFGridFunction> {
    let raw = match sf {
        Spreading::Separable(sep) => {
            let pts: Vec<(usize, usize)> = (0..t_grid.n)
                .flat_map(|c| (0..xi_grid.n).map(move |r| (r, c)))
                .collect();
            let vals: Vec<f64> = pts
                .par_iter()
                .map(|&(r, c)| sep.symbol_s_at(t_grid.time(c), xi_grid.time(r)))
                .collect();
            let mut values = DMatrix::zeros(xi_grid.n, t_grid.n);
            for (&(r, c), v) in pts.iter().zip(vals) {
                values[(r, c)] = Complex64::new(v, 0.0);
            }
            TFGridFunction {
                x_grid: t_grid,
                w_grid: xi_grid,
                values,
            }
        }
        _ => {
            let composed = compose_with(&sf.adjoint(), sf, fault)?;
            TFGridFunction::from_fn(t_grid, xi_grid, |t, xi| composed.symbol(t, xi))
        }
    };
    let scale = raw.max_abs().max(1.0);
    let residue = raw.max_imag();
    if residue > SYMBOL_IMAG_TOL * scale {
        return Err(Error::ImaginaryResidue {
            residue,
            tol: SYMBOL_IMAG_TOL,
        });
    }
    let mut real = raw;
    for v in real.values.iter_mut() {
        *v = Complex64::new(v.re, 0.0);
    }
    Ok(real)
}

/// Bilinear interpolation of `g` at `(x, w)`; `None` outside the grid.
pub fn bilinear(g: &TFGridFunction, x: f64, w: f64) -> Option<Complex64> {
    let locate = |grid: &TimeGrid, v: f64| -> Option<(usize, f64)> {
        let r = (v - grid.t0) / grid.dt;
        let tol = 1e-9;
        if r < -tol || r > (grid.n - 1) as f64 + tol {
            return None;
        }
        let r = r.clamp(0.0, (grid.n - 1) as f64);
        let i = (r.floor() as usize).min(grid.n - 2);
        Some((i, r - i as f64))
    };
    let (c, fx) = locate(&g.x_grid, x)?;
    let (r, fw) = locate(&g.w_grid, w)?;
    let v00 = g.values[(r, c)];
    let v01 = g.values[(r, c + 1)];
    let v10 = g.values[(r + 1, c)];
    let v11 = g.values[(r + 1, c + 1)];
    Some(v00 * (1.0 - fx) * (1.0 - fw) + v01 * fx * (1.0 - fw) + v10 * (1.0 - fx) * fw + v11 * fx * fw)
}

/// Lattice positions `(ρ(β/α)k, ρ(α/β)l)` for `k = 0..=K`, `l = -L..=L`.
pub fn symbol_lattice(alpha: f64, beta: f64, rho: f64, k_max: usize, l_max: usize) -> Vec<(i64, i64, f64, f64)> {
    let (dt, dxi) = (rho * beta / alpha, rho * alpha / beta);
    let mut out = Vec::new();
    for k in 0..=k_max as i64 {
        for l in -(l_max as i64)..=l_max as i64 {
            out.push((k, l, dt * k as f64, dxi * l as f64));
        }
    }
    out
}

/// Positive part of `S` sampled bilinearly at the symbol lattice; rows follow
/// `k = 0..=K`, columns `l = -L..=L`.
pub fn sample_s_plus(
    s: &TFGridFunction,
    alpha: f64,
    beta: f64,
    rho: f64,
    k_max: usize,
    l_max: usize,
) -> Result<DMatrix<f64>> {
    let mut out = DMatrix::zeros(k_max + 1, 2 * l_max + 1);
    for (k, l, t, xi) in symbol_lattice(alpha, beta, rho, k_max, l_max) {
        let v = bilinear(s, t, xi).ok_or(Error::OutsideGrid { t, xi })?;
        out[(k as usize, (l + l_max as i64) as usize)] = v.re.max(0.0);
    }
    Ok(out)
}

/// Grids whose nodes include every symbol lattice point, with one extra
/// lattice step of margin on each side.
pub fn lattice_aligned_grids(
    alpha: f64,
    beta: f64,
    rho: f64,
    k_max: usize,
    l_max: usize,
    refine: usize,
) -> Result<(TimeGrid, TimeGrid)> {
    let refine = refine.max(1);
    let (st, sx) = (rho * beta / alpha / refine as f64, rho * alpha / beta / refine as f64);
    let nt = (k_max + 2) * refine;
    let nt = nt + nt % 2;
    let t_grid = TimeGrid::new(-(refine as f64) * st, st, nt + 2)?;
    let nx = 2 * (l_max + 1) * refine + 2;
    let xi_grid = TimeGrid::centered(sx, nx)?;
    Ok((t_grid, xi_grid))
}

/// Matrix `A` with rows indexed by receive atoms and columns by transmit atoms.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMatrix {
    pub entries: DMatrix<Complex64>,
    pub tx_index: Vec<(i64, i64)>,
    pub rx_index: Vec<(i64, i64)>,
    pub eta2: f64,
}

impl ChannelMatrix {
    /// `A* A`.
    pub fn gram(&self) -> DMatrix<Complex64> {
        self.entries.adjoint() * &self.entries
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        crate::gabor::write_matrix_csv(&self.entries, out)
    }

    /// JSON bundle with metadata and `[re, im]` entries in row-major order.
    pub fn to_json(&self, meta: &ChannelMeta) -> serde_json::Value {
        let entries: Vec<[f64; 2]> = (0..self.entries.nrows())
            .flat_map(|i| (0..self.entries.ncols()).map(move |j| (i, j)))
            .map(|(i, j)| [self.entries[(i, j)].re, self.entries[(i, j)].im])
            .collect();
        serde_json::json!({
            "meta": meta,
            "eta2": self.eta2,
            "rows": self.entries.nrows(),
            "cols": self.entries.ncols(),
            "tx_index": self.tx_index,
            "rx_index": self.rx_index,
            "entries": entries,
        })
    }
}

/// Metadata stored next to exported channel matrices.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChannelMeta {
    pub alpha: f64,
    pub beta: f64,
    pub rho: f64,
    pub s: f64,
    pub k_max: usize,
    pub l_max: usize,
    pub grid: TimeGrid,
    pub seed: u64,
}

/// Writes `t,xi,value` rows of a real symbol grid.
pub fn write_symbol_csv<W: Write>(g: &TFGridFunction, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "xi", "re", "im"])?;
    for c in 0..g.x_grid.n {
        for r in 0..g.w_grid.n {
            let v = g.values[(r, c)];
            w.write_record(&[
                g.x_grid.time(c).to_string(),
                g.w_grid.time(r).to_string(),
                v.re.to_string(),
                v.im.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `A_{(k,l),(k',l')} = <L ψ^tx_{k',l'}, ψ^rx_{k,l}>`. Columns are independent
/// and computed in parallel; each column sums in a fixed order.
pub fn channel_matrix(sf: &SpreadingFunction, tx: &GaborSystem, rx: &GaborSystem, eta2: f64) -> Result<ChannelMatrix> {
    if !tx.grid().same_as(&rx.grid()) {
        return Err(Error::GridMismatch(
            "transmit and receive systems live on different grids".into(),
        ));
    }
    let grid = tx.grid();
    let kernel = match sf {
        Spreading::Separable(sep) => Some(WeylKernel::new(sep, &grid)),
        _ => None,
    };
    let tx_index = tx.lattice.indices();
    let rx_index = rx.lattice.indices();
    let columns: Vec<Result<Vec<Complex64>>> = tx_index
        .par_iter()
        .map(|&(k, l)| {
            let atom = tx.atom(k, l);
            let out = match &kernel {
                Some(kern) => kern.apply(&atom),
                None => apply_weyl(sf, &atom)?,
            };
            let c = analysis_coefficients(&out, rx)?;
            Ok(c.values.transpose().iter().copied().collect())
        })
        .collect();
    let mut entries = DMatrix::zeros(rx_index.len(), tx_index.len());
    for (j, col) in columns.into_iter().enumerate() {
        for (i, v) in col?.into_iter().enumerate() {
            entries[(i, j)] = v;
        }
    }
    Ok(ChannelMatrix {
        entries,
        tx_index,
        rx_index,
        eta2,
    })
}

/// Composite rule used by oracles in tests and validation: panels of width at
/// most `width` on `[a, b]` split at `breaks`.
pub fn quadrature_nodes(a: f64, b: f64, breaks: &[f64], width: f64) -> Vec<(f64, f64)> {
    if breaks.is_empty() {
        let panels = ((b - a) / width).ceil().max(1.0) as usize;
        panel_nodes(a, b, panels)
    } else {
        nodes_with_breaks(a, b, breaks, width)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tfcore::{cross_wigner, gaussian_window, modulate};
    use proptest::prelude::{prop_assert, proptest, ProptestConfig};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn grid() -> TimeGrid {
        TimeGrid::centered(1.0 / 32.0, 1024).unwrap()
    }

    fn packet(grid: TimeGrid, p: f64, q: f64) -> SampledSignal {
        let g = gaussian_window(1.0, &grid).unwrap();
        modulate(&translate(&g, p), q)
    }

    #[test]
    fn separable_basics() {
        let sf = make_spreading(SpreadingKind::SeparableExponential, 1.0, 2.0, 3.0, 0).unwrap();
        assert_eq!(sf.eval(0.0, 0.0), c(1.0, 0.0));
        assert!(make_spreading(SpreadingKind::SeparableExponential, 1.0, 0.5, 3.0, 0).is_err());
        assert!(make_spreading(SpreadingKind::SeparableExponential, 1.0, 2.0, 0.9, 0).is_err());
    }

    #[test]
    fn decay_envelope_holds() {
        let sf = make_spreading(SpreadingKind::SeparableExponential, 1.7, 2.0, 3.0, 42).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let (w, x) = (rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0));
            let v = sf.eval(w, x).norm() * (3.0 * f64::abs(w) + 2.0 * f64::abs(x)).exp();
            assert!(v <= 1.7 * (1.0 + 1e-12));
        }
    }

    #[test]
    fn lti_family_integrates_to_delay_profile() {
        for beta in [2.0, 8.0, 32.0] {
            let sf = lti_family(2.0, beta, 0).unwrap();
            let x0 = 0.37;
            let nodes = quadrature_nodes(-60.0 / beta, 60.0 / beta, &[0.0], 0.05 / beta.sqrt());
            let v: Complex64 = nodes.iter().map(|&(w, wt)| sf.eval(w, x0) * wt).sum();
            assert!((v - c((-2.0 * x0).exp(), 0.0)).norm() < 1e-8);
        }
    }

    #[test]
    fn symbol_matches_direct_transform() {
        let sf = make_spreading(SpreadingKind::SeparableExponential, 1.0, 2.0, 3.0, 9).unwrap();
        let (t, xi) = (0.21, -0.4);
        let wn = quadrature_nodes(-15.0, 15.0, &[0.0], 0.05);
        let xn = quadrature_nodes(-20.0, 20.0, &[0.0], 0.05);
        let mut acc = c(0.0, 0.0);
        for &(w, ww) in &wn {
            for &(x, wx) in &xn {
                acc += sf.eval(w, x) * Complex64::from_polar(ww * wx, 2.0 * PI * (w * t + x * xi));
            }
        }
        assert!((acc - sf.symbol(t, xi)).norm() < 1e-9);
    }

    #[test]
    fn identity_and_modulation_channels_are_exact() {
        let s = packet(grid(), 0.4, 1.3);
        assert_eq!(apply_weyl(&SpreadingFunction::identity(), &s).unwrap(), s);
        let m = apply_weyl(&SpreadingFunction::point(2.5, 0.0, c(1.0, 0.0)), &s).unwrap();
        assert!(m.sub(&modulate(&s, 2.5)).norm() < 1e-14);
    }

    #[test]
    fn identity_symbol_is_one() {
        let tg = TimeGrid::centered(0.25, 16).unwrap();
        let s = symbol_s(&SpreadingFunction::identity(), tg, tg).unwrap();
        assert!(s.values.iter().all(|v| (v - c(1.0, 0.0)).norm() < 1e-12));
        let s = symbol_s(&SpreadingFunction::point(1.7, 0.0, c(0.0, 1.0)), tg, tg).unwrap();
        assert!(s.values.iter().all(|v| (v - c(1.0, 0.0)).norm() < 1e-12));
    }

    #[test]
    fn noncommuting_point_masses() {
        let p1 = [PointMass {
            w: 0.7,
            x: -0.3,
            weight: c(1.0, 0.0),
        }];
        let p2 = [PointMass {
            w: -1.1,
            x: 0.9,
            weight: c(1.0, 0.0),
        }];
        let a = twisted_points(&p1, &p2, TwistFault::None)[0];
        let b = twisted_points(&p2, &p1, TwistFault::None)[0];
        let (w1, x1, w2, x2) = (0.7, -0.3, -1.1, 0.9);
        let expected = Complex64::from_polar(1.0, -PI * ((x1 * w2 - w1 * x2) - (x2 * w1 - w2 * x1)));
        assert!((b.weight - a.weight * expected).norm() < 1e-14);
    }

    #[test]
    fn point_mass_composition_matches_operators() {
        let h1 = SpreadingFunction::Points(vec![
            PointMass {
                w: 0.7,
                x: -0.25,
                weight: c(0.8, 0.1),
            },
            PointMass {
                w: -0.4,
                x: 0.5,
                weight: c(0.2, -0.3),
            },
        ]);
        let h2 = SpreadingFunction::Points(vec![
            PointMass {
                w: 1.2,
                x: 0.125,
                weight: c(0.5, 0.5),
            },
            PointMass {
                w: 0.0,
                x: -0.375,
                weight: c(-0.4, 0.2),
            },
        ]);
        let s = packet(grid(), -0.5, 0.8);
        let seq = apply_weyl(&h1, &apply_weyl(&h2, &s).unwrap()).unwrap();
        let comp = apply_weyl(&compose(&h1, &h2).unwrap(), &s).unwrap();
        assert!(seq.sub(&comp).norm() < 1e-12 * s.norm());
        let bad = apply_weyl(&compose_with(&h1, &h2, TwistFault::FlipSign).unwrap(), &s).unwrap();
        assert!(seq.sub(&bad).norm() > 1e-3);
    }

    #[test]
    fn fault_breaks_symbol_reality() {
        let h = SpreadingFunction::Points(vec![
            PointMass {
                w: 0.7,
                x: -0.3,
                weight: c(0.8, 0.1),
            },
            PointMass {
                w: -0.4,
                x: 0.5,
                weight: c(0.2, -0.3),
            },
        ]);
        let tg = TimeGrid::centered(0.25, 16).unwrap();
        assert!(symbol_s(&h, tg, tg).is_ok());
        assert!(matches!(
            symbol_s_with(&h, tg, tg, TwistFault::FlipSign),
            Err(Error::ImaginaryResidue { .. })
        ));
    }

    #[test]
    fn weyl_wigner_pairing_separable() {
        let gr = grid();
        let sf = make_spreading(SpreadingKind::SeparableExponential, 1.0, 2.0, 2.0, 5).unwrap();
        let f = packet(gr, 0.3, 0.5);
        let g = packet(gr, -0.2, -0.4);
        let lhs = apply_weyl(&sf, &f).unwrap().inner(&g);
        let w = cross_wigner(&g, &f).unwrap();
        let sigma = TFGridFunction::from_fn(w.x_grid, w.w_grid, |t, xi| sf.symbol(t, xi));
        let rhs = sigma.inner(&w);
        let scale = apply_weyl(&sf, &f).unwrap().norm() * g.norm();
        assert!((lhs - rhs).norm() < 1e-6 * scale, "{lhs} vs {rhs}");
    }

    #[test]
    fn symbol_s_closed_form_matches_double_application() {
        // <L L f, f> = ∬ S W(f, f) for a self-adjoint L.
        let gr = grid();
        let sf = make_spreading(SpreadingKind::SeparableExponential, 1.0, 2.0, 2.0, 3).unwrap();
        let f = packet(gr, 0.2, -0.3);
        let lf = apply_weyl(&sf, &f).unwrap();
        let lhs = lf.norm_sqr();
        let wig = cross_wigner(&f, &f).unwrap();
        let Spreading::Separable(sep) = sf else { unreachable!() };
        let mut rhs = 0.0;
        for ci in 0..wig.x_grid.n {
            for ri in 0..wig.w_grid.n {
                let wv = wig.values[(ri, ci)].re;
                if wv.abs() > 1e-14 {
                    rhs += wv * sep.symbol_s_at(wig.x_grid.time(ci), wig.w_grid.time(ri));
                }
            }
        }
        rhs *= wig.cell_area();
        assert!((lhs - rhs).abs() < 1e-7 * lhs, "{lhs} vs {rhs}");
    }

    #[test]
    fn grid_symbol_transform_consistency() {
        let sx = TimeGrid::centered(0.125, 64).unwrap();
        let sf = SpreadingFunction::Grid(TFGridFunction::from_fn(sx, sx, |x, w| {
            c((-PI * (x * x + w * w)).exp(), 0.0) * Complex64::from_polar(1.0, 0.3 * x)
        }));
        let tg = TimeGrid::centered(0.2, 10).unwrap();
        let grid = WeylSymbolGrid {
            sigma: TFGridFunction::from_fn(tg, tg, |t, xi| {
                // Closed form of the symplectic transform of the Gaussian above.
                c((-PI * (t * t + (xi + 0.3 / (2.0 * PI)).powi(2))).exp(), 0.0)
            }),
            sigma_hat: match &sf {
                Spreading::Grid(g) => g.clone(),
                _ => unreachable!(),
            },
        };
        assert!(grid.transform_mismatch() < 1e-8);
    }

    #[test]
    fn sample_s_plus_clamps_and_checks_bounds() {
        let tg = TimeGrid::new(-1.0, 0.5, 8).unwrap();
        let mut g = TFGridFunction::from_fn(tg, tg, |_, _| c(1.0, 0.0));
        g.values[(2, 2)] = c(-0.3, 0.0);
        let m = sample_s_plus(&g, 1.0, 1.0, 1.0, 0, 0).unwrap();
        assert_eq!(m[(0, 0)], 0.0);
        assert!(matches!(
            sample_s_plus(&g, 1.0, 1.0, 1.0, 5, 0),
            Err(Error::OutsideGrid { .. })
        ));
    }

    #[test]
    fn grid_budget_is_enforced() {
        let big = TimeGrid::centered(0.001, 3200).unwrap();
        let g = TFGridFunction::from_fn(big, big, |_, _| c(1.0, 0.0));
        let s = packet(TimeGrid::centered(1.0 / 8.0, 64).unwrap(), 0.0, 0.0);
        assert!(matches!(
            apply_weyl(&SpreadingFunction::Grid(g), &s),
            Err(Error::QuadratureBudget { .. })
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]

        #[test]
        fn twisted_identity_with_origin_mass(shift in 0.0f64..0.5) {
            let sx = TimeGrid::centered(0.125, 64).unwrap();
            let tau = TFGridFunction::from_fn(sx, sx, |x, w| {
                c((-PI * ((x - shift).powi(2) + w * w)).exp(), 0.0)
            });
            let mut delta = TFGridFunction::from_fn(sx, sx, |_, _| c(0.0, 0.0));
            delta.values[(32, 32)] = c(1.0 / delta.cell_area(), 0.0);
            let out = twisted_convolution(&delta, &tau).unwrap();
            for (a, b) in out.values.iter().zip(tau.values.iter()) {
                prop_assert!((a - b).norm() < 1e-8);
            }
        }
    }
}
