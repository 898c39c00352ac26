//! Information-capacity estimates over a time-frequency region.
//!
//! Capacities are in bits (base-2 logarithms). The exact figures use the
//! eigenvalues of `A* A` for the channel matrix `A`; the symbol figures use
//! positive-part samples of `S = conj(σ) ♯ σ` on the transmit lattice.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::{
    channel_matrix, lattice_aligned_grids, lti_family, sample_s_plus, symbol_s, ChannelMatrix, SpreadingFunction,
};
use crate::error::{invalid, Error, Result};
use crate::gabor::{tight_window_on, tight_window_sized, GaborSystem, IndexRange, TightWindow, DEFAULT_GRID_N};
use crate::quadrature::integrate;
use crate::tfcore::{decay_envelope_fit, DecayEnvelope, TimeGrid};

/// Largest `(K + 1)(2L + 1)` a report will assemble.
pub const MAX_ATOMS: usize = 256;
/// Allowed asymmetry of a Hermitian input, relative to its largest entry.
pub const HERMITIAN_TOL: f64 = 1e-10;
/// Eigenvalues down to `-NEGATIVE_EIG_TOL` are clamped to zero.
pub const NEGATIVE_EIG_TOL: f64 = 1e-10;

fn log2_1p(x: f64) -> f64 {
    x.ln_1p() / std::f64::consts::LN_2
}

/// Largest `|M_ij - conj(M_ji)|`.
pub fn hermitian_asymmetry(m: &DMatrix<Complex64>) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..m.nrows() {
        for j in i..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

/// Eigenvalues of a Hermitian positive semidefinite matrix, descending and
/// clamped at zero.
pub fn hermitian_eigenvalues(m: &DMatrix<Complex64>) -> Result<Vec<f64>> {
    if m.nrows() != m.ncols() {
        return Err(invalid(
            "matrix",
            format!("must be square, got {}x{}", m.nrows(), m.ncols()),
        ));
    }
    if m.is_empty() {
        return Ok(Vec::new());
    }
    let scale = m.iter().map(|v| v.norm()).fold(1.0f64, f64::max);
    let asymmetry = hermitian_asymmetry(m);
    if asymmetry > HERMITIAN_TOL * scale {
        return Err(Error::NotHermitian { asymmetry });
    }
    let sym = (m + m.adjoint()).scale(0.5);
    let mut eigs: Vec<f64> = sym.symmetric_eigenvalues().iter().copied().collect();
    eigs.sort_by(|a, b| b.total_cmp(a));
    if let Some(&low) = eigs.last() {
        if low < -NEGATIVE_EIG_TOL * scale {
            return Err(invalid(
                "matrix",
                format!("not positive semidefinite: eigenvalue {low:.3e}"),
            ));
        }
    }
    Ok(eigs.into_iter().map(|v| v.max(0.0)).collect())
}

/// Eigenvalues of `A* A` for a channel matrix.
pub fn channel_eigenvalues(m: &ChannelMatrix) -> Result<Vec<f64>> {
    hermitian_eigenvalues(&m.gram())
}

/// `Σ log₂(1 + λ/η²)` over the eigenvalues of `A* A`.
pub fn csir_capacity(eigs: &[f64], eta2: f64) -> f64 {
    eigs.iter().map(|&l| log2_1p(l.max(0.0) / eta2)).sum()
}

/// `Σ log₂(1 + S⁺/η²)` over symbol samples; negative samples contribute zero.
pub fn csir_symbol_capacity(samples: &[f64], eta2: f64) -> f64 {
    csir_capacity(samples, eta2)
}

fn bound_core(rho: f64, alpha: f64, beta: f64, d_est: f64, kappa: f64) -> f64 {
    kappa * ((-0.25 * rho * (alpha + beta)).exp() + 1.0 / (alpha * beta * d_est).powi(2))
}

/// `2KL log₂(1 + κ(e^{-ρ(α+β)/4} + 1/(αβD)²))`, the receiver-side error bound
/// with a fitted constant `κ`.
pub fn error_bound_csir(k_max: usize, l_max: usize, rho: f64, alpha: f64, beta: f64, d_est: f64, kappa: f64) -> f64 {
    let atoms = 2.0 * k_max as f64 * l_max as f64;
    atoms * log2_1p(bound_core(rho, alpha, beta, d_est, kappa))
}

/// `2KL log₂(1 + 2KL κ(e^{-ρ(α+β)/4} + 1/(αβD)²))`, the water-filled analogue.
pub fn error_bound_csit(k_max: usize, l_max: usize, rho: f64, alpha: f64, beta: f64, d_est: f64, kappa: f64) -> f64 {
    let atoms = 2.0 * k_max as f64 * l_max as f64;
    atoms * log2_1p(atoms * bound_core(rho, alpha, beta, d_est, kappa))
}

/// Smallest `κ` for which `bound(κ) >= observed`; zero when nothing is observed.
///
/// The bounds are increasing in `κ`, so the constant is found by bisection.
pub fn fit_kappa(observed: f64, bound: impl Fn(f64) -> f64) -> f64 {
    if observed <= 0.0 {
        return 0.0;
    }
    let mut hi = 1.0;
    while bound(hi) < observed {
        hi *= 2.0;
        if hi > 1e300 {
            return f64::INFINITY;
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if bound(mid) >= observed {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    hi
}

/// Result of water-filling: the common level and the per-channel powers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    pub level: f64,
    pub powers: Vec<f64>,
}

impl Allocation {
    /// Largest violation of the optimality conditions: active channels must
    /// satisfy `P + N = level`, inactive ones `N >= level`.
    pub fn kkt_residual(&self, noise_over_gain: &[f64]) -> f64 {
        self.powers
            .iter()
            .zip(noise_over_gain)
            .map(|(&p, &n)| {
                if p > 0.0 {
                    (p + n - self.level).abs()
                } else {
                    (self.level - n).max(0.0)
                }
            })
            .fold(0.0, f64::max)
    }
}

/// Water-filling on the levels `N_l`: finds `x` with `Σ (x - N_l)⁺ = P` and
/// returns `P_l = (x - N_l)⁺`.
///
/// The level is bracketed by `[min N, min N + P]` and bisected; the final
/// level is then solved exactly on the active set so that the powers sum to
/// `P` up to rounding.
pub fn waterfill(noise_over_gain: &[f64], p_total: f64) -> Result<Allocation> {
    if noise_over_gain.is_empty() {
        return Err(Error::EmptyChannels);
    }
    if !(p_total > 0.0 && p_total.is_finite()) {
        return Err(invalid("p_total", format!("must be positive, got {p_total}")));
    }
    if let Some(bad) = noise_over_gain.iter().find(|n| !(**n > 0.0 && n.is_finite())) {
        return Err(invalid(
            "noise_over_gain",
            format!("levels must be positive and finite, got {bad}"),
        ));
    }
    let fill = |x: f64| noise_over_gain.iter().map(|&n| (x - n).max(0.0)).sum::<f64>();
    let floor = noise_over_gain.iter().copied().fold(f64::INFINITY, f64::min);
    let (mut lo, mut hi) = (floor, floor + p_total);
    for _ in 0..200 {
        if hi - lo <= 1e-12 * p_total {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if fill(mid) < p_total {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut level = 0.5 * (lo + hi);
    let active: Vec<f64> = noise_over_gain.iter().copied().filter(|&n| n < level).collect();
    if !active.is_empty() {
        let exact = (p_total + active.iter().sum::<f64>()) / active.len() as f64;
        let consistent = noise_over_gain
            .iter()
            .all(|&n| (n < level) == (n < exact) || (n - exact).abs() <= 1e-12 * p_total);
        if consistent {
            level = exact;
        }
    }
    let powers = noise_over_gain.iter().map(|&n| (level - n).max(0.0)).collect();
    Ok(Allocation { level, powers })
}

/// Water-filled capacity `Σ log₂(1 + P_l λ_l/η²)` with `Σ P_l = P`.
///
/// Channels with zero gain are excluded and get no power. If no channel has
/// positive gain the capacity is zero and the power is split evenly, so the
/// allocation still accounts for the full budget.
pub fn csit_capacity(values: &[f64], eta2: f64, p_total: f64) -> Result<(f64, Vec<f64>)> {
    if !(p_total > 0.0 && p_total.is_finite()) {
        return Err(invalid("p_total", format!("must be positive, got {p_total}")));
    }
    if !(eta2 > 0.0 && eta2.is_finite()) {
        return Err(invalid("eta2", format!("must be positive, got {eta2}")));
    }
    if values.is_empty() {
        return Err(Error::EmptyChannels);
    }
    let positive: Vec<usize> = (0..values.len()).filter(|&i| values[i] > 0.0).collect();
    if positive.is_empty() {
        return Ok((0.0, vec![p_total / values.len() as f64; values.len()]));
    }
    let levels: Vec<f64> = positive.iter().map(|&i| eta2 / values[i]).collect();
    let alloc = waterfill(&levels, p_total)?;
    let mut powers = vec![0.0; values.len()];
    let mut bits = 0.0;
    for (&i, &p) in positive.iter().zip(&alloc.powers) {
        powers[i] = p;
        bits += log2_1p(p * values[i] / eta2);
    }
    Ok((bits, powers))
}

/// Diagonal-versus-spectrum comparison of a Hermitian matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogGap {
    /// `Σ log₂(1 + M_ii) - Σ log₂(1 + λ_i)`, nonnegative by majorization.
    pub gap: f64,
    /// `n log₂(1 + ε)`.
    pub bound: f64,
    /// Largest off-diagonal absolute row sum `ε`.
    pub offdiag: f64,
}

/// Compares the log-capacity of the diagonal of `M` with that of its spectrum
/// and checks `0 <= gap <= n log₂(1 + ε)`.
pub fn gershgorin_log_gap(m: &DMatrix<Complex64>) -> Result<LogGap> {
    let eigs = hermitian_eigenvalues(m)?;
    let n = m.nrows();
    let diag: f64 = (0..n).map(|i| log2_1p(m[(i, i)].re.max(0.0))).sum();
    let spec: f64 = eigs.iter().map(|&l| log2_1p(l)).sum();
    let offdiag = (0..n)
        .map(|i| (0..n).filter(|&j| j != i).map(|j| m[(i, j)].norm()).sum::<f64>())
        .fold(0.0, f64::max);
    let gap = diag - spec;
    let bound = n as f64 * log2_1p(offdiag);
    let slack = 1e-12 * (1.0 + diag.abs());
    if gap < -slack {
        return Err(Error::BoundViolated(format!(
            "diagonal log-capacity {diag} is below the spectral one {spec}"
        )));
    }
    if gap > bound + slack {
        return Err(Error::BoundViolated(format!("log gap {gap} exceeds {bound}")));
    }
    Ok(LogGap {
        gap: gap.max(0.0),
        bound,
        offdiag,
    })
}

/// Sensitivity of water-filling to perturbed levels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stability {
    pub deviation: f64,
    pub bound: f64,
    pub epsilon: f64,
}

/// Water-fills both level sequences and compares `max |P^N - P^M|` with
/// `(L + 1) ε`, where `ε = max |N_l - M_l|` and `L` is the number of channels.
pub fn waterfill_stability(n: &[f64], m: &[f64], p_total: f64) -> Result<Stability> {
    if n.len() != m.len() {
        return Err(invalid("m", "level sequences must have equal length"));
    }
    let pn = waterfill(n, p_total)?;
    let pm = waterfill(m, p_total)?;
    let epsilon = n.iter().zip(m).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let deviation = pn
        .powers
        .iter()
        .zip(&pm.powers)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let bound = (n.len() as f64 + 1.0) * epsilon;
    if deviation > bound + 1e-12 * p_total {
        return Err(Error::BoundViolated(format!(
            "allocation moved by {deviation}, bound {bound}"
        )));
    }
    Ok(Stability {
        deviation,
        bound,
        epsilon,
    })
}

fn lattice_count(x: f64) -> usize {
    // Tolerate rounding when the region is an exact multiple of the step.
    (x * (1.0 + 1e-12) + 1e-12).floor().max(0.0) as usize
}

/// `K = ⌊Tα/(ρβ)⌋` and `L = ⌊Wβ/(ρα)⌋`.
pub fn lattice_extent(alpha: f64, beta: f64, rho: f64, duration: f64, bandwidth: f64) -> (usize, usize) {
    (
        lattice_count(duration * alpha / (rho * beta)),
        lattice_count(bandwidth * beta / (rho * alpha)),
    )
}

/// Transmit and receive systems for one region, on a common grid.
#[derive(Debug, Clone)]
pub struct SignalingSet {
    /// Tight window on the grid it was constructed on.
    pub tight: TightWindow,
    /// Grid holding every transmit and receive atom.
    pub grid: TimeGrid,
    pub transmit: GaborSystem,
    pub receive: GaborSystem,
    pub k_max: usize,
    pub l_max: usize,
    /// Exponential envelope of the window in time.
    pub decay: DecayEnvelope,
    /// Window decay rate in units of `π/s`, clamped into `(0, 1)`.
    pub d_est: f64,
}

/// Extra receive lattice steps kept beyond the image of the transmit range.
pub fn receive_padding(rho: f64) -> i64 {
    (4.0 * rho * rho).ceil() as i64
}

/// Builds the signaling set for the region `[0, T] × [-W, W]` with lattice
/// steps `a = β/α`, `b = α/β`.
pub fn signaling_set(
    alpha: f64,
    beta: f64,
    rho: f64,
    s: f64,
    duration: f64,
    bandwidth: f64,
    grid_n: usize,
    max_atoms: usize,
) -> Result<SignalingSet> {
    check_region(alpha, beta, rho, duration, bandwidth, max_atoms)?;
    let tight = tight_window_sized(s, beta / alpha, alpha / beta, rho, grid_n)?;
    signaling_set_from(tight, alpha, beta, duration, bandwidth, max_atoms)
}

fn check_region(
    alpha: f64,
    beta: f64,
    rho: f64,
    duration: f64,
    bandwidth: f64,
    max_atoms: usize,
) -> Result<(usize, usize)> {
    if !(alpha >= 1.0 && beta >= 1.0 && alpha.is_finite() && beta.is_finite()) {
        return Err(invalid(
            "alpha",
            format!("decay rates must be at least 1, got ({alpha}, {beta})"),
        ));
    }
    if !(duration > 0.0 && bandwidth > 0.0 && duration.is_finite() && bandwidth.is_finite()) {
        return Err(invalid(
            "region",
            format!("T and W must be positive, got ({duration}, {bandwidth})"),
        ));
    }
    if !(rho > 1.0) {
        return Err(Error::BalianLow { rho });
    }
    let (k_max, l_max) = lattice_extent(alpha, beta, rho, duration, bandwidth);
    let atoms = (k_max + 1) * (2 * l_max + 1);
    if atoms > max_atoms {
        return Err(Error::AtomBudget {
            atoms,
            limit: max_atoms,
        });
    }
    Ok((k_max, l_max))
}

/// [`signaling_set`] around an already constructed tight window, whose
/// lattice steps must be `(β/α, α/β)`.
pub fn signaling_set_from(
    tight: TightWindow,
    alpha: f64,
    beta: f64,
    duration: f64,
    bandwidth: f64,
    max_atoms: usize,
) -> Result<SignalingSet> {
    let (a, b, rho, s) = (tight.a, tight.b, tight.rho, tight.s);
    if (a - beta / alpha).abs() > 1e-12 * a || (b - alpha / beta).abs() > 1e-12 * b {
        return Err(invalid(
            "alpha",
            "tight window lattice does not match (beta/alpha, alpha/beta)",
        ));
    }
    let (k_max, l_max) = check_region(alpha, beta, rho, duration, bandwidth, max_atoms)?;
    let wgrid = tight.window.grid;
    let dt = wgrid.dt;
    let pad = receive_padding(rho);
    let half = 0.5 * wgrid.span();
    let margin = half + pad as f64 * a / rho;
    let before = (margin / dt).ceil() as usize + 1;
    let after = ((rho * a * k_max as f64 + margin) / dt).ceil() as usize + 1;
    let n = before + after;
    let n = n + n % 2;
    let grid = TimeGrid::new(-(before as f64) * dt, dt, n)?;
    let window = tight.window.regrid(grid)?;

    let k_rx = (rho * rho * k_max as f64).ceil() as i64;
    let l_rx = (rho * rho * l_max as f64).ceil() as i64;
    let transmit = GaborSystem::transmit(
        &window,
        a,
        b,
        rho,
        s,
        IndexRange::new(0, k_max as i64),
        IndexRange::symmetric(l_max as i64),
    )?;
    let receive = GaborSystem::receive(
        &window,
        a,
        b,
        rho,
        s,
        IndexRange::new(-pad, k_rx + pad),
        IndexRange::symmetric(l_rx + pad),
    )?;
    let top = (l_rx + pad) as f64 * b / rho;
    if top >= 0.5 / dt {
        return Err(Error::GridTooSmall(format!(
            "receive frequencies reach {top} beyond the band {}",
            0.5 / dt
        )));
    }
    let decay = decay_envelope_fit(&tight.window)?;
    let d_est = (decay.rate * s / PI).clamp(1e-6, 1.0 - 1e-9);
    Ok(SignalingSet {
        tight,
        grid,
        transmit,
        receive,
        k_max,
        l_max,
        decay,
        d_est,
    })
}

/// `S⁺` at the transmit lattice `(ρ(β/α)k, ρ(α/β)l)`, in `(k, l)` row-major order.
///
/// Separable channels use the closed form of `S`; other channels go through
/// the twisted auto-convolution on a grid aligned with the lattice.
pub fn symbol_samples(
    sf: &SpreadingFunction,
    alpha: f64,
    beta: f64,
    rho: f64,
    k_max: usize,
    l_max: usize,
) -> Result<Vec<f64>> {
    let (dt, dxi) = (rho * beta / alpha, rho * alpha / beta);
    match sf {
        SpreadingFunction::Separable(sep) => {
            let mut out = Vec::with_capacity((k_max + 1) * (2 * l_max + 1));
            for k in 0..=k_max as i64 {
                for l in -(l_max as i64)..=l_max as i64 {
                    out.push(sep.symbol_s_at(dt * k as f64, dxi * l as f64).max(0.0));
                }
            }
            Ok(out)
        }
        _ => {
            let (tg, xg) = lattice_aligned_grids(alpha, beta, rho, k_max, l_max, 1)?;
            let s = symbol_s(sf, tg, xg)?;
            let m = sample_s_plus(&s, alpha, beta, rho, k_max, l_max)?;
            Ok((0..m.nrows())
                .flat_map(|k| (0..m.ncols()).map(move |l| (k, l)))
                .map(|(k, l)| m[(k, l)])
                .collect())
        }
    }
}

/// Assigns eigenvalues (descending) to lattice points by the rank of their
/// symbol samples, so the largest eigenvalue sits at the largest sample.
pub fn rank_pair(eigs_desc: &[f64], samples: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.sort_by(|&i, &j| samples[j].total_cmp(&samples[i]).then(i.cmp(&j)));
    let mut out = vec![0.0; samples.len()];
    for (rank, &i) in order.iter().enumerate() {
        out[i] = eigs_desc.get(rank).copied().unwrap_or(0.0);
    }
    out
}

/// Inputs of a capacity report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportConfig {
    pub alpha: f64,
    pub beta: f64,
    pub rho: f64,
    /// Window scale; defaults to `(β/α)²`.
    pub s: Option<f64>,
    /// Region length `T` in seconds.
    pub duration: f64,
    /// Region half-bandwidth `W` in hertz.
    pub bandwidth: f64,
    pub eta2: f64,
    pub p_total: f64,
    /// Fitted constant of the receiver-side bound.
    pub kappa_csir: f64,
    /// Fitted constant of the water-filled bound.
    pub kappa_csit: f64,
    pub max_atoms: usize,
    pub grid_n: usize,
    /// Sample spacing of the window grid; chosen from `grid_n` when absent.
    #[serde(default)]
    pub grid_dt: Option<f64>,
}

impl ReportConfig {
    pub fn new(alpha: f64, beta: f64, rho: f64, duration: f64, bandwidth: f64, eta2: f64, p_total: f64) -> Self {
        Self {
            alpha,
            beta,
            rho,
            s: None,
            duration,
            bandwidth,
            eta2,
            p_total,
            kappa_csir: 1.0,
            kappa_csit: 1.0,
            max_atoms: MAX_ATOMS,
            grid_n: DEFAULT_GRID_N,
            grid_dt: None,
        }
    }

    pub fn scale(&self) -> f64 {
        self.s.unwrap_or((self.beta / self.alpha).powi(2))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Region {
    /// `T`, seconds.
    pub duration: f64,
    /// `W`, hertz.
    pub bandwidth: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReportParams {
    pub alpha: f64,
    pub beta: f64,
    pub rho: f64,
    pub s: f64,
    pub k_max: usize,
    pub l_max: usize,
    pub d_est: f64,
    pub kappa_csir: f64,
    pub kappa_csit: f64,
}

/// Capacity figures of one channel over one region. Per-atom vectors follow
/// the lattice order in `lattice`; eigenvalues are attached to lattice
/// points by [`rank_pair`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityReport {
    pub lattice: Vec<(i64, i64)>,
    pub eigenvalues: Vec<f64>,
    pub symbol_samples: Vec<f64>,
    /// `(A* A)_{kl,kl}`.
    pub diagonal: Vec<f64>,
    pub eta2: f64,
    pub p_total: f64,
    pub csir_exact: f64,
    pub csir_symbol: f64,
    pub csit_exact: f64,
    pub csit_symbol: f64,
    pub error_bound_csir: f64,
    pub error_bound_csit: f64,
    pub power_exact: Vec<f64>,
    pub power_symbol: Vec<f64>,
    pub region: Region,
    pub params: ReportParams,
    pub log_gap: LogGap,
    pub grid: TimeGrid,
    pub window_condition: f64,
}

impl CapacityReport {
    /// One row per lattice point: `k,l,lambda,S_plus,P_exact,P_symbol`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["k", "l", "lambda", "S_plus", "P_exact", "P_symbol"])?;
        for (i, &(k, l)) in self.lattice.iter().enumerate() {
            w.write_record(&[
                k.to_string(),
                l.to_string(),
                self.eigenvalues[i].to_string(),
                self.symbol_samples[i].to_string(),
                self.power_exact[i].to_string(),
                self.power_symbol[i].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Largest per-atom `|log₂(1 + λ) - log₂(1 + S⁺)|`.
    pub fn max_log_difference(&self) -> f64 {
        self.eigenvalues
            .iter()
            .zip(&self.symbol_samples)
            .map(|(&l, &s)| (log2_1p(l) - log2_1p(s)).abs())
            .fold(0.0, f64::max)
    }

    /// Largest `|(A* A)_{kl,kl} - S⁺(k, l)|`.
    pub fn max_diagonal_error(&self) -> f64 {
        self.diagonal
            .iter()
            .zip(&self.symbol_samples)
            .map(|(d, s)| (d - s).abs())
            .fold(0.0, f64::max)
    }
}

/// A report together with the matrix and systems it was computed from.
#[derive(Debug, Clone)]
pub struct CapacityRun {
    pub report: CapacityReport,
    pub matrix: ChannelMatrix,
    pub signaling: SignalingSet,
}

/// Builds the signaling set, assembles `A`, and evaluates every capacity
/// figure for the channel `sf`.
pub fn capacity_run(sf: &SpreadingFunction, cfg: &ReportConfig) -> Result<CapacityRun> {
    if !(cfg.eta2 > 0.0 && cfg.eta2.is_finite()) {
        return Err(invalid("eta2", format!("must be positive, got {}", cfg.eta2)));
    }
    if !(cfg.p_total > 0.0 && cfg.p_total.is_finite()) {
        return Err(invalid("p_total", format!("must be positive, got {}", cfg.p_total)));
    }
    let s = cfg.scale();
    let sig = match cfg.grid_dt {
        None => signaling_set(
            cfg.alpha,
            cfg.beta,
            cfg.rho,
            s,
            cfg.duration,
            cfg.bandwidth,
            cfg.grid_n,
            cfg.max_atoms,
        )?,
        Some(dt) => {
            check_region(cfg.alpha, cfg.beta, cfg.rho, cfg.duration, cfg.bandwidth, cfg.max_atoms)?;
            let (a, b) = (cfg.beta / cfg.alpha, cfg.alpha / cfg.beta);
            let tight = tight_window_on(s, a, b, cfg.rho, TimeGrid::centered(dt, cfg.grid_n)?)?;
            signaling_set_from(tight, cfg.alpha, cfg.beta, cfg.duration, cfg.bandwidth, cfg.max_atoms)?
        }
    };
    let matrix = channel_matrix(sf, &sig.transmit, &sig.receive, cfg.eta2)?;
    let gram = matrix.gram();
    let eigs = hermitian_eigenvalues(&gram)?;
    let log_gap = gershgorin_log_gap(&gram)?;
    let samples = symbol_samples(sf, cfg.alpha, cfg.beta, cfg.rho, sig.k_max, sig.l_max)?;
    let eigenvalues = rank_pair(&eigs, &samples);
    let diagonal = (0..gram.nrows()).map(|i| gram[(i, i)].re).collect();
    let (csit_exact, power_exact) = csit_capacity(&eigenvalues, cfg.eta2, cfg.p_total)?;
    let (csit_symbol, power_symbol) = csit_capacity(&samples, cfg.eta2, cfg.p_total)?;
    let (k, l) = (sig.k_max, sig.l_max);
    let report = CapacityReport {
        lattice: matrix.tx_index.clone(),
        csir_exact: csir_capacity(&eigenvalues, cfg.eta2),
        csir_symbol: csir_symbol_capacity(&samples, cfg.eta2),
        csit_exact,
        csit_symbol,
        error_bound_csir: error_bound_csir(k, l, cfg.rho, cfg.alpha, cfg.beta, sig.d_est, cfg.kappa_csir),
        error_bound_csit: error_bound_csit(k, l, cfg.rho, cfg.alpha, cfg.beta, sig.d_est, cfg.kappa_csit),
        eigenvalues,
        symbol_samples: samples,
        diagonal,
        eta2: cfg.eta2,
        p_total: cfg.p_total,
        power_exact,
        power_symbol,
        region: Region {
            duration: cfg.duration,
            bandwidth: cfg.bandwidth,
        },
        params: ReportParams {
            alpha: cfg.alpha,
            beta: cfg.beta,
            rho: cfg.rho,
            s,
            k_max: k,
            l_max: l,
            d_est: sig.d_est,
            kappa_csir: cfg.kappa_csir,
            kappa_csit: cfg.kappa_csit,
        },
        log_gap,
        grid: sig.grid,
        window_condition: sig.tight.condition_number,
    };
    Ok(CapacityRun {
        report,
        matrix,
        signaling: sig,
    })
}

/// [`capacity_run`] without the intermediate objects.
pub fn capacity_report(sf: &SpreadingFunction, cfg: &ReportConfig) -> Result<CapacityReport> {
    Ok(capacity_run(sf, cfg)?.report)
}

/// Which capacity the time-invariant sweep tracks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepMode {
    Csir,
    Csit,
}

/// One row of the time-invariant limit sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub beta_n: f64,
    pub atoms: usize,
    /// Symbol-sample capacity divided by the region area `(β_n/α) 2W`.
    pub normalized_capacity: f64,
    pub lti_target: f64,
    pub gap: f64,
    /// `Σ P_l Δω`; equals the power budget in water-filled mode.
    pub power_used: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LtiSweep {
    pub mode: SweepMode,
    pub alpha: f64,
    pub bandwidth: f64,
    pub rho: f64,
    pub eta2: f64,
    pub p_total: f64,
    pub rows: Vec<SweepRow>,
    /// Sweep entries dropped because they exceed the atom budget.
    pub warnings: Vec<String>,
}

impl LtiSweep {
    /// `beta_n,normalized_capacity,lti_target,gap,power_used` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["beta_n", "normalized_capacity", "lti_target", "gap", "power_used"])?;
        for r in &self.rows {
            w.write_record(&[
                r.beta_n.to_string(),
                r.normalized_capacity.to_string(),
                r.lti_target.to_string(),
                r.gap.to_string(),
                r.power_used.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Squared magnitude of the Fourier transform of `e^{-α|x|}`.
pub fn lti_gain(alpha: f64, omega: f64) -> f64 {
    (2.0 * alpha / (alpha * alpha + 4.0 * PI * PI * omega * omega)).powi(2)
}

const TARGET_PANELS: usize = 64;

/// `(1/(2ρW)) ∫_{-W}^{W} log₂(1 + g(ω)/η²) dω` for a gain profile `g`.
pub fn lti_target_with(gain: impl Fn(f64) -> f64, bandwidth: f64, rho: f64, eta2: f64) -> f64 {
    integrate(-bandwidth, bandwidth, TARGET_PANELS, |w| log2_1p(gain(w) / eta2)) / (2.0 * rho * bandwidth)
}

/// Receiver-side time-invariant target for the exponential delay profile.
pub fn lti_target(alpha: f64, bandwidth: f64, rho: f64, eta2: f64) -> f64 {
    lti_target_with(|w| lti_gain(alpha, w), bandwidth, rho, eta2)
}

/// Normalized capacity `(1/(2W)) ∫ log₂(1 + |ĥ|²/η²) dω` of the time-invariant channel.
pub fn classical_lti_capacity(alpha: f64, bandwidth: f64, eta2: f64) -> f64 {
    integrate(-bandwidth, bandwidth, TARGET_PANELS, |w| {
        log2_1p(lti_gain(alpha, w) / eta2)
    }) / (2.0 * bandwidth)
}

/// Water level and band edge of continuous water-filling over `[-W, W]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContinuousFill {
    pub level: f64,
    /// Frequency beyond which no power is allocated (capped at `W`).
    pub edge: f64,
}

/// Continuous water-filling `∫ (x - η²/|ĥ(ω)|²)⁺ dω = P` for the exponential
/// delay profile. The noise-to-gain ratio grows in `|ω|`, so the active band
/// is `[-ω*, ω*]` with `ω*` solved in closed form.
pub fn lti_waterfill(alpha: f64, bandwidth: f64, eta2: f64, p_total: f64) -> Result<ContinuousFill> {
    if !(p_total > 0.0 && p_total.is_finite()) {
        return Err(invalid("p_total", format!("must be positive, got {p_total}")));
    }
    let noise = |w: f64| eta2 / lti_gain(alpha, w);
    let edge = |x: f64| {
        let r = 2.0 * alpha * (x / eta2).sqrt() - alpha * alpha;
        if r <= 0.0 {
            0.0
        } else {
            (r.sqrt() / (2.0 * PI)).min(bandwidth)
        }
    };
    let fill = |x: f64| {
        let e = edge(x);
        if e <= 0.0 {
            0.0
        } else {
            2.0 * integrate(0.0, e, TARGET_PANELS, |w| (x - noise(w)).max(0.0))
        }
    };
    let mut lo = noise(0.0);
    let mut hi = noise(bandwidth) + p_total / (2.0 * bandwidth);
    for _ in 0..200 {
        if hi - lo <= 1e-14 * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if fill(mid) < p_total {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let level = 0.5 * (lo + hi);
    Ok(ContinuousFill {
        level,
        edge: edge(level),
    })
}

/// Water-filled time-invariant target `(1/(2ρW)) ∫ log₂(1 + P(ω)|ĥ(ω)|²/η²) dω`.
pub fn lti_target_csit(alpha: f64, bandwidth: f64, rho: f64, eta2: f64, p_total: f64) -> Result<f64> {
    let fill = lti_waterfill(alpha, bandwidth, eta2, p_total)?;
    if fill.edge <= 0.0 {
        return Ok(0.0);
    }
    let x = fill.level;
    let inner = 2.0
        * integrate(0.0, fill.edge, TARGET_PANELS, |w| {
            (x * lti_gain(alpha, w) / eta2).max(1.0).log2()
        });
    Ok(inner / (2.0 * rho * bandwidth))
}

/// Symbol-sample capacity of the time-invariant limit family, normalized by
/// the region `[0, β_n/α] × [-W, W]`, against the time-invariant target.
///
/// In water-filled mode each atom stands for a frequency cell of width
/// `Δω = ρα/β_n`, so the discrete budget is `P/Δω`.
pub fn lti_limit_sweep(
    beta_seq: &[f64],
    alpha: f64,
    bandwidth: f64,
    rho: f64,
    eta2: f64,
    mode: SweepMode,
    p_total: f64,
    max_atoms: usize,
) -> Result<LtiSweep> {
    if beta_seq.is_empty() {
        return Err(invalid("beta_seq", "must not be empty"));
    }
    if beta_seq.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(invalid("beta_seq", "must be strictly increasing"));
    }
    if !(bandwidth > 0.0 && rho > 1.0 && eta2 > 0.0) {
        return Err(invalid("bandwidth", "W, eta2 must be positive and rho above one"));
    }
    let target = match mode {
        SweepMode::Csir => lti_target(alpha, bandwidth, rho, eta2),
        SweepMode::Csit => lti_target_csit(alpha, bandwidth, rho, eta2, p_total)?,
    };
    let mut rows = Vec::new();
    let mut warnings = Vec::new();
    for (n, &beta_n) in beta_seq.iter().enumerate() {
        let duration = beta_n / alpha;
        let (k_max, l_max) = lattice_extent(alpha, beta_n, rho, duration, bandwidth);
        let atoms = (k_max + 1) * (2 * l_max + 1);
        if atoms > max_atoms {
            warnings.push(format!(
                "sweep truncated at beta_n = {beta_n}: {atoms} atoms exceed the budget of {max_atoms}"
            ));
            break;
        }
        let sf = lti_family(alpha, beta_n, n)?;
        let samples = symbol_samples(&sf, alpha, beta_n, rho, k_max, l_max)?;
        let area = duration * 2.0 * bandwidth;
        let cell = rho * alpha / beta_n;
        let (bits, power_used) = match mode {
            SweepMode::Csir => (csir_symbol_capacity(&samples, eta2), 0.0),
            SweepMode::Csit => {
                let (bits, powers) = csit_capacity(&samples, eta2, p_total / cell)?;
                (bits, powers.iter().sum::<f64>() * cell)
            }
        };
        let normalized_capacity = bits / area;
        rows.push(SweepRow {
            beta_n,
            atoms,
            normalized_capacity,
            lti_target: target,
            gap: (normalized_capacity - target).abs(),
            power_used,
        });
    }
    Ok(LtiSweep {
        mode,
        alpha,
        bandwidth,
        rho,
        eta2,
        p_total,
        rows,
        warnings,
    })
}

/// `Σ_j e^{-α|k - pj| - β|pj - k'|}` summed outward from the peak until the
/// terms fall below `1e-16` of the running total.
pub fn geometric_sum(alpha: f64, beta: f64, p: f64, k: f64, k_prime: f64) -> f64 {
    let term = |j: i64| {
        let x = p * j as f64;
        (-alpha * (k - x).abs() - beta * (x - k_prime).abs()).exp()
    };
    let lo = (k.min(k_prime) / p).floor() as i64;
    let hi = (k.max(k_prime) / p).ceil() as i64;
    let mut total: f64 = (lo..=hi).map(term).sum();
    for dir in [-1i64, 1] {
        let mut j = if dir < 0 { lo - 1 } else { hi + 1 };
        loop {
            let t = term(j);
            total += t;
            if t < 1e-16 * total || t == 0.0 {
                break;
            }
            j += dir;
        }
    }
    total
}

/// `e^{-β|k - k'|/2} + e^{-α|k - k'|/2}`.
pub fn geometric_sum_shape(alpha: f64, beta: f64, k: f64, k_prime: f64) -> f64 {
    let d = (k - k_prime).abs();
    (-0.5 * beta * d).exp() + (-0.5 * alpha * d).exp()
}

/// The sum and its bound `C (e^{-β|k-k'|/2} + e^{-α|k-k'|/2})`.
pub fn geometric_sum_check(alpha: f64, beta: f64, p: f64, k: f64, k_prime: f64, c: f64) -> (f64, f64) {
    (
        geometric_sum(alpha, beta, p, k, k_prime),
        c * geometric_sum_shape(alpha, beta, k, k_prime),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{prop_assert, proptest, ProptestConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    /// Roots of `λ³ - p λ² + q λ - r` with three real roots, descending.
    fn cubic_roots(p: f64, q: f64, r: f64) -> [f64; 3] {
        let shift = p / 3.0;
        let a = q - p * p / 3.0;
        let b = -2.0 * p.powi(3) / 27.0 + p * q / 3.0 - r;
        let m = 2.0 * (-a / 3.0).sqrt();
        let theta = (3.0 * b / (a * m)).acos() / 3.0;
        let mut roots = [0, 1, 2].map(|j| shift + m * (theta - 2.0 * PI * j as f64 / 3.0).cos());
        roots.sort_by(|x, y| y.total_cmp(x));
        roots
    }

    #[test]
    fn eigenvalues_match_cubic_roots() {
        let m = DMatrix::from_row_slice(
            3,
            3,
            &[
                c(4.0, 0.0),
                c(1.0, 1.0),
                c(0.0, 0.0),
                c(1.0, -1.0),
                c(3.0, 0.0),
                c(0.0, 1.0),
                c(0.0, 0.0),
                c(0.0, -1.0),
                c(2.0, 0.0),
            ],
        );
        let p = 9.0;
        let minors = (4.0 * 3.0 - 2.0) + (4.0 * 2.0) + (3.0 * 2.0 - 1.0);
        let det = m.determinant().re;
        let expected = cubic_roots(p, minors, det);
        let eigs = hermitian_eigenvalues(&m).unwrap();
        for (e, x) in eigs.iter().zip(expected) {
            assert!((e - x).abs() < 1e-12, "{e} vs {x}");
        }
        let trace: f64 = eigs.iter().sum();
        assert!((trace - p).abs() < 1e-12);
    }

    #[test]
    fn eigenvalues_reject_non_hermitian() {
        let m = DMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.5, 0.0), c(0.2, 0.0), c(1.0, 0.0)]);
        assert!(matches!(hermitian_eigenvalues(&m), Err(Error::NotHermitian { .. })));
    }

    #[test]
    fn csir_examples() {
        assert_eq!(csir_capacity(&[0.0; 5], 0.3), 0.0);
        assert!((csir_capacity(&[1.0; 7], 1.0) - 7.0).abs() < 1e-14);
        assert!((csir_capacity(&[1.0; 9], 0.25) - 9.0 * 5f64.log2()).abs() < 1e-12);
        assert!((9.0 * 5f64.log2() - 20.9).abs() < 0.01);
        assert_eq!(csir_symbol_capacity(&[-0.3, 0.0], 0.1), 0.0);
    }

    #[test]
    fn error_bound_shape() {
        assert_eq!(error_bound_csir(0, 0, 1.5, 2.0, 2.0, 0.5, 1.0), 0.0);
        assert_eq!(error_bound_csir(3, 0, 1.5, 2.0, 2.0, 0.5, 1.0), 0.0);
        let sweep: Vec<f64> = [2.0, 3.0, 4.0, 6.0]
            .iter()
            .map(|&x| error_bound_csir(4, 2, 1.5, x, x, 0.6, 0.3))
            .collect();
        assert!(sweep.windows(2).all(|w| w[1] < w[0]));
        let kappa = fit_kappa(0.7, |k| error_bound_csir(4, 2, 1.5, 2.0, 2.0, 0.6, k));
        assert!((error_bound_csir(4, 2, 1.5, 2.0, 2.0, 0.6, kappa) - 0.7).abs() < 1e-12);
        assert!(error_bound_csit(4, 2, 1.5, 2.0, 2.0, 0.6, 1.0) > error_bound_csir(4, 2, 1.5, 2.0, 2.0, 0.6, 1.0));
    }

    #[test]
    fn waterfill_examples() {
        let a = waterfill(&[1.0, 10.0], 2.0).unwrap();
        assert!((a.level - 3.0).abs() < 1e-12);
        assert!((a.powers[0] - 2.0).abs() < 1e-12 && a.powers[1] == 0.0);
        let b = waterfill(&[1.0, 2.0, 3.0], 3.0).unwrap();
        assert!((b.level - 3.0).abs() < 1e-11);
        for (p, e) in b.powers.iter().zip([2.0, 1.0, 0.0]) {
            assert!((p - e).abs() < 1e-11);
        }
        let e = waterfill(&[0.4, 0.4], 3.0).unwrap();
        assert!((e.powers[0] - 1.5).abs() < 1e-12 && (e.powers[1] - 1.5).abs() < 1e-12);
        assert!(matches!(waterfill(&[], 1.0), Err(Error::EmptyChannels)));
        assert!(waterfill(&[1.0], 0.0).is_err());
    }

    #[test]
    fn csit_examples() {
        let (bits, p) = csit_capacity(&[0.8], 0.1, 2.0).unwrap();
        assert!((bits - (1.0 + 2.0 * 0.8 / 0.1f64).log2()).abs() < 1e-12);
        assert!((p[0] - 2.0).abs() < 1e-12);
        let (bits, p) = csit_capacity(&[1.0; 9], 1.0, 9.0).unwrap();
        assert!((bits - 9.0).abs() < 1e-12);
        assert!(p.iter().all(|v| (v - 1.0).abs() < 1e-12));
        let (bits, p) = csit_capacity(&[0.0, 0.5, 0.0], 0.1, 1.0).unwrap();
        assert_eq!(p[0], 0.0);
        assert!((p[1] - 1.0).abs() < 1e-12);
        assert!(bits > 0.0);
        let (bits, p) = csit_capacity(&[0.0, 0.0], 0.1, 1.0).unwrap();
        assert_eq!(bits, 0.0);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!(csit_capacity(&[1.0], 0.1, 0.0).is_err());
    }

    #[test]
    fn gershgorin_examples() {
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![c(2.0, 0.0), c(0.5, 0.0)]));
        let g = gershgorin_log_gap(&d).unwrap();
        assert!(g.gap.abs() < 1e-14 && g.bound == 0.0);
        let m = DMatrix::from_row_slice(2, 2, &[c(2.0, 0.0), c(0.1, 0.0), c(0.1, 0.0), c(1.0, 0.0)]);
        let disc = (1.0f64 + 4.0 * 0.01).sqrt();
        let (l1, l2) = ((3.0 + disc) / 2.0, (3.0 - disc) / 2.0);
        let eigs = hermitian_eigenvalues(&m).unwrap();
        assert!((eigs[0] - l1).abs() < 1e-14 && (eigs[1] - l2).abs() < 1e-14);
        let g = gershgorin_log_gap(&m).unwrap();
        let expected = 3f64.log2() + 2f64.log2() - (1.0 + l1).log2() - (1.0 + l2).log2();
        assert!((g.gap - expected).abs() < 1e-13);
        assert!(g.gap <= 2.0 * 1.1f64.log2());
    }

    #[test]
    fn stability_examples() {
        let same = waterfill_stability(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0], 3.0).unwrap();
        assert_eq!(same.deviation, 0.0);
        let s = waterfill_stability(&[1.0, 2.0, 3.0], &[1.1, 1.9, 3.1], 3.0).unwrap();
        assert!((s.bound - 0.4).abs() < 1e-12);
        assert!(s.deviation <= s.bound);
    }

    #[test]
    fn stability_randomized() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..100 {
            let len = rng.gen_range(2..=8);
            let n: Vec<f64> = (0..len).map(|_| rng.gen_range(0.05..3.0)).collect();
            let eps = rng.gen_range(1e-4..0.2);
            let m: Vec<f64> = n.iter().map(|v| (v + rng.gen_range(-eps..eps)).max(0.01)).collect();
            let p = rng.gen_range(0.1..5.0);
            let s = waterfill_stability(&n, &m, p).unwrap();
            assert!(s.deviation <= s.bound + 1e-12);
        }
    }

    #[test]
    fn rank_pairing() {
        let paired = rank_pair(&[3.0, 2.0, 1.0], &[0.1, 0.9, 0.5]);
        assert_eq!(paired, vec![1.0, 3.0, 2.0]);
    }

    #[test]
    fn lattice_counts_tolerate_rounding() {
        let rho = 1.5;
        assert_eq!(lattice_extent(2.0, 3.0, rho, 3.0 * rho * 1.5, rho / 1.5), (3, 1));
        assert_eq!(lattice_extent(2.0, 2.0, rho, 6.0, 3.0), (4, 2));
    }

    #[test]
    fn lti_target_two_ways() {
        for (alpha, w, rho, eta2) in [(2.0, 1.0, 1.5, 0.1), (1.0, 2.5, 1.2, 0.7)] {
            let direct = lti_target(alpha, w, rho, eta2);
            let pulled = classical_lti_capacity(alpha, w, eta2) / rho;
            assert!((direct - pulled).abs() < 1e-12);
        }
        let flat = lti_target_with(|_| 0.6, 1.3, 1.5, 0.2);
        assert!((flat - (1.0 + 0.6 / 0.2f64).log2() / 1.5).abs() < 1e-12);
    }

    #[test]
    fn continuous_waterfill_uses_budget() {
        let (alpha, w, eta2, p) = (2.0, 1.0, 0.1, 1.0);
        let fill = lti_waterfill(alpha, w, eta2, p).unwrap();
        let noise = |x: f64| eta2 / lti_gain(alpha, x);
        let used = integrate(-w, w, 400, |x| (fill.level - noise(x)).max(0.0));
        assert!((used - p).abs() < 1e-6, "{used}");
        assert!(fill.edge > 0.0 && fill.edge <= w);
        let csit = lti_target_csit(alpha, w, 1.5, eta2, p).unwrap();
        let flat_power = lti_target_with(|x| lti_gain(alpha, x) * p / (2.0 * w), w, 1.5, eta2);
        assert!(csit >= flat_power - 1e-12);
    }

    #[test]
    fn geometric_sum_bounds() {
        let fit = |alpha: f64, beta: f64, p: f64| {
            (0..=5)
                .map(|d| geometric_sum(alpha, beta, p, 0.0, d as f64) / geometric_sum_shape(alpha, beta, 0.0, d as f64))
                .fold(0.0, f64::max)
        };
        for (alpha, beta, p) in [(1.0, 1.0, 1.0), (2.0, 2.0, 1.0), (1.0, 3.0, 0.7)] {
            let c0 = fit(alpha, beta, p);
            for d in 0..=20 {
                for k in [0.0, 3.0, -7.0] {
                    let (lhs, rhs) = geometric_sum_check(alpha, beta, p, k, k + d as f64, c0);
                    assert!(
                        lhs <= rhs * (1.0 + 1e-12),
                        "({alpha},{beta},{p}) d={d} k={k}: {lhs} > {rhs}"
                    );
                }
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn waterfill_kkt_and_budget(levels in proptest::collection::vec(0.01f64..10.0, 1..12), p in 0.01f64..20.0) {
            let a = waterfill(&levels, p).unwrap();
            prop_assert!(a.kkt_residual(&levels) <= 1e-10 * (1.0 + a.level));
            prop_assert!((a.powers.iter().sum::<f64>() - p).abs() <= 1e-9 * p.max(1.0));
        }

        #[test]
        fn csit_dominates_uniform(values in proptest::collection::vec(0.0f64..3.0, 1..10), p in 0.1f64..10.0) {
            let eta2 = 0.2;
            let (bits, _) = csit_capacity(&values, eta2, p).unwrap();
            let share = p / values.len() as f64;
            let uniform: f64 = values.iter().map(|v| (1.0 + share * v / eta2).log2()).sum();
            prop_assert!(bits >= uniform - 1e-10);
        }

        #[test]
        fn csir_is_monotone(values in proptest::collection::vec(0.0f64..3.0, 1..10), bump in 1e-6f64..1.0, i in 0usize..10) {
            let eta2 = 0.3;
            let base = csir_capacity(&values, eta2);
            let mut up = values.clone();
            let i = i % up.len();
            up[i] += bump;
            prop_assert!(csir_capacity(&up, eta2) >= base);
            prop_assert!(csir_capacity(&values, eta2 * (1.0 + bump)) <= base);
        }

        #[test]
        fn majorization_on_random_psd(seed in 0u64..1000, n in 2usize..7) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = DMatrix::from_fn(n + 2, n, |_, _| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
            let g = a.adjoint() * a;
            let gap = gershgorin_log_gap(&g).unwrap();
            prop_assert!(gap.gap >= 0.0 && gap.gap <= gap.bound + 1e-12);
        }
    }
}
