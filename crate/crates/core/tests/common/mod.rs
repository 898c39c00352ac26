#![allow(dead_code)]

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use weylcap::channel::{
    apply_weyl, compose, make_spreading, quadrature_nodes, Separable, SpreadingFunction, SpreadingKind,
};
use weylcap::tfcore::{cross_wigner, gaussian_window, modulate, translate};
use weylcap::{SampledSignal, TFGridFunction, TimeGrid};

pub fn grid() -> TimeGrid {
    TimeGrid::centered(1.0 / 32.0, 1024).unwrap()
}

pub fn shifted_gaussian(grid: TimeGrid, u: f64, eta: f64) -> SampledSignal {
    translate(&modulate(&gaussian_window(1.0, &grid).unwrap(), eta), u)
}

pub fn random_packet(grid: TimeGrid, rng: &mut ChaCha8Rng) -> SampledSignal {
    let mut out = SampledSignal::zeros(grid);
    for _ in 0..3 {
        let g = shifted_gaussian(grid, rng.gen_range(-2.0..2.0), rng.gen_range(-1.5..1.5));
        out.add_scaled(&g, Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
    }
    out
}

pub fn separable(sf: &SpreadingFunction) -> Separable {
    match sf {
        SpreadingFunction::Separable(s) => *s,
        _ => unreachable!(),
    }
}

/// `<L T_u M_η g, T_v M_γ g>` for the unit Gaussian `g`, written as the
/// spreading function integrated against the shifted Gaussian ambiguity
/// `A(g,g)(X, Ω) = e^{-π(X² + Ω²)/2}`. The two-dimensional integral factors
/// for a separable spreading function.
pub fn predicted_pairing(sep: &Separable, u: f64, eta: f64, v: f64, gamma: f64) -> Complex64 {
    let (c, delta, d_eta) = (0.5 * (u + v), u - v, eta - gamma);
    let w_nodes = quadrature_nodes(-40.0 / sep.beta, 40.0 / sep.beta, &[0.0], 0.02);
    let x_nodes = quadrature_nodes(-40.0 / sep.alpha, 40.0 / sep.alpha, &[0.0], 0.02);
    let doppler: Complex64 = w_nodes
        .iter()
        .map(|&(w, wt)| {
            sep.doppler(w) * Complex64::from_polar(wt * (-0.5 * PI * (w + d_eta).powi(2)).exp(), 2.0 * PI * w * c)
        })
        .sum();
    let delay: Complex64 = x_nodes
        .iter()
        .map(|&(x, wt)| {
            let big_x = x - delta;
            sep.delay(x) * Complex64::from_polar(wt * (-0.5 * PI * big_x * big_x).exp(), PI * (eta + gamma) * big_x)
        })
        .sum();
    doppler * delay * sep.amplitude
}

pub fn gaussian_bump(sx: TimeGrid, w0: f64, x0: f64, phase: f64) -> TFGridFunction {
    TFGridFunction::from_fn(sx, sx, |x, w| {
        Complex64::from_polar(
            (-2.0 * PI * ((w - w0).powi(2) + (x - x0).powi(2))).exp(),
            phase * (w - x),
        )
    })
}

/// Worst relative error of `<L f, g> = <σ, W(g, f)>` over 20 random packet
/// pairs for each of two separable channels.
pub fn pairing_error(seed: u64) -> f64 {
    let gr = grid();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for (alpha, beta, phase_seed) in [(2.0, 3.0, 5), (4.0, 2.0, 0)] {
        let sf = make_spreading(SpreadingKind::SeparableExponential, 1.3, alpha, beta, phase_seed).unwrap();
        let mut sigma: Option<TFGridFunction> = None;
        for _ in 0..20 {
            let f = random_packet(gr, &mut rng);
            let g = random_packet(gr, &mut rng);
            let lf = apply_weyl(&sf, &f).unwrap();
            let lhs = lf.inner(&g);
            let w = cross_wigner(&g, &f).unwrap();
            let sig =
                sigma.get_or_insert_with(|| TFGridFunction::from_fn(w.x_grid, w.w_grid, |t, xi| sf.symbol(t, xi)));
            worst = worst.max((lhs - sig.inner(&w)).norm() / (lf.norm() * g.norm()));
        }
    }
    worst
}

/// Worst relative error of the shifted-Gaussian magnitude identity over 20
/// random offset pairs for each of two separable channels.
pub fn magnitude_error(seed: u64) -> f64 {
    let gr = grid();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for (alpha, beta, phase_seed) in [(2.0, 2.0, 11), (3.0, 5.0, 0)] {
        let sf = make_spreading(SpreadingKind::SeparableExponential, 1.0, alpha, beta, phase_seed).unwrap();
        let sep = separable(&sf);
        for _ in 0..20 {
            let (u, eta) = (rng.gen_range(-2.0..2.0), rng.gen_range(-1.5..1.5));
            let (v, gamma) = (rng.gen_range(-2.0..2.0), rng.gen_range(-1.5..1.5));
            let lhs = apply_weyl(&sf, &shifted_gaussian(gr, u, eta))
                .unwrap()
                .inner(&shifted_gaussian(gr, v, gamma))
                .norm();
            let rhs = predicted_pairing(&sep, u, eta, v, gamma).norm();
            worst = worst.max((lhs - rhs).abs() / lhs.max(1e-3));
        }
    }
    worst
}

/// Worst relative error between applying the twisted product of two grid
/// channels and applying them in sequence, over 10 random signals.
pub fn composition_error(seed: u64) -> f64 {
    let sx = TimeGrid::centered(0.125, 64).unwrap();
    let h1 = SpreadingFunction::Grid(gaussian_bump(sx, 0.4, -0.25, 0.7));
    let h2 = SpreadingFunction::Grid(gaussian_bump(sx, -0.3, 0.5, -1.1));
    let composed = compose(&h1, &h2).unwrap();
    let gr = grid();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let s = random_packet(gr, &mut rng);
        let seq = apply_weyl(&h1, &apply_weyl(&h2, &s).unwrap()).unwrap();
        let one = apply_weyl(&composed, &s).unwrap();
        worst = worst.max(seq.sub(&one).norm() / seq.norm());
    }
    worst
}
