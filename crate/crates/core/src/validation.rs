//! Desk-scale property checks run by the command-line `validate` command.
//!
//! Each check is self-contained and named. A check that hits a numerical
//! error counts as failed, with the error text as its detail.

use std::cell::OnceCell;
use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::capacity::{
    capacity_run, csit_capacity, geometric_sum, geometric_sum_check, geometric_sum_shape, waterfill,
    waterfill_stability, CapacityRun, ReportConfig,
};
use crate::channel::{
    apply_weyl, compose, make_spreading, symbol_s_with, PointMass, SpreadingFunction, SpreadingKind, TwistFault,
};
use crate::error::{invalid, Result};
use crate::gabor::{analysis_coefficients, gram_max_deviation, synthesis, tight_window, IndexRange};
use crate::tfcore::{ambiguity_envelope, cross_wigner, SampledSignal, TFGridFunction, TimeGrid};

/// Names of every available check, in execution order.
pub const CHECK_NAMES: [&str; 12] = [
    "tight_gram",
    "frame_reconstruction",
    "envelope_bound",
    "geometric_sum",
    "weyl_wigner_pairing",
    "composition",
    "symbol_real",
    "majorization_log_bound",
    "waterfill_kkt",
    "waterfill_stability",
    "power_deviation",
    "diagonal_energy",
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidationOptions {
    pub seed: u64,
    /// Relative tolerance of the identity checks.
    pub tolerance: f64,
    pub fault: TwistFault,
}

impl Default for ValidationOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            tolerance: 1e-6,
            fault: TwistFault::None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Runs the named checks in the order given. Unknown names are rejected
/// before any check runs.
pub fn run_checks(names: &[&str], opts: &ValidationOptions) -> Result<Vec<CheckOutcome>> {
    if let Some(bad) = names.iter().find(|n| !CHECK_NAMES.contains(n)) {
        return Err(invalid("checks", format!("unknown check `{bad}`")));
    }
    let ctx = Context {
        opts: *opts,
        small: OnceCell::new(),
    };
    Ok(names
        .iter()
        .map(|&name| {
            let (passed, detail) = ctx.run(name).unwrap_or_else(|e| (false, e.to_string()));
            CheckOutcome {
                name: name.to_string(),
                passed,
                detail,
            }
        })
        .collect())
}

struct Context {
    opts: ValidationOptions,
    small: OnceCell<(SpreadingFunction, CapacityRun)>,
}

type Verdict = Result<(bool, String)>;

impl Context {
    fn rng(&self, salt: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.opts.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(salt))
    }

    fn small_run(&self) -> Result<&(SpreadingFunction, CapacityRun)> {
        if let Some(run) = self.small.get() {
            return Ok(run);
        }
        let sf = make_spreading(SpreadingKind::SeparableExponential, 1.0, 3.0, 3.0, self.opts.seed)?;
        let run = capacity_run(&sf, &ReportConfig::new(3.0, 3.0, 1.5, 4.5, 1.5, 0.1, 1.0))?;
        Ok(self.small.get_or_init(|| (sf, run)))
    }

    fn run(&self, name: &str) -> Verdict {
        match name {
            "tight_gram" => self.tight_gram(),
            "frame_reconstruction" => self.frame_reconstruction(),
            "envelope_bound" => envelope_bound(),
            "geometric_sum" => geometric_sum_bound(),
            "weyl_wigner_pairing" => self.weyl_wigner_pairing(),
            "composition" => self.composition(),
            "symbol_real" => self.symbol_real(),
            "majorization_log_bound" => self.majorization(),
            "waterfill_kkt" => self.waterfill_kkt(),
            "waterfill_stability" => self.waterfill_stability(),
            "power_deviation" => self.power_deviation(),
            "diagonal_energy" => self.diagonal_energy(),
            _ => Err(invalid("checks", format!("unknown check `{name}`"))),
        }
    }

    fn tight_gram(&self) -> Verdict {
        let tw = tight_window(1.0, 1.0, 1.0, 1.5)?;
        let dev = gram_max_deviation(&tw.transmit(IndexRange::symmetric(3), IndexRange::symmetric(3))?);
        Ok((dev <= self.opts.tolerance, format!("max Gram deviation {dev:.3e}")))
    }

    fn frame_reconstruction(&self) -> Verdict {
        let rx = tight_window(1.0, 1.0, 1.0, 1.5)?.receive_covering()?;
        let mut rng = self.rng(1);
        let mut worst: f64 = 0.0;
        for _ in 0..20 {
            let f = random_packet(rx.grid(), 4.0, 4.0, &mut rng);
            let back = synthesis(&analysis_coefficients(&f, &rx)?, &rx)?;
            worst = worst.max(back.sub(&f).norm() / f.norm());
        }
        Ok((
            worst <= self.opts.tolerance,
            format!("max relative error {worst:.3e} over 20 signals"),
        ))
    }

    fn weyl_wigner_pairing(&self) -> Verdict {
        let grid = TimeGrid::centered(1.0 / 32.0, 1024)?;
        let sf = make_spreading(SpreadingKind::SeparableExponential, 1.3, 2.0, 3.0, self.opts.seed)?;
        let mut rng = self.rng(2);
        let mut sigma: Option<TFGridFunction> = None;
        let mut worst: f64 = 0.0;
        for _ in 0..5 {
            let f = random_packet(grid, 2.0, 1.5, &mut rng);
            let g = random_packet(grid, 2.0, 1.5, &mut rng);
            let lf = apply_weyl(&sf, &f)?;
            let w = cross_wigner(&g, &f)?;
            let sig =
                sigma.get_or_insert_with(|| TFGridFunction::from_fn(w.x_grid, w.w_grid, |t, xi| sf.symbol(t, xi)));
            worst = worst.max((lf.inner(&g) - sig.inner(&w)).norm() / (lf.norm() * g.norm()));
        }
        Ok((
            worst <= self.opts.tolerance,
            format!("max relative error {worst:.3e} over 5 pairs"),
        ))
    }

    fn composition(&self) -> Verdict {
        let sx = TimeGrid::centered(0.125, 64)?;
        let bump = |w0: f64, x0: f64, phase: f64| {
            SpreadingFunction::Grid(TFGridFunction::from_fn(sx, sx, |x, w| {
                Complex64::from_polar(
                    (-2.0 * PI * ((w - w0).powi(2) + (x - x0).powi(2))).exp(),
                    phase * (w - x),
                )
            }))
        };
        let (h1, h2) = (bump(0.4, -0.25, 0.7), bump(-0.3, 0.5, -1.1));
        let composed = compose(&h1, &h2)?;
        let grid = TimeGrid::centered(1.0 / 32.0, 1024)?;
        let mut rng = self.rng(3);
        let mut worst: f64 = 0.0;
        for _ in 0..3 {
            let s = random_packet(grid, 2.0, 1.5, &mut rng);
            let seq = apply_weyl(&h1, &apply_weyl(&h2, &s)?)?;
            worst = worst.max(seq.sub(&apply_weyl(&composed, &s)?).norm() / seq.norm());
        }
        Ok((
            worst <= self.opts.tolerance,
            format!("max relative error {worst:.3e} over 3 signals"),
        ))
    }

    fn symbol_real(&self) -> Verdict {
        let h = SpreadingFunction::Points(vec![
            PointMass {
                w: 0.7,
                x: -0.3,
                weight: Complex64::new(0.8, 0.1),
            },
            PointMass {
                w: -0.4,
                x: 0.5,
                weight: Complex64::new(0.2, -0.3),
            },
        ]);
        let tg = TimeGrid::centered(0.25, 16)?;
        let s = symbol_s_with(&h, tg, tg, self.opts.fault)?;
        Ok((
            true,
            format!("S is real on a {}x{} grid, max |S| {:.3e}", tg.n, tg.n, s.max_abs()),
        ))
    }

    fn majorization(&self) -> Verdict {
        let gap = self.small_run()?.1.report.log_gap;
        let ok = gap.gap >= -1e-12 && gap.gap <= gap.bound;
        Ok((ok, format!("log gap {:.3e}, bound {:.3e}", gap.gap, gap.bound)))
    }

    fn waterfill_kkt(&self) -> Verdict {
        let mut rng = self.rng(4);
        let mut worst: f64 = 0.0;
        let mut budget: f64 = 0.0;
        for _ in 0..50 {
            let len = rng.gen_range(1..=12);
            let levels: Vec<f64> = (0..len).map(|_| rng.gen_range(0.01..10.0)).collect();
            let p = rng.gen_range(0.01..20.0);
            let alloc = waterfill(&levels, p)?;
            worst = worst.max(alloc.kkt_residual(&levels) / (1.0 + alloc.level));
            budget = budget.max((alloc.powers.iter().sum::<f64>() - p).abs() / p.max(1.0));
        }
        Ok((
            worst <= 1e-10 && budget <= 1e-9,
            format!("max KKT residual {worst:.3e}, max budget error {budget:.3e} over 50 allocations"),
        ))
    }

    fn waterfill_stability(&self) -> Verdict {
        let mut rng = self.rng(5);
        let mut worst: f64 = 0.0;
        for _ in 0..100 {
            let len = rng.gen_range(2..=12);
            let n: Vec<f64> = (0..len).map(|_| rng.gen_range(0.05..3.0)).collect();
            let eps = rng.gen_range(1e-4..0.2);
            let m: Vec<f64> = n.iter().map(|v| (v + rng.gen_range(-eps..eps)).max(0.01)).collect();
            let st = waterfill_stability(&n, &m, rng.gen_range(0.1..5.0))?;
            worst = worst.max(st.deviation / st.bound);
        }
        Ok((true, format!("worst deviation/bound {worst:.3} over 100 trials")))
    }

    fn power_deviation(&self) -> Verdict {
        let r = &self.small_run()?.1.report;
        let (_, exact) = csit_capacity(&r.eigenvalues, r.eta2, r.p_total)?;
        let (_, symbol) = csit_capacity(&r.symbol_samples, r.eta2, r.p_total)?;
        let eps = r
            .eigenvalues
            .iter()
            .zip(&r.symbol_samples)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let term = |p: f64, g: f64| (1.0 + p * g / r.eta2).log2();
        let dev = (0..exact.len())
            .map(|i| (term(exact[i], r.eigenvalues[i]) - term(symbol[i], r.symbol_samples[i])).abs())
            .fold(0.0, f64::max);
        let bound = (1.0 + (r.lattice.len() as f64 + 1.0) * eps).log2();
        Ok((
            dev <= bound,
            format!("max per-atom deviation {dev:.3e}, bound {bound:.3e}"),
        ))
    }

    fn diagonal_energy(&self) -> Verdict {
        let (sf, run) = self.small_run()?;
        let mut worst: f64 = 0.0;
        for (i, &(k, l)) in run.report.lattice.iter().enumerate() {
            let energy = apply_weyl(sf, &run.signaling.transmit.atom(k, l))?.norm_sqr();
            worst = worst.max((energy - run.report.diagonal[i]).abs() / energy.max(1e-3));
        }
        Ok((
            worst <= self.opts.tolerance,
            format!("max relative error {worst:.3e} over {} atoms", run.report.lattice.len()),
        ))
    }
}

fn envelope_bound() -> Verdict {
    let mut worst: f64 = 0.0;
    for s in [1.0, 4.0] {
        for rho in [1.5, 2.0] {
            worst = worst.max(ambiguity_envelope(&tight_window(s, 1.0, 1.0, rho)?.window)?.ratio);
        }
    }
    Ok((worst <= 1.0, format!("worst envelope ratio {worst:.3}")))
}

fn geometric_sum_bound() -> Verdict {
    let mut worst: f64 = 0.0;
    for (alpha, beta, p) in [(2.0, 2.0, 1.5), (3.0, 1.0, 1.5), (1.0, 3.0, 0.7)] {
        let c = (0..=5)
            .map(|d| geometric_sum(alpha, beta, p, 0.0, d as f64) / geometric_sum_shape(alpha, beta, 0.0, d as f64))
            .fold(0.0, f64::max);
        for d in 0..=20 {
            for k in [0.0, 3.0, -7.0] {
                let (lhs, rhs) = geometric_sum_check(alpha, beta, p, k, k + d as f64, c);
                worst = worst.max(lhs / rhs);
            }
        }
    }
    Ok((worst <= 1.0 + 1e-12, format!("worst sum/bound {worst:.6}")))
}

fn random_packet(grid: TimeGrid, spread: f64, band: f64, rng: &mut ChaCha8Rng) -> SampledSignal {
    let mut f = SampledSignal::zeros(grid);
    for _ in 0..3 {
        let (u, eta) = (rng.gen_range(-spread..spread), rng.gen_range(-band..band));
        let c = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let g = SampledSignal::from_fn(grid, |t| {
            Complex64::from_polar((-PI * (t - u).powi(2)).exp(), 2.0 * PI * eta * t)
        });
        f.add_scaled(&g, c);
    }
    f
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_checks_pass_without_fault() {
        let out = run_checks(&CHECK_NAMES, &ValidationOptions::default()).unwrap();
        for o in &out {
            assert!(o.passed, "{}: {}", o.name, o.detail);
        }
    }

    #[test]
    fn fault_fails_symbol_reality_only() {
        let opts = ValidationOptions {
            fault: TwistFault::FlipSign,
            ..Default::default()
        };
        let out = run_checks(&["symbol_real", "waterfill_kkt"], &opts).unwrap();
        assert!(!out[0].passed);
        assert!(out[0].detail.contains("imaginary residue"), "{}", out[0].detail);
        assert!(out[1].passed);
    }

    #[test]
    fn unknown_check_is_rejected() {
        assert!(run_checks(&["nope"], &ValidationOptions::default()).is_err());
        assert!(run_checks(&[], &ValidationOptions::default()).unwrap().is_empty());
    }
}
