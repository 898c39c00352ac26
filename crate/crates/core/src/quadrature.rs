//! Composite Gauss–Legendre rules on panels.

use std::num::NonZeroUsize;
use std::sync::OnceLock;

use gauss_quad::legendre::GaussLegendre;

const ORDER: usize = 16;

fn rule() -> &'static [(f64, f64)] {
    static RULE: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    RULE.get_or_init(|| {
        let gl = GaussLegendre::new(NonZeroUsize::new(ORDER).unwrap());
        let mut pairs: Vec<(f64, f64)> = gl.iter().map(|(x, w)| (*x, *w)).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        pairs
    })
}

/// Nodes and weights of a composite 16-point rule on `[a, b]` split into
/// `panels` equal pieces.
pub fn panel_nodes(a: f64, b: f64, panels: usize) -> Vec<(f64, f64)> {
    let panels = panels.max(1);
    let h = (b - a) / panels as f64;
    let mut out = Vec::with_capacity(panels * ORDER);
    for p in 0..panels {
        let lo = a + p as f64 * h;
        let mid = lo + 0.5 * h;
        for &(x, w) in rule() {
            out.push((mid + 0.5 * h * x, 0.5 * h * w));
        }
    }
    out
}

/// Nodes on `[a, b]` with panel boundaries forced at every breakpoint that lies
/// strictly inside the interval, and panel widths at most `max_width`.
pub fn nodes_with_breaks(a: f64, b: f64, breaks: &[f64], max_width: f64) -> Vec<(f64, f64)> {
    let mut cuts = vec![a];
    let mut inner: Vec<f64> = breaks.iter().copied().filter(|&c| c > a && c < b).collect();
    inner.sort_by(f64::total_cmp);
    cuts.extend(inner);
    cuts.push(b);
    let mut out = Vec::new();
    for w in cuts.windows(2) {
        let len = w[1] - w[0];
        if len <= 0.0 {
            continue;
        }
        let panels = (len / max_width).ceil().max(1.0) as usize;
        out.extend(panel_nodes(w[0], w[1], panels));
    }
    out
}

/// Integrates `f` over `[a, b]` with a composite rule.
pub fn integrate<F: FnMut(f64) -> f64>(a: f64, b: f64, panels: usize, mut f: F) -> f64 {
    panel_nodes(a, b, panels).into_iter().map(|(x, w)| w * f(x)).sum()
}
