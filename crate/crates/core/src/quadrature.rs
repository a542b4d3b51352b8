//! Expectations over a standard normal variable.
//!
//! Two rules are available. Gauss-Hermite with `n` nodes is exact for
//! polynomials up to degree `2n - 1` but converges slowly once the
//! integrand has a kink. The composite rule integrates over `[-L, L]`
//! with Gauss-Legendre panels whose edges include caller-supplied split
//! points, graded toward each split, so piecewise-smooth integrands are
//! handled to near machine precision.

use std::num::NonZeroUsize;
use std::sync::OnceLock;

use gauss_quad::hermite::GaussHermite;
use gauss_quad::legendre::GaussLegendre;

const HALF_WIDTH: f64 = 10.0;
const PANEL_NODES: usize = 16;
/// Grading offsets around each split point.
const GRADING: [f64; 4] = [0.25, 0.0625, 0.015_625, 0.003_906_25];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Rule {
    GaussHermite(usize),
    Composite,
}

#[derive(Clone, Debug)]
pub struct NormalQuadrature {
    rule: Rule,
    /// `(node, weight)` pairs: normal-scaled for Gauss-Hermite, on
    /// `[-1, 1]` for the composite rule.
    pairs: Vec<(f64, f64)>,
}

impl NormalQuadrature {
    pub fn new(rule: Rule) -> Self {
        let pairs = match rule {
            Rule::GaussHermite(n) => {
                let gh = GaussHermite::new(NonZeroUsize::new(n).expect("at least one node"));
                let norm = std::f64::consts::PI.sqrt();
                gh.as_node_weight_pairs()
                    .iter()
                    .map(|&(x, w)| (std::f64::consts::SQRT_2 * x, w / norm))
                    .collect()
            }
            Rule::Composite => {
                let gl = GaussLegendre::new(NonZeroUsize::new(PANEL_NODES).unwrap());
                gl.as_node_weight_pairs().to_vec()
            }
        };
        NormalQuadrature { rule, pairs }
    }

    pub fn rule(&self) -> Rule {
        self.rule
    }

    /// `E[f(Z)]` for `Z ~ N(0, 1)`. `splits` lists the values of `z` where
    /// `f` has kinks or steep transitions; the Gauss-Hermite rule ignores
    /// them.
    pub fn expect<F: FnMut(f64) -> f64>(&self, mut f: F, splits: &[f64]) -> f64 {
        match self.rule {
            Rule::GaussHermite(_) => self.pairs.iter().map(|&(z, w)| w * f(z)).sum(),
            Rule::Composite => {
                let edges = panel_edges(splits);
                let mut total = 0.0;
                for w in edges.windows(2) {
                    let (a, b) = (w[0], w[1]);
                    let half = 0.5 * (b - a);
                    let mid = 0.5 * (a + b);
                    let mut panel = 0.0;
                    for &(x, wt) in &self.pairs {
                        let z = mid + half * x;
                        panel += wt * crate::special::phi(z) * f(z);
                    }
                    total += half * panel;
                }
                total
            }
        }
    }
}

fn panel_edges(splits: &[f64]) -> Vec<f64> {
    let n = (2.0 * HALF_WIDTH) as usize;
    let mut edges: Vec<f64> = (0..=n).map(|i| -HALF_WIDTH + i as f64).collect();
    for &s in splits {
        if s.is_finite() && s.abs() < HALF_WIDTH {
            edges.push(s);
            for g in GRADING {
                edges.extend([s - g, s + g]);
            }
        }
    }
    edges.retain(|e| e.abs() <= HALF_WIDTH);
    edges.sort_by(f64::total_cmp);
    edges.dedup_by(|a, b| (*a - *b).abs() < 1e-13);
    edges
}

/// Shared composite rule used by the state-evolution engine.
pub fn default_rule() -> &'static NormalQuadrature {
    static RULE: OnceLock<NormalQuadrature> = OnceLock::new();
    RULE.get_or_init(|| NormalQuadrature::new(Rule::Composite))
}

/// Shared 61-node Gauss-Hermite rule.
pub fn hermite61() -> &'static NormalQuadrature {
    static RULE: OnceLock<NormalQuadrature> = OnceLock::new();
    RULE.get_or_init(|| NormalQuadrature::new(Rule::GaussHermite(61)))
}
