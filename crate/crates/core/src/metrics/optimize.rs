//! Search for the delay `τ_a` that maximizes the depth-specific quality.

use serde::{Deserialize, Serialize};

use super::aggregate::{Adjust, SpectralAggregates};
use super::{ImagingRegion, QValue};
use crate::error::{Error, Result};
use crate::field::FieldCube;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TauSearch {
    pub lo: f64,
    pub hi: f64,
    /// Coarse grid points over `[lo, hi]` (`τ = 0` is always added).
    pub coarse: usize,
    /// Bracket width at which golden-section refinement stops, s.
    pub tol: f64,
}

impl TauSearch {
    /// `±1/(2 f_H)`: half an HF period either way.
    pub fn symmetric(f_h: f64) -> Self {
        let half = 0.5 / f_h;
        TauSearch {
            lo: -half,
            hi: half,
            coarse: 64,
            tol: 1e-12,
        }
    }

    fn validate(&self, limit: f64) -> Result<()> {
        if !(self.lo.is_finite() && self.hi.is_finite() && self.lo < self.hi) || self.coarse < 2 || !(self.tol > 0.0) {
            return Err(Error::InvalidParameter {
                field: "search",
                reason: format!("need lo < hi, coarse >= 2 and tol > 0, got {self:?}"),
            });
        }
        let worst = self.lo.abs().max(self.hi.abs());
        if worst >= limit {
            return Err(Error::DelayTooLarge { tau: worst, limit });
        }
        Ok(())
    }

    pub fn grid(&self) -> Vec<f64> {
        let n = self.coarse;
        (0..n)
            .map(|i| self.lo + (self.hi - self.lo) * i as f64 / (n - 1) as f64)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TauOptimum {
    pub tau_a: f64,
    pub q_za: QValue,
    pub evaluations: usize,
}

const INV_PHI: f64 = 0.618_033_988_749_894_8;

/// Maximize a unimodal `f` on `[a, b]` until the bracket is narrower than
/// `tol`. Returns the best point evaluated and its value.
pub fn golden_section_max<F: FnMut(f64) -> f64>(mut f: F, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    if fc >= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

fn better(candidate: (f64, f64), best: (f64, f64)) -> bool {
    candidate.1 > best.1 || (candidate.1 == best.1 && candidate.0.abs() < best.0.abs())
}

/// `argmax_τ Q_{z_a}(τ)` over `search`: coarse grid, then golden section
/// around the best grid point. Exact ties go to the smallest `|τ|`.
pub fn optimize_tau(
    agg: &SpectralAggregates,
    region: &ImagingRegion,
    z_a: f64,
    search: &TauSearch,
) -> Result<TauOptimum> {
    let g = agg.grid();
    search.validate(g.nt as f64 * g.dt / 4.0)?;
    region.validate(g)?;
    let mut evaluations = 0;
    let mut objective = |tau: f64| -> Result<QValue> {
        evaluations += 1;
        agg.quality_specific(region, z_a, if tau == 0.0 { Adjust::None } else { Adjust::Delay(tau) })
    };
    let coarse = search.grid();
    let mut best = (0.0, objective(0.0)?.db);
    for &tau in &coarse {
        let q = objective(tau)?.db;
        if better((tau, q), best) {
            best = (tau, q);
        }
    }
    if best.1.is_finite() {
        let step = (search.hi - search.lo) / (search.coarse - 1) as f64;
        let a = (best.0 - step).max(search.lo);
        let b = (best.0 + step).min(search.hi);
        let mut failure = None;
        let refined = golden_section_max(
            |tau| match objective(tau) {
                Ok(q) => q.db,
                Err(e) => {
                    failure.get_or_insert(e);
                    f64::NEG_INFINITY
                }
            },
            a,
            b,
            search.tol,
        );
        if let Some(e) = failure {
            return Err(e);
        }
        if refined.1 > best.1 {
            best = refined;
        }
    }
    let q_za = objective(best.0)?;
    Ok(TauOptimum {
        tau_a: best.0,
        q_za,
        evaluations,
    })
}

/// [`optimize_tau`] straight from the pulse cubes.
pub fn optimize_tau_fields(
    s_plus: &FieldCube,
    s_minus: &FieldCube,
    z_a: f64,
    region: &ImagingRegion,
    search: &TauSearch,
) -> Result<TauOptimum> {
    optimize_tau(&SpectralAggregates::new(s_plus, s_minus)?, region, z_a, search)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn golden_finds_parabola_vertex() {
        let (x, fx) = golden_section_max(|x| -(x - 0.3).powi(2) + 2.0, -1.0, 1.0, 1e-10);
        // a quadratic peak only resolves x to about sqrt(f64::EPSILON)
        assert!((x - 0.3).abs() < 1e-7);
        assert!((fx - 2.0).abs() < 1e-15);
    }

    #[test]
    fn golden_on_monotone_goes_to_edge() {
        let (x, _) = golden_section_max(|x| x, 0.0, 1.0, 1e-9);
        assert!(x > 1.0 - 1e-8);
    }

    #[test]
    fn tie_prefers_small_delay() {
        assert!(better((-0.1, 1.0), (0.2, 1.0)));
        assert!(!better((0.3, 1.0), (0.2, 1.0)));
        assert!(better((0.3, f64::INFINITY), (0.0, 5.0)));
    }

    #[test]
    fn search_validation() {
        let s = TauSearch::symmetric(3.5e6);
        assert!(s.validate(1e-6).is_ok());
        assert!(matches!(s.validate(1e-7), Err(Error::DelayTooLarge { .. })));
        let bad = TauSearch { lo: 1.0, hi: 0.0, ..s };
        assert!(bad.validate(10.0).is_err());
        assert_eq!(s.grid().len(), 64);
        assert_eq!(s.grid()[0], s.lo);
        assert_eq!(s.grid()[63], s.hi);
    }
}
