//! Quality sweeps over reference depths and adjustment variants.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::aggregate::{Adjust, SpectralAggregates};
use super::optimize::{optimize_tau, TauSearch};
use super::{
    beam_map, difference_beam_map, energy_map, quality_general_from_slices, quality_specific_from_slices, BeamMap,
    BeamMode, ImagingRegion, QValue,
};
use crate::adjust::{delay_series, design_equalizer, equalize_series, Equalizer, GuardBand, DEFAULT_EPSILON};
use crate::error::Result;
use crate::field::{slice_time_series, FieldCube};
use crate::medium::PulseComplexSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AdjustmentKind {
    None,
    Delay,
    Equalizer,
}

impl AdjustmentKind {
    pub const ALL: [AdjustmentKind; 3] = [AdjustmentKind::None, AdjustmentKind::Delay, AdjustmentKind::Equalizer];

    pub fn tag(self) -> &'static str {
        match self {
            AdjustmentKind::None => "none",
            AdjustmentKind::Delay => "delay",
            AdjustmentKind::Equalizer => "equalizer",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepOptions {
    pub region: ImagingRegion,
    /// Reference depths, m.
    pub z_a: Vec<f64>,
    /// Variants evaluated at each depth.
    pub adjustments: Vec<AdjustmentKind>,
    pub search: TauSearch,
    pub epsilon: f64,
    pub band: GuardBand,
    /// Samples of `Q(τ_a)` across the search range.
    pub tau_curve_points: usize,
    /// Reference depths at which full beam maps are produced.
    pub beam_z_a: Vec<f64>,
    pub beam_mode: BeamMode,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions::for_pulse(&PulseComplexSpec::default())
    }
}

impl SweepOptions {
    /// Defaults for `spec`: 1–55 mm in 1 mm steps, symmetric delay search,
    /// guard band `f_H (1 ± bw_H)`.
    pub fn for_pulse(spec: &PulseComplexSpec) -> Self {
        SweepOptions {
            region: ImagingRegion::default(),
            z_a: (1..=55).map(|mm| mm as f64 * 1e-3).collect(),
            adjustments: AdjustmentKind::ALL.to_vec(),
            search: TauSearch::symmetric(spec.f_h),
            epsilon: DEFAULT_EPSILON,
            band: GuardBand::for_pulse(spec),
            tau_curve_points: 121,
            beam_z_a: Vec::new(),
            beam_mode: BeamMode::Max,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityRow {
    /// Requested reference depth, m.
    pub z_a: f64,
    /// Depth of the grid slice actually used, m.
    pub z_slice: f64,
    pub adjustment: AdjustmentKind,
    /// Applied delay for `Delay`, s.
    pub tau_a: Option<f64>,
    pub q_za: QValue,
    pub q: QValue,
    /// `max_t |sΔ|` on the axis at `z_a`, Pa.
    pub on_axis_peak: f64,
}

/// Quality of the HF beam transmitted without LF.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FundamentalBaseline {
    pub q: QValue,
    /// One entry per requested `z_a`.
    pub q_za: Vec<QValue>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TauCurvePoint {
    pub tau_a: f64,
    pub q: QValue,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeamRecord {
    pub tag: String,
    pub adjustment: Option<AdjustmentKind>,
    pub z_a: Option<f64>,
    pub tau_a: Option<f64>,
    #[serde(skip)]
    pub map: Option<BeamMap>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub region: ImagingRegion,
    pub z_a: Vec<f64>,
    pub rows: Vec<QualityRow>,
    pub fundamental: Option<FundamentalBaseline>,
    pub q_vs_tau: Vec<TauCurvePoint>,
    pub beams: Vec<BeamRecord>,
}

impl QualityReport {
    pub fn row(&self, z_a: f64, adjustment: AdjustmentKind) -> Option<&QualityRow> {
        self.rows
            .iter()
            .find(|r| r.adjustment == adjustment && (r.z_a - z_a).abs() < 1e-12)
    }

    /// Optimal delay per reference depth.
    pub fn tau_opt(&self) -> Vec<(f64, f64)> {
        self.rows
            .iter()
            .filter(|r| r.adjustment == AdjustmentKind::Delay)
            .filter_map(|r| r.tau_a.map(|t| (r.z_a, t)))
            .collect()
    }
}

fn beam_tag(kind: AdjustmentKind, z_a: f64) -> String {
    format!("{}_za{:.1}mm", kind.tag(), z_a * 1e3)
}

fn on_axis_peak(plus: &[f64], minus_adj: &[f64]) -> f64 {
    plus.iter()
        .zip(minus_adj)
        .fold(0.0, |m: f64, (a, b)| m.max((a - b).abs()))
}

fn design_at(s_plus: &FieldCube, s_minus: &FieldCube, z_a: f64, opts: &SweepOptions) -> Result<Equalizer> {
    let iz = s_plus.grid().nearest_z(z_a);
    design_equalizer(
        &slice_time_series(s_plus, iz, 0)?,
        &slice_time_series(s_minus, iz, 0)?,
        opts.epsilon,
        opts.band,
        z_a,
    )
}

/// Evaluate `Q_{z_a}` and `Q` for no adjustment, the optimal pure delay and
/// the equalizer at every requested depth, plus the optional HF-only
/// baseline, the `Q(τ_a)` curve and the requested beam maps.
pub fn sweep(
    s_plus: &FieldCube,
    s_minus: &FieldCube,
    s_zero: Option<&FieldCube>,
    opts: &SweepOptions,
) -> Result<QualityReport> {
    let g = *s_plus.grid();
    opts.region.validate(&g)?;
    let agg = SpectralAggregates::new(s_plus, s_minus)?;
    let base_slices = agg.slice_energies(Adjust::None);
    let mut depths = opts.z_a.clone();
    depths.sort_by(f64::total_cmp);
    depths.dedup();

    let per_depth: Vec<Result<Vec<QualityRow>>> = depths
        .par_iter()
        .map(|&z_a| {
            let iz = g.nearest_z(z_a);
            let plus = slice_time_series(s_plus, iz, 0)?.samples;
            let minus = slice_time_series(s_minus, iz, 0)?.samples;
            let mut rows = Vec::with_capacity(3);
            let wanted = |k| opts.adjustments.contains(&k);
            if wanted(AdjustmentKind::None) {
                rows.push(QualityRow {
                    z_a,
                    z_slice: g.z(iz),
                    adjustment: AdjustmentKind::None,
                    tau_a: None,
                    q_za: quality_specific_from_slices(&base_slices, &g, &opts.region, iz),
                    q: quality_general_from_slices(&base_slices, &g, &opts.region),
                    on_axis_peak: on_axis_peak(&plus, &minus),
                });
            }
            if wanted(AdjustmentKind::Delay) {
                let best = optimize_tau(&agg, &opts.region, z_a, &opts.search)?;
                let delayed = agg.slice_energies(if best.tau_a == 0.0 {
                    Adjust::None
                } else {
                    Adjust::Delay(best.tau_a)
                });
                rows.push(QualityRow {
                    z_a,
                    z_slice: g.z(iz),
                    adjustment: AdjustmentKind::Delay,
                    tau_a: Some(best.tau_a),
                    q_za: best.q_za,
                    q: quality_general_from_slices(&delayed, &g, &opts.region),
                    on_axis_peak: on_axis_peak(&plus, &delay_series(&minus, g.dt, best.tau_a)),
                });
            }
            if wanted(AdjustmentKind::Equalizer) {
                let eq = design_at(s_plus, s_minus, z_a, opts)?;
                let equalized = agg.slice_energies(Adjust::Equalizer(&eq));
                rows.push(QualityRow {
                    z_a,
                    z_slice: g.z(iz),
                    adjustment: AdjustmentKind::Equalizer,
                    tau_a: None,
                    q_za: quality_specific_from_slices(&equalized, &g, &opts.region, iz),
                    q: quality_general_from_slices(&equalized, &g, &opts.region),
                    on_axis_peak: on_axis_peak(&plus, &equalize_series(&minus, &eq)),
                });
            }
            Ok(rows)
        })
        .collect();
    let mut rows = Vec::with_capacity(3 * depths.len());
    for r in per_depth {
        rows.extend(r?);
    }

    let fundamental = match s_zero {
        Some(zero) => {
            let e = energy_map(zero);
            let slices: Vec<f64> = (0..g.nz).map(|iz| e.slice_energy(iz)).collect();
            Some(FundamentalBaseline {
                q: quality_general_from_slices(&slices, &g, &opts.region),
                q_za: depths
                    .iter()
                    .map(|&z| quality_specific_from_slices(&slices, &g, &opts.region, g.nearest_z(z)))
                    .collect(),
            })
        }
        None => None,
    };

    let q_vs_tau = if opts.tau_curve_points >= 2 && opts.adjustments.contains(&AdjustmentKind::Delay) {
        let curve = TauSearch {
            coarse: opts.tau_curve_points,
            ..opts.search
        };
        curve
            .grid()
            .par_iter()
            .map(|&tau| TauCurvePoint {
                tau_a: tau,
                q: quality_general_from_slices(
                    &agg.slice_energies(if tau == 0.0 { Adjust::None } else { Adjust::Delay(tau) }),
                    &g,
                    &opts.region,
                ),
            })
            .collect()
    } else {
        Vec::new()
    };

    let mut beams = Vec::new();
    if let Some(zero) = s_zero.filter(|_| !opts.beam_z_a.is_empty()) {
        beams.push(BeamRecord {
            tag: "fundamental".into(),
            adjustment: None,
            z_a: None,
            tau_a: None,
            map: Some(beam_map(zero, opts.beam_mode)),
        });
    }
    for &z_a in &opts.beam_z_a {
        let tau = rows
            .iter()
            .find(|r| r.adjustment == AdjustmentKind::Delay && (r.z_a - z_a).abs() < 1e-12)
            .and_then(|r| r.tau_a);
        let tau = match tau {
            Some(t) => t,
            None if opts.adjustments.contains(&AdjustmentKind::Delay) => {
                optimize_tau(&agg, &opts.region, z_a, &opts.search)?.tau_a
            }
            None => 0.0,
        };
        for &kind in &opts.adjustments {
            let eq;
            let adjust = match kind {
                AdjustmentKind::None => Adjust::None,
                AdjustmentKind::Delay => Adjust::Delay(tau),
                AdjustmentKind::Equalizer => {
                    eq = design_at(s_plus, s_minus, z_a, opts)?;
                    Adjust::Equalizer(&eq)
                }
            };
            beams.push(BeamRecord {
                tag: beam_tag(kind, z_a),
                adjustment: Some(kind),
                z_a: Some(z_a),
                tau_a: (kind == AdjustmentKind::Delay).then_some(tau),
                map: Some(difference_beam_map(s_plus, s_minus, adjust, opts.beam_mode)?),
            });
        }
    }

    Ok(QualityReport {
        region: opts.region,
        z_a: depths,
        rows,
        fundamental,
        q_vs_tau,
        beams,
    })
}
