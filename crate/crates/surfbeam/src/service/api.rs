//! Request resolution and payload computation, independent of the HTTP layer.
//!
//! Every request is first reduced to its *effective* parameters: delays are
//! quantized to 0.1 ns, depths snapped to a grid slice, and a zero delay
//! becomes "no adjustment". The effective parameters key the cache and are
//! echoed in the payload, so equal effective requests give equal bytes.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use surfbeam_core::adjust::{
    delay_series, design_equalizer, equalize_series, Equalizer, GuardBand, DEFAULT_EPSILON, LOW_CONFIDENCE,
};
use surfbeam_core::metrics::{
    beam_map, difference_beam_map, energy_map, optimize_tau, quality_general, quality_specific, Adjust, BeamMap,
    BeamMode, ImagingRegion, QValue, TauSearch,
};
use surfbeam_core::{slice_time_series, Grid};

use super::cache::PayloadCache;
use super::error::ApiError;
use super::workspace::{RunData, RunHandle, Workspace};

/// Beam levels below this are clamped, dB.
pub const FLOOR_DB: f64 = -200.0;

pub struct AppState {
    pub workspace: Workspace,
    pub cache: PayloadCache,
}

/// Decoded query string; unknown or repeated keys are rejected.
pub struct Params(BTreeMap<String, String>);

impl Params {
    pub fn new(pairs: Vec<(String, String)>, allowed: &[&str]) -> Result<Self, ApiError> {
        let mut map = BTreeMap::new();
        for (k, v) in pairs {
            if !allowed.contains(&k.as_str()) {
                return Err(ApiError::invalid(format!(
                    "unknown parameter `{k}` (allowed: {})",
                    allowed.join(", ")
                )));
            }
            if map.insert(k.clone(), v).is_some() {
                return Err(ApiError::invalid(format!("parameter `{k}` given twice")));
            }
        }
        Ok(Params(map))
    }

    pub fn str(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str)
    }

    pub fn f64(&self, key: &str) -> Result<Option<f64>, ApiError> {
        match self.0.get(key) {
            None => Ok(None),
            Some(s) => match s.trim().parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(Some(v)),
                _ => Err(ApiError::invalid(format!("`{key}` must be a finite number, got `{s}`"))),
            },
        }
    }

    fn usize(&self, key: &str) -> Result<Option<usize>, ApiError> {
        match self.0.get(key) {
            None => Ok(None),
            Some(s) => match s.trim().parse::<usize>() {
                Ok(v) if v > 0 => Ok(Some(v)),
                _ => Err(ApiError::invalid(format!(
                    "`{key}` must be a positive integer, got `{s}`"
                ))),
            },
        }
    }
}

pub fn quantize_tau_ns(tau_ns: f64) -> f64 {
    let q = (tau_ns * 10.0).round() / 10.0;
    // fold -0.0 into 0.0 so equal delays print alike
    if q == 0.0 {
        0.0
    } else {
        q
    }
}

fn snap_depth(grid: &Grid, z_mm: f64, key: &str) -> Result<usize, ApiError> {
    let z = z_mm * 1e-3;
    let slop = 1e-9 * grid.dz;
    if !(z >= grid.z0 - slop && z <= grid.z_max() + slop) {
        return Err(ApiError::invalid(format!(
            "`{key}` = {z_mm} mm is outside the grid [{:.3}, {:.3}] mm",
            grid.z0 * 1e3,
            grid.z_max() * 1e3
        )));
    }
    Ok(grid.nearest_z(z))
}

fn region_from(params: &Params, grid: &Grid) -> Result<ImagingRegion, ApiError> {
    let d = ImagingRegion::default();
    let region = ImagingRegion {
        z_n: params.f64("zn_mm")?.map_or(d.z_n, |v| v * 1e-3),
        z_f: params.f64("zf_mm")?.map_or(d.z_f, |v| v * 1e-3),
    };
    region.validate(grid)?;
    Ok(region)
}

fn parse_mode(params: &Params) -> Result<BeamMode, ApiError> {
    match params.str("mode").unwrap_or("max") {
        "max" => Ok(BeamMode::Max),
        "rms" => Ok(BeamMode::Rms),
        other => Err(ApiError::invalid(format!("unknown mode `{other}` (rms, max)"))),
    }
}

fn mode_tag(mode: BeamMode) -> &'static str {
    match mode {
        BeamMode::Max => "max",
        BeamMode::Rms => "rms",
    }
}

/// A fully resolved adjustment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Effective {
    None,
    /// Quantized delay; `from` records the optimization that chose it.
    Delay {
        tau_ns: f64,
        from: Option<(usize, ImagingRegion)>,
    },
    Equalizer {
        iz: usize,
        epsilon: f64,
    },
    Fundamental,
}

impl Effective {
    fn name(&self) -> &'static str {
        match self {
            Effective::None => "none",
            Effective::Delay { .. } => "delay",
            Effective::Equalizer { .. } => "equalizer",
            Effective::Fundamental => "fundamental",
        }
    }

    fn key(&self) -> String {
        match self {
            Effective::None => "none".into(),
            Effective::Delay { tau_ns, .. } => format!("delay:{tau_ns:.1}"),
            Effective::Equalizer { iz, epsilon } => format!("eq:{iz}:{epsilon:e}"),
            Effective::Fundamental => "fundamental".into(),
        }
    }

    /// Effective parameters as they appear in payloads.
    fn describe(&self, grid: &Grid) -> Value {
        let mut v = json!({"adjust": self.name()});
        match *self {
            Effective::Delay { tau_ns, from } => {
                v["tau_ns"] = json!(tau_ns);
                if let Some((iz, r)) = from {
                    v["za_mm"] = json!(grid.z(iz) * 1e3);
                    v["zn_mm"] = json!(r.z_n * 1e3);
                    v["zf_mm"] = json!(r.z_f * 1e3);
                }
            }
            Effective::Equalizer { iz, epsilon } => {
                v["za_mm"] = json!(grid.z(iz) * 1e3);
                v["epsilon"] = json!(epsilon);
            }
            _ => {}
        }
        v
    }
}

fn merge_into(v: &mut Value, extra: Value) {
    if let (Value::Object(a), Value::Object(b)) = (v, extra) {
        a.extend(b);
    }
}

fn to_bytes(v: &Value) -> Result<Vec<u8>, ApiError> {
    serde_json::to_vec(v).map_err(|e| ApiError::internal(e.to_string()))
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
struct Optimum {
    tau_ns: f64,
    q_za: QValue,
    evaluations: usize,
}

impl AppState {
    pub fn new(workspace: Workspace, cache_bytes: usize) -> Self {
        AppState {
            workspace,
            cache: PayloadCache::new(cache_bytes),
        }
    }

    fn run(&self, id: &str) -> Result<Arc<RunHandle>, ApiError> {
        self.workspace
            .get(id)
            .ok_or_else(|| ApiError::not_found(format!("no run with id `{id}`")))
    }

    pub fn runs_payload(&self) -> Result<Vec<u8>, ApiError> {
        let list: Vec<Value> = self
            .workspace
            .runs
            .iter()
            .map(|r| {
                let g = &r.manifest.grid;
                json!({
                    "id": r.id,
                    "name": r.name,
                    "grid": {
                        "nz": g.nz, "dz_mm": g.dz * 1e3, "z0_mm": g.z0 * 1e3, "z_max_mm": g.z_max() * 1e3,
                        "nr": g.nr, "dr_mm": g.dr * 1e3,
                        "nt": g.nt, "dt_ns": g.dt * 1e9,
                    },
                    "pulse": r.manifest.pulse_spec,
                    "fields": r.manifest.field_files.iter().map(|f| f.name.clone()).collect::<Vec<_>>(),
                })
            })
            .collect();
        to_bytes(&Value::Array(list))
    }

    fn optimum(
        &self,
        run: &RunHandle,
        data: &RunData,
        iz: usize,
        region: ImagingRegion,
        search: TauSearch,
    ) -> Result<Optimum, ApiError> {
        let key = format!(
            "opt|{}|{iz}|{:e}|{:e}|{:e}|{:e}",
            run.id, region.z_n, region.z_f, search.lo, search.hi
        );
        let bytes = self.cache.get_or_compute(&key, || {
            let agg = data.aggregates()?;
            let best = optimize_tau(&agg, &region, run.manifest.grid.z(iz), &search)?;
            serde_json::to_vec(&Optimum {
                tau_ns: best.tau_a * 1e9,
                q_za: best.q_za,
                evaluations: best.evaluations,
            })
            .map_err(|e| ApiError::internal(e.to_string()))
        })?;
        serde_json::from_slice(&bytes).map_err(|e| ApiError::internal(e.to_string()))
    }

    fn resolve(&self, run: &RunHandle, data: &RunData, params: &Params) -> Result<Effective, ApiError> {
        let grid = &run.manifest.grid;
        let za = params.f64("za_mm")?.map(|z| snap_depth(grid, z, "za_mm")).transpose()?;
        match params.str("adjust").unwrap_or("none") {
            "none" => Ok(Effective::None),
            "fundamental" => {
                if data.zero.is_none() {
                    return Err(ApiError::invalid(
                        "run has no hf_zero field for the fundamental baseline",
                    ));
                }
                Ok(Effective::Fundamental)
            }
            "delay" => {
                let f_h = run.manifest.pulse_spec.f_h;
                let (tau_ns, from) = match (params.f64("tau_ns")?, za) {
                    (Some(t), _) => {
                        if t.abs() > 1e9 / f_h {
                            return Err(ApiError {
                                code: "DELAY_TOO_LARGE",
                                ..ApiError::invalid(format!("|tau_ns| must not exceed 1/f_H = {:.3} ns", 1e9 / f_h))
                            });
                        }
                        (quantize_tau_ns(t), None)
                    }
                    (None, Some(iz)) => {
                        let region = region_from(params, grid)?;
                        let best = self.optimum(run, data, iz, region, TauSearch::symmetric(f_h))?;
                        (quantize_tau_ns(best.tau_ns), Some((iz, region)))
                    }
                    (None, None) => return Err(ApiError::invalid("adjust=delay needs tau_ns or za_mm")),
                };
                if tau_ns == 0.0 {
                    Ok(Effective::None)
                } else {
                    Ok(Effective::Delay { tau_ns, from })
                }
            }
            "equalizer" => {
                let iz = za.ok_or_else(|| ApiError::invalid("adjust=equalizer needs za_mm"))?;
                let epsilon = params.f64("epsilon")?.unwrap_or(DEFAULT_EPSILON);
                if !(epsilon > 0.0) {
                    return Err(ApiError::invalid("`epsilon` must be positive"));
                }
                Ok(Effective::Equalizer { iz, epsilon })
            }
            other => Err(ApiError::invalid(format!(
                "unknown adjust `{other}` (none, delay, equalizer, fundamental)"
            ))),
        }
    }

    fn equalizer(&self, run: &RunHandle, data: &RunData, iz: usize, epsilon: f64) -> Result<Equalizer, ApiError> {
        let g = &run.manifest.grid;
        Ok(design_equalizer(
            &slice_time_series(&data.plus, iz, 0)?,
            &slice_time_series(&data.minus, iz, 0)?,
            epsilon,
            GuardBand::for_pulse(&run.manifest.pulse_spec),
            g.z(iz),
        )?)
    }

    fn raw_beam(&self, run: &RunHandle, data: &RunData, eff: Effective, mode: BeamMode) -> Result<BeamMap, ApiError> {
        Ok(match eff {
            Effective::None => difference_beam_map(&data.plus, &data.minus, Adjust::None, mode)?,
            Effective::Delay { tau_ns, .. } => {
                difference_beam_map(&data.plus, &data.minus, Adjust::Delay(tau_ns * 1e-9), mode)?
            }
            Effective::Equalizer { iz, epsilon } => {
                let eq = self.equalizer(run, data, iz, epsilon)?;
                difference_beam_map(&data.plus, &data.minus, Adjust::Equalizer(&eq), mode)?
            }
            Effective::Fundamental => beam_map(data.zero.as_ref().expect("checked in resolve"), mode),
        })
    }

    /// Peak of the non-adjusted difference map: the shared reference level.
    fn common_reference(&self, run: &RunHandle, data: &RunData, mode: BeamMode) -> Result<f64, ApiError> {
        let key = format!("ref|{}|{}", run.id, mode_tag(mode));
        let bytes = self.cache.get_or_compute(&key, || {
            to_bytes(&json!(self.raw_beam(run, data, Effective::None, mode)?.max()))
        })?;
        serde_json::from_slice(&bytes).map_err(|e| ApiError::internal(e.to_string()))
    }

    pub fn beam(&self, id: &str, pairs: Vec<(String, String)>) -> Result<Arc<Vec<u8>>, ApiError> {
        let params = Params::new(
            pairs,
            &["adjust", "tau_ns", "za_mm", "epsilon", "mode", "norm", "zn_mm", "zf_mm"],
        )?;
        let run = self.run(id)?;
        let data = run.data()?;
        let mode = parse_mode(&params)?;
        let norm = match params.str("norm").unwrap_or("peak") {
            n @ ("peak" | "common") => n,
            other => return Err(ApiError::invalid(format!("unknown norm `{other}` (peak, common)"))),
        };
        let eff = self.resolve(&run, &data, &params)?;
        let key = format!("beam|{}|{}|{}|{norm}", run.id, eff.key(), mode_tag(mode));
        self.cache.get_or_compute(&key, || {
            let g = run.manifest.grid;
            let raw = self.raw_beam(&run, &data, eff, mode)?;
            let (map, norm_ref) = if norm == "peak" {
                (raw.normalized_peak(), raw.max())
            } else {
                let r = self.common_reference(&run, &data, mode)?;
                (raw.normalized_common(r), r)
            };
            let db = map.db(FLOOR_DB);
            let values: Vec<&[f64]> = db.chunks(g.nr).collect();
            let mut v = json!({"run": run.id});
            merge_into(&mut v, eff.describe(&g));
            merge_into(
                &mut v,
                json!({
                    "mode": mode_tag(mode),
                    "norm": norm,
                    "norm_ref": norm_ref,
                    "floor_db": FLOOR_DB,
                    "z_mm": g.z_axis().iter().map(|z| z * 1e3).collect::<Vec<_>>(),
                    "r_mm": g.r_axis().iter().map(|r| r * 1e3).collect::<Vec<_>>(),
                    "values": values,
                }),
            );
            to_bytes(&v)
        })
    }

    pub fn pulse(&self, id: &str, pairs: Vec<(String, String)>) -> Result<Arc<Vec<u8>>, ApiError> {
        let params = Params::new(
            pairs,
            &["z_mm", "adjust", "tau_ns", "za_mm", "epsilon", "zn_mm", "zf_mm"],
        )?;
        let run = self.run(id)?;
        let data = run.data()?;
        let g = run.manifest.grid;
        let z = params
            .f64("z_mm")?
            .ok_or_else(|| ApiError::invalid("`z_mm` is required"))?;
        let iz = snap_depth(&g, z, "z_mm")?;
        let eff = self.resolve(&run, &data, &params)?;
        if eff == Effective::Fundamental {
            return Err(ApiError::invalid(
                "adjust=fundamental has no pulse pair; s_zero is included in every pulse payload",
            ));
        }
        let key = format!("pulse|{}|{iz}|{}", run.id, eff.key());
        self.cache.get_or_compute(&key, || {
            let to64 = |s: &[f32]| s.iter().map(|&v| f64::from(v)).collect::<Vec<f64>>();
            let plus = data.plus.series(iz, 0);
            let minus = to64(data.minus.series(iz, 0));
            let adjusted: Vec<f64> = match eff {
                Effective::None => minus,
                Effective::Delay { tau_ns, .. } => delay_series(&minus, g.dt, tau_ns * 1e-9),
                Effective::Equalizer { iz: iza, epsilon } => {
                    equalize_series(&minus, &self.equalizer(&run, &data, iza, epsilon)?)
                }
                Effective::Fundamental => unreachable!("rejected above"),
            };
            // same f32 rounding as a stored adjusted / difference cube
            let adjusted: Vec<f32> = adjusted.iter().map(|&v| v as f32).collect();
            let diff: Vec<f64> = plus
                .iter()
                .zip(&adjusted)
                .map(|(&a, &b)| f64::from((f64::from(a) - f64::from(b)) as f32))
                .collect();
            let mut v = json!({"run": run.id, "z_mm": g.z(iz) * 1e3});
            merge_into(&mut v, eff.describe(&g));
            merge_into(
                &mut v,
                json!({
                    "t_ns": g.t_axis().iter().map(|t| t * 1e9).collect::<Vec<_>>(),
                    "s_plus": to64(plus),
                    "s_minus_adj": adjusted.iter().map(|&v| f64::from(v)).collect::<Vec<_>>(),
                    "s_diff": diff,
                }),
            );
            if let Some(zero) = &data.zero {
                v["s_zero"] = json!(to64(zero.series(iz, 0)));
            }
            to_bytes(&v)
        })
    }

    pub fn quality(&self, id: &str, pairs: Vec<(String, String)>) -> Result<Arc<Vec<u8>>, ApiError> {
        let params = Params::new(pairs, &["adjust", "tau_ns", "za_mm", "epsilon", "zn_mm", "zf_mm"])?;
        let run = self.run(id)?;
        let data = run.data()?;
        let g = run.manifest.grid;
        let za = params
            .f64("za_mm")?
            .ok_or_else(|| ApiError::invalid("`za_mm` is required"))?;
        let iz = snap_depth(&g, za, "za_mm")?;
        let region = region_from(&params, &g)?;
        let eff = self.resolve(&run, &data, &params)?;
        let key = format!(
            "quality|{}|{iz}|{:e}|{:e}|{}",
            run.id,
            region.z_n,
            region.z_f,
            eff.key()
        );
        self.cache.get_or_compute(&key, || {
            let z_a = g.z(iz);
            let (q_za, q) = match eff {
                Effective::Fundamental => {
                    let e = energy_map(data.zero.as_ref().expect("checked in resolve"));
                    (quality_specific(&e, &region, z_a)?, quality_general(&e, &region)?)
                }
                _ => {
                    let agg = data.aggregates()?;
                    let eq;
                    let adjust = match eff {
                        Effective::Delay { tau_ns, .. } => Adjust::Delay(tau_ns * 1e-9),
                        Effective::Equalizer { iz: iza, epsilon } => {
                            eq = self.equalizer(&run, &data, iza, epsilon)?;
                            Adjust::Equalizer(&eq)
                        }
                        _ => Adjust::None,
                    };
                    (
                        agg.quality_specific(&region, z_a, adjust)?,
                        agg.quality_general(&region, adjust)?,
                    )
                }
            };
            let mut v = json!({"run": run.id});
            merge_into(&mut v, eff.describe(&g));
            merge_into(
                &mut v,
                json!({
                    "za_mm": z_a * 1e3,
                    "zn_mm": region.z_n * 1e3,
                    "zf_mm": region.z_f * 1e3,
                    "Q_za_dB": q_za.db.is_finite().then_some(q_za.db),
                    "Q_dB": q.db.is_finite().then_some(q.db),
                    "Q_za_zero_denominator": q_za.zero_denominator,
                    "Q_zero_denominator": q.zero_denominator,
                }),
            );
            to_bytes(&v)
        })
    }

    pub fn tau_map(&self, id: &str, pairs: Vec<(String, String)>) -> Result<Arc<Vec<u8>>, ApiError> {
        let params = Params::new(pairs, &["stride_z", "stride_r"])?;
        let run = self.run(id)?;
        let g = run.manifest.grid;
        let sz = params.usize("stride_z")?.unwrap_or_else(|| g.nz.div_ceil(100));
        let sr = params.usize("stride_r")?.unwrap_or_else(|| g.nr.div_ceil(64));
        let key = format!("taumap|{}|{sz}|{sr}", run.id);
        self.cache.get_or_compute(&key, || {
            let map = run.data()?.shift_map()?;
            let zs: Vec<usize> = (0..g.nz).step_by(sz).collect();
            let rs: Vec<usize> = (0..g.nr).step_by(sr).collect();
            let grid_of = |f: &dyn Fn(usize, usize) -> f64| -> Vec<Vec<f64>> {
                zs.iter().map(|&iz| rs.iter().map(|&ir| f(iz, ir)).collect()).collect()
            };
            to_bytes(&json!({
                "run": run.id,
                "stride_z": sz,
                "stride_r": sr,
                "z_mm": zs.iter().map(|&iz| g.z(iz) * 1e3).collect::<Vec<_>>(),
                "r_mm": rs.iter().map(|&ir| g.r(ir) * 1e3).collect::<Vec<_>>(),
                "tau_ns": grid_of(&|iz, ir| map.tau_at(iz, ir) * 1e9),
                "confidence": grid_of(&|iz, ir| map.confidence_at(iz, ir)),
                "low_confidence_below": LOW_CONFIDENCE,
            }))
        })
    }

    pub fn optimize(&self, id: &str, body: &[u8]) -> Result<Arc<Vec<u8>>, ApiError> {
        let req: OptimizeRequest =
            serde_json::from_slice(body).map_err(|e| ApiError::invalid(format!("malformed optimize body: {e}")))?;
        let run = self.run(id)?;
        let data = run.data()?;
        let g = run.manifest.grid;
        let iz = snap_depth(&g, req.za_mm, "za_mm")?;
        let d = ImagingRegion::default();
        let region = ImagingRegion {
            z_n: req.zn_mm.map_or(d.z_n, |v| v * 1e-3),
            z_f: req.zf_mm.map_or(d.z_f, |v| v * 1e-3),
        };
        region.validate(&g)?;
        let f_h = run.manifest.pulse_spec.f_h;
        let mut search = TauSearch::symmetric(f_h);
        let range_ns = match req.range_ns {
            None => [search.lo * 1e9, search.hi * 1e9],
            Some(RangeNs::Half(h)) => [-h.abs(), h.abs()],
            Some(RangeNs::Bounds(b)) => b,
        };
        search.lo = range_ns[0] * 1e-9;
        search.hi = range_ns[1] * 1e-9;
        if !(search.lo < search.hi) || !search.lo.is_finite() || !search.hi.is_finite() {
            return Err(ApiError::invalid("`range_ns` must describe a non-empty interval"));
        }
        if search.lo.abs().max(search.hi.abs()) > 1.0 / f_h {
            return Err(ApiError {
                code: "DELAY_TOO_LARGE",
                ..ApiError::invalid(format!("`range_ns` must stay within ±1/f_H = {:.3} ns", 1e9 / f_h))
            });
        }
        let best = self.optimum(&run, &data, iz, region, search)?;
        to_bytes(&json!({
            "run": run.id,
            "za_mm": g.z(iz) * 1e3,
            "zn_mm": region.z_n * 1e3,
            "zf_mm": region.z_f * 1e3,
            "range_ns": range_ns,
            "tau_ns_opt": best.tau_ns,
            "Q_za_dB": best.q_za.db.is_finite().then_some(best.q_za.db),
            "Q_za_zero_denominator": best.q_za.zero_denominator,
            "evaluations": best.evaluations,
        }))
        .map(Arc::new)
    }
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum RangeNs {
    /// Symmetric `±h`.
    Half(f64),
    Bounds([f64; 2]),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct OptimizeRequest {
    za_mm: f64,
    #[serde(default)]
    range_ns: Option<RangeNs>,
    #[serde(default)]
    zn_mm: Option<f64>,
    #[serde(default)]
    zf_mm: Option<f64>,
}
