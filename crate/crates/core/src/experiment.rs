//! Held-out evaluation of baseline, learned and calibrated arrays.
//!
//! Every system sees the same items for a given evaluation point, so
//! comparisons between systems are paired. Inference uses the standard
//! (non-differentiable) OMP; the stopping threshold is either fixed or
//! bisected to a target false-alarm probability on the full OMP traces.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::array::{uniform_grid, ArrayModel, SteeringDictionary};
use crate::channel::{channel_state, matched_filter, sensing_observation_with_noise};
use crate::comm::ml_detect;
use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::linalg::CVec;
use crate::metrics::{gospa, pmd_pfa, GospaParams, Point};
use crate::omp::{angle_delay_map, detection_positions, omp_trace, AngleDelayMap, OmpTrace};
use crate::rng::{derive_seed, EVAL_ITEMS};
use crate::training::{build_precoder, draw_item, BatchItem, LearnableParams, Scenario, TrainState};

/// Data-stream labels of the individual experiments.
const SENSING: u64 = 1;
const ISAC: u64 = 2;
const ROC: u64 = 3;
const GENERALIZATION: u64 = 4;
const MAP: u64 = 5;

#[derive(Clone, Debug)]
pub enum SystemModel {
    /// Structured array; its steering matrix can be formed on any grid.
    Array(ArrayModel),
    /// Free dictionary tied to the angle grid it was learned on.
    Dictionary(SteeringDictionary),
}

/// A named steering model used for both precoding and detection.
#[derive(Clone, Debug)]
pub struct System {
    pub name: String,
    pub model: SystemModel,
}

impl System {
    /// Baseline that knows the true array.
    pub fn known(scenario: &Scenario) -> Self {
        Self::from_array("known", scenario.true_array.clone())
    }

    /// Baseline that assumes half-wavelength spacing.
    pub fn agnostic(scenario: &Scenario) -> Self {
        Self::from_array("agnostic", ArrayModel::nominal(scenario.num_antennas(), scenario.wavelength()))
    }

    pub fn from_array(name: &str, array: ArrayModel) -> Self {
        Self {
            name: name.to_string(),
            model: SystemModel::Array(array),
        }
    }

    pub fn from_params(name: &str, params: &LearnableParams, angle_grid: &[f64]) -> Result<Self> {
        let model = match params.array() {
            Some(array) => SystemModel::Array(array?),
            None => SystemModel::Dictionary(params.steering_dictionary(angle_grid)?),
        };
        Ok(Self {
            name: name.to_string(),
            model,
        })
    }

    pub fn from_checkpoint(name: &str, state: &TrainState, angle_grid: &[f64]) -> Result<Self> {
        Self::from_params(name, &state.params, angle_grid)
    }

    pub fn dictionary(&self, angle_grid: &[f64]) -> Result<SteeringDictionary> {
        match &self.model {
            SystemModel::Array(a) => a.steering_matrix(angle_grid),
            SystemModel::Dictionary(d) if d.angle_grid == angle_grid => Ok(d.clone()),
            SystemModel::Dictionary(_) => Err(Error::InvalidArgument(format!(
                "system '{}' is a learned dictionary and cannot be moved to another angle grid",
                self.name
            ))),
        }
    }

    pub fn is_regriddable(&self) -> bool {
        matches!(self.model, SystemModel::Array(_))
    }
}

/// Where and how held-out items are drawn and transmitted.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalPoint {
    pub sensing_sector: (f64, f64),
    pub comm_sector: (f64, f64),
    pub t_max: usize,
    pub eta: f64,
    pub phase: f64,
    pub items: usize,
    /// Seed of the item streams.
    pub seed: u64,
}

/// Items with `T ~ U{0..t_max}` targets in the sensing sector.
pub fn eval_items(scenario: &Scenario, point: &EvalPoint) -> Vec<BatchItem> {
    let sp = scenario.sensing_priors(point.sensing_sector.0, point.sensing_sector.1);
    let cp = scenario.comm_priors(point.comm_sector.0, point.comm_sector.1);
    (0..point.items as u64)
        .into_par_iter()
        .map(|i| draw_item(scenario, &sp, &cp, 0..=point.t_max, EVAL_ITEMS, point.seed, i))
        .collect()
}

/// Raw result of one item: the full OMP trace and the symbol errors.
#[derive(Clone, Debug)]
pub struct Outcome {
    pub truth: Vec<Point>,
    pub trace: OmpTrace,
    pub symbol_errors: usize,
    pub symbols: usize,
}

/// Transmits every item with `f` through the true array, then runs OMP with
/// `detector` for up to `2 t_max` iterations and ML symbol detection.
pub fn simulate(scenario: &Scenario, detector: &SteeringDictionary, f: &CVec, items: &[BatchItem], t_max: usize) -> Result<Vec<Outcome>> {
    let comm_cfg = scenario.comm_ofdm();
    let max_iter = 2 * t_max;
    items
        .par_iter()
        .map(|item| {
            let y = sensing_observation_with_noise(&item.scene, f, &item.symbols, &scenario.ofdm, &scenario.true_array, &item.noise)?;
            let yt = matched_filter(&y, &item.symbols);
            let trace = omp_trace(&yt, detector, &scenario.delay, max_iter, None);
            let kappa = channel_state(&item.comm, f, &comm_cfg, &scenario.true_array);
            let yc: Vec<_> = (0..kappa.len())
                .map(|s| kappa[s] * item.comm_symbols.symbols[s] + item.comm_noise[(s, 0)])
                .collect();
            let est = ml_detect(&yc, kappa.as_slice(), &scenario.constellation)?;
            let symbol_errors = est.iter().zip(&item.comm_symbols.messages).filter(|(a, b)| a != b).count();
            Ok(Outcome {
                truth: item.scene.positions(),
                trace,
                symbol_errors,
                symbols: est.len(),
            })
        })
        .collect()
}

/// Aggregate metrics at one threshold.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub delta: f64,
    pub pmd: f64,
    pub pfa: f64,
    pub gospa: f64,
    pub gospa_se: f64,
    /// GOSPA when OMP runs exactly `T` iterations.
    pub gospa_known_t: f64,
    pub gospa_known_t_se: f64,
    pub ser: f64,
    pub items: usize,
}

/// Operating point plus the per-item values behind it, for paired tests.
#[derive(Clone, Debug)]
pub struct Scored {
    pub point: OperatingPoint,
    pub item_gospa: Vec<f64>,
    pub item_gospa_known_t: Vec<f64>,
    pub true_counts: Vec<usize>,
    pub est_counts: Vec<usize>,
}

fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let m = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (m, f64::NAN);
    }
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

pub fn score(outcomes: &[Outcome], delta: f64, t_max: usize, params: &GospaParams) -> Result<Scored> {
    let mut item_gospa = Vec::with_capacity(outcomes.len());
    let mut item_known = Vec::with_capacity(outcomes.len());
    let mut true_counts = Vec::with_capacity(outcomes.len());
    let mut est_counts = Vec::with_capacity(outcomes.len());
    let (mut errors, mut symbols) = (0usize, 0usize);
    for o in outcomes {
        let det = o.trace.result(delta);
        item_gospa.push(gospa(&o.truth, &detection_positions(&det), params)?);
        let known = o.trace.prefix(o.truth.len().min(o.trace.steps.len()));
        item_known.push(gospa(&o.truth, &detection_positions(&known), params)?);
        true_counts.push(o.truth.len());
        est_counts.push(det.len());
        errors += o.symbol_errors;
        symbols += o.symbols;
    }
    let (pmd, pfa) = pmd_pfa(&true_counts, &est_counts, t_max);
    let (g, g_se) = mean_se(&item_gospa);
    let (gk, gk_se) = mean_se(&item_known);
    Ok(Scored {
        point: OperatingPoint {
            delta,
            pmd,
            pfa,
            gospa: g,
            gospa_se: g_se,
            gospa_known_t: gk,
            gospa_known_t_se: gk_se,
            ser: if symbols == 0 { f64::NAN } else { errors as f64 / symbols as f64 },
            items: outcomes.len(),
        },
        item_gospa,
        item_gospa_known_t: item_known,
        true_counts,
        est_counts,
    })
}

fn pfa_at(outcomes: &[Outcome], delta: f64, t_max: usize) -> f64 {
    let t: Vec<usize> = outcomes.iter().map(|o| o.truth.len()).collect();
    let e: Vec<usize> = outcomes.iter().map(|o| o.trace.count_above(delta)).collect();
    pmd_pfa(&t, &e, t_max).1
}

/// Smallest threshold whose false-alarm probability does not exceed
/// `target`, by bisection over the peak values seen in the traces (the
/// only points where the detection counts change).
pub fn threshold_for_pfa(outcomes: &[Outcome], t_max: usize, target: f64) -> f64 {
    let mut peaks: Vec<f64> = outcomes.iter().flat_map(|o| o.trace.steps.iter().map(|s| s.peak)).collect();
    peaks.sort_by(f64::total_cmp);
    peaks.dedup();
    let Some(&smallest) = peaks.first() else {
        return 1.0;
    };
    // below every peak, all iterations are accepted
    let mut cands = vec![smallest / 2.0];
    cands.extend(peaks);
    let ok = |d: f64| {
        let p = pfa_at(outcomes, d, t_max);
        p.is_nan() || p <= target
    };
    let (mut lo, mut hi) = (0usize, cands.len() - 1);
    if ok(cands[lo]) {
        return cands[lo];
    }
    // invariant: cands[lo] fails, cands[hi] passes (the largest peak stops
    // every run before its first step)
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if ok(cands[mid]) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    cands[hi]
}

/// Mean of the noise-only angle-delay map, `K S sigma^2`; ROC thresholds
/// are multiples of this floor.
pub fn noise_floor(scenario: &Scenario) -> f64 {
    scenario.num_antennas() as f64 * scenario.ofdm.subcarriers as f64 * scenario.ofdm.noise_variance()
}

fn gospa_params(cfg: &ExperimentConfig) -> GospaParams {
    GospaParams::inference(cfg.gospa_cutoff())
}

fn sector(deg: [f64; 2]) -> (f64, f64) {
    (deg[0].to_radians(), deg[1].to_radians())
}

fn test_point(cfg: &ExperimentConfig, t_max: usize, eta: f64, phase: f64, seed: u64) -> EvalPoint {
    EvalPoint {
        sensing_sector: sector(cfg.eval.sensing_sector_deg),
        comm_sector: sector(cfg.eval.comm_sector_deg),
        t_max,
        eta,
        phase,
        items: cfg.eval.items,
        seed,
    }
}

/// Every system on the same items, each at its own threshold for the
/// target false-alarm probability.
pub fn evaluate_systems(scenario: &Scenario, systems: &[System], point: &EvalPoint, target_pfa: f64, params: &GospaParams) -> Result<Vec<Scored>> {
    let items = eval_items(scenario, point);
    systems
        .iter()
        .map(|sys| {
            let dict = sys.dictionary(&scenario.angle_grid)?;
            let f = build_precoder(&dict, point.sensing_sector, point.comm_sector, point.eta, point.phase, scenario.ofdm.power)?;
            let out = simulate(scenario, &dict, &f, &items, point.t_max)?;
            let delta = threshold_for_pfa(&out, point.t_max, target_pfa);
            score(&out, delta, point.t_max, params)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensingRow {
    pub system: String,
    pub t_max: usize,
    #[serde(flatten)]
    pub point: OperatingPoint,
}

/// Detection and localization versus the maximum number of targets, with
/// sensing-only transmission.
pub fn run_sensing_eval(cfg: &ExperimentConfig, scenario: &Scenario, systems: &[System]) -> Result<Vec<SensingRow>> {
    let mut rows = Vec::new();
    for t_max in 1..=cfg.system.t_max {
        let point = test_point(cfg, t_max, 1.0, 0.0, derive_seed(cfg.seed, SENSING, t_max as u64));
        let scored = evaluate_systems(scenario, systems, &point, cfg.eval.target_pfa, &gospa_params(cfg))?;
        for (sys, s) in systems.iter().zip(scored) {
            rows.push(SensingRow {
                system: sys.name.clone(),
                t_max,
                point: s.point,
            });
        }
    }
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocRow {
    pub system: String,
    /// Threshold over the noise floor.
    pub ratio: f64,
    #[serde(flatten)]
    pub point: OperatingPoint,
}

/// Fixed-threshold sweep at the configured `T_max`.
pub fn run_roc(cfg: &ExperimentConfig, scenario: &Scenario, systems: &[System]) -> Result<Vec<RocRow>> {
    let point = test_point(cfg, cfg.system.t_max, 1.0, 0.0, derive_seed(cfg.seed, ROC, 0));
    let items = eval_items(scenario, &point);
    let floor = noise_floor(scenario);
    let mut rows = Vec::new();
    for sys in systems {
        let dict = sys.dictionary(&scenario.angle_grid)?;
        let f = build_precoder(&dict, point.sensing_sector, point.comm_sector, 1.0, 0.0, scenario.ofdm.power)?;
        let out = simulate(scenario, &dict, &f, &items, point.t_max)?;
        for &ratio in &cfg.eval.roc_thresholds {
            let s = score(&out, ratio * floor, point.t_max, &gospa_params(cfg))?;
            rows.push(RocRow {
                system: sys.name.clone(),
                ratio,
                point: s.point,
            });
        }
    }
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IsacRow {
    pub system: String,
    pub eta: f64,
    pub phase: f64,
    #[serde(flatten)]
    pub point: OperatingPoint,
    /// Not dominated in (Pmd, SER) by another point of the same system.
    pub pareto: bool,
}

/// Flags the points not dominated by any other; both coordinates are
/// minimized and NaN coordinates never dominate nor survive.
pub fn pareto_front(points: &[(f64, f64)]) -> Vec<bool> {
    points
        .iter()
        .map(|&(a, b)| {
            if a.is_nan() || b.is_nan() {
                return false;
            }
            !points.iter().any(|&(c, d)| c <= a && d <= b && (c < a || d < b))
        })
        .collect()
}

/// Sensing / communication trade-off over the precoder weights.
pub fn run_isac_sweep(cfg: &ExperimentConfig, scenario: &Scenario, systems: &[System]) -> Result<Vec<IsacRow>> {
    let base = test_point(cfg, cfg.system.t_max, 1.0, 0.0, derive_seed(cfg.seed, ISAC, 0));
    let items = eval_items(scenario, &base);
    let mut rows = Vec::new();
    for sys in systems {
        let dict = sys.dictionary(&scenario.angle_grid)?;
        let mut sys_rows = Vec::new();
        for &phase in &cfg.eval.phases {
            for eta in cfg.eta_grid() {
                let f = build_precoder(&dict, base.sensing_sector, base.comm_sector, eta, phase, scenario.ofdm.power)?;
                let out = simulate(scenario, &dict, &f, &items, base.t_max)?;
                let delta = threshold_for_pfa(&out, base.t_max, cfg.eval.target_pfa);
                let s = score(&out, delta, base.t_max, &gospa_params(cfg))?;
                sys_rows.push(IsacRow {
                    system: sys.name.clone(),
                    eta,
                    phase,
                    point: s.point,
                    pareto: false,
                });
            }
        }
        let flags = pareto_front(&sys_rows.iter().map(|r| (r.point.pmd, r.point.ser)).collect::<Vec<_>>());
        for (r, f) in sys_rows.iter_mut().zip(flags) {
            r.pareto = f;
        }
        rows.extend(sys_rows);
    }
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneralizationRow {
    pub system: String,
    pub theta_mean_deg: f64,
    #[serde(flatten)]
    pub point: OperatingPoint,
}

/// Sensing with a fixed-span sector swept in mean angle. The detector grid
/// spans the sector; the precoder is still synthesized on the full grid.
/// Systems that cannot be re-gridded (free dictionaries) are skipped.
pub fn run_generalization(cfg: &ExperimentConfig, scenario: &Scenario, systems: &[System]) -> Result<Vec<GeneralizationRow>> {
    let half = cfg.eval.generalization_span_deg / 2.0;
    let mut rows = Vec::new();
    for (i, &mean) in cfg.eval.generalization_means_deg.iter().enumerate() {
        let mut point = test_point(cfg, cfg.system.t_max, 1.0, 0.0, derive_seed(cfg.seed, GENERALIZATION, i as u64));
        point.sensing_sector = sector([mean - half, mean + half]);
        let items = eval_items(scenario, &point);
        let grid = uniform_grid(point.sensing_sector.0, point.sensing_sector.1, cfg.system.n_theta);
        for sys in systems.iter().filter(|s| s.is_regriddable()) {
            let full = sys.dictionary(&scenario.angle_grid)?;
            let detector = sys.dictionary(&grid)?;
            let f = build_precoder(&full, point.sensing_sector, point.comm_sector, 1.0, 0.0, scenario.ofdm.power)?;
            let out = simulate(scenario, &detector, &f, &items, point.t_max)?;
            let delta = threshold_for_pfa(&out, point.t_max, cfg.eval.target_pfa);
            let s = score(&out, delta, point.t_max, &gospa_params(cfg))?;
            rows.push(GeneralizationRow {
                system: sys.name.clone(),
                theta_mean_deg: mean,
                point: s.point,
            });
        }
    }
    Ok(rows)
}

/// Angle-delay maps of one `T_max`-target test scene seen through each
/// system's dictionary.
pub fn map_dump(cfg: &ExperimentConfig, scenario: &Scenario, systems: &[System]) -> Result<(Vec<Point>, Vec<(String, AngleDelayMap)>)> {
    let point = test_point(cfg, cfg.system.t_max, 1.0, 0.0, derive_seed(cfg.seed, MAP, 0));
    let sp = scenario.sensing_priors(point.sensing_sector.0, point.sensing_sector.1);
    let cp = scenario.comm_priors(point.comm_sector.0, point.comm_sector.1);
    let item = draw_item(scenario, &sp, &cp, point.t_max..=point.t_max, EVAL_ITEMS, point.seed, 0);
    let mut maps = Vec::new();
    for sys in systems {
        let dict = sys.dictionary(&scenario.angle_grid)?;
        let f = build_precoder(&dict, point.sensing_sector, point.comm_sector, 1.0, 0.0, scenario.ofdm.power)?;
        let y = sensing_observation_with_noise(&item.scene, &f, &item.symbols, &scenario.ofdm, &scenario.true_array, &item.noise)?;
        let yt = matched_filter(&y, &item.symbols);
        maps.push((sys.name.clone(), angle_delay_map(&yt, &dict.matrix, &scenario.delay)));
    }
    Ok((item.scene.positions(), maps))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Preset;
    use crate::omp::OmpStep;
    use proptest::prelude::*;

    fn outcome(truth: usize, peaks: &[f64]) -> Outcome {
        Outcome {
            truth: vec![[10.0, 0.0]; truth],
            trace: OmpTrace {
                steps: peaks
                    .iter()
                    .enumerate()
                    .map(|(i, &peak)| OmpStep {
                        peak,
                        angle_index: 0,
                        delay_index: i,
                        gains: vec![num_complex::Complex64::new(1.0, 0.0); i + 1],
                        residual_energy: 0.0,
                    })
                    .collect(),
                final_peak: None,
                initial_energy: 1.0,
                angle_grid: vec![0.0],
                delay_grid: (0..peaks.len()).map(|j| j as f64 * 1e-8).collect(),
            },
            symbol_errors: 0,
            symbols: 1,
        }
    }

    #[test]
    fn pareto_keeps_only_non_dominated() {
        let pts = [(0.1, 0.5), (0.2, 0.2), (0.3, 0.3), (0.5, 0.1), (0.1, 0.5), (f64::NAN, 0.0)];
        assert_eq!(pareto_front(&pts), vec![true, true, false, true, true, false]);
    }

    proptest! {
        #[test]
        fn pareto_rows_are_not_dominated(pts in prop::collection::vec((0.0..1.0f64, 0.0..1.0f64), 1..30)) {
            let flags = pareto_front(&pts);
            prop_assert!(flags.iter().any(|&f| f));
            for (i, &(a, b)) in pts.iter().enumerate() {
                let dominated = pts.iter().any(|&(c, d)| c <= a && d <= b && (c < a || d < b));
                prop_assert_eq!(flags[i], !dominated);
            }
        }

        #[test]
        fn bisection_hits_the_smallest_feasible_threshold(
            raw in prop::collection::vec((0usize..4, prop::collection::vec(0.1..10.0f64, 0..8)), 1..25),
            target in 0.01..0.6f64,
        ) {
            let outs: Vec<Outcome> = raw.iter().map(|(t, p)| {
                let mut p = p.clone();
                p.sort_by(|a, b| b.total_cmp(a));
                outcome(*t, &p)
            }).collect();
            let d = threshold_for_pfa(&outs, 4, target);
            let p = pfa_at(&outs, d, 4);
            prop_assert!(p.is_nan() || p <= target);
            // any smaller peak value would break the target
            for o in &outs {
                for s in &o.trace.steps {
                    if s.peak < d {
                        let q = pfa_at(&outs, s.peak, 4);
                        prop_assert!(q > target, "peak {} gives pfa {} <= {}", s.peak, q, target);
                    }
                }
            }
        }
    }

    #[test]
    fn empty_scenes_give_nan_pmd() {
        let outs = vec![outcome(0, &[3.0, 1.0]), outcome(0, &[])];
        let s = score(&outs, 2.0, 0, &GospaParams::inference(33.75)).unwrap();
        assert!(s.point.pmd.is_nan());
        assert!(s.point.pfa.is_nan());
        assert_eq!(s.true_counts, vec![0, 0]);
    }

    #[test]
    fn known_count_gospa_uses_the_first_t_steps() {
        let outs = vec![outcome(2, &[5.0, 4.0, 3.0])];
        let s = score(&outs, 100.0, 3, &GospaParams::inference(33.75)).unwrap();
        assert_eq!(s.est_counts, vec![0]);
        assert!(s.point.gospa > 0.0);
        // the first two steps sit at ranges 0 and ~1.5 m on the axis
        let r1 = crate::SPEED_OF_LIGHT / 2.0 * 1e-8;
        let want = gospa(&[[10.0, 0.0]; 2], &[[0.0, 0.0], [r1, 0.0]], &GospaParams::inference(33.75)).unwrap();
        assert!((s.point.gospa_known_t - want).abs() < 1e-9);
    }

    #[test]
    fn dictionary_systems_refuse_other_grids() {
        let cfg = ExperimentConfig::preset(Preset::Desk);
        let sc = cfg.scenario().unwrap();
        let p = LearnableParams::dictionary(16, sc.wavelength(), &sc.angle_grid).unwrap();
        let s = System::from_params("dictionary", &p, &sc.angle_grid).unwrap();
        assert!(s.dictionary(&sc.angle_grid).is_ok());
        assert!(s.dictionary(&uniform_grid(0.0, 0.3, 180)).is_err());
        assert!(!s.is_regriddable());
    }

    #[test]
    fn noise_floor_matches_noise_only_maps() {
        let mut cfg = ExperimentConfig::preset(Preset::Desk);
        cfg.eval.items = 40;
        let sc = cfg.scenario().unwrap();
        let point = EvalPoint { t_max: 0, ..test_point(&cfg, 0, 1.0, 0.0, 9) };
        let dict = System::agnostic(&sc).dictionary(&sc.angle_grid).unwrap();
        let mut acc = 0.0;
        for item in eval_items(&sc, &point) {
            let yt = matched_filter(&item.noise, &item.symbols);
            let m = angle_delay_map(&yt, &dict.matrix, &sc.delay);
            acc += m.values.iter().sum::<f64>() / m.values.len() as f64;
        }
        let ratio = acc / 40.0 / noise_floor(&sc);
        assert!((ratio - 1.0).abs() < 0.05, "ratio {ratio}");
    }
}
