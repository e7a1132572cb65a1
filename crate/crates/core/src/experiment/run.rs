//! Disorder-averaged relaxation traces and late-time field sweeps.

use rayon::prelude::*;
use serde::Serialize;

use super::config::{Engine, ExperimentConfig, LateMode};
use crate::couplings::{build_coupling_matrix_with_cutoff, CouplingMatrix, InteractionLaw};
use crate::dtwa::dtwa_magnetization;
use crate::ed::{build_hamiltonian, evolve_magnetization, PureState};
use crate::error::{Error, Result};
use crate::geometry::{median_nn_coupling, sample_blockaded_positions, SpinPositions};
use crate::pairs::{ensemble_field_sweep, match_pairs_with, PairDecomposition};
use crate::rng::derive_seed;
use crate::stats::{mean, mean_stderr};

/// Stream index for the DTWA trajectory seed of a realization.
const TRAJECTORY_STREAM: u64 = 0x7472_616a;

/// Positions of realization `r` are drawn with this seed.
pub fn realization_seed(seed: u64, r: usize) -> u64 {
    derive_seed(seed, r as u64)
}

/// Seed of the DTWA trajectories of a realization.
pub fn trajectory_seed(realization_seed: u64) -> u64 {
    derive_seed(realization_seed, TRAJECTORY_STREAM)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RealizationInfo {
    pub index: usize,
    pub seed: u64,
    pub n: usize,
    pub j_median_mhz: f64,
}

/// One disorder realization with its couplings.
#[derive(Debug, Clone)]
pub struct Realization {
    pub info: RealizationInfo,
    pub positions: SpinPositions,
    pub couplings: CouplingMatrix,
}

/// Sample the positions of realization `r`.
pub fn sample_positions(cfg: &ExperimentConfig, r: usize) -> Result<SpinPositions> {
    let cloud = cfg.resolve_cloud()?;
    sample_blockaded_positions(
        &cloud.geometry,
        cloud.n,
        cloud.r_bl,
        realization_seed(cfg.seed, r),
        cloud.max_attempts,
    )
}

pub fn build_realization(
    cfg: &ExperimentConfig,
    law: &InteractionLaw,
    r: usize,
) -> Result<Realization> {
    let positions = sample_positions(cfg, r)?;
    let couplings = build_coupling_matrix_with_cutoff(&positions, law, cfg.interaction.cutoff_um)?;
    let info = RealizationInfo {
        index: r,
        seed: positions.seed(),
        n: positions.len(),
        j_median_mhz: median_nn_coupling(&positions, law)?,
    };
    Ok(Realization {
        info,
        positions,
        couplings,
    })
}

/// Field grid of a run. Without explicit values the inner region is the
/// preset's J_median, or the sampled J_median of realization 0.
pub fn omega_grid(cfg: &ExperimentConfig) -> Result<Vec<f64>> {
    if cfg.fields.values_mhz.is_some() || cfg.fields.inner_mhz.is_some() {
        return Ok(cfg.omega_grid(f64::NAN));
    }
    let scale = match cfg.preset_j_scale() {
        Some(j) => j,
        None => median_nn_coupling(&sample_positions(cfg, 0)?, &cfg.resolve_law()?)?,
    };
    Ok(cfg.omega_grid(scale))
}

/// A `(field, realization)` that failed; the rest of the run carries on.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Failure {
    pub omega_mhz: f64,
    pub realization: usize,
    pub message: String,
}

/// Disorder-averaged trace at one field.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trace {
    pub omega_mhz: f64,
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
    /// Realizations that contributed.
    pub n_ok: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RelaxationResult {
    pub engine: Engine,
    pub times: Vec<f64>,
    pub traces: Vec<Trace>,
    pub failures: Vec<Failure>,
    pub realizations: Vec<RealizationInfo>,
}

/// Per-realization trace: mean and the engine's own error bar.
type RawTrace = (Vec<f64>, Vec<f64>);

fn engine_trace(
    cfg: &ExperimentConfig,
    real: &Realization,
    omega: f64,
    times: &[f64],
) -> Result<RawTrace> {
    match cfg.engine {
        Engine::Ed => {
            let h = build_hamiltonian(&real.couplings, omega)?;
            let m = evolve_magnetization(&h, &PureState::x_polarized(real.info.n), times)?;
            let zeros = vec![0.0; m.len()];
            Ok((m, zeros))
        }
        Engine::Dtwa => {
            let b = dtwa_magnetization(
                &real.couplings,
                omega,
                cfg.n_traj,
                times,
                trajectory_seed(real.info.seed),
                &cfg.dtwa,
            )?;
            Ok((b.mean, b.stderr))
        }
        _ => Err(Error::InvalidArgument(format!(
            "engine `{}` has no time traces",
            cfg.engine.name()
        ))),
    }
}

/// Raw traces for every `(realization, field)`, realization-major.
fn raw_traces(
    cfg: &ExperimentConfig,
    omegas: &[f64],
    times: &[f64],
) -> Result<(Vec<RealizationInfo>, Vec<Vec<Result<RawTrace>>>)> {
    let law = cfg.resolve_law()?;
    let per_real: Vec<(RealizationInfo, Vec<Result<RawTrace>>)> = (0..cfg.n_realizations)
        .into_par_iter()
        .map(|r| {
            let real = build_realization(cfg, &law, r)?;
            let traces = omegas
                .par_iter()
                .map(|&w| engine_trace(cfg, &real, w, times))
                .collect();
            Ok((real.info, traces))
        })
        .collect::<Result<_>>()?;
    Ok(per_real.into_iter().unzip())
}

/// Mean over realizations; the error bar is the spread across realizations,
/// or the engine's own error bar when only one realization contributed.
fn combine(values: &[f64], engine_err: &[f64]) -> (f64, f64) {
    match values.len() {
        0 => (f64::NAN, f64::NAN),
        1 => (values[0], engine_err[0]),
        _ => mean_stderr(values),
    }
}

fn collect_failure(failures: &mut Vec<Failure>, omega: f64, r: usize, e: &Error) {
    failures.push(Failure {
        omega_mhz: omega,
        realization: r,
        message: e.to_string(),
    });
}

pub fn run_relaxation(cfg: &ExperimentConfig) -> Result<RelaxationResult> {
    if !cfg.engine.has_traces() {
        return Err(Error::config(
            "engine",
            format!("`{}` has no time traces; use ed or dtwa", cfg.engine.name()),
        ));
    }
    cfg.validate()?;
    let times = cfg.time_grid()?;
    let omegas = omega_grid(cfg)?;
    let (realizations, raw) = raw_traces(cfg, &omegas, &times)?;
    let mut failures = Vec::new();
    let traces = omegas
        .iter()
        .enumerate()
        .map(|(k, &w)| {
            let ok: Vec<&RawTrace> = raw
                .iter()
                .enumerate()
                .filter_map(|(r, per)| match &per[k] {
                    Ok(t) => Some(t),
                    Err(e) => {
                        collect_failure(&mut failures, w, r, e);
                        None
                    }
                })
                .collect();
            let (mut m, mut s) = (
                Vec::with_capacity(times.len()),
                Vec::with_capacity(times.len()),
            );
            for i in 0..times.len() {
                let vals: Vec<f64> = ok.iter().map(|t| t.0[i]).collect();
                let errs: Vec<f64> = ok.iter().map(|t| t.1[i]).collect();
                let (a, b) = combine(&vals, &errs);
                m.push(a);
                s.push(b);
            }
            Trace {
                omega_mhz: w,
                mean: m,
                stderr: s,
                n_ok: ok.len(),
            }
        })
        .collect();
    Ok(RelaxationResult {
        engine: cfg.engine,
        times,
        traces,
        failures,
        realizations,
    })
}

/// Late-time value of one trace and its error bar. Window mode averages the
/// samples in `[0.9 t_late, t_late]`.
pub fn late_value(
    times: &[f64],
    values: &[f64],
    errors: &[f64],
    t_late: f64,
    mode: LateMode,
) -> Result<(f64, f64)> {
    let tol = 1e-9 * t_late;
    let end = times
        .iter()
        .position(|&t| (t - t_late).abs() <= tol)
        .ok_or_else(|| Error::InvalidArgument(format!("t_late = {t_late} is not a trace time")))?;
    match mode {
        LateMode::Last => Ok((values[end], errors[end])),
        LateMode::Window => {
            let start = times
                .iter()
                .position(|&t| t >= 0.9 * t_late - tol)
                .unwrap_or(end);
            Ok((mean(&values[start..=end]), mean(&errors[start..=end])))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub omega_mhz: f64,
    pub m_late: f64,
    pub m_stderr: f64,
    pub engine: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub engine: Engine,
    pub rows: Vec<SweepRow>,
    pub failures: Vec<Failure>,
    pub realizations: Vec<RealizationInfo>,
}

impl SweepResult {
    pub fn omegas(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.omega_mhz).collect()
    }

    pub fn magnetizations(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.m_late).collect()
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for row in &self.rows {
            out.serialize(row)?;
        }
        out.flush()?;
        Ok(())
    }
}

fn sweep_rows(
    cfg: &ExperimentConfig,
    omegas: &[f64],
    per_real: &[Vec<Result<(f64, f64)>>],
    failures: &mut Vec<Failure>,
) -> Vec<SweepRow> {
    omegas
        .iter()
        .enumerate()
        .map(|(k, &w)| {
            let mut vals = Vec::new();
            let mut errs = Vec::new();
            for (r, per) in per_real.iter().enumerate() {
                match &per[k] {
                    Ok((v, e)) => {
                        vals.push(*v);
                        errs.push(*e);
                    }
                    Err(e) => collect_failure(failures, w, r, e),
                }
            }
            let (m, s) = combine(&vals, &errs);
            SweepRow {
                omega_mhz: w,
                m_late: m,
                m_stderr: s,
                engine: cfg.engine.name().to_string(),
            }
        })
        .collect()
}

/// Pair decomposition of one realization with the configured matching.
pub fn realization_pairs(cfg: &ExperimentConfig, real: &Realization) -> Result<PairDecomposition> {
    match_pairs_with(&real.positions, &real.couplings, cfg.matching)
}

pub fn run_field_sweep(cfg: &ExperimentConfig) -> Result<SweepResult> {
    cfg.validate()?;
    let omegas = omega_grid(cfg)?;
    let mut failures = Vec::new();
    let (realizations, per_real): (Vec<RealizationInfo>, Vec<Vec<Result<(f64, f64)>>>) = match cfg
        .engine
        .ensemble()
    {
        None => {
            let times = cfg.time_grid()?;
            let (infos, raw) = raw_traces(cfg, &omegas, &times)?;
            let late = raw
                .into_iter()
                .map(|per| {
                    per.into_iter()
                        .map(|t| {
                            t.and_then(|(m, s)| {
                                late_value(&times, &m, &s, cfg.t_late_us, cfg.late_mode)
                            })
                        })
                        .collect()
                })
                .collect();
            (infos, late)
        }
        Some(kind) => {
            let law = cfg.resolve_law()?;
            let per: Vec<(RealizationInfo, Vec<Result<(f64, f64)>>)> = (0..cfg.n_realizations)
                .into_par_iter()
                .map(|r| {
                    let real = build_realization(cfg, &law, r)?;
                    let pairs = realization_pairs(cfg, &real)?;
                    drop(real.couplings);
                    let curve =
                        ensemble_field_sweep(&pairs, &omegas, kind, cfg.rescale, &cfg.mean_field)?;
                    let vals = curve
                        .points
                        .into_iter()
                        .map(|p| match p.error {
                            None => Ok((p.magnetization, 0.0)),
                            Some(msg) => Err(Error::InvalidArgument(msg)),
                        })
                        .collect();
                    Ok((real.info, vals))
                })
                .collect::<Result<_>>()?;
            per.into_iter().unzip()
        }
    };
    let rows = sweep_rows(cfg, &omegas, &per_real, &mut failures);
    Ok(SweepResult {
        engine: cfg.engine,
        rows,
        failures,
        realizations,
    })
}

/// `(t_us, sx_mean, sx_stderr)` table of one trace.
pub fn write_trace_csv<W: std::io::Write>(times: &[f64], trace: &Trace, w: W) -> Result<()> {
    #[derive(Serialize)]
    struct Row {
        t_us: f64,
        sx_mean: f64,
        sx_stderr: f64,
    }
    let mut out = csv::Writer::from_writer(w);
    for (k, &t) in times.iter().enumerate() {
        out.serialize(Row {
            t_us: t,
            sx_mean: trace.mean[k],
            sx_stderr: trace.stderr[k],
        })?;
    }
    out.flush()?;
    Ok(())
}

/// Worker count from `PAIRLOC_WORKERS`, if set.
pub fn workers_from_env() -> Result<Option<usize>> {
    match std::env::var(WORKERS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .map(Some)
            .ok_or_else(|| {
                Error::config(
                    WORKERS_ENV,
                    format!("expected a positive integer, got `{v}`"),
                )
            }),
        Err(_) => Ok(None),
    }
}

pub const WORKERS_ENV: &str = "PAIRLOC_WORKERS";

/// Thread pool for a run; `None` uses all cores.
pub fn worker_pool(workers: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers {
        b = b.num_threads(n);
    }
    b.build()
        .map_err(|e| Error::InvalidArgument(format!("cannot start worker pool: {e}")))
}
