//! Discrete truncated Wigner approximation.
//!
//! Each trajectory starts from a discrete phase-space sample of `|->_x^N`
//! (`s_x = 1/2`, `s_y`, `s_z` uniform on `{-1/2, 1/2}`) and follows the
//! classical equations
//!
//! ```text
//! ds_i/dt = 2 pi B_i x s_i,   B_i = (Omega + sum_j J_ij s_j^x, sum_j J_ij s_j^y, delta sum_j J_ij s_j^z)
//! ```
//!
//! Trajectories are integrated in fixed batches that share one adaptive
//! Dormand-Prince 5(4) step, so the local fields of a whole batch are a
//! single matrix product. Batch composition depends only on the trajectory
//! index, which keeps results independent of the worker count.

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::couplings::CouplingMatrix;
use crate::error::{Error, Result};
use crate::rng::stream_rng;
use crate::stats::NeumaierSum;

const TAU: f64 = std::f64::consts::TAU;

/// Classical spin vectors, one `[s_x, s_y, s_z]` per spin.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassicalSpinConfig {
    spins: Vec<[f64; 3]>,
}

impl ClassicalSpinConfig {
    pub fn new(spins: Vec<[f64; 3]>) -> Result<Self> {
        if spins.is_empty() {
            return Err(Error::TooFewSpins { needed: 1, got: 0 });
        }
        if spins.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "spin components must be finite".into(),
            ));
        }
        Ok(Self { spins })
    }

    pub fn n(&self) -> usize {
        self.spins.len()
    }

    pub fn spins(&self) -> &[[f64; 3]] {
        &self.spins
    }

    pub fn sx_mean(&self) -> f64 {
        let mut acc = NeumaierSum::new();
        for s in &self.spins {
            acc.add(s[0]);
        }
        acc.value() / self.n() as f64
    }

    pub fn total(&self, component: usize) -> f64 {
        let mut acc = NeumaierSum::new();
        for s in &self.spins {
            acc.add(s[component]);
        }
        acc.value()
    }

    pub fn norms(&self) -> Vec<f64> {
        self.spins
            .iter()
            .map(|s| (s[0] * s[0] + s[1] * s[1] + s[2] * s[2]).sqrt())
            .collect()
    }
}

/// Initial sample number `index` of the family rooted at `seed`.
pub fn sample_trajectory_spins(n: usize, seed: u64, index: u64) -> Result<ClassicalSpinConfig> {
    if n == 0 {
        return Err(Error::TooFewSpins { needed: 1, got: 0 });
    }
    let mut rng = stream_rng(seed, index);
    let mut half = || if rng.random::<bool>() { 0.5 } else { -0.5 };
    let spins = (0..n).map(|_| [0.5, half(), half()]).collect();
    Ok(ClassicalSpinConfig { spins })
}

pub fn sample_initial_spins(n: usize, seed: u64) -> Result<ClassicalSpinConfig> {
    sample_trajectory_spins(n, seed, 0)
}

/// `E = sum_{i<j} J_ij (sx sx + sy sy + delta sz sz) + Omega sum_i sx` in MHz.
pub fn classical_energy(
    couplings: &CouplingMatrix,
    omega: f64,
    config: &ClassicalSpinConfig,
) -> f64 {
    let s = config.spins();
    let delta = couplings.delta();
    let mut acc = NeumaierSum::new();
    for i in 0..s.len() {
        acc.add(omega * s[i][0]);
        for j in (i + 1)..s.len() {
            let jij = couplings.get(i, j);
            if jij != 0.0 {
                acc.add(jij * (s[i][0] * s[j][0] + s[i][1] * s[j][1] + delta * s[i][2] * s[j][2]));
            }
        }
    }
    acc.value()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DtwaSettings {
    /// Relative tolerance of the embedded error estimate.
    pub rtol: f64,
    /// Absolute tolerance on spin components.
    pub atol: f64,
    /// Trajectories advanced together with one shared step.
    pub batch: usize,
    pub max_steps: usize,
}

impl Default for DtwaSettings {
    fn default() -> Self {
        Self {
            rtol: 1e-8,
            atol: 1e-10,
            batch: 64,
            max_steps: 10_000_000,
        }
    }
}

impl DtwaSettings {
    pub fn with_rtol(rtol: f64) -> Self {
        Self {
            rtol,
            atol: rtol * 1e-2,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rtol > 0.0 && self.atol > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "tolerances must be positive (rtol = {}, atol = {})",
                self.rtol, self.atol
            )));
        }
        if self.batch == 0 {
            return Err(Error::InvalidArgument(
                "batch size must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

fn check_times(times: &[f64]) -> Result<()> {
    if times.is_empty() {
        return Err(Error::InvalidArgument("time grid is empty".into()));
    }
    if times[0] < 0.0 || times.iter().any(|t| !t.is_finite()) {
        return Err(Error::InvalidArgument(
            "times must be finite and nonnegative".into(),
        ));
    }
    if times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidArgument("times must be sorted".into()));
    }
    Ok(())
}

// Dormand-Prince 5(4): stage matrix and 5th minus 4th order weights
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Spin states of `b` trajectories stored as an `N x 3b` matrix with column
/// blocks `[x | y | z]`, so `J * Y` gives all local fields at once.
struct Batch<'a> {
    j: &'a DMatrix<f64>,
    omega: f64,
    delta: f64,
    n: usize,
    b: usize,
    field: DMatrix<f64>,
}

impl Batch<'_> {
    fn rhs(&mut self, y: &DMatrix<f64>, dy: &mut DMatrix<f64>) {
        let (n, b) = (self.n, self.b);
        let cols = if self.delta == 0.0 { 2 * b } else { 3 * b };
        self.field
            .columns_mut(0, cols)
            .gemm(1.0, self.j, &y.columns(0, cols), 0.0);
        let f = self.field.as_slice();
        let ys = y.as_slice();
        let d = dy.as_mut_slice();
        let (xo, yo, zo) = (0, b * n, 2 * b * n);
        for idx in 0..b * n {
            let (sx, sy, sz) = (ys[xo + idx], ys[yo + idx], ys[zo + idx]);
            let bx = self.omega + f[xo + idx];
            let by = f[yo + idx];
            let bz = if self.delta == 0.0 {
                0.0
            } else {
                self.delta * f[zo + idx]
            };
            d[xo + idx] = TAU * (by * sz - bz * sy);
            d[yo + idx] = TAU * (bz * sx - bx * sz);
            d[zo + idx] = TAU * (bx * sy - by * sx);
        }
    }
}

/// Integrate a batch of initial configurations, calling `record(k, y)` at each
/// output time `times[k]`.
fn integrate_batch(
    couplings: &CouplingMatrix,
    omega: f64,
    init: &[ClassicalSpinConfig],
    times: &[f64],
    settings: &DtwaSettings,
    mut record: impl FnMut(usize, &DMatrix<f64>),
) -> Result<()> {
    let n = couplings.n();
    let b = init.len();
    let mut y = DMatrix::zeros(n, 3 * b);
    for (t, cfg) in init.iter().enumerate() {
        for (i, s) in cfg.spins().iter().enumerate() {
            for c in 0..3 {
                y[(i, c * b + t)] = s[c];
            }
        }
    }
    let mut sys = Batch {
        j: couplings.as_matrix(),
        omega,
        delta: couplings.delta(),
        n,
        b,
        field: DMatrix::zeros(n, 3 * b),
    };
    let mut k: Vec<DMatrix<f64>> = (0..7).map(|_| DMatrix::zeros(n, 3 * b)).collect();
    let mut ytmp = DMatrix::zeros(n, 3 * b);

    let scale = couplings
        .as_matrix()
        .row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
        + omega.abs();
    let mut h = if scale > 0.0 {
        0.05 / (TAU * scale)
    } else {
        1.0
    };
    let mut t = 0.0;
    let mut next = 0;
    while next < times.len() && times[next] <= t {
        record(next, &y);
        next += 1;
    }
    sys.rhs(&y, &mut k[0]);
    let mut steps = 0usize;
    let len = n * 3 * b;
    let mut err_acc = vec![0.0f64; b];
    while next < times.len() {
        let target = times[next];
        let clipped = t + h >= target;
        let step = if clipped { target - t } else { h };
        for s in 1..7 {
            {
                let yt = ytmp.as_mut_slice();
                let ys = y.as_slice();
                yt.copy_from_slice(ys);
                for (jj, &a) in A[s].iter().enumerate().take(s) {
                    if a != 0.0 {
                        let kj = k[jj].as_slice();
                        let ha = step * a;
                        for idx in 0..len {
                            yt[idx] += ha * kj[idx];
                        }
                    }
                }
            }
            sys.rhs(&ytmp, &mut k[s]);
        }
        // ytmp now holds the 5th-order solution (stage 7 point); k[6] its slope
        err_acc.fill(0.0);
        {
            let ys = y.as_slice();
            let yn = ytmp.as_slice();
            for idx in 0..len {
                let mut e = 0.0;
                for (s, &es) in E.iter().enumerate() {
                    if es != 0.0 {
                        e += es * k[s].as_slice()[idx];
                    }
                }
                e *= step;
                let sc = settings.atol + settings.rtol * ys[idx].abs().max(yn[idx].abs());
                let traj = (idx / n) % b;
                err_acc[traj] += (e / sc) * (e / sc);
            }
        }
        let err = err_acc
            .iter()
            .map(|v| (v / (3 * n) as f64).sqrt())
            .fold(0.0, f64::max);
        steps += 1;
        if steps > settings.max_steps {
            return Err(Error::StepUnderflow { time: t, step });
        }
        if err <= 1.0 {
            t = if clipped { target } else { t + step };
            std::mem::swap(&mut y, &mut ytmp);
            k.swap(0, 6);
            if clipped {
                while next < times.len() && times[next] <= t {
                    record(next, &y);
                    next += 1;
                }
            }
            let grow = if err == 0.0 {
                5.0
            } else {
                (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
            };
            if !clipped || step >= h {
                h *= grow;
            }
        } else {
            let shrink = if err.is_finite() {
                (0.9 * err.powf(-0.2)).clamp(0.1, 0.9)
            } else {
                0.1
            };
            h = step * shrink;
        }
        if h < 1e-14 * t.max(1.0) {
            return Err(Error::StepUnderflow { time: t, step: h });
        }
    }
    Ok(())
}

/// Classical trajectory of one configuration, sampled at `times`.
pub fn evolve_trajectory(
    couplings: &CouplingMatrix,
    omega: f64,
    s0: &ClassicalSpinConfig,
    times: &[f64],
    tol: f64,
) -> Result<Vec<ClassicalSpinConfig>> {
    if s0.n() != couplings.n() {
        return Err(Error::InvalidArgument(format!(
            "{} spins for a {}-spin coupling matrix",
            s0.n(),
            couplings.n()
        )));
    }
    check_times(times)?;
    let settings = DtwaSettings::with_rtol(tol);
    settings.validate()?;
    let n = s0.n();
    let mut out = vec![None; times.len()];
    integrate_batch(
        couplings,
        omega,
        std::slice::from_ref(s0),
        times,
        &settings,
        |k, y| {
            let spins = (0..n).map(|i| [y[(i, 0)], y[(i, 1)], y[(i, 2)]]).collect();
            out[k] = Some(ClassicalSpinConfig { spins });
        },
    )?;
    Ok(out
        .into_iter()
        .map(|c| c.expect("every output time recorded"))
        .collect())
}

/// Trajectory-averaged magnetization trace.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryBatch {
    pub n_traj: usize,
    pub seed: u64,
    pub times: Vec<f64>,
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
}

impl TrajectoryBatch {
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["t_us", "sx_mean", "sx_stderr", "n_traj"])?;
        for k in 0..self.times.len() {
            out.write_record([
                self.times[k].to_string(),
                self.mean[k].to_string(),
                self.stderr[k].to_string(),
                self.n_traj.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Mean `<S_x>(t)` over `n_traj` DTWA trajectories. Trajectory `k` starts
/// from [`sample_trajectory_spins`]`(N, seed, k)`.
pub fn dtwa_magnetization(
    couplings: &CouplingMatrix,
    omega: f64,
    n_traj: usize,
    times: &[f64],
    seed: u64,
    settings: &DtwaSettings,
) -> Result<TrajectoryBatch> {
    if n_traj < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 trajectories, got {n_traj}"
        )));
    }
    check_times(times)?;
    settings.validate()?;
    let n = couplings.n();
    let nt = times.len();
    let starts: Vec<usize> = (0..n_traj).step_by(settings.batch).collect();
    let per_batch: Vec<Vec<f64>> = starts
        .par_iter()
        .map(|&first| {
            let last = (first + settings.batch).min(n_traj);
            let b = last - first;
            let init = (first..last)
                .map(|k| sample_trajectory_spins(n, seed, k as u64))
                .collect::<Result<Vec<_>>>()?;
            // row-major [traj][time]
            let mut sx = vec![0.0; b * nt];
            integrate_batch(couplings, omega, &init, times, settings, |k, y| {
                for t in 0..b {
                    let mut acc = NeumaierSum::new();
                    for v in y.column(t).iter() {
                        acc.add(*v);
                    }
                    sx[t * nt + k] = acc.value() / n as f64;
                }
            })
            .map_err(|e| Error::Trajectory {
                index: first,
                source: Box::new(e),
            })?;
            Ok(sx)
        })
        .collect::<Result<_>>()?;
    let all: Vec<f64> = per_batch.into_iter().flatten().collect();
    let mut mean = Vec::with_capacity(nt);
    let mut stderr = Vec::with_capacity(nt);
    let mut column = vec![0.0; n_traj];
    for k in 0..nt {
        for (t, c) in column.iter_mut().enumerate() {
            *c = all[t * nt + k];
        }
        let (m, e) = crate::stats::mean_stderr(&column);
        mean.push(m);
        stderr.push(e);
    }
    Ok(TrajectoryBatch {
        n_traj,
        seed,
        times: times.to_vec(),
        mean,
        stderr,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single() -> CouplingMatrix {
        CouplingMatrix::from_matrix(DMatrix::zeros(1, 1), 0.0).unwrap()
    }

    #[test]
    fn sampling_is_discrete_and_x_polarized() {
        let c = sample_initial_spins(200, 3).unwrap();
        assert!(c
            .spins()
            .iter()
            .all(|s| s[0] == 0.5 && s[1].abs() == 0.5 && s[2].abs() == 0.5));
        assert_eq!(c, sample_initial_spins(200, 3).unwrap());
        assert_ne!(c, sample_trajectory_spins(200, 3, 1).unwrap());
    }

    #[test]
    fn larmor_precession() {
        let w = 0.7;
        let c = single();
        let s0 = ClassicalSpinConfig::new(vec![[0.0, 0.5, 0.0]]).unwrap();
        let times: Vec<f64> = (0..=20).map(|k| 0.1 * k as f64).collect();
        let tr = evolve_trajectory(&c, w, &s0, &times, 1e-10).unwrap();
        for (t, s) in times.iter().zip(&tr) {
            let ph = TAU * w * t;
            assert!((s.spins()[0][1] - 0.5 * ph.cos()).abs() < 1e-8);
            assert!((s.spins()[0][2] - 0.5 * ph.sin()).abs() < 1e-8);
        }
    }

    #[test]
    fn aligned_spin_is_stationary() {
        let c = single();
        let s0 = ClassicalSpinConfig::new(vec![[0.5, 0.0, 0.0]]).unwrap();
        let tr = evolve_trajectory(&c, 1.3, &s0, &[0.0, 1.0, 5.0], 1e-8).unwrap();
        assert!(tr.iter().all(|s| s.spins()[0] == [0.5, 0.0, 0.0]));
    }

    #[test]
    fn batch_starts_at_one_half() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let c = CouplingMatrix::from_matrix(m, 0.0).unwrap();
        let r = dtwa_magnetization(&c, 0.0, 10, &[0.0, 0.5], 1, &DtwaSettings::default()).unwrap();
        assert_eq!(r.mean[0], 0.5);
        assert_eq!(r.stderr[0], 0.0);
        assert!(dtwa_magnetization(&c, 0.0, 1, &[0.0], 1, &DtwaSettings::default()).is_err());
    }
}
