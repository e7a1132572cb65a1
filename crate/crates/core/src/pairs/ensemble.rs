//! Ensemble predictions for the late-time magnetization of a pair decomposition.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::decomposition::PairDecomposition;
use super::spectrum::{canonical_pair_sx, pair_diagonal_sx};
use crate::error::{Error, Result};
use crate::stats::NeumaierSum;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnsembleKind {
    /// Independent pairs, each in its own diagonal ensemble.
    Diagonal,
    /// Per-pair diagonal ensemble with self-consistent mean fields.
    #[serde(rename = "gge-meanfield")]
    GgeMeanField,
    /// One global temperature fixed by total energy, with mean fields.
    CanonicalGlobal,
}

impl EnsembleKind {
    pub fn name(&self) -> &'static str {
        match self {
            EnsembleKind::Diagonal => "diagonal",
            EnsembleKind::GgeMeanField => "gge-meanfield",
            EnsembleKind::CanonicalGlobal => "canonical-global",
        }
    }
}

impl std::fmt::Display for EnsembleKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for EnsembleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "diagonal" => Ok(Self::Diagonal),
            "gge-meanfield" => Ok(Self::GgeMeanField),
            "canonical-global" => Ok(Self::CanonicalGlobal),
            other => Err(Error::InvalidArgument(format!(
                "unknown ensemble '{other}' (expected diagonal, gge-meanfield or canonical-global)"
            ))),
        }
    }
}

/// Damped fixed-point iteration `m <- (1 - a) m + a F(m)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MeanFieldSettings {
    pub tolerance: f64,
    pub damping: f64,
    pub max_iterations: usize,
}

impl Default for MeanFieldSettings {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            damping: 0.5,
            max_iterations: 10_000,
        }
    }
}

impl MeanFieldSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "tolerance must be positive, got {}",
                self.tolerance
            )));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "damping must lie in (0, 1], got {}",
                self.damping
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidArgument(
                "max_iterations must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeanFieldSolution {
    /// Per-unit `<s_x>`.
    pub magnetizations: Vec<f64>,
    /// Effective fields `Omega + sum_q J_pq m_q` in MHz.
    pub fields: Vec<f64>,
    /// Max-norm of `F(m) - m` at the returned `m`.
    pub residual: f64,
    pub iterations: usize,
    /// Global inverse temperature (1/MHz), canonical solutions only.
    pub beta: Option<f64>,
    /// Spin-weighted mean magnetization.
    pub mean: f64,
}

fn weighted_mean(pairs: &PairDecomposition, m: &[f64]) -> f64 {
    let mut num = NeumaierSum::new();
    let mut den = 0usize;
    for (u, v) in pairs.units().iter().zip(m) {
        num.add(u.size() as f64 * v);
        den += u.size();
    }
    num.value() / den as f64
}

fn effective_fields(pairs: &PairDecomposition, omega: f64, m: &DVector<f64>) -> DVector<f64> {
    let mut h = pairs.inter() * m;
    h.add_scalar_mut(omega);
    h
}

/// Independent pairs: weighted mean of the single-pair diagonal values.
pub fn diagonal_magnetization(pairs: &PairDecomposition, omega: f64) -> f64 {
    let m: Vec<f64> = pairs
        .j()
        .iter()
        .map(|&j| pair_diagonal_sx(j, omega))
        .collect();
    weighted_mean(pairs, &m)
}

/// Root in `beta` of `sum_p -(tanh(s_p beta) / s_p) c_p = target`.
///
/// The function is scanned outward from zero on a geometric grid, the side
/// where the root is expected (sign opposite to `target`) first, and the
/// first bracket found is bisected.
fn balance_root(s: &[f64], c: &[f64], target: f64) -> Result<f64> {
    let f = |beta: f64| {
        let mut acc = NeumaierSum::new();
        for (&sp, &cp) in s.iter().zip(c) {
            if sp > 0.0 {
                acc.add(-(sp * beta).tanh() / sp * cp);
            }
        }
        acc.add(-target);
        acc.value()
    };
    let f0 = f(0.0);
    let smax = s.iter().cloned().fold(0.0, f64::max);
    let smin = s
        .iter()
        .cloned()
        .filter(|&v| v > 0.0)
        .fold(f64::INFINITY, f64::min);
    if smax == 0.0 {
        return Err(Error::NoRoot {
            lo: f64::NEG_INFINITY,
            hi: f64::INFINITY,
            f_lo: f0,
            f_hi: f0,
        });
    }
    if f0 == 0.0 {
        return Ok(0.0);
    }
    let first = if target > 0.0 { -1.0 } else { 1.0 };
    let stop = 50.0 / smin;
    let mut prev = 0.0;
    let mut fprev = [f0, f0];
    let mut b = 1e-3 / smax;
    loop {
        let b_now = b.min(stop);
        for (k, side) in [first, -first].into_iter().enumerate() {
            let fb = f(side * b_now);
            if fb == 0.0 {
                return Ok(side * b_now);
            }
            if fb.signum() != fprev[k].signum() {
                let (lo, hi) = if side > 0.0 {
                    (prev, b_now)
                } else {
                    (-b_now, -prev)
                };
                return Ok(bisect(&f, lo, hi));
            }
            fprev[k] = fb;
        }
        if b_now >= stop {
            let (lo, hi) = (-stop, stop);
            return Err(Error::NoRoot {
                lo,
                hi,
                f_lo: f(lo),
                f_hi: f(hi),
            });
        }
        prev = b_now;
        b *= 1.5;
    }
}

fn bisect(f: &impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let mut flo = f(lo);
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi || (hi - lo).abs() <= 1e-10 * mid.abs() {
            return mid;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return mid;
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Global `beta` (1/MHz) for independent pairs in field `h_p`, from
/// `sum_p s_p tanh(s_p beta) = -sum_p h_p`.
///
/// When every pair is a free spin (`j_p = 0`) and all fields share a sign,
/// the initial state is an extremal eigenstate and `beta = -+inf` is returned.
pub fn solve_beta_for_fields(j: &[f64], h: &[f64]) -> Result<f64> {
    let s: Vec<f64> = j.iter().zip(h).map(|(j, h)| h.hypot(*j)).collect();
    let target: f64 = h.iter().sum();
    if j.iter().all(|&v| v == 0.0) {
        if h.iter().all(|&v| v > 0.0) {
            return Ok(f64::NEG_INFINITY);
        }
        if h.iter().all(|&v| v < 0.0) {
            return Ok(f64::INFINITY);
        }
    }
    let c: Vec<f64> = s.iter().map(|v| v * v).collect();
    balance_root(&s, &c, target)
}

/// Global canonical `beta` for the bare pairs (no mean fields) in field `omega`.
pub fn solve_global_beta(pairs: &PairDecomposition, omega: f64) -> Result<f64> {
    let h = vec![omega; pairs.len()];
    solve_beta_for_fields(pairs.j(), &h)
}

/// Response of a single unit to its effective field: `(m(j, h), dm/dh)`.
type UnitMap<'a> = dyn Fn(f64, f64) -> (f64, f64) + Sync + 'a;

/// Diagonal-ensemble response `h^2 / (2 (h^2 + j^2))` and its slope
/// `h j^2 / (h^2 + j^2)^2`.
fn diagonal_response(j: f64, h: f64) -> (f64, f64) {
    let s2 = h * h + j * j;
    let slope = if s2 == 0.0 { 0.0 } else { h * j * j / (s2 * s2) };
    (pair_diagonal_sx(j, h), slope)
}

/// Canonical response at inverse temperature `beta` and its slope
/// `-(j^2 / (2 s^3)) T - (h^2 beta / (2 s^2)) (1 - T^2)`, `T = tanh(s beta)`.
fn canonical_response(j: f64, h: f64, beta: f64) -> (f64, f64) {
    let s = h.hypot(j);
    if s == 0.0 {
        return (0.0, -0.5 * beta);
    }
    let t = (s * beta).tanh();
    let slope = -(j * j) / (2.0 * s * s * s) * t - h * h * beta / (2.0 * s * s) * (1.0 - t * t);
    (canonical_pair_sx(j, h, beta), slope)
}

/// Mean-field problem `m_p = map(j_p, Omega + sum_q J_pq m_q)`.
struct FixedPoint<'a> {
    inter: &'a DMatrix<f64>,
    j: &'a [f64],
    omega: f64,
    map: &'a UnitMap<'a>,
}

impl FixedPoint<'_> {
    fn len(&self) -> usize {
        self.j.len()
    }

    fn fields(&self, m: &DVector<f64>, lambda: f64) -> DVector<f64> {
        let mut h = self.inter * m * lambda;
        h.add_scalar_mut(self.omega);
        h
    }

    /// `F(m)` and the slopes at the fields `h`.
    fn apply(&self, h: &DVector<f64>) -> (DVector<f64>, Vec<f64>) {
        let (v, d): (Vec<f64>, Vec<f64>) = h
            .iter()
            .zip(self.j)
            .map(|(&h, &j)| (self.map)(j, h))
            .unzip();
        (DVector::from_vec(v), d)
    }

    fn decoupled(&self) -> DVector<f64> {
        DVector::from_iterator(self.len(), self.j.iter().map(|&j| (self.map)(j, self.omega).0))
    }

    /// Damped iteration from `start`; when that stalls, continuation from the
    /// decoupled solution and finally Newton from the best damped iterate.
    fn solve(
        &self,
        start: DVector<f64>,
        settings: &MeanFieldSettings,
    ) -> std::result::Result<(DVector<f64>, f64, usize), f64> {
        let a = settings.damping;
        let mut m = start;
        let mut best = (f64::INFINITY, m.clone());
        let mut last_gain = 0;
        for it in 0..settings.max_iterations {
            let (fm, _) = self.apply(&self.fields(&m, 1.0));
            let residual = (&fm - &m).amax();
            if residual < settings.tolerance {
                return Ok((m, residual, it));
            }
            if residual < best.0 {
                if residual < STALL_GAIN * best.0 {
                    last_gain = it;
                }
                best = (residual, m.clone());
            } else if it - last_gain > STALL_ITERATIONS {
                break;
            }
            m = m * (1.0 - a) + fm * a;
        }
        // Damping cannot tame unstable directions (Jacobian eigenvalues above
        // 1), which appear when near-resonant pairs make m_p(h_p) steep.
        let tol = settings.tolerance;
        self.continuation(tol)
            .or_else(|| self.newton(best.1.clone(), tol, NEWTON_ITERATIONS))
            .map(|(m, r, k)| (m, r, settings.max_iterations + k))
            .ok_or(best.0)
    }

    /// Newton iteration on `F(m) - m = 0` with a backtracking line search on
    /// the residual norm.
    fn newton(
        &self,
        start: DVector<f64>,
        tolerance: f64,
        max_steps: usize,
    ) -> Option<(DVector<f64>, f64, usize)> {
        let eval = |m: &DVector<f64>| {
            let (fm, slope) = self.apply(&self.fields(m, 1.0));
            (fm - m, slope)
        };
        let mut m = start;
        let (mut g, mut slope) = eval(&m);
        for step in 0..max_steps {
            let r = g.amax();
            if !r.is_finite() {
                return None;
            }
            if r < tolerance {
                return Some((m, r, step));
            }
            let mut jac = self.inter.clone();
            for (mut row, d) in jac.row_iter_mut().zip(&slope) {
                row *= *d;
            }
            for p in 0..m.len() {
                jac[(p, p)] -= 1.0;
            }
            let dm = jac.lu().solve(&(-&g))?;
            let norm = g.norm();
            let mut t = 1.0;
            loop {
                let trial = &m + &dm * t;
                let (gt, st) = eval(&trial);
                if gt.norm() <= (1.0 - 1e-4 * t) * norm {
                    m = trial;
                    g = gt;
                    slope = st;
                    break;
                }
                t *= 0.5;
                if t < 1e-10 {
                    return None;
                }
            }
        }
        let r = g.amax();
        (r < tolerance).then_some((m, r, max_steps))
    }

    /// Residual `G = F(m) - m` with couplings `lambda J_pq` and its Jacobian
    /// columns `[dG/dm | dG/dlambda]`.
    fn homotopy(&self, m: &DVector<f64>, lambda: f64) -> (DVector<f64>, DMatrix<f64>) {
        let p = m.len();
        let coupled = self.inter * m;
        let h = &coupled * lambda + DVector::repeat(p, self.omega);
        let (fm, slope) = self.apply(&h);
        let mut jac = DMatrix::zeros(p, p + 1);
        for r in 0..p {
            for c in 0..p {
                jac[(r, c)] = slope[r] * lambda * self.inter[(r, c)];
            }
            jac[(r, r)] -= 1.0;
            jac[(r, p)] = slope[r] * coupled[r];
        }
        (fm - m, jac)
    }

    /// Pseudo-arclength continuation of the fixed point from the decoupled
    /// solution (`lambda = 0`) to the full couplings (`lambda = 1`),
    /// following the branch through folds.
    fn continuation(&self, tolerance: f64) -> Option<(DVector<f64>, f64, usize)> {
        let p = self.len();
        let mut x = DVector::from_iterator(p + 1, self.decoupled().iter().copied().chain([0.0]));
        let mut tangent = DVector::zeros(p + 1);
        tangent[p] = 1.0;
        let mut last = x.clone();
        let mut ds = 0.05;
        let mut steps = 0;
        let bordered = |jac: &DMatrix<f64>, row: &DVector<f64>| {
            let mut a = DMatrix::zeros(p + 1, p + 1);
            a.view_mut((0, 0), (p, p + 1)).copy_from(jac);
            a.row_mut(p).copy_from(&row.transpose());
            a
        };
        while steps < MAX_ARC_STEPS {
            // tangent: [G_m G_l] t = 0, oriented along the previous one
            let (_, jac) = self.homotopy(&x.rows(0, p).into(), x[p]);
            let mut rhs = DVector::zeros(p + 1);
            rhs[p] = 1.0;
            let mut t = bordered(&jac, &tangent).lu().solve(&rhs)?;
            t /= t.norm();
            let turn = t.dot(&tangent);
            let previous = std::mem::replace(&mut tangent, t);
            if steps > 0 && turn < MIN_TANGENT_COSINE {
                // the last step cut a corner; take it again, shorter
                tangent = previous;
                x = last.clone();
                ds *= 0.5;
                if ds < MIN_ARC_STEP {
                    return None;
                }
                continue;
            }

            // close enough to the end: land on lambda = 1 with a fixed-lambda solve
            if tangent[p] > 0.0 && x[p] + ds * tangent[p] >= 1.0 {
                let reach = (1.0 - x[p]) / tangent[p];
                let start = x.rows(0, p) + tangent.rows(0, p) * reach;
                if let Some((m, r, k)) = self.newton(start, tolerance, NEWTON_ITERATIONS) {
                    return Some((m, r, steps + k));
                }
                ds = 0.5 * reach;
                if ds < MIN_ARC_STEP {
                    return None;
                }
            }

            let predicted = &x + &tangent * ds;
            let mut y = predicted.clone();
            let mut converged = false;
            for _ in 0..CORRECTOR_STEPS {
                let (g, jac) = self.homotopy(&y.rows(0, p).into(), y[p]);
                if g.amax() < CORRECTOR_TOLERANCE {
                    converged = true;
                    break;
                }
                let mut f = DVector::zeros(p + 1);
                f.rows_mut(0, p).copy_from(&g);
                f[p] = tangent.dot(&(&y - &predicted));
                let Some(dy) = bordered(&jac, &tangent).lu().solve(&(-f)) else {
                    break;
                };
                y += dy;
            }
            if !converged || (&y - &predicted).norm() > 0.5 * ds {
                ds *= 0.5;
                if ds < MIN_ARC_STEP {
                    return None;
                }
                continue;
            }
            steps += 1;
            last = std::mem::replace(&mut x, y);
            ds = (ds * 1.5).min(MAX_ARC_STEP);
        }
        None
    }
}

const NEWTON_ITERATIONS: usize = 100;
/// The damped iteration is abandoned once its best residual has not dropped
/// by `STALL_GAIN` within this many iterations.
const STALL_ITERATIONS: usize = 500;
const STALL_GAIN: f64 = 0.9;
const MAX_ARC_STEPS: usize = 5000;
const CORRECTOR_STEPS: usize = 8;
const CORRECTOR_TOLERANCE: f64 = 1e-9;
const MIN_ARC_STEP: f64 = 1e-9;
const MAX_ARC_STEP: f64 = 0.1;
const MIN_TANGENT_COSINE: f64 = 0.85;

fn mean_field_solution(
    pairs: &PairDecomposition,
    omega: f64,
    m: DVector<f64>,
    residual: f64,
    iterations: usize,
    beta: Option<f64>,
) -> MeanFieldSolution {
    let h = effective_fields(pairs, omega, &m);
    let mv: Vec<f64> = m.iter().copied().collect();
    MeanFieldSolution {
        mean: weighted_mean(pairs, &mv),
        magnetizations: mv,
        fields: h.iter().copied().collect(),
        residual,
        iterations,
        beta,
    }
}

/// Self-consistent per-pair diagonal ensemble:
/// `m_p = h_p^2 / (2 (h_p^2 + j_p^2))`, `h_p = Omega + sum_q J_pq m_q`,
/// started from the decoupled solution.
pub fn solve_mean_field(
    pairs: &PairDecomposition,
    omega: f64,
    settings: &MeanFieldSettings,
) -> Result<MeanFieldSolution> {
    settings.validate()?;
    let problem = FixedPoint {
        inter: pairs.inter(),
        j: pairs.j(),
        omega,
        map: &diagonal_response,
    };
    match problem.solve(problem.decoupled(), settings) {
        Ok((m, r, it)) => Ok(mean_field_solution(pairs, omega, m, r, it, None)),
        Err(residual) => Err(Error::NotConverged {
            iterations: settings.max_iterations,
            residual,
        }),
    }
}

/// Canonical ensemble at one global `beta` with self-consistent mean fields.
///
/// Each unit sees the two-level problem `[[h, j], [j, -h]]` and holds
/// `m_p = -(h_p / 2 s_p) tanh(s_p beta)`, `h_p = Omega + sum_q J_pq m_q`.
/// `beta` is fixed by the mean-field energy
/// `sum_p (2 Omega m_p + j_p x_p) + sum_{p<q} 2 J_pq m_p m_q`, with
/// `x_p = -(j_p / s_p) tanh(s_p beta)`, matching its value in the initial
/// state, `P Omega + sum_{p<q} J_pq / 2`.
///
/// The fixed point is followed outward in `beta` from the paramagnet at
/// `beta = 0`, the side where the root is expected first, and the first
/// sign change of the energy balance is bisected.
pub fn solve_canonical_mean_field(
    pairs: &PairDecomposition,
    omega: f64,
    settings: &MeanFieldSettings,
) -> Result<MeanFieldSolution> {
    settings.validate()?;
    let j = pairs.j();
    let inter = pairs.inter();
    let p = j.len();
    let target = p as f64 * omega + inter.sum() / 4.0;
    if inter.iter().all(|&v| v == 0.0) {
        let beta = solve_beta_for_fields(j, &vec![omega; p])?;
        let m = DVector::from_iterator(p, j.iter().map(|&j| canonical_pair_sx(j, omega, beta)));
        return Ok(mean_field_solution(pairs, omega, m, 0.0, 0, Some(beta)));
    }
    if target == 0.0 {
        return Ok(mean_field_solution(pairs, omega, DVector::zeros(p), 0.0, 0, Some(0.0)));
    }

    let mut iterations = 0;
    // energy balance at `beta`, with the fixed point continued from `warm`
    let mut at = |beta: f64, warm: &DVector<f64>| -> Result<(f64, DVector<f64>, f64)> {
        let map = move |j: f64, h: f64| canonical_response(j, h, beta);
        let problem = FixedPoint {
            inter,
            j,
            omega,
            map: &map,
        };
        let (m, r, k) = match problem.newton(warm.clone(), settings.tolerance, NEWTON_ITERATIONS) {
            Some(found) => found,
            None => problem
                .solve(warm.clone(), settings)
                .map_err(|residual| Error::NotConverged {
                    iterations: settings.max_iterations,
                    residual,
                })?,
        };
        iterations += k;
        let h = problem.fields(&m, 1.0);
        let mut e = NeumaierSum::new();
        for ((&mp, &hp), &jp) in m.iter().zip(h.iter()).zip(j) {
            let s = hp.hypot(jp);
            let x = if s == 0.0 { 0.0 } else { -(jp / s) * (s * beta).tanh() };
            e.add(2.0 * omega * mp + jp * x);
        }
        e.add(m.dot(&(inter * &m)));
        e.add(-target);
        Ok((e.value(), m, r))
    };

    let spread = |w: f64| {
        (0..p)
            .map(|q| (w.abs() + inter.row(q).abs().sum() / 2.0).hypot(j[q]))
            .collect::<Vec<f64>>()
    };
    let smax = spread(omega).into_iter().fold(0.0, f64::max);
    let smin = j
        .iter()
        .map(|&j| omega.hypot(j))
        .filter(|&v| v > 0.0)
        .fold(f64::INFINITY, f64::min)
        .min(smax);
    let stop = 50.0 / smin;
    let first = if target > 0.0 { -1.0 } else { 1.0 };
    let zero = DVector::zeros(p);
    let f0 = -target;
    // per side: last beta, its balance, its fixed point, or None once lost
    let mut sides = [first, -first].map(|side| Some((side, 0.0, f0, zero.clone())));
    let mut b = 1e-3 / smax;
    loop {
        let b_now = b.min(stop);
        for slot in sides.iter_mut() {
            let Some((side, prev, fprev, warm)) = slot.take() else {
                continue;
            };
            let beta = side * b_now;
            let Ok((fb, m, r)) = at(beta, &warm) else {
                continue;
            };
            if fb == 0.0 {
                return Ok(mean_field_solution(pairs, omega, m, r, iterations, Some(beta)));
            }
            if fb.signum() != fprev.signum() {
                // bisect between `prev` (balance `fprev`, point `warm`) and `beta`
                let (mut lo, mut flo, mut mlo) = (prev, fprev, warm);
                let (mut hi, mut mhi, mut rhi) = (beta, m, r);
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if mid == lo || mid == hi || (hi - lo).abs() <= 1e-12 * mid.abs() {
                        break;
                    }
                    let (fm, mm, rm) = at(mid, &mlo)?;
                    if fm == 0.0 {
                        return Ok(mean_field_solution(pairs, omega, mm, rm, iterations, Some(mid)));
                    }
                    if fm.signum() == flo.signum() {
                        (lo, flo, mlo) = (mid, fm, mm);
                    } else {
                        (hi, mhi, rhi) = (mid, mm, rm);
                    }
                }
                return Ok(mean_field_solution(pairs, omega, mhi, rhi, iterations, Some(hi)));
            }
            *slot = Some((side, beta, fb, m));
        }
        if b_now >= stop || sides.iter().all(Option::is_none) {
            let balance = |side: f64| {
                sides
                    .iter()
                    .flatten()
                    .find(|s| s.0 == side)
                    .map_or(f64::NAN, |s| s.2)
            };
            return Err(Error::NoRoot {
                lo: -b_now,
                hi: b_now,
                f_lo: balance(-1.0),
                f_hi: balance(1.0),
            });
        }
        b *= 1.5;
    }
}

/// One grid point of an ensemble sweep. A failed solve keeps `NaN` in
/// `magnetization` and the reason in `error`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub omega: f64,
    pub magnetization: f64,
    pub beta: Option<f64>,
    pub residual: f64,
    pub iterations: usize,
    pub error: Option<String>,
}

impl SweepPoint {
    pub fn is_ok(&self) -> bool {
        self.error.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleCurve {
    pub kind: EnsembleKind,
    pub rescale: f64,
    /// Ordered by increasing `omega`.
    pub points: Vec<SweepPoint>,
}

impl EnsembleCurve {
    pub fn omegas(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.omega).collect()
    }

    pub fn magnetizations(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.magnetization).collect()
    }

    pub fn failures(&self) -> usize {
        self.points.iter().filter(|p| !p.is_ok()).count()
    }
}

const DAMPING_RETRIES: usize = 4;

fn solve_point(
    pairs: &PairDecomposition,
    omega: f64,
    kind: EnsembleKind,
    settings: &MeanFieldSettings,
) -> SweepPoint {
    if kind == EnsembleKind::Diagonal {
        return SweepPoint {
            omega,
            magnetization: diagonal_magnetization(pairs, omega),
            beta: None,
            residual: 0.0,
            iterations: 0,
            error: None,
        };
    }
    let mut s = *settings;
    let mut outcome = Err(Error::InvalidArgument("no attempt".into()));
    for _ in 0..=DAMPING_RETRIES {
        outcome = match kind {
            EnsembleKind::GgeMeanField => solve_mean_field(pairs, omega, &s),
            _ => solve_canonical_mean_field(pairs, omega, &s),
        };
        match &outcome {
            Err(Error::NotConverged { .. }) => s.damping *= 0.5,
            _ => break,
        }
    }
    match outcome {
        Ok(sol) => SweepPoint {
            omega,
            magnetization: sol.mean,
            beta: sol.beta,
            residual: sol.residual,
            iterations: sol.iterations,
            error: None,
        },
        Err(e) => SweepPoint {
            omega,
            magnetization: f64::NAN,
            beta: None,
            residual: match e {
                Error::NotConverged { residual, .. } => residual,
                _ => f64::NAN,
            },
            iterations: 0,
            error: Some(e.to_string()),
        },
    }
}

/// Mean magnetization over a field grid with all couplings scaled by
/// `rescale`. Grid points are solved in parallel; failures are flagged per
/// point rather than aborting the sweep.
pub fn ensemble_field_sweep(
    pairs: &PairDecomposition,
    omega_grid: &[f64],
    kind: EnsembleKind,
    rescale: f64,
    settings: &MeanFieldSettings,
) -> Result<EnsembleCurve> {
    settings.validate()?;
    if let Some(bad) = omega_grid.iter().find(|w| !w.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "non-finite field value {bad}"
        )));
    }
    let scaled = pairs.rescaled(rescale)?;
    let mut grid = omega_grid.to_vec();
    grid.sort_by(f64::total_cmp);
    let points = grid
        .par_iter()
        .map(|&w| solve_point(&scaled, w, kind, settings))
        .collect();
    Ok(EnsembleCurve {
        kind,
        rescale,
        points,
    })
}

/// Row of the pair-model sweep table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairSweepRow {
    pub omega_mhz: f64,
    pub m_gge: f64,
    pub m_canonical: f64,
    pub beta: f64,
    pub residual: f64,
    pub iterations: usize,
}

/// Join a GGE and a canonical curve computed on the same grid.
pub fn pair_sweep_rows(
    gge: &EnsembleCurve,
    canonical: &EnsembleCurve,
) -> Result<Vec<PairSweepRow>> {
    if gge.omegas() != canonical.omegas() {
        return Err(Error::InvalidArgument(
            "curves were computed on different grids".into(),
        ));
    }
    Ok(gge
        .points
        .iter()
        .zip(&canonical.points)
        .map(|(g, c)| PairSweepRow {
            omega_mhz: g.omega,
            m_gge: g.magnetization,
            m_canonical: c.magnetization,
            beta: c.beta.unwrap_or(f64::NAN),
            residual: g.residual.max(c.residual),
            iterations: g.iterations.max(c.iterations),
        })
        .collect())
}

pub fn write_pair_sweep_csv<W: std::io::Write>(rows: &[PairSweepRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}
