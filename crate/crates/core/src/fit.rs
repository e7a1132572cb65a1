//! Stretched-exponential relaxation fits,
//! `M(t) = M_inf + (1/2 - M_inf) exp(-(t / tau)^beta)`.

use nalgebra::{Matrix3, Vector3};
use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StretchedExpFit {
    pub m_inf: f64,
    /// Relaxation time in us.
    pub tau: f64,
    pub beta: f64,
    /// `sqrt(sum r_k^2)` of the residuals.
    pub residual_norm: f64,
    pub iterations: usize,
}

impl StretchedExpFit {
    pub fn eval(&self, t: f64) -> f64 {
        model(self.m_inf, self.tau, self.beta, t)
    }
}

pub const MIN_FIT_POINTS: usize = 8;
const MAX_ITERATIONS: usize = 1000;

fn model(m_inf: f64, tau: f64, beta: f64, t: f64) -> f64 {
    m_inf + (0.5 - m_inf) * (-(t / tau).powf(beta)).exp()
}

/// Internal parameters `[M_inf, ln tau, u]` with `beta = 2 / (1 + e^-u)`,
/// which keeps `tau > 0` and `beta` in `(0, 2)`.
#[derive(Debug, Clone, Copy)]
struct Params(Vector3<f64>);

impl Params {
    fn new(m_inf: f64, tau: f64, beta: f64) -> Self {
        let b = (beta / 2.0).clamp(1e-6, 1.0 - 1e-6);
        Self(Vector3::new(m_inf, tau.ln(), (b / (1.0 - b)).ln()))
    }

    fn m_inf(&self) -> f64 {
        self.0[0]
    }

    fn tau(&self) -> f64 {
        self.0[1].exp()
    }

    fn beta(&self) -> f64 {
        2.0 / (1.0 + (-self.0[2]).exp())
    }
}

fn residuals(p: &Params, t: &[f64], y: &[f64]) -> Vec<f64> {
    let (m, tau, b) = (p.m_inf(), p.tau(), p.beta());
    t.iter()
        .zip(y)
        .map(|(&t, &y)| model(m, tau, b, t) - y)
        .collect()
}

fn cost(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

/// Normal equations `J^T J` and `J^T r` with the analytic Jacobian.
fn normal_equations(p: &Params, t: &[f64], r: &[f64]) -> (Matrix3<f64>, Vector3<f64>) {
    let (m, tau, b) = (p.m_inf(), p.tau(), p.beta());
    let db_du = b * (1.0 - b / 2.0);
    let mut jtj = Matrix3::zeros();
    let mut jtr = Vector3::zeros();
    for (&t, &rk) in t.iter().zip(r) {
        let (x, lx) = if t > 0.0 {
            let l = (t / tau).ln();
            ((b * l).exp(), l)
        } else {
            (0.0, 0.0)
        };
        let e = (-x).exp();
        let g = Vector3::new(
            1.0 - e,
            (0.5 - m) * e * b * x,
            -(0.5 - m) * e * x * lx * db_du,
        );
        jtj += g * g.transpose();
        jtr += g * rk;
    }
    (jtj, jtr)
}

/// Levenberg-Marquardt from one starting point.
fn levenberg_marquardt(start: Params, t: &[f64], y: &[f64]) -> (Params, f64, usize, bool) {
    let mut p = start;
    let mut r = residuals(&p, t, y);
    let mut c = cost(&r);
    let mut lambda = 1e-3;
    for it in 1..=MAX_ITERATIONS {
        let (jtj, jtr) = normal_equations(&p, t, &r);
        let mut accepted = false;
        while lambda < 1e12 {
            let mut a = jtj;
            for k in 0..3 {
                a[(k, k)] += lambda * jtj[(k, k)].max(1e-12);
            }
            let Some(step) = a.lu().solve(&(-jtr)) else {
                lambda *= 10.0;
                continue;
            };
            let trial = Params(p.0 + step);
            let rt = residuals(&trial, t, y);
            let ct = cost(&rt);
            if ct.is_finite() && ct <= c {
                let small =
                    step.amax() < 1e-12 * (1.0 + p.0.amax()) || (c - ct) <= 1e-15 * c.max(1e-300);
                p = trial;
                r = rt;
                c = ct;
                lambda = (lambda / 10.0).max(1e-12);
                accepted = true;
                if small {
                    return (p, c, it, true);
                }
                break;
            }
            lambda *= 10.0;
        }
        if !accepted {
            // no downhill step at any damping: stationary point
            return (p, c, it, true);
        }
    }
    (p, c, MAX_ITERATIONS, false)
}

/// Least-squares fit of the stretched exponential. Starting values come from
/// the late-time plateau and the 1/e crossing; several initial stretch
/// exponents are tried and the lowest residual kept.
pub fn fit_stretched_exponential(times: &[f64], values: &[f64]) -> Result<StretchedExpFit> {
    if times.len() != values.len() {
        return Err(Error::InvalidArgument(format!(
            "{} times but {} values",
            times.len(),
            values.len()
        )));
    }
    if times.len() < MIN_FIT_POINTS {
        return Err(Error::DegenerateFit(format!(
            "need at least {MIN_FIT_POINTS} points, got {}",
            times.len()
        )));
    }
    if times.iter().chain(values).any(|v| !v.is_finite()) || times.iter().any(|&t| t < 0.0) {
        return Err(Error::InvalidArgument(
            "trace contains non-finite values or negative times".into(),
        ));
    }
    let n = values.len();
    let tail = (n / 10).max(1);
    let plateau = values[n - tail..].iter().sum::<f64>() / tail as f64;
    let drop = 0.5 - plateau;
    let spread = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - values.iter().cloned().fold(f64::INFINITY, f64::min);
    if drop.abs() < 1e-6 || spread < 1e-6 {
        return Err(Error::DegenerateFit("trace shows no decay".into()));
    }
    let level = plateau + drop / std::f64::consts::E;
    let tau0 = times
        .iter()
        .zip(values)
        .find(|(_, &v)| (v - level) * drop.signum() <= 0.0)
        .map(|(&t, _)| t)
        .filter(|&t| t > 0.0)
        .unwrap_or_else(|| times.iter().cloned().fold(0.0, f64::max).max(1e-9) / 2.0);

    let mut best: Option<(Params, f64, usize)> = None;
    for beta0 in [0.5, 1.0, 1.5] {
        let (p, c, it, ok) = levenberg_marquardt(Params::new(plateau, tau0, beta0), times, values);
        if !ok || !c.is_finite() {
            continue;
        }
        if best.as_ref().is_none_or(|b| c < b.1) {
            best = Some((p, c, it));
        }
    }
    let Some((p, c, it)) = best else {
        return Err(Error::FitNotConverged(format!(
            "no start converged within {MAX_ITERATIONS} iterations"
        )));
    };
    Ok(StretchedExpFit {
        m_inf: p.m_inf(),
        tau: p.tau(),
        beta: p.beta(),
        residual_norm: c.sqrt(),
        iterations: it,
    })
}
