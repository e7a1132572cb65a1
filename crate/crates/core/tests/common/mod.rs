#![allow(dead_code)]

use pairloc::experiment::{Engine, ExperimentConfig};
use pairloc::geometry::{distance, Point};

/// Minimum total distance over all perfect matchings, by recursion.
pub fn exhaustive_min_matching(points: &[Point]) -> f64 {
    fn go(points: &[Point], free: &mut Vec<usize>) -> f64 {
        if free.is_empty() {
            return 0.0;
        }
        let a = free.remove(0);
        let mut best = f64::INFINITY;
        for k in 0..free.len() {
            let b = free.remove(k);
            best = best.min(distance(&points[a], &points[b]) + go(points, free));
            free.insert(k, b);
        }
        free.insert(0, a);
        best
    }
    go(points, &mut (0..points.len()).collect())
}

/// Second differences `m[k+1] + m[k-1] - 2 m[k]` of a curve on a uniform grid.
pub fn second_differences(m: &[f64]) -> Vec<f64> {
    m.windows(3).map(|w| w[0] + w[2] - 2.0 * w[1]).collect()
}

/// Second difference at grid index `center` over the largest off-center one.
pub fn cusp_ratio(m: &[f64], center: usize) -> f64 {
    let d2 = second_differences(m);
    let c = center - 1;
    let off = d2
        .iter()
        .enumerate()
        .filter(|&(k, _)| k != c)
        .map(|(_, v)| v.abs())
        .fold(0.0, f64::max);
    d2[c] / off
}

/// `2 steps + 1` uniform field values centered on zero.
pub fn symmetric_grid(step: f64, steps: usize) -> Vec<f64> {
    let s = steps as i64;
    (-s..=s).map(|k| k as f64 * step).collect()
}

pub fn preset_config(
    engine: Engine,
    preset: &str,
    n: usize,
    realizations: usize,
) -> ExperimentConfig {
    let text = format!(
        "engine = \"{}\"\nn_realizations = {realizations}\n[cloud]\npreset = \"{preset}\"\nn = {n}\n",
        engine.name()
    );
    ExperimentConfig::from_toml_str(&text).expect("valid test config")
}
