//! Power-law couplings between Rydberg spins.
//!
//! Energies are stored as frequencies `E / (2 pi hbar)` in MHz, distances in
//! micrometres. The quantization axis is the +z axis of the coordinate frame.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point, SpinPositions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InteractionKind {
    Dipolar,
    Vdw,
}

/// `J(r, theta) = C_a r^-a (1 - 3 cos^2 theta)` (angular) or `C_a r^-a`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InteractionLaw {
    pub kind: InteractionKind,
    /// `C_a / (2 pi)` in MHz um^a.
    pub c_a: f64,
    pub exponent: u32,
    /// Anisotropy of the `s_z s_z` term.
    pub delta: f64,
    pub angular: bool,
}

impl InteractionLaw {
    pub fn new(
        kind: InteractionKind,
        c_a: f64,
        exponent: u32,
        delta: f64,
        angular: bool,
    ) -> Result<Self> {
        let law = Self {
            kind,
            c_a,
            exponent,
            delta,
            angular,
        };
        law.validate()?;
        Ok(law)
    }

    /// 48S/48P dipolar exchange: `C_3/(2 pi) = 1.15 GHz um^3`, `delta = 0`.
    pub fn dipolar_48s48p() -> Self {
        Self {
            kind: InteractionKind::Dipolar,
            c_a: 1150.0,
            exponent: 3,
            delta: 0.0,
            angular: true,
        }
    }

    /// 61S/62S van der Waals: `C_6/(2 pi) = 507 GHz um^6`, `delta = -0.7`, isotropic.
    pub fn vdw_61s62s() -> Self {
        Self {
            kind: InteractionKind::Vdw,
            c_a: 507_000.0,
            exponent: 6,
            delta: -0.7,
            angular: false,
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "dipolar-48S48P" => Some(Self::dipolar_48s48p()),
            "vdw-61S62S" => Some(Self::vdw_61s62s()),
            _ => None,
        }
    }

    pub const PRESET_NAMES: [&'static str; 2] = ["dipolar-48S48P", "vdw-61S62S"];

    pub fn validate(&self) -> Result<()> {
        if self.exponent != 3 && self.exponent != 6 {
            return Err(Error::InvalidArgument(format!(
                "interaction exponent must be 3 or 6, got {}",
                self.exponent
            )));
        }
        if !(self.c_a > 0.0 && self.c_a.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "C_a must be positive, got {}",
                self.c_a
            )));
        }
        if !self.delta.is_finite() {
            return Err(Error::InvalidArgument("anisotropy must be finite".into()));
        }
        Ok(())
    }

    /// Coupling for a separation vector `d`; `None` when `d` is zero.
    #[inline]
    pub fn evaluate(&self, d: [f64; 3]) -> Option<f64> {
        let r2 = d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
        if r2 == 0.0 {
            return None;
        }
        let radial = match self.exponent {
            3 => self.c_a / (r2 * r2.sqrt()),
            6 => self.c_a / (r2 * r2 * r2),
            a => self.c_a * r2.powf(-0.5 * a as f64),
        };
        if self.angular {
            // 1 - 3 cos^2 theta written so the magic angle gives exactly zero
            Some(radial * (r2 - 3.0 * d[2] * d[2]) / r2)
        } else {
            Some(radial)
        }
    }
}

fn separation(a: &Point, b: &Point) -> [f64; 3] {
    [b[0] - a[0], b[1] - a[1], b[2] - a[2]]
}

/// Coupling `J_ij / (2 pi)` in MHz between two spins.
pub fn pair_coupling(ri: &Point, rj: &Point, law: &InteractionLaw) -> Result<f64> {
    law.evaluate(separation(ri, rj))
        .ok_or(Error::Singular { i: 0, j: 1 })
}

/// Dense symmetric coupling matrix with zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingMatrix {
    matrix: DMatrix<f64>,
    delta: f64,
}

impl CouplingMatrix {
    /// Wrap an explicit matrix. It must be square, symmetric, finite and
    /// zero on the diagonal.
    pub fn from_matrix(matrix: DMatrix<f64>, delta: f64) -> Result<Self> {
        let n = matrix.nrows();
        if matrix.ncols() != n {
            return Err(Error::InvalidArgument(
                "coupling matrix must be square".into(),
            ));
        }
        for i in 0..n {
            if matrix[(i, i)] != 0.0 {
                return Err(Error::InvalidArgument(format!("nonzero diagonal at {i}")));
            }
            for j in 0..i {
                let v = matrix[(i, j)];
                if !v.is_finite() || v != matrix[(j, i)] {
                    return Err(Error::InvalidArgument(format!(
                        "coupling matrix not symmetric/finite at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(Self { matrix, delta })
    }

    pub fn n(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.matrix[(i, j)]
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Strongest absolute coupling seen by each spin.
    pub fn max_abs_per_spin(&self) -> Vec<f64> {
        let n = self.n();
        (0..n)
            .into_par_iter()
            .map(|i| {
                (0..n)
                    .filter(|&j| j != i)
                    .map(|j| self.matrix[(i, j)].abs())
                    .fold(0.0, f64::max)
            })
            .collect()
    }

    /// Every coupling multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            matrix: &self.matrix * factor,
            delta: self.delta,
        }
    }
}

/// Assemble `J_ij` for all pairs. With `cutoff = Some(r)`, couplings between
/// spins further apart than `r` are dropped; `None` keeps the full tail.
pub fn build_coupling_matrix_with_cutoff(
    positions: &SpinPositions,
    law: &InteractionLaw,
    cutoff: Option<f64>,
) -> Result<CouplingMatrix> {
    law.validate()?;
    let pts = positions.points();
    let n = pts.len();
    if n < 2 {
        return Err(Error::TooFewSpins { needed: 2, got: n });
    }
    let cut2 = cutoff.map(|c| c * c);
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut row = vec![0.0; n];
            for j in (i + 1)..n {
                let d = separation(&pts[i], &pts[j]);
                if let Some(c2) = cut2 {
                    if d[0] * d[0] + d[1] * d[1] + d[2] * d[2] > c2 {
                        continue;
                    }
                }
                row[j] = law.evaluate(d).ok_or(Error::Singular { i, j })?;
            }
            Ok(row)
        })
        .collect::<Result<_>>()?;
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            m[(i, j)] = rows[i][j];
            m[(j, i)] = rows[i][j];
        }
    }
    Ok(CouplingMatrix {
        matrix: m,
        delta: law.delta,
    })
}

pub fn build_coupling_matrix(
    positions: &SpinPositions,
    law: &InteractionLaw,
) -> Result<CouplingMatrix> {
    build_coupling_matrix_with_cutoff(positions, law, None)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_dipolar() -> InteractionLaw {
        InteractionLaw::new(InteractionKind::Dipolar, 1.0, 3, 0.0, true).unwrap()
    }

    #[test]
    fn axial_dipolar_is_minus_two() {
        // C3/(2pi) = 1 GHz um^3 = 1000 MHz um^3
        let law = InteractionLaw::new(InteractionKind::Dipolar, 1000.0, 3, 0.0, true).unwrap();
        let j = pair_coupling(&[0.0, 0.0, 0.0], &[0.0, 0.0, 1.0], &law).unwrap();
        assert_eq!(j, -2000.0);
    }

    #[test]
    fn magic_angle_vanishes_exactly() {
        let j = pair_coupling(&[0.0, 0.0, 0.0], &[1.0, 1.0, 1.0], &unit_dipolar()).unwrap();
        assert_eq!(j, 0.0);
    }

    #[test]
    fn vdw_table_value() {
        let law = InteractionLaw::vdw_61s62s();
        let j = pair_coupling(&[0.0, 0.0, 0.0], &[7.8, 0.0, 0.0], &law).unwrap();
        let oracle = 507_000.0 / 7.8f64.powi(6);
        assert!((j - oracle).abs() < 1e-12 * oracle);
    }

    #[test]
    fn coincident_points_are_singular() {
        let p = [1.0, 2.0, 3.0];
        assert!(matches!(
            pair_coupling(&p, &p, &unit_dipolar()),
            Err(Error::Singular { .. })
        ));
    }

    #[test]
    fn invalid_exponent_rejected() {
        assert!(InteractionLaw::new(InteractionKind::Vdw, 1.0, 4, 0.0, false).is_err());
        assert!(InteractionLaw::new(InteractionKind::Vdw, -1.0, 6, 0.0, false).is_err());
    }

    #[test]
    fn presets_by_name() {
        assert_eq!(
            InteractionLaw::preset("dipolar-48S48P").unwrap().c_a,
            1150.0
        );
        let v = InteractionLaw::preset("vdw-61S62S").unwrap();
        assert_eq!((v.exponent, v.delta, v.angular), (6, -0.7, false));
        assert!(InteractionLaw::preset("nope").is_none());
    }

    #[test]
    fn two_spin_matrix() {
        let pos =
            SpinPositions::from_points(vec![[0.0, 0.0, 0.0], [3.0, 0.0, 0.0]], 0.0, 0).unwrap();
        let law = InteractionLaw::dipolar_48s48p();
        let m = build_coupling_matrix(&pos, &law).unwrap();
        let j = pair_coupling(&[0.0, 0.0, 0.0], &[3.0, 0.0, 0.0], &law).unwrap();
        assert_eq!(m.get(0, 1), j);
        assert_eq!(m.get(1, 0), j);
        assert_eq!(m.get(0, 0), 0.0);
    }

    #[test]
    fn cutoff_drops_far_pairs() {
        let pos = SpinPositions::from_points(
            vec![[0.0, 0.0, 0.0], [3.0, 0.0, 0.0], [30.0, 0.0, 0.0]],
            0.0,
            0,
        )
        .unwrap();
        let law = InteractionLaw::dipolar_48s48p();
        let m = build_coupling_matrix_with_cutoff(&pos, &law, Some(10.0)).unwrap();
        assert!(m.get(0, 1) != 0.0);
        assert_eq!(m.get(0, 2), 0.0);
        assert_eq!(m.get(1, 2), 0.0);
    }
}
