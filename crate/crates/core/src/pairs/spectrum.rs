//! Closed-form spectrum of one interacting pair in the rotated pair frame
//! (field along z, basis `{->->, -><-, <-->, <-<-}`).

use nalgebra::Matrix4;

use crate::error::{Error, Result};

/// Eigen-data of
///
/// ```text
/// H = 4J (D sx sx + sy sy + sz sz) + Omega (sz_1 + sz_2),   J = J_12 / 4
/// ```
///
/// Eigenstates are ordered: symmetric dark, antisymmetric dark, lower bright,
/// upper bright. Only the bright states overlap the initial state `|->->>`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairSpectrum {
    pub coupling: f64,
    pub anisotropy: f64,
    pub omega: f64,
    /// `j = J (D - 1)`.
    pub j: f64,
    pub eigenvalues: [f64; 4],
    pub occupations: [f64; 4],
    pub magnetizations: [f64; 4],
}

impl PairSpectrum {
    /// Bright-state splitting `2 sqrt(Omega^2 + j^2)`.
    pub fn bright_splitting(&self) -> f64 {
        self.eigenvalues[3] - self.eigenvalues[2]
    }

    /// Normalized eigenvectors in the basis `{->->, -><-, <-->, <-<-}`,
    /// one per column in the eigenvalue order.
    pub fn eigenvectors(&self) -> Matrix4<f64> {
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let x = bright_ratio(self.j, self.omega);
        let up = (0.5 + x).sqrt();
        let dn = (0.5 - x).max(0.0).sqrt();
        // the bright mixing sign follows the sign of the off-diagonal j
        let sgn = if self.j < 0.0 { -1.0 } else { 1.0 };
        Matrix4::new(
            0.0,
            0.0,
            -sgn * dn,
            up, //
            r,
            r,
            0.0,
            0.0, //
            r,
            -r,
            0.0,
            0.0, //
            0.0,
            0.0,
            up,
            sgn * dn,
        )
    }
}

/// `Omega / (2 sqrt(Omega^2 + j^2))`, with the free-spin value 1/2 when both vanish.
fn bright_ratio(j: f64, omega: f64) -> f64 {
    let s = omega.hypot(j);
    if s == 0.0 {
        0.5
    } else {
        omega / (2.0 * s)
    }
}

/// The 4x4 pair Hamiltonian in the rotated frame.
pub fn pair_matrix(coupling: f64, anisotropy: f64, omega: f64) -> Matrix4<f64> {
    let j = coupling;
    let off = j * (anisotropy - 1.0);
    let flip = j * (anisotropy + 1.0);
    Matrix4::new(
        j + omega,
        0.0,
        0.0,
        off, //
        0.0,
        -j,
        flip,
        0.0, //
        0.0,
        flip,
        -j,
        0.0, //
        off,
        0.0,
        0.0,
        j - omega,
    )
}

pub fn pair_spectrum(coupling: f64, anisotropy: f64, omega: f64) -> PairSpectrum {
    let j = coupling * (anisotropy - 1.0);
    let s = omega.hypot(j);
    let x = bright_ratio(j, omega);
    PairSpectrum {
        coupling,
        anisotropy,
        omega,
        j,
        eigenvalues: [
            coupling * anisotropy,
            -coupling * (2.0 + anisotropy),
            coupling - s,
            coupling + s,
        ],
        occupations: [0.0, 0.0, 0.5 - x, 0.5 + x],
        magnetizations: [0.0, 0.0, -x, x],
    }
}

/// Time-averaged pair magnetization `Omega^2 / (2 (Omega^2 + j^2))`.
/// A pair with `j = Omega = 0` keeps its polarization and returns 1/2.
pub fn pair_diagonal_sx(j: f64, omega: f64) -> f64 {
    let s2 = omega * omega + j * j;
    if s2 == 0.0 {
        0.5
    } else {
        omega * omega / (2.0 * s2)
    }
}

/// Average of [`pair_diagonal_sx`] over `j` uniform on `[0, width]`:
/// `(Omega / (2 width)) arctan(width / Omega)`.
pub fn uniform_disorder_average(width: f64, omega: f64) -> Result<f64> {
    if !(width > 0.0) || !width.is_finite() {
        return Err(Error::Domain(format!(
            "distribution width must be positive, got {width}"
        )));
    }
    if omega == 0.0 {
        return Ok(0.0);
    }
    Ok(omega / (2.0 * width) * (width / omega).atan())
}

/// Pair magnetization in the two bright states at inverse temperature `beta`
/// (1/MHz): `-(h / (2 s)) tanh(s beta)` with `s = sqrt(h^2 + j^2)`.
pub fn canonical_pair_sx(j: f64, h: f64, beta: f64) -> f64 {
    let s = h.hypot(j);
    if s == 0.0 {
        return 0.0;
    }
    -(h / (2.0 * s)) * (s * beta).tanh()
}

/// Canonical energy of a pair (bright states only), relative to the constant `J`.
pub fn canonical_pair_energy(j: f64, h: f64, beta: f64) -> f64 {
    let s = h.hypot(j);
    -s * (s * beta).tanh()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_field_limit() {
        let p = pair_spectrum(0.8, 0.0, 0.0);
        assert_eq!(p.occupations[2..], [0.5, 0.5]);
        assert_eq!(p.magnetizations[2..], [0.0, 0.0]);
        assert!((p.bright_splitting() - 2.0 * p.j.abs()).abs() < 1e-15);
    }

    #[test]
    fn free_spin_limit() {
        // j = 0 at D = 1
        let p = pair_spectrum(0.8, 1.0, 0.4);
        assert_eq!(p.j, 0.0);
        assert_eq!(p.occupations[3], 1.0);
        assert_eq!(p.occupations[2], 0.0);
        let diag: f64 = (0..4).map(|k| p.occupations[k] * p.magnetizations[k]).sum();
        assert_eq!(diag, 0.5);
    }

    #[test]
    fn eigenvectors_diagonalize_matrix() {
        for &(c, d, w) in &[
            (0.7, 0.0, 0.3),
            (-1.1, -0.7, 0.9),
            (0.4, 0.2, -1.5),
            (0.3, 0.0, 0.0),
        ] {
            let p = pair_spectrum(c, d, w);
            let v = p.eigenvectors();
            let h = pair_matrix(c, d, w);
            let dmat = v.transpose() * h * v;
            for k in 0..4 {
                assert!((dmat[(k, k)] - p.eigenvalues[k]).abs() < 1e-13);
                // overlap with |->->>
                assert!((v[(0, k)].powi(2) - p.occupations[k]).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn diagonal_value_reference_points() {
        assert_eq!(pair_diagonal_sx(1.0, 0.0), 0.0);
        assert_eq!(pair_diagonal_sx(0.7, 0.7), 0.25);
        assert_eq!(pair_diagonal_sx(0.0, 0.3), 0.5);
        assert_eq!(pair_diagonal_sx(0.0, 0.0), 0.5);
    }

    #[test]
    fn uniform_average_limits() {
        let w = 1.3;
        assert_eq!(uniform_disorder_average(w, 0.0).unwrap(), 0.0);
        assert!((uniform_disorder_average(w, 1e4 * w).unwrap() - 0.5).abs() < 1e-4);
        assert!(uniform_disorder_average(0.0, 1.0).is_err());
        assert!(uniform_disorder_average(-1.0, 1.0).is_err());
        // even in the field
        assert_eq!(
            uniform_disorder_average(w, 0.4).unwrap(),
            uniform_disorder_average(w, -0.4).unwrap()
        );
    }

    #[test]
    fn canonical_limits() {
        assert_eq!(canonical_pair_sx(0.5, 0.3, 0.0), 0.0);
        assert!(
            (canonical_pair_sx(0.5, 0.3, -1e6) - 0.3 / (2.0 * 0.3f64.hypot(0.5))).abs() < 1e-15
        );
        // free spin at beta -> -inf is fully polarized
        assert_eq!(canonical_pair_sx(0.0, 0.3, f64::NEG_INFINITY), 0.5);
    }
}
