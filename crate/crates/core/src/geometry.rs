//! Blockade-constrained spin positions in a 3D cloud.

use std::collections::HashMap;
use std::io::Write;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::couplings::InteractionLaw;
use crate::error::{Error, Result};
use crate::stats;

/// A position in micrometres.
pub type Point = [f64; 3];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CloudShape {
    /// Uniform box; radii are half-extents.
    Box,
    /// Anisotropic normal density; radii are 1/e^2 radii, `sigma = radius / 2`.
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CloudGeometry {
    pub shape: CloudShape,
    /// Radii along x, y, z in um.
    pub radii: [f64; 3],
}

impl CloudGeometry {
    pub fn new(shape: CloudShape, radii: [f64; 3]) -> Result<Self> {
        let g = Self { shape, radii };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.radii.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
            return Err(Error::InvalidArgument(format!(
                "cloud radii must be positive, got {:?}",
                self.radii
            )));
        }
        Ok(())
    }

    /// Same shape with every radius multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            shape: self.shape,
            radii: self.radii.map(|r| r * factor),
        }
    }

    /// Effective density of `n` spins in um^-3.
    ///
    /// Box: `n / volume`. Gaussian: the atom-averaged density
    /// `n / ((4 pi)^{3/2} sigma_x sigma_y sigma_z)`.
    pub fn density(&self, n: usize) -> f64 {
        let [a, b, c] = self.radii;
        match self.shape {
            CloudShape::Box => n as f64 / (8.0 * a * b * c),
            CloudShape::Gaussian => {
                let s = (a / 2.0) * (b / 2.0) * (c / 2.0);
                n as f64 / ((4.0 * std::f64::consts::PI).powf(1.5) * s)
            }
        }
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> Point {
        match self.shape {
            CloudShape::Box => {
                let mut p = [0.0; 3];
                for (k, r) in self.radii.iter().enumerate() {
                    p[k] = r * (2.0 * rng.random::<f64>() - 1.0);
                }
                p
            }
            CloudShape::Gaussian => {
                let mut p = [0.0; 3];
                for (k, r) in self.radii.iter().enumerate() {
                    let z: f64 = rng.sample(StandardNormal);
                    p[k] = 0.5 * r * z;
                }
                p
            }
        }
    }
}

/// Sampled spin positions plus their provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpinPositions {
    points: Vec<Point>,
    r_bl: f64,
    seed: u64,
    geometry: Option<CloudGeometry>,
}

impl SpinPositions {
    /// Wrap explicit positions, checking finiteness and the blockade constraint.
    pub fn from_points(points: Vec<Point>, r_bl: f64, seed: u64) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::TooFewSpins { needed: 1, got: 0 });
        }
        if points.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::InvalidArgument("non-finite coordinate".into()));
        }
        if r_bl > 0.0 {
            if let Some((i, j, d)) = closest_pair(&points) {
                if d < r_bl {
                    return Err(Error::InvalidArgument(format!(
                        "spins {i} and {j} are {d} um apart, closer than r_bl = {r_bl}"
                    )));
                }
            }
        }
        Ok(Self {
            points,
            r_bl,
            seed,
            geometry: None,
        })
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn r_bl(&self) -> f64 {
        self.r_bl
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn geometry(&self) -> Option<&CloudGeometry> {
        self.geometry.as_ref()
    }

    /// Positions reordered so that new index `k` holds old spin `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self {
            points: perm.iter().map(|&k| self.points[k]).collect(),
            ..self.clone()
        }
    }

    /// CSV with columns `index, x_um, y_um, z_um`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["index", "x_um", "y_um", "z_um"])?;
        for (i, p) in self.points.iter().enumerate() {
            wtr.write_record(&[
                i.to_string(),
                p[0].to_string(),
                p[1].to_string(),
                p[2].to_string(),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

pub fn distance(a: &Point, b: &Point) -> f64 {
    let d = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
}

/// Closest pair `(i, j, distance)` by direct enumeration.
pub fn closest_pair(points: &[Point]) -> Option<(usize, usize, f64)> {
    let mut best: Option<(usize, usize, f64)> = None;
    for i in 0..points.len() {
        for j in (i + 1)..points.len() {
            let d = distance(&points[i], &points[j]);
            if best.is_none_or(|b| d < b.2) {
                best = Some((i, j, d));
            }
        }
    }
    best
}

pub fn default_max_attempts(n_target: usize) -> usize {
    1000 * n_target
}

type Cell = (i64, i64, i64);

/// Uniform hash grid with cell size `r_bl` used to reject candidates.
struct BlockadeGrid {
    cell: f64,
    cells: HashMap<Cell, Vec<usize>>,
}

impl BlockadeGrid {
    fn new(cell: f64) -> Self {
        Self {
            cell,
            cells: HashMap::new(),
        }
    }

    fn key(&self, p: &Point) -> Cell {
        (
            (p[0] / self.cell).floor() as i64,
            (p[1] / self.cell).floor() as i64,
            (p[2] / self.cell).floor() as i64,
        )
    }

    fn is_free(&self, p: &Point, accepted: &[Point]) -> bool {
        let (cx, cy, cz) = self.key(p);
        let r2 = self.cell * self.cell;
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(list) = self.cells.get(&(cx + dx, cy + dy, cz + dz)) {
                        for &k in list {
                            let q = &accepted[k];
                            let d2 = (p[0] - q[0]).powi(2)
                                + (p[1] - q[1]).powi(2)
                                + (p[2] - q[2]).powi(2);
                            if d2 < r2 {
                                return false;
                            }
                        }
                    }
                }
            }
        }
        true
    }

    fn insert(&mut self, p: &Point, index: usize) {
        let key = self.key(p);
        self.cells.entry(key).or_default().push(index);
    }
}

/// Random sequential adsorption: draw candidates from the cloud and reject
/// any closer than `r_bl` to an already accepted spin.
pub fn sample_blockaded_positions(
    geometry: &CloudGeometry,
    n_target: usize,
    r_bl: f64,
    seed: u64,
    max_attempts: usize,
) -> Result<SpinPositions> {
    geometry.validate()?;
    if n_target == 0 {
        return Err(Error::InvalidArgument("n_target must be at least 1".into()));
    }
    if !(r_bl >= 0.0 && r_bl.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "r_bl must be nonnegative, got {r_bl}"
        )));
    }
    if max_attempts < n_target {
        return Err(Error::InvalidArgument(format!(
            "max_attempts ({max_attempts}) must be at least n_target ({n_target})"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points: Vec<Point> = Vec::with_capacity(n_target);
    let mut grid = (r_bl > 0.0).then(|| BlockadeGrid::new(r_bl));
    let mut attempts = 0;
    while points.len() < n_target {
        if attempts == max_attempts {
            return Err(Error::Saturation {
                placed: points.len(),
                target: n_target,
                attempts,
            });
        }
        attempts += 1;
        let p = geometry.draw(&mut rng);
        if let Some(g) = grid.as_mut() {
            if !g.is_free(&p, &points) {
                continue;
            }
            g.insert(&p, points.len());
        }
        points.push(p);
    }
    Ok(SpinPositions {
        points,
        r_bl,
        seed,
        geometry: Some(*geometry),
    })
}

/// Wigner-Seitz radius `(3 / (4 pi rho))^{1/3}` in um for a density in um^-3.
pub fn wigner_seitz_radius(density: f64) -> Result<f64> {
    if !(density > 0.0) || !density.is_finite() {
        return Err(Error::Domain(format!(
            "density must be positive, got {density}"
        )));
    }
    Ok((3.0 / (4.0 * std::f64::consts::PI * density)).cbrt())
}

/// `median_i max_{j != i} |J_ij|` in MHz, without materializing the matrix.
pub fn median_nn_coupling(positions: &SpinPositions, law: &InteractionLaw) -> Result<f64> {
    law.validate()?;
    let pts = positions.points();
    let n = pts.len();
    if n < 2 {
        return Err(Error::TooFewSpins { needed: 2, got: n });
    }
    let maxes: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut best = 0.0f64;
            for j in 0..n {
                if j == i {
                    continue;
                }
                let d = [
                    pts[j][0] - pts[i][0],
                    pts[j][1] - pts[i][1],
                    pts[j][2] - pts[i][2],
                ];
                let jij = law.evaluate(d).ok_or(Error::Singular { i, j })?;
                best = best.max(jij.abs());
            }
            Ok(best)
        })
        .collect::<Result<_>>()?;
    Ok(stats::median(&maxes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::couplings::InteractionKind;

    fn table_box() -> CloudGeometry {
        CloudGeometry::new(CloudShape::Box, [59.0, 34.0, 30.0]).unwrap()
    }

    #[test]
    fn zero_blockade_two_points() {
        let pos = sample_blockaded_positions(&table_box(), 2, 0.0, 1, 2).unwrap();
        assert_eq!(pos.len(), 2);
        for p in pos.points() {
            assert!(p[0].abs() <= 59.0 && p[1].abs() <= 34.0 && p[2].abs() <= 30.0);
        }
    }

    #[test]
    fn table_box_775_spins_respects_blockade() {
        let pos = sample_blockaded_positions(&table_box(), 775, 5.0, 11, default_max_attempts(775))
            .unwrap();
        assert_eq!(pos.len(), 775);
        let (_, _, dmin) = closest_pair(pos.points()).unwrap();
        assert!(dmin >= 5.0, "min distance {dmin}");
    }

    #[test]
    fn same_seed_same_positions() {
        let a = sample_blockaded_positions(&table_box(), 50, 5.0, 3, 50_000).unwrap();
        let b = sample_blockaded_positions(&table_box(), 50, 5.0, 3, 50_000).unwrap();
        let c = sample_blockaded_positions(&table_box(), 50, 5.0, 4, 50_000).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.points(), c.points());
    }

    #[test]
    fn gaussian_cloud_sampling() {
        let g = CloudGeometry::new(CloudShape::Gaussian, [40.0, 20.0, 20.0]).unwrap();
        let pos = sample_blockaded_positions(&g, 300, 3.0, 5, 300_000).unwrap();
        let (_, _, dmin) = closest_pair(pos.points()).unwrap();
        assert!(dmin >= 3.0);
        // sample std of x close to sigma = 20 (blockade widens it a little)
        let xs: Vec<f64> = pos.points().iter().map(|p| p[0]).collect();
        let m = stats::mean(&xs);
        let sd = (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64).sqrt();
        assert!(sd > 16.0 && sd < 27.0, "sd {sd}");
    }

    #[test]
    fn saturation_is_reported() {
        let unit = CloudGeometry::new(CloudShape::Box, [0.5; 3]).unwrap();
        let err = sample_blockaded_positions(&unit, 1000, 0.2, 1, default_max_attempts(1000))
            .unwrap_err();
        assert!(matches!(err, Error::Saturation { target: 1000, .. }));
    }

    #[test]
    fn bad_inputs() {
        assert!(CloudGeometry::new(CloudShape::Box, [1.0, 0.0, 1.0]).is_err());
        assert!(sample_blockaded_positions(&table_box(), 0, 1.0, 0, 10).is_err());
        assert!(sample_blockaded_positions(&table_box(), 5, -1.0, 0, 10).is_err());
        assert!(sample_blockaded_positions(&table_box(), 5, 1.0, 0, 4).is_err());
    }

    #[test]
    fn wigner_seitz_reference_values() {
        let pi = std::f64::consts::PI;
        assert!((wigner_seitz_radius(3.0 / (4.0 * pi)).unwrap() - 1.0).abs() < 1e-15);
        assert!((wigner_seitz_radius(3.0 / (32.0 * pi)).unwrap() - 2.0).abs() < 1e-15);
        assert!(wigner_seitz_radius(0.0).is_err());
        assert!(wigner_seitz_radius(-1.0).is_err());
    }

    #[test]
    fn median_nn_two_spins_perpendicular() {
        let law = InteractionLaw::new(InteractionKind::Dipolar, 1000.0, 3, 0.0, true).unwrap();
        let pos = SpinPositions::from_points(vec![[0.0; 3], [1.0, 0.0, 0.0]], 0.0, 0).unwrap();
        assert_eq!(median_nn_coupling(&pos, &law).unwrap(), 1000.0);
        let one = SpinPositions::from_points(vec![[0.0; 3]], 0.0, 0).unwrap();
        assert!(matches!(
            median_nn_coupling(&one, &law),
            Err(Error::TooFewSpins { .. })
        ));
    }

    #[test]
    fn from_points_checks_blockade() {
        assert!(SpinPositions::from_points(vec![[0.0; 3], [1.0, 0.0, 0.0]], 2.0, 0).is_err());
        assert!(SpinPositions::from_points(vec![[f64::NAN, 0.0, 0.0]], 0.0, 0).is_err());
    }

    #[test]
    fn positions_csv_layout() {
        let pos = SpinPositions::from_points(vec![[0.0; 3], [1.5, -2.0, 3.0]], 0.0, 0).unwrap();
        let mut buf = Vec::new();
        pos.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "index,x_um,y_um,z_um\n0,0,0,0\n1,1.5,-2,3\n");
    }
}
