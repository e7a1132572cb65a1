use nalgebra::DMatrix;
use serde::Serialize;

use super::matching::{min_distance_matching, MatchingMethod};
use crate::couplings::CouplingMatrix;
use crate::error::{Error, Result};
use crate::geometry::{distance, SpinPositions};

/// One cluster of the pair decomposition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(untagged)]
pub enum PairUnit {
    Pair(usize, usize),
    Single(usize),
}

impl PairUnit {
    pub fn spins(&self) -> impl Iterator<Item = usize> {
        let (a, b) = match *self {
            PairUnit::Pair(i, j) => (i, Some(j)),
            PairUnit::Single(i) => (i, None),
        };
        std::iter::once(a).chain(b)
    }

    /// Number of spins in the unit.
    pub fn size(&self) -> usize {
        match self {
            PairUnit::Pair(..) => 2,
            PairUnit::Single(_) => 1,
        }
    }
}

/// Spins clustered into strongly interacting pairs.
///
/// `j[p]` is the off-diagonal bright-state coupling `(J_ik / 4)(delta - 1)`
/// (zero for a singleton), `inter[(p, q)]` the strongest cross coupling.
/// Both already include `rescale`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairDecomposition {
    units: Vec<PairUnit>,
    intra: Vec<f64>,
    j: Vec<f64>,
    inter: DMatrix<f64>,
    rescale: f64,
}

impl PairDecomposition {
    /// Build directly from per-unit couplings. `inter` must be symmetric
    /// with zero diagonal.
    pub fn from_parts(units: Vec<PairUnit>, j: Vec<f64>, inter: DMatrix<f64>) -> Result<Self> {
        let p = units.len();
        if j.len() != p || inter.nrows() != p || inter.ncols() != p {
            return Err(Error::InvalidArgument(format!(
                "pair data sizes disagree: {p} units, {} j values, {}x{} inter matrix",
                j.len(),
                inter.nrows(),
                inter.ncols()
            )));
        }
        for a in 0..p {
            if inter[(a, a)] != 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "inter-pair diagonal nonzero at {a}"
                )));
            }
            for b in 0..a {
                if inter[(a, b)] != inter[(b, a)] || !inter[(a, b)].is_finite() {
                    return Err(Error::InvalidArgument(format!(
                        "inter-pair matrix not symmetric at ({a}, {b})"
                    )));
                }
            }
        }
        if let Some(bad) = j.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite pair coupling at {bad}"
            )));
        }
        Ok(Self {
            units,
            intra: vec![f64::NAN; p],
            j,
            inter,
            rescale: 1.0,
        })
    }

    pub fn units(&self) -> &[PairUnit] {
        &self.units
    }

    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    /// Raw `J_ik` inside each pair (zero for a singleton, NaN when unknown).
    pub fn intra(&self) -> &[f64] {
        &self.intra
    }

    pub fn j(&self) -> &[f64] {
        &self.j
    }

    pub fn inter(&self) -> &DMatrix<f64> {
        &self.inter
    }

    pub fn rescale(&self) -> f64 {
        self.rescale
    }

    pub fn n_spins(&self) -> usize {
        self.units.iter().map(PairUnit::size).sum()
    }

    /// Spin-count weights used for the ensemble mean.
    pub fn weights(&self) -> Vec<f64> {
        self.units.iter().map(|u| u.size() as f64).collect()
    }

    /// All `j_p` and `J_pq` multiplied by `factor`.
    pub fn rescaled(&self, factor: f64) -> Result<Self> {
        if !(factor > 0.0 && factor.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "rescale factor must be positive, got {factor}"
            )));
        }
        Ok(Self {
            units: self.units.clone(),
            intra: self.intra.clone(),
            j: self.j.iter().map(|v| v * factor).collect(),
            inter: &self.inter * factor,
            rescale: self.rescale * factor,
        })
    }

    /// Same pairs without any inter-pair coupling.
    pub fn decoupled(&self) -> Self {
        let p = self.len();
        Self {
            inter: DMatrix::zeros(p, p),
            ..self.clone()
        }
    }

    /// `sum_p |r_i - r_k|` over the pairs.
    pub fn total_distance(&self, positions: &SpinPositions) -> f64 {
        let pts = positions.points();
        self.units
            .iter()
            .map(|u| match *u {
                PairUnit::Pair(i, k) => distance(&pts[i], &pts[k]),
                PairUnit::Single(_) => 0.0,
            })
            .sum()
    }
}

pub fn match_pairs(
    positions: &SpinPositions,
    couplings: &CouplingMatrix,
) -> Result<PairDecomposition> {
    match_pairs_with(positions, couplings, MatchingMethod::Auto)
}

/// Cluster spins into pairs of minimum total distance. For odd `N` the spin
/// with the weakest strongest coupling is left as a singleton.
pub fn match_pairs_with(
    positions: &SpinPositions,
    couplings: &CouplingMatrix,
    method: MatchingMethod,
) -> Result<PairDecomposition> {
    let n = positions.len();
    if n < 2 {
        return Err(Error::TooFewSpins { needed: 2, got: n });
    }
    if couplings.n() != n {
        return Err(Error::InvalidArgument(format!(
            "{} couplings for {n} positions",
            couplings.n()
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    let mut single = None;
    if n % 2 == 1 {
        let strength = couplings.max_abs_per_spin();
        let s = (0..n)
            .min_by(|&a, &b| strength[a].total_cmp(&strength[b]))
            .unwrap();
        idx.remove(s);
        single = Some(s);
    }
    let mut units: Vec<PairUnit> = min_distance_matching(positions.points(), &idx, method)
        .into_iter()
        .map(|(a, b)| PairUnit::Pair(a.min(b), a.max(b)))
        .collect();
    units.extend(single.map(PairUnit::Single));
    units.sort_by_key(|u| u.spins().next().unwrap());

    let delta = couplings.delta();
    let intra: Vec<f64> = units
        .iter()
        .map(|u| match *u {
            PairUnit::Pair(a, b) => couplings.get(a, b),
            PairUnit::Single(_) => 0.0,
        })
        .collect();
    let j = intra.iter().map(|jik| jik / 4.0 * (delta - 1.0)).collect();

    let p = units.len();
    let mut inter = DMatrix::zeros(p, p);
    for a in 0..p {
        for b in (a + 1)..p {
            let mut best = 0.0f64;
            for i in units[a].spins() {
                for k in units[b].spins() {
                    let c = couplings.get(i, k);
                    if c.abs() > best.abs() {
                        best = c;
                    }
                }
            }
            inter[(a, b)] = best;
            inter[(b, a)] = best;
        }
    }
    Ok(PairDecomposition {
        units,
        intra,
        j,
        inter,
        rescale: 1.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::couplings::{build_coupling_matrix, InteractionLaw};

    fn line(xs: &[f64]) -> SpinPositions {
        SpinPositions::from_points(xs.iter().map(|&x| [x, 0.0, 0.0]).collect(), 0.0, 0).unwrap()
    }

    #[test]
    fn obvious_clusters() {
        let pos = line(&[0.0, 1.0, 10.0, 11.0]);
        let law = InteractionLaw::dipolar_48s48p();
        let c = build_coupling_matrix(&pos, &law).unwrap();
        let d = match_pairs(&pos, &c).unwrap();
        assert_eq!(d.units(), &[PairUnit::Pair(0, 1), PairUnit::Pair(2, 3)]);
        // j = (J/4)(delta - 1) with J = 1150 * (1 - 3*0) = 1150 on the x axis
        assert!((d.j()[0] + 1150.0 / 4.0).abs() < 1e-9);
        // strongest cross coupling is between spins 1 and 2
        assert_eq!(d.inter()[(0, 1)], c.get(1, 2));
    }

    #[test]
    fn odd_count_leaves_weakest_spin_single() {
        let pos = line(&[0.0, 1.0, 10.0, 11.0, 40.0]);
        let c = build_coupling_matrix(&pos, &InteractionLaw::dipolar_48s48p()).unwrap();
        let d = match_pairs(&pos, &c).unwrap();
        assert_eq!(d.units().last(), Some(&PairUnit::Single(4)));
        assert_eq!(d.j()[2], 0.0);
        assert_eq!(d.n_spins(), 5);
    }

    #[test]
    fn rescale_multiplies_couplings() {
        let pos = line(&[0.0, 1.0, 10.0, 11.0]);
        let c = build_coupling_matrix(&pos, &InteractionLaw::dipolar_48s48p()).unwrap();
        let d = match_pairs(&pos, &c).unwrap();
        let r = d.rescaled(1.75).unwrap();
        assert_eq!(r.j()[1], 1.75 * d.j()[1]);
        assert_eq!(r.inter()[(0, 1)], 1.75 * d.inter()[(0, 1)]);
        assert_eq!(r.rescale(), 1.75);
        assert!(d.rescaled(0.0).is_err());
    }

    #[test]
    fn from_parts_validates() {
        let bad = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 2.0, 0.0]);
        assert!(PairDecomposition::from_parts(
            vec![PairUnit::Pair(0, 1), PairUnit::Pair(2, 3)],
            vec![0.1, 0.2],
            bad
        )
        .is_err());
    }
}
