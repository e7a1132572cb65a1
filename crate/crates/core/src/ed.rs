//! Exact state-vector dynamics for small spin numbers.
//!
//! Basis states are bit strings: bit `i` set means spin `i` points along +z.
//! The Hamiltonian
//!
//! ```text
//! H = sum_{i<j} J_ij (sx_i sx_j + sy_i sy_j + delta sz_i sz_j) + Omega sum_i sx_i
//! ```
//!
//! is real symmetric in this basis, so dense work uses real eigenvectors and
//! only the time-dependent phases are complex.

use std::ops::{Add, Mul};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64 as C64;

use crate::couplings::CouplingMatrix;
use crate::error::{Error, Result};

const TAU: f64 = std::f64::consts::TAU;

/// Largest spin number accepted by [`build_hamiltonian`].
pub const ED_LIMIT: usize = 14;
/// Largest spin number handled by full diagonalization.
pub const FULL_DIAG_LIMIT: usize = 10;
/// Eigenvalues closer than this (MHz) are treated as one degenerate level.
pub const DEGENERACY_TOL: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct XxzHamiltonian {
    n: usize,
    /// `(mask_ij, J_ij)` for every nonzero bond `i < j`.
    bonds: Vec<(usize, f64)>,
    omega: f64,
    /// `delta sum J_ij sz_i sz_j` evaluated on each basis state.
    diag: Vec<f64>,
}

impl XxzHamiltonian {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        1 << self.n
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    /// `-H`, used for time-reversal checks.
    pub fn negated(&self) -> Self {
        Self {
            n: self.n,
            bonds: self.bonds.iter().map(|&(m, j)| (m, -j)).collect(),
            omega: -self.omega,
            diag: self.diag.iter().map(|d| -d).collect(),
        }
    }

    fn apply_generic<T>(&self, psi: &[T], out: &mut [T])
    where
        T: Copy + Add<Output = T> + Mul<f64, Output = T>,
    {
        let half_omega = 0.5 * self.omega;
        for s in 0..self.dim() {
            let mut acc = psi[s] * self.diag[s];
            for &(mask, j) in &self.bonds {
                let pair = s & mask;
                // flip-flop only connects antiparallel pairs
                if pair != 0 && pair != mask {
                    acc = acc + psi[s ^ mask] * (0.5 * j);
                }
            }
            if half_omega != 0.0 {
                for i in 0..self.n {
                    acc = acc + psi[s ^ (1 << i)] * half_omega;
                }
            }
            out[s] = acc;
        }
    }

    /// `out = H psi`.
    pub fn apply(&self, psi: &[C64], out: &mut [C64]) {
        self.apply_generic(psi, out);
    }

    pub fn apply_real(&self, psi: &[f64], out: &mut [f64]) {
        self.apply_generic(psi, out);
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let d = self.dim();
        let mut m = DMatrix::zeros(d, d);
        for s in 0..d {
            m[(s, s)] = self.diag[s];
            for &(mask, j) in &self.bonds {
                let pair = s & mask;
                if pair != 0 && pair != mask {
                    m[(s ^ mask, s)] += 0.5 * j;
                }
            }
            for i in 0..self.n {
                m[(s ^ (1 << i), s)] += 0.5 * self.omega;
            }
        }
        m
    }
}

/// Assemble the XXZ Hamiltonian with transverse field `omega` (MHz).
pub fn build_hamiltonian(couplings: &CouplingMatrix, omega: f64) -> Result<XxzHamiltonian> {
    let n = couplings.n();
    if n > ED_LIMIT {
        return Err(Error::DimensionLimit { n, limit: ED_LIMIT });
    }
    let delta = couplings.delta();
    let mut bonds = Vec::new();
    let mut pairs = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let jij = couplings.get(i, j);
            if jij != 0.0 {
                bonds.push(((1 << i) | (1 << j), jij));
                pairs.push((i, j, jij));
            }
        }
    }
    let diag = (0..(1usize << n))
        .map(|s| {
            pairs
                .iter()
                .map(|&(i, j, jij)| {
                    let same = ((s >> i) & 1) == ((s >> j) & 1);
                    0.25 * delta * jij * if same { 1.0 } else { -1.0 }
                })
                .sum()
        })
        .collect();
    Ok(XxzHamiltonian {
        n,
        bonds,
        omega,
        diag,
    })
}

/// A normalized state vector over `2^n` basis states.
#[derive(Debug, Clone, PartialEq)]
pub struct PureState {
    n: usize,
    amplitudes: Vec<C64>,
}

impl PureState {
    /// `|->_x^{(x) n}`: every amplitude equal to `2^{-n/2}`.
    pub fn x_polarized(n: usize) -> Self {
        let d = 1usize << n;
        let a = C64::new((d as f64).sqrt().recip(), 0.0);
        Self {
            n,
            amplitudes: vec![a; d],
        }
    }

    pub fn from_amplitudes(n: usize, amplitudes: Vec<C64>) -> Result<Self> {
        if amplitudes.len() != 1 << n {
            return Err(Error::InvalidArgument(format!(
                "expected {} amplitudes, got {}",
                1usize << n,
                amplitudes.len()
            )));
        }
        let s = Self { n, amplitudes };
        if (s.norm() - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!(
                "state norm {} != 1",
                s.norm()
            )));
        }
        Ok(s)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes
            .iter()
            .map(|a| a.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    /// Per-spin magnetization `<S_x> = <sum_i sx_i> / n`.
    pub fn sx_mean(&self) -> f64 {
        sx_expectation(self.n, &self.amplitudes)
    }

    pub fn energy(&self, h: &XxzHamiltonian) -> f64 {
        let mut hpsi = vec![C64::new(0.0, 0.0); self.amplitudes.len()];
        h.apply(&self.amplitudes, &mut hpsi);
        self.amplitudes
            .iter()
            .zip(&hpsi)
            .map(|(a, b)| (a.conj() * b).re)
            .sum()
    }

    /// Variance of total `S_z = sum_i sz_i`.
    pub fn total_sz_variance(&self) -> f64 {
        let mut m1 = 0.0;
        let mut m2 = 0.0;
        for (s, a) in self.amplitudes.iter().enumerate() {
            let sz = s.count_ones() as f64 - 0.5 * self.n as f64;
            let p = a.norm_sqr();
            m1 += p * sz;
            m2 += p * sz * sz;
        }
        m2 - m1 * m1
    }
}

/// `<v| (1/n) sum_i sx_i |v>` for an unnormalized vector.
fn sx_expectation(n: usize, v: &[C64]) -> f64 {
    let mut acc = 0.0;
    for (s, a) in v.iter().enumerate() {
        for i in 0..n {
            acc += (a.conj() * v[s ^ (1 << i)]).re;
        }
    }
    0.5 * acc / n as f64
}

/// Eigen-decomposition of `H` together with the initial-state overlaps.
#[derive(Debug, Clone)]
pub struct SpectralData {
    n: usize,
    /// Ascending eigenvalues in MHz.
    pub eigenvalues: Vec<f64>,
    /// `|<psi0|psi_k>|^2`.
    pub overlaps: Vec<f64>,
    /// `<psi_k|S_x|psi_k>`.
    pub sx: Vec<f64>,
    vectors: DMatrix<f64>,
    coeffs: Vec<C64>,
}

impl SpectralData {
    pub fn compute(h: &XxzHamiltonian, psi0: &PureState) -> Result<Self> {
        let n = h.n();
        if n > FULL_DIAG_LIMIT {
            return Err(Error::DimensionLimit {
                n,
                limit: FULL_DIAG_LIMIT,
            });
        }
        if psi0.n() != n {
            return Err(Error::InvalidArgument(
                "state and Hamiltonian sizes differ".into(),
            ));
        }
        let eig = SymmetricEigen::new(h.to_dense());
        let d = h.dim();
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let eigenvalues: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k]).collect();
        let vectors = DMatrix::from_fn(d, d, |r, c| eig.eigenvectors[(r, order[c])]);
        let amps = psi0.amplitudes();
        let mut coeffs = Vec::with_capacity(d);
        let mut sx = Vec::with_capacity(d);
        let mut col = vec![C64::new(0.0, 0.0); d];
        for k in 0..d {
            let v = vectors.column(k);
            let c: C64 = v.iter().zip(amps).map(|(x, a)| a * *x).sum();
            coeffs.push(c);
            for (dst, x) in col.iter_mut().zip(v.iter()) {
                *dst = C64::new(*x, 0.0);
            }
            sx.push(sx_expectation(n, &col));
        }
        let overlaps = coeffs.iter().map(|c| c.norm_sqr()).collect();
        Ok(Self {
            n,
            eigenvalues,
            overlaps,
            sx,
            vectors,
            coeffs,
        })
    }

    /// State at time `t` (us): `sum_k c_k exp(-2 pi i E_k t) |psi_k>`.
    pub fn state_at(&self, t: f64) -> PureState {
        let d = self.eigenvalues.len();
        let mut re = DVector::zeros(d);
        let mut im = DVector::zeros(d);
        for k in 0..d {
            let c = self.coeffs[k] * C64::from_polar(1.0, -TAU * self.eigenvalues[k] * t);
            re[k] = c.re;
            im[k] = c.im;
        }
        let a = &self.vectors * re;
        let b = &self.vectors * im;
        PureState {
            n: self.n,
            amplitudes: a
                .iter()
                .zip(b.iter())
                .map(|(x, y)| C64::new(*x, *y))
                .collect(),
        }
    }

    /// Diagonal-ensemble magnetization. Each degenerate eigenspace contributes
    /// the expectation of `S_x` in the projection of `psi0` onto it.
    pub fn diagonal_ensemble_sx(&self) -> f64 {
        let d = self.eigenvalues.len();
        let mut total = 0.0;
        let mut start = 0;
        while start < d {
            let mut end = start + 1;
            while end < d && self.eigenvalues[end] - self.eigenvalues[end - 1] < DEGENERACY_TOL {
                end += 1;
            }
            if end - start == 1 {
                total += self.overlaps[start] * self.sx[start];
            } else {
                let mut v = vec![C64::new(0.0, 0.0); d];
                for k in start..end {
                    let c = self.coeffs[k];
                    if c.norm_sqr() == 0.0 {
                        continue;
                    }
                    for (dst, x) in v.iter_mut().zip(self.vectors.column(k).iter()) {
                        *dst += c * *x;
                    }
                }
                total += sx_expectation(self.n, &v);
            }
            start = end;
        }
        total
    }

    /// Rows `(eigenvalue, overlap, sx)` for debugging exports.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["eigenvalue", "overlap", "sx"])?;
        for k in 0..self.eigenvalues.len() {
            wtr.write_record(&[
                self.eigenvalues[k].to_string(),
                self.overlaps[k].to_string(),
                self.sx[k].to_string(),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Short-iterative-Lanczos propagation for sizes beyond full diagonalization.
#[derive(Debug, Clone, Copy)]
pub struct KrylovSettings {
    pub max_dim: usize,
    /// Per-step bound on the Lanczos error estimate.
    pub tol: f64,
}

impl Default for KrylovSettings {
    fn default() -> Self {
        Self {
            max_dim: 30,
            tol: 1e-12,
        }
    }
}

fn dot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm(a: &[C64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

/// Advance `psi` by at most `dt`; returns the time actually taken.
fn lanczos_step(h: &XxzHamiltonian, psi: &mut [C64], dt: f64, settings: &KrylovSettings) -> f64 {
    let d = psi.len();
    let m_max = settings.max_dim.min(d).max(1);
    let psi_norm = norm(psi);
    let mut basis: Vec<Vec<C64>> = vec![psi.iter().map(|x| x / psi_norm).collect()];
    let mut alpha = Vec::new();
    let mut beta = Vec::new();
    let mut w = vec![C64::new(0.0, 0.0); d];
    loop {
        let k = basis.len() - 1;
        h.apply(&basis[k], &mut w);
        let a = dot(&basis[k], &w).re;
        alpha.push(a);
        // full reorthogonalization
        for v in &basis {
            let c = dot(v, &w);
            for (wi, vi) in w.iter_mut().zip(v) {
                *wi -= c * vi;
            }
        }
        let b = norm(&w);
        if basis.len() == m_max || b < 1e-14 * (1.0 + a.abs()) {
            beta.push(b);
            break;
        }
        beta.push(b);
        basis.push(w.iter().map(|x| x / b).collect());
    }
    let m = alpha.len();
    let t = DMatrix::from_fn(m, m, |r, c| {
        if r == c {
            alpha[r]
        } else if r + 1 == c {
            beta[r]
        } else if c + 1 == r {
            beta[c]
        } else {
            0.0
        }
    });
    let eig = SymmetricEigen::new(t);
    let breakdown = beta[m - 1] < 1e-14 * (1.0 + alpha[m - 1].abs());
    let mut step = dt;
    loop {
        let y: Vec<C64> = (0..m)
            .map(|r| {
                (0..m)
                    .map(|k| {
                        let u = &eig.eigenvectors;
                        C64::from_polar(u[(r, k)] * u[(0, k)], -TAU * eig.eigenvalues[k] * step)
                    })
                    .sum()
            })
            .collect();
        let err = if breakdown {
            0.0
        } else {
            beta[m - 1] * y[m - 1].norm()
        };
        if err <= settings.tol || step < 1e-9 * dt {
            for (i, p) in psi.iter_mut().enumerate() {
                *p = (0..m).map(|k| y[k] * basis[k][i]).sum::<C64>() * psi_norm;
            }
            return step;
        }
        step *= 0.5;
    }
}

fn krylov_evolve(h: &XxzHamiltonian, psi: &mut [C64], t: f64, settings: &KrylovSettings) {
    let mut remaining = t;
    while remaining > 0.0 {
        let taken = lanczos_step(h, psi, remaining, settings);
        remaining -= taken;
        if remaining < 1e-15 * t {
            break;
        }
    }
}

fn check_times(times: &[f64]) -> Result<()> {
    if times.iter().any(|t| !(*t >= 0.0) || !t.is_finite()) {
        return Err(Error::InvalidArgument(
            "times must be finite and nonnegative".into(),
        ));
    }
    if times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidArgument("times must be sorted".into()));
    }
    Ok(())
}

/// State after time `t`: spectral for small systems, Krylov otherwise.
pub fn evolve_state(h: &XxzHamiltonian, psi0: &PureState, t: f64) -> Result<PureState> {
    check_times(&[t])?;
    if h.n() <= FULL_DIAG_LIMIT {
        Ok(SpectralData::compute(h, psi0)?.state_at(t))
    } else {
        let mut amps = psi0.amplitudes.clone();
        krylov_evolve(h, &mut amps, t, &KrylovSettings::default());
        Ok(PureState {
            n: psi0.n,
            amplitudes: amps,
        })
    }
}

/// `<S_x>(t)` on a sorted grid of times in us.
pub fn evolve_magnetization(
    h: &XxzHamiltonian,
    psi0: &PureState,
    times: &[f64],
) -> Result<Vec<f64>> {
    check_times(times)?;
    if psi0.n() != h.n() {
        return Err(Error::InvalidArgument(
            "state and Hamiltonian sizes differ".into(),
        ));
    }
    if h.n() <= FULL_DIAG_LIMIT {
        let spec = SpectralData::compute(h, psi0)?;
        Ok(times.iter().map(|&t| spec.state_at(t).sx_mean()).collect())
    } else {
        let settings = KrylovSettings::default();
        let mut amps = psi0.amplitudes.clone();
        let mut now = 0.0;
        let mut out = Vec::with_capacity(times.len());
        for &t in times {
            krylov_evolve(h, &mut amps, t - now, &settings);
            now = t;
            out.push(sx_expectation(h.n(), &amps));
        }
        Ok(out)
    }
}

/// `sum_k |<psi0|psi_k>|^2 <psi_k|S_x|psi_k>` with degenerate levels grouped.
pub fn diagonal_ensemble_sx(h: &XxzHamiltonian, psi0: &PureState) -> Result<f64> {
    Ok(SpectralData::compute(h, psi0)?.diagonal_ensemble_sx())
}

/// Orthogonal map from the lab frame (field and polarization along x) to the
/// rotated pair frame (field along z, `|->` as the up state). Rows and columns
/// of the result follow the ordering `{->->, -><-, <-->, <-<-}` generalized to
/// `n` spins: spin 0 is the most significant digit and `->` is digit 0.
pub fn frame_map(n: usize) -> DMatrix<f64> {
    let d = 1usize << n;
    let r = std::f64::consts::FRAC_1_SQRT_2;
    // single spin, lab basis (down, up): |->> = (1, 1)/sqrt2, |<-> = (-1, 1)/sqrt2
    let arrow = |digit: usize, lab_bit: usize| -> f64 {
        match (digit, lab_bit) {
            (0, _) => r,
            (_, 0) => -r,
            _ => r,
        }
    };
    DMatrix::from_fn(d, d, |a, s| {
        (0..n)
            .map(|i| {
                let digit = (a >> (n - 1 - i)) & 1;
                arrow(digit, (s >> i) & 1)
            })
            .product()
    })
}

/// `U H U^T` in the rotated pair-frame ordering of [`frame_map`].
pub fn in_pair_frame(h: &XxzHamiltonian) -> DMatrix<f64> {
    let u = frame_map(h.n());
    &u * h.to_dense() * u.transpose()
}
