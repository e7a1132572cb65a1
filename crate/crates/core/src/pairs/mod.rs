//! Pair models: strongly interacting spins clustered into pairs whose
//! closed-form spectra give the late-time magnetization.

pub mod decomposition;
pub mod ensemble;
pub mod matching;
pub mod spectrum;

pub use decomposition::{match_pairs, match_pairs_with, PairDecomposition, PairUnit};
pub use ensemble::{
    diagonal_magnetization, ensemble_field_sweep, pair_sweep_rows, solve_beta_for_fields,
    solve_canonical_mean_field, solve_global_beta, solve_mean_field, write_pair_sweep_csv,
    EnsembleCurve, EnsembleKind, MeanFieldSettings, MeanFieldSolution, PairSweepRow, SweepPoint,
};
pub use matching::{MatchingMethod, EXACT_MATCHING_LIMIT};
pub use spectrum::{
    canonical_pair_energy, canonical_pair_sx, pair_diagonal_sx, pair_matrix, pair_spectrum,
    uniform_disorder_average, PairSpectrum,
};
