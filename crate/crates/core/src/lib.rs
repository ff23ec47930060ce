//! Simulation of OAM (orbital angular momentum) intensity correlations in
//! pseudothermal light, and recovery of object signatures from them.
//!
//! The pipeline mirrors a two-arm Hanbury Brown–Twiss correlator in the OAM
//! basis:
//!
//! 1. [`field`] builds a polar grid and draws delta-correlated circular
//!    complex Gaussian speckle fields from a counter-based stream.
//! 2. [`mask`] multiplies the test-arm copy by an object transmission.
//! 3. [`oam`] projects both arms onto OAM modes and squares the amplitudes.
//! 4. [`correlate`] accumulates the ensemble and produces the normalized
//!    `g2(l_t, l_r)` matrix with error bars.
//! 5. [`oracle`] evaluates the analytic signal term for comparison.
//! 6. [`identify`] turns a matrix back into a symmetry order or a fractional
//!    winding number.
//!
//! [`experiment`] and [`io`] wire the pieces to JSON configs and CSV / PGM
//! output files.

pub mod correlate;
pub mod error;
pub mod experiment;
pub mod field;
pub mod identify;
pub mod io;
pub mod mask;
pub mod oam;
pub mod oracle;
pub mod parallel;
pub mod rng;

pub use correlate::{
    delta_g2_from_matrix, run_ensemble, run_repeats, CorrelationAccumulator, CorrelationMatrix,
    EnsembleSpec, Execution, ModeMatrix, Provenance, RepeatSpread,
};
pub use error::{Error, Result};
pub use field::{
    generate_realization, make_grid, total_power, CoherenceSpec, Envelope, PolarGrid, SpeckleField,
};
pub use identify::{
    detect_symmetry, diagonal_means, extract_row, fit_fractional, FractionalFit, RowPoint,
    SymmetryReport,
};
pub use mask::{apply_mask, evaluate_mask, floor_decompose, FloorDecomposition, ObjectMask};
pub use oam::{project_oam, spectrum_intensity, IntensitySpectrum, OamSpectrum};
pub use oracle::{analytic_fractional, analytic_slits, quadrature_signal, SignalProfile};

pub use num_complex::Complex64;
