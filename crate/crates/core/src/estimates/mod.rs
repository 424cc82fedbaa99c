//! Empirical surrogates of the interior estimates: gradient ratios, the
//! appendix auxiliary function, Korevaar cutoffs, doubling sups and Hessian
//! probes, plus the CSV record stream they feed.

mod appendix;
mod ball;
mod cutoff;
mod doubling;
mod record;

pub use appendix::{appendix_test_function, AppendixChain, AppendixW};
pub use ball::{gradient_ratio, oscillation, Ball, GradientRatio};
pub use cutoff::{
    korevaar_cutoff, radial_term, shell_constant, smallest_sign_alpha, CutoffNode, CutoffParams, KorevaarCutoff,
    ALPHA_SWEEP, DEFAULT_CUTOFF_SCALE,
};
pub use doubling::{doubling_check, doubling_fit, hessian_probe, DoublingFit, DoublingRecord, HessianProbe};
pub use record::{grid_label, read_records_csv, write_records_csv, EstimateRecord, RECORD_HEADER};
