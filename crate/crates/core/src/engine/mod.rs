//! Chains, seeding and multi-chain diagnostics.

pub mod chain;
pub mod diagnostics;
pub mod seed;

pub use chain::{chain_rng, Chain, ChainConfig, ChainStats, ProposalMix, SampleRecord, StepKind};
pub use diagnostics::{
    diagnose, is_non_increasing, linear_fit, log_log_fit, moving_average3, total_variation,
    ChainSeries, CheckpointRow, DiagnosticsConfig, DiagnosticsError, DiagnosticsReport, Histogram,
    PowerFit,
};
pub use seed::{seed_plan, SeedConfig, SeedError};
