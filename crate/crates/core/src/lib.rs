//! Simulation framework for measuring how much human DNA information the
//! residues of virus-detection tests leak, and how well privacy
//! countermeasures suppress that leakage.
//!
//! The pieces fit together like this:
//!
//! * [`genotype`] samples synthetic STR profiles from allele-frequency
//!   panels under Hardy-Weinberg equilibrium.
//! * [`assay`] models the test itself: specimen mixing, deterministic rt-PCR
//!   viral detection, and the simulated electropherogram residue the test
//!   leaves behind (Gamma peak heights, stutter, drop-in, drop-out).
//! * [`countermeasures`] implements the privacy step run before the assay:
//!   dilution into a fixed mixture, per-test randomized mixtures, allelic
//!   ladders, DNase destruction with a colorimetric indicator, and the
//!   cut-and-choose audit with a positive process control.
//! * [`attackers`] implements profiling strategies against residues, from a
//!   presence-only baseline to likelihood-ratio tests, membership inference,
//!   mixture deconvolution, and contributor-count inference.
//! * [`game`] runs the distinguishing game -- an adversary submits two
//!   profiles, a challenger tests one of them -- and estimates the
//!   adversary's advantage with Wilson confidence intervals, plus the
//!   statistical-equivalence tooling for comparing residue distributions.
//! * [`acceptance`] packages the end-to-end verification suite run by both
//!   `cargo test` and the CLI's `repro` subcommand.
//!
//! Everything randomized draws from seed-derived [`rng::SeedTree`] streams,
//! so results are bit-identical across runs and thread counts.

pub mod assay;
pub mod attackers;
pub mod countermeasures;
pub mod exec;
pub mod game;
pub mod genotype;
pub mod rng;
pub mod stats;

pub mod acceptance;
