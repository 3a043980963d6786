//! Privacy countermeasures applied before the assay (the T0 step), plus the
//! verification protocols around them: DNase destruction with a colorimetric
//! indicator, cut-and-choose kit auditing, and a positive process control.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assay::{
    pcr_detect, simulate_residue, AssayParams, DnaseColor, EpgParams, Residue, Specimen, Template,
    TestOutcome, TestResult,
};
use crate::genotype::{FrequencyPanel, GenotypeProfile};

#[derive(Debug, Error)]
pub enum CountermeasureError {
    #[error("dilution panel must be non-empty")]
    EmptyDilutionPanel,
    #[error("randomizing pool has {pool} profiles but up to {needed} are drawn")]
    PoolTooSmall { pool: usize, needed: usize },
    #[error("cut-and-choose needs at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("cut-and-choose verifies DNase presence and needs a destruction step")]
    RequiresDestruction,
    #[error("process control target mass must be positive, got {0}")]
    InvalidControlMass(f64),
    #[error("invalid procedure: {0}")]
    InvalidProcedure(String),
}

/// Distribution of the number of pool profiles a randomizing kit adds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CountDistribution {
    Fixed { value: usize },
    Uniform { lo: usize, hi: usize },
}

impl CountDistribution {
    pub fn max(&self) -> usize {
        match *self {
            Self::Fixed { value } => value,
            Self::Uniform { hi, .. } => hi,
        }
    }

    pub fn sample(&self, rng: &mut ChaCha8Rng) -> usize {
        match *self {
            Self::Fixed { value } => value,
            Self::Uniform { lo, hi } => rng.random_range(lo..=hi),
        }
    }
}

/// Distribution of the template mass given to each added profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MassDistribution {
    Fixed { value: f64 },
    Uniform { lo: f64, hi: f64 },
}

impl MassDistribution {
    pub fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        match *self {
            Self::Fixed { value } => value,
            Self::Uniform { lo, hi } => rng.random_range(lo..hi),
        }
    }
}

/// The privacy step performed on the specimen before testing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum T0 {
    /// No countermeasure; the baseline the paper-style attacks break.
    Identity,
    /// Add a fixed mixture of known profiles to every specimen.
    Dilution {
        panel_profiles: Vec<GenotypeProfile>,
        per_profile_mass: f64,
    },
    /// Add a fresh random assortment of pool profiles per test.
    Randomizing {
        pool: Vec<GenotypeProfile>,
        count_dist: CountDistribution,
        mass_dist: MassDistribution,
    },
    /// Spike synthetic template for every panel allele at every locus.
    AllelicLadder { ladder_mass_per_allele: f64 },
    /// DNase digestion: attenuates all DNA template mass, leaves RNA intact,
    /// and reports a colorimetric indicator.
    Destruction {
        dnase_efficiency: f64,
        color_threshold: f64,
    },
}

impl T0 {
    pub fn kind(&self) -> &'static str {
        match self {
            T0::Identity => "identity",
            T0::Dilution { .. } => "dilution",
            T0::Randomizing { .. } => "randomizing",
            T0::AllelicLadder { .. } => "ladder",
            T0::Destruction { .. } => "dnase",
        }
    }
}

/// Full configuration of a test procedure: the privacy step and the assay
/// and electropherogram parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestProcedure {
    pub t0: T0,
    pub assay: AssayParams,
    pub epg: EpgParams,
}

impl TestProcedure {
    pub fn identity() -> Self {
        Self {
            t0: T0::Identity,
            assay: AssayParams::default(),
            epg: EpgParams::default(),
        }
    }

    pub fn with_t0(t0: T0) -> Self {
        Self {
            t0,
            ..Self::identity()
        }
    }

    pub fn validate(&self) -> Result<(), CountermeasureError> {
        self.assay
            .validate()
            .map_err(|e| CountermeasureError::InvalidProcedure(e.to_string()))?;
        self.epg
            .validate()
            .map_err(|e| CountermeasureError::InvalidProcedure(e.to_string()))?;
        match &self.t0 {
            T0::Identity => Ok(()),
            T0::Dilution { panel_profiles, per_profile_mass } => {
                if panel_profiles.is_empty() {
                    return Err(CountermeasureError::EmptyDilutionPanel);
                }
                if !(per_profile_mass.is_finite() && *per_profile_mass >= 0.0) {
                    return Err(CountermeasureError::InvalidProcedure(
                        "per_profile_mass must be finite and non-negative".into(),
                    ));
                }
                Ok(())
            }
            T0::Randomizing { pool, count_dist, .. } => {
                if pool.len() < count_dist.max() {
                    return Err(CountermeasureError::PoolTooSmall {
                        pool: pool.len(),
                        needed: count_dist.max(),
                    });
                }
                Ok(())
            }
            T0::AllelicLadder { ladder_mass_per_allele } => {
                if !(ladder_mass_per_allele.is_finite() && *ladder_mass_per_allele >= 0.0) {
                    return Err(CountermeasureError::InvalidProcedure(
                        "ladder_mass_per_allele must be finite and non-negative".into(),
                    ));
                }
                Ok(())
            }
            T0::Destruction { dnase_efficiency, .. } => {
                if !(0.0..=1.0).contains(dnase_efficiency) {
                    return Err(CountermeasureError::InvalidProcedure(
                        "dnase_efficiency must be in [0, 1]".into(),
                    ));
                }
                Ok(())
            }
        }
    }
}

/// Result of applying a T0 step.
pub struct T0Outcome {
    pub specimen: Specimen,
    pub color: Option<DnaseColor>,
}

/// Extend the specimen with every panel profile at a fixed mass. Viral
/// copies are untouched.
pub fn apply_dilution(
    specimen: &Specimen,
    panel_profiles: &[GenotypeProfile],
    per_profile_mass: f64,
) -> Result<Specimen, CountermeasureError> {
    if panel_profiles.is_empty() {
        return Err(CountermeasureError::EmptyDilutionPanel);
    }
    let mut out = specimen.clone();
    for profile in panel_profiles {
        out.push_profile(profile.clone(), per_profile_mass);
    }
    Ok(out)
}

/// Draw `n ~ count_dist` distinct pool profiles uniformly and add each with
/// an independently drawn mass. Viral copies are untouched.
pub fn apply_randomizing(
    specimen: &Specimen,
    pool: &[GenotypeProfile],
    count_dist: &CountDistribution,
    mass_dist: &MassDistribution,
    rng: &mut ChaCha8Rng,
) -> Result<Specimen, CountermeasureError> {
    if pool.len() < count_dist.max() {
        return Err(CountermeasureError::PoolTooSmall {
            pool: pool.len(),
            needed: count_dist.max(),
        });
    }
    let n = count_dist.sample(rng);
    // partial Fisher-Yates over pool indices for n distinct picks
    let mut indices: Vec<usize> = (0..pool.len()).collect();
    let mut out = specimen.clone();
    for i in 0..n {
        let j = rng.random_range(i..indices.len());
        indices.swap(i, j);
        let mass = mass_dist.sample(rng);
        out.push_profile(pool[indices[i]].clone(), mass);
    }
    Ok(out)
}

/// Add synthetic template producing a peak at every panel allele at every
/// locus, one artificial contribution per allele.
pub fn apply_allelic_ladder(
    specimen: &Specimen,
    panel: &FrequencyPanel,
    ladder_mass_per_allele: f64,
) -> Specimen {
    let mut out = specimen.clone();
    for locus_idx in 0..panel.num_loci() {
        for &allele in &panel.locus(locus_idx).alleles {
            out.push_contribution(
                Template::LadderAllele {
                    locus: locus_idx,
                    allele,
                },
                ladder_mass_per_allele,
            );
        }
    }
    out
}

/// DNase digestion as deterministic mass attenuation: every template mass is
/// multiplied by `1 - efficiency`; viral RNA and any process-control target
/// are untouched. The indicator shows red when the surviving template mass
/// is at or below `color_threshold`.
pub fn apply_dnase(
    specimen: &Specimen,
    efficiency: f64,
    color_threshold: f64,
) -> (Specimen, DnaseColor) {
    assert!((0.0..=1.0).contains(&efficiency), "efficiency in [0,1]");
    let out = specimen.attenuate_templates(1.0 - efficiency);
    let color = if out.total_template_mass() <= color_threshold {
        DnaseColor::Red
    } else {
        DnaseColor::Blue
    };
    (out, color)
}

/// Dispatch a T0 step.
pub fn apply_t0(
    panel: &FrequencyPanel,
    t0: &T0,
    specimen: &Specimen,
    rng: &mut ChaCha8Rng,
) -> Result<T0Outcome, CountermeasureError> {
    match t0 {
        T0::Identity => Ok(T0Outcome {
            specimen: specimen.clone(),
            color: None,
        }),
        T0::Dilution {
            panel_profiles,
            per_profile_mass,
        } => Ok(T0Outcome {
            specimen: apply_dilution(specimen, panel_profiles, *per_profile_mass)?,
            color: None,
        }),
        T0::Randomizing {
            pool,
            count_dist,
            mass_dist,
        } => Ok(T0Outcome {
            specimen: apply_randomizing(specimen, pool, count_dist, mass_dist, rng)?,
            color: None,
        }),
        T0::AllelicLadder {
            ladder_mass_per_allele,
        } => Ok(T0Outcome {
            specimen: apply_allelic_ladder(specimen, panel, *ladder_mass_per_allele),
            color: None,
        }),
        T0::Destruction {
            dnase_efficiency,
            color_threshold,
        } => {
            let (specimen, color) = apply_dnase(specimen, *dnase_efficiency, *color_threshold);
            Ok(T0Outcome {
                specimen,
                color: Some(color),
            })
        }
    }
}

/// Whether a test kit behaves as specified, and if not, how it cheats.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KitModel {
    Honest,
    /// The destruction chemical kills the virus along with the DNA, forcing
    /// a negative result. Optionally it also destroys the process-control
    /// target, which is what the control is there to catch.
    KillsVirusToo { destroys_control: bool },
    /// No DNase at all; the kit merely emulates the color change.
    FakeColorNoDnase,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AbortReason {
    VerificationFailed,
    ControlFailed,
}

/// Outcome of a verified protocol run: either an abort with its reason, or a
/// completed test with its residue.
#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolOutcome {
    pub aborted: bool,
    pub abort_reason: Option<AbortReason>,
    pub result: Option<TestResult>,
    pub residue: Option<Residue>,
}

impl ProtocolOutcome {
    fn abort(reason: AbortReason) -> Self {
        Self {
            aborted: true,
            abort_reason: Some(reason),
            result: None,
            residue: None,
        }
    }

    fn completed(result: TestResult, residue: Residue) -> Self {
        Self {
            aborted: false,
            abort_reason: None,
            result: Some(result),
            residue: Some(residue),
        }
    }
}

/// How the patient audits the kit's samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerifyMode {
    /// Verify one sample, test one of the untested remainder.
    VerifyOne,
    /// Verify all but one sample, test the remaining one.
    VerifyAllButOne,
}

impl Default for VerifyMode {
    fn default() -> Self {
        Self::VerifyOne
    }
}

// How a single kit sample behaves when the test runs on it.
enum SampleBehavior {
    Honest,
    NoDnaseFakeColor,
    KillsVirus { destroys_control: bool },
}

fn run_test_with_behavior(
    panel: &FrequencyPanel,
    procedure: &TestProcedure,
    behavior: &SampleBehavior,
    specimen: &Specimen,
    rng: &mut ChaCha8Rng,
) -> Result<(TestResult, Residue), CountermeasureError> {
    match behavior {
        SampleBehavior::Honest => crate::assay::run_test(panel, procedure, specimen, rng),
        SampleBehavior::NoDnaseFakeColor => {
            // No destruction happens; the indicator lies.
            let result = pcr_detect(specimen, &procedure.assay);
            let mut residue = simulate_residue(panel, specimen, &procedure.epg, rng);
            residue.verification_color = Some(DnaseColor::Red);
            residue.control_target_detected = specimen.control_target_mass.map(|m| m > 0.0);
            Ok((result, residue))
        }
        SampleBehavior::KillsVirus { destroys_control } => {
            let mut tampered = specimen.clone();
            tampered.viral_rna_copies = 0;
            if *destroys_control && tampered.control_target_mass.is_some() {
                tampered.control_target_mass = Some(0.0);
            }
            crate::assay::run_test(panel, procedure, &tampered, rng)
        }
    }
}

/// Run a test with a process control: a known synthetic target is spiked in
/// before T0 and must be detectable in the residue for a negative result to
/// be trusted. DNase does not degrade the target (it stands for a non-DNA or
/// protected reagent).
pub struct ControlledRun {
    pub result: TestResult,
    pub residue: Residue,
    pub invalid_negative: bool,
}

pub fn process_control(
    panel: &FrequencyPanel,
    procedure: &TestProcedure,
    specimen: &Specimen,
    control_target_mass: f64,
    kit: &KitModel,
    rng: &mut ChaCha8Rng,
) -> Result<ControlledRun, CountermeasureError> {
    if !(control_target_mass.is_finite() && control_target_mass > 0.0) {
        return Err(CountermeasureError::InvalidControlMass(control_target_mass));
    }
    let mut spiked = specimen.clone();
    spiked.spike_control(control_target_mass);
    let behavior = match kit {
        KitModel::Honest => SampleBehavior::Honest,
        KitModel::FakeColorNoDnase => SampleBehavior::NoDnaseFakeColor,
        KitModel::KillsVirusToo { destroys_control } => SampleBehavior::KillsVirus {
            destroys_control: *destroys_control,
        },
    };
    let (result, residue) = run_test_with_behavior(panel, procedure, &behavior, &spiked, rng)?;
    let detected = residue.control_target_detected == Some(true);
    let invalid_negative = result.outcome == TestOutcome::Negative && !detected;
    Ok(ControlledRun {
        result,
        residue,
        invalid_negative,
    })
}

/// The cut-and-choose kit audit. The patient is sampled `n_samples` times;
/// the destruction chemicals are added to every sample; the patient then
/// verifies DNase presence on a random selection with their own reagent and
/// one untested sample is used for the actual test.
///
/// A `FakeColorNoDnase` kit carries exactly one unprotected sample (placed
/// uniformly at random), so `VerifyOne` catches it with probability 1/n and
/// `VerifyAllButOne` with probability (n-1)/n. A `KillsVirusToo` kit passes
/// verification -- DNase really is present -- and is caught only by the
/// process control, when one is used.
#[allow(clippy::too_many_arguments)]
pub fn cut_and_choose(
    panel: &FrequencyPanel,
    procedure: &TestProcedure,
    patient: &Specimen,
    n_samples: usize,
    kit: &KitModel,
    mode: VerifyMode,
    control_target_mass: Option<f64>,
    rng: &mut ChaCha8Rng,
) -> Result<ProtocolOutcome, CountermeasureError> {
    if n_samples < 2 {
        return Err(CountermeasureError::TooFewSamples(n_samples));
    }
    if !matches!(procedure.t0, T0::Destruction { .. }) {
        return Err(CountermeasureError::RequiresDestruction);
    }

    let bad_sample = match kit {
        KitModel::FakeColorNoDnase => Some(rng.random_range(0..n_samples)),
        _ => None,
    };

    let (verified, test_sample): (Vec<usize>, usize) = match mode {
        VerifyMode::VerifyOne => {
            let v = rng.random_range(0..n_samples);
            // test one of the untested remainder, uniformly
            let mut rest: Vec<usize> = (0..n_samples).filter(|&i| i != v).collect();
            let t = rest.swap_remove(rng.random_range(0..rest.len()));
            (vec![v], t)
        }
        VerifyMode::VerifyAllButOne => {
            let t = rng.random_range(0..n_samples);
            ((0..n_samples).filter(|&i| i != t).collect(), t)
        }
    };

    // The patient's own reagent exposes a sample that carries no DNase.
    if let Some(bad) = bad_sample {
        if verified.contains(&bad) {
            return Ok(ProtocolOutcome::abort(AbortReason::VerificationFailed));
        }
    }

    let behavior = match kit {
        KitModel::Honest => SampleBehavior::Honest,
        KitModel::KillsVirusToo { destroys_control } => SampleBehavior::KillsVirus {
            destroys_control: *destroys_control,
        },
        KitModel::FakeColorNoDnase => {
            if Some(test_sample) == bad_sample {
                SampleBehavior::NoDnaseFakeColor
            } else {
                SampleBehavior::Honest
            }
        }
    };

    let mut specimen = patient.clone();
    if let Some(mass) = control_target_mass {
        if !(mass.is_finite() && mass > 0.0) {
            return Err(CountermeasureError::InvalidControlMass(mass));
        }
        specimen.spike_control(mass);
    }

    let (result, residue) = run_test_with_behavior(panel, procedure, &behavior, &specimen, rng)?;

    if control_target_mass.is_some() {
        let detected = residue.control_target_detected == Some(true);
        if result.outcome == TestOutcome::Negative && !detected {
            return Ok(ProtocolOutcome::abort(AbortReason::ControlFailed));
        }
    }
    Ok(ProtocolOutcome::completed(result, residue))
}
