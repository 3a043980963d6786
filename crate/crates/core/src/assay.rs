//! The test procedure model: specimen construction and mixing, rt-PCR viral
//! detection, and the simulated electropherogram (EPG) residue the test
//! leaves behind.
//!
//! Peak heights are Gamma-distributed with mass-proportional mean, stutter
//! appears one repeat unit below each parent allele, drop-in peaks arrive as
//! a per-locus Poisson process near the analytical threshold, and any peak
//! below the threshold drops out. Viral detection is deterministic given the
//! copy count; the game is about DNA leakage, not assay sensitivity.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::countermeasures::{apply_t0, CountermeasureError, T0Outcome, TestProcedure};
use crate::genotype::{Allele, FrequencyPanel, GenotypeProfile};

/// Drop-in peak heights are Gamma with this multiple of the analytical
/// threshold as their mean, keeping them confusable with minor contributors.
pub const DROPIN_MEAN_FACTOR: f64 = 1.5;

#[derive(Debug, Error)]
pub enum AssayError {
    #[error("mix requires at least one part")]
    EmptyMix,
    #[error("mix proportions must be positive, got {0}")]
    NonPositiveProportion(f64),
    #[error("template mass must be finite and non-negative, got {0}")]
    InvalidMass(f64),
    #[error("invalid assay parameters: {0}")]
    InvalidParams(String),
}

/// A piece of template DNA in a specimen: either a person's full profile or
/// one synthetic ladder fragment producing a single allele at a single locus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Template {
    Profile(GenotypeProfile),
    LadderAllele { locus: usize, allele: Allele },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contribution {
    pub template: Template,
    pub mass: f64,
}

/// What the swab (plus any added material) contains when it reaches the test.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Specimen {
    pub contributions: Vec<Contribution>,
    pub viral_rna_copies: u64,
    /// Synthetic process-control target mass, if one was spiked in.
    pub control_target_mass: Option<f64>,
}

impl Specimen {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn from_profile(profile: GenotypeProfile, mass: f64) -> Self {
        let mut s = Self::empty();
        s.push_contribution(Template::Profile(profile), mass);
        s
    }

    pub fn with_viral_copies(mut self, copies: u64) -> Self {
        self.viral_rna_copies = copies;
        self
    }

    /// Add a contribution; zero-mass templates are dropped outright so the
    /// "some mass is positive" invariant holds whenever contributions exist.
    pub fn push_contribution(&mut self, template: Template, mass: f64) {
        assert!(mass.is_finite() && mass >= 0.0, "invalid mass {mass}");
        if mass > 0.0 {
            self.contributions.push(Contribution { template, mass });
        }
    }

    pub fn push_profile(&mut self, profile: GenotypeProfile, mass: f64) {
        self.push_contribution(Template::Profile(profile), mass);
    }

    pub fn spike_control(&mut self, mass: f64) {
        assert!(mass > 0.0, "control target mass must be positive");
        self.control_target_mass = Some(mass);
    }

    /// Total template mass across all contributions.
    pub fn total_template_mass(&self) -> f64 {
        self.contributions.iter().map(|c| c.mass).sum()
    }

    /// Scale every template mass by `factor`, dropping contributions that
    /// reach zero. Viral copies and control target are untouched.
    pub fn attenuate_templates(&self, factor: f64) -> Self {
        assert!((0.0..=1.0).contains(&factor));
        let contributions = self
            .contributions
            .iter()
            .filter_map(|c| {
                let mass = c.mass * factor;
                (mass > 0.0).then(|| Contribution {
                    template: c.template.clone(),
                    mass,
                })
            })
            .collect();
        Self {
            contributions,
            viral_rna_copies: self.viral_rna_copies,
            control_target_mass: self.control_target_mass,
        }
    }
}

/// Mix specimen parts by proportion: template masses scale, viral copies
/// scale with half-up rounding per part and then sum.
pub fn mix(parts: &[(Specimen, f64)]) -> Result<Specimen, AssayError> {
    if parts.is_empty() {
        return Err(AssayError::EmptyMix);
    }
    let mut out = Specimen::empty();
    let mut control: Option<f64> = None;
    for (specimen, proportion) in parts {
        if !(proportion.is_finite() && *proportion > 0.0) {
            return Err(AssayError::NonPositiveProportion(*proportion));
        }
        for c in &specimen.contributions {
            if !c.mass.is_finite() || c.mass < 0.0 {
                return Err(AssayError::InvalidMass(c.mass));
            }
            out.push_contribution(c.template.clone(), c.mass * proportion);
        }
        // f64::round is half-away-from-zero, i.e. half-up for non-negatives
        out.viral_rna_copies += (specimen.viral_rna_copies as f64 * proportion).round() as u64;
        if let Some(m) = specimen.control_target_mass {
            *control.get_or_insert(0.0) += m * proportion;
        }
    }
    out.control_target_mass = control;
    Ok(out)
}

/// rt-PCR amplification/detection parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AssayParams {
    pub max_cycles: u32,
    pub detection_copies: f64,
    pub amplification_efficiency: f64,
    pub limit_of_detection: u64,
}

impl Default for AssayParams {
    fn default() -> Self {
        Self {
            max_cycles: 40,
            detection_copies: 1e9,
            amplification_efficiency: 1.9,
            limit_of_detection: 10,
        }
    }
}

impl AssayParams {
    pub fn validate(&self) -> Result<(), AssayError> {
        if self.max_cycles < 1 {
            return Err(AssayError::InvalidParams("max_cycles must be >= 1".into()));
        }
        if !(self.detection_copies.is_finite() && self.detection_copies > 0.0) {
            return Err(AssayError::InvalidParams(
                "detection_copies must be positive".into(),
            ));
        }
        if !(self.amplification_efficiency > 1.0 && self.amplification_efficiency <= 2.0) {
            return Err(AssayError::InvalidParams(
                "amplification_efficiency must be in (1, 2]".into(),
            ));
        }
        Ok(())
    }
}

/// Electropherogram simulation parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EpgParams {
    /// Expected RFU per unit of template mass for one allele copy.
    pub mean_peak_height: f64,
    /// Coefficient of variation of a single peak's height. Zero makes
    /// heights deterministic, which some tests exploit.
    pub peak_height_cv: f64,
    /// Expected stutter height as a fraction of the parent copy's mean.
    pub stutter_ratio: f64,
    /// Expected spurious peaks per locus.
    pub dropin_rate: f64,
    /// RFU cutoff below which peaks drop out of the residue.
    pub analytical_threshold: f64,
}

impl Default for EpgParams {
    fn default() -> Self {
        Self {
            mean_peak_height: 1000.0,
            peak_height_cv: 0.3,
            stutter_ratio: 0.08,
            dropin_rate: 0.1,
            analytical_threshold: 50.0,
        }
    }
}

impl EpgParams {
    pub fn validate(&self) -> Result<(), AssayError> {
        let all_non_negative = self.mean_peak_height >= 0.0
            && self.peak_height_cv >= 0.0
            && self.stutter_ratio >= 0.0
            && self.dropin_rate >= 0.0
            && self.analytical_threshold >= 0.0;
        if !all_non_negative {
            return Err(AssayError::InvalidParams(
                "EPG parameters must be non-negative".into(),
            ));
        }
        if self.stutter_ratio >= 1.0 {
            return Err(AssayError::InvalidParams("stutter_ratio must be < 1".into()));
        }
        Ok(())
    }

    pub fn dropin_mean_height(&self) -> f64 {
        DROPIN_MEAN_FACTOR * self.analytical_threshold
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub allele: Allele,
    pub height: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DnaseColor {
    Blue,
    Red,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocusPeaks {
    pub locus: String,
    pub peaks: Vec<Peak>,
}

/// What is left after the test: simulated EPG peaks per locus plus the
/// viral-material flag and process metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct Residue {
    pub loci: Vec<LocusPeaks>,
    pub viral_material_present: bool,
    pub control_target_detected: Option<bool>,
    pub verification_color: Option<DnaseColor>,
}

impl Residue {
    pub fn peaks_at(&self, locus_idx: usize) -> &[Peak] {
        &self.loci[locus_idx].peaks
    }

    pub fn total_peak_count(&self) -> usize {
        self.loci.iter().map(|l| l.peaks.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.total_peak_count() == 0
    }

    /// Canonical JSON form: loci sorted by name, peaks sorted by allele,
    /// heights with exactly three fractional digits. Golden tests compare
    /// this byte for byte.
    pub fn to_json_string(&self) -> String {
        let mut loci: Vec<&LocusPeaks> = self.loci.iter().collect();
        loci.sort_by(|a, b| a.locus.cmp(&b.locus));
        let mut out = String::new();
        out.push_str("{\"viral_material_present\":");
        out.push_str(if self.viral_material_present { "true" } else { "false" });
        out.push_str(",\"control_target_detected\":");
        match self.control_target_detected {
            None => out.push_str("null"),
            Some(true) => out.push_str("true"),
            Some(false) => out.push_str("false"),
        }
        out.push_str(",\"verification_color\":");
        match self.verification_color {
            None => out.push_str("\"none\""),
            Some(DnaseColor::Blue) => out.push_str("\"blue\""),
            Some(DnaseColor::Red) => out.push_str("\"red\""),
        }
        out.push_str(",\"loci\":[");
        for (i, lp) in loci.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            let _ = write!(out, "{{\"locus\":{:?},\"peaks\":[", lp.locus);
            for (j, p) in lp.peaks.iter().enumerate() {
                if j > 0 {
                    out.push(',');
                }
                let _ = write!(out, "{{\"allele\":{},\"height\":{:.3}}}", p.allele, p.height);
            }
            out.push_str("]}");
        }
        out.push_str("]}");
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TestOutcome {
    Positive,
    Negative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestResult {
    pub outcome: TestOutcome,
    pub ct_cycle: Option<u32>,
}

impl TestResult {
    pub fn is_positive(&self) -> bool {
        self.outcome == TestOutcome::Positive
    }
}

/// Deterministic rt-PCR model: amplify the viral copy count by the
/// efficiency factor per cycle; positive at the first cycle the detection
/// threshold is met, provided the initial copies reach the limit of
/// detection.
pub fn pcr_detect(specimen: &Specimen, params: &AssayParams) -> TestResult {
    debug_assert!(params.validate().is_ok());
    let copies = specimen.viral_rna_copies;
    if copies == 0 || copies < params.limit_of_detection {
        return TestResult {
            outcome: TestOutcome::Negative,
            ct_cycle: None,
        };
    }
    let mut amplified = copies as f64;
    for cycle in 0..=params.max_cycles {
        if amplified >= params.detection_copies {
            return TestResult {
                outcome: TestOutcome::Positive,
                ct_cycle: Some(cycle),
            };
        }
        amplified *= params.amplification_efficiency;
    }
    TestResult {
        outcome: TestOutcome::Negative,
        ct_cycle: None,
    }
}

// One Gamma peak-height draw with the given mean and CV. CV = 0 degenerates
// to the mean itself.
fn gamma_height(mean: f64, cv: f64, rng: &mut ChaCha8Rng) -> f64 {
    if mean <= 0.0 {
        return 0.0;
    }
    if cv == 0.0 {
        return mean;
    }
    let shape = 1.0 / (cv * cv);
    let scale = mean * cv * cv;
    Gamma::new(shape, scale).expect("valid gamma").sample(rng)
}

/// Simulate the residue of profiling a specimen.
pub fn simulate_residue(
    panel: &FrequencyPanel,
    specimen: &Specimen,
    epg: &EpgParams,
    rng: &mut ChaCha8Rng,
) -> Residue {
    debug_assert!(epg.validate().is_ok());
    let mut loci = Vec::with_capacity(panel.num_loci());
    for locus_idx in 0..panel.num_loci() {
        let mut heights: BTreeMap<Allele, f64> = BTreeMap::new();
        let mut add_copy = |allele: Allele, mass: f64, rng: &mut ChaCha8Rng| {
            let h = gamma_height(mass * epg.mean_peak_height, epg.peak_height_cv, rng);
            *heights.entry(allele).or_insert(0.0) += h;
            if epg.stutter_ratio > 0.0 && allele.0 > 0 {
                let s = gamma_height(
                    epg.stutter_ratio * mass * epg.mean_peak_height,
                    epg.peak_height_cv,
                    rng,
                );
                *heights.entry(Allele(allele.0 - 1)).or_insert(0.0) += s;
            }
        };
        for contribution in &specimen.contributions {
            match &contribution.template {
                Template::Profile(profile) => {
                    let g = profile.genotype(locus_idx);
                    add_copy(g.first(), contribution.mass, rng);
                    add_copy(g.second(), contribution.mass, rng);
                }
                Template::LadderAllele { locus, allele } => {
                    if *locus == locus_idx {
                        add_copy(*allele, contribution.mass, rng);
                    }
                }
            }
        }
        if epg.dropin_rate > 0.0 {
            let n = Poisson::new(epg.dropin_rate).expect("valid poisson").sample(rng) as u64;
            let alleles = &panel.locus(locus_idx).alleles;
            for _ in 0..n {
                let allele = alleles[rng.random_range(0..alleles.len())];
                let h = gamma_height(epg.dropin_mean_height(), epg.peak_height_cv, rng);
                *heights.entry(allele).or_insert(0.0) += h;
            }
        }
        let peaks = heights
            .into_iter()
            .filter(|&(_, h)| h >= epg.analytical_threshold && h > 0.0)
            .map(|(allele, height)| Peak { allele, height })
            .collect();
        loci.push(LocusPeaks {
            locus: panel.locus(locus_idx).name.clone(),
            peaks,
        });
    }
    Residue {
        loci,
        viral_material_present: specimen.viral_rna_copies > 0,
        control_target_detected: None,
        verification_color: None,
    }
}

/// Run the full test procedure on a specimen: privacy step, viral detection,
/// then residue simulation on whatever the privacy step left behind.
pub fn run_test(
    panel: &FrequencyPanel,
    procedure: &TestProcedure,
    specimen: &Specimen,
    rng: &mut ChaCha8Rng,
) -> Result<(TestResult, Residue), CountermeasureError> {
    let T0Outcome { specimen: post, color } = apply_t0(panel, &procedure.t0, specimen, rng)?;
    let result = pcr_detect(&post, &procedure.assay);
    let mut residue = simulate_residue(panel, &post, &procedure.epg, rng);
    residue.verification_color = color;
    residue.control_target_detected = post.control_target_mass.map(|m| m > 0.0);
    Ok((result, residue))
}
