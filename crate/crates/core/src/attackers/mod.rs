//! Attacker strategies against test residues, one per knowledge scenario:
//! the attacker may or may not know the victim's profile, and may or may not
//! know the hiding mixture's composition. All strategies are built on the
//! same likelihood kernel ([`kernel`]) and are deterministic given their
//! inputs and random stream.

pub mod kernel;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assay::{run_test, EpgParams, Peak, Residue, Specimen};
use crate::countermeasures::TestProcedure;
use crate::genotype::{
    sample_genotype, Allele, FrequencyPanel, Genotype, GenotypeProfile,
};
use crate::rng::SeedTree;
use kernel::{log_mean_exp, DoseMap, LocusEvaluator};

#[derive(Debug, Error)]
pub enum AttackError {
    #[error("scenario requires a known victim profile")]
    MissingVictim,
    #[error("scenario requires a known mixture composition")]
    MissingMixture,
    #[error("hypothesis references allele {allele} outside the panel at locus {locus}")]
    AlleleOutsidePanel { locus: String, allele: Allele },
    #[error("invalid attacker parameters: {0}")]
    InvalidParams(String),
}

/// Which knowledge the attacker holds (Table rows A-D of the threat model:
/// victim profile known/unknown x mixture composition known/unknown).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    /// Victim known, mixture known: confirm the victim's presence.
    KnownVictimKnownMixture,
    /// Victim known, mixture unknown: membership inference.
    KnownVictimUnknownMixture,
    /// Victim unknown, mixture known: isolate the victim's profile.
    UnknownVictimKnownMixture,
    /// Victim unknown, mixture unknown: profile everyone, then guess.
    UnknownVictimUnknownMixture,
}

/// Everything an attacker is entitled to know in its scenario.
#[derive(Debug, Clone)]
pub struct AttackerContext<'a> {
    pub scenario: Scenario,
    pub known_victim: Option<&'a GenotypeProfile>,
    pub known_mixture: Option<&'a [GenotypeProfile]>,
    pub population: &'a FrequencyPanel,
    /// The generative EPG parameters, assumed known exactly (the strongest
    /// plausible adversary). Feed deliberately wrong values to model a
    /// degraded-knowledge attacker.
    pub epg: EpgParams,
    /// Template mass the attacker assumes for the victim.
    pub victim_mass: f64,
    /// Template mass the attacker assumes per known-mixture contributor.
    pub mixture_mass: f64,
    /// Monte-Carlo sample count for marginalizing unknown contributors.
    pub marginal_samples: usize,
}

impl<'a> AttackerContext<'a> {
    pub fn scenario_a(
        victim: &'a GenotypeProfile,
        mixture: &'a [GenotypeProfile],
        population: &'a FrequencyPanel,
        epg: EpgParams,
    ) -> Self {
        Self {
            scenario: Scenario::KnownVictimKnownMixture,
            known_victim: Some(victim),
            known_mixture: Some(mixture),
            population,
            epg,
            victim_mass: 1.0,
            mixture_mass: 1.0,
            marginal_samples: 100,
        }
    }

    pub fn scenario_b(
        victim: &'a GenotypeProfile,
        population: &'a FrequencyPanel,
        epg: EpgParams,
    ) -> Self {
        Self {
            scenario: Scenario::KnownVictimUnknownMixture,
            known_victim: Some(victim),
            known_mixture: None,
            population,
            epg,
            victim_mass: 1.0,
            mixture_mass: 1.0,
            marginal_samples: 100,
        }
    }

    pub fn scenario_c(
        mixture: &'a [GenotypeProfile],
        population: &'a FrequencyPanel,
        epg: EpgParams,
    ) -> Self {
        Self {
            scenario: Scenario::UnknownVictimKnownMixture,
            known_victim: None,
            known_mixture: Some(mixture),
            population,
            epg,
            victim_mass: 1.0,
            mixture_mass: 1.0,
            marginal_samples: 100,
        }
    }

    pub fn scenario_d(population: &'a FrequencyPanel, epg: EpgParams) -> Self {
        Self {
            scenario: Scenario::UnknownVictimUnknownMixture,
            known_victim: None,
            known_mixture: None,
            population,
            epg,
            victim_mass: 1.0,
            mixture_mass: 1.0,
            marginal_samples: 100,
        }
    }

    pub fn validate(&self) -> Result<(), AttackError> {
        use Scenario::*;
        let needs_victim = matches!(self.scenario, KnownVictimKnownMixture | KnownVictimUnknownMixture);
        let needs_mixture = matches!(self.scenario, KnownVictimKnownMixture | UnknownVictimKnownMixture);
        if needs_victim && self.known_victim.is_none() {
            return Err(AttackError::MissingVictim);
        }
        if needs_mixture && self.known_mixture.is_none() {
            return Err(AttackError::MissingMixture);
        }
        if !(self.victim_mass > 0.0 && self.mixture_mass > 0.0) {
            return Err(AttackError::InvalidParams("hypothesis masses must be positive".into()));
        }
        if self.marginal_samples == 0 {
            return Err(AttackError::InvalidParams("marginal_samples must be >= 1".into()));
        }
        Ok(())
    }
}

/// Align residue loci to panel loci by name. Loci missing from the residue
/// count as peak-free, so attackers are invariant to locus reordering.
fn peaks_by_panel<'r>(residue: &'r Residue, panel: &FrequencyPanel) -> Vec<&'r [Peak]> {
    panel
        .loci()
        .iter()
        .map(|locus| {
            residue
                .loci
                .iter()
                .find(|lp| lp.locus == locus.name)
                .map_or(&[][..], |lp| lp.peaks.as_slice())
        })
        .collect()
}

/// Log-likelihood of the whole residue under a concrete set of contributors
/// (plus optional per-allele ladder dose), loci independent.
pub fn residue_log_likelihood(
    residue: &Residue,
    contributors: &[(&GenotypeProfile, f64)],
    ladder_mass: f64,
    panel: &FrequencyPanel,
    epg: &EpgParams,
) -> Result<f64, AttackError> {
    let peaks = peaks_by_panel(residue, panel);
    let mut total = 0.0;
    for (l, locus) in panel.loci().iter().enumerate() {
        for (profile, _) in contributors {
            let g = profile.genotype(l);
            for a in g.alleles() {
                if !panel.contains(l, a) {
                    return Err(AttackError::AlleleOutsidePanel {
                        locus: locus.name.clone(),
                        allele: a,
                    });
                }
            }
        }
        let mut eval = LocusEvaluator::new(locus, epg, peaks[l]);
        let mut doses = DoseMap::new();
        for (profile, mass) in contributors {
            doses.add_genotype(profile.genotype(l), *mass, epg.stutter_ratio);
        }
        if ladder_mass > 0.0 {
            for &a in &locus.alleles {
                doses.add_copy(a, ladder_mass, epg.stutter_ratio);
            }
        }
        total += eval.log_likelihood(&doses);
    }
    Ok(total)
}

/// The likelihood of one locus's peaks under hypothesized contributor
/// genotypes and masses.
pub fn locus_peak_likelihood(
    observed: &[Peak],
    hypothesis: &[(Genotype, f64)],
    panel: &FrequencyPanel,
    locus_idx: usize,
    epg: &EpgParams,
) -> Result<f64, AttackError> {
    let locus = panel.locus(locus_idx);
    let mut doses = DoseMap::new();
    for &(g, mass) in hypothesis {
        if !(mass > 0.0) {
            return Err(AttackError::InvalidParams("hypothesis masses must be positive".into()));
        }
        for a in g.alleles() {
            if !panel.contains(locus_idx, a) {
                return Err(AttackError::AlleleOutsidePanel {
                    locus: locus.name.clone(),
                    allele: a,
                });
            }
        }
        doses.add_genotype(g, mass, epg.stutter_ratio);
    }
    let mut eval = LocusEvaluator::new(locus, epg, observed);
    Ok(eval.log_likelihood(&doses))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Presence {
    Present,
    Absent,
}

/// Output of the confirm attack: the decision and the evidence behind it.
#[derive(Debug, Clone, Copy)]
pub struct ConfirmOutcome {
    pub decision: Presence,
    /// `ll_present - ll_absent`; positive favors the victim's presence.
    pub log_lr: f64,
    pub ll_present: f64,
    pub ll_absent: f64,
}

/// Scenario A: victim and mixture both known. Likelihood-ratio test of
/// "mixture plus victim" against "mixture plus an unknown person", the
/// unknown marginalized per locus by Monte-Carlo over the population.
pub fn attack_confirm_known(
    ctx: &AttackerContext<'_>,
    residue: &Residue,
    rng: &mut ChaCha8Rng,
) -> Result<ConfirmOutcome, AttackError> {
    ctx.validate()?;
    let victim = ctx.known_victim.ok_or(AttackError::MissingVictim)?;
    let mixture = ctx.known_mixture.ok_or(AttackError::MissingMixture)?;
    let panel = ctx.population;
    let peaks = peaks_by_panel(residue, panel);

    let mut ll_present = 0.0;
    let mut ll_absent = 0.0;
    for (l, locus) in panel.loci().iter().enumerate() {
        let mut eval = LocusEvaluator::new(locus, &ctx.epg, peaks[l]);
        let mut base = DoseMap::new();
        for profile in mixture {
            base.add_genotype(profile.genotype(l), ctx.mixture_mass, ctx.epg.stutter_ratio);
        }

        let mut with_victim = base.clone();
        with_victim.add_genotype(victim.genotype(l), ctx.victim_mass, ctx.epg.stutter_ratio);
        ll_present += eval.log_likelihood(&with_victim);

        let lls: Vec<f64> = (0..ctx.marginal_samples)
            .map(|_| {
                let g = panel.sample_locus_genotype(l, rng);
                let mut doses = base.clone();
                doses.add_genotype(g, ctx.victim_mass, ctx.epg.stutter_ratio);
                eval.log_likelihood(&doses)
            })
            .collect();
        ll_absent += log_mean_exp(&lls);
    }

    let log_lr = ll_present - ll_absent;
    // an exact tie carries zero evidence; guess with the attacker's coin
    let decision = if log_lr > 0.0 {
        Presence::Present
    } else if log_lr < 0.0 {
        Presence::Absent
    } else if rng.random::<bool>() {
        Presence::Present
    } else {
        Presence::Absent
    };
    Ok(ConfirmOutcome {
        decision,
        log_lr,
        ll_present,
        ll_absent,
    })
}

/// The membership statistic behind scenario B: summed over loci, how much
/// more present the victim's alleles are in the residue than a random
/// population member's would be. Exactly mean-zero under the null.
pub fn membership_statistic(
    residue: &Residue,
    victim: &GenotypeProfile,
    panel: &FrequencyPanel,
) -> f64 {
    let peaks = peaks_by_panel(residue, panel);
    let mut stat = 0.0;
    for l in 0..panel.num_loci() {
        let observed: Vec<Allele> = peaks[l].iter().map(|p| p.allele).collect();
        let g = victim.genotype(l);
        let own: f64 = g
            .alleles()
            .iter()
            .map(|a| if observed.contains(a) { 0.5 } else { 0.0 })
            .sum();
        let expected: f64 = observed
            .iter()
            .filter_map(|&a| panel.freq(l, a))
            .sum();
        stat += own - expected;
    }
    stat
}

/// Calibrate the membership decision threshold to a target false-positive
/// rate on virus-free residues of random population members, scored against
/// independent random victims.
pub fn calibrate_membership_threshold(
    panel: &FrequencyPanel,
    procedure: &TestProcedure,
    trials: usize,
    false_positive_rate: f64,
    seed: u64,
) -> f64 {
    assert!(trials > 0);
    assert!((0.0..1.0).contains(&false_positive_rate));
    let tree = SeedTree::new(seed).child("homer-calibration");
    let mut stats: Vec<f64> = crate::exec::run_trials(trials, |i| {
        let node = tree.index(i as u64);
        let donor = sample_genotype(panel, &mut node.child("donor").rng());
        let victim = sample_genotype(panel, &mut node.child("victim").rng());
        let specimen = Specimen::from_profile(donor, 1.0);
        let (_, residue) = run_test(panel, procedure, &specimen, &mut node.child("test").rng())
            .expect("calibration procedure must not fail");
        membership_statistic(&residue, &victim, panel)
    });
    stats.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let rank = ((1.0 - false_positive_rate) * trials as f64).ceil() as usize;
    stats[rank.min(trials - 1)]
}

/// Scenario B: victim known, mixture unknown. Threshold test on the
/// membership statistic; the threshold comes from
/// [`calibrate_membership_threshold`].
pub fn attack_membership_unknown_mixture(
    ctx: &AttackerContext<'_>,
    residue: &Residue,
    threshold: f64,
) -> Result<(Presence, f64), AttackError> {
    ctx.validate()?;
    let victim = ctx.known_victim.ok_or(AttackError::MissingVictim)?;
    let stat = membership_statistic(residue, victim, ctx.population);
    let decision = if stat > threshold { Presence::Present } else { Presence::Absent };
    Ok((decision, stat))
}

/// One locus's deconvolution: candidate genotypes ranked by likelihood.
#[derive(Debug, Clone)]
pub struct RankedGenotype {
    pub genotype: Genotype,
    pub log_likelihood: f64,
    /// Posterior weight: normalized Hardy-Weinberg prior times likelihood.
    pub posterior: f64,
}

#[derive(Debug, Clone)]
pub struct InferredProfile {
    /// Per locus, candidates sorted by descending likelihood (ties broken
    /// toward the lexicographically smaller pair).
    pub loci: Vec<Vec<RankedGenotype>>,
}

impl InferredProfile {
    /// The maximum-likelihood genotype per locus.
    pub fn map_profile(&self) -> GenotypeProfile {
        GenotypeProfile {
            genotypes: self.loci.iter().map(|r| r[0].genotype).collect(),
        }
    }

    /// The profile taking each locus's `rank`-th candidate (clamped).
    pub fn rank_profile(&self, rank: usize) -> GenotypeProfile {
        GenotypeProfile {
            genotypes: self
                .loci
                .iter()
                .map(|r| r[rank.min(r.len() - 1)].genotype)
                .collect(),
        }
    }
}

fn rank_candidates(
    panel: &FrequencyPanel,
    locus_idx: usize,
    mut scored: Vec<(Genotype, f64)>,
) -> Vec<RankedGenotype> {
    scored.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.0.cmp(&b.0))
    });
    // posterior over candidates: HWE prior x likelihood, normalized
    let joint: Vec<f64> = scored
        .iter()
        .map(|&(g, ll)| ll + panel.hwe_prob(locus_idx, g).max(f64::MIN_POSITIVE).ln())
        .collect();
    let norm = log_mean_exp(&joint);
    let n = joint.len() as f64;
    scored
        .iter()
        .zip(&joint)
        .map(|(&(genotype, log_likelihood), &j)| RankedGenotype {
            genotype,
            log_likelihood,
            posterior: if norm == f64::NEG_INFINITY {
                1.0 / n
            } else {
                ((j - norm).exp() / n).min(1.0)
            },
        })
        .collect()
}

/// Scenario C: mixture known, victim unknown. Per locus, score every panel
/// genotype as the extra contributor on top of the known mixture and rank.
pub fn attack_isolate_known_mixture(
    ctx: &AttackerContext<'_>,
    residue: &Residue,
) -> Result<InferredProfile, AttackError> {
    ctx.validate()?;
    let mixture = ctx.known_mixture.ok_or(AttackError::MissingMixture)?;
    let panel = ctx.population;
    let peaks = peaks_by_panel(residue, panel);

    let mut loci = Vec::with_capacity(panel.num_loci());
    for (l, locus) in panel.loci().iter().enumerate() {
        let mut eval = LocusEvaluator::new(locus, &ctx.epg, peaks[l]);
        let mut base = DoseMap::new();
        for profile in mixture {
            base.add_genotype(profile.genotype(l), ctx.mixture_mass, ctx.epg.stutter_ratio);
        }
        let scored: Vec<(Genotype, f64)> = panel
            .locus_genotypes(l)
            .into_iter()
            .map(|g| {
                let mut doses = base.clone();
                doses.add_genotype(g, ctx.victim_mass, ctx.epg.stutter_ratio);
                (g, eval.log_likelihood(&doses))
            })
            .collect();
        loci.push(rank_candidates(panel, l, scored));
    }
    Ok(InferredProfile { loci })
}

/// Posterior over the number of contributors to a residue.
#[derive(Debug, Clone, PartialEq)]
pub struct NocPosterior {
    /// `probs[i]` is the posterior probability of `i + 1` contributors.
    pub probs: Vec<f64>,
}

impl NocPosterior {
    pub fn uniform(max_contributors: usize) -> Self {
        Self {
            probs: vec![1.0 / max_contributors as f64; max_contributors],
        }
    }

    pub fn prob(&self, count: usize) -> f64 {
        self.probs.get(count - 1).copied().unwrap_or(0.0)
    }

    /// Most probable count; ties resolve to the smaller count.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = i;
            }
        }
        best + 1
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct NocParams {
    pub max_contributors: usize,
    /// Monte-Carlo samples per (locus, count) marginal.
    pub samples: usize,
    /// Template mass assumed per contributor.
    pub assumed_mass: f64,
}

impl Default for NocParams {
    fn default() -> Self {
        Self {
            max_contributors: 8,
            samples: 200,
            assumed_mass: 1.0,
        }
    }
}

/// Infer the number of contributors: uniform prior over `1..=max`, marginal
/// likelihood per count estimated by Monte-Carlo over random population
/// genotypes (per locus, using Hardy-Weinberg independence across loci).
/// An empty residue carries no peak evidence and returns the prior.
pub fn infer_noc(
    residue: &Residue,
    panel: &FrequencyPanel,
    epg: &EpgParams,
    params: &NocParams,
    rng: &mut ChaCha8Rng,
) -> NocPosterior {
    assert!(params.max_contributors >= 1);
    assert!(params.samples >= 1);
    if residue.is_empty() {
        return NocPosterior::uniform(params.max_contributors);
    }
    let peaks = peaks_by_panel(residue, panel);
    let mut log_marginals = vec![0.0f64; params.max_contributors];
    for (l, locus) in panel.loci().iter().enumerate() {
        let mut eval = LocusEvaluator::new(locus, epg, peaks[l]);
        for (c_idx, log_marginal) in log_marginals.iter_mut().enumerate() {
            let count = c_idx + 1;
            let lls: Vec<f64> = (0..params.samples)
                .map(|_| {
                    let mut doses = DoseMap::new();
                    // a genotype is two HWE-independent allele draws, so a
                    // count-c hypothesis is 2c independent copies
                    for _ in 0..2 * count {
                        let a = panel.sample_allele(l, rng);
                        doses.add_copy(a, params.assumed_mass, epg.stutter_ratio);
                    }
                    eval.log_likelihood(&doses)
                })
                .collect();
            *log_marginal += log_mean_exp(&lls);
        }
    }
    // uniform prior: posterior is the normalized marginal
    let norm = log_mean_exp(&log_marginals);
    if norm == f64::NEG_INFINITY {
        // nothing explains the residue at any count; fall back to the prior
        return NocPosterior::uniform(params.max_contributors);
    }
    let n = log_marginals.len() as f64;
    let probs: Vec<f64> = log_marginals
        .iter()
        .map(|&lm| {
            if lm == f64::NEG_INFINITY {
                0.0
            } else {
                ((lm - norm).exp() / n).min(1.0)
            }
        })
        .collect();
    let total: f64 = probs.iter().sum();
    NocPosterior {
        probs: probs.iter().map(|p| p / total).collect(),
    }
}

/// Scenario D output: inferred contributor count, one candidate profile per
/// inferred contributor, and which candidate the attacker claims is the
/// victim. An empty residue yields no candidates.
#[derive(Debug, Clone)]
pub struct FullUnknownOutcome {
    pub noc: NocPosterior,
    pub candidates: Vec<GenotypeProfile>,
    pub selected: Option<usize>,
}

#[derive(Debug, Clone, Copy)]
pub struct FullUnknownParams {
    pub noc: NocParams,
    /// Monte-Carlo samples for the (count - 1) background contributors when
    /// ranking candidate genotypes.
    pub deconvolution_samples: usize,
}

impl Default for FullUnknownParams {
    fn default() -> Self {
        Self {
            noc: NocParams::default(),
            deconvolution_samples: 100,
        }
    }
}

/// Scenario D: nothing known. Infer the contributor count, rank candidate
/// genotypes per locus against Monte-Carlo backgrounds for the remaining
/// contributors, assemble one candidate profile per rank, and claim one
/// uniformly at random. With equal masses the slots are exchangeable, which
/// is exactly why the uniform claim succeeds with probability 1/(count).
pub fn attack_full_unknown(
    ctx: &AttackerContext<'_>,
    residue: &Residue,
    params: &FullUnknownParams,
    rng: &mut ChaCha8Rng,
) -> Result<FullUnknownOutcome, AttackError> {
    ctx.validate()?;
    let panel = ctx.population;
    let noc = infer_noc(residue, panel, &ctx.epg, &params.noc, rng);
    if residue.is_empty() {
        return Ok(FullUnknownOutcome {
            noc,
            candidates: Vec::new(),
            selected: None,
        });
    }
    let count = noc.argmax();
    let peaks = peaks_by_panel(residue, panel);

    let mut per_locus: Vec<Vec<RankedGenotype>> = Vec::with_capacity(panel.num_loci());
    for (l, locus) in panel.loci().iter().enumerate() {
        let mut eval = LocusEvaluator::new(locus, &ctx.epg, peaks[l]);
        // common backgrounds across candidates cut both noise and cost
        let backgrounds: Vec<Vec<Allele>> = (0..params.deconvolution_samples)
            .map(|_| (0..2 * (count - 1)).map(|_| panel.sample_allele(l, rng)).collect())
            .collect();
        let scored: Vec<(Genotype, f64)> = panel
            .locus_genotypes(l)
            .into_iter()
            .map(|g| {
                let lls: Vec<f64> = backgrounds
                    .iter()
                    .map(|bg| {
                        let mut doses = DoseMap::new();
                        doses.add_genotype(g, ctx.victim_mass, ctx.epg.stutter_ratio);
                        for &a in bg {
                            doses.add_copy(a, ctx.victim_mass, ctx.epg.stutter_ratio);
                        }
                        eval.log_likelihood(&doses)
                    })
                    .collect();
                (g, log_mean_exp(&lls))
            })
            .collect();
        per_locus.push(rank_candidates(panel, l, scored));
    }

    let inferred = InferredProfile { loci: per_locus };
    let candidates: Vec<GenotypeProfile> = (0..count).map(|r| inferred.rank_profile(r)).collect();
    let selected = Some(rng.random_range(0..count));
    Ok(FullUnknownOutcome {
        noc,
        candidates,
        selected,
    })
}

/// Fraction of loci at which `candidate` has the victim's exact genotype.
pub fn per_locus_accuracy(candidate: &GenotypeProfile, truth: &GenotypeProfile) -> f64 {
    crate::genotype::matching_loci(candidate, truth) as f64 / truth.num_loci() as f64
}

/// Score a full-unknown claim against the ground truth. The candidates are
/// assigned to the true contributors by a maximum-agreement injective
/// assignment (ties between assignments broken uniformly at random); the
/// claim is correct when the selected candidate is assigned to the victim.
pub fn claim_selects_victim(
    outcome: &FullUnknownOutcome,
    victim: &GenotypeProfile,
    others: &[GenotypeProfile],
    rng: &mut ChaCha8Rng,
) -> bool {
    let Some(selected) = outcome.selected else {
        return false;
    };
    let mut truths: Vec<&GenotypeProfile> = Vec::with_capacity(others.len() + 1);
    truths.push(victim);
    truths.extend(others.iter());
    let candidates = &outcome.candidates;

    // score[i][j]: per-locus agreement of candidate i with truth j
    let score: Vec<Vec<usize>> = candidates
        .iter()
        .map(|c| truths.iter().map(|t| crate::genotype::matching_loci(c, t)).collect())
        .collect();

    // enumerate injective assignments of candidates into truths (both sides
    // are small: at most the contributor-count cap)
    let k = candidates.len();
    let n = truths.len();
    if k > n {
        // more candidates than truths: assign the truths to candidates instead
        let mut best: Vec<(usize, Vec<usize>)> = Vec::new();
        enumerate_assignments(n, k, &mut |assign| {
            let total: usize = assign.iter().enumerate().map(|(j, &i)| score[i][j]).sum();
            record_best(&mut best, total, assign.to_vec());
        });
        let (_, assign) = pick_uniform(&best, rng);
        return assign[0] == selected;
    }
    let mut best: Vec<(usize, Vec<usize>)> = Vec::new();
    enumerate_assignments(k, n, &mut |assign| {
        let total: usize = assign.iter().enumerate().map(|(i, &j)| score[i][j]).sum();
        record_best(&mut best, total, assign.to_vec());
    });
    let (_, assign) = pick_uniform(&best, rng);
    assign[selected] == 0
}

// visit every injective map from 0..k into 0..n
fn enumerate_assignments(k: usize, n: usize, visit: &mut impl FnMut(&[usize])) {
    let mut assign = vec![usize::MAX; k];
    let mut used = vec![false; n];
    fn rec(
        pos: usize,
        k: usize,
        n: usize,
        assign: &mut Vec<usize>,
        used: &mut Vec<bool>,
        visit: &mut impl FnMut(&[usize]),
    ) {
        if pos == k {
            visit(assign);
            return;
        }
        for j in 0..n {
            if !used[j] {
                used[j] = true;
                assign[pos] = j;
                rec(pos + 1, k, n, assign, used, visit);
                used[j] = false;
            }
        }
    }
    rec(0, k, n, &mut assign, &mut used, visit);
}

fn record_best(best: &mut Vec<(usize, Vec<usize>)>, total: usize, assign: Vec<usize>) {
    match best.first() {
        None => best.push((total, assign)),
        Some((t, _)) if total > *t => {
            best.clear();
            best.push((total, assign));
        }
        Some((t, _)) if total == *t => best.push((total, assign)),
        _ => {}
    }
}

fn pick_uniform<'a>(
    best: &'a [(usize, Vec<usize>)],
    rng: &mut ChaCha8Rng,
) -> &'a (usize, Vec<usize>) {
    &best[rng.random_range(0..best.len())]
}

#[cfg(test)]
mod tests;
