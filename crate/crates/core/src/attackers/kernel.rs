//! The probabilistic-genotyping kernel shared by every attacker: the
//! log-likelihood of one locus's observed peaks under a hypothesized set of
//! contributors.
//!
//! The model mirrors the residue generator. Each hypothesized allele copy
//! contributes a Gamma-distributed height with mean `mass * mean_peak_height`
//! and fixed CV, plus a stutter copy at `allele - 1`; the total height at a
//! position is approximated by moment matching as a single Gamma (exact when
//! all copies at a position share one mass, which is the equal-mass case the
//! experiments mostly use). Surviving drop-in peaks form a thinned marked
//! Poisson process over the locus's panel alleles. A peak below the
//! analytical threshold drops out with the matched Gamma's CDF mass.

use std::collections::{BTreeMap, HashMap};

use statrs::function::gamma::{gamma_lr, ln_gamma};

use crate::assay::{EpgParams, Peak};
use crate::genotype::{Allele, Genotype, Locus};

/// Accumulated template dose per allele position: `dose1` is the summed copy
/// mass, `dose2` the summed squared copy mass (for moment matching).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DoseMap {
    doses: BTreeMap<u32, (f64, f64)>,
}

impl DoseMap {
    pub fn new() -> Self {
        Self::default()
    }

    /// Add one template copy of `mass` at `allele`, with its stutter copy at
    /// `allele - 1` when the model stutters.
    pub fn add_copy(&mut self, allele: Allele, mass: f64, stutter_ratio: f64) {
        debug_assert!(mass > 0.0);
        let e = self.doses.entry(allele.0).or_insert((0.0, 0.0));
        e.0 += mass;
        e.1 += mass * mass;
        if stutter_ratio > 0.0 && allele.0 > 0 {
            let sm = stutter_ratio * mass;
            let e = self.doses.entry(allele.0 - 1).or_insert((0.0, 0.0));
            e.0 += sm;
            e.1 += sm * sm;
        }
    }

    pub fn add_genotype(&mut self, g: Genotype, mass: f64, stutter_ratio: f64) {
        self.add_copy(g.first(), mass, stutter_ratio);
        self.add_copy(g.second(), mass, stutter_ratio);
    }

    pub fn dose_at(&self, allele: Allele) -> Option<(f64, f64)> {
        self.doses.get(&allele.0).copied()
    }

    pub fn is_empty(&self) -> bool {
        self.doses.is_empty()
    }
}

/// Reusable likelihood evaluator for one locus's observation. Construction
/// pre-indexes the peaks and the drop-in geometry; special-function values
/// are memoized across hypothesis evaluations, which is what makes scoring
/// large candidate grids affordable.
pub struct LocusEvaluator {
    panel_alleles: Vec<u32>,
    observed: Vec<(u32, f64)>,
    mean_peak_height: f64,
    cv2: f64,
    threshold: f64,
    // drop-in process constants (zero rate disables the process)
    dropin_rate: f64,
    dropin_survive: f64,
    ln_dropin_pdf: HashMap<u64, f64>,
    dropout_cache: HashMap<(u64, u64), f64>,
    ln_gamma_cache: HashMap<u64, f64>,
}

impl LocusEvaluator {
    pub fn new(locus: &Locus, epg: &EpgParams, observed: &[Peak]) -> Self {
        assert!(
            epg.peak_height_cv > 0.0,
            "likelihood model needs a positive peak-height CV"
        );
        let cv2 = epg.peak_height_cv * epg.peak_height_cv;
        let dropin_survive = if epg.dropin_rate > 0.0 {
            let shape = 1.0 / cv2;
            let scale = epg.dropin_mean_height() * cv2;
            if epg.analytical_threshold <= 0.0 {
                1.0
            } else {
                1.0 - gamma_lr(shape, epg.analytical_threshold / scale)
            }
        } else {
            0.0
        };
        Self {
            panel_alleles: locus.alleles.iter().map(|a| a.0).collect(),
            observed: observed.iter().map(|p| (p.allele.0, p.height)).collect(),
            mean_peak_height: epg.mean_peak_height,
            cv2,
            threshold: epg.analytical_threshold,
            dropin_rate: epg.dropin_rate,
            dropin_survive,
            ln_dropin_pdf: HashMap::new(),
            dropout_cache: HashMap::new(),
            ln_gamma_cache: HashMap::new(),
        }
    }

    fn ln_gamma_memo(&mut self, shape: f64) -> f64 {
        *self
            .ln_gamma_cache
            .entry(shape.to_bits())
            .or_insert_with(|| ln_gamma(shape))
    }

    // ln Gamma(shape, scale) density at x
    fn ln_gamma_pdf(&mut self, x: f64, shape: f64, scale: f64) -> f64 {
        let lg = self.ln_gamma_memo(shape);
        (shape - 1.0) * x.ln() - x / scale - shape * scale.ln() - lg
    }

    // moment-matched (shape, scale) for a position dose
    fn matched_params(&self, dose1: f64, dose2: f64) -> (f64, f64) {
        let mu = dose1 * self.mean_peak_height;
        let var = self.cv2 * dose2 * self.mean_peak_height * self.mean_peak_height;
        let shape = mu * mu / var;
        let scale = var / mu;
        (shape, scale)
    }

    fn ln_dropout(&mut self, dose1: f64, dose2: f64) -> f64 {
        if self.threshold <= 0.0 {
            return f64::NEG_INFINITY; // any positive height survives
        }
        let key = (dose1.to_bits(), dose2.to_bits());
        if let Some(&v) = self.dropout_cache.get(&key) {
            return v;
        }
        let (shape, scale) = self.matched_params(dose1, dose2);
        let p = gamma_lr(shape, self.threshold / scale).max(f64::MIN_POSITIVE);
        let v = p.ln();
        self.dropout_cache.insert(key, v);
        v
    }

    fn ln_dropin_height_pdf(&mut self, height: f64) -> f64 {
        if let Some(&v) = self.ln_dropin_pdf.get(&height.to_bits()) {
            return v;
        }
        let shape = 1.0 / self.cv2;
        let scale = (crate::assay::DROPIN_MEAN_FACTOR * self.threshold) * self.cv2;
        let v = self.ln_gamma_pdf(height, shape, scale);
        self.ln_dropin_pdf.insert(height.to_bits(), v);
        v
    }

    /// Log-likelihood of the locus observation given accumulated doses.
    pub fn log_likelihood(&mut self, doses: &DoseMap) -> f64 {
        let mut ll = 0.0;

        // positions with template dose: observed height density or drop-out mass
        let observed: Vec<(u32, f64)> = self.observed.clone();
        for (&allele, &(dose1, dose2)) in &doses.doses {
            debug_assert!(dose1 > 0.0);
            match observed.iter().find(|(a, _)| *a == allele) {
                Some(&(_, height)) => {
                    let (shape, scale) = self.matched_params(dose1, dose2);
                    ll += self.ln_gamma_pdf(height, shape, scale);
                }
                None => {
                    ll += self.ln_dropout(dose1, dose2);
                }
            }
        }

        // observed peaks without template dose need a surviving drop-in
        for &(allele, height) in &observed {
            if doses.doses.contains_key(&allele) {
                continue;
            }
            if self.dropin_rate <= 0.0 || !self.panel_alleles.contains(&allele) {
                return f64::NEG_INFINITY;
            }
            ll += self.dropin_rate.ln() - (self.panel_alleles.len() as f64).ln()
                + self.ln_dropin_height_pdf(height);
        }

        // no further surviving drop-in anywhere on the locus
        if self.dropin_rate > 0.0 {
            ll -= self.dropin_rate * self.dropin_survive;
        }
        ll
    }
}

/// Numerically stable log of the mean of exponentials.
pub fn log_mean_exp(values: &[f64]) -> f64 {
    debug_assert!(!values.is_empty());
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let sum: f64 = values.iter().map(|v| (v - max).exp()).sum();
    max + (sum / values.len() as f64).ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assay::Peak;

    fn test_locus() -> Locus {
        Locus {
            name: "LX".into(),
            alleles: (8..16).map(Allele).collect(),
        }
    }

    fn epg(dropin: f64, stutter: f64) -> EpgParams {
        EpgParams {
            mean_peak_height: 1000.0,
            peak_height_cv: 0.3,
            stutter_ratio: stutter,
            dropin_rate: dropin,
            analytical_threshold: 50.0,
        }
    }

    #[test]
    fn matching_hypothesis_beats_disjoint_one() {
        let locus = test_locus();
        let epg = epg(0.1, 0.0);
        let observed = vec![
            Peak { allele: Allele(9), height: 1000.0 },
            Peak { allele: Allele(12), height: 1000.0 },
        ];
        let mut eval = LocusEvaluator::new(&locus, &epg, &observed);
        let mut good = DoseMap::new();
        good.add_genotype(Genotype::new(Allele(9), Allele(12)), 1.0, 0.0);
        let mut bad = DoseMap::new();
        bad.add_genotype(Genotype::new(Allele(10), Allele(14)), 1.0, 0.0);
        assert!(eval.log_likelihood(&good) > eval.log_likelihood(&bad));
    }

    #[test]
    fn empty_observation_is_sum_of_dropout_terms() {
        // Gamma-tail oracle computed from first principles: heterozygous
        // single contributor, no stutter, no drop-in; each allele drops out
        // with the Gamma(1/cv^2, mean cv^2) mass below the threshold.
        let locus = test_locus();
        let params = EpgParams {
            mean_peak_height: 60.0,
            peak_height_cv: 0.3,
            stutter_ratio: 0.0,
            dropin_rate: 0.0,
            analytical_threshold: 50.0,
        };
        let mut eval = LocusEvaluator::new(&locus, &params, &[]);
        let mut doses = DoseMap::new();
        doses.add_genotype(Genotype::new(Allele(9), Allele(12)), 1.0, 0.0);
        let ll = eval.log_likelihood(&doses);

        let shape = 1.0 / (0.3f64 * 0.3);
        let scale = 60.0 * 0.09;
        let per_allele = gamma_lr(shape, 50.0 / scale).ln();
        assert!((ll - 2.0 * per_allele).abs() < 1e-9, "{ll} vs {}", 2.0 * per_allele);
    }

    #[test]
    fn empty_observation_with_stutter_adds_stutter_dropout() {
        let locus = test_locus();
        let params = EpgParams {
            mean_peak_height: 60.0,
            peak_height_cv: 0.3,
            stutter_ratio: 0.1,
            dropin_rate: 0.0,
            analytical_threshold: 50.0,
        };
        let mut eval = LocusEvaluator::new(&locus, &params, &[]);
        let mut doses = DoseMap::new();
        // non-adjacent alleles: parent and stutter positions all distinct
        doses.add_genotype(Genotype::new(Allele(9), Allele(12)), 1.0, 0.1);
        let ll = eval.log_likelihood(&doses);

        let shape = 1.0 / (0.3f64 * 0.3);
        let parent = gamma_lr(shape, 50.0 / (60.0 * 0.09)).ln();
        let stutter = gamma_lr(shape, 50.0 / (6.0 * 0.09)).ln();
        assert!((ll - 2.0 * (parent + stutter)).abs() < 1e-9);
    }

    #[test]
    fn unexplained_peak_needs_dropin() {
        let locus = test_locus();
        let observed = vec![Peak { allele: Allele(15), height: 80.0 }];

        let no_dropin = epg(0.0, 0.0);
        let mut eval = LocusEvaluator::new(&locus, &no_dropin, &observed);
        let mut doses = DoseMap::new();
        doses.add_genotype(Genotype::new(Allele(9), Allele(12)), 1.0, 0.0);
        assert_eq!(eval.log_likelihood(&doses), f64::NEG_INFINITY);

        let with_dropin = epg(0.2, 0.0);
        let mut eval = LocusEvaluator::new(&locus, &with_dropin, &observed);
        assert!(eval.log_likelihood(&doses).is_finite());

        // a peak off the panel's allele grid cannot be drop-in either
        let off_panel = vec![Peak { allele: Allele(40), height: 80.0 }];
        let mut eval = LocusEvaluator::new(&locus, &with_dropin, &off_panel);
        assert_eq!(eval.log_likelihood(&doses), f64::NEG_INFINITY);
    }

    #[test]
    fn log_mean_exp_handles_extremes() {
        assert_eq!(log_mean_exp(&[f64::NEG_INFINITY; 4]), f64::NEG_INFINITY);
        let v = log_mean_exp(&[0.0, 0.0]);
        assert!((v - 0.0).abs() < 1e-12);
        let v = log_mean_exp(&[-1000.0, 0.0]);
        assert!((v - (0.5f64).ln()).abs() < 1e-9);
    }
}
