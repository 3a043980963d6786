use super::*;
use crate::assay::simulate_residue;
use crate::countermeasures::{T0, TestProcedure};
use crate::genotype::default_panel;
use crate::stats::ks_two_sample;

fn desk_epg() -> EpgParams {
    EpgParams {
        mean_peak_height: 1000.0,
        peak_height_cv: 0.3,
        stutter_ratio: 0.08,
        dropin_rate: 0.1,
        analytical_threshold: 50.0,
    }
}

fn profiles(panel: &FrequencyPanel, n: usize, seed: u64) -> Vec<GenotypeProfile> {
    let tree = SeedTree::new(seed).child("profiles");
    (0..n)
        .map(|i| sample_genotype(panel, &mut tree.index(i as u64).rng()))
        .collect()
}

fn mixture_specimen(members: &[&GenotypeProfile], mass: f64) -> Specimen {
    let mut s = Specimen::empty();
    for p in members {
        s.push_profile((*p).clone(), mass);
    }
    s
}

#[test]
fn context_validation() {
    let panel = default_panel();
    let ps = profiles(&panel, 2, 1);
    let mut ctx = AttackerContext::scenario_a(&ps[0], &ps[1..], &panel, desk_epg());
    assert!(ctx.validate().is_ok());
    ctx.known_victim = None;
    assert!(matches!(ctx.validate(), Err(AttackError::MissingVictim)));

    let mut ctx = AttackerContext::scenario_c(&ps[..1], &panel, desk_epg());
    assert!(ctx.validate().is_ok());
    ctx.known_mixture = None;
    assert!(matches!(ctx.validate(), Err(AttackError::MissingMixture)));
}

#[test]
fn likelihood_rejects_off_panel_hypothesis() {
    let panel = default_panel();
    let epg = desk_epg();
    let err = locus_peak_likelihood(
        &[],
        &[(Genotype::new(Allele(999), Allele(999)), 1.0)],
        &panel,
        0,
        &epg,
    )
    .unwrap_err();
    assert!(matches!(err, AttackError::AlleleOutsidePanel { .. }));
}

#[test]
fn average_likelihood_is_maximized_at_the_generating_hypothesis() {
    // simulation consistency: data generated from hypothesis H scores best
    // at H on average, over a fixed 5-hypothesis grid
    let panel = default_panel();
    let epg = desk_epg();
    let grid = profiles(&panel, 5, 2);
    let truth_idx = 2usize;
    let tree = SeedTree::new(3).child("grid");
    let mut totals = [0.0f64; 5];
    let runs = 10_000u64;
    for i in 0..runs {
        let s = mixture_specimen(&[&grid[truth_idx]], 1.0);
        let residue = simulate_residue(&panel, &s, &epg, &mut tree.index(i).rng());
        for (h, total) in grid.iter().zip(totals.iter_mut()) {
            *total += residue_log_likelihood(&residue, &[(h, 1.0)], 0.0, &panel, &epg).unwrap();
        }
    }
    let best = totals
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .unwrap()
        .0;
    assert_eq!(best, truth_idx, "totals: {totals:?}");
}

#[test]
fn confirm_separates_present_from_absent() {
    let panel = default_panel();
    let epg = desk_epg();
    let all = profiles(&panel, 3, 4);
    let (victim, mixture) = (&all[0], &all[1..]);
    let ctx = AttackerContext::scenario_a(victim, mixture, &panel, epg);
    let tree = SeedTree::new(5).child("confirm");
    let trials = 1000u64;

    let mut present_hits = 0;
    let mut absent_hits = 0;
    for i in 0..trials {
        let node = tree.index(i);
        let mut with_victim = mixture_specimen(&[&mixture[0], &mixture[1]], 1.0);
        with_victim.push_profile(victim.clone(), 1.0);
        let residue = simulate_residue(&panel, &with_victim, &epg, &mut node.child("in").rng());
        let out = attack_confirm_known(&ctx, &residue, &mut node.child("att-in").rng()).unwrap();
        if out.decision == Presence::Present {
            present_hits += 1;
        }
        // antisymmetry: swapping the hypotheses negates the ratio exactly
        assert_eq!(out.log_lr, out.ll_present - out.ll_absent);
        assert_eq!(-(out.ll_absent - out.ll_present), out.log_lr);

        let without = mixture_specimen(&[&mixture[0], &mixture[1]], 1.0);
        let residue = simulate_residue(&panel, &without, &epg, &mut node.child("out").rng());
        let out = attack_confirm_known(&ctx, &residue, &mut node.child("att-out").rng()).unwrap();
        if out.decision == Presence::Absent {
            absent_hits += 1;
        }
    }
    let present_rate = present_hits as f64 / trials as f64;
    let absent_rate = absent_hits as f64 / trials as f64;
    assert!(present_rate >= 0.95, "present rate {present_rate}");
    assert!(absent_rate >= 0.95, "absent rate {absent_rate}");
}

#[test]
fn confirm_is_uninformative_when_victim_already_in_mixture() {
    // With the victim already a mixture member, both hypotheses predict the
    // victim's alleles present; once a high CV hides the dose difference the
    // two hypotheses coincide in distribution, the log-LR collapses into the
    // band around zero and decisions land near a coin flip.
    let panel = default_panel();
    let epg = EpgParams {
        mean_peak_height: 1000.0,
        peak_height_cv: 1.5,
        stutter_ratio: 0.0,
        dropin_rate: 0.05,
        analytical_threshold: 50.0,
    };
    let all = profiles(&panel, 2, 6);
    let mixture = vec![all[0].clone(), all[1].clone()];
    let victim = &all[0]; // identical to a mixture member
    let ctx = AttackerContext::scenario_a(victim, &mixture, &panel, epg);
    let tree = SeedTree::new(7).child("degenerate");
    let trials = 400u64;
    let mut present = 0;
    let mut lr_sum = 0.0;
    for i in 0..trials {
        let node = tree.index(i);
        // the mixture alone: the victim's alleles are present either way, and
        // both hypotheses mispredict the dose by one contributor
        let s = mixture_specimen(&[&mixture[0], &mixture[1]], 1.0);
        let residue = simulate_residue(&panel, &s, &epg, &mut node.child("res").rng());
        let out = attack_confirm_known(&ctx, &residue, &mut node.child("att").rng()).unwrap();
        if out.decision == Presence::Present {
            present += 1;
        }
        lr_sum += out.log_lr;
    }
    let rate = present as f64 / trials as f64;
    let mean_lr = lr_sum / trials as f64;
    assert!((0.25..=0.75).contains(&rate), "decision rate {rate}");
    assert!(mean_lr.abs() < 10.0, "mean log-LR {mean_lr} should sit near 0");
}

#[test]
fn confirm_is_deterministic_given_seed() {
    let panel = default_panel();
    let epg = desk_epg();
    let all = profiles(&panel, 3, 8);
    let ctx = AttackerContext::scenario_a(&all[0], &all[1..], &panel, epg);
    let mut s = mixture_specimen(&[&all[1], &all[2]], 1.0);
    s.push_profile(all[0].clone(), 1.0);
    let residue = simulate_residue(&panel, &s, &epg, &mut SeedTree::new(9).rng());
    let a = attack_confirm_known(&ctx, &residue, &mut SeedTree::new(10).rng()).unwrap();
    let b = attack_confirm_known(&ctx, &residue, &mut SeedTree::new(10).rng()).unwrap();
    assert_eq!(a.log_lr, b.log_lr);
}

#[test]
fn membership_statistic_is_mean_zero_under_null() {
    let panel = default_panel();
    let epg = desk_epg();
    let tree = SeedTree::new(11).child("null");
    let trials = 2000u64;
    let mut sum = 0.0;
    for i in 0..trials {
        let node = tree.index(i);
        let donor = sample_genotype(&panel, &mut node.child("donor").rng());
        let victim = sample_genotype(&panel, &mut node.child("victim").rng());
        let s = mixture_specimen(&[&donor], 1.0);
        let residue = simulate_residue(&panel, &s, &epg, &mut node.child("res").rng());
        sum += membership_statistic(&residue, &victim, &panel);
    }
    let mean = sum / trials as f64;
    assert!(mean.abs() < 0.1, "null mean {mean}");
}

#[test]
fn membership_attack_calibrates_and_detects() {
    let panel = default_panel();
    let procedure = TestProcedure::identity();
    let threshold = calibrate_membership_threshold(&panel, &procedure, 2000, 0.05, 12);

    let epg = procedure.epg;
    let tree = SeedTree::new(13).child("homer");
    let trials = 1000u64;
    let mut hits = 0;
    let mut false_positives = 0;
    for i in 0..trials {
        let node = tree.index(i);
        let victim = sample_genotype(&panel, &mut node.child("victim").rng());
        let ctx = AttackerContext::scenario_b(&victim, &panel, epg);

        // residue containing exactly the victim
        let s = mixture_specimen(&[&victim], 1.0);
        let residue = simulate_residue(&panel, &s, &epg, &mut node.child("res").rng());
        let (decision, _) = attack_membership_unknown_mixture(&ctx, &residue, threshold).unwrap();
        if decision == Presence::Present {
            hits += 1;
        }

        // residue of an unrelated profile: calibration holdout
        let other = sample_genotype(&panel, &mut node.child("other").rng());
        let s = mixture_specimen(&[&other], 1.0);
        let residue = simulate_residue(&panel, &s, &epg, &mut node.child("res2").rng());
        let (decision, _) = attack_membership_unknown_mixture(&ctx, &residue, threshold).unwrap();
        if decision == Presence::Present {
            false_positives += 1;
        }
    }
    let hit_rate = hits as f64 / trials as f64;
    let fp_rate = false_positives as f64 / trials as f64;
    assert!(hit_rate >= 0.99, "hit rate {hit_rate}");
    assert!((fp_rate - 0.05).abs() <= 0.02, "false positive rate {fp_rate}");
}

#[test]
fn destruction_nullifies_membership_signal() {
    // after full DNase the statistic distribution is the same whether or not
    // the victim contributed (two-sample KS)
    let panel = default_panel();
    let epg = desk_epg();
    let tree = SeedTree::new(14).child("dnase-homer");
    let trials = 1000u64;
    let mut stats_in = Vec::new();
    let mut stats_out = Vec::new();
    for i in 0..trials {
        let node = tree.index(i);
        let victim = sample_genotype(&panel, &mut node.child("victim").rng());
        let other = sample_genotype(&panel, &mut node.child("other").rng());
        // full destruction leaves only drop-in peaks
        let destroyed_in = Specimen::from_profile(victim.clone(), 1.0).attenuate_templates(0.0);
        let destroyed_out = Specimen::from_profile(other, 1.0).attenuate_templates(0.0);
        let res_in = simulate_residue(&panel, &destroyed_in, &epg, &mut node.child("a").rng());
        let res_out = simulate_residue(&panel, &destroyed_out, &epg, &mut node.child("b").rng());
        stats_in.push(membership_statistic(&res_in, &victim, &panel));
        stats_out.push(membership_statistic(&res_out, &victim, &panel));
    }
    let (_, p) = ks_two_sample(&stats_in, &stats_out);
    assert!(p > 0.01, "KS p = {p}");
}

#[test]
fn single_source_deconvolution_recovers_the_profile() {
    let panel = default_panel();
    let epg = desk_epg();
    let tree = SeedTree::new(15).child("single");
    let trials = 1000u64;
    let empty: Vec<GenotypeProfile> = Vec::new();
    let mut correct = 0u64;
    let mut total = 0u64;
    for i in 0..trials {
        let node = tree.index(i);
        let victim = sample_genotype(&panel, &mut node.child("victim").rng());
        let ctx = AttackerContext::scenario_c(&empty, &panel, epg);
        let s = mixture_specimen(&[&victim], 1.0);
        let residue = simulate_residue(&panel, &s, &epg, &mut node.child("res").rng());
        let inferred = attack_isolate_known_mixture(&ctx, &residue).unwrap();
        let map = inferred.map_profile();
        for l in 0..panel.num_loci() {
            total += 1;
            if map.genotype(l) == victim.genotype(l) {
                correct += 1;
            }
        }
    }
    let accuracy = correct as f64 / total as f64;
    assert!(accuracy >= 0.99, "per-locus accuracy {accuracy}");
}

#[test]
fn deconvolution_confused_when_victim_equals_mixture_member() {
    // confusion by construction: the victim duplicates the only mixture
    // member and a high CV hides the dose difference, so accuracy sits at
    // the chance level of the near-tied candidate set
    let panel = default_panel();
    let epg = EpgParams {
        mean_peak_height: 800.0,
        peak_height_cv: 1.5,
        stutter_ratio: 0.0,
        dropin_rate: 0.0,
        analytical_threshold: 50.0,
    };
    let tree = SeedTree::new(16).child("confused");
    let trials = 500u64;
    let mut correct = 0u64;
    let mut chance_sum = 0.0;
    let mut loci_count = 0u64;
    for i in 0..trials {
        let node = tree.index(i);
        let victim = sample_genotype(&panel, &mut node.child("victim").rng());
        let mixture = vec![victim.clone()];
        let ctx = AttackerContext::scenario_c(&mixture, &panel, epg);
        let mut s = mixture_specimen(&[&victim], 1.0);
        s.push_profile(victim.clone(), 1.0); // the mixture member plus the victim again
        let residue = simulate_residue(&panel, &s, &epg, &mut node.child("res").rng());
        let inferred = attack_isolate_known_mixture(&ctx, &residue).unwrap();
        for l in 0..panel.num_loci() {
            loci_count += 1;
            let ranked = &inferred.loci[l];
            if ranked[0].genotype == victim.genotype(l) {
                correct += 1;
            }
            // peak-consistent candidate set: unordered pairs of observed alleles
            let observed: Vec<Allele> = residue.peaks_at(l).iter().map(|p| p.allele).collect();
            let k = observed.len();
            let consistent = k * (k + 1) / 2;
            let g = victim.genotype(l);
            if consistent > 0 && g.alleles().iter().all(|a| observed.contains(a)) {
                chance_sum += 1.0 / consistent as f64;
            }
        }
    }
    let accuracy = correct as f64 / loci_count as f64;
    let chance = chance_sum / loci_count as f64;
    assert!(
        (accuracy - chance).abs() <= 0.05,
        "accuracy {accuracy} vs chance {chance}"
    );
}

#[test]
fn dilution_makes_deconvolution_strictly_harder() {
    let panel = default_panel();
    let epg = desk_epg();
    let pool = profiles(&panel, 20, 17);
    let tree = SeedTree::new(18).child("dilution-pair");
    let trials = 300u64;
    let mut accuracy = |k: usize, label: &str| {
        let mixture = pool[..k].to_vec();
        let mut correct = 0u64;
        let mut total = 0u64;
        for i in 0..trials {
            let node = tree.index(i).child(label);
            let victim = sample_genotype(&panel, &mut node.child("victim").rng());
            let ctx = AttackerContext::scenario_c(&mixture, &panel, epg);
            let mut s = mixture_specimen(&mixture.iter().collect::<Vec<_>>(), 1.0);
            s.push_profile(victim.clone(), 1.0);
            let residue = simulate_residue(&panel, &s, &epg, &mut node.child("res").rng());
            let map = attack_isolate_known_mixture(&ctx, &residue).unwrap().map_profile();
            for l in 0..panel.num_loci() {
                total += 1;
                if map.genotype(l) == victim.genotype(l) {
                    correct += 1;
                }
            }
        }
        correct as f64 / total as f64
    };
    let acc_k0 = accuracy(0, "k0");
    let acc_k20 = accuracy(20, "k20");
    assert!(
        acc_k0 > acc_k20 + 0.05,
        "k=0 accuracy {acc_k0} vs k=20 accuracy {acc_k20}"
    );
}

#[test]
fn noc_identifies_single_source() {
    let panel = default_panel();
    let epg = desk_epg();
    let params = NocParams {
        max_contributors: 4,
        samples: 64,
        assumed_mass: 1.0,
    };
    let tree = SeedTree::new(19).child("noc1");
    let trials = 1000u64;
    let mut hits = 0;
    for i in 0..trials {
        let node = tree.index(i);
        let victim = sample_genotype(&panel, &mut node.child("victim").rng());
        let s = mixture_specimen(&[&victim], 1.0);
        let residue = simulate_residue(&panel, &s, &epg, &mut node.child("res").rng());
        let posterior = infer_noc(&residue, &panel, &epg, &params, &mut node.child("att").rng());
        assert!((posterior.total() - 1.0).abs() < 1e-9);
        if posterior.argmax() == 1 {
            hits += 1;
        }
    }
    let rate = hits as f64 / trials as f64;
    assert!(rate >= 0.90, "single-source NoC rate {rate}");
}

#[test]
fn four_nonadjacent_alleles_exclude_one_contributor() {
    // counting-bound oracle: four distinct non-adjacent alleles cannot come
    // from one contributor without drop-in; posterior mass below two is zero
    let panel = default_panel();
    let mut epg = desk_epg();
    epg.dropin_rate = 0.0;
    // D18S51 carries alleles 10..19; use 10, 12, 14, 16
    let locus_idx = panel
        .loci()
        .iter()
        .position(|l| l.name == "D18S51")
        .unwrap();
    let mut profile_a = sample_genotype(&panel, &mut SeedTree::new(20).rng());
    let mut profile_b = profile_a.clone();
    profile_a.genotypes[locus_idx] = Genotype::new(Allele(10), Allele(14));
    profile_b.genotypes[locus_idx] = Genotype::new(Allele(12), Allele(16));
    let s = mixture_specimen(&[&profile_a, &profile_b], 1.0);
    let residue = simulate_residue(&panel, &s, &epg, &mut SeedTree::new(21).rng());
    assert!(residue.peaks_at(locus_idx).len() >= 4);
    let params = NocParams {
        max_contributors: 4,
        samples: 64,
        assumed_mass: 1.0,
    };
    let posterior = infer_noc(&residue, &panel, &epg, &params, &mut SeedTree::new(22).rng());
    assert_eq!(posterior.prob(1), 0.0, "posterior {:?}", posterior.probs);
}

#[test]
fn empty_residue_returns_the_prior() {
    let panel = default_panel();
    let mut epg = desk_epg();
    epg.dropin_rate = 0.0;
    let residue = simulate_residue(&panel, &Specimen::empty(), &epg, &mut SeedTree::new(23).rng());
    assert!(residue.is_empty());
    let params = NocParams::default();
    let posterior = infer_noc(&residue, &panel, &epg, &params, &mut SeedTree::new(24).rng());
    assert_eq!(posterior, NocPosterior::uniform(params.max_contributors));
}

#[test]
fn noc_is_invariant_under_locus_reordering() {
    let panel = default_panel();
    let epg = desk_epg();
    let victim = sample_genotype(&panel, &mut SeedTree::new(25).rng());
    let s = mixture_specimen(&[&victim], 1.0);
    let residue = simulate_residue(&panel, &s, &epg, &mut SeedTree::new(26).rng());
    let mut shuffled = residue.clone();
    shuffled.loci.reverse();
    let params = NocParams {
        max_contributors: 3,
        samples: 32,
        assumed_mass: 1.0,
    };
    let a = infer_noc(&residue, &panel, &epg, &params, &mut SeedTree::new(27).rng());
    let b = infer_noc(&shuffled, &panel, &epg, &params, &mut SeedTree::new(27).rng());
    assert_eq!(a, b);
}

#[test]
fn full_unknown_reduces_to_single_source() {
    let panel = default_panel();
    let epg = desk_epg();
    let ctx = AttackerContext::scenario_d(&panel, epg);
    let params = FullUnknownParams {
        noc: NocParams {
            max_contributors: 3,
            samples: 48,
            assumed_mass: 1.0,
        },
        deconvolution_samples: 48,
    };
    let tree = SeedTree::new(28).child("full-single");
    let trials = 300u64;
    let mut acc_sum = 0.0;
    let mut counted = 0u64;
    for i in 0..trials {
        let node = tree.index(i);
        let victim = sample_genotype(&panel, &mut node.child("victim").rng());
        let s = mixture_specimen(&[&victim], 1.0);
        let residue = simulate_residue(&panel, &s, &epg, &mut node.child("res").rng());
        let out = attack_full_unknown(&ctx, &residue, &params, &mut node.child("att").rng()).unwrap();
        if let Some(sel) = out.selected {
            acc_sum += per_locus_accuracy(&out.candidates[sel], &victim);
            counted += 1;
        }
    }
    assert_eq!(counted, trials);
    let mean_acc = acc_sum / counted as f64;
    assert!(mean_acc >= 0.90, "mean per-locus accuracy {mean_acc}");
}

#[test]
fn full_unknown_after_destruction_claims_nothing() {
    let panel = default_panel();
    let mut epg = desk_epg();
    epg.dropin_rate = 0.0;
    let ctx = AttackerContext::scenario_d(&panel, epg);
    let params = FullUnknownParams::default();
    let tree = SeedTree::new(29).child("full-dnase");
    for i in 0..100u64 {
        let node = tree.index(i);
        let victim = sample_genotype(&panel, &mut node.child("victim").rng());
        let destroyed = Specimen::from_profile(victim.clone(), 1.0).attenuate_templates(0.0);
        let residue = simulate_residue(&panel, &destroyed, &epg, &mut node.child("res").rng());
        let out = attack_full_unknown(&ctx, &residue, &params, &mut node.child("att").rng()).unwrap();
        assert!(out.candidates.is_empty());
        assert!(!claim_selects_victim(&out, &victim, &[], &mut node.child("score").rng()));
    }
}

#[test]
fn claim_scoring_assignment_is_fair() {
    // hand-built outcome: two candidates that each match one truth exactly
    let panel = default_panel();
    let ps = profiles(&panel, 2, 30);
    let outcome = FullUnknownOutcome {
        noc: NocPosterior::uniform(2),
        candidates: vec![ps[0].clone(), ps[1].clone()],
        selected: Some(0),
    };
    // candidate 0 is the victim's profile: always correct
    assert!(claim_selects_victim(&outcome, &ps[0], &[ps[1].clone()], &mut SeedTree::new(31).rng()));
    // candidate 0 is the other person's profile: never correct
    assert!(!claim_selects_victim(&outcome, &ps[1], &[ps[0].clone()], &mut SeedTree::new(32).rng()));
}
