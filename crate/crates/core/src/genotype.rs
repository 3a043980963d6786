//! Synthetic STR genotype profiles and the allele-frequency panels they are
//! sampled from.
//!
//! A panel lists, per locus, the allele labels (integer repeat numbers) and
//! their population frequencies. Profiles are sampled under Hardy-Weinberg
//! equilibrium: the two alleles at a locus are independent draws from the
//! locus frequencies, and loci are independent of each other (no linkage).

use std::fmt;
use std::io::Read;
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Allowed absolute deviation of a locus's frequency sum from 1.
pub const FREQ_SUM_TOLERANCE: f64 = 1e-9;

/// The default 15-locus synthetic panel shipped with the crate.
pub const DEFAULT_PANEL_CSV: &str = include_str!("../data/default_panel.csv");

/// An allele label: the repeat number of an STR variant. Labels are opaque
/// integers everywhere except in the stutter model, where `label - 1` is the
/// stutter position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Allele(pub u32);

impl fmt::Display for Allele {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// An unordered allele pair at one locus, stored in canonical (sorted) order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Genotype(Allele, Allele);

impl Genotype {
    pub fn new(x: Allele, y: Allele) -> Self {
        if x <= y {
            Self(x, y)
        } else {
            Self(y, x)
        }
    }

    pub fn first(&self) -> Allele {
        self.0
    }

    pub fn second(&self) -> Allele {
        self.1
    }

    pub fn alleles(&self) -> [Allele; 2] {
        [self.0, self.1]
    }

    pub fn is_homozygous(&self) -> bool {
        self.0 == self.1
    }

    pub fn contains(&self, a: Allele) -> bool {
        self.0 == a || self.1 == a
    }
}

impl fmt::Display for Genotype {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{}", self.0, self.1)
    }
}

/// One STR locus: a name and its ordered allele labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Locus {
    pub name: String,
    pub alleles: Vec<Allele>,
}

/// Allele-frequency panel over a fixed set of loci.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyPanel {
    loci: Vec<Locus>,
    freqs: Vec<Vec<f64>>,
    #[serde(skip)]
    cumulative: Vec<Vec<f64>>,
}

#[derive(Debug, Error)]
pub enum PanelError {
    #[error("panel i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("row {row}: {msg}")]
    Parse { row: u64, msg: String },
    #[error("locus {locus}: {msg}")]
    Validation { locus: String, msg: String },
    #[error("panel is empty")]
    Empty,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl FrequencyPanel {
    /// Build a panel from loci and per-locus frequency vectors, enforcing all
    /// invariants: unique labels, >= 2 alleles per locus, frequencies in
    /// (0, 1], per-locus sums within [`FREQ_SUM_TOLERANCE`] of 1.
    pub fn new(loci: Vec<Locus>, freqs: Vec<Vec<f64>>) -> Result<Self, PanelError> {
        if loci.is_empty() {
            return Err(PanelError::Empty);
        }
        if loci.len() != freqs.len() {
            return Err(PanelError::InvalidArgument(
                "loci/frequency length mismatch".into(),
            ));
        }
        for (locus, fs) in loci.iter().zip(&freqs) {
            let err = |msg: String| PanelError::Validation {
                locus: locus.name.clone(),
                msg,
            };
            if locus.alleles.len() < 2 {
                return Err(err("fewer than 2 alleles".into()));
            }
            if locus.alleles.len() != fs.len() {
                return Err(err("allele/frequency length mismatch".into()));
            }
            let mut seen = locus.alleles.clone();
            seen.sort_unstable();
            seen.dedup();
            if seen.len() != locus.alleles.len() {
                return Err(err("duplicate allele label".into()));
            }
            for (&a, &f) in locus.alleles.iter().zip(fs) {
                if !f.is_finite() || f <= 0.0 || f > 1.0 {
                    return Err(err(format!("allele {a}: frequency {f} outside (0, 1]")));
                }
            }
            let sum: f64 = fs.iter().sum();
            if (sum - 1.0).abs() > FREQ_SUM_TOLERANCE {
                return Err(err(format!("frequencies sum to {sum}, not 1")));
            }
        }
        let cumulative = freqs
            .iter()
            .map(|fs| {
                let mut c = 0.0;
                fs.iter()
                    .map(|f| {
                        c += f;
                        c
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            loci,
            freqs,
            cumulative,
        })
    }

    pub fn num_loci(&self) -> usize {
        self.loci.len()
    }

    pub fn loci(&self) -> &[Locus] {
        &self.loci
    }

    pub fn locus(&self, idx: usize) -> &Locus {
        &self.loci[idx]
    }

    pub fn frequencies(&self, locus_idx: usize) -> &[f64] {
        &self.freqs[locus_idx]
    }

    /// Frequency of `allele` at locus `locus_idx`, if the panel carries it.
    pub fn freq(&self, locus_idx: usize, allele: Allele) -> Option<f64> {
        let pos = self.loci[locus_idx].alleles.iter().position(|&a| a == allele)?;
        Some(self.freqs[locus_idx][pos])
    }

    pub fn contains(&self, locus_idx: usize, allele: Allele) -> bool {
        self.loci[locus_idx].alleles.contains(&allele)
    }

    fn rebuild_cumulative(&mut self) {
        self.cumulative = self
            .freqs
            .iter()
            .map(|fs| {
                let mut c = 0.0;
                fs.iter()
                    .map(|f| {
                        c += f;
                        c
                    })
                    .collect()
            })
            .collect();
    }

    /// One allele draw at a locus, by inverse transform over the panel order.
    pub fn sample_allele(&self, locus_idx: usize, rng: &mut ChaCha8Rng) -> Allele {
        let u: f64 = rng.random();
        let cum = &self.cumulative[locus_idx];
        let pos = cum.partition_point(|&c| c <= u).min(cum.len() - 1);
        self.loci[locus_idx].alleles[pos]
    }

    /// One genotype draw at a locus: two independent allele draws.
    pub fn sample_locus_genotype(&self, locus_idx: usize, rng: &mut ChaCha8Rng) -> Genotype {
        let x = self.sample_allele(locus_idx, rng);
        let y = self.sample_allele(locus_idx, rng);
        Genotype::new(x, y)
    }

    /// Hardy-Weinberg probability of a genotype at a locus (2pq or p^2).
    /// Zero if either allele is not on the panel.
    pub fn hwe_prob(&self, locus_idx: usize, g: Genotype) -> f64 {
        let pa = self.freq(locus_idx, g.first()).unwrap_or(0.0);
        let pb = self.freq(locus_idx, g.second()).unwrap_or(0.0);
        if g.is_homozygous() {
            pa * pa
        } else {
            2.0 * pa * pb
        }
    }

    /// All unordered allele pairs at a locus, in lexicographic order.
    pub fn locus_genotypes(&self, locus_idx: usize) -> Vec<Genotype> {
        let mut alleles = self.loci[locus_idx].alleles.clone();
        alleles.sort_unstable();
        let mut out = Vec::with_capacity(alleles.len() * (alleles.len() + 1) / 2);
        for i in 0..alleles.len() {
            for j in i..alleles.len() {
                out.push(Genotype::new(alleles[i], alleles[j]));
            }
        }
        out
    }

    /// Serialize to the CSV panel format. Frequencies are written with six
    /// fractional digits, adjusted by largest remainder so each locus sums to
    /// exactly 1.000000 in decimal.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("locus,allele,frequency\n");
        for (locus, fs) in self.loci.iter().zip(&self.freqs) {
            let micro = round_to_micro_units(fs);
            for (&a, m) in locus.alleles.iter().zip(micro) {
                out.push_str(&format!(
                    "{},{},{}.{:06}\n",
                    locus.name,
                    a,
                    m / 1_000_000,
                    m % 1_000_000
                ));
            }
        }
        out
    }
}

// Largest-remainder rounding of probabilities to micro-units summing to 1e6.
fn round_to_micro_units(fs: &[f64]) -> Vec<u64> {
    let mut units: Vec<u64> = fs.iter().map(|f| (f * 1e6).floor() as u64).collect();
    let assigned: u64 = units.iter().sum();
    let mut remainders: Vec<(usize, f64)> = fs
        .iter()
        .enumerate()
        .map(|(i, f)| (i, f * 1e6 - (f * 1e6).floor()))
        .collect();
    remainders.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    let missing = 1_000_000u64.saturating_sub(assigned) as usize;
    for &(i, _) in remainders.iter().take(missing) {
        units[i] += 1;
    }
    units
}

/// One person's profile: a genotype per panel locus, in panel order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GenotypeProfile {
    pub genotypes: Vec<Genotype>,
}

impl GenotypeProfile {
    pub fn genotype(&self, locus_idx: usize) -> Genotype {
        self.genotypes[locus_idx]
    }

    pub fn num_loci(&self) -> usize {
        self.genotypes.len()
    }

    /// True when every genotype uses alleles the panel carries and the locus
    /// count matches.
    pub fn is_valid_for(&self, panel: &FrequencyPanel) -> bool {
        self.genotypes.len() == panel.num_loci()
            && self.genotypes.iter().enumerate().all(|(l, g)| {
                panel.contains(l, g.first()) && panel.contains(l, g.second())
            })
    }
}

/// Number of loci at which the two profiles share no allele.
pub fn disjoint_allele_loci(x: &GenotypeProfile, y: &GenotypeProfile) -> usize {
    x.genotypes
        .iter()
        .zip(&y.genotypes)
        .filter(|(gx, gy)| {
            !gy.contains(gx.first()) && !gy.contains(gx.second())
        })
        .count()
}

/// Number of loci at which the two profiles have the identical genotype.
pub fn matching_loci(x: &GenotypeProfile, y: &GenotypeProfile) -> usize {
    x.genotypes.iter().zip(&y.genotypes).filter(|(a, b)| a == b).count()
}

/// Sample one profile under Hardy-Weinberg equilibrium.
pub fn sample_genotype(panel: &FrequencyPanel, rng: &mut ChaCha8Rng) -> GenotypeProfile {
    let genotypes = (0..panel.num_loci())
        .map(|l| panel.sample_locus_genotype(l, rng))
        .collect();
    GenotypeProfile { genotypes }
}

/// Load a panel from a CSV file (`locus,allele,frequency`).
pub fn load_panel(path: &Path) -> Result<FrequencyPanel, PanelError> {
    let file = std::fs::File::open(path)?;
    load_panel_from_reader(file)
}

/// Load a panel from any reader carrying the CSV panel format. Rows must be
/// grouped by locus; frequencies must be finite decimals in (0, 1].
pub fn load_panel_from_reader<R: Read>(reader: R) -> Result<FrequencyPanel, PanelError> {
    let mut csv_reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    {
        let headers = csv_reader
            .headers()
            .map_err(|e| PanelError::Parse { row: 1, msg: e.to_string() })?;
        let expected = ["locus", "allele", "frequency"];
        if headers.iter().collect::<Vec<_>>() != expected {
            return Err(PanelError::Parse {
                row: 1,
                msg: format!("header must be `locus,allele,frequency`, got `{}`", headers.iter().collect::<Vec<_>>().join(",")),
            });
        }
    }

    let mut loci: Vec<Locus> = Vec::new();
    let mut freqs: Vec<Vec<f64>> = Vec::new();
    let mut finished: Vec<String> = Vec::new();

    for record in csv_reader.records() {
        let record = record.map_err(|e| PanelError::Parse {
            row: e.position().map_or(0, |p| p.line()),
            msg: e.to_string(),
        })?;
        let row = record.position().map_or(0, |p| p.line());
        let parse = |msg: String| PanelError::Parse { row, msg };
        if record.len() != 3 {
            return Err(parse(format!("expected 3 fields, got {}", record.len())));
        }
        let name = record[0].to_string();
        if name.is_empty() {
            return Err(parse("empty locus name".into()));
        }
        let allele: u32 = record[1]
            .parse()
            .map_err(|e| parse(format!("allele `{}`: {e}", &record[1])))?;
        let raw_freq = &record[2];
        let freq: f64 = raw_freq
            .parse()
            .map_err(|e| parse(format!("frequency `{raw_freq}`: {e}")))?;
        if !freq.is_finite() {
            return Err(parse(format!("frequency `{raw_freq}` is not finite")));
        }
        if freq <= 0.0 || freq > 1.0 {
            return Err(parse(format!("frequency {freq} outside (0, 1]")));
        }

        match loci.last_mut() {
            Some(last) if last.name == name => {
                last.alleles.push(Allele(allele));
                freqs.last_mut().unwrap().push(freq);
            }
            _ => {
                if finished.iter().any(|n| *n == name) {
                    return Err(parse(format!("rows for locus {name} are not contiguous")));
                }
                if let Some(prev) = loci.last() {
                    finished.push(prev.name.clone());
                }
                loci.push(Locus {
                    name,
                    alleles: vec![Allele(allele)],
                });
                freqs.push(vec![freq]);
            }
        }
    }

    FrequencyPanel::new(loci, freqs)
}

/// The shipped synthetic default panel (15 loci).
pub fn default_panel() -> FrequencyPanel {
    load_panel_from_reader(DEFAULT_PANEL_CSV.as_bytes())
        .expect("shipped default panel must be valid")
}

/// Generate a random panel: `num_loci` loci, `alleles_per_locus` alleles each,
/// frequencies drawn from a symmetric Dirichlet with the given concentration.
pub fn random_panel(
    num_loci: usize,
    alleles_per_locus: usize,
    concentration: f64,
    rng: &mut ChaCha8Rng,
) -> Result<FrequencyPanel, PanelError> {
    if num_loci < 1 {
        return Err(PanelError::InvalidArgument("num_loci must be >= 1".into()));
    }
    if alleles_per_locus < 2 {
        return Err(PanelError::InvalidArgument(
            "alleles_per_locus must be >= 2".into(),
        ));
    }
    if !(concentration.is_finite() && concentration > 0.0) {
        return Err(PanelError::InvalidArgument(
            "concentration must be positive and finite".into(),
        ));
    }
    let gamma = Gamma::new(concentration, 1.0)
        .map_err(|e| PanelError::InvalidArgument(format!("dirichlet concentration: {e}")))?;
    let mut loci = Vec::with_capacity(num_loci);
    let mut freqs = Vec::with_capacity(num_loci);
    for l in 0..num_loci {
        // symmetric Dirichlet via normalized gamma draws
        let mut draws: Vec<f64> = (0..alleles_per_locus).map(|_| gamma.sample(rng)).collect();
        let mut total: f64 = draws.iter().sum();
        if total <= 0.0 {
            // all-zero draws can only happen at extreme concentrations; fall back to uniform
            draws.iter_mut().for_each(|d| *d = 1.0);
            total = alleles_per_locus as f64;
        }
        // keep every frequency strictly positive after normalization
        let floor = 1e-9;
        let fs: Vec<f64> = draws
            .iter()
            .map(|d| (d / total).max(floor))
            .collect();
        let renorm: f64 = fs.iter().sum();
        let fs: Vec<f64> = fs.iter().map(|f| f / renorm).collect();
        loci.push(Locus {
            name: format!("L{:02}", l + 1),
            alleles: (0..alleles_per_locus).map(|i| Allele(8 + i as u32)).collect(),
        });
        freqs.push(fs);
    }
    let mut panel = FrequencyPanel::new(loci, freqs)?;
    panel.rebuild_cumulative();
    Ok(panel)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedTree;

    fn panel_from_str(s: &str) -> Result<FrequencyPanel, PanelError> {
        load_panel_from_reader(s.as_bytes())
    }

    #[test]
    fn minimal_panel_parses() {
        let p = panel_from_str("locus,allele,frequency\nL1,8,0.5\nL1,9,0.5\n").unwrap();
        assert_eq!(p.num_loci(), 1);
        assert_eq!(p.locus(0).alleles.len(), 2);
        assert_eq!(p.freq(0, Allele(8)), Some(0.5));
    }

    #[test]
    fn bad_sum_is_rejected_with_locus_name() {
        let err = panel_from_str("locus,allele,frequency\nL1,8,0.5\nL1,9,0.4\n").unwrap_err();
        match err {
            PanelError::Validation { locus, .. } => assert_eq!(locus, "L1"),
            other => panic!("expected validation error, got {other}"),
        }
    }

    #[test]
    fn duplicate_allele_rejected() {
        let err = panel_from_str("locus,allele,frequency\nL1,8,0.5\nL1,8,0.5\n").unwrap_err();
        assert!(matches!(err, PanelError::Validation { .. }));
    }

    #[test]
    fn non_contiguous_locus_rejected() {
        let err = panel_from_str(
            "locus,allele,frequency\nL1,8,0.5\nL1,9,0.5\nL2,8,1.0\nL1,10,0.1\n",
        )
        .unwrap_err();
        match err {
            PanelError::Parse { row, msg } => {
                assert_eq!(row, 5);
                assert!(msg.contains("not contiguous"));
            }
            other => panic!("expected parse error, got {other}"),
        }
    }

    #[test]
    fn rejects_nan_negative_and_above_one() {
        for bad in ["NaN", "-0.1", "1.5", "0.0", "inf"] {
            let s = format!("locus,allele,frequency\nL1,8,{bad}\nL1,9,0.5\n");
            assert!(panel_from_str(&s).is_err(), "frequency {bad} must be rejected");
        }
    }

    #[test]
    fn near_degenerate_locus_samples_homozygous() {
        // The panel format requires >= 2 alleles with positive frequency, so
        // the degenerate one-allele distribution is approximated by an
        // epsilon second allele.
        let p = panel_from_str(
            "locus,allele,frequency\nL1,8,0.999999999\nL1,9,0.000000001\n",
        )
        .unwrap();
        let mut rng = SeedTree::new(11).child("degenerate").rng();
        for _ in 0..1000 {
            let g = p.sample_locus_genotype(0, &mut rng);
            assert_eq!(g, Genotype::new(Allele(8), Allele(8)));
        }
    }

    #[test]
    fn hwe_heterozygosity_rate_half_half() {
        let p = panel_from_str("locus,allele,frequency\nL1,8,0.5\nL1,9,0.5\n").unwrap();
        let mut rng = SeedTree::new(12).child("hwe").rng();
        let n = 100_000;
        let het = (0..n)
            .filter(|_| !p.sample_locus_genotype(0, &mut rng).is_homozygous())
            .count();
        let rate = het as f64 / n as f64;
        // analytic oracle: 2pq = 0.5
        assert!((rate - 0.5).abs() < 0.01, "heterozygosity {rate}");
    }

    #[test]
    fn sampling_is_deterministic_under_fixed_seed() {
        let p = default_panel();
        let a = sample_genotype(&p, &mut SeedTree::new(5).child("g").rng());
        let b = sample_genotype(&p, &mut SeedTree::new(5).child("g").rng());
        assert_eq!(a, b);
        let c = sample_genotype(&p, &mut SeedTree::new(6).child("g").rng());
        assert_ne!(a, c);
    }

    #[test]
    fn empirical_frequencies_match_panel() {
        let p = default_panel();
        let mut rng = SeedTree::new(13).child("freq").rng();
        let n = 100_000usize;
        let mut counts: Vec<Vec<u64>> =
            p.loci().iter().map(|l| vec![0; l.alleles.len()]).collect();
        for _ in 0..n {
            let profile = sample_genotype(&p, &mut rng);
            for (l, g) in profile.genotypes.iter().enumerate() {
                for a in g.alleles() {
                    let pos = p.locus(l).alleles.iter().position(|&x| x == a).unwrap();
                    counts[l][pos] += 1;
                }
            }
        }
        let draws = (2 * n) as f64;
        for l in 0..p.num_loci() {
            for (pos, &f) in p.frequencies(l).iter().enumerate() {
                let observed = counts[l][pos] as f64 / draws;
                let bound = 4.0 * (f * (1.0 - f) / draws).sqrt();
                assert!(
                    (observed - f).abs() <= bound,
                    "locus {l} allele {pos}: {observed} vs {f} (bound {bound})"
                );
            }
        }
    }

    #[test]
    fn homozygosity_matches_sum_of_squares() {
        let p = default_panel();
        let mut rng = SeedTree::new(14).child("hom").rng();
        let n = 100_000usize;
        let mut hom = vec![0u64; p.num_loci()];
        for _ in 0..n {
            let profile = sample_genotype(&p, &mut rng);
            for (l, g) in profile.genotypes.iter().enumerate() {
                if g.is_homozygous() {
                    hom[l] += 1;
                }
            }
        }
        for l in 0..p.num_loci() {
            let expected: f64 = p.frequencies(l).iter().map(|f| f * f).sum();
            let observed = hom[l] as f64 / n as f64;
            let bound = 4.0 * (expected * (1.0 - expected) / n as f64).sqrt();
            assert!(
                (observed - expected).abs() <= bound,
                "locus {l}: {observed} vs {expected}"
            );
        }
    }

    #[test]
    fn random_panel_sums_and_shape() {
        let mut rng = SeedTree::new(21).child("panel").rng();
        let p = random_panel(15, 8, 1.0, &mut rng).unwrap();
        assert_eq!(p.num_loci(), 15);
        for l in 0..15 {
            assert_eq!(p.frequencies(l).len(), 8);
            let sum: f64 = p.frequencies(l).iter().sum();
            assert!((sum - 1.0).abs() <= FREQ_SUM_TOLERANCE);
        }
        assert!(random_panel(0, 8, 1.0, &mut rng).is_err());
        assert!(random_panel(1, 1, 1.0, &mut rng).is_err());
    }

    #[test]
    fn huge_concentration_approaches_uniform() {
        // Dirichlet concentration oracle: as alpha -> inf the mean frequency
        // tends to 1/k. Averaged over 1000 panels at alpha = 1e6.
        let mut rng = SeedTree::new(22).child("dirichlet").rng();
        let k = 8usize;
        let mut acc = vec![0.0; k];
        let panels = 1000;
        for _ in 0..panels {
            let p = random_panel(1, k, 1e6, &mut rng).unwrap();
            for (a, f) in acc.iter_mut().zip(p.frequencies(0)) {
                *a += f;
            }
        }
        for a in acc {
            let mean = a / panels as f64;
            assert!((mean - 1.0 / k as f64).abs() < 0.01, "mean {mean}");
        }
    }

    #[test]
    fn csv_round_trip_preserves_structure() {
        let mut rng = SeedTree::new(23).child("roundtrip").rng();
        let p = random_panel(5, 6, 1.0, &mut rng).unwrap();
        let csv = p.to_csv_string();
        let q = load_panel_from_reader(csv.as_bytes()).unwrap();
        assert_eq!(p.num_loci(), q.num_loci());
        for l in 0..p.num_loci() {
            assert_eq!(p.locus(l).name, q.locus(l).name);
            assert_eq!(p.locus(l).alleles, q.locus(l).alleles);
            for (a, b) in p.frequencies(l).iter().zip(q.frequencies(l)) {
                assert!((a - b).abs() < 1e-6);
            }
        }
    }
}
