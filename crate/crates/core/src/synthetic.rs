//! SD-K synthetic data: strings over the alphabet `{R, D, B, N}` of length
//! 10, labeled by thresholding a weighted sum of per-position letter weights.
//!
//! A mixture draws each component's feature strings uniformly from `E¹⁰` and
//! labels them with that component's function, recording the generating
//! component per point as ground truth.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::dataset::{DataPoint, Dataset};
use crate::error::{Error, Result};

pub const WORD_LEN: usize = 10;
pub const ALPHABET: usize = 4;

/// Alphabet letter; the discriminant doubles as the class index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Letter {
    R = 0,
    D = 1,
    B = 2,
    N = 3,
}

impl Letter {
    pub const ALL: [Letter; 4] = [Letter::R, Letter::D, Letter::B, Letter::N];

    pub fn from_index(i: usize) -> Option<Letter> {
        Letter::ALL.get(i).copied()
    }

    pub fn from_char(c: char) -> Result<Letter> {
        match c {
            'R' => Ok(Letter::R),
            'D' => Ok(Letter::D),
            'B' => Ok(Letter::B),
            'N' => Ok(Letter::N),
            other => Err(Error::invalid(
                "letter",
                format!("invalid letter '{other}', expected one of R, D, B, N"),
            )),
        }
    }

    pub fn to_char(self) -> char {
        match self {
            Letter::R => 'R',
            Letter::D => 'D',
            Letter::B => 'B',
            Letter::N => 'N',
        }
    }
}

/// One generating distribution: positional feature weights, per-letter label
/// weights, and strictly ascending thresholds `(a₁, a₂, a₃)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDistribution {
    pub feature_weights: [f64; WORD_LEN],
    /// Indexed by [`Letter`] discriminant (R, D, B, N).
    pub label_weights: [f64; ALPHABET],
    pub thresholds: [f64; 3],
}

impl SyntheticDistribution {
    pub fn validate(&self) -> Result<()> {
        let [a1, a2, a3] = self.thresholds;
        if !(a1 < a2 && a2 < a3) {
            return Err(Error::invalid(
                "thresholds",
                format!("must be strictly ascending, got ({a1}, {a2}, {a3})"),
            ));
        }
        Ok(())
    }

    /// The weighted sum `C(x) = Σ qᵢ·w(xᵢ)`.
    pub fn score(&self, x: &[Letter; WORD_LEN]) -> f64 {
        x.iter()
            .zip(&self.feature_weights)
            .map(|(&l, &q)| q * self.label_weights[l as usize])
            .sum()
    }
}

/// Labels a string: `R` if `C ≤ a₁`, `D` if `a₁ < C ≤ a₂`, `B` if
/// `a₂ < C ≤ a₃`, `N` otherwise (left-open, right-closed intervals).
pub fn label_of(x: &[Letter; WORD_LEN], dist: &SyntheticDistribution) -> Letter {
    let c = dist.score(x);
    let [a1, a2, a3] = dist.thresholds;
    if c <= a1 {
        Letter::R
    } else if c <= a2 {
        Letter::D
    } else if c <= a3 {
        Letter::B
    } else {
        Letter::N
    }
}

/// Parses a 10-letter string such as `"RDRDRDRDRD"`.
pub fn parse_word(s: &str) -> Result<[Letter; WORD_LEN]> {
    let chars: Vec<char> = s.chars().collect();
    if chars.len() != WORD_LEN {
        return Err(Error::invalid(
            "word",
            format!("expected {WORD_LEN} letters, got {}", chars.len()),
        ));
    }
    let mut out = [Letter::R; WORD_LEN];
    for (i, c) in chars.into_iter().enumerate() {
        out[i] = Letter::from_char(c)?;
    }
    Ok(out)
}

/// How letter strings are presented to the learner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureEncoding {
    /// 40 binary features: 10 positions × 4 letters. The default.
    OneHot,
    /// 10 features holding the letter index as a real number.
    Integer,
}

impl Default for FeatureEncoding {
    fn default() -> Self {
        FeatureEncoding::OneHot
    }
}

impl FeatureEncoding {
    pub fn dim(self) -> usize {
        match self {
            FeatureEncoding::OneHot => WORD_LEN * ALPHABET,
            FeatureEncoding::Integer => WORD_LEN,
        }
    }

    pub fn encode(self, x: &[Letter; WORD_LEN]) -> Vec<f64> {
        match self {
            FeatureEncoding::OneHot => {
                let mut v = vec![0.0; WORD_LEN * ALPHABET];
                for (i, &l) in x.iter().enumerate() {
                    v[i * ALPHABET + l as usize] = 1.0;
                }
                v
            }
            FeatureEncoding::Integer => x.iter().map(|&l| l as usize as f64).collect(),
        }
    }

    pub fn decode(self, features: &[f64]) -> Result<[Letter; WORD_LEN]> {
        let mut out = [Letter::R; WORD_LEN];
        match self {
            FeatureEncoding::OneHot => {
                if features.len() != WORD_LEN * ALPHABET {
                    return Err(Error::DimensionMismatch {
                        expected: WORD_LEN * ALPHABET,
                        got: features.len(),
                    });
                }
                for i in 0..WORD_LEN {
                    let block = &features[i * ALPHABET..(i + 1) * ALPHABET];
                    let hot: Vec<usize> =
                        (0..ALPHABET).filter(|&j| block[j] == 1.0).collect();
                    if hot.len() != 1 || block.iter().any(|&v| v != 0.0 && v != 1.0) {
                        return Err(Error::invalid("features", "not a valid one-hot block"));
                    }
                    out[i] = Letter::from_index(hot[0]).unwrap();
                }
            }
            FeatureEncoding::Integer => {
                if features.len() != WORD_LEN {
                    return Err(Error::DimensionMismatch {
                        expected: WORD_LEN,
                        got: features.len(),
                    });
                }
                for i in 0..WORD_LEN {
                    let idx = features[i] as usize;
                    if features[i].fract() != 0.0 || idx >= ALPHABET {
                        return Err(Error::invalid("features", "not a letter index"));
                    }
                    out[i] = Letter::from_index(idx).unwrap();
                }
            }
        }
        Ok(out)
    }
}

/// A mixture of distributions with per-component sample counts.
#[derive(Debug, Clone)]
pub struct MixtureSpec {
    pub components: Vec<(SyntheticDistribution, usize)>,
    pub seed: u64,
    pub encoding: FeatureEncoding,
}

impl MixtureSpec {
    pub fn new(components: Vec<(SyntheticDistribution, usize)>, seed: u64) -> Self {
        MixtureSpec {
            components,
            seed,
            encoding: FeatureEncoding::default(),
        }
    }

    pub fn total(&self) -> usize {
        self.components.iter().map(|(_, n)| n).sum()
    }
}

/// Draws the mixture: uniform strings per component, labels from that
/// component's function, features encoded per the spec. The component index
/// is recorded as provenance. Each component consumes an independent seeded
/// stream, so generation is reproducible regardless of component order or
/// parallel splitting.
pub fn generate(spec: &MixtureSpec) -> Result<Dataset> {
    if spec.total() == 0 {
        return Err(Error::EmptyDataset);
    }
    for (dist, _) in &spec.components {
        dist.validate()?;
    }
    let mut points = Vec::with_capacity(spec.total());
    let mut provenance = Vec::with_capacity(spec.total());
    for (idx, (dist, count)) in spec.components.iter().enumerate() {
        let mut rng = component_rng(spec.seed, idx);
        for _ in 0..*count {
            let mut word = [Letter::R; WORD_LEN];
            for slot in word.iter_mut() {
                *slot = Letter::ALL[rng.random_range(0..ALPHABET)];
            }
            let label = label_of(&word, dist);
            points.push(DataPoint::new(spec.encoding.encode(&word), label as usize));
            provenance.push(idx);
        }
    }
    let ids = (0..points.len() as u64).collect();
    Dataset::with_ids(points, ids, ALPHABET, Some(provenance))
}

fn component_rng(seed: u64, component: usize) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(seed ^ (component as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// The paper's three distributions, in order.
pub fn builtin_distributions() -> Vec<SyntheticDistribution> {
    // label_weights indexed as [R, D, B, N]
    vec![
        SyntheticDistribution {
            feature_weights: [1.0, -1.0, 1.0, -1.0, 1.0, -1.0, 1.0, -1.0, 1.0, -1.0],
            label_weights: [1.0, -1.0, -0.3, 0.3],
            thresholds: [-2.0, 0.0, 2.0],
        },
        SyntheticDistribution {
            feature_weights: [0.5, 0.5, -1.0, 1.0, 0.0, -0.5, 1.0, -1.0, 0.5, -0.5],
            label_weights: [-0.4, 1.0, 0.6, -0.8],
            thresholds: [-1.5, 0.0, 1.5],
        },
        SyntheticDistribution {
            feature_weights: [1.0, 0.5, 1.0, 1.0, 0.5, -0.5, -1.0, -1.5, -0.5, 1.0],
            label_weights: [1.2, 0.4, -0.8, -0.2],
            thresholds: [-2.5, 0.0, 2.0],
        },
    ]
}

/// Exact label probabilities of a distribution by exhaustive enumeration of
/// all `4¹⁰` strings.
pub fn exact_label_counts(dist: &SyntheticDistribution) -> [u64; ALPHABET] {
    let mut counts = [0u64; ALPHABET];
    let total = (ALPHABET as u64).pow(WORD_LEN as u32);
    let mut word = [Letter::R; WORD_LEN];
    for code in 0..total {
        let mut rest = code;
        for slot in word.iter_mut() {
            *slot = Letter::ALL[(rest % ALPHABET as u64) as usize];
            rest /= ALPHABET as u64;
        }
        counts[label_of(&word, dist) as usize] += 1;
    }
    counts
}

/// Parses a distribution parameter file: a TOML document with keys
/// `label_weights_i` (letter → weight table), `feature_weights_i` (array of
/// 10 reals), and `threshold_i` (table with `a_1`, `a_2`, `a_3`).
pub fn parse_distribution_file(text: &str) -> Result<Vec<SyntheticDistribution>> {
    let table: toml::Table = text.parse().map_err(|e| Error::Parse {
        line: 0,
        message: format!("{e}"),
    })?;
    let mut out = Vec::new();
    for i in 1.. {
        let lw_key = format!("label_weights_{i}");
        if !table.contains_key(&lw_key) {
            break;
        }
        let lw = table[&lw_key].as_table().ok_or_else(|| Error::Parse {
            line: 0,
            message: format!("{lw_key} must be a table"),
        })?;
        let mut label_weights = [0.0; ALPHABET];
        for letter in Letter::ALL {
            let key = letter.to_char().to_string();
            label_weights[letter as usize] = lw
                .get(&key)
                .and_then(|v| v.as_float().or_else(|| v.as_integer().map(|n| n as f64)))
                .ok_or_else(|| Error::Parse {
                    line: 0,
                    message: format!("{lw_key} missing weight for letter {key}"),
                })?;
        }
        let fw_key = format!("feature_weights_{i}");
        let fw = table
            .get(&fw_key)
            .and_then(|v| v.as_array())
            .ok_or_else(|| Error::Parse {
                line: 0,
                message: format!("missing array {fw_key}"),
            })?;
        if fw.len() != WORD_LEN {
            return Err(Error::Parse {
                line: 0,
                message: format!("{fw_key} must have {WORD_LEN} entries"),
            });
        }
        let mut feature_weights = [0.0; WORD_LEN];
        for (slot, v) in feature_weights.iter_mut().zip(fw) {
            *slot = v
                .as_float()
                .or_else(|| v.as_integer().map(|n| n as f64))
                .ok_or_else(|| Error::Parse {
                    line: 0,
                    message: format!("{fw_key} entries must be numbers"),
                })?;
        }
        let th_key = format!("threshold_{i}");
        let th = table
            .get(&th_key)
            .and_then(|v| v.as_table())
            .ok_or_else(|| Error::Parse {
                line: 0,
                message: format!("missing table {th_key}"),
            })?;
        let mut thresholds = [0.0; 3];
        for (j, slot) in thresholds.iter_mut().enumerate() {
            let key = format!("a_{}", j + 1);
            *slot = th
                .get(&key)
                .and_then(|v| v.as_float().or_else(|| v.as_integer().map(|n| n as f64)))
                .ok_or_else(|| Error::Parse {
                    line: 0,
                    message: format!("{th_key} missing {key}"),
                })?;
        }
        let dist = SyntheticDistribution {
            feature_weights,
            label_weights,
            thresholds,
        };
        dist.validate()?;
        out.push(dist);
    }
    if out.is_empty() {
        return Err(Error::Parse {
            line: 0,
            message: "no distributions found (expected label_weights_1, ...)".into(),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_parameters_match_reference_values() {
        let dists = builtin_distributions();
        assert_eq!(dists.len(), 3);
        assert_eq!(dists[1].thresholds, [-1.5, 0.0, 1.5]);
        assert_eq!(dists[2].feature_weights[7], -1.5);
        assert_eq!(dists[0].label_weights[Letter::B as usize], -0.3);
    }

    #[test]
    fn label_of_hand_evaluations() {
        let d1 = &builtin_distributions()[0];
        let all_r = parse_word("RRRRRRRRRR").unwrap();
        assert_eq!(d1.score(&all_r), 0.0);
        assert_eq!(label_of(&all_r, d1), Letter::D);

        let alternating = parse_word("RDRDRDRDRD").unwrap();
        assert_eq!(d1.score(&alternating), 10.0);
        assert_eq!(label_of(&alternating, d1), Letter::N);
    }

    #[test]
    fn boundary_is_right_closed() {
        // construct score exactly a2 = 0 for distribution 1
        let d1 = &builtin_distributions()[0];
        let word = parse_word("RRRRRRRRRR").unwrap();
        assert_eq!(d1.score(&word), d1.thresholds[1]);
        assert_eq!(label_of(&word, d1), Letter::D);
    }

    #[test]
    fn generate_is_deterministic_and_counts_components() {
        let dists = builtin_distributions();
        let spec = MixtureSpec::new(
            vec![(dists[0].clone(), 30), (dists[1].clone(), 0), (dists[2].clone(), 20)],
            99,
        );
        let a = generate(&spec).unwrap();
        let b = generate(&spec).unwrap();
        assert_eq!(a.len(), 50);
        for i in 0..a.len() {
            assert_eq!(a.point(i).features, b.point(i).features);
            assert_eq!(a.point(i).label, b.point(i).label);
        }
        let comps = a.components().unwrap();
        assert_eq!(comps.iter().filter(|&&c| c == 0).count(), 30);
        assert_eq!(comps.iter().filter(|&&c| c == 1).count(), 0);
        assert_eq!(comps.iter().filter(|&&c| c == 2).count(), 20);
    }

    #[test]
    fn one_hot_round_trips() {
        let word = parse_word("NBDRRNBDRN").unwrap();
        let enc = FeatureEncoding::OneHot.encode(&word);
        assert_eq!(FeatureEncoding::OneHot.decode(&enc).unwrap(), word);
        let enc = FeatureEncoding::Integer.encode(&word);
        assert_eq!(FeatureEncoding::Integer.decode(&enc).unwrap(), word);
    }

    #[test]
    fn exhaustive_enumeration_is_non_degenerate() {
        for dist in builtin_distributions() {
            let counts = exact_label_counts(&dist);
            assert_eq!(counts.iter().sum::<u64>(), 4u64.pow(10));
            for (i, &c) in counts.iter().enumerate() {
                assert!(c > 0, "label {i} never produced");
            }
        }
    }

    #[test]
    fn empirical_labels_match_exhaustive_probabilities() {
        // pure distribution 1, N = 1e5, 3σ multinomial bounds
        let dist = builtin_distributions()[0].clone();
        let n = 100_000usize;
        let spec = MixtureSpec::new(vec![(dist.clone(), n)], 7);
        let ds = generate(&spec).unwrap();
        let observed = ds.class_counts();
        let exact = exact_label_counts(&dist);
        let total = 4f64.powi(10);
        for k in 0..ALPHABET {
            let p = exact[k] as f64 / total;
            let mean = n as f64 * p;
            let sigma = (n as f64 * p * (1.0 - p)).sqrt();
            let dev = (observed[k] as f64 - mean).abs();
            assert!(
                dev <= 3.0 * sigma,
                "label {k}: observed {} expected {:.1} ± {:.1}",
                observed[k],
                mean,
                sigma
            );
        }
    }

    #[test]
    fn distribution_file_round_trip() {
        let text = r#"
feature_weights_1 = [1, -1, 1, -1, 1, -1, 1, -1, 1, -1]

[label_weights_1]
R = 1.0
D = -1.0
N = 0.3
B = -0.3

[threshold_1]
a_3 = 2.0
a_2 = 0.0
a_1 = -2.0
"#;
        let dists = parse_distribution_file(text).unwrap();
        assert_eq!(dists.len(), 1);
        assert_eq!(dists[0], builtin_distributions()[0]);
    }

    #[test]
    fn invalid_letter_rejected() {
        assert!(parse_word("RRRRRXRRRR").is_err());
    }
}
