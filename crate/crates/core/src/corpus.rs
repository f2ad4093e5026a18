//! Dataset ingestion and tokenization.
//!
//! Every encoder sees exactly the tokens produced by [`tokenize`]:
//!
//! 1. lowercase the text,
//! 2. split on Unicode whitespace,
//! 3. strip leading and trailing non-alphanumeric characters from each piece,
//! 4. drop pieces that became empty, unless the piece consisted only of
//!    punctuation, in which case it is kept verbatim (so `"..."` stays a token).
//!
//! Pair-dataset sentences are numbered for precomputed-vector lookup in
//! load order: split by split (train, dev, test), pair `k` contributing ids
//! `2k` and `2k + 1`. Labeled-dataset sentences use their line index.

use std::fs;
use std::ops::Range;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::normalize::SplitTag;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sentence {
    pub raw: String,
    pub tokens: Vec<String>,
}

impl Sentence {
    pub fn new(raw: impl Into<String>) -> Self {
        let raw = raw.into();
        let tokens = tokenize(&raw);
        Sentence { raw, tokens }
    }
}

pub fn tokenize(raw: &str) -> Vec<String> {
    raw.to_lowercase()
        .split_whitespace()
        .map(|piece| {
            let stripped = piece.trim_matches(|c: char| !c.is_alphanumeric());
            if stripped.is_empty() {
                piece.to_string()
            } else {
                stripped.to_string()
            }
        })
        .collect()
}

/// Two sentences and a gold similarity score in `[0, 5]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Pair {
    pub a: Sentence,
    pub b: Sentence,
    pub gold: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairSplit {
    pub tag: SplitTag,
    pub pairs: Vec<Pair>,
    /// Id of the first sentence of the first pair in this split.
    pub first_id: usize,
}

impl PairSplit {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Sentences in id order: `a0, b0, a1, b1, ...`.
    pub fn sentences(&self) -> Vec<&Sentence> {
        self.pairs.iter().flat_map(|p| [&p.a, &p.b]).collect()
    }

    pub fn ids(&self) -> Range<usize> {
        self.first_id..self.first_id + 2 * self.pairs.len()
    }

    pub fn gold(&self) -> Vec<f64> {
        self.pairs.iter().map(|p| p.gold).collect()
    }
}

/// STSBenchmark-style dataset. Any split may be absent (the unsupervised
/// protocol needs only `test`).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PairDataset {
    pub train: Option<PairSplit>,
    pub dev: Option<PairSplit>,
    pub test: Option<PairSplit>,
}

impl PairDataset {
    /// Loads whichever split files are given and assigns sentence ids in the
    /// order train, dev, test.
    pub fn load(
        train: Option<&Path>,
        dev: Option<&Path>,
        test: Option<&Path>,
    ) -> Result<PairDataset> {
        let mut next_id = 0;
        let mut load = |path: Option<&Path>, tag| -> Result<Option<PairSplit>> {
            let Some(path) = path else { return Ok(None) };
            let pairs = load_sts_benchmark(path)?;
            let split = PairSplit {
                tag,
                first_id: next_id,
                pairs,
            };
            next_id += 2 * split.len();
            Ok(Some(split))
        };
        Ok(PairDataset {
            train: load(train, SplitTag::Train)?,
            dev: load(dev, SplitTag::Dev)?,
            test: load(test, SplitTag::Test)?,
        })
    }
}

/// Parses one STSBenchmark file: tab-separated lines of
/// `genre, file, year, index, score, sentence1, sentence2`. Fields beyond the
/// seventh (present on some lines of the published files) are ignored.
pub fn load_sts_benchmark(path: &Path) -> Result<Vec<Pair>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_sts(&text, path)
}

pub(crate) fn parse_sts(text: &str, path: &Path) -> Result<Vec<Pair>> {
    let err = |line: usize, message: String| Error::Load {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut pairs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() < 7 {
            return Err(err(
                line_no,
                format!("expected 7 tab-separated fields, found {}", fields.len()),
            ));
        }
        let gold: f64 = fields[4]
            .trim()
            .parse()
            .map_err(|_| err(line_no, format!("non-numeric score {:?}", fields[4])))?;
        if !(0.0..=5.0).contains(&gold) {
            return Err(err(line_no, format!("score {gold} outside [0, 5]")));
        }
        pairs.push(Pair {
            a: Sentence::new(fields[5]),
            b: Sentence::new(fields[6]),
            gold,
        });
    }
    if pairs.is_empty() {
        return Err(Error::File {
            path: path.to_path_buf(),
            message: "no sentence pairs".into(),
        });
    }
    Ok(pairs)
}

/// How a labeled dataset is split for training and scoring.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum SplitPolicy {
    Fixed {
        train: Vec<usize>,
        dev: Option<Vec<usize>>,
        test: Vec<usize>,
    },
    CrossValidation {
        k: usize,
        seed: u64,
    },
}

/// Split descriptor accompanying a labeled-dataset file. Fixed splits are
/// given as line-index ranges into the file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SplitManifest {
    Fixed {
        train: Range<usize>,
        dev: Option<Range<usize>>,
        test: Range<usize>,
    },
    CrossValidation {
        k: usize,
        seed: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    pub n_classes: usize,
    pub split: SplitManifest,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub examples: Vec<(Sentence, usize)>,
    pub n_classes: usize,
    pub split_policy: SplitPolicy,
}

impl LabeledDataset {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.examples.iter().map(|(_, y)| *y).collect()
    }

    pub fn sentences(&self) -> Vec<&Sentence> {
        self.examples.iter().map(|(s, _)| s).collect()
    }
}

/// Loads a `label<TAB>text` file and attaches the split policy from the
/// manifest.
pub fn load_labeled_dataset(path: &Path, manifest: &Manifest) -> Result<LabeledDataset> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_labeled(&text, path, manifest)
}

pub(crate) fn parse_labeled(text: &str, path: &Path, manifest: &Manifest) -> Result<LabeledDataset> {
    let err = |line: usize, message: String| Error::Load {
        path: path.to_path_buf(),
        line,
        message,
    };
    if manifest.n_classes == 0 {
        return Err(Error::invalid("n_classes must be positive"));
    }
    let mut examples = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let (label, sentence) = line
            .split_once('\t')
            .ok_or_else(|| err(line_no, "expected label<TAB>text".into()))?;
        let label: usize = label
            .trim()
            .parse()
            .map_err(|_| err(line_no, format!("invalid label {label:?}")))?;
        if label >= manifest.n_classes {
            return Err(err(
                line_no,
                format!("label {label} out of range for {} classes", manifest.n_classes),
            ));
        }
        examples.push((Sentence::new(sentence), label));
    }
    if examples.is_empty() {
        return Err(Error::File {
            path: path.to_path_buf(),
            message: "empty dataset".into(),
        });
    }
    let split_policy = resolve_split(&manifest.split, examples.len())
        .map_err(|message| Error::File {
            path: path.to_path_buf(),
            message,
        })?;
    Ok(LabeledDataset {
        examples,
        n_classes: manifest.n_classes,
        split_policy,
    })
}

fn resolve_split(split: &SplitManifest, n: usize) -> std::result::Result<SplitPolicy, String> {
    match split {
        SplitManifest::CrossValidation { k, seed } => {
            if *k < 2 || *k > n {
                return Err(format!("cannot make {k} folds from {n} examples"));
            }
            Ok(SplitPolicy::CrossValidation { k: *k, seed: *seed })
        }
        SplitManifest::Fixed { train, dev, test } => {
            let mut seen = vec![false; n];
            let mut claim = |r: &Range<usize>, name: &str| -> std::result::Result<Vec<usize>, String> {
                if r.end > n || r.start >= r.end {
                    return Err(format!("{name} range {r:?} invalid for {n} examples"));
                }
                for i in r.clone() {
                    if std::mem::replace(&mut seen[i], true) {
                        return Err(format!("{name} range overlaps another split at {i}"));
                    }
                }
                Ok(r.clone().collect())
            };
            let train = claim(train, "train")?;
            let dev = dev.as_ref().map(|r| claim(r, "dev")).transpose()?;
            let test = claim(test, "test")?;
            Ok(SplitPolicy::Fixed { train, dev, test })
        }
    }
}

/// Partitions `0..n` into `k` folds whose sizes differ by at most one.
///
/// The assignment is a pure function of `(n, k, seed)`: indices are
/// shuffled with a seeded ChaCha8 stream and position `p` in the shuffle
/// goes to fold `p % k`. Each fold is returned in ascending order.
pub fn cv_folds(n: usize, k: usize, seed: u64) -> Vec<Vec<usize>> {
    assert!(k >= 1 && k <= n.max(1), "invalid fold count {k} for {n} items");
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let mut folds = vec![Vec::with_capacity(n / k + 1); k];
    for (p, i) in order.into_iter().enumerate() {
        folds[p % k].push(i);
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    folds
}
