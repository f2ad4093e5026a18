//! Sentence encoders composed from word vectors, with a known output size.
//!
//! Out-of-vocabulary tokens are skipped by every pooling operation. A
//! sentence with no in-vocabulary token maps to zero blocks and is counted in
//! [`Diagnostics::empty_sentences`]; nothing is imputed.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::corpus::Sentence;
use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, norm, Matrix};
use crate::wordvec::WordVectors;

pub const SIF_DEFAULT_A: f64 = 1e-3;
pub const SIF_FREQ_FLOOR: f64 = 1e-7;

const PC_TOLERANCE: f64 = 1e-9;
const PC_MAX_ITERATIONS: usize = 1000;

/// Elementwise pooling over a sentence's word vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PoolOp {
    Min,
    Avg,
    Max,
}

impl std::str::FromStr for PoolOp {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "min" => Ok(PoolOp::Min),
            "avg" | "mean" | "average" => Ok(PoolOp::Avg),
            "max" => Ok(PoolOp::Max),
            other => Err(Error::invalid(format!("unknown pooling op {other:?}"))),
        }
    }
}

/// Counters collected while encoding.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Diagnostics {
    pub sentences: usize,
    /// Sentences for which some word-level component saw no in-vocabulary
    /// token and emitted zeros.
    pub empty_sentences: usize,
    /// Token lookups, summed over word-level components.
    pub tokens: usize,
    pub oov_tokens: usize,
}

impl Diagnostics {
    pub fn merge(&mut self, other: &Diagnostics) {
        self.sentences += other.sentences;
        self.empty_sentences += other.empty_sentences;
        self.tokens += other.tokens;
        self.oov_tokens += other.oov_tokens;
    }
}

#[derive(Default)]
struct SentenceFlags {
    empty: bool,
    tokens: usize,
    oov: usize,
}

/// In-vocabulary vectors of a sentence, in token order.
fn in_vocab<'a>(
    wv: &'a WordVectors,
    s: &'a Sentence,
    flags: &mut SentenceFlags,
) -> Vec<(&'a str, &'a [f64])> {
    let found: Vec<_> = s
        .tokens
        .iter()
        .filter_map(|t| wv.lookup(t).map(|v| (t.as_str(), v)))
        .collect();
    flags.tokens += s.tokens.len();
    flags.oov += s.tokens.len() - found.len();
    if found.is_empty() {
        flags.empty = true;
    }
    found
}

/// Plain mean of in-vocabulary word vectors; zero vector when none.
pub fn encode_average(wv: &WordVectors, s: &Sentence) -> Vec<f64> {
    average_into(wv, s, &mut SentenceFlags::default())
}

fn average_into(wv: &WordVectors, s: &Sentence, flags: &mut SentenceFlags) -> Vec<f64> {
    let found = in_vocab(wv, s, flags);
    let mut out = vec![0.0; wv.dim()];
    for (_, v) in &found {
        axpy(1.0, v, &mut out);
    }
    if !found.is_empty() {
        let n = found.len() as f64;
        out.iter_mut().for_each(|x| *x /= n);
    }
    out
}

/// Elementwise pooling, blocks concatenated in the order min, avg, max
/// regardless of the order of `ops`.
pub fn encode_pool_concat(wv: &WordVectors, s: &Sentence, ops: &[PoolOp]) -> Vec<f64> {
    pool_into(wv, s, &canonical_ops(ops), &mut SentenceFlags::default())
}

fn canonical_ops(ops: &[PoolOp]) -> Vec<PoolOp> {
    let mut ops = ops.to_vec();
    ops.sort_unstable();
    ops.dedup();
    ops
}

fn pool_into(wv: &WordVectors, s: &Sentence, ops: &[PoolOp], flags: &mut SentenceFlags) -> Vec<f64> {
    let found = in_vocab(wv, s, flags);
    let d = wv.dim();
    let mut out = Vec::with_capacity(ops.len() * d);
    for op in ops {
        if found.is_empty() {
            out.extend(std::iter::repeat_n(0.0, d));
            continue;
        }
        match op {
            PoolOp::Min | PoolOp::Max => {
                let mut block = found[0].1.to_vec();
                for (_, v) in &found[1..] {
                    for (b, x) in block.iter_mut().zip(*v) {
                        *b = if *op == PoolOp::Min { b.min(*x) } else { b.max(*x) };
                    }
                }
                out.extend(block);
            }
            PoolOp::Avg => {
                let mut block = vec![0.0; d];
                for (_, v) in &found {
                    axpy(1.0, v, &mut block);
                }
                let n = found.len() as f64;
                out.extend(block.into_iter().map(|x| x / n));
            }
        }
    }
    out
}

/// Smooth-inverse-frequency weighting with optional common-component removal.
#[derive(Debug, Clone, PartialEq)]
pub struct SifModel {
    a: f64,
    freq: HashMap<String, f64>,
    pc: Option<Vec<f64>>,
}

impl SifModel {
    /// `freq` holds relative frequencies in `(0, 1]`.
    pub fn new(a: f64, freq: HashMap<String, f64>) -> Result<Self> {
        if !(a > 0.0) || !a.is_finite() {
            return Err(Error::invalid(format!("SIF constant a must be positive, got {a}")));
        }
        if let Some((w, p)) = freq.iter().find(|(_, &p)| !(p > 0.0 && p <= 1.0)) {
            return Err(Error::invalid(format!("frequency of {w:?} is {p}, not in (0, 1]")));
        }
        Ok(SifModel { a, freq, pc: None })
    }

    /// Relative frequencies from raw counts.
    pub fn from_counts(a: f64, counts: HashMap<String, f64>) -> Result<Self> {
        let total: f64 = counts.values().sum();
        if !(total > 0.0) {
            return Err(Error::invalid("word counts sum to zero"));
        }
        if counts.values().any(|&c| !(c > 0.0)) {
            return Err(Error::invalid("word counts must be positive"));
        }
        let freq = counts.into_iter().map(|(w, c)| (w, c / total)).collect();
        SifModel::new(a, freq)
    }

    /// Reads `word count` lines.
    pub fn load_counts(path: &Path, a: f64) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut counts = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            let mut fields = line.split_whitespace();
            let (Some(word), Some(count)) = (fields.next(), fields.next()) else {
                if line.trim().is_empty() {
                    continue;
                }
                return Err(Error::Load {
                    path: path.to_path_buf(),
                    line: i + 1,
                    message: "expected `word count`".into(),
                });
            };
            let count: f64 = count.parse().map_err(|_| Error::Load {
                path: path.to_path_buf(),
                line: i + 1,
                message: format!("invalid count {count:?}"),
            })?;
            counts.entry(word.to_lowercase()).or_insert(count);
        }
        SifModel::from_counts(a, counts)
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn pc(&self) -> Option<&[f64]> {
        self.pc.as_deref()
    }

    pub fn frequency(&self, word: &str) -> f64 {
        self.freq.get(word).copied().unwrap_or(SIF_FREQ_FLOOR)
    }

    pub fn weight(&self, word: &str) -> f64 {
        self.a / (self.a + self.frequency(word))
    }
}

/// `a / (a + p(w))` for every token of the sentence.
pub fn sif_weights(model: &SifModel, s: &Sentence) -> Vec<f64> {
    s.tokens.iter().map(|t| model.weight(t)).collect()
}

/// SIF-weighted sum of in-vocabulary vectors divided by their count.
fn sif_average_into(
    wv: &WordVectors,
    model: &SifModel,
    s: &Sentence,
    flags: &mut SentenceFlags,
) -> Vec<f64> {
    let found = in_vocab(wv, s, flags);
    let mut out = vec![0.0; wv.dim()];
    for (w, v) in &found {
        axpy(model.weight(w), v, &mut out);
    }
    if !found.is_empty() {
        let n = found.len() as f64;
        out.iter_mut().for_each(|x| *x /= n);
    }
    out
}

/// First right singular vector of `x` (not centered), by power iteration on
/// `xᵀx`.
///
/// Two starts are iterated: the coordinate axis of the largest column norm
/// and a fixed pseudo-random direction. The one with the larger Rayleigh
/// quotient wins, the axis start on exact ties, so a fully symmetric
/// spectrum returns an axis. The sign makes the largest-magnitude entry
/// positive.
pub fn sif_fit_pc(x: &Matrix) -> Result<Vec<f64>> {
    if x.rows() < 2 {
        return Err(Error::invalid("principal component needs at least 2 rows"));
    }
    if x.as_slice().iter().all(|&v| v == 0.0) {
        return Err(Error::DegeneratePc("all-zero embedding matrix".into()));
    }
    let d = x.cols();
    let gram_apply = |v: &[f64]| x.tr_mul_vec(&x.mul_vec(v));

    let col_norms: Vec<f64> = (0..d)
        .map(|j| x.iter_rows().map(|r| r[j] * r[j]).sum())
        .collect();
    let axis = (0..d).fold(0, |best, j| if col_norms[j] > col_norms[best] { j } else { best });
    let mut axis_start = vec![0.0; d];
    axis_start[axis] = 1.0;

    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0f_5cu64);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let generic_start: Vec<f64> = (0..d).map(|_| normal.sample(&mut rng)).collect();

    let candidates = [axis_start, generic_start].map(|start| power_iterate(start, gram_apply));
    let rayleigh = |v: &Vec<f64>| dot(v, &gram_apply(v));
    let (first, second) = (&candidates[0], &candidates[1]);
    let (r1, r2) = (rayleigh(first), rayleigh(second));
    let mut pc = if r2 > r1 * (1.0 + 1e-12) {
        second.clone()
    } else {
        first.clone()
    };
    let lead = pc
        .iter()
        .copied()
        .fold(0.0f64, |m, v| if v.abs() > m.abs() { v } else { m });
    if lead < 0.0 {
        pc.iter_mut().for_each(|v| *v = -*v);
    }
    Ok(pc)
}

fn power_iterate(mut v: Vec<f64>, apply: impl Fn(&[f64]) -> Vec<f64>) -> Vec<f64> {
    let n = norm(&v);
    v.iter_mut().for_each(|x| *x /= n);
    for _ in 0..PC_MAX_ITERATIONS {
        let mut next = apply(&v);
        let n = norm(&next);
        if n == 0.0 {
            // start lies in the null space
            return v;
        }
        next.iter_mut().for_each(|x| *x /= n);
        let change = next
            .iter()
            .zip(&v)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        v = next;
        if change <= PC_TOLERANCE {
            break;
        }
    }
    v
}

/// `v - (pc·v) pc`
pub fn sif_remove_pc(pc: &[f64], v: &[f64]) -> Vec<f64> {
    let proj = dot(pc, v);
    v.iter().zip(pc).map(|(x, p)| x - proj * p).collect()
}

/// Fixed `target_dim × d` Gaussian matrix, entries `N(0, 1/√d)` drawn
/// row-major from a ChaCha8 stream seeded with `seed`.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomProjection {
    matrix: Matrix,
}

impl RandomProjection {
    pub fn generate(input_dim: usize, target_dim: usize, seed: u64) -> Result<Self> {
        if input_dim == 0 || target_dim == 0 {
            return Err(Error::invalid("projection dimensions must be positive"));
        }
        let normal = Normal::new(0.0, 1.0 / (input_dim as f64).sqrt())
            .map_err(|e| Error::invalid(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..input_dim * target_dim)
            .map(|_| normal.sample(&mut rng))
            .collect();
        Ok(RandomProjection {
            matrix: Matrix::from_vec(target_dim, input_dim, data)?,
        })
    }

    /// Identity projection, for checking the projection path against plain
    /// averaging.
    pub fn identity(dim: usize) -> Self {
        let mut matrix = Matrix::zeros(dim, dim);
        for i in 0..dim {
            matrix.set(i, i, 1.0);
        }
        RandomProjection { matrix }
    }

    pub fn input_dim(&self) -> usize {
        self.matrix.cols()
    }

    pub fn target_dim(&self) -> usize {
        self.matrix.rows()
    }

    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        self.matrix.mul_vec(x)
    }
}

/// Projects the average word vector. Projection is linear, so this equals
/// averaging the projected word vectors up to rounding.
pub fn encode_random_projection(wv: &WordVectors, s: &Sentence, proj: &RandomProjection) -> Vec<f64> {
    proj.project(&encode_average(wv, s))
}

/// Externally produced sentence vectors keyed by sentence id.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecomputedVectors {
    path: PathBuf,
    dim: usize,
    rows: BTreeMap<usize, Vec<f64>>,
}

impl PrecomputedVectors {
    /// Reads `id<TAB>v1 v2 ... vD` lines.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub(crate) fn parse(text: &str, path: &Path) -> Result<Self> {
        let err = |line: usize, message: String| Error::Load {
            path: path.to_path_buf(),
            line,
            message,
        };
        let mut rows = BTreeMap::new();
        let mut dim = None;
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let (id, values) = line
                .split_once('\t')
                .ok_or_else(|| err(line_no, "expected id<TAB>values".into()))?;
            let id: usize = id
                .trim()
                .parse()
                .map_err(|_| err(line_no, format!("invalid id {id:?}")))?;
            let values = values
                .split_ascii_whitespace()
                .map(|v| v.parse::<f64>().ok().filter(|x| x.is_finite()))
                .collect::<Option<Vec<f64>>>()
                .ok_or_else(|| err(line_no, "invalid or non-finite value".into()))?;
            let d = *dim.get_or_insert(values.len());
            if d == 0 || values.len() != d {
                return Err(err(
                    line_no,
                    format!("expected {d} values, found {}", values.len()),
                ));
            }
            if rows.insert(id, values).is_some() {
                return Err(err(line_no, format!("duplicate id {id}")));
            }
        }
        let dim = dim.ok_or_else(|| Error::File {
            path: path.to_path_buf(),
            message: "no precomputed vectors".into(),
        })?;
        Ok(PrecomputedVectors {
            path: path.to_path_buf(),
            dim,
            rows,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn get(&self, id: usize) -> Result<&[f64]> {
        self.rows.get(&id).map(Vec::as_slice).ok_or(Error::MissingId(id))
    }
}

/// Declarative encoder description. Resources (word vectors, frequency
/// tables, precomputed rows) are shared, so specs are cheap to clone.
#[derive(Debug, Clone)]
pub enum EncoderSpec {
    Average {
        vectors: Arc<WordVectors>,
    },
    Sif {
        vectors: Arc<WordVectors>,
        model: Arc<SifModel>,
        remove_pc: bool,
    },
    PoolConcat {
        vectors: Arc<WordVectors>,
        ops: Vec<PoolOp>,
    },
    RandomProject {
        vectors: Arc<WordVectors>,
        target_dim: usize,
        seed: u64,
    },
    Concat(Vec<EncoderSpec>),
    Precomputed(Arc<PrecomputedVectors>),
}

impl EncoderSpec {
    pub fn output_dim(&self) -> usize {
        match self {
            EncoderSpec::Average { vectors } | EncoderSpec::Sif { vectors, .. } => vectors.dim(),
            EncoderSpec::PoolConcat { vectors, ops } => canonical_ops(ops).len() * vectors.dim(),
            EncoderSpec::RandomProject { target_dim, .. } => *target_dim,
            EncoderSpec::Concat(members) => members.iter().map(EncoderSpec::output_dim).sum(),
            EncoderSpec::Precomputed(p) => p.dim(),
        }
    }

    /// Materializes projection matrices and validates the tree. SIF
    /// components still need [`Encoder::fit`].
    pub fn build(&self) -> Result<Encoder> {
        let kind = match self {
            EncoderSpec::Average { vectors } => Built::Average(vectors.clone()),
            EncoderSpec::Sif {
                vectors,
                model,
                remove_pc,
            } => Built::Sif {
                vectors: vectors.clone(),
                model: (**model).clone(),
                remove_pc: *remove_pc,
            },
            EncoderSpec::PoolConcat { vectors, ops } => {
                if ops.is_empty() {
                    return Err(Error::invalid("pooling needs at least one op"));
                }
                Built::Pool {
                    vectors: vectors.clone(),
                    ops: canonical_ops(ops),
                }
            }
            EncoderSpec::RandomProject {
                vectors,
                target_dim,
                seed,
            } => Built::Project {
                vectors: vectors.clone(),
                projection: RandomProjection::generate(vectors.dim(), *target_dim, *seed)?,
            },
            EncoderSpec::Concat(members) => {
                if members.is_empty() {
                    return Err(Error::invalid("concatenation of zero encoders"));
                }
                Built::Concat(members.iter().map(EncoderSpec::build).collect::<Result<_>>()?)
            }
            EncoderSpec::Precomputed(p) => Built::Precomputed(p.clone()),
        };
        Ok(Encoder {
            dim: self.output_dim(),
            kind,
        })
    }
}

/// Concatenation of member encoders, in order.
pub fn concat_encoders(specs: Vec<EncoderSpec>) -> Result<EncoderSpec> {
    if specs.is_empty() {
        return Err(Error::invalid("concatenation of zero encoders"));
    }
    Ok(EncoderSpec::Concat(specs))
}

#[derive(Debug, Clone)]
enum Built {
    Average(Arc<WordVectors>),
    Sif {
        vectors: Arc<WordVectors>,
        model: SifModel,
        remove_pc: bool,
    },
    Pool {
        vectors: Arc<WordVectors>,
        ops: Vec<PoolOp>,
    },
    Project {
        vectors: Arc<WordVectors>,
        projection: RandomProjection,
    },
    Concat(Vec<Encoder>),
    Precomputed(Arc<PrecomputedVectors>),
}

/// A ready-to-use encoder. Immutable once fitted, so it can be shared
/// across threads.
#[derive(Debug, Clone)]
pub struct Encoder {
    dim: usize,
    kind: Built,
}

impl Encoder {
    pub fn output_dim(&self) -> usize {
        self.dim
    }

    /// Replaces the projection of a random-projection encoder.
    pub fn with_projection(vectors: Arc<WordVectors>, projection: RandomProjection) -> Result<Self> {
        if projection.input_dim() != vectors.dim() {
            return Err(Error::DimensionMismatch {
                expected: vectors.dim(),
                found: projection.input_dim(),
            });
        }
        Ok(Encoder {
            dim: projection.target_dim(),
            kind: Built::Project {
                vectors,
                projection,
            },
        })
    }

    /// Whether [`Encoder::fit`] has anything to learn.
    pub fn needs_fit(&self) -> bool {
        match &self.kind {
            Built::Sif { remove_pc, .. } => *remove_pc,
            Built::Concat(m) => m.iter().any(Encoder::needs_fit),
            _ => false,
        }
    }

    /// Fits SIF common components on the given sentences. Other encoders
    /// are unaffected.
    pub fn fit(&mut self, sentences: &[(usize, &Sentence)]) -> Result<()> {
        match &mut self.kind {
            Built::Sif {
                vectors,
                model,
                remove_pc: true,
            } => {
                let mut flags = SentenceFlags::default();
                let rows: Vec<Vec<f64>> = sentences
                    .iter()
                    .map(|(_, s)| sif_average_into(vectors, model, s, &mut flags))
                    .collect();
                model.pc = Some(sif_fit_pc(&Matrix::from_rows(&rows)?)?);
                Ok(())
            }
            Built::Concat(members) => members.iter_mut().try_for_each(|m| m.fit(sentences)),
            _ => Ok(()),
        }
    }

    pub fn sif_pc(&self) -> Option<&[f64]> {
        match &self.kind {
            Built::Sif { model, .. } => model.pc(),
            _ => None,
        }
    }

    pub fn encode(&self, id: usize, s: &Sentence, diag: &mut Diagnostics) -> Result<Vec<f64>> {
        let mut flags = SentenceFlags::default();
        let mut out = Vec::with_capacity(self.dim);
        self.encode_into(id, s, &mut out, &mut flags)?;
        debug_assert_eq!(out.len(), self.dim);
        diag.sentences += 1;
        diag.empty_sentences += usize::from(flags.empty);
        diag.tokens += flags.tokens;
        diag.oov_tokens += flags.oov;
        Ok(out)
    }

    fn encode_into(
        &self,
        id: usize,
        s: &Sentence,
        out: &mut Vec<f64>,
        flags: &mut SentenceFlags,
    ) -> Result<()> {
        match &self.kind {
            Built::Average(wv) => out.extend(average_into(wv, s, flags)),
            Built::Sif {
                vectors,
                model,
                remove_pc,
            } => {
                let v = sif_average_into(vectors, model, s, flags);
                match (remove_pc, model.pc()) {
                    (true, Some(pc)) => out.extend(sif_remove_pc(pc, &v)),
                    (true, None) => {
                        return Err(Error::invalid("SIF encoder used before fitting its component"))
                    }
                    (false, _) => out.extend(v),
                }
            }
            Built::Pool { vectors, ops } => out.extend(pool_into(vectors, s, ops, flags)),
            Built::Project {
                vectors,
                projection,
            } => out.extend(projection.project(&average_into(vectors, s, flags))),
            Built::Concat(members) => {
                for m in members {
                    m.encode_into(id, s, out, flags)?;
                }
            }
            Built::Precomputed(p) => out.extend_from_slice(p.get(id)?),
        }
        Ok(())
    }

    /// Encodes `(id, sentence)` items into the rows of a matrix.
    pub fn encode_all(&self, items: &[(usize, &Sentence)], diag: &mut Diagnostics) -> Result<Matrix> {
        let mut data = Vec::with_capacity(items.len() * self.dim);
        for (id, s) in items {
            data.extend(self.encode(*id, s, diag)?);
        }
        Matrix::from_vec(items.len(), self.dim, data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> Arc<WordVectors> {
        Arc::new(
            WordVectors::from_entries(
                "toy",
                2,
                [("a", vec![1.0, 0.0]), ("b", vec![0.0, 2.0]), ("c", vec![-1.0, 1.0])],
            )
            .unwrap(),
        )
    }

    #[test]
    fn average_cases() {
        let wv = WordVectors::from_entries("t", 2, [("a", vec![1.0, 0.0]), ("b", vec![0.0, 1.0])])
            .unwrap();
        assert_eq!(encode_average(&wv, &Sentence::new("a b")), vec![0.5, 0.5]);
        assert_eq!(encode_average(&wv, &Sentence::new("a zzz")), vec![1.0, 0.0]);
        assert_eq!(encode_average(&wv, &Sentence::new("zzz yyy")), vec![0.0, 0.0]);
    }

    #[test]
    fn fully_oov_is_counted() {
        let enc = EncoderSpec::Average { vectors: toy() }.build().unwrap();
        let mut diag = Diagnostics::default();
        enc.encode(0, &Sentence::new("q r"), &mut diag).unwrap();
        enc.encode(1, &Sentence::new("a r"), &mut diag).unwrap();
        assert_eq!(diag.sentences, 2);
        assert_eq!(diag.empty_sentences, 1);
        assert_eq!(diag.oov_tokens, 3);
        assert_eq!(diag.tokens, 4);
    }

    #[test]
    fn pooling_cases() {
        let wv = toy();
        let s = Sentence::new("a b");
        assert_eq!(
            encode_pool_concat(&wv, &s, &[PoolOp::Max, PoolOp::Min]),
            vec![0.0, 0.0, 1.0, 2.0]
        );
        assert_eq!(encode_pool_concat(&wv, &s, &[PoolOp::Avg]), encode_average(&wv, &s));
        let single = encode_pool_concat(&wv, &Sentence::new("c"), &[PoolOp::Min, PoolOp::Avg, PoolOp::Max]);
        assert_eq!(single, vec![-1.0, 1.0, -1.0, 1.0, -1.0, 1.0]);
        assert_eq!(
            encode_pool_concat(&wv, &Sentence::new("zz"), &[PoolOp::Min, PoolOp::Max]),
            vec![0.0; 4]
        );
    }

    #[test]
    fn sif_weight_values() {
        let freq = HashMap::from([("w".to_string(), 1e-3), ("v".to_string(), 9e-3)]);
        let m = SifModel::new(1e-3, freq).unwrap();
        assert!((m.weight("w") - 0.5).abs() < 1e-15);
        assert!((m.weight("v") - 0.1).abs() < 1e-15);
        let unseen = m.weight("never");
        assert!(unseen < 1.0 && unseen > 0.9999);
        assert_eq!(sif_weights(&m, &Sentence::new("w v")), vec![m.weight("w"), m.weight("v")]);
    }

    #[test]
    fn sif_model_validation() {
        assert!(SifModel::new(0.0, HashMap::new()).is_err());
        assert!(SifModel::new(1e-3, HashMap::from([("x".to_string(), 1.5)])).is_err());
        let m = SifModel::from_counts(1e-3, HashMap::from([("x".into(), 1.0), ("y".into(), 3.0)])).unwrap();
        assert_eq!(m.frequency("y"), 0.75);
    }

    #[test]
    fn pc_rank_one_and_ties() {
        let x = Matrix::from_rows(&[[1.0, 0.0], [1.0, 0.0], [1.0, 0.0]]).unwrap();
        let pc = sif_fit_pc(&x).unwrap();
        assert!((pc[0] - 1.0).abs() < 1e-12 && pc[1].abs() < 1e-12);

        let x = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap();
        let pc = sif_fit_pc(&x).unwrap();
        assert_eq!(pc, vec![1.0, 0.0]);
    }

    #[test]
    fn pc_escapes_axis_trap() {
        // the largest column is an eigenvector, but not the top one
        let x = Matrix::from_rows(&[
            [2.0, 0.0, 0.0],
            [0.0, 1.0, 1.0],
            [0.0, 1.0, 1.0],
            [0.0, 1.0, 1.0],
        ])
        .unwrap();
        let pc = sif_fit_pc(&x).unwrap();
        let h = 0.5f64.sqrt();
        assert!(pc[0].abs() < 1e-8 && (pc[1] - h).abs() < 1e-8 && (pc[2] - h).abs() < 1e-8);
    }

    #[test]
    fn pc_errors() {
        assert!(matches!(
            sif_fit_pc(&Matrix::zeros(3, 2)),
            Err(Error::DegeneratePc(_))
        ));
        assert!(sif_fit_pc(&Matrix::zeros(1, 2)).is_err());
    }

    #[test]
    fn remove_pc_cases() {
        assert_eq!(sif_remove_pc(&[1.0, 0.0], &[3.0, 4.0]), vec![0.0, 4.0]);
        assert_eq!(sif_remove_pc(&[0.0, 1.0], &[0.0, 1.0]), vec![0.0, 0.0]);
        assert_eq!(sif_remove_pc(&[0.0, 1.0], &[5.0, 0.0]), vec![5.0, 0.0]);
    }

    #[test]
    fn unfitted_sif_errors() {
        let model = Arc::new(SifModel::new(1e-3, HashMap::new()).unwrap());
        let enc = EncoderSpec::Sif {
            vectors: toy(),
            model,
            remove_pc: true,
        }
        .build()
        .unwrap();
        assert!(enc.encode(0, &Sentence::new("a"), &mut Diagnostics::default()).is_err());
    }

    #[test]
    fn identity_projection_is_average() {
        let wv = toy();
        let enc = Encoder::with_projection(wv.clone(), RandomProjection::identity(2)).unwrap();
        let s = Sentence::new("a b c");
        let got = enc.encode(0, &s, &mut Diagnostics::default()).unwrap();
        assert_eq!(got, encode_average(&wv, &s));
    }

    #[test]
    fn projection_is_deterministic() {
        let a = RandomProjection::generate(5, 12, 99).unwrap();
        let b = RandomProjection::generate(5, 12, 99).unwrap();
        let c = RandomProjection::generate(5, 12, 100).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.target_dim(), 12);
    }

    #[test]
    fn concat_dims_and_identity() {
        let wv = toy();
        let spec = concat_encoders(vec![
            EncoderSpec::Average { vectors: wv.clone() },
            EncoderSpec::RandomProject {
                vectors: wv.clone(),
                target_dim: 7,
                seed: 1,
            },
        ])
        .unwrap();
        assert_eq!(spec.output_dim(), 9);
        let single = concat_encoders(vec![EncoderSpec::Average { vectors: wv.clone() }])
            .unwrap()
            .build()
            .unwrap();
        let plain = EncoderSpec::Average { vectors: wv }.build().unwrap();
        let s = Sentence::new("a c");
        let mut d = Diagnostics::default();
        assert_eq!(single.encode(0, &s, &mut d).unwrap(), plain.encode(0, &s, &mut d).unwrap());
        assert!(concat_encoders(vec![]).is_err());
    }

    #[test]
    fn precomputed_parse_and_lookup() {
        let p = PrecomputedVectors::parse(
            "0\t1 2 3 4\n1\t0 0 0 1\n2\t5 5 5 5\n",
            Path::new("p.tsv"),
        )
        .unwrap();
        assert_eq!(p.dim(), 4);
        assert!(PrecomputedVectors::parse("0\t1 2\n1\t1 2 3\n", Path::new("p")).is_err());

        let p = Arc::new(PrecomputedVectors::parse("0\t1 2\n1\t3 4\n", Path::new("p")).unwrap());
        let enc = EncoderSpec::Precomputed(p).build().unwrap();
        let s = Sentence::new("whatever");
        let mut d = Diagnostics::default();
        assert_eq!(enc.encode(1, &s, &mut d).unwrap(), vec![3.0, 4.0]);
        assert!(matches!(enc.encode(2, &s, &mut d), Err(Error::MissingId(2))));
    }
}
