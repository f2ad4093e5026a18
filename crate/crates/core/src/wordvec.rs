//! Pretrained word vectors in whitespace-separated text form.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use log::warn;

use crate::error::{Error, Result};

/// Immutable word → vector table of a single dimension.
#[derive(Debug, Clone)]
pub struct WordVectors {
    name: String,
    dim: usize,
    index: HashMap<String, usize>,
    data: Vec<f64>,
    duplicates: usize,
}

/// On-disk layouts understood by [`load_word_vectors_as`]. New layouts are
/// added as variants here.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum VectorFormat {
    /// `word v1 ... vd` per line, optionally preceded by a `count dim` header.
    #[default]
    Text,
}

impl WordVectors {
    /// Builds a table in memory. Later duplicates of a word are ignored.
    pub fn from_entries<I, S>(name: impl Into<String>, dim: usize, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, Vec<f64>)>,
        S: Into<String>,
    {
        if dim == 0 {
            return Err(Error::invalid("word vector dimension must be positive"));
        }
        let mut wv = WordVectors {
            name: name.into(),
            dim,
            index: HashMap::new(),
            data: Vec::new(),
            duplicates: 0,
        };
        for (word, vec) in entries {
            if vec.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: vec.len(),
                });
            }
            if vec.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid("non-finite word vector entry"));
            }
            wv.insert(word.into(), &vec);
        }
        Ok(wv)
    }

    fn insert(&mut self, word: String, vec: &[f64]) {
        if self.index.contains_key(&word) {
            self.duplicates += 1;
            return;
        }
        self.index.insert(word, self.index.len());
        self.data.extend_from_slice(vec);
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    /// Number of repeated words skipped while loading.
    pub fn duplicates(&self) -> usize {
        self.duplicates
    }

    pub fn lookup(&self, token: &str) -> Option<&[f64]> {
        self.index
            .get(token)
            .map(|&i| &self.data[i * self.dim..(i + 1) * self.dim])
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.index.keys().map(String::as_str)
    }
}

pub fn load_word_vectors(path: &Path, expected_dim: Option<usize>) -> Result<WordVectors> {
    load_word_vectors_as(path, expected_dim, VectorFormat::Text)
}

pub fn load_word_vectors_as(
    path: &Path,
    expected_dim: Option<usize>,
    format: VectorFormat,
) -> Result<WordVectors> {
    match format {
        VectorFormat::Text => {
            let file = File::open(path).map_err(|e| Error::io(path, e))?;
            read_text(BufReader::new(file), path, expected_dim)
        }
    }
}

pub(crate) fn read_text<R: BufRead>(
    reader: R,
    path: &Path,
    expected_dim: Option<usize>,
) -> Result<WordVectors> {
    let err = |line: usize, message: String| Error::Load {
        path: path.to_path_buf(),
        line,
        message,
    };
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let mut wv: Option<WordVectors> = None;
    let mut dim = expected_dim;
    let mut values = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        let mut fields = line.split_ascii_whitespace();
        let Some(word) = fields.next() else { continue };
        values.clear();
        for f in fields {
            let v: f64 = f
                .parse()
                .map_err(|_| err(line_no, format!("invalid value {f:?}")))?;
            values.push(v);
        }
        if i == 0 && values.len() == 1 && is_header(word, values[0]) {
            let header_dim = values[0] as usize;
            match dim {
                Some(d) if d != header_dim => {
                    return Err(err(
                        line_no,
                        format!("header declares dim {header_dim}, expected {d}"),
                    ));
                }
                _ => dim = Some(header_dim),
            }
            continue;
        }
        let d = *dim.get_or_insert(values.len());
        if d == 0 || values.len() != d {
            return Err(err(
                line_no,
                format!("expected {d} values, found {}", values.len()),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(err(line_no, "non-finite value".into()));
        }
        wv.get_or_insert_with(|| WordVectors {
            name: name.clone(),
            dim: d,
            index: HashMap::new(),
            data: Vec::new(),
            duplicates: 0,
        })
        .insert(word.to_string(), &values);
    }
    let wv = wv.ok_or_else(|| Error::File {
        path: path.to_path_buf(),
        message: "no word vectors".into(),
    })?;
    if wv.duplicates > 0 {
        warn!(
            "{}: {} duplicate words ignored (first occurrence kept)",
            path.display(),
            wv.duplicates
        );
    }
    Ok(wv)
}

fn is_header(first: &str, second: f64) -> bool {
    first.parse::<usize>().is_ok() && second.fract() == 0.0 && second >= 1.0
}
