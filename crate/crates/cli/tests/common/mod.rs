#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub const FIXTURE: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/sts_normalization.csv");

const POSITIVE: [&str; 6] = ["good", "great", "fine", "nice", "happy", "bright"];
const NEGATIVE: [&str; 6] = ["bad", "awful", "poor", "sad", "dark", "grim"];
const FILLER: [&str; 4] = ["the", "a", "movie", "was"];

pub fn embeval(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_embeval"))
        .args(args)
        .output()
        .expect("binary runs")
}

pub fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Deterministic pseudo-random vector, different for every word.
fn vector(i: usize, dim: usize) -> Vec<f64> {
    (0..dim)
        .map(|j| ((i * 31 + j * 17 + 5) as f64 * 0.7).sin())
        .collect()
}

/// Word vectors, counts, a two-class task, a probing task and STS splits,
/// all under `dir`.
pub fn write_world(dir: &Path) {
    let words: Vec<&str> = POSITIVE.iter().chain(&NEGATIVE).chain(&FILLER).copied().collect();
    let mut vectors = format!("{} 4\n", words.len());
    let mut counts = String::new();
    for (i, w) in words.iter().enumerate() {
        let mut v = vector(i, 4);
        if POSITIVE.contains(w) {
            v[0] += 1.5;
        } else if NEGATIVE.contains(w) {
            v[0] -= 1.5;
        }
        let v: Vec<String> = v.iter().map(|x| format!("{x:.6}")).collect();
        vectors.push_str(&format!("{w} {}\n", v.join(" ")));
        counts.push_str(&format!("{w} {}\n", 10 + 7 * i));
    }
    fs::write(dir.join("vectors.txt"), vectors).unwrap();
    fs::write(dir.join("counts.txt"), counts).unwrap();

    let mut task = String::new();
    let mut probe = String::new();
    for k in 0..40 {
        let label = k % 2;
        let pool = if label == 0 { &POSITIVE } else { &NEGATIVE };
        let n_words = 2 + k % 3;
        let text: Vec<&str> = (0..n_words)
            .map(|j| pool[(k + j) % pool.len()])
            .chain([FILLER[k % 4]])
            .collect();
        task.push_str(&format!("{label}\t{}\n", text.join(" ")));
        probe.push_str(&format!("{}\t{}\n", usize::from(n_words > 2), text.join(" ")));
    }
    fs::write(dir.join("sentiment.tsv"), task).unwrap();
    fs::write(dir.join("length.tsv"), probe).unwrap();

    for (name, n, offset) in [("sts-train.tsv", 30, 0), ("sts-dev.tsv", 12, 3), ("sts-test.tsv", 12, 7)] {
        let mut sts = String::new();
        for k in 0..n {
            let i = k + offset;
            let a = format!("{} {}", POSITIVE[i % 6], FILLER[i % 4]);
            let same = i % 3 != 0;
            let b = if same {
                format!("{} {}", POSITIVE[(i + 1) % 6], FILLER[(i + 1) % 4])
            } else {
                format!("{} {}", NEGATIVE[i % 6], FILLER[(i + 2) % 4])
            };
            let gold = if same { 4.0 + (i % 2) as f64 * 0.5 } else { 0.5 + (i % 4) as f64 * 0.25 };
            sts.push_str(&format!("g\tf\t2017\t{k}\t{gold}\t{a}\t{b}\n"));
        }
        fs::write(dir.join(name), sts).unwrap();
    }
}

pub const CONFIG: &str = r#"
seed = 7
workers = 2

[vectors.toy]
path = "vectors.txt"
dim = 4

[frequencies.toy]
path = "counts.txt"

[[encoders]]
name = "avg"
kind = "average"
vectors = "toy"

[[encoders]]
name = "sif"
kind = "sif"
vectors = "toy"
frequencies = "toy"

[[encoders]]
name = "pool"
kind = "pool"
vectors = "toy"
ops = ["min", "max"]

[[encoders]]
name = "rp"
kind = "project"
vectors = "toy"
target_dim = 3

[[encoders]]
name = "both"
kind = "concat"
members = ["avg", "sif"]

[[tasks]]
name = "sentiment"
kind = "classification"
path = "sentiment.tsv"
n_classes = 2
split = "cv"
folds = 4

[[tasks]]
name = "length"
kind = "classification"
path = "length.tsv"
n_classes = 2
split = "fixed"
train = [0, 24]
dev = [24, 32]
test = [32, 40]
role = "probing"

[[tasks]]
name = "sts"
kind = "similarity"
train_path = "sts-train.tsv"
dev_path = "sts-dev.tsv"
test_path = "sts-test.tsv"

[[evaluations]]
task = "sentiment"
encoders = ["avg", "sif", "pool", "both"]
protocol = "classify"
classifiers = ["logreg"]
normalization = "both"
training = { l2_grid = [0.001, 0.1], max_epochs = 300 }

[[evaluations]]
task = "length"
encoders = ["avg", "sif", "pool", "both"]
protocol = "classify"
classifiers = ["logreg"]
normalization = "both"
training = { l2_grid = [0.001, 0.1], max_epochs = 300 }

[[evaluations]]
task = "sts"
encoders = ["avg", "sif", "pool", "rp"]
protocol = "ucp"
normalization = "both"

[[evaluations]]
task = "sts"
encoder = "avg"
protocol = "learned_sim"
normalization = "off"

[[sweeps]]
name = "proj"
vectors = "toy"
sizes = [2, 3, 6]
tasks = ["sentiment"]
references = ["avg"]
training = { l2_grid = [0.01], max_epochs = 300 }

[analysis]
correlation = true
"#;

/// Writes the world and `config` into `dir`, returning the config path.
pub fn setup(dir: &Path, config: &str) -> PathBuf {
    write_world(dir);
    let path = dir.join("run.toml");
    fs::write(&path, config).unwrap();
    path
}

/// Text content of every `<text>` element.
pub fn svg_texts(svg: &str) -> Vec<String> {
    svg.split("<text")
        .skip(1)
        .filter_map(|chunk| {
            let start = chunk.find('>')? + 1;
            let end = chunk.find("</text>")?;
            Some(chunk[start..end].to_string())
        })
        .collect()
}

/// Numeric tokens (`12`, `-0.5`, `+21`) of a string, without sign.
pub fn numbers(s: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for c in s.chars().chain([' ']) {
        if c.is_ascii_digit() || (c == '.' && !cur.is_empty()) {
            cur.push(c);
        } else if !cur.is_empty() {
            out.push(cur.trim_end_matches('.').to_string());
            cur.clear();
        }
    }
    out
}
