//! Synthetic data generators and plain-text readers/writers.
//!
//! File formats (whitespace-delimited, LF line endings):
//!
//! * regression: first line `n d`, then `n` rows of `d` features and a
//!   `±1` label; true weights, when known, go to `<path>.truth`;
//! * points: first line `n dim`, then `n` rows of `dim` coordinates with an
//!   optional trailing integer label; true centers go to `<path>.centers`;
//! * corpus: one document per line as word ids; the vocabulary file has one
//!   word per line and fixes `V`.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::models::blasso::RegressionData;
use crate::models::dpmm::PointData;
use crate::models::lda::Corpus;
use crate::rng::{sample_categorical, sample_dirichlet, RandomStream};

/// `path` with `suffix` appended to the file name (`data.txt` → `data.txt.truth`).
pub fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".");
    s.push(suffix);
    PathBuf::from(s)
}

/// Alternating, decaying weights `(1.5, -1, 0.5, 0, 0, …)`.
pub fn default_w_true(d: usize) -> Vec<f64> {
    (0..d)
        .map(|j| {
            let mag = (1.5 - 0.5 * j as f64).max(0.0);
            if j % 2 == 1 && mag > 0.0 {
                -mag
            } else {
                mag
            }
        })
        .collect()
}

/// Probit regression data: standard normal rows and
/// `y_i = sign(w_trueᵀx_i + noise)` with ties sent to `+1`.
pub fn gen_probit_data(
    n: usize,
    d: usize,
    w_true: Option<Vec<f64>>,
    noise_sd: f64,
    seed: u64,
) -> Result<RegressionData> {
    if d == 0 || n < d {
        return Err(Error::invalid(format!("need n >= d >= 1, got n = {n}, d = {d}")));
    }
    if !(noise_sd >= 0.0) || !noise_sd.is_finite() {
        return Err(Error::invalid(format!("noise sd must be nonnegative, got {noise_sd}")));
    }
    let w = w_true.unwrap_or_else(|| default_w_true(d));
    if w.len() != d {
        return Err(Error::invalid(format!("w_true has {} entries, expected {d}", w.len())));
    }
    let mut rng = RandomStream::new(seed, 0);
    let mut x = Vec::with_capacity(n * d);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let row: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let noise: f64 = rng.sample::<f64, _>(StandardNormal) * noise_sd;
        let s: f64 = row.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() + noise;
        y.push(if s >= 0.0 { 1.0 } else { -1.0 });
        x.extend(row);
    }
    RegressionData::new(x, n, d, y, Some(w))
}

/// Gaussian mixture sample with its generating centers.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmData {
    pub points: PointData,
    pub centers: Vec<Vec<f64>>,
}

/// `n` points from `k` unit-variance isotropic Gaussians.
///
/// Centers sit on a circle of radius `separation` in the first two
/// coordinates (on a line with spacing `separation` when `dim == 1`).
/// Cluster sizes differ by at most one and points are shuffled.
pub fn gen_gmm_data(n: usize, k: usize, dim: usize, separation: f64, seed: u64) -> Result<GmmData> {
    if k == 0 || dim == 0 || n == 0 {
        return Err(Error::invalid("n, k and dim must be positive"));
    }
    let centers: Vec<Vec<f64>> = (0..k)
        .map(|c| {
            let mut v = vec![0.0; dim];
            if dim == 1 {
                v[0] = separation * (c as f64 - (k as f64 - 1.0) / 2.0);
            } else if k > 1 {
                let a = 2.0 * PI * c as f64 / k as f64;
                v[0] = separation * a.cos();
                v[1] = separation * a.sin();
            }
            v
        })
        .collect();
    let mut labels: Vec<usize> = (0..n).map(|i| i % k).collect();
    let mut rng = RandomStream::new(seed, 0);
    labels.shuffle(&mut rng);
    let mut x = Vec::with_capacity(n * dim);
    for &l in &labels {
        for c in &centers[l] {
            x.push(c + rng.sample::<f64, _>(StandardNormal));
        }
    }
    Ok(GmmData {
        points: PointData::new(x, n, dim, Some(labels))?,
        centers,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusSpec {
    /// Training documents; about a ninth as many test documents are added
    /// so the split is 90/10.
    pub docs: usize,
    pub topics: usize,
    pub vocab: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub alpha: f64,
    pub eta: f64,
    pub seed: u64,
}

impl CorpusSpec {
    pub fn new(docs: usize, topics: usize, vocab: usize, seed: u64) -> Self {
        CorpusSpec {
            docs,
            topics,
            vocab,
            min_len: 150,
            max_len: 250,
            alpha: 0.5,
            eta: 0.05,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub train: Corpus,
    pub test: Corpus,
    /// Topic-major `beta[k * V + w]`.
    pub beta: Vec<f64>,
    /// Generation index of each training and each test document.
    pub train_index: Vec<usize>,
    pub test_index: Vec<usize>,
}

/// Documents from the LDA generative process:
/// `beta_k ~ Dir(eta)`, `theta_d ~ Dir(alpha)`, `z ~ theta_d`, `w ~ beta_z`.
pub fn gen_synthetic_corpus(spec: &CorpusSpec) -> Result<SyntheticCorpus> {
    if spec.docs == 0 || spec.topics == 0 || spec.vocab == 0 {
        return Err(Error::invalid("docs, topics and vocab must be positive"));
    }
    if spec.min_len > spec.max_len {
        return Err(Error::invalid("min_len exceeds max_len"));
    }
    let mut rng = RandomStream::new(spec.seed, 0);
    let v = spec.vocab;
    let mut beta = Vec::with_capacity(spec.topics * v);
    for _ in 0..spec.topics {
        beta.extend(sample_dirichlet(&vec![spec.eta; v], &mut rng)?);
    }
    let topic_words: Vec<WeightedIndex<f64>> = beta
        .chunks(v)
        .map(|row| WeightedIndex::new(row).map_err(|e| Error::Numeric(format!("topic draw: {e}"))))
        .collect::<Result<_>>()?;
    let n_test = spec.docs.div_ceil(9);
    let total = spec.docs + n_test;
    let alpha = vec![spec.alpha; spec.topics];
    let mut docs = Vec::with_capacity(total);
    for _ in 0..total {
        let theta = sample_dirichlet(&alpha, &mut rng)?;
        let len = rng.random_range(spec.min_len..=spec.max_len);
        let doc: Vec<usize> = (0..len)
            .map(|_| {
                let k = sample_categorical(&theta, &mut rng)?;
                Ok(topic_words[k].sample(&mut rng))
            })
            .collect::<Result<_>>()?;
        docs.push(doc);
    }
    let mut order: Vec<usize> = (0..total).collect();
    order.shuffle(&mut rng);
    let mut test_index = order[..n_test].to_vec();
    let mut train_index = order[n_test..].to_vec();
    test_index.sort_unstable();
    train_index.sort_unstable();
    let pick = |idx: &[usize]| idx.iter().map(|&i| docs[i].clone()).collect();
    Ok(SyntheticCorpus {
        train: Corpus::new(v, pick(&train_index))?,
        test: Corpus::new(v, pick(&test_index))?,
        beta,
        train_index,
        test_index,
    })
}

// ---------------------------------------------------------------- writing

fn fmt_row(out: &mut String, vals: &[f64]) {
    for (j, v) in vals.iter().enumerate() {
        if j > 0 {
            out.push(' ');
        }
        let _ = write!(out, "{v}");
    }
}

pub fn write_regression<W: Write>(data: &RegressionData, mut out: W) -> Result<()> {
    let mut s = format!("{} {}\n", data.n(), data.d());
    for i in 0..data.n() {
        fmt_row(&mut s, data.row(i));
        let _ = writeln!(s, " {}", data.y()[i]);
    }
    out.write_all(s.as_bytes())?;
    Ok(())
}

/// Writes the data file and, when present, its `.truth` sidecar.
pub fn save_regression(data: &RegressionData, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_regression(data, &mut buf)?;
    fs::write(path, buf)?;
    if let Some(w) = data.w_true() {
        let mut s = String::new();
        fmt_row(&mut s, w);
        s.push('\n');
        fs::write(sidecar(path, "truth"), s)?;
    }
    Ok(())
}

pub fn write_points<W: Write>(data: &PointData, mut out: W) -> Result<()> {
    let mut s = format!("{} {}\n", data.n(), data.dim());
    for i in 0..data.n() {
        fmt_row(&mut s, data.point(i));
        if let Some(l) = data.labels() {
            let _ = write!(s, " {}", l[i]);
        }
        s.push('\n');
    }
    out.write_all(s.as_bytes())?;
    Ok(())
}

pub fn save_gmm(data: &GmmData, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_points(&data.points, &mut buf)?;
    fs::write(path, buf)?;
    let mut s = String::new();
    for c in &data.centers {
        fmt_row(&mut s, c);
        s.push('\n');
    }
    fs::write(sidecar(path, "centers"), s)?;
    Ok(())
}

pub fn write_corpus<W: Write>(corpus: &Corpus, mut out: W) -> Result<()> {
    let mut s = String::new();
    for doc in corpus.docs() {
        for (j, w) in doc.iter().enumerate() {
            if j > 0 {
                s.push(' ');
            }
            let _ = write!(s, "{w}");
        }
        s.push('\n');
    }
    out.write_all(s.as_bytes())?;
    Ok(())
}

/// Writes `path` (training documents), `path.test`, `path.vocab`,
/// `path.split` (generation index of every document, training first) and
/// `path.beta` (one topic per line).
pub fn save_synthetic_corpus(c: &SyntheticCorpus, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_corpus(&c.train, &mut buf)?;
    fs::write(path, buf)?;
    let mut buf = Vec::new();
    write_corpus(&c.test, &mut buf)?;
    fs::write(sidecar(path, "test"), buf)?;
    let v = c.train.vocab_size();
    let vocab: String = (0..v).map(|w| format!("w{w}\n")).collect();
    fs::write(sidecar(path, "vocab"), vocab)?;
    let mut split = String::new();
    for &i in &c.train_index {
        let _ = writeln!(split, "train {i}");
    }
    for &i in &c.test_index {
        let _ = writeln!(split, "test {i}");
    }
    fs::write(sidecar(path, "split"), split)?;
    let mut s = String::new();
    for row in c.beta.chunks(v) {
        fmt_row(&mut s, row);
        s.push('\n');
    }
    fs::write(sidecar(path, "beta"), s)?;
    Ok(())
}

// ---------------------------------------------------------------- reading

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::InvalidData => Error::parse(path, 0, "file is not valid UTF-8"),
        _ => Error::Io(e),
    })
}

fn parse_num<T: std::str::FromStr>(tok: &str, path: &Path, line: usize) -> Result<T> {
    tok.parse()
        .map_err(|_| Error::parse(path, line, format!("cannot parse {tok:?}")))
}

/// Parses the `count dim` header, returning the numbered body lines.
fn header<'a>(text: &'a str, path: &Path) -> Result<(usize, usize, Vec<(usize, &'a str)>)> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !l.trim().is_empty());
    let (ln, head) = lines
        .next()
        .ok_or_else(|| Error::parse(path, 1, "empty file"))?;
    let toks: Vec<&str> = head.split_whitespace().collect();
    if toks.len() != 2 {
        return Err(Error::parse(path, ln, "header must be `count dim`"));
    }
    let n: usize = parse_num(toks[0], path, ln)?;
    let d: usize = parse_num(toks[1], path, ln)?;
    if n == 0 || d == 0 {
        return Err(Error::parse(path, ln, "header counts must be positive"));
    }
    let body: Vec<(usize, &str)> = lines.collect();
    if body.len() != n {
        return Err(Error::parse(
            path,
            ln,
            format!("header declares {n} rows, found {}", body.len()),
        ));
    }
    Ok((n, d, body))
}

fn parse_row(line: &str, path: &Path, ln: usize) -> Result<Vec<f64>> {
    line.split_whitespace()
        .map(|t| {
            let v: f64 = parse_num(t, path, ln)?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::parse(path, ln, format!("non-finite value {t}")))
            }
        })
        .collect()
}

/// Reads regression data and its `.truth` sidecar if one exists.
pub fn load_regression(path: &Path) -> Result<RegressionData> {
    let text = read_text(path)?;
    let (n, d, body) = header(&text, path)?;
    let mut x = Vec::with_capacity(n * d);
    let mut y = Vec::with_capacity(n);
    for (ln, line) in body {
        let row = parse_row(line, path, ln)?;
        if row.len() != d + 1 {
            return Err(Error::parse(
                path,
                ln,
                format!("expected {} values, found {}", d + 1, row.len()),
            ));
        }
        y.push(row[d]);
        x.extend_from_slice(&row[..d]);
    }
    let truth = sidecar(path, "truth");
    let w_true = if truth.exists() {
        let text = read_text(&truth)?;
        let w = parse_row(text.trim(), &truth, 1)?;
        if w.len() != d {
            return Err(Error::parse(
                &truth,
                1,
                format!("expected {d} weights, found {}", w.len()),
            ));
        }
        Some(w)
    } else {
        None
    };
    RegressionData::new(x, n, d, y, w_true)
}

/// Reads a points file. A trailing label column is recognized when every
/// row has `dim + 1` values.
pub fn load_points(path: &Path) -> Result<PointData> {
    let text = read_text(path)?;
    let (n, dim, body) = header(&text, path)?;
    let mut x = Vec::with_capacity(n * dim);
    let mut labels = Vec::new();
    let mut width = None;
    for (ln, line) in body {
        let row = parse_row(line, path, ln)?;
        let w = *width.get_or_insert(row.len());
        if row.len() != w || (w != dim && w != dim + 1) {
            return Err(Error::parse(
                path,
                ln,
                format!("expected {} values, found {}", w.clamp(dim, dim + 1), row.len()),
            ));
        }
        if w == dim + 1 {
            let l = row[dim];
            if l < 0.0 || l.fract() != 0.0 {
                return Err(Error::parse(path, ln, format!("label {l} is not a nonnegative integer")));
            }
            labels.push(l as usize);
        }
        x.extend_from_slice(&row[..dim]);
    }
    PointData::new(x, n, dim, (!labels.is_empty()).then_some(labels))
}

/// Reads one center per line.
pub fn load_centers(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text = read_text(path)?;
    let mut out: Vec<Vec<f64>> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row = parse_row(line, path, i + 1)?;
        if let Some(first) = out.first() {
            if first.len() != row.len() {
                return Err(Error::parse(
                    path,
                    i + 1,
                    format!("expected {} values, found {}", first.len(), row.len()),
                ));
            }
        }
        out.push(row);
    }
    if out.is_empty() {
        return Err(Error::parse(path, 1, "empty file"));
    }
    Ok(out)
}

/// Reads a corpus. `V` is the line count of `vocab` when given, otherwise
/// one more than the largest word id.
pub fn load_corpus(path: &Path, vocab: Option<&Path>) -> Result<Corpus> {
    let text = read_text(path)?;
    if text.is_empty() {
        return Err(Error::parse(path, 1, "empty file"));
    }
    let mut docs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let doc: Vec<usize> = line
            .split_whitespace()
            .map(|t| parse_num(t, path, i + 1))
            .collect::<Result<_>>()?;
        docs.push(doc);
    }
    let v = match vocab {
        Some(vp) => read_text(vp)?.lines().filter(|l| !l.trim().is_empty()).count(),
        None => docs.iter().flatten().max().map_or(0, |m| m + 1),
    };
    if v == 0 {
        return Err(Error::parse(path, 1, "corpus has no words and no vocabulary"));
    }
    Corpus::new(v, docs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmp(name: &str) -> PathBuf {
        let dir = std::env::temp_dir().join(format!("mbgibbs-data-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    #[test]
    fn noiseless_probit_is_separable() {
        let data = gen_probit_data(500, 4, None, 0.0, 1).unwrap();
        let w = data.w_true().unwrap().to_vec();
        for i in 0..data.n() {
            let s: f64 = data.row(i).iter().zip(&w).map(|(a, b)| a * b).sum();
            assert!(s * data.y()[i] >= 0.0);
        }
    }

    #[test]
    fn default_weights_pattern() {
        assert_eq!(default_w_true(5), vec![1.5, -1.0, 0.5, 0.0, 0.0]);
    }

    #[test]
    fn probit_labels_are_balanced() {
        let data = gen_probit_data(20_000, 4, None, 0.5, 2).unwrap();
        let pos = data.y().iter().filter(|&&y| y > 0.0).count() as f64 / 20_000.0;
        assert!((pos - 0.5).abs() < 0.03, "{pos}");
    }

    #[test]
    fn gmm_sizes_and_single_cluster() {
        let g = gen_gmm_data(1003, 5, 2, 10.0, 3).unwrap();
        let mut sizes = [0usize; 5];
        for &l in g.points.labels().unwrap() {
            sizes[l] += 1;
        }
        assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        let one = gen_gmm_data(50, 1, 3, 10.0, 3).unwrap();
        assert!(one.points.labels().unwrap().iter().all(|&l| l == 0));
    }

    #[test]
    fn gmm_nearest_center_recovers_labels() {
        let g = gen_gmm_data(1000, 5, 2, 10.0, 7).unwrap();
        let labels = g.points.labels().unwrap();
        let mut hits = 0;
        for i in 0..1000 {
            let p = g.points.point(i);
            let best = (0..5)
                .min_by(|&a, &b| {
                    let da: f64 = p.iter().zip(&g.centers[a]).map(|(x, c)| (x - c).powi(2)).sum();
                    let db: f64 = p.iter().zip(&g.centers[b]).map(|(x, c)| (x - c).powi(2)).sum();
                    da.total_cmp(&db)
                })
                .unwrap();
            hits += usize::from(best == labels[i]);
        }
        assert!(hits > 990, "{hits}");
    }

    #[test]
    fn corpus_generation_shape() {
        let spec = CorpusSpec::new(45, 3, 200, 4);
        let c = gen_synthetic_corpus(&spec).unwrap();
        assert_eq!(c.train.num_docs(), 45);
        assert_eq!(c.test.num_docs(), 5);
        assert!(c.train.docs().iter().all(|d| (150..=250).contains(&d.len())));
        for row in c.beta.chunks(200) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert_eq!(gen_synthetic_corpus(&spec).unwrap(), c);
    }

    #[test]
    fn round_trips() {
        let r = gen_probit_data(30, 3, None, 0.3, 5).unwrap();
        let p = tmp("reg.txt");
        save_regression(&r, &p).unwrap();
        assert_eq!(load_regression(&p).unwrap(), r);

        let g = gen_gmm_data(40, 3, 2, 5.0, 6).unwrap();
        let p = tmp("pts.txt");
        save_gmm(&g, &p).unwrap();
        assert_eq!(load_points(&p).unwrap(), g.points);
        assert_eq!(load_centers(&sidecar(&p, "centers")).unwrap(), g.centers);

        let c = gen_synthetic_corpus(&CorpusSpec::new(9, 2, 50, 7)).unwrap();
        let p = tmp("corpus.txt");
        save_synthetic_corpus(&c, &p).unwrap();
        let vocab = sidecar(&p, "vocab");
        assert_eq!(load_corpus(&p, Some(&vocab)).unwrap(), c.train);
        assert_eq!(load_corpus(&sidecar(&p, "test"), Some(&vocab)).unwrap(), c.test);
    }

    #[test]
    fn loader_errors_name_lines() {
        let p = tmp("empty.txt");
        fs::write(&p, "").unwrap();
        assert!(matches!(load_points(&p), Err(Error::Parse { .. })));
        assert!(matches!(load_corpus(&p, None), Err(Error::Parse { .. })));

        let p = tmp("short.txt");
        fs::write(&p, "3 2\n1 2\n3 4\n").unwrap();
        let e = load_points(&p).unwrap_err().to_string();
        assert!(e.contains("declares 3 rows, found 2"), "{e}");

        let p = tmp("ragged.txt");
        fs::write(&p, "2 2\n1 2 0\n3 4\n").unwrap();
        let e = load_points(&p).unwrap_err();
        assert!(matches!(e, Error::Parse { line: 3, .. }), "{e}");

        let p = tmp("badnum.txt");
        fs::write(&p, "1 2\n1 x 1\n").unwrap();
        assert!(matches!(load_regression(&p), Err(Error::Parse { line: 2, .. })));
    }
}
