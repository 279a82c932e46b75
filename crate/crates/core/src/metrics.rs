//! Corpus-level caption metrics: BLEU-1..4, CIDEr and a reduced METEOR.
//!
//! BLEU and CIDEr work on any ordered token type, so validation can score
//! vocabulary indices directly. `meteor_lite` needs text for stemming.

use std::collections::BTreeMap;

use rust_stemmers::{Algorithm, Stemmer};

use crate::error::{Error, Result};

/// One candidate and its references.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EvalItem<T> {
    pub candidate: Vec<T>,
    pub references: Vec<Vec<T>>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EvalCorpus<T> {
    items: Vec<EvalItem<T>>,
}

impl<T> EvalCorpus<T> {
    /// Requires at least one item and at least one reference per item.
    pub fn new(items: Vec<EvalItem<T>>) -> Result<Self> {
        if items.is_empty() {
            return Err(Error::Domain("evaluation corpus is empty".into()));
        }
        if let Some(i) = items.iter().position(|it| it.references.is_empty()) {
            return Err(Error::Domain(format!("item {i} has no references")));
        }
        Ok(EvalCorpus { items })
    }

    pub fn items(&self) -> &[EvalItem<T>] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

fn ngram_counts<T: Ord + Clone>(tokens: &[T], n: usize) -> BTreeMap<&[T], usize> {
    let mut counts = BTreeMap::new();
    if tokens.len() >= n {
        for g in tokens.windows(n) {
            *counts.entry(g).or_insert(0) += 1;
        }
    }
    counts
}

/// Corpus BLEU with uniform weights over orders `1..=n`. Clipped n-gram
/// counts and lengths are summed over the corpus before the precisions and
/// the brevity penalty are formed.
pub fn bleu<T: Ord + Clone>(corpus: &EvalCorpus<T>, n: usize) -> Result<f64> {
    if !(1..=4).contains(&n) {
        return Err(Error::Domain(format!("BLEU order must be 1..=4, got {n}")));
    }
    let mut clipped = vec![0usize; n];
    let mut totals = vec![0usize; n];
    let (mut c, mut r) = (0usize, 0usize);
    for item in &corpus.items {
        let len = item.candidate.len();
        c += len;
        r += item
            .references
            .iter()
            .map(|rf| rf.len())
            .min_by_key(|&rl| (rl.abs_diff(len), rl))
            .expect("references are non-empty");
        for k in 1..=n {
            let cand = ngram_counts(&item.candidate, k);
            let mut max_ref: BTreeMap<&[T], usize> = BTreeMap::new();
            for rf in &item.references {
                for (g, cnt) in ngram_counts(rf, k) {
                    let e = max_ref.entry(g).or_insert(0);
                    *e = (*e).max(cnt);
                }
            }
            clipped[k - 1] += cand
                .iter()
                .map(|(g, &cnt)| cnt.min(max_ref.get(g).copied().unwrap_or(0)))
                .sum::<usize>();
            totals[k - 1] += len.saturating_sub(k - 1);
        }
    }
    if clipped.contains(&0) {
        return Ok(0.0);
    }
    let log_p: f64 = clipped
        .iter()
        .zip(&totals)
        .map(|(&m, &t)| (m as f64 / t as f64).ln())
        .sum::<f64>()
        / n as f64;
    let bp = if c < r { (1.0 - r as f64 / c as f64).exp() } else { 1.0 };
    Ok(bp * log_p.exp())
}

/// TF-IDF vector of one sentence for order `n`.
fn tfidf<'a, T: Ord + Clone>(
    tokens: &'a [T],
    n: usize,
    idf: &dyn Fn(&[T]) -> f64,
) -> BTreeMap<&'a [T], f64> {
    let counts = ngram_counts(tokens, n);
    let total: usize = counts.values().sum();
    counts
        .into_iter()
        .map(|(g, cnt)| (g, cnt as f64 / total as f64 * idf(g)))
        .collect()
}

fn cosine<T: Ord>(a: &BTreeMap<&[T], f64>, b: &BTreeMap<&[T], f64>) -> f64 {
    let dot: f64 = a.iter().filter_map(|(g, x)| b.get(g).map(|y| x * y)).sum();
    let na = a.values().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.values().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Plain CIDEr scaled by 10. Document frequencies count the images whose
/// references contain an n-gram; `IDF = ln(|I| / (1 + df))`.
pub fn cider<T: Ord + Clone>(corpus: &EvalCorpus<T>) -> Result<f64> {
    let images = corpus.items.len() as f64;
    let mut per_item = vec![0.0; corpus.items.len()];
    for n in 1..=4 {
        let mut df: BTreeMap<&[T], usize> = BTreeMap::new();
        for item in &corpus.items {
            let mut seen: BTreeMap<&[T], ()> = BTreeMap::new();
            for rf in &item.references {
                for g in ngram_counts(rf, n).into_keys() {
                    seen.insert(g, ());
                }
            }
            for g in seen.into_keys() {
                *df.entry(g).or_insert(0) += 1;
            }
        }
        let idf = |g: &[T]| (images / (1.0 + df.get(g).copied().unwrap_or(0) as f64)).ln();
        for (score, item) in per_item.iter_mut().zip(&corpus.items) {
            let cand = tfidf(&item.candidate, n, &idf);
            let sims: f64 = item
                .references
                .iter()
                .map(|rf| cosine(&cand, &tfidf(rf, n, &idf)))
                .sum();
            *score += sims / item.references.len() as f64;
        }
    }
    Ok(per_item.iter().map(|s| 10.0 * s / 4.0).sum::<f64>() / images)
}

/// Unigram alignment of `cand` onto `reference`: exact matches first, then
/// matches between stems. Returns `(matches, chunks)`.
fn align<T: AsRef<str>>(cand: &[T], reference: &[T], stemmer: &Stemmer) -> (usize, usize) {
    let mut link: Vec<Option<usize>> = vec![None; cand.len()];
    let mut used = vec![false; reference.len()];
    let exact: Vec<String> = cand.iter().map(|w| w.as_ref().to_owned()).collect();
    let exact_ref: Vec<String> = reference.iter().map(|w| w.as_ref().to_owned()).collect();
    let stem = |w: &T| stemmer.stem(w.as_ref()).into_owned();
    let stem_c: Vec<String> = cand.iter().map(stem).collect();
    let stem_r: Vec<String> = reference.iter().map(stem).collect();
    for (c_words, r_words) in [(&exact, &exact_ref), (&stem_c, &stem_r)] {
        for i in 0..cand.len() {
            if link[i].is_some() {
                continue;
            }
            let candidates: Vec<usize> = (0..reference.len())
                .filter(|&j| !used[j] && c_words[i] == r_words[j])
                .collect();
            // Prefer extending the previous word's chunk.
            let follow = i
                .checked_sub(1)
                .and_then(|p| link[p])
                .map(|j| j + 1)
                .filter(|j| candidates.contains(j));
            if let Some(j) = follow.or_else(|| candidates.first().copied()) {
                link[i] = Some(j);
                used[j] = true;
            }
        }
    }
    let matches = link.iter().flatten().count();
    let mut chunks = 0;
    let mut prev: Option<usize> = None;
    for l in &link {
        match (prev, l) {
            (Some(p), Some(j)) if *j == p + 1 => {}
            (_, Some(_)) => chunks += 1,
            _ => {}
        }
        prev = *l;
    }
    (matches, chunks)
}

fn meteor_pair<T: AsRef<str>>(cand: &[T], reference: &[T], stemmer: &Stemmer) -> f64 {
    let (m, chunks) = align(cand, reference, stemmer);
    if m == 0 {
        return 0.0;
    }
    let p = m as f64 / cand.len() as f64;
    let r = m as f64 / reference.len() as f64;
    let f = 10.0 * p * r / (r + 9.0 * p);
    let penalty = 0.5 * (chunks as f64 / m as f64).powi(3);
    f * (1.0 - penalty)
}

/// METEOR restricted to exact and stemmed unigram matches (no synonyms or
/// paraphrases). Each item takes its best reference; the corpus score is
/// the item mean.
pub fn meteor_lite<T: AsRef<str>>(corpus: &EvalCorpus<T>) -> Result<f64> {
    let stemmer = Stemmer::create(Algorithm::English);
    let total: f64 = corpus
        .items
        .iter()
        .map(|item| {
            item.references
                .iter()
                .map(|rf| meteor_pair(&item.candidate, rf, &stemmer))
                .fold(0.0, f64::max)
        })
        .sum();
    Ok(total / corpus.items.len() as f64)
}

/// Metric names accepted by [`score`].
pub const METRIC_NAMES: [&str; 7] = ["bleu1", "bleu2", "bleu3", "bleu4", "cider", "meteor_lite", "meteor"];

/// Evaluates a metric by name.
pub fn score<T: AsRef<str> + Ord + Clone>(corpus: &EvalCorpus<T>, name: &str) -> Result<f64> {
    match name {
        "bleu1" => bleu(corpus, 1),
        "bleu2" => bleu(corpus, 2),
        "bleu3" => bleu(corpus, 3),
        "bleu4" => bleu(corpus, 4),
        "cider" => cider(corpus),
        "meteor_lite" | "meteor" => meteor_lite(corpus),
        other => Err(Error::Config(format!(
            "unknown metric {other:?} (expected one of {})",
            METRIC_NAMES.join(", ")
        ))),
    }
}

/// One line of an evaluation corpus file: `id \t C|R \t sentence`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CorpusLine {
    pub id: String,
    pub is_candidate: bool,
    pub sentence: String,
}

pub fn parse_corpus_lines(text: &str) -> Result<Vec<CorpusLine>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.splitn(3, '\t');
        let (Some(id), Some(flag), Some(sentence)) = (parts.next(), parts.next(), parts.next()) else {
            return Err(Error::Parse {
                line: i + 1,
                message: "expected id<TAB>C|R<TAB>sentence".into(),
            });
        };
        let is_candidate = match flag {
            "C" => true,
            "R" => false,
            other => {
                return Err(Error::Parse {
                    line: i + 1,
                    message: format!("flag must be C or R, got {other:?}"),
                })
            }
        };
        out.push(CorpusLine {
            id: id.to_owned(),
            is_candidate,
            sentence: sentence.to_owned(),
        });
    }
    Ok(out)
}
