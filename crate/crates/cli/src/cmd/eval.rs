use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use capgen::metrics::{parse_corpus_lines, score, EvalCorpus, EvalItem, METRIC_NAMES};
use capgen::text::tokenize;

use crate::failure::{CmdResult, Failure};
use crate::settings;

#[derive(clap::Args)]
pub struct Args {
    /// `id<TAB>C<TAB>sentence` lines, or `id<TAB>caption<TAB>logprob` as
    /// printed by `caption`. The first line of each id is its candidate.
    #[arg(long)]
    candidates: PathBuf,
    /// `id<TAB>R<TAB>sentence` lines.
    #[arg(long)]
    references: PathBuf,
    /// Comma-separated metric names, printed in this order.
    #[arg(long, value_delimiter = ',', default_value = "bleu1,bleu4,cider,meteor_lite")]
    metrics: Vec<String>,
}

fn read(path: &Path) -> CmdResult<String> {
    fs::read_to_string(path).map_err(|e| Failure::data(format!("cannot read {}: {e}", path.display())))
}

/// First sentence per id, in file order.
fn candidates(text: &str) -> CmdResult<Vec<(String, String)>> {
    let mut out: Vec<(String, String)> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.splitn(3, '\t').collect();
        let (id, sentence) = match fields[..] {
            [id, "C" | "R", s] => (id, s),
            [id, s, _] | [id, s] => (id, s),
            _ => {
                return Err(Failure::data(format!(
                    "candidates line {}: expected id<TAB>C<TAB>sentence or id<TAB>caption<TAB>logprob",
                    i + 1
                )))
            }
        };
        if !out.iter().any(|(seen, _)| seen == id) {
            out.push((id.to_owned(), sentence.to_owned()));
        }
    }
    Ok(out)
}

pub fn run(a: Args) -> CmdResult<u8> {
    settings::echo(
        "eval",
        &[
            ("candidates", a.candidates.display().to_string()),
            ("references", a.references.display().to_string()),
            ("metrics", a.metrics.join(",")),
        ],
    );
    for m in &a.metrics {
        if !METRIC_NAMES.contains(&m.as_str()) {
            return Err(Failure::usage(format!(
                "unknown metric {m:?} (expected one of {})",
                METRIC_NAMES.join(", ")
            )));
        }
    }
    let cands = candidates(&read(&a.candidates)?)?;
    let mut refs: BTreeMap<String, Vec<Vec<String>>> = BTreeMap::new();
    for l in parse_corpus_lines(&read(&a.references)?)? {
        if !l.is_candidate {
            refs.entry(l.id).or_default().push(tokenize(&l.sentence));
        }
    }
    let mut items = Vec::with_capacity(cands.len());
    for (id, sentence) in cands {
        let references = refs
            .remove(&id)
            .ok_or_else(|| Failure::usage(format!("no references for id {id:?}")))?;
        items.push(EvalItem {
            candidate: tokenize(&sentence),
            references,
        });
    }
    let corpus = EvalCorpus::new(items)?;
    for m in &a.metrics {
        println!("{m}\t{:.4}", score(&corpus, m)?);
    }
    Ok(0)
}
