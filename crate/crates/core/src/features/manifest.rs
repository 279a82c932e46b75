//! Dataset manifest: one `id<TAB>split<TAB>caption|caption|...` per line.

use std::fs;
use std::path::Path;

use super::Split;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestRecord {
    pub id: String,
    pub split: Split,
    pub captions: Vec<String>,
}

pub fn write_manifest(records: &[ManifestRecord], path: &Path) -> Result<()> {
    let mut text = String::new();
    for r in records {
        if r.id.contains(['\t', '\n']) || r.captions.iter().any(|c| c.contains(['|', '\t', '\n'])) {
            return Err(Error::Contract(format!(
                "record {:?} contains a reserved separator",
                r.id
            )));
        }
        text.push_str(&format!("{}\t{}\t{}\n", r.id, r.split, r.captions.join("|")));
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            let fields: Vec<&str> = line.split('\t').collect();
            let [id, split, captions] = fields[..] else {
                return Err(Error::Parse {
                    line: i + 1,
                    message: format!("expected 3 tab-separated fields, found {}", fields.len()),
                });
            };
            let split = split.parse().map_err(|message| Error::Parse {
                line: i + 1,
                message,
            })?;
            Ok(ManifestRecord {
                id: id.to_owned(),
                split,
                captions: captions.split('|').map(str::to_owned).collect(),
            })
        })
        .collect()
}
