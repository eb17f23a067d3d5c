//! File formats: line-delimited JSON for ratings and paragraphs, and a
//! tab-separated table for metric scores.
//!
//! Every reader reports failures with the 1-based line number. Inputs may be
//! gzip-compressed; [`open_input`] detects that from the magic bytes.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use flate2::bufread::MultiGzDecoder;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{
    validate_ratings, EntryError, ItemKey, ParagraphInstance, RatingRecord, ScoreMode, ScoreTable,
};

/// Header row of a scores file.
pub const SCORES_HEADER: &str = "metric\tlang_pair\tsystem\tdoc_id\tstart_index\tk\tscore";

const GZIP_MAGIC: [u8; 2] = [0x1f, 0x8b];

/// Opens a plain or gzip-compressed file for buffered reading.
pub fn open_input(path: &Path) -> Result<Box<dyn BufRead + Send>> {
    let file = File::open(path).map_err(|source| Error::File {
        path: path.to_path_buf(),
        source,
    })?;
    let mut reader = BufReader::new(file);
    let head = reader.fill_buf().map_err(|source| Error::File {
        path: path.to_path_buf(),
        source,
    })?;
    if head.starts_with(&GZIP_MAGIC) {
        Ok(Box::new(BufReader::new(MultiGzDecoder::new(reader))))
    } else {
        Ok(Box::new(reader))
    }
}

/// Strips serde_json's position suffix and backticks from an error message.
fn clean_json_error(err: &serde_json::Error) -> String {
    let msg = err.to_string();
    let msg = match msg.rfind(" at line ") {
        Some(pos) => &msg[..pos],
        None => &msg,
    };
    msg.replace('`', "")
}

/// Yields (1-based line number, line) for every non-blank line.
fn numbered_lines<R: BufRead>(reader: R) -> impl Iterator<Item = Result<(usize, String)>> {
    reader
        .lines()
        .enumerate()
        .filter_map(|(i, line)| match line {
            Ok(l) if l.trim().is_empty() => None,
            Ok(l) => Some(Ok((i + 1, l))),
            Err(e) => Some(Err(Error::Parse {
                line: i + 1,
                reason: e.to_string(),
            })),
        })
}

fn parse_json_lines<T: DeserializeOwned, R: BufRead>(reader: R) -> Result<Vec<(usize, T)>> {
    numbered_lines(reader)
        .map(|line| {
            let (n, text) = line?;
            serde_json::from_str(&text)
                .map(|v| (n, v))
                .map_err(|e| Error::Parse {
                    line: n,
                    reason: clean_json_error(&e),
                })
        })
        .collect()
}

fn write_json_lines<T: Serialize, W: Write>(mut writer: W, values: &[T]) -> Result<()> {
    for v in values {
        serde_json::to_writer(&mut writer, v).map_err(std::io::Error::from)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}

/// Parses a ratings file without validating the collection as a whole.
pub fn read_ratings<R: BufRead>(reader: R) -> Result<Vec<RatingRecord>> {
    Ok(parse_json_lines(reader)?
        .into_iter()
        .map(|(_, r)| r)
        .collect())
}

/// Parses a ratings file and validates the collection.
pub fn parse_ratings<R: BufRead>(reader: R) -> Result<Vec<RatingRecord>> {
    let records = read_ratings(reader)?;
    let report = validate_ratings(&records);
    if !report.is_ok() {
        return Err(Error::Validation(report));
    }
    Ok(records)
}

pub fn write_ratings<W: Write>(writer: W, records: &[RatingRecord]) -> Result<()> {
    write_json_lines(writer, records)
}

pub fn write_paragraphs<W: Write>(writer: W, paragraphs: &[ParagraphInstance]) -> Result<()> {
    write_json_lines(writer, paragraphs)
}

pub fn read_paragraphs<R: BufRead>(reader: R) -> Result<Vec<ParagraphInstance>> {
    parse_json_lines::<ParagraphInstance, _>(reader)?
        .into_iter()
        .map(|(line, p)| match p.check_invariants() {
            Ok(()) => Ok(p),
            Err(reason) => Err(Error::ParagraphInvariant {
                line,
                key: format!(
                    "({}, {}, {}, {}, {}, {})",
                    p.dataset_id, p.lang_pair, p.system_id, p.doc_id, p.start_index, p.k
                ),
                reason,
            }),
        })
        .collect()
}

fn parse_field<T: std::str::FromStr>(line: usize, name: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::Parse {
        line,
        reason: format!("invalid {name} {value:?}"),
    })
}

/// Parses a scores file into one table per (metric, language pair, k),
/// ordered by that triple.
pub fn parse_external_scores<R: BufRead>(reader: R) -> Result<Vec<ScoreTable>> {
    let mut lines = reader.lines();
    let header = lines.next().transpose()?.unwrap_or_default();
    if header.trim_end_matches('\r') != SCORES_HEADER {
        return Err(Error::Parse {
            line: 1,
            reason: format!("expected header {SCORES_HEADER:?}, found {header:?}"),
        });
    }

    let mut tables: BTreeMap<(String, String, usize), ScoreTable> = BTreeMap::new();
    for (i, line) in lines.enumerate() {
        let n = i + 2;
        let line = line.map_err(|e| Error::Parse {
            line: n,
            reason: e.to_string(),
        })?;
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        let [metric, lang_pair, system, doc_id, start, k, score] = cols[..] else {
            return Err(Error::Parse {
                line: n,
                reason: format!("expected 7 columns, found {}", cols.len()),
            });
        };
        let start_index: usize = parse_field(n, "start_index", start)?;
        let k: usize = parse_field(n, "k", k)?;
        if k == 0 {
            return Err(Error::Parse {
                line: n,
                reason: "k must be positive".into(),
            });
        }
        let score: f64 = parse_field(n, "score", score)?;
        let table = tables
            .entry((metric.to_string(), lang_pair.to_string(), k))
            .or_insert_with(|| ScoreTable::new(metric, ScoreMode::External, lang_pair, k));
        let item = ItemKey {
            doc_id: doc_id.to_string(),
            start_index,
            k,
        };
        table.insert(system, item, score).map_err(|e| match e {
            EntryError::Duplicate(key) => Error::DuplicateKey { line: n, key },
            EntryError::NonFinite(_) => Error::Parse {
                line: n,
                reason: format!("non-finite score {score}"),
            },
        })?;
    }
    Ok(tables.into_values().collect())
}

fn check_tsv_field(field: &str) -> Result<&str> {
    if field.contains(['\t', '\n', '\r']) {
        return Err(Error::arg(format!(
            "field {field:?} cannot be written to a tab-separated file"
        )));
    }
    Ok(field)
}

/// Writes tables in the scores-file format, entries in canonical order.
pub fn write_scores<W: Write>(mut writer: W, tables: &[ScoreTable]) -> Result<()> {
    writeln!(writer, "{SCORES_HEADER}")?;
    for t in tables {
        let metric = check_tsv_field(&t.metric_name)?;
        let lang_pair = check_tsv_field(&t.lang_pair)?;
        for (system, item, score) in t.entries() {
            writeln!(
                writer,
                "{metric}\t{lang_pair}\t{}\t{}\t{}\t{}\t{score}",
                check_tsv_field(system)?,
                check_tsv_field(&item.doc_id)?,
                item.start_index,
                item.k
            )?;
        }
    }
    writer.flush()?;
    Ok(())
}
