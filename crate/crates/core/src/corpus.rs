//! Dialogue corpora: data model, loading and saving, statistics.
//!
//! Two on-disk formats are supported:
//!
//! * **raw chat**: a JSON array of `{"id", "dialogue", "summary"}` objects
//!   where `dialogue` holds newline-separated `Name: message` lines.
//! * **annotated**: JSON Lines, one dialogue per line, shaped
//!   `{"id", "turns": [{"speaker", "tokens", "tags"}], "summary_tokens"}`.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::tags::Tag;
use crate::tokenize::tokenize;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Speaker {
    pub id: usize,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Utterance {
    pub speaker_id: usize,
    pub raw_text: String,
    pub tokens: Option<Vec<String>>,
    pub pos_tags: Option<Vec<Tag>>,
}

impl Utterance {
    pub fn new(speaker_id: usize, raw_text: impl Into<String>) -> Self {
        Self {
            speaker_id,
            raw_text: raw_text.into(),
            tokens: None,
            pos_tags: None,
        }
    }

    /// Token count, falling back to tokenizing the raw text.
    pub fn token_len(&self) -> usize {
        match &self.tokens {
            Some(tokens) => tokens.len(),
            None => tokenize(&self.raw_text).len(),
        }
    }
}

/// One conversation with its reference summary.
///
/// Speakers are scoped to the dialogue: the same name in two dialogues is
/// two different speakers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dialogue {
    pub id: String,
    pub speakers: Vec<Speaker>,
    pub turns: Vec<Utterance>,
    pub summary: String,
    pub summary_tokens: Vec<String>,
}

impl Dialogue {
    /// Build a dialogue from `(speaker name, text)` turns.
    pub fn from_turns<'a>(
        id: impl Into<String>,
        turns: impl IntoIterator<Item = (&'a str, &'a str)>,
        summary: impl Into<String>,
    ) -> Self {
        let mut speakers: Vec<Speaker> = Vec::new();
        let mut utterances = Vec::new();
        for (name, text) in turns {
            let speaker_id = speaker_index(&mut speakers, name);
            utterances.push(Utterance::new(speaker_id, text));
        }
        let summary = summary.into();
        Self {
            id: id.into(),
            speakers,
            turns: utterances,
            summary_tokens: tokenize(&summary),
            summary,
        }
    }

    pub fn speaker(&self, id: usize) -> Option<&Speaker> {
        self.speakers.iter().find(|s| s.id == id)
    }

    pub fn speaker_name(&self, turn: &Utterance) -> &str {
        self.speaker(turn.speaker_id).map_or("", |s| s.name.as_str())
    }

    /// Number of speakers that actually utter a turn.
    pub fn active_speakers(&self) -> usize {
        self.turns
            .iter()
            .map(|t| t.speaker_id)
            .collect::<HashSet<_>>()
            .len()
    }

    pub fn is_tokenized(&self) -> bool {
        self.turns.iter().all(|t| t.tokens.is_some())
    }

    pub fn is_tagged(&self) -> bool {
        self.turns.iter().all(|t| t.pos_tags.is_some())
    }

    fn validate(&self, record: usize) -> Result<()> {
        if self.turns.is_empty() {
            return Err(Error::malformed(record, "dialogue", "dialogue has no turns"));
        }
        let mut names = HashSet::new();
        for s in &self.speakers {
            if s.name.is_empty() {
                return Err(Error::malformed(record, "speaker", "empty speaker name"));
            }
            if !names.insert(s.name.as_str()) {
                return Err(Error::malformed(
                    record,
                    "speaker",
                    format!("duplicate speaker name `{}`", s.name),
                ));
            }
        }
        for (i, turn) in self.turns.iter().enumerate() {
            if self.speaker(turn.speaker_id).is_none() {
                return Err(Error::malformed(
                    record,
                    &format!("turns[{i}].speaker"),
                    "speaker does not resolve",
                ));
            }
            if let Some(tokens) = &turn.tokens {
                if tokens.is_empty() {
                    return Err(Error::malformed(
                        record,
                        &format!("turns[{i}].tokens"),
                        "token list is empty",
                    ));
                }
                if let Some(tags) = &turn.pos_tags {
                    if tags.len() != tokens.len() {
                        return Err(Error::malformed(
                            record,
                            &format!("turns[{i}].tags"),
                            format!("{} tags for {} tokens", tags.len(), tokens.len()),
                        ));
                    }
                }
            } else if turn.pos_tags.is_some() {
                return Err(Error::malformed(
                    record,
                    &format!("turns[{i}].tags"),
                    "tags without tokens",
                ));
            }
        }
        Ok(())
    }
}

fn speaker_index(speakers: &mut Vec<Speaker>, name: &str) -> usize {
    if let Some(s) = speakers.iter().find(|s| s.name == name) {
        return s.id;
    }
    let id = speakers.len();
    speakers.push(Speaker {
        id,
        name: name.to_string(),
    });
    id
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }

    /// Guess the split from a file name (`train`, `dev`/`val`, `test`).
    pub fn from_path(path: &Path) -> Option<Split> {
        let stem = path.file_stem()?.to_str()?.to_lowercase();
        if stem.contains("train") {
            Some(Split::Train)
        } else if stem.contains("dev") || stem.contains("val") {
            Some(Split::Dev)
        } else if stem.contains("test") {
            Some(Split::Test)
        } else {
            None
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "dev" | "val" | "validation" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            other => Err(Error::Argument(format!("unknown split `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Corpus {
    pub split: Split,
    pub dialogues: Vec<Dialogue>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    RawChat,
    Annotated,
}

impl Format {
    /// `.jsonl` files are annotated, everything else raw chat.
    pub fn from_path(path: &Path) -> Format {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl") => Format::Annotated,
            _ => Format::RawChat,
        }
    }
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "raw" | "raw-chat" => Ok(Format::RawChat),
            "annotated" => Ok(Format::Annotated),
            other => Err(Error::Argument(format!("unknown corpus format `{other}`"))),
        }
    }
}

/// Load a corpus file. The split is guessed from the file name and defaults
/// to `train`.
pub fn load_corpus(path: impl AsRef<Path>, format: Format) -> Result<Corpus> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let split = Split::from_path(path).unwrap_or(Split::Train);
    match format {
        Format::RawChat => parse_raw_chat(&text, split),
        Format::Annotated => parse_annotated(&text, split),
    }
}

fn str_field<'a>(record: &'a Value, index: usize, field: &str) -> Result<&'a str> {
    match record.get(field) {
        Some(Value::String(s)) => Ok(s),
        Some(_) => Err(Error::malformed(index, field, "expected a string")),
        None => Err(Error::malformed(index, field, "missing")),
    }
}

/// Parse the `Name: message` lines of one raw dialogue.
///
/// Each nonblank line is split at the first `": "`. Lines without the
/// separator continue the previous utterance.
pub fn parse_chat_lines(text: &str, record: usize) -> Result<(Vec<Speaker>, Vec<Utterance>)> {
    let mut speakers = Vec::new();
    let mut turns: Vec<Utterance> = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        match line.split_once(": ") {
            Some((name, message)) if !name.trim().is_empty() => {
                let id = speaker_index(&mut speakers, name.trim());
                turns.push(Utterance::new(id, message.trim()));
            }
            _ => match turns.last_mut() {
                Some(prev) => {
                    prev.raw_text.push('\n');
                    prev.raw_text.push_str(line);
                }
                None => {
                    return Err(Error::malformed(
                        record,
                        "dialogue",
                        format!("first line has no `Name: ` prefix: `{line}`"),
                    ))
                }
            },
        }
    }
    Ok((speakers, turns))
}

pub fn parse_raw_chat(text: &str, split: Split) -> Result<Corpus> {
    if text.trim().is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let records: Vec<Value> = match serde_json::from_str(text)? {
        Value::Array(items) => items,
        _ => return Err(Error::malformed(0, "<root>", "expected a JSON array")),
    };
    if records.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut dialogues = Vec::with_capacity(records.len());
    let mut ids = HashSet::new();
    for (index, record) in records.iter().enumerate() {
        let id = match record.get("id") {
            Some(Value::Number(n)) => n.to_string(),
            _ => str_field(record, index, "id")?.to_string(),
        };
        let chat = str_field(record, index, "dialogue")?;
        let summary = str_field(record, index, "summary")?.trim().to_string();
        let (speakers, turns) = parse_chat_lines(chat, index)?;
        let dialogue = Dialogue {
            id,
            speakers,
            turns,
            summary_tokens: tokenize(&summary),
            summary,
        };
        dialogue.validate(index)?;
        if !ids.insert(dialogue.id.clone()) {
            return Err(Error::malformed(index, "id", format!("duplicate id `{}`", dialogue.id)));
        }
        dialogues.push(dialogue);
    }
    Ok(Corpus { split, dialogues })
}

#[derive(Debug, Serialize, Deserialize)]
struct AnnotatedTurn {
    speaker: String,
    tokens: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tags: Option<Vec<Tag>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct AnnotatedRecord {
    id: String,
    turns: Vec<AnnotatedTurn>,
    summary_tokens: Vec<String>,
}

pub fn parse_annotated(text: &str, split: Split) -> Result<Corpus> {
    let mut dialogues = Vec::new();
    let mut ids = HashSet::new();
    for (index, line) in text.lines().filter(|l| !l.trim().is_empty()).enumerate() {
        let value: Value = serde_json::from_str(line)
            .map_err(|e| Error::malformed(index, "<line>", e.to_string()))?;
        let record = annotated_record(&value, index)?;
        let dialogue = record.into_dialogue();
        dialogue.validate(index)?;
        if !ids.insert(dialogue.id.clone()) {
            return Err(Error::malformed(index, "id", format!("duplicate id `{}`", dialogue.id)));
        }
        dialogues.push(dialogue);
    }
    if dialogues.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    Ok(Corpus { split, dialogues })
}

/// Deserialize one annotated record, naming the first offending field.
fn annotated_record(value: &Value, index: usize) -> Result<AnnotatedRecord> {
    str_field(value, index, "id")?;
    let turns = match value.get("turns") {
        Some(Value::Array(turns)) => turns,
        Some(_) => return Err(Error::malformed(index, "turns", "expected an array")),
        None => return Err(Error::malformed(index, "turns", "missing")),
    };
    for (i, turn) in turns.iter().enumerate() {
        for field in ["speaker", "tokens", "tags"] {
            if field != "tags" && turn.get(field).is_none() {
                return Err(Error::malformed(index, &format!("turns[{i}].{field}"), "missing"));
            }
            if let Some(v) = turn.get(field) {
                if v.is_null() && field == "tags" {
                    continue;
                }
                let ok = match field {
                    "speaker" => v.is_string(),
                    "tokens" => serde_json::from_value::<Vec<String>>(v.clone()).is_ok(),
                    _ => serde_json::from_value::<Vec<Tag>>(v.clone()).is_ok(),
                };
                if !ok {
                    return Err(Error::malformed(
                        index,
                        &format!("turns[{i}].{field}"),
                        "invalid value",
                    ));
                }
            }
        }
    }
    if value.get("summary_tokens").is_none() {
        return Err(Error::malformed(index, "summary_tokens", "missing"));
    }
    serde_json::from_value(value.clone())
        .map_err(|e| Error::malformed(index, "summary_tokens", e.to_string()))
}

impl AnnotatedRecord {
    fn into_dialogue(self) -> Dialogue {
        let mut speakers = Vec::new();
        let turns = self
            .turns
            .into_iter()
            .map(|t| {
                let speaker_id = speaker_index(&mut speakers, &t.speaker);
                Utterance {
                    speaker_id,
                    raw_text: t.tokens.join(" "),
                    tokens: Some(t.tokens),
                    pos_tags: t.tags,
                }
            })
            .collect();
        Dialogue {
            id: self.id,
            speakers,
            turns,
            summary: self.summary_tokens.join(" "),
            summary_tokens: self.summary_tokens,
        }
    }
}

impl Corpus {
    pub fn new(split: Split, dialogues: Vec<Dialogue>) -> Self {
        Self { split, dialogues }
    }

    pub fn len(&self) -> usize {
        self.dialogues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dialogues.is_empty()
    }

    pub fn is_tokenized(&self) -> bool {
        self.dialogues.iter().all(Dialogue::is_tokenized)
    }

    pub fn is_tagged(&self) -> bool {
        self.dialogues.iter().all(Dialogue::is_tagged)
    }

    /// Serialize in the annotated JSON Lines format.
    ///
    /// Turns that have not been tokenized are tokenized on the fly.
    pub fn to_annotated_jsonl(&self) -> String {
        let mut out = String::new();
        for d in &self.dialogues {
            let record = AnnotatedRecord {
                id: d.id.clone(),
                turns: d
                    .turns
                    .iter()
                    .map(|t| AnnotatedTurn {
                        speaker: d.speaker_name(t).to_string(),
                        tokens: t.tokens.clone().unwrap_or_else(|| tokenize(&t.raw_text)),
                        tags: t.pos_tags.clone(),
                    })
                    .collect(),
                summary_tokens: d.summary_tokens.clone(),
            };
            out.push_str(&serde_json::to_string(&record).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    /// Serialize in the raw chat JSON format.
    pub fn to_raw_json(&self) -> String {
        let records: Vec<Value> = self
            .dialogues
            .iter()
            .map(|d| {
                let lines: Vec<String> = d
                    .turns
                    .iter()
                    .map(|t| format!("{}: {}", d.speaker_name(t), t.raw_text))
                    .collect();
                serde_json::json!({
                    "id": d.id,
                    "dialogue": lines.join("\n"),
                    "summary": d.summary,
                })
            })
            .collect();
        serde_json::to_string_pretty(&records).expect("records serialize")
    }

    pub fn save(&self, path: impl AsRef<Path>, format: Format) -> Result<()> {
        let path = path.as_ref();
        let text = match format {
            Format::RawChat => self.to_raw_json(),
            Format::Annotated => self.to_annotated_jsonl(),
        };
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// Mean with inclusive range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanRange {
    pub mean: f64,
    pub min: usize,
    pub max: usize,
}

impl MeanRange {
    fn of(values: &[usize]) -> Self {
        let sum: usize = values.iter().sum();
        Self {
            mean: sum as f64 / values.len() as f64,
            min: values.iter().copied().min().unwrap_or(0),
            max: values.iter().copied().max().unwrap_or(0),
        }
    }
}

/// Per-split corpus statistics: counts, summary length, speakers, turns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub split: Split,
    pub conversations: usize,
    pub summary_length: MeanRange,
    pub speakers: MeanRange,
    pub turns: MeanRange,
}

/// Summary length is counted in whitespace-separated words of the summary
/// text; speakers are the distinct speakers uttering at least one turn.
pub fn compute_stats(corpus: &Corpus) -> Result<CorpusStats> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let lengths: Vec<usize> = corpus
        .dialogues
        .iter()
        .map(|d| d.summary.split_whitespace().count())
        .collect();
    let speakers: Vec<usize> = corpus.dialogues.iter().map(Dialogue::active_speakers).collect();
    let turns: Vec<usize> = corpus.dialogues.iter().map(|d| d.turns.len()).collect();
    Ok(CorpusStats {
        split: corpus.split,
        conversations: corpus.len(),
        summary_length: MeanRange::of(&lengths),
        speakers: MeanRange::of(&speakers),
        turns: MeanRange::of(&turns),
    })
}

pub const STATS_CSV_HEADER: &str =
    "split,n_conv,sl_mean,sl_min,sl_max,spk_mean,spk_min,spk_max,turn_mean,turn_min,turn_max";

impl CorpusStats {
    pub fn csv_row(&self) -> String {
        let r = |m: &MeanRange| format!("{:.2},{},{}", m.mean, m.min, m.max);
        format!(
            "{},{},{},{},{}",
            self.split,
            self.conversations,
            r(&self.summary_length),
            r(&self.speakers),
            r(&self.turns)
        )
    }
}

pub fn stats_csv(stats: &[CorpusStats]) -> String {
    let mut out = String::from(STATS_CSV_HEADER);
    out.push('\n');
    for s in stats {
        out.push_str(&s.csv_row());
        out.push('\n');
    }
    out
}

/// Plain-text table in the layout of the usual corpus statistics table.
pub fn stats_table(stats: &[CorpusStats]) -> String {
    let mut out = format!(
        "{:<6} {:>7} | {:>7} {:>9} | {:>7} {:>9} | {:>7} {:>9}\n",
        "", "# Conv", "SL mean", "SL range", "Spk", "range", "Turns", "range"
    );
    out.push_str(&"-".repeat(out.trim_end().chars().count()));
    out.push('\n');
    for s in stats {
        let range = |m: &MeanRange| format!("[{}, {}]", m.min, m.max);
        out.push_str(&format!(
            "{:<6} {:>7} | {:>7.2} {:>9} | {:>7.2} {:>9} | {:>7.2} {:>9}\n",
            s.split.name(),
            s.conversations,
            s.summary_length.mean,
            range(&s.summary_length),
            s.speakers.mean,
            range(&s.speakers),
            s.turns.mean,
            range(&s.turns),
        ));
    }
    out
}

/// Histogram of turn counts keyed by bin lower bound.
pub fn utterance_density(corpus: &Corpus, bin_width: usize) -> Result<BTreeMap<usize, usize>> {
    if bin_width == 0 {
        return Err(Error::Argument("bin width must be at least 1".into()));
    }
    let mut bins = BTreeMap::new();
    for d in &corpus.dialogues {
        let lower = d.turns.len() / bin_width * bin_width;
        *bins.entry(lower).or_insert(0) += 1;
    }
    Ok(bins)
}
