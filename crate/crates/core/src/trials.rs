//! Trial and speaker-metadata ingestion, and partitioning of trials into
//! demographic groups.
//!
//! Both input formats are plain comma-separated UTF-8 text without quoting:
//!
//! * scores: header `enroll_id,test_id,label,score`
//! * metadata: header `speaker_id,<attr>,<attr>,...`

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, BufReader, Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const TRIALS_HEADER: &str = "enroll_id,test_id,label,score";
const METADATA_ID_COLUMN: &str = "speaker_id";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpeakerMetadata {
    pub speaker_id: String,
    /// Lowercased attribute name to verbatim value.
    pub attributes: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Target,
    Nontarget,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Target => "target",
            Label::Nontarget => "nontarget",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub enroll_id: String,
    pub test_id: String,
    pub label: Label,
    /// Higher means more likely the same speaker. Always finite.
    pub score: f64,
}

/// Identifies a group by the values of one or more attributes.
///
/// Attribute names are kept sorted so that keys built from the same
/// attribute set in a different order compare equal.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GroupKey {
    names: Vec<String>,
    values: Vec<String>,
}

impl GroupKey {
    pub fn new<N, V>(pairs: impl IntoIterator<Item = (N, V)>) -> Self
    where
        N: Into<String>,
        V: Into<String>,
    {
        let mut pairs: Vec<(String, String)> = pairs
            .into_iter()
            .map(|(n, v)| (n.into().to_lowercase(), v.into()))
            .collect();
        pairs.sort();
        let (names, values) = pairs.into_iter().unzip();
        GroupKey { names, values }
    }

    /// Single-attribute key, handy for tests and ad-hoc vectors.
    pub fn single(name: &str, value: &str) -> Self {
        GroupKey::new([(name, value)])
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn values(&self) -> &[String] {
        &self.values
    }

    pub fn get(&self, name: &str) -> Option<&str> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.values[i].as_str())
    }
}

impl fmt::Display for GroupKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (n, v)) in self.names.iter().zip(&self.values).enumerate() {
            if i > 0 {
                f.write_str(";")?;
            }
            write!(f, "{n}={v}")?;
        }
        Ok(())
    }
}

impl std::str::FromStr for GroupKey {
    type Err = Error;

    /// Parses the display form `name=value;name=value`.
    fn from_str(s: &str) -> Result<Self> {
        let pairs = s
            .split(';')
            .map(|pair| {
                pair.split_once('=')
                    .filter(|(n, _)| !n.trim().is_empty())
                    .map(|(n, v)| (n.trim(), v))
                    .ok_or_else(|| Error::InvalidParameter(format!("bad group key `{s}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(GroupKey::new(pairs))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssignPolicy {
    /// Both trial endpoints must carry the same attribute tuple.
    #[default]
    BothMatch,
    /// The enrollment speaker alone determines the group.
    EnrollmentOnly,
}

impl std::str::FromStr for AssignPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "both_match" | "bothmatch" => Ok(AssignPolicy::BothMatch),
            "enrollment_only" | "enrollmentonly" => Ok(AssignPolicy::EnrollmentOnly),
            other => Err(Error::InvalidParameter(format!("unknown policy `{other}`"))),
        }
    }
}

/// Trials partitioned into groups. Every input trial is in exactly one
/// bucket: some group or `unassigned`.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupedTrials {
    pub groups: BTreeMap<GroupKey, Vec<TrialRecord>>,
    pub unassigned: Vec<TrialRecord>,
    pub policy: AssignPolicy,
}

impl GroupedTrials {
    /// Every trial, grouped or not. Pooled metrics are computed over this.
    pub fn pooled(&self) -> impl Iterator<Item = &TrialRecord> {
        self.groups.values().flatten().chain(&self.unassigned)
    }

    pub fn len(&self) -> usize {
        self.groups.values().map(Vec::len).sum::<usize>() + self.unassigned.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn group_count(&self) -> usize {
        self.groups.len()
    }
}

fn lines<R: Read>(source: R) -> impl Iterator<Item = (usize, std::io::Result<String>)> {
    BufReader::new(source)
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.map(|s| s.trim_end_matches('\r').to_owned())))
}

pub fn load_metadata<R: Read>(source: R) -> Result<Vec<SpeakerMetadata>> {
    let mut lines = lines(source);
    let header = match lines.next() {
        None => return Err(Error::EmptyFile),
        Some((_, l)) => l?,
    };
    let columns: Vec<String> = header.split(',').map(|c| c.trim().to_lowercase()).collect();
    if columns.len() < 2 || columns[0] != METADATA_ID_COLUMN {
        return Err(Error::MissingHeader {
            expected: "speaker_id,<attribute>,...",
        });
    }

    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (line, text) in lines {
        let text = text?;
        if text.is_empty() {
            continue;
        }
        let fields: Vec<&str> = text.split(',').collect();
        if fields.len() != columns.len() {
            return Err(Error::MalformedRow {
                line,
                expected: columns.len(),
                found: fields.len(),
            });
        }
        let speaker_id = fields[0].trim().to_owned();
        if speaker_id.is_empty() {
            return Err(Error::EmptySpeakerId { line });
        }
        if !seen.insert(speaker_id.clone()) {
            return Err(Error::DuplicateSpeaker(speaker_id));
        }
        let attributes = columns[1..]
            .iter()
            .cloned()
            .zip(fields[1..].iter().map(|v| v.to_string()))
            .collect();
        out.push(SpeakerMetadata {
            speaker_id,
            attributes,
        });
    }
    Ok(out)
}

pub fn load_trials<R: Read>(source: R) -> Result<Vec<TrialRecord>> {
    let mut lines = lines(source);
    let header = match lines.next() {
        None => return Err(Error::MissingHeader {
            expected: TRIALS_HEADER,
        }),
        Some((_, l)) => l?,
    };
    if header.trim() != TRIALS_HEADER {
        return Err(Error::MissingHeader {
            expected: TRIALS_HEADER,
        });
    }

    let mut out = Vec::new();
    for (line, text) in lines {
        let text = text?;
        if text.is_empty() {
            continue;
        }
        let fields: Vec<&str> = text.split(',').collect();
        if fields.len() != 4 {
            return Err(Error::MalformedRow {
                line,
                expected: 4,
                found: fields.len(),
            });
        }
        let label = match fields[2].trim().to_ascii_lowercase().as_str() {
            "target" => Label::Target,
            "nontarget" => Label::Nontarget,
            _ => {
                return Err(Error::BadLabel {
                    line,
                    value: fields[2].to_owned(),
                })
            }
        };
        let raw = fields[3].trim();
        let score = match raw.parse::<f64>() {
            Ok(s) if s.is_finite() => s,
            _ => {
                return Err(Error::NonFiniteScore {
                    line,
                    value: raw.to_owned(),
                })
            }
        };
        out.push(TrialRecord {
            enroll_id: fields[0].trim().to_owned(),
            test_id: fields[1].trim().to_owned(),
            label,
            score,
        });
    }
    Ok(out)
}

pub fn write_trials<'a, W: Write>(
    mut sink: W,
    trials: impl IntoIterator<Item = &'a TrialRecord>,
) -> Result<()> {
    writeln!(sink, "{TRIALS_HEADER}")?;
    for t in trials {
        writeln!(
            sink,
            "{},{},{},{}",
            t.enroll_id,
            t.test_id,
            t.label.as_str(),
            t.score
        )?;
    }
    Ok(())
}

/// Writes metadata with the union of all attribute names as columns, in
/// sorted order. Speakers lacking an attribute get an empty field.
pub fn write_metadata<W: Write>(mut sink: W, metadata: &[SpeakerMetadata]) -> Result<()> {
    let names: std::collections::BTreeSet<&str> = metadata
        .iter()
        .flat_map(|m| m.attributes.keys().map(String::as_str))
        .collect();
    write!(sink, "{METADATA_ID_COLUMN}")?;
    for n in &names {
        write!(sink, ",{n}")?;
    }
    writeln!(sink)?;
    for m in metadata {
        write!(sink, "{}", m.speaker_id)?;
        for n in &names {
            write!(sink, ",{}", m.attributes.get(*n).map_or("", String::as_str))?;
        }
        writeln!(sink)?;
    }
    Ok(())
}

pub fn assign_groups(
    trials: &[TrialRecord],
    metadata: &[SpeakerMetadata],
    attribute_names: &[impl AsRef<str>],
    policy: AssignPolicy,
) -> Result<GroupedTrials> {
    if attribute_names.is_empty() {
        return Err(Error::NoAttributes);
    }
    let mut names: Vec<String> = attribute_names
        .iter()
        .map(|n| n.as_ref().trim().to_lowercase())
        .collect();
    names.sort();
    names.dedup();

    if let Some(first) = metadata.first() {
        if let Some(missing) = names.iter().find(|n| !first.attributes.contains_key(*n)) {
            return Err(Error::UnknownAttribute(missing.clone()));
        }
    }

    let keys: HashMap<&str, Option<GroupKey>> = metadata
        .iter()
        .map(|m| {
            let key = names
                .iter()
                .map(|n| m.attributes.get(n).map(|v| (n.as_str(), v.as_str())))
                .collect::<Option<Vec<_>>>()
                .map(GroupKey::new);
            (m.speaker_id.as_str(), key)
        })
        .collect();
    let lookup = |id: &str| keys.get(id).and_then(Option::as_ref);

    let mut groups: BTreeMap<GroupKey, Vec<TrialRecord>> = BTreeMap::new();
    let mut unassigned = Vec::new();
    for trial in trials {
        let key = match policy {
            AssignPolicy::BothMatch => match (lookup(&trial.enroll_id), lookup(&trial.test_id)) {
                (Some(a), Some(b)) if a == b => Some(a),
                _ => None,
            },
            AssignPolicy::EnrollmentOnly => lookup(&trial.enroll_id),
        };
        match key {
            Some(k) => groups.entry(k.clone()).or_default().push(trial.clone()),
            None => unassigned.push(trial.clone()),
        }
    }
    Ok(GroupedTrials {
        groups,
        unassigned,
        policy,
    })
}
