//! Statement label taxonomy: canonical labels, environment aliases and the
//! grouping of raw labels into nest classes.
//!
//! The taxonomy is read from a small sectioned text file:
//!
//! ```text
//! [labels]
//! theorem = env
//! introduction = heading
//! conclusion = heading+env
//! [aliases]
//! mainthm = theorem
//! [nests]
//! proposition: proposition, lemma, theorem = 4060029
//! [frequencies]
//! lemma = 1520000
//! ```
//!
//! `#` starts a comment. The `[labels]` section is optional; without it every
//! label referenced elsewhere is treated as a theorem environment. A trailing
//! `= total` on a nest line declares the nest frequency, which must equal the
//! sum of its member frequencies.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;

use crate::error::{Error, Result};

const BUNDLED: &str = include_str!("../data/taxonomy.conf");

/// A canonical raw statement label such as `theorem` or `related_work`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StatementLabel(String);

impl StatementLabel {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for StatementLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Where a label is authored: a `\newtheorem` environment or a sectioning
/// heading.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Origin {
    TheoremEnvironment,
    SectionHeading,
}

#[derive(Clone, Debug)]
pub struct LabelInfo {
    pub label: StatementLabel,
    /// The more common source when a label is authored both ways.
    pub origin: Origin,
    pub from_environment: bool,
    pub from_heading: bool,
    pub frequency: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NestLabel {
    pub name: String,
    pub members: Vec<StatementLabel>,
    pub frequency: u64,
}

/// Immutable, validated label taxonomy.
#[derive(Clone, Debug)]
pub struct Taxonomy {
    labels: Vec<LabelInfo>,
    by_name: HashMap<String, usize>,
    aliases: HashMap<String, usize>,
    nests: Vec<NestLabel>,
    nest_by_label: HashMap<usize, usize>,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Section {
    None,
    Labels,
    Aliases,
    Nests,
    Frequencies,
}

fn is_label_name(s: &str) -> bool {
    !s.is_empty()
        && s
            .bytes()
            .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_')
}

fn fold_key(raw: &str) -> String {
    raw.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

fn err(line: usize, message: impl Into<String>) -> Error {
    Error::Taxonomy {
        line,
        message: message.into(),
    }
}

impl Taxonomy {
    /// The default taxonomy shipped with the crate.
    pub fn bundled() -> Self {
        Self::parse(BUNDLED).expect("bundled taxonomy is valid")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut section = Section::None;
        // (name, sources, line)
        let mut declared: Vec<(String, Vec<Origin>, usize)> = Vec::new();
        let mut aliases: Vec<(String, String, usize)> = Vec::new();
        let mut nests: Vec<(String, Vec<String>, Option<u64>, usize)> = Vec::new();
        let mut freqs: Vec<(String, u64, usize)> = Vec::new();

        for (idx, raw_line) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw_line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if line.starts_with('[') {
                section = match line {
                    "[labels]" => Section::Labels,
                    "[aliases]" => Section::Aliases,
                    "[nests]" => Section::Nests,
                    "[frequencies]" => Section::Frequencies,
                    other => return Err(err(line_no, format!("unknown section {other}"))),
                };
                continue;
            }
            match section {
                Section::None => return Err(err(line_no, "entry outside of a section")),
                Section::Labels => {
                    let (name, sources) = split_pair(line, '=', line_no)?;
                    let mut origins = Vec::new();
                    for src in sources.split('+') {
                        origins.push(match src.trim() {
                            "env" => Origin::TheoremEnvironment,
                            "heading" => Origin::SectionHeading,
                            other => {
                                return Err(err(line_no, format!("unknown label source `{other}`")))
                            }
                        });
                    }
                    declared.push((name.to_string(), origins, line_no));
                }
                Section::Aliases => {
                    let (raw, canonical) = split_pair(line, '=', line_no)?;
                    aliases.push((fold_key(raw), canonical.to_string(), line_no));
                }
                Section::Nests => {
                    let (name, rest) = split_pair(line, ':', line_no)?;
                    let (members, total) = match rest.split_once('=') {
                        Some((m, t)) => (m, Some(parse_count(t.trim(), line_no)?)),
                        None => (rest, None),
                    };
                    let members = members
                        .split(',')
                        .map(|m| m.trim().to_string())
                        .filter(|m| !m.is_empty())
                        .collect::<Vec<_>>();
                    if members.is_empty() {
                        return Err(err(line_no, format!("nest `{name}` has no members")));
                    }
                    nests.push((name.to_string(), members, total, line_no));
                }
                Section::Frequencies => {
                    let (name, count) = split_pair(line, '=', line_no)?;
                    freqs.push((name.to_string(), parse_count(count, line_no)?, line_no));
                }
            }
        }

        let mut labels: Vec<LabelInfo> = Vec::new();
        let mut by_name: HashMap<String, usize> = HashMap::new();
        let mut add_label = |name: &str, origins: &[Origin], line: usize| -> Result<usize> {
            if !is_label_name(name) {
                return Err(err(line, format!("invalid label name `{name}`")));
            }
            if let Some(&i) = by_name.get(name) {
                return Ok(i);
            }
            let i = labels.len();
            labels.push(LabelInfo {
                label: StatementLabel(name.to_string()),
                origin: origins[0],
                from_environment: origins.contains(&Origin::TheoremEnvironment),
                from_heading: origins.contains(&Origin::SectionHeading),
                frequency: None,
            });
            by_name.insert(name.to_string(), i);
            Ok(i)
        };

        let explicit = !declared.is_empty();
        for (name, origins, line) in &declared {
            if by_name_contains(&declared, name, *line) {
                return Err(err(*line, format!("duplicate label `{name}`")));
            }
            add_label(name, origins, *line)?;
        }
        if !explicit {
            let implicit = [Origin::TheoremEnvironment];
            for (_, canonical, line) in &aliases {
                add_label(canonical, &implicit, *line)?;
            }
            for (_, members, _, line) in &nests {
                for m in members {
                    add_label(m, &implicit, *line)?;
                }
            }
            for (name, _, line) in &freqs {
                add_label(name, &implicit, *line)?;
            }
        }
        let lookup = |name: &str, line: usize| -> Result<usize> {
            by_name
                .get(name)
                .copied()
                .ok_or_else(|| err(line, format!("unknown label `{name}`")))
        };

        for (name, count, line) in &freqs {
            let i = lookup(name, *line)?;
            if labels[i].frequency.is_some() {
                return Err(err(*line, format!("duplicate frequency for `{name}`")));
            }
            labels[i].frequency = Some(*count);
        }

        let mut alias_map: HashMap<String, usize> = HashMap::new();
        for info in labels.iter().enumerate() {
            alias_map.insert(info.1.label.0.clone(), info.0);
            if info.1.label.0.contains('_') {
                alias_map.insert(info.1.label.0.replace('_', " "), info.0);
            }
        }
        let mut alias_lines: HashMap<&str, usize> = HashMap::new();
        for (raw, canonical, line) in &aliases {
            let target = lookup(canonical, *line)?;
            if alias_lines.insert(raw, *line).is_some() {
                return Err(err(*line, format!("duplicate raw name `{raw}`")));
            }
            match alias_map.get(raw) {
                Some(&existing) if existing != target => {
                    return Err(err(
                        *line,
                        format!("alias `{raw}` shadows the canonical label of that name"),
                    ));
                }
                _ => {
                    alias_map.insert(raw.clone(), target);
                }
            }
        }

        let mut nest_list = Vec::new();
        let mut nest_by_label: HashMap<usize, usize> = HashMap::new();
        let mut nest_names: HashMap<String, usize> = HashMap::new();
        for (name, members, total, line) in &nests {
            if !is_label_name(name) {
                return Err(err(*line, format!("invalid nest name `{name}`")));
            }
            if nest_names.insert(name.clone(), nest_list.len()).is_some() {
                return Err(err(*line, format!("duplicate nest `{name}`")));
            }
            let mut member_labels = Vec::new();
            let mut sum = 0u64;
            let mut all_counted = true;
            for m in members {
                let i = lookup(m, *line)?;
                if let Some(&other) = nest_by_label.get(&i) {
                    let other: &NestLabel = &nest_list[other];
                    return Err(err(
                        *line,
                        format!(
                            "overlapping nests: `{m}` is in both `{}` and `{name}`",
                            other.name
                        ),
                    ));
                }
                if member_labels.contains(&labels[i].label) {
                    return Err(err(*line, format!("`{m}` listed twice in nest `{name}`")));
                }
                nest_by_label.insert(i, nest_list.len());
                member_labels.push(labels[i].label.clone());
                match labels[i].frequency {
                    Some(f) => sum += f,
                    None => all_counted = false,
                }
            }
            let frequency = match total {
                Some(t) if all_counted && *t != sum => {
                    return Err(err(
                        *line,
                        format!("frequency mismatch: nest `{name}` declares {t}, members sum to {sum}"),
                    ));
                }
                Some(t) => *t,
                None => sum,
            };
            nest_list.push(NestLabel {
                name: name.clone(),
                members: member_labels,
                frequency,
            });
        }

        Ok(Taxonomy {
            labels,
            by_name,
            aliases: alias_map,
            nests: nest_list,
            nest_by_label,
        })
    }

    /// Maps an authored environment or heading name to its canonical label.
    /// Lookup is case-insensitive; unknown names yield `None`.
    pub fn canonicalize_env(&self, raw: &str) -> Option<&StatementLabel> {
        self.aliases
            .get(&fold_key(raw))
            .map(|&i| &self.labels[i].label)
    }

    /// Nest containing `label`, or `None` for labels dropped from the
    /// grouped task.
    pub fn nest_of(&self, label: &StatementLabel) -> Result<Option<&NestLabel>> {
        let i = *self
            .by_name
            .get(label.as_str())
            .ok_or_else(|| Error::UnknownLabel(label.0.clone()))?;
        Ok(self.nest_by_label.get(&i).map(|&n| &self.nests[n]))
    }

    /// Index of the nest containing `label` within [`Taxonomy::nests`].
    pub fn nest_index_of(&self, label: &StatementLabel) -> Result<Option<usize>> {
        let i = *self
            .by_name
            .get(label.as_str())
            .ok_or_else(|| Error::UnknownLabel(label.0.clone()))?;
        Ok(self.nest_by_label.get(&i).copied())
    }

    pub fn label(&self, name: &str) -> Option<&StatementLabel> {
        self.by_name.get(name).map(|&i| &self.labels[i].label)
    }

    pub fn label_index(&self, name: &str) -> Option<usize> {
        self.by_name.get(name).copied()
    }

    pub fn info(&self, label: &StatementLabel) -> Option<&LabelInfo> {
        self.by_name.get(label.as_str()).map(|&i| &self.labels[i])
    }

    pub fn labels(&self) -> impl Iterator<Item = &LabelInfo> {
        self.labels.iter()
    }

    pub fn label_count(&self) -> usize {
        self.labels.len()
    }

    pub fn nests(&self) -> &[NestLabel] {
        &self.nests
    }

    pub fn nest_index(&self, name: &str) -> Option<usize> {
        self.nests.iter().position(|n| n.name == name)
    }

    /// True if `label` may be matched from a section heading.
    pub fn is_heading_label(&self, label: &StatementLabel) -> bool {
        self.info(label).is_some_and(|i| i.from_heading)
    }

    /// Sum of all raw label frequencies.
    pub fn total_frequency(&self) -> u64 {
        self.labels.iter().filter_map(|l| l.frequency).sum()
    }

    /// Sum of nest frequencies.
    pub fn nest_frequency(&self) -> u64 {
        self.nests.iter().map(|n| n.frequency).sum()
    }

    /// Share of all labelled paragraphs kept by the nest grouping.
    pub fn retained_fraction(&self) -> f64 {
        let total = self.total_frequency();
        if total == 0 {
            return 0.0;
        }
        self.nest_frequency() as f64 / total as f64
    }

    /// Number of raw labels placed in some nest.
    pub fn in_task_label_count(&self) -> usize {
        self.nest_by_label.len()
    }

    /// Frequencies by label name, sorted.
    pub fn frequencies(&self) -> BTreeMap<&str, u64> {
        self.labels
            .iter()
            .filter_map(|l| l.frequency.map(|f| (l.label.as_str(), f)))
            .collect()
    }
}

fn by_name_contains(declared: &[(String, Vec<Origin>, usize)], name: &str, line: usize) -> bool {
    declared
        .iter()
        .any(|(n, _, l)| n == name && *l < line)
}

fn split_pair(line: &str, sep: char, line_no: usize) -> Result<(&str, &str)> {
    let (a, b) = line
        .split_once(sep)
        .ok_or_else(|| err(line_no, format!("expected `{sep}` in `{line}`")))?;
    let (a, b) = (a.trim(), b.trim());
    if a.is_empty() || b.is_empty() {
        return Err(err(line_no, format!("empty key or value in `{line}`")));
    }
    Ok((a, b))
}

fn parse_count(s: &str, line_no: usize) -> Result<u64> {
    s.replace('_', "")
        .parse::<u64>()
        .map_err(|_| err(line_no, format!("invalid count `{s}`")))
}
