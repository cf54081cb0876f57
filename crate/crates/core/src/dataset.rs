//! On-disk labelled dataset: one paragraph per file under
//! `<root>/<label>/<sha256>.txt`, plus a line-oriented `MANIFEST`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::ingest::{self, SkipReason, SkipStats};
use crate::lang::LanguageDetector;
use crate::math::Lexer;
use crate::normalize::{self, DocContext, DropReason, MathMode, NormalizedParagraph};
use crate::taxonomy::{StatementLabel, Taxonomy};

pub const MANIFEST_FILE: &str = "MANIFEST";
pub const MANIFEST_FORMAT: &str = "stmtclass-dataset 1";
/// Paragraph length the classifiers look at.
pub const WINDOW: usize = 480;
const SPLIT_SEED: &str = "sha256-first-byte";
const DOC_EXTENSIONS: &[&str] = &["html", "htm", "xhtml"];

pub fn content_hash(serialized: &str) -> String {
    hex::encode(Sha256::digest(serialized.as_bytes()))
}

/// Labels sharing one paragraph hash.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Collision {
    pub hash: String,
    pub labels: Vec<String>,
}

/// Writes paragraphs into a dataset tree, deduplicating within a label and
/// tracking cross-label duplicates.
pub struct DatasetWriter {
    root: PathBuf,
    by_hash: BTreeMap<String, BTreeSet<String>>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Written {
    pub path: PathBuf,
    /// False if the same paragraph already existed under this label.
    pub created: bool,
}

impl DatasetWriter {
    /// Opens `root` for writing, indexing any paragraphs already present.
    pub fn create(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;
        let mut by_hash: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for (label, hash, _) in scan_tree(&root)? {
            by_hash.entry(hash).or_default().insert(label);
        }
        Ok(DatasetWriter { root, by_hash })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write(&mut self, para: &NormalizedParagraph, label: &StatementLabel) -> Result<Written> {
        let written = write_paragraph(para, label, &self.root)?;
        let hash = file_hash(&written.path);
        self.by_hash
            .entry(hash)
            .or_default()
            .insert(label.as_str().to_string());
        Ok(written)
    }

    pub fn collisions(&self) -> Vec<Collision> {
        self.by_hash
            .iter()
            .filter(|(_, labels)| labels.len() > 1)
            .map(|(hash, labels)| Collision {
                hash: hash.clone(),
                labels: labels.iter().cloned().collect(),
            })
            .collect()
    }
}

fn file_hash(path: &Path) -> String {
    path.file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or_default()
        .to_string()
}

/// Writes one paragraph at `<root>/<label>/<sha256>.txt`. An identical file
/// already present is left untouched.
pub fn write_paragraph(
    para: &NormalizedParagraph,
    label: &StatementLabel,
    root: &Path,
) -> Result<Written> {
    let text = para.serialize();
    let dir = root.join(label.as_str());
    let path = dir.join(format!("{}.txt", content_hash(&text)));
    if path.exists() {
        return Ok(Written {
            path,
            created: false,
        });
    }
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    fs::write(&path, text.as_bytes()).map_err(|e| Error::io(&path, e))?;
    Ok(Written {
        path,
        created: true,
    })
}

fn scan_tree(root: &Path) -> Result<Vec<(String, String, PathBuf)>> {
    let mut out = Vec::new();
    let mut dirs: Vec<_> = fs::read_dir(root)
        .map_err(|e| Error::io(root, e))?
        .filter_map(|e| e.ok())
        .filter(|e| e.file_type().map(|t| t.is_dir()).unwrap_or(false))
        .collect();
    dirs.sort_by_key(|e| e.file_name());
    for dir in dirs {
        let Some(label) = dir.file_name().to_str().map(str::to_string) else {
            continue;
        };
        let mut files: Vec<_> = fs::read_dir(dir.path())
            .map_err(|e| Error::io(dir.path(), e))?
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| is_paragraph_file(p))
            .collect();
        files.sort();
        for path in files {
            out.push((label.clone(), file_hash(&path), path));
        }
    }
    Ok(out)
}

fn is_paragraph_file(p: &Path) -> bool {
    p.extension().is_some_and(|e| e == "txt")
        && p.file_stem()
            .and_then(|s| s.to_str())
            .is_some_and(|s| s.len() == 64 && s.bytes().all(|b| b.is_ascii_hexdigit()))
}

/// Word-count statistics of a dataset.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Stats {
    pub paragraphs: usize,
    pub mean_words: f64,
    pub median_words: f64,
    /// Fraction of paragraphs no longer than [`WINDOW`] tokens.
    pub coverage_480: f64,
}

impl Stats {
    pub fn from_counts(counts: &[usize]) -> Result<Stats> {
        if counts.is_empty() {
            return Err(Error::Empty("dataset"));
        }
        let mut sorted = counts.to_vec();
        sorted.sort_unstable();
        let n = sorted.len();
        let median = if n % 2 == 1 {
            sorted[n / 2] as f64
        } else {
            (sorted[n / 2 - 1] + sorted[n / 2]) as f64 / 2.0
        };
        let sum: usize = sorted.iter().sum();
        let covered = sorted.iter().filter(|&&c| c <= WINDOW).count();
        Ok(Stats {
            paragraphs: n,
            mean_words: sum as f64 / n as f64,
            median_words: median,
            coverage_480: covered as f64 / n as f64,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabelCount {
    pub label: String,
    pub count: usize,
    pub directory: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetManifest {
    pub labels: Vec<LabelCount>,
    pub split_seed: String,
    pub mode: MathMode,
    pub documents: usize,
    pub stats: Option<Stats>,
    pub skips: SkipStats,
    pub collisions: Vec<Collision>,
}

impl DatasetManifest {
    pub fn paragraphs(&self) -> usize {
        self.labels.iter().map(|l| l.count).sum()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "format = {MANIFEST_FORMAT}");
        let _ = writeln!(s, "mode = {}", self.mode.as_str());
        let _ = writeln!(s, "split_seed = {}", self.split_seed);
        let _ = writeln!(s, "documents = {}", self.documents);
        let _ = writeln!(s, "paragraphs = {}", self.paragraphs());
        for l in &self.labels {
            let _ = writeln!(s, "label = {} {} {}", l.label, l.count, l.directory);
        }
        if let Some(st) = &self.stats {
            let _ = writeln!(s, "stats.mean_words = {:.6}", st.mean_words);
            let _ = writeln!(s, "stats.median_words = {:.6}", st.median_words);
            let _ = writeln!(s, "stats.coverage_480 = {:.6}", st.coverage_480);
        }
        for (reason, count) in &self.skips.0 {
            let _ = writeln!(s, "skip.{} = {}", reason.as_str(), count);
        }
        for c in &self.collisions {
            let _ = writeln!(s, "collision = {} {}", c.hash, c.labels.join(","));
        }
        s
    }

    pub fn parse(text: &str) -> Result<DatasetManifest> {
        let err = |line: usize, message: String| Error::Manifest { line, message };
        let mut m = DatasetManifest {
            labels: Vec::new(),
            split_seed: String::new(),
            mode: MathMode::Keep,
            documents: 0,
            stats: None,
            skips: SkipStats::default(),
            collisions: Vec::new(),
        };
        let mut stats = [None::<f64>; 3];
        let mut paragraphs = None;
        let mut format_seen = false;
        for (i, line) in text.lines().enumerate() {
            let n = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once(" = ")
                .ok_or_else(|| err(n, "expected `key = value`".into()))?;
            let num = |v: &str| -> Result<usize> {
                v.parse().map_err(|_| err(n, format!("bad count `{v}`")))
            };
            let real = |v: &str| -> Result<f64> {
                v.parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| err(n, format!("bad number `{v}`")))
            };
            match key {
                "format" => {
                    if value != MANIFEST_FORMAT {
                        return Err(err(n, format!("unsupported format `{value}`")));
                    }
                    format_seen = true;
                }
                "mode" => {
                    m.mode = match value {
                        "with-math" => MathMode::Keep,
                        "no-math" => MathMode::Omit,
                        _ => return Err(err(n, format!("bad mode `{value}`"))),
                    }
                }
                "split_seed" => m.split_seed = value.to_string(),
                "documents" => m.documents = num(value)?,
                "paragraphs" => paragraphs = Some(num(value)?),
                "label" => {
                    let parts: Vec<&str> = value.split(' ').collect();
                    let [label, count, dir] = parts[..] else {
                        return Err(err(n, "label needs name, count and directory".into()));
                    };
                    m.labels.push(LabelCount {
                        label: label.to_string(),
                        count: num(count)?,
                        directory: dir.to_string(),
                    });
                }
                "stats.mean_words" => stats[0] = Some(real(value)?),
                "stats.median_words" => stats[1] = Some(real(value)?),
                "stats.coverage_480" => stats[2] = Some(real(value)?),
                "collision" => {
                    let (hash, labels) = value
                        .split_once(' ')
                        .ok_or_else(|| err(n, "collision needs hash and labels".into()))?;
                    m.collisions.push(Collision {
                        hash: hash.to_string(),
                        labels: labels.split(',').map(str::to_string).collect(),
                    });
                }
                k if k.starts_with("skip.") => {
                    let name = &k[5..];
                    let reason = SKIP_REASONS
                        .iter()
                        .find(|r| r.as_str() == name)
                        .ok_or_else(|| err(n, format!("unknown skip reason `{name}`")))?;
                    m.skips.0.insert(*reason, num(value)?);
                }
                _ => return Err(err(n, format!("unknown key `{key}`"))),
            }
        }
        if !format_seen {
            return Err(err(0, "missing format line".into()));
        }
        m.stats = match stats {
            [Some(mean), Some(median), Some(cov)] => {
                if !(0.0..=1.0).contains(&cov) {
                    return Err(err(0, "coverage outside [0, 1]".into()));
                }
                Some(Stats {
                    paragraphs: m.paragraphs(),
                    mean_words: mean,
                    median_words: median,
                    coverage_480: cov,
                })
            }
            [None, None, None] => None,
            _ => return Err(err(0, "incomplete stats".into())),
        };
        if paragraphs.is_some_and(|p| p != m.paragraphs()) {
            return Err(err(0, "paragraph total disagrees with label counts".into()));
        }
        Ok(m)
    }

    pub fn load(root: &Path) -> Result<DatasetManifest> {
        let path = root.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Self::parse(&text)
    }

    pub fn store(&self, root: &Path) -> Result<()> {
        let path = root.join(MANIFEST_FILE);
        fs::write(&path, self.to_text()).map_err(|e| Error::io(&path, e))
    }
}

const SKIP_REASONS: &[SkipReason] = &[
    SkipReason::ParseError,
    SkipReason::UnknownEnvironment,
    SkipReason::EmptyStatement,
    SkipReason::ErrorMarkup,
    SkipReason::LongWord,
    SkipReason::NonEnglish,
    SkipReason::EmptyAfterNormalization,
    SkipReason::Duplicate,
];

/// One input document, either a loose file or an archive member.
#[derive(Clone, Debug)]
pub struct SourceDoc {
    pub id: String,
    pub bytes: Vec<u8>,
}

fn is_doc_name(name: &str) -> bool {
    Path::new(name)
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| DOC_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
}

/// Collects documents under `input` in a stable order. Zip archives are
/// opened and their HTML members included.
pub fn collect_documents(input: &Path) -> Result<Vec<SourceDoc>> {
    let mut docs = Vec::new();
    for entry in walkdir::WalkDir::new(input).sort_by_file_name() {
        let entry = entry.map_err(|e| Error::Io {
            path: e.path().map(Path::to_path_buf).unwrap_or_else(|| input.to_path_buf()),
            source: e.into(),
        })?;
        if !entry.file_type().is_file() {
            continue;
        }
        let path = entry.path();
        let rel = path
            .strip_prefix(input)
            .unwrap_or(path)
            .to_string_lossy()
            .replace('\\', "/");
        let name = path.to_string_lossy();
        if is_doc_name(&name) {
            let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
            docs.push(SourceDoc { id: rel, bytes });
        } else if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("zip")) {
            read_archive(path, &rel, &mut docs)?;
        }
    }
    Ok(docs)
}

fn read_archive(path: &Path, rel: &str, docs: &mut Vec<SourceDoc>) -> Result<()> {
    let archive_err = |message: String| Error::Archive {
        path: path.to_path_buf(),
        message,
    };
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut zip = zip::ZipArchive::new(file).map_err(|e| archive_err(e.to_string()))?;
    let mut names: Vec<String> = zip
        .file_names()
        .filter(|n| is_doc_name(n))
        .map(str::to_string)
        .collect();
    names.sort();
    for name in names {
        let mut member = zip.by_name(&name).map_err(|e| archive_err(e.to_string()))?;
        let mut bytes = Vec::new();
        member
            .read_to_end(&mut bytes)
            .map_err(|e| archive_err(format!("{name}: {e}")))?;
        docs.push(SourceDoc {
            id: format!("{rel}/{name}"),
            bytes,
        });
    }
    Ok(())
}

/// Kept paragraphs of one document, in document order.
#[derive(Debug, Default)]
pub struct DocOutcome {
    pub kept: Vec<(StatementLabel, NormalizedParagraph)>,
    pub skips: SkipStats,
}

/// Runs ingest, normalization and filtering on one document.
pub fn process_document(
    doc: &SourceDoc,
    taxonomy: &Taxonomy,
    mode: MathMode,
    detector: &LanguageDetector,
) -> DocOutcome {
    let mut out = DocOutcome::default();
    let parsed = match ingest::parse_document(doc.id.clone(), &doc.bytes) {
        Ok(d) => d,
        Err(e) => {
            log::warn!("{}: {e}", doc.id);
            out.skips.bump(SkipReason::ParseError);
            return out;
        }
    };
    let doc_language = detector.detect_text(&ingest::document_text(&parsed));
    let lexer = Lexer::new();
    for stmt in ingest::extract_statements(&parsed, taxonomy, &mut out.skips) {
        let para = normalize::normalize_with(&stmt, mode, &lexer);
        let ctx = DocContext {
            error_markup: stmt.error_markup,
            doc_language,
        };
        match normalize::quality_filter(&para, &ctx, detector) {
            Ok(()) => out.kept.push((stmt.label, para)),
            Err(reason) => out.skips.bump(match reason {
                DropReason::ErrorMarkup => SkipReason::ErrorMarkup,
                DropReason::LongWord => SkipReason::LongWord,
                DropReason::NonEnglish => SkipReason::NonEnglish,
                DropReason::Empty => SkipReason::EmptyAfterNormalization,
            }),
        }
    }
    if lexer.warnings() > 0 {
        log::debug!("{}: {} math lexer warnings", doc.id, lexer.warnings());
    }
    out
}

/// Builds a dataset at `output` from every document under `input`.
/// Documents are processed in parallel; files and manifest are written by a
/// single ordered reduction, so reruns produce an identical tree.
pub fn extract_corpus(
    input: &Path,
    output: &Path,
    taxonomy: &Taxonomy,
    mode: MathMode,
) -> Result<DatasetManifest> {
    let docs = collect_documents(input)?;
    if docs.is_empty() {
        log::warn!("no documents under {}", input.display());
    }
    let detector = LanguageDetector::bundled();
    let outcomes: Vec<DocOutcome> = docs
        .par_iter()
        .map(|d| process_document(d, taxonomy, mode, detector))
        .collect();

    let mut writer = DatasetWriter::create(output)?;
    let mut skips = SkipStats::default();
    for outcome in &outcomes {
        skips.merge(&outcome.skips);
        for (label, para) in &outcome.kept {
            if !writer.write(para, label)?.created {
                skips.bump(SkipReason::Duplicate);
            }
        }
    }
    let dataset = Dataset::open_tree(output)?;
    let manifest = DatasetManifest {
        labels: dataset.label_counts(),
        split_seed: SPLIT_SEED.to_string(),
        mode,
        documents: docs.len(),
        stats: compute_stats(&dataset).ok(),
        skips,
        collisions: writer.collisions(),
    };
    if manifest.stats.is_none() {
        log::warn!("dataset at {} is empty", output.display());
    }
    manifest.store(output)?;
    Ok(manifest)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Entry {
    pub label: String,
    pub hash: String,
    pub path: PathBuf,
    pub word_count: usize,
}

impl Entry {
    pub fn read(&self) -> Result<NormalizedParagraph> {
        let text = fs::read_to_string(&self.path).map_err(|e| Error::io(&self.path, e))?;
        Ok(normalize::renormalize(&text))
    }

    /// First byte of the content hash.
    pub fn hash_byte(&self) -> u8 {
        u8::from_str_radix(self.hash.get(..2).unwrap_or("00"), 16).unwrap_or(0)
    }
}

/// A dataset tree on disk, entries ordered by label then hash.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub root: PathBuf,
    pub entries: Vec<Entry>,
    pub manifest: Option<DatasetManifest>,
}

impl Dataset {
    /// Opens a dataset and checks its manifest against the files on disk.
    pub fn open(root: &Path) -> Result<Dataset> {
        let mut ds = Self::open_tree(root)?;
        let manifest = DatasetManifest::load(root)?;
        let on_disk = ds.label_counts();
        if manifest.labels != on_disk {
            return Err(Error::Manifest {
                line: 0,
                message: "label counts disagree with files on disk".into(),
            });
        }
        ds.manifest = Some(manifest);
        Ok(ds)
    }

    /// Opens the tree without requiring a manifest.
    pub fn open_tree(root: &Path) -> Result<Dataset> {
        let mut entries = Vec::new();
        for (label, hash, path) in scan_tree(root)? {
            let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            entries.push(Entry {
                label,
                hash,
                word_count: text.split_whitespace().count(),
                path,
            });
        }
        Ok(Dataset {
            root: root.to_path_buf(),
            entries,
            manifest: None,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn label_counts(&self) -> Vec<LabelCount> {
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for e in &self.entries {
            *counts.entry(&e.label).or_default() += 1;
        }
        counts
            .into_iter()
            .map(|(label, count)| LabelCount {
                label: label.to_string(),
                count,
                directory: label.to_string(),
            })
            .collect()
    }
}

pub fn compute_stats(dataset: &Dataset) -> Result<Stats> {
    let counts: Vec<usize> = dataset.entries.iter().map(|e| e.word_count).collect();
    Stats::from_counts(&counts)
}

/// Number of leading hash-byte values assigned to train.
pub fn train_cutoff(ratio: f64) -> Result<u16> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(Error::Argument(format!("split ratio {ratio} outside (0, 1]")));
    }
    Ok((256.0 * ratio).round() as u16)
}

/// True if a file with this leading hash byte belongs to train.
pub fn is_train(hash_byte: u8, cutoff: u16) -> bool {
    u16::from(hash_byte) < cutoff
}

/// Entry indices of each side of the split.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

pub fn split_train_test(dataset: &Dataset, ratio: f64) -> Result<Split> {
    let cutoff = train_cutoff(ratio)?;
    let (train, test) = (0..dataset.entries.len())
        .partition(|&i| is_train(dataset.entries[i].hash_byte(), cutoff));
    Ok(Split { train, test })
}

/// Writes `train.txt` and `test.txt` listing `<label>/<hash>.txt` paths.
pub fn emit_lists(dataset: &Dataset, split: &Split, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (name, ids) in [("train.txt", &split.train), ("test.txt", &split.test)] {
        let mut s = String::new();
        for &i in ids {
            let e = &dataset.entries[i];
            let _ = writeln!(s, "{}/{}.txt", e.label, e.hash);
        }
        let path = dir.join(name);
        fs::write(&path, s).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

/// Dataset entries seen through the nest grouping.
#[derive(Clone, Debug, PartialEq)]
pub struct NestView {
    /// (entry index, nest index) for every entry of an in-task label.
    pub items: Vec<(usize, usize)>,
    pub nest_counts: Vec<usize>,
    pub dropped: usize,
    pub retained_fraction: f64,
}

pub fn regroup_to_nests(dataset: &Dataset, taxonomy: &Taxonomy) -> Result<NestView> {
    let mut items = Vec::new();
    let mut nest_counts = vec![0; taxonomy.nests().len()];
    let mut dropped = 0;
    for (i, e) in dataset.entries.iter().enumerate() {
        let label = taxonomy
            .label(&e.label)
            .ok_or_else(|| Error::UnknownLabel(e.label.clone()))?;
        match taxonomy.nest_index_of(label)? {
            Some(n) => {
                items.push((i, n));
                nest_counts[n] += 1;
            }
            None => dropped += 1,
        }
    }
    if items.is_empty() {
        log::warn!("no paragraphs of in-task labels in {}", dataset.root.display());
    }
    let retained_fraction = if dataset.is_empty() {
        0.0
    } else {
        items.len() as f64 / dataset.len() as f64
    };
    Ok(NestView {
        items,
        nest_counts,
        dropped,
        retained_fraction,
    })
}
