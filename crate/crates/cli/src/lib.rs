//! Command-line front end and HTTP service for the `stmtclass` library.

use std::io::{BufRead, Read};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Map, Value};

use stmtclass::classify::{Model, ModelKind, TrainConfig, DEFAULT_HIDDEN};
use stmtclass::dataset::{self, Dataset};
use stmtclass::embed::{Vocabulary, DEFAULT_WINDOW};
use stmtclass::eval::{propose_nests, ConfusionMatrix, DEFAULT_NEST_THRESHOLD};
use stmtclass::normalize::MathMode;
use stmtclass::pipeline::{self, Classification, Target, TextClassifier};
use stmtclass::Taxonomy;

pub mod server;

#[derive(Debug, Parser)]
#[command(name = "stmtclass", version, about = "Statement classification toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum TargetArg {
    Nests,
    Raw,
}

impl From<TargetArg> for Target {
    fn from(t: TargetArg) -> Self {
        match t {
            TargetArg::Nests => Target::Nests,
            TargetArg::Raw => Target::Raw,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum KindArg {
    ZeroRule,
    LogregIndex,
    LogregEmbedded,
    Mlp,
}

impl From<KindArg> for ModelKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::ZeroRule => ModelKind::ZeroRule,
            KindArg::LogregIndex => ModelKind::LogRegIndex,
            KindArg::LogregEmbedded => ModelKind::LogRegEmbedded,
            KindArg::Mlp => ModelKind::Mlp,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a labelled dataset from a directory of scholarly HTML.
    Extract {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Taxonomy file; the bundled taxonomy when omitted.
        #[arg(long)]
        taxonomy: Option<PathBuf>,
        /// Delete all formula content before filtering.
        #[arg(long)]
        no_math: bool,
    },
    /// Word-count statistics of a dataset.
    Stats {
        #[arg(long)]
        dataset: PathBuf,
    },
    /// Hash-based train/test split.
    Split {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value_t = 0.8)]
        ratio: f64,
        /// Write train.txt and test.txt (into the dataset unless a directory
        /// is given).
        #[arg(long, num_args = 0..=1, default_missing_value = "")]
        emit_lists: Option<PathBuf>,
        /// Write index-sequence files for external trainers.
        #[arg(long, requires = "vectors")]
        export: Option<PathBuf>,
        #[arg(long)]
        vectors: Option<PathBuf>,
        #[arg(long)]
        taxonomy: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = TargetArg::Nests)]
        target: TargetArg,
        #[arg(long, default_value_t = DEFAULT_WINDOW)]
        window: usize,
    },
    /// Train a baseline on the train side of the split.
    Train {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        vectors: PathBuf,
        #[arg(long, value_enum)]
        kind: KindArg,
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        taxonomy: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = TargetArg::Nests)]
        target: TargetArg,
        #[arg(long, default_value_t = 0.8)]
        ratio: f64,
        /// `key = value` file with training settings; flags take precedence.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        window: Option<usize>,
        #[arg(long)]
        hidden: Option<usize>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        learning_rate: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Score a model on the test side of the split.
    Evaluate {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        vectors: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        taxonomy: Option<PathBuf>,
        #[arg(long, default_value_t = 0.8)]
        ratio: f64,
        /// Write the confusion matrix as CSV.
        #[arg(long)]
        confusion: Option<PathBuf>,
    },
    /// Propose nest groupings from a confusion matrix CSV.
    Nests {
        #[arg(long)]
        confusion: PathBuf,
        #[arg(long, default_value_t = DEFAULT_NEST_THRESHOLD)]
        threshold: f64,
    },
    /// Classify a plain-text paragraph.
    Classify {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        vectors: PathBuf,
        /// Text file, or `-` for standard input.
        #[arg(long)]
        text: PathBuf,
        /// Print the same JSON document the service returns.
        #[arg(long)]
        json: bool,
    },
    /// Serve classification over HTTP.
    Serve {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        vectors: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        bind: String,
    },
    /// Per-class report and optional heatmap from a confusion matrix CSV.
    Report {
        #[arg(long)]
        confusion: PathBuf,
        #[arg(long)]
        heatmap: Option<PathBuf>,
    },
    /// Print math lexemes for MathML formulas, one formula per line.
    Lexemize {
        /// Input file; standard input when omitted.
        #[arg(long)]
        input: Option<PathBuf>,
    },
}

/// JSON body shared by `classify --json` and the service.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Response {
    pub label: String,
    pub probs: Vec<f64>,
    pub tokens: usize,
}

impl From<Classification> for Response {
    fn from(c: Classification) -> Self {
        Response {
            label: c.label,
            probs: c.probs,
            tokens: c.tokens,
        }
    }
}

impl Response {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("response serializes")
    }

    pub fn to_text(&self, classes: &[String]) -> String {
        let mut s = format!("label: {}\n", self.label);
        for (c, p) in classes.iter().zip(&self.probs) {
            s.push_str(&format!("{c} {p:.6}\n"));
        }
        s.push_str(&format!("tokens: {}\n", self.tokens));
        s
    }
}

/// Output of one command: text for people and a summary object.
#[derive(Debug, Default)]
pub struct Outcome {
    pub text: String,
    pub summary: Map<String, Value>,
}

impl Outcome {
    fn new(command: &str) -> Self {
        let mut summary = Map::new();
        summary.insert("command".into(), json!(command));
        Outcome {
            text: String::new(),
            summary,
        }
    }

    fn set(&mut self, key: &str, value: impl Serialize) -> &mut Self {
        self.summary
            .insert(key.into(), serde_json::to_value(value).expect("serializable"));
        self
    }

    /// `SUMMARY {...}` line with the summary as compact JSON.
    pub fn summary_line(&self) -> String {
        format!("SUMMARY {}", Value::Object(self.summary.clone()))
    }
}

fn taxonomy(path: Option<&Path>) -> Result<Taxonomy> {
    match path {
        Some(p) => Taxonomy::load(p).with_context(|| format!("loading taxonomy {}", p.display())),
        None => Ok(Taxonomy::bundled()),
    }
}

fn vocabulary(path: &Path) -> Result<Vocabulary> {
    Vocabulary::load(path).with_context(|| format!("loading vectors {}", path.display()))
}

pub fn load_classifier(model: &Path, vectors: &Path) -> Result<TextClassifier> {
    let model = Model::load(model).with_context(|| format!("loading model {}", model.display()))?;
    Ok(TextClassifier::new(model, vocabulary(vectors)?)?)
}

fn read_input(path: Option<&Path>) -> Result<String> {
    match path {
        Some(p) if p != Path::new("-") => {
            std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))
        }
        _ => {
            let mut s = String::new();
            std::io::stdin().read_to_string(&mut s)?;
            Ok(s)
        }
    }
}

fn train_config(path: Option<&Path>) -> Result<(TrainConfig, Option<usize>, Option<usize>)> {
    let mut cfg = TrainConfig::default();
    let (mut window, mut hidden) = (None, None);
    let Some(path) = path else {
        return Ok((cfg, window, hidden));
    };
    let file = std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line?;
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            bail!("{}:{}: expected `key = value`", path.display(), i + 1);
        };
        let (k, v) = (k.trim(), v.trim());
        let ctx = || format!("{}:{}: bad value for `{k}`", path.display(), i + 1);
        match k {
            "learning_rate" => cfg.learning_rate = v.parse().with_context(ctx)?,
            "beta1" => cfg.beta1 = v.parse().with_context(ctx)?,
            "beta2" => cfg.beta2 = v.parse().with_context(ctx)?,
            "epsilon" => cfg.epsilon = v.parse().with_context(ctx)?,
            "batch_size" => cfg.batch_size = v.parse().with_context(ctx)?,
            "min_delta" => cfg.min_delta = v.parse().with_context(ctx)?,
            "patience" => cfg.patience = v.parse().with_context(ctx)?,
            "max_epochs" => cfg.max_epochs = v.parse().with_context(ctx)?,
            "seed" => cfg.seed = v.parse().with_context(ctx)?,
            "validation_fraction" => cfg.validation_fraction = v.parse().with_context(ctx)?,
            "class_weights" => {
                cfg.class_weights = Some(
                    v.split(',')
                        .map(|x| x.trim().parse::<f64>())
                        .collect::<Result<_, _>>()
                        .with_context(ctx)?,
                )
            }
            "window" => window = Some(v.parse().with_context(ctx)?),
            "hidden" => hidden = Some(v.parse().with_context(ctx)?),
            _ => bail!("{}:{}: unknown key `{k}`", path.display(), i + 1),
        }
    }
    Ok((cfg, window, hidden))
}

/// Runs one parsed command.
pub fn run(cli: Cli) -> Result<Outcome> {
    match cli.command {
        Command::Extract {
            input,
            output,
            taxonomy: tax,
            no_math,
        } => {
            let tax = taxonomy(tax.as_deref())?;
            let mode = if no_math { MathMode::Omit } else { MathMode::Keep };
            let m = dataset::extract_corpus(&input, &output, &tax, mode)?;
            let mut out = Outcome::new("extract");
            out.text = m.to_text();
            out.set("documents", m.documents)
                .set("paragraphs", m.paragraphs())
                .set("skipped", m.skips.total())
                .set("collisions", m.collisions.len())
                .set("mode", mode.as_str());
            Ok(out)
        }
        Command::Stats { dataset: root } => {
            let ds = Dataset::open(&root)?;
            let stats = dataset::compute_stats(&ds)?;
            let mut out = Outcome::new("stats");
            let manifest = ds.manifest.as_ref().expect("opened with manifest");
            out.text = manifest.to_text();
            out.set("paragraphs", stats.paragraphs)
                .set("mean_words", round6(stats.mean_words))
                .set("median_words", round6(stats.median_words))
                .set("coverage_480", round6(stats.coverage_480))
                .set("matches_manifest", manifest.stats.as_ref().is_some_and(|s| same_stats(s, &stats)));
            Ok(out)
        }
        Command::Split {
            dataset: root,
            ratio,
            emit_lists,
            export,
            vectors,
            taxonomy: tax,
            target,
            window,
        } => {
            let ds = Dataset::open(&root)?;
            let split = dataset::split_train_test(&ds, ratio)?;
            let mut out = Outcome::new("split");
            if let Some(dir) = emit_lists {
                let dir = if dir.as_os_str().is_empty() { root.clone() } else { dir };
                dataset::emit_lists(&ds, &split, &dir)?;
                out.set("lists", dir.display().to_string());
            }
            if let Some(dir) = export {
                let tax = taxonomy(tax.as_deref())?;
                let vocab = vocabulary(vectors.as_deref().expect("clap requires vectors"))?;
                let classes = pipeline::class_names(&tax, target.into());
                pipeline::export_sequences(&ds, &split, &tax, &classes, &vocab, window, &dir)?;
                out.set("export", dir.display().to_string());
            }
            out.text = format!("train {}\ntest {}\n", split.train.len(), split.test.len());
            out.set("train", split.train.len())
                .set("test", split.test.len())
                .set("ratio", ratio);
            Ok(out)
        }
        Command::Train {
            dataset: root,
            vectors,
            kind,
            output,
            taxonomy: tax,
            target,
            ratio,
            config,
            window,
            hidden,
            epochs,
            batch_size,
            learning_rate,
            seed,
        } => {
            let (mut cfg, cfg_window, cfg_hidden) = train_config(config.as_deref())?;
            if let Some(e) = epochs {
                cfg.max_epochs = e;
            }
            if let Some(b) = batch_size {
                cfg.batch_size = b;
            }
            if let Some(lr) = learning_rate {
                cfg.learning_rate = lr;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let window = window.or(cfg_window).unwrap_or(DEFAULT_WINDOW);
            let hidden = hidden.or(cfg_hidden).unwrap_or(DEFAULT_HIDDEN);
            let tax = taxonomy(tax.as_deref())?;
            let vocab = vocabulary(&vectors)?;
            let ds = Dataset::open(&root)?;
            let split = dataset::split_train_test(&ds, ratio)?;
            let classes = pipeline::class_names(&tax, target.into());
            let ex = pipeline::load_examples(&ds, &split.train, &tax, &classes, &vocab, window)?;
            let kind: ModelKind = kind.into();
            let (model, history) =
                pipeline::train_model(kind, classes, &ex, &vocab, window, hidden, &cfg)?;
            model.save(&output)?;
            let mut out = Outcome::new("train");
            for e in &history.epochs {
                out.text.push_str(&format!(
                    "epoch {} train_loss {:.6} val_loss {:.6}\n",
                    e.epoch, e.train_loss, e.val_loss
                ));
            }
            out.set("kind", kind.as_str())
                .set("examples", ex.labels.len())
                .set("epochs", history.epochs.len())
                .set("best_epoch", history.best_epoch)
                .set("stopped_early", history.stopped_early)
                .set("model", output.display().to_string());
            Ok(out)
        }
        Command::Evaluate {
            dataset: root,
            vectors,
            model,
            taxonomy: tax,
            ratio,
            confusion,
        } => {
            let tax = taxonomy(tax.as_deref())?;
            let vocab = vocabulary(&vectors)?;
            let model = Model::load(&model)?;
            let ds = Dataset::open(&root)?;
            let split = dataset::split_train_test(&ds, ratio)?;
            let ex = pipeline::load_examples(&ds, &split.test, &tax, &model.classes, &vocab, model.window)?;
            if ex.labels.is_empty() {
                bail!("no test paragraphs map to the model's classes");
            }
            let cm = pipeline::evaluate_model(&model, &ex, &vocab)?;
            if let Some(path) = confusion {
                std::fs::write(&path, cm.to_csv())
                    .with_context(|| format!("writing {}", path.display()))?;
            }
            let mut out = Outcome::new("evaluate");
            out.text = cm.report();
            out.set("kind", model.kind.as_str())
                .set("samples", cm.total())
                .set("micro_f1", round6(cm.micro_f1()))
                .set("macro_f1", round6(cm.macro_f1()));
            Ok(out)
        }
        Command::Nests {
            confusion,
            threshold,
        } => {
            let cm = read_confusion(&confusion)?;
            let proposal = propose_nests(&cm.row_normalize(), threshold);
            let mut out = Outcome::new("nests");
            for m in &proposal.trace {
                out.text.push_str(&format!(
                    "merge {} {} {:.6}\n",
                    cm.names[m.left], cm.names[m.right], m.mass
                ));
            }
            let groups: Vec<Vec<&str>> = proposal
                .groups
                .iter()
                .map(|g| g.iter().map(|&i| cm.names[i].as_str()).collect())
                .collect();
            for g in &groups {
                out.text.push_str(&format!("group {}\n", g.join(" ")));
            }
            out.set("groups", groups.len())
                .set("merges", proposal.trace.len())
                .set("threshold", threshold);
            Ok(out)
        }
        Command::Classify {
            model,
            vectors,
            text,
            json,
        } => {
            let classifier = load_classifier(&model, &vectors)?;
            let input = read_input(Some(&text))?;
            let response = Response::from(classifier.classify_text(&input)?);
            let mut out = Outcome::new("classify");
            out.text = if json {
                format!("{}\n", response.to_json())
            } else {
                response.to_text(classifier.classes())
            };
            out.set("label", &response.label).set("tokens", response.tokens);
            Ok(out)
        }
        Command::Serve {
            model,
            vectors,
            port,
            bind,
        } => {
            let classifier = load_classifier(&model, &vectors)?;
            server::serve(classifier, &bind, port)?;
            Ok(Outcome::new("serve"))
        }
        Command::Report { confusion, heatmap } => {
            let cm = read_confusion(&confusion)?;
            let mut out = Outcome::new("report");
            out.text = cm.report();
            if let Some(path) = heatmap {
                std::fs::write(&path, cm.heatmap_svg())
                    .with_context(|| format!("writing {}", path.display()))?;
                out.set("heatmap", path.display().to_string());
            }
            out.set("classes", cm.len())
                .set("samples", cm.total())
                .set("micro_f1", round6(cm.micro_f1()));
            Ok(out)
        }
        Command::Lexemize { input } => {
            let text = read_input(input.as_deref())?;
            let mut out = Outcome::new("lexemize");
            let (mut ok, mut failed) = (0usize, 0usize);
            for line in text.lines().filter(|l| !l.trim().is_empty()) {
                match stmtclass::math::lexemize_markup(line) {
                    Ok(lx) => {
                        ok += 1;
                        out.text.push_str(&lx.join(" "));
                        out.text.push('\n');
                    }
                    Err(e) => {
                        failed += 1;
                        log::warn!("{e}");
                        out.text.push('\n');
                    }
                }
            }
            out.set("formulas", ok).set("failed", failed);
            Ok(out)
        }
    }
}

fn read_confusion(path: &Path) -> Result<ConfusionMatrix> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(ConfusionMatrix::parse_csv(&text)?)
}

fn round6(x: f64) -> f64 {
    (x * 1e6).round() / 1e6
}

fn same_stats(a: &dataset::Stats, b: &dataset::Stats) -> bool {
    let f = |x: f64| format!("{x:.6}");
    f(a.mean_words) == f(b.mean_words)
        && f(a.median_words) == f(b.median_words)
        && f(a.coverage_480) == f(b.coverage_480)
}
