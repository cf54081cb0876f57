//! Glue between the dataset tree, the vocabulary and the classifiers, and
//! the single text-classification path shared by the CLI and the service.

use crate::classify::{
    self, argmax, fit, zero_rule, Body, Features, History, Inputs, Model, ModelKind, TrainConfig,
};
use crate::dataset::Dataset;
use crate::embed::{index_paragraph, IndexedParagraph, Vocabulary};
use crate::error::{Error, Result};
use crate::eval::{confusion, ConfusionMatrix};
use crate::normalize::{normalize_text, NormalizedParagraph};
use crate::taxonomy::Taxonomy;

/// Which label set a model predicts.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Target {
    /// The nest classes; paragraphs of labels outside every nest are left
    /// out.
    Nests,
    /// Every raw label of the taxonomy.
    Raw,
}

pub fn class_names(taxonomy: &Taxonomy, target: Target) -> Vec<String> {
    match target {
        Target::Nests => taxonomy.nests().iter().map(|n| n.name.clone()).collect(),
        Target::Raw => taxonomy
            .labels()
            .map(|l| l.label.as_str().to_string())
            .collect(),
    }
}

/// Class index of a raw label under `classes`: the label itself if it is a
/// class, otherwise its nest.
pub fn class_of(taxonomy: &Taxonomy, classes: &[String], label: &str) -> Result<Option<usize>> {
    if let Some(i) = classes.iter().position(|c| c == label) {
        return Ok(Some(i));
    }
    let label = taxonomy
        .label(label)
        .ok_or_else(|| Error::UnknownLabel(label.to_string()))?;
    Ok(taxonomy
        .nest_of(label)?
        .and_then(|n| classes.iter().position(|c| *c == n.name)))
}

/// Indexed paragraphs with their class labels.
#[derive(Clone, Debug, Default)]
pub struct Examples {
    pub paragraphs: Vec<IndexedParagraph>,
    pub labels: Vec<usize>,
}

/// Reads the given dataset entries, keeping those that map to a class.
pub fn load_examples(
    dataset: &Dataset,
    ids: &[usize],
    taxonomy: &Taxonomy,
    classes: &[String],
    vocab: &Vocabulary,
    window: usize,
) -> Result<Examples> {
    let mut out = Examples::default();
    for &i in ids {
        let entry = &dataset.entries[i];
        let Some(class) = class_of(taxonomy, classes, &entry.label)? else {
            continue;
        };
        let para = entry.read()?;
        out.paragraphs.push(index_paragraph(&para, vocab, window));
        out.labels.push(class);
    }
    Ok(out)
}

/// Trains one model kind on the examples.
pub fn train_model(
    kind: ModelKind,
    classes: Vec<String>,
    examples: &Examples,
    vocab: &Vocabulary,
    window: usize,
    hidden: usize,
    config: &TrainConfig,
) -> Result<(Model, History)> {
    let emb_dim = if kind == ModelKind::LogRegIndex || kind == ModelKind::ZeroRule {
        0
    } else {
        vocab.dim()
    };
    let (body, history) = if kind == ModelKind::ZeroRule {
        let c = zero_rule(&examples.labels, classes.len())?;
        (Body::Constant(c), History::default())
    } else {
        let inputs = Inputs::from_indexed(kind, &examples.paragraphs, vocab, window);
        let hidden = (kind == ModelKind::Mlp).then_some(hidden);
        let (net, history) = fit(&inputs, &examples.labels, hidden, classes.len(), config)?;
        (Body::Network(net), history)
    };
    Ok((
        Model {
            kind,
            classes,
            window,
            emb_dim,
            vocab_size: vocab.len(),
            body,
        },
        history,
    ))
}

/// Scores a model on the examples.
pub fn evaluate_model(model: &Model, examples: &Examples, vocab: &Vocabulary) -> Result<ConfusionMatrix> {
    check_vocab(model, vocab)?;
    let inputs = Inputs::from_indexed(model.kind, &examples.paragraphs, vocab, model.window);
    let predicted: Vec<usize> = model
        .predict_all(&inputs)?
        .iter()
        .map(|p| argmax(p))
        .collect();
    confusion(&examples.labels, &predicted, &model.classes)
}

fn check_vocab(model: &Model, vocab: &Vocabulary) -> Result<()> {
    if model.kind == ModelKind::ZeroRule {
        return Ok(());
    }
    if vocab.len() != model.vocab_size {
        return Err(Error::Argument(format!(
            "model expects a vocabulary of {} tokens, vectors have {}",
            model.vocab_size,
            vocab.len()
        )));
    }
    if model.kind.uses_embeddings() && vocab.dim() != model.emb_dim {
        return Err(Error::Shape {
            expected: model.emb_dim,
            actual: vocab.dim(),
        });
    }
    Ok(())
}

/// Description written next to an export.
pub const EXPORT_SCHEMA: &str = "\
format = stmtclass-export 1
labels.txt = one class name per line; line n (from 0) is class n
vocab.txt = one token per line; line n (from 1) is vocabulary index n, index 0 is padding
train.idx, test.idx = one paragraph per line: class index, a tab, then space-separated vocabulary indices in paragraph order with out-of-vocabulary tokens removed, at most `window` of them
";

/// Writes index sequences of both sides of a split for external trainers.
pub fn export_sequences(
    dataset: &Dataset,
    split: &crate::dataset::Split,
    taxonomy: &Taxonomy,
    classes: &[String],
    vocab: &Vocabulary,
    window: usize,
    dir: &std::path::Path,
) -> Result<()> {
    use std::fmt::Write as _;
    let write = |name: &str, text: String| {
        let path = dir.join(name);
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
    };
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write("labels.txt", classes.iter().map(|c| format!("{c}\n")).collect())?;
    write("vocab.txt", vocab.tokens().map(|t| format!("{t}\n")).collect())?;
    for (name, ids) in [("train.idx", &split.train), ("test.idx", &split.test)] {
        let ex = load_examples(dataset, ids, taxonomy, classes, vocab, window)?;
        let mut s = String::new();
        for (p, y) in ex.paragraphs.iter().zip(&ex.labels) {
            let seq: Vec<String> = p.tokens().iter().map(u32::to_string).collect();
            let _ = writeln!(s, "{y}\t{}", seq.join(" "));
        }
        write(name, s)?;
    }
    write("schema.txt", format!("{EXPORT_SCHEMA}window = {window}\n"))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Classification {
    pub label: String,
    pub probs: Vec<f64>,
    /// In-vocabulary tokens that reached the model.
    pub tokens: usize,
}

/// A loaded model and vocabulary, read-only and shareable across threads.
pub struct TextClassifier {
    model: Model,
    vocab: Vocabulary,
}

impl TextClassifier {
    pub fn new(model: Model, vocab: Vocabulary) -> Result<Self> {
        check_vocab(&model, &vocab)?;
        Ok(TextClassifier { model, vocab })
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn classes(&self) -> &[String] {
        &self.model.classes
    }

    /// Classifies free text; formulas are not parsed on this path.
    pub fn classify_text(&self, text: &str) -> Result<Classification> {
        self.classify_paragraph(&normalize_text(text))
    }

    pub fn classify_paragraph(&self, para: &NormalizedParagraph) -> Result<Classification> {
        let window = self.model.window;
        let indexed = index_paragraph(para, &self.vocab, window);
        let dense;
        let features = if self.model.kind.uses_embeddings() {
            Features::Tokens {
                indices: indexed.tokens(),
                vocab: &self.vocab,
                window,
            }
        } else {
            dense = classify::index_features(&indexed, self.vocab.len());
            Features::Dense(&dense)
        };
        let probs = self.model.predict(&features)?;
        Ok(Classification {
            label: self.model.classes[argmax(&probs)].clone(),
            probs,
            tokens: indexed.len,
        })
    }
}
