//! Reference computations checked against the library, each done a second
//! way from first principles.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use sha2::{Digest, Sha256};

use stmtclass::classify::{
    encode_model, fit, Adam, Body, Inputs, Model, ModelKind, Network, TrainConfig,
};
use stmtclass::dataset::{extract_corpus, DatasetManifest};
use stmtclass::embed::{embed, index_paragraph, Vocabulary};
use stmtclass::eval::{confusion, propose_nests, ConfusionMatrix};
use stmtclass::ingest::{self, Block, Inline, MatchSource, SkipStats};
use stmtclass::lang::{Language, LanguageDetector, Profile, PROFILE_SIZE};
use stmtclass::normalize::{self, normalize_text, MathMode, TokenKind};
use stmtclass::pipeline::TextClassifier;
use stmtclass::Taxonomy;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn corpus_doc(name: &str) -> ingest::ScholarlyDoc {
    let bytes = std::fs::read(fixtures().join("corpus").join(name)).unwrap();
    ingest::parse_document(name, &bytes).unwrap()
}

#[test]
fn nested_environments_match_hand_list() {
    let tax = Taxonomy::bundled();
    let doc = corpus_doc("doc02_nested.html");
    let mut skips = SkipStats::default();
    let found: Vec<(String, usize, MatchSource)> = ingest::find_statements(&doc, &tax, &mut skips)
        .iter()
        .map(|m| (m.label.as_str().to_string(), m.depth, m.source))
        .collect();
    let expected = vec![
        ("result".to_string(), 0, MatchSource::Heading),
        ("theorem".to_string(), 1, MatchSource::Environment),
        ("proof".to_string(), 1, MatchSource::Environment),
        ("claim".to_string(), 2, MatchSource::Environment),
    ];
    assert_eq!(found, expected);
    assert_eq!(skips.total(), 0);
}

#[test]
fn display_math_paragraph_has_three_blocks() {
    let tax = Taxonomy::bundled();
    let doc = corpus_doc("doc06_display.html");
    let stmts = ingest::extract_statements(&doc, &tax, &mut SkipStats::default());
    let prop = stmts.iter().find(|s| s.label.as_str() == "proposition").unwrap();
    let shape: Vec<&str> = prop
        .blocks
        .iter()
        .map(|b| match b {
            Block::Narrative(_) => "text",
            Block::Math(_) => "math",
        })
        .collect();
    assert_eq!(shape, ["text", "math", "text"]);
    let para = normalize::normalize(prop, MathMode::Keep).serialize();
    assert!(para.ends_with("and equality never holds as a direct computation shows\n"));
    assert!(!para.contains("nonnegative"));
}

#[test]
fn digits_in_formulas_carry_no_font_prefix() {
    let golden = fixtures().join("golden/with-math");
    let mut numeric = Vec::new();
    for entry in walkdir::WalkDir::new(&golden) {
        let entry = entry.unwrap();
        if entry.path().extension().is_some_and(|e| e == "txt") {
            let text = std::fs::read_to_string(entry.path()).unwrap();
            for tok in text.split_whitespace() {
                if tok.bytes().any(|b| b.is_ascii_digit()) {
                    numeric.push(tok.to_string());
                }
            }
        }
    }
    assert!(numeric.contains(&"1".to_string()));
    assert!(numeric.contains(&"3_5".to_string()));
    assert!(numeric
        .iter()
        .all(|t| t.bytes().all(|b| b.is_ascii_digit() || b == b'_')));
}

/// Lowercase, numbers to one placeholder, punctuation dropped.
fn reference_tokens(text: &str) -> Vec<String> {
    let word = Regex::new(r"[a-z0-9]+(?:[.,][0-9]+)*").unwrap();
    let number = Regex::new(r"^[0-9]+(?:[.,][0-9]+)*$").unwrap();
    let lower = text.to_lowercase();
    word.find_iter(&lower)
        .map(|m| {
            if number.is_match(m.as_str()) {
                "numliteral".to_string()
            } else {
                m.as_str().to_string()
            }
        })
        .collect()
}

#[test]
fn placeholder_rule_matches_regex_reference() {
    assert_eq!(reference_tokens("We use 25 samples."), ["we", "use", "numliteral", "samples"]);
    let ours: Vec<String> = normalize_text("We use 25 samples.")
        .tokens()
        .map(|t| t.text.clone())
        .collect();
    assert_eq!(ours, ["we", "use", "numliteral", "samples"]);

    let tax = Taxonomy::bundled();
    let mut checked = 0;
    for entry in std::fs::read_dir(fixtures().join("corpus")).unwrap() {
        let bytes = std::fs::read(entry.unwrap().path()).unwrap();
        let Ok(doc) = ingest::parse_document("d", &bytes) else {
            continue;
        };
        for stmt in ingest::extract_statements(&doc, &tax, &mut SkipStats::default()) {
            for block in &stmt.blocks {
                let Block::Narrative(inlines) = block else {
                    continue;
                };
                for inline in inlines {
                    let Inline::Text(t) = inline else { continue };
                    if !t.is_ascii() {
                        continue;
                    }
                    let ours: Vec<String> =
                        normalize_text(t).tokens().map(|t| t.text.clone()).collect();
                    assert_eq!(ours, reference_tokens(t), "text {t:?}");
                    checked += 1;
                }
            }
        }
    }
    assert!(checked >= 20, "only {checked} runs checked");
}

/// Trigram profile and out-of-place distance written out independently.
fn oracle_profile(words: &[&str]) -> Vec<String> {
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for w in words {
        let padded: Vec<char> = format!(" {w} ").chars().collect();
        for i in 0..padded.len().saturating_sub(2) {
            *counts.entry(padded[i..i + 3].iter().collect()).or_insert(0) += 1;
        }
    }
    let mut ranked: Vec<(String, usize)> = counts.into_iter().collect();
    // BTreeMap order is lexicographic, and the sort is stable
    ranked.sort_by(|a, b| b.1.cmp(&a.1));
    ranked.into_iter().take(300).map(|(t, _)| t).collect()
}

fn oracle_distance(lang: &[String], doc: &[String]) -> usize {
    doc.iter()
        .enumerate()
        .map(|(i, t)| match lang.iter().position(|x| x == t) {
            Some(r) => (r as isize - i as isize).unsigned_abs(),
            None => 300,
        })
        .sum()
}

#[test]
fn french_paragraph_distance_matches_independent_script() {
    assert_eq!(PROFILE_SIZE, 300);
    let tax = Taxonomy::bundled();
    let doc = corpus_doc("doc03_french.html");
    let stmts = ingest::extract_statements(&doc, &tax, &mut SkipStats::default());
    let french = stmts
        .iter()
        .map(|s| normalize::normalize(s, MathMode::Keep))
        .find(|p| p.serialize().starts_with("nous remarquons"))
        .expect("french remark");
    let words: Vec<&str> = french.narrative_words().collect();
    let doc_profile = oracle_profile(&words);

    let mut oracle = Vec::new();
    for lang in Language::ALL {
        let path = Path::new(env!("CARGO_MANIFEST_DIR"))
            .join("data/lang")
            .join(format!("{}.txt", lang.as_str()));
        let sample = normalize_text(&std::fs::read_to_string(path).unwrap());
        let sample_words: Vec<&str> = sample.narrative_words().collect();
        let d = oracle_distance(&oracle_profile(&sample_words), &doc_profile);
        let ours = Profile::from_words(sample_words.iter().copied())
            .distance(&Profile::from_words(words.iter().copied()));
        assert_eq!(d, ours, "{}", lang.as_str());
        oracle.push((d, lang));
    }
    oracle.sort();
    assert_eq!(oracle[0].1, Language::French);
    let detection = LanguageDetector::bundled().detect(&french);
    assert_eq!(detection.language(), Some(Language::French));
    assert_eq!(
        detection,
        stmtclass::lang::Detection::Language {
            language: Language::French,
            distance: oracle[0].0,
            confidence: (oracle[1].0 - oracle[0].0) as f64 / oracle[1].0 as f64,
        }
    );
}

#[test]
fn cross_label_collision_by_direct_hash() {
    let golden = fixtures().join("golden/with-math");
    let manifest = DatasetManifest::load(&golden).unwrap();
    assert_eq!(manifest.collisions.len(), 1);
    let c = &manifest.collisions[0];
    let mut seen = Vec::new();
    for label in &c.labels {
        let path = golden.join(label).join(format!("{}.txt", c.hash));
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(hex::encode(Sha256::digest(&bytes)), c.hash);
        seen.push(bytes);
    }
    assert_eq!(seen.len(), 2);
    assert_eq!(seen[0], seen[1]);
    // every file is named after the hash of its bytes
    for entry in walkdir::WalkDir::new(&golden) {
        let entry = entry.unwrap();
        let p = entry.path();
        if p.extension().is_some_and(|e| e == "txt") {
            let bytes = std::fs::read(p).unwrap();
            let stem = p.file_stem().unwrap().to_str().unwrap();
            assert_eq!(hex::encode(Sha256::digest(&bytes)), stem);
        }
    }
}

#[test]
fn three_document_manifest_matches_hand_expectation() {
    let input = tempfile::tempdir().unwrap();
    for name in ["doc01_remark.html", "doc03_french.html", "doc05_longword.html"] {
        std::fs::copy(fixtures().join("corpus").join(name), input.path().join(name)).unwrap();
    }
    let out = tempfile::tempdir().unwrap();
    let tax = Taxonomy::bundled();
    extract_corpus(input.path(), out.path(), &tax, MathMode::Keep).unwrap();
    let got = std::fs::read_to_string(out.path().join("MANIFEST")).unwrap();
    // doc01: remark 13, abstract 26, introduction 33 words; doc03: abstract
    // 29, preliminaries 41, English remark 6; doc05: definition 12
    let expected = "\
format = stmtclass-dataset 1
mode = with-math
split_seed = sha256-first-byte
documents = 3
paragraphs = 7
label = abstract 2 abstract
label = definition 1 definition
label = introduction 1 introduction
label = preliminaries 1 preliminaries
label = remark 2 remark
stats.mean_words = 22.857143
stats.median_words = 26.000000
stats.coverage_480 = 1.000000
skip.long-word = 1
skip.non-english = 1
";
    assert_eq!(got, expected);
}

#[test]
fn no_math_remark_from_fixture() {
    let tax = Taxonomy::bundled();
    let doc = corpus_doc("doc01_remark.html");
    let stmts = ingest::extract_statements(&doc, &tax, &mut SkipStats::default());
    let remark = stmts.iter().find(|s| s.label.as_str() == "remark").unwrap();
    // deleting the two formulas from the plain-text block by hand
    let with_math = "importantly note that italic_c is independent of the italic_epsilon \
                     POSTSUBSCRIPT_start italic_j POSTSUBSCRIPT_end s";
    let by_hand: Vec<&str> = with_math
        .split(' ')
        .filter(|t| !t.starts_with("italic_") && !t.starts_with("POSTSUBSCRIPT"))
        .collect();
    assert_eq!(
        normalize::normalize(remark, MathMode::Omit).serialize(),
        format!("{}\n", by_hand.join(" "))
    );
    assert_eq!(by_hand.join(" "), "importantly note that is independent of the s");
}

const VECTORS: &str = "\
importantly 0.1 0.2 0.3
note -1 0 1
that 0.5 0.5 0.5
italic_c 2 -2 0.25
is 0 0 1
italic_epsilon 1e-3 4 -4
the 0.7 -0.7 0.0
";

#[test]
fn embedding_matches_scripted_lookup() {
    let vocab = Vocabulary::parse(VECTORS).unwrap();
    let mut table: HashMap<&str, Vec<f32>> = HashMap::new();
    for line in VECTORS.lines() {
        let mut parts = line.split(' ');
        let tok = parts.next().unwrap();
        table.insert(tok, parts.map(|v| v.parse().unwrap()).collect());
    }
    let tax = Taxonomy::bundled();
    let doc = corpus_doc("doc01_remark.html");
    let stmts = ingest::extract_statements(&doc, &tax, &mut SkipStats::default());
    let para = normalize::normalize(
        stmts.iter().find(|s| s.label.as_str() == "remark").unwrap(),
        MathMode::Keep,
    );
    let window = 12;
    let indexed = index_paragraph(&para, &vocab, window);
    let emb = embed(&indexed.indices, &vocab).unwrap();

    let mut expected: Vec<f32> = Vec::new();
    let mut rows = 0;
    for tok in para.tokens() {
        if let Some(v) = table.get(tok.text.as_str()) {
            if rows < window {
                expected.extend(v);
                rows += 1;
            }
        }
    }
    expected.resize(window * 3, 0.0);
    assert_eq!(rows, 7);
    assert_eq!(emb.matrix, expected);
    assert_eq!(emb.mask.iter().filter(|&&m| m).count(), rows);
}

#[test]
fn adam_matches_reference_optimizer() {
    // f(x) = sum a_i (x_i - c_i)^2
    let a = [1.0, 3.0, 0.5, 10.0];
    let c = [1.0, -2.0, 0.3, 4.0];
    let f = |x: &[f64]| -> f64 { x.iter().zip(a).zip(c).map(|((x, a), c)| a * (x - c).powi(2)).sum() };
    let grad = |x: &[f64]| -> Vec<f64> {
        x.iter().zip(a).zip(c).map(|((x, a), c)| 2.0 * a * (x - c)).collect()
    };
    let (lr, b1, b2, eps) = (0.05, 0.9, 0.999, 1e-8);

    let mut ours = vec![0.0; 4];
    let mut adam = Adam::new(4, lr, b1, b2, eps);
    let mut reference = vec![0.0; 4];
    let (mut m, mut v) = (vec![0.0; 4], vec![0.0; 4]);
    let mut last = f(&ours);
    for t in 1..=100 {
        let g_ours = grad(&ours);
        adam.step(&mut ours, &g_ours).unwrap();
        let g = grad(&reference);
        for i in 0..4 {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            let m_hat = m[i] / (1.0 - b1.powi(t));
            let v_hat = v[i] / (1.0 - b2.powi(t));
            reference[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        for (o, r) in ours.iter().zip(&reference) {
            assert!((o - r).abs() <= 1e-6 * r.abs().max(1.0), "step {t}: {o} vs {r}");
        }
        let now = f(&ours);
        assert!(now < last, "step {t}: loss {now} after {last}");
        last = now;
    }
}

#[test]
fn gaussian_blobs_train_to_separation() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let normal = |rng: &mut ChaCha8Rng| -> f32 {
        // Box-Muller
        let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
        let u2: f64 = rng.gen();
        ((-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()) as f32
    };
    let dim = 8;
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for i in 0..2000 {
        let y = i % 2;
        let center = if y == 0 { -3.0 } else { 3.0 };
        let mut x: Vec<f32> = (0..dim).map(|_| 0.5 * normal(&mut rng)).collect();
        x[0] += center;
        rows.push(x);
        labels.push(y);
    }
    // the plane x0 = 0 separates the draw exactly
    assert!(rows
        .iter()
        .zip(&labels)
        .all(|(x, &y)| (x[0] > 0.0) == (y == 1)));
    let inputs = Inputs::Dense { dim, rows };
    let cfg = TrainConfig {
        max_epochs: 20,
        batch_size: 32,
        ..TrainConfig::default()
    };
    let (net, history) = fit(&inputs, &labels, None, 2, &cfg).unwrap();
    assert!(history.epochs.len() <= 20);
    let correct = (0..inputs.len())
        .filter(|&i| stmtclass::classify::argmax(&net.predict(&inputs.get(i)).unwrap()) == labels[i])
        .count();
    assert!(correct as f64 / inputs.len() as f64 >= 0.99, "{correct}");
}

/// Reads parameters back out of an encoded model by hand.
fn scripted_params(bytes: &[u8], classes: usize) -> Vec<f64> {
    let mut pos = 4 + 2 + 1 + 1 + 7 * 4;
    for _ in 0..classes {
        let len = u16::from_le_bytes([bytes[pos], bytes[pos + 1]]) as usize;
        pos += 2 + len;
    }
    let count = u64::from_le_bytes(bytes[pos..pos + 8].try_into().unwrap()) as usize;
    pos += 8;
    (0..count)
        .map(|i| f64::from_le_bytes(bytes[pos + 8 * i..pos + 8 * i + 8].try_into().unwrap()))
        .collect()
}

fn scripted_softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().cloned().fold(f64::MIN, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

#[test]
fn forward_pass_matches_script_from_serialized_weights() {
    let vocab = Vocabulary::parse(VECTORS).unwrap();
    let (window, dim, k) = (6, 3, 3);
    let classes: Vec<String> = ["alpha", "beta", "gamma"].map(String::from).to_vec();
    let text = "Importantly, note that the result is sharp.";
    let x: Vec<f64> = {
        let para = normalize_text(text);
        let idx = index_paragraph(&para, &vocab, window);
        embed(&idx.indices, &vocab)
            .unwrap()
            .matrix
            .iter()
            .map(|&v| f64::from(v))
            .collect()
    };
    for hidden in [None, Some(5)] {
        let kind = if hidden.is_some() { ModelKind::Mlp } else { ModelKind::LogRegEmbedded };
        let mut net = Network::init(window * dim, hidden, k, 9).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for p in &mut net.params {
            *p += rng.gen_range(-0.3..0.3);
        }
        let model = Model {
            kind,
            classes: classes.clone(),
            window,
            emb_dim: dim,
            vocab_size: vocab.len(),
            body: Body::Network(net),
        };
        let p = scripted_params(&encode_model(&model), k);
        let n = window * dim;
        let logits: Vec<f64> = match hidden {
            None => (0..k)
                .map(|j| p[n * k + j] + (0..n).map(|i| x[i] * p[i * k + j]).sum::<f64>())
                .collect(),
            Some(h) => {
                let act: Vec<f64> = (0..h)
                    .map(|u| (p[n * h + u] + (0..n).map(|i| x[i] * p[i * h + u]).sum::<f64>()).max(0.0))
                    .collect();
                let w2 = n * h + h;
                (0..k)
                    .map(|j| p[w2 + h * k + j] + (0..h).map(|u| act[u] * p[w2 + u * k + j]).sum::<f64>())
                    .collect()
            }
        };
        let expected = scripted_softmax(&logits);
        let got = TextClassifier::new(model, vocab.clone())
            .unwrap()
            .classify_text(text)
            .unwrap();
        for (a, b) in got.probs.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
        assert_eq!(got.tokens, 5);
    }
}

#[test]
fn confusion_of_twenty_pairs_matches_tally() {
    let text = std::fs::read_to_string(fixtures().join("confusion20/pairs.txt")).unwrap();
    let names: Vec<String> = ["definition", "proof", "proposition", "remark"].map(String::from).to_vec();
    let index = |s: &str| names.iter().position(|n| n == s).unwrap();
    let (mut truth, mut pred) = (Vec::new(), Vec::new());
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let (t, p) = line.split_once(' ').unwrap();
        truth.push(index(t));
        pred.push(index(p.trim()));
    }
    assert_eq!(truth.len(), 20);
    let cm = confusion(&truth, &pred, &names).unwrap();
    let tally = std::fs::read_to_string(fixtures().join("confusion20/tally.csv")).unwrap();
    assert_eq!(cm, ConfusionMatrix::parse_csv(&tally).unwrap());
    assert_eq!(cm.to_csv(), tally);
    assert_eq!(cm.total(), 20);
}

#[test]
fn greedy_merge_is_the_exhaustive_best_pair() {
    // lemma, theorem, definition
    let m = vec![
        vec![0.35, 0.6, 0.05],
        vec![0.1, 0.85, 0.05],
        vec![0.02, 0.08, 0.9],
    ];
    let proposal = propose_nests(&m, 0.25);
    let mut best = (f64::MIN, 0, 0);
    for i in 0..3 {
        for j in 0..3 {
            if i != j && m[i][j].max(m[j][i]) > best.0 {
                best = (m[i][j].max(m[j][i]), i.min(j), i.max(j));
            }
        }
    }
    let first = proposal.trace[0];
    assert_eq!((first.left, first.right, first.mass), (best.1, best.2, best.0));
    assert_eq!(proposal.groups, vec![vec![0, 1], vec![2]]);
    assert_eq!(proposal.trace.len(), 1);
}

#[test]
fn index_mode_uses_scaled_indices() {
    let vocab = Vocabulary::parse(VECTORS).unwrap();
    let net = Network::init(4, None, 2, 1).unwrap();
    let model = Model {
        kind: ModelKind::LogRegIndex,
        classes: vec!["a".into(), "b".into()],
        window: 4,
        emb_dim: 0,
        vocab_size: vocab.len(),
        body: Body::Network(net.clone()),
    };
    let got = TextClassifier::new(model, vocab).unwrap().classify_text("note the cat").unwrap();
    // note = 2, the = 7, out of 7 tokens
    let x = [2.0 / 7.0, 7.0 / 7.0, 0.0, 0.0];
    let p = &net.params;
    let z: Vec<f64> = (0..2)
        .map(|j| p[8 + j] + (0..4).map(|i| x[i] * p[i * 2 + j]).sum::<f64>())
        .collect();
    let expected = scripted_softmax(&z);
    for (a, b) in got.probs.iter().zip(&expected) {
        assert!((a - b).abs() < 1e-6);
    }
    assert!(normalize_text("note the cat").tokens().all(|t| t.kind == TokenKind::Word));
}
