use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use stmtclass::classify::{
    argmax, fit, majority_class, Features, Inputs, Network, TrainConfig,
};
use stmtclass::dataset::{
    extract_corpus, process_document, split_train_test, Dataset, DatasetWriter, SourceDoc,
};
use stmtclass::embed::Vocabulary;
use stmtclass::eval::{confusion, propose_nests, ConfusionMatrix};
use stmtclass::lang::LanguageDetector;
use stmtclass::normalize::{normalize_text, MathMode};
use stmtclass::Taxonomy;

type Outcome = Result<String, String>;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn zero_rule_identity() -> Outcome {
    let tax = Taxonomy::bundled();
    let names: Vec<String> = tax.nests().iter().map(|n| n.name.clone()).collect();
    let counts: Vec<u64> = tax.nests().iter().map(|n| n.frequency).collect();
    let c = majority_class(&counts).map_err(|e| e.to_string())?;
    let k = names.len();
    let mut cm = ConfusionMatrix {
        names: names.clone(),
        counts: vec![vec![0; k]; k],
    };
    for (row, &n) in counts.iter().enumerate() {
        cm.counts[row][c] = n;
    }
    let f1 = cm.micro_f1();
    check(
        names[c] == "proposition" && (f1 - 0.3888).abs() <= 0.0005,
        format!("predicts {}, micro-F1 {f1:.6} (want 0.3888 ± 0.0005)", names[c]),
    )
}

fn remark_golden() -> Outcome {
    const WANT: &str = "importantly note that italic_c is independent of the italic_epsilon \
                        POSTSUBSCRIPT_start italic_j POSTSUBSCRIPT_end s\n";
    let path = fixtures().join("corpus/doc01_remark.html");
    let doc = SourceDoc {
        id: "doc01_remark.html".into(),
        bytes: std::fs::read(&path).map_err(|e| e.to_string())?,
    };
    let tax = Taxonomy::bundled();
    let out = process_document(&doc, &tax, MathMode::Keep, LanguageDetector::bundled());
    let remark = out
        .kept
        .iter()
        .find(|(l, _)| l.as_str() == "remark")
        .ok_or("no remark extracted")?;
    let got = remark.1.serialize();
    check(got == WANT, format!("serialized {got:?}"))
}

fn taxonomy_integrity() -> Outcome {
    let tax = Taxonomy::bundled();
    let members: usize = tax.nests().iter().map(|n| n.members.len()).sum();
    let labels = tax.label_count();
    let nests = tax.nests().len();
    let table = tax.nest_frequency();
    let retained = tax.retained_fraction();
    check(
        labels == 50
            && nests == 13
            && members == 25
            && tax.in_task_label_count() == 25
            && table == 10_442_364
            && retained >= 0.99,
        format!(
            "{labels} labels, {nests} nests, {members} members, nest total {table}, \
             retained {retained:.5}"
        ),
    )
}

fn read_tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    walkdir::WalkDir::new(root)
        .sort_by_file_name()
        .into_iter()
        .filter_map(|e| e.ok())
        .filter(|e| e.file_type().is_file())
        .map(|e| {
            let rel = e.path().strip_prefix(root).unwrap().to_path_buf();
            (rel, std::fs::read(e.path()).unwrap())
        })
        .collect()
}

fn extract_fixture(mode: MathMode) -> Result<(tempfile::TempDir, Dataset), String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let tax = Taxonomy::bundled();
    extract_corpus(&fixtures().join("corpus"), dir.path(), &tax, mode).map_err(|e| e.to_string())?;
    let ds = Dataset::open(dir.path()).map_err(|e| e.to_string())?;
    Ok((dir, ds))
}

fn end_to_end_fixture() -> Outcome {
    let docs = std::fs::read_dir(fixtures().join("corpus"))
        .map_err(|e| e.to_string())?
        .count();
    let start = Instant::now();
    let (a, _) = extract_fixture(MathMode::Keep)?;
    let (b, _) = extract_fixture(MathMode::Keep)?;
    let elapsed = start.elapsed();
    let ta = read_tree(a.path());
    let tb = read_tree(b.path());
    let golden = read_tree(&fixtures().join("golden/with-math"));
    let mismatched: Vec<_> = golden
        .keys()
        .chain(ta.keys())
        .filter(|k| golden.get(*k) != ta.get(*k))
        .collect();
    check(
        docs == 10 && ta == tb && mismatched.is_empty() && elapsed < Duration::from_secs(5),
        format!(
            "{docs} documents, {} files, reruns identical: {}, golden mismatches: {:?}, {:.2?}",
            ta.len(),
            ta == tb,
            mismatched,
            elapsed
        ),
    )
}

/// Tokens `c{class}_{j}` point mostly along one axis per class; `f{j}` are
/// small noise vectors shared by all classes.
fn separable_set(n: usize, seed: u64) -> (Vocabulary, Vec<Vec<String>>, Vec<usize>) {
    const CLASSES: usize = 13;
    const DIM: usize = 16;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs: Vec<(String, Vec<f32>)> = Vec::new();
    for c in 0..CLASSES {
        for j in 0..6 {
            let mut v: Vec<f32> = (0..DIM).map(|_| rng.gen_range(-0.1..0.1)).collect();
            v[c] += 1.0;
            pairs.push((format!("c{c}_{j}"), v));
        }
    }
    for j in 0..40 {
        let v: Vec<f32> = (0..DIM).map(|_| rng.gen_range(-0.2..0.2)).collect();
        pairs.push((format!("f{j}"), v));
    }
    let vocab = Vocabulary::from_pairs(DIM, pairs.iter().map(|(t, v)| (t.as_str(), v))).unwrap();
    let mut docs = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % CLASSES;
        let len = rng.gen_range(8..20);
        let doc: Vec<String> = (0..len)
            .map(|_| {
                if rng.gen_bool(0.5) {
                    format!("c{c}_{}", rng.gen_range(0..6))
                } else {
                    format!("f{}", rng.gen_range(0..40))
                }
            })
            .collect();
        docs.push(doc);
        labels.push(c);
    }
    (vocab, docs, labels)
}

fn token_inputs<'v>(vocab: &'v Vocabulary, docs: &[Vec<String>], window: usize) -> Inputs<'v> {
    let rows = docs
        .iter()
        .map(|d| {
            let p = stmtclass::embed::index_tokens(d.iter().map(String::as_str), vocab, window);
            p.tokens().to_vec()
        })
        .collect();
    Inputs::Tokens {
        vocab,
        window,
        rows,
    }
}

fn accuracy(net: &Network, inputs: &Inputs<'_>, labels: &[usize], classes: usize) -> f64 {
    let names: Vec<String> = (0..classes).map(|c| c.to_string()).collect();
    let pred: Vec<usize> = (0..inputs.len())
        .map(|i| argmax(&net.predict(&inputs.get(i)).unwrap()))
        .collect();
    confusion(labels, &pred, &names).unwrap().micro_f1()
}

fn trainability() -> Outcome {
    let start = Instant::now();
    let window = 480;
    let (vocab, train_docs, train_labels) = separable_set(13_000, 1);
    let (_, test_docs, test_labels) = separable_set(2_600, 2);
    // the held-out draw reuses token names, so the training vocabulary applies
    let train = token_inputs(&vocab, &train_docs, window);
    let test = token_inputs(&vocab, &test_docs, window);
    let cfg = TrainConfig {
        max_epochs: 20,
        ..TrainConfig::default()
    };
    let (lr, lr_hist) = fit(&train, &train_labels, None, 13, &cfg).map_err(|e| e.to_string())?;
    let (mlp, mlp_hist) =
        fit(&train, &train_labels, Some(128), 13, &cfg).map_err(|e| e.to_string())?;
    let lr_f1 = accuracy(&lr, &test, &test_labels, 13);
    let mlp_f1 = accuracy(&mlp, &test, &test_labels, 13);

    // XOR over two slots of a one-dimensional vocabulary
    let xor_vocab = Vocabulary::from_pairs(1, [("a", [1.0f32]), ("b", [-1.0f32])]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for _ in 0..2_000 {
        let (x, y) = (rng.gen_range(1..=2u32), rng.gen_range(1..=2u32));
        rows.push(vec![x, y]);
        labels.push(usize::from(x != y));
    }
    let xor = Inputs::Tokens {
        vocab: &xor_vocab,
        window: 2,
        rows,
    };
    let xor_cfg = TrainConfig {
        max_epochs: 50,
        seed: 5,
        ..TrainConfig::default()
    };
    let (xl, _) = fit(&xor, &labels, None, 2, &xor_cfg).map_err(|e| e.to_string())?;
    let (xm, _) = fit(&xor, &labels, Some(16), 2, &xor_cfg).map_err(|e| e.to_string())?;
    let xor_lr = accuracy(&xl, &xor, &labels, 2);
    let xor_mlp = accuracy(&xm, &xor, &labels, 2);
    let elapsed = start.elapsed();
    check(
        lr_f1 >= 0.95
            && mlp_f1 >= 0.95
            && lr_hist.epochs.len() <= 20
            && mlp_hist.epochs.len() <= 20
            && xor_mlp >= xor_lr
            && elapsed < Duration::from_secs(120),
        format!(
            "logreg {lr_f1:.4} ({} epochs), mlp {mlp_f1:.4} ({} epochs); \
             xor logreg {xor_lr:.4}, xor mlp {xor_mlp:.4}; {elapsed:.2?}",
            lr_hist.epochs.len(),
            mlp_hist.epochs.len()
        ),
    )
}

fn loss(net: &Network, x: &Features<'_>, y: usize, w: &[f64]) -> f64 {
    let mut scratch = vec![0.0; net.params.len()];
    net.loss_and_grad(x, y, w, 1.0, &mut scratch).unwrap()
}

fn gradient_suite() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = [0.0f64; 2];
    for case in 0..100 {
        for (slot, hidden) in [None, Some(rng.gen_range(2..8))].into_iter().enumerate() {
            let dim = rng.gen_range(1..12);
            let classes = rng.gen_range(2..6);
            let mut net = Network::init(dim, hidden, classes, case).unwrap();
            for p in &mut net.params {
                *p += rng.gen_range(-0.5..0.5);
            }
            let x: Vec<f32> = (0..dim)
                .map(|_| if rng.gen_bool(0.2) { 0.0 } else { rng.gen_range(-2.0..2.0) })
                .collect();
            let y = rng.gen_range(0..classes);
            let w: Vec<f64> = (0..classes).map(|_| rng.gen_range(0.2..3.0)).collect();
            let features = Features::Dense(&x);
            let mut analytic = vec![0.0; net.params.len()];
            net.loss_and_grad(&features, y, &w, 1.0, &mut analytic).unwrap();
            let h = 1e-5;
            let mut numeric = vec![0.0; net.params.len()];
            for i in 0..net.params.len() {
                let orig = net.params[i];
                net.params[i] = orig + h;
                let up = loss(&net, &features, y, &w);
                net.params[i] = orig - h;
                let down = loss(&net, &features, y, &w);
                net.params[i] = orig;
                numeric[i] = (up - down) / (2.0 * h);
            }
            let diff: f64 = analytic
                .iter()
                .zip(&numeric)
                .map(|(a, n)| (a - n) * (a - n))
                .sum::<f64>()
                .sqrt();
            let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
            let rel = diff / (norm(&analytic) + norm(&numeric)).max(1e-12);
            worst[slot] = worst[slot].max(rel);
        }
    }
    let elapsed = start.elapsed();
    check(
        worst[0] <= 1e-4 && worst[1] <= 1e-4 && elapsed < Duration::from_secs(30),
        format!(
            "worst relative error logreg {:.2e}, mlp {:.2e} over 100 instances each; {elapsed:.2?}",
            worst[0], worst[1]
        ),
    )
}

fn nest_reconstruction() -> Outcome {
    let tax = Taxonomy::bundled();
    let names: Vec<&str> = tax.labels().map(|l| l.label.as_str()).collect();
    let k = names.len();
    let mut m = vec![vec![0.0f64; k]; k];
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    // small cross-nest noise everywhere
    for (i, row) in m.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            if i != j {
                *v = rng.gen_range(0.0..0.004);
            }
        }
    }
    // each member passes at least 0.3 to the next member of its nest
    let mut expected: Vec<Vec<usize>> = Vec::new();
    for nest in tax.nests() {
        let idx: Vec<usize> = nest
            .members
            .iter()
            .map(|l| tax.label_index(l.as_str()).unwrap())
            .collect();
        if idx.len() > 1 {
            for (a, &i) in idx.iter().enumerate() {
                let j = idx[(a + 1) % idx.len()];
                m[i][j] = 0.3 + rng.gen_range(0.0..0.05);
            }
        }
        let mut sorted = idx.clone();
        sorted.sort_unstable();
        expected.push(sorted);
    }
    for (i, row) in m.iter_mut().enumerate() {
        let off: f64 = row.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, v)| v).sum();
        row[i] = 1.0 - off;
    }
    let within = |i: usize, j: usize| expected.iter().any(|g| g.contains(&i) && g.contains(&j));
    let cross_max = (0..k)
        .flat_map(|i| (0..k).map(move |j| (i, j)))
        .filter(|&(i, j)| i != j && !within(i, j))
        .map(|(i, j)| m[i][j])
        .fold(0.0, f64::max);
    let proposal = propose_nests(&m, 0.25);
    let in_task: Vec<usize> = expected.iter().flatten().copied().collect();
    let mut got: Vec<Vec<usize>> = proposal
        .groups
        .iter()
        .filter(|g| g.iter().any(|i| in_task.contains(i)))
        .cloned()
        .collect();
    got.sort();
    expected.sort();
    let dropped_alone = proposal
        .groups
        .iter()
        .filter(|g| g.iter().any(|i| !in_task.contains(i)))
        .all(|g| g.len() == 1);
    check(
        got == expected && dropped_alone && cross_max <= 0.05,
        format!(
            "{} groups over {k} classes, {} cover in-task labels, cross mass ≤ {cross_max:.4}",
            proposal.groups.len(),
            got.len()
        ),
    )
}

fn no_math_control() -> Outcome {
    let start = Instant::now();
    let (_a, with) = extract_fixture(MathMode::Keep)?;
    let (_b, without) = extract_fixture(MathMode::Omit)?;
    let elapsed = start.elapsed();
    let stats = |d: &Dataset| d.manifest.as_ref().and_then(|m| m.stats.clone());
    let (Some(w), Some(n)) = (stats(&with), stats(&without)) else {
        return Err("missing stats".into());
    };
    let golden = read_tree(&fixtures().join("golden/no-math"));
    check(
        n.mean_words < w.mean_words
            && n.median_words < w.median_words
            && read_tree(_b.path()) == golden
            && elapsed < Duration::from_secs(5),
        format!(
            "mean {:.3} -> {:.3}, median {:.1} -> {:.1}; {elapsed:.2?}",
            w.mean_words, n.mean_words, w.median_words, n.median_words
        ),
    )
}

fn write_split_fixture(root: &Path) -> Result<(), String> {
    let tax = Taxonomy::bundled();
    let labels = ["lemma", "theorem", "definition", "remark", "proof"];
    let mut w = DatasetWriter::create(root).map_err(|e| e.to_string())?;
    // numbers normalize to one placeholder, so spell the index out in words
    const WORDS: [&str; 10] = [
        "group", "ring", "field", "module", "space", "graph", "lattice", "sheaf", "scheme", "category",
    ];
    for i in 0..10_000usize {
        let digits: Vec<&str> = [1000, 100, 10, 1].iter().map(|d| WORDS[i / d % 10]).collect();
        let p = normalize_text(&format!("Every {} is a set.", digits.join(" ")));
        let label = tax.label(labels[i % labels.len()]).unwrap();
        if !w.write(&p, label).map_err(|e| e.to_string())?.created {
            return Err(format!("paragraph {i} collided"));
        }
    }
    Ok(())
}

fn split_determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    write_split_fixture(dir.path())?;
    let members = |root: &Path| -> Result<Vec<PathBuf>, String> {
        let ds = Dataset::open_tree(root).map_err(|e| e.to_string())?;
        let s = split_train_test(&ds, 0.8).map_err(|e| e.to_string())?;
        Ok(s.train.iter().map(|&i| ds.entries[i].path.clone()).collect())
    };
    let first = members(dir.path())?;
    let second = members(dir.path())?;
    // independent count straight from the file bytes
    let cutoff = (256.0f64 * 0.8).round() as u8;
    let oracle = read_tree(dir.path())
        .values()
        .filter(|bytes| Sha256::digest(bytes)[0] < cutoff)
        .count();
    let fraction = first.len() as f64 / 10_000.0;
    check(
        first == second && oracle == first.len() && (fraction - 0.8).abs() <= 0.012,
        format!("train fraction {fraction:.4} ({} of 10000), oracle {oracle}", first.len()),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("zero-rule identity", zero_rule_identity),
        ("remark golden", remark_golden),
        ("taxonomy integrity", taxonomy_integrity),
        ("end-to-end fixture corpus", end_to_end_fixture),
        ("trainability", trainability),
        ("gradient suite", gradient_suite),
        ("nest-proposer reconstruction", nest_reconstruction),
        ("no-math control", no_math_control),
        ("split determinism", split_determinism),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail} [{:.2?}]", start.elapsed()),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail} [{:.2?}]", start.elapsed());
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", 9 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
