//! Scoring: confusion matrices, micro-F1, per-class precision/recall/F1 and
//! nest proposals from confusion structure.

use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Counts with rows = true class and columns = predicted class.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub names: Vec<String>,
    pub counts: Vec<Vec<u64>>,
}

pub fn confusion(truth: &[usize], predicted: &[usize], names: &[String]) -> Result<ConfusionMatrix> {
    if truth.len() != predicted.len() {
        return Err(Error::Shape {
            expected: truth.len(),
            actual: predicted.len(),
        });
    }
    let k = names.len();
    let mut counts = vec![vec![0u64; k]; k];
    for (&t, &p) in truth.iter().zip(predicted) {
        if t >= k || p >= k {
            return Err(Error::Argument(format!("label {} out of range", t.max(p))));
        }
        counts[t][p] += 1;
    }
    Ok(ConfusionMatrix {
        names: names.to_vec(),
        counts,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

impl ConfusionMatrix {
    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.len()).map(|i| self.counts[i][i]).sum()
    }

    /// Pooled F1; equals accuracy for single-label classification.
    pub fn micro_f1(&self) -> f64 {
        ratio(self.trace() as f64, self.total() as f64)
    }

    pub fn per_class_prf(&self) -> Vec<Prf> {
        (0..self.len())
            .map(|i| {
                let tp = self.counts[i][i] as f64;
                let row: u64 = self.counts[i].iter().sum();
                let col: u64 = self.counts.iter().map(|r| r[i]).sum();
                let precision = ratio(tp, col as f64);
                let recall = ratio(tp, row as f64);
                Prf {
                    precision,
                    recall,
                    f1: ratio(2.0 * precision * recall, precision + recall),
                    support: row,
                }
            })
            .collect()
    }

    pub fn macro_f1(&self) -> f64 {
        let prf = self.per_class_prf();
        ratio(prf.iter().map(|p| p.f1).sum(), prf.len() as f64)
    }

    /// Each nonzero row divided by its sum; zero rows stay zero.
    pub fn row_normalize(&self) -> Vec<Vec<f64>> {
        self.counts
            .iter()
            .map(|row| {
                let sum: u64 = row.iter().sum();
                row.iter().map(|&c| ratio(c as f64, sum as f64)).collect()
            })
            .collect()
    }

    /// Merges classes through `map` (class → group) into `names.len()`
    /// groups.
    pub fn regroup(&self, map: &[usize], names: &[String]) -> Result<ConfusionMatrix> {
        if map.len() != self.len() {
            return Err(Error::Shape {
                expected: self.len(),
                actual: map.len(),
            });
        }
        let k = names.len();
        if let Some(&g) = map.iter().find(|&&g| g >= k) {
            return Err(Error::Argument(format!("group {g} out of range")));
        }
        let mut counts = vec![vec![0u64; k]; k];
        for (i, row) in self.counts.iter().enumerate() {
            for (j, &c) in row.iter().enumerate() {
                counts[map[i]][map[j]] += c;
            }
        }
        Ok(ConfusionMatrix {
            names: names.to_vec(),
            counts,
        })
    }

    /// Comma-separated text with a header row of class names.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("class");
        for n in &self.names {
            s.push(',');
            s.push_str(n);
        }
        s.push('\n');
        for (n, row) in self.names.iter().zip(&self.counts) {
            s.push_str(n);
            for c in row {
                let _ = write!(s, ",{c}");
            }
            s.push('\n');
        }
        s
    }

    pub fn parse_csv(text: &str) -> Result<ConfusionMatrix> {
        let err = |line: usize, message: String| Error::ConfusionFormat { line, message };
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or_else(|| err(1, "missing header".into()))?;
        let mut cols = header.split(',');
        if cols.next() != Some("class") {
            return Err(err(1, "header must start with `class`".into()));
        }
        let names: Vec<String> = cols.map(str::to_string).collect();
        if names.is_empty() || names.iter().any(|n| n.is_empty()) {
            return Err(err(1, "empty class name".into()));
        }
        let mut counts = Vec::with_capacity(names.len());
        for (i, line) in lines {
            let n = i + 1;
            let mut cells = line.split(',');
            let name = cells.next().unwrap_or_default();
            let idx = counts.len();
            if idx >= names.len() {
                return Err(err(n, "more rows than classes".into()));
            }
            if name != names[idx] {
                return Err(err(n, format!("row `{name}` where `{}` expected", names[idx])));
            }
            let row: Vec<u64> = cells
                .map(|c| c.trim().parse().map_err(|_| err(n, format!("bad count `{c}`"))))
                .collect::<Result<_>>()?;
            if row.len() != names.len() {
                return Err(err(n, format!("{} cells, expected {}", row.len(), names.len())));
            }
            counts.push(row);
        }
        if counts.len() != names.len() {
            return Err(err(0, "fewer rows than classes".into()));
        }
        Ok(ConfusionMatrix { names, counts })
    }

    /// Plain-text table of per-class scores.
    pub fn report(&self) -> String {
        let width = self.names.iter().map(|n| n.len()).max().unwrap_or(5).max(5);
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<width$}  {:>9}  {:>9}  {:>9}  {:>9}",
            "class", "precision", "recall", "f1", "support"
        );
        for (n, p) in self.names.iter().zip(self.per_class_prf()) {
            let _ = writeln!(
                s,
                "{:<width$}  {:>9.4}  {:>9.4}  {:>9.4}  {:>9}",
                n, p.precision, p.recall, p.f1, p.support
            );
        }
        let _ = writeln!(s, "micro-f1 {:.4}  macro-f1 {:.4}  samples {}", self.micro_f1(), self.macro_f1(), self.total());
        s
    }

    /// Row-normalized heatmap as a standalone SVG document.
    pub fn heatmap_svg(&self) -> String {
        const CELL: usize = 18;
        let k = self.len();
        let margin = 8 + 7 * self.names.iter().map(|n| n.len()).max().unwrap_or(0);
        let size = margin + k * CELL + 4;
        let norm = self.row_normalize();
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" font-family="sans-serif" font-size="11">"#
        );
        for (i, name) in self.names.iter().enumerate() {
            let y = margin + i * CELL + CELL * 2 / 3;
            let x = margin + i * CELL + CELL / 2;
            let name = xml_escape(name);
            let _ = writeln!(s, r#"<text x="{}" y="{y}" text-anchor="end">{name}</text>"#, margin - 4);
            let _ = writeln!(
                s,
                r#"<text x="{x}" y="{}" transform="rotate(-90 {x} {})">{name}</text>"#,
                margin - 4,
                margin - 4
            );
        }
        for (i, row) in norm.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                let shade = 255 - (v.clamp(0.0, 1.0) * 255.0).round() as u8;
                let _ = writeln!(
                    s,
                    r#"<rect x="{}" y="{}" width="{CELL}" height="{CELL}" fill="rgb({shade},{shade},255)"><title>{:.3}</title></rect>"#,
                    margin + j * CELL,
                    margin + i * CELL,
                    v
                );
            }
        }
        s.push_str("</svg>\n");
        s
    }
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Merge {
    /// Lowest class index of each merged group.
    pub left: usize,
    pub right: usize,
    pub mass: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NestProposal {
    /// Groups of class indices, each sorted, ordered by first member.
    pub groups: Vec<Vec<usize>>,
    pub trace: Vec<Merge>,
}

pub const DEFAULT_NEST_THRESHOLD: f64 = 0.25;

/// Greedy agglomeration over a row-normalized matrix: repeatedly merges the
/// two groups joined by the largest symmetric confusion `max(Cij, Cji)`
/// between any of their members, while that mass reaches `threshold`.
pub fn propose_nests(norm: &[Vec<f64>], threshold: f64) -> NestProposal {
    let k = norm.len();
    let sym = |i: usize, j: usize| {
        let a = norm[i].get(j).copied().unwrap_or(0.0);
        let b = norm[j].get(i).copied().unwrap_or(0.0);
        a.max(b)
    };
    let mut groups: Vec<Vec<usize>> = (0..k).map(|i| vec![i]).collect();
    let mut trace = Vec::new();
    loop {
        let mut best: Option<(f64, usize, usize)> = None;
        for a in 0..groups.len() {
            for b in a + 1..groups.len() {
                let mass = groups[a]
                    .iter()
                    .flat_map(|&i| groups[b].iter().map(move |&j| (i, j)))
                    .map(|(i, j)| sym(i, j))
                    .fold(f64::NEG_INFINITY, f64::max);
                if best.is_none_or(|(m, _, _)| mass > m) {
                    best = Some((mass, a, b));
                }
            }
        }
        match best {
            Some((mass, a, b)) if mass >= threshold => {
                trace.push(Merge {
                    left: groups[a][0],
                    right: groups[b][0],
                    mass,
                });
                let moved = groups.remove(b);
                groups[a].extend(moved);
                groups[a].sort_unstable();
            }
            _ => break,
        }
    }
    NestProposal { groups, trace }
}
