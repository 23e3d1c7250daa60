//! Per-sample scoring and organ x category stratified reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::choice::{choice_accuracy, judgment_accuracy};
use super::metrics::{composite_open, CompositeWeights};
use crate::config::Modality;
use crate::error::{Error, Result};

macro_rules! closed_set {
    ($(#[$m:meta])* $name:ident { $($variant:ident => $s:literal),+ $(,)? }) => {
        $(#[$m])*
        #[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        pub enum $name {
            $(#[serde(rename = $s)] $variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self {
                    $($name::$variant => $s),+
                }
            }
        }
    };
}

closed_set!(
    /// The 13 organ groups.
    Organ {
        Lungs => "lungs",
        Heart => "heart",
        Liver => "liver",
        Spleen => "spleen",
        Kidneys => "kidneys",
        Pancreas => "pancreas",
        Stomach => "stomach",
        Bowel => "bowel",
        Esophagus => "esophagus",
        Trachea => "trachea",
        Vessels => "vessels",
        Spine => "spine",
        Others => "others",
    }
);

closed_set!(
    /// Clinical categories: general imaging recognition, medical abnormality identification,
    /// advanced imaging interpretation, clinical reasoning and decision.
    Category {
        Gir => "GIR",
        Mai => "MAI",
        Aii => "AII",
        Crd => "CRD",
    }
);

closed_set!(
    TaskType {
        MultipleChoice => "multiple_choice",
        Judgment => "judgment",
        ShortAnswer => "short_answer",
        FreeForm => "free_form",
        Report => "report",
        Caption => "caption",
        Dialogue => "dialogue",
    }
);

/// Sample id; integers order numerically and sort before strings.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SampleId {
    Num(u64),
    Str(String),
}

impl std::fmt::Display for SampleId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SampleId::Num(n) => write!(f, "{n}"),
            SampleId::Str(s) => f.write_str(s),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSample {
    pub id: SampleId,
    pub modality: Modality,
    pub organ: Organ,
    pub category: Category,
    pub task_type: TaskType,
    pub prediction: String,
    pub reference: String,
}

pub fn read_samples(path: impl AsRef<Path>) -> Result<Vec<EvalSample>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Format(format!("{}:{}: {e}", path.display(), i + 1)))
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scored {
    pub id: SampleId,
    pub organ: Organ,
    pub category: Category,
    pub task_type: TaskType,
    pub score: f64,
    /// Closed-ended prediction with no recognisable answer.
    pub flagged: bool,
}

/// Multiple choice uses letter accuracy, judgment uses first-token accuracy, everything
/// else the open-ended composite.
pub fn score_sample(s: &EvalSample, w: &CompositeWeights) -> Scored {
    let (score, flagged) = match s.task_type {
        TaskType::MultipleChoice | TaskType::Judgment => {
            let o = if s.task_type == TaskType::MultipleChoice {
                choice_accuracy(&s.prediction, &s.reference)
            } else {
                judgment_accuracy(&s.prediction, &s.reference)
            };
            (if o.correct { 1.0 } else { 0.0 }, !o.parsed)
        }
        _ => (composite_open(&s.prediction, &s.reference, w), false),
    };
    Scored {
        id: s.id.clone(),
        organ: s.organ,
        category: s.category,
        task_type: s.task_type,
        score,
        flagged,
    }
}

pub fn score_all(samples: &[EvalSample], w: &CompositeWeights) -> Vec<Scored> {
    samples.par_iter().map(|s| score_sample(s, w)).collect()
}

/// Mean and count of one stratum; the mean is `null` for an empty stratum.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Cell {
    pub mean: Option<f64>,
    pub count: usize,
}

#[derive(Clone, Copy, Default)]
struct Acc {
    sum: f64,
    count: usize,
}

impl Acc {
    fn add(&mut self, v: f64) {
        self.sum += v;
        self.count += 1;
    }

    fn cell(self) -> Cell {
        Cell {
            mean: (self.count > 0).then(|| self.sum / self.count as f64),
            count: self.count,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReportMeta {
    pub weights: CompositeWeights,
    pub bleu: &'static str,
    pub tokenization: &'static str,
    pub closed_ended: &'static str,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StratifiedReport {
    pub overall: Cell,
    pub per_organ: BTreeMap<&'static str, Cell>,
    pub per_category: BTreeMap<&'static str, Cell>,
    pub per_task_type: BTreeMap<&'static str, Cell>,
    /// organ -> category -> cell.
    pub cells: BTreeMap<&'static str, BTreeMap<&'static str, Cell>>,
    pub flagged: Vec<String>,
    pub meta: ReportMeta,
}

/// Fold scores in id order into organ, category, task-type and organ x category strata.
pub fn stratified_report(scored: &[Scored], w: &CompositeWeights) -> Result<StratifiedReport> {
    if scored.is_empty() {
        return Err(Error::EmptyReport);
    }
    let mut order: Vec<&Scored> = scored.iter().collect();
    order.sort_by(|a, b| a.id.cmp(&b.id));
    if let Some(pair) = order.windows(2).find(|p| p[0].id == p[1].id) {
        return Err(Error::Validation(format!("duplicate sample id {}", pair[0].id)));
    }

    let (no, nc) = (Organ::ALL.len(), Category::ALL.len());
    let mut overall = Acc::default();
    let mut organs = vec![Acc::default(); no];
    let mut cats = vec![Acc::default(); nc];
    let mut tasks = vec![Acc::default(); TaskType::ALL.len()];
    let mut grid = vec![Acc::default(); no * nc];
    let mut flagged = Vec::new();
    for s in order {
        let (o, c, t) = (s.organ as usize, s.category as usize, s.task_type as usize);
        overall.add(s.score);
        organs[o].add(s.score);
        cats[c].add(s.score);
        tasks[t].add(s.score);
        grid[o * nc + c].add(s.score);
        if s.flagged {
            flagged.push(s.id.to_string());
        }
    }

    Ok(StratifiedReport {
        overall: overall.cell(),
        per_organ: Organ::ALL.iter().map(|o| (o.as_str(), organs[*o as usize].cell())).collect(),
        per_category: Category::ALL.iter().map(|c| (c.as_str(), cats[*c as usize].cell())).collect(),
        per_task_type: TaskType::ALL.iter().map(|t| (t.as_str(), tasks[*t as usize].cell())).collect(),
        cells: Organ::ALL
            .iter()
            .map(|o| {
                let row = Category::ALL
                    .iter()
                    .map(|c| (c.as_str(), grid[*o as usize * nc + *c as usize].cell()))
                    .collect();
                (o.as_str(), row)
            })
            .collect(),
        flagged,
        meta: ReportMeta {
            weights: *w,
            bleu: "sentence BLEU-4; orders n>=2 with zero clipped matches use (0+1)/(total+1)",
            tokenization: "lowercase, whitespace split, punctuation trimmed from token ends",
            closed_ended: "multiple_choice: letter accuracy; judgment: first-token accuracy",
        },
    })
}

fn fmt_cell(c: &Cell) -> String {
    match c.mean {
        Some(m) => format!("{m:.4} ({})", c.count),
        None => "-".into(),
    }
}

/// Aligned plain-text table: organs down, categories across, with marginal means.
pub fn render_table(r: &StratifiedReport) -> String {
    let mut header = vec!["organ".to_string()];
    header.extend(Category::ALL.iter().map(|c| c.as_str().to_string()));
    header.push("all".into());
    let mut rows = vec![header];
    for o in Organ::ALL {
        let mut row = vec![o.as_str().to_string()];
        row.extend(Category::ALL.iter().map(|c| fmt_cell(&r.cells[o.as_str()][c.as_str()])));
        row.push(fmt_cell(&r.per_organ[o.as_str()]));
        rows.push(row);
    }
    let mut last = vec!["all".to_string()];
    last.extend(Category::ALL.iter().map(|c| fmt_cell(&r.per_category[c.as_str()])));
    last.push(fmt_cell(&r.overall));
    rows.push(last);

    let widths: Vec<usize> = (0..rows[0].len())
        .map(|j| rows.iter().map(|row| row[j].len()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for (i, row) in rows.iter().enumerate() {
        let line: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(j, v)| if j == 0 { format!("{v:<w$}", w = widths[j]) } else { format!("{v:>w$}", w = widths[j]) })
            .collect();
        let _ = writeln!(out, "{}", line.join("  ").trim_end());
        if i == 0 || i == rows.len() - 2 {
            let _ = writeln!(out, "{}", "-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scored(id: u64, organ: Organ, category: Category, score: f64) -> Scored {
        Scored {
            id: SampleId::Num(id),
            organ,
            category,
            task_type: TaskType::ShortAnswer,
            score,
            flagged: false,
        }
    }

    #[test]
    fn single_sample() {
        let r = stratified_report(&[scored(1, Organ::Liver, Category::Gir, 0.8)], &Default::default()).unwrap();
        assert_eq!(r.per_organ["liver"].mean, Some(0.8));
        assert_eq!(r.overall.mean, Some(0.8));
        assert_eq!(r.per_organ["heart"], Cell { mean: None, count: 0 });
        assert_eq!(r.cells["liver"]["MAI"].mean, None);
        let json = serde_json::to_value(&r).unwrap();
        assert!(json["per_organ"]["heart"]["mean"].is_null());
    }

    #[test]
    fn two_in_one_cell() {
        let s = [scored(1, Organ::Spine, Category::Crd, 0.0), scored(2, Organ::Spine, Category::Crd, 1.0)];
        let r = stratified_report(&s, &Default::default()).unwrap();
        assert_eq!(r.cells["spine"]["CRD"], Cell { mean: Some(0.5), count: 2 });
    }

    #[test]
    fn empty_and_duplicates() {
        assert!(matches!(stratified_report(&[], &Default::default()), Err(Error::EmptyReport)));
        let s = [scored(1, Organ::Spine, Category::Crd, 0.0), scored(1, Organ::Heart, Category::Crd, 1.0)];
        assert!(matches!(stratified_report(&s, &Default::default()), Err(Error::Validation(_))));
    }

    #[test]
    fn ids_order_numerically() {
        let mut ids = vec![SampleId::Str("b".into()), SampleId::Num(10), SampleId::Num(2)];
        ids.sort();
        assert_eq!(ids, vec![SampleId::Num(2), SampleId::Num(10), SampleId::Str("b".into())]);
    }

    #[test]
    fn parse_sample_line() {
        let line = r#"{"id":"q1","modality":"volume","organ":"kidneys","category":"MAI","task_type":"multiple_choice","prediction":"(c)","reference":"C"}"#;
        let s: EvalSample = serde_json::from_str(line).unwrap();
        assert_eq!(s.organ, Organ::Kidneys);
        let sc = score_sample(&s, &Default::default());
        assert_eq!((sc.score, sc.flagged), (1.0, false));
        let bad = line.replace("kidneys", "brain");
        assert!(serde_json::from_str::<EvalSample>(&bad).is_err());
    }

    #[test]
    fn table_has_every_organ() {
        let r = stratified_report(&[scored(1, Organ::Liver, Category::Gir, 0.8)], &Default::default()).unwrap();
        let t = render_table(&r);
        assert_eq!(t.lines().count(), 1 + 1 + 13 + 1 + 1);
        assert!(t.contains("0.8000 (1)"));
        let widths: Vec<usize> = t.lines().filter(|l| !l.starts_with('-')).map(|l| l.len()).collect();
        assert!(widths.iter().all(|&w| w == widths[0]));
    }
}
