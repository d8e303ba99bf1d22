//! LIAR-format benchmark harness: loading, label mapping, seeded sampling,
//! persisted predictions and abstention-aware metrics.

use crate::types::{Mode, Verdict};
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use thiserror::Error;

pub const PREDICTIONS_SCHEMA: &str = "factcheck-predictions/v1";
pub const METRICS_SCHEMA: &str = "factcheck-metrics/v1";

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no predictions to score")]
    Empty,
    #[error("unknown label `{0}`")]
    UnknownLabel(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> EvalError + '_ {
    move |source| EvalError::Io { path: path.display().to_string(), source }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Label6 {
    PantsFire,
    False,
    BarelyTrue,
    HalfTrue,
    MostlyTrue,
    True,
}

impl Label6 {
    pub const ALL: [Label6; 6] = [
        Label6::PantsFire,
        Label6::False,
        Label6::BarelyTrue,
        Label6::HalfTrue,
        Label6::MostlyTrue,
        Label6::True,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Label6::PantsFire => "pants-fire",
            Label6::False => "false",
            Label6::BarelyTrue => "barely-true",
            Label6::HalfTrue => "half-true",
            Label6::MostlyTrue => "mostly-true",
            Label6::True => "true",
        }
    }
}

impl std::str::FromStr for Label6 {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase();
        Label6::ALL
            .into_iter()
            .find(|l| l.as_str() == norm)
            .ok_or_else(|| EvalError::UnknownLabel(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Binary {
    Pos,
    Neg,
}

pub fn to_binary(label: Label6) -> Binary {
    match label {
        Label6::True | Label6::MostlyTrue | Label6::HalfTrue => Binary::Pos,
        Label6::False | Label6::PantsFire | Label6::BarelyTrue => Binary::Neg,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UncertainMapping {
    Pessimistic,
    Optimistic,
}

impl UncertainMapping {
    pub const BOTH: [UncertainMapping; 2] = [UncertainMapping::Pessimistic, UncertainMapping::Optimistic];
}

impl std::str::FromStr for UncertainMapping {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pessimistic" => Ok(UncertainMapping::Pessimistic),
            "optimistic" => Ok(UncertainMapping::Optimistic),
            other => Err(format!("unknown mapping `{other}`")),
        }
    }
}

pub fn map_uncertain(predicted: Verdict, mapping: UncertainMapping) -> Binary {
    match (predicted, mapping) {
        (Verdict::True, _) => Binary::Pos,
        (Verdict::False, _) => Binary::Neg,
        (Verdict::Uncertain, UncertainMapping::Pessimistic) => Binary::Neg,
        (Verdict::Uncertain, UncertainMapping::Optimistic) => Binary::Pos,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiarRecord {
    pub id: String,
    pub label6: Label6,
    pub statement: String,
    pub subject: String,
    pub speaker: String,
    pub job: String,
    pub state: String,
    pub party: String,
    /// Historical credit-history columns, kept as written.
    pub counts: Vec<String>,
    pub context: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedLine {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LiarData {
    pub records: Vec<LiarRecord>,
    pub skipped: Vec<SkippedLine>,
}

pub fn load_liar(path: impl AsRef<Path>) -> Result<LiarData, EvalError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(io_err(path))?;
    read_liar(BufReader::new(file))
}

/// Parses tab-separated LIAR rows (no quoting). Rows with an unknown label,
/// an empty statement or too few columns are skipped and reported.
pub fn read_liar(reader: impl Read) -> Result<LiarData, EvalError> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .has_headers(false)
        .quoting(false)
        .flexible(true)
        .from_reader(reader);
    let mut data = LiarData::default();
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        let line = row.position().map(|p| p.line() as usize).unwrap_or(i + 1);
        let col = |k: usize| row.get(k).unwrap_or("").trim().to_string();
        if row.len() == 1 && col(0).is_empty() {
            continue;
        }
        if row.len() < 3 {
            data.skipped.push(SkippedLine { line, reason: format!("expected at least 3 columns, found {}", row.len()) });
            continue;
        }
        let label6 = match col(1).parse::<Label6>() {
            Ok(l) => l,
            Err(e) => {
                data.skipped.push(SkippedLine { line, reason: e.to_string() });
                continue;
            }
        };
        if col(2).is_empty() {
            data.skipped.push(SkippedLine { line, reason: "empty statement".into() });
            continue;
        }
        data.records.push(LiarRecord {
            id: col(0),
            label6,
            statement: col(2),
            subject: col(3),
            speaker: col(4),
            job: col(5),
            state: col(6),
            party: col(7),
            counts: (8..13).map(col).collect(),
            context: col(13),
        });
    }
    Ok(data)
}

/// `n` records chosen with a seeded ChaCha8 generator, kept in file order.
/// `n` at or above the record count returns everything.
pub fn sample_records(records: &[LiarRecord], n: usize, seed: u64) -> Vec<LiarRecord> {
    if n >= records.len() {
        return records.to_vec();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = index::sample(&mut rng, records.len(), n).into_vec();
    picked.sort_unstable();
    picked.into_iter().map(|i| records[i].clone()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub id: String,
    pub predicted3: Verdict,
    pub confidence: f64,
    pub gold_binary: Binary,
    pub pipeline: Mode,
}

/// Runs `predict` over every record (in parallel, results in input order).
pub fn run_benchmark<F>(records: &[LiarRecord], pipeline: Mode, predict: F) -> Vec<PredictionRecord>
where
    F: Fn(&LiarRecord) -> (Verdict, f64) + Sync,
{
    records
        .par_iter()
        .map(|r| {
            let (predicted3, confidence) = predict(r);
            PredictionRecord {
                id: r.id.clone(),
                predicted3,
                confidence: confidence.clamp(0.0, 1.0),
                gold_binary: to_binary(r.label6),
                pipeline,
            }
        })
        .collect()
}

/// Counts with `pos` as the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

/// F1 as `2tp / (2tp + fp + fn)`, taken as 0 when the denominator is 0.
pub fn f1(tp: usize, fp: usize, fn_: usize) -> f64 {
    let denom = 2 * tp + fp + fn_;
    if denom == 0 {
        0.0
    } else {
        2.0 * tp as f64 / denom as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub mapping: UncertainMapping,
    pub n: usize,
    pub accuracy: f64,
    pub macro_f1: f64,
    pub abstention_rate: f64,
    pub confusion: Confusion,
}

pub fn compute_metrics(preds: &[PredictionRecord], mapping: UncertainMapping) -> Result<MetricsSummary, EvalError> {
    if preds.is_empty() {
        return Err(EvalError::Empty);
    }
    let abstained = preds.iter().filter(|p| p.predicted3 == Verdict::Uncertain).count();
    let mut c = Confusion::default();
    for p in preds {
        match (map_uncertain(p.predicted3, mapping), p.gold_binary) {
            (Binary::Pos, Binary::Pos) => c.tp += 1,
            (Binary::Pos, Binary::Neg) => c.fp += 1,
            (Binary::Neg, Binary::Pos) => c.fn_ += 1,
            (Binary::Neg, Binary::Neg) => c.tn += 1,
        }
    }
    let n = preds.len() as f64;
    Ok(MetricsSummary {
        mapping,
        n: preds.len(),
        accuracy: (c.tp + c.tn) as f64 / n,
        macro_f1: (f1(c.tp, c.fp, c.fn_) + f1(c.tn, c.fn_, c.fp)) / 2.0,
        abstention_rate: abstained as f64 / n,
        confusion: c,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunInfo {
    pub split: String,
    pub pipeline: Mode,
    pub sample: Option<usize>,
    pub seed: Option<u64>,
    pub total_records: usize,
    pub skipped_lines: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct PredictionsHeader {
    schema_version: String,
    #[serde(flatten)]
    info: RunInfo,
}

/// Header line with run metadata, then one prediction per line.
pub fn write_predictions(path: impl AsRef<Path>, info: &RunInfo, preds: &[PredictionRecord]) -> Result<(), EvalError> {
    let path = path.as_ref();
    let mut out = BufWriter::new(File::create(path).map_err(io_err(path))?);
    let header = PredictionsHeader { schema_version: PREDICTIONS_SCHEMA.into(), info: info.clone() };
    let mut write = |v: String| writeln!(out, "{v}").map_err(io_err(path));
    write(serde_json::to_string(&header).expect("header serializes"))?;
    for p in preds {
        write(serde_json::to_string(p).expect("prediction serializes"))?;
    }
    out.flush().map_err(io_err(path))
}

pub fn read_predictions(path: impl AsRef<Path>) -> Result<(RunInfo, Vec<PredictionRecord>), EvalError> {
    let path = path.as_ref();
    let reader = BufReader::new(File::open(path).map_err(io_err(path))?);
    let mut info = None;
    let mut preds = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |e: serde_json::Error| EvalError::Malformed { line: i + 1, message: e.to_string() };
        if info.is_none() {
            let header: PredictionsHeader = serde_json::from_str(&line).map_err(malformed)?;
            if header.schema_version != PREDICTIONS_SCHEMA {
                return Err(EvalError::Malformed {
                    line: i + 1,
                    message: format!("unsupported schema `{}`", header.schema_version),
                });
            }
            info = Some(header.info);
        } else {
            preds.push(serde_json::from_str(&line).map_err(malformed)?);
        }
    }
    let info = info.ok_or(EvalError::Malformed { line: 1, message: "missing header".into() })?;
    Ok((info, preds))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub schema_version: String,
    #[serde(flatten)]
    pub info: RunInfo,
    pub summaries: Vec<MetricsSummary>,
}

impl MetricsReport {
    pub fn compute(info: RunInfo, preds: &[PredictionRecord], mappings: &[UncertainMapping]) -> Result<Self, EvalError> {
        let summaries = mappings.iter().map(|&m| compute_metrics(preds, m)).collect::<Result<_, _>>()?;
        Ok(Self { schema_version: METRICS_SCHEMA.into(), info, summaries })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), EvalError> {
        let path = path.as_ref();
        let mut text = serde_json::to_string_pretty(self).expect("metrics serialize");
        text.push('\n');
        std::fs::write(path, text).map_err(io_err(path))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pred(p: Verdict, gold: Binary) -> PredictionRecord {
        PredictionRecord { id: String::new(), predicted3: p, confidence: 0.5, gold_binary: gold, pipeline: Mode::Baseline }
    }

    #[test]
    fn label_mapping() {
        assert_eq!(to_binary(Label6::HalfTrue), Binary::Pos);
        assert_eq!(to_binary(Label6::BarelyTrue), Binary::Neg);
        assert_eq!(to_binary(Label6::PantsFire), Binary::Neg);
        assert_eq!(map_uncertain(Verdict::Uncertain, UncertainMapping::Pessimistic), Binary::Neg);
        assert_eq!(map_uncertain(Verdict::Uncertain, UncertainMapping::Optimistic), Binary::Pos);
        for m in UncertainMapping::BOTH {
            assert_eq!(map_uncertain(Verdict::True, m), Binary::Pos);
        }
    }

    #[test]
    fn loading_and_skips() {
        let tsv = "1.json\ttrue\tSays A.\teconomy\tjo\tmayor\tOhio\tdemocrat\t1\t2\t3\t4\t5\ta speech\n\
                   2.json\tmaybe\tSays B.\n\
                   3.json\tpants-fire\tSays C.\n\
                   4.json\thalf-true\tSays D.\thealth\n";
        let data = read_liar(tsv.as_bytes()).unwrap();
        assert_eq!(data.records.len(), 3);
        assert_eq!(data.skipped.len(), 1);
        assert_eq!(data.skipped[0].line, 2);
        assert!(data.skipped[0].reason.contains("maybe"));
        assert_eq!(data.records[0].context, "a speech");
        assert_eq!(data.records[0].counts, vec!["1", "2", "3", "4", "5"]);
        assert_eq!(data.records[2].subject, "health");
    }

    #[test]
    fn quotes_are_literal() {
        let tsv = "9.json\tfalse\tHe said \"never\" twice.\n";
        let data = read_liar(tsv.as_bytes()).unwrap();
        assert_eq!(data.records[0].statement, "He said \"never\" twice.");
    }

    #[test]
    fn worked_confusion_matrix() {
        use Binary::*;
        let preds = vec![
            pred(Verdict::True, Pos),
            pred(Verdict::True, Pos),
            pred(Verdict::True, Neg),
            pred(Verdict::False, Pos),
            pred(Verdict::False, Neg),
            pred(Verdict::False, Neg),
        ];
        let m = compute_metrics(&preds, UncertainMapping::Pessimistic).unwrap();
        assert_eq!(m.confusion, Confusion { tp: 2, fp: 1, fn_: 1, tn: 2 });
        assert!((m.accuracy - 4.0 / 6.0).abs() < 1e-12);
        assert!((m.macro_f1 - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_cases() {
        use Binary::*;
        let all_right = vec![pred(Verdict::True, Pos), pred(Verdict::False, Neg)];
        let m = compute_metrics(&all_right, UncertainMapping::Optimistic).unwrap();
        assert_eq!((m.accuracy, m.macro_f1), (1.0, 1.0));
        let all_u = vec![pred(Verdict::Uncertain, Pos), pred(Verdict::Uncertain, Neg), pred(Verdict::Uncertain, Neg)];
        let m = compute_metrics(&all_u, UncertainMapping::Pessimistic).unwrap();
        assert!((m.accuracy - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(m.abstention_rate, 1.0);
        // Nothing predicted positive and nothing gold positive: that class scores 0.
        let only_neg = vec![pred(Verdict::False, Neg)];
        assert_eq!(compute_metrics(&only_neg, UncertainMapping::Pessimistic).unwrap().macro_f1, 0.5);
        assert!(matches!(compute_metrics(&[], UncertainMapping::Optimistic), Err(EvalError::Empty)));
    }

    #[test]
    fn seeded_sampling_is_reproducible() {
        let records: Vec<LiarRecord> = (0..40)
            .map(|i| LiarRecord {
                id: format!("{i}"),
                label6: Label6::True,
                statement: format!("s{i}"),
                subject: String::new(),
                speaker: String::new(),
                job: String::new(),
                state: String::new(),
                party: String::new(),
                counts: Vec::new(),
                context: String::new(),
            })
            .collect();
        let a = sample_records(&records, 10, 7);
        assert_eq!(a, sample_records(&records, 10, 7));
        assert_eq!(a.len(), 10);
        assert_ne!(a, sample_records(&records, 10, 8));
        assert!(a.windows(2).all(|w| w[0].id.parse::<u32>().unwrap() < w[1].id.parse::<u32>().unwrap()));
        assert_eq!(sample_records(&records, 100, 7).len(), 40);
    }

    #[test]
    fn predictions_round_trip_and_rescore() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.jsonl");
        let info = RunInfo { split: "test".into(), pipeline: Mode::Research, sample: Some(2), seed: Some(7), total_records: 5, skipped_lines: 0 };
        let preds = vec![pred(Verdict::Uncertain, Binary::Pos), pred(Verdict::False, Binary::Neg)];
        write_predictions(&path, &info, &preds).unwrap();
        let (info2, preds2) = read_predictions(&path).unwrap();
        assert_eq!((info2, &preds2), (info.clone(), &preds));
        let a = MetricsReport::compute(info.clone(), &preds2, &UncertainMapping::BOTH).unwrap();
        let b = MetricsReport::compute(info, &preds2, &UncertainMapping::BOTH).unwrap();
        assert_eq!(a, b);
    }

    fn arb_preds() -> impl Strategy<Value = Vec<PredictionRecord>> {
        let verdict = prop_oneof![Just(Verdict::True), Just(Verdict::False), Just(Verdict::Uncertain)];
        let gold = prop_oneof![Just(Binary::Pos), Just(Binary::Neg)];
        prop::collection::vec((verdict, gold).prop_map(|(v, g)| pred(v, g)), 1..60)
    }

    #[test]
    fn per_item_resolution_can_beat_both_mappings() {
        use Binary::*;
        let preds = vec![pred(Verdict::Uncertain, Pos), pred(Verdict::Uncertain, Neg)];
        let p = compute_metrics(&preds, UncertainMapping::Pessimistic).unwrap();
        let o = compute_metrics(&preds, UncertainMapping::Optimistic).unwrap();
        let oracle = vec![pred(Verdict::True, Pos), pred(Verdict::False, Neg)];
        let r = compute_metrics(&oracle, UncertainMapping::Pessimistic).unwrap();
        assert_eq!((p.accuracy, o.accuracy, r.accuracy), (0.5, 0.5, 1.0));
    }

    proptest! {
        /// Any resolution of the abstentions lies between scoring them all
        /// wrong and all right, and the two mappings split the abstentions
        /// between them.
        #[test]
        fn resolutions_are_bounded_by_abstention_count(preds in arb_preds(), choices in prop::collection::vec(any::<bool>(), 60)) {
            let p = compute_metrics(&preds, UncertainMapping::Pessimistic).unwrap();
            let o = compute_metrics(&preds, UncertainMapping::Optimistic).unwrap();
            prop_assert_eq!(p.abstention_rate, o.abstention_rate);
            let n = preds.len() as f64;
            let committed_correct = preds.iter().filter(|x| {
                x.predicted3 != Verdict::Uncertain && map_uncertain(x.predicted3, UncertainMapping::Pessimistic) == x.gold_binary
            }).count() as f64;
            let abstained = p.abstention_rate * n;
            prop_assert!((p.accuracy + o.accuracy - (2.0 * committed_correct + abstained) / n).abs() < 1e-9);
            let resolved: Vec<PredictionRecord> = preds.iter().zip(&choices).map(|(x, &c)| {
                let mut y = x.clone();
                if y.predicted3 == Verdict::Uncertain {
                    y.predicted3 = if c { Verdict::True } else { Verdict::False };
                }
                y
            }).collect();
            let r = compute_metrics(&resolved, UncertainMapping::Pessimistic).unwrap();
            prop_assert!(r.accuracy >= committed_correct / n - 1e-12);
            prop_assert!(r.accuracy <= (committed_correct + abstained) / n + 1e-12);
        }
    }
}
