//! Norm balance and prototype separation diagnostics, plus the CSV files that
//! carry them.
//!
//! File layouts (headers included, undefined values left empty):
//!
//! - `norms.csv`: `class,count,norm`
//! - `separation.csv`: `iteration,group,mean_dist,mean_cos`, one row per
//!   recorded iteration and pair group (`all-all`, `head-head`, `head-tail`,
//!   `tail-tail`)
//! - trace CSV: `iteration,loss,` then `<group>_dist,<group>_cos` for the four
//!   groups (underscored names, e.g. `head_tail_dist`), then `norm_0..norm_{K-1}`

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::dataset::{split_classes, ClassStats, SplitGroup, SplitThresholds};
use crate::error::{Error, Result};
use crate::linalg::{dot, squared_distance, Matrix};
use crate::trainer::{TraceRecord, TrainTrace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ClassGroup {
    Head,
    Tail,
    /// Neither head nor tail; only counted in All-All.
    Other,
}

/// Head = Many split, Tail = Few split, everything else Other.
pub fn head_tail_groups(stats: &ClassStats, th: &SplitThresholds) -> Vec<ClassGroup> {
    split_classes(stats, th)
        .into_iter()
        .map(|g| match g {
            SplitGroup::Many => ClassGroup::Head,
            SplitGroup::Few => ClassGroup::Tail,
            SplitGroup::Med => ClassGroup::Other,
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PairGroup {
    AllAll,
    HeadHead,
    HeadTail,
    TailTail,
}

impl PairGroup {
    pub const ALL: [PairGroup; 4] = [
        PairGroup::AllAll,
        PairGroup::HeadHead,
        PairGroup::HeadTail,
        PairGroup::TailTail,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PairGroup::AllAll => "all-all",
            PairGroup::HeadHead => "head-head",
            PairGroup::HeadTail => "head-tail",
            PairGroup::TailTail => "tail-tail",
        }
    }

    fn column(self) -> &'static str {
        match self {
            PairGroup::AllAll => "all_all",
            PairGroup::HeadHead => "head_head",
            PairGroup::HeadTail => "head_tail",
            PairGroup::TailTail => "tail_tail",
        }
    }

    /// Group of the unordered class pair `(a, b)`, other than All-All.
    pub fn of(a: ClassGroup, b: ClassGroup) -> Option<PairGroup> {
        use ClassGroup::*;
        match (a, b) {
            (Head, Head) => Some(PairGroup::HeadHead),
            (Tail, Tail) => Some(PairGroup::TailTail),
            (Head, Tail) | (Tail, Head) => Some(PairGroup::HeadTail),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SeparationStat {
    /// Mean Euclidean distance over distinct pairs; `None` without pairs.
    pub mean_dist: Option<f64>,
    /// Mean cosine similarity over distinct pairs of nonzero vectors.
    pub mean_cos: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SeparationReport {
    stats: [SeparationStat; 4],
}

impl SeparationReport {
    pub fn get(&self, group: PairGroup) -> SeparationStat {
        self.stats[group as usize]
    }

    pub fn set(&mut self, group: PairGroup, stat: SeparationStat) {
        self.stats[group as usize] = stat;
    }
}

#[derive(Default, Clone, Copy)]
struct Acc {
    dist: f64,
    pairs: usize,
    cos: f64,
    cos_pairs: usize,
}

impl Acc {
    fn finish(self) -> SeparationStat {
        SeparationStat {
            mean_dist: (self.pairs > 0).then(|| self.dist / self.pairs as f64),
            mean_cos: (self.cos_pairs > 0).then(|| self.cos / self.cos_pairs as f64),
        }
    }
}

/// Mean pairwise Euclidean distance and cosine similarity of the rows of
/// `prototypes`, per pair group. Cosine uses the raw, uncentered vectors.
pub fn separation_report(prototypes: &Matrix, groups: &[ClassGroup]) -> Result<SeparationReport> {
    if groups.len() != prototypes.rows() {
        return Err(Error::DimensionMismatch {
            expected: prototypes.rows(),
            got: groups.len(),
        });
    }
    let norms = prototypes.row_norms();
    let mut acc = [Acc::default(); 4];
    for a in 0..prototypes.rows() {
        for b in a + 1..prototypes.rows() {
            let (ra, rb) = (prototypes.row(a), prototypes.row(b));
            let dist = squared_distance(ra, rb).sqrt();
            let cos =
                (norms[a] > 0.0 && norms[b] > 0.0).then(|| dot(ra, rb) / (norms[a] * norms[b]));
            let mut add = |g: PairGroup| {
                let s = &mut acc[g as usize];
                s.dist += dist;
                s.pairs += 1;
                if let Some(c) = cos {
                    s.cos += c;
                    s.cos_pairs += 1;
                }
            };
            add(PairGroup::AllAll);
            if let Some(g) = PairGroup::of(groups[a], groups[b]) {
                add(g);
            }
        }
    }
    Ok(SeparationReport {
        stats: acc.map(Acc::finish),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormReport {
    pub norms: Vec<f64>,
    pub counts: Vec<usize>,
    /// Coefficient of variation (population std / mean) of the norms.
    pub cov: f64,
    /// Spearman rank correlation between norm and class size.
    pub spearman: f64,
    /// Set when either ranking is constant; `spearman` is then reported as 0.
    pub spearman_degenerate: bool,
}

pub fn norm_report(vectors: &Matrix, stats: &ClassStats) -> Result<NormReport> {
    if vectors.rows() != stats.num_classes() {
        return Err(Error::DimensionMismatch {
            expected: stats.num_classes(),
            got: vectors.rows(),
        });
    }
    if vectors.rows() < 2 {
        return Err(Error::InvalidConfig(
            "norm report needs at least two classes".into(),
        ));
    }
    let norms = vectors.row_norms();
    let sizes: Vec<f64> = stats.counts.iter().map(|&n| n as f64).collect();
    let (spearman, degenerate) = match spearman(&norms, &sizes) {
        Some(r) => (r, false),
        None => (0.0, true),
    };
    Ok(NormReport {
        cov: coefficient_of_variation(&norms),
        norms,
        counts: stats.counts.clone(),
        spearman,
        spearman_degenerate: degenerate,
    })
}

pub fn coefficient_of_variation(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    if mean == 0.0 {
        return 0.0;
    }
    var.sqrt() / mean.abs()
}

/// Ranks starting at 1, ties sharing their average rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            ranks[o] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Pearson correlation of average ranks; `None` if either side is constant.
pub fn spearman(a: &[f64], b: &[f64]) -> Option<f64> {
    assert_eq!(a.len(), b.len(), "spearman inputs differ in length");
    let (ra, rb) = (average_ranks(a), average_ranks(b));
    let n = ra.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in ra.iter().zip(&rb) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va == 0.0 || vb == 0.0 {
        return None;
    }
    Some(cov / (va * vb).sqrt())
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_norms_csv<W: Write>(report: &NormReport, mut out: W) -> Result<()> {
    writeln!(out, "class,count,norm")?;
    for (class, (count, n)) in report.counts.iter().zip(&report.norms).enumerate() {
        writeln!(out, "{class},{count},{n}")?;
    }
    Ok(())
}

pub fn write_separation_csv<W: Write>(trace: &TrainTrace, mut out: W) -> Result<()> {
    writeln!(out, "iteration,group,mean_dist,mean_cos")?;
    for r in &trace.records {
        for g in PairGroup::ALL {
            let s = r.separation.get(g);
            writeln!(
                out,
                "{},{},{},{}",
                r.iteration,
                g.name(),
                opt(s.mean_dist),
                opt(s.mean_cos)
            )?;
        }
    }
    Ok(())
}

pub fn write_trace_csv<W: Write>(trace: &TrainTrace, mut out: W) -> Result<()> {
    let k = trace.records.first().map_or(0, |r| r.norms.len());
    let mut header = vec!["iteration".to_string(), "loss".to_string()];
    for g in PairGroup::ALL {
        header.push(format!("{}_dist", g.column()));
        header.push(format!("{}_cos", g.column()));
    }
    header.extend((0..k).map(|i| format!("norm_{i}")));
    writeln!(out, "{}", header.join(","))?;
    for r in &trace.records {
        if r.norms.len() != k {
            return Err(Error::MalformedTrace(
                "records disagree on class count".into(),
            ));
        }
        let mut row = vec![r.iteration.to_string(), r.loss.to_string()];
        for g in PairGroup::ALL {
            let s = r.separation.get(g);
            row.push(opt(s.mean_dist));
            row.push(opt(s.mean_cos));
        }
        row.extend(r.norms.iter().map(f64::to_string));
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

/// Parses a trace CSV produced by [`write_trace_csv`].
pub fn read_trace_csv<R: Read>(reader: R) -> Result<TrainTrace> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::MalformedTrace(e.to_string()))?
        .clone();
    let fixed = 2 + 2 * PairGroup::ALL.len();
    if headers.len() < fixed || &headers[0] != "iteration" || &headers[1] != "loss" {
        return Err(Error::MalformedTrace("unexpected header".into()));
    }
    let k = headers.len() - fixed;
    for (i, h) in headers.iter().skip(fixed).enumerate() {
        if h != format!("norm_{i}") {
            return Err(Error::MalformedTrace(format!("unexpected column {h:?}")));
        }
    }

    let num = |field: &str, line: usize| -> Result<f64> {
        let v: f64 = field
            .parse()
            .map_err(|_| Error::MalformedTrace(format!("line {line}: not a number: {field:?}")))?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::MalformedTrace(format!(
                "line {line}: non-finite value"
            )))
        }
    };
    let maybe = |field: &str, line: usize| -> Result<Option<f64>> {
        if field.is_empty() {
            Ok(None)
        } else {
            num(field, line).map(Some)
        }
    };

    let mut trace = TrainTrace::default();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::MalformedTrace(e.to_string()))?;
        if rec.len() != fixed + k {
            return Err(Error::MalformedTrace(format!(
                "line {line}: wrong field count"
            )));
        }
        let iteration: usize = rec[0].parse().map_err(|_| {
            Error::MalformedTrace(format!("line {line}: bad iteration {:?}", &rec[0]))
        })?;
        if trace
            .records
            .last()
            .is_some_and(|r: &TraceRecord| r.iteration >= iteration)
        {
            return Err(Error::MalformedTrace(format!(
                "line {line}: iterations not increasing"
            )));
        }
        let loss = num(&rec[1], line)?;
        let mut separation = SeparationReport::default();
        for (gi, g) in PairGroup::ALL.into_iter().enumerate() {
            separation.set(
                g,
                SeparationStat {
                    mean_dist: maybe(&rec[2 + 2 * gi], line)?,
                    mean_cos: maybe(&rec[3 + 2 * gi], line)?,
                },
            );
        }
        let norms = (fixed..fixed + k)
            .map(|i| num(&rec[i], line))
            .collect::<Result<_>>()?;
        trace.records.push(TraceRecord {
            iteration,
            loss,
            norms,
            separation,
        });
    }
    Ok(trace)
}
