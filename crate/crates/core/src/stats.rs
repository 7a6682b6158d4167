//! Token statistics: per-image entropy and sparsity, corpus utilization,
//! correlations between statistics, and a CSV report format.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use crate::error::{CodecError, Result};
use crate::grid::TokenGrid;

/// Report columns, in file order.
pub const REPORT_HEADER: [&str; 8] = [
    "name",
    "bits",
    "entropy_bits",
    "unique_tokens",
    "total_tokens",
    "sparsity",
    "mean_token_value",
    "utilization",
];

/// Separator row between the per-image rows and the histogram block.
pub const HISTOGRAM_MARKER: &str = "#histogram";

/// Statistics that enter [`correlation_matrix`], in row/column order.
pub const CORRELATED_STATS: [&str; 4] = [
    "entropy_bits",
    "sparsity",
    "unique_tokens",
    "mean_token_value",
];

#[derive(Debug, Clone, PartialEq)]
pub struct StatsReport {
    pub name: String,
    pub bits: u32,
    /// Empirical Shannon entropy of the token histogram.
    pub entropy_bits: f64,
    pub unique_tokens: u64,
    pub total_tokens: u64,
    /// `unique / 2^L`.
    pub sparsity: f64,
    pub mean_token_value: f64,
    /// `unique / min(total, 2^L)`: the share of the reachable codebook used.
    pub utilization: f64,
    /// Token value → occurrence count.
    pub histogram: BTreeMap<u64, u64>,
}

fn codebook_size(bits: u32) -> f64 {
    2f64.powi(bits as i32)
}

/// Shannon entropy in bits of a count histogram.
pub fn histogram_entropy<'a>(counts: impl IntoIterator<Item = &'a u64>) -> f64 {
    let counts: Vec<f64> = counts.into_iter().map(|&c| c as f64).collect();
    let n: f64 = counts.iter().sum();
    if n == 0.0 {
        return 0.0;
    }
    let h: f64 = counts
        .iter()
        .filter(|&&c| c > 0.0)
        .map(|&c| {
            let p = c / n;
            -p * p.log2()
        })
        .sum();
    h.max(0.0)
}

pub fn compute_stats(name: &str, grid: &TokenGrid) -> Result<StatsReport> {
    if grid.is_empty() {
        return Err(CodecError::Domain(
            "statistics of an empty token grid".into(),
        ));
    }
    let mut histogram = BTreeMap::new();
    for &t in grid.tokens() {
        *histogram.entry(t).or_insert(0u64) += 1;
    }
    let total = grid.len() as u64;
    let unique = histogram.len() as u64;
    let bits = grid.bits();
    let entropy = histogram_entropy(histogram.values())
        .min((unique as f64).log2())
        .min(bits as f64);
    let mean = grid.tokens().iter().map(|&t| t as f64).sum::<f64>() / total as f64;
    let reachable = (total as f64).min(codebook_size(bits));
    Ok(StatsReport {
        name: name.to_owned(),
        bits,
        entropy_bits: entropy,
        unique_tokens: unique,
        total_tokens: total,
        sparsity: unique as f64 / codebook_size(bits),
        mean_token_value: mean,
        utilization: unique as f64 / reachable,
        histogram,
    })
}

/// Distinct tokens across the corpus divided by `2^L`.
pub fn corpus_utilization(grids: &[TokenGrid]) -> Result<f64> {
    let first = grids
        .first()
        .ok_or_else(|| CodecError::Domain("utilization of an empty corpus".into()))?;
    let bits = first.bits();
    let mut seen = BTreeSet::new();
    for g in grids {
        if g.bits() != bits {
            return Err(CodecError::Domain(format!(
                "corpus mixes {bits}-bit and {}-bit grids",
                g.bits()
            )));
        }
        seen.extend(g.tokens().iter().copied());
    }
    Ok(seen.len() as f64 / codebook_size(bits))
}

/// Corpus utilization from reports, using their histograms.
pub fn report_utilization(reports: &[StatsReport]) -> Result<f64> {
    let first = reports
        .first()
        .ok_or_else(|| CodecError::Domain("utilization of an empty corpus".into()))?;
    if let Some(r) = reports.iter().find(|r| r.bits != first.bits) {
        return Err(CodecError::Domain(format!(
            "corpus mixes {}-bit and {}-bit reports",
            first.bits, r.bits
        )));
    }
    let seen: BTreeSet<u64> = reports
        .iter()
        .flat_map(|r| r.histogram.keys().copied())
        .collect();
    Ok(seen.len() as f64 / codebook_size(first.bits))
}

/// Pearson correlation; `None` when either column has zero variance.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Pearson correlations among [`CORRELATED_STATS`]. Undefined entries
/// (zero-variance statistics) are `None`.
pub fn correlation_matrix(reports: &[StatsReport]) -> Result<Vec<Vec<Option<f64>>>> {
    if reports.len() < 3 {
        return Err(CodecError::Domain(format!(
            "correlation needs at least 3 reports, got {}",
            reports.len()
        )));
    }
    let cols: [Vec<f64>; 4] = [
        reports.iter().map(|r| r.entropy_bits).collect(),
        reports.iter().map(|r| r.sparsity).collect(),
        reports.iter().map(|r| r.unique_tokens as f64).collect(),
        reports.iter().map(|r| r.mean_token_value).collect(),
    ];
    let k = cols.len();
    let mut m = vec![vec![None; k]; k];
    for i in 0..k {
        for j in i..k {
            let r = if i == j {
                pearson(&cols[i], &cols[i]).map(|_| 1.0)
            } else {
                pearson(&cols[i], &cols[j])
            };
            m[i][j] = r;
            m[j][i] = r;
        }
    }
    Ok(m)
}

/// Writes reports as CSV: fixed header, one row per report, then a
/// `#histogram` block of `row,token,count` rows, `row` indexing the reports
/// from 0. No reports gives a header-only file.
pub fn write_report<W: std::io::Write>(reports: &[StatsReport], out: W) -> Result<()> {
    let fmt_err = |e: csv::Error| CodecError::Format(format!("report: {e}"));
    let mut w = csv::WriterBuilder::new().flexible(true).from_writer(out);
    w.write_record(REPORT_HEADER).map_err(fmt_err)?;
    for r in reports {
        w.write_record([
            r.name.clone(),
            r.bits.to_string(),
            r.entropy_bits.to_string(),
            r.unique_tokens.to_string(),
            r.total_tokens.to_string(),
            r.sparsity.to_string(),
            r.mean_token_value.to_string(),
            r.utilization.to_string(),
        ])
        .map_err(fmt_err)?;
    }
    if !reports.is_empty() {
        w.write_record([HISTOGRAM_MARKER]).map_err(fmt_err)?;
        for (i, r) in reports.iter().enumerate() {
            for (t, c) in &r.histogram {
                w.write_record([i.to_string(), t.to_string(), c.to_string()])
                    .map_err(fmt_err)?;
            }
        }
    }
    w.flush()
        .map_err(|e| CodecError::Format(format!("report: {e}")))?;
    Ok(())
}

pub fn report_to_string(reports: &[StatsReport]) -> Result<String> {
    let mut buf = Vec::new();
    write_report(reports, &mut buf)?;
    String::from_utf8(buf).map_err(|e| CodecError::Format(e.to_string()))
}

/// Atomically writes a report file.
pub fn export_report(reports: &[StatsReport], path: &Path) -> Result<()> {
    crate::io::write_atomic(path, report_to_string(reports)?.as_bytes())
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, line: u64) -> Result<T> {
    let raw = rec
        .get(i)
        .ok_or_else(|| CodecError::Format(format!("report line {line}: missing column {i}")))?;
    raw.parse()
        .map_err(|_| CodecError::Format(format!("report line {line}: bad value {raw:?}")))
}

pub fn parse_report(text: &str) -> Result<Vec<StatsReport>> {
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .has_headers(false)
        .from_reader(text.as_bytes());
    let mut records = rdr.records();
    let header = records
        .next()
        .ok_or_else(|| CodecError::Format("report is empty".into()))?
        .map_err(|e| CodecError::Format(format!("report: {e}")))?;
    if header.iter().ne(REPORT_HEADER.iter().copied()) {
        return Err(CodecError::Format("report header mismatch".into()));
    }
    let mut reports: Vec<StatsReport> = Vec::new();
    let mut in_histogram = false;
    for rec in records {
        let rec = rec.map_err(|e| CodecError::Format(format!("report: {e}")))?;
        let line = rec.position().map_or(0, |p| p.line());
        if !in_histogram {
            if rec.len() == 1 && &rec[0] == HISTOGRAM_MARKER {
                in_histogram = true;
                continue;
            }
            if rec.len() != REPORT_HEADER.len() {
                return Err(CodecError::Format(format!(
                    "report line {line}: expected {} columns",
                    REPORT_HEADER.len()
                )));
            }
            reports.push(StatsReport {
                name: rec[0].to_owned(),
                bits: field(&rec, 1, line)?,
                entropy_bits: field(&rec, 2, line)?,
                unique_tokens: field(&rec, 3, line)?,
                total_tokens: field(&rec, 4, line)?,
                sparsity: field(&rec, 5, line)?,
                mean_token_value: field(&rec, 6, line)?,
                utilization: field(&rec, 7, line)?,
                histogram: BTreeMap::new(),
            });
        } else {
            if rec.len() != 3 {
                return Err(CodecError::Format(format!(
                    "report line {line}: histogram rows have 3 columns"
                )));
            }
            let row: usize = field(&rec, 0, line)?;
            let report = reports.get_mut(row).ok_or_else(|| {
                CodecError::Format(format!("report line {line}: no report row {row}"))
            })?;
            report
                .histogram
                .insert(field(&rec, 1, line)?, field(&rec, 2, line)?);
        }
    }
    Ok(reports)
}

pub fn read_report(path: &Path) -> Result<Vec<StatsReport>> {
    let text = std::fs::read_to_string(path).map_err(|e| CodecError::io(path, e))?;
    parse_report(&text)
}
