use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::EvalError;

/// Counts at one step index (1-based).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PositionStat {
    pub step: usize,
    pub prefixes: u64,
    pub errors: u64,
}

impl PositionStat {
    pub fn rate(&self) -> f64 {
        if self.prefixes == 0 {
            0.0
        } else {
            self.errors as f64 / self.prefixes as f64
        }
    }
}

/// Integer error counts; rates are derived by a single division.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    pub hop: u8,
    pub total_prefixes: u64,
    pub errors: u64,
    pub error_rate: f64,
    pub per_position: Vec<PositionStat>,
    pub dataset_id: String,
    pub checkpoint_id: String,
    /// Extra provenance written with the summary record.
    pub provenance: Vec<(String, String)>,
}

impl ErrorReport {
    pub fn from_positions(hop: u8, per_position: Vec<PositionStat>, dataset_id: String, checkpoint_id: String) -> Self {
        let total_prefixes = per_position.iter().map(|p| p.prefixes).sum();
        let errors = per_position.iter().map(|p| p.errors).sum();
        let error_rate = if total_prefixes == 0 { 0.0 } else { errors as f64 / total_prefixes as f64 };
        ErrorReport {
            hop,
            total_prefixes,
            errors,
            error_rate,
            per_position,
            dataset_id,
            checkpoint_id,
            provenance: Vec::new(),
        }
    }

    /// `(step, rate)` pairs.
    pub fn per_position_breakdown(&self) -> Vec<(usize, f64)> {
        self.per_position.iter().map(|p| (p.step, p.rate())).collect()
    }

    pub fn with_provenance(mut self, key: &str, value: impl ToString) -> Self {
        self.provenance.push((key.to_string(), value.to_string()));
        self
    }

    /// One `key=value` record per line: a summary line, then one line per step.
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "record=summary hop={} prefixes={} errors={} rate={} dataset={} checkpoint={}",
            self.hop, self.total_prefixes, self.errors, self.error_rate, self.dataset_id, self.checkpoint_id
        );
        for (k, v) in &self.provenance {
            write!(out, " {k}={v}").unwrap();
        }
        out.push('\n');
        for p in &self.per_position {
            writeln!(out, "record=position step={} prefixes={} errors={} rate={}", p.step, p.prefixes, p.errors, p.rate())
                .unwrap();
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, EvalError> {
        let bad = |m: &str| EvalError::Report(m.to_string());
        let mut summary = None;
        let mut positions = Vec::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let fields: Vec<(&str, &str)> = line
                .split_whitespace()
                .map(|kv| kv.split_once('=').ok_or_else(|| bad(kv)))
                .collect::<Result<_, _>>()?;
            let get = |key: &str| fields.iter().find(|(k, _)| *k == key).map(|(_, v)| *v).ok_or_else(|| bad(key));
            let num = |key: &str| get(key)?.parse::<u64>().map_err(|_| bad(key));
            match get("record")? {
                "summary" => summary = Some((get("hop")?.parse::<u8>().map_err(|_| bad("hop"))?, fields.clone())),
                "position" => positions.push(PositionStat {
                    step: num("step")? as usize,
                    prefixes: num("prefixes")?,
                    errors: num("errors")?,
                }),
                other => return Err(bad(other)),
            }
        }
        let (hop, fields) = summary.ok_or_else(|| bad("missing summary record"))?;
        let take = |key: &str| fields.iter().find(|(k, _)| *k == key).map(|(_, v)| v.to_string()).unwrap_or_default();
        let mut report = ErrorReport::from_positions(hop, positions, take("dataset"), take("checkpoint"));
        const CORE: [&str; 7] = ["record", "hop", "prefixes", "errors", "rate", "dataset", "checkpoint"];
        report.provenance = fields
            .iter()
            .filter(|(k, _)| !CORE.contains(k))
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect();
        if take("prefixes").parse::<u64>().ok() != Some(report.total_prefixes)
            || take("errors").parse::<u64>().ok() != Some(report.errors)
        {
            return Err(bad("summary counts disagree with per-step records"));
        }
        Ok(report)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), EvalError> {
        fs::write(path, self.to_text())?;
        Ok(())
    }
}

pub fn read_report(path: impl AsRef<Path>) -> Result<ErrorReport, EvalError> {
    ErrorReport::parse(&fs::read_to_string(path)?)
}

/// One row of the aggregate table.
#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub model: String,
    pub scale: String,
    pub hop: u8,
    /// `None` when the cell failed; the message is kept in `error`.
    pub report: Option<ErrorReport>,
    pub error: Option<String>,
}

/// Tab-separated table with columns `model scale hop prefixes errors rate`;
/// failed cells carry `NA` counts.
pub fn write_table(rows: &[TableRow]) -> String {
    let mut out = String::from("model\tscale\thop\tprefixes\terrors\trate\n");
    for r in rows {
        match &r.report {
            Some(rep) => writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{:.6}",
                r.model, r.scale, r.hop, rep.total_prefixes, rep.errors, rep.error_rate
            ),
            None => writeln!(out, "{}\t{}\t{}\tNA\tNA\tNA", r.model, r.scale, r.hop),
        }
        .unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let r = ErrorReport::from_positions(
            2,
            vec![PositionStat { step: 1, prefixes: 3, errors: 1 }, PositionStat { step: 2, prefixes: 3, errors: 2 }],
            "d".into(),
            "c".into(),
        )
        .with_provenance("manifest", "abc");
        assert_eq!(r.errors, 3);
        assert_eq!(r.error_rate, 0.5);
        assert_eq!(ErrorReport::parse(&r.to_text()).unwrap(), r);
    }
}
