//! Writing tables and charts for an [`AnalysisReport`].
//!
//! Layout under the output directory:
//!
//! * `distributions.csv` with header `agent,condition,parent,adult,child,total,fallbacks`
//! * `transactions_summary.csv`
//! * `transactions/<condition>/dialogue-<n>.csv`
//! * `charts/<agent>_<condition>.svg` and `charts/panel.svg`
//!   (rows: memory_on then memory_off; columns: agents)

use std::fs;
use std::path::{Path, PathBuf};

use super::analysis::{AnalysisReport, EgoStateDistribution};
use super::chart;
use crate::types::Condition;

pub const DISTRIBUTION_HEADER: [&str; 7] = ["agent", "condition", "parent", "adult", "child", "total", "fallbacks"];

#[derive(Debug, thiserror::Error)]
pub enum ExportError {
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("csv error on {path}: {source}")]
    Csv { path: String, source: csv::Error },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ExportError + '_ {
    move |source| ExportError::Io { path: path.display().to_string(), source }
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), ExportError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    fs::write(path, contents).map_err(io_err(path))
}

fn csv_bytes<I, R>(path: &Path, header: &[&str], rows: I) -> Result<Vec<u8>, ExportError>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let csv_err = |source| ExportError::Csv { path: path.display().to_string(), source };
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(row.into_iter().collect::<Vec<_>>()).map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| ExportError::Io { path: path.display().to_string(), source: e.into_error() })
}

pub fn distribution_row(d: &EgoStateDistribution) -> Vec<String> {
    vec![
        d.agent_name.clone(),
        d.condition.map(|c| c.to_string()).unwrap_or_default(),
        d.counts.parent.to_string(),
        d.counts.adult.to_string(),
        d.counts.child.to_string(),
        d.total.to_string(),
        d.fallbacks.to_string(),
    ]
}

/// File-name-safe agent slug.
pub fn slug(name: &str) -> String {
    let s: String = name.chars().map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '_' }).collect();
    if s.is_empty() { "agent".into() } else { s }
}

/// Write all tables and charts. Returns the written paths in write order.
pub fn export_results(report: &AnalysisReport, out_dir: &Path) -> Result<Vec<PathBuf>, ExportError> {
    let mut written = Vec::new();

    let path = out_dir.join("distributions.csv");
    let bytes = csv_bytes(&path, &DISTRIBUTION_HEADER, report.distributions.iter().map(distribution_row))?;
    write_file(&path, &bytes)?;
    written.push(path);

    let path = out_dir.join("transactions_summary.csv");
    let rows = report.transactions.iter().map(|ct| {
        vec![
            ct.condition.to_string(),
            ct.tally.complementary.to_string(),
            ct.tally.crossed.to_string(),
            ct.tally.unclassified.to_string(),
            ct.tally.parent_to_child.to_string(),
        ]
    });
    let bytes = csv_bytes(&path, &["condition", "complementary", "crossed", "unclassified", "parent_to_child"], rows)?;
    write_file(&path, &bytes)?;
    written.push(path);

    for ct in &report.transactions {
        for dt in &ct.dialogues {
            let path = out_dir.join("transactions").join(ct.condition.as_str()).join(format!("dialogue-{}.csv", dt.dialogue));
            let rows = dt.annotations.iter().map(|a| {
                vec![
                    a.turn_index.to_string(),
                    a.speaker.clone(),
                    a.kind.as_str().to_string(),
                    a.prev_target.map(|s| s.to_string()).unwrap_or_default(),
                    a.cur_source.to_string(),
                ]
            });
            let bytes = csv_bytes(&path, &["turn_index", "speaker", "kind", "prev_target", "cur_source"], rows)?;
            write_file(&path, &bytes)?;
            written.push(path);
        }
    }

    let charts = out_dir.join("charts");
    for d in &report.distributions {
        let condition = d.condition.map(Condition::as_str).unwrap_or("all");
        let path = charts.join(format!("{}_{}.svg", slug(&d.agent_name), condition));
        write_file(&path, chart::distribution_svg(d).as_bytes())?;
        written.push(path);
    }
    let rows: Vec<Vec<&EgoStateDistribution>> = Condition::ALL
        .into_iter()
        .filter(|c| report.distributions.iter().any(|d| d.condition == Some(*c)))
        .map(|c| report.agents.iter().filter_map(|a| report.distribution(a, c)).collect())
        .collect();
    let path = charts.join("panel.svg");
    write_file(&path, chart::panel_grid_svg(&rows).as_bytes())?;
    written.push(path);

    Ok(written)
}
