//! Per-episode JSON-lines training logs.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpisodeRecord {
    pub episode: usize,
    pub steps: usize,
    #[serde(rename = "return")]
    pub episode_return: f64,
    /// Greedy-rollout return when this episode was followed by an
    /// evaluation.
    pub eval_return: Option<f64>,
    pub wall_ms: Option<u64>,
}

pub fn to_json_line(record: &EpisodeRecord) -> String {
    let mut line = serde_json::to_string(record).expect("metrics records always serialize");
    line.push('\n');
    line
}

/// Parses a metrics log; blank lines are ignored.
pub fn parse_metrics(text: &str, origin: &Path) -> Result<Vec<EpisodeRecord>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                path: origin.to_path_buf(),
                line: i + 1,
                column: e.column(),
                message: e.to_string(),
            })
        })
        .collect()
}

pub fn read_metrics(path: &Path) -> Result<Vec<EpisodeRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_metrics(&text, path)
}

/// `episode,steps,return` rows for plotting.
pub fn write_metrics_csv<W: Write>(records: &[EpisodeRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["episode", "steps", "return"])?;
    for r in records {
        w.write_record([r.episode.to_string(), r.steps.to_string(), r.episode_return.to_string()])?;
    }
    w.flush().map_err(|e| Error::io("<metrics csv>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(k: usize) -> EpisodeRecord {
        EpisodeRecord {
            episode: k,
            steps: 10 - k,
            episode_return: -0.25 * k as f64,
            eval_return: (k == 2).then_some(0.0),
            wall_ms: None,
        }
    }

    #[test]
    fn log_round_trip_and_csv() {
        let text: String = (1..=3).map(|k| to_json_line(&rec(k))).collect();
        assert!(text.starts_with("{\"episode\":1,\"steps\":9,\"return\":-0.25,\"eval_return\":null,\"wall_ms\":null}\n"));
        let back = parse_metrics(&text, Path::new("m.jsonl")).unwrap();
        assert_eq!(back, (1..=3).map(rec).collect::<Vec<_>>());
        let mut csv = Vec::new();
        write_metrics_csv(&back, &mut csv).unwrap();
        let csv = String::from_utf8(csv).unwrap();
        assert_eq!(csv.lines().count(), 4);
        assert_eq!(csv.lines().nth(1), Some("1,9,-0.25"));
    }

    #[test]
    fn empty_log_gives_header_only() {
        let mut csv = Vec::new();
        write_metrics_csv(&parse_metrics("", Path::new("m")).unwrap(), &mut csv).unwrap();
        assert_eq!(String::from_utf8(csv).unwrap(), "episode,steps,return\n");
    }

    #[test]
    fn malformed_line_is_named() {
        let text = format!("{}{{\"episode\": 2\n", to_json_line(&rec(1)));
        let err = parse_metrics(&text, Path::new("m.jsonl")).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }
}
