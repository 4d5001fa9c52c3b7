use std::io::Write;

use super::RewardBreakdown;
use crate::error::Result;

/// Writes one CSV row per screened contingency:
/// `contingency_id,converged,worst_line,excess_mw,contribution`.
///
/// `worst_line` is empty when the outage leaves every monitored line under
/// its threshold; `excess_mw` is the worst line's excess.
pub fn write_contingency_report<W: Write>(breakdown: &RewardBreakdown, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["contingency_id", "converged", "worst_line", "excess_mw", "contribution"])?;
    for c in &breakdown.contingencies {
        let (worst, excess) = match c.worst() {
            Some(e) => (e.branch_id.to_string(), e.excess_mw),
            None => (String::new(), 0.0),
        };
        w.write_record([
            c.branch_id.to_string(),
            c.converged.to_string(),
            worst,
            excess.to_string(),
            c.contribution.to_string(),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}
