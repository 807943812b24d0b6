//! CSV and JSON emission. All values are in natural units.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use mwgrav::sequences::{Column, PulseDurationSweep, ResolutionSweep};
use mwgrav::{FisherTrace, Spinor};

use crate::CliError;

fn num(x: f64) -> String {
    format!("{x:.8e}")
}

fn cell(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

pub fn trace_csv(trace: &FisherTrace) -> String {
    let t_pi = trace.metadata.config.t_pi;
    let mut out = String::from("t_over_Tpi");
    for c in Column::ALL {
        out.push(',');
        out.push_str(c.header());
    }
    out.push('\n');
    for row in &trace.rows {
        out.push_str(&num(row.t / t_pi));
        for c in Column::ALL {
            out.push(',');
            out.push_str(&cell(row.get(c)));
        }
        out.push('\n');
    }
    out
}

pub fn trace_json(trace: &FisherTrace) -> Result<String, CliError> {
    let mut s = serde_json::to_string_pretty(trace).map_err(|e| CliError::Io(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

pub fn read_trace_json(text: &str) -> Result<FisherTrace, CliError> {
    serde_json::from_str(text).map_err(|e| CliError::Config(format!("trace: {e}")))
}

pub fn resolution_csv(sweep: &ResolutionSweep, delta_p: f64) -> String {
    let mut out = String::from("sigma_p_over_hbar_k0,sigma_p_over_delta_p,FC_mom,convergence,floor_sensitivity\n");
    let hk = sweep.metadata.config.params.hbar * sweep.metadata.config.params.k0;
    for r in &sweep.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            num(r.sigma_p / hk),
            num(r.sigma_p / delta_p),
            num(r.fc_mom),
            num(r.convergence_error),
            num(r.floor_sensitivity)
        );
    }
    out
}

pub fn pulse_csv(sweep: &PulseDurationSweep) -> String {
    let t_pi = sweep.metadata.config.t_pi;
    let mut out = String::from("delta_t_over_Tpi,sequence_time_over_Tpi,FQ_numeric,FC_pop,FC_pos,FC_mom,max_deviation\n");
    let mut line = |dt: f64, seq: f64, row: &mwgrav::sequences::TraceRow, dev: f64| {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            num(dt / t_pi),
            num(seq / t_pi),
            cell(row.fq_numeric),
            cell(row.fc_pop),
            cell(row.fc_pos),
            cell(row.fc_mom),
            num(dev)
        );
    };
    line(0.0, 2.0 * t_pi, &sweep.reference, 0.0);
    for r in &sweep.rows {
        line(r.delta_t, r.sequence_time, &r.row, r.max_deviation);
    }
    out
}

/// Whitespace-separated table `z re_a im_a re_b im_b`, one grid point per line.
pub fn state_table(state: &Spinor) -> String {
    let mut out = String::from("# z re_a im_a re_b im_b\n");
    let [a, b] = state.components();
    for ((z, a), b) in state.grid().positions().iter().zip(a).zip(b) {
        let _ = writeln!(out, "{} {} {} {} {}", num(*z), num(a.re), num(a.im), num(b.re), num(b.im));
    }
    out
}

/// Writes through a temporary file in the destination directory, then renames.
pub fn write_atomic(path: &Path, contents: &str) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let io = |e: std::io::Error| CliError::Io(format!("{}: {e}", path.display()));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(contents.as_bytes()).map_err(io)?;
    tmp.as_file().sync_all().map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}
