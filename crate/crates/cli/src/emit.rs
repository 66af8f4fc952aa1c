//! Output emission: CSV rows and a JSON mirror with the config embedded.
//! Both formats are pure functions of the result data, so a fixed config and
//! seeds reproduce identical bytes.

use crate::runner::{ConvergenceTrace, SweepResult};

pub const CSV_HEADER: &str =
    "scheme,snr_db,rate_bob,rate_eve,secrecy,std_err,seed,iterations,complexity_additions,wall_ms";

pub fn sweep_csv(result: &SweepResult) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in &result.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            r.scheme,
            r.snr_db,
            r.rate_bob,
            r.rate_eve,
            r.secrecy,
            r.std_err,
            r.seed,
            r.iterations,
            r.complexity_additions,
            r.wall_ms
        ));
    }
    out
}

pub fn sweep_json(result: &SweepResult) -> String {
    let mut s = serde_json::to_string_pretty(result).expect("sweep result serializes");
    s.push('\n');
    s
}

pub fn convergence_csv(trace: &ConvergenceTrace) -> String {
    let mut out = String::from("restart,iteration,objective_bits\n");
    for (restart, tr) in trace.traces.iter().enumerate() {
        for (iter, val) in tr.iter().enumerate() {
            out.push_str(&format!("{restart},{iter},{val}\n"));
        }
    }
    out
}

pub fn convergence_summary_json(traces: &[ConvergenceTrace]) -> String {
    #[derive(serde::Serialize)]
    struct Summary<'a> {
        scheme: &'a str,
        snr_db: f64,
        best_restart: usize,
        converged: bool,
        iterations: usize,
        iterations_to_99pct: usize,
    }
    let summaries: Vec<Summary> = traces
        .iter()
        .map(|t| Summary {
            scheme: &t.scheme,
            snr_db: t.snr_db,
            best_restart: t.best_restart,
            converged: t.converged,
            iterations: t.iterations,
            iterations_to_99pct: t.iterations_to_99pct,
        })
        .collect();
    let mut s = serde_json::to_string_pretty(&summaries).expect("summaries serialize");
    s.push('\n');
    s
}
