//! CSV reports: UTF-8, LF line endings, comma separated, period decimals.
//! Floats use Rust's shortest round-trip formatting, so reports parse back
//! losslessly.

use std::fmt::Write as _;

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub variant: String,
    pub lambda: f64,
    pub final_acc: f64,
    pub best_acc: f64,
    pub train_acc: f64,
    pub rad_est: f64,
}

pub const COMPARISON_HEADER: &str = "variant,lambda,final_acc,best_acc,train_acc,rad_est";

pub fn write_comparison(rows: &[ComparisonRow]) -> String {
    let mut out = String::new();
    out.push_str(COMPARISON_HEADER);
    out.push('\n');
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.variant, r.lambda, r.final_acc, r.best_acc, r.train_acc, r.rad_est
        )
        .expect("string write");
    }
    out
}

pub fn parse_comparison(text: &str) -> Result<Vec<ComparisonRow>, String> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == COMPARISON_HEADER => {}
        other => return Err(format!("bad header {other:?}")),
    }
    let mut rows = Vec::new();
    for (k, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 6 {
            return Err(format!("row {k}: expected 6 fields, got {}", parts.len()));
        }
        let num = |s: &str| -> Result<f64, String> {
            s.parse().map_err(|_| format!("row {k}: bad number {s:?}"))
        };
        rows.push(ComparisonRow {
            variant: parts[0].to_string(),
            lambda: num(parts[1])?,
            final_acc: num(parts[2])?,
            best_acc: num(parts[3])?,
            train_acc: num(parts[4])?,
            rad_est: num(parts[5])?,
        });
    }
    Ok(rows)
}

/// Long-format training trace: one row per (iteration, layer).
pub fn write_drift_csv(traces: &[radlab_core::endtoend::DriftTrace], losses: &[f64]) -> String {
    let mut out = String::from("iteration,layer,drift_fro,drift_spec,loss\n");
    for trace in traces {
        for (t, (f, s)) in trace.fro.iter().zip(&trace.spectral).enumerate() {
            let loss = losses.get(t).copied().unwrap_or(f64::NAN);
            let loss_str = if loss.is_finite() {
                format!("{loss}")
            } else {
                String::new()
            };
            writeln!(out, "{t},{},{f},{s},{loss_str}", trace.name).expect("string write");
        }
    }
    out
}

/// Minimax training trace: `iteration,loss,reg_value,grad_norm,moreau_sq`
/// with the probe column empty off-cadence.
pub fn write_sgda_csv(trace: &radlab_core::minimax::SgdaTrace) -> String {
    let mut out = String::from("iteration,loss,reg_value,grad_norm,moreau_sq\n");
    for t in 0..trace.loss.len() {
        let moreau = trace
            .moreau_sq
            .iter()
            .find(|(it, _)| *it == t)
            .map(|(_, v)| format!("{v}"))
            .unwrap_or_default();
        writeln!(
            out,
            "{t},{},{},{},{moreau}",
            trace.loss[t], trace.reg_mean[t], trace.grad_norm[t]
        )
        .expect("string write");
    }
    out
}

/// Plain loss trace: `iteration,loss`.
pub fn write_loss_csv(losses: &[f64]) -> String {
    let mut out = String::from("iteration,loss\n");
    for (t, l) in losses.iter().enumerate() {
        writeln!(out, "{t},{l}").expect("string write");
    }
    out
}
