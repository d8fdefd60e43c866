//! Report rendering: `key=value` text, CSV tables, and timings kept apart
//! so the first two are byte-identical across runs with the same seed.

use std::fmt::Write as _;
use std::path::Path;

use super::bench::BenchTable;
use crate::error::Result;
use crate::model::EvalReport;

/// One `key=value` line per fact; settings first, under `config.`.
pub fn render_report(reports: &[EvalReport]) -> String {
    let mut out = String::new();
    if let Some(r) = reports.first() {
        for (k, v) in &r.config_echo {
            let _ = writeln!(out, "config.{k}={v}");
        }
    }
    for r in reports {
        let m = &r.task_name;
        let _ = writeln!(out, "{m}.error_rate={:?}", r.error_rate);
        let _ = writeln!(out, "{m}.errors={}", r.errors());
        let _ = writeln!(out, "{m}.total={}", r.total());
        for (class, t) in &r.per_class {
            let _ = writeln!(out, "{m}.class.{class}.errors={}", t.errors);
            let _ = writeln!(out, "{m}.class.{class}.total={}", t.total);
        }
        for (f, e) in r.fold_errors.iter().enumerate() {
            let _ = writeln!(out, "{m}.fold.{f}.error_rate={e:?}");
        }
        if let Some((mean, std)) = r.fold_summary() {
            let _ = writeln!(out, "{m}.fold_mean={mean:?}");
            let _ = writeln!(out, "{m}.fold_std={std:?}");
        }
        for (k, v) in &r.diagnostics {
            let _ = writeln!(out, "{m}.{k}={v}");
        }
    }
    out
}

pub fn render_csv(reports: &[EvalReport]) -> String {
    let mut out = String::from("method,error_rate,errors,total,fold_mean,fold_std\n");
    for r in reports {
        let (mean, std) = match r.fold_summary() {
            Some((m, s)) => (format!("{m:?}"), format!("{s:?}")),
            None => (String::new(), String::new()),
        };
        let _ = writeln!(
            out,
            "{},{:?},{},{},{mean},{std}",
            r.task_name,
            r.error_rate,
            r.errors(),
            r.total()
        );
    }
    out
}

pub fn render_timings(reports: &[EvalReport]) -> String {
    let mut out = String::from("method,stage,seconds\n");
    for r in reports {
        for (stage, secs) in &r.timings {
            let _ = writeln!(out, "{},{stage},{secs:.6}", r.task_name);
        }
    }
    out
}

pub fn render_bench_csv(t: &BenchTable) -> String {
    let mut out = String::from("n,d,reps,median_secs,min_secs,max_secs,support\n");
    for r in &t.rows {
        let _ = writeln!(
            out,
            "{},{},{},{:.6},{:.6},{:.6},{}",
            r.n, r.d, r.reps, r.median_secs, r.min_secs, r.max_secs, r.support
        );
    }
    out
}

pub fn render_bench_report(t: &BenchTable) -> String {
    let mut out = String::new();
    for (k, v) in &t.machine {
        let _ = writeln!(out, "machine.{k}={v}");
    }
    for r in &t.rows {
        let key = format!("n{}.d{}", r.n, r.d);
        let _ = writeln!(out, "{key}.reps={}", r.reps);
        let _ = writeln!(out, "{key}.median_secs={:.6}", r.median_secs);
        let _ = writeln!(out, "{key}.min_secs={:.6}", r.min_secs);
        let _ = writeln!(out, "{key}.max_secs={:.6}", r.max_secs);
        let _ = writeln!(out, "{key}.support={}", r.support);
    }
    out
}

pub fn write_text(path: impl AsRef<Path>, text: &str) -> Result<()> {
    crate::io::write_bytes(path.as_ref(), text.as_bytes())
}
