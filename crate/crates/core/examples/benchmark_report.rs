//! Aggregates the bundled per-site timing table and prints it as Markdown,
//! followed by per-site speedups against the manual baselines.
//!
//! ```text
//! cargo run --example benchmark_report
//! cargo run --example benchmark_report -- my_metrics.csv
//! ```

use heritage3d::metrics::{aggregate, emit_report, load_rows_csv, speedup, benchmark_rows, ReportFormat};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let rows = match std::env::args().nth(1) {
        Some(path) => load_rows_csv(std::fs::File::open(path)?)?,
        None => benchmark_rows(),
    };
    let summary = aggregate(&rows)?;
    print!("{}", String::from_utf8(emit_report(&rows, &summary, ReportFormat::Markdown)?)?);

    println!();
    for row in &rows {
        match row.baseline {
            Some(b) => {
                let (low, high) = speedup(row.total, b)?;
                println!("{:<28} {:>6.1} s  {:>6.1}x .. {:>6.1}x", row.site_name, row.total, low, high);
            }
            None => println!("{:<28} {:>6.1} s  no baseline", row.site_name, row.total),
        }
    }
    if let (Some(low), Some(high)) = (summary.speedup_low, summary.speedup_high) {
        println!("{:<28} {:>6.2} s  {:>6.1}x .. {:>6.1}x", "mean", summary.mean_total, low, high);
    }
    Ok(())
}
