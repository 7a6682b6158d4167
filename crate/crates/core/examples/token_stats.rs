//! Token statistics, corpus utilization and the CSV report.
//!
//! Run with `cargo run --example token_stats`.

use ganc::stats::{
    compute_stats, corpus_utilization, correlation_matrix, parse_report, report_to_string,
    CORRELATED_STATS,
};
use ganc::TokenGrid;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    // eight synthetic "images" whose unique-token counts grow
    let grids: Vec<TokenGrid> = (1..=8u64)
        .map(|k| {
            let tokens = (0..256u64).map(|i| (i % (k * 8)) * 97 + k).collect();
            TokenGrid::new(16, 16, 16, tokens)
        })
        .collect::<Result<_, _>>()?;

    let reports = grids
        .iter()
        .enumerate()
        .map(|(i, g)| compute_stats(&format!("img{i}"), g))
        .collect::<Result<Vec<_>, _>>()?;
    for r in &reports {
        println!(
            "{}: entropy {:.3} bits, {} unique of {}, sparsity {:.5}",
            r.name, r.entropy_bits, r.unique_tokens, r.total_tokens, r.sparsity
        );
    }
    println!(
        "corpus utilization {:.4}%",
        100.0 * corpus_utilization(&grids)?
    );

    let m = correlation_matrix(&reports)?;
    for (name, row) in CORRELATED_STATS.iter().zip(&m) {
        let cells: Vec<String> = row
            .iter()
            .map(|v| v.map_or("null".into(), |v| format!("{v:+.3}")))
            .collect();
        println!("{name:>17} {}", cells.join(" "));
    }

    let csv = report_to_string(&reports[..1])?;
    print!("{csv}");
    assert_eq!(parse_report(&csv)?, reports[..1]);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
