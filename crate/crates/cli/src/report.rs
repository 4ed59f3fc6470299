use anyhow::{bail, Context, Result};

use agemm::measurements::REFERENCE_ROWS;

use crate::args::{ReportArgs, SchedArgs};
use crate::bench::BENCH_CSV_HEADER;
use crate::output::{table, Output};

fn reference_table() -> String {
    let rows: Vec<Vec<String>> = REFERENCE_ROWS
        .iter()
        .map(|r| {
            let mut v = vec![r.label.to_string()];
            v.extend(
                [r.slow_watts, r.fast_watts, r.dram_watts, r.gpu_watts, r.total_watts, r.gflops, r.gflops_per_watt]
                    .iter()
                    .map(|x| format!("{x:.3}")),
            );
            v.push(format!("{:.3}", r.gflops / r.total_watts));
            v
        })
        .collect();
    table(
        &["configuration", "A7", "A15", "DRAM", "GPU", "total", "GFLOPS", "GFLOPS/W", "recomputed"],
        &rows,
    )
}

fn bench_table(csv: &str) -> Result<String> {
    let mut lines = csv.lines().filter(|l| !l.trim().is_empty());
    match lines.next() {
        Some(h) if h.trim() == BENCH_CSV_HEADER => {}
        Some(h) => bail!("not a bench CSV; header is {h:?}"),
        None => bail!("empty bench CSV"),
    }
    let width = BENCH_CSV_HEADER.split(',').count();
    let mut rows = Vec::new();
    for (i, l) in lines.enumerate() {
        let cells: Vec<String> = l.split(',').map(|c| c.trim().to_string()).collect();
        if cells.len() != width {
            bail!("row {}: expected {width} fields, got {}", i + 2, cells.len());
        }
        rows.push(cells);
    }
    let headers: Vec<&str> = BENCH_CSV_HEADER.split(',').collect();
    Ok(table(&headers, &rows))
}

pub fn run(sched: &SchedArgs, args: &ReportArgs) -> Result<()> {
    let text = match &args.input {
        Some(p) => {
            let csv = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            bench_table(&csv).with_context(|| format!("in {}", p.display()))?
        }
        None => reference_table(),
    };
    let mut out = Output::new(sched.out.as_deref());
    out.text(&text)?;
    out.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_rows_render() {
        let t = reference_table();
        assert_eq!(t.lines().count(), 12);
        assert!(t.contains("Asymmetric BLIS"));
        let cells: Vec<&str> = t.lines().nth(2).unwrap().split_whitespace().collect();
        assert_eq!(cells[cells.len() - 2..], ["1.697", "1.697"]);
    }

    #[test]
    fn bench_csv_checks() {
        let ok = format!("{BENCH_CSV_HEADER}\nfast,8,8,8,1,0,1:0,0.000001,1.024,2.000,0.512\n");
        assert!(bench_table(&ok).unwrap().contains("fast"));
        assert!(bench_table("a,b\n").is_err());
        assert!(bench_table(&format!("{BENCH_CSV_HEADER}\nfast,8\n")).is_err());
    }
}
