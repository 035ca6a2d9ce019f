//! CSV tables and the plain-text summary.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use anyhow::Context;

use s3_core::cocycles::ClvFrames;
use s3_core::pipeline::SensitivityRun;
use s3_core::stats::Estimate;
use s3_core::validation::{ConvergenceReport, FdEstimate, ResponseTerm};

/// A header row plus data rows, written with a leading `# config_hash=` line.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self { header: header.into_iter().map(Into::into).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn render(&self, hash: &str) -> String {
        let mut s = format!("# config_hash={hash}\n{}\n", self.header.join(","));
        for r in &self.rows {
            s.push_str(&r.join(","));
            s.push('\n');
        }
        s
    }

    pub fn write(&self, path: &Path, hash: &str) -> anyhow::Result<()> {
        let mut f = std::fs::File::create(path)
            .with_context(|| format!("creating {}", path.display()))?;
        f.write_all(self.render(hash).as_bytes())?;
        Ok(())
    }
}

fn num(x: f64) -> String {
    format!("{x:e}")
}

fn quoted(s: &str) -> String {
    format!("\"{}\"", s.replace('"', "\"\""))
}

pub fn sensitivity_table(run: &SensitivityRun) -> CsvTable {
    let mut t = CsvTable::new([
        "node_index",
        "label",
        "stable",
        "stable_stderr",
        "unstable",
        "unstable_stderr",
        "total",
        "total_stderr",
        "m",
    ]);
    for (k, o) in run.objectives.iter().enumerate() {
        t.push(vec![
            k.to_string(),
            quoted(&o.label),
            num(o.stable.value),
            num(o.stable.stderr),
            num(o.unstable.value),
            num(o.unstable.stderr),
            num(o.total.value),
            num(o.total.stderr),
            o.truncation.to_string(),
        ]);
    }
    t
}

pub fn comparison_table(s3: &[Estimate], fd: &[FdEstimate]) -> CsvTable {
    let mut t = CsvTable::new(["node_index", "s3_value", "s3_stderr", "fd_value", "fd_stderr"]);
    for (k, (s, f)) in s3.iter().zip(fd).enumerate() {
        t.push(vec![k.to_string(), num(s.value), num(s.stderr), num(f.value), num(f.stderr)]);
    }
    t
}

pub fn fd_table(fd: &[FdEstimate]) -> CsvTable {
    let mut t = CsvTable::new(["node_index", "fd_value", "fd_stderr", "ds", "samples"]);
    for (k, f) in fd.iter().enumerate() {
        t.push(vec![k.to_string(), num(f.value), num(f.stderr), num(f.ds), f.samples.to_string()]);
    }
    t
}

/// Lag terms `c_n` of every objective; `node_index` selects the objective.
pub fn correlation_table(run: &SensitivityRun) -> CsvTable {
    let mut t = CsvTable::new(["node_index", "n", "c_n", "stderr"]);
    for (k, o) in run.objectives.iter().enumerate() {
        for (n, c) in o.lag_terms.iter().enumerate() {
            t.push(vec![k.to_string(), n.to_string(), num(c.value), num(c.stderr)]);
        }
    }
    t
}

pub fn diagnostics_table(terms: &[ResponseTerm]) -> CsvTable {
    let mut t = CsvTable::new(["n", "mean", "variance"]);
    for r in terms {
        t.push(vec![r.n.to_string(), num(r.mean), num(r.variance)]);
    }
    t
}

pub fn convergence_table(rep: &ConvergenceReport) -> CsvTable {
    let mut t = CsvTable::new(["N", "error"]);
    for (n, e) in rep.ns.iter().zip(&rep.errors) {
        t.push(vec![n.to_string(), num(*e)]);
    }
    t
}

/// Unstable frames over the first `steps` window positions.
pub fn frames_table(frames: &ClvFrames, steps: usize) -> CsvTable {
    let d = frames.v.first().map_or(0, |v| v.dim());
    let mut header = vec!["step".to_string(), "i".to_string()];
    header.extend((0..d).map(|j| format!("V{j}")));
    header.extend((0..d).map(|j| format!("W{j}")));
    header.push("z".into());
    let mut t = CsvTable::new(header);
    let win = frames.window();
    let count = frames.v.len().min(frames.w.len());
    for n in win.clone().take(steps) {
        for i in 0..count {
            let mut row = vec![n.to_string(), i.to_string()];
            row.extend(frames.v_at(i, n).iter().map(|&x| num(x)));
            row.extend(frames.w_at(i, n).iter().map(|&x| num(x)));
            row.push(num(frames.z_at(i, n)));
            t.push(row);
        }
    }
    t
}

fn pm(e: &Estimate) -> String {
    format!("{:+.6e} ± {:.2e}", e.value, e.stderr)
}

pub fn summary(
    hash: &str,
    map: &str,
    param: usize,
    run: Option<&SensitivityRun>,
    fd: Option<&[FdEstimate]>,
) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "config_hash: {hash}");
    let _ = writeln!(s, "map: {map}  parameter: {param}");
    if let Some(r) = run {
        let _ = writeln!(s, "unstable dimension: {}", r.unstable_dim);
        for (i, (l, e)) in r.spectrum.exponents.iter().zip(&r.spectrum.stderr).enumerate() {
            let _ = writeln!(s, "lambda_{}: {:+.6} ± {:.1e}", i + 1, l, e);
        }
        let _ = writeln!(
            s,
            "replicas: {}  samples per replica: {}",
            r.seeds.len(),
            r.samples_per_replica
        );
    }
    let labels: Vec<String> = match (run, fd) {
        (Some(r), _) => r.objectives.iter().map(|o| o.label.clone()).collect(),
        (None, Some(f)) => (0..f.len()).map(|k| format!("node {k}")).collect(),
        (None, None) => Vec::new(),
    };
    for (k, label) in labels.iter().enumerate() {
        let _ = writeln!(s, "[{k}] {label}");
        if let Some(r) = run {
            let o = &r.objectives[k];
            let _ = writeln!(s, "    stable   {}", pm(&o.stable));
            let _ = writeln!(s, "    unstable {}  (M = {})", pm(&o.unstable), o.truncation);
            let _ = writeln!(s, "    total    {}", pm(&o.total));
            if let Some(w) = &o.warning {
                let _ = writeln!(s, "    warning: {w}");
            }
        }
        if let Some(f) = fd {
            let _ = writeln!(s, "    fd       {}", pm(&f[k].estimate()));
            if let Some(w) = &f[k].warning {
                let _ = writeln!(s, "    warning: {w}");
            }
            if let Some(r) = run {
                let z = r.objectives[k].total.z_score(&f[k].estimate());
                let _ = writeln!(s, "    z-score  {z:+.2}");
            }
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_starts_with_hash_then_header() {
        let mut t = CsvTable::new(["n", "mean", "variance"]);
        t.push(vec!["0".into(), num(1.5), num(0.25)]);
        let text = t.render("abc");
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "# config_hash=abc");
        assert_eq!(lines[1], "n,mean,variance");
        assert_eq!(lines[2], "0,1.5e0,2.5e-1");
    }

    #[test]
    fn numbers_round_trip() {
        for x in [0.1, -2.0 / 3.0, 1e-300, 123456.789] {
            assert_eq!(num(x).parse::<f64>().unwrap(), x);
        }
    }
}
