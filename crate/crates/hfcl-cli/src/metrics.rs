//! Metrics emission: one CSV row per completed round, then a single
//! `#`-prefixed JSON footer carrying the closed-form overhead values,
//! the empirical ledger total, and the final-model summary.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};

use hfcl::accounting;
use hfcl::federation::RoundRecord;

pub const CSV_HEADER: &str = "round,train_loss,val_acc_pct,cum_symbols,cum_blocks,max_delay_s";

/// One emitted row.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub round: usize,
    pub train_loss: f64,
    pub val_acc_pct: f64,
    pub cum_symbols: u64,
    pub cum_blocks: u64,
    pub max_delay_s: f64,
}

impl MetricsRow {
    pub fn from_record(record: &RoundRecord) -> Self {
        Self {
            round: record.round,
            train_loss: record.train_loss,
            val_acc_pct: record.val_accuracy.unwrap_or(f64::NAN),
            cum_symbols: record.cum_symbols,
            cum_blocks: accounting::blocks(record.cum_symbols),
            max_delay_s: record.max_delay,
        }
    }

    fn write_csv(&self, out: &mut String) {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            self.round, self.train_loss, self.val_acc_pct, self.cum_symbols, self.cum_blocks, self.max_delay_s
        )
        .expect("writing to String cannot fail");
    }
}

/// Machine-checkable run summary appended after the rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Footer {
    pub mode: String,
    pub clients: usize,
    pub passive: usize,
    pub rounds: usize,
    pub bits: u32,
    pub snr_db: f64,
    pub seed: u64,
    /// Learnable parameter count of the configured model.
    pub param_count: u64,
    /// Closed-form overhead for this mode, in symbols and blocks.
    pub formula_symbols: u64,
    pub formula_blocks: u64,
    /// What the ledger actually accumulated (absent for accounting-only
    /// runs, which never transmit).
    pub ledger_symbols: Option<u64>,
    /// Training-set transmission cost, with and without label symbols.
    pub dataset_symbols: u64,
    pub dataset_input_symbols: u64,
    /// SHA-256 of the final parameter vector (little-endian f64 bytes).
    pub theta_sha256: Option<String>,
    pub final_train_loss: Option<f64>,
    pub final_val_acc_pct: Option<f64>,
}

/// Serializes rows plus footer. The body (header and rows) is a pure
/// function of the training trajectory; mode-specific details live only
/// in the footer line.
pub fn render(rows: &[MetricsRow], footer: &Footer) -> String {
    let mut out = String::new();
    out.push_str(CSV_HEADER);
    out.push('\n');
    for row in rows {
        row.write_csv(&mut out);
    }
    let json = serde_json::to_string(footer).expect("footer serializes");
    out.push_str("# ");
    out.push_str(&json);
    out.push('\n');
    out
}

/// The body part (header + rows) of a rendered metrics file: everything
/// before the footer line.
pub fn body_of(rendered: &str) -> &str {
    match rendered.find("\n# ") {
        Some(pos) => &rendered[..=pos],
        None => rendered,
    }
}

/// Parses the footer line back out of a rendered metrics file.
pub fn parse_footer(rendered: &str) -> Option<Footer> {
    let line = rendered.lines().find(|l| l.starts_with("# "))?;
    serde_json::from_str(&line[2..]).ok()
}

/// Atomic write: temp file in the destination directory, then rename.
pub fn write_atomic(path: &Path, contents: &str) -> io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let tmp = match dir {
        Some(d) => d.join(format!(
            ".{}.tmp",
            path.file_name().and_then(|n| n.to_str()).unwrap_or("metrics")
        )),
        None => Path::new(&format!(
            ".{}.tmp",
            path.file_name().and_then(|n| n.to_str()).unwrap_or("metrics")
        ))
        .to_path_buf(),
    };
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)
}

pub fn theta_sha256(theta: &[f64]) -> String {
    use sha2::{Digest, Sha256};
    let mut hasher = Sha256::new();
    for v in theta {
        hasher.update(v.to_le_bytes());
    }
    let digest = hasher.finalize();
    let mut hex = String::with_capacity(64);
    for byte in digest {
        write!(hex, "{byte:02x}").expect("writing to String cannot fail");
    }
    hex
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_footer() -> Footer {
        Footer {
            mode: "fl".into(),
            clients: 10,
            passive: 0,
            rounds: 2,
            bits: 5,
            snr_db: 20.0,
            seed: 0,
            param_count: 6634,
            formula_symbols: 265_360,
            formula_blocks: 266,
            ledger_symbols: Some(265_360),
            dataset_symbols: 206_000,
            dataset_input_symbols: 196_000,
            theta_sha256: Some("ab".repeat(32)),
            final_train_loss: Some(1.5),
            final_val_acc_pct: Some(42.0),
        }
    }

    #[test]
    fn render_has_header_rows_and_footer() {
        let rows = vec![MetricsRow {
            round: 1,
            train_loss: 2.25,
            val_acc_pct: 10.0,
            cum_symbols: 132_680,
            cum_blocks: 133,
            max_delay_s: 66_340.0,
        }];
        let text = render(&rows, &sample_footer());
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), CSV_HEADER);
        assert_eq!(lines.next().unwrap(), "1,2.25,10,132680,133,66340");
        assert!(lines.next().unwrap().starts_with("# {"));

        let parsed = parse_footer(&text).unwrap();
        assert_eq!(parsed, sample_footer());
    }

    #[test]
    fn body_excludes_the_footer() {
        let text = render(&[], &sample_footer());
        let body = body_of(&text);
        assert_eq!(body, format!("{CSV_HEADER}\n"));
    }

    #[test]
    fn theta_hash_distinguishes_vectors() {
        let a = theta_sha256(&[1.0, 2.0]);
        let b = theta_sha256(&[1.0, 2.0]);
        let c = theta_sha256(&[1.0, 2.0000001]);
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.len(), 64);
    }

    #[test]
    fn atomic_write_replaces_contents() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        write_atomic(&path, "one\n").unwrap();
        write_atomic(&path, "two\n").unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "two\n");
    }
}
