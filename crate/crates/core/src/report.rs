//! Output helpers shared by the CLI: full-precision float formatting and
//! atomic file writes, so reruns with identical flags produce byte-identical
//! files.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::Result;

/// Formats a float with 17 significant digits, enough for an exact
/// round trip through decimal.
pub fn fmt_f64(x: f64) -> String {
    format!("{:.16e}", x)
}

/// Writes `contents` to `path` via a temp file plus rename.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    fs::create_dir_all(dir)?;
    let tmp = dir.join(format!(
        ".{}.tmp",
        path.file_name().map(|s| s.to_string_lossy()).unwrap_or_default()
    ));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// A minimal CSV builder. Quoting is unnecessary for the schemas used
/// here (no commas or newlines inside fields).
pub struct Csv {
    buf: String,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        let mut buf = header.join(",");
        buf.push('\n');
        Csv { buf }
    }

    pub fn row(&mut self, fields: &[String]) {
        self.buf.push_str(&fields.join(","));
        self.buf.push('\n');
    }

    pub fn finish(self) -> String {
        self.buf
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fmt_round_trips() {
        for &x in &[0.0, 1.0, -1.5, std::f64::consts::PI, 1e-300, 123456789.123456789] {
            let s = fmt_f64(x);
            let back: f64 = s.parse().unwrap();
            assert_eq!(x.to_bits(), back.to_bits(), "{s}");
        }
    }

    #[test]
    fn atomic_write_then_read() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("out.csv");
        write_atomic(&p, b"a,b\n1,2\n").unwrap();
        assert_eq!(fs::read(&p).unwrap(), b"a,b\n1,2\n");
        // overwrite is atomic too
        write_atomic(&p, b"a,b\n3,4\n").unwrap();
        assert_eq!(fs::read(&p).unwrap(), b"a,b\n3,4\n");
    }
}
