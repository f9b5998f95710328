use std::fs;
use std::path::PathBuf;

use anyhow::Context;
use serde::Serialize;

use crate::config::Format;

/// Output directory and the formats to emit.
pub struct Sink {
    dir: PathBuf,
    formats: Vec<Format>,
}

impl Sink {
    pub fn new(dir: PathBuf, formats: Vec<Format>) -> anyhow::Result<Self> {
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Sink { dir, formats })
    }

    pub fn wants(&self, f: Format) -> bool {
        self.formats.contains(&f)
    }

    pub fn json<T: Serialize>(&self, name: &str, value: &T) -> anyhow::Result<()> {
        if !self.wants(Format::Json) {
            return Ok(());
        }
        let path = self.dir.join(format!("{name}.json"));
        let text = serde_json::to_string_pretty(value)?;
        fs::write(&path, text + "\n").with_context(|| format!("writing {}", path.display()))
    }

    pub fn csv(&self, name: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> anyhow::Result<()> {
        if !self.wants(Format::Csv) {
            return Ok(());
        }
        let path = self.dir.join(format!("{name}.csv"));
        let mut w = csv::Writer::from_path(&path).with_context(|| format!("writing {}", path.display()))?;
        w.write_record(header)?;
        for row in rows {
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn bytes(&self, name: &str, data: &[u8]) -> anyhow::Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, data).with_context(|| format!("writing {}", path.display()))
    }
}

/// Scientific notation with 15 significant digits; `-0` prints as `0`.
pub fn num(x: f64) -> String {
    let x = x + 0.0;
    format!("{x:.14e}")
}

pub fn int(x: i64) -> String {
    x.to_string()
}
