//! Version stamping and crash-safe file output.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

/// Package version plus `git describe` output when built from a checkout.
pub const VERSION: &str = env!("REPLAB_VERSION");

/// What produced an output file.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub version: String,
    pub command: String,
    pub config: serde_json::Value,
}

impl Provenance {
    pub fn new<C: Serialize>(command: &str, config: &C) -> Self {
        Self {
            version: VERSION.to_string(),
            command: command.to_string(),
            config: serde_json::to_value(config).expect("configs serialize"),
        }
    }

    /// `#`-prefixed lines placed above the header of every CSV.
    pub fn csv_preamble(&self) -> String {
        format!(
            "# replab {}\n# command: {}\n# config: {}\n",
            self.version,
            self.command,
            serde_json::to_string(&self.config).expect("json values serialize")
        )
    }

    pub fn csv(&self, body: &str) -> String {
        let mut out = self.csv_preamble();
        out.push_str(body);
        if !body.is_empty() && !body.ends_with('\n') {
            out.push('\n');
        }
        out
    }

    /// Hex SHA-256 of the compact config, for keying resumable work.
    pub fn config_hash(&self) -> String {
        let text = serde_json::to_string(&self.config).expect("json values serialize");
        Sha256::digest(text.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

/// JSON document with the provenance under `"provenance"` and `body`'s
/// fields alongside it.
pub fn json_with_provenance<T: Serialize>(prov: &Provenance, body: &T) -> String {
    let mut value = serde_json::to_value(body).expect("outputs serialize");
    match &mut value {
        serde_json::Value::Object(map) => {
            map.insert(
                "provenance".into(),
                serde_json::to_value(prov).expect("provenance serializes"),
            );
        }
        other => {
            value = serde_json::json!({ "provenance": prov, "result": other });
        }
    }
    let mut text = serde_json::to_string_pretty(&value).expect("json values serialize");
    text.push('\n');
    text
}

/// Writes through a temporary sibling and renames it into place, so a
/// reader never sees a partial file.
pub fn write_atomic(path: &Path, contents: &str) -> std::io::Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    let tmp = tmp_path(path);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents.as_bytes())?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}

fn tmp_path(path: &Path) -> PathBuf {
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!(".{name}.tmp-{}", std::process::id()))
}
