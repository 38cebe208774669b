//! Files inside an output directory and the manifest that records how each
//! was produced.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde_json::{json, Value};

pub const SPLIT_FILE: &str = "split.csv";
pub const IDS_FILE: &str = "ids.csv";
pub const VOTES_FILE: &str = "votes.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

pub struct Workspace {
    pub dir: PathBuf,
}

impl Workspace {
    pub fn create(dir: PathBuf) -> Result<Self> {
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Workspace { dir })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Writes `contents` through a temporary file so readers never see a
    /// partial file.
    pub fn write(&self, name: &str, contents: &str) -> Result<PathBuf> {
        let path = self.path(name);
        write_atomic(&path, |tmp| Ok(fs::write(tmp, contents)?))?;
        Ok(path)
    }

    /// Replaces the manifest entry `key`, keeping the others.
    pub fn record(&self, key: &str, params: BTreeMap<String, Value>, files: &[&str], wall_secs: f64) -> Result<()> {
        let path = self.path(MANIFEST_FILE);
        let mut manifest: BTreeMap<String, Value> = match fs::read_to_string(&path) {
            Ok(text) => serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?,
            Err(_) => BTreeMap::new(),
        };
        manifest.insert(
            key.to_string(),
            json!({
                "params": params,
                "files": files,
                "wall_time_secs": wall_secs,
                "version": env!("CARGO_PKG_VERSION"),
            }),
        );
        let text = serde_json::to_string_pretty(&manifest)? + "\n";
        write_atomic(&path, |tmp| Ok(fs::write(tmp, &text)?))
    }

    /// Parameters of a previous manifest entry, if any.
    pub fn recorded(&self, key: &str) -> Option<BTreeMap<String, Value>> {
        let text = fs::read_to_string(self.path(MANIFEST_FILE)).ok()?;
        let manifest: BTreeMap<String, Value> = serde_json::from_str(&text).ok()?;
        serde_json::from_value(manifest.get(key)?.get("params")?.clone()).ok()
    }
}

pub fn write_atomic(path: &Path, write: impl FnOnce(&Path) -> Result<()>) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    write(&tmp).with_context(|| format!("writing {}", path.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

/// `# key=value ...` line that heads every result file.
pub fn header_line(tag: &str, params: &BTreeMap<String, Value>) -> String {
    let mut line = format!("#{tag} v1");
    for (k, v) in params {
        let v = match v {
            Value::String(s) => s.clone(),
            other => other.to_string(),
        };
        line.push_str(&format!(" {k}={v}"));
    }
    line
}
