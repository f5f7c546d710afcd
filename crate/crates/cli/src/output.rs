//! Output files with provenance.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Serialize;
use sha2::{Digest, Sha256};

use naghdi_core::mesh::write_off;
use naghdi_core::SurfaceMesh;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn off_text(mesh: &SurfaceMesh) -> anyhow::Result<String> {
    let mut buf = Vec::new();
    write_off(mesh, &mut buf)?;
    Ok(String::from_utf8(buf)?)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub tool: String,
    pub command: String,
    pub config_sha256: String,
    pub mesh_sha256: String,
}

impl Provenance {
    pub fn new(command: &str, config_canonical: &str, mesh: &SurfaceMesh) -> anyhow::Result<Self> {
        Ok(Provenance {
            tool: format!("naghdi {}", env!("CARGO_PKG_VERSION")),
            command: command.to_string(),
            config_sha256: sha256_hex(config_canonical.as_bytes()),
            mesh_sha256: sha256_hex(off_text(mesh)?.as_bytes()),
        })
    }

    /// `#` comment lines for CSV and OFF outputs.
    pub fn comment(&self) -> String {
        format!(
            "# {} {}\n# config_sha256={}\n# mesh_sha256={}\n",
            self.tool, self.command, self.config_sha256, self.mesh_sha256
        )
    }
}

pub struct OutDir {
    dir: PathBuf,
    pub written: Vec<PathBuf>,
}

impl OutDir {
    pub fn create(dir: &Path) -> anyhow::Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(OutDir { dir: dir.to_path_buf(), written: Vec::new() })
    }

    pub fn text(&mut self, name: &str, body: &str) -> anyhow::Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, body).with_context(|| format!("writing {}", path.display()))?;
        self.written.push(path);
        Ok(())
    }

    /// CSV (or OFF) body behind the provenance comment block.
    pub fn with_header(&mut self, name: &str, prov: &Provenance, body: &str) -> anyhow::Result<()> {
        self.text(name, &format!("{}{body}", prov.comment()))
    }

    pub fn json<T: Serialize>(&mut self, name: &str, prov: &Provenance, result: &T) -> anyhow::Result<()> {
        #[derive(Serialize)]
        struct Doc<'a, T> {
            provenance: &'a Provenance,
            result: &'a T,
        }
        let mut s = serde_json::to_string_pretty(&Doc { provenance: prov, result })?;
        s.push('\n');
        self.text(name, &s)
    }
}
