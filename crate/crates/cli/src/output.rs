//! Files written by a run.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use lscheme_core::fem::FeField;
use lscheme_core::mesh::format_mesh;

use crate::commands::CliError;
use crate::config::RunConfig;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| CliError::Output {
        path: path.display().to_string(),
        source: e,
    }
}

/// Writes `contents` to `name` inside the output directory, creating it if needed.
pub fn write_file(cfg: &RunConfig, name: &str, contents: &str) -> Result<PathBuf, CliError> {
    let dir = &cfg.output_dir;
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let path = dir.join(name);
    fs::write(&path, contents).map_err(io_err(&path))?;
    Ok(path)
}

/// `x,y,value` per node, at full precision.
pub fn field_csv(u: &FeField) -> String {
    let mut s = String::from("x,y,value\n");
    for (p, v) in u.mesh().nodes().iter().zip(u.values()) {
        let _ = writeln!(s, "{},{},{}", p[0], p[1], v);
    }
    s
}

/// Field CSV plus the mesh it lives on.
pub fn write_field(cfg: &RunConfig, stem: &str, mesh_name: &str, u: &FeField) -> Result<Vec<PathBuf>, CliError> {
    Ok(vec![
        write_file(cfg, &format!("{stem}.csv"), &field_csv(u))?,
        write_file(cfg, mesh_name, &format_mesh(u.mesh()))?,
    ])
}

/// Effective configuration (loadable with `--config`), command and outputs.
pub fn write_manifest(cfg: &RunConfig, command: &str, outputs: &[PathBuf]) -> Result<PathBuf, CliError> {
    let mut s = String::new();
    let _ = writeln!(s, "# lscheme {} {command}", env!("CARGO_PKG_VERSION"));
    s.push_str("# runs are deterministic: the same configuration reproduces these files byte for byte\n");
    for p in outputs {
        let name = p
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        let _ = writeln!(s, "# output {name}");
    }
    s.push_str(&cfg.to_text());
    write_file(cfg, "manifest.txt", &s)
}
