//! Run manifests: a TOML echo of the resolved configuration plus the seed
//! and tool version, written beside every output. No timestamps or host
//! paths, so a rerun with the same seed produces identical bytes.

use serde::Serialize;
use std::path::Path;

#[derive(Debug, Serialize)]
pub struct Manifest<'a, C: Serialize> {
    pub tool: &'a str,
    pub version: &'a str,
    pub format_versions: FormatVersions<'a>,
    pub command: &'a str,
    pub seed: u64,
    pub config: &'a C,
}

#[derive(Debug, Serialize)]
pub struct FormatVersions<'a> {
    pub weights: &'a str,
    pub comparison_csv: &'a str,
}

pub fn write_manifest<C: Serialize>(
    dir: &Path,
    command: &str,
    seed: u64,
    config: &C,
) -> std::io::Result<()> {
    let manifest = Manifest {
        tool: "radlab",
        version: env!("CARGO_PKG_VERSION"),
        format_versions: FormatVersions {
            weights: crate::weights::MAGIC,
            comparison_csv: crate::report::COMPARISON_HEADER,
        },
        command,
        seed,
        config,
    };
    let text = toml::to_string(&manifest).expect("manifest serializes");
    std::fs::write(dir.join("manifest.toml"), text)
}
