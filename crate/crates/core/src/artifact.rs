//! Shared one-line header for every line-delimited artifact file.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactHeader {
    pub schema: String,
    pub version: u32,
    /// Hash of the configuration that produced the artifact; empty when produced outside a pipeline.
    #[serde(default)]
    pub config_hash: String,
}

impl ArtifactHeader {
    pub fn new(schema: &str, version: u32, config_hash: &str) -> Self {
        ArtifactHeader {
            schema: schema.to_string(),
            version,
            config_hash: config_hash.to_string(),
        }
    }

    pub fn write_to(&self, out: &mut impl Write) -> Result<()> {
        serde_json::to_writer(&mut *out, self)?;
        out.write_all(b"\n")?;
        Ok(())
    }

    /// Reads the header line and checks schema name and version.
    pub fn read_from(input: &mut impl BufRead, path: &Path, schema: &str, version: u32) -> Result<Self> {
        let mut line = String::new();
        input.read_line(&mut line)?;
        let header: ArtifactHeader = serde_json::from_str(line.trim_end())
            .map_err(|e| Error::format(path, format!("missing or malformed header: {e}")))?;
        if header.schema != schema {
            return Err(Error::format(
                path,
                format!("expected a `{schema}` artifact, found `{}`", header.schema),
            ));
        }
        if header.version != version {
            return Err(Error::format(
                path,
                format!(
                    "`{schema}` artifact has version {}, this build reads version {version}",
                    header.version
                ),
            ));
        }
        Ok(header)
    }
}

/// Writes a header followed by one JSON record per line.
pub fn write_jsonl<T: Serialize>(out: &mut impl Write, header: &ArtifactHeader, records: &[T]) -> Result<()> {
    header.write_to(out)?;
    for record in records {
        serde_json::to_writer(&mut *out, record)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_jsonl<T: for<'de> Deserialize<'de>>(
    input: &mut impl BufRead,
    path: &Path,
    schema: &str,
    version: u32,
) -> Result<(ArtifactHeader, Vec<T>)> {
    let header = ArtifactHeader::read_from(input, path, schema, version)?;
    let mut records = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        records.push(
            serde_json::from_str(&line)
                .map_err(|e| Error::format(path, format!("record {}: {e}", i + 1)))?,
        );
    }
    Ok((header, records))
}
