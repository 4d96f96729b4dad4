use std::io::Write;
use std::path::Path;

use nextcrop::Error;
use tempfile::NamedTempFile;

/// Exit code and short error class for the first engine error in the chain.
pub fn classify(err: &anyhow::Error) -> (u8, &'static str) {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::Config(_) => (2, "config"),
                Error::Plan(_) => (3, "plan"),
                Error::Layout(_) => (3, "layout"),
                Error::Io(_) => (5, "io"),
                Error::Index(_) => (4, "index"),
                Error::Dimension(_) => (4, "dimension"),
                Error::Range(_) => (4, "range"),
                Error::Codebook(_) => (4, "codebook"),
                Error::Shape(_) => (4, "shape"),
                Error::Input(_) => (4, "input"),
                Error::Capacity(_) => (4, "capacity"),
                Error::Training { .. } => (4, "training"),
                Error::Normalization(_) => (4, "normalization"),
                Error::Format(_) => (4, "format"),
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return (5, "io");
        }
    }
    (4, "engine")
}

/// The error chain flattened onto a single line.
pub fn one_line(err: &anyhow::Error) -> String {
    err.chain().map(|c| c.to_string().replace('\n', " ")).collect::<Vec<_>>().join(": ")
}

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), Error> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let mut tmp = NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        tmp.as_file().set_permissions(std::fs::Permissions::from_mode(0o644))?;
    }
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

pub fn csv_bytes<R: serde::Serialize>(header: &[&str], rows: &[R]) -> Result<Vec<u8>, Error> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    let to_err = |e: csv::Error| Error::Format(e.to_string());
    w.write_record(header).map_err(to_err)?;
    for r in rows {
        w.serialize(r).map_err(to_err)?;
    }
    w.into_inner().map_err(|e| Error::Format(e.to_string()))
}
