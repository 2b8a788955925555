//! Embedding dump files: precomputed embeddings from external models.
//!
//! The binary layout is: magic `PCEMB\n`, version (u32 LE), embedding
//! dimension d (u32 LE), record count (u64 LE); then per record an id
//! (u32 LE length + UTF-8 bytes), a variant tag byte, for patch-token
//! records a token count N_p (u32 LE), and the payload as little-endian
//! f32s (d floats, or N_p·d for token records).
//!
//! A CSV alternative (`id,variant,f0,f1,...`) is accepted for hand-written
//! fixtures; token grids need the binary form since a flat CSV row cannot
//! carry N_p.

use crate::domain::PromptVariant;
use crate::error::{Error, Result};
use ndarray::{Array1, Array2};
use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

const MAGIC: &[u8; 6] = b"PCEMB\n";
const VERSION: u32 = 1;

/// One dumpable embedding, tagged by what it embeds.
#[derive(Debug, Clone)]
pub enum DumpEntry {
    VisualPooled(Array1<f64>),
    VisualTokens(Array2<f64>),
    Text(PromptVariant, Array1<f64>),
}

impl DumpEntry {
    fn tag(&self) -> u8 {
        match self {
            DumpEntry::VisualPooled(_) => 0,
            DumpEntry::VisualTokens(_) => 1,
            DumpEntry::Text(PromptVariant::Category, _) => 2,
            DumpEntry::Text(PromptVariant::Description, _) => 3,
            DumpEntry::Text(PromptVariant::Generalized, _) => 4,
        }
    }

    fn dim(&self) -> usize {
        match self {
            DumpEntry::VisualPooled(v) | DumpEntry::Text(_, v) => v.len(),
            DumpEntry::VisualTokens(t) => t.ncols(),
        }
    }
}

fn variant_of_tag(tag: u8) -> Option<PromptVariant> {
    match tag {
        2 => Some(PromptVariant::Category),
        3 => Some(PromptVariant::Description),
        4 => Some(PromptVariant::Generalized),
        _ => None,
    }
}

fn variant_name(tag: u8) -> &'static str {
    match tag {
        0 => "visual-pooled",
        1 => "visual-tokens",
        2 => "text-category",
        3 => "text-description",
        4 => "text-generalized",
        _ => "unknown",
    }
}

/// All embeddings dumped for one sample id.
#[derive(Debug, Clone, Default)]
pub struct EmbeddingRecord {
    pub visual_pooled: Option<Array1<f64>>,
    pub visual_tokens: Option<Array2<f64>>,
    pub text: BTreeMap<PromptVariant, Array1<f64>>,
}

/// Dump contents: embedding dimension plus per-id records.
#[derive(Debug, Clone)]
pub struct EmbeddingDump {
    pub dim: usize,
    pub records: BTreeMap<String, EmbeddingRecord>,
}

/// Writes entries in the binary dump format.
///
/// Every entry must match the declared dimension; a mismatch is rejected
/// here so that files on disk are consistent by construction.
pub fn save_embedding_dump(
    path: impl AsRef<Path>,
    dim: usize,
    entries: &[(String, DumpEntry)],
) -> Result<()> {
    let path = path.as_ref();
    for (id, entry) in entries {
        if entry.dim() != dim {
            return Err(Error::format(
                "embedding dump",
                path,
                format!(
                    "inconsistent dimension: record '{id}' ({}) has d={}, header says d={dim}",
                    variant_name(entry.tag()),
                    entry.dim()
                ),
            ));
        }
    }
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io_err = |e| Error::io(path, e);
    w.write_all(MAGIC).map_err(io_err)?;
    w.write_all(&VERSION.to_le_bytes()).map_err(io_err)?;
    w.write_all(&(dim as u32).to_le_bytes()).map_err(io_err)?;
    w.write_all(&(entries.len() as u64).to_le_bytes()).map_err(io_err)?;
    for (id, entry) in entries {
        w.write_all(&(id.len() as u32).to_le_bytes()).map_err(io_err)?;
        w.write_all(id.as_bytes()).map_err(io_err)?;
        w.write_all(&[entry.tag()]).map_err(io_err)?;
        match entry {
            DumpEntry::VisualPooled(v) | DumpEntry::Text(_, v) => {
                for &x in v.iter() {
                    w.write_all(&(x as f32).to_le_bytes()).map_err(io_err)?;
                }
            }
            DumpEntry::VisualTokens(t) => {
                w.write_all(&(t.nrows() as u32).to_le_bytes()).map_err(io_err)?;
                for &x in t.iter() {
                    w.write_all(&(x as f32).to_le_bytes()).map_err(io_err)?;
                }
            }
        }
    }
    w.flush().map_err(io_err)
}

/// Loads a dump, autodetecting binary (by magic) versus CSV.
pub fn load_embedding_dump(path: impl AsRef<Path>) -> Result<EmbeddingDump> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.is_empty() {
        return Err(Error::format("embedding dump", path, "missing header: empty file"));
    }
    if bytes.starts_with(MAGIC) {
        load_binary(path, &bytes)
    } else {
        load_csv(path, &bytes)
    }
}

fn insert_entry(
    path: &Path,
    dump: &mut EmbeddingDump,
    id: &str,
    tag: u8,
    entry: DumpEntry,
) -> Result<()> {
    let record = dump.records.entry(id.to_string()).or_default();
    let duplicate = match &entry {
        DumpEntry::VisualPooled(v) => record.visual_pooled.replace(v.clone()).is_some(),
        DumpEntry::VisualTokens(t) => record.visual_tokens.replace(t.clone()).is_some(),
        DumpEntry::Text(variant, v) => record.text.insert(*variant, v.clone()).is_some(),
    };
    if duplicate {
        return Err(Error::format(
            "embedding dump",
            path,
            format!("duplicate id '{id}' for variant {}", variant_name(tag)),
        ));
    }
    Ok(())
}

fn load_binary(path: &Path, bytes: &[u8]) -> Result<EmbeddingDump> {
    let mut r = &bytes[MAGIC.len()..];
    let truncated = |what: &str| Error::format("embedding dump", path, format!("truncated {what}"));

    let u32_of = |r: &mut &[u8], what: &str| -> Result<u32> {
        let mut buf = [0u8; 4];
        r.read_exact(&mut buf).map_err(|_| truncated(what))?;
        Ok(u32::from_le_bytes(buf))
    };
    let version = u32_of(&mut r, "version")?;
    if version != VERSION {
        return Err(Error::format(
            "embedding dump",
            path,
            format!("unsupported version {version}"),
        ));
    }
    let dim = u32_of(&mut r, "dimension")? as usize;
    if dim == 0 {
        return Err(Error::format("embedding dump", path, "dimension is zero"));
    }
    let mut buf8 = [0u8; 8];
    r.read_exact(&mut buf8).map_err(|_| truncated("record count"))?;
    let count = u64::from_le_bytes(buf8);

    let mut dump = EmbeddingDump {
        dim,
        records: BTreeMap::new(),
    };
    for index in 0..count {
        let id_len = u32_of(&mut r, &format!("record {index} id length"))? as usize;
        let mut id_bytes = vec![0u8; id_len];
        r.read_exact(&mut id_bytes)
            .map_err(|_| truncated(&format!("record {index} id")))?;
        let id = String::from_utf8(id_bytes).map_err(|_| {
            Error::format("embedding dump", path, format!("record {index} id is not UTF-8"))
        })?;
        let mut tag_byte = [0u8; 1];
        r.read_exact(&mut tag_byte)
            .map_err(|_| truncated(&format!("record '{id}' tag")))?;
        let tag = tag_byte[0];

        let floats_of = |r: &mut &[u8], n: usize| -> Result<Vec<f64>> {
            let mut out = Vec::with_capacity(n);
            let mut buf = [0u8; 4];
            for _ in 0..n {
                r.read_exact(&mut buf)
                    .map_err(|_| truncated(&format!("record '{id}' payload")))?;
                out.push(f64::from(f32::from_le_bytes(buf)));
            }
            Ok(out)
        };
        let entry = match tag {
            0 => DumpEntry::VisualPooled(Array1::from(floats_of(&mut r, dim)?)),
            1 => {
                let n_p = u32_of(&mut r, &format!("record '{id}' token count"))? as usize;
                let flat = floats_of(&mut r, n_p * dim)?;
                DumpEntry::VisualTokens(
                    Array2::from_shape_vec((n_p, dim), flat).expect("shape matches read"),
                )
            }
            2 | 3 | 4 => DumpEntry::Text(
                variant_of_tag(tag).expect("text tag"),
                Array1::from(floats_of(&mut r, dim)?),
            ),
            other => {
                return Err(Error::format(
                    "embedding dump",
                    path,
                    format!("record '{id}' has unknown variant tag {other}"),
                ))
            }
        };
        insert_entry(path, &mut dump, &id, tag, entry)?;
    }
    if !r.is_empty() {
        return Err(Error::format(
            "embedding dump",
            path,
            format!("{} trailing bytes after final record", r.len()),
        ));
    }
    Ok(dump)
}

fn load_csv(path: &Path, bytes: &[u8]) -> Result<EmbeddingDump> {
    let reader = BufReader::new(bytes);
    let mut dump = EmbeddingDump {
        dim: 0,
        records: BTreeMap::new(),
    };
    let mut any = false;
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.split(',');
        let id = fields.next().unwrap_or("").trim();
        let variant = fields.next().unwrap_or("").trim();
        if id.is_empty() || variant.is_empty() {
            return Err(Error::format(
                "embedding dump",
                path,
                format!("line {}: expected 'id,variant,floats...'", lineno + 1),
            ));
        }
        let tag = match variant {
            "0" | "visual-pooled" => 0u8,
            "1" | "visual-tokens" => {
                return Err(Error::format(
                    "embedding dump",
                    path,
                    format!("line {}: token grids require the binary format", lineno + 1),
                ))
            }
            "2" | "text-category" => 2,
            "3" | "text-description" => 3,
            "4" | "text-generalized" => 4,
            other => {
                return Err(Error::format(
                    "embedding dump",
                    path,
                    format!("line {}: unknown variant '{other}'", lineno + 1),
                ))
            }
        };
        let values: Vec<f64> = fields
            .map(|f| {
                f.trim().parse::<f32>().map(f64::from).map_err(|_| {
                    Error::format(
                        "embedding dump",
                        path,
                        format!("line {}: bad float '{}'", lineno + 1, f.trim()),
                    )
                })
            })
            .collect::<Result<_>>()?;
        if values.is_empty() {
            return Err(Error::format(
                "embedding dump",
                path,
                format!("line {}: record '{id}' has no floats", lineno + 1),
            ));
        }
        if !any {
            dump.dim = values.len();
            any = true;
        } else if values.len() != dump.dim {
            return Err(Error::format(
                "embedding dump",
                path,
                format!(
                    "inconsistent dimension: record '{id}' has d={}, first record had d={}",
                    values.len(),
                    dump.dim
                ),
            ));
        }
        let entry = match variant_of_tag(tag) {
            Some(v) => DumpEntry::Text(v, Array1::from(values)),
            None => DumpEntry::VisualPooled(Array1::from(values)),
        };
        insert_entry(path, &mut dump, id, tag, entry)?;
    }
    if !any {
        return Err(Error::format(
            "embedding dump",
            path,
            "missing header: no records in CSV",
        ));
    }
    Ok(dump)
}
