use std::collections::HashMap;
use std::path::Path;

use rand::Rng;

use super::{Catalog, CorpusError, Interaction, ItemMeta, RatingScale, Result};
use crate::seed;

/// Field separator of a ratings or catalog file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Delimiter {
    Tab,
    /// `::`, as in the MovieLens-1M `.dat` files.
    DoubleColon,
    Pipe,
    Custom(String),
}

impl Delimiter {
    fn as_str(&self) -> &str {
        match self {
            Delimiter::Tab => "\t",
            Delimiter::DoubleColon => "::",
            Delimiter::Pipe => "|",
            Delimiter::Custom(s) => s,
        }
    }

    /// Parses `tab`, `::`, `pipe`/`|`, or any literal separator.
    pub fn from_name(name: &str) -> Self {
        match name {
            "tab" | "\t" | "\\t" => Delimiter::Tab,
            "::" | "double-colon" => Delimiter::DoubleColon,
            "pipe" | "|" => Delimiter::Pipe,
            other => Delimiter::Custom(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimestampMode {
    /// Every line carries `user, item, rating, timestamp`.
    Present,
    /// Lines carry `user, item, rating`; timestamps are drawn uniformly from
    /// `[0, 10^9)` under the seed, one per line in file order.
    Synthetic { seed: u64 },
}

#[derive(Debug, Clone)]
pub struct ParseOptions {
    pub delimiter: Delimiter,
    pub scale: RatingScale,
    pub timestamps: TimestampMode,
    pub skip_header: bool,
    /// Silently drop lines whose rating is outside the scale (for example the
    /// implicit `0` ratings of BookCrossing) instead of failing.
    pub drop_out_of_scale: bool,
}

impl ParseOptions {
    pub fn new(delimiter: Delimiter, scale: RatingScale) -> Self {
        Self { delimiter, scale, timestamps: TimestampMode::Present, skip_header: false, drop_out_of_scale: false }
    }
}

fn decode(bytes: &[u8]) -> String {
    match std::str::from_utf8(bytes) {
        Ok(s) => s.to_string(),
        // MovieLens item files are Latin-1.
        Err(_) => bytes.iter().map(|&b| b as char).collect(),
    }
}

fn unquote(field: &str) -> &str {
    let f = field.trim();
    f.strip_prefix('"').and_then(|s| s.strip_suffix('"')).unwrap_or(f)
}

/// Parses rating lines. Duplicate `(user, item)` pairs keep the record with
/// the latest timestamp (the later line on equal timestamps).
pub fn parse_interactions(text: &str, opts: &ParseOptions) -> Result<Vec<Interaction>> {
    let sep = opts.delimiter.as_str();
    let expected = match opts.timestamps {
        TimestampMode::Present => 4,
        TimestampMode::Synthetic { .. } => 3,
    };
    let mut rng = match opts.timestamps {
        TimestampMode::Synthetic { seed } => Some(seed::rng(seed::derive(seed, "timestamps"))),
        TimestampMode::Present => None,
    };

    let mut out: Vec<Interaction> = Vec::new();
    let mut seen: HashMap<(String, String), usize> = HashMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        if idx == 0 && opts.skip_header {
            continue;
        }
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(sep).map(unquote).collect();
        if fields.len() != expected {
            return Err(CorpusError::Parse {
                line: line_no,
                message: format!("expected {expected} fields, found {}", fields.len()),
            });
        }
        let rating: f64 = fields[2]
            .parse()
            .map_err(|_| CorpusError::Parse { line: line_no, message: format!("invalid rating `{}`", fields[2]) })?;
        let timestamp = match rng.as_mut() {
            Some(r) => r.gen_range(0..1_000_000_000i64),
            None => fields[3].parse().map_err(|_| CorpusError::Parse {
                line: line_no,
                message: format!("invalid timestamp `{}`", fields[3]),
            })?,
        };
        if !opts.scale.contains(rating) {
            if opts.drop_out_of_scale {
                continue;
            }
            return Err(CorpusError::RatingOutOfScale { line: line_no, rating, scale_max: opts.scale.max() });
        }
        if fields[0].is_empty() || fields[1].is_empty() {
            return Err(CorpusError::Parse { line: line_no, message: "empty identifier".into() });
        }
        let it = Interaction::new(fields[0], fields[1], rating, timestamp);
        match seen.get(&(it.user.clone(), it.item.clone())) {
            Some(&pos) => {
                if it.timestamp >= out[pos].timestamp {
                    out[pos] = it;
                }
            }
            None => {
                seen.insert((it.user.clone(), it.item.clone()), out.len());
                out.push(it);
            }
        }
    }
    Ok(out)
}

pub fn read_interactions(path: &Path, opts: &ParseOptions) -> Result<Vec<Interaction>> {
    let bytes = std::fs::read(path)?;
    parse_interactions(&decode(&bytes), opts)
}

/// Catalog layout: id and title are the first two fields; later fields are
/// kept as attributes under `attribute_names` (extra fields without a name
/// are ignored).
#[derive(Debug, Clone)]
pub struct CatalogFormat {
    pub delimiter: Delimiter,
    pub attribute_names: Vec<String>,
    pub skip_header: bool,
}

impl CatalogFormat {
    pub fn new(delimiter: Delimiter) -> Self {
        Self { delimiter, attribute_names: Vec::new(), skip_header: false }
    }
}

pub fn parse_catalog(text: &str, format: &CatalogFormat) -> Result<Catalog> {
    let sep = format.delimiter.as_str();
    let mut catalog = Catalog::new();
    for (idx, raw) in text.lines().enumerate() {
        if idx == 0 && format.skip_header {
            continue;
        }
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(sep).map(unquote).collect();
        if fields.len() < 2 {
            return Err(CorpusError::Parse { line: idx + 1, message: "catalog line needs id and title".into() });
        }
        let attributes = format
            .attribute_names
            .iter()
            .zip(fields.iter().skip(2))
            .filter(|(_, v)| !v.is_empty())
            .map(|(k, v)| (k.clone(), v.to_string()))
            .collect();
        catalog.insert(ItemMeta { item: fields[0].to_string(), title: fields[1].to_string(), attributes });
    }
    Ok(catalog)
}

pub fn read_catalog(path: &Path, format: &CatalogFormat) -> Result<Catalog> {
    let bytes = std::fs::read(path)?;
    parse_catalog(&decode(&bytes), format)
}
