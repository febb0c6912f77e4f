//! Line-oriented dataset files.
//!
//! ```text
//! #recrank-dataset v1          (or #recrank-split v1)
//! #scale_max 5
//! #seed 42                      (or `none`)
//! #users 943
//! #items 1682
//! #interactions 100000
//! #skipped_users 0                 (split files only)
//! I <item> <title> [<key>=<value>]...
//! R <user> <item> <rating> <timestamp>
//! V <user> <item> <rating> <timestamp>   (split files only)
//! T <user> <item> <rating> <timestamp>   (split files only)
//! ```
//!
//! Fields are tab-separated; `\\`, tab, newline and carriage return inside
//! text fields are backslash-escaped.

use std::collections::BTreeMap;
use std::io::Write;

use super::{Catalog, CorpusError, Dataset, Interaction, ItemMeta, Rating, RatingScale, Result, SplitDataset};

const DATASET_MAGIC: &str = "#recrank-dataset\tv1";
const SPLIT_MAGIC: &str = "#recrank-split\tv1";

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out
}

fn unescape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('t') => out.push('\t'),
            Some('n') => out.push('\n'),
            Some('r') => out.push('\r'),
            Some(other) => out.push(other),
            None => out.push('\\'),
        }
    }
    out
}

fn write_header<W: Write>(w: &mut W, magic: &str, ds: &Dataset) -> std::io::Result<()> {
    writeln!(w, "{magic}")?;
    writeln!(w, "#scale_max\t{}", ds.scale().max())?;
    match ds.seed() {
        Some(s) => writeln!(w, "#seed\t{s}")?,
        None => writeln!(w, "#seed\tnone")?,
    }
    writeln!(w, "#users\t{}", ds.n_users())?;
    writeln!(w, "#items\t{}", ds.n_items())?;
    writeln!(w, "#interactions\t{}", ds.n_interactions())
}

fn write_items<W: Write>(w: &mut W, ds: &Dataset) -> std::io::Result<()> {
    for i in 0..ds.n_items() {
        let m = ds.meta(i);
        write!(w, "I\t{}\t{}", escape(&m.item), escape(&m.title))?;
        for (k, v) in &m.attributes {
            write!(w, "\t{}={}", escape(k), escape(v))?;
        }
        writeln!(w)?;
    }
    Ok(())
}

fn write_rating<W: Write>(w: &mut W, tag: char, ds: &Dataset, r: &Rating) -> std::io::Result<()> {
    writeln!(w, "{tag}\t{}\t{}\t{}\t{}", escape(ds.user_id(r.user)), escape(ds.item_id(r.item)), r.rating, r.timestamp)
}

pub fn write_dataset<W: Write>(w: &mut W, ds: &Dataset) -> std::io::Result<()> {
    write_header(w, DATASET_MAGIC, ds)?;
    write_items(w, ds)?;
    for r in ds.ratings() {
        write_rating(w, 'R', ds, r)?;
    }
    Ok(())
}

pub fn write_split<W: Write>(w: &mut W, split: &SplitDataset) -> std::io::Result<()> {
    write_header(w, SPLIT_MAGIC, &split.train)?;
    writeln!(w, "#skipped_users\t{}", split.skipped_users)?;
    write_items(w, &split.train)?;
    for r in split.train.ratings() {
        write_rating(w, 'R', &split.train, r)?;
    }
    for r in split.validation.values() {
        write_rating(w, 'V', &split.train, r)?;
    }
    for r in split.test.values() {
        write_rating(w, 'T', &split.train, r)?;
    }
    Ok(())
}

struct Parsed {
    header: BTreeMap<String, String>,
    items: Vec<ItemMeta>,
    rows: Vec<(char, Interaction)>,
}

fn parse_file(text: &str, magic: &str) -> Result<Parsed> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, l)) if l == magic => {}
        _ => return Err(CorpusError::Format(format!("missing `{magic}` header"))),
    }
    let mut header = BTreeMap::new();
    let mut items = Vec::new();
    let mut rows = Vec::new();
    for (idx, line) in lines {
        let bad = |m: &str| CorpusError::Parse { line: idx + 1, message: m.to_string() };
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if let Some(key) = fields[0].strip_prefix('#') {
            let value = fields.get(1).ok_or_else(|| bad("header without value"))?;
            header.insert(key.to_string(), value.to_string());
            continue;
        }
        match fields[0] {
            "I" => {
                if fields.len() < 3 {
                    return Err(bad("item line needs id and title"));
                }
                let mut attributes = Vec::new();
                for kv in &fields[3..] {
                    let (k, v) = kv.split_once('=').ok_or_else(|| bad("attribute without `=`"))?;
                    attributes.push((unescape(k), unescape(v)));
                }
                items.push(ItemMeta { item: unescape(fields[1]), title: unescape(fields[2]), attributes });
            }
            tag @ ("R" | "V" | "T") => {
                if fields.len() != 5 {
                    return Err(bad("rating line needs 5 fields"));
                }
                let rating = fields[3].parse().map_err(|_| bad("invalid rating"))?;
                let ts = fields[4].parse().map_err(|_| bad("invalid timestamp"))?;
                let tag = tag.chars().next().unwrap_or('R');
                rows.push((tag, Interaction::new(unescape(fields[1]), unescape(fields[2]), rating, ts)));
            }
            other => return Err(bad(&format!("unknown record tag `{other}`"))),
        }
    }
    Ok(Parsed { header, items, rows })
}

fn header_scale_seed(h: &BTreeMap<String, String>) -> Result<(RatingScale, Option<u64>)> {
    let scale_max: u32 = h
        .get("scale_max")
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| CorpusError::Format("missing scale_max".into()))?;
    let seed = match h.get("seed").map(String::as_str) {
        None | Some("none") => None,
        Some(s) => Some(s.parse().map_err(|_| CorpusError::Format("invalid seed".into()))?),
    };
    Ok((RatingScale::new(scale_max)?, seed))
}

fn check_count(h: &BTreeMap<String, String>, key: &str, actual: usize) -> Result<()> {
    match h.get(key).and_then(|s| s.parse::<usize>().ok()) {
        Some(n) if n == actual => Ok(()),
        Some(n) => Err(CorpusError::Format(format!("header says {n} {key}, found {actual}"))),
        None => Err(CorpusError::Format(format!("missing {key} header"))),
    }
}

pub fn read_dataset(text: &str) -> Result<Dataset> {
    let p = parse_file(text, DATASET_MAGIC)?;
    let (scale, seed) = header_scale_seed(&p.header)?;
    let interactions = p.rows.into_iter().map(|(_, it)| it).collect();
    let ds = Dataset::assemble(interactions, p.items, &Catalog::new(), scale, seed)?;
    check_count(&p.header, "users", ds.n_users())?;
    check_count(&p.header, "items", ds.n_items())?;
    check_count(&p.header, "interactions", ds.n_interactions())?;
    Ok(ds)
}

pub fn read_split(text: &str) -> Result<SplitDataset> {
    let p = parse_file(text, SPLIT_MAGIC)?;
    let (scale, seed) = header_scale_seed(&p.header)?;
    let skipped_users = p.header.get("skipped_users").and_then(|s| s.parse().ok()).unwrap_or(0);
    let mut train = Vec::new();
    let mut held = Vec::new();
    for (tag, it) in p.rows {
        if tag == 'R' {
            train.push(it);
        } else {
            held.push((tag, it));
        }
    }
    let train = Dataset::assemble(train, p.items, &Catalog::new(), scale, seed)?;
    check_count(&p.header, "users", train.n_users())?;
    check_count(&p.header, "items", train.n_items())?;
    check_count(&p.header, "interactions", train.n_interactions())?;
    let mut validation = BTreeMap::new();
    let mut test = BTreeMap::new();
    for (tag, it) in held {
        let r = Rating {
            user: train.user_idx(&it.user)?,
            item: train.item_idx(&it.item)?,
            rating: it.rating,
            timestamp: it.timestamp,
        };
        if tag == 'V' {
            validation.insert(r.user, r);
        } else {
            test.insert(r.user, r);
        }
    }
    Ok(SplitDataset { train, validation, test, skipped_users })
}
