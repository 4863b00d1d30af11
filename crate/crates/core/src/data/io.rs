//! Schema declaration files and ratings CSV reading/writing.
//!
//! The declaration is line-oriented `role=column` text so a dataset release
//! with renamed columns only needs a new declaration, not a code change.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use crate::data::{Dataset, RatingRecord, SIZE_BUCKET_FIELD};
use crate::error::{Error, Result};

/// Mapping from column names to field roles, plus the rating scale.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemaDecl {
    pub group_col: String,
    pub item_col: String,
    pub context_cols: Vec<String>,
    pub criteria_cols: Vec<String>,
    pub overall_col: String,
    pub members_col: Option<String>,
    pub group_size_col: Option<String>,
    /// When set, a derived `SizeBucket` context (2, 3, 4, 5+) is attached to
    /// every record that carries a group size. Off by default.
    pub size_bucket: bool,
    pub scale: (f64, f64),
}

impl SchemaDecl {
    /// The default declaration matching the public group ratings file:
    /// contexts Class/Semester/Lockdown, criteria App/Data/Ease, scale [1,5].
    pub fn itm_rec_default() -> SchemaDecl {
        SchemaDecl {
            group_col: "group_id".into(),
            item_col: "item_id".into(),
            context_cols: vec!["Class".into(), "Semester".into(), "Lockdown".into()],
            criteria_cols: vec!["App".into(), "Data".into(), "Ease".into()],
            overall_col: "overall".into(),
            members_col: None,
            group_size_col: None,
            size_bucket: false,
            scale: (1.0, 5.0),
        }
    }

    pub fn from_file(path: &Path) -> Result<SchemaDecl> {
        let text = std::fs::read_to_string(path)?;
        SchemaDecl::parse(&text)
    }

    /// Parse `key=value` lines; `#` starts a comment. Keys: group, item,
    /// context (repeatable), criterion (repeatable), overall, members,
    /// group_size, size_bucket (on/off), scale (lo,hi).
    pub fn parse(text: &str) -> Result<SchemaDecl> {
        let mut group = None;
        let mut item = None;
        let mut overall = None;
        let mut contexts = Vec::new();
        let mut criteria = Vec::new();
        let mut members = None;
        let mut group_size = None;
        let mut size_bucket = false;
        let mut scale = None;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                row: lineno + 1,
                msg: format!("expected key=value, got `{}`", line),
            })?;
            let (key, value) = (key.trim(), value.trim().to_string());
            match key {
                "group" => group = Some(value),
                "item" => item = Some(value),
                "overall" => overall = Some(value),
                "context" => contexts.push(value),
                "criterion" => criteria.push(value),
                "members" => members = Some(value),
                "group_size" => group_size = Some(value),
                "size_bucket" => size_bucket = matches!(value.as_str(), "on" | "true" | "1"),
                "scale" => {
                    let parts: Vec<&str> = value.split(',').map(str::trim).collect();
                    if parts.len() != 2 {
                        return Err(Error::Parse {
                            row: lineno + 1,
                            msg: format!("scale needs `lo,hi`, got `{}`", value),
                        });
                    }
                    let lo: f64 = parts[0].parse().map_err(|_| Error::Parse {
                        row: lineno + 1,
                        msg: format!("bad scale low `{}`", parts[0]),
                    })?;
                    let hi: f64 = parts[1].parse().map_err(|_| Error::Parse {
                        row: lineno + 1,
                        msg: format!("bad scale high `{}`", parts[1]),
                    })?;
                    scale = Some((lo, hi));
                }
                other => {
                    return Err(Error::Parse {
                        row: lineno + 1,
                        msg: format!("unknown declaration key `{}`", other),
                    })
                }
            }
        }
        let decl = SchemaDecl {
            group_col: group.ok_or_else(|| Error::Config("declaration missing `group`".into()))?,
            item_col: item.ok_or_else(|| Error::Config("declaration missing `item`".into()))?,
            overall_col: overall
                .ok_or_else(|| Error::Config("declaration missing `overall`".into()))?,
            context_cols: contexts,
            criteria_cols: criteria,
            members_col: members,
            group_size_col: group_size,
            size_bucket,
            scale: scale.ok_or_else(|| Error::Config("declaration missing `scale`".into()))?,
        };
        if decl.scale.0 >= decl.scale.1 {
            return Err(Error::Config(format!(
                "scale low {} must be below high {}",
                decl.scale.0, decl.scale.1
            )));
        }
        Ok(decl)
    }

    /// Context field names as the pipeline sees them: the declared context
    /// columns plus the derived size bucket when enabled.
    pub fn context_names(&self) -> Vec<String> {
        let mut names = self.context_cols.clone();
        if self.size_bucket {
            names.push(SIZE_BUCKET_FIELD.to_string());
        }
        names
    }

    /// Serialize back to the declaration text format.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("group={}\n", self.group_col));
        out.push_str(&format!("item={}\n", self.item_col));
        for c in &self.context_cols {
            out.push_str(&format!("context={}\n", c));
        }
        for c in &self.criteria_cols {
            out.push_str(&format!("criterion={}\n", c));
        }
        out.push_str(&format!("overall={}\n", self.overall_col));
        if let Some(m) = &self.members_col {
            out.push_str(&format!("members={}\n", m));
        }
        if let Some(g) = &self.group_size_col {
            out.push_str(&format!("group_size={}\n", g));
        }
        if self.size_bucket {
            out.push_str("size_bucket=on\n");
        }
        out.push_str(&format!("scale={},{}\n", self.scale.0, self.scale.1));
        out
    }
}

fn size_bucket_token(size: usize) -> String {
    match size {
        0..=2 => "2".into(),
        3 => "3".into(),
        4 => "4".into(),
        _ => "5+".into(),
    }
}

/// Load a header-first comma-separated UTF-8 ratings file under a
/// declaration. Every rating is validated against the scale; errors carry
/// the 1-based file row (header is row 1).
pub fn load_ratings_csv(path: &Path, decl: &SchemaDecl) -> Result<Dataset> {
    let file = File::open(path).map_err(|e| {
        Error::Dataset(format!("cannot open ratings file {}: {}", path.display(), e))
    })?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let headers = reader
        .headers()
        .map_err(|e| Error::Parse { row: 1, msg: e.to_string() })?
        .clone();
    let col = |name: &str| -> Result<usize> {
        headers.iter().position(|h| h == name).ok_or_else(|| Error::Parse {
            row: 1,
            msg: format!("missing column `{}` (header: {})", name, headers.iter().collect::<Vec<_>>().join(",")),
        })
    };
    let group_idx = col(&decl.group_col)?;
    let item_idx = col(&decl.item_col)?;
    let overall_idx = col(&decl.overall_col)?;
    let context_idx: Vec<usize> = decl
        .context_cols
        .iter()
        .map(|c| col(c))
        .collect::<Result<_>>()?;
    let criteria_idx: Vec<usize> = decl
        .criteria_cols
        .iter()
        .map(|c| col(c))
        .collect::<Result<_>>()?;
    let members_idx = decl.members_col.as_deref().map(col).transpose()?;
    let size_idx = decl.group_size_col.as_deref().map(col).transpose()?;

    let (lo, hi) = decl.scale;
    let mut records = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let rownum = i + 2; // header is row 1
        let row = row.map_err(|e| Error::Parse { row: rownum, msg: e.to_string() })?;
        let field = |idx: usize| -> Result<&str> {
            row.get(idx).ok_or_else(|| Error::Parse {
                row: rownum,
                msg: format!("row has {} fields, expected at least {}", row.len(), idx + 1),
            })
        };
        let overall: f64 = field(overall_idx)?.trim().parse().map_err(|_| Error::Parse {
            row: rownum,
            msg: format!("overall rating `{}` is not numeric", field(overall_idx).unwrap_or("")),
        })?;
        if !(lo..=hi).contains(&overall) {
            return Err(Error::Parse {
                row: rownum,
                msg: format!("overall rating {} outside scale [{},{}]", overall, lo, hi),
            });
        }
        let mut contexts = BTreeMap::new();
        for (name, &idx) in decl.context_cols.iter().zip(&context_idx) {
            contexts.insert(name.clone(), field(idx)?.trim().to_string());
        }
        let mut criteria = BTreeMap::new();
        for (name, &idx) in decl.criteria_cols.iter().zip(&criteria_idx) {
            let raw = field(idx)?.trim();
            let level: i64 = raw.parse().map_err(|_| Error::Parse {
                row: rownum,
                msg: format!("criterion `{}` value `{}` is not an integer", name, raw),
            })?;
            if (level as f64) < lo || (level as f64) > hi {
                return Err(Error::Parse {
                    row: rownum,
                    msg: format!("criterion `{}` level {} outside scale [{},{}]", name, level, lo, hi),
                });
            }
            criteria.insert(name.clone(), level);
        }
        let members: Option<Vec<String>> = match members_idx {
            Some(idx) => {
                let raw = field(idx)?.trim();
                if raw.is_empty() {
                    None
                } else {
                    Some(raw.split(';').map(|s| s.trim().to_string()).collect())
                }
            }
            None => None,
        };
        let group_size = match size_idx {
            Some(idx) => {
                let raw = field(idx)?.trim();
                if raw.is_empty() {
                    None
                } else {
                    Some(raw.parse::<usize>().map_err(|_| Error::Parse {
                        row: rownum,
                        msg: format!("group size `{}` is not a count", raw),
                    })?)
                }
            }
            None => None,
        }
        .or_else(|| members.as_ref().map(|m| m.len()));
        if decl.size_bucket {
            if let Some(size) = group_size {
                contexts.insert(SIZE_BUCKET_FIELD.to_string(), size_bucket_token(size));
            }
        }
        records.push(RatingRecord {
            group_id: field(group_idx)?.trim().to_string(),
            item_id: field(item_idx)?.trim().to_string(),
            contexts,
            criteria,
            overall,
            members,
            group_size,
        });
    }
    if records.is_empty() {
        return Err(Error::Dataset(format!(
            "{} contains no data rows",
            path.display()
        )));
    }
    Ok(Dataset {
        records,
        decl: decl.clone(),
    })
}

/// Write a dataset back out in the declared column order. The derived size
/// bucket context is not written; it is recomputed on load.
pub fn write_ratings_csv(ds: &Dataset, path: &Path) -> Result<()> {
    let decl = &ds.decl;
    let file = File::create(path)?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    let mut header: Vec<&str> = vec![&decl.group_col, &decl.item_col];
    header.extend(decl.context_cols.iter().map(|s| s.as_str()));
    header.extend(decl.criteria_cols.iter().map(|s| s.as_str()));
    header.push(&decl.overall_col);
    if let Some(m) = &decl.members_col {
        header.push(m);
    }
    if let Some(g) = &decl.group_size_col {
        header.push(g);
    }
    w.write_record(&header).map_err(csv_io)?;
    for r in &ds.records {
        let mut row: Vec<String> = vec![r.group_id.clone(), r.item_id.clone()];
        for c in &decl.context_cols {
            row.push(r.contexts.get(c).cloned().unwrap_or_default());
        }
        for c in &decl.criteria_cols {
            row.push(r.criteria.get(c).map(|v| v.to_string()).unwrap_or_default());
        }
        row.push(format_rating(r.overall));
        if decl.members_col.is_some() {
            row.push(r.members.as_ref().map(|m| m.join(";")).unwrap_or_default());
        }
        if decl.group_size_col.is_some() {
            row.push(r.group_size.map(|s| s.to_string()).unwrap_or_default());
        }
        w.write_record(&row).map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

fn format_rating(v: f64) -> String {
    // shortest round-trip float formatting keeps file output byte-stable
    format!("{}", v)
}

fn csv_io(e: csv::Error) -> Error {
    Error::Dataset(format!("csv write failed: {}", e))
}
