//! Dataset text format, version 1.
//!
//! ```text
//! pmc-dataset v1 classes=4 samples=800 modalities=A:8,B:8 dropped=
//! 0  S  2  -  A:0.1,0.2,...  B:...
//! 400  T  ?  3  A:...
//! ```
//!
//! One header line, then one tab-separated record per sample: id, domain
//! (`S`/`T`), category (`?` for unlabeled target samples), hidden truth (`-`
//! when absent), then one `name:v1,v2,...` field per present modality in
//! schema order. Floats use the shortest representation that parses back to
//! the same bits.

use std::fmt::Write as _;
use std::path::Path;

use super::{Domain, ModalitySchema, MultiModalDataset, Sample, Schema};
use crate::error::{PmcError, Result};

const MAGIC: &str = "pmc-dataset";
const VERSION: &str = "v1";

pub fn render(ds: &MultiModalDataset) -> String {
    let schema = ds.schema();
    let mut out = String::new();
    let mods: Vec<String> = schema
        .modalities
        .iter()
        .map(|m| format!("{}:{}", m.name, m.dim))
        .collect();
    let _ = writeln!(
        out,
        "{MAGIC} {VERSION} classes={} samples={} modalities={} dropped={}",
        schema.classes,
        ds.samples().len(),
        mods.join(","),
        schema.dropped.join(",")
    );
    for s in ds.samples() {
        let (dom, cat) = match s.domain {
            Domain::Source => ("S", s.label.map_or("?".to_string(), |y| y.to_string())),
            Domain::Target => ("T", "?".to_string()),
        };
        let truth = s.hidden().0.map_or("-".to_string(), |y| y.to_string());
        let _ = write!(out, "{}\t{dom}\t{cat}\t{truth}", s.id);
        for (p, m) in s.payloads.iter().zip(&schema.modalities) {
            if let Some(v) = p {
                let _ = write!(out, "\t{}:", m.name);
                for (i, x) in v.iter().enumerate() {
                    if i > 0 {
                        out.push(',');
                    }
                    let _ = write!(out, "{x:?}");
                }
            }
        }
        out.push('\n');
    }
    out
}

fn perr(line: usize, field: &str, reason: impl Into<String>) -> PmcError {
    PmcError::Parse {
        line,
        field: field.into(),
        reason: reason.into(),
    }
}

fn parse_header(line: &str) -> Result<(Schema, usize)> {
    let mut parts = line.split(' ');
    if parts.next() != Some(MAGIC) {
        return Err(perr(1, "magic", format!("expected `{MAGIC}`")));
    }
    if parts.next() != Some(VERSION) {
        return Err(perr(1, "version", format!("unsupported version, expected `{VERSION}`")));
    }
    let mut classes = None;
    let mut count = None;
    let mut modalities = None;
    let mut dropped = None;
    for kv in parts {
        let (k, v) = kv.split_once('=').ok_or_else(|| perr(1, kv, "expected key=value"))?;
        match k {
            "classes" => classes = Some(v.parse::<usize>().map_err(|e| perr(1, k, e.to_string()))?),
            "samples" => count = Some(v.parse::<usize>().map_err(|e| perr(1, k, e.to_string()))?),
            "modalities" => {
                let mut ms = Vec::new();
                for item in v.split(',') {
                    let (name, dim) = item
                        .split_once(':')
                        .ok_or_else(|| perr(1, k, format!("`{item}` is not name:dim")))?;
                    let dim = dim.parse::<usize>().map_err(|e| perr(1, k, e.to_string()))?;
                    ms.push(ModalitySchema {
                        name: name.to_string(),
                        dim,
                    });
                }
                modalities = Some(ms);
            }
            "dropped" => {
                dropped = Some(if v.is_empty() {
                    Vec::new()
                } else {
                    v.split(',').map(str::to_string).collect()
                })
            }
            other => return Err(perr(1, other, "unknown header key")),
        }
    }
    let schema = Schema {
        classes: classes.ok_or_else(|| perr(1, "classes", "missing"))?,
        modalities: modalities.ok_or_else(|| perr(1, "modalities", "missing"))?,
        dropped: dropped.ok_or_else(|| perr(1, "dropped", "missing"))?,
    };
    Ok((schema, count.ok_or_else(|| perr(1, "samples", "missing"))?))
}

fn parse_record(lineno: usize, line: &str, schema: &Schema) -> Result<Sample> {
    let mut fields = line.split('\t');
    let mut next = |name: &str| fields.next().ok_or_else(|| perr(lineno, name, "missing field"));
    let id = next("id")?
        .parse::<u64>()
        .map_err(|e| perr(lineno, "id", e.to_string()))?;
    let domain = match next("domain")? {
        "S" => Domain::Source,
        "T" => Domain::Target,
        other => return Err(perr(lineno, "domain", format!("expected S or T, got `{other}`"))),
    };
    let category = match next("category")? {
        "?" => None,
        v => Some(
            v.parse::<usize>()
                .map_err(|e| perr(lineno, "category", e.to_string()))?,
        ),
    };
    let truth = match next("truth")? {
        "-" => None,
        v => Some(v.parse::<usize>().map_err(|e| perr(lineno, "truth", e.to_string()))?),
    };
    let mut payloads: Vec<Option<Vec<f64>>> = vec![None; schema.modalities.len()];
    for field in fields {
        let (name, values) = field
            .split_once(':')
            .ok_or_else(|| perr(lineno, field, "expected name:values"))?;
        let idx = schema
            .modality_index(name)
            .ok_or_else(|| perr(lineno, name, "modality not in schema"))?;
        if payloads[idx].is_some() {
            return Err(perr(lineno, name, "modality given twice"));
        }
        let v = values
            .split(',')
            .map(|x| x.parse::<f64>())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|e| perr(lineno, name, e.to_string()))?;
        if v.len() != schema.modalities[idx].dim {
            return Err(perr(
                lineno,
                name,
                format!("expected {} values, found {}", schema.modalities[idx].dim, v.len()),
            ));
        }
        payloads[idx] = Some(v);
    }
    let sample = match (domain, category) {
        (Domain::Source, Some(y)) => Sample::source(id, y, payloads),
        (Domain::Source, None) => return Err(perr(lineno, "category", "source sample without label")),
        (Domain::Target, None) => Sample::target(id, truth, payloads),
        (Domain::Target, Some(_)) => return Err(perr(lineno, "category", "target sample must be unlabeled")),
    };
    Ok(sample)
}

pub fn parse(text: &str) -> Result<MultiModalDataset> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| perr(1, "header", "empty file"))?;
    let (schema, count) = parse_header(header)?;
    let mut samples = Vec::with_capacity(count);
    for (i, line) in lines.enumerate() {
        let lineno = i + 2;
        if line.is_empty() {
            continue;
        }
        samples.push(parse_record(lineno, line, &schema)?);
    }
    if samples.len() != count {
        return Err(perr(
            samples.len() + 2,
            "samples",
            format!("header declares {count} samples, found {}", samples.len()),
        ));
    }
    if !text.is_empty() && !text.ends_with('\n') {
        return Err(perr(count + 1, "eof", "file does not end with a newline (truncated?)"));
    }
    MultiModalDataset::new(schema, samples)
}

pub fn save(ds: &MultiModalDataset, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, render(ds))?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<MultiModalDataset> {
    let text = std::fs::read_to_string(path)?;
    parse(&text)
}
