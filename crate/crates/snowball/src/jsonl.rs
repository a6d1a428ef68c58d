//! Corpus files: one JSON object per line,
//! `{"id", "tokens", "head": {"id", "span": [start, end]}, "tail": {...}, "relation"?}`
//! with exclusive span ends. Blank lines are skipped.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use snowball_core::{Instance, LabeledCorpus, SeedSet, Span, UnlabeledCorpus};

use crate::error::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Mention {
    id: String,
    span: [usize; 2],
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    id: String,
    tokens: Vec<String>,
    head: Mention,
    tail: Mention,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    relation: Option<String>,
}

impl From<&Instance> for Record {
    fn from(x: &Instance) -> Self {
        Record {
            id: x.id.clone(),
            tokens: x.tokens.clone(),
            head: Mention { id: x.head.entity.clone(), span: [x.head.start, x.head.end] },
            tail: Mention { id: x.tail.entity.clone(), span: [x.tail.start, x.tail.end] },
            relation: x.relation.clone(),
        }
    }
}

/// Parses corpus text; `path` is only used in error messages.
pub fn parse_instances(text: &str, path: &Path) -> Result<Vec<Instance>> {
    Ok(parse_numbered(text, path)?.into_iter().map(|(_, x)| x).collect())
}

fn parse_numbered(text: &str, path: &Path) -> Result<Vec<(usize, Instance)>> {
    let mut out = Vec::new();
    let mut first_seen: HashMap<String, usize> = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let r: Record = serde_json::from_str(line).map_err(|e| Error::format(path, Some(lineno), e.to_string()))?;
        if let Some(prev) = first_seen.get(&r.id) {
            return Err(Error::format(path, Some(lineno), format!("duplicate id `{}` (first on line {prev})", r.id)));
        }
        let x = Instance::new(
            r.id,
            r.tokens,
            Span::new(r.head.span[0], r.head.span[1], r.head.id),
            Span::new(r.tail.span[0], r.tail.span[1], r.tail.id),
            r.relation,
        )
        .map_err(|e| Error::format(path, Some(lineno), e.to_string()))?;
        first_seen.insert(x.id.clone(), lineno);
        out.push((lineno, x));
    }
    Ok(out)
}

pub fn read_instances(path: &Path) -> Result<Vec<Instance>> {
    let text = fs::read_to_string(path).map_err(|e| Error::read(path, e))?;
    parse_instances(&text, path)
}

/// Every line must carry a relation label.
pub fn read_labeled(path: &Path) -> Result<LabeledCorpus> {
    let text = fs::read_to_string(path).map_err(|e| Error::read(path, e))?;
    let numbered = parse_numbered(&text, path)?;
    if let Some((lineno, _)) = numbered.iter().find(|(_, x)| x.relation.is_none()) {
        return Err(Error::format(path, Some(*lineno), "labeled corpus line has no relation"));
    }
    let instances = numbered.into_iter().map(|(_, x)| x).collect();
    LabeledCorpus::new(instances).map_err(|e| Error::format(path, None, e.to_string()))
}

/// Labels are stripped from the corpus and returned separately as gold
/// annotations.
pub fn read_unlabeled(path: &Path) -> Result<(UnlabeledCorpus, BTreeMap<String, String>)> {
    let instances = read_instances(path)?;
    let gold = instances.iter().filter_map(|x| Some((x.id.clone(), x.relation.clone()?))).collect();
    let corpus = UnlabeledCorpus::new(instances.iter().map(Instance::unlabeled).collect())
        .map_err(|e| Error::format(path, None, e.to_string()))?;
    Ok((corpus, gold))
}

/// Seed instances for one relation. The relation comes from `relation` or,
/// failing that, from the labels in the file, which must then agree.
pub fn read_seeds(path: &Path, relation: Option<&str>) -> Result<SeedSet> {
    let instances = read_instances(path)?;
    let relation = match relation {
        Some(r) => r.to_string(),
        None => {
            let mut labels = instances.iter().filter_map(|x| x.relation.as_deref());
            let first = labels.next().ok_or_else(|| {
                Error::Usage(format!("{}: seeds carry no relation label; pass --relation", path.display()))
            })?;
            if let Some(other) = labels.find(|&r| r != first) {
                return Err(Error::format(path, None, format!("seeds mix relations `{first}` and `{other}`")));
            }
            first.to_string()
        }
    };
    SeedSet::new(relation, instances.iter().map(Instance::unlabeled).collect())
        .map_err(|e| Error::format(path, None, e.to_string()))
}

pub fn to_line(x: &Instance) -> String {
    serde_json::to_string(&Record::from(x)).expect("records always serialize")
}

pub fn write_instances<'a>(path: &Path, instances: impl IntoIterator<Item = &'a Instance>) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::write(path, e))?;
    let mut w = BufWriter::new(file);
    for x in instances {
        writeln!(w, "{}", to_line(x)).map_err(|e| Error::write(path, e))?;
    }
    w.flush().map_err(|e| Error::write(path, e))
}
