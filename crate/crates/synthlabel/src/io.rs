//! On-disk formats: corpora, catalogs, label files, sample stores, models,
//! predictions, emitted datasets and the embedding cache.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use synthlabel_core::catalog::{Domain, LabelCatalog};
use synthlabel_core::corpus::{Corpus, Document, LabelScheme, Split};
use synthlabel_core::emit::FineTuneRecord;
use synthlabel_core::evaluate::parse_prediction;
use synthlabel_core::text::normalize_label;

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}:{line}: {msg}", path.display())]
    Parse { path: PathBuf, line: usize, msg: String },
    #[error("{}: {msg}", path.display())]
    Invalid { path: PathBuf, msg: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn parse_err(path: &Path, line: usize, msg: impl ToString) -> IoError {
    IoError::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.to_string(),
    }
}

fn invalid(path: &Path, msg: impl ToString) -> IoError {
    IoError::Invalid {
        path: path.to_path_buf(),
        msg: msg.to_string(),
    }
}

/// Writes through a temporary sibling and renames, so readers never see a
/// half-written file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    {
        let mut f = File::create(&tmp).map_err(io_err(&tmp))?;
        f.write_all(bytes).map_err(io_err(&tmp))?;
        f.sync_all().map_err(io_err(&tmp))?;
    }
    fs::rename(&tmp, path).map_err(io_err(path))
}

pub fn read_to_string(path: &Path) -> Result<String, IoError> {
    fs::read_to_string(path).map_err(io_err(path))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, IoError> {
    let text = read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| parse_err(path, e.line(), e))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), IoError> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| invalid(path, e))?;
    s.push('\n');
    write_atomic(path, s.as_bytes())
}

/// One value per non-blank line; errors carry 1-based line numbers.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, IoError> {
    let f = File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| parse_err(path, i + 1, e))?);
    }
    Ok(out)
}

/// Compact JSON, one value per line, LF endings.
pub fn to_jsonl<'a, T: Serialize + 'a>(items: impl IntoIterator<Item = &'a T>) -> String {
    let mut s = String::new();
    for item in items {
        s.push_str(&serde_json::to_string(item).expect("serializable"));
        s.push('\n');
    }
    s
}

pub fn write_jsonl<'a, T: Serialize + 'a>(path: &Path, items: impl IntoIterator<Item = &'a T>) -> Result<(), IoError> {
    write_atomic(path, to_jsonl(items).as_bytes())
}

// ------------------------------------------------------------------ corpus

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusFormat {
    Jsonl,
    Csv,
}

impl FromStr for CorpusFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "jsonl" | "json" => Ok(CorpusFormat::Jsonl),
            "csv" => Ok(CorpusFormat::Csv),
            other => Err(format!("unknown corpus format `{other}` (jsonl or csv)")),
        }
    }
}

impl CorpusFormat {
    pub fn from_path(path: &Path) -> Option<Self> {
        path.extension()?.to_str()?.parse().ok()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusRecord {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub labels: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<String>,
}

fn collect_corpus(
    path: &Path,
    name: &str,
    scheme: LabelScheme,
    records: impl Iterator<Item = Result<(usize, CorpusRecord), IoError>>,
) -> Result<Corpus, IoError> {
    let mut docs = Vec::new();
    let mut seen: BTreeMap<String, usize> = BTreeMap::new();
    for r in records {
        let (line, rec) = r?;
        if let Some(first) = seen.insert(rec.id.clone(), line) {
            return Err(parse_err(path, line, format!("duplicate id `{}` (first seen on line {first})", rec.id)));
        }
        let split = match rec.split.as_deref() {
            None | Some("") => Split::Train,
            Some(s) => s.parse().map_err(|e| parse_err(path, line, e))?,
        };
        docs.push(Document::new(rec.id, &rec.text, &rec.labels, split).map_err(|e| parse_err(path, line, e))?);
    }
    Corpus::new(name, scheme, docs).map_err(|e| invalid(path, e))
}

pub fn load_corpus(path: &Path, format: CorpusFormat, name: &str, scheme: LabelScheme) -> Result<Corpus, IoError> {
    match format {
        CorpusFormat::Jsonl => {
            let f = File::open(path).map_err(io_err(path))?;
            let records = BufReader::new(f).lines().enumerate().filter_map(|(i, line)| {
                let line = match line {
                    Ok(l) => l,
                    Err(e) => return Some(Err(io_err(path)(e))),
                };
                if line.trim().is_empty() {
                    return None;
                }
                Some(
                    serde_json::from_str::<CorpusRecord>(&line)
                        .map(|r| (i + 1, r))
                        .map_err(|e| parse_err(path, i + 1, e)),
                )
            });
            collect_corpus(path, name, scheme, records)
        }
        CorpusFormat::Csv => {
            let mut rdr = csv::ReaderBuilder::new()
                .has_headers(true)
                .from_path(path)
                .map_err(|e| invalid(path, e))?;
            let headers = rdr.headers().map_err(|e| parse_err(path, 1, e))?.clone();
            let col = |name: &str| headers.iter().position(|h| h.trim().eq_ignore_ascii_case(name));
            let (Some(id_col), Some(text_col)) = (col("id"), col("text")) else {
                return Err(parse_err(path, 1, "header must contain id and text columns"));
            };
            let labels_col = col("labels");
            let split_col = col("split");
            let records = rdr.into_records().map(|r| {
                let r = r.map_err(|e| {
                    let line = e.position().map_or(0, |p| p.line() as usize);
                    parse_err(path, line, e)
                })?;
                let line = r.position().map_or(0, |p| p.line() as usize);
                let field = |c: Option<usize>| c.and_then(|c| r.get(c)).unwrap_or("").to_string();
                let labels = field(labels_col)
                    .split(';')
                    .map(str::trim)
                    .filter(|l| !l.is_empty())
                    .map(String::from)
                    .collect();
                let split = Some(field(split_col)).filter(|s| !s.trim().is_empty());
                Ok((
                    line,
                    CorpusRecord {
                        id: field(Some(id_col)),
                        text: field(Some(text_col)),
                        labels,
                        split,
                    },
                ))
            });
            collect_corpus(path, name, scheme, records)
        }
    }
}

/// JSONL export with gold labels and splits; loading it back gives the same
/// texts byte for byte.
pub fn corpus_to_jsonl(corpus: &Corpus) -> String {
    let recs: Vec<CorpusRecord> = corpus
        .documents()
        .iter()
        .map(|d| CorpusRecord {
            id: d.id.clone(),
            text: d.text.clone(),
            labels: d.reveal_gold().to_vec(),
            split: Some(d.split.as_str().to_string()),
        })
        .collect();
    to_jsonl(&recs)
}

// ----------------------------------------------------------------- catalog

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CatalogFile {
    labels: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    hierarchy: Option<serde_json::Map<String, Value>>,
}

/// Reads `{"labels": [...], "hierarchy": {domain: [areas]}?}`. With a
/// hierarchy, the label list must be exactly its domains and areas.
pub fn load_catalog(path: &Path) -> Result<LabelCatalog, IoError> {
    let file: CatalogFile = read_json(path)?;
    parse_catalog(path, file)
}

fn parse_catalog(path: &Path, file: CatalogFile) -> Result<LabelCatalog, IoError> {
    let Some(h) = file.hierarchy else {
        return LabelCatalog::from_labels(&file.labels).map_err(|e| invalid(path, e));
    };
    let mut domains = Vec::new();
    for (name, areas) in h {
        let areas: Vec<String> =
            serde_json::from_value(areas).map_err(|e| invalid(path, format!("areas of `{name}`: {e}")))?;
        domains.push(Domain { name, areas });
    }
    let cat = LabelCatalog::from_hierarchy(domains).map_err(|e| invalid(path, e))?;
    let listed: std::collections::BTreeSet<String> = file.labels.iter().map(|l| normalize_label(l)).collect();
    let tree = cat.canonical_set();
    if let Some(extra) = listed.difference(&tree).next() {
        return Err(invalid(path, format!("label `{extra}` is not in the hierarchy")));
    }
    if let Some(missing) = tree.difference(&listed).next() {
        return Err(invalid(path, format!("hierarchy entry `{missing}` is missing from labels")));
    }
    Ok(cat)
}

pub fn catalog_to_json(cat: &LabelCatalog) -> Value {
    let hierarchy = cat.hierarchy().map(|ds| {
        ds.iter()
            .map(|d| (d.name.clone(), Value::from(d.areas.clone())))
            .collect::<serde_json::Map<_, _>>()
    });
    serde_json::to_value(CatalogFile {
        labels: cat.display_labels(),
        hierarchy,
    })
    .expect("serializable")
}

pub fn write_catalog(path: &Path, cat: &LabelCatalog) -> Result<(), IoError> {
    write_json(path, &catalog_to_json(cat))
}

/// `reuters` and `wos` name the bundled catalogs; anything else is a path.
pub fn resolve_catalog(spec: &str, base: &Path) -> Result<LabelCatalog, IoError> {
    match spec {
        "reuters" => Ok(LabelCatalog::reuters()),
        "wos" => Ok(LabelCatalog::wos()),
        p => load_catalog(&base.join(p)),
    }
}

// ---------------------------------------------------------------- datasets

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestPrompt {
    pub id: String,
    pub prompt: String,
}

/// Checks an emitted dataset line by line: exactly the keys `instruction`,
/// `input` and `output`, all strings, with a parseable bracket list as
/// output. Returns the record count.
pub fn validate_dataset(path: &Path) -> Result<usize, IoError> {
    let text = read_to_string(path)?;
    if text.contains('\r') {
        return Err(invalid(path, "CR line endings"));
    }
    let mut n = 0;
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let v: Value = serde_json::from_str(line).map_err(|e| parse_err(path, line_no, e))?;
        let obj = v.as_object().ok_or_else(|| parse_err(path, line_no, "not an object"))?;
        let mut keys: Vec<&str> = obj.keys().map(String::as_str).collect();
        keys.sort_unstable();
        if keys != ["input", "instruction", "output"] {
            return Err(parse_err(path, line_no, format!("unexpected keys {keys:?}")));
        }
        if !obj.values().all(Value::is_string) {
            return Err(parse_err(path, line_no, "non-string field"));
        }
        let rec: FineTuneRecord = serde_json::from_value(v).map_err(|e| parse_err(path, line_no, e))?;
        if rec.instruction.is_empty() {
            return Err(parse_err(path, line_no, "empty instruction"));
        }
        let p = parse_prediction("", &rec.output);
        if !(rec.output.starts_with('[') && rec.output.ends_with(']') && p.parse_ok && !p.labels.is_empty()) {
            return Err(parse_err(path, line_no, format!("output `{}` is not a label list", rec.output)));
        }
        n += 1;
    }
    Ok(n)
}

// ----------------------------------------------------------- embedding cache

/// Vectors stored as `{root}/{model}/{doc id}.json`. Characters outside
/// `[A-Za-z0-9._-]` are percent-encoded in both path components.
#[derive(Debug, Clone)]
pub struct EmbeddingCache {
    pub root: PathBuf,
}

pub fn path_component(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for b in s.bytes() {
        if b.is_ascii_alphanumeric() || matches!(b, b'.' | b'_' | b'-') {
            out.push(b as char);
        } else {
            out.push_str(&format!("%{b:02X}"));
        }
    }
    if out.starts_with('.') {
        out.replace_range(0..1, "%2E");
    }
    out
}

impl EmbeddingCache {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        EmbeddingCache { root: root.into() }
    }

    pub fn path(&self, model: &str, doc_id: &str) -> PathBuf {
        self.root
            .join(path_component(model))
            .join(format!("{}.json", path_component(doc_id)))
    }

    pub fn get(&self, model: &str, doc_id: &str) -> Option<Vec<f64>> {
        let p = self.path(model, doc_id);
        p.exists().then(|| read_json(&p).ok()).flatten()
    }

    pub fn put(&self, model: &str, doc_id: &str, v: &[f64]) -> Result<(), IoError> {
        write_json(&self.path(model, doc_id), v)
    }
}
