//! Corpus ingestion: tokenization, vocabulary, side-data encoding, CSV/JSONL
//! readers, and the synthetic review generator used throughout the tests.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{BufRead, BufReader, Write as _};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lowercases and splits on runs of non-alphanumeric characters.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_owned)
        .collect()
}

/// Token table ordered by first occurrence.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Builds a vocabulary from tokenized documents, keeping first-occurrence
    /// order. Fails with `AllDocumentsEmpty` when no document has a token.
    pub fn build<S: AsRef<str>>(docs: &[Vec<S>]) -> Result<Self> {
        let mut vocab = Self {
            tokens: Vec::new(),
            index: HashMap::new(),
        };
        for doc in docs {
            for token in doc {
                vocab.intern(token.as_ref());
            }
        }
        if vocab.tokens.is_empty() {
            return Err(Error::AllDocumentsEmpty);
        }
        Ok(vocab)
    }

    /// Rebuilds a vocabulary from an already-deduplicated token list.
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        let mut vocab = Self {
            tokens: Vec::new(),
            index: HashMap::new(),
        };
        for token in &tokens {
            if vocab.index.contains_key(token) {
                return Err(Error::InvalidArgument(format!(
                    "duplicate vocabulary token `{token}`"
                )));
            }
            vocab.intern(token);
        }
        if vocab.tokens.is_empty() {
            return Err(Error::AllDocumentsEmpty);
        }
        Ok(vocab)
    }

    fn intern(&mut self, token: &str) -> usize {
        if let Some(&i) = self.index.get(token) {
            return i;
        }
        let i = self.tokens.len();
        self.tokens.push(token.to_owned());
        self.index.insert(token.to_owned(), i);
        i
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn token(&self, index: usize) -> Result<&str> {
        self.tokens
            .get(index)
            .map(String::as_str)
            .ok_or(Error::IndexOutOfRange {
                index,
                limit: self.tokens.len(),
            })
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

/// One categorical side column with its observed values (sorted).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SideColumn {
    pub name: String,
    pub values: Vec<String>,
}

/// Concatenated one-hot layout of the side columns. The encoded vector lays
/// the columns out in order, one block per column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SideSchema {
    pub columns: Vec<SideColumn>,
}

impl SideSchema {
    pub fn empty() -> Self {
        Self {
            columns: Vec::new(),
        }
    }

    pub fn width(&self) -> usize {
        self.columns.iter().map(|c| c.values.len()).sum()
    }

    /// One-hot encodes one value per column, in column order.
    pub fn encode(&self, values: &[&str]) -> Result<Vec<f64>> {
        if values.len() != self.columns.len() {
            return Err(Error::DimensionMismatch(format!(
                "expected {} side values, got {}",
                self.columns.len(),
                values.len()
            )));
        }
        let mut out = vec![0.0; self.width()];
        let mut offset = 0;
        for (col, &value) in self.columns.iter().zip(values) {
            let pos = col.values.iter().position(|v| v == value).ok_or_else(|| {
                Error::UnknownSideValue {
                    column: col.name.clone(),
                    value: value.to_owned(),
                }
            })?;
            out[offset + pos] = 1.0;
            offset += col.values.len();
        }
        Ok(out)
    }

    /// Recovers the column values from a strict one-hot encoding.
    pub fn decode(&self, side: &[f64]) -> Result<Vec<String>> {
        if side.len() != self.width() {
            return Err(Error::DimensionMismatch(format!(
                "side vector has {} entries, schema expects {}",
                side.len(),
                self.width()
            )));
        }
        let mut out = Vec::with_capacity(self.columns.len());
        let mut offset = 0;
        for col in &self.columns {
            let block = &side[offset..offset + col.values.len()];
            let ones: Vec<usize> = block
                .iter()
                .enumerate()
                .filter(|&(_, &v)| v != 0.0)
                .map(|(i, _)| i)
                .collect();
            match ones.as_slice() {
                [i] if block[*i] == 1.0 => out.push(col.values[*i].clone()),
                _ => {
                    return Err(Error::InvalidArgument(format!(
                        "side block for column `{}` is not one-hot",
                        col.name
                    )));
                }
            }
            offset += col.values.len();
        }
        Ok(out)
    }
}

/// A bag-of-words document: word indices into the corpus vocabulary (with
/// repetitions), an encoded side vector, and optional supervision.
#[derive(Debug, Clone, PartialEq)]
pub struct Document {
    pub words: Vec<usize>,
    pub side: Vec<f64>,
    pub label: Option<i64>,
    pub category: Option<String>,
}

impl Document {
    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub docs: Vec<Document>,
    pub vocab: Vocabulary,
    pub side: SideSchema,
}

impl Corpus {
    pub fn side_dim(&self) -> usize {
        self.side.width()
    }

    pub fn total_words(&self) -> usize {
        self.docs.iter().map(Document::len).sum()
    }
}

/// Column mapping for loading a corpus file.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusSchema {
    /// Name of the text column.
    pub text: String,
    /// Side columns; `None` uses every column not otherwise claimed.
    pub side: Option<Vec<String>>,
    /// Optional integer label column.
    pub label: Option<String>,
    /// Optional gold category column.
    pub category: Option<String>,
}

impl Default for CorpusSchema {
    fn default() -> Self {
        Self {
            text: "text".into(),
            side: None,
            label: None,
            category: None,
        }
    }
}

struct RawRow {
    tokens: Vec<String>,
    side_values: Vec<String>,
    label: Option<i64>,
    category: Option<String>,
}

/// Loads a corpus from CSV (header row required) or JSONL, chosen by file
/// extension.
///
/// The schema's `text`/`label`/`category` names select CSV columns; JSONL
/// rows always use the fixed fields `text`, `side`, `label`, `category`.
/// Side-column selection applies to both formats.
pub fn load_corpus(path: &Path, schema: &CorpusSchema) -> Result<Corpus> {
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
    let (rows, side_names) = match ext.to_ascii_lowercase().as_str() {
        "csv" => read_csv_rows(path, schema)?,
        "jsonl" | "ndjson" => read_jsonl_rows(path, schema)?,
        other => {
            return Err(Error::InvalidArgument(format!(
                "unsupported corpus extension `{other}` (expected csv or jsonl)"
            )));
        }
    };
    assemble_corpus(rows, side_names)
}

fn read_csv_rows(path: &Path, schema: &CorpusSchema) -> Result<(Vec<RawRow>, Vec<String>)> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();

    let col_index = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_owned()))
    };

    let text_idx = col_index(&schema.text)?;
    let label_idx = schema.label.as_deref().map(col_index).transpose()?;
    let category_idx = schema.category.as_deref().map(col_index).transpose()?;

    let side_names: Vec<String> = match &schema.side {
        Some(names) => {
            for n in names {
                col_index(n)?;
            }
            names.clone()
        }
        None => headers
            .iter()
            .filter(|h| {
                let claimed = **h == schema.text
                    || schema.label.as_deref() == Some(h.as_str())
                    || schema.category.as_deref() == Some(h.as_str());
                !claimed
            })
            .cloned()
            .collect(),
    };
    let side_idx: Vec<usize> = side_names
        .iter()
        .map(|n| col_index(n))
        .collect::<Result<_>>()?;

    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1; // first data row is row 1
        let record = record.map_err(|e| Error::MalformedRow {
            row,
            reason: e.to_string(),
        })?;
        let field = |idx: usize| -> Result<&str> {
            record.get(idx).ok_or(Error::MalformedRow {
                row,
                reason: format!("missing field {idx}"),
            })
        };
        let label = match label_idx {
            Some(idx) => {
                let raw = field(idx)?.trim();
                if raw.is_empty() {
                    None
                } else {
                    Some(raw.parse::<i64>().map_err(|_| Error::MalformedRow {
                        row,
                        reason: format!("label `{raw}` is not an integer"),
                    })?)
                }
            }
            None => None,
        };
        let category = match category_idx {
            Some(idx) => {
                let raw = field(idx)?.trim();
                (!raw.is_empty()).then(|| raw.to_owned())
            }
            None => None,
        };
        rows.push(RawRow {
            tokens: tokenize(field(text_idx)?),
            side_values: side_idx
                .iter()
                .map(|&idx| field(idx).map(|s| s.trim().to_owned()))
                .collect::<Result<_>>()?,
            label,
            category,
        });
    }
    Ok((rows, side_names))
}

#[derive(Deserialize)]
struct JsonRow {
    text: String,
    #[serde(default)]
    side: BTreeMap<String, String>,
    #[serde(default)]
    label: Option<i64>,
    #[serde(default)]
    category: Option<String>,
}

fn read_jsonl_rows(path: &Path, schema: &CorpusSchema) -> Result<(Vec<RawRow>, Vec<String>)> {
    let file = std::fs::File::open(path)?;
    let mut parsed = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let row = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let json: JsonRow = serde_json::from_str(&line).map_err(|e| Error::MalformedRow {
            row,
            reason: e.to_string(),
        })?;
        parsed.push((row, json));
    }

    let side_names: Vec<String> = match &schema.side {
        Some(names) => names.clone(),
        None => {
            let mut keys = BTreeSet::new();
            for (_, json) in &parsed {
                keys.extend(json.side.keys().cloned());
            }
            keys.into_iter().collect()
        }
    };

    let mut rows = Vec::new();
    for (row, json) in parsed {
        let mut side_values = Vec::with_capacity(side_names.len());
        for name in &side_names {
            let value = json.side.get(name).ok_or_else(|| Error::MalformedRow {
                row,
                reason: format!("missing side key `{name}`"),
            })?;
            side_values.push(value.clone());
        }
        rows.push(RawRow {
            tokens: tokenize(&json.text),
            side_values,
            label: json.label,
            category: json.category,
        });
    }
    Ok((rows, side_names))
}

fn assemble_corpus(rows: Vec<RawRow>, side_names: Vec<String>) -> Result<Corpus> {
    if rows.is_empty() {
        return Err(Error::AllDocumentsEmpty);
    }
    let token_lists: Vec<Vec<&str>> = rows
        .iter()
        .map(|r| r.tokens.iter().map(String::as_str).collect())
        .collect();
    let vocab = Vocabulary::build(&token_lists)?;

    // Observed values per side column, sorted for a stable encoding.
    let mut columns = Vec::with_capacity(side_names.len());
    for (c, name) in side_names.iter().enumerate() {
        let values: BTreeSet<String> = rows.iter().map(|r| r.side_values[c].clone()).collect();
        columns.push(SideColumn {
            name: name.clone(),
            values: values.into_iter().collect(),
        });
    }
    let side = SideSchema { columns };

    let mut docs = Vec::with_capacity(rows.len());
    for row in &rows {
        let words = row
            .tokens
            .iter()
            .map(|t| vocab.index_of(t).expect("token was interned"))
            .collect();
        let side_refs: Vec<&str> = row.side_values.iter().map(String::as_str).collect();
        docs.push(Document {
            words,
            side: side.encode(&side_refs)?,
            label: row.label,
            category: row.category.clone(),
        });
    }
    Ok(Corpus { docs, vocab, side })
}

/// Writes a corpus as CSV with columns `text`, the side columns, then
/// `label`/`category` when any document carries them. Requires strict
/// one-hot side vectors.
pub fn save_corpus_csv(corpus: &Corpus, path: &Path) -> Result<()> {
    let has_label = corpus.docs.iter().any(|d| d.label.is_some());
    let has_category = corpus.docs.iter().any(|d| d.category.is_some());

    let mut writer = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = vec!["text".into()];
    header.extend(corpus.side.columns.iter().map(|c| c.name.clone()));
    if has_label {
        header.push("label".into());
    }
    if has_category {
        header.push("category".into());
    }
    writer.write_record(&header)?;

    for doc in &corpus.docs {
        let tokens: Vec<&str> = doc
            .words
            .iter()
            .map(|&w| corpus.vocab.token(w))
            .collect::<Result<_>>()?;
        let mut record = vec![tokens.join(" ")];
        record.extend(corpus.side.decode(&doc.side)?);
        if has_label {
            record.push(doc.label.map(|l| l.to_string()).unwrap_or_default());
        }
        if has_category {
            record.push(doc.category.clone().unwrap_or_default());
        }
        writer.write_record(&record)?;
    }
    writer.flush()?;
    Ok(())
}

/// Writes a corpus as JSONL with `text`, `side`, and optional `label` /
/// `category` fields per line.
pub fn save_corpus_jsonl(corpus: &Corpus, path: &Path) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    for doc in &corpus.docs {
        let tokens: Vec<&str> = doc
            .words
            .iter()
            .map(|&w| corpus.vocab.token(w))
            .collect::<Result<_>>()?;
        let values = corpus.side.decode(&doc.side)?;
        let side: BTreeMap<&str, &str> = corpus
            .side
            .columns
            .iter()
            .map(|c| c.name.as_str())
            .zip(values.iter().map(String::as_str))
            .collect();
        let mut obj = serde_json::Map::new();
        obj.insert("text".into(), tokens.join(" ").into());
        obj.insert("side".into(), serde_json::to_value(&side)?);
        if let Some(label) = doc.label {
            obj.insert("label".into(), label.into());
        }
        if let Some(category) = &doc.category {
            obj.insert("category".into(), category.as_str().into());
        }
        writeln!(file, "{}", serde_json::Value::Object(obj))?;
    }
    Ok(())
}

struct ReviewTemplate {
    product: &'static str,
    description: &'static str,
    // Bags keep their published multiplicities; repeated entries are drawn
    // proportionally more often. Multi-word entries are stored as single
    // underscore-joined tokens so the bags have well-defined sizes.
    bag: &'static [&'static str],
}

const REVIEW_TEMPLATES: [ReviewTemplate; 4] = [
    ReviewTemplate {
        product: "burger",
        description: "price",
        bag: &[
            "value",
            "pricey",
            "ouch",
            "steep",
            "cheap",
            "value",
            "reason",
            "accept",
            "unreason",
            "unacceptable",
        ],
    },
    ReviewTemplate {
        product: "burger",
        description: "quality",
        bag: &[
            "nasty",
            "fantastic",
            "delicious",
            "tasty",
            "juicy",
            "unreason",
            "unacceptable",
            "reason",
            "accept",
            "fresh",
        ],
    },
    ReviewTemplate {
        product: "TV",
        description: "price",
        bag: &[
            "promotion",
            "affordable",
            "value",
            "increase",
            "expensive",
            "tasty",
            "economical",
            "fancy",
            "okay",
        ],
    },
    ReviewTemplate {
        product: "TV",
        description: "quality",
        bag: &[
            "fabulous",
            "fantastic",
            "promising",
            "sharp",
            "large",
            "clear",
            "eco_friendly",
            "fresh",
            "pixilated",
        ],
    },
];

/// Word bags of the synthetic generator, keyed by category name.
pub fn synthetic_bags() -> Vec<(String, Vec<&'static str>)> {
    REVIEW_TEMPLATES
        .iter()
        .map(|t| (format!("{}_{}", t.product, t.description), t.bag.to_vec()))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub n_docs: usize,
    pub seed: u64,
    /// Inclusive bounds on document length, drawn uniformly.
    pub min_len: usize,
    pub max_len: usize,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n_docs: 2000,
            seed: 0,
            min_len: 1,
            max_len: 5,
        }
    }
}

/// Generates the synthetic review corpus: each document picks one of the four
/// (product, description) pairs uniformly, a length uniform in
/// `[min_len, max_len]`, and draws that many words uniformly with replacement
/// from the pair's bag. Side data is the one-hot product block followed by
/// the one-hot description block; the category label names the pair.
///
/// The vocabulary always covers every bag, independent of what was drawn.
pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<Corpus> {
    if cfg.min_len > cfg.max_len {
        return Err(Error::InvalidArgument(format!(
            "min_len {} exceeds max_len {}",
            cfg.min_len, cfg.max_len
        )));
    }

    let bag_lists: Vec<Vec<&str>> = REVIEW_TEMPLATES.iter().map(|t| t.bag.to_vec()).collect();
    let vocab = Vocabulary::build(&bag_lists)?;
    let bag_indices: Vec<Vec<usize>> = REVIEW_TEMPLATES
        .iter()
        .map(|t| {
            t.bag
                .iter()
                .map(|w| vocab.index_of(w).expect("bag token interned"))
                .collect()
        })
        .collect();

    let products: BTreeSet<&str> = REVIEW_TEMPLATES.iter().map(|t| t.product).collect();
    let descriptions: BTreeSet<&str> = REVIEW_TEMPLATES.iter().map(|t| t.description).collect();
    let side = SideSchema {
        columns: vec![
            SideColumn {
                name: "product".into(),
                values: products.into_iter().map(str::to_owned).collect(),
            },
            SideColumn {
                name: "description".into(),
                values: descriptions.into_iter().map(str::to_owned).collect(),
            },
        ],
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut docs = Vec::with_capacity(cfg.n_docs);
    for _ in 0..cfg.n_docs {
        let t = rng.random_range(0..REVIEW_TEMPLATES.len());
        let template = &REVIEW_TEMPLATES[t];
        let len = rng.random_range(cfg.min_len..=cfg.max_len);
        let words = (0..len)
            .map(|_| bag_indices[t][rng.random_range(0..bag_indices[t].len())])
            .collect();
        docs.push(Document {
            words,
            side: side.encode(&[template.product, template.description])?,
            label: Some(t as i64),
            category: Some(format!("{}_{}", template.product, template.description)),
        });
    }
    Ok(Corpus { docs, vocab, side })
}
