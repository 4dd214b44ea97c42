//! On-disk dataset formats.
//!
//! * graph: text, one `u v` edge per line, `#` comments, optional `N <count>` header
//! * attributes: `NNA1` + u64 N + u64 d + N*d little-endian f32, or CSV when the
//!   path ends in `.csv`
//! * labels: text lines `node_id class`; unlisted nodes are unlabeled
//! * split: `rate=<float>,seed=<int>` or a file of `node_id {train|test}` lines

use std::collections::HashMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::graph::{make_split, AttributeMatrix, Dataset, Graph, LabelStore, Split, SplitPolicy};
use crate::rng::{stream, substream};

pub const ATTR_MAGIC: &[u8; 4] = b"NNA1";

/// Conventional file names inside a dataset directory.
pub const GRAPH_FILE: &str = "graph.txt";
pub const ATTR_FILE: &str = "attrs.bin";
pub const LABEL_FILE: &str = "labels.txt";
pub const CLEAN_FILE: &str = "labels.clean";
pub const SPLIT_FILE: &str = "split.txt";

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

/// Meaningful lines of a text file with their 1-based line numbers.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

/// Result of parsing an edge list, before it becomes a [`Graph`].
#[derive(Debug, Clone)]
pub struct EdgeList {
    pub declared_nodes: Option<usize>,
    pub edges: Vec<(usize, usize)>,
}

impl EdgeList {
    /// Node count: the header if present, else `default_nodes`, else 1 + max id.
    pub fn node_count(&self, default_nodes: Option<usize>) -> usize {
        self.declared_nodes.or(default_nodes).unwrap_or_else(|| {
            self.edges
                .iter()
                .map(|&(u, v)| u.max(v) + 1)
                .max()
                .unwrap_or(0)
        })
    }
}

pub fn parse_edge_list(text: &str, path: &Path) -> Result<EdgeList> {
    let mut declared_nodes = None;
    let mut edges = Vec::new();
    for (lineno, line) in content_lines(text) {
        let mut fields = line.split_whitespace();
        let first = fields.next().unwrap();
        if first == "N" {
            let count = fields
                .next()
                .and_then(|s| s.parse::<usize>().ok())
                .ok_or_else(|| parse_err(path, lineno, "header must be `N <count>`"))?;
            if declared_nodes.replace(count).is_some() {
                return Err(parse_err(path, lineno, "duplicate `N` header"));
            }
            continue;
        }
        let second = fields
            .next()
            .ok_or_else(|| parse_err(path, lineno, "edge line needs two node ids"))?;
        if fields.next().is_some() {
            return Err(parse_err(path, lineno, "edge line has more than two fields"));
        }
        let parse = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| parse_err(path, lineno, format!("invalid node id `{s}`")))
        };
        edges.push((parse(first)?, parse(second)?));
    }
    Ok(EdgeList {
        declared_nodes,
        edges,
    })
}

/// Parses a graph file. `default_nodes` supplies N when the file has no header.
pub fn parse_graph(text: &str, path: &Path, default_nodes: Option<usize>) -> Result<Graph> {
    let list = parse_edge_list(text, path)?;
    let n = list.node_count(default_nodes);
    let (graph, report) = Graph::from_edges(n, list.edges)?;
    if report.self_loops_dropped > 0 {
        log::warn!(
            "{}: dropped {} self-loop(s)",
            path.display(),
            report.self_loops_dropped
        );
    }
    Ok(graph)
}

pub fn read_graph(path: &Path) -> Result<Graph> {
    parse_graph(&read_text(path)?, path, None)
}

pub fn write_graph(path: &Path, graph: &Graph) -> Result<()> {
    let mut out = String::new();
    out.push_str(&format!("N {}\n", graph.num_nodes()));
    for (u, v) in graph.edges() {
        out.push_str(&format!("{u} {v}\n"));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_attributes(path: &Path) -> Result<AttributeMatrix> {
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        return parse_attribute_csv(&read_text(path)?, path);
    }
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_attributes(&bytes, path)
}

pub fn decode_attributes(bytes: &[u8], path: &Path) -> Result<AttributeMatrix> {
    if bytes.len() < 20 || &bytes[..4] != ATTR_MAGIC {
        return Err(parse_err(path, 0, "missing NNA1 header"));
    }
    let rows = u64::from_le_bytes(bytes[4..12].try_into().unwrap()) as usize;
    let dim = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
    let payload = &bytes[20..];
    let expected = rows
        .checked_mul(dim)
        .and_then(|c| c.checked_mul(4))
        .ok_or_else(|| parse_err(path, 0, "attribute dimensions overflow"))?;
    if payload.len() != expected {
        return Err(parse_err(
            path,
            0,
            format!("payload is {} bytes, expected {expected}", payload.len()),
        ));
    }
    let values = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    AttributeMatrix::new(rows, dim, values)
}

pub fn encode_attributes(x: &AttributeMatrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(20 + x.values().len() * 4);
    out.extend_from_slice(ATTR_MAGIC);
    out.extend_from_slice(&(x.rows() as u64).to_le_bytes());
    out.extend_from_slice(&(x.dim() as u64).to_le_bytes());
    for v in x.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn write_attributes(path: &Path, x: &AttributeMatrix) -> Result<()> {
    fs::write(path, encode_attributes(x)).map_err(|e| Error::io(path, e))
}

pub fn parse_attribute_csv(text: &str, path: &Path) -> Result<AttributeMatrix> {
    let mut dim = None;
    let mut values = Vec::new();
    let mut rows = 0;
    for (lineno, line) in content_lines(text) {
        let start = values.len();
        for field in line.split(',') {
            let v: f32 = field
                .trim()
                .parse()
                .map_err(|_| parse_err(path, lineno, format!("invalid number `{}`", field.trim())))?;
            values.push(v);
        }
        let width = values.len() - start;
        match dim {
            None => dim = Some(width),
            Some(d) if d != width => {
                return Err(parse_err(path, lineno, format!("row has {width} values, expected {d}")))
            }
            _ => {}
        }
        rows += 1;
    }
    AttributeMatrix::new(rows, dim.unwrap_or(0), values)
}

/// Labels as read from a label file, with string classes mapped to dense ids.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelFile {
    pub labels: Vec<Option<usize>>,
    /// Present when classes were not plain integers; index = class id.
    pub class_names: Option<Vec<String>>,
}

impl LabelFile {
    pub fn max_class(&self) -> Option<usize> {
        self.labels.iter().flatten().copied().max()
    }
}

/// Parses `node class` lines for `num_nodes` nodes. If every class token is a
/// non-negative integer it is used as the class id; otherwise classes are
/// numbered in first-seen order and the names are returned.
pub fn parse_labels(text: &str, path: &Path, num_nodes: usize) -> Result<LabelFile> {
    let mut raw = Vec::new();
    for (lineno, line) in content_lines(text) {
        let mut fields = line.split_whitespace();
        let node = fields.next().unwrap();
        let class = fields
            .next()
            .ok_or_else(|| parse_err(path, lineno, "label line needs `node_id class`"))?;
        if fields.next().is_some() {
            return Err(parse_err(path, lineno, "label line has more than two fields"));
        }
        let node: usize = node
            .parse()
            .map_err(|_| parse_err(path, lineno, format!("invalid node id `{node}`")))?;
        if node >= num_nodes {
            return Err(Error::Validation(format!(
                "{}:{lineno}: node id {node} out of range for {num_nodes} nodes",
                path.display()
            )));
        }
        raw.push((lineno, node, class.to_string()));
    }

    let numeric = raw.iter().all(|(_, _, c)| c.parse::<usize>().is_ok());
    let mut labels = vec![None; num_nodes];
    let mut names: Vec<String> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    for (lineno, node, class) in raw {
        let id = if numeric {
            class.parse().unwrap()
        } else {
            *index.entry(class.clone()).or_insert_with(|| {
                names.push(class);
                names.len() - 1
            })
        };
        if labels[node].replace(id).is_some_and(|prev| prev != id) {
            return Err(parse_err(path, lineno, format!("conflicting labels for node {node}")));
        }
    }
    Ok(LabelFile {
        labels,
        class_names: (!numeric).then_some(names),
    })
}

pub fn write_labels(path: &Path, labels: &[Option<usize>]) -> Result<()> {
    let mut out = String::new();
    for (i, c) in labels.iter().enumerate() {
        if let Some(c) = c {
            out.push_str(&format!("{i} {c}\n"));
        }
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Writes the class-name sidecar: one `class_id name` line per class.
pub fn write_class_map(path: &Path, names: &[String]) -> Result<()> {
    let mut out = String::new();
    for (i, name) in names.iter().enumerate() {
        out.push_str(&format!("{i} {name}\n"));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// How train/test nodes are chosen when loading a dataset.
#[derive(Debug, Clone, PartialEq)]
pub enum SplitSpec {
    Rate { rate: f64, seed: u64 },
    File(PathBuf),
}

impl SplitSpec {
    /// Parses `rate=<float>,seed=<int>`; anything else is a split file path.
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        if !s.starts_with("rate=") {
            return Ok(SplitSpec::File(PathBuf::from(s)));
        }
        let mut rate = None;
        let mut seed = None;
        for part in s.split(',') {
            let (key, value) = part
                .split_once('=')
                .ok_or_else(|| Error::config("split", format!("malformed part `{part}`")))?;
            match key.trim() {
                "rate" => {
                    rate = Some(value.trim().parse::<f64>().map_err(|_| {
                        Error::config("split", format!("invalid rate `{value}`"))
                    })?)
                }
                "seed" => {
                    seed = Some(value.trim().parse::<u64>().map_err(|_| {
                        Error::config("split", format!("invalid seed `{value}`"))
                    })?)
                }
                other => return Err(Error::config("split", format!("unknown field `{other}`"))),
            }
        }
        Ok(SplitSpec::Rate {
            rate: rate.ok_or_else(|| Error::config("split", "missing rate"))?,
            seed: seed.unwrap_or(0),
        })
    }
}

pub fn parse_split_file(text: &str, path: &Path, num_nodes: usize) -> Result<Split> {
    let mut train = vec![false; num_nodes];
    let mut test = vec![false; num_nodes];
    for (lineno, line) in content_lines(text) {
        let mut fields = line.split_whitespace();
        let node = fields.next().unwrap();
        let node: usize = node
            .parse()
            .map_err(|_| parse_err(path, lineno, format!("invalid node id `{node}`")))?;
        if node >= num_nodes {
            return Err(Error::Validation(format!(
                "{}:{lineno}: node id {node} out of range for {num_nodes} nodes",
                path.display()
            )));
        }
        match fields.next() {
            Some("train") => train[node] = true,
            Some("test") => test[node] = true,
            _ => return Err(parse_err(path, lineno, "expected `node_id train|test`")),
        }
        if train[node] && test[node] {
            return Err(parse_err(path, lineno, format!("node {node} listed as both train and test")));
        }
    }
    Ok(Split { train, test })
}

pub fn write_split(path: &Path, split: &Split) -> Result<()> {
    let mut out = String::new();
    for i in 0..split.train.len() {
        if split.train[i] {
            out.push_str(&format!("{i} train\n"));
        } else if split.test[i] {
            out.push_str(&format!("{i} test\n"));
        }
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Path of the ground-truth sidecar for a label file: `labels.txt` -> `labels.clean`.
pub fn clean_path_for(label_path: &Path) -> PathBuf {
    label_path.with_extension("clean")
}

/// Loads a dataset from its three files and a split descriptor.
///
/// If a `.clean` sidecar exists next to the label file it provides the ground
/// truth; otherwise the label file itself is taken as ground truth. Train nodes
/// take their observed label from the label file.
pub fn load_dataset(
    graph_path: &Path,
    attr_path: &Path,
    label_path: &Path,
    split: &SplitSpec,
) -> Result<Dataset> {
    let graph = read_graph(graph_path)?;
    let n = graph.num_nodes();
    let attributes = read_attributes(attr_path)?;
    if attributes.rows() != n {
        return Err(Error::Validation(format!(
            "{} has {} rows but the graph has {n} nodes",
            attr_path.display(),
            attributes.rows()
        )));
    }
    let given = parse_labels(&read_text(label_path)?, label_path, n)?;
    let clean_path = clean_path_for(label_path);
    let clean = if clean_path.exists() && clean_path != label_path {
        let clean = parse_labels(&read_text(&clean_path)?, &clean_path, n)?;
        if clean.class_names != given.class_names && given.class_names.is_some() {
            return Err(Error::Validation(
                "label file and clean sidecar use different class names".into(),
            ));
        }
        clean
    } else {
        given.clone()
    };
    let num_classes = given.max_class().max(clean.max_class()).map_or(0, |c| c + 1);
    if num_classes == 0 {
        return Err(Error::Validation(format!("{} defines no labels", label_path.display())));
    }

    let split = match split {
        SplitSpec::Rate { rate, seed } => make_split(
            &clean.labels,
            num_classes,
            *rate,
            SplitPolicy::Stratified,
            &mut substream(*seed, stream::SPLIT),
        )?,
        SplitSpec::File(path) => parse_split_file(&read_text(path)?, path, n)?,
    };
    let observed = (0..n)
        .map(|i| {
            if split.train[i] {
                given.labels[i]
                    .ok_or_else(|| Error::Validation(format!("train node {i} has no label")))
                    .map(Some)
            } else {
                Ok(None)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let labels = LabelStore::from_parts(num_classes, observed, clean.labels, split.train, split.test)?;
    let mut dataset = Dataset::new(graph, attributes, labels)?;
    dataset.class_names = given.class_names;
    Ok(dataset)
}

/// Loads `graph.txt`, `attrs.bin` (or `attrs.csv`) and `labels.txt` from `dir`.
pub fn load_dataset_dir(dir: &Path, split: &SplitSpec) -> Result<Dataset> {
    let mut attr = dir.join(ATTR_FILE);
    if !attr.exists() && dir.join("attrs.csv").exists() {
        attr = dir.join("attrs.csv");
    }
    load_dataset(&dir.join(GRAPH_FILE), &attr, &dir.join(LABEL_FILE), split)
}

/// Writes a dataset in the conventional layout: graph, attributes, observed
/// labels (or clean labels when no split is set), clean labels and the split.
pub fn write_dataset_dir(dir: &Path, dataset: &Dataset) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_graph(&dir.join(GRAPH_FILE), &dataset.graph)?;
    write_attributes(&dir.join(ATTR_FILE), &dataset.attributes)?;
    let labels = &dataset.labels;
    if labels.num_train() > 0 {
        write_labels(&dir.join(LABEL_FILE), labels.observed())?;
        write_split(
            &dir.join(SPLIT_FILE),
            &Split {
                train: labels.train_mask().to_vec(),
                test: labels.test_mask().to_vec(),
            },
        )?;
    } else {
        write_labels(&dir.join(LABEL_FILE), labels.clean())?;
    }
    write_labels(&dir.join(CLEAN_FILE), labels.clean())?;
    if let Some(names) = &dataset.class_names {
        write_class_map(&dir.join("classes.map"), names)?;
    }
    Ok(())
}

/// Appends JSON lines to a file.
pub struct JsonLines {
    out: BufWriter<fs::File>,
    path: PathBuf,
}

impl JsonLines {
    pub fn create(path: &Path) -> Result<Self> {
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        Ok(Self {
            out: BufWriter::new(file),
            path: path.to_path_buf(),
        })
    }

    pub fn write<T: serde::Serialize>(&mut self, value: &T) -> Result<()> {
        serde_json::to_writer(&mut self.out, value)?;
        self.out.write_all(b"\n").map_err(|e| Error::io(&self.path, e))
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush().map_err(|e| Error::io(&self.path, e))
    }
}
