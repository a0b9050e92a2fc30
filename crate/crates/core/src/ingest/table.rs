//! Raw table grids from CSV or the XML article dialect described in
//! `docs/formats.md`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::values::is_numeric_cell;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TableFormat {
    Csv,
    XmlTable,
}

impl TableFormat {
    /// Guesses the format from a file extension.
    pub fn from_extension(ext: &str) -> Option<Self> {
        match ext.to_ascii_lowercase().as_str() {
            "csv" => Some(TableFormat::Csv),
            "xml" => Some(TableFormat::XmlTable),
            _ => None,
        }
    }
}

/// A row shorter than the grid width, padded with empty cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Padding {
    pub row: usize,
    pub original_len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawTable {
    pub table_id: String,
    pub grid: Vec<Vec<String>>,
    pub n_header_rows: usize,
    pub caption: String,
    pub footnotes: Vec<String>,
    pub article_title: String,
    pub article_abstract: String,
    /// Table-level drug name, used when no column carries one.
    pub drug: Option<String>,
    /// Table-level species, used when no column or block label carries one.
    pub species: Option<String>,
    pub padding: Vec<Padding>,
}

impl RawTable {
    /// Builds a table from rows, padding ragged rows and detecting headers
    /// unless `n_header_rows` is given.
    pub fn from_rows(table_id: impl Into<String>, rows: Vec<Vec<String>>, n_header_rows: Option<usize>) -> Result<Self> {
        let table_id = table_id.into();
        let width = rows.iter().map(Vec::len).max().unwrap_or(0);
        if rows.is_empty() || width == 0 || rows.iter().all(|r| r.iter().all(|c| c.trim().is_empty())) {
            return Err(Error::Parse {
                location: table_id,
                message: "empty table".into(),
            });
        }
        let mut padding = Vec::new();
        let grid: Vec<Vec<String>> = rows
            .into_iter()
            .enumerate()
            .map(|(i, mut r)| {
                if r.len() < width {
                    padding.push(Padding {
                        row: i,
                        original_len: r.len(),
                    });
                    r.resize(width, String::new());
                }
                r
            })
            .collect();
        let n_header_rows = match n_header_rows {
            Some(0) => return Err(Error::invalid("n_header_rows", "must be at least 1")),
            Some(h) if h > grid.len() => {
                return Err(Error::invalid("n_header_rows", format!("{h} exceeds {} rows", grid.len())))
            }
            Some(h) => h,
            None => detect_header_rows(&grid),
        };
        Ok(Self {
            table_id,
            grid,
            n_header_rows,
            caption: String::new(),
            footnotes: Vec::new(),
            article_title: String::new(),
            article_abstract: String::new(),
            drug: None,
            species: None,
            padding,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.grid.len()
    }

    pub fn n_cols(&self) -> usize {
        self.grid.first().map_or(0, Vec::len)
    }

    pub fn header_rows(&self) -> &[Vec<String>] {
        &self.grid[..self.n_header_rows]
    }

    pub fn body_rows(&self) -> &[Vec<String>] {
        &self.grid[self.n_header_rows..]
    }
}

/// True for a row whose only non-empty cell is the first one.
pub(crate) fn is_block_label_row(row: &[String]) -> bool {
    !row.is_empty() && !row[0].trim().is_empty() && row[1..].iter().all(|c| c.trim().is_empty())
}

/// Leading rows count as headers while they hold no numeric cell. A block
/// label row ends the header unless it is the first row (a title row).
/// At least one row is always a header.
pub fn detect_header_rows(grid: &[Vec<String>]) -> usize {
    let mut n = 0;
    for (i, row) in grid.iter().enumerate() {
        if row.iter().any(|c| is_numeric_cell(c)) {
            break;
        }
        if i > 0 && is_block_label_row(row) {
            break;
        }
        n += 1;
    }
    n.clamp(1, grid.len().max(1))
}

/// Parses one table. XML input must contain exactly one `<table>`.
pub fn parse_table(input: &[u8], format: TableFormat, table_id: &str, n_header_rows: Option<usize>) -> Result<RawTable> {
    match format {
        TableFormat::Csv => parse_csv(input, table_id, n_header_rows),
        TableFormat::XmlTable => {
            let mut tables = parse_xml_tables(input, table_id, n_header_rows)?;
            if tables.len() != 1 {
                return Err(Error::Parse {
                    location: table_id.to_string(),
                    message: format!("expected one <table>, found {}", tables.len()),
                });
            }
            Ok(tables.remove(0))
        }
    }
}

/// Parses every table in a file; CSV files always hold one.
pub fn parse_tables(input: &[u8], format: TableFormat, table_id: &str) -> Result<Vec<RawTable>> {
    match format {
        TableFormat::Csv => Ok(vec![parse_csv(input, table_id, None)?]),
        TableFormat::XmlTable => parse_xml_tables(input, table_id, None),
    }
}

fn parse_csv(input: &[u8], table_id: &str, n_header_rows: Option<usize>) -> Result<RawTable> {
    let input = input.strip_prefix(b"\xEF\xBB\xBF").unwrap_or(input);
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(input);
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| {
            let location = match e.position() {
                Some(p) => format!("{table_id}:line {} byte {}", p.line(), p.byte()),
                None => table_id.to_string(),
            };
            Error::Parse {
                location,
                message: e.to_string(),
            }
        })?;
        rows.push(rec.iter().map(str::to_string).collect());
    }
    RawTable::from_rows(table_id, rows, n_header_rows)
}

fn text_of(node: roxmltree::Node) -> String {
    let raw: String = node
        .descendants()
        .filter(|n| n.is_text())
        .filter_map(|n| n.text())
        .collect();
    raw.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn xml_error(doc_text: &str, table_id: &str, pos: usize, message: String) -> Error {
    let line = doc_text[..pos.min(doc_text.len())].matches('\n').count() + 1;
    Error::Parse {
        location: format!("{table_id}:line {line} byte {pos}"),
        message,
    }
}

fn parse_xml_tables(input: &[u8], file_id: &str, n_header_rows: Option<usize>) -> Result<Vec<RawTable>> {
    let text = std::str::from_utf8(input).map_err(|e| Error::Parse {
        location: format!("{file_id}:byte {}", e.valid_up_to()),
        message: "invalid UTF-8".into(),
    })?;
    let doc = roxmltree::Document::parse(text).map_err(|e| {
        let p = e.pos();
        Error::Parse {
            location: format!("{file_id}:line {} column {}", p.row, p.col),
            message: e.to_string(),
        }
    })?;
    let root = doc.root_element();
    let child_text = |name: &str| {
        root.children()
            .find(|n| n.has_tag_name(name))
            .map(text_of)
            .unwrap_or_default()
    };
    let title = child_text("title");
    let abstract_ = child_text("abstract");

    let table_nodes: Vec<_> = root.descendants().filter(|n| n.has_tag_name("table")).collect();
    let mut out = Vec::with_capacity(table_nodes.len());
    for (i, t) in table_nodes.iter().enumerate() {
        let id = match t.attribute("id") {
            Some(id) => format!("{file_id}#{id}"),
            None if table_nodes.len() == 1 => file_id.to_string(),
            None => format!("{file_id}#{}", i + 1),
        };
        let header_attr = match t.attribute("header-rows") {
            Some(v) => Some(v.trim().parse::<usize>().map_err(|_| {
                xml_error(text, &id, t.range().start, format!("bad header-rows `{v}`"))
            })?),
            None => None,
        };
        let mut rows = Vec::new();
        for row in t.children().filter(|n| n.has_tag_name("row")) {
            let mut cells = Vec::new();
            for cell in row.children().filter(|n| n.has_tag_name("cell")) {
                let span = match cell.attribute("colspan") {
                    Some(v) => v
                        .trim()
                        .parse::<usize>()
                        .ok()
                        .filter(|&s| s >= 1)
                        .ok_or_else(|| xml_error(text, &id, cell.range().start, format!("bad colspan `{v}`")))?,
                    None => 1,
                };
                let content = text_of(cell);
                for _ in 0..span {
                    cells.push(content.clone());
                }
            }
            rows.push(cells);
        }
        let mut table = RawTable::from_rows(id, rows, n_header_rows.or(header_attr))?;
        table.caption = t.children().find(|n| n.has_tag_name("caption")).map(text_of).unwrap_or_default();
        table.footnotes = t
            .children()
            .filter(|n| n.has_tag_name("footnote"))
            .map(text_of)
            .collect();
        table.article_title = title.clone();
        table.article_abstract = abstract_.clone();
        table.drug = t.attribute("drug").map(str::to_string);
        table.species = t.attribute("species").map(str::to_string);
        out.push(table);
    }
    if out.is_empty() {
        return Err(Error::Parse {
            location: file_id.to_string(),
            message: "no <table> element".into(),
        });
    }
    Ok(out)
}
