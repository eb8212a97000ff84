//! Bracketed sentiment-treebank trees: `(label child child …)` for phrases
//! and `(label token)` for words.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

use super::LabeledTree;

/// Sentiment classes in the treebank.
pub const SST_LABELS: usize = 5;

/// Parses one tree with labels in `0..5`.
pub fn parse_ptb(text: &str) -> Result<LabeledTree> {
    parse_ptb_with_labels(text, SST_LABELS)
}

/// Parses one tree; nodes are numbered in depth-first pre-order.
pub fn parse_ptb_with_labels(text: &str, num_labels: usize) -> Result<LabeledTree> {
    let mut p = Parser {
        src: text.as_bytes(),
        text,
        pos: 0,
        num_labels,
        parent: Vec::new(),
        labels: Vec::new(),
        tokens: Vec::new(),
    };
    p.skip_ws();
    if p.pos >= p.src.len() {
        return Err(p.error("empty input"));
    }
    p.node(None)?;
    p.skip_ws();
    if p.pos < p.src.len() {
        return Err(p.error("trailing input after tree"));
    }
    let n = p.parent.len();
    LabeledTree::new(p.parent, vec![Vec::new(); n], Some(p.labels), p.tokens)
}

/// Inverse of [`parse_ptb`] for labeled trees whose leaves carry tokens.
pub fn serialize_ptb(tree: &LabeledTree) -> Result<String> {
    let labels = tree.require_labels()?;
    let mut out = String::new();
    let topo = tree.topology();
    // (node, next child position); emitted iteratively to bound stack depth
    let mut stack = vec![(topo.root(), 0usize)];
    write!(out, "({}", labels[topo.root()]).unwrap();
    while let Some((v, next)) = stack.pop() {
        let children = topo.children(v);
        if children.is_empty() {
            let token = tree.tokens()[v]
                .as_deref()
                .ok_or_else(|| Error::Data(format!("leaf {v} has no token")))?;
            write!(out, " {token})").unwrap();
        } else if next < children.len() {
            stack.push((v, next + 1));
            let c = children[next];
            write!(out, " ({}", labels[c]).unwrap();
            stack.push((c, 0));
        } else {
            out.push(')');
        }
    }
    Ok(out)
}

/// Reads one tree per non-blank line.
pub fn read_ptb_file(path: &Path, num_labels: usize) -> Result<Vec<LabeledTree>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            parse_ptb_with_labels(line, num_labels).map_err(|e| match e {
                Error::Parse { offset, message } => Error::Format {
                    line: i + 1,
                    message: format!("{} (byte {offset}): {message}", path.display()),
                },
                other => other,
            })
        })
        .collect()
}

struct Parser<'a> {
    src: &'a [u8],
    text: &'a str,
    pos: usize,
    num_labels: usize,
    parent: Vec<Option<usize>>,
    labels: Vec<usize>,
    tokens: Vec<Option<String>>,
}

impl Parser<'_> {
    fn error(&self, message: impl Into<String>) -> Error {
        Error::Parse {
            offset: self.pos,
            message: message.into(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn atom(&mut self) -> &str {
        let start = self.pos;
        while let Some(b) = self.peek() {
            if b.is_ascii_whitespace() || b == b'(' || b == b')' {
                break;
            }
            self.pos += 1;
        }
        &self.text[start..self.pos]
    }

    fn node(&mut self, parent: Option<usize>) -> Result<()> {
        if self.peek() != Some(b'(') {
            return Err(self.error("expected `(`"));
        }
        self.pos += 1;
        self.skip_ws();
        let label_at = self.pos;
        let raw = self.atom().to_owned();
        if raw.is_empty() {
            return Err(if self.peek().is_none() {
                self.error("unbalanced parentheses: input ends inside a node")
            } else {
                self.error("empty node: missing label")
            });
        }
        let label: usize = raw.parse().map_err(|_| Error::Parse {
            offset: label_at,
            message: format!("label `{raw}` is not a non-negative integer"),
        })?;
        if label >= self.num_labels {
            return Err(Error::Parse {
                offset: label_at,
                message: format!("label {label} out of range 0..{}", self.num_labels),
            });
        }

        let id = self.parent.len();
        self.parent.push(parent);
        self.labels.push(label);
        self.tokens.push(None);

        self.skip_ws();
        match self.peek() {
            None => return Err(self.error("unbalanced parentheses: input ends inside a node")),
            Some(b')') => return Err(self.error("empty node: no token or children")),
            Some(b'(') => {
                while self.peek() == Some(b'(') {
                    self.node(Some(id))?;
                    self.skip_ws();
                }
            }
            Some(_) => {
                let token = self.atom().to_owned();
                self.tokens[id] = Some(token);
                self.skip_ws();
            }
        }
        match self.peek() {
            Some(b')') => {
                self.pos += 1;
                Ok(())
            }
            None => Err(self.error("unbalanced parentheses: input ends inside a node")),
            Some(_) => Err(self.error("expected `)`")),
        }
    }
}
