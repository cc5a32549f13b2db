//! Nexus Taxa and Splits blocks, readable by SplitsTree.
//!
//! Labels are always single-quoted. Each matrix row lists the side of the
//! split that does not contain the first taxon. The residual norm travels in
//! a comment, since Nexus' own `fit` property is a percentage.

use thiserror::Error;

use crate::nnet::CircularOrdering;
use crate::splits::{Split, SplitSystem};

#[derive(Debug, Error, PartialEq)]
pub enum NexusError {
    #[error("nexus parse error: {0}")]
    Parse(String),
}

fn quote(label: &str) -> String {
    format!("'{}'", label.replace('\'', "''"))
}

pub fn write_nexus(system: &SplitSystem) -> String {
    let n = system.n_taxa();
    let mut out = String::from("#NEXUS\n\nBEGIN Taxa;\n");
    out.push_str(&format!("DIMENSIONS ntax={n};\nTAXLABELS\n"));
    for (i, label) in system.taxa.iter().enumerate() {
        out.push_str(&format!("[{}] {}\n", i + 1, quote(label)));
    }
    out.push_str(";\nEND; [Taxa]\n\nBEGIN Splits;\n");
    out.push_str(&format!("DIMENSIONS ntax={n} nsplits={};\n", system.splits.len()));
    out.push_str("FORMAT labels=no weights=yes confidences=no intervals=no;\n");
    out.push_str("PROPERTIES cyclic;\n");
    out.push_str(&format!("[residual {}]\n", system.fit));
    let cycle: Vec<String> = system.ordering.as_slice().iter().map(|t| (t + 1).to_string()).collect();
    out.push_str(&format!("CYCLE {};\nMATRIX\n", cycle.join(" ")));
    for (k, split) in system.splits.iter().enumerate() {
        let side = system.bipartition_key(split);
        let taxa: Vec<String> = side.iter().map(|t| (t + 1).to_string()).collect();
        out.push_str(&format!("[{}, size={}] \t {} \t {},\n", k + 1, side.len(), split.weight, taxa.join(" ")));
    }
    out.push_str(";\nEND; [Splits]\n");
    out
}

/// Splits a document into tokens: quoted labels, bracket comments (kept, as
/// they carry the residual and row headers), punctuation and words.
fn tokenize(text: &str) -> Result<Vec<String>, NexusError> {
    let mut tokens = Vec::new();
    let chars: Vec<char> = text.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c == '\'' {
            let mut s = String::from("'");
            i += 1;
            loop {
                match chars.get(i) {
                    None => return Err(NexusError::Parse("unterminated quoted label".into())),
                    Some('\'') if chars.get(i + 1) == Some(&'\'') => {
                        s.push('\'');
                        i += 2;
                    }
                    Some('\'') => {
                        i += 1;
                        break;
                    }
                    Some(&ch) => {
                        s.push(ch);
                        i += 1;
                    }
                }
            }
            tokens.push(s);
        } else if c == '[' {
            let end = chars[i..].iter().position(|&ch| ch == ']').ok_or_else(|| NexusError::Parse("unterminated comment".into()))?;
            tokens.push(chars[i..i + end + 1].iter().collect());
            i += end + 1;
        } else if c == ';' || c == ',' || c == '=' {
            tokens.push(c.to_string());
            i += 1;
        } else {
            let start = i;
            while i < chars.len() && !chars[i].is_whitespace() && !";,=['".contains(chars[i]) {
                i += 1;
            }
            tokens.push(chars[start..i].iter().collect());
        }
    }
    Ok(tokens)
}

fn err<T>(msg: impl Into<String>) -> Result<T, NexusError> {
    Err(NexusError::Parse(msg.into()))
}

fn number<T: std::str::FromStr>(tok: Option<&String>, what: &str) -> Result<T, NexusError> {
    tok.and_then(|t| t.parse().ok()).ok_or_else(|| NexusError::Parse(format!("expected {what}")))
}

/// Reads back a document produced by [`write_nexus`].
pub fn parse_nexus(text: &str) -> Result<SplitSystem, NexusError> {
    let tokens = tokenize(text)?;
    let mut it = tokens.iter().peekable();
    let mut taxa: Vec<String> = Vec::new();
    let mut cycle: Vec<usize> = Vec::new();
    let mut fit = 0.0;
    let mut rows: Vec<(f64, Vec<usize>)> = Vec::new();

    while let Some(tok) = it.next() {
        match tok.to_ascii_uppercase().as_str() {
            "TAXLABELS" => {
                for t in it.by_ref() {
                    if t == ";" {
                        break;
                    }
                    if let Some(label) = t.strip_prefix('\'') {
                        taxa.push(label.to_string());
                    } else if !t.starts_with('[') {
                        taxa.push(t.clone());
                    }
                }
            }
            "CYCLE" => {
                for t in it.by_ref() {
                    if t == ";" {
                        break;
                    }
                    let id: usize = number(Some(t), "taxon number in CYCLE")?;
                    if id == 0 {
                        return err("taxon numbers start at 1");
                    }
                    cycle.push(id - 1);
                }
            }
            "MATRIX" => loop {
                match it.next() {
                    None => return err("unterminated MATRIX"),
                    Some(t) if t == ";" => break,
                    Some(t) if t.starts_with('[') => {
                        let weight: f64 = number(it.next(), "split weight")?;
                        let mut side = Vec::new();
                        for t in it.by_ref() {
                            if t == "," {
                                break;
                            }
                            let id: usize = number(Some(t), "taxon number in MATRIX")?;
                            if id == 0 {
                                return err("taxon numbers start at 1");
                            }
                            side.push(id - 1);
                        }
                        rows.push((weight, side));
                    }
                    Some(t) => return err(format!("unexpected token {t} in MATRIX")),
                }
            },
            _ => {
                if let Some(body) = tok.strip_prefix("[residual ") {
                    fit = number(Some(&body.trim_end_matches(']').to_string()), "residual")?;
                }
            }
        }
    }

    let n = taxa.len();
    let ordering = CircularOrdering::new(cycle).map_err(|e| NexusError::Parse(e.to_string()))?;
    if ordering.len() != n {
        return err(format!("CYCLE lists {} taxa, TAXLABELS {n}", ordering.len()));
    }
    let pos = ordering.positions();
    let mut splits = Vec::with_capacity(rows.len());
    for (weight, side) in rows {
        let mut in_side = vec![false; n];
        for &t in &side {
            if t >= n {
                return err(format!("taxon {} out of range", t + 1));
            }
            in_side[pos[t]] = true;
        }
        // the arc is whichever side avoids the last position
        if in_side[n - 1] {
            in_side.iter_mut().for_each(|b| *b = !*b);
        }
        let start = in_side.iter().position(|&b| b).ok_or_else(|| NexusError::Parse("empty split side".into()))?;
        let end = in_side.iter().rposition(|&b| b).expect("nonempty");
        if in_side[start..=end].iter().any(|&b| !b) {
            return err("split is not circular for the CYCLE");
        }
        splits.push(Split { start, end, weight });
    }
    SplitSystem::new(taxa, ordering, splits, fit).map_err(|e| NexusError::Parse(e.to_string()))
}
