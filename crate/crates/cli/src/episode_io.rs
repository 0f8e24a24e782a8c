//! Text format for a single saved episode, optionally with fitted class
//! weights. Used by the episode dump and the pca-task plot.
//!
//! ```text
//! classes = n17,n23,n31
//! support
//! 0 0.1 0.2 0.3 0.4
//! query
//! 1 0.0 -0.3 0.2 0.1
//! weights
//! 0.5 0.5 0.0 0.0
//! ```
//!
//! Labels index the class list; weight rows follow class order.

use graphfsl::learners::Classifier;
use graphfsl::tasks::{Episode, Labeled};
use graphfsl::{Error, Result};
use std::io::Write;

pub fn save_episode(
    ep: &Episode<f64>,
    fitted: Option<&Classifier<f64>>,
    w: &mut impl Write,
) -> Result<()> {
    writeln!(w, "classes = {}", ep.classes.join(","))?;
    writeln!(w, "support")?;
    for e in &ep.support {
        write_example(w, e)?;
    }
    writeln!(w, "query")?;
    for e in &ep.query {
        write_example(w, e)?;
    }
    if let Some(c) = fitted {
        writeln!(w, "weights")?;
        for row in &c.weights {
            writeln!(w, "{}", join_floats(row))?;
        }
    }
    Ok(())
}

fn write_example(w: &mut impl Write, e: &Labeled<f64>) -> Result<()> {
    writeln!(w, "{} {}", e.y, join_floats(&e.x))?;
    Ok(())
}

fn join_floats(v: &[f64]) -> String {
    v.iter()
        .map(|x| format!("{x:?}"))
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Section {
    Header,
    Support,
    Query,
    Weights,
}

pub fn load_episode(text: &str) -> Result<(Episode<f64>, Option<Vec<Vec<f64>>>)> {
    let mut classes: Option<Vec<String>> = None;
    let mut support = Vec::new();
    let mut query = Vec::new();
    let mut weights = Vec::new();
    let mut saw_weights = false;
    let mut section = Section::Header;

    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        match line {
            "support" => {
                section = Section::Support;
                continue;
            }
            "query" => {
                section = Section::Query;
                continue;
            }
            "weights" => {
                section = Section::Weights;
                saw_weights = true;
                continue;
            }
            _ => {}
        }
        match section {
            Section::Header => {
                let Some((key, value)) = line.split_once('=') else {
                    return Err(parse_err(lineno, "expected classes = ... before data"));
                };
                if key.trim() != "classes" {
                    return Err(parse_err(lineno, "unknown header key"));
                }
                classes = Some(
                    value
                        .split(',')
                        .map(str::trim)
                        .filter(|s| !s.is_empty())
                        .map(String::from)
                        .collect(),
                );
            }
            Section::Support | Section::Query => {
                let mut parts = line.split_whitespace();
                let y: usize = parts
                    .next()
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| parse_err(lineno, "expected a label"))?;
                let x = parse_floats(parts, lineno)?;
                let e = Labeled { x, y };
                if section == Section::Support {
                    support.push(e);
                } else {
                    query.push(e);
                }
            }
            Section::Weights => {
                weights.push(parse_floats(line.split_whitespace(), lineno)?);
            }
        }
    }

    let classes = classes.ok_or_else(|| parse_err(0, "missing classes line"))?;
    if classes.is_empty() {
        return Err(parse_err(0, "empty class list"));
    }
    let n = classes.len();
    for e in support.iter().chain(&query) {
        if e.y >= n {
            return Err(Error::Parse {
                line: 0,
                msg: format!("label {} out of range for {} classes", e.y, n),
            });
        }
    }
    if saw_weights && weights.len() != n {
        return Err(Error::Parse {
            line: 0,
            msg: format!("{} weight rows for {} classes", weights.len(), n),
        });
    }
    let ep = Episode {
        classes,
        support,
        query,
    };
    Ok((ep, saw_weights.then_some(weights)))
}

fn parse_floats<'a>(parts: impl Iterator<Item = &'a str>, lineno: usize) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for t in parts {
        out.push(
            t.parse::<f64>()
                .map_err(|_| parse_err(lineno, "bad float"))?,
        );
    }
    if out.is_empty() {
        return Err(parse_err(lineno, "empty coordinate list"));
    }
    Ok(out)
}

fn parse_err(line: usize, msg: &str) -> Error {
    Error::Parse {
        line,
        msg: msg.into(),
    }
}
