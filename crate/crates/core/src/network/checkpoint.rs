//! Trained-model files: a text header describing shapes and the genome,
//! followed by all parameters as little-endian f64 in
//! [`Network::parameters`] order.
//!
//! ```text
//! evocf-model 1
//! genome {"embedding_dim":8,...}
//! user_table 943 8
//! item_table 1682 8
//! layer 0 64 16 relu 0.25
//! layer 1 1 64 linear 0
//! payload 42
//! <binary>
//! ```

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use super::{DenseLayer, Network, Tensor};
use crate::genome;
use crate::{Error, Result};

const MAGIC: &str = "evocf-model 1";

pub fn write_model<W: Write>(net: &Network, mut out: W) -> std::io::Result<()> {
    writeln!(out, "{MAGIC}")?;
    match &net.genome {
        Some(g) => writeln!(out, "genome {}", genome::serialize(g))?,
        None => writeln!(out, "genome -")?,
    }
    writeln!(out, "user_table {} {}", net.num_users(), net.embedding_dim())?;
    writeln!(out, "item_table {} {}", net.num_items(), net.embedding_dim())?;
    for (i, l) in net.layers.iter().enumerate() {
        let kind = if l.relu { "relu" } else { "linear" };
        writeln!(
            out,
            "layer {i} {} {} {kind} {}",
            l.out_dim(),
            l.in_dim(),
            l.dropout_rate
        )?;
    }
    let params = net.parameters();
    writeln!(out, "payload {}", params.len())?;
    for p in params {
        out.write_all(&p.to_le_bytes())?;
    }
    Ok(())
}

pub fn save_model(net: &Network, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_model(net, &mut buf).map_err(|e| Error::io(path, e))?;
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

fn header_err(line: usize, msg: impl Into<String>) -> Error {
    Error::parse(format!("model header line {line}"), msg)
}

fn parse_num<T: std::str::FromStr>(tok: Option<&str>, line: usize, what: &str) -> Result<T> {
    tok.and_then(|t| t.parse().ok())
        .ok_or_else(|| header_err(line, format!("expected {what}")))
}

pub fn read_model<R: Read>(input: R) -> Result<Network> {
    let mut reader = BufReader::new(input);
    let mut lines = Vec::new();
    loop {
        let mut line = String::new();
        let n = reader
            .read_line(&mut line)
            .map_err(|e| header_err(lines.len() + 1, e.to_string()))?;
        if n == 0 {
            return Err(header_err(lines.len() + 1, "header ended before payload line"));
        }
        let line = line.trim_end_matches('\n').to_string();
        let done = line.starts_with("payload ");
        lines.push(line);
        if done {
            break;
        }
    }
    if lines[0] != MAGIC {
        return Err(header_err(1, format!("expected {MAGIC:?}")));
    }

    let mut genome = None;
    let mut tables: Vec<(usize, usize)> = Vec::new();
    let mut layers = Vec::new();
    let mut payload_len = 0usize;
    for (idx, line) in lines.iter().enumerate().skip(1) {
        let no = idx + 1;
        let mut toks = line.split(' ');
        match toks.next() {
            Some("genome") => {
                let rest = &line["genome ".len()..];
                if rest != "-" {
                    genome = Some(genome::deserialize(rest)?);
                }
            }
            Some("user_table") | Some("item_table") => {
                let rows = parse_num(toks.next(), no, "row count")?;
                let cols = parse_num(toks.next(), no, "column count")?;
                tables.push((rows, cols));
            }
            Some("layer") => {
                let _index: usize = parse_num(toks.next(), no, "layer index")?;
                let out_dim: usize = parse_num(toks.next(), no, "output width")?;
                let in_dim: usize = parse_num(toks.next(), no, "input width")?;
                let relu = match toks.next() {
                    Some("relu") => true,
                    Some("linear") => false,
                    _ => return Err(header_err(no, "expected relu or linear")),
                };
                let dropout_rate: f64 = parse_num(toks.next(), no, "dropout rate")?;
                layers.push(DenseLayer {
                    weights: Tensor::zeros(vec![out_dim, in_dim]),
                    bias: Tensor::zeros(vec![out_dim]),
                    relu,
                    dropout_rate,
                });
            }
            Some("payload") => payload_len = parse_num(toks.next(), no, "parameter count")?,
            _ => return Err(header_err(no, format!("unrecognised header line {line:?}"))),
        }
    }
    let [(users, d), (items, d2)] = tables[..] else {
        return Err(header_err(0, "expected one user_table and one item_table line"));
    };
    if d != d2 {
        return Err(header_err(0, "embedding widths differ"));
    }
    let mut net = Network::from_parts(
        Tensor::zeros(vec![users, d]),
        Tensor::zeros(vec![items, d]),
        layers,
        genome,
    )?;
    if payload_len != net.parameter_count() {
        return Err(header_err(
            lines.len(),
            format!(
                "payload declares {payload_len} values, shapes need {}",
                net.parameter_count()
            ),
        ));
    }
    let mut bytes = Vec::new();
    reader
        .read_to_end(&mut bytes)
        .map_err(|e| Error::parse("model payload", e.to_string()))?;
    if bytes.len() != payload_len * 8 {
        return Err(Error::parse(
            "model payload",
            format!("expected {} bytes, found {}", payload_len * 8, bytes.len()),
        ));
    }
    let params: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    if params.iter().any(|p| !p.is_finite()) {
        return Err(Error::Numeric("model payload holds non-finite parameters".into()));
    }
    net.set_parameters(&params)?;
    Ok(net)
}

pub fn load_model(path: &Path) -> Result<Network> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_model(file)
}
