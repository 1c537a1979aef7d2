//! CSV and text output schemas.
//!
//! | file | columns |
//! |------|---------|
//! | embedding | `node, x1 .. xd` |
//! | SANVI posterior | `node, mu1 .. mud, g_r_c (lower triangle of G_hat, row-major), iterations` |
//! | BE posterior | `node, mean1 .. meand, acceptance, proposal_sd` |
//! | labels | `node, label` |
//! | graph | `# n <count>` then one `id id` line per undirected edge |
//!
//! Experiment tables are defined next to their row types in
//! [`crate::experiment`].

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use sanvi_core::mcmc::BeFit;
use sanvi_core::vi::SanviFit;
use serde::Serialize;

use crate::error::{io_at, Error, Result};
use crate::ingest::{export_edge_list, Ingested};

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(io_at(path))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_at(dir))?;
    }
    fs::write(path, text).map_err(io_at(path))
}

fn writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_at(dir))?;
    }
    let f = fs::File::create(path).map_err(io_at(path))?;
    Ok(csv::Writer::from_writer(f))
}

/// Writes serializable rows with a header taken from the field names.
pub fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = writer(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(io_at(path))
}

fn fmt_f(x: f64) -> String {
    format!("{x:?}")
}

fn ids_or_index(ids: Option<&[String]>, n: usize) -> Vec<String> {
    match ids {
        Some(ids) => ids.to_vec(),
        None => (0..n).map(|i| i.to_string()).collect(),
    }
}

pub fn write_embedding(path: &Path, ids: Option<&[String]>, x: &DMatrix<f64>) -> Result<()> {
    let (n, d) = x.shape();
    let ids = ids_or_index(ids, n);
    let mut w = writer(path)?;
    let mut header = vec!["node".to_string()];
    header.extend((1..=d).map(|k| format!("x{k}")));
    w.write_record(&header)?;
    for i in 0..n {
        let mut rec = vec![ids[i].clone()];
        rec.extend((0..d).map(|k| fmt_f(x[(i, k)])));
        w.write_record(&rec)?;
    }
    w.flush().map_err(io_at(path))
}

pub fn read_embedding(path: &Path) -> Result<(Vec<String>, DMatrix<f64>)> {
    let f = fs::File::open(path).map_err(io_at(path))?;
    let mut r = csv::Reader::from_reader(f);
    let d = r.headers()?.len().saturating_sub(1);
    if d == 0 {
        return Err(Error::Parse { line: 1, reason: "embedding needs a node column and at least one coordinate".into() });
    }
    let mut ids = Vec::new();
    let mut vals = Vec::new();
    for (k, rec) in r.records().enumerate() {
        let rec = rec?;
        if rec.len() != d + 1 {
            return Err(Error::Parse { line: k + 2, reason: format!("expected {} fields, got {}", d + 1, rec.len()) });
        }
        ids.push(rec[0].to_string());
        for f in rec.iter().skip(1) {
            vals.push(f.trim().parse::<f64>().map_err(|e| Error::Parse { line: k + 2, reason: e.to_string() })?);
        }
    }
    Ok((ids.clone(), DMatrix::from_row_slice(ids.len(), d, &vals)))
}

pub fn write_sanvi_posterior(path: &Path, ids: Option<&[String]>, fit: &SanviFit) -> Result<()> {
    let (n, d) = fit.x_hat.shape();
    let ids = ids_or_index(ids, n);
    let mut w = writer(path)?;
    let mut header = vec!["node".to_string()];
    header.extend((1..=d).map(|k| format!("mu{k}")));
    for r in 0..d {
        for c in 0..=r {
            header.push(format!("g_{}_{}", r + 1, c + 1));
        }
    }
    header.push("iterations".into());
    w.write_record(&header)?;
    for (i, post) in fit.posteriors.iter().enumerate() {
        let mut rec = vec![ids[i].clone()];
        rec.extend(post.mu.iter().map(|v| fmt_f(*v)));
        for r in 0..d {
            for c in 0..=r {
                rec.push(fmt_f(post.g_hat[(r, c)]));
            }
        }
        rec.push(fit.iterations[i].to_string());
        w.write_record(&rec)?;
    }
    w.flush().map_err(io_at(path))
}

pub fn write_be_posterior(path: &Path, ids: Option<&[String]>, fit: &BeFit) -> Result<()> {
    let (n, d) = fit.x_hat.shape();
    let ids = ids_or_index(ids, n);
    let mut w = writer(path)?;
    let mut header = vec!["node".to_string()];
    header.extend((1..=d).map(|k| format!("mean{k}")));
    header.push("acceptance".into());
    header.push("proposal_sd".into());
    w.write_record(&header)?;
    for i in 0..n {
        let mut rec = vec![ids[i].clone()];
        rec.extend((0..d).map(|k| fmt_f(fit.x_hat[(i, k)])));
        rec.push(fmt_f(fit.acceptance_rates[i]));
        rec.push(fmt_f(fit.proposal_sds[i]));
        w.write_record(&rec)?;
    }
    w.flush().map_err(io_at(path))
}

pub fn write_labels(path: &Path, ids: &[String], labels: &[i64]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["node", "label"])?;
    for (id, l) in ids.iter().zip(labels) {
        w.write_record([id.as_str(), &l.to_string()])?;
    }
    w.flush().map_err(io_at(path))
}

pub fn write_graph(path: &Path, ing: &Ingested) -> Result<()> {
    let text = format!("# n {}\n{}", ing.graph.n(), export_edge_list(ing));
    write_text(path, &text)
}
