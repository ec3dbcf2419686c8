//! Model file format.
//!
//! A magic line followed by one JSON document. Small metadata is plain JSON;
//! every floating-point value the model depends on lives in a base64 section of
//! little-endian IEEE-754 doubles (ids as little-endian u64), so a load reproduces
//! the model bit for bit.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::detector::{Geometry, Model, Params, TopEntry};
use crate::error::{Error, Result};
use crate::graph::{ComponentMap, Graph, MinMax, PointSet};
use crate::spectral::EigenSystem;

pub const MAGIC: &str = "COMMUTE-MODEL";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format_version: u32,
    nodes: usize,
    original_nodes: usize,
    eigenpairs: usize,
    dim: Option<usize>,
    normalized: bool,
    k1: usize,
    k2: usize,
    top_n: usize,
    /// Informational copies; the binary sections are authoritative.
    tau: f64,
    sigma: f64,
    volume: f64,
    sections: BTreeMap<String, String>,
}

fn f64_section(values: &[f64]) -> String {
    let mut bytes = Vec::with_capacity(values.len() * 8);
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    B64.encode(bytes)
}

fn u64_section(values: impl IntoIterator<Item = usize>) -> String {
    let bytes: Vec<u8> = values
        .into_iter()
        .flat_map(|v| (v as u64).to_le_bytes())
        .collect();
    B64.encode(bytes)
}

fn raw(sections: &BTreeMap<String, String>, name: &str) -> Result<Vec<u8>> {
    let text = sections
        .get(name)
        .ok_or_else(|| Error::ModelFormat(format!("missing section {name}")))?;
    let bytes = B64
        .decode(text)
        .map_err(|e| Error::ModelFormat(format!("section {name}: {e}")))?;
    if bytes.len() % 8 != 0 {
        return Err(Error::ModelFormat(format!("section {name} is truncated")));
    }
    Ok(bytes)
}

fn read_f64(sections: &BTreeMap<String, String>, name: &str) -> Result<Vec<f64>> {
    Ok(raw(sections, name)?
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect())
}

fn read_usize(sections: &BTreeMap<String, String>, name: &str) -> Result<Vec<usize>> {
    raw(sections, name)?
        .chunks_exact(8)
        .map(|c| {
            usize::try_from(u64::from_le_bytes(c.try_into().expect("chunk of 8")))
                .map_err(|_| Error::ModelFormat(format!("id overflow in {name}")))
        })
        .collect()
}

pub fn save<W: Write>(model: &Model, mut out: W) -> Result<()> {
    let g = model.graph();
    let es = model.eigensystem();
    let p = model.params();
    let map = model.component_map();
    let edges: Vec<(usize, usize, f64)> = g.edges().collect();
    let mut sections = BTreeMap::new();
    sections.insert("edge_u".into(), u64_section(edges.iter().map(|e| e.0)));
    sections.insert("edge_v".into(), u64_section(edges.iter().map(|e| e.1)));
    sections.insert(
        "edge_w".into(),
        f64_section(&edges.iter().map(|e| e.2).collect::<Vec<_>>()),
    );
    sections.insert("eigenvalues".into(), f64_section(es.eigenvalues()));
    sections.insert("eigenvectors".into(), f64_section(es.raw_rows()));
    sections.insert(
        "scalars".into(),
        f64_section(&[model.tau(), p.sigma, es.volume()]),
    );
    sections.insert("component".into(), u64_section(map.new_to_old.iter().copied()));
    sections.insert("top_index".into(), u64_section(model.top().iter().map(|t| t.index)));
    sections.insert(
        "top_score".into(),
        f64_section(&model.top().iter().map(|t| t.score).collect::<Vec<_>>()),
    );
    let geo = model.geometry();
    if let Some(geo) = geo {
        sections.insert("points".into(), f64_section(geo.points.as_slice()));
        sections.insert("kth_distance".into(), f64_section(&geo.kth_distance));
        if let Some(s) = &geo.scaling {
            sections.insert("scale_min".into(), f64_section(&s.min));
            sections.insert("scale_max".into(), f64_section(&s.max));
        }
    }
    let header = Header {
        format_version: FORMAT_VERSION,
        nodes: g.node_count(),
        original_nodes: map.old_to_new.len(),
        eigenpairs: es.len(),
        dim: geo.map(|g| g.points.dim()),
        normalized: geo.is_some_and(|g| g.scaling.is_some()),
        k1: p.k1,
        k2: p.k2,
        top_n: p.top_n,
        tau: model.tau(),
        sigma: p.sigma,
        volume: es.volume(),
        sections,
    };
    writeln!(out, "{MAGIC}")?;
    serde_json::to_writer_pretty(&mut out, &header)
        .map_err(|e| Error::ModelFormat(e.to_string()))?;
    writeln!(out)?;
    Ok(())
}

pub fn load<R: BufRead>(mut input: R) -> Result<Model> {
    let mut magic = String::new();
    input.read_line(&mut magic)?;
    if magic.trim_end() != MAGIC {
        return Err(Error::ModelFormat("not a model file (bad magic line)".into()));
    }
    let header: Header =
        serde_json::from_reader(input).map_err(|e| Error::ModelFormat(e.to_string()))?;
    if header.format_version != FORMAT_VERSION {
        return Err(Error::ModelFormat(format!(
            "unsupported format version {}",
            header.format_version
        )));
    }
    let s = &header.sections;
    let n = header.nodes;
    let (us, vs, ws) = (read_usize(s, "edge_u")?, read_usize(s, "edge_v")?, read_f64(s, "edge_w")?);
    if us.len() != vs.len() || us.len() != ws.len() {
        return Err(Error::ModelFormat("edge sections differ in length".into()));
    }
    let graph = Graph::from_edges(n, us.into_iter().zip(vs).zip(ws).map(|((u, v), w)| (u, v, w)))?;
    let scalars = read_f64(s, "scalars")?;
    let [tau, sigma, volume] = scalars[..] else {
        return Err(Error::ModelFormat("scalars section must hold 3 values".into()));
    };
    let values = read_f64(s, "eigenvalues")?;
    if values.len() != header.eigenpairs {
        return Err(Error::ModelFormat("eigenvalue count mismatch".into()));
    }
    let es = EigenSystem::from_raw(n, values, read_f64(s, "eigenvectors")?, volume)?;

    let new_to_old = read_usize(s, "component")?;
    let mut old_to_new = vec![None; header.original_nodes];
    for (k, &old) in new_to_old.iter().enumerate() {
        *old_to_new
            .get_mut(old)
            .ok_or_else(|| Error::ModelFormat("component id out of range".into()))? = Some(k);
    }
    let top: Vec<TopEntry> = read_usize(s, "top_index")?
        .into_iter()
        .zip(read_f64(s, "top_score")?)
        .map(|(index, score)| TopEntry { index, score })
        .collect();

    let geometry = match header.dim {
        Some(dim) => {
            let scaling = if header.normalized {
                Some(MinMax {
                    min: read_f64(s, "scale_min")?,
                    max: read_f64(s, "scale_max")?,
                })
            } else {
                None
            };
            Some(Geometry {
                points: PointSet::new(dim, read_f64(s, "points")?)?.with_scaling(scaling.clone()),
                kth_distance: read_f64(s, "kth_distance")?,
                scaling,
            })
        }
        None => None,
    };
    let params = Params {
        k1: header.k1,
        k2: header.k2,
        m: es.len(),
        top_n: header.top_n,
        sigma,
    };
    Model::from_parts(
        graph,
        es,
        tau,
        params,
        ComponentMap {
            old_to_new,
            new_to_old,
        },
        top,
        geometry,
    )
}
