//! File formats: tree specs, custom initial states, and CSV outputs.

use std::io::{Read, Write};
use std::path::Path;

use num_complex::Complex64 as C64;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::flows::FlowFunction;
use crate::operators::ArcState;
use crate::tree::{TreeSpec, TruncatedTree};

pub fn read_tree_spec(path: &Path) -> Result<TreeSpec> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Input(format!("cannot read tree spec {}: {e}", path.display())))?;
    TreeSpec::from_json(&text)
}

#[derive(Deserialize)]
struct AmplitudeRow {
    arc_id: usize,
    re: f64,
    im: f64,
}

/// Sparse arc amplitudes from CSV with header `arc_id,re,im`.
/// Repeated arcs accumulate.
pub fn read_arc_state<R: Read>(reader: R, num_arcs: usize) -> Result<ArcState> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut psi = ArcState::zeros(num_arcs);
    for row in rdr.deserialize() {
        let row: AmplitudeRow = row.map_err(|e| Error::Input(format!("initial state: {e}")))?;
        if row.arc_id >= num_arcs {
            return Err(Error::Range(format!(
                "arc {} outside the {num_arcs} arcs of the truncation",
                row.arc_id
            )));
        }
        psi[row.arc_id] += C64::new(row.re, row.im);
    }
    Ok(psi)
}

pub fn read_arc_state_file(path: &Path, num_arcs: usize) -> Result<ArcState> {
    let f = std::fs::File::open(path)
        .map_err(|e| Error::Input(format!("cannot read initial state {}: {e}", path.display())))?;
    read_arc_state(f, num_arcs)
}

fn csv_err(e: csv::Error) -> Error {
    Error::Input(e.to_string())
}

fn label(tree: &TruncatedTree, v: usize) -> String {
    if v == 0 {
        "root".into()
    } else {
        tree.path_of(v).to_string()
    }
}

/// Flow values on the truncation, both arc directions, as
/// `arc_id,origin_path,terminus_path,re,im`.
pub fn write_flow_csv<W: Write>(out: W, tree: &TruncatedTree, flow: &FlowFunction) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["arc_id", "origin_path", "terminus_path", "re", "im"]).map_err(csv_err)?;
    let mut rows: Vec<(usize, C64)> = flow
        .entries()
        .iter()
        .flat_map(|e| [(e.arc, e.value), (e.arc + 1, -e.value * flow.sign().eps())])
        .collect();
    rows.sort_by_key(|r| r.0);
    for (a, z) in rows {
        w.write_record([
            a.to_string(),
            label(tree, tree.origin(a)),
            label(tree, tree.terminus(a)),
            (z.re + 0.0).to_string(),
            (z.im + 0.0).to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(Error::from)
}

/// One row per vertex: `vertex_path,depth,value`.
pub fn write_distribution_csv<W: Write>(out: W, tree: &TruncatedTree, values: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["vertex_path", "depth", "value"]).map_err(csv_err)?;
    for (v, x) in values.iter().enumerate() {
        w.write_record([
            label(tree, v),
            tree.vertex(v).depth.to_string(),
            x.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(Error::from)
}

/// Long format `step,vertex_path,value`, skipping vertices with zero mass.
pub struct TrajectoryWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl<W: Write> TrajectoryWriter<W> {
    pub fn new(out: W) -> Result<Self> {
        let mut inner = csv::Writer::from_writer(out);
        inner.write_record(["step", "vertex_path", "value"]).map_err(csv_err)?;
        Ok(TrajectoryWriter { inner })
    }

    pub fn write_step(&mut self, tree: &TruncatedTree, step: usize, values: &[f64]) -> Result<()> {
        for (v, x) in values.iter().enumerate() {
            if *x != 0.0 {
                self.inner
                    .write_record([step.to_string(), label(tree, v), x.to_string()])
                    .map_err(csv_err)?;
            }
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.inner.flush().map_err(Error::from)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flows::{build_flow, FlowIndex, Sign};
    use crate::tree::{build_tree, VertexPath};

    #[test]
    fn arc_state_round_trip() {
        let text = "arc_id,re,im\n0, 0.5, 0\n3,0,-1\n0,0.25,0\n";
        let psi = read_arc_state(text.as_bytes(), 6).unwrap();
        assert_eq!(psi[0], C64::new(0.75, 0.0));
        assert_eq!(psi[3], C64::new(0.0, -1.0));
        assert!(matches!(read_arc_state("arc_id,re,im\n9,1,0\n".as_bytes(), 6), Err(Error::Range(_))));
        assert!(matches!(read_arc_state("arc_id,re\n1,1\n".as_bytes(), 6), Err(Error::Input(_))));
    }

    #[test]
    fn flow_csv_lists_both_directions() {
        let t = build_tree(&TreeSpec::regular(3).unwrap(), 1).unwrap();
        let f = build_flow(&t, &FlowIndex::new(VertexPath::root(), 1, Sign::Plus).unwrap()).unwrap();
        let mut buf = Vec::new();
        write_flow_csv(&mut buf, &t, &f).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "arc_id,origin_path,terminus_path,re,im");
        assert_eq!(lines.len(), 19);
        assert!(lines[1].starts_with("0,root,0,0.333"));
        assert_eq!(lines[2], "1,0,root,-0.3333333333333333,0");
    }

    #[test]
    fn distribution_csv() {
        let t = build_tree(&TreeSpec::regular(3).unwrap(), 1).unwrap();
        let mut buf = Vec::new();
        write_distribution_csv(&mut buf, &t, &[0.5, 0.25, 0.25, 0.0]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().nth(2), Some("0,1,0.25"));
        let mut tw = TrajectoryWriter::new(Vec::new()).unwrap();
        tw.write_step(&t, 3, &[0.0, 1.0, 0.0, 0.0]).unwrap();
        let out = String::from_utf8(tw.inner.into_inner().unwrap()).unwrap();
        assert_eq!(out, "step,vertex_path,value\n3,0,1\n");
    }
}
