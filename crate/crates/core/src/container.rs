//! Binary container for built factors.
//!
//! Layout: the line `SDDMFAC1`, one line of JSON header, then the sections
//! listed in the header back to back. Matrices are Matrix Market text and
//! polynomial coefficients are little-endian `f64`. Reading a file back
//! gives a bit-identical operator.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::chain::FactorChain;
use crate::error::{Error, Result};
use crate::factor::{edge_factor, EdgeBased, FactorKind, FactorOperator, RefineInfo, Refined};
use crate::maclaurin::MaclaurinPoly;
use crate::mtx::{read_matrix, write_matrix};
use crate::sparse::SparseSymMatrix;
use crate::sparsify::SparsifyReport;

pub const MAGIC: &str = "SDDMFAC1";
pub const FORMAT_VERSION: u32 = 1;

/// A factor together with the matrix it was built for.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorArtifact {
    pub operator: FactorOperator,
    /// The factored matrix; for a lifted factor this is the `2n x 2n` lift.
    pub matrix: SparseSymMatrix,
    /// Original dimension when `matrix` is a Gremban lift.
    pub lifted_from: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct PolyMeta {
    p: f64,
    t: usize,
    delta: f64,
    eps: f64,
}

impl PolyMeta {
    fn of(q: &MaclaurinPoly) -> Self {
        PolyMeta {
            p: q.p,
            t: q.t,
            delta: q.delta,
            eps: q.eps,
        }
    }

    fn with_coeffs(&self, coeffs: Vec<f64>) -> Result<MaclaurinPoly> {
        if coeffs.len() != self.t + 1 {
            return Err(Error::Parse(format!(
                "degree {} polynomial with {} coefficients",
                self.t,
                coeffs.len()
            )));
        }
        Ok(MaclaurinPoly {
            p: self.p,
            t: self.t,
            coeffs,
            delta: self.delta,
            eps: self.eps,
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Refinement {
    info: RefineInfo,
    poly: PolyMeta,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Section {
    name: String,
    bytes: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    version: u32,
    kind: FactorKind,
    n: usize,
    d: usize,
    lifted_from: Option<usize>,
    p: f64,
    c: f64,
    kappa_used: f64,
    eps_total: f64,
    d_plan: usize,
    eps_schedule: Vec<f64>,
    lambdas: Vec<f64>,
    reports: Vec<SparsifyReport>,
    polys: Vec<PolyMeta>,
    refinement: Option<Refinement>,
    sections: Vec<Section>,
}

fn mtx_bytes(m: &SparseSymMatrix) -> Vec<u8> {
    let mut out = Vec::new();
    write_matrix(&mut out, m, &[]).expect("writing to memory");
    out
}

fn f64_bytes(v: &[f64]) -> Vec<u8> {
    v.iter().flat_map(|x| x.to_le_bytes()).collect()
}

fn f64_from_bytes(b: &[u8]) -> Result<Vec<f64>> {
    if b.len() % 8 != 0 {
        return Err(Error::Parse("coefficient block is not a multiple of 8 bytes".into()));
    }
    Ok(b.chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect())
}

/// Writes `art` in container format.
pub fn write_factor(mut w: impl Write, art: &FactorArtifact) -> Result<()> {
    let chain = art.operator.chain();
    let refined = match &art.operator {
        FactorOperator::Chain(_) => None,
        FactorOperator::Refined(r) => Some(r),
        FactorOperator::EdgeBased(e) => Some(&e.inverse),
    };
    let mut blocks: Vec<(String, Vec<u8>)> = vec![("matrix".into(), mtx_bytes(&art.matrix))];
    for (i, l) in chain.levels.iter().enumerate() {
        blocks.push((format!("level_{i}"), mtx_bytes(l)));
    }
    for (i, q) in chain.polys.iter().enumerate() {
        blocks.push((format!("poly_{i}"), f64_bytes(&q.coeffs)));
    }
    if let Some(r) = refined {
        blocks.push(("refine_poly".into(), f64_bytes(&r.poly.coeffs)));
    }
    let header = Header {
        version: FORMAT_VERSION,
        kind: art.operator.kind(),
        n: art.matrix.n(),
        d: chain.d(),
        lifted_from: art.lifted_from,
        p: chain.p,
        c: chain.c,
        kappa_used: chain.kappa_used,
        eps_total: chain.eps_total,
        d_plan: chain.d_plan,
        eps_schedule: chain.eps_schedule.clone(),
        lambdas: chain.lambdas.clone(),
        reports: chain.reports.clone(),
        polys: chain.polys.iter().map(PolyMeta::of).collect(),
        refinement: refined.map(|r| Refinement {
            info: r.info,
            poly: PolyMeta::of(&r.poly),
        }),
        sections: blocks
            .iter()
            .map(|(name, b)| Section {
                name: name.clone(),
                bytes: b.len(),
            })
            .collect(),
    };
    let json = serde_json::to_string(&header).map_err(|e| Error::Io(e.to_string()))?;
    writeln!(w, "{MAGIC}")?;
    writeln!(w, "{json}")?;
    for (_, b) in &blocks {
        w.write_all(b)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a container written by [`write_factor`].
pub fn read_factor(r: impl Read) -> Result<FactorArtifact> {
    let mut r = BufReader::new(r);
    let mut line = String::new();
    r.read_line(&mut line)?;
    if line.trim_end() != MAGIC {
        return Err(Error::Parse("not a factor container (bad magic)".into()));
    }
    line.clear();
    r.read_line(&mut line)?;
    let h: Header = serde_json::from_str(line.trim_end())
        .map_err(|e| Error::Parse(format!("container header: {e}")))?;
    if h.version != FORMAT_VERSION {
        return Err(Error::Parse(format!("unsupported container version {}", h.version)));
    }
    let mut sections = std::collections::HashMap::new();
    for s in &h.sections {
        let mut buf = vec![0u8; s.bytes];
        r.read_exact(&mut buf)
            .map_err(|e| Error::Parse(format!("section {}: {e}", s.name)))?;
        sections.insert(s.name.clone(), buf);
    }
    let mut take = |name: &str| {
        sections
            .remove(name)
            .ok_or_else(|| Error::Parse(format!("missing section {name}")))
    };
    let matrix = read_matrix(&take("matrix")?[..])?.matrix;
    let levels = (0..=h.d)
        .map(|i| Ok(read_matrix(&take(&format!("level_{i}"))?[..])?.matrix))
        .collect::<Result<Vec<_>>>()?;
    if h.polys.len() != h.d || h.eps_schedule.len() != h.d + 1 || h.lambdas.len() != h.d + 1 {
        return Err(Error::Parse("chain header lengths disagree with d".into()));
    }
    let polys = h
        .polys
        .iter()
        .enumerate()
        .map(|(i, m)| m.with_coeffs(f64_from_bytes(&take(&format!("poly_{i}"))?)?))
        .collect::<Result<Vec<_>>>()?;
    if levels.iter().any(|l| l.n() != h.n) || matrix.n() != h.n {
        return Err(Error::Parse("level dimensions disagree with header".into()));
    }
    let chain = FactorChain {
        p: h.p,
        c: h.c,
        kappa_used: h.kappa_used,
        eps_total: h.eps_total,
        d_plan: h.d_plan,
        levels,
        eps_schedule: h.eps_schedule,
        lambdas: h.lambdas,
        polys,
        reports: h.reports,
    };
    let refined = match h.refinement {
        Some(rf) => Some(Refined {
            crude: chain.clone(),
            m: matrix.clone(),
            poly: rf.poly.with_coeffs(f64_from_bytes(&take("refine_poly")?)?)?,
            info: rf.info,
        }),
        None => None,
    };
    let operator = match (h.kind, refined) {
        (FactorKind::Chain, None) => FactorOperator::Chain(chain),
        (FactorKind::ChainRefined, Some(r)) => FactorOperator::Refined(r),
        (FactorKind::EdgeBased, Some(r)) => FactorOperator::EdgeBased(EdgeBased {
            inverse: r,
            b: edge_factor(&matrix)?,
        }),
        (k, _) => return Err(Error::Parse(format!("refinement block does not match kind {k:?}"))),
    };
    Ok(FactorArtifact {
        operator,
        matrix,
        lifted_from: h.lifted_from,
    })
}

pub fn write_factor_file(path: impl AsRef<Path>, art: &FactorArtifact) -> Result<()> {
    let f = std::fs::File::create(path)?;
    write_factor(std::io::BufWriter::new(f), art)
}

pub fn read_factor_file(path: impl AsRef<Path>) -> Result<FactorArtifact> {
    read_factor(std::fs::File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::factor::{build_factor, FactorConfig};
    use crate::gen;
    use crate::sparsify::SparsifyParams;

    fn roundtrip(art: &FactorArtifact) -> FactorArtifact {
        let mut buf = Vec::new();
        write_factor(&mut buf, art).unwrap();
        read_factor(&buf[..]).unwrap()
    }

    #[test]
    fn chain_and_refined_roundtrip_bit_exactly() {
        let m = gen::grid2d(5, 0.3).unwrap();
        for (p, refine) in [(-1.0, true), (0.5, false), (-1.0, false)] {
            let cfg = FactorConfig {
                p,
                eps: 0.3,
                refine,
                sparsify: SparsifyParams {
                    seed: 4,
                    ..Default::default()
                },
                ..Default::default()
            };
            let op = build_factor(&m, &cfg).unwrap();
            let art = FactorArtifact {
                operator: op,
                matrix: m.clone(),
                lifted_from: None,
            };
            assert_eq!(roundtrip(&art), art);
        }
    }

    #[test]
    fn edge_based_roundtrip() {
        let m = gen::path(12, 0.5).unwrap();
        let op = build_factor(&m, &FactorConfig::default())
            .unwrap()
            .into_edge_based(&m)
            .unwrap();
        let art = FactorArtifact {
            operator: op,
            matrix: m,
            lifted_from: Some(6),
        };
        assert_eq!(roundtrip(&art), art);
    }

    #[test]
    fn garbage_is_rejected() {
        assert!(matches!(read_factor(&b"hello\n"[..]), Err(Error::Parse(_))));
        let m = gen::path(4, 1.0).unwrap();
        let art = FactorArtifact {
            operator: build_factor(&m, &FactorConfig::default()).unwrap(),
            matrix: m,
            lifted_from: None,
        };
        let mut buf = Vec::new();
        write_factor(&mut buf, &art).unwrap();
        buf.truncate(buf.len() - 5);
        assert!(matches!(read_factor(&buf[..]), Err(Error::Parse(_))));
    }
}
