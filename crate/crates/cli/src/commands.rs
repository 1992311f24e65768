use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use serde_json::json;

use sddmfac::container::FactorArtifact;
use sddmfac::mtx::{read_matrix_file, read_vector_file, write_matrix_file};
use sddmfac::oracle::DENSE_LIMIT;
use sddmfac::sampler::{mean_check, write_bin, write_csv, BatchSidecar};
use sddmfac::{
    build_factor, covariance_check, dense_power, gen, gremban_lift, gremban_project, loewner_check, read_factor_file,
    unlift, validate_sddm, write_factor_file, DenseSym, Error, Factor, FactorConfig, PreparedSampler, Result,
    SparseSymMatrix,
};

use crate::report::RunReport;
use crate::{CheckArgs, FactorArgs, Format, GenArgs, SampleArgs};

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn sidecar_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

fn dense_guard(n: usize) -> Result<()> {
    if n > DENSE_LIMIT {
        return Err(Error::TooLargeForDenseCheck { n, limit: DENSE_LIMIT });
    }
    Ok(())
}

pub fn gen(a: &GenArgs, report: &mut RunReport) -> Result<()> {
    let m = report.timed("generate", || gen::generate(a.kind.into(), a.size, a.slack, a.degree, a.seed))?;
    let comments = vec![format!(
        "sddmfac gen {} size={} slack={} degree={} seed={}",
        a.kind.to_possible_value().map(|v| v.get_name().to_string()).unwrap_or_default(),
        a.size,
        a.slack,
        a.degree,
        a.seed
    )];
    report.timed("write", || write_matrix_file(&a.output, &m, &comments))?;
    let cert = validate_sddm(&m);
    report.output("path", &a.output);
    report.output("n", m.n());
    report.output("nnz", m.nnz_full());
    report.output("edges", m.num_edges());
    report.output("is_sddm", cert.is_sddm);
    report.output("is_sdd", cert.is_sdd);
    Ok(())
}

pub fn factor(a: &FactorArgs, report: &mut RunReport) -> Result<()> {
    let input = report.timed("read", || read_matrix_file(&a.matrix))?.matrix;
    let cert = validate_sddm(&input);
    let (matrix, lifted_from) = if cert.is_sddm {
        (input, None)
    } else if a.gremban {
        cert.require_sdd()?;
        if a.p != -1.0 {
            return Err(Error::InvalidParams(format!(
                "lifted factors need p = -1, got p = {}",
                a.p
            )));
        }
        let n = input.n();
        let lift = report.timed("lift", || gremban_lift(&input))?;
        (lift.s, Some(n))
    } else {
        return Err(cert.require_sddm().expect_err("matrix is not SDDM"));
    };

    let cfg = FactorConfig {
        p: a.p,
        eps: a.eps,
        sparsify: a.sparsify.params(a.seed),
        crude_eps: a.crude_eps,
        refine: !a.no_refine,
        refine_delta: a.refine_delta,
        refine_eps_cap: a.refine_eps_cap,
        chain_share: a.chain_share,
    };
    let mut op = report.timed("build", || build_factor(&matrix, &cfg))?;
    if a.edge_based {
        op = op.into_edge_based(&matrix)?;
    }
    report.describe_operator(&op);

    let art = FactorArtifact {
        operator: op,
        matrix,
        lifted_from,
    };
    report.timed("write", || write_factor_file(&a.output, &art))?;

    report.output("path", &a.output);
    report.output("kind", art.operator.kind());
    report.output("n", art.lifted_from.unwrap_or(art.matrix.n()));
    report.output("factored_n", art.matrix.n());
    report.output("lifted_from", art.lifted_from);
    report.output("input_dim", art.operator.input_dim());
    report.output("guarantee", art.operator.guarantee());
    report.output("factor_config", &cfg);
    Ok(())
}

pub fn sample(a: &SampleArgs, report: &mut RunReport) -> Result<()> {
    let art = report.timed("read", || read_factor_file(&a.factor))?;
    let h = a.h.as_ref().map(read_vector_file).transpose()?;
    let eps = a.eps.unwrap_or(art.operator.guarantee());
    let lifted_from = art.lifted_from;
    let mut s = report.timed("prepare", || PreparedSampler::from_artifact(art, h.as_deref(), eps))?;
    if a.edge_based {
        s = s.into_edge_based()?;
    }
    let batch = report.timed("sample", || s.sample(a.count, a.seed));
    report.gaussians_consumed = Some(batch.gaussians_consumed);

    report.timed("write", || -> Result<()> {
        let mut w = create(&a.output)?;
        match a.format {
            Format::Csv => write_csv(&mut w, &batch)?,
            Format::Bin => {
                write_bin(&mut w, &batch)?;
                let side = serde_json::to_string_pretty(&BatchSidecar::new(&batch, eps))
                    .map_err(|e| Error::Io(e.to_string()))?;
                std::fs::write(sidecar_path(&a.output), side + "\n")?;
            }
        }
        w.flush()?;
        Ok(())
    })?;

    report.output("path", &a.output);
    if a.format == Format::Bin {
        report.output("sidecar", sidecar_path(&a.output));
    }
    report.output("n", batch.n);
    report.output("count", batch.count);
    report.output("noise_dim", s.noise_dim());
    report.output("kind", s.artifact.operator.kind());
    report.output("eps", eps);
    report.output("lifted_from", lifted_from);

    if a.check {
        dense_guard(batch.n)?;
        let precision = match lifted_from {
            Some(_) => unlift(&s.artifact.matrix)?,
            None => s.artifact.matrix.clone(),
        };
        let target = dense_power(&precision.to_dense(), -1.0)?;
        let cov = report.timed("check", || covariance_check(&batch, &target, a.z))?;
        let passed = !cov.insufficient_data && cov.pass_fraction >= a.min_pass;
        report.check("covariance", passed, json!({ "min_pass": a.min_pass, "report": cov }));
        let mean = mean_check(&batch, &s.mean, a.z)?;
        let passed = !mean.insufficient_data && mean.pass_fraction >= a.min_pass;
        report.check("mean", passed, json!({ "min_pass": a.min_pass, "report": mean }));
    }
    Ok(())
}

/// Dense `C̃`, projected back to `matrix`'s dimension when the factor was
/// built on a lift of it.
fn dense_factor(art: &FactorArtifact, matrix: &SparseSymMatrix) -> Result<(Vec<f64>, usize, usize)> {
    let op = &art.operator;
    let (rows, cols) = (op.output_dim(), op.input_dim());
    let c = op.to_dense_matrix();
    match art.lifted_from {
        Some(n0) if matrix.n() == n0 && rows == 2 * n0 => {
            let mut out = vec![0.0; n0 * cols];
            let mut col = vec![0.0; rows];
            for j in 0..cols {
                for i in 0..rows {
                    col[i] = c[i * cols + j];
                }
                for (i, v) in gremban_project(&col, n0)?.into_iter().enumerate() {
                    out[i * cols + j] = v;
                }
            }
            Ok((out, n0, cols))
        }
        _ if matrix.n() == rows => Ok((c, rows, cols)),
        _ => Err(Error::DimensionMismatch {
            expected: rows,
            actual: matrix.n(),
        }),
    }
}

pub fn check(a: &CheckArgs, report: &mut RunReport) -> Result<()> {
    let matrix = report.timed("read", || read_matrix_file(&a.matrix))?.matrix;
    let art = read_factor_file(&a.factor)?;
    dense_guard(matrix.n().max(art.matrix.n()))?;
    let op = &art.operator;
    let eps = a.eps.unwrap_or(op.guarantee());
    report.describe_operator(op);

    let r = report.timed("check", || -> Result<_> {
        let (c, rows, cols) = dense_factor(&art, &matrix)?;
        let gram = DenseSym::gram(&c, rows, cols);
        let target = dense_power(&matrix.to_dense(), op.p())?;
        loewner_check(&gram, &target, eps)
    })?;
    report.output("n", matrix.n());
    report.output("p", op.p());
    report.output("kind", op.kind());
    report.output("lifted_from", art.lifted_from);
    report.check("loewner", r.pass, json!({ "eps": eps, "report": r }));
    Ok(())
}
