use std::fmt::Write as _;

use faer::Mat;
use hsdemix::detect::{self, Demixer, LambdaOutcome, Method, MethodEvaluation, RocCurve, RocPoint};
use hsdemix::dict::{self, LearnedDictionary};
use hsdemix::hsio::{self, DataMatrix, GroundTruthMask};
use hsdemix::solver::{self, ConvergenceReport};
use hsdemix::synth::{self, SynthSpec};
use hsdemix::{guarantees, linalg, Dictionary, Error, Result};
use rayon::prelude::*;
use serde::Serialize;

use crate::args::{
    DemixArgs, DetectArgs, DiagnoseArgs, DictLearnArgs, DictSampleArgs, DictSourceArgs,
    MaskArgs, MatrixFormat, RocTableArgs, SynthArgs,
};
use crate::io::{read_data, read_matrix, read_problem, write_matrix};
use crate::manifest::Run;

fn read_mask(run: &mut Run, args: &MaskArgs) -> Result<GroundTruthMask> {
    run.input(&args.mask);
    hsio::load_mask(&args.mask, args.positive_class)
}

fn fmt_threshold(t: Option<f64>) -> String {
    t.map(|t| format!("{t:e}")).unwrap_or_default()
}

fn roc_csv(curve: &RocCurve) -> String {
    let mut out = String::from("threshold,tpr,fpr\n");
    for RocPoint { threshold, fpr, tpr } in &curve.points {
        let _ = writeln!(out, "{},{tpr:e},{fpr:e}", fmt_threshold(*threshold));
    }
    out
}

#[derive(Serialize)]
struct GridRun<'a> {
    index: usize,
    report: &'a ConvergenceReport,
}

pub fn demix(args: &DemixArgs, format: MatrixFormat, run: &mut Run) -> Result<()> {
    let p = &args.problem;
    let (y, dict) = read_problem(run, &p.y, &p.dict, p.normalize)?;
    if let Some(lambda) = args.lambda {
        let res = solver::demix(y.as_ref(), &dict, &args.solver.config(lambda))?;
        write_matrix(run, "X", res.x_hat.as_ref(), format)?;
        write_matrix(run, "A", res.a_hat.as_ref(), format)?;
        let report = res.report();
        run.write_json("convergence.json", &report)?;
        println!(
            "lambda={lambda:e} iterations={} converged={} residual={:e}",
            report.iterations, report.converged, report.relative_residual
        );
        return Ok(());
    }
    let count = args.lambda_grid.expect("clap requires one of the lambda flags");
    let grid = solver::lambda_grid(y.as_ref(), &dict, count)?;
    let results = grid
        .par_iter()
        .map(|&lambda| solver::demix(y.as_ref(), &dict, &args.solver.config(lambda)))
        .collect::<Result<Vec<_>>>()?;
    let width = (count.max(2) - 1).to_string().len();
    let mut reports = Vec::with_capacity(results.len());
    for (k, res) in results.iter().enumerate() {
        write_matrix(run, &format!("X_l{k:0width$}"), res.x_hat.as_ref(), format)?;
        write_matrix(run, &format!("A_l{k:0width$}"), res.a_hat.as_ref(), format)?;
        reports.push(res.report());
    }
    let indexed: Vec<GridRun> = reports
        .iter()
        .enumerate()
        .map(|(index, report)| GridRun { index, report })
        .collect();
    run.write_json("convergence.json", &indexed)?;
    println!("solved {} lambda values up to {:e}", grid.len(), grid[grid.len() - 1]);
    Ok(())
}

#[derive(Serialize)]
struct SweepSummary<'a> {
    method: Method,
    lambda: f64,
    index: usize,
    convergence: ConvergenceReport,
    outcomes: &'a [LambdaOutcome],
}

fn demixer_for(method: Method) -> Option<Demixer> {
    match method {
        Method::Xpra => Some(Demixer::Xpra),
        Method::RpcaDagger => Some(Demixer::RpcaDagger),
        Method::Mf | Method::MfDagger => None,
    }
}

pub fn detect(args: &DetectArgs, run: &mut Run) -> Result<()> {
    let p = &args.problem;
    let (y, dict) = read_problem(run, &p.y, &p.dict, p.normalize)?;
    let mask = read_mask(run, &args.mask)?;
    let method = Method::from(args.method);
    let (curve, scores, lambda) = match demixer_for(method) {
        Some(demixer) => {
            let grid = demixer.lambda_grid(y.as_ref(), &dict, args.lambda_grid)?;
            let sweep = detect::best_auc_over_lambda(
                y.as_ref(),
                &dict,
                &mask,
                &grid,
                &args.solver.config(0.0),
                demixer,
                args.allow_flip,
            )?;
            run.write_json(
                "lambda_sweep.json",
                &SweepSummary {
                    method,
                    lambda: sweep.lambda,
                    index: sweep.index,
                    convergence: sweep.result.report(),
                    outcomes: &sweep.outcomes,
                },
            )?;
            (sweep.roc, sweep.scores, Some(sweep.lambda))
        }
        None => {
            let scores = detect::filter_scores(method, y.as_ref(), &dict)?;
            let curve = detect::roc(&scores, &mask, method.default_sweep(), args.allow_flip)?;
            (curve, scores, None)
        }
    };
    run.write_json("roc.json", &curve)?;
    run.write_text("roc.csv", &roc_csv(&curve))?;
    let score_text: String = scores.scores.iter().map(|s| format!("{s:e}\n")).collect();
    run.write_text("scores.csv", &score_text)?;
    if args.emit_mask {
        let path = run.path("detections.csv");
        hsio::write_mask(&path, &curve.decisions(&scores.scores))?;
        run.output(path);
    }
    let lambda_note = lambda.map(|l| format!(" lambda={l:e}")).unwrap_or_default();
    println!(
        "method={}{} auc={:.6} flipped={}{lambda_note}",
        method.label(),
        if curve.flipped { "*" } else { "" },
        curve.auc,
        curve.flipped
    );
    Ok(())
}

fn table_csv(rows: &[MethodEvaluation]) -> String {
    let mut out = String::from("Method,Threshold,TPR,FPR,AUC\n");
    for row in rows {
        let best = &row.roc.best_point;
        let _ = writeln!(
            out,
            "{}{},{},{:.6},{:.6},{:.6}",
            row.method.label(),
            if row.roc.flipped { "*" } else { "" },
            fmt_threshold(best.threshold),
            best.tpr,
            best.fpr,
            row.roc.auc
        );
    }
    out
}

pub fn roc_table(args: &RocTableArgs, run: &mut Run) -> Result<()> {
    let p = &args.problem;
    let (y, dict) = read_problem(run, &p.y, &p.dict, p.normalize)?;
    let mask = read_mask(run, &args.mask)?;
    let methods: Vec<Method> = args.methods.iter().map(|&m| m.into()).collect();
    let rows = detect::evaluate_methods(
        y.as_ref(),
        &dict,
        &mask,
        &methods,
        args.lambda_grid,
        &args.solver.config(0.0),
        args.allow_flip,
    )?;
    let csv = table_csv(&rows);
    run.write_text("table.csv", &csv)?;
    run.write_json("table.json", &rows)?;
    print!("{csv}");
    Ok(())
}

pub fn diagnose(args: &DiagnoseArgs, run: &mut Run) -> Result<()> {
    let x0 = read_matrix(run, &args.x0)?;
    let a0 = read_matrix(run, &args.a0)?;
    let dict = Dictionary::from_raw(read_matrix(run, &args.dict)?.as_ref())?;
    let report = guarantees::diagnose(x0.as_ref(), a0.as_ref(), &dict, args.rank_tol)?;
    run.write_json("report.json", &report)?;
    println!(
        "{}",
        serde_json::to_string_pretty(&report).map_err(|e| Error::format("report", e.to_string()))?
    );
    Ok(())
}

fn read_source(run: &mut Run, src: &DictSourceArgs) -> Result<(DataMatrix, GroundTruthMask)> {
    let mut y = read_data(run, &src.y)?;
    if src.normalize {
        let scale = linalg::max_abs(y.as_ref());
        if scale == 0.0 {
            return Err(Error::Degenerate("data matrix is identically zero".into()));
        }
        y = DataMatrix::new(Mat::from_fn(y.rows(), y.cols(), |i, j| y.as_ref()[(i, j)] / scale))?;
    }
    let mask = read_mask(run, &src.mask)?;
    if mask.len() != y.cols() {
        return Err(Error::Size {
            expected: y.cols(),
            found: mask.len(),
        });
    }
    Ok((y, mask))
}

#[derive(Serialize)]
struct SampledAtoms {
    voxels: Vec<usize>,
}

pub fn dict_sample(args: &DictSampleArgs, format: MatrixFormat, run: &mut Run) -> Result<()> {
    let (y, mask) = read_source(run, &args.source)?;
    let (dictionary, voxels) = dict::sample_dictionary(&y, &mask, args.source.d, args.seed)?;
    write_matrix(run, "R", dictionary.atoms(), format)?;
    run.write_json("atoms.json", &SampledAtoms { voxels })?;
    let (fl, fu) = dictionary.frame_bounds();
    println!("atoms={} frame_lower={fl:e} frame_upper={fu:e}", dictionary.len());
    Ok(())
}

#[derive(Serialize)]
struct LearningTrace<'a> {
    objective: &'a [f64],
    reseeded: usize,
}

pub fn dict_learn(args: &DictLearnArgs, format: MatrixFormat, run: &mut Run) -> Result<()> {
    let (y, mask) = read_source(run, &args.source)?;
    let positives = mask.positive_indices();
    if positives.is_empty() {
        return Err(Error::InsufficientSamples {
            requested: args.source.d,
            available: 0,
        });
    }
    let yr = y.as_ref();
    let y_pos = Mat::from_fn(y.rows(), positives.len(), |i, k| yr[(i, positives[k])]);
    let LearnedDictionary {
        dictionary,
        objective,
        reseeded,
    } = dict::learn_dictionary(y_pos.as_ref(), args.source.d, args.rho, args.iters, args.seed)?;
    write_matrix(run, "R", dictionary.atoms(), format)?;
    run.write_json(
        "learning.json",
        &LearningTrace {
            objective: &objective,
            reseeded,
        },
    )?;
    println!(
        "atoms={} objective={:e} reseeded={reseeded}",
        dictionary.len(),
        objective.last().copied().unwrap_or(f64::NAN)
    );
    Ok(())
}

pub fn synth(args: &SynthArgs, format: MatrixFormat, run: &mut Run) -> Result<()> {
    let spec = SynthSpec {
        magnitude_low: args.magnitude_low,
        magnitude_high: args.magnitude_high,
        ..SynthSpec::new(args.f, args.nm, args.r, args.d, args.s, args.seed).with_kind(args.kind.into())
    };
    let inst = synth::generate(&spec)?;
    if inst.seed_used != spec.seed {
        log::warn!("instance drawn with seed {} instead of {}", inst.seed_used, spec.seed);
    }
    write_matrix(run, "Y", inst.y.as_ref(), format)?;
    write_matrix(run, "X0", inst.x0.as_ref(), format)?;
    write_matrix(run, "A0", inst.a0.as_ref(), format)?;
    write_matrix(run, "R", inst.dictionary.atoms(), format)?;
    // voxels carrying at least one active atom
    let labels: Vec<bool> = (0..inst.a0.ncols())
        .map(|j| (0..inst.a0.nrows()).any(|i| inst.a0[(i, j)] != 0.0))
        .collect();
    let mask_path = run.path("mask.csv");
    hsio::write_mask(&mask_path, &labels)?;
    run.output(mask_path);
    run.write_json("report.json", &inst.report)?;
    match &inst.report {
        Some(r) => println!(
            "seed={} mu={:.6} certified={} lambda_min={:e} lambda_max={:e}",
            inst.seed_used,
            r.mu,
            r.certified(),
            r.lambda_min,
            r.lambda_max
        ),
        None => println!("seed={} no sparse part; no report", inst.seed_used),
    }
    Ok(())
}
