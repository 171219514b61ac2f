//! Subcommand implementations.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use hybrid_ids::detect::{
    load_pipeline, save_pipeline, train_pipeline, DetectOptions, PipelineModel, TrainReport, VerdictKind,
};
use hybrid_ids::evalcli::synth::{synth_can_frames, synth_flow_rows};
use hybrid_ids::evalcli::{
    bench_latency, compute_metrics, cross_validate, sample_dataset, zero_day_eval, zero_day_split, MetricsReport, RunConfig,
};
use hybrid_ids::hpo::HpoOutcome;
use hybrid_ids::ingest::{
    parse_flow_cell, split_holdout, write_canonical_csv, write_flag_log, write_raw_csv, LabeledDataset, SplitSpec,
    LABEL_COLUMN,
};
use hybrid_ids::{Error, Result};

use crate::data::{class_table, DataArgs};

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|source| Error::Io { path: path.to_path_buf(), source })
}

fn write_report(path: Option<&Path>, report: &MetricsReport) -> Result<()> {
    if let Some(p) = path {
        report.write_csv(create(p)?)?;
        log::info!("wrote {}", p.display());
    }
    Ok(())
}

fn io_err(path: &Path) -> impl Fn(io::Error) -> Error + '_ {
    move |source| Error::Io { path: path.to_path_buf(), source }
}

pub fn ingest(data: &DataArgs, out: Option<&Path>) -> Result<()> {
    let d = data.load()?;
    print!("{}", class_table(&d));
    if let Some(p) = out {
        write_canonical_csv(&d, p)?;
        println!("wrote {}", p.display());
    }
    Ok(())
}

pub fn sample(data: &DataArgs, cfg: &RunConfig, out: &Path) -> Result<()> {
    let d = data.load()?;
    let (s, k) = sample_dataset(&d, &cfg.sample, cfg.pipeline.seed)?;
    println!("k = {k}; kept {} of {} rows", s.n_rows(), d.n_rows());
    print!("{}", class_table(&s));
    write_canonical_csv(&s, out)?;
    println!("wrote {}", out.display());
    Ok(())
}

fn print_train_report(m: &PipelineModel, r: &TrainReport) {
    println!(
        "features: {} of {} kept ({})",
        m.selection.selected.len(),
        m.input_width(),
        m.selection.selected_names().join(", ")
    );
    println!("{:<14} {:>10} {:>10} {:>10}", "learner", "default", "tuned", "oof");
    for b in &r.signature.bases {
        println!(
            "{:<14} {:>10.5} {:>10.5} {:>10.5}",
            b.kind.name(),
            b.default_cv_macro_f1,
            b.tuned_cv_macro_f1,
            b.oof_macro_f1
        );
    }
    println!("meta learner input: best base {}", m.stack.best_base.name());
    println!("KPCA: {} kernel, {} components", r.kpca_kernel, r.kpca_p);
    println!(
        "cluster tier: k = {}, {} distance, p* = {:.4}, validation accuracy {:.5} ({} FN, {} FP)",
        r.anomaly.k,
        r.anomaly.distance.name(),
        r.anomaly.p_star,
        r.anomaly.validation_accuracy,
        r.anomaly.false_negatives,
        r.anomaly.false_positives
    );
    let stages: Vec<String> = r.stage_secs.iter().map(|(s, t)| format!("{s} {t:.2}s")).collect();
    println!("training {:.2}s: {}", r.total_secs, stages.join(", "));
}

fn evaluate(m: &PipelineModel, test: &LabeledDataset) -> Result<(MetricsReport, MetricsReport)> {
    let names = m.report_class_names();
    let mut attacks = m.attack_classes.clone();
    attacks.push(m.class_names.len());
    let to_model = |c: usize| m.class_names.iter().position(|n| *n == test.class_names[c]).unwrap_or(names.len() - 1);
    let truth: Vec<usize> = test.labels.iter().map(|&c| to_model(c)).collect();
    let verdicts = m.detect_matrix(&test.features, DetectOptions::default())?;
    let full: Vec<usize> = verdicts.iter().map(|v| m.verdict_label(v)).collect();
    let signature = m.signature_matrix(&test.features)?;
    Ok((
        compute_metrics(&full, &truth, &names, &attacks)?,
        compute_metrics(&signature, &truth, &names, &attacks)?,
    ))
}

pub fn train(data: &DataArgs, cfg: &RunConfig, model: &Path, holdout: bool, report: Option<&Path>) -> Result<()> {
    let d = data.load()?;
    let (train, test) = if holdout {
        let spec = SplitSpec { train_fraction: cfg.train_fraction, seed: cfg.pipeline.seed, stratified: true };
        let (a, b) = split_holdout(&d, &spec)?;
        (a, Some(b))
    } else {
        (d, None)
    };
    let (m, r) = train_pipeline(&train, &cfg.pipeline)?;
    print_train_report(&m, &r);
    save_pipeline(&m, model)?;
    println!("saved {} ({} bytes)", model.display(), std::fs::metadata(model).map_err(io_err(model))?.len());
    if let Some(test) = test {
        let (full, signature) = evaluate(&m, &test)?;
        println!("\nhold-out, signature tier only:\n{signature}");
        println!("hold-out, full detector:\n{full}");
        write_report(report, &full)?;
    }
    Ok(())
}

fn write_ledger(w: &mut impl Write, search: &str, outcome: &HpoOutcome) -> io::Result<()> {
    for t in outcome.ledger.trials() {
        let a: Vec<String> = t.assignment.iter().map(|(k, v)| format!("{k}={v}")).collect();
        writeln!(w, "{search},{},\"{}\",{},{}", t.index, a.join(";"), t.objective, t.failed)?;
    }
    Ok(())
}

pub fn tune(data: &DataArgs, cfg: &RunConfig, model: Option<&Path>, ledger: Option<&Path>) -> Result<()> {
    let d = data.load()?;
    let mut c = cfg.pipeline.clone();
    c.signature.tune = true;
    c.kpca.tune = true;
    c.anomaly.tune_p_star = true;
    let (m, r) = train_pipeline(&d, &c)?;
    print_train_report(&m, &r);
    for b in &r.signature.bases {
        if let Some(o) = &b.outcome {
            let a: Vec<String> = o.best.assignment.iter().map(|(k, v)| format!("{k}={v}")).collect();
            println!("{} best: {}", b.kind.name(), a.join(", "));
        }
    }
    if let Some(p) = ledger {
        let mut w = create(p)?;
        let e = io_err(p);
        writeln!(w, "search,index,assignment,objective,failed").map_err(&e)?;
        for b in &r.signature.bases {
            if let Some(o) = &b.outcome {
                write_ledger(&mut w, b.kind.name(), o).map_err(&e)?;
            }
        }
        for (name, o) in [
            ("kpca", &r.kpca_outcome),
            ("clusters", &r.anomaly.cluster_outcome),
            ("p_star", &r.anomaly.p_star_outcome),
        ] {
            if let Some(o) = o {
                write_ledger(&mut w, name, o).map_err(&e)?;
            }
        }
        w.flush().map_err(&e)?;
        println!("wrote {}", p.display());
    }
    if let Some(p) = model {
        save_pipeline(&m, p)?;
        println!("saved {}", p.display());
    }
    Ok(())
}

/// Column of every model feature in `header`.
fn feature_columns(m: &PipelineModel, header: &csv::StringRecord) -> Result<Vec<usize>> {
    let names: Vec<&str> = header.iter().map(str::trim).collect();
    m.feature_names()
        .iter()
        .map(|f| {
            names
                .iter()
                .position(|h| h == f)
                .ok_or_else(|| Error::Data(format!("input has no column {f:?}")))
        })
        .collect()
}

pub fn detect(model: &Path, input: &Path, out: Option<&Path>, use_biased: bool) -> Result<()> {
    let m = load_pipeline(model)?;
    let file = File::open(input).map_err(io_err(input))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let csv_err = |e: csv::Error| Error::Parse {
        line: e.position().map_or(0, |p| p.line()),
        message: e.to_string(),
    };
    let cols = feature_columns(&m, reader.headers().map_err(csv_err)?)?;
    let mut w: Box<dyn Write> = match out {
        Some(p) => Box::new(create(p)?),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    };
    let out_err = |e: io::Error| match out {
        Some(p) => Error::Io { path: p.to_path_buf(), source: e },
        None => Error::Io { path: PathBuf::from("<stdout>"), source: e },
    };
    writeln!(w, "index,kind,class,confidence,tiers").map_err(out_err)?;
    let opts = DetectOptions { use_biased };
    let mut row = vec![0.0; cols.len()];
    let mut counts = [0usize; 3];
    for (index, rec) in reader.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        for (slot, (&c, j)) in row.iter_mut().zip(cols.iter().zip(0..)) {
            let cell = rec.get(c).unwrap_or("").trim();
            let v = parse_flow_cell(cell).ok_or_else(|| Error::Parse {
                line: index as u64 + 2,
                message: format!("column {:?}: not a number: {cell:?}", m.feature_names()[j]),
            })?;
            // non-finite cells fall back to the training mean
            *slot = if v.is_finite() { v } else { m.scaler.means[j] };
        }
        let v = m.detect_with(&row, opts)?;
        let (kind, class) = match v.kind {
            VerdictKind::Known(c) => {
                counts[0] += 1;
                ("known", m.class_names[c].as_str())
            }
            VerdictKind::UnknownAttack => {
                counts[1] += 1;
                ("unknown", "-")
            }
            VerdictKind::Normal => {
                counts[2] += 1;
                ("normal", "-")
            }
        };
        writeln!(w, "{index},{kind},{class},{:.6},{}", v.confidence, v.trace_string()).map_err(out_err)?;
    }
    w.flush().map_err(out_err)?;
    log::info!("{} known attacks, {} unknown attacks, {} normal", counts[0], counts[1], counts[2]);
    Ok(())
}

pub fn zero_day(data: &DataArgs, cfg: &RunConfig, attacks: &[String], report: Option<&Path>) -> Result<()> {
    let d = data.load()?;
    let targets: Vec<String> = if attacks.is_empty() {
        d.attack_classes.iter().map(|&c| d.class_names[c].clone()).collect()
    } else {
        attacks.to_vec()
    };
    for a in &targets {
        zero_day_split(&d, a, cfg.pipeline.seed)?;
    }
    let width = targets.iter().map(String::len).max().unwrap_or(6).max(6);
    println!(
        "{:width$} {:>7} {:>9} {:>9} {:>9} {:>12}",
        "attack", "rows", "DR", "FAR", "F1", "F1 clusters"
    );
    let mut lines = vec!["attack,validation_rows,dr,far,f1,ablation_dr,ablation_far,ablation_f1,train_secs".to_string()];
    let (mut full_f1, mut abl_f1) = (0.0, 0.0);
    for a in &targets {
        let z = zero_day_eval(&d, a, &cfg.pipeline)?;
        let rows = z.validation_attack_rows + z.validation_normal_rows;
        println!(
            "{a:width$} {rows:>7} {:>9.5} {:>9.5} {:>9.5} {:>12.5}",
            z.full.detection_rate, z.full.false_alarm_rate, z.full.f1, z.ablation.f1
        );
        lines.push(format!(
            "{a},{rows},{},{},{},{},{},{},{:.3}",
            z.full.detection_rate,
            z.full.false_alarm_rate,
            z.full.f1,
            z.ablation.detection_rate,
            z.ablation.false_alarm_rate,
            z.ablation.f1,
            z.train_secs
        ));
        full_f1 += z.full.f1;
        abl_f1 += z.ablation.f1;
    }
    let n = targets.len().max(1) as f64;
    println!("{:width$} {:>7} {:>9} {:>9} {:>9.5} {:>12.5}", "average", "", "", "", full_f1 / n, abl_f1 / n);
    if let Some(p) = report {
        let mut w = create(p)?;
        writeln!(w, "{}", lines.join("\n")).map_err(io_err(p))?;
        w.flush().map_err(io_err(p))?;
    }
    Ok(())
}

pub fn cv(data: &DataArgs, cfg: &RunConfig, folds: Option<usize>, report: Option<&Path>) -> Result<()> {
    let d = data.load()?;
    let r = cross_validate(&d, &cfg.pipeline, folds.unwrap_or(cfg.cv_folds))?;
    for (f, rep) in r.per_fold.iter().enumerate() {
        println!("fold {:>2}: F1 {:.5}  macro-F1 {:.5}  {:.2}s", f + 1, rep.f1, rep.macro_f1, rep.wall_time_secs);
    }
    println!("\n{}-fold average (mean train+validate {:.2}s):\n{}", r.folds, r.mean_fold_secs, r.average);
    write_report(report, &r.average)
}

pub fn bench(model: &Path, data: &DataArgs, cfg: &RunConfig, report: Option<&Path>) -> Result<()> {
    let m = load_pipeline(model)?;
    let d = data.load()?;
    let n = cfg.bench_rows.min(d.n_rows()).max(1);
    // evenly spaced rows so every class region is represented
    let rows: Vec<usize> = (0..n).map(|i| i * d.n_rows() / n).collect();
    if d.feature_names != m.feature_names() {
        return Err(Error::Data("input columns differ from the model's features".into()));
    }
    let x = d.features.select_rows(&rows);
    let b = bench_latency(&m, &x, cfg.bench_warmup, cfg.bench_repeats)?;
    print!("{b}");
    if let Some(p) = report {
        let mut w = create(p)?;
        let e = io_err(p);
        writeln!(w, "stage,mean_ms,p99_ms").map_err(&e)?;
        for (name, s) in b.stages().iter().chain(std::iter::once(&("total", b.total))) {
            writeln!(w, "{name},{},{}", s.mean_ms, s.p99_ms).map_err(&e)?;
        }
        writeln!(w, "model_bytes,{},", b.model_bytes).map_err(&e)?;
        w.flush().map_err(&e)?;
    }
    Ok(())
}

pub fn inspect(model: &Path) -> Result<()> {
    let m = load_pipeline(model)?;
    let bytes = std::fs::metadata(model).map_err(io_err(model))?.len();
    println!("{}: format version {}, {bytes} bytes", model.display(), m.version);
    println!("classes: {}", m.class_names.join(", "));
    println!("normal class: {}", m.class_names[m.normal_class]);
    println!("input features: {}", m.input_width());
    println!("selected ({}): {}", m.selection.selected.len(), m.selection.selected_names().join(", "));
    for (kind, base) in hybrid_ids::learners::LearnerKind::ALL.iter().zip(&m.stack.bases) {
        println!("base {:<14} {} trees", kind.name(), base.trees.len());
    }
    println!("meta learner: {} trees, best base {}", m.stack.meta.trees.len(), m.stack.best_base.name());
    println!("KPCA: {} kernel, {} components, {} reference rows", m.kpca.kernel.name(), m.kpca.p, m.kpca.training_rows.rows());
    let c = &m.anomaly.clusters;
    let attack_clusters = c.attack.iter().filter(|&&a| a).count();
    let uncertain = c.purity.iter().filter(|&&p| p < c.p_star).count();
    println!(
        "clusters: k = {}, {} distance, {attack_clusters} attack, {uncertain} below p* = {:.4}",
        c.kmeans.k,
        c.kmeans.distance.name(),
        c.p_star
    );
    println!(
        "biased classifiers ({}): B1 {}, B2 {}",
        m.anomaly.biased_kind.name(),
        m.anomaly.b1.as_ref().map_or("absent".to_string(), |b| format!("{} trees", b.trees.len())),
        m.anomaly.b2.as_ref().map_or("absent".to_string(), |b| format!("{} trees", b.trees.len()))
    );
    let (nodes, distances) = m.work_bound();
    println!("per-row work bound: {nodes} tree nodes, {distances} distance evaluations");
    Ok(())
}

pub fn synth(kind: &str, rows: usize, min_per_class: usize, seed: u64, out: &Path) -> Result<()> {
    match kind {
        "can" => {
            std::fs::create_dir_all(out).map_err(io_err(out))?;
            let frames = synth_can_frames(rows, seed);
            let attacks = ["DoS", "Fuzzy", "Gear", "RPM"];
            let mut args = Vec::new();
            for (n, attack) in attacks.iter().enumerate() {
                // each file carries one attack and a quarter of the normal traffic
                let part: Vec<_> = frames
                    .iter()
                    .enumerate()
                    .filter(|(i, (f, _))| f.label == *attack || (f.label == "Normal" && i % attacks.len() == n))
                    .map(|(_, fr)| fr.clone())
                    .collect();
                let path = out.join(format!("{attack}_dataset.csv"));
                write_flag_log(&path, &part)?;
                println!("wrote {} ({} frames)", path.display(), part.len());
                args.push(format!("--can {attack}={}", path.display()));
            }
            println!("load with: {}", args.join(" "));
        }
        "flows" => {
            let (header, body) = synth_flow_rows(rows, min_per_class, seed);
            write_raw_csv(out, &header, &body)?;
            println!("wrote {} ({} rows, label column {LABEL_COLUMN:?})", out.display(), body.len());
        }
        other => return Err(Error::InvalidArgument(format!("unknown synthetic kind {other:?} (can, flows)"))),
    }
    Ok(())
}
