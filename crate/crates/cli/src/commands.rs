use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use tse_core::dataset::{self, LabeledDataset, TemplateSet};
use tse_core::eval::{self, summarize_splits, ScoreMode};
use tse_core::pipeline::{self, ExperimentConfig};
use tse_core::{
    generate_clusters, pca_init, train_tde, train_tse, EmbeddingMatrix, SynthConfig, TrainReport,
};

use crate::args::{
    Command, Embedding, Hyper, IdentifyArgs, Inputs, PcaArgs, PipelineArgs, SynthArgs, TrainArgs,
    VerifyArgs,
};
use crate::manifest::{beside, write_file, RunManifest};
use crate::CliError;

type Result<T> = std::result::Result<T, CliError>;

pub fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Synth(a) => synth(&a),
        Command::Pca(a) => pca(&a),
        Command::TrainTse(a) => train(&a, "train-tse"),
        Command::TrainTde(a) => train(&a, "train-tde"),
        Command::EvalVerify(a) => verify(&a),
        Command::EvalIdentify(a) => identify(&a),
        Command::Pipeline(a) => run_pipeline(&a),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|source| CliError::Io {
        path: dir.to_path_buf(),
        source,
    })
}

fn load_inputs(inputs: &Inputs) -> Result<LabeledDataset> {
    Ok(dataset::load_dataset(
        &inputs.features,
        &inputs.labels,
        inputs.format.into(),
    )?)
}

fn record_inputs(m: &mut RunManifest, inputs: &Inputs) {
    m.path("features", &inputs.features)
        .path("labels", &inputs.labels)
        .set("format", inputs.format.name());
}

fn record_hyper(m: &mut RunManifest, h: &Hyper) {
    m.set("alpha", h.alpha)
        .set("eta", h.eta)
        .set("dout", h.dout)
        .set("iters", h.iters)
        .set("pool", h.pool)
        .set(
            "eta_decay",
            h.eta_decay.map_or("-".to_owned(), |f| f.to_string()),
        )
        .set(
            "eta_decay_every",
            h.eta_decay_every.map_or("-".to_owned(), |n| n.to_string()),
        );
}

fn trace_csv(report: &TrainReport) -> String {
    let mut out = String::from("iteration,mean_loss\n");
    for (it, loss) in &report.loss_trace {
        writeln!(out, "{it},{loss}").unwrap();
    }
    out
}

fn emit(text: &str, report: Option<&Path>) -> Result<()> {
    match report {
        Some(path) => write_file(path, text.as_bytes()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn synth(a: &SynthArgs) -> Result<()> {
    let cfg = SynthConfig {
        num_classes: a.classes,
        samples_per_class: a.per_class,
        dim: a.dim,
        noise_sigma: a.sigma,
        seed: a.seed,
    };
    let ds = generate_clusters(&cfg)?;
    create_dir(&a.out)?;
    let features = a.out.join(format!("features.{}", a.format.extension()));
    let labels = a.out.join("labels.txt");
    dataset::save_dataset(&ds, &features, &labels, a.format.into())?;

    let mut m = RunManifest::new("synth");
    m.set("classes", a.classes)
        .set("per_class", a.per_class)
        .set("dim", a.dim)
        .set("sigma", a.sigma)
        .set("seed", a.seed)
        .set("format", a.format.name())
        .path("out", &a.out)
        .path("features", &features)
        .path("labels", &labels);
    m.write(&a.out.join("manifest.txt"))?;
    println!(
        "wrote {} rows of dimension {} to {}",
        ds.len(),
        ds.dim(),
        a.out.display()
    );
    Ok(())
}

fn pca(a: &PcaArgs) -> Result<()> {
    let ds = match &a.labels {
        Some(labels) => dataset::load_dataset(&a.features, labels, a.format.into())?,
        None => {
            let fm = dataset::load_features(&a.features, a.format.into())?;
            LabeledDataset::new(fm.dim, fm.data, vec![0; fm.rows])?
        }
    };
    let w = pca_init(&ds, a.dout)?;
    dataset::save_matrix(&w, &a.out)?;

    let mut m = RunManifest::new("pca");
    m.path("features", &a.features)
        .opt_path("labels", a.labels.as_deref())
        .set("format", a.format.name())
        .set("dout", a.dout)
        .path("out", &a.out);
    m.write(&beside(&a.out))?;
    println!(
        "wrote {}x{} matrix to {}",
        w.d_out(),
        w.d_in(),
        a.out.display()
    );
    Ok(())
}

fn train(a: &TrainArgs, name: &str) -> Result<()> {
    let cfg = a.hyper.config(a.seed);
    cfg.validate()?;
    let ds = load_inputs(&a.inputs)?;
    let (w, report) = if name == "train-tse" {
        train_tse(&ds, &cfg)?
    } else {
        train_tde(&ds, &cfg)?
    };
    dataset::save_matrix(&w, &a.out)?;
    if let Some(trace) = &a.trace {
        write_file(trace, trace_csv(&report).as_bytes())?;
    }

    let mut m = RunManifest::new(name);
    record_inputs(&mut m, &a.inputs);
    record_hyper(&mut m, &a.hyper);
    m.set("seed", a.seed)
        .path("out", &a.out)
        .opt_path("trace", a.trace.as_deref())
        .set("iterations", report.iterations_run)
        .set("updates", report.violations_updated);
    m.write(&beside(&a.out))?;
    println!(
        "iterations={} updates={} matrix={}x{}",
        report.iterations_run,
        report.violations_updated,
        w.d_out(),
        w.d_in()
    );
    Ok(())
}

fn load_embedding(
    e: &Embedding,
    ds: &LabeledDataset,
    m: &mut RunManifest,
) -> Result<EmbeddingMatrix> {
    match &e.matrix {
        Some(path) => {
            m.path("matrix", path);
            Ok(dataset::load_matrix(path)?)
        }
        None => {
            m.set("matrix", "raw");
            Ok(EmbeddingMatrix::identity(ds.dim()))
        }
    }
}

fn load_template_map(path: Option<&Path>, ds: &LabeledDataset) -> Result<TemplateSet> {
    Ok(match path {
        Some(p) => dataset::load_templates(p)?,
        None => TemplateSet::singletons(ds),
    })
}

/// `roc.csv` becomes `roc.cosine.csv` when several modes are written.
fn roc_path(base: &Path, mode: ScoreMode, several: bool) -> PathBuf {
    if !several {
        return base.to_path_buf();
    }
    let stem = base.file_stem().unwrap_or_default().to_string_lossy();
    let name = match base.extension() {
        Some(ext) => format!("{stem}.{mode}.{}", ext.to_string_lossy()),
        None => format!("{stem}.{mode}"),
    };
    base.with_file_name(name)
}

fn verify(a: &VerifyArgs) -> Result<()> {
    let mut m = RunManifest::new("eval-verify");
    let ds = load_inputs(&a.inputs)?;
    record_inputs(&mut m, &a.inputs);
    let w = load_embedding(&a.embedding, &ds, &mut m)?;
    let templates = load_template_map(a.templates.as_deref(), &ds)?;
    m.opt_path("templates", a.templates.as_deref());

    let protocols = match &a.pairs {
        Some(p) => vec![(p.clone(), dataset::load_protocol(p)?)],
        None => a
            .splits
            .iter()
            .map(|p| Ok((p.clone(), dataset::load_protocol(p)?)))
            .collect::<Result<Vec<_>>>()?,
    };
    for (i, (p, _)) in protocols.iter().enumerate() {
        m.path(&format!("protocol_{i}"), p);
    }

    let modes = a.mode.modes();
    let mut text = String::new();
    for &mode in &modes {
        if a.pairs.is_some() {
            let (report, curve) = eval::verify(&w, &protocols[0].1, &templates, &ds, mode)?;
            text.push_str(&report.to_text());
            if let Some(base) = &a.roc {
                let path = roc_path(base, mode, modes.len() > 1);
                write_file(&path, eval::roc_csv(&curve).as_bytes())?;
                m.path(&format!("roc_{mode}"), &path);
            }
        } else {
            let reports = protocols
                .iter()
                .map(|(_, proto)| Ok(eval::verify(&w, proto, &templates, &ds, mode)?.0))
                .collect::<Result<Vec<_>>>()?;
            text.push_str(&summarize_splits(&reports));
        }
    }
    m.set("mode", a.mode.name())
        .opt_path("report", a.report.as_deref());
    emit(&text, a.report.as_deref())?;
    if let Some(anchor) = a.report.as_deref().or(a.roc.as_deref()) {
        m.write(&beside(anchor))?;
    }
    Ok(())
}

fn identify(a: &IdentifyArgs) -> Result<()> {
    let mut m = RunManifest::new("eval-identify");
    let ds = load_inputs(&a.inputs)?;
    record_inputs(&mut m, &a.inputs);
    let w = load_embedding(&a.embedding, &ds, &mut m)?;
    let gallery = dataset::load_templates(&a.gallery)?;
    let probes = dataset::load_templates(&a.probes)?;
    if a.ranks.contains(&0) {
        return Err(CliError::Usage("--ranks values must be at least 1".into()));
    }

    let mut text = String::new();
    for mode in a.mode.modes() {
        let id = eval::identify(&w, &gallery, &probes, &ds, &a.ranks, mode)?;
        writeln!(text, "mode={mode}").unwrap();
        text.push_str(&id.to_text());
    }
    let ranks: Vec<String> = a.ranks.iter().map(usize::to_string).collect();
    m.path("gallery", &a.gallery)
        .path("probes", &a.probes)
        .set("mode", a.mode.name())
        .set("ranks", ranks.join(","))
        .opt_path("report", a.report.as_deref());
    emit(&text, a.report.as_deref())?;
    if let Some(report) = &a.report {
        m.write(&beside(report))?;
    }
    Ok(())
}

fn run_pipeline(a: &PipelineArgs) -> Result<()> {
    let modes = a.mode.modes();
    let cfg = ExperimentConfig {
        synth: SynthConfig {
            num_classes: a.classes,
            samples_per_class: a.per_class,
            dim: a.dim,
            noise_sigma: a.sigma,
            seed: a.data_seed,
        },
        holdout_per_class: a.holdout,
        train: a.hyper.config(a.seed),
        mode: modes[0],
        run_tde: !a.skip_tde,
    };
    cfg.synth.validate()?;
    cfg.train.validate()?;
    let result = pipeline::run_experiment(&cfg)?;

    let mut report = result.to_text();
    for &mode in &modes[1..] {
        let mut extra = vec![
            ("raw", EmbeddingMatrix::identity(result.dataset.dim())),
            ("tse", result.tse.matrix.clone()),
        ];
        if let Some(tde) = &result.tde {
            extra.push(("tde", tde.matrix.clone()));
        }
        for (name, w) in extra {
            let e = pipeline::evaluate(&w, &result.dataset, &result.split, mode)?;
            writeln!(report, "[{name}/{mode}]").unwrap();
            report.push_str(&e.verification.to_text());
            if let Some(id) = &e.identification {
                report.push_str(&id.to_text());
            }
            report.push('\n');
        }
    }

    let out = &a.out;
    create_dir(out)?;
    let path = |name: &str| out.join(name);
    dataset::save_dataset(
        &result.dataset,
        path("features.bin"),
        path("labels.txt"),
        Default::default(),
    )?;
    dataset::save_templates(&result.split.eval_templates, path("templates.txt"))?;
    dataset::save_protocol(&result.split.pairs, path("pairs.txt"))?;
    dataset::save_templates(&result.split.gallery, path("gallery.txt"))?;
    dataset::save_templates(&result.split.probes, path("probes.txt"))?;
    dataset::save_matrix(&result.tse.matrix, path("tse.bin"))?;
    write_file(
        &path("trace_tse.csv"),
        trace_csv(&result.tse.report).as_bytes(),
    )?;
    if let Some(tde) = &result.tde {
        dataset::save_matrix(&tde.matrix, path("tde.bin"))?;
        write_file(&path("trace_tde.csv"), trace_csv(&tde.report).as_bytes())?;
    }
    write_file(&path("report.txt"), report.as_bytes())?;

    let mut m = RunManifest::new("pipeline");
    m.set("classes", a.classes)
        .set("per_class", a.per_class)
        .set("dim", a.dim)
        .set("sigma", a.sigma)
        .set("data_seed", a.data_seed)
        .set("seed", a.seed)
        .set("holdout", a.holdout);
    record_hyper(&mut m, &a.hyper);
    m.set("mode", a.mode.name())
        .set("skip_tde", a.skip_tde)
        .path("out", out);
    m.write(&path("manifest.txt"))?;
    print!("{report}");
    Ok(())
}
