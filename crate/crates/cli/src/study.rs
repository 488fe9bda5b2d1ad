use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use fcgan_core::data::{subsample, Dataset, Encoder};
use fcgan_core::metrics::evaluate;
use fcgan_core::networks::save_bundle;
use fcgan_core::training::{init_bundle, train};
use serde::{Deserialize, Serialize};

use crate::{
    create_dir, derive_seed, generate_dataset, input, load_config, load_table, manifest_path, resolve_schema, runtime,
    write_atomic, CliError, GlobalOpts, RunConfig, RunManifest,
};

#[derive(Debug, Clone, Default)]
pub struct StudyArgs {
    pub data: PathBuf,
    pub schema: Option<PathBuf>,
    pub factors: Option<Vec<f64>>,
    pub epochs: Option<u64>,
    pub inferences: Option<usize>,
    pub gen_rows: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Sample standard deviation; zero for a single value.
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Some(Self { mean, std })
    }
}

impl std::fmt::Display for MeanStd {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:.2} (±{:.1e})", self.mean, self.std)
    }
}

/// One column of the study table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub factor: f64,
    pub real_rows: usize,
    pub gen_rows: usize,
    /// Generated rows per real training row.
    pub ratio: f64,
    pub epochs: u64,
    pub batch_size: usize,
    pub train_minutes: f64,
    pub ks: Option<MeanStd>,
    pub dim_red: Option<MeanStd>,
    pub kendall: Option<MeanStd>,
    /// Polarization closeness error on the stack voltage, percent.
    pub pola_error: Option<MeanStd>,
    pub inferences: usize,
    pub bundle: Option<PathBuf>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    /// Rows of the full dataset every inference is compared against.
    pub reference_rows: usize,
    pub rows: Vec<StudyRow>,
}

/// `1`, `1/2`, `1/4`, … for unit fractions, else the decimal value.
pub fn factor_label(f: f64) -> String {
    let inv = 1.0 / f;
    if (inv - inv.round()).abs() < 1e-9 {
        match inv.round() as u64 {
            1 => "1".into(),
            n => format!("1/{n}"),
        }
    } else {
        format!("{f}")
    }
}

/// Three significant figures followed by `×`.
pub fn format_ratio(x: f64) -> String {
    if !x.is_finite() || x <= 0.0 {
        return "n/a".into();
    }
    let decimals = (2 - x.log10().floor() as i32).max(0) as usize;
    format!("{x:.decimals$}×")
}

fn thousands(n: usize) -> String {
    let s = n.to_string();
    let mut out = String::new();
    for (i, c) in s.chars().enumerate() {
        if i > 0 && (s.len() - i) % 3 == 0 {
            out.push(',');
        }
        out.push(c);
    }
    out
}

impl StudyReport {
    /// Factors as columns and quantities as rows.
    pub fn table(&self) -> String {
        let cell = |o: &Option<MeanStd>| o.map_or("failed".into(), |m| m.to_string());
        let mut lines: Vec<(String, Vec<String>)> = vec![
            ("Data acquisition factor".into(), self.rows.iter().map(|r| format!("f={}", factor_label(r.factor))).collect()),
            ("Real data (1)".into(), self.rows.iter().map(|r| thousands(r.real_rows)).collect()),
            ("Generated data (2)".into(), self.rows.iter().map(|r| thousands(r.gen_rows)).collect()),
            ("Ratio (2) / (1)".into(), self.rows.iter().map(|r| format_ratio(r.ratio)).collect()),
            ("Epochs".into(), self.rows.iter().map(|r| thousands(r.epochs as usize)).collect()),
            ("Batch size".into(), self.rows.iter().map(|r| r.batch_size.to_string()).collect()),
            ("Training time (min)".into(), self.rows.iter().map(|r| format!("{:.1}", r.train_minutes)).collect()),
            ("KS score".into(), self.rows.iter().map(|r| cell(&r.ks)).collect()),
            ("Dim red score".into(), self.rows.iter().map(|r| cell(&r.dim_red)).collect()),
            ("Kendall score".into(), self.rows.iter().map(|r| cell(&r.kendall)).collect()),
            ("Pola error (%)".into(), self.rows.iter().map(|r| cell(&r.pola_error)).collect()),
        ];
        for r in &self.rows {
            if let Some(e) = &r.error {
                lines.push((format!("Error (f={})", factor_label(r.factor)), vec![e.clone()]));
            }
        }
        let label_w = lines.iter().map(|(l, _)| l.chars().count()).max().unwrap_or(0);
        let col_w = lines.iter().flat_map(|(_, c)| c.iter().map(|s| s.chars().count())).max().unwrap_or(0);
        let mut out = String::new();
        for (label, cells) in &lines {
            let _ = write!(out, "{label:<label_w$}");
            for c in cells {
                let _ = write!(out, "  {c:>col_w$}");
            }
            out.push('\n');
        }
        let _ = writeln!(
            out,
            "Scores are means (± sample std) over {} inferences, each compared with the full {}-row dataset.",
            self.rows.first().map_or(0, |r| r.inferences),
            thousands(self.reference_rows)
        );
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record([
            "factor", "real_rows", "gen_rows", "ratio", "epochs", "batch_size", "train_minutes", "ks_mean", "ks_std",
            "dim_red_mean", "dim_red_std", "kendall_mean", "kendall_std", "pola_error_mean", "pola_error_std",
            "inferences", "error",
        ])?;
        let pair = |m: &Option<MeanStd>| m.map_or([String::new(), String::new()], |m| [m.mean.to_string(), m.std.to_string()]);
        for r in &self.rows {
            let mut rec = vec![
                r.factor.to_string(),
                r.real_rows.to_string(),
                r.gen_rows.to_string(),
                r.ratio.to_string(),
                r.epochs.to_string(),
                r.batch_size.to_string(),
                r.train_minutes.to_string(),
            ];
            for m in [&r.ks, &r.dim_red, &r.kendall, &r.pola_error] {
                rec.extend(pair(m));
            }
            rec.push(r.inferences.to_string());
            rec.push(r.error.clone().unwrap_or_default());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::Runtime(format!("{}: {e}", path.display()))
}

struct Scores {
    ks: Vec<f64>,
    dim_red: Vec<f64>,
    kendall: Vec<f64>,
    pola: Vec<f64>,
}

fn run_factor(index: usize, factor: f64, full: &Dataset, cfg: &RunConfig, master: u64, dir: &Path) -> StudyRow {
    let mut row = StudyRow {
        factor,
        real_rows: 0,
        gen_rows: cfg.study.gen_rows,
        ratio: f64::NAN,
        epochs: cfg.train.epochs,
        batch_size: cfg.train.batch_size,
        train_minutes: 0.0,
        ks: None,
        dim_red: None,
        kendall: None,
        pola_error: None,
        inferences: 0,
        bundle: None,
        error: None,
    };
    let seed = derive_seed(master, index as u64 + 1);
    let mut scores = Scores { ks: Vec::new(), dim_red: Vec::new(), kendall: Vec::new(), pola: Vec::new() };
    let outcome = (|| -> Result<(), String> {
        let sub = subsample(full, factor, &cfg.study.stratify, seed).map_err(|e| e.to_string())?;
        row.real_rows = sub.n_rows();
        row.ratio = cfg.study.gen_rows as f64 / sub.n_rows() as f64;
        let enc = Encoder::fit(&sub).map_err(|e| e.to_string())?;
        let real = enc.encode(&sub).map_err(|e| e.to_string())?;
        let tcfg = fcgan_core::training::TrainConfig { seed, ..cfg.train.clone() };
        let bundle = init_bundle(&enc, &tcfg).map_err(|e| e.to_string())?;
        let start = Instant::now();
        let (bundle, _) = train(bundle, &real, &tcfg, &mut |_, _| Ok(())).map_err(|e| e.to_string())?;
        row.train_minutes = start.elapsed().as_secs_f64() / 60.0;
        let path = dir.join(format!("model_f{}.fcgan", factor_label(factor).replace('/', "-")));
        save_bundle(&bundle, &path).map_err(|e| e.to_string())?;
        row.bundle = Some(path);
        log::info!("f={}: trained in {:.1} min", factor_label(factor), row.train_minutes);
        for j in 0..cfg.study.inferences {
            let gen = generate_dataset(&bundle, cfg.study.gen_rows, derive_seed(seed, j as u64 + 1)).map_err(|e| e.to_string())?;
            let ev = evaluate(full, &gen).map_err(|e| e.to_string())?;
            scores.ks.push(ev.report.s_ks);
            scores.dim_red.push(ev.report.s_dim);
            scores.kendall.push(ev.report.s_kendall);
            if let Some(e) = ev.report.e_v {
                scores.pola.push(e);
            }
            row.inferences += 1;
        }
        Ok(())
    })();
    row.ks = MeanStd::of(&scores.ks);
    row.dim_red = MeanStd::of(&scores.dim_red);
    row.kendall = MeanStd::of(&scores.kendall);
    row.pola_error = MeanStd::of(&scores.pola);
    if let Err(e) = outcome {
        log::error!("f={}: {e}", factor_label(factor));
        row.error = Some(e);
    }
    row
}

/// For each factor: subsample, train, then generate and evaluate against
/// the full dataset repeatedly. A failing factor is recorded in its column
/// and the study moves on. `--threads` runs factors concurrently; seeds are
/// derived per factor, so results do not depend on the schedule.
pub fn cmd_study(g: &GlobalOpts, args: &StudyArgs, out_dir: &Path) -> Result<StudyReport, CliError> {
    let mut cfg = load_config(g)?;
    if let Some(f) = &args.factors {
        cfg.study.factors = f.clone();
    }
    if let Some(e) = args.epochs {
        cfg.train.epochs = e;
    }
    if let Some(n) = args.inferences {
        cfg.study.inferences = n;
    }
    if let Some(n) = args.gen_rows {
        cfg.study.gen_rows = n;
    }
    if cfg.study.factors.is_empty() {
        return Err(CliError::Input("no acquisition factors given".into()));
    }
    if let Some(f) = cfg.study.factors.iter().find(|f| !(**f > 0.0 && **f <= 1.0)) {
        return Err(CliError::Input(format!("factor {f} outside (0, 1]")));
    }
    if cfg.study.inferences == 0 {
        return Err(CliError::Input("need at least one inference".into()));
    }
    cfg.train.validate().map_err(input)?;
    let master = cfg.train.seed;
    let mut manifest = RunManifest::start("study", &cfg, master);

    let schema = resolve_schema(args.schema.as_deref(), &args.data)?;
    let full = load_table(&schema, &args.data, g.strict_ranges)?;
    if full.schema().column(&cfg.study.stratify).is_none() {
        return Err(CliError::Input(format!("stratify column `{}` is not in the schema", cfg.study.stratify)));
    }
    create_dir(out_dir)?;

    let factors = &cfg.study.factors;
    let slots: Mutex<Vec<Option<StudyRow>>> = Mutex::new(vec![None; factors.len()]);
    let next = AtomicUsize::new(0);
    let workers = g.threads.clamp(1, factors.len());
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::SeqCst);
                if k >= factors.len() {
                    break;
                }
                let row = run_factor(k, factors[k], &full, &cfg, master, out_dir);
                slots.lock().expect("no worker panicked")[k] = Some(row);
            });
        }
    });
    let rows = slots.into_inner().expect("no worker panicked").into_iter().map(|r| r.expect("every factor ran")).collect();
    let report = StudyReport { reference_rows: full.n_rows(), rows };

    let table = report.table();
    print!("{table}");
    let txt = out_dir.join("study.txt");
    let json = out_dir.join("study.json");
    let csv = out_dir.join("study.csv");
    write_atomic(&txt, table.as_bytes()).map_err(|e| io_error(&txt, e))?;
    let body = serde_json::to_string_pretty(&report).expect("report serializes");
    write_atomic(&json, body.as_bytes()).map_err(|e| io_error(&json, e))?;
    report.write_csv(&csv).map_err(runtime)?;

    manifest.inputs = vec![args.data.clone()];
    manifest.outputs = vec![out_dir.into()];
    manifest.finish(&manifest_path(out_dir, true))?;
    Ok(report)
}
