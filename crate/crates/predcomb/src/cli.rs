//! Command-line front end: `synth`, `diffuse`, `eval`, and `train`
//! subcommands over the file formats in [`crate::fileio`].
//!
//! Exit codes are a stable contract: 0 success, 2 I/O failure, 3 config
//! parse failure, 4 validation or shape failure.

use std::path::{Path, PathBuf};

use crate::fileio::{
    read_config, read_features, read_index_pairs, read_predictions, write_bytes_atomic,
    write_predictions, FileError,
};
use crate::joint::{
    run_joint_diffusion, tune_hyperparameters, DiffusionConfig, ProblemInstance, ReferenceTask,
    TuneGrid,
};
use crate::manifold::PredictionVector;
use crate::rank::{ranking_accuracy, train_linear_ranker, RankPairs, DEFAULT_LAMBDA_GRID};
use crate::report::format_f64;
use crate::synth::{run_toy_experiment, ToyConfig};

pub const EXIT_IO: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;
pub const EXIT_VALIDATION: i32 = 4;

struct CliError {
    code: i32,
    message: String,
}

type CliResult<T> = Result<T, CliError>;

fn fail<T>(code: i32, message: impl Into<String>) -> CliResult<T> {
    Err(CliError {
        code,
        message: message.into(),
    })
}

/// I/O problems exit 2; parse problems exit with the given code (3 for
/// configs, 4 for data files).
fn map_file_err(err: FileError, parse_code: i32) -> CliError {
    let code = match &err {
        FileError::Io { .. } => EXIT_IO,
        FileError::Parse { .. } => parse_code,
    };
    CliError {
        code,
        message: err.to_string(),
    }
}

fn map_lib_err(err: crate::Error, context: &str) -> CliError {
    CliError {
        code: EXIT_VALIDATION,
        message: format!("{context}: {err}"),
    }
}

/// Parsed long-form flags, in order of appearance.
struct Flags {
    values: Vec<(String, String)>,
    switches: Vec<String>,
}

impl Flags {
    fn parse(args: &[String], value_flags: &[&str], switch_flags: &[&str]) -> CliResult<Self> {
        let mut values = Vec::new();
        let mut switches = Vec::new();
        let mut it = args.iter();
        while let Some(arg) = it.next() {
            let name = match arg.strip_prefix("--") {
                Some(n) if !n.is_empty() => n,
                _ => return fail(EXIT_VALIDATION, format!("unexpected argument {arg:?}")),
            };
            if switch_flags.contains(&name) {
                switches.push(name.to_string());
            } else if value_flags.contains(&name) {
                match it.next() {
                    Some(v) => values.push((name.to_string(), v.clone())),
                    None => return fail(EXIT_VALIDATION, format!("--{name} requires a value")),
                }
            } else {
                return fail(EXIT_VALIDATION, format!("unknown flag --{name}"));
            }
        }
        Ok(Self { values, switches })
    }

    fn get(&self, name: &str) -> Option<&str> {
        self.values
            .iter()
            .rev()
            .find(|(k, _)| k == name)
            .map(|(_, v)| v.as_str())
    }

    fn require(&self, name: &str) -> CliResult<&str> {
        self.get(name)
            .ok_or(())
            .or_else(|_| fail(EXIT_VALIDATION, format!("missing required flag --{name}")))
    }

    fn get_all(&self, name: &str) -> Vec<&str> {
        self.values
            .iter()
            .filter(|(k, _)| k == name)
            .map(|(_, v)| v.as_str())
            .collect()
    }

    fn has_switch(&self, name: &str) -> bool {
        self.switches.iter().any(|s| s == name)
    }
}

/// Runs the CLI on the given arguments (program name excluded) and returns
/// the process exit code.
pub fn run(args: Vec<String>) -> i32 {
    let result = match args.first().map(String::as_str) {
        Some("synth") => cmd_synth(&args[1..]),
        Some("diffuse") => cmd_diffuse(&args[1..]),
        Some("eval") => cmd_eval(&args[1..]),
        Some("train") => cmd_train(&args[1..]),
        Some(other) => fail(EXIT_VALIDATION, format!("unknown subcommand {other:?}")),
        None => fail(
            EXIT_VALIDATION,
            "usage: predcomb <synth|diffuse|eval|train> [flags]",
        ),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

fn cmd_synth(args: &[String]) -> CliResult<()> {
    let flags = Flags::parse(args, &["seed", "out-dir"], &["heatmap"])?;
    let seed: u64 = match flags.get("seed") {
        Some(s) => s
            .parse()
            .or_else(|_| fail(EXIT_VALIDATION, format!("invalid --seed {s:?}")))?,
        None => 0,
    };
    let out_dir = PathBuf::from(flags.require("out-dir")?);
    std::fs::create_dir_all(&out_dir).map_err(|e| CliError {
        code: EXIT_IO,
        message: format!("{}: {e}", out_dir.display()),
    })?;

    let cfg = ToyConfig {
        seed,
        ..Default::default()
    };
    let result = run_toy_experiment(&cfg, None).map_err(|e| map_lib_err(e, "synth"))?;

    for (name, report) in [
        ("gt", &result.ground_truth),
        ("initial", &result.initial),
        ("refined", &result.refined),
    ] {
        let csv = out_dir.join(format!("{name}.csv"));
        write_bytes_atomic(&csv, report.to_csv().as_bytes())
            .map_err(|e| map_file_err(e, EXIT_IO))?;
        if flags.has_switch("heatmap") {
            let pgm = out_dir.join(format!("{name}.pgm"));
            write_bytes_atomic(&pgm, &report.to_pgm()).map_err(|e| map_file_err(e, EXIT_IO))?;
        }
    }
    Ok(())
}

fn read_rank_pairs(path: &Path, n: usize) -> CliResult<RankPairs> {
    let pairs = read_index_pairs(path).map_err(|e| map_file_err(e, EXIT_VALIDATION))?;
    RankPairs::new(pairs, n).map_err(|e| map_lib_err(e, &path.display().to_string()))
}

fn cmd_diffuse(args: &[String]) -> CliResult<()> {
    let flags = Flags::parse(
        args,
        &[
            "main-pred",
            "main-feat",
            "ref-pred",
            "ref-feat",
            "couple",
            "val-pairs",
            "config",
            "out",
        ],
        &["auto-tune"],
    )?;

    let main_pred_path = PathBuf::from(flags.require("main-pred")?);
    let main_feat_path = PathBuf::from(flags.require("main-feat")?);
    let val_pairs_path = PathBuf::from(flags.require("val-pairs")?);
    let out_path = PathBuf::from(flags.require("out")?);

    let ref_preds = flags.get_all("ref-pred");
    let ref_feats = flags.get_all("ref-feat");
    let couples = flags.get_all("couple");
    if ref_preds.is_empty() {
        return fail(EXIT_VALIDATION, "at least one reference required");
    }
    if ref_preds.len() != ref_feats.len() || ref_preds.len() != couples.len() {
        return fail(
            EXIT_VALIDATION,
            "each reference requires --ref-pred, --ref-feat and --couple",
        );
    }

    let main_pred =
        read_predictions(&main_pred_path).map_err(|e| map_file_err(e, EXIT_VALIDATION))?;
    let main_feat = read_features(&main_feat_path).map_err(|e| map_file_err(e, EXIT_VALIDATION))?;
    let n_main = main_pred.len();
    if main_feat.nrows() != n_main {
        return fail(
            EXIT_VALIDATION,
            format!(
                "{}: expected {n_main} rows to match {}, found {}",
                main_feat_path.display(),
                main_pred_path.display(),
                main_feat.nrows()
            ),
        );
    }

    let mut refs = Vec::new();
    for ((pred_path, feat_path), couple_path) in
        ref_preds.iter().zip(&ref_feats).zip(&couples)
    {
        let pred_path = PathBuf::from(pred_path);
        let feat_path = PathBuf::from(feat_path);
        let couple_path = PathBuf::from(couple_path);
        let pred = read_predictions(&pred_path).map_err(|e| map_file_err(e, EXIT_VALIDATION))?;
        let feat = read_features(&feat_path).map_err(|e| map_file_err(e, EXIT_VALIDATION))?;
        if feat.nrows() != pred.len() {
            return fail(
                EXIT_VALIDATION,
                format!(
                    "{}: expected {} rows to match {}, found {}",
                    feat_path.display(),
                    pred.len(),
                    pred_path.display(),
                    feat.nrows()
                ),
            );
        }
        let pairs = read_index_pairs(&couple_path).map_err(|e| map_file_err(e, EXIT_VALIDATION))?;
        let coupling = crate::bridge::CouplingLabels::new(pairs, n_main, pred.len())
            .map_err(|e| map_lib_err(e, &couple_path.display().to_string()))?;
        refs.push(ReferenceTask {
            features: feat,
            predictions: PredictionVector::new(pred)
                .map_err(|e| map_lib_err(e, &pred_path.display().to_string()))?,
            coupling,
        });
    }

    let val_pairs = read_rank_pairs(&val_pairs_path, n_main)?;
    if val_pairs.is_empty() {
        return fail(
            EXIT_VALIDATION,
            format!("{}: empty pairs file", val_pairs_path.display()),
        );
    }

    let inst = ProblemInstance {
        main_features: main_feat,
        main_predictions: PredictionVector::new(main_pred)
            .map_err(|e| map_lib_err(e, &main_pred_path.display().to_string()))?,
        validation_pairs: val_pairs,
        refs,
    };

    let mut cfg = DiffusionConfig::default();
    if let Some(cfg_path) = flags.get("config") {
        cfg = read_config(Path::new(cfg_path), &cfg).map_err(|e| map_file_err(e, EXIT_CONFIG))?;
    }
    if flags.has_switch("auto-tune") {
        cfg = tune_hyperparameters(&inst, &TuneGrid::default_for(&inst), &cfg)
            .map_err(|e| map_lib_err(e, "auto-tune"))?;
    }

    let (refined, _state) =
        run_joint_diffusion(&inst, &cfg).map_err(|e| map_lib_err(e, "diffuse"))?;
    let accuracy = ranking_accuracy(refined.values(), &inst.validation_pairs)
        .map_err(|e| map_lib_err(e, "diffuse"))?;
    write_predictions(&out_path, refined.values()).map_err(|e| map_file_err(e, EXIT_IO))?;
    println!("accuracy={}", format_f64(accuracy));
    Ok(())
}

fn cmd_eval(args: &[String]) -> CliResult<()> {
    let flags = Flags::parse(args, &["pred", "pairs"], &[])?;
    let pred_path = PathBuf::from(flags.require("pred")?);
    let pairs_path = PathBuf::from(flags.require("pairs")?);

    let pred = read_predictions(&pred_path).map_err(|e| map_file_err(e, EXIT_VALIDATION))?;
    let pairs = read_rank_pairs(&pairs_path, pred.len())?;
    if pairs.is_empty() {
        return fail(
            EXIT_VALIDATION,
            format!("{}: empty pairs file", pairs_path.display()),
        );
    }
    let accuracy = ranking_accuracy(&pred, &pairs).map_err(|e| map_lib_err(e, "eval"))?;
    println!("accuracy={}", format_f64(accuracy));
    Ok(())
}

fn cmd_train(args: &[String]) -> CliResult<()> {
    let flags = Flags::parse(args, &["feat", "pairs", "val-pairs", "out"], &[])?;
    let feat_path = PathBuf::from(flags.require("feat")?);
    let pairs_path = PathBuf::from(flags.require("pairs")?);
    let out_path = PathBuf::from(flags.require("out")?);

    let feat = read_features(&feat_path).map_err(|e| map_file_err(e, EXIT_VALIDATION))?;
    let pairs = read_rank_pairs(&pairs_path, feat.nrows())?;
    if pairs.is_empty() {
        return fail(
            EXIT_VALIDATION,
            format!("{}: empty pairs file", pairs_path.display()),
        );
    }
    let val_pairs = match flags.get("val-pairs") {
        Some(p) => Some(read_rank_pairs(Path::new(p), feat.nrows())?),
        None => None,
    };

    let ranker = train_linear_ranker(&feat, &pairs, &DEFAULT_LAMBDA_GRID, val_pairs.as_ref())
        .map_err(|e| map_lib_err(e, "train"))?;
    write_predictions(&out_path, &ranker.predict(&feat))
        .map_err(|e| map_file_err(e, EXIT_IO))?;
    Ok(())
}
