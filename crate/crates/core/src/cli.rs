//! The `lvsp` commands as library functions.
//!
//! Each command returns its exit status and output instead of printing, so
//! the binary stays a thin argument parser and tests can drive commands
//! directly. Exit codes: 0 success, 1 domain failure, 2 I/O or syntax
//! failure.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use rayon::prelude::*;
use serde_json::{json, Value as Json};

use crate::deduction::{Chart, Description, LoopConfig};
use crate::derivation::{flatten, string_value, tree_value};
use crate::error::Error;
use crate::grammar::{
    enumerate_derivations, parse_grammar_source, GrammarSource, RuleId, WeightedCfg,
};
use crate::outside::expected_rule_counts;
use crate::semiring::{
    Boolean, Counting, Log, Probability, Semiring, SemiringKind, Viterbi, ViterbiDerivation,
};
use crate::tensor::{approx_eq, tensor_add, zero_tensor, Shape, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Check,
    Parse,
    InsideOutside,
    Oracle,
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub command: Command,
    pub grammar_path: PathBuf,
    pub semiring: String,
    pub sentence: Option<String>,
    pub input: Option<PathBuf>,
    pub tolerance: f64,
    pub max_generations: usize,
    pub json: bool,
    pub dump_chart: bool,
    /// Enumeration limit for `oracle`.
    pub cap: usize,
}

impl RunConfig {
    pub fn new(command: Command, grammar_path: impl Into<PathBuf>) -> Self {
        RunConfig {
            command,
            grammar_path: grammar_path.into(),
            semiring: "probability".to_string(),
            sentence: None,
            input: None,
            tolerance: 1e-9,
            max_generations: 10_000,
            json: false,
            dump_chart: false,
            cap: 10_000,
        }
    }

    fn loop_config(&self) -> LoopConfig {
        LoopConfig {
            tolerance: self.tolerance,
            max_generations: self.max_generations,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CommandOutput {
    pub exit_code: i32,
    pub stdout: String,
    pub stderr: String,
}

impl CommandOutput {
    fn failure(exit_code: i32, message: impl std::fmt::Display) -> Self {
        CommandOutput {
            exit_code,
            stdout: String::new(),
            stderr: format!("error: {message}\n"),
        }
    }
}

/// Syntax problems are exit 2; everything else the grammar or input can be
/// wrong about is a domain failure.
pub fn exit_code_for(e: &Error) -> i32 {
    match e {
        Error::Syntax { .. } => 2,
        _ => 1,
    }
}

/// Per-semiring extras: rule counts exist only for probabilities, and the
/// derivation-carrying semiring can report its best rule sequence.
pub trait CliSemiring: Semiring {
    fn rule_counts(
        &self,
        _chart: &Chart<'_, Self>,
    ) -> Option<crate::Result<BTreeMap<RuleId, f64>>> {
        None
    }

    fn best_summary(&self, _value: &Tensor<Self::Elem>) -> Option<String> {
        None
    }
}

impl CliSemiring for Boolean {}
impl CliSemiring for Counting {}
impl CliSemiring for Viterbi {}
impl CliSemiring for Log {}

impl CliSemiring for Probability {
    fn rule_counts(&self, chart: &Chart<'_, Self>) -> Option<crate::Result<BTreeMap<RuleId, f64>>> {
        Some(expected_rule_counts(chart))
    }
}

impl CliSemiring for ViterbiDerivation {
    fn best_summary(&self, value: &Tensor<Self::Elem>) -> Option<String> {
        let best = value
            .data()
            .iter()
            .fold(self.zero(), |acc, v| self.add(&acc, v));
        let rules: Vec<String> = best.rules.iter().map(ToString::to_string).collect();
        Some(format!("best: {} {}", best.score, rules.join(" ")))
    }
}

pub fn run(config: &RunConfig) -> CommandOutput {
    if config.tolerance.is_nan() || config.tolerance <= 0.0 {
        return CommandOutput::failure(
            2,
            format!("tolerance must be positive, got {}", config.tolerance),
        );
    }
    if config.max_generations == 0 {
        return CommandOutput::failure(2, "max generations must be at least 1");
    }
    if config.cap == 0 {
        return CommandOutput::failure(2, "cap must be at least 1");
    }
    let kind: SemiringKind = match config.semiring.parse() {
        Ok(k) => k,
        Err(e) => return CommandOutput::failure(1, e),
    };
    let text = match std::fs::read_to_string(&config.grammar_path) {
        Ok(t) => t,
        Err(e) => {
            return CommandOutput::failure(
                2,
                format!("cannot read {}: {e}", config.grammar_path.display()),
            )
        }
    };
    let source = match parse_grammar_source(&text) {
        Ok(s) => s,
        Err(e) => {
            return CommandOutput::failure(
                exit_code_for(&e),
                format!("{}: {e}", config.grammar_path.display()),
            )
        }
    };
    match kind {
        SemiringKind::Boolean => run_with(Boolean, config, &source),
        SemiringKind::Counting => run_with(Counting, config, &source),
        SemiringKind::Probability => run_with(Probability, config, &source),
        SemiringKind::Viterbi => run_with(Viterbi, config, &source),
        SemiringKind::Log => run_with(Log, config, &source),
        SemiringKind::ViterbiDerivation => run_with(ViterbiDerivation, config, &source),
    }
}

fn run_with<S: CliSemiring>(s: S, config: &RunConfig, source: &GrammarSource) -> CommandOutput {
    let cfg = match source.build(s) {
        Ok(cfg) => cfg,
        Err(Error::IllDefined(violations)) if config.command == Command::Check => {
            let mut out = format!("ill-defined: {} violation(s)\n", violations.len());
            for v in &violations {
                let _ = writeln!(out, "  {v}");
            }
            return CommandOutput {
                exit_code: 1,
                stdout: out,
                stderr: String::new(),
            };
        }
        Err(e) => {
            return CommandOutput::failure(
                exit_code_for(&e),
                format!("{}: {e}", config.grammar_path.display()),
            )
        }
    };
    if config.command == Command::Check {
        return cmd_check(&cfg, config);
    }
    let sentences = match read_sentences(config) {
        Ok(s) => s,
        Err(out) => return out,
    };
    let run_one = |sentence: &String| -> SentenceReport {
        let result = match config.command {
            Command::Parse => parse_sentence(&cfg, config, sentence),
            Command::InsideOutside => inside_outside_sentence(&cfg, config, sentence),
            Command::Oracle => oracle_sentence(&cfg, config, sentence),
            Command::Check => unreachable!(),
        };
        result.unwrap_or_else(|e| SentenceReport {
            exit_code: exit_code_for(&e),
            text: String::new(),
            json: Json::Null,
            stderr: format!("error: {e}\n"),
        })
    };
    let reports: Vec<SentenceReport> = if sentences.len() > 1 {
        sentences.par_iter().map(run_one).collect()
    } else {
        sentences.iter().map(run_one).collect()
    };
    let batch = config.input.is_some();
    let mut out = CommandOutput::default();
    for (sentence, report) in sentences.iter().zip(reports) {
        out.exit_code = out.exit_code.max(report.exit_code);
        out.stderr.push_str(&report.stderr);
        if config.json {
            if report.json.is_null() {
                continue;
            }
            let line = if batch {
                let mut j = report.json;
                j["sentence"] = json!(sentence);
                j
            } else {
                report.json
            };
            out.stdout.push_str(&line.to_string());
            out.stdout.push('\n');
        } else {
            if batch {
                let _ = writeln!(out.stdout, "sentence: {sentence}");
            }
            out.stdout.push_str(&report.text);
        }
    }
    out
}

fn read_sentences(config: &RunConfig) -> Result<Vec<String>, CommandOutput> {
    match (&config.sentence, &config.input) {
        (Some(s), None) => Ok(vec![s.clone()]),
        (None, Some(path)) => {
            let text = std::fs::read_to_string(path).map_err(|e| {
                CommandOutput::failure(2, format!("cannot read {}: {e}", path.display()))
            })?;
            Ok(text
                .lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(str::to_string)
                .collect())
        }
        (Some(_), Some(_)) => Err(CommandOutput::failure(
            2,
            "give either --sentence or --input, not both",
        )),
        (None, None) => Err(CommandOutput::failure(
            2,
            "this command needs --sentence or --input",
        )),
    }
}

struct SentenceReport {
    exit_code: i32,
    text: String,
    json: Json,
    stderr: String,
}

fn format_tensor<S: Semiring>(s: &S, t: &Tensor<S::Elem>) -> String {
    t.format_with(|v| s.format_value(v))
}

fn tensor_json<S: Semiring>(s: &S, t: &Tensor<S::Elem>) -> Json {
    let values: Vec<Json> = t.data().iter().map(|v| s.value_to_json(v)).collect();
    json!({ "value": values, "shape": t.dims() })
}

/// Reads a `{"value": [...], "shape": [...]}` object back into a tensor.
pub fn tensor_from_json<S: Semiring>(s: &S, j: &Json) -> Option<Tensor<S::Elem>> {
    let shape: Vec<usize> = j
        .get("shape")?
        .as_array()?
        .iter()
        .map(|d| d.as_u64().map(|d| d as usize))
        .collect::<Option<_>>()?;
    let values = j
        .get("value")?
        .as_array()?
        .iter()
        .map(|v| s.value_from_json(v))
        .collect::<Option<Vec<_>>>()?;
    Tensor::new(Shape::new(shape).ok()?, values).ok()
}

fn cmd_check<S: Semiring>(cfg: &WeightedCfg<S>, config: &RunConfig) -> CommandOutput {
    let g = cfg.grammar();
    let dims: Vec<(String, usize)> = g
        .nonterminal_ids()
        .map(|n| (g.nonterminal_name(n).to_string(), g.dim(n)))
        .collect();
    let stdout = if config.json {
        let dims_json: serde_json::Map<String, Json> =
            dims.iter().map(|(n, d)| (n.clone(), json!(d))).collect();
        format!(
            "{}\n",
            json!({ "well_defined": true, "rules": g.rules().len(), "dims": dims_json })
        )
    } else {
        let dims_text: Vec<String> = dims.iter().map(|(n, d)| format!("{n}={d}")).collect();
        format!(
            "well-defined: {} rules, dims {}\n",
            g.rules().len(),
            dims_text.join(" ")
        )
    };
    CommandOutput {
        exit_code: 0,
        stdout,
        stderr: String::new(),
    }
}

fn encode<S: Semiring>(
    cfg: &WeightedCfg<S>,
    sentence: &str,
) -> crate::Result<Vec<crate::grammar::TerminalId>> {
    let tokens: Vec<&str> = sentence.split_whitespace().collect();
    if tokens.is_empty() {
        return Err(Error::InvalidArgument("empty sentence".into()));
    }
    cfg.grammar().encode_sentence(&tokens)
}

fn parse_sentence<S: CliSemiring>(
    cfg: &WeightedCfg<S>,
    config: &RunConfig,
    sentence: &str,
) -> crate::Result<SentenceReport> {
    let s = cfg.semiring();
    let tokens = encode(cfg, sentence)?;
    let mut chart = Chart::new(cfg, Description::for_grammar(cfg.grammar()), &tokens)?;
    chart.compute_inner(&config.loop_config())?;
    let value = chart.goal_value()?;

    let mut text = format!("value: {}\n", format_tensor(s, &value));
    let best = s.best_summary(&value);
    if let Some(b) = &best {
        let _ = writeln!(text, "{b}");
    }
    if config.dump_chart {
        text.push_str("chart:\n");
        text.push_str(&chart.dump_inner());
    }
    let mut j = tensor_json(s, &value);
    if config.dump_chart {
        j["chart"] = json!(chart.dump_inner());
    }
    Ok(SentenceReport {
        exit_code: 0,
        text,
        json: j,
        stderr: warnings(&chart),
    })
}

fn warnings<S: Semiring>(chart: &Chart<'_, S>) -> String {
    chart.warnings().iter().map(|w| format!("{w}\n")).collect()
}

fn inside_outside_sentence<S: CliSemiring>(
    cfg: &WeightedCfg<S>,
    config: &RunConfig,
    sentence: &str,
) -> crate::Result<SentenceReport> {
    let s = cfg.semiring();
    if !s.is_commutative() {
        return Err(Error::Unsupported(format!(
            "inside-outside needs a commutative semiring; {} concatenates derivations in order",
            s.name()
        )));
    }
    let tokens = encode(cfg, sentence)?;
    let mut chart = Chart::new(cfg, Description::for_grammar(cfg.grammar()), &tokens)?;
    let loops = config.loop_config();
    chart.compute_inner(&loops)?;
    chart.compute_outer(&loops)?;
    let value = chart.goal_value()?;
    let counts = s.rule_counts(&chart).transpose()?;

    let mut text = format!("value: {}\n", format_tensor(s, &value));
    text.push_str("inside:\n");
    text.push_str(&chart.dump_inner());
    text.push_str("outside:\n");
    text.push_str(&chart.dump_outer());
    let mut j = tensor_json(s, &value);
    let items: Vec<Json> = chart
        .items()
        .iter()
        .map(|x| {
            json!({
                "item": x.display(cfg.grammar()),
                "inner": chart.inner(*x).map(|t| tensor_json(s, t)),
                "outer": chart.outer(*x).map(|t| tensor_json(s, t)),
            })
        })
        .collect();
    j["items"] = json!(items);
    if let Some(counts) = counts {
        text.push_str("counts:\n");
        let mut cj = serde_json::Map::new();
        for (r, c) in &counts {
            let _ = writeln!(text, "{r} {c}");
            cj.insert(r.to_string(), json!(c));
        }
        j["counts"] = Json::Object(cj);
    }
    Ok(SentenceReport {
        exit_code: 0,
        text,
        json: j,
        stderr: warnings(&chart),
    })
}

fn oracle_sentence<S: CliSemiring>(
    cfg: &WeightedCfg<S>,
    config: &RunConfig,
    sentence: &str,
) -> crate::Result<SentenceReport> {
    let s = cfg.semiring();
    let tokens = encode(cfg, sentence)?;
    let e = enumerate_derivations(cfg.grammar(), &tokens, config.cap)?;
    let mut total = zero_tensor(s, Shape::new(vec![cfg.start_dim()])?);
    let mut text = String::new();
    let mut trees = Vec::new();
    let mut mismatches = 0;
    for t in &e.trees {
        let tv = tree_value(cfg, t)?;
        let sv = string_value(cfg, &flatten(t))?;
        let agree = approx_eq(s, &tv, &sv, config.tolerance);
        let _ = writeln!(text, "{t}");
        let _ = writeln!(text, "  tree value:   {}", format_tensor(s, &tv));
        let _ = writeln!(text, "  string value: {}", format_tensor(s, &sv));
        if !agree {
            mismatches += 1;
            let _ = writeln!(text, "  tree/string mismatch");
        }
        trees.push(json!({
            "tree": t.to_string(),
            "tree_value": tensor_json(s, &tv),
            "string_value": tensor_json(s, &sv),
            "agree": agree,
        }));
        total = tensor_add(s, &total, &tv)?;
    }
    let _ = writeln!(text, "{} derivations", e.trees.len());
    let _ = writeln!(text, "total: {}", format_tensor(s, &total));
    let mut stderr = String::new();
    if e.truncated {
        let warning = format!(
            "warning: enumeration stopped at cap {}; total is partial",
            config.cap
        );
        let _ = writeln!(text, "{warning}");
        let _ = writeln!(stderr, "{warning}");
    }
    if mismatches > 0 {
        let _ = writeln!(stderr, "error: {mismatches} tree/string mismatch(es)");
    }
    let j = json!({
        "trees": trees,
        "total": tensor_json(s, &total),
        "truncated": e.truncated,
    });
    Ok(SentenceReport {
        exit_code: if mismatches > 0 { 1 } else { 0 },
        text,
        json: j,
        stderr,
    })
}
