//! The `lexsyl` command line: synthetic corpus generation, index build,
//! retrieval, scoring, training and evaluation.
//!
//! Every subcommand except `gen-synthetic` takes a [`RunConfig`], loaded from
//! `--config FILE` and then overridden by per-key flags.

pub mod commands;
pub mod config;

use std::io::Write;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Arg, ArgMatches, Command};

pub use config::{ConfigError, RetrievalMode, RunConfig};

fn config_args() -> Vec<Arg> {
    let mut args = vec![Arg::new("config")
        .long("config")
        .value_name("FILE")
        .help("flat key = value config file; flags override it")];
    for (key, help) in config::KEYS {
        args.push(
            Arg::new(*key)
                .long(key.replace('_', "-"))
                .value_name("VALUE")
                .help(*help),
        );
    }
    args
}

pub fn cli() -> Command {
    let text = |name: &'static str, help: &'static str| {
        Arg::new(name).long(name).required(true).help(help)
    };
    let count = |name: &'static str, default: &'static str| {
        Arg::new(name)
            .long(name)
            .value_parser(clap::value_parser!(usize))
            .default_value(default)
    };
    Command::new("lexsyl")
        .about("Syllogistic legal QA at desk scale")
        .subcommand_required(true)
        .arg_required_else_help(true)
        .subcommand(
            Command::new("gen-synthetic")
                .about("Write a seeded synthetic statute/case/QA corpus")
                .arg(text("out-dir", "output directory"))
                .arg(
                    Arg::new("seed")
                        .long("seed")
                        .value_parser(clap::value_parser!(u64))
                        .default_value("0"),
                )
                .arg(count("n-statutes", "20"))
                .arg(count("cases-per-statute", "5"))
                .arg(count("n-qa", "60")),
        )
        .subcommand(
            Command::new("build-index")
                .about("Build and save the knowledge tree")
                .args(config_args()),
        )
        .subcommand(
            Command::new("retrieve")
                .about("Retrieve knowledge for one question")
                .args(config_args())
                .arg(text("question", "question text")),
        )
        .subcommand(
            Command::new("score")
                .about("Score one response file against a question and gold answer")
                .args(config_args())
                .arg(
                    text("response", "file holding the response")
                        .value_parser(clap::value_parser!(PathBuf)),
                )
                .arg(text("question", "question text"))
                .arg(text("gold", "gold answer")),
        )
        .subcommand(
            Command::new("train")
                .about("Warm-up and/or PPO training")
                .args(config_args()),
        )
        .subcommand(
            Command::new("eval")
                .about("Greedy-decode and score a test set")
                .args(config_args()),
        )
        .version(env!("CARGO_PKG_VERSION"))
}

pub fn config_from_matches(m: &ArgMatches) -> Result<RunConfig> {
    let base = match m.get_one::<String>("config") {
        Some(path) => RunConfig::load(path.as_ref())?,
        None => RunConfig::default(),
    };
    let overrides = config::KEYS
        .iter()
        .filter_map(|(k, _)| m.get_one::<String>(k).map(|v| (*k, v.as_str())));
    Ok(base.with_overrides(overrides)?)
}

/// Parse `args` (including the program name) and run the chosen command.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let matches = cli().try_get_matches_from(args)?;
    let (name, m) = matches.subcommand().context("missing subcommand")?;
    let text = |k: &str| m.get_one::<String>(k).cloned().unwrap_or_default();
    match name {
        "gen-synthetic" => {
            let shape = commands::SyntheticShape {
                seed: *m.get_one("seed").unwrap_or(&0),
                n_statutes: *m.get_one("n-statutes").unwrap_or(&20),
                cases_per_statute: *m.get_one("cases-per-statute").unwrap_or(&5),
                n_qa: *m.get_one("n-qa").unwrap_or(&60),
            };
            commands::gen_synthetic(shape, text("out-dir").as_ref(), out)?;
        }
        "build-index" => {
            commands::build_index(&config_from_matches(m)?, out)?;
        }
        "retrieve" => {
            commands::retrieve(&config_from_matches(m)?, &text("question"), out)?;
        }
        "score" => {
            let response = m.get_one::<PathBuf>("response").context("--response")?;
            commands::score(
                &config_from_matches(m)?,
                response,
                &text("question"),
                &text("gold"),
                out,
            )?;
        }
        "train" => {
            commands::train(&config_from_matches(m)?, out)?;
        }
        "eval" => {
            commands::eval(&config_from_matches(m)?, out)?;
        }
        other => anyhow::bail!("unknown subcommand {other}"),
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn command_definition_is_consistent() {
        cli().debug_assert();
    }

    #[test]
    fn flags_override_the_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("run.cfg");
        std::fs::write(&file, "seed = 4\nppo_lr = 0.002\n").unwrap();
        let m = cli()
            .try_get_matches_from([
                "lexsyl",
                "train",
                "--config",
                file.to_str().unwrap(),
                "--seed",
                "11",
                "--reward-mode",
                "conclusion_only",
            ])
            .unwrap();
        let cfg = config_from_matches(m.subcommand_matches("train").unwrap()).unwrap();
        assert_eq!(cfg.seed, 11);
        assert_eq!(cfg.ppo_lr, 0.002);
        assert_eq!(
            cfg.reward_mode,
            lexsyl_core::reward::RewardMode::ConclusionOnly
        );
    }

    #[test]
    fn bad_flag_values_are_errors() {
        let mut sink = Vec::new();
        assert!(run(["lexsyl", "train", "--retrieval", "dense"], &mut sink).is_err());
        assert!(run(["lexsyl", "train", "--no-such-flag", "1"], &mut sink).is_err());
    }
}
