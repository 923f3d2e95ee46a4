//! `emag`: operator tool for sources, ingestion, maintenance, the
//! recommender, profiles and fixtures.
//!
//! Runs against a data directory directly, or against a running server
//! with `--server URL --token ADMIN_TOKEN`. Exit status: 0 on success, 1
//! when the operation failed, 2 on a usage error.

mod backend;
mod render;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use backend::Backend;

#[derive(Debug, Parser)]
#[command(name = "emag", version, about = "Operate an e-magazine personalization engine")]
struct Cli {
    /// Print machine-readable JSON instead of text.
    #[arg(long, global = true)]
    json: bool,

    /// Data directory of the embedded store.
    #[arg(long, global = true, env = "DATA_DIR", default_value = "data")]
    data_dir: PathBuf,

    /// Engine configuration (JSON).
    #[arg(long, global = true, env = "CONFIG_PATH")]
    config: Option<PathBuf>,

    /// Talk to a running server instead of opening the store.
    #[arg(long, global = true, env = "EMAG_SERVER")]
    server: Option<String>,

    /// Operator token for `--server`.
    #[arg(long, global = true, env = "ADMIN_TOKEN", hide_env_values = true)]
    token: Option<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Manage feed sources.
    #[command(subcommand)]
    Source(SourceCmd),
    /// Fetch and store new items.
    Ingest {
        #[arg(long, conflicts_with = "all", required_unless_present = "all")]
        source: Option<String>,
        #[arg(long)]
        all: bool,
    },
    /// Periodic maintenance.
    #[command(subcommand)]
    Maintain(MaintainCmd),
    /// Recommender model.
    #[command(subcommand)]
    Recommend(RecommendCmd),
    /// Profile documents.
    #[command(subcommand)]
    Profile(ProfileCmd),
    /// Users.
    #[command(subcommand)]
    User(UserCmd),
    /// Write the whole store to a JSON file.
    Dump { file: PathBuf },
    /// Replace the store with a JSON dump.
    Load { file: PathBuf },
}

#[derive(Debug, Subcommand)]
enum SourceCmd {
    Add { id: String, url: String, category: String },
    List,
    Disable { id: String },
}

#[derive(Debug, Subcommand)]
enum MaintainCmd {
    /// Decay interests untouched for a day or more and flush stale ones.
    DecayFlush,
}

#[derive(Debug, Subcommand)]
enum RecommendCmd {
    /// Recompute the model from current interests.
    Rebuild,
    /// Keyword recommendations from the current model.
    Show { user: String },
}

#[derive(Debug, Subcommand)]
enum ProfileCmd {
    /// Seed a registered user's interests from a profile document.
    Import { file: PathBuf },
}

#[derive(Debug, Subcommand)]
enum UserCmd {
    Show { user: String },
}

#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Operational(String),
}

impl Failure {
    fn exit_code(&self) -> ExitCode {
        match self {
            Failure::Usage(_) => ExitCode::from(2),
            Failure::Operational(_) => ExitCode::from(1),
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Usage(m) | Failure::Operational(m) => f.write_str(m),
        }
    }
}

/// A command's result, and whether it counts as a failure (an ingest run
/// with fetch errors still prints its reports).
struct Outcome {
    value: serde_json::Value,
    kind: render::Kind,
    failed: bool,
}

fn run(cli: &Cli) -> Result<Outcome, Failure> {
    let backend = Backend::connect(cli)?;
    use render::Kind;
    let (value, kind) = match &cli.command {
        Command::Source(SourceCmd::Add { id, url, category }) => (backend.add_source(id, url, category)?, Kind::Source),
        Command::Source(SourceCmd::List) => (backend.sources()?, Kind::Sources),
        Command::Source(SourceCmd::Disable { id }) => (backend.disable_source(id)?, Kind::Source),
        Command::Ingest { source, .. } => (backend.ingest(source.as_deref())?, Kind::Ingest),
        Command::Maintain(MaintainCmd::DecayFlush) => (backend.decay_flush()?, Kind::DecayFlush),
        Command::Recommend(RecommendCmd::Rebuild) => (backend.rebuild()?, Kind::Rebuilt),
        Command::Recommend(RecommendCmd::Show { user }) => (backend.recommendations(user)?, Kind::Recommendations),
        Command::Profile(ProfileCmd::Import { file }) => (backend.import_profile(file)?, Kind::Interests),
        Command::User(UserCmd::Show { user }) => (backend.user_show(user)?, Kind::User),
        Command::Dump { file } => (backend.dump(file)?, Kind::Done),
        Command::Load { file } => (backend.load(file)?, Kind::Done),
    };
    let failed = matches!(kind, Kind::Ingest)
        && value
            .as_array()
            .is_some_and(|reports| reports.iter().any(|r| r["errors"].as_array().is_some_and(|e| !e.is_empty())));
    Ok(Outcome { value, kind, failed })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help and version go to stdout with status 0; real errors exit 2
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match run(&cli) {
        Ok(out) => {
            if cli.json {
                println!("{}", serde_json::to_string_pretty(&out.value).expect("JSON values serialize"));
            } else {
                print!("{}", render::text(out.kind, &out.value));
            }
            if out.failed {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            if cli.json {
                let code = if matches!(e, Failure::Usage(_)) { "usage" } else { "failed" };
                eprintln!("{}", serde_json::json!({ "error": code, "message": e.to_string() }));
            } else {
                eprintln!("emag: {e}");
            }
            e.exit_code()
        }
    }
}
