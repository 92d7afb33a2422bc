use clap::{CommandFactory, Parser};
use maddpg_m_cli::commands::Command;
use maddpg_m_cli::{run, Cli, CliError};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let sub = match &cli.command {
        Command::Train(_) => "train",
        Command::Eval(_) => "eval",
        Command::Report(_) => "report",
        Command::List => "list",
    };
    if let Err(e) = run(cli) {
        match &e {
            CliError::Usage(msg) => {
                let mut cmd = Cli::command();
                let usage = cmd.find_subcommand_mut(sub).map(|c| c.render_usage().to_string()).unwrap_or_default();
                eprintln!("error: {msg}\n\n{usage}\n\nFor more information, try '--help'.");
            }
            CliError::Runtime(err) => eprintln!("error: {err:#}"),
        }
        std::process::exit(e.exit_code());
    }
}
