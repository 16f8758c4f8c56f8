//! The five subcommands, each writing its artifacts into an output directory.

use crate::check::check;
use crate::compare::convergence_report;
use crate::config::ExperimentConfig;
use crate::experiment::{simulate_coupled, simulate_limit, solve_potentials, CoupledOutcome, CoupledSummary, LabError, LimitSummary};
use crate::output::{potential_summary, write_abort_marker, write_boundary, write_coupled, write_dictionary, write_json, write_limit};
use log::info;
use serde::Serialize;
use std::fs;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    CheckIdentities,
    Potentials,
    SimulateCoupled,
    SimulateLimit,
    Converge,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::CheckIdentities => "check-identities",
            Command::Potentials => "potentials",
            Command::SimulateCoupled => "simulate-coupled",
            Command::SimulateLimit => "simulate-limit",
            Command::Converge => "converge",
        }
    }
}

/// What a successful command produced.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommandOutcome {
    /// A coupled run stopped early or the limit run failed.
    pub aborted: bool,
    /// Every identity row passed (check-identities only).
    pub checks_pass: bool,
}

impl CommandOutcome {
    pub fn exit_code(&self) -> i32 {
        if self.aborted {
            2
        } else {
            0
        }
    }
}

#[derive(Serialize)]
struct Summary<'a> {
    command: &'static str,
    config: &'a ExperimentConfig,
    coupled: Vec<&'a CoupledSummary>,
    limit: Option<&'a LimitSummary>,
}

fn coupled_artifacts(out: &Path, runs: &[CoupledOutcome]) -> Result<bool, LabError> {
    for o in runs {
        write_coupled(out, o)?;
        info!("ε = {}: {} steps, abort {:?}", o.summary.eps, o.summary.steps, o.summary.abort.as_ref().map(|a| a.reason));
    }
    write_abort_marker(out, runs)
}

pub fn run_command(cmd: Command, cfg: &ExperimentConfig, out: &Path) -> Result<CommandOutcome, LabError> {
    fs::create_dir_all(out)?;
    write_dictionary(out)?;
    let mut outcome = CommandOutcome { aborted: false, checks_pass: true };
    match cmd {
        Command::CheckIdentities => {
            let rep = check(cfg)?;
            info!("{} identity rows, all pass: {}", rep.rows(), rep.all_pass);
            for s in rep.sections.iter().filter(|s| !s.report.all_pass()) {
                log::warn!("{}:\n{}", s.name, s.report.table());
            }
            outcome.checks_pass = rep.all_pass;
            write_json(&out.join("identities.json"), &rep)?;
        }
        Command::Potentials => {
            let pot = solve_potentials(cfg)?;
            write_json(&out.join("potentials.json"), &potential_summary(&pot, &cfg.shape_spec()?.name))?;
            write_boundary(out, &pot)?;
        }
        Command::SimulateCoupled => {
            let pot = solve_potentials(cfg)?;
            let runs = simulate_coupled(cfg, &pot)?;
            outcome.aborted = coupled_artifacts(out, &runs)?;
            let summary = Summary { command: cmd.name(), config: cfg, coupled: runs.iter().map(|o| &o.summary).collect(), limit: None };
            write_json(&out.join("summary.json"), &summary)?;
        }
        Command::SimulateLimit => {
            let lim = simulate_limit(cfg)?;
            write_limit(out, &lim)?;
            outcome.aborted = lim.summary.error.is_some();
            let summary = Summary { command: cmd.name(), config: cfg, coupled: Vec::new(), limit: Some(&lim.summary) };
            write_json(&out.join("summary.json"), &summary)?;
        }
        Command::Converge => {
            let pot = solve_potentials(cfg)?;
            let (runs, lim) = rayon::join(|| simulate_coupled(cfg, &pot), || simulate_limit(cfg));
            let (runs, lim) = (runs?, lim?);
            outcome.aborted = coupled_artifacts(out, &runs)? || lim.summary.error.is_some();
            write_limit(out, &lim)?;
            let report = convergence_report(cfg.run.t_final, cfg.body.alpha, cfg.body.gamma, &runs, &lim)?;
            write_json(&out.join("report.json"), &report)?;
            let summary =
                Summary { command: cmd.name(), config: cfg, coupled: runs.iter().map(|o| &o.summary).collect(), limit: Some(&lim.summary) };
            write_json(&out.join("summary.json"), &summary)?;
        }
    }
    Ok(outcome)
}
