//! Line-oriented collection of manual results.
//!
//! For every pending entry the assessor answers one line per guide step (the
//! observation, blank for none), then the outcome, then a rationale. The
//! outcome `PENDING` leaves the entry for later. Input ends at end of file.

use std::io::{BufRead, Write};

use iotsam_core::campaign;
use iotsam_core::{
    CampaignStore, Clock, ManualSubmission, Observation, ObservationPayload, PlannedTest, ProtocolOutcome, Session,
    SystemClock,
};

use crate::error::CliError;

const MANUAL_OUTCOMES: [ProtocolOutcome; 4] = [
    ProtocolOutcome::Pass,
    ProtocolOutcome::Fail,
    ProtocolOutcome::Inconclusive,
    ProtocolOutcome::Skipped,
];

struct Prompter<'a> {
    input: &'a mut dyn BufRead,
    output: &'a mut dyn Write,
}

impl Prompter<'_> {
    /// Next input line without its terminator; `None` at end of input.
    fn ask(&mut self, prompt: &str) -> Result<Option<String>, CliError> {
        write!(self.output, "{prompt}> ").and_then(|_| self.output.flush()).map_err(io_failed)?;
        let mut line = String::new();
        if self.input.read_line(&mut line).map_err(io_failed)? == 0 {
            writeln!(self.output).map_err(io_failed)?;
            return Ok(None);
        }
        Ok(Some(line.trim_end_matches(['\r', '\n']).to_string()))
    }

    fn say(&mut self, text: &str) -> Result<(), CliError> {
        writeln!(self.output, "{text}").map_err(io_failed)
    }
}

fn io_failed(e: std::io::Error) -> CliError {
    CliError::Failed(format!("terminal i/o: {e}"))
}

enum Answer {
    Submit(ManualSubmission),
    Later,
    EndOfInput,
}

fn ask_entry(p: &mut Prompter<'_>, entry: &PlannedTest, assessor: &str, clock: &dyn Clock) -> Result<Answer, CliError> {
    let started_at = clock.now();
    p.say(&format!(
        "\n{} [{} {}] {}",
        entry.plan_entry_id,
        entry.execution_mode.as_str(),
        entry.severity.as_str(),
        entry.title
    ))?;
    if let Some(executor) = &entry.executor {
        let params: Vec<String> = executor.parameters.iter().map(|(k, v)| format!("{k}={v}")).collect();
        p.say(&format!("  suggested tool: {} {}", executor.capability, params.join(" ")))?;
    }
    let total = entry.instantiated_guide.len();
    let mut step_observations = Vec::with_capacity(total);
    for (i, step) in entry.instantiated_guide.iter().enumerate() {
        p.say(&format!("  step {}/{total}: {}", i + 1, step.instruction))?;
        p.say(&format!("    expected: {}", step.expected_observation))?;
        let Some(text) = p.ask("  observation")? else {
            return Ok(Answer::EndOfInput);
        };
        let text = text.trim();
        step_observations.push(if text.is_empty() {
            vec![]
        } else {
            vec![Observation::new(
                ObservationPayload::Text { text: text.to_string() },
                clock.now(),
            )]
        });
    }
    let choices: Vec<&str> = MANUAL_OUTCOMES.iter().map(|o| o.as_str()).collect();
    let outcome = loop {
        let Some(token) = p.ask(&format!("  outcome ({} or PENDING)", choices.join(", ")))? else {
            return Ok(Answer::EndOfInput);
        };
        if token.trim().eq_ignore_ascii_case("pending") {
            return Ok(Answer::Later);
        }
        match ProtocolOutcome::parse(&token).filter(|o| MANUAL_OUTCOMES.contains(o)) {
            Some(o) => break o,
            None => p.say(&format!("  `{}` is not one of {}", token.trim(), choices.join(", ")))?,
        }
    };
    let Some(rationale) = p.ask("  rationale")? else {
        return Ok(Answer::EndOfInput);
    };
    Ok(Answer::Submit(ManualSubmission {
        plan_entry_id: entry.plan_entry_id.clone(),
        assessor_id: assessor.to_string(),
        step_observations,
        outcome,
        rationale: rationale.trim().to_string(),
        started_at: Some(started_at),
    }))
}

/// Prompts for every pending manual entry of `session` in plan order.
pub fn collect(
    store: &CampaignStore,
    session: &Session,
    assessor: &str,
    input: &mut dyn BufRead,
    output: &mut dyn Write,
) -> Result<Session, CliError> {
    let clock = SystemClock;
    let mut p = Prompter { input, output };
    let pending: Vec<PlannedTest> = session.pending_manual().into_iter().cloned().collect();
    if !pending.is_empty() {
        p.say(&format!("{} manual entries pending", pending.len()))?;
    }
    let mut latest = session.clone();
    for entry in &pending {
        match ask_entry(&mut p, entry, assessor, &clock)? {
            Answer::Submit(submission) => {
                let (protocol, updated) = campaign::submit_manual(store, &session.session_id, &submission, &clock)?;
                p.say(&format!("  recorded {} {}", protocol.plan_entry_id, protocol.outcome.as_str()))?;
                latest = updated;
            }
            Answer::Later => p.say(&format!("  {} left pending", entry.plan_entry_id))?,
            Answer::EndOfInput => {
                p.say("input ended; remaining entries stay pending")?;
                break;
            }
        }
    }
    Ok(latest)
}
