//! Independent seeded runs evaluated in parallel.

use rayon::prelude::*;

use crate::population::InputAssignment;
use crate::scheduler::{run, RunOptions, StopReason};
use crate::tape_machine::ProtocolSpec;

/// Outcome of one seed.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BatchRun {
    pub seed: u64,
    pub outputs: Vec<String>,
    pub stop_reason: Option<StopReason>,
    pub effective_encounters: usize,
    pub error: Option<String>,
}

impl BatchRun {
    pub fn converged(&self) -> bool {
        matches!(
            self.stop_reason,
            Some(StopReason::Quiescent | StopReason::TargetReached | StopReason::NoPairs)
        )
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct BatchReport {
    pub runs: Vec<BatchRun>,
    /// Seeds whose final outputs differ from the expected array, or are not
    /// uniform when nothing is expected, or that failed.
    pub disagreements: Vec<u64>,
}

impl BatchReport {
    pub fn convergence_fraction(&self) -> f64 {
        if self.runs.is_empty() {
            return 1.0;
        }
        self.runs.iter().filter(|r| r.converged()).count() as f64 / self.runs.len() as f64
    }

    pub fn mean_effective_encounters(&self) -> f64 {
        if self.runs.is_empty() {
            return 0.0;
        }
        self.runs
            .iter()
            .map(|r| r.effective_encounters as f64)
            .sum::<f64>()
            / self.runs.len() as f64
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "runs {}\nconvergence {:.4}\nmean_effective_encounters {:.2}\ndisagreements {}\n",
            self.runs.len(),
            self.convergence_fraction(),
            self.mean_effective_encounters(),
            self.disagreements.len()
        );
        for r in &self.runs {
            let reason = r.stop_reason.map_or("error".to_string(), |s| s.to_string());
            out.push_str(&format!(
                "seed {} {} {} {}",
                r.seed,
                reason,
                r.effective_encounters,
                r.outputs.join("|")
            ));
            if let Some(e) = &r.error {
                out.push_str(&format!(" error: {e}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Runs every seed in `seeds` on its own assignment. Each run uses `opts`
/// with the seed replaced.
pub fn run_batch<F>(
    protocol: &ProtocolSpec,
    seeds: impl IntoIterator<Item = u64>,
    assignment: F,
    opts: &RunOptions,
    expected: Option<&[String]>,
) -> BatchReport
where
    F: Fn(u64) -> InputAssignment + Sync,
{
    let seeds: Vec<u64> = seeds.into_iter().collect();
    let runs: Vec<BatchRun> = seeds
        .par_iter()
        .map(|&seed| {
            let a = assignment(seed);
            let opts = RunOptions {
                seed,
                ..opts.clone()
            };
            match run(protocol, &a, &opts) {
                Ok(t) => BatchRun {
                    seed,
                    outputs: t
                        .final_outputs()
                        .map(<[String]>::to_vec)
                        .unwrap_or_default(),
                    stop_reason: t.stop_reason,
                    effective_encounters: t.effective_encounters(),
                    error: None,
                },
                Err(e) => BatchRun {
                    seed,
                    outputs: Vec::new(),
                    stop_reason: None,
                    effective_encounters: 0,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    let disagreements = runs
        .iter()
        .filter(|r| {
            r.error.is_some()
                || match expected {
                    Some(e) => r.outputs != e,
                    None => r.outputs.windows(2).any(|w| w[0] != w[1]),
                }
        })
        .map(|r| r.seed)
        .collect();
    BatchReport {
        runs,
        disagreements,
    }
}
