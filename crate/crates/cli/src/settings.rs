//! Flags shared by every subcommand, also readable from a TOML file whose
//! keys are the flag names with `_` for `-`. Flags given on the command line
//! win.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use serde::Deserialize;

use paloma_core::protocols::ids::size_input;
use paloma_core::{InputAssignment, Mode, ProtocolSpec, SchedRng, TapeLayout};

#[derive(Args, Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    /// Built-in protocol name or description file.
    #[arg(long)]
    pub protocol: Option<String>,
    /// Input counts such as `a:2,b:3,c:6`; expanded in symbol order.
    #[arg(long)]
    pub inputs: Option<String>,
    /// Explicit comma-separated inputs, one per agent.
    #[arg(long)]
    pub input_list: Option<String>,
    /// Population size. Alone, it gives every agent the binary form of n.
    #[arg(long)]
    pub n: Option<usize>,
    /// Shuffle the inputs with the run's seed.
    #[arg(long)]
    #[serde(default)]
    pub permute: bool,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Seed range for batches, `start..end`.
    #[arg(long)]
    pub seeds: Option<String>,
    /// `atomic` or `interleaved`.
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long)]
    pub max_interactions: Option<u64>,
    /// Effective encounters without an output change that count as quiescence.
    #[arg(long)]
    pub window: Option<u64>,
    #[arg(long)]
    pub cap_factor: Option<usize>,
    #[arg(long)]
    pub cap_const: Option<usize>,
    /// Expected output: one value for every agent, or one per agent.
    #[arg(long)]
    pub expect: Option<String>,
    /// Oracle budget in configurations.
    #[arg(long)]
    pub budget: Option<usize>,
    #[arg(long)]
    pub snapshot_interval: Option<u64>,
    #[arg(long)]
    pub trace: Option<PathBuf>,
    #[arg(long)]
    pub summary: Option<PathBuf>,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

macro_rules! prefer {
    ($cli:ident, $file:ident; $($f:ident),*) => {
        Settings { permute: $cli.permute || $file.permute, $($f: $cli.$f.or($file.$f)),* }
    };
}

impl Settings {
    pub fn merged(self, config: Option<&Path>) -> Result<Self> {
        let Some(path) = config else {
            return Ok(self);
        };
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let file: Settings =
            toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        let cli = self;
        Ok(
            prefer!(cli, file; protocol, inputs, input_list, n, seed, seeds, mode, max_interactions, window,
            cap_factor, cap_const, expect, budget, snapshot_interval, trace, summary, report),
        )
    }

    pub fn protocol(&self) -> Result<ProtocolSpec> {
        let name = self.protocol.as_deref().context("--protocol is required")?;
        Ok(paloma_core::builtin(name)?)
    }

    pub fn layout(&self, p: &ProtocolSpec) -> TapeLayout {
        TapeLayout::new(
            self.cap_factor.unwrap_or(p.layout_hint.cap_factor),
            self.cap_const.unwrap_or(p.layout_hint.cap_const),
        )
    }

    pub fn mode(&self) -> Result<Mode> {
        match &self.mode {
            None => Ok(Mode::Atomic),
            Some(m) => m.parse().map_err(|e| anyhow::anyhow!("{e}")),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn seed_range(&self) -> Result<std::ops::Range<u64>> {
        let Some(s) = &self.seeds else {
            let seed = self.seed();
            return Ok(seed..seed + 1);
        };
        let (a, b) = s
            .split_once("..")
            .context("--seeds must look like start..end")?;
        Ok(a.trim().parse()?..b.trim().parse()?)
    }

    /// The assignment before any permutation.
    pub fn base_inputs(&self) -> Result<Vec<String>> {
        let inputs = match (&self.input_list, &self.inputs) {
            (Some(_), Some(_)) => bail!("give either --inputs or --input-list"),
            (Some(list), None) => list.split(',').map(|s| s.trim().to_string()).collect(),
            (None, Some(counts)) => expand_counts(counts)?,
            (None, None) => {
                let n = self
                    .n
                    .context("no inputs: give --inputs, --input-list or --n")?;
                vec![size_input(n); n]
            }
        };
        if let Some(n) = self.n {
            if n != inputs.len() {
                bail!("--n {n} but {} inputs", inputs.len());
            }
        }
        Ok(inputs)
    }

    pub fn assignment(&self, seed: u64) -> Result<InputAssignment> {
        let mut inputs = self.base_inputs()?;
        if self.permute {
            permute(&mut inputs, seed);
        }
        Ok(InputAssignment::new(inputs))
    }

    pub fn expected(&self, n: usize) -> Result<Option<Vec<String>>> {
        let Some(e) = &self.expect else {
            return Ok(None);
        };
        let parts: Vec<String> = e.split([',', '|']).map(|s| s.trim().to_string()).collect();
        match parts.len() {
            1 => Ok(Some(vec![parts[0].clone(); n])),
            k if k == n => Ok(Some(parts)),
            k => bail!("--expect has {k} values for {n} agents"),
        }
    }
}

/// `a:2,b:1` becomes `a a b`; symbols are sorted first.
pub fn expand_counts(spec: &str) -> Result<Vec<String>> {
    let mut pairs = Vec::new();
    for part in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (sym, count) = part
            .rsplit_once(':')
            .with_context(|| format!("{part:?} is not symbol:count"))?;
        let count: usize = count
            .parse()
            .with_context(|| format!("bad count in {part:?}"))?;
        pairs.push((sym.to_string(), count));
    }
    pairs.sort();
    Ok(pairs
        .into_iter()
        .flat_map(|(s, k)| std::iter::repeat_n(s, k))
        .collect())
}

/// Fisher-Yates driven by the scheduler's generator, on a stream apart from
/// the scheduler's own.
pub fn permute(v: &mut [String], seed: u64) {
    let mut rng = SchedRng::new(seed ^ 0x9e37_79b9_7f4a_7c15);
    for i in (1..v.len()).rev() {
        let j = rng.below(i as u64 + 1) as usize;
        v.swap(i, j);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_expand_in_symbol_order() {
        assert_eq!(expand_counts("c:1,a:2,b:0").unwrap(), vec!["a", "a", "c"]);
        assert_eq!(expand_counts("a6:1,b2:2").unwrap(), vec!["a6", "b2", "b2"]);
        assert!(expand_counts("a").is_err());
    }

    #[test]
    fn permutation_keeps_the_multiset() {
        let mut v: Vec<String> = (0..10).map(|i| i.to_string()).collect();
        permute(&mut v, 3);
        let mut w = v.clone();
        w.sort_by_key(|s| s.parse::<u32>().unwrap());
        assert_eq!(w, (0..10).map(|i| i.to_string()).collect::<Vec<_>>());
    }

    #[test]
    fn expected_broadcasts() {
        let s = Settings {
            expect: Some("1".into()),
            ..Settings::default()
        };
        assert_eq!(s.expected(3).unwrap().unwrap(), vec!["1"; 3]);
        let s = Settings {
            expect: Some("1,0".into()),
            ..Settings::default()
        };
        assert!(s.expected(3).is_err());
    }
}
