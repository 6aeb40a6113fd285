//! `theory` command: closed-form expectations per (n, rho), optionally
//! checked against Monte-Carlo runs of the exact-convergence protocol.

use pser::theory::{monte_carlo_steps, TheoremResult};
use pser::{BoundVariant, Strategy};
use serde::Serialize;

use crate::error::{HarnessError, HarnessResult};

#[derive(Debug, Clone)]
pub struct TheoryArgs {
    pub n_min: u32,
    pub n_max: u32,
    pub rhos: Vec<f64>,
    pub variant: BoundVariant,
    /// Monte-Carlo trials per row; 0 skips simulation.
    pub trials: u64,
    pub seed: u64,
    pub strategy: Strategy,
}

/// One JSON line of output.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TheoryRecord {
    pub n: u32,
    pub rho: f64,
    pub variant: BoundVariant,
    pub e_per: f64,
    pub e_pser_bound: f64,
    pub e_pser_bound_main: f64,
    pub e_pser_bound_appendix: f64,
    pub mc_strategy: Option<Strategy>,
    pub mc_mean: Option<f64>,
    pub mc_ci95_lo: Option<f64>,
    pub mc_ci95_hi: Option<f64>,
    pub trials: u64,
    pub seed: u64,
}

impl TheoryRecord {
    fn new(r: &TheoremResult, strategy: Option<Strategy>, trials: u64, seed: u64) -> Self {
        Self {
            n: r.n,
            rho: r.rho,
            variant: r.variant,
            e_per: r.e_per,
            e_pser_bound: r.e_pser_bound(),
            e_pser_bound_main: r.e_pser_bound_main,
            e_pser_bound_appendix: r.e_pser_bound_appendix,
            mc_strategy: strategy,
            mc_mean: r.mc_mean,
            mc_ci95_lo: r.mc_ci95.map(|c| c.0),
            mc_ci95_hi: r.mc_ci95.map(|c| c.1),
            trials,
            seed,
        }
    }
}

pub fn theory(args: &TheoryArgs) -> HarnessResult<Vec<TheoryRecord>> {
    if args.n_min == 0 || args.n_min > args.n_max {
        return Err(HarnessError::Config(format!(
            "invalid n range {}..={}",
            args.n_min, args.n_max
        )));
    }
    if args.rhos.is_empty() {
        return Err(HarnessError::Config("at least one rho is required".into()));
    }
    let mut out = Vec::new();
    for n in args.n_min..=args.n_max {
        for &rho in &args.rhos {
            let mut r = TheoremResult::closed_form(n, rho, args.variant)?;
            let mc_strategy = if args.trials > 0 {
                let mc = monte_carlo_steps(args.strategy, n as usize, rho, args.trials, args.seed)?;
                log::info!("n {n} rho {rho}: {} mean {:.3}", args.strategy, mc.mean);
                r = r.with_monte_carlo(&mc);
                Some(args.strategy)
            } else {
                None
            };
            out.push(TheoryRecord::new(&r, mc_strategy, args.trials, args.seed));
        }
    }
    Ok(out)
}

pub fn to_jsonl(records: &[TheoryRecord]) -> HarnessResult<String> {
    let mut s = String::new();
    for r in records {
        s.push_str(&serde_json::to_string(r)?);
        s.push('\n');
    }
    Ok(s)
}
