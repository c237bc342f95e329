mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, Parser, Subcommand};

use calderon::weights::parse_real;

#[derive(Parser, Debug)]
#[command(name = "calderon", version, about = "Weighted dyadic sequence space experiments")]
#[command(args_override_self = true)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalOpts,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct GlobalOpts {
    /// Seed of the instance generator.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Reduced sizes (suite) or batch sizes (other commands).
    #[arg(long, global = true)]
    pub quick: bool,
    /// Output directory; defaults to $CALDERON_OUT_DIR, else stdout/stderr.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Config file with `key = value` lines; command-line flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Quadrature tolerance for weight masses.
    #[arg(long = "quad-tol", global = true, default_value_t = calderon::weights::DEFAULT_QUAD_TOL)]
    pub quad_tol: f64,
}

pub fn real(s: &str) -> Result<f64, String> {
    parse_real(s).map_err(|e| e.to_string())
}

#[derive(Args, Debug, Clone)]
pub struct WindowArgs {
    /// Dimension.
    #[arg(long, default_value_t = 1)]
    pub d: usize,
    /// Finest level.
    #[arg(long = "J", default_value_t = 4)]
    pub j: u32,
    /// Half extent: the window covers [-K, K)^d.
    #[arg(long = "K", default_value_t = 1)]
    pub k: u32,
}

#[derive(Args, Debug, Clone)]
pub struct SpaceArgs {
    #[arg(long, default_value = "0", value_parser = real, allow_hyphen_values = true)]
    pub s: f64,
    #[arg(long, default_value = "2", value_parser = real)]
    pub p: f64,
    #[arg(long, default_value = "2", value_parser = real)]
    pub q: f64,
    /// F or B.
    #[arg(long, default_value = "F")]
    pub scale: calderon::Scale,
    /// Weight spec, e.g. `const:1`, `power:0.5`, `exp:-1`, `cells:<file>`.
    #[arg(long, default_value = "const:1", allow_hyphen_values = true)]
    pub weight: String,
}

#[derive(Args, Debug, Clone)]
pub struct CoupleArgs {
    #[arg(long, default_value = "0", value_parser = real, allow_hyphen_values = true)]
    pub s0: f64,
    #[arg(long, default_value = "1", value_parser = real)]
    pub p0: f64,
    #[arg(long, default_value = "2", value_parser = real)]
    pub q0: f64,
    #[arg(long, default_value = "const:1", allow_hyphen_values = true)]
    pub w0: String,
    #[arg(long, default_value = "0", value_parser = real, allow_hyphen_values = true)]
    pub s1: f64,
    #[arg(long, default_value = "2", value_parser = real)]
    pub p1: f64,
    #[arg(long, default_value = "2", value_parser = real)]
    pub q1: f64,
    #[arg(long, default_value = "const:1", allow_hyphen_values = true)]
    pub w1: String,
    #[arg(long, default_value = "0.5", value_parser = real)]
    pub theta: f64,
}

#[derive(Args, Debug, Clone)]
pub struct InputArgs {
    /// Sequence file (`j k.. re [im]` records, optional `window d J K` header).
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Number of random instances when no input is given.
    #[arg(long, default_value_t = 20)]
    pub batch: usize,
    /// Random shape: `dense` or `sparse:N`, optionally `levels A..B` and `complex`.
    #[arg(long, default_value = "sparse:8")]
    pub shape: String,
}

#[derive(Args, Debug, Clone)]
pub struct OracleArgs {
    #[arg(long = "support-cap", default_value_t = calderon::calderon::DEFAULT_SUPPORT_CAP)]
    pub support_cap: usize,
    #[arg(long = "oracle-tol", default_value_t = calderon::calderon::DEFAULT_ORACLE_TOL)]
    pub oracle_tol: f64,
    #[arg(long, default_value_t = calderon::calderon::DEFAULT_ORACLE_STARTS)]
    pub starts: usize,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Norms of sequences in one space.
    Norm {
        #[command(flatten)]
        space: SpaceArgs,
        #[command(flatten)]
        window: WindowArgs,
        #[command(flatten)]
        input: InputArgs,
    },
    /// f-space factorization through level sets.
    FactorizeF {
        #[command(flatten)]
        couple: CoupleArgs,
        #[command(flatten)]
        window: WindowArgs,
        #[command(flatten)]
        input: InputArgs,
        #[arg(long = "recon-tol", default_value_t = 1e-12)]
        recon_tol: f64,
    },
    /// Closed-form b-space factorization (y tables are the weight masses).
    FactorizeB {
        #[command(flatten)]
        couple: CoupleArgs,
        #[command(flatten)]
        window: WindowArgs,
        #[command(flatten)]
        input: InputArgs,
        #[arg(long = "constant-tol", default_value_t = 1e-9)]
        constant_tol: f64,
    },
    /// Factorization of cellwise constant functions in weighted L_p.
    FactorizeLp {
        #[command(flatten)]
        couple: CoupleArgs,
        #[command(flatten)]
        window: WindowArgs,
        /// Cell-function file; random functions otherwise.
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long, default_value_t = 20)]
        batch: usize,
        #[arg(long = "norm-tol", default_value_t = 1e-10)]
        norm_tol: f64,
    },
    /// Brute-force Calderón-product norm, compared with the constructive factorization.
    Oracle {
        #[command(flatten)]
        couple: CoupleArgs,
        #[arg(long, default_value = "F")]
        scale: calderon::Scale,
        #[command(flatten)]
        window: WindowArgs,
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        oracle: OracleArgs,
        #[arg(long = "sandwich-tol", default_value_t = 1e-6)]
        sandwich_tol: f64,
    },
    /// Hölder inequality for products of two sequences.
    Holder {
        #[command(flatten)]
        couple: CoupleArgs,
        #[arg(long, default_value = "F")]
        scale: calderon::Scale,
        #[command(flatten)]
        window: WindowArgs,
        #[command(flatten)]
        input: InputArgs,
        /// Second factor; random partners otherwise.
        #[arg(long)]
        input1: Option<PathBuf>,
        #[arg(long = "slack", default_value_t = 1e-10)]
        slack: f64,
    },
    /// Sampled A_p or local A_p constant of a weight.
    Apconst {
        #[arg(long, default_value = "const:1", allow_hyphen_values = true)]
        weight: String,
        #[arg(long, default_value = "2", value_parser = real)]
        p: f64,
        #[arg(long, default_value_t = 1)]
        d: usize,
        /// Global balls (radii up to 2^refinements) instead of local ones.
        #[arg(long)]
        global: bool,
        #[arg(long, default_value_t = 8)]
        refinements: u32,
        /// Local ball centers range over [-extent, extent]^d.
        #[arg(long, default_value = "2", value_parser = real)]
        extent: f64,
        /// Expected verdict: `bounded` or `diverging`.
        #[arg(long)]
        expect: Option<String>,
        #[arg(long, default_value_t = 1e3)]
        bound: f64,
    },
    /// Per-cube comparability of a weight pair with its combination.
    Wclass {
        #[arg(long, default_value = "const:1", allow_hyphen_values = true)]
        w0: String,
        #[arg(long, default_value = "const:1", allow_hyphen_values = true)]
        w1: String,
        #[arg(long, default_value = "0.5", value_parser = real)]
        theta: f64,
        #[arg(long, default_value = "2", value_parser = real)]
        p0: f64,
        #[arg(long, default_value = "2", value_parser = real)]
        p1: f64,
        #[command(flatten)]
        window: WindowArgs,
        /// Fail when the minimal ratio is not above this floor.
        #[arg(long)]
        floor: Option<f64>,
    },
    /// Vector-valued local maximal ratio for random or given families.
    Maximal {
        #[arg(long, default_value = "const:1", allow_hyphen_values = true)]
        weight: String,
        #[arg(long, default_value = "2", value_parser = real)]
        p: f64,
        #[arg(long, default_value = "2", value_parser = real)]
        q: f64,
        #[command(flatten)]
        window: WindowArgs,
        /// Cell-function files forming one family.
        #[arg(long = "input", num_args = 1..)]
        inputs: Vec<PathBuf>,
        #[arg(long, default_value_t = 20)]
        batch: usize,
        #[arg(long = "family-size", default_value_t = 3)]
        family_size: usize,
        #[arg(long, default_value_t = 4)]
        terms: usize,
    },
    /// Gap witness sequence and its cutoff profile.
    Gap {
        #[arg(long, default_value_t = 1)]
        d: usize,
        #[arg(long, default_value = "0", value_parser = real, allow_hyphen_values = true)]
        s0: f64,
        #[arg(long, default_value = "0", value_parser = real, allow_hyphen_values = true)]
        s1: f64,
        #[arg(long, default_value = "1", value_parser = real)]
        p0: f64,
        #[arg(long, default_value = "2", value_parser = real)]
        p1: f64,
        #[arg(long, default_value = "0.5", value_parser = real)]
        theta: f64,
        #[arg(long = "J", default_value_t = 8)]
        j: u32,
        #[arg(long = "K", default_value_t = 1)]
        k: u32,
    },
    /// Embedding-chain ratios.
    Embed {
        #[arg(long, default_value = "1", value_parser = real, allow_hyphen_values = true)]
        s0: f64,
        #[arg(long, default_value = "1", value_parser = real)]
        p0: f64,
        #[arg(long, default_value = "0", value_parser = real, allow_hyphen_values = true)]
        s1: f64,
        #[arg(long, default_value = "2", value_parser = real)]
        p1: f64,
        #[arg(long, default_value = "0.5", value_parser = real)]
        theta: f64,
        #[arg(long, default_value = "const:1", allow_hyphen_values = true)]
        weight: String,
        #[command(flatten)]
        window: WindowArgs,
        #[command(flatten)]
        input: InputArgs,
    },
    /// The acceptance suite.
    Suite {
        /// Criterion ids to run (all by default).
        #[arg(long, value_delimiter = ',')]
        criteria: Vec<u8>,
    },
}

fn main() -> ExitCode {
    let names: Vec<String> = Cli::command()
        .get_subcommands()
        .map(|c| c.get_name().to_string())
        .collect();
    let names: Vec<&str> = names.iter().map(String::as_str).collect();
    let args = match config::merge_config(std::env::args_os().collect(), &names) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match commands::run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
