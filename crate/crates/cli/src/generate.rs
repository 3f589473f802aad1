use std::path::PathBuf;

use clap::Args;
use serde::Serialize;
use spanvi::analysis::{certify, Certificate};
use spanvi::generators::{random_ergodic_instance, tight_gamma_mdp, GeneratorSpec};
use spanvi::io::mdp_to_json;
use spanvi::{DiscountSpec, Policy, ValueVector};

use crate::common::{sha256_hex, to_json, try_oracle, write_output, CliError, CliResult};

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Number of states.
    #[arg(long)]
    pub n: usize,
    /// Number of actions.
    #[arg(long, default_value_t = 4)]
    pub m: usize,
    #[arg(long, env = "SPANVI_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Discount factor; omit together with --average for the average criterion.
    #[arg(long, conflicts_with = "average")]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub average: bool,
    #[arg(long, default_value_t = 0.5)]
    pub density: f64,
    #[arg(long, default_value_t = 0.0)]
    pub reward_min: f64,
    #[arg(long, default_value_t = 1.0)]
    pub reward_max: f64,
    /// Smallest acceptable action gap.
    #[arg(long)]
    pub min_gap: Option<f64>,
    /// Emit the absorbing-state instance on which VI contracts at exactly gamma.
    #[arg(long)]
    pub tight_gamma: bool,
    /// Fixture path; the provenance sidecar goes next to it.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Serialize)]
struct Provenance<'a> {
    generator: &'static str,
    seed: u64,
    spec: Option<&'a GeneratorSpec>,
    criterion: DiscountSpec,
    fixture_sha256: String,
    attempts: Option<usize>,
    delta: Option<f64>,
    tau: Option<f64>,
    tau_deficit: Option<f64>,
    n_mix: Option<usize>,
    gain: Option<f64>,
    v_star: Option<&'a ValueVector>,
    pi_star: Option<&'a Policy>,
    certificate: &'a Certificate,
}

pub fn run(args: &GenerateArgs) -> CliResult<()> {
    let criterion = match (args.gamma, args.average) {
        (Some(g), _) => DiscountSpec::discounted(g)?,
        (None, true) => DiscountSpec::Average,
        (None, false) => {
            return Err(CliError::Input("pass --gamma <value> or --average".into()));
        }
    };
    let spec = GeneratorSpec {
        n_states: args.n,
        n_actions: args.m,
        seed: args.seed,
        density: args.density,
        reward_range: (args.reward_min, args.reward_max),
        min_gap: args.min_gap,
    };
    let (mdp, optimum, attempts) = if args.tight_gamma {
        let DiscountSpec::Discounted { gamma } = criterion else {
            return Err(CliError::Input("--tight-gamma needs --gamma".into()));
        };
        let mdp = tight_gamma_mdp(args.n, gamma)?;
        let opt = try_oracle(&mdp, criterion)
            .ok_or_else(|| CliError::Internal("tight-gamma instance has no solution".into()))?;
        (mdp, opt, None)
    } else {
        let inst = random_ergodic_instance(&spec, criterion)?;
        (inst.mdp, inst.optimum, Some(inst.attempts))
    };

    let json = mdp_to_json(&mdp);
    let out = args.out.clone().unwrap_or_else(|| {
        PathBuf::from(if args.tight_gamma {
            format!("tight-gamma-n{}.json", args.n)
        } else {
            format!("mdp-n{}-m{}-seed{}.json", args.n, args.m, args.seed)
        })
    });
    write_output(&out, &json)?;

    let certificate = certify(&mdp, criterion, &optimum);
    let constants = certificate.constants.as_ref();
    let provenance = Provenance {
        generator: if args.tight_gamma { "tight_gamma" } else { "random_ergodic" },
        seed: args.seed,
        spec: (!args.tight_gamma).then_some(&spec),
        criterion,
        fixture_sha256: sha256_hex(json.as_bytes()),
        attempts,
        delta: certificate.assumptions.delta,
        tau: constants.map(|c| c.tau),
        tau_deficit: constants.map(|c| c.tau_deficit),
        n_mix: certificate.assumptions.ergodic.n_mix,
        gain: optimum.gain,
        v_star: Some(&optimum.values),
        pi_star: Some(&optimum.policy),
        certificate: &certificate,
    };
    let sidecar = crate::common::sibling(&out, "provenance.json");
    write_output(&sidecar, to_json(&provenance))?;

    println!("fixture: {}", out.display());
    println!("provenance: {}", sidecar.display());
    print!("{}", to_json(&certificate));
    Ok(())
}
