//! The manufacturing step: mint one fabrication secret per device, store
//! each in its own file, and seed the authenticator's ledger with the
//! matching registrations. Runs once per fleet; `--force` is required to
//! redo it.

use std::fs;
use std::path::PathBuf;

use clap::Args;
use rand::Rng;
use sedauth::ec::algorithm_name;
use sedauth::ids::DeviceId;
use sedauth::roles::{Role, Sed, FAB_SECRET_LEN};

use crate::common::{
    config_err, io_err, make_rng, parse_curve, show_fingerprint, write_secret_file, CliError,
};

#[derive(Args)]
pub struct ProvisionArgs {
    /// Directory that receives the secret files and the ledger
    #[arg(long, value_name = "DIR")]
    out: PathBuf,

    /// Device id of the authenticator itself
    #[arg(long, default_value = "sed-0001", value_name = "ID")]
    id: String,

    /// Curve suite (p256 or toy17)
    #[arg(long, default_value = "p256")]
    curve: String,

    /// Seed for reproducible secrets (testing only — secrets derived from
    /// a published seed protect nothing)
    #[arg(long)]
    seed: Option<u64>,

    /// Overwrite an existing ledger and secret files
    #[arg(long)]
    force: bool,

    /// Devices to fabricate, each as id:role (role: bms, control-unit/cu)
    #[arg(value_name = "ID:ROLE", required = true)]
    devices: Vec<String>,
}

/// One requested device, parsed from an `id:role` token.
struct DeviceRequest {
    name: String,
    id: DeviceId,
    role: Role,
}

fn parse_device(token: &str) -> Result<DeviceRequest, CliError> {
    let (name, role) = token
        .split_once(':')
        .ok_or_else(|| config_err(format!("device {token:?} is not of the form id:role")))?;
    let id = DeviceId::parse(name).map_err(CliError::Config)?;
    let role: Role = role
        .parse()
        .map_err(|_| config_err(format!("unknown role in {token:?} (use bms or control-unit)")))?;
    if role == Role::Sed {
        return Err(config_err(
            "the authenticator is not provisioned as a device; its identity comes from --id",
        ));
    }
    Ok(DeviceRequest {
        name: name.to_string(),
        id,
        role,
    })
}

pub fn cmd_provision(args: ProvisionArgs) -> Result<(), CliError> {
    let algorithm = parse_curve(&args.curve)?;
    let sed_id = DeviceId::parse(&args.id).map_err(CliError::Config)?;

    let mut requests = Vec::new();
    for token in &args.devices {
        requests.push(parse_device(token)?);
    }
    // Quadratic duplicate scan; fleets are tens of devices, not millions.
    for i in 0..requests.len() {
        for j in i + 1..requests.len() {
            if requests[i].id == requests[j].id {
                return Err(config_err(format!(
                    "device id {} requested twice",
                    requests[i].name
                )));
            }
        }
    }

    fs::create_dir_all(&args.out)
        .map_err(|e| io_err(&format!("cannot create {}", args.out.display()), e))?;

    // Refuse to clobber: check every target up front so a partial fleet is
    // never silently mixed with an old one.
    let ledger_path = args.out.join("sed.ledger");
    let mut targets = vec![ledger_path.clone()];
    targets.extend(
        requests
            .iter()
            .map(|r| args.out.join(format!("{}.secret", r.name))),
    );
    let existing: Vec<String> = targets
        .iter()
        .filter(|p| p.exists())
        .map(|p| p.display().to_string())
        .collect();
    if !existing.is_empty() {
        if !args.force {
            return Err(config_err(format!(
                "refusing to overwrite {} (pass --force to replace)",
                existing.join(", ")
            )));
        }
        for path in &targets {
            if path.exists() {
                fs::remove_file(path)
                    .map_err(|e| io_err(&format!("cannot remove {}", path.display()), e))?;
            }
        }
    }

    let mut rng = make_rng(args.seed);
    // Ratcheting is a runtime choice made by `run`; the ledger seed is the
    // same either way.
    let mut sed = Sed::create_persistent(&ledger_path, sed_id, algorithm, true, &mut rng)?;

    for request in &requests {
        let mut secret = [0u8; FAB_SECRET_LEN];
        rng.fill_bytes(&mut secret);
        sed.register_device(request.id, request.role, secret)?;
        let path = args.out.join(format!("{}.secret", request.name));
        write_secret_file(&path, &secret)?;
        println!(
            "provisioned {} ({}): secret fingerprint {}, file {}",
            request.id,
            request.role,
            show_fingerprint(&secret),
            path.display()
        );
    }

    println!(
        "authenticator {} on curve {}: ledger {} ({} device{})",
        sed_id,
        algorithm_name(algorithm),
        ledger_path.display(),
        requests.len(),
        if requests.len() == 1 { "" } else { "s" }
    );
    Ok(())
}
