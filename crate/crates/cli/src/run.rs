//! Live nodes over TCP.
//!
//! * `--role sed`: load the ledger, listen, and serve authentication and
//!   certification flows — one thread per connection, the ledger behind a
//!   mutex. Runs until killed.
//! * `--role bms` / `--role control-unit`: connect to the SED, complete
//!   authentication then certification, and print the resulting state.
//!   A control unit given `--peer` then initiates a certificate-based
//!   session with that address and sends one sealed demo message; a BMS
//!   given `--listen` answers exactly one such session.
//!
//! Everything printed is safe to capture: key material only ever appears
//! as fingerprints.

use std::io::Read;
use std::net::{TcpListener, TcpStream};
use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::thread;

use clap::Args;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use sedauth::ec::algorithm_name;
use sedauth::ids::DeviceId;
use sedauth::roles::{Credential, Device, DeviceIdentity, DeviceStatus, Role, Sed, SessionContext};
use sedauth::transport::{read_blob, read_frame_from, write_blob, write_frame_to};
use sedauth::wire::ProtocolMessage;

use crate::common::{
    config_err, io_err, make_rng, read_secret_file, wall_clock, CliError,
};

#[derive(Args)]
pub struct RunArgs {
    /// Node role: sed, bms, or control-unit
    #[arg(long)]
    role: String,

    /// Address to listen on (sed; optionally bms, to answer one peer session)
    #[arg(long, value_name = "ADDR")]
    listen: Option<String>,

    /// SED address to authenticate against (bms, control-unit)
    #[arg(long, value_name = "ADDR")]
    connect: Option<String>,

    /// Own device id
    #[arg(long, value_name = "ID")]
    id: String,

    /// Fabrication secret file from provisioning (bms, control-unit)
    #[arg(long, value_name = "FILE")]
    secret_file: Option<PathBuf>,

    /// Ledger file from provisioning (sed)
    #[arg(long, value_name = "FILE")]
    ledger: Option<PathBuf>,

    /// After certification, establish a session with this peer address and
    /// send one sealed demo message (control-unit)
    #[arg(long, value_name = "ADDR")]
    peer: Option<String>,

    /// Write the issued certificate to this file after certification
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,

    /// Seed for reproducible protocol randomness (testing)
    #[arg(long)]
    seed: Option<u64>,

    /// Disable key ratcheting (testing only; weakens forward secrecy)
    #[arg(long)]
    no_ratchet: bool,
}

pub fn cmd_run(args: RunArgs) -> Result<(), CliError> {
    let role: Role = args
        .role
        .parse()
        .map_err(|_| config_err(format!("unknown role {:?} (sed, bms, control-unit)", args.role)))?;
    match role {
        Role::Sed => run_sed(args),
        Role::Bms | Role::ControlUnit => run_device(args, role),
    }
}

// ---------------------------------------------------------------------------
// SED server

fn run_sed(args: RunArgs) -> Result<(), CliError> {
    let ledger = args
        .ledger
        .as_ref()
        .ok_or_else(|| config_err("--role sed requires --ledger"))?;
    let listen = args
        .listen
        .as_ref()
        .ok_or_else(|| config_err("--role sed requires --listen"))?;
    if args.connect.is_some() || args.secret_file.is_some() || args.peer.is_some() {
        return Err(config_err(
            "--connect, --secret-file, and --peer do not apply to --role sed",
        ));
    }

    let sed = Sed::from_ledger_file(ledger, !args.no_ratchet)?;
    let device_count = sed.devices().count();
    println!(
        "SED {} serving on {} (curve {}, {} device{}, ratchet {})",
        sed.sed_id(),
        listen,
        algorithm_name(sed.algorithm_id()),
        device_count,
        if device_count == 1 { "" } else { "s" },
        if args.no_ratchet { "off" } else { "on" },
    );

    let listener =
        TcpListener::bind(listen).map_err(|e| io_err(&format!("cannot listen on {listen}"), e))?;
    let shared = Arc::new(Mutex::new(sed));
    let base_seed = args.seed;

    for (conn_index, incoming) in listener.incoming().enumerate() {
        let stream = match incoming {
            Ok(s) => s,
            Err(e) => {
                eprintln!("accept failed: {e}");
                continue;
            }
        };
        let shared = Arc::clone(&shared);
        // Each connection gets an independent stream; under an explicit
        // seed the sequence still depends only on connection order.
        let mut rng = match base_seed {
            Some(seed) => ChaCha20Rng::seed_from_u64(seed ^ (conn_index as u64).wrapping_add(1)),
            None => make_rng(None),
        };
        thread::spawn(move || {
            let peer = stream
                .peer_addr()
                .map(|a| a.to_string())
                .unwrap_or_else(|_| "<unknown>".into());
            if let Err(e) = serve_connection(stream, &shared, &mut rng) {
                eprintln!("[{peer}] closed: {e}");
            }
        });
    }
    Ok(())
}

/// Serves one device connection until it hangs up or misbehaves. Any
/// protocol error ends the connection — the device sees EOF and reports
/// the failure on its side; the SED keeps serving everyone else.
fn serve_connection(
    mut stream: TcpStream,
    shared: &Arc<Mutex<Sed>>,
    rng: &mut ChaCha20Rng,
) -> Result<(), String> {
    loop {
        let frame = match read_frame_from(&mut stream) {
            Ok(f) => f,
            Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => return Ok(()),
            Err(e) => return Err(format!("read: {e}")),
        };
        let msg = ProtocolMessage::parse(&frame).map_err(|e| format!("bad frame: {e}"))?;
        let msg_name = msg.msg_type.name();
        let replies = {
            let mut sed = shared.lock().expect("no thread holding the ledger panics");
            sed.handle_frame(&msg, wall_clock(), rng)
                .map_err(|e| format!("{msg_name} rejected: {e}"))?
        };
        let reply_names: Vec<&str> = replies.iter().map(|r| r.msg_type.name()).collect();
        println!(
            "handled {msg_name} -> [{}]",
            reply_names.join(", ")
        );
        for reply in &replies {
            let bytes = reply.frame().map_err(|e| format!("encode: {e}"))?;
            write_frame_to(&mut stream, &bytes).map_err(|e| format!("write: {e}"))?;
        }
    }
}

// ---------------------------------------------------------------------------
// BMS / control-unit client

fn run_device(args: RunArgs, role: Role) -> Result<(), CliError> {
    let connect = args
        .connect
        .as_ref()
        .ok_or_else(|| config_err("device roles require --connect <SED address>"))?;
    let secret_file = args
        .secret_file
        .as_ref()
        .ok_or_else(|| config_err("device roles require --secret-file"))?;
    if args.ledger.is_some() {
        return Err(config_err("--ledger only applies to --role sed"));
    }
    if args.peer.is_some() && role != Role::ControlUnit {
        return Err(config_err("--peer only applies to --role control-unit"));
    }
    if args.listen.is_some() && role != Role::Bms {
        return Err(config_err(
            "--listen on a device only applies to --role bms (to answer a peer session)",
        ));
    }

    let device_id = DeviceId::parse(&args.id).map_err(CliError::Config)?;
    let secret = read_secret_file(secret_file)?;
    let identity =
        DeviceIdentity::new(device_id, role, secret).map_err(|m| config_err(m))?;
    let mut device = Device::new(identity, !args.no_ratchet);
    let mut rng = make_rng(args.seed);

    let mut stream = TcpStream::connect(connect)
        .map_err(|e| io_err(&format!("cannot connect to SED at {connect}"), e))?;
    println!("{role} {device_id} connected to SED at {connect}");

    // Authentication: drive until the device commits the new epoch.
    let hello = device.start_auth()?;
    send_frame(&mut stream, &hello)?;
    exchange_until(&mut stream, &mut device, &mut rng, DeviceStatus::Authenticated)?;
    println!(
        "authenticated: epoch {}, key fingerprint {}",
        device.epoch(),
        device.keys_fingerprint()
    );

    // Certification: one request/response under the fresh session.
    let request = device.start_cert(&mut rng)?;
    send_frame(&mut stream, &request)?;
    exchange_until(&mut stream, &mut device, &mut rng, DeviceStatus::Certified)?;
    let credential = device
        .credential()
        .expect("certified devices hold a credential");
    let cert = &credential.certificate;
    println!(
        "certified: subject {}, issuer {}, validity [{}, {}), curve {}",
        cert.meta.subject_id,
        cert.meta.issuer_id,
        cert.meta.valid_from,
        cert.meta.valid_to,
        algorithm_name(cert.meta.algorithm_id),
    );

    if let Some(path) = &args.out {
        let bytes = cert.encode().map_err(|e| CliError::Protocol(e.to_string()))?;
        std::fs::write(path, &bytes)
            .map_err(|e| io_err(&format!("cannot write {}", path.display()), e))?;
        println!("certificate written to {}", path.display());
    }

    // The SED's part is done; the peer session happens device-to-device.
    drop(stream);

    match role {
        Role::ControlUnit => {
            if let Some(peer) = &args.peer {
                initiate_peer_session(credential, peer, device_id, &mut rng)?;
            }
        }
        Role::Bms => {
            if let Some(listen) = &args.listen {
                answer_peer_session(credential, listen, &mut rng)?;
            }
        }
        Role::Sed => unreachable!("dispatched above"),
    }
    Ok(())
}

fn send_frame(stream: &mut TcpStream, msg: &ProtocolMessage) -> Result<(), CliError> {
    let bytes = msg
        .frame()
        .map_err(|e| CliError::Protocol(format!("cannot encode {}: {e}", msg.msg_type.name())))?;
    write_frame_to(stream, &bytes).map_err(|e| io_err("write to peer", e))
}

/// Reads, handles, and replies until the device reaches `target` status.
/// EOF before that means the far side rejected us.
fn exchange_until(
    stream: &mut TcpStream,
    device: &mut Device,
    rng: &mut ChaCha20Rng,
    target: DeviceStatus,
) -> Result<(), CliError> {
    while device.status() != target {
        let frame = match read_frame_from(stream) {
            Ok(f) => f,
            Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => {
                return Err(CliError::Protocol(
                    "the authenticator closed the connection (authentication failed?)".into(),
                ))
            }
            Err(e) => return Err(io_err("read from SED", e)),
        };
        let msg = ProtocolMessage::parse(&frame)
            .map_err(|e| CliError::Protocol(format!("bad frame from SED: {e}")))?;
        let replies = device.handle_frame(&msg, wall_clock(), rng)?;
        for reply in &replies {
            send_frame(stream, reply)?;
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Peer sessions (certificate-based, SED offline)

/// Control-unit side: connect, run the handshake, send one sealed message.
fn initiate_peer_session(
    credential: &Credential,
    peer_addr: &str,
    own_id: DeviceId,
    rng: &mut ChaCha20Rng,
) -> Result<(), CliError> {
    let mut stream = TcpStream::connect(peer_addr)
        .map_err(|e| io_err(&format!("cannot connect to peer at {peer_addr}"), e))?;
    let (mut ctx, hello) = SessionContext::initiate(credential)?;
    let bytes = hello
        .frame()
        .map_err(|e| CliError::Protocol(e.to_string()))?;
    write_frame_to(&mut stream, &bytes).map_err(|e| io_err("write to peer", e))?;

    while !ctx.is_established() {
        let frame = match read_frame_from(&mut stream) {
            Ok(f) => f,
            Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => {
                return Err(CliError::Protocol(
                    "peer closed the connection during the session handshake".into(),
                ))
            }
            Err(e) => return Err(io_err("read from peer", e)),
        };
        let msg = ProtocolMessage::parse(&frame)
            .map_err(|e| CliError::Protocol(format!("bad frame from peer: {e}")))?;
        let replies = ctx.handle_frame(&msg, wall_clock(), rng)?;
        for reply in &replies {
            let bytes = reply
                .frame()
                .map_err(|e| CliError::Protocol(e.to_string()))?;
            write_frame_to(&mut stream, &bytes).map_err(|e| io_err("write to peer", e))?;
        }
    }
    report_session(&ctx);

    let text = format!("hello from {own_id}");
    let sealed = ctx.seal_app(rng, text.as_bytes())?;
    write_blob(&mut stream, &sealed).map_err(|e| io_err("send sealed message", e))?;
    println!("sent sealed demo message ({} bytes on the wire)", sealed.len());

    // Wait for the peer to finish reading before tearing the socket down.
    let _ = stream.shutdown(std::net::Shutdown::Write);
    let mut sink = Vec::new();
    let _ = stream.read_to_end(&mut sink);
    Ok(())
}

/// BMS side: answer exactly one session, then print the unsealed message.
fn answer_peer_session(
    credential: &Credential,
    listen: &str,
    rng: &mut ChaCha20Rng,
) -> Result<(), CliError> {
    let listener = TcpListener::bind(listen)
        .map_err(|e| io_err(&format!("cannot listen on {listen}"), e))?;
    println!("awaiting one peer session on {listen}");
    let (mut stream, peer_addr) = listener.accept().map_err(|e| io_err("accept peer", e))?;
    println!("peer connected from {peer_addr}");

    let mut ctx = SessionContext::respond(credential)?;
    while !ctx.is_established() {
        let frame = match read_frame_from(&mut stream) {
            Ok(f) => f,
            Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => {
                return Err(CliError::Protocol(
                    "peer closed the connection during the session handshake".into(),
                ))
            }
            Err(e) => return Err(io_err("read from peer", e)),
        };
        let msg = ProtocolMessage::parse(&frame)
            .map_err(|e| CliError::Protocol(format!("bad frame from peer: {e}")))?;
        let replies = ctx.handle_frame(&msg, wall_clock(), rng)?;
        for reply in &replies {
            let bytes = reply
                .frame()
                .map_err(|e| CliError::Protocol(e.to_string()))?;
            write_frame_to(&mut stream, &bytes).map_err(|e| io_err("write to peer", e))?;
        }
    }
    report_session(&ctx);

    let blob = read_blob(&mut stream).map_err(|e| io_err("read sealed message", e))?;
    let plaintext = ctx.open_app(&blob)?;
    println!(
        "peer message: {:?}",
        String::from_utf8_lossy(&plaintext)
    );
    Ok(())
}

/// The line both sides print; fingerprints must match across processes.
fn report_session(ctx: &SessionContext) {
    let peer = ctx
        .peer_id()
        .map(|id| id.to_string())
        .unwrap_or_else(|| "<unknown>".into());
    let fingerprint = ctx.key_fingerprint().unwrap_or_else(|| "<none>".into());
    println!("session established with {peer}: key fingerprint {fingerprint}");
}
