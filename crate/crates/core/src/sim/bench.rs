//! Handler-level timing of the two protocol flows.
//!
//! Nine measured steps: five for the authentication flow (1.1–1.5) and
//! four for certificate enrollment (2.1–2.4), each step being exactly one
//! state-machine handler on one side. Odd-looking but deliberate: the EC
//! steps (2.1 key generation, 2.2 issuance, 2.3 public-key reconstruction)
//! should tower over the symmetric steps — that gap is the argument for
//! keeping routine re-authentication purely symmetric and reserving
//! certificate work for rare events.
//!
//! Two modes measure the same boundaries: `InMemory` calls the handlers
//! directly; `Tcp` puts a real socket between the parties (one thread per
//! node) while still timing only the handler execution, so transport cost
//! never pollutes the numbers — it only adds realistic scheduling noise.

use std::net::{TcpListener, TcpStream};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::ec::AlgorithmId;
use crate::error::ProtocolError;
use crate::ids::DeviceId;
use crate::roles::device::Device;
use crate::roles::sed::Sed;
use crate::roles::{DeviceIdentity, Role};
use crate::transport::{read_frame_from, write_frame_to};
use crate::wire::{MsgType, ProtocolMessage};

use super::SIM_EPOCH;

/// The nine measured steps, in flow order. Steps 1.x time one
/// authentication cycle, steps 2.x one certificate enrollment; "BMS" names
/// the supplicant side (a control unit behaves identically).
pub const STEP_LABELS: [&str; 9] = [
    "1.1 Prepare req. to SED",
    "1.2 Handle req. from BMS",
    "1.3 Handle chg. & reply",
    "1.4 Verify resp. from BMS",
    "1.5 Config. & key update",
    "2.1 Prepare cert. req.",
    "2.2 Handle req. & cert.",
    "2.3 Pub. key calculation",
    "2.4 Receive config. Ack",
];

/// Which steps run on the SED and which on the supplicant.
const SED_STEPS: [usize; 4] = [1, 3, 6, 8];
const DEVICE_STEPS: [usize; 5] = [0, 2, 4, 5, 7];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BenchMode {
    /// Direct handler calls, single thread.
    InMemory,
    /// Loopback TCP, one thread per party, same measurement boundaries.
    Tcp,
}

impl BenchMode {
    pub fn name(self) -> &'static str {
        match self {
            BenchMode::InMemory => "in-memory",
            BenchMode::Tcp => "tcp",
        }
    }
}

impl std::fmt::Display for BenchMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimingRow {
    pub label: &'static str,
    pub mean_us: f64,
    pub stddev_us: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimingReport {
    pub mode: BenchMode,
    pub algorithm: AlgorithmId,
    pub runs: usize,
    /// Always exactly nine rows, in [`STEP_LABELS`] order.
    pub rows: Vec<TimingRow>,
}

impl TimingReport {
    /// Fixed-width table for terminal output.
    pub fn table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "transport: {}, curve: {}, {} runs\n",
            self.mode,
            crate::ec::algorithm_name(self.algorithm),
            self.runs
        ));
        out.push_str(&format!(
            "{:<28} {:>12} {:>14} {:>9}\n",
            "flow step", "mean (us)", "std dev (us)", "samples"
        ));
        for row in &self.rows {
            out.push_str(&format!(
                "{:<28} {:>12.1} {:>14.1} {:>9}\n",
                row.label, row.mean_us, row.stddev_us, row.samples
            ));
        }
        out
    }

    /// Machine-readable form: `step,mean_us,stddev_us,samples`.
    pub fn csv(&self) -> String {
        let mut out = String::from("step,mean_us,stddev_us,samples\n");
        for row in &self.rows {
            out.push_str(&format!(
                "{},{:.3},{:.3},{}\n",
                row.label, row.mean_us, row.stddev_us, row.samples
            ));
        }
        out
    }

    pub fn row(&self, label: &str) -> Option<&TimingRow> {
        self.rows.iter().find(|r| r.label == label)
    }
}

/// Runs `runs` full cycles of both flows and reports per-step timings.
pub fn bench_flows(
    mode: BenchMode,
    algorithm: AlgorithmId,
    runs: usize,
    seed: u64,
) -> Result<TimingReport, ProtocolError> {
    if runs == 0 {
        return Err(ProtocolError::Storage("need at least one run".into()));
    }
    let samples = match mode {
        BenchMode::InMemory => bench_in_memory(algorithm, runs, seed)?,
        BenchMode::Tcp => bench_tcp(algorithm, runs, seed)?,
    };
    let rows = STEP_LABELS
        .iter()
        .zip(&samples)
        .map(|(label, series)| {
            let (mean_us, stddev_us) = stats(series);
            TimingRow {
                label,
                mean_us,
                stddev_us,
                samples: series.len(),
            }
        })
        .collect();
    Ok(TimingReport {
        mode,
        algorithm,
        runs,
        rows,
    })
}

fn stats(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let stddev = if samples.len() < 2 {
        0.0
    } else {
        (samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    (mean, stddev)
}

fn micros(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e6
}

const BENCH_SECRET: [u8; 32] = [0xB5; 32];
const BENCH_DEVICE: DeviceId = DeviceId(*b"bms-0001");
const BENCH_SED: DeviceId = DeviceId(*b"sed-0001");

fn bench_in_memory(
    algorithm: AlgorithmId,
    runs: usize,
    seed: u64,
) -> Result<[Vec<f64>; 9], ProtocolError> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut sed = Sed::new(BENCH_SED, algorithm, true, &mut rng)?;
    let identity = DeviceIdentity::new(BENCH_DEVICE, Role::Bms, BENCH_SECRET)
        .map_err(ProtocolError::Provisioning)?;
    let mut device = Device::new(identity, true);
    sed.register_device(BENCH_DEVICE, Role::Bms, BENCH_SECRET)?;

    let mut samples: [Vec<f64>; 9] = std::array::from_fn(|_| Vec::with_capacity(runs));
    for run in 0..runs {
        let now = SIM_EPOCH + run as u64;

        let t = Instant::now();
        let hello = device.start_auth()?;
        samples[0].push(micros(t));

        let t = Instant::now();
        let challenge = sed.handle_frame(&hello, now, &mut rng)?;
        samples[1].push(micros(t));

        let t = Instant::now();
        let response = device.handle_frame(&challenge[0], now, &mut rng)?;
        samples[2].push(micros(t));

        let t = Instant::now();
        let config = sed.handle_frame(&response[0], now, &mut rng)?;
        samples[3].push(micros(t));

        let t = Instant::now();
        let confirm = device.handle_frame(&config[0], now, &mut rng)?;
        samples[4].push(micros(t));

        // Close the cycle; bookkeeping on the SED, not a measured step.
        sed.handle_frame(&confirm[0], now, &mut rng)?;

        let t = Instant::now();
        let request = device.start_cert(&mut rng)?;
        samples[5].push(micros(t));

        let t = Instant::now();
        let cert_response = sed.handle_frame(&request, now, &mut rng)?;
        samples[6].push(micros(t));

        let t = Instant::now();
        let ack = device.handle_frame(&cert_response[0], now, &mut rng)?;
        samples[7].push(micros(t));

        let t = Instant::now();
        sed.handle_frame(&ack[0], now, &mut rng)?;
        samples[8].push(micros(t));
    }
    Ok(samples)
}

fn io_err(context: &str, e: std::io::Error) -> ProtocolError {
    ProtocolError::Storage(format!("{context}: {e}"))
}

fn bench_tcp(
    algorithm: AlgorithmId,
    runs: usize,
    seed: u64,
) -> Result<[Vec<f64>; 9], ProtocolError> {
    let listener =
        TcpListener::bind("127.0.0.1:0").map_err(|e| io_err("binding bench listener", e))?;
    let addr = listener
        .local_addr()
        .map_err(|e| io_err("reading bench address", e))?;

    // The SED node: answers frames as they come, timing only its own
    // handler executions, until the peer hangs up.
    let sed_thread = std::thread::spawn(move || -> Result<[Vec<f64>; 4], ProtocolError> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0x5ED);
        let mut sed = Sed::new(BENCH_SED, algorithm, true, &mut rng)?;
        sed.register_device(BENCH_DEVICE, Role::Bms, BENCH_SECRET)?;
        let (mut stream, _) = listener
            .accept()
            .map_err(|e| io_err("accepting bench peer", e))?;

        let mut samples: [Vec<f64>; 4] = std::array::from_fn(|_| Vec::new());
        let mut cycle = 0u64;
        loop {
            let bytes = match read_frame_from(&mut stream) {
                Ok(b) => b,
                Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => break,
                Err(e) => return Err(io_err("reading bench frame", e)),
            };
            let msg = ProtocolMessage::parse(&bytes)?;
            if msg.msg_type == MsgType::AuthHello {
                cycle += 1;
            }
            let now = SIM_EPOCH + cycle;

            let t = Instant::now();
            let replies = sed.handle_frame(&msg, now, &mut rng)?;
            let elapsed = micros(t);
            match msg.msg_type {
                MsgType::AuthHello => samples[0].push(elapsed),
                MsgType::AuthResponse => samples[1].push(elapsed),
                MsgType::CertRequest => samples[2].push(elapsed),
                MsgType::CertAck => samples[3].push(elapsed),
                _ => {}
            }
            for reply in &replies {
                write_frame_to(&mut stream, &reply.frame()?)
                    .map_err(|e| io_err("writing bench reply", e))?;
            }
        }
        Ok(samples)
    });

    // The supplicant node, on this thread.
    let device_result = (|| -> Result<[Vec<f64>; 5], ProtocolError> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0xB35);
        let identity = DeviceIdentity::new(BENCH_DEVICE, Role::Bms, BENCH_SECRET)
            .map_err(ProtocolError::Provisioning)?;
        let mut device = Device::new(identity, true);
        let mut stream =
            TcpStream::connect(addr).map_err(|e| io_err("connecting to bench SED", e))?;

        let mut exchange = |frame: &ProtocolMessage,
                            expect_reply: bool|
         -> Result<Option<ProtocolMessage>, ProtocolError> {
            write_frame_to(&mut stream, &frame.frame()?)
                .map_err(|e| io_err("writing bench frame", e))?;
            if !expect_reply {
                return Ok(None);
            }
            let bytes =
                read_frame_from(&mut stream).map_err(|e| io_err("reading bench reply", e))?;
            Ok(Some(ProtocolMessage::parse(&bytes)?))
        };

        let mut samples: [Vec<f64>; 5] = std::array::from_fn(|_| Vec::with_capacity(runs));
        for run in 0..runs {
            let now = SIM_EPOCH + 1 + run as u64;

            let t = Instant::now();
            let hello = device.start_auth()?;
            samples[0].push(micros(t));
            let challenge = exchange(&hello, true)?.expect("challenge expected");

            let t = Instant::now();
            let response = device.handle_frame(&challenge, now, &mut rng)?;
            samples[1].push(micros(t));
            let config = exchange(&response[0], true)?.expect("config expected");

            let t = Instant::now();
            let confirm = device.handle_frame(&config, now, &mut rng)?;
            samples[2].push(micros(t));
            exchange(&confirm[0], false)?;

            let t = Instant::now();
            let request = device.start_cert(&mut rng)?;
            samples[3].push(micros(t));
            let cert_response = exchange(&request, true)?.expect("certificate expected");

            let t = Instant::now();
            let ack = device.handle_frame(&cert_response, now, &mut rng)?;
            samples[4].push(micros(t));
            exchange(&ack[0], false)?;
        }
        Ok(samples)
    })();

    let sed_samples = sed_thread
        .join()
        .map_err(|_| ProtocolError::Storage("bench SED thread panicked".into()))??;
    let device_samples = device_result?;

    // Interleave the two nodes' series back into flow order.
    let mut all: [Vec<f64>; 9] = std::array::from_fn(|_| Vec::new());
    for (series, &step) in device_samples.into_iter().zip(&DEVICE_STEPS) {
        all[step] = series;
    }
    for (series, &step) in sed_samples.into_iter().zip(&SED_STEPS) {
        all[step] = series;
    }
    Ok(all)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ec::algorithm_by_name;

    #[test]
    fn in_memory_bench_yields_nine_full_rows() {
        let alg = algorithm_by_name("toy17").unwrap();
        let report = bench_flows(BenchMode::InMemory, alg, 5, 11).unwrap();
        assert_eq!(report.rows.len(), 9);
        for (row, label) in report.rows.iter().zip(STEP_LABELS) {
            assert_eq!(row.label, label);
            assert_eq!(row.samples, 5, "{label}");
            assert!(row.mean_us.is_finite() && row.mean_us >= 0.0, "{label}");
            assert!(row.stddev_us.is_finite() && row.stddev_us >= 0.0, "{label}");
        }
        let table = report.table();
        assert!(table.contains("1.5 Config. & key update"), "{table}");
        assert_eq!(report.csv().lines().count(), 10);
    }

    #[test]
    fn tcp_bench_measures_the_same_nine_steps() {
        let alg = algorithm_by_name("toy17").unwrap();
        let report = bench_flows(BenchMode::Tcp, alg, 3, 12).unwrap();
        assert_eq!(report.rows.len(), 9);
        for row in &report.rows {
            assert_eq!(row.samples, 3, "{}", row.label);
        }
    }

    #[test]
    fn zero_runs_is_refused() {
        let alg = algorithm_by_name("toy17").unwrap();
        assert!(bench_flows(BenchMode::InMemory, alg, 0, 1).is_err());
    }
}
