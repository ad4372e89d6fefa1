//! Frame movement between role endpoints.
//!
//! The protocol needs nothing more than a bidirectional, ordered byte
//! stream. [`FrameTransport`] abstracts it to read-frame/write-frame;
//! the two implementations are an in-process pipe pair (used by tests and
//! threaded benchmarks) and any [`Read`]`+`[`Write`] stream such as a
//! [`TcpStream`] (used by the CLI).
//!
//! Frames are self-delimiting — the fixed header carries the payload
//! length — so stream transports read the 24-byte header first and then
//! exactly the declared payload. After session establishment the peers
//! exchange application blobs with a plain 4-byte length prefix instead;
//! [`read_blob`]/[`write_blob`] handle those.

use std::io::{self, Read, Write};
use std::net::{TcpListener, TcpStream, ToSocketAddrs};
use std::sync::mpsc::{channel, Receiver, RecvTimeoutError, Sender};
use std::time::Duration;

use crate::wire::{HEADER_LEN, MAGIC, MAX_PAYLOAD_LEN};

/// Upper bound on an application blob, to bound allocation on bad input.
pub const MAX_BLOB_LEN: usize = 1 << 20;

/// How long an in-memory pipe waits for its peer before giving up.
pub const PIPE_TIMEOUT: Duration = Duration::from_secs(10);

/// One protocol frame in, one protocol frame out.
pub trait FrameTransport {
    fn write_frame(&mut self, frame: &[u8]) -> io::Result<()>;
    fn read_frame(&mut self) -> io::Result<Vec<u8>>;
}

/// Reads exactly one frame from a byte stream: 24-byte header, then the
/// declared payload. Rejects bad magic and oversized declarations before
/// allocating.
pub fn read_frame_from<R: Read>(r: &mut R) -> io::Result<Vec<u8>> {
    let mut header = [0u8; HEADER_LEN];
    r.read_exact(&mut header)?;
    if header[0..2] != MAGIC {
        return Err(io::Error::new(
            io::ErrorKind::InvalidData,
            "bad frame magic",
        ));
    }
    let payload_len =
        u32::from_be_bytes(header[20..24].try_into().expect("4-byte slice")) as usize;
    if payload_len > MAX_PAYLOAD_LEN {
        return Err(io::Error::new(
            io::ErrorKind::InvalidData,
            "frame payload exceeds cap",
        ));
    }
    let mut frame = vec![0u8; HEADER_LEN + payload_len];
    frame[..HEADER_LEN].copy_from_slice(&header);
    r.read_exact(&mut frame[HEADER_LEN..])?;
    Ok(frame)
}

pub fn write_frame_to<W: Write>(w: &mut W, frame: &[u8]) -> io::Result<()> {
    w.write_all(frame)?;
    w.flush()
}

/// Length-prefixed application blob (4-byte big-endian length ‖ bytes),
/// used for sealed application messages once a session is up.
pub fn read_blob<R: Read>(r: &mut R) -> io::Result<Vec<u8>> {
    let mut len_bytes = [0u8; 4];
    r.read_exact(&mut len_bytes)?;
    let len = u32::from_be_bytes(len_bytes) as usize;
    if len > MAX_BLOB_LEN {
        return Err(io::Error::new(
            io::ErrorKind::InvalidData,
            "application blob exceeds cap",
        ));
    }
    let mut blob = vec![0u8; len];
    r.read_exact(&mut blob)?;
    Ok(blob)
}

pub fn write_blob<W: Write>(w: &mut W, blob: &[u8]) -> io::Result<()> {
    if blob.len() > MAX_BLOB_LEN {
        return Err(io::Error::new(
            io::ErrorKind::InvalidInput,
            "application blob exceeds cap",
        ));
    }
    w.write_all(&(blob.len() as u32).to_be_bytes())?;
    w.write_all(blob)?;
    w.flush()
}

/// [`FrameTransport`] over any ordered byte stream.
pub struct StreamTransport<S: Read + Write>(pub S);

impl<S: Read + Write> FrameTransport for StreamTransport<S> {
    fn write_frame(&mut self, frame: &[u8]) -> io::Result<()> {
        write_frame_to(&mut self.0, frame)
    }

    fn read_frame(&mut self) -> io::Result<Vec<u8>> {
        read_frame_from(&mut self.0)
    }
}

/// Dials a TCP peer and wraps the stream.
pub fn connect<A: ToSocketAddrs>(addr: A) -> io::Result<StreamTransport<TcpStream>> {
    Ok(StreamTransport(TcpStream::connect(addr)?))
}

/// Accepts one TCP peer and wraps the stream.
pub fn accept(listener: &TcpListener) -> io::Result<StreamTransport<TcpStream>> {
    let (stream, _) = listener.accept()?;
    Ok(StreamTransport(stream))
}

/// One end of an in-process duplex pipe. Frames arrive whole and in order,
/// mirroring what the byte-stream transport guarantees.
pub struct InMemoryPipe {
    tx: Sender<Vec<u8>>,
    rx: Receiver<Vec<u8>>,
}

/// Creates a connected pipe pair; what one end writes, the other reads.
pub fn pipe_pair() -> (InMemoryPipe, InMemoryPipe) {
    let (a_tx, b_rx) = channel();
    let (b_tx, a_rx) = channel();
    (
        InMemoryPipe { tx: a_tx, rx: a_rx },
        InMemoryPipe { tx: b_tx, rx: b_rx },
    )
}

impl FrameTransport for InMemoryPipe {
    fn write_frame(&mut self, frame: &[u8]) -> io::Result<()> {
        self.tx
            .send(frame.to_vec())
            .map_err(|_| io::Error::new(io::ErrorKind::BrokenPipe, "peer pipe closed"))
    }

    fn read_frame(&mut self) -> io::Result<Vec<u8>> {
        match self.rx.recv_timeout(PIPE_TIMEOUT) {
            Ok(frame) => Ok(frame),
            Err(RecvTimeoutError::Timeout) => Err(io::Error::new(
                io::ErrorKind::TimedOut,
                "peer pipe silent",
            )),
            Err(RecvTimeoutError::Disconnected) => Err(io::Error::new(
                io::ErrorKind::BrokenPipe,
                "peer pipe closed",
            )),
        }
    }
}
