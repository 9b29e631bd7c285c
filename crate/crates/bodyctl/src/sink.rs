//! Destinations for parameter updates: UDP (OSC), a length-prefixed capture
//! file of raw datagrams, and CSV.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::net::{SocketAddr, ToSocketAddrs, UdpSocket};
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Duration;

use bodyctl_core::osc;
use bodyctl_core::ParamUpdate;

use crate::wire::write_number;

pub trait UpdateSink: Send {
    /// Delivers one update; `datagram` is its OSC encoding.
    fn deliver(&mut self, update: &ParamUpdate, datagram: &[u8]) -> io::Result<()>;

    fn flush(&mut self) -> io::Result<()> {
        Ok(())
    }
}

/// One OSC datagram per update.
pub struct UdpSink {
    socket: UdpSocket,
    dest: SocketAddr,
}

impl UdpSink {
    pub fn new(dest: &str) -> io::Result<Self> {
        let dest = dest
            .to_socket_addrs()?
            .next()
            .ok_or_else(|| io::Error::new(io::ErrorKind::NotFound, format!("cannot resolve {dest}")))?;
        let bind: SocketAddr = if dest.is_ipv4() {
            ([0, 0, 0, 0], 0).into()
        } else {
            (std::net::Ipv6Addr::UNSPECIFIED, 0).into()
        };
        let socket = UdpSocket::bind(bind)?;
        // a full send buffer must not stall the sender for more than a frame
        socket.set_write_timeout(Some(Duration::from_millis(30)))?;
        Ok(Self { socket, dest })
    }

    pub fn destination(&self) -> SocketAddr {
        self.dest
    }
}

impl UpdateSink for UdpSink {
    fn deliver(&mut self, _: &ParamUpdate, datagram: &[u8]) -> io::Result<()> {
        self.socket.send_to(datagram, self.dest).map(|_| ())
    }
}

/// Repeated `[len: u32 big-endian][datagram]`.
pub struct CaptureSink<W: Write> {
    out: W,
}

impl CaptureSink<BufWriter<File>> {
    pub fn create(path: impl AsRef<Path>) -> io::Result<Self> {
        Ok(Self::new(BufWriter::new(File::create(path)?)))
    }
}

impl<W: Write> CaptureSink<W> {
    pub fn new(out: W) -> Self {
        Self { out }
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

impl<W: Write + Send> UpdateSink for CaptureSink<W> {
    fn deliver(&mut self, _: &ParamUpdate, datagram: &[u8]) -> io::Result<()> {
        let len = u32::try_from(datagram.len()).map_err(|_| io::Error::other("datagram too large"))?;
        self.out.write_all(&len.to_be_bytes())?;
        self.out.write_all(datagram)
    }

    fn flush(&mut self) -> io::Result<()> {
        self.out.flush()
    }
}

/// Splits a capture file back into datagrams.
pub fn read_capture(mut bytes: &[u8]) -> io::Result<Vec<Vec<u8>>> {
    let mut out = Vec::new();
    while !bytes.is_empty() {
        if bytes.len() < 4 {
            return Err(io::Error::new(io::ErrorKind::UnexpectedEof, "truncated length prefix"));
        }
        let len = u32::from_be_bytes(bytes[..4].try_into().unwrap()) as usize;
        let rest = &bytes[4..];
        if rest.len() < len {
            return Err(io::Error::new(io::ErrorKind::UnexpectedEof, "truncated datagram"));
        }
        out.push(rest[..len].to_vec());
        bytes = &rest[len..];
    }
    Ok(out)
}

/// `t_ms,address,value` rows under a header line.
pub struct CsvSink<W: Write> {
    out: W,
    line: String,
}

impl CsvSink<BufWriter<File>> {
    pub fn create(path: impl AsRef<Path>) -> io::Result<Self> {
        Self::new(BufWriter::new(File::create(path)?))
    }
}

impl<W: Write> CsvSink<W> {
    pub fn new(mut out: W) -> io::Result<Self> {
        out.write_all(b"t_ms,address,value\n")?;
        Ok(Self {
            out,
            line: String::new(),
        })
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

impl<W: Write + Send> UpdateSink for CsvSink<W> {
    fn deliver(&mut self, update: &ParamUpdate, _: &[u8]) -> io::Result<()> {
        self.line.clear();
        write_number(&mut self.line, update.t);
        self.line.push(',');
        // addresses are printable ASCII without blanks; only quote and comma need escaping
        if update.address.contains([',', '"']) {
            self.line.push('"');
            self.line.push_str(&update.address.replace('"', "\"\""));
            self.line.push('"');
        } else {
            self.line.push_str(&update.address);
        }
        self.line.push(',');
        write_number(&mut self.line, update.value);
        self.line.push('\n');
        self.out.write_all(self.line.as_bytes())
    }

    fn flush(&mut self) -> io::Result<()> {
        self.out.flush()
    }
}

/// Delivery counters shared with telemetry.
#[derive(Debug, Default)]
pub struct SendStats {
    pub sent: AtomicU64,
    pub errors: AtomicU64,
    pub dropped: AtomicU64,
}

impl SendStats {
    pub fn sent(&self) -> u64 {
        self.sent.load(Ordering::Relaxed)
    }

    pub fn errors(&self) -> u64 {
        self.errors.load(Ordering::Relaxed)
    }

    pub fn dropped(&self) -> u64 {
        self.dropped.load(Ordering::Relaxed)
    }
}

/// Encodes and delivers each update; failures are counted, never returned.
pub fn send(updates: &[ParamUpdate], sink: &mut dyn UpdateSink, stats: &SendStats) -> usize {
    let mut buf = Vec::with_capacity(32);
    let mut count = 0;
    for u in updates {
        buf.clear();
        let delivered = osc::encode_into(&mut buf, &u.address, u.value as f32)
            .map_err(|e| io::Error::new(io::ErrorKind::InvalidInput, e))
            .and_then(|()| sink.deliver(u, &buf));
        match delivered {
            Ok(()) => count += 1,
            Err(e) => {
                stats.errors.fetch_add(1, Ordering::Relaxed);
                log::debug!("send to {} failed: {e}", u.address);
            }
        }
    }
    stats.sent.fetch_add(count as u64, Ordering::Relaxed);
    count
}
