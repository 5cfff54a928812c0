use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::net::{TcpStream, ToSocketAddrs};

use super::{decode, encode, ClientKind, WireMessage, PROTOCOL_VERSION};
use crate::model::AntigenValue;

/// Sending side of an antigen or signal connection.
pub struct Client<W: Write> {
    out: BufWriter<W>,
}

impl<W: Write> Client<W> {
    /// Sends `HELLO` on an already-open stream.
    pub fn hello(stream: W, kind: ClientKind) -> io::Result<Self> {
        let mut c = Client {
            out: BufWriter::new(stream),
        };
        c.send(&WireMessage::Hello {
            kind,
            version: PROTOCOL_VERSION,
        })?;
        c.flush()?;
        Ok(c)
    }

    /// Buffers one message; call [`Client::flush`] to push it out.
    pub fn send(&mut self, msg: &WireMessage) -> io::Result<()> {
        self.out.write_all(encode(msg).as_bytes())
    }

    pub fn antigen(&mut self, v: AntigenValue) -> io::Result<()> {
        self.send(&WireMessage::Antigen(v))
    }

    pub fn signal(&mut self, id: u32, level: f64) -> io::Result<()> {
        self.send(&WireMessage::Signal { id, level })
    }

    pub fn flush(&mut self) -> io::Result<()> {
        self.out.flush()
    }

    /// Sends `BYE` and flushes. The stream is closed when the client drops.
    pub fn bye(&mut self) -> io::Result<()> {
        self.send(&WireMessage::Bye)?;
        self.flush()
    }
}

impl Client<TcpStream> {
    pub fn connect(addr: impl ToSocketAddrs, kind: ClientKind) -> io::Result<Self> {
        let s = TcpStream::connect(addr)?;
        s.set_nodelay(true)?;
        Self::hello(s, kind)
    }
}

/// Receiving side of a response connection; yields `(antigen, t_us)`.
pub struct ResponseListener<R: BufRead, W: Write> {
    reader: R,
    // Kept open so the server does not see a hangup.
    _writer: W,
    buf: Vec<u8>,
}

impl<R: BufRead, W: Write> ResponseListener<R, W> {
    pub fn new(reader: R, mut writer: W) -> io::Result<Self> {
        writer.write_all(
            encode(&WireMessage::Hello {
                kind: ClientKind::Response,
                version: PROTOCOL_VERSION,
            })
            .as_bytes(),
        )?;
        writer.flush()?;
        Ok(ResponseListener {
            reader,
            _writer: writer,
            buf: Vec::new(),
        })
    }
}

impl ResponseListener<BufReader<TcpStream>, TcpStream> {
    pub fn connect(addr: impl ToSocketAddrs) -> io::Result<Self> {
        let s = TcpStream::connect(addr)?;
        let r = BufReader::new(s.try_clone()?);
        Self::new(r, s)
    }
}

impl<R: BufRead, W: Write> Iterator for ResponseListener<R, W> {
    type Item = io::Result<(AntigenValue, u64)>;

    fn next(&mut self) -> Option<Self::Item> {
        self.buf.clear();
        match self.reader.read_until(b'\n', &mut self.buf) {
            Ok(0) => None,
            Err(e) => Some(Err(e)),
            Ok(_) => Some(match decode(&self.buf) {
                Ok(WireMessage::Response { antigen, t_us }) => Ok((antigen, t_us)),
                Ok(other) => Err(io::Error::new(
                    io::ErrorKind::InvalidData,
                    format!("unexpected {other}"),
                )),
                Err(e) => Err(io::Error::new(io::ErrorKind::InvalidData, e)),
            }),
        }
    }
}
