//! In-process duplex byte pipe with the same blocking semantics as a socket.

use std::io::{self, Read, Write};
use std::sync::mpsc::{channel, Receiver, Sender};

pub struct LoopbackReader {
    rx: Receiver<Vec<u8>>,
    buf: Vec<u8>,
    pos: usize,
}

pub struct LoopbackWriter {
    tx: Sender<Vec<u8>>,
}

/// One end of a loopback connection.
pub struct LoopbackStream {
    reader: LoopbackReader,
    writer: LoopbackWriter,
}

/// Creates a connected pair of streams.
pub fn pipe() -> (LoopbackStream, LoopbackStream) {
    let (atx, arx) = channel();
    let (btx, brx) = channel();
    let a = LoopbackStream {
        reader: LoopbackReader::new(arx),
        writer: LoopbackWriter { tx: btx },
    };
    let b = LoopbackStream {
        reader: LoopbackReader::new(brx),
        writer: LoopbackWriter { tx: atx },
    };
    (a, b)
}

impl LoopbackReader {
    fn new(rx: Receiver<Vec<u8>>) -> Self {
        LoopbackReader {
            rx,
            buf: Vec::new(),
            pos: 0,
        }
    }
}

impl LoopbackStream {
    pub fn split(self) -> (LoopbackReader, LoopbackWriter) {
        (self.reader, self.writer)
    }
}

impl Read for LoopbackReader {
    fn read(&mut self, out: &mut [u8]) -> io::Result<usize> {
        while self.pos == self.buf.len() {
            match self.rx.recv() {
                Ok(chunk) => {
                    self.buf = chunk;
                    self.pos = 0;
                }
                // Peer hung up.
                Err(_) => return Ok(0),
            }
        }
        let n = out.len().min(self.buf.len() - self.pos);
        out[..n].copy_from_slice(&self.buf[self.pos..self.pos + n]);
        self.pos += n;
        Ok(n)
    }
}

impl Write for LoopbackWriter {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        if buf.is_empty() {
            return Ok(0);
        }
        self.tx
            .send(buf.to_vec())
            .map_err(|_| io::Error::from(io::ErrorKind::BrokenPipe))?;
        Ok(buf.len())
    }

    fn flush(&mut self) -> io::Result<()> {
        Ok(())
    }
}

impl Read for LoopbackStream {
    fn read(&mut self, out: &mut [u8]) -> io::Result<usize> {
        self.reader.read(out)
    }
}

impl Write for LoopbackStream {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        self.writer.write(buf)
    }

    fn flush(&mut self) -> io::Result<()> {
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bytes_flow_both_ways_and_eof_on_drop() {
        let (mut a, b) = pipe();
        let (mut br, mut bw) = b.split();
        a.write_all(b"hello").unwrap();
        bw.write_all(b"world").unwrap();
        let mut got = [0u8; 5];
        br.read_exact(&mut got).unwrap();
        assert_eq!(&got, b"hello");
        a.read_exact(&mut got).unwrap();
        assert_eq!(&got, b"world");
        drop(a);
        let mut rest = Vec::new();
        br.read_to_end(&mut rest).unwrap();
        assert!(rest.is_empty());
        assert!(bw.write_all(b"x").is_err());
    }
}
