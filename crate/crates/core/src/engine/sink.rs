use std::io::{self, Write};
use std::sync::{Arc, Mutex};

use crate::model::ResponseRecord;

/// Destination for response records emitted by response producers.
pub trait ResponseSink {
    fn record(&mut self, rec: &ResponseRecord) -> io::Result<()>;
}

/// Collects records in memory. Clones share the same buffer.
#[derive(Debug, Clone, Default)]
pub struct MemorySink(Arc<Mutex<Vec<ResponseRecord>>>);

impl MemorySink {
    pub fn records(&self) -> Vec<ResponseRecord> {
        self.0.lock().unwrap().clone()
    }

    pub fn take(&self) -> Vec<ResponseRecord> {
        std::mem::take(&mut *self.0.lock().unwrap())
    }

    pub fn len(&self) -> usize {
        self.0.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl ResponseSink for MemorySink {
    fn record(&mut self, rec: &ResponseRecord) -> io::Result<()> {
        self.0.lock().unwrap().push(*rec);
        Ok(())
    }
}

pub const RESPONSE_CSV_HEADER: &str = "t_us,antigen,cell_type";

/// Writes `t_us,antigen,cell_type` rows. The header is written on creation.
pub struct CsvResponseSink<W: Write> {
    out: W,
}

impl<W: Write> CsvResponseSink<W> {
    pub fn new(mut out: W) -> io::Result<Self> {
        writeln!(out, "{RESPONSE_CSV_HEADER}")?;
        Ok(CsvResponseSink { out })
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

impl<W: Write> ResponseSink for CsvResponseSink<W> {
    fn record(&mut self, rec: &ResponseRecord) -> io::Result<()> {
        writeln!(self.out, "{},{},{}", rec.t_us, rec.antigen, rec.cell_type)
    }
}

/// Renders a response log in the CSV format of [`CsvResponseSink`].
pub fn response_csv(records: &[ResponseRecord]) -> String {
    let mut s = String::with_capacity(16 * (records.len() + 1));
    s.push_str(RESPONSE_CSV_HEADER);
    s.push('\n');
    for r in records {
        s.push_str(&format!("{},{},{}\n", r.t_us, r.antigen, r.cell_type));
    }
    s
}

/// A cloneable in-memory byte buffer implementing `Write`.
#[derive(Debug, Clone, Default)]
pub struct SharedBuffer(Arc<Mutex<Vec<u8>>>);

impl SharedBuffer {
    pub fn contents(&self) -> Vec<u8> {
        self.0.lock().unwrap().clone()
    }

    pub fn to_string_lossy(&self) -> String {
        String::from_utf8_lossy(&self.contents()).into_owned()
    }
}

impl Write for SharedBuffer {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        self.0.lock().unwrap().extend_from_slice(buf);
        Ok(buf.len())
    }

    fn flush(&mut self) -> io::Result<()> {
        Ok(())
    }
}
