//! ND-text stream of h-vectors: one header line, then one line per MCMC
//! sample with comma-separated values (M values in conditional mode, 4·M in
//! marginal mode, fraction-major). The bridge between external samplers and
//! the engine.

use std::io::{BufRead, Write};

use crate::engine::HVector;
use crate::error::{Error, Result};
use crate::predictive::Mode;

pub const STREAM_VERSION: &str = "v1";

pub fn write_header<W: Write + ?Sized>(w: &mut W, m: usize, mode: Mode) -> Result<()> {
    writeln!(w, "waic-stream {STREAM_VERSION} M={m} mode={mode}")?;
    Ok(())
}

/// Write one sample line. Values round-trip exactly through the shortest
/// decimal representation, `-inf` included.
pub fn write_sample<W: Write + ?Sized>(w: &mut W, h: &HVector) -> Result<()> {
    let mut line = String::with_capacity(h.values().len() * 20);
    for (i, v) in h.values().iter().enumerate() {
        if i > 0 {
            line.push(',');
        }
        line.push_str(&format!("{v}"));
    }
    writeln!(w, "{line}")?;
    Ok(())
}

/// Reads a stream: parses the header eagerly, then yields one `HVector` per
/// line with the line number attached to every error.
pub struct StreamReader<R: BufRead> {
    reader: R,
    m: usize,
    mode: Mode,
    line_no: usize,
    buf: String,
}

impl<R: BufRead> StreamReader<R> {
    pub fn new(mut reader: R) -> Result<Self> {
        let mut header = String::new();
        if reader.read_line(&mut header)? == 0 {
            return Err(Error::Stream { line: 1, msg: "empty stream (missing header)".into() });
        }
        let (m, mode) = parse_header(header.trim_end())?;
        Ok(StreamReader { reader, m, mode, line_no: 1, buf: String::new() })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    fn expected_values(&self) -> usize {
        match self.mode {
            Mode::Conditional => self.m,
            Mode::Marginal => 4 * self.m,
        }
    }

    /// Next sample, or `None` at end of stream.
    pub fn next_sample(&mut self) -> Option<Result<HVector>> {
        loop {
            self.buf.clear();
            match self.reader.read_line(&mut self.buf) {
                Ok(0) => return None,
                Ok(_) => {}
                Err(e) => return Some(Err(e.into())),
            }
            self.line_no += 1;
            if self.buf.trim().is_empty() {
                continue;
            }
            return Some(self.parse_line());
        }
    }

    /// Skip `n` samples without parsing values; used to resume a checkpoint
    /// against a stream that already contains the consumed prefix.
    pub fn skip_samples(&mut self, n: u64) -> Result<()> {
        for _ in 0..n {
            self.buf.clear();
            if self.reader.read_line(&mut self.buf)? == 0 {
                return Err(Error::Stream {
                    line: self.line_no + 1,
                    msg: "stream ended while skipping already-consumed samples".into(),
                });
            }
            self.line_no += 1;
        }
        Ok(())
    }

    fn parse_line(&self) -> Result<HVector> {
        let expected = self.expected_values();
        let mut values = Vec::with_capacity(expected);
        for tok in self.buf.trim().split(',') {
            let v: f64 = tok.trim().parse().map_err(|_| Error::Stream {
                line: self.line_no,
                msg: format!("cannot parse value `{}`", tok.trim()),
            })?;
            values.push(v);
        }
        if values.len() != expected {
            return Err(Error::Stream {
                line: self.line_no,
                msg: format!("expected {expected} values, found {}", values.len()),
            });
        }
        let fractions = if self.mode == Mode::Conditional { 1 } else { 4 };
        HVector::from_flat(fractions, self.m, values)
    }
}

fn parse_header(line: &str) -> Result<(usize, Mode)> {
    let bad = |msg: String| Error::Stream { line: 1, msg };
    let mut toks = line.split_whitespace();
    if toks.next() != Some("waic-stream") {
        return Err(bad("header must start with `waic-stream`".into()));
    }
    match toks.next() {
        Some(STREAM_VERSION) => {}
        Some(v) => return Err(bad(format!("unsupported stream version `{v}`"))),
        None => return Err(bad("missing stream version".into())),
    }
    let mut m: Option<usize> = None;
    let mut mode: Option<Mode> = None;
    for tok in toks {
        if let Some(v) = tok.strip_prefix("M=") {
            m = Some(v.parse().map_err(|_| bad(format!("bad M value `{v}`")))?);
        } else if let Some(v) = tok.strip_prefix("mode=") {
            mode = Some(match v {
                "conditional" => Mode::Conditional,
                "marginal" => Mode::Marginal,
                other => return Err(bad(format!("unknown mode `{other}`"))),
            });
        } else {
            return Err(bad(format!("unrecognized header field `{tok}`")));
        }
    }
    match (m, mode) {
        (Some(m), Some(mode)) if m > 0 => Ok((m, mode)),
        (Some(0), _) => Err(bad("M must be positive".into())),
        _ => Err(bad("header must declare M=<int> and mode=<conditional|marginal>".into())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    #[test]
    fn header_round_trip() {
        let mut buf = Vec::new();
        write_header(&mut buf, 3, Mode::Marginal).unwrap();
        let r = StreamReader::new(Cursor::new(buf)).unwrap();
        assert_eq!(r.m(), 3);
        assert_eq!(r.mode(), Mode::Marginal);
    }

    #[test]
    fn sample_round_trip_is_exact() {
        let h = HVector::conditional(vec![-1.25e-9, f64::NEG_INFINITY, 3.0f64.ln()]);
        let mut buf = Vec::new();
        write_header(&mut buf, 3, Mode::Conditional).unwrap();
        write_sample(&mut buf, &h).unwrap();
        let mut r = StreamReader::new(Cursor::new(buf)).unwrap();
        let back = r.next_sample().unwrap().unwrap();
        assert_eq!(back, h);
        assert!(r.next_sample().is_none());
    }

    #[test]
    fn wrong_value_count_reports_line_number() {
        let text = "waic-stream v1 M=3 mode=conditional\n0,1\n";
        let mut r = StreamReader::new(Cursor::new(text)).unwrap();
        match r.next_sample().unwrap() {
            Err(Error::Stream { line: 2, msg }) => assert!(msg.contains("expected 3")),
            other => panic!("unexpected: {other:?}"),
        }
    }

    #[test]
    fn garbage_value_reports_line_number() {
        let text = "waic-stream v1 M=1 mode=conditional\n0.5\nnot-a-number\n";
        let mut r = StreamReader::new(Cursor::new(text)).unwrap();
        assert!(r.next_sample().unwrap().is_ok());
        match r.next_sample().unwrap() {
            Err(Error::Stream { line: 3, .. }) => {}
            other => panic!("unexpected: {other:?}"),
        }
    }

    #[test]
    fn bad_headers_are_rejected() {
        for text in [
            "",
            "waic-stream v2 M=1 mode=conditional\n",
            "waic-stream v1 mode=conditional\n",
            "waic-stream v1 M=0 mode=conditional\n",
            "waic-stream v1 M=1 mode=sideways\n",
            "something-else v1 M=1 mode=conditional\n",
        ] {
            assert!(StreamReader::new(Cursor::new(text)).is_err(), "accepted: {text:?}");
        }
    }

    #[test]
    fn marginal_lines_carry_four_blocks() {
        let text = "waic-stream v1 M=2 mode=marginal\n1,2,3,4,5,6,7,8\n";
        let mut r = StreamReader::new(Cursor::new(text)).unwrap();
        let h = r.next_sample().unwrap().unwrap();
        assert_eq!(h.fractions(), 4);
        assert_eq!(h.fraction(3), &[7.0, 8.0]);
    }
}
