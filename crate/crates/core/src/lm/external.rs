//! Line protocol for language models living in another process.
//!
//! ```text
//! SCORE <ctx ids>|<seq ids>   ->  OK <logprob>
//! DIST <ctx ids>              ->  OK <|V| floats>
//! ```
//!
//! Ids and floats are space-separated; either side of `|` may be empty.
//! Servers answer `ERR <message>` for requests they cannot handle.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::process::{Child, Command, Stdio};
use std::sync::Mutex;

use super::LanguageModel;
use crate::corpus::TokenId;
use crate::error::{Error, Result};

struct Conn {
    reader: BufReader<Box<dyn Read + Send>>,
    writer: Box<dyn Write + Send>,
    line: String,
}

impl Conn {
    fn request(&mut self, req: &str) -> Result<String> {
        self.writer.write_all(req.as_bytes())?;
        self.writer.write_all(b"\n")?;
        self.writer.flush()?;
        self.line.clear();
        if self.reader.read_line(&mut self.line)? == 0 {
            return Err(Error::External("connection closed".into()));
        }
        let resp = self.line.trim_end();
        match resp.strip_prefix("OK") {
            Some(rest) if rest.is_empty() || rest.starts_with(' ') => Ok(rest.trim().to_owned()),
            _ => Err(Error::External(format!("{req:?} -> {resp:?}"))),
        }
    }
}

/// A [`LanguageModel`] served over the line protocol. Requests are
/// serialized through one connection.
pub struct ExternalLm {
    vocab_size: usize,
    conn: Mutex<Conn>,
    child: Option<Child>,
}

fn join_ids(ids: &[TokenId]) -> String {
    ids.iter().map(u32::to_string).collect::<Vec<_>>().join(" ")
}

impl ExternalLm {
    pub fn from_streams(
        reader: Box<dyn Read + Send>,
        writer: Box<dyn Write + Send>,
        vocab_size: usize,
    ) -> Self {
        Self {
            vocab_size,
            conn: Mutex::new(Conn { reader: BufReader::new(reader), writer, line: String::new() }),
            child: None,
        }
    }

    pub fn connect_tcp(addr: impl ToSocketAddrs, vocab_size: usize) -> Result<Self> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        let reader = stream.try_clone()?;
        Ok(Self::from_streams(Box::new(reader), Box::new(stream), vocab_size))
    }

    /// Spawns `program args...` and talks to it over stdin/stdout.
    pub fn spawn(program: &str, args: &[String], vocab_size: usize) -> Result<Self> {
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let mut lm = Self::from_streams(Box::new(stdout), Box::new(stdin), vocab_size);
        lm.child = Some(child);
        Ok(lm)
    }

    fn request(&self, req: &str) -> Result<String> {
        self.conn
            .lock()
            .map_err(|_| Error::External("connection poisoned".into()))?
            .request(req)
    }
}

impl Drop for ExternalLm {
    fn drop(&mut self) {
        if let Some(child) = &mut self.child {
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

fn parse_f64(s: &str) -> Result<f64> {
    s.parse().map_err(|_| Error::External(format!("bad number {s:?}")))
}

impl LanguageModel for ExternalLm {
    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn next_dist(&self, context: &[TokenId]) -> Result<Vec<f64>> {
        let resp = self.request(&format!("DIST {}", join_ids(context)))?;
        let dist = resp.split_whitespace().map(parse_f64).collect::<Result<Vec<_>>>()?;
        if dist.len() != self.vocab_size {
            return Err(Error::External(format!(
                "DIST returned {} values for a vocabulary of {}",
                dist.len(),
                self.vocab_size
            )));
        }
        Ok(dist)
    }

    fn score(&self, seq: &[TokenId], context: &[TokenId]) -> Result<f64> {
        let resp = self.request(&format!("SCORE {}|{}", join_ids(context), join_ids(seq)))?;
        parse_f64(&resp)
    }
}

fn parse_ids(s: &str, vocab_size: usize) -> std::result::Result<Vec<TokenId>, String> {
    s.split_whitespace()
        .map(|t| match t.parse::<TokenId>() {
            Ok(id) if (id as usize) < vocab_size => Ok(id),
            _ => Err(format!("bad token id {t:?}")),
        })
        .collect()
}

fn answer<M: LanguageModel + ?Sized>(model: &M, line: &str) -> std::result::Result<String, String> {
    let v = model.vocab_size();
    if let Some(rest) = line.strip_prefix("DIST") {
        let ctx = parse_ids(rest, v)?;
        let dist = model.next_dist(&ctx).map_err(|e| e.to_string())?;
        Ok(dist.iter().map(f64::to_string).collect::<Vec<_>>().join(" "))
    } else if let Some(rest) = line.strip_prefix("SCORE") {
        let (ctx, seq) = rest.split_once('|').ok_or("SCORE needs <ctx>|<seq>")?;
        let lp = model
            .score(&parse_ids(seq, v)?, &parse_ids(ctx, v)?)
            .map_err(|e| e.to_string())?;
        Ok(lp.to_string())
    } else {
        Err(format!("unknown request {line:?}"))
    }
}

/// Serves `model` over the line protocol until `reader` reaches EOF.
pub fn serve<M, R, W>(model: &M, reader: R, mut writer: W) -> Result<()>
where
    M: LanguageModel + ?Sized,
    R: BufRead,
    W: Write,
{
    for line in reader.lines() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        match answer(model, line) {
            Ok(body) if body.is_empty() => writeln!(writer, "OK")?,
            Ok(body) => writeln!(writer, "OK {body}")?,
            Err(msg) => writeln!(writer, "ERR {msg}")?,
        }
        writer.flush()?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Vocab;
    use crate::lm::{perplexity, NGramLm};
    use std::io::Cursor;
    use std::net::TcpListener;
    use std::sync::Arc;

    fn toy() -> NGramLm {
        NGramLm::fit(&[vec![0u32, 1, 2, 0, 1, 1, 2]], 2, 0.3, Vocab::anonymous(3)).unwrap()
    }

    #[test]
    fn serve_answers_requests() {
        let lm = toy();
        let input = Cursor::new("DIST 0\nSCORE 0|1 2\nDIST 9\nHELLO\n");
        let mut out = Vec::new();
        serve(&lm, input, &mut out).unwrap();
        let out = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = out.lines().collect();
        let d: Vec<f64> = lines[0][3..].split(' ').map(|s| s.parse().unwrap()).collect();
        assert_eq!(d, lm.next_dist(&[0]).unwrap());
        assert_eq!(lines[1][3..].parse::<f64>().unwrap(), lm.score(&[1, 2], &[0]).unwrap());
        assert!(lines[2].starts_with("ERR"));
        assert!(lines[3].starts_with("ERR"));
    }

    #[test]
    fn tcp_adapter_matches_local_model() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let lm = Arc::new(toy());
        let served = Arc::clone(&lm);
        let handle = std::thread::spawn(move || {
            let (stream, _) = listener.accept().unwrap();
            let reader = BufReader::new(stream.try_clone().unwrap());
            serve(&*served, reader, stream).unwrap();
        });
        let remote = ExternalLm::connect_tcp(addr, 3).unwrap();
        for ctx in [&[][..], &[0], &[2, 1]] {
            assert_eq!(remote.next_dist(ctx).unwrap(), lm.next_dist(ctx).unwrap());
        }
        let seq = [1, 2, 0, 0];
        assert_eq!(
            perplexity(&remote, &seq, &[1]).unwrap(),
            perplexity(&*lm, &seq, &[1]).unwrap()
        );
        drop(remote);
        handle.join().unwrap();
    }

    #[test]
    fn error_response_surfaces() {
        let remote = ExternalLm::from_streams(
            Box::new(Cursor::new(b"ERR nope\n".to_vec())),
            Box::new(Vec::new()),
            3,
        );
        assert!(matches!(remote.next_dist(&[0]), Err(Error::External(_))));
    }
}
