//! Reading and writing the line-delimited trace format.
//!
//! A file is a sequence of UTF-8 JSON records, one per `\n`-terminated line:
//! one `header`, one `visual_hidden`, the `step` records in order, and a
//! closing `end` record carrying the step count and the CRC-32 of every
//! byte before it. `docs/trace-format.md` is the normative description.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{
    DecodeStep, HiddenEncoding, HiddenMatrix, Latencies, Token, Trace, TraceHeader, TraceValidator, Violation,
    FORMAT_VERSION,
};

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot encode non-finite value in {location}")]
    Encoding { location: String },
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("checksum mismatch: end record says {expected}, content hashes to {actual}")]
    ChecksumMismatch { expected: String, actual: String },
    #[error("unsupported trace format version {0} (this build reads version {FORMAT_VERSION})")]
    VersionUnsupported(u64),
    #[error("trace failed validation: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    ValidationFailed(Vec<Violation>),
}

fn parse_error(line: usize, reason: impl Into<String>) -> TraceError {
    TraceError::Parse {
        line,
        reason: reason.into(),
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum Record {
    Header(HeaderRecord),
    VisualHidden(MatrixRecord),
    Step(StepRecord),
    End(EndRecord),
}

impl Record {
    fn kind(&self) -> &'static str {
        match self {
            Record::Header(_) => "header",
            Record::VisualHidden(_) => "visual_hidden",
            Record::Step(_) => "step",
            Record::End(_) => "end",
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct HeaderRecord {
    version: u32,
    d: usize,
    l_v: usize,
    encoding: HiddenEncoding,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    model_names: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    latencies: Option<Latencies>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    /// Branches per decoding step; absent means 1.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    branches: Option<u8>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum MatrixData {
    Base64(String),
    Numbers(Vec<Vec<f32>>),
}

#[derive(Debug, Serialize, Deserialize)]
struct MatrixRecord {
    rows: usize,
    cols: usize,
    data: MatrixData,
}

#[derive(Debug, Serialize, Deserialize)]
struct StepRecord {
    s: u64,
    branch: u8,
    draft_ids: Vec<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    draft_texts: Option<Vec<Option<String>>>,
    target_ids: Vec<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    target_texts: Option<Vec<Option<String>>>,
    draft_hidden: MatrixRecord,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    target_entropy: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    relevance_labels: Option<Vec<bool>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct EndRecord {
    steps: u64,
    checksum: String,
}

fn encode_matrix(m: &HiddenMatrix, encoding: HiddenEncoding, location: &str) -> Result<MatrixRecord, TraceError> {
    if let Some((row, col)) = m.first_non_finite() {
        return Err(TraceError::Encoding {
            location: format!("{location} row {row} column {col}"),
        });
    }
    let data = match encoding {
        HiddenEncoding::F32leBase64 => {
            let bytes: Vec<u8> = m.data().iter().flat_map(|x| x.to_le_bytes()).collect();
            MatrixData::Base64(STANDARD.encode(bytes))
        }
        HiddenEncoding::JsonNumbers => {
            let cols = m.cols();
            MatrixData::Numbers(if cols == 0 {
                vec![Vec::new(); m.rows()]
            } else {
                m.data().chunks(cols).map(<[f32]>::to_vec).collect()
            })
        }
    };
    Ok(MatrixRecord {
        rows: m.rows(),
        cols: m.cols(),
        data,
    })
}

fn decode_matrix(rec: MatrixRecord, encoding: HiddenEncoding, line: usize) -> Result<HiddenMatrix, TraceError> {
    let data = match (rec.data, encoding) {
        (MatrixData::Base64(s), HiddenEncoding::F32leBase64) => {
            let bytes = STANDARD
                .decode(s.as_bytes())
                .map_err(|e| parse_error(line, format!("invalid base64 hidden data: {e}")))?;
            if bytes.len() % 4 != 0 {
                return Err(parse_error(line, "base64 hidden data is not a whole number of f32 values"));
            }
            bytes
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                .collect()
        }
        (MatrixData::Numbers(rows), HiddenEncoding::JsonNumbers) => {
            if let Some(bad) = rows.iter().position(|r| r.len() != rec.cols) {
                return Err(parse_error(line, format!("hidden data row {bad} does not have {} columns", rec.cols)));
            }
            rows.concat()
        }
        (_, encoding) => {
            return Err(parse_error(line, format!("hidden data does not use the header encoding `{encoding}`")));
        }
    };
    Ok(HiddenMatrix::from_raw(rec.rows, rec.cols, data))
}

fn texts(tokens: &[Token]) -> Option<Vec<Option<String>>> {
    tokens
        .iter()
        .any(|t| t.text.is_some())
        .then(|| tokens.iter().map(|t| t.text.clone()).collect())
}

fn to_tokens(ids: Vec<u32>, texts: Option<Vec<Option<String>>>, what: &str, line: usize) -> Result<Vec<Token>, TraceError> {
    match texts {
        None => Ok(ids.into_iter().map(Token::new).collect()),
        Some(texts) if texts.len() == ids.len() => {
            Ok(ids.into_iter().zip(texts).map(|(id, text)| Token { id, text }).collect())
        }
        Some(texts) => Err(parse_error(
            line,
            format!("{what}_texts has {} entries for {} ids", texts.len(), ids.len()),
        )),
    }
}

/// Streaming writer. Construction writes the header and visual matrix;
/// [`TraceWriter::finish`] writes the end record.
#[derive(Debug)]
pub struct TraceWriter<W: Write> {
    inner: W,
    encoding: HiddenEncoding,
    hasher: crc32fast::Hasher,
    bytes: u64,
    steps: u64,
    buf: Vec<u8>,
}

impl<W: Write> TraceWriter<W> {
    /// Starts a trace. `header.encoding` selects the hidden-state encoding.
    pub fn new(inner: W, header: &TraceHeader, visual_hidden: &HiddenMatrix, branches_per_step: u8) -> Result<Self, TraceError> {
        let mut writer = Self {
            inner,
            encoding: header.encoding,
            hasher: crc32fast::Hasher::new(),
            bytes: 0,
            steps: 0,
            buf: Vec::new(),
        };
        let visual = encode_matrix(visual_hidden, header.encoding, "visual_hidden")?;
        writer.emit(&Record::Header(HeaderRecord {
            version: header.format_version,
            d: header.d,
            l_v: header.l_v,
            encoding: header.encoding,
            model_names: header.model_names.clone(),
            latencies: header.latencies,
            seed: header.seed,
            branches: (branches_per_step != 1).then_some(branches_per_step),
        }))?;
        writer.emit(&Record::VisualHidden(visual))?;
        Ok(writer)
    }

    fn emit(&mut self, record: &Record) -> Result<(), TraceError> {
        self.buf.clear();
        serde_json::to_writer(&mut self.buf, record).map_err(|e| TraceError::Io(e.into()))?;
        self.buf.push(b'\n');
        if !matches!(record, Record::End(_)) {
            self.hasher.update(&self.buf);
        }
        self.inner.write_all(&self.buf)?;
        self.bytes += self.buf.len() as u64;
        Ok(())
    }

    pub fn write_step(&mut self, step: &DecodeStep) -> Result<(), TraceError> {
        let location = format!("step {} (branch {}) draft_hidden", step.step_index, step.branch);
        let draft_hidden = encode_matrix(&step.draft_hidden, self.encoding, &location)?;
        if let Some(i) = step.target_entropy.as_ref().and_then(|e| e.iter().position(|x| !x.is_finite())) {
            return Err(TraceError::Encoding {
                location: format!("step {} (branch {}) target_entropy position {i}", step.step_index, step.branch),
            });
        }
        self.emit(&Record::Step(StepRecord {
            s: step.step_index,
            branch: step.branch,
            draft_ids: step.draft_tokens.iter().map(|t| t.id).collect(),
            draft_texts: texts(&step.draft_tokens),
            target_ids: step.target_tokens.iter().map(|t| t.id).collect(),
            target_texts: texts(&step.target_tokens),
            draft_hidden,
            target_entropy: step.target_entropy.clone(),
            relevance_labels: step.relevance_labels.clone(),
        }))?;
        self.steps += 1;
        Ok(())
    }

    /// Writes the end record and flushes. Returns the total bytes written.
    pub fn finish(mut self) -> Result<u64, TraceError> {
        let checksum = format!("{:08x}", self.hasher.clone().finalize());
        self.emit(&Record::End(EndRecord {
            steps: self.steps,
            checksum,
        }))?;
        self.inner.flush()?;
        Ok(self.bytes)
    }
}

/// Writes `trace` with the given hidden-state encoding. Returns the byte count.
pub fn write_trace<W: Write>(trace: &Trace, destination: W, encoding: HiddenEncoding) -> Result<u64, TraceError> {
    let mut header = trace.header.clone();
    header.encoding = encoding;
    let mut writer = TraceWriter::new(destination, &header, &trace.visual_hidden, trace.branches_per_step)?;
    for step in &trace.steps {
        writer.write_step(step)?;
    }
    writer.finish()
}

/// Serializes `trace` to bytes.
pub fn trace_to_bytes(trace: &Trace, encoding: HiddenEncoding) -> Result<Vec<u8>, TraceError> {
    let mut out = Vec::new();
    write_trace(trace, &mut out, encoding)?;
    Ok(out)
}

pub fn write_trace_file(path: impl AsRef<Path>, trace: &Trace, encoding: HiddenEncoding) -> Result<u64, TraceError> {
    let file = File::create(path)?;
    write_trace(trace, BufWriter::new(file), encoding)
}

/// Streaming reader. Construction reads the header and visual matrix; steps
/// are then pulled one at a time, so memory holds at most one step record
/// besides the visual matrix.
///
/// Checksum, step count and trace invariants are checked as the end record
/// is reached; a consumer sees `Ok(None)` only for a fully verified file.
#[derive(Debug)]
pub struct TraceReader<R: BufRead> {
    inner: R,
    line: usize,
    buf: Vec<u8>,
    hasher: crc32fast::Hasher,
    header: TraceHeader,
    visual_hidden: HiddenMatrix,
    branches_per_step: u8,
    validator: Option<TraceValidator>,
    steps: u64,
    finished: bool,
}

impl<R: BufRead> TraceReader<R> {
    pub fn new(inner: R) -> Result<Self, TraceError> {
        let mut reader = Self {
            inner,
            line: 0,
            buf: Vec::new(),
            hasher: crc32fast::Hasher::new(),
            header: TraceHeader::new(0, 0),
            visual_hidden: HiddenMatrix::from_raw(0, 0, Vec::new()),
            branches_per_step: 1,
            validator: None,
            steps: 0,
            finished: false,
        };

        let header = match reader.next_line()? {
            None => return Err(parse_error(1, "empty file: missing header record")),
            Some(text) => {
                reader.hasher.update(&reader.buf);
                let value: serde_json::Value =
                    serde_json::from_str(&text).map_err(|e| parse_error(1, format!("invalid JSON: {e}")))?;
                if value.get("type").and_then(|t| t.as_str()) != Some("header") {
                    return Err(parse_error(1, "ordering rule: the first record must be the header"));
                }
                if let Some(version) = value.get("version").and_then(|v| v.as_u64()) {
                    if version != u64::from(FORMAT_VERSION) {
                        return Err(TraceError::VersionUnsupported(version));
                    }
                }
                match serde_json::from_value::<Record>(value) {
                    Ok(Record::Header(h)) => h,
                    Ok(_) => unreachable!("type checked above"),
                    Err(e) => return Err(parse_error(1, format!("invalid header record: {e}"))),
                }
            }
        };
        reader.header = TraceHeader {
            format_version: header.version,
            d: header.d,
            l_v: header.l_v,
            model_names: header.model_names,
            latencies: header.latencies,
            seed: header.seed,
            encoding: header.encoding,
        };
        reader.branches_per_step = header.branches.unwrap_or(1);

        let visual = match reader.next_record()? {
            None => return Err(parse_error(2, "missing end record")),
            Some(Record::VisualHidden(m)) => m,
            Some(other) => {
                return Err(parse_error(
                    2,
                    format!("ordering rule: visual_hidden must directly follow the header, found {}", other.kind()),
                ))
            }
        };
        reader.visual_hidden = decode_matrix(visual, reader.header.encoding, 2)?;
        reader.validator = Some(TraceValidator::new(
            &reader.header,
            &reader.visual_hidden,
            reader.branches_per_step,
        ));
        Ok(reader)
    }

    pub fn header(&self) -> &TraceHeader {
        &self.header
    }

    pub fn visual_hidden(&self) -> &HiddenMatrix {
        &self.visual_hidden
    }

    pub fn branches_per_step(&self) -> u8 {
        self.branches_per_step
    }

    /// The next raw line without its terminator, hashed unless it is the end
    /// record. `None` at end of input.
    fn next_line(&mut self) -> Result<Option<String>, TraceError> {
        self.buf.clear();
        if self.inner.read_until(b'\n', &mut self.buf)? == 0 {
            return Ok(None);
        }
        self.line += 1;
        let content = self.buf.strip_suffix(b"\n").unwrap_or(&self.buf);
        let text = std::str::from_utf8(content)
            .map_err(|_| parse_error(self.line, "line is not valid UTF-8"))?
            .to_string();
        if text.trim().is_empty() {
            return Err(parse_error(self.line, "empty line"));
        }
        Ok(Some(text))
    }

    fn next_record(&mut self) -> Result<Option<Record>, TraceError> {
        let Some(text) = self.next_line()? else {
            return Ok(None);
        };
        let record: Record =
            serde_json::from_str(&text).map_err(|e| parse_error(self.line, format!("invalid record: {e}")))?;
        if !matches!(record, Record::End(_)) {
            self.hasher.update(&self.buf);
        }
        Ok(Some(record))
    }

    /// The next step record, `Ok(None)` after a verified end record.
    pub fn next_step(&mut self) -> Result<Option<DecodeStep>, TraceError> {
        if self.finished {
            return Ok(None);
        }
        let line = self.line + 1;
        match self.next_record()? {
            None => Err(parse_error(line, "missing end record")),
            Some(Record::Step(rec)) => {
                let step = DecodeStep {
                    step_index: rec.s,
                    branch: rec.branch,
                    draft_tokens: to_tokens(rec.draft_ids, rec.draft_texts, "draft", line)?,
                    target_tokens: to_tokens(rec.target_ids, rec.target_texts, "target", line)?,
                    draft_hidden: decode_matrix(rec.draft_hidden, self.header.encoding, line)?,
                    target_entropy: rec.target_entropy,
                    relevance_labels: rec.relevance_labels,
                };
                self.validator.as_mut().expect("validator set after header").check_step(&step);
                self.steps += 1;
                Ok(Some(step))
            }
            Some(Record::End(end)) => {
                self.finished = true;
                let actual = format!("{:08x}", self.hasher.clone().finalize());
                if end.checksum != actual {
                    return Err(TraceError::ChecksumMismatch {
                        expected: end.checksum,
                        actual,
                    });
                }
                if end.steps != self.steps {
                    return Err(parse_error(
                        line,
                        format!("end record counts {} steps, file has {}", end.steps, self.steps),
                    ));
                }
                if self.next_line()?.is_some() {
                    return Err(parse_error(self.line, "ordering rule: no records may follow the end record"));
                }
                let violations = self.validator.take().expect("validator set after header").finish();
                if violations.is_empty() {
                    Ok(None)
                } else {
                    Err(TraceError::ValidationFailed(violations))
                }
            }
            Some(other) => Err(parse_error(
                line,
                format!("ordering rule: {} record after the step records began", other.kind()),
            )),
        }
    }
}

impl<R: BufRead> Iterator for TraceReader<R> {
    type Item = Result<DecodeStep, TraceError>;

    fn next(&mut self) -> Option<Self::Item> {
        match self.next_step() {
            Ok(step) => step.map(Ok),
            Err(e) => {
                self.finished = true;
                Some(Err(e))
            }
        }
    }
}

/// Reads and fully verifies a trace.
pub fn read_trace<R: BufRead>(source: R) -> Result<Trace, TraceError> {
    let mut reader = TraceReader::new(source)?;
    let mut steps = Vec::new();
    while let Some(step) = reader.next_step()? {
        steps.push(step);
    }
    Ok(Trace {
        header: reader.header,
        visual_hidden: reader.visual_hidden,
        steps,
        branches_per_step: reader.branches_per_step,
    })
}

pub fn read_trace_file(path: impl AsRef<Path>) -> Result<Trace, TraceError> {
    read_trace(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::tokens;

    fn sample(encoding: HiddenEncoding) -> Trace {
        let mut header = TraceHeader::new(2, 2);
        header.encoding = encoding;
        header.seed = Some(7);
        let mut step = DecodeStep::new(
            0,
            vec![Token::with_text(5, "a"), Token::new(6)],
            tokens(&[5, 9]),
            HiddenMatrix::from_rows(&[[0.1f32, -2.5], [1e-30, 3.0]]).unwrap(),
        );
        step.target_entropy = Some(vec![0.1, 0.7]);
        step.relevance_labels = Some(vec![true, false]);
        Trace {
            header,
            visual_hidden: HiddenMatrix::from_rows(&[[1.0f32, 0.0], [0.3, 0.7]]).unwrap(),
            steps: vec![step],
            branches_per_step: 1,
        }
    }

    fn lines(bytes: &[u8]) -> Vec<String> {
        String::from_utf8(bytes.to_vec()).unwrap().lines().map(String::from).collect()
    }

    #[test]
    fn empty_trace_is_three_lines() {
        let mut t = sample(HiddenEncoding::F32leBase64);
        t.steps.clear();
        let bytes = trace_to_bytes(&t, HiddenEncoding::F32leBase64).unwrap();
        let l = lines(&bytes);
        assert_eq!(l.len(), 3);
        assert!(l[2].contains(r#""type":"end""#) && l[2].contains(r#""steps":0"#));
        assert_eq!(read_trace(&bytes[..]).unwrap(), t);
    }

    #[test]
    fn round_trip_both_encodings() {
        for enc in [HiddenEncoding::F32leBase64, HiddenEncoding::JsonNumbers] {
            let t = sample(enc);
            let bytes = trace_to_bytes(&t, enc).unwrap();
            assert_eq!(bytes.len() as u64, write_trace(&t, std::io::sink(), enc).unwrap());
            let back = read_trace(&bytes[..]).unwrap();
            assert_eq!(back, t);
            assert_eq!(trace_to_bytes(&back, enc).unwrap(), bytes);
        }
    }

    #[test]
    fn checksum_covers_prior_lines() {
        let bytes = trace_to_bytes(&sample(HiddenEncoding::F32leBase64), HiddenEncoding::F32leBase64).unwrap();
        let text = String::from_utf8(bytes).unwrap();
        let end_at = text.trim_end().rfind('\n').unwrap() + 1;
        let expected = format!("{:08x}", crc32fast::hash(&text.as_bytes()[..end_at]));
        assert!(text[end_at..].contains(&expected));
    }

    #[test]
    fn nan_names_step_and_row() {
        let mut t = sample(HiddenEncoding::F32leBase64);
        t.steps[0].draft_hidden = HiddenMatrix::from_raw(2, 2, vec![0.0, 1.0, f32::NAN, 1.0]);
        let err = trace_to_bytes(&t, HiddenEncoding::F32leBase64).unwrap_err();
        let msg = err.to_string();
        assert!(matches!(err, TraceError::Encoding { .. }));
        assert!(msg.contains("step 0") && msg.contains("row 1"), "{msg}");
    }

    #[test]
    fn ordering_and_truncation() {
        let bytes = trace_to_bytes(&sample(HiddenEncoding::F32leBase64), HiddenEncoding::F32leBase64).unwrap();
        let l = lines(&bytes);

        let swapped = format!("{}\n{}\n{}\n{}\n", l[0], l[2], l[1], l[3]);
        match read_trace(swapped.as_bytes()).unwrap_err() {
            TraceError::Parse { line: 2, reason } => assert!(reason.contains("ordering rule")),
            e => panic!("{e:?}"),
        }

        let truncated = format!("{}\n{}\n{}\n", l[0], l[1], l[2]);
        match read_trace(truncated.as_bytes()).unwrap_err() {
            TraceError::Parse { reason, .. } => assert_eq!(reason, "missing end record"),
            e => panic!("{e:?}"),
        }

        let trailing = format!("{}\n{}\n", String::from_utf8(bytes.clone()).unwrap().trim_end(), l[2]);
        assert!(matches!(read_trace(trailing.as_bytes()), Err(TraceError::Parse { .. })));
    }

    #[test]
    fn corruption_is_detected() {
        let bytes = trace_to_bytes(&sample(HiddenEncoding::JsonNumbers), HiddenEncoding::JsonNumbers).unwrap();
        let text = String::from_utf8(bytes).unwrap().replacen("\"s\":0", "\"s\":0 ", 1);
        assert!(matches!(read_trace(text.as_bytes()), Err(TraceError::ChecksumMismatch { .. })));
    }

    #[test]
    fn version_is_checked() {
        let bytes = trace_to_bytes(&sample(HiddenEncoding::F32leBase64), HiddenEncoding::F32leBase64).unwrap();
        let text = String::from_utf8(bytes).unwrap().replacen("\"version\":1", "\"version\":2", 1);
        assert!(matches!(read_trace(text.as_bytes()), Err(TraceError::VersionUnsupported(2))));
    }

    #[test]
    fn invalid_contents_fail_validation() {
        let mut t = sample(HiddenEncoding::F32leBase64);
        t.steps[0].step_index = 4;
        let bytes = trace_to_bytes(&t, HiddenEncoding::F32leBase64).unwrap();
        assert!(matches!(read_trace(&bytes[..]), Err(TraceError::ValidationFailed(_))));
    }

    #[test]
    fn tree_traces_record_branches() {
        let mut t = sample(HiddenEncoding::F32leBase64);
        let mut b = t.steps[0].clone();
        b.branch = 1;
        t.steps.push(b);
        t.branches_per_step = 2;
        let bytes = trace_to_bytes(&t, HiddenEncoding::F32leBase64).unwrap();
        assert!(lines(&bytes)[0].contains(r#""branches":2"#));
        assert_eq!(read_trace(&bytes[..]).unwrap(), t);
    }
}
