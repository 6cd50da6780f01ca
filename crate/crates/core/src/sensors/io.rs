use super::dataset::WindowDataset;
use super::streams::{Channel, RotationTrial, SensorStream, StreamConfig, StreamSample};
use super::SensorError;
use crate::service::config_hash;
use crate::sim::WorldConfig;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};

pub const STREAM_FORMAT_VERSION: u32 = 1;

/// First line of a stream file: what generated the samples below it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StreamHeader {
    pub format_version: u32,
    pub config_hash: String,
    pub trial: RotationTrial,
    pub stream: StreamConfig,
    pub world: WorldConfig,
}

impl StreamHeader {
    pub fn new(trial: RotationTrial, stream: StreamConfig, world: WorldConfig) -> Self {
        let config_hash = config_hash(&(&trial, &stream, &world));
        Self { format_version: STREAM_FORMAT_VERSION, config_hash, trial, stream, world }
    }

    pub fn verify(&self) -> Result<(), SensorError> {
        if self.format_version != STREAM_FORMAT_VERSION {
            return Err(SensorError::Parse { line: 1, message: format!("unsupported format version {}", self.format_version) });
        }
        let expected = config_hash(&(&self.trial, &self.stream, &self.world));
        if expected != self.config_hash {
            return Err(SensorError::Parse { line: 1, message: format!("config hash {} does not match {expected}", self.config_hash) });
        }
        Ok(())
    }
}

/// Header line followed by [`write_streams_jsonl`] output.
pub fn write_stream_file<W: Write>(mut out: W, header: &StreamHeader, streams: &[&SensorStream]) -> Result<(), SensorError> {
    serde_json::to_writer(&mut out, header).map_err(std::io::Error::from)?;
    out.write_all(b"\n")?;
    write_streams_jsonl(out, streams)
}

/// Reads a file written by [`write_stream_file`], verifying the header hash.
pub fn read_stream_file<R: BufRead>(mut input: R) -> Result<(StreamHeader, Vec<SensorStream>), SensorError> {
    let mut first = String::new();
    input.read_line(&mut first)?;
    let header: StreamHeader = serde_json::from_str(&first).map_err(|e| SensorError::Parse { line: 1, message: e.to_string() })?;
    header.verify()?;
    let streams = read_streams_jsonl(input).map_err(|e| match e {
        SensorError::Parse { line, message } => SensorError::Parse { line: line + 1, message },
        e => e,
    })?;
    Ok((header, streams))
}

/// One JSONL line: `{"t": 0.0123, "channel": "pressure", "v": [10.2, 11.0]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StreamRecord {
    pub t: f64,
    pub channel: Channel,
    pub v: Vec<f64>,
}

/// Writes the streams one after another, one sample per line.
pub fn write_streams_jsonl<W: Write>(mut out: W, streams: &[&SensorStream]) -> Result<(), SensorError> {
    for s in streams {
        for sample in &s.samples {
            let rec = StreamRecord { t: sample.t, channel: s.channel, v: sample.v.clone() };
            serde_json::to_writer(&mut out, &rec).map_err(std::io::Error::from)?;
            out.write_all(b"\n")?;
        }
    }
    Ok(())
}

/// Reads samples back into one stream per channel, in first-seen channel
/// order. Nominal rates are set to the measured mean rate.
pub fn read_streams_jsonl<R: BufRead>(input: R) -> Result<Vec<SensorStream>, SensorError> {
    let mut streams: Vec<SensorStream> = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: StreamRecord =
            serde_json::from_str(&line).map_err(|e| SensorError::Parse { line: i + 1, message: e.to_string() })?;
        let idx = match streams.iter().position(|s| s.channel == rec.channel) {
            Some(k) => k,
            None => {
                streams.push(SensorStream::new(rec.channel, 0.0));
                streams.len() - 1
            }
        };
        streams[idx].samples.push(StreamSample { t: rec.t, v: rec.v });
    }
    for s in &mut streams {
        s.validate()?;
        s.nominal_rate = s.measured_rate();
    }
    Ok(streams)
}

/// Long-format CSV: one line per (window, step) with the features and the
/// window's target angle.
pub fn write_windows_csv<W: Write>(mut out: W, data: &WindowDataset) -> Result<(), SensorError> {
    let f = data.features();
    let mut header = String::from("window,step");
    for j in 0..f {
        header.push_str(&format!(",f{j}"));
    }
    header.push_str(",target\n");
    out.write_all(header.as_bytes())?;
    for i in 0..data.len() {
        for s in 0..data.window_size {
            let mut line = format!("{i},{s}");
            for j in 0..f {
                line.push_str(&format!(",{}", data.x[[i, s, j]]));
            }
            line.push_str(&format!(",{}\n", data.y[i]));
            out.write_all(line.as_bytes())?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sensors::build_windows;
    use ndarray::array;

    #[test]
    fn jsonl_round_trip() {
        let mut a = SensorStream::new(Channel::CameraAngle, 30.0);
        a.samples = vec![StreamSample { t: 0.0, v: vec![1.5] }, StreamSample { t: 0.0333, v: vec![1.6] }];
        let mut b = SensorStream::new(Channel::Pressure, 400.0);
        b.samples = vec![StreamSample { t: 0.001, v: vec![10.0, 12.5] }];
        let mut buf = Vec::new();
        write_streams_jsonl(&mut buf, &[&a, &b]).unwrap();
        let back = read_streams_jsonl(buf.as_slice()).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].samples, a.samples);
        assert_eq!(back[1].samples, b.samples);
        assert!(matches!(read_streams_jsonl("{\"t\":1}\n".as_bytes()), Err(SensorError::Parse { line: 1, .. })));
    }

    #[test]
    fn stream_file_header_is_verified() {
        let mut a = SensorStream::new(Channel::CameraAngle, 30.0);
        a.samples = vec![StreamSample { t: 0.0, v: vec![0.5] }, StreamSample { t: 0.04, v: vec![0.6] }];
        let trial = RotationTrial::new(crate::sim::ObjectSpec::cylinder(0.065), 1.0, 4);
        let header = StreamHeader::new(trial, StreamConfig::default(), WorldConfig::default());
        let mut buf = Vec::new();
        write_stream_file(&mut buf, &header, &[&a]).unwrap();
        let (h, back) = read_stream_file(buf.as_slice()).unwrap();
        assert_eq!(h, header);
        assert_eq!(back[0].samples, a.samples);

        let text = String::from_utf8(buf).unwrap().replacen("\"seed\":4", "\"seed\":5", 1);
        assert!(matches!(read_stream_file(text.as_bytes()), Err(SensorError::Parse { line: 1, .. })));
    }

    #[test]
    fn csv_layout() {
        let d = build_windows(&array![[1.0], [2.0], [3.0]], &[0.1, 0.2, 0.3], 2).unwrap();
        let mut buf = Vec::new();
        write_windows_csv(&mut buf, &d).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "window,step,f0,target");
        assert_eq!(lines[1], "0,0,1,0.2");
        assert_eq!(lines.len(), 5);
    }
}
