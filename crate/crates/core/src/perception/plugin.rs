//! Line-delimited JSON protocol for attaching an external detector.
//!
//! Each request is one line
//! `{"op":"detect","frame":n,"view":v,"descriptor":[...]}` and each response
//! one line `{"points":[[x,y],...]}`.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};

use serde::{Deserialize, Serialize};

use super::detector::{detect, DetectorModel, FrameDescriptor};
use crate::error::{MbwError, Result};
use crate::geometry::Landmarks2D;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectRequest {
    pub op: String,
    pub frame: usize,
    pub view: usize,
    pub descriptor: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectResponse {
    pub points: Vec<[f64; 2]>,
}

fn protocol(line: usize, message: impl Into<String>) -> MbwError {
    MbwError::ProtocolError {
        line,
        message: message.into(),
    }
}

pub fn parse_request(text: &str, line: usize) -> Result<DetectRequest> {
    let req: DetectRequest = serde_json::from_str(text).map_err(|e| protocol(line, e.to_string()))?;
    if req.op != "detect" {
        return Err(protocol(line, format!("unknown op `{}`", req.op)));
    }
    Ok(req)
}

pub fn parse_response(text: &str, line: usize, joints: usize) -> Result<Landmarks2D> {
    let resp: DetectResponse = serde_json::from_str(text).map_err(|e| protocol(line, e.to_string()))?;
    if resp.points.len() != joints {
        return Err(protocol(
            line,
            format!("expected {joints} points, got {}", resp.points.len()),
        ));
    }
    Ok(Landmarks2D::from_xy(&resp.points))
}

fn encode_line<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string(value).expect("plain data serializes");
    s.push('\n');
    s
}

/// Answers detect requests from `input` with `model` until end of input.
/// Returns the number of requests served.
pub fn serve<R: BufRead, W: Write>(model: &DetectorModel, input: R, mut output: W) -> Result<usize> {
    let mut served = 0;
    for (i, line) in input.lines().enumerate() {
        let line = line.map_err(|e| MbwError::io("<plugin input>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let req = parse_request(&line, i + 1)?;
        let points = detect(model, &FrameDescriptor { values: req.descriptor })
            .map_err(|e| protocol(i + 1, e.to_string()))?;
        let resp = DetectResponse {
            points: points.points().iter().map(|p| [p.x, p.y]).collect(),
        };
        output
            .write_all(encode_line(&resp).as_bytes())
            .and_then(|_| output.flush())
            .map_err(|e| MbwError::io("<plugin output>", e))?;
        served += 1;
    }
    Ok(served)
}

/// Client side of the protocol over any pair of streams.
pub struct PluginClient<R, W> {
    reader: R,
    writer: W,
    joints: usize,
    line: usize,
}

impl<R: BufRead, W: Write> PluginClient<R, W> {
    pub fn new(reader: R, writer: W, joints: usize) -> Self {
        Self {
            reader,
            writer,
            joints,
            line: 0,
        }
    }

    pub fn detect(&mut self, frame: usize, view: usize, descriptor: &FrameDescriptor) -> Result<Landmarks2D> {
        let req = DetectRequest {
            op: "detect".into(),
            frame,
            view,
            descriptor: descriptor.values.clone(),
        };
        self.writer
            .write_all(encode_line(&req).as_bytes())
            .and_then(|_| self.writer.flush())
            .map_err(|e| MbwError::io("<plugin stdin>", e))?;
        let mut text = String::new();
        self.line += 1;
        let read = self
            .reader
            .read_line(&mut text)
            .map_err(|e| MbwError::io("<plugin stdout>", e))?;
        if read == 0 {
            return Err(protocol(self.line, "plugin closed its output"));
        }
        parse_response(text.trim_end(), self.line, self.joints)
    }
}

/// An external detector process speaking the protocol on stdin/stdout.
pub struct ExternalDetector {
    child: Child,
    client: PluginClient<BufReader<ChildStdout>, ChildStdin>,
}

impl ExternalDetector {
    pub fn spawn(program: &str, args: &[String], joints: usize) -> Result<Self> {
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()
            .map_err(|e| MbwError::io(program, e))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        Ok(Self {
            child,
            client: PluginClient::new(stdout, stdin, joints),
        })
    }

    pub fn detect(&mut self, frame: usize, view: usize, descriptor: &FrameDescriptor) -> Result<Landmarks2D> {
        self.client.detect(frame, view, descriptor)
    }
}

impl Drop for ExternalDetector {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn model() -> DetectorModel {
        // two joints; joint 0 = (d0, d1), joint 1 = (1, 2)
        let mut w = DMatrix::zeros(3, 4);
        w[(0, 0)] = 1.0;
        w[(1, 1)] = 1.0;
        w[(2, 2)] = 1.0;
        w[(2, 3)] = 2.0;
        DetectorModel {
            weights: w,
            ridge_lambda: 0.0,
        }
    }

    #[test]
    fn serves_requests() {
        let input = b"{\"op\":\"detect\",\"frame\":0,\"view\":1,\"descriptor\":[5.5,-2]}\n\n{\"op\":\"detect\",\"frame\":1,\"view\":0,\"descriptor\":[0,0]}\n";
        let mut out = Vec::new();
        assert_eq!(serve(&model(), &input[..], &mut out).unwrap(), 2);
        let text = String::from_utf8(out).unwrap();
        assert_eq!(
            text,
            "{\"points\":[[5.5,-2.0],[1.0,2.0]]}\n{\"points\":[[0.0,0.0],[1.0,2.0]]}\n"
        );
    }

    #[test]
    fn malformed_lines_are_protocol_errors() {
        for (bad, line) in [
            ("{\"op\":\"track\",\"frame\":0,\"view\":0,\"descriptor\":[1,2]}", 1),
            ("not json", 1),
            ("{\"op\":\"detect\",\"frame\":0,\"view\":0,\"descriptor\":[1,2],\"x\":1}", 1),
            ("{\"op\":\"detect\",\"frame\":-1,\"view\":0,\"descriptor\":[1,2]}", 1),
            ("{\"op\":\"detect\",\"frame\":0,\"view\":0,\"descriptor\":[1,2,3]}", 1),
        ] {
            let err = serve(&model(), bad.as_bytes(), Vec::new()).unwrap_err();
            assert!(matches!(err, MbwError::ProtocolError { line: l, .. } if l == line), "{bad}: {err}");
        }
    }

    #[test]
    fn client_round_trip_against_server_output() {
        let mut served = Vec::new();
        let req = "{\"op\":\"detect\",\"frame\":3,\"view\":0,\"descriptor\":[7.0,8.0]}\n";
        serve(&model(), req.as_bytes(), &mut served).unwrap();
        let mut sent = Vec::new();
        let mut client = PluginClient::new(served.as_slice(), &mut sent, 2);
        let got = client.detect(3, 0, &FrameDescriptor { values: vec![7.0, 8.0] }).unwrap();
        assert_eq!(got, Landmarks2D::from_xy(&[[7.0, 8.0], [1.0, 2.0]]));
        assert_eq!(String::from_utf8(sent).unwrap(), req);
    }

    #[test]
    fn client_rejects_wrong_point_count() {
        let reply = b"{\"points\":[[1,2]]}\n";
        let mut client = PluginClient::new(&reply[..], Vec::new(), 2);
        assert!(matches!(
            client.detect(0, 0, &FrameDescriptor { values: vec![] }),
            Err(MbwError::ProtocolError { line: 1, .. })
        ));
    }
}
