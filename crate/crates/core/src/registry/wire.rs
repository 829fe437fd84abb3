//! Envelope definitions and length-prefixed framing.
//!
//! Frames are a 4-byte big-endian length followed by one JSON-encoded
//! envelope. Model weights ride inside envelopes as base64 so the binary
//! blob survives the text layer bit-exactly.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point2, PointCloud};

/// Upper bound on a frame body; anything larger is treated as a broken peer.
pub const MAX_FRAME_LEN: usize = 64 << 20;

/// One protocol message. The `msg_type` tag and the payload fields always
/// agree because they are a single tagged enum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub sender: String,
    #[serde(flatten)]
    pub body: Body,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "msg_type")]
pub enum Body {
    PointCloudReport { cloud: WireCloud },
    DistanceMapAck { version: u64 },
    NearestQuery { cloud: WireCloud },
    NearestResponse { peer: String, distance: f64 },
    ModelRequest,
    ModelTransfer { weights_b64: String },
    StateContribution { cloud: WireCloud },
    Error { message: String },
}

/// JSON-friendly cloud form; conversion back validates the cloud invariants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireCloud {
    pub label: String,
    pub points: Vec<[f64; 2]>,
}

impl From<&PointCloud> for WireCloud {
    fn from(cloud: &PointCloud) -> Self {
        Self {
            label: cloud.label().to_string(),
            points: cloud.points().iter().map(|p| [p.x, p.y]).collect(),
        }
    }
}

impl WireCloud {
    pub fn to_cloud(&self) -> Result<PointCloud> {
        PointCloud::new(
            self.label.clone(),
            self.points.iter().map(|&[x, y]| Point2::new(x, y)).collect(),
        )
    }
}

/// Writes one frame. Fails with a protocol error if the envelope does not fit
/// the frame bound.
pub fn write_frame<W: Write>(writer: &mut W, envelope: &Envelope) -> Result<()> {
    let json = serde_json::to_vec(envelope)
        .map_err(|e| Error::Protocol(format!("envelope encoding failed: {e}")))?;
    if json.len() > MAX_FRAME_LEN {
        return Err(Error::Protocol(format!("envelope too large: {} bytes", json.len())));
    }
    writer.write_all(&(json.len() as u32).to_be_bytes())?;
    writer.write_all(&json)?;
    writer.flush()?;
    Ok(())
}

/// Reads one frame. Returns [`Error::Protocol`] when the frame arrived intact
/// but its body is not a valid envelope (the stream stays in sync and the
/// caller may answer with an `Error` envelope); I/O errors — including an
/// oversized length prefix, after which re-synchronization is impossible —
/// are fatal to the connection.
pub fn read_frame<R: Read>(reader: &mut R) -> Result<Envelope> {
    let mut len_buf = [0u8; 4];
    reader.read_exact(&mut len_buf)?;
    let len = u32::from_be_bytes(len_buf) as usize;
    if len > MAX_FRAME_LEN {
        return Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::InvalidData,
            format!("frame length {len} exceeds limit"),
        )));
    }
    let mut body = vec![0u8; len];
    reader.read_exact(&mut body)?;
    serde_json::from_slice(&body).map_err(|e| Error::Protocol(format!("bad envelope: {e}")))
}
