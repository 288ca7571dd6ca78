//! Binary container shared by basis and code files: one line of JSON
//! header, a newline, then the payload as little-endian `f64`s.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ContainerHeader {
    Basis {
        k: usize,
        vertex_count: usize,
        sigma: Vec<f64>,
    },
    Code {
        k: usize,
    },
}

#[derive(Serialize, Deserialize)]
struct Envelope {
    #[serde(flatten)]
    header: ContainerHeader,
    dtype: String,
    len: usize,
}

const DTYPE: &str = "f64le";

pub fn encode_container(header: &ContainerHeader, payload: &[f64]) -> Result<Vec<u8>> {
    let env = Envelope {
        header: header.clone(),
        dtype: DTYPE.to_string(),
        len: payload.len(),
    };
    let mut out = serde_json::to_vec(&env)?;
    out.push(b'\n');
    out.reserve(8 * payload.len());
    for v in payload {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_container(bytes: impl Read) -> Result<(ContainerHeader, Vec<f64>)> {
    let mut reader = BufReader::new(bytes);
    let mut line = Vec::new();
    reader.read_until(b'\n', &mut line)?;
    if line.last() != Some(&b'\n') {
        return Err(Error::format("container", "missing header line"));
    }
    let env: Envelope = serde_json::from_slice(&line[..line.len() - 1])?;
    if env.dtype != DTYPE {
        return Err(Error::format("container", format!("unsupported dtype {}", env.dtype)));
    }
    let mut raw = Vec::new();
    reader.read_to_end(&mut raw)?;
    if raw.len() != 8 * env.len {
        return Err(Error::format(
            "container",
            format!("payload has {} bytes, header announces {} values", raw.len(), env.len),
        ));
    }
    let payload = raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    Ok((env.header, payload))
}

pub fn write_container(
    path: impl AsRef<Path>,
    header: &ContainerHeader,
    payload: &[f64],
) -> Result<()> {
    let bytes = encode_container(header, payload)?;
    let mut f = std::fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

pub fn read_container(path: impl AsRef<Path>) -> Result<(ContainerHeader, Vec<f64>)> {
    decode_container(std::fs::File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn container_round_trips(values in prop::collection::vec(any::<f64>(), 0..64)) {
            let header = ContainerHeader::Code { k: values.len() };
            let bytes = encode_container(&header, &values).unwrap();
            let (h, back) = decode_container(&bytes[..]).unwrap();
            prop_assert_eq!(h, header);
            prop_assert_eq!(back.len(), values.len());
            for (a, b) in back.iter().zip(&values) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }

    #[test]
    fn header_is_a_json_line() {
        let h = ContainerHeader::Basis {
            k: 1,
            vertex_count: 2,
            sigma: vec![0.5],
        };
        let bytes = encode_container(&h, &[1.0; 6]).unwrap();
        let nl = bytes.iter().position(|&b| b == b'\n').unwrap();
        let v: serde_json::Value = serde_json::from_slice(&bytes[..nl]).unwrap();
        assert_eq!(v["kind"], "basis");
        assert_eq!(v["vertex_count"], 2);
        assert_eq!(v["dtype"], "f64le");
        assert_eq!(bytes.len(), nl + 1 + 48);
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let bytes = encode_container(&ContainerHeader::Code { k: 2 }, &[1.0, 2.0]).unwrap();
        assert!(decode_container(&bytes[..bytes.len() - 3]).is_err());
        assert!(decode_container(&b"{\"kind\":\"code\""[..]).is_err());
    }
}
