//! Trace-file encoding of a coded packet:
//! `batch_id` (u32, little-endian) ‖ `M` coefficient bytes ‖ `ℓ` payload bytes.

use thiserror::Error;

use super::CodedPacket;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum WireError {
    #[error("frame is {got} bytes, expected {expected}")]
    Length { got: usize, expected: usize },
}

impl CodedPacket {
    pub fn wire_len(batch_size: usize, payload_len: usize) -> usize {
        4 + batch_size + payload_len
    }

    pub fn to_wire(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(Self::wire_len(self.coeff.len(), self.payload.len()));
        out.extend_from_slice(&self.batch.to_le_bytes());
        out.extend_from_slice(&self.coeff);
        out.extend_from_slice(&self.payload);
        out
    }

    pub fn from_wire(frame: &[u8], batch_size: usize, payload_len: usize) -> Result<Self, WireError> {
        let expected = Self::wire_len(batch_size, payload_len);
        if frame.len() != expected {
            return Err(WireError::Length {
                got: frame.len(),
                expected,
            });
        }
        let (id, rest) = frame.split_at(4);
        let (coeff, payload) = rest.split_at(batch_size);
        Ok(CodedPacket {
            batch: u32::from_le_bytes(id.try_into().expect("4 bytes")),
            coeff: coeff.to_vec(),
            payload: payload.to_vec(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn layout_is_little_endian_header_then_coeff_then_payload() {
        let p = CodedPacket {
            batch: 0x0102_0304,
            coeff: vec![0xAA, 0xBB],
            payload: vec![1, 2, 3],
        };
        assert_eq!(p.to_wire(), vec![4, 3, 2, 1, 0xAA, 0xBB, 1, 2, 3]);
        assert_eq!(
            CodedPacket::from_wire(&[0; 5], 2, 3),
            Err(WireError::Length {
                got: 5,
                expected: 9
            })
        );
    }

    proptest! {
        #[test]
        fn wire_round_trip(batch: u32, coeff in proptest::collection::vec(any::<u8>(), 1..32),
                           payload in proptest::collection::vec(any::<u8>(), 0..64)) {
            let p = CodedPacket { batch, coeff: coeff.clone(), payload: payload.clone() };
            let back = CodedPacket::from_wire(&p.to_wire(), coeff.len(), payload.len()).unwrap();
            prop_assert_eq!(back, p);
        }
    }
}
