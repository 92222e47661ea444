//! BATS outer encoding, RLNC recoding inside a batch, and joint BP decoding.
//!
//! The RSU splits a file into `F` source packets. Batch `j` picks `d_j`
//! distinct source packets (degree drawn from Ψ), multiplies them by a random
//! `d_j × M` generator and emits `M` coded packets. The k-th packet of a batch
//! carries the unit coefficient vector `e_k`, so every coefficient vector
//! seen downstream is expressed in the batch's own M-dimensional basis.

mod decoder;
mod degree;
mod optimize;
mod wire;

use std::sync::Arc;

use rand::seq::index;
use rand::Rng;
use thiserror::Error;

use crate::galois::{axpy, Matrix};

pub use decoder::{decode_complete, DecoderState, RESIDUAL_LIMIT};
pub use degree::{DegreeDistribution, RankDistribution};
pub use optimize::{coverage_mean_degree, optimize_degree_distribution, DegreeOptimizer, OptimizedDegrees};
pub use wire::WireError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CodecError {
    #[error("recode called with no packets for the batch")]
    EmptyBatchBuffer,
    #[error("packets from different batches ({0} and {1}) passed to recode")]
    MixedBatches(u32, u32),
    #[error("source file must contain at least one packet")]
    EmptyFile,
    #[error("source packet {index} has length {len}, expected {expected}")]
    RaggedFile {
        index: usize,
        len: usize,
        expected: usize,
    },
    #[error("invalid probability vector: {0}")]
    InvalidDistribution(String),
    #[error("degree optimization is infeasible: {0}")]
    InfeasibleLp(String),
    #[error("decoder met a contradiction while solving batch {0}")]
    InconsistentState(u32),
    #[error("batch {0} is not in the catalog")]
    UnknownBatch(u32),
    #[error("batch size must be at least 1")]
    ZeroBatchSize,
}

/// The file to distribute, split into equal-length packets.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SourceFile {
    packet_len: usize,
    packets: Vec<Vec<u8>>,
}

impl SourceFile {
    pub fn new(packets: Vec<Vec<u8>>) -> Result<Self, CodecError> {
        let Some(first) = packets.first() else {
            return Err(CodecError::EmptyFile);
        };
        let packet_len = first.len();
        if let Some((index, p)) = packets
            .iter()
            .enumerate()
            .find(|(_, p)| p.len() != packet_len)
        {
            return Err(CodecError::RaggedFile {
                index,
                len: p.len(),
                expected: packet_len,
            });
        }
        Ok(SourceFile {
            packet_len,
            packets,
        })
    }

    /// A file of `count` packets filled with random bytes.
    pub fn random<R: Rng + ?Sized>(count: usize, packet_len: usize, rng: &mut R) -> Self {
        let packets = (0..count)
            .map(|_| {
                let mut p = vec![0u8; packet_len];
                rng.fill_bytes(&mut p);
                p
            })
            .collect();
        SourceFile {
            packet_len,
            packets,
        }
    }

    pub fn len(&self) -> usize {
        self.packets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.packets.is_empty()
    }

    pub fn packet_len(&self) -> usize {
        self.packet_len
    }

    pub fn packet(&self, i: usize) -> &[u8] {
        &self.packets[i]
    }

    pub fn packets(&self) -> &[Vec<u8>] {
        &self.packets
    }
}

/// Outer-code metadata for one batch. Source indices are 0-based.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Batch {
    pub index: u32,
    pub contributors: Vec<u32>,
    /// `d_j × M` generator matrix.
    pub generator: Matrix,
}

impl Batch {
    pub fn degree(&self) -> usize {
        self.contributors.len()
    }

    pub fn batch_size(&self) -> usize {
        self.generator.cols()
    }

    /// Coefficients of a received packet over the batch's contributors: `G·c`.
    pub fn contributor_coefficients(&self, coeff: &[u8]) -> Vec<u8> {
        (0..self.degree())
            .map(|p| crate::galois::dot(self.generator.row(p), coeff))
            .collect()
    }
}

/// A coded packet: batch id, coefficients in the batch basis, payload.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CodedPacket {
    pub batch: u32,
    pub coeff: Vec<u8>,
    pub payload: Vec<u8>,
}

/// Draws the degree, contributors and generator of batch `j` and emits its
/// `M` coded packets.
pub fn encode_batch<R: Rng + ?Sized>(
    file: &SourceFile,
    j: u32,
    psi: &DegreeDistribution,
    batch_size: usize,
    rng: &mut R,
) -> Result<(Batch, Vec<CodedPacket>), CodecError> {
    if batch_size == 0 {
        return Err(CodecError::ZeroBatchSize);
    }
    let degree = psi.sample(rng).min(file.len());
    let contributors: Vec<u32> = index::sample(rng, file.len(), degree)
        .into_iter()
        .map(|i| i as u32)
        .collect();
    let generator = Matrix::random(degree, batch_size, rng);
    let batch = Batch {
        index: j,
        contributors,
        generator,
    };
    let packets = emit_batch_packets(file, &batch);
    Ok((batch, packets))
}

/// The `M` coded packets of a batch, the k-th carrying coefficient `e_k`.
pub fn emit_batch_packets(file: &SourceFile, batch: &Batch) -> Vec<CodedPacket> {
    let m = batch.batch_size();
    let mut payloads = vec![vec![0u8; file.packet_len()]; m];
    for (p, &src) in batch.contributors.iter().enumerate() {
        let source = file.packet(src as usize);
        for (k, payload) in payloads.iter_mut().enumerate() {
            axpy(payload, batch.generator.get(p, k), source);
        }
    }
    payloads
        .into_iter()
        .enumerate()
        .map(|(k, payload)| {
            let mut coeff = vec![0u8; m];
            coeff[k] = 1;
            CodedPacket {
                batch: batch.index,
                coeff,
                payload,
            }
        })
        .collect()
}

/// Random linear combination of packets from one batch. An all-zero
/// coefficient draw is redrawn.
pub fn recode<R: Rng + ?Sized>(
    received: &[CodedPacket],
    rng: &mut R,
) -> Result<CodedPacket, CodecError> {
    let first = received.first().ok_or(CodecError::EmptyBatchBuffer)?;
    if let Some(other) = received.iter().find(|p| p.batch != first.batch) {
        return Err(CodecError::MixedBatches(first.batch, other.batch));
    }
    let mut weights = vec![0u8; received.len()];
    loop {
        rng.fill_bytes(&mut weights);
        if weights.iter().any(|&w| w != 0) {
            break;
        }
    }
    Ok(combine(received, &weights))
}

/// `Σ weights[i] · packets[i]`, applied to coefficients and payloads alike.
pub fn combine(packets: &[CodedPacket], weights: &[u8]) -> CodedPacket {
    assert_eq!(packets.len(), weights.len());
    let first = &packets[0];
    let mut coeff = vec![0u8; first.coeff.len()];
    let mut payload = vec![0u8; first.payload.len()];
    for (p, &w) in packets.iter().zip(weights) {
        axpy(&mut coeff, w, &p.coeff);
        axpy(&mut payload, w, &p.payload);
    }
    CodedPacket {
        batch: first.batch,
        coeff,
        payload,
    }
}

/// Every batch the RSU generated, plus the source-to-batch incidence used by
/// the BP decoder.
#[derive(Debug)]
pub struct BatchCatalog {
    file_packets: usize,
    batch_size: usize,
    batches: Vec<Batch>,
    incidence: Vec<Vec<u32>>,
}

impl BatchCatalog {
    /// Panics if a batch is out of order or references a source index `>= F`.
    pub fn new(file_packets: usize, batch_size: usize, batches: Vec<Batch>) -> Self {
        let mut incidence = vec![Vec::new(); file_packets];
        for (j, b) in batches.iter().enumerate() {
            assert_eq!(b.index as usize, j, "batches must be indexed 0..J in order");
            assert_eq!(b.batch_size(), batch_size, "batch {j} has wrong width");
            for &c in &b.contributors {
                incidence[c as usize].push(j as u32);
            }
        }
        BatchCatalog {
            file_packets,
            batch_size,
            batches,
            incidence,
        }
    }

    /// Encodes `count` batches of `file` and returns the catalog together
    /// with every coded packet, batch by batch.
    pub fn encode<R: Rng + ?Sized>(
        file: &SourceFile,
        count: usize,
        psi: &DegreeDistribution,
        batch_size: usize,
        rng: &mut R,
    ) -> Result<(Arc<Self>, Vec<Vec<CodedPacket>>), CodecError> {
        let mut batches = Vec::with_capacity(count);
        let mut packets = Vec::with_capacity(count);
        for j in 0..count {
            let (b, p) = encode_batch(file, j as u32, psi, batch_size, rng)?;
            batches.push(b);
            packets.push(p);
        }
        Ok((
            Arc::new(BatchCatalog::new(file.len(), batch_size, batches)),
            packets,
        ))
    }

    pub fn file_packets(&self) -> usize {
        self.file_packets
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    pub fn len(&self) -> usize {
        self.batches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.batches.is_empty()
    }

    pub fn batch(&self, j: u32) -> Option<&Batch> {
        self.batches.get(j as usize)
    }

    pub fn batches(&self) -> &[Batch] {
        &self.batches
    }

    /// Batches that contain source packet `s`.
    pub fn batches_of(&self, s: u32) -> &[u32] {
        &self.incidence[s as usize]
    }

    /// Source packets that appear in no batch; these can never be decoded.
    pub fn uncovered(&self) -> usize {
        self.incidence.iter().filter(|b| b.is_empty()).count()
    }
}
