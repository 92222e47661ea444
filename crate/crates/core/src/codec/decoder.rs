use std::sync::Arc;

use rand::Rng;

use super::{recode, BatchCatalog, CodecError, CodedPacket, SourceFile};
use crate::galois::{axpy, dot, EchelonBasis, Matrix};

#[derive(Clone, Debug)]
struct BatchSlot {
    basis: EchelonBasis,
    packets: Vec<CodedPacket>,
}

/// Largest number of unresolved sources handed to Gaussian elimination
/// once BP stalls.
pub const RESIDUAL_LIMIT: usize = 512;

#[derive(Clone, Debug)]
enum SolveStep {
    /// A batch solved by BP and the contributor positions it resolved.
    Batch { batch: u32, unknown: Vec<u16> },
    /// The sources left after BP, solved jointly from the listed
    /// `(batch, stored packet)` rows.
    Residual { sources: Vec<u32>, rows: Vec<(u32, u32)> },
}

/// Receiver-side state: innovative packets per batch and the BP decoder.
///
/// The symbolic part of BP (which source packets are determined) is kept at
/// its fixpoint after every accepted packet, so [`DecoderState::is_complete`]
/// is always current. When BP stalls with at most [`RESIDUAL_LIMIT`]
/// sources left, the remaining sources are solved jointly by elimination
/// over the stacked rows of the batches that contain them. Payload
/// arithmetic is deferred to [`DecoderState::bp_decode`], which replays the
/// solve order.
#[derive(Clone, Debug)]
pub struct DecoderState {
    catalog: Arc<BatchCatalog>,
    slots: Vec<BatchSlot>,
    unresolved: Vec<u32>,
    solved: Vec<bool>,
    recovered: Vec<bool>,
    recovered_count: usize,
    total_rank: usize,
    steps: Vec<SolveStep>,
    payloads: Vec<Option<Vec<u8>>>,
    payload_cursor: usize,
    /// Total rank at which the residual solve is next attempted.
    next_attempt: usize,
    failed_attempts: u32,
}

impl DecoderState {
    pub fn new(catalog: Arc<BatchCatalog>) -> Self {
        let m = catalog.batch_size();
        let slots = (0..catalog.len())
            .map(|_| BatchSlot {
                basis: EchelonBasis::new(m),
                packets: Vec::new(),
            })
            .collect();
        let unresolved = catalog
            .batches()
            .iter()
            .map(|b| b.degree() as u32)
            .collect();
        let f = catalog.file_packets();
        DecoderState {
            slots,
            unresolved,
            solved: vec![false; catalog.len()],
            recovered: vec![false; f],
            recovered_count: 0,
            total_rank: 0,
            steps: Vec::new(),
            payloads: vec![None; f],
            payload_cursor: 0,
            next_attempt: 0,
            failed_attempts: 0,
            catalog,
        }
    }

    pub fn catalog(&self) -> &Arc<BatchCatalog> {
        &self.catalog
    }

    /// Whether `p` would raise the rank of its batch. The state is unchanged.
    pub fn is_innovative(&self, p: &CodedPacket) -> bool {
        match self.slots.get(p.batch as usize) {
            Some(slot) => {
                p.coeff.len() == slot.basis.width() && slot.basis.is_independent(&p.coeff)
            }
            None => false,
        }
    }

    /// Stores `p` if it is innovative and advances BP. Returns acceptance.
    pub fn absorb(&mut self, p: CodedPacket) -> bool {
        let j = p.batch;
        let Some(slot) = self.slots.get_mut(j as usize) else {
            return false;
        };
        if p.coeff.len() != slot.basis.width() || !slot.basis.insert(&p.coeff) {
            return false;
        }
        slot.packets.push(p);
        self.total_rank += 1;
        self.propagate(j);
        self.solve_residual(false);
        true
    }

    pub fn batch_rank(&self, j: u32) -> usize {
        self.slots[j as usize].basis.rank()
    }

    pub fn ranks(&self) -> Vec<usize> {
        self.slots.iter().map(|s| s.basis.rank()).collect()
    }

    /// Σ_j rank_j, i.e. the number of innovative packets held.
    pub fn total_rank(&self) -> usize {
        self.total_rank
    }

    pub fn stored(&self, j: u32) -> &[CodedPacket] {
        &self.slots[j as usize].packets
    }

    /// A fresh random combination of the stored packets of batch `j`.
    pub fn recode<R: Rng + ?Sized>(&self, j: u32, rng: &mut R) -> Result<CodedPacket, CodecError> {
        let slot = self
            .slots
            .get(j as usize)
            .ok_or(CodecError::UnknownBatch(j))?;
        recode(&slot.packets, rng)
    }

    pub fn recovered_count(&self) -> usize {
        self.recovered_count
    }

    pub fn is_recovered(&self, s: u32) -> bool {
        self.recovered[s as usize]
    }

    /// True once every source packet is determined.
    pub fn is_complete(&self) -> bool {
        self.recovered_count == self.catalog.file_packets()
    }

    fn propagate(&mut self, start: u32) {
        let mut queue = vec![start];
        while let Some(j) = queue.pop() {
            let ju = j as usize;
            if self.solved[ju] || self.unresolved[ju] as usize > self.slots[ju].basis.rank() {
                continue;
            }
            let Some(unknown) = self.try_solve(j) else {
                continue;
            };
            self.solved[ju] = true;
            let catalog = Arc::clone(&self.catalog);
            let batch = &catalog.batches()[ju];
            for &pos in &unknown {
                let s = batch.contributors[pos as usize];
                debug_assert!(!self.recovered[s as usize]);
                self.recovered[s as usize] = true;
                self.recovered_count += 1;
                for &b in catalog.batches_of(s) {
                    if b != j {
                        self.unresolved[b as usize] -= 1;
                        queue.push(b);
                    }
                }
            }
            self.unresolved[ju] = 0;
            if !unknown.is_empty() {
                self.steps.push(SolveStep::Batch { batch: j, unknown });
            }
        }
    }

    /// Jointly solves the sources BP left once few enough remain. Unless
    /// `force` is set, attempts are skipped until the rank has grown past
    /// the point where the previous attempt could have changed.
    fn solve_residual(&mut self, force: bool) {
        let f = self.catalog.file_packets();
        let u = f - self.recovered_count;
        if u == 0 || u > RESIDUAL_LIMIT || (!force && self.total_rank < self.next_attempt) {
            return;
        }
        let catalog = Arc::clone(&self.catalog);
        let batches: Vec<u32> = (0..catalog.len() as u32)
            .filter(|&j| {
                let ju = j as usize;
                !self.solved[ju] && self.unresolved[ju] > 0 && self.slots[ju].basis.rank() > 0
            })
            .collect();
        let budget: usize = batches
            .iter()
            .map(|&j| (self.unresolved[j as usize] as usize).min(self.slots[j as usize].basis.rank()))
            .sum();
        if budget < u {
            self.next_attempt = self.total_rank + (u - budget);
            return;
        }
        let sources: Vec<u32> = (0..f as u32).filter(|&s| !self.recovered[s as usize]).collect();
        let covered = sources.iter().all(|&s| {
            catalog
                .batches_of(s)
                .iter()
                .any(|&b| self.slots[b as usize].basis.rank() > 0)
        });
        if !covered {
            self.next_attempt = self.total_rank + 1;
            return;
        }
        let mut column = vec![usize::MAX; f];
        for (c, &s) in sources.iter().enumerate() {
            column[s as usize] = c;
        }
        let mut basis = EchelonBasis::new(u);
        let mut rows = Vec::with_capacity(u);
        let mut row = vec![0u8; u];
        'fill: for &j in &batches {
            let batch = &catalog.batches()[j as usize];
            for (idx, pkt) in self.slots[j as usize].packets.iter().enumerate() {
                let e = batch.contributor_coefficients(&pkt.coeff);
                row.iter_mut().for_each(|x| *x = 0);
                for (pos, &s) in batch.contributors.iter().enumerate() {
                    let c = column[s as usize];
                    if c != usize::MAX {
                        row[c] = e[pos];
                    }
                }
                if basis.insert(&row) {
                    rows.push((j, idx as u32));
                    if rows.len() == u {
                        break 'fill;
                    }
                }
            }
        }
        if rows.len() < u {
            self.failed_attempts += 1;
            self.next_attempt = self.total_rank + (1usize << self.failed_attempts.min(6));
            return;
        }
        for &s in &sources {
            self.recovered[s as usize] = true;
            for &b in catalog.batches_of(s) {
                self.unresolved[b as usize] -= 1;
            }
        }
        self.recovered_count = f;
        self.steps.push(SolveStep::Residual { sources, rows });
    }

    /// Unknown contributor positions of batch `j` if the restricted system
    /// `G[U,:] · Cᵀ` has full row rank.
    fn try_solve(&self, j: u32) -> Option<Vec<u16>> {
        let batch = &self.catalog.batches()[j as usize];
        let unknown: Vec<u16> = batch
            .contributors
            .iter()
            .enumerate()
            .filter(|(_, &s)| !self.recovered[s as usize])
            .map(|(p, _)| p as u16)
            .collect();
        if unknown.is_empty() {
            return Some(unknown);
        }
        let basis = self.slots[j as usize].basis.rows();
        let mut a = Matrix::zeros(unknown.len(), basis.len());
        for (row, &pos) in unknown.iter().enumerate() {
            let g = batch.generator.row(pos as usize);
            for (col, b) in basis.iter().enumerate() {
                a.set(row, col, dot(g, b));
            }
        }
        (a.rank() == unknown.len()).then_some(unknown)
    }

    /// Runs BP to its fixpoint and solves payloads for every batch resolved
    /// so far. Returns the recovered source indices in ascending order.
    pub fn bp_decode(&mut self) -> Result<Vec<u32>, CodecError> {
        for j in 0..self.slots.len() as u32 {
            self.propagate(j);
        }
        self.solve_residual(true);
        while self.payload_cursor < self.steps.len() {
            match self.steps[self.payload_cursor].clone() {
                SolveStep::Batch { batch, unknown } => self.solve_payloads(batch, &unknown)?,
                SolveStep::Residual { sources, rows } => self.solve_residual_payloads(&sources, &rows)?,
            }
            self.payload_cursor += 1;
        }
        Ok(self
            .recovered
            .iter()
            .enumerate()
            .filter(|(_, &r)| r)
            .map(|(i, _)| i as u32)
            .collect())
    }

    fn solve_payloads(&mut self, j: u32, unknown: &[u16]) -> Result<(), CodecError> {
        let catalog = Arc::clone(&self.catalog);
        let batch = &catalog.batches()[j as usize];
        let packets = &self.slots[j as usize].packets;
        let len = packets.first().map_or(0, |p| p.payload.len());
        let u = unknown.len();
        let mut is_unknown = vec![false; batch.degree()];
        for &p in unknown {
            is_unknown[p as usize] = true;
        }

        let mut system = Matrix::zeros(0, u + len);
        let mut row = vec![0u8; u + len];
        for pkt in packets {
            let e = batch.contributor_coefficients(&pkt.coeff);
            row.iter_mut().for_each(|x| *x = 0);
            for (i, &pos) in unknown.iter().enumerate() {
                row[i] = e[pos as usize];
            }
            let residual = &mut row[u..];
            residual.copy_from_slice(&pkt.payload);
            for (pos, &s) in batch.contributors.iter().enumerate() {
                if is_unknown[pos] || e[pos] == 0 {
                    continue;
                }
                let known = self.payloads[s as usize]
                    .as_deref()
                    .ok_or(CodecError::InconsistentState(j))?;
                axpy(residual, e[pos], known);
            }
            system.push_row(&row);
        }
        let (reduced, pivots) = system.row_reduce();
        if pivots.len() < u || pivots.iter().take(u).enumerate().any(|(i, &c)| c != i) {
            return Err(CodecError::InconsistentState(j));
        }
        if pivots.len() > u {
            // a zero coefficient row with a nonzero residual
            return Err(CodecError::InconsistentState(j));
        }
        for (i, &pos) in unknown.iter().enumerate() {
            let s = batch.contributors[pos as usize] as usize;
            self.payloads[s] = Some(reduced.row(i)[u..].to_vec());
        }
        Ok(())
    }

    fn solve_residual_payloads(&mut self, sources: &[u32], rows: &[(u32, u32)]) -> Result<(), CodecError> {
        let catalog = Arc::clone(&self.catalog);
        let u = sources.len();
        let mut column = vec![usize::MAX; catalog.file_packets()];
        for (c, &s) in sources.iter().enumerate() {
            column[s as usize] = c;
        }
        let len = rows
            .first()
            .map_or(0, |&(j, idx)| self.slots[j as usize].packets[idx as usize].payload.len());
        let mut system = Matrix::zeros(0, u + len);
        let mut row = vec![0u8; u + len];
        for &(j, idx) in rows {
            let batch = &catalog.batches()[j as usize];
            let pkt = &self.slots[j as usize].packets[idx as usize];
            let e = batch.contributor_coefficients(&pkt.coeff);
            row.iter_mut().for_each(|x| *x = 0);
            row[u..].copy_from_slice(&pkt.payload);
            for (pos, &s) in batch.contributors.iter().enumerate() {
                if e[pos] == 0 {
                    continue;
                }
                match column[s as usize] {
                    usize::MAX => {
                        let known = self.payloads[s as usize]
                            .as_deref()
                            .ok_or(CodecError::InconsistentState(j))?;
                        axpy(&mut row[u..], e[pos], known);
                    }
                    c => row[c] = e[pos],
                }
            }
            system.push_row(&row);
        }
        let (reduced, pivots) = system.row_reduce();
        if pivots.len() != u || pivots.iter().enumerate().any(|(i, &c)| c != i) {
            return Err(CodecError::InconsistentState(rows.first().map_or(0, |r| r.0)));
        }
        for (i, &s) in sources.iter().enumerate() {
            self.payloads[s as usize] = Some(reduced.row(i)[u..].to_vec());
        }
        Ok(())
    }

    /// Recovered payload of source packet `s`, available after `bp_decode`.
    pub fn payload(&self, s: u32) -> Option<&[u8]> {
        self.payloads[s as usize].as_deref()
    }

    /// The decoded file, if decoding is complete.
    pub fn recover_file(&mut self) -> Result<Option<SourceFile>, CodecError> {
        self.bp_decode()?;
        if !self.is_complete() || self.catalog.file_packets() == 0 {
            return Ok(None);
        }
        let packets = self
            .payloads
            .iter()
            .map(|p| p.clone().expect("complete decoder has every payload"))
            .collect();
        SourceFile::new(packets).map(Some)
    }
}

/// `decode_complete` in free-function form.
pub fn decode_complete(state: &DecoderState) -> bool {
    state.is_complete()
}
