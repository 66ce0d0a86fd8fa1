use std::collections::BTreeMap;

use serde::Serialize;

use super::RowError;

/// Rejection samples kept per reader.
pub const MAX_REJECTION_SAMPLES: usize = 20;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct RejectionSample {
    pub line: u64,
    pub reason: String,
}

/// Row accounting for one reader. `rows_read = rows_accepted + rows_rejected`
/// always holds.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct IngestStats {
    pub rows_read: u64,
    pub rows_accepted: u64,
    pub rows_rejected: u64,
    /// The lowest-numbered rejected lines, at most [`MAX_REJECTION_SAMPLES`].
    pub rejection_samples: Vec<RejectionSample>,
    pub rejections_by_reason: BTreeMap<String, u64>,
}

impl IngestStats {
    pub fn accept(&mut self) {
        self.rows_read += 1;
        self.rows_accepted += 1;
    }

    pub fn reject(&mut self, line: u64, reason: &RowError) {
        self.rows_read += 1;
        self.rows_rejected += 1;
        self.note(line, reason);
    }

    /// Turns a previously accepted row into a rejection, for checks that can
    /// only run after the row left the reader (partition-level duplicates).
    pub fn reclassify_as_rejected(&mut self, line: u64, reason: &RowError) {
        debug_assert!(self.rows_accepted > 0);
        self.rows_accepted -= 1;
        self.rows_rejected += 1;
        self.note(line, reason);
    }

    fn note(&mut self, line: u64, reason: &RowError) {
        *self
            .rejections_by_reason
            .entry(reason.kind().to_string())
            .or_default() += 1;
        self.push_sample(RejectionSample {
            line,
            reason: reason.to_string(),
        });
    }

    fn push_sample(&mut self, sample: RejectionSample) {
        if self.rejection_samples.len() == MAX_REJECTION_SAMPLES {
            if self
                .rejection_samples
                .last()
                .is_some_and(|last| *last <= sample)
            {
                return;
            }
            self.rejection_samples.pop();
        }
        let at = self.rejection_samples.partition_point(|s| *s <= sample);
        self.rejection_samples.insert(at, sample);
    }

    pub fn merge(&mut self, other: IngestStats) {
        self.rows_read += other.rows_read;
        self.rows_accepted += other.rows_accepted;
        self.rows_rejected += other.rows_rejected;
        for (k, n) in other.rejections_by_reason {
            *self.rejections_by_reason.entry(k).or_default() += n;
        }
        for s in other.rejection_samples {
            self.push_sample(s);
        }
    }

    pub fn is_balanced(&self) -> bool {
        self.rows_read == self.rows_accepted + self.rows_rejected
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn samples_keep_lowest_lines() {
        let mut s = IngestStats::default();
        for line in (1..=50).rev() {
            s.reject(line, &RowError::MissingField("cep"));
        }
        assert_eq!(s.rejection_samples.len(), MAX_REJECTION_SAMPLES);
        assert_eq!(s.rejection_samples[0].line, 1);
        assert_eq!(s.rejection_samples.last().unwrap().line, 20);
        assert_eq!(s.rejections_by_reason["MissingField"], 50);
        assert!(s.is_balanced());
    }

    #[test]
    fn merge_is_symmetric() {
        let mut a = IngestStats::default();
        a.accept();
        a.reject(7, &RowError::BadYear(2013));
        let mut b = IngestStats::default();
        b.reject(3, &RowError::NegativeJobs(-1));
        b.accept();
        b.reclassify_as_rejected(9, &RowError::MissingField("x"));
        let mut ab = a.clone();
        ab.merge(b.clone());
        let mut ba = b;
        ba.merge(a);
        assert_eq!(ab, ba);
        assert_eq!(
            (ab.rows_read, ab.rows_accepted, ab.rows_rejected),
            (4, 1, 3)
        );
        assert!(ab.is_balanced());
    }
}
