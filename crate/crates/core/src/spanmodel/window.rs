use serde::{Deserialize, Serialize};

pub const MAX_SEQ_LEN: usize = 384;
pub const DOC_STRIDE: usize = 128;

/// Token range `[start, end)` of a passage fed to the model in one pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub start: usize,
    pub end: usize,
}

impl Window {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }

    /// Window-local inclusive span for the passage-level half-open token
    /// range, if it fits.
    pub fn localize(&self, start_tok: usize, end_tok: usize) -> Option<(usize, usize)> {
        (start_tok >= self.start && end_tok <= self.end && start_tok < end_tok)
            .then(|| (start_tok - self.start, end_tok - 1 - self.start))
    }
}

/// Windows starting at `0, stride, 2·stride, …`, the last one clipped at `n`
/// and no window starting once one has reached the end.
pub fn split_windows(n: usize, size: usize, stride: usize) -> Vec<Window> {
    assert!(size > 0 && stride > 0 && stride <= size, "need 0 < stride <= size");
    let mut out = Vec::new();
    let mut start = 0;
    loop {
        let end = (start + size).min(n);
        out.push(Window { start, end });
        if end >= n {
            return out;
        }
        start += stride;
    }
}
