//! The masking stage has no parameters: it turns true lengths into per-step
//! flags consumed by the LSTM.

/// `mask[i]` is true iff window `i` starts before `true_length`.
pub fn window_mask(true_length: usize, window_len: usize, windows: usize) -> Vec<bool> {
    (0..windows).map(|i| i * window_len < true_length).collect()
}

pub const MASKING_PARAMS: usize = 0;
