use std::collections::VecDeque;

/// Current frame plus this many previous ones.
pub const STACK_DEPTH: usize = 4;

/// Concatenates the current raw state with the previous three, newest first,
/// zero-padding frames from before the episode started.
#[derive(Clone, Debug)]
pub struct FrameStack {
    raw_dim: usize,
    frames: VecDeque<Vec<f64>>,
}

impl FrameStack {
    pub fn new(raw_dim: usize) -> Self {
        Self {
            raw_dim,
            frames: VecDeque::with_capacity(STACK_DEPTH),
        }
    }

    pub fn clear(&mut self) {
        self.frames.clear();
    }

    pub fn push(&mut self, raw: Vec<f64>) {
        debug_assert_eq!(raw.len(), self.raw_dim);
        if self.frames.len() == STACK_DEPTH {
            self.frames.pop_back();
        }
        self.frames.push_front(raw);
    }

    pub fn obs(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(STACK_DEPTH * self.raw_dim);
        for f in &self.frames {
            out.extend_from_slice(f);
        }
        out.resize(STACK_DEPTH * self.raw_dim, 0.0);
        out
    }
}

/// The newest frame of a stacked observation.
pub fn current_frame(obs: &[f64]) -> &[f64] {
    &obs[..obs.len() / STACK_DEPTH]
}
