use std::collections::VecDeque;

use crate::SnoreClass;

/// Majority vote over the last `k` raw classes.
///
/// While fewer than `k` classes have been seen the vote runs over what
/// exists. A tied vote (possible only during that bootstrap) keeps the
/// previous smoothed class.
#[derive(Debug, Clone)]
pub struct MajorityVote {
    k: usize,
    history: VecDeque<SnoreClass>,
    current: SnoreClass,
}

impl MajorityVote {
    pub fn new(k: usize) -> Self {
        assert!(k % 2 == 1, "smoothing window must be odd");
        Self { k, history: VecDeque::with_capacity(k), current: SnoreClass::NonSnoring }
    }

    pub fn push(&mut self, raw: SnoreClass) -> SnoreClass {
        if self.history.len() == self.k {
            self.history.pop_front();
        }
        self.history.push_back(raw);
        let snores = self.history.iter().filter(|c| c.is_snoring()).count();
        let others = self.history.len() - snores;
        if snores > others {
            self.current = SnoreClass::Snoring;
        } else if others > snores {
            self.current = SnoreClass::NonSnoring;
        }
        self.current
    }

    pub fn current(&self) -> SnoreClass {
        self.current
    }
}
