//! Seven-way classification of day-over-day TimeMap changes.
//!
//! The memento-set delta is inspected first, the archive-set delta second:
//!
//! | case | mementos gained | mementos lost | archives        |
//! |------|-----------------|---------------|-----------------|
//! | 1    | no              | no            | any             |
//! | 2    | yes             | no            | unchanged       |
//! | 3    | yes             | no            | gained, none lost |
//! | 4    | yes             | any           | lost at least one |
//! | 5    | yes             | yes           | none lost       |
//! | 6    | no              | yes           | lost at least one |
//! | 7    | no              | yes           | none lost       |
//!
//! Cases 2 through 5 add mementos and count as improvements.

use std::cmp::Ordering;
use std::fmt;

use crate::error::Result;
use crate::model::{ensure_same_resource, IdentityPolicy, KeyedSnapshot, TimeMapSnapshot};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ChangeCase {
    Case1 = 1,
    Case2,
    Case3,
    Case4,
    Case5,
    Case6,
    Case7,
}

impl ChangeCase {
    pub const ALL: [ChangeCase; 7] = [
        ChangeCase::Case1,
        ChangeCase::Case2,
        ChangeCase::Case3,
        ChangeCase::Case4,
        ChangeCase::Case5,
        ChangeCase::Case6,
        ChangeCase::Case7,
    ];

    pub fn number(self) -> u8 {
        self as u8
    }

    pub fn from_number(n: u8) -> Option<Self> {
        ChangeCase::ALL.get(usize::from(n).checked_sub(1)?).copied()
    }
}

impl fmt::Display for ChangeCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.number())
    }
}

/// Counts behind a classification.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChangeDelta {
    /// Archives contributing at t.
    pub a: usize,
    /// Archives contributing at t+1.
    pub a_prime: usize,
    pub m: usize,
    pub m_prime: usize,
    pub gained: usize,
    pub lost: usize,
    pub archives_gained: usize,
    pub archives_lost: usize,
    pub policy: IdentityPolicy,
}

impl ChangeDelta {
    pub fn between(prev: &KeyedSnapshot, next: &KeyedSnapshot, policy: IdentityPolicy) -> Self {
        let (lost, gained) = sorted_differences(&prev.keys, &next.keys);
        let (archives_lost, archives_gained) = sorted_differences(&prev.archives, &next.archives);
        ChangeDelta {
            a: prev.archives.len(),
            a_prime: next.archives.len(),
            m: prev.cardinality(),
            m_prime: next.cardinality(),
            gained,
            lost,
            archives_gained,
            archives_lost,
            policy,
        }
    }

    pub fn case(&self) -> ChangeCase {
        match (self.gained > 0, self.lost > 0) {
            (false, false) => ChangeCase::Case1,
            (true, _) if self.archives_lost > 0 => ChangeCase::Case4,
            (true, true) => ChangeCase::Case5,
            (true, false) if self.archives_gained > 0 => ChangeCase::Case3,
            (true, false) => ChangeCase::Case2,
            (false, true) if self.archives_lost > 0 => ChangeCase::Case6,
            (false, true) => ChangeCase::Case7,
        }
    }
}

/// `(|a \ b|, |b \ a|)` for sorted, deduplicated slices.
fn sorted_differences<T: Ord>(a: &[T], b: &[T]) -> (usize, usize) {
    let (mut i, mut j) = (0, 0);
    let (mut only_a, mut only_b) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            Ordering::Less => {
                only_a += 1;
                i += 1;
            }
            Ordering::Greater => {
                only_b += 1;
                j += 1;
            }
            Ordering::Equal => {
                i += 1;
                j += 1;
            }
        }
    }
    (only_a + a.len() - i, only_b + b.len() - j)
}

pub fn classify(
    prev: &TimeMapSnapshot,
    next: &TimeMapSnapshot,
    policy: IdentityPolicy,
) -> Result<ChangeCase> {
    Ok(delta(prev, next, policy)?.case())
}

pub fn delta(
    prev: &TimeMapSnapshot,
    next: &TimeMapSnapshot,
    policy: IdentityPolicy,
) -> Result<ChangeDelta> {
    ensure_same_resource(prev, next)?;
    Ok(ChangeDelta::between(
        &KeyedSnapshot::new(prev, policy),
        &KeyedSnapshot::new(next, policy),
        policy,
    ))
}

/// Cases that add mementos and may replace a cached TimeMap.
pub fn is_improvement(case: ChangeCase) -> bool {
    matches!(
        case,
        ChangeCase::Case2 | ChangeCase::Case3 | ChangeCase::Case4 | ChangeCase::Case5
    )
}
