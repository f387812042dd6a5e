//! Minimal edit distance by memoized suffix recursion.

#![allow(dead_code)]

pub fn min_edits<T: PartialEq>(a: &[T], b: &[T]) -> u64 {
    let mut memo = vec![vec![None; b.len() + 1]; a.len() + 1];
    go(a, b, 0, 0, &mut memo)
}

fn go<T: PartialEq>(a: &[T], b: &[T], i: usize, j: usize, memo: &mut Vec<Vec<Option<u64>>>) -> u64 {
    if let Some(v) = memo[i][j] {
        return v;
    }
    let v = if i == a.len() {
        (b.len() - j) as u64
    } else if j == b.len() {
        (a.len() - i) as u64
    } else {
        let keep = go(a, b, i + 1, j + 1, memo) + u64::from(a[i] != b[j]);
        let drop = go(a, b, i + 1, j, memo) + 1;
        let add = go(a, b, i, j + 1, memo) + 1;
        keep.min(drop).min(add)
    };
    memo[i][j] = Some(v);
    v
}

/// Every sequence of length ≤ `max_len` over `alphabet` symbols 0..alphabet.
pub fn all_sequences(alphabet: u8, max_len: usize) -> Vec<Vec<u8>> {
    let mut out = vec![Vec::new()];
    let mut frontier = vec![Vec::new()];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for s in &frontier {
            for x in 0..alphabet {
                let mut t: Vec<u8> = s.clone();
                t.push(x);
                next.push(t);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}
