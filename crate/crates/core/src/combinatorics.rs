//! Small enumeration helpers shared by the operator and hierarchy code.

/// `n!` as a float. Arities in this crate never exceed a dozen.
pub fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// All permutations of `0..n` in lexicographic order.
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    let items: Vec<usize> = (0..n).collect();
    ordered_tuples(&items, n)
}

/// All ordered tuples of `m` pairwise distinct entries drawn from `items`,
/// i.e. the index family `i_1 != ... != i_m`. Lexicographic in positions of
/// `items`.
pub fn ordered_tuples(items: &[usize], m: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if m > items.len() {
        return out;
    }
    let mut used = vec![false; items.len()];
    let mut cur = Vec::with_capacity(m);
    fill_tuples(items, m, &mut used, &mut cur, &mut out);
    out
}

fn fill_tuples(
    items: &[usize],
    m: usize,
    used: &mut [bool],
    cur: &mut Vec<usize>,
    out: &mut Vec<Vec<usize>>,
) {
    if cur.len() == m {
        out.push(cur.clone());
        return;
    }
    for i in 0..items.len() {
        if used[i] {
            continue;
        }
        used[i] = true;
        cur.push(items[i]);
        fill_tuples(items, m, used, cur, out);
        cur.pop();
        used[i] = false;
    }
}

/// All subsets of `items` (as sorted vectors), ordered by bitmask.
pub fn subsets(items: &[usize]) -> Vec<Vec<usize>> {
    assert!(items.len() < usize::BITS as usize);
    (0..1usize << items.len())
        .map(|mask| {
            items
                .iter()
                .enumerate()
                .filter(|(i, _)| mask & (1 << i) != 0)
                .map(|(_, &x)| x)
                .collect()
        })
        .collect()
}

/// Entries of `all` that are not in `removed`, preserving order.
pub fn complement(all: &[usize], removed: &[usize]) -> Vec<usize> {
    all.iter().copied().filter(|x| !removed.contains(x)).collect()
}
