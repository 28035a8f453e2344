//! Brute-force reference computations, written without the library's fiber
//! iteration or posterior inversion.

#![allow(dead_code)]

pub fn decode(mut idx: usize, len: usize, vocab: usize) -> Vec<u32> {
    let mut x = vec![0u32; len];
    for k in (0..len).rev() {
        x[k] = (idx % vocab) as u32;
        idx /= vocab;
    }
    x
}

pub fn encode(x: &[u32], vocab: usize) -> usize {
    let mut idx = 0;
    for &tok in x {
        idx = idx * vocab + tok as usize;
    }
    idx
}

/// One forward step enumerated over every `(x, Z)` outcome.
pub fn naive_forward(p: &[f64], len: usize, vocab: usize, pos: usize, stay: f64, tok: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; p.len()];
    for (idx, &mass) in p.iter().enumerate() {
        out[idx] += stay * mass;
        for (a, &w) in tok.iter().enumerate() {
            let mut y = decode(idx, len, vocab);
            y[pos] = a as u32;
            out[encode(&y, vocab)] += (1.0 - stay) * w * mass;
        }
    }
    out
}

/// `[P_0, …, P_T]` by repeated naive steps with a per-step stay probability.
pub fn naive_marginals(
    p: &[f64],
    len: usize,
    vocab: usize,
    perm: &[usize],
    stays: &[f64],
    tok: &[f64],
) -> Vec<Vec<f64>> {
    let mut out = vec![p.to_vec()];
    for (t, &stay) in stays.iter().enumerate() {
        let next = naive_forward(out.last().unwrap(), len, vocab, perm[t % len], stay, tok);
        out.push(next);
    }
    out
}

/// `P(X_{t,i} = · | X_{t+1,-i} = y_{-i})` from the enumerated pair law of
/// `(X_t, X_{t+1})`. `None` where the context has zero probability.
pub fn naive_reverse_conditional(
    p_t: &[f64],
    len: usize,
    vocab: usize,
    pos: usize,
    stay: f64,
    tok: &[f64],
    y: &[u32],
) -> Option<Vec<f64>> {
    let mut weights = vec![0.0; vocab];
    for (xi, &mass) in p_t.iter().enumerate() {
        let x = decode(xi, len, vocab);
        // transitions x -> y' for every y' agreeing with y off `pos`
        for b in 0..vocab {
            let mut y2 = y.to_vec();
            y2[pos] = b as u32;
            let mut k = 0.0;
            if x == y2 {
                k += stay;
            }
            let mut x_moved = x.clone();
            x_moved[pos] = b as u32;
            if x_moved == y2 {
                k += (1.0 - stay) * tok[b];
            }
            weights[x[pos] as usize] += mass * k;
        }
    }
    let total: f64 = weights.iter().sum();
    (total > 0.0).then(|| weights.iter().map(|w| w / total).collect())
}

/// Pushes `init` through the reverse conditionals for `t = T−1, …, 0`.
pub fn naive_reverse(
    marginals: &[Vec<f64>],
    init: &[f64],
    len: usize,
    vocab: usize,
    perm: &[usize],
    stays: &[f64],
    tok: &[f64],
) -> Vec<f64> {
    let mut q = init.to_vec();
    for t in (0..stays.len()).rev() {
        let pos = perm[t % len];
        let mut next = vec![0.0; q.len()];
        for (yi, &mass) in q.iter().enumerate() {
            if mass == 0.0 {
                continue;
            }
            let y = decode(yi, len, vocab);
            let cond = naive_reverse_conditional(&marginals[t], len, vocab, pos, stays[t], tok, &y)
                .expect("reverse chain stays inside the support");
            for (a, c) in cond.into_iter().enumerate() {
                let mut x = y.clone();
                x[pos] = a as u32;
                next[encode(&x, vocab)] += mass * c;
            }
        }
        q = next;
    }
    q
}

pub fn product(tok: &[f64], len: usize) -> Vec<f64> {
    let vocab = tok.len();
    (0..vocab.pow(len as u32))
        .map(|idx| decode(idx, len, vocab).iter().map(|&a| tok[a as usize]).product())
        .collect()
}

/// Half-L1 with sorted, compensated summation.
pub fn tv_kahan(p: &[f64], q: &[f64]) -> f64 {
    let mut diffs: Vec<f64> = p.iter().zip(q).map(|(a, b)| (a - b).abs()).collect();
    diffs.sort_by(f64::total_cmp);
    let (mut sum, mut c) = (0.0f64, 0.0f64);
    for d in diffs {
        let y = d - c;
        let t = sum + y;
        c = (t - sum) - y;
        sum = t;
    }
    0.5 * sum
}

/// `P(X_i = · | X_{-i} = x_{-i})` read from the table directly.
pub fn naive_conditional(p: &[f64], _len: usize, vocab: usize, pos: usize, x: &[u32]) -> Option<Vec<f64>> {
    let mut w = vec![0.0; vocab];
    for a in 0..vocab {
        let mut y = x.to_vec();
        y[pos] = a as u32;
        w[a] = p[encode(&y, vocab)];
    }
    let total: f64 = w.iter().sum();
    (total > 0.0).then(|| w.iter().map(|v| v / total).collect())
}

/// One round-robin Gibbs sweep by direct enumeration.
pub fn naive_gibbs_sweep(target: &[f64], q: &[f64], len: usize, vocab: usize, perm: &[usize]) -> Vec<f64> {
    let mut q = q.to_vec();
    for &pos in perm {
        let mut next = vec![0.0; q.len()];
        for (yi, &mass) in q.iter().enumerate() {
            if mass == 0.0 {
                continue;
            }
            let y = decode(yi, len, vocab);
            let cond = naive_conditional(target, len, vocab, pos, &y).expect("full support");
            for (a, c) in cond.into_iter().enumerate() {
                let mut x = y.clone();
                x[pos] = a as u32;
                next[encode(&x, vocab)] += mass * c;
            }
        }
        q = next;
    }
    q
}
