//! Zhang-Suen thinning of a binary ridge image.

/// Neighbour offsets in ring order P2..P9: N, NE, E, SE, S, SW, W, NW.
pub(crate) const RING: [(isize, isize); 8] = [(0, -1), (1, -1), (1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1)];

#[inline]
pub(crate) fn ring_bits(img: &[bool], w: usize, h: usize, x: usize, y: usize) -> u8 {
    let mut bits = 0u8;
    for (k, (dx, dy)) in RING.iter().enumerate() {
        let xx = x as isize + dx;
        let yy = y as isize + dy;
        if xx >= 0 && yy >= 0 && (xx as usize) < w && (yy as usize) < h && img[yy as usize * w + xx as usize] {
            bits |= 1 << k;
        }
    }
    bits
}

/// `sum |P_i - P_{i+1}| / 2` around the ring.
#[inline]
pub(crate) fn ring_crossings(bits: u8) -> u32 {
    let mut t = 0;
    for k in 0..8 {
        let a = (bits >> k) & 1;
        let b = (bits >> ((k + 1) % 8)) & 1;
        t += (a ^ b) as u32;
    }
    t / 2
}

/// Number of 8-connected groups formed by the set neighbours themselves.
pub(crate) fn neighbour_components(bits: u8) -> u32 {
    let mut seen = 0u8;
    let mut comps = 0;
    for start in 0..8 {
        if bits & (1 << start) == 0 || seen & (1 << start) != 0 {
            continue;
        }
        comps += 1;
        let mut stack = vec![start];
        seen |= 1 << start;
        while let Some(k) = stack.pop() {
            let (ax, ay) = RING[k];
            for j in 0..8 {
                if bits & (1 << j) == 0 || seen & (1 << j) != 0 {
                    continue;
                }
                let (bx, by) = RING[j];
                if (ax - bx).abs() <= 1 && (ay - by).abs() <= 1 {
                    seen |= 1 << j;
                    stack.push(j);
                }
            }
        }
    }
    comps
}

/// Zhang-Suen thinning followed by one sequential pass that removes redundant
/// pixels (staircase corners): those with at least two neighbours that stay
/// 8-connected without them.
pub fn zhang_suen(img: &[bool], w: usize, h: usize) -> Vec<bool> {
    assert_eq!(img.len(), w * h);
    let mut cur = img.to_vec();
    let mut to_clear = Vec::new();
    loop {
        let mut changed = false;
        for pass in 0..2 {
            to_clear.clear();
            for y in 0..h {
                for x in 0..w {
                    if !cur[y * w + x] {
                        continue;
                    }
                    let bits = ring_bits(&cur, w, h, x, y);
                    let b = bits.count_ones();
                    if !(2..=6).contains(&b) {
                        continue;
                    }
                    // A(P1): 0 -> 1 transitions in ring order
                    let mut a = 0;
                    for k in 0..8 {
                        if (bits >> k) & 1 == 0 && (bits >> ((k + 1) % 8)) & 1 == 1 {
                            a += 1;
                        }
                    }
                    if a != 1 {
                        continue;
                    }
                    let p = |k: usize| (bits >> k) & 1 == 1;
                    // ring index: 0=P2(N) 2=P4(E) 4=P6(S) 6=P8(W)
                    let ok = if pass == 0 {
                        !(p(0) && p(2) && p(4)) && !(p(2) && p(4) && p(6))
                    } else {
                        !(p(0) && p(2) && p(6)) && !(p(0) && p(4) && p(6))
                    };
                    if ok {
                        to_clear.push(y * w + x);
                    }
                }
            }
            if !to_clear.is_empty() {
                changed = true;
                for &i in &to_clear {
                    cur[i] = false;
                }
            }
        }
        if !changed {
            break;
        }
    }
    for y in 0..h {
        for x in 0..w {
            if !cur[y * w + x] {
                continue;
            }
            let bits = ring_bits(&cur, w, h, x, y);
            if bits.count_ones() >= 2 && neighbour_components(bits) == 1 {
                cur[y * w + x] = false;
            }
        }
    }
    cur
}
