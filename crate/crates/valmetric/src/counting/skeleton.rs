//! Binary skeletons for centerline Dice. Pixels outside the grid count as background.

pub const SKELETON_ALGORITHM_2D: &str = "zhang-suen thinning";
pub const SKELETON_ALGORITHM_3D: &str = "directional simple-point thinning (26/6), endpoints kept";

/// Skeleton of a 2D or 3D binary mask given in row-major order.
pub fn skeletonize(shape: &[usize], mask: &[bool]) -> Vec<bool> {
    match shape.len() {
        2 => zhang_suen(shape[0], shape[1], mask),
        3 => thin_3d([shape[0], shape[1], shape[2]], mask),
        _ => mask.to_vec(),
    }
}

fn zhang_suen(h: usize, w: usize, mask: &[bool]) -> Vec<bool> {
    let mut img = mask.to_vec();
    let at = |img: &[bool], r: isize, c: isize| -> u8 {
        if r < 0 || c < 0 || r >= h as isize || c >= w as isize {
            0
        } else {
            img[r as usize * w + c as usize] as u8
        }
    };
    loop {
        let mut changed = false;
        for step in 0..2 {
            let mut remove = Vec::new();
            for r in 0..h as isize {
                for c in 0..w as isize {
                    if at(&img, r, c) == 0 {
                        continue;
                    }
                    // P2..P9 clockwise from north
                    let p = [
                        at(&img, r - 1, c),
                        at(&img, r - 1, c + 1),
                        at(&img, r, c + 1),
                        at(&img, r + 1, c + 1),
                        at(&img, r + 1, c),
                        at(&img, r + 1, c - 1),
                        at(&img, r, c - 1),
                        at(&img, r - 1, c - 1),
                    ];
                    let b: u8 = p.iter().sum();
                    let a = (0..8).filter(|&i| p[i] == 0 && p[(i + 1) % 8] == 1).count();
                    let (p2, p4, p6, p8) = (p[0], p[2], p[4], p[6]);
                    let cond = if step == 0 {
                        p2 * p4 * p6 == 0 && p4 * p6 * p8 == 0
                    } else {
                        p2 * p4 * p8 == 0 && p2 * p6 * p8 == 0
                    };
                    if (2..=6).contains(&b) && a == 1 && cond {
                        remove.push(r as usize * w + c as usize);
                    }
                }
            }
            changed |= !remove.is_empty();
            for i in remove {
                img[i] = false;
            }
        }
        if !changed {
            return img;
        }
    }
}

const fn cube_index(dz: i32, dy: i32, dx: i32) -> usize {
    ((dz + 1) * 9 + (dy + 1) * 3 + (dx + 1)) as usize
}

fn cube_offsets() -> [(i32, i32, i32); 27] {
    let mut o = [(0, 0, 0); 27];
    for dz in -1..=1 {
        for dy in -1..=1 {
            for dx in -1..=1 {
                o[cube_index(dz, dy, dx)] = (dz, dy, dx);
            }
        }
    }
    o
}

/// Components of `set` (indices into the 3×3×3 cube) under the given adjacency.
fn components(set: &[bool; 27], adjacent: impl Fn((i32, i32, i32), (i32, i32, i32)) -> bool) -> Vec<Vec<usize>> {
    let off = cube_offsets();
    let mut seen = [false; 27];
    let mut out = Vec::new();
    for start in 0..27 {
        if !set[start] || seen[start] {
            continue;
        }
        let mut comp = vec![start];
        seen[start] = true;
        let mut k = 0;
        while k < comp.len() {
            let cur = comp[k];
            k += 1;
            for nxt in 0..27 {
                if set[nxt] && !seen[nxt] && adjacent(off[cur], off[nxt]) {
                    seen[nxt] = true;
                    comp.push(nxt);
                }
            }
        }
        out.push(comp);
    }
    out
}

/// Simple-point test for 26-connected foreground, 6-connected background.
fn is_simple(nb: &[bool; 27]) -> bool {
    let off = cube_offsets();
    let centre = cube_index(0, 0, 0);
    let mut fg = *nb;
    fg[centre] = false;
    let adj26 = |a: (i32, i32, i32), b: (i32, i32, i32)| {
        let d = ((a.0 - b.0).abs(), (a.1 - b.1).abs(), (a.2 - b.2).abs());
        d.0 <= 1 && d.1 <= 1 && d.2 <= 1 && d != (0, 0, 0)
    };
    if components(&fg, adj26).len() != 1 {
        return false;
    }
    let l1 = |o: (i32, i32, i32)| o.0.abs() + o.1.abs() + o.2.abs();
    let mut bg = [false; 27];
    for i in 0..27 {
        bg[i] = i != centre && !nb[i] && l1(off[i]) <= 2;
    }
    let adj6 = |a: (i32, i32, i32), b: (i32, i32, i32)| l1((a.0 - b.0, a.1 - b.1, a.2 - b.2)) == 1;
    components(&bg, adj6)
        .iter()
        .filter(|c| c.iter().any(|&i| l1(off[i]) == 1))
        .count()
        == 1
}

fn thin_3d(shape: [usize; 3], mask: &[bool]) -> Vec<bool> {
    let [d, h, w] = shape;
    let mut img = mask.to_vec();
    let get = |img: &[bool], z: isize, y: isize, x: isize| -> bool {
        z >= 0 && y >= 0 && x >= 0 && (z as usize) < d && (y as usize) < h && (x as usize) < w && img[(z as usize * h + y as usize) * w + x as usize]
    };
    let neighbourhood = |img: &[bool], z: isize, y: isize, x: isize| -> [bool; 27] {
        let mut nb = [false; 27];
        for (i, (dz, dy, dx)) in cube_offsets().into_iter().enumerate() {
            nb[i] = get(img, z + dz as isize, y + dy as isize, x + dx as isize);
        }
        nb
    };
    let removable = |nb: &[bool; 27]| {
        let count = nb.iter().filter(|&&b| b).count() - 1;
        count > 1 && is_simple(nb)
    };
    let dirs = [(-1, 0, 0), (1, 0, 0), (0, -1, 0), (0, 1, 0), (0, 0, -1), (0, 0, 1)];
    loop {
        let mut changed = false;
        for &(dz, dy, dx) in &dirs {
            let mut cand = Vec::new();
            for z in 0..d as isize {
                for y in 0..h as isize {
                    for x in 0..w as isize {
                        if get(&img, z, y, x)
                            && !get(&img, z + dz, y + dy, x + dx)
                            && removable(&neighbourhood(&img, z, y, x))
                        {
                            cand.push((z, y, x));
                        }
                    }
                }
            }
            for (z, y, x) in cand {
                if removable(&neighbourhood(&img, z, y, x)) {
                    img[(z as usize * h + y as usize) * w + x as usize] = false;
                    changed = true;
                }
            }
        }
        if !changed {
            return img;
        }
    }
}
