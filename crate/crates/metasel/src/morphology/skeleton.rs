//! Skeletonization by iterative morphological thinning.

use ndarray::{Array2, ArrayView2};

/// Skeleton pixel count after thinning the region to unit width.
///
/// Zhang-Suen thinning is applied to the mask in each of its four grid
/// rotations and the counts are averaged; the two sub-iterations of the
/// algorithm are direction-biased, and averaging makes the result exactly
/// invariant under 90-degree rotations.
pub fn skeleton_length(mask: &ArrayView2<u8>) -> f64 {
    let mut current = mask.to_owned();
    let mut total = 0usize;
    for turn in 0..4 {
        total += zhang_suen_count(&current.view());
        if turn < 3 {
            current = rotate90(&current.view());
        }
    }
    total as f64 / 4.0
}

/// Rotate a mask 90 degrees counter-clockwise in array terms:
/// `out[(w-1-x, y)] = in[(y, x)]`.
fn rotate90(mask: &ArrayView2<u8>) -> Array2<u8> {
    let (h, w) = mask.dim();
    Array2::from_shape_fn((w, h), |(y, x)| mask[(x, w - 1 - y)])
}

/// One full Zhang-Suen thinning to convergence; returns the skeleton size.
fn zhang_suen_count(mask: &ArrayView2<u8>) -> usize {
    let (h, w) = mask.dim();
    // pad by one so neighborhood reads need no bounds checks
    let mut img = Array2::<u8>::zeros((h + 2, w + 2));
    for y in 0..h {
        for x in 0..w {
            img[(y + 1, x + 1)] = u8::from(mask[(y, x)] != 0);
        }
    }

    let mut to_delete: Vec<(usize, usize)> = Vec::new();
    loop {
        let mut changed = false;
        for phase in 0..2 {
            to_delete.clear();
            for y in 1..=h {
                for x in 1..=w {
                    if img[(y, x)] == 0 {
                        continue;
                    }
                    // P2..P9 clockwise from north
                    let p = [
                        img[(y - 1, x)],
                        img[(y - 1, x + 1)],
                        img[(y, x + 1)],
                        img[(y + 1, x + 1)],
                        img[(y + 1, x)],
                        img[(y + 1, x - 1)],
                        img[(y, x - 1)],
                        img[(y - 1, x - 1)],
                    ];
                    let b: u8 = p.iter().sum();
                    if !(2..=6).contains(&b) {
                        continue;
                    }
                    let a = (0..8)
                        .filter(|&i| p[i] == 0 && p[(i + 1) % 8] == 1)
                        .count();
                    if a != 1 {
                        continue;
                    }
                    let ok = if phase == 0 {
                        p[0] * p[2] * p[4] == 0 && p[2] * p[4] * p[6] == 0
                    } else {
                        p[0] * p[2] * p[6] == 0 && p[0] * p[4] * p[6] == 0
                    };
                    if ok {
                        to_delete.push((y, x));
                    }
                }
            }
            for &(y, x) in &to_delete {
                img[(y, x)] = 0;
            }
            changed |= !to_delete.is_empty();
        }
        if !changed {
            break;
        }
    }
    img.iter().filter(|&&v| v != 0).count()
}
