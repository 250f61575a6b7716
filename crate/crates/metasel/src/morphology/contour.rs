//! Boundary tracing and region geometry.
//!
//! Conventions fixed here so every feature downstream is reproducible:
//! - boundary: Moore-neighbor trace through pixel centers, Jacob stopping
//!   criterion, clockwise in image coordinates (y down);
//! - perimeter: length of the corner-cut midpoint polygon plus pi. Cutting
//!   each vertex to the midpoints of its incident steps removes most of the
//!   staircase overshoot of the raw chain polygon, and the pi term accounts
//!   for the half-pixel band between pixel centers and the region's outer
//!   edge (a 0.5 outward offset of a closed convex curve adds exactly pi);
//! - hull perimeter: convex hull of the cut-polygon vertices plus pi, which
//!   keeps hull_perimeter <= perimeter exactly;
//! - hull area: lattice-point count inside the convex hull of the boundary
//!   pixels (Pick's theorem), which keeps hull_area >= area exactly;
//! - radial profile: boundary distances resampled onto 128 equal angular
//!   bins around the centroid. Bin membership is decided by exact integer
//!   quadrant reduction, so 90-degree grid rotations shift the profile by
//!   exactly 32 bins.

use ndarray::ArrayView2;

use crate::error::{Error, Result};

/// Number of equal angular bins in the radial profile.
pub const RADIAL_BINS: usize = 128;

/// Fitted equivalent ellipse (image-moments ellipse).
#[derive(Debug, Clone, Copy)]
pub struct Ellipse {
    /// Semi-major axis, `2 * sqrt(lambda_1)` of the covariance.
    pub major: f64,
    /// Semi-minor axis, `2 * sqrt(lambda_2)`.
    pub minor: f64,
    /// Orientation in degrees, measured from the +x image axis, in [0, 180).
    pub orientation_deg: f64,
}

impl Ellipse {
    /// Ramanujan approximation of the ellipse perimeter.
    pub fn perimeter(&self) -> f64 {
        let (a, b) = (self.major, self.minor);
        std::f64::consts::PI * (3.0 * (a + b) - ((3.0 * a + b) * (a + 3.0 * b)).sqrt())
    }
}

/// Geometry of a single lesion region.
#[derive(Debug, Clone)]
pub struct ContourGeometry {
    /// Traced boundary pixels (x, y), closed implicitly.
    pub boundary: Vec<(i32, i32)>,
    /// Region area in pixels.
    pub area: f64,
    /// Region perimeter (corner-cut polygon + pi).
    pub perimeter: f64,
    /// Region centroid (x, y).
    pub centroid: (f64, f64),
    /// Central second moments per pixel, with the 1/12 pixel-variance term.
    pub mu20: f64,
    pub mu02: f64,
    pub mu11: f64,
    /// Convex hull of the cut-polygon vertices, in (x, y) pixel coordinates.
    pub hull: Vec<(f64, f64)>,
    /// Hull perimeter (+ pi), guaranteed <= `perimeter`.
    pub hull_perimeter: f64,
    /// Hull area as a lattice-point count, guaranteed >= `area`.
    pub hull_area: f64,
    /// Equivalent ellipse from the second moments.
    pub ellipse: Ellipse,
    /// Radial profile: centroid-to-boundary distance resampled on
    /// [`RADIAL_BINS`] equal angular bins.
    pub radial: Vec<f64>,
    /// Bounding box (width, height) in pixels.
    pub bbox: (usize, usize),
}

/// Trace the region boundary and compute all derived geometry.
///
/// The mask must contain a single 8-connected component (see the data-io
/// loader); a region whose bounding box is a single row or column is
/// rejected as degenerate.
pub fn trace_geometry(mask: &ArrayView2<u8>) -> Result<ContourGeometry> {
    let (h, w) = mask.dim();

    // integer raw moments; exact, and exactly permuted by grid rotations
    let (mut area, mut sx, mut sy) = (0i64, 0i64, 0i64);
    let (mut sxx, mut syy, mut sxy) = (0i64, 0i64, 0i64);
    let (mut min_x, mut max_x, mut min_y, mut max_y) = (i64::MAX, i64::MIN, i64::MAX, i64::MIN);
    for y in 0..h {
        for x in 0..w {
            if mask[(y, x)] != 0 {
                let (xi, yi) = (x as i64, y as i64);
                area += 1;
                sx += xi;
                sy += yi;
                sxx += xi * xi;
                syy += yi * yi;
                sxy += xi * yi;
                min_x = min_x.min(xi);
                max_x = max_x.max(xi);
                min_y = min_y.min(yi);
                max_y = max_y.max(yi);
            }
        }
    }
    if area == 0 {
        return Err(Error::Mask("empty mask".into()));
    }
    let bbox_w = (max_x - min_x + 1) as usize;
    let bbox_h = (max_y - min_y + 1) as usize;
    if bbox_w < 2 || bbox_h < 2 {
        return Err(Error::Mask(format!(
            "degenerate region: bounding box {bbox_w}x{bbox_h}"
        )));
    }

    let boundary = trace_boundary(mask);
    if boundary.len() < 4 {
        return Err(Error::Mask(format!(
            "boundary too short ({} px) for geometry",
            boundary.len()
        )));
    }

    let a = area as f64;
    let centroid = (sx as f64 / a, sy as f64 / a);
    let mu20 = (sxx as f64 - (sx as f64) * (sx as f64) / a) / a + 1.0 / 12.0;
    let mu02 = (syy as f64 - (sy as f64) * (sy as f64) / a) / a + 1.0 / 12.0;
    let mu11 = (sxy as f64 - (sx as f64) * (sy as f64) / a) / a;

    let ellipse = moments_ellipse(mu20, mu02, mu11);

    let cut = cut_polygon(&boundary);
    let perimeter = polygon_perimeter(&cut) + std::f64::consts::PI;

    let hull_scaled = monotone_chain(&cut);
    let hull_perimeter = polygon_perimeter(&hull_scaled) + std::f64::consts::PI;
    let hull: Vec<(f64, f64)> = hull_scaled
        .iter()
        .map(|&(x, y)| (x as f64 / 2.0, y as f64 / 2.0))
        .collect();

    let pixel_hull = convex_hull_int(&boundary);
    let hull_area = lattice_hull_area(&pixel_hull);

    let radial = radial_profile(&boundary, area, sx, sy);

    Ok(ContourGeometry {
        boundary,
        area: a,
        perimeter,
        centroid,
        mu20,
        mu02,
        mu11,
        hull,
        hull_perimeter,
        hull_area,
        ellipse,
        radial,
        bbox: (bbox_w, bbox_h),
    })
}

/// Moore-neighbor boundary trace with Jacob's stopping criterion.
/// Returns boundary pixels (x, y) in trace order; pixels on thin
/// protrusions may repeat (the walk goes out and back).
pub fn trace_boundary(mask: &ArrayView2<u8>) -> Vec<(i32, i32)> {
    let (h, w) = mask.dim();
    let fg = |x: i32, y: i32| -> bool {
        x >= 0 && y >= 0 && (x as usize) < w && (y as usize) < h && mask[(y as usize, x as usize)] != 0
    };

    // clockwise Moore neighborhood in image coords (y down), from W
    const NBR: [(i32, i32); 8] = [
        (-1, 0),  // W
        (-1, -1), // NW
        (0, -1),  // N
        (1, -1),  // NE
        (1, 0),   // E
        (1, 1),   // SE
        (0, 1),   // S
        (-1, 1),  // SW
    ];

    // uppermost-leftmost foreground pixel; came from its W neighbor
    let mut start = None;
    'scan: for y in 0..h {
        for x in 0..w {
            if mask[(y, x)] != 0 {
                start = Some((x as i32, y as i32));
                break 'scan;
            }
        }
    }
    let start = match start {
        Some(s) => s,
        None => return Vec::new(),
    };

    let mut boundary = Vec::new();
    let mut cur = start;
    let mut backtrack = 0usize; // index into NBR: direction we came from
    let mut first_move: Option<((i32, i32), (i32, i32))> = None;

    loop {
        let mut next = None;
        for k in 1..=8 {
            let idx = (backtrack + k) % 8;
            let (dx, dy) = NBR[idx];
            if fg(cur.0 + dx, cur.1 + dy) {
                next = Some((cur.0 + dx, cur.1 + dy));
                break;
            }
        }
        let nxt = match next {
            Some(v) => v,
            None => return vec![start], // isolated pixel
        };
        // stop on the first repetition of the opening move: the walk is a
        // deterministic function of (pixel, entry direction), so repeating
        // the first move means exactly one full loop was traced
        let mv = (cur, nxt);
        if first_move == Some(mv) {
            break;
        }
        if first_move.is_none() {
            first_move = Some(mv);
        }
        boundary.push(cur);
        // backtrack for the next pixel = direction of cur as seen from nxt
        let back = (nxt.0 - cur.0, nxt.1 - cur.1);
        backtrack = NBR.iter().position(|&d| d == (-back.0, -back.1)).expect("unit step");
        cur = nxt;
        if boundary.len() > 8 * w * h {
            break; // safety net; cannot trigger on valid single-component masks
        }
    }
    boundary
}

/// Midpoint (corner-cut) polygon vertices of a traced boundary, in
/// half-pixel units (input coordinates doubled to stay integral).
fn cut_polygon(boundary: &[(i32, i32)]) -> Vec<(i64, i64)> {
    let n = boundary.len();
    (0..n)
        .map(|i| {
            let a = boundary[i];
            let b = boundary[(i + 1) % n];
            ((a.0 + b.0) as i64, (a.1 + b.1) as i64)
        })
        .collect()
}

fn polygon_perimeter(poly: &[(i64, i64)]) -> f64 {
    let n = poly.len();
    if n < 2 {
        return 0.0;
    }
    let mut total = 0.0;
    for i in 0..n {
        let p = poly[i];
        let q = poly[(i + 1) % n];
        let dx = (q.0 - p.0) as f64;
        let dy = (q.1 - p.1) as f64;
        total += dx.hypot(dy);
    }
    total / 2.0 // undo the doubling of coordinates
}

/// Andrew's monotone chain on integer points, counter-clockwise hull.
fn monotone_chain(points: &[(i64, i64)]) -> Vec<(i64, i64)> {
    let mut pts: Vec<(i64, i64)> = points.to_vec();
    pts.sort_unstable();
    pts.dedup();
    if pts.len() <= 2 {
        return pts;
    }
    let cross = |o: (i64, i64), a: (i64, i64), b: (i64, i64)| -> i64 {
        (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
    };
    let mut lower: Vec<(i64, i64)> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<(i64, i64)> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

fn convex_hull_int(boundary: &[(i32, i32)]) -> Vec<(i64, i64)> {
    let pts: Vec<(i64, i64)> = boundary.iter().map(|&(x, y)| (x as i64, y as i64)).collect();
    monotone_chain(&pts)
}

/// Lattice points inside or on a convex lattice polygon (Pick's theorem).
fn lattice_hull_area(hull: &[(i64, i64)]) -> f64 {
    let n = hull.len();
    if n == 0 {
        return 0.0;
    }
    if n == 1 {
        return 1.0;
    }
    let gcd = |mut a: i64, mut b: i64| -> i64 {
        a = a.abs();
        b = b.abs();
        while b != 0 {
            let t = a % b;
            a = b;
            b = t;
        }
        a
    };
    if n == 2 {
        return (gcd(hull[1].0 - hull[0].0, hull[1].1 - hull[0].1) + 1) as f64;
    }
    let mut twice_area = 0i64;
    let mut border = 0i64;
    for i in 0..n {
        let p = hull[i];
        let q = hull[(i + 1) % n];
        twice_area += p.0 * q.1 - q.0 * p.1;
        border += gcd(q.0 - p.0, q.1 - p.1);
    }
    let poly_area = (twice_area.abs() as f64) / 2.0;
    // Pick: A = I + B/2 - 1  =>  I + B = A + B/2 + 1
    poly_area + border as f64 / 2.0 + 1.0
}

fn moments_ellipse(mu20: f64, mu02: f64, mu11: f64) -> Ellipse {
    let trace_half = (mu20 + mu02) / 2.0;
    let delta = (((mu20 - mu02) / 2.0).powi(2) + mu11 * mu11).sqrt();
    let lambda1 = trace_half + delta;
    let lambda2 = (trace_half - delta).max(0.0);
    let theta = 0.5 * (2.0 * mu11).atan2(mu20 - mu02);
    let mut deg = theta.to_degrees();
    if deg < 0.0 {
        deg += 180.0;
    }
    if deg >= 180.0 {
        deg -= 180.0;
    }
    Ellipse {
        major: 2.0 * lambda1.sqrt(),
        minor: 2.0 * lambda2.sqrt(),
        orientation_deg: deg,
    }
}

/// Radial profile on equal angular bins.
///
/// Each boundary pixel's direction from the centroid is classified with an
/// exact integer quadrant reduction: the integer vector
/// `(area*x - sum_x, area*y - sum_y)` is rotated into the first quadrant by
/// exact 90-degree steps, so a 90-degree rotation of the mask shifts every
/// pixel by exactly `RADIAL_BINS / 4` bins. Empty bins are filled by
/// circular linear interpolation.
fn radial_profile(boundary: &[(i32, i32)], area: i64, sx: i64, sy: i64) -> Vec<f64> {
    let per_quadrant = RADIAL_BINS / 4;
    let mut sums = vec![0.0f64; RADIAL_BINS];
    let mut counts = vec![0usize; RADIAL_BINS];

    for &(x, y) in boundary {
        // exact integer direction vector (scaled by area)
        let vx = area * x as i64 - sx;
        let vy = area * y as i64 - sy;
        let bin = if vx == 0 && vy == 0 {
            0
        } else {
            // quadrant reduction: (vx, vy) -> quadrant index + first-quadrant vector
            let (quadrant, qx, qy) = if vx > 0 && vy >= 0 {
                (0, vx, vy)
            } else if vx <= 0 && vy > 0 {
                (1, vy, -vx)
            } else if vx < 0 && vy <= 0 {
                (2, -vx, -vy)
            } else {
                (3, -vy, vx)
            };
            let t = (qy as f64).atan2(qx as f64); // in [0, pi/2)
            let sub = ((t / std::f64::consts::FRAC_PI_2) * per_quadrant as f64) as usize;
            quadrant * per_quadrant + sub.min(per_quadrant - 1)
        };
        let dx = vx as f64 / area as f64;
        let dy = vy as f64 / area as f64;
        sums[bin] += dx.hypot(dy);
        counts[bin] += 1;
    }

    let mut profile = vec![f64::NAN; RADIAL_BINS];
    for i in 0..RADIAL_BINS {
        if counts[i] > 0 {
            profile[i] = sums[i] / counts[i] as f64;
        }
    }
    fill_empty_bins(&mut profile);
    profile
}

/// Circular linear interpolation across NaN runs.
fn fill_empty_bins(profile: &mut [f64]) {
    let n = profile.len();
    let first_filled = match profile.iter().position(|v| !v.is_nan()) {
        Some(i) => i,
        None => {
            profile.iter_mut().for_each(|v| *v = 0.0);
            return;
        }
    };
    let mut i = first_filled;
    let mut visited = 0usize;
    while visited < n {
        let mut j = (i + 1) % n;
        let mut gap = 0usize;
        while profile[j].is_nan() {
            gap += 1;
            j = (j + 1) % n;
        }
        if gap > 0 {
            let a = profile[i];
            let b = profile[j];
            for k in 1..=gap {
                let t = k as f64 / (gap + 1) as f64;
                profile[(i + k) % n] = a + (b - a) * t;
            }
        }
        visited += gap + 1;
        i = j;
    }
}
