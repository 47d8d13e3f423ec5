//! Marching-squares isocurves of a scalar field on a rectilinear grid.
//!
//! Cells with a missing corner value are skipped. Saddle cells are resolved
//! by the value at the cell centre (mean of the corners).

use std::collections::HashMap;

/// Scalar field sampled at `x[i], y[j]`; `values[j * x.len() + i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Field<'a> {
    pub x: &'a [f64],
    pub y: &'a [f64],
    pub values: &'a [Option<f64>],
}

pub type Polyline = Vec<(f64, f64)>;

// Edge ids: 0 bottom (j), 1 right (i+1), 2 top (j+1), 3 left (i).
type EdgeKey = (usize, usize, bool); // (i, j, horizontal)

fn edge_key(i: usize, j: usize, edge: u8) -> EdgeKey {
    match edge {
        0 => (i, j, true),
        1 => (i + 1, j, false),
        2 => (i, j + 1, true),
        _ => (i, j, false),
    }
}

/// Contour polylines of `field` at `level`. Open polylines run between grid
/// or mask boundaries; closed ones repeat their first point at the end.
pub fn isocurves(field: &Field<'_>, level: f64) -> Vec<Polyline> {
    let (nx, ny) = (field.x.len(), field.y.len());
    assert_eq!(field.values.len(), nx * ny, "field size does not match axes");
    if nx < 2 || ny < 2 || !level.is_finite() {
        return Vec::new();
    }
    let at = |i: usize, j: usize| field.values[j * nx + i];

    let point = |key: EdgeKey| -> (f64, f64) {
        let (i, j, horizontal) = key;
        let (i2, j2) = if horizontal { (i + 1, j) } else { (i, j + 1) };
        let (a, b) = (at(i, j).unwrap(), at(i2, j2).unwrap());
        let u = if b != a { ((level - a) / (b - a)).clamp(0.0, 1.0) } else { 0.5 };
        let (x0, y0) = (field.x[i], field.y[j]);
        let (x1, y1) = (field.x[i2], field.y[j2]);
        (x0 + u * (x1 - x0), y0 + u * (y1 - y0))
    };

    let mut segments: Vec<(EdgeKey, EdgeKey)> = Vec::new();
    for j in 0..ny - 1 {
        for i in 0..nx - 1 {
            let (Some(v0), Some(v1), Some(v2), Some(v3)) = (at(i, j), at(i + 1, j), at(i + 1, j + 1), at(i, j + 1))
            else {
                continue;
            };
            let case = (v0 > level) as u8 | ((v1 > level) as u8) << 1 | ((v2 > level) as u8) << 2 | ((v3 > level) as u8) << 3;
            let centre_high = 0.25 * (v0 + v1 + v2 + v3) > level;
            let pairs: &[(u8, u8)] = match case {
                0 | 15 => &[],
                1 | 14 => &[(3, 0)],
                2 | 13 => &[(0, 1)],
                3 | 12 => &[(3, 1)],
                4 | 11 => &[(1, 2)],
                6 | 9 => &[(0, 2)],
                7 | 8 => &[(3, 2)],
                5 => {
                    if centre_high {
                        &[(3, 2), (0, 1)]
                    } else {
                        &[(3, 0), (1, 2)]
                    }
                }
                10 => {
                    if centre_high {
                        &[(3, 0), (1, 2)]
                    } else {
                        &[(3, 2), (0, 1)]
                    }
                }
                _ => unreachable!(),
            };
            for &(a, b) in pairs {
                segments.push((edge_key(i, j, a), edge_key(i, j, b)));
            }
        }
    }
    join(segments).into_iter().map(|keys| keys.into_iter().map(point).collect()).collect()
}

fn join(segments: Vec<(EdgeKey, EdgeKey)>) -> Vec<Vec<EdgeKey>> {
    let mut adj: HashMap<EdgeKey, Vec<usize>> = HashMap::new();
    for (n, (a, b)) in segments.iter().enumerate() {
        adj.entry(*a).or_default().push(n);
        adj.entry(*b).or_default().push(n);
    }
    let mut used = vec![false; segments.len()];
    let mut lines = Vec::new();

    let walk = |start_seg: usize, from: EdgeKey, used: &mut Vec<bool>| -> Vec<EdgeKey> {
        let mut line = vec![from];
        let mut seg = start_seg;
        let mut cur = from;
        loop {
            used[seg] = true;
            let (a, b) = segments[seg];
            let next = if a == cur { b } else { a };
            line.push(next);
            cur = next;
            match adj[&cur].iter().find(|&&s| !used[s]) {
                Some(&s) => seg = s,
                None => break,
            }
        }
        line
    };

    // open chains first, starting from edges that touch one segment
    let mut ends: Vec<EdgeKey> = adj.iter().filter(|(_, v)| v.len() == 1).map(|(k, _)| *k).collect();
    ends.sort_unstable();
    for key in ends {
        let seg = adj[&key][0];
        if !used[seg] {
            lines.push(walk(seg, key, &mut used));
        }
    }
    for seg in 0..segments.len() {
        if !used[seg] {
            lines.push(walk(seg, segments[seg].0, &mut used));
        }
    }
    lines
}

/// Mean slope dy/dx of a polyline from a least-squares fit of its points.
pub fn mean_slope(line: &Polyline) -> Option<f64> {
    if line.len() < 2 {
        return None;
    }
    let n = line.len() as f64;
    let mx = line.iter().map(|p| p.0).sum::<f64>() / n;
    let my = line.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = line.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = line.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn axis(n: usize, lo: f64, hi: f64) -> Vec<f64> {
        (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn circle_is_closed() {
        let x = axis(41, -2.0, 2.0);
        let y = x.clone();
        let v: Vec<Option<f64>> = y.iter().flat_map(|&b| x.iter().map(move |&a| Some(a * a + b * b))).collect();
        let f = Field { x: &x, y: &y, values: &v };
        let lines = isocurves(&f, 1.0);
        assert_eq!(lines.len(), 1);
        let l = &lines[0];
        assert_eq!(l.first(), l.last());
        for p in l {
            assert!(((p.0 * p.0 + p.1 * p.1).sqrt() - 1.0).abs() < 0.01);
        }
    }

    #[test]
    fn masked_cells_split_lines() {
        let x = axis(11, 0.0, 10.0);
        let y = axis(11, 0.0, 10.0);
        let mut v: Vec<Option<f64>> = y.iter().flat_map(|_| x.iter().map(|&a| Some(a))).collect();
        for j in 0..11 {
            if j == 5 {
                v[j * 11 + 4] = None;
            }
        }
        let f = Field { x: &x, y: &y, values: &v };
        let lines = isocurves(&f, 4.5);
        assert_eq!(lines.len(), 2);
    }

    #[test]
    fn slope_of_line() {
        let l = vec![(0.0, 1.0), (1.0, 0.0), (2.0, -1.0)];
        assert!((mean_slope(&l).unwrap() + 1.0).abs() < 1e-12);
        assert!(mean_slope(&vec![(0.0, 0.0)]).is_none());
    }
}
