//! Marching squares over a rectangular node grid.

/// Scalar samples on a tensor grid; `values` is row-major with `y` outer.
#[derive(Debug, Clone)]
pub struct ScalarGrid {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub values: Vec<f64>,
}

impl ScalarGrid {
    fn at(&self, ix: usize, iy: usize) -> f64 {
        self.values[iy * self.xs.len() + ix]
    }
}

type Point = [f64; 2];

fn lerp(p: Point, q: Point, fp: f64, fq: f64, level: f64) -> Point {
    let t = if fq == fp { 0.5 } else { (level - fp) / (fq - fp) };
    if t <= 0.0 {
        p
    } else if t >= 1.0 {
        q
    } else {
        [p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]
    }
}

/// Traces the `values = level` contour. Nodes with `value >= level` count
/// as inside. Returns polylines; closed loops repeat their first vertex.
pub fn marching_squares(grid: &ScalarGrid, level: f64) -> Vec<Vec<Point>> {
    let (nx, ny) = (grid.xs.len(), grid.ys.len());
    if nx < 2 || ny < 2 {
        return Vec::new();
    }
    let mut segments: Vec<(Point, Point)> = Vec::new();
    for iy in 0..ny - 1 {
        for ix in 0..nx - 1 {
            // Corners counter-clockwise from bottom-left.
            let p = [
                [grid.xs[ix], grid.ys[iy]],
                [grid.xs[ix + 1], grid.ys[iy]],
                [grid.xs[ix + 1], grid.ys[iy + 1]],
                [grid.xs[ix], grid.ys[iy + 1]],
            ];
            let f = [
                grid.at(ix, iy),
                grid.at(ix + 1, iy),
                grid.at(ix + 1, iy + 1),
                grid.at(ix, iy + 1),
            ];
            let case = f
                .iter()
                .enumerate()
                .fold(0u8, |acc, (i, &v)| if v >= level { acc | (1 << i) } else { acc });
            if case == 0 || case == 15 {
                continue;
            }
            // Interpolate left-to-right and bottom-to-top so neighbouring
            // cells produce bit-identical shared vertices.
            let edge = |e: usize| {
                let (a, b) = match e {
                    0 => (0, 1),
                    1 => (1, 2),
                    2 => (3, 2),
                    _ => (0, 3),
                };
                lerp(p[a], p[b], f[a], f[b], level)
            };
            // Edges: 0 bottom, 1 right, 2 top, 3 left.
            let pairs: &[(usize, usize)] = match case {
                1 | 14 => &[(3, 0)],
                2 | 13 => &[(0, 1)],
                3 | 12 => &[(3, 1)],
                4 | 11 => &[(1, 2)],
                6 | 9 => &[(0, 2)],
                7 | 8 => &[(3, 2)],
                5 | 10 => {
                    let centre = 0.25 * f.iter().sum::<f64>();
                    let centre_inside = centre >= level;
                    // Case 5: corners 0 and 2 inside.
                    match (case == 5, centre_inside) {
                        (true, true) | (false, false) => &[(3, 2), (0, 1)],
                        _ => &[(3, 0), (1, 2)],
                    }
                }
                _ => unreachable!(),
            };
            for &(a, b) in pairs {
                let (s, e) = (edge(a), edge(b));
                if s != e {
                    segments.push((s, e));
                }
            }
        }
    }
    join_segments(segments)
}

fn same(a: Point, b: Point) -> bool {
    a == b
}

/// Greedy chaining of segments that share endpoints.
fn join_segments(mut segments: Vec<(Point, Point)>) -> Vec<Vec<Point>> {
    let mut lines = Vec::new();
    while let Some((a, b)) = segments.pop() {
        let mut line = vec![a, b];
        loop {
            let tail = *line.last().expect("non-empty");
            let head = line[0];
            if line.len() > 2 && same(head, tail) {
                break;
            }
            if let Some(i) = segments.iter().position(|s| same(s.0, tail) || same(s.1, tail)) {
                let s = segments.swap_remove(i);
                line.push(if same(s.0, tail) { s.1 } else { s.0 });
            } else if let Some(i) = segments.iter().position(|s| same(s.0, head) || same(s.1, head)) {
                let s = segments.swap_remove(i);
                line.insert(0, if same(s.0, head) { s.1 } else { s.0 });
            } else {
                break;
            }
        }
        lines.push(line);
    }
    lines
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(f: impl Fn(f64, f64) -> f64, n: usize) -> ScalarGrid {
        let xs: Vec<f64> = (0..n).map(|i| -1.0 + 2.0 * i as f64 / (n - 1) as f64).collect();
        let ys = xs.clone();
        let mut values = Vec::new();
        for &y in &ys {
            for &x in &xs {
                values.push(f(x, y));
            }
        }
        ScalarGrid { xs, ys, values }
    }

    #[test]
    fn circle_is_one_closed_loop() {
        let g = grid(|x, y| 0.25 - x * x - y * y, 41);
        let lines = marching_squares(&g, 0.0);
        assert_eq!(lines.len(), 1);
        let line = &lines[0];
        assert!(same(line[0], *line.last().unwrap()));
        for p in line {
            let r = (p[0] * p[0] + p[1] * p[1]).sqrt();
            assert!((r - 0.5).abs() < 0.01, "r = {r}");
        }
    }

    #[test]
    fn half_plane_is_one_open_line() {
        let g = grid(|x, y| x + 0.5 * y - 0.1, 21);
        let lines = marching_squares(&g, 0.0);
        assert_eq!(lines.len(), 1);
        for p in &lines[0] {
            assert!((p[0] + 0.5 * p[1] - 0.1).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_field_has_no_contour() {
        let g = grid(|_, _| 1.0, 5);
        assert!(marching_squares(&g, 0.0).is_empty());
    }
}
