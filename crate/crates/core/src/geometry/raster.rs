use super::{BinaryMask, Point2, Polygon};

/// A pixel window onto the global grid. Local pixel `(col, row)` is centered at
/// `(x + col + 0.5, y + row + 0.5)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Window {
    pub x: i64,
    pub y: i64,
    pub width: usize,
    pub height: usize,
}

impl Window {
    pub fn grid(width: usize, height: usize) -> Self {
        Self { x: 0, y: 0, width, height }
    }
}

/// Calls `f(row, col_start, col_end)` for every horizontal run of pixels whose
/// centers lie inside the polygon (even-odd rule). Runs are clipped to the window.
///
/// A center exactly on a left or top edge is inside, on a right or bottom edge outside.
pub fn fill_spans(vertices: &[Point2], win: Window, mut f: impl FnMut(usize, usize, usize)) {
    if vertices.len() < 3 || win.width == 0 || win.height == 0 {
        return;
    }
    let (mut min_y, mut max_y) = (f64::INFINITY, f64::NEG_INFINITY);
    for p in vertices {
        min_y = min_y.min(p.y);
        max_y = max_y.max(p.y);
    }
    let row_lo = (min_y - 0.5 - win.y as f64).floor().max(0.0);
    let row_hi = (max_y - 0.5 - win.y as f64).ceil() + 1.0;
    if row_hi <= 0.0 || row_lo >= win.height as f64 {
        return;
    }
    let row_lo = row_lo as usize;
    let row_hi = (row_hi as usize).min(win.height);

    let n = vertices.len();
    let mut xs: Vec<f64> = Vec::with_capacity(8);
    for row in row_lo..row_hi {
        let yc = win.y as f64 + row as f64 + 0.5;
        xs.clear();
        for i in 0..n {
            let a = vertices[i];
            let b = vertices[(i + 1) % n];
            if (a.y > yc) != (b.y > yc) {
                xs.push(a.x + (yc - a.y) * (b.x - a.x) / (b.y - a.y));
            }
        }
        if xs.len() < 2 {
            continue;
        }
        xs.sort_by(f64::total_cmp);
        for pair in xs.chunks_exact(2) {
            let start = (pair[0] - 0.5 - win.x as f64).ceil().clamp(0.0, win.width as f64) as usize;
            let end = (pair[1] - 0.5 - win.x as f64).ceil().clamp(0.0, win.width as f64) as usize;
            if start < end {
                f(row, start, end);
            }
        }
    }
}

/// Pixel-center rasterization of `poly` onto a `width x height` grid at the origin.
pub fn rasterize_polygon(poly: &Polygon, width: usize, height: usize) -> BinaryMask {
    let mut mask = BinaryMask::new(width, height);
    fill_spans(poly.vertices(), Window::grid(width, height), |row, c0, c1| {
        for col in c0..c1 {
            mask.set(col, row, true);
        }
    });
    mask
}

/// Even-odd crossing test with the same edge convention as [`fill_spans`].
pub fn point_in_polygon(vertices: &[Point2], p: Point2) -> bool {
    let n = vertices.len();
    let mut inside = false;
    for i in 0..n {
        let a = vertices[i];
        let b = vertices[(i + 1) % n];
        if (a.y > p.y) != (b.y > p.y) {
            let x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if x > p.x {
                inside = !inside;
            }
        }
    }
    inside
}
