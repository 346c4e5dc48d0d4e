//! Uniform bucket grid for 2D nearest-neighbour queries.

use crate::geometry::Point2;

#[derive(Debug, Clone)]
pub struct NearestIndex<'a> {
    points: &'a [Point2],
    origin: Point2,
    cell: f64,
    nx: usize,
    ny: usize,
    /// Point indices per bucket, row-major.
    buckets: Vec<Vec<usize>>,
}

impl<'a> NearestIndex<'a> {
    /// Buckets are sized for about two points each.
    pub fn new(points: &'a [Point2]) -> Self {
        let (mut lo, mut hi) = (Point2::new(f64::INFINITY, f64::INFINITY), Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY));
        for p in points {
            lo = Point2::new(lo.x.min(p.x), lo.y.min(p.y));
            hi = Point2::new(hi.x.max(p.x), hi.y.max(p.y));
        }
        if points.is_empty() {
            lo = Point2::default();
            hi = Point2::default();
        }
        let (w, h) = ((hi.x - lo.x).max(1e-12), (hi.y - lo.y).max(1e-12));
        let target = (points.len() as f64 / 2.0).max(1.0);
        let cell = (w * h / target).sqrt().max(w.max(h) / 1024.0).max(1e-12);
        let nx = ((w / cell).floor() as usize + 1).min(1024);
        let ny = ((h / cell).floor() as usize + 1).min(1024);
        let mut index = Self {
            points,
            origin: lo,
            cell,
            nx,
            ny,
            buckets: vec![Vec::new(); nx * ny],
        };
        for (i, &p) in points.iter().enumerate() {
            let (bx, by) = index.bucket_of(p);
            index.buckets[by * nx + bx].push(i);
        }
        index
    }

    fn coord(&self, v: f64, origin: f64, n: usize) -> isize {
        let c = ((v - origin) / self.cell).floor();
        c.clamp(-1.0, n as f64) as isize
    }

    fn bucket_of(&self, p: Point2) -> (usize, usize) {
        let bx = self.coord(p.x, self.origin.x, self.nx).clamp(0, self.nx as isize - 1);
        let by = self.coord(p.y, self.origin.y, self.ny).clamp(0, self.ny as isize - 1);
        (bx as usize, by as usize)
    }

    /// Index of the closest point and its distance, or `None` when empty.
    /// Ties resolve to the lowest index.
    pub fn nearest(&self, q: Point2) -> Option<(usize, f64)> {
        if self.points.is_empty() {
            return None;
        }
        let qx = self.coord(q.x, self.origin.x, self.nx);
        let qy = self.coord(q.y, self.origin.y, self.ny);
        let mut best: Option<(usize, f64)> = None;
        let max_ring = self.nx.max(self.ny) as isize + 2;
        for ring in 0..=max_ring {
            if let Some((_, d2)) = best {
                // every point in ring r or beyond is at least (r - 1) cells away
                let reach = (ring - 1).max(0) as f64 * self.cell;
                if reach * reach > d2 {
                    break;
                }
            }
            for by in (qy - ring)..=(qy + ring) {
                if by < 0 || by >= self.ny as isize {
                    continue;
                }
                let on_edge_row = by == qy - ring || by == qy + ring;
                let step = if on_edge_row { 1 } else { (2 * ring).max(1) };
                let mut bx = qx - ring;
                while bx <= qx + ring {
                    if bx >= 0 && bx < self.nx as isize {
                        for &i in &self.buckets[by as usize * self.nx + bx as usize] {
                            let d2 = self.points[i].dist2(q);
                            match best {
                                Some((bi, bd)) if d2 > bd || (d2 == bd && i > bi) => {}
                                _ => best = Some((i, d2)),
                            }
                        }
                    }
                    bx += step;
                }
            }
        }
        best.map(|(i, d2)| (i, d2.sqrt()))
    }
}

/// O(n) scan; same tie rule as [`NearestIndex::nearest`].
pub fn brute_force_nearest(points: &[Point2], q: Point2) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, p) in points.iter().enumerate() {
        let d2 = p.dist2(q);
        if best.is_none_or(|(_, bd)| d2 < bd) {
            best = Some((i, d2));
        }
    }
    best.map(|(i, d2)| (i, d2.sqrt()))
}
