//! Convex hulls in one, two and three dimensions on exact orientation
//! predicates. Results index into the input slice.

use std::collections::HashMap;

use robust::{orient2d, orient3d, Coord, Coord3D};

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum HullError {
    /// Points span fewer dimensions than the space.
    Flat,
}

/// Ring of input indices per facet, with outward orientation
/// (counter-clockwise seen from outside in 3-D, edge `[a, b]` with the
/// interior on the left in 2-D).
pub(crate) type Rings = Vec<Vec<usize>>;

pub(crate) fn hull_1d(points: &[f64]) -> Result<Rings, HullError> {
    let (mut lo, mut hi) = (0, 0);
    for (i, &p) in points.iter().enumerate() {
        if p < points[lo] {
            lo = i;
        }
        if p > points[hi] {
            hi = i;
        }
    }
    if points.is_empty() || points[lo] == points[hi] {
        return Err(HullError::Flat);
    }
    Ok(vec![vec![lo], vec![hi]])
}

fn o2(p: &[[f64; 2]], a: usize, b: usize, c: usize) -> f64 {
    let q = |i: usize| Coord { x: p[i][0], y: p[i][1] };
    orient2d(q(a), q(b), q(c))
}

/// Andrew's monotone chain; collinear boundary points are dropped.
pub(crate) fn hull_2d(points: &[[f64; 2]]) -> Result<Rings, HullError> {
    let mut idx: Vec<usize> = (0..points.len()).collect();
    idx.sort_by(|&a, &b| points[a][0].total_cmp(&points[b][0]).then(points[a][1].total_cmp(&points[b][1])));
    idx.dedup_by(|a, b| points[*a] == points[*b]);
    if idx.len() < 3 {
        return Err(HullError::Flat);
    }
    let mut chain: Vec<usize> = Vec::with_capacity(2 * idx.len());
    for pass in 0..2 {
        let start = chain.len();
        let iter: Box<dyn Iterator<Item = &usize>> =
            if pass == 0 { Box::new(idx.iter()) } else { Box::new(idx.iter().rev()) };
        for &i in iter {
            while chain.len() >= start + 2 && o2(points, chain[chain.len() - 2], chain[chain.len() - 1], i) <= 0.0 {
                chain.pop();
            }
            chain.push(i);
        }
        chain.pop();
    }
    if chain.len() < 3 {
        return Err(HullError::Flat);
    }
    let n = chain.len();
    Ok((0..n).map(|k| vec![chain[k], chain[(k + 1) % n]]).collect())
}

fn o3(p: &[[f64; 3]], a: usize, b: usize, c: usize, d: usize) -> f64 {
    let q = |i: usize| Coord3D { x: p[i][0], y: p[i][1], z: p[i][2] };
    orient3d(q(a), q(b), q(c), q(d))
}

fn collinear3(p: &[[f64; 3]], a: usize, b: usize, c: usize) -> bool {
    (0..3).all(|drop| {
        let (u, v) = match drop {
            0 => (1, 2),
            1 => (0, 2),
            _ => (0, 1),
        };
        let q = |i: usize| Coord { x: p[i][u], y: p[i][v] };
        orient2d(q(a), q(b), q(c)) == 0.0
    })
}

fn sub3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn cross3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn norm2(a: [f64; 3]) -> f64 {
    a[0] * a[0] + a[1] * a[1] + a[2] * a[2]
}

fn initial_simplex(p: &[[f64; 3]]) -> Result<[usize; 4], HullError> {
    let i0 = 0;
    let i1 = (0..p.len())
        .max_by(|&a, &b| norm2(sub3(p[a], p[i0])).total_cmp(&norm2(sub3(p[b], p[i0]))))
        .ok_or(HullError::Flat)?;
    if p[i1] == p[i0] {
        return Err(HullError::Flat);
    }
    let area = |i: usize| norm2(cross3(sub3(p[i1], p[i0]), sub3(p[i], p[i0])));
    let i2 = (0..p.len()).max_by(|&a, &b| area(a).total_cmp(&area(b))).unwrap();
    let i2 = if collinear3(p, i0, i1, i2) {
        (0..p.len()).find(|&i| !collinear3(p, i0, i1, i)).ok_or(HullError::Flat)?
    } else {
        i2
    };
    let i3 = (0..p.len()).max_by(|&a, &b| o3(p, i0, i1, i2, a).abs().total_cmp(&o3(p, i0, i1, i2, b).abs())).unwrap();
    if o3(p, i0, i1, i2, i3) == 0.0 {
        return Err(HullError::Flat);
    }
    Ok([i0, i1, i2, i3])
}

/// Incremental beneath-beyond hull as outward triangles.
fn triangles(p: &[[f64; 3]]) -> Result<Vec<[usize; 3]>, HullError> {
    let s = initial_simplex(p)?;
    let mut faces: Vec<[usize; 3]> = Vec::new();
    for skip in 0..4 {
        let mut f: Vec<usize> = (0..4).filter(|&k| k != skip).map(|k| s[k]).collect();
        if o3(p, f[0], f[1], f[2], s[skip]) < 0.0 {
            f.swap(1, 2);
        }
        faces.push([f[0], f[1], f[2]]);
    }
    for i in 0..p.len() {
        if s.contains(&i) {
            continue;
        }
        let visible: Vec<bool> = faces.iter().map(|f| o3(p, f[0], f[1], f[2], i) < 0.0).collect();
        if !visible.iter().any(|&v| v) {
            continue;
        }
        let mut seen_edges = HashMap::new();
        for (f, _) in faces.iter().zip(&visible).filter(|(_, &v)| v) {
            for k in 0..3 {
                seen_edges.insert((f[k], f[(k + 1) % 3]), ());
            }
        }
        let mut next = Vec::with_capacity(faces.len() + 4);
        for (f, &v) in faces.iter().zip(&visible) {
            if v {
                for k in 0..3 {
                    let (a, b) = (f[k], f[(k + 1) % 3]);
                    if !seen_edges.contains_key(&(b, a)) {
                        next.push([a, b, i]);
                    }
                }
            } else {
                next.push(*f);
            }
        }
        faces = next;
    }
    Ok(faces)
}

/// Outward facets of the 3-D hull: coplanar triangles merged into polygons.
pub(crate) fn hull_3d(p: &[[f64; 3]]) -> Result<Rings, HullError> {
    let tris = triangles(p)?;
    let mut edge_face = HashMap::new();
    for (f, t) in tris.iter().enumerate() {
        for k in 0..3 {
            edge_face.insert((t[k], t[(k + 1) % 3]), f);
        }
    }
    let mut group: Vec<usize> = (0..tris.len()).collect();
    fn find(g: &mut [usize], mut x: usize) -> usize {
        while g[x] != x {
            g[x] = g[g[x]];
            x = g[x];
        }
        x
    }
    for (f, t) in tris.iter().enumerate() {
        for k in 0..3 {
            let g = edge_face[&(t[(k + 1) % 3], t[k])];
            let other = tris[g].iter().copied().find(|v| !t.contains(v)).unwrap();
            if o3(p, t[0], t[1], t[2], other) == 0.0 {
                let (a, b) = (find(&mut group, f), find(&mut group, g));
                group[a] = b;
            }
        }
    }
    let mut members: HashMap<usize, Vec<usize>> = HashMap::new();
    for f in 0..tris.len() {
        let r = find(&mut group, f);
        members.entry(r).or_default().push(f);
    }
    let mut roots: Vec<usize> = members.keys().copied().collect();
    roots.sort_unstable();
    let mut rings = Vec::with_capacity(roots.len());
    for r in roots {
        let faces = &members[&r];
        let mut directed = HashMap::new();
        for &f in faces {
            let t = tris[f];
            for k in 0..3 {
                directed.insert((t[k], t[(k + 1) % 3]), ());
            }
        }
        let mut succ = HashMap::new();
        for &(a, b) in directed.keys() {
            if !directed.contains_key(&(b, a)) {
                succ.insert(a, b);
            }
        }
        let start = *succ.keys().min().unwrap();
        let mut ring = vec![start];
        let mut cur = succ[&start];
        while cur != start && ring.len() <= succ.len() {
            ring.push(cur);
            cur = succ[&cur];
        }
        rings.push(ring);
    }
    Ok(rings)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cube() -> Vec<[f64; 3]> {
        let mut v = Vec::new();
        for x in [0.0, 1.0] {
            for y in [0.0, 1.0] {
                for z in [0.0, 1.0] {
                    v.push([x, y, z]);
                }
            }
        }
        v
    }

    #[test]
    fn cube_has_six_square_facets() {
        let rings = hull_3d(&cube()).unwrap();
        assert_eq!(rings.len(), 6);
        assert!(rings.iter().all(|r| r.len() == 4));
    }

    #[test]
    fn interior_and_face_points_are_not_on_rings_as_corners() {
        let mut pts = cube();
        pts.push([0.5, 0.5, 0.5]);
        pts.push([0.5, 0.5, 1.0]);
        let rings = hull_3d(&pts).unwrap();
        assert_eq!(rings.len(), 6);
        assert!(rings.iter().all(|r| !r.contains(&8)));
    }

    #[test]
    fn flat_inputs_are_rejected() {
        let pts = vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [1.0, 1.0, 0.0]];
        assert_eq!(hull_3d(&pts), Err(HullError::Flat));
        assert_eq!(hull_2d(&[[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]]), Err(HullError::Flat));
        assert_eq!(hull_1d(&[3.0, 3.0]), Err(HullError::Flat));
    }

    #[test]
    fn square_drops_collinear_points() {
        let pts = [[0.0, 0.0], [1.0, 0.0], [0.5, 0.0], [1.0, 1.0], [0.0, 1.0], [0.5, 0.5]];
        let rings = hull_2d(&pts).unwrap();
        assert_eq!(rings.len(), 4);
        assert!(rings.iter().all(|r| r[0] != 2 && r[0] != 5));
    }

    #[test]
    fn tetrahedron_faces_point_outward() {
        let pts = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        let rings = hull_3d(&pts).unwrap();
        assert_eq!(rings.len(), 4);
        for r in &rings {
            let opposite = (0..4).find(|v| !r.contains(v)).unwrap();
            assert!(o3(&pts, r[0], r[1], r[2], opposite) > 0.0);
        }
    }
}
