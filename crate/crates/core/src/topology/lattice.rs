use super::TopologyKind;

/// Node coordinates for a `width × height` lattice, one `[row, col]` pair per node in
/// row-major node order (`index = row * width + col`).
///
/// Hexagonal lattices shift odd rows by half a unit along the column axis and
/// compress the row axis by `√3/2`, so every node sits at distance 1 from its six
/// neighbours.
pub fn lattice_coords(kind: TopologyKind, width: usize, height: usize) -> Vec<[f64; 2]> {
    let hex = matches!(kind, TopologyKind::Hexagonal);
    let row_scale = if hex { 3f64.sqrt() / 2.0 } else { 1.0 };
    let mut coords = Vec::with_capacity(width * height);
    for r in 0..height {
        let shift = if hex && r % 2 == 1 { 0.5 } else { 0.0 };
        for c in 0..width {
            coords.push([r as f64 * row_scale, c as f64 + shift]);
        }
    }
    coords
}

/// Euclidean distances between lattice coordinates, `P × P` row-major.
pub fn lattice_dist(coords: &[[f64; 2]]) -> Vec<f64> {
    let p = coords.len();
    let mut out = vec![0.0; p * p];
    for i in 0..p {
        for j in (i + 1)..p {
            let dr = coords[i][0] - coords[j][0];
            let dc = coords[i][1] - coords[j][1];
            let dist = (dr * dr + dc * dc).sqrt();
            out[i * p + j] = dist;
            out[j * p + i] = dist;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn euclid(a: [f64; 2], b: [f64; 2]) -> f64 {
        ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
    }

    #[test]
    fn rectangular_coords() {
        let c = lattice_coords(TopologyKind::Rectangular, 2, 2);
        assert_eq!(c, vec![[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]]);
    }

    #[test]
    fn hexagonal_neighbours_at_unit_distance() {
        let c = lattice_coords(TopologyKind::Hexagonal, 3, 3);
        // horizontal neighbours
        assert!((euclid(c[0], c[1]) - 1.0).abs() < 1e-12);
        // node (0,0) and node (1,0), shifted half a unit: sqrt(0.25 + 0.75)
        assert!((euclid(c[0], c[3]) - 1.0).abs() < 1e-9);
        // node (1,0) and node (0,1) are also neighbours
        assert!((euclid(c[3], c[1]) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn row_distances() {
        let d = lattice_dist(&lattice_coords(TopologyKind::Rectangular, 3, 1));
        assert_eq!(&d[0..3], &[0.0, 1.0, 2.0]);
    }

    #[test]
    fn hex_corner_to_corner() {
        // 3x3 hex: node 0 at (0, 0), node 8 at (2·√3/2, 2) = (√3, 2)
        let d = lattice_dist(&lattice_coords(TopologyKind::Hexagonal, 3, 3));
        assert!((d[8] - 7f64.sqrt()).abs() < 1e-12);
        // node 2 at (0, 2), node 6 at (√3, 0)
        assert!((d[2 * 9 + 6] - 7f64.sqrt()).abs() < 1e-12);
        for i in 0..9 {
            assert_eq!(d[i * 9 + i], 0.0);
            for j in 0..9 {
                assert_eq!(d[i * 9 + j], d[j * 9 + i]);
            }
        }
    }
}
