use serde::{Deserialize, Serialize};

use super::{Marker, MotionSequence, SEQ_LEN};

/// Markers feeding each classifier branch, in column order (x, y, z per marker).
///
/// 1: head and upper trunk. 2: arms. 3: lower body, anchored on C7.
/// The bowl belongs to no cluster.
pub const CLUSTER_MARKERS: [&[Marker]; 3] = [
    &[
        Marker::HeadFrontLeft,
        Marker::HeadFrontRight,
        Marker::HeadBackLeft,
        Marker::HeadBackRight,
        Marker::ShoulderLeft,
        Marker::ShoulderRight,
        Marker::C7,
    ],
    &[Marker::ShoulderLeft, Marker::ShoulderRight, Marker::C7, Marker::HandLeft, Marker::HandRight],
    &[
        Marker::WaistFrontLeft,
        Marker::WaistFrontRight,
        Marker::WaistBackLeft,
        Marker::WaistBackRight,
        Marker::C7,
        Marker::FootLeft,
        Marker::FootRight,
    ],
];

pub const CLUSTER_WIDTHS: [usize; 3] = [21, 15, 21];

/// Three row-major `32 × width` matrices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterView {
    pub clusters: [Vec<f64>; 3],
}

impl ClusterView {
    pub fn width(&self, k: usize) -> usize {
        CLUSTER_WIDTHS[k]
    }

    pub fn get(&self, k: usize, t: usize, col: usize) -> f64 {
        self.clusters[k][t * CLUSTER_WIDTHS[k] + col]
    }
}

pub fn cluster_split(seq: &MotionSequence) -> ClusterView {
    let clusters = std::array::from_fn(|k| {
        let mut out = Vec::with_capacity(SEQ_LEN * CLUSTER_WIDTHS[k]);
        for t in 0..SEQ_LEN {
            for &m in CLUSTER_MARKERS[k] {
                out.extend_from_slice(&seq.marker(t, m));
            }
        }
        out
    });
    ClusterView { clusters }
}

#[cfg(test)]
mod tests {
    use super::super::{fixtures, FEATURES, MARKER_COUNT};
    use super::*;

    #[test]
    fn widths_match_table() {
        for k in 0..3 {
            assert_eq!(CLUSTER_MARKERS[k].len() * 3, CLUSTER_WIDTHS[k]);
        }
        let v = cluster_split(&fixtures::sequence(0.0));
        assert_eq!(v.clusters[0].len(), 32 * 21);
        assert_eq!(v.clusters[1].len(), 32 * 15);
        assert_eq!(v.clusters[2].len(), 32 * 21);
    }

    #[test]
    fn c7_is_shared() {
        let s = fixtures::sequence(0.4);
        let v = cluster_split(&s);
        for t in 0..SEQ_LEN {
            let c7 = s.marker(t, Marker::C7)[1];
            assert_eq!(v.get(0, t, 6 * 3 + 1), c7);
            assert_eq!(v.get(1, t, 2 * 3 + 1), c7);
            assert_eq!(v.get(2, t, 4 * 3 + 1), c7);
        }
    }

    #[test]
    fn sentinel_lands_in_listed_clusters_only() {
        // Independent membership table, written out by body region.
        let expected: [&[usize]; MARKER_COUNT] = [
            &[0], &[0], &[0], &[0],
            &[0, 1], &[0, 1], &[0, 1, 2],
            &[2], &[2], &[2], &[2],
            &[1], &[1],
            &[2], &[2],
            &[],
        ];
        for m in Marker::ALL {
            let mut s = MotionSequence::new(vec![0.0; SEQ_LEN * FEATURES], false, None).unwrap();
            for t in 0..SEQ_LEN {
                s.set_marker(t, m, [-999.0; 3]);
            }
            let v = cluster_split(&s);
            let hit: Vec<usize> = (0..3).filter(|&k| v.clusters[k].contains(&-999.0)).collect();
            assert_eq!(hit, expected[m.index()], "marker {m:?}");
            for k in hit {
                assert_eq!(v.clusters[k].iter().filter(|&&x| x == -999.0).count(), 3 * SEQ_LEN);
            }
        }
    }

    #[test]
    fn clusters_recover_body_markers() {
        let s = fixtures::sequence(1.3);
        let v = cluster_split(&s);
        let mut recovered = vec![None; MARKER_COUNT];
        for k in 0..3 {
            for (j, &m) in CLUSTER_MARKERS[k].iter().enumerate() {
                let cols: Vec<f64> = (0..SEQ_LEN).flat_map(|t| (0..3).map(move |a| (t, a))).map(|(t, a)| v.get(k, t, 3 * j + a)).collect();
                if let Some(prev) = &recovered[m.index()] {
                    assert_eq!(prev, &cols);
                }
                recovered[m.index()] = Some(cols);
            }
        }
        for m in &Marker::ALL[..15] {
            let want: Vec<f64> = (0..SEQ_LEN).flat_map(|t| s.marker(t, *m)).collect();
            assert_eq!(recovered[m.index()].as_ref().unwrap(), &want);
        }
        assert!(recovered[Marker::Bowl.index()].is_none());
    }
}
