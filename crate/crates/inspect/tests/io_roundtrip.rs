use std::path::Path;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scaffold_core::{Point3, PointCloud};
use scaffold_inspect::{load_cloud, save_cloud, CloudFormat, SaveFormat};

fn random_cloud(n: usize, colors: bool, seed: u64) -> PointCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = (0..n)
        .map(|_| Point3::new(rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0), rng.random_range(0.0..20.0)))
        .collect();
    let colors = colors.then(|| (0..n).map(|_| [rng.random(), rng.random(), rng.random()]).collect());
    PointCloud::new(points, colors).unwrap()
}

fn round_trip(cloud: &PointCloud, format: SaveFormat) -> PointCloud {
    let dir = tempfile::tempdir().unwrap();
    let ext = if format == SaveFormat::Xyz { "xyz" } else { "ply" };
    let path = dir.path().join(format!("c.{ext}"));
    save_cloud(cloud, &path, format).unwrap();
    load_cloud(&path, CloudFormat::Auto).unwrap()
}

fn bits(c: &PointCloud) -> Vec<[u64; 3]> {
    c.points().iter().map(|p| [p.x.to_bits(), p.y.to_bits(), p.z.to_bits()]).collect()
}

#[test]
fn every_format_reloads_exactly() {
    let cloud = random_cloud(10_000, true, 1);
    for format in [SaveFormat::PlyBinary, SaveFormat::PlyAscii] {
        let back = round_trip(&cloud, format);
        assert_eq!(bits(&back), bits(&cloud), "{format:?}");
        assert_eq!(back.colors(), cloud.colors(), "{format:?}");
    }
    // xyz keeps geometry only
    let back = round_trip(&cloud, SaveFormat::Xyz);
    assert_eq!(bits(&back), bits(&cloud));
    assert!(back.colors().is_none());
}

#[test]
fn million_point_binary_is_bit_identical() {
    let cloud = random_cloud(1_000_000, false, 2);
    let back = round_trip(&cloud, SaveFormat::PlyBinary);
    assert_eq!(bits(&back), bits(&cloud));
}

#[test]
fn empty_cloud_writes_a_valid_file() {
    let empty = PointCloud::from_points(Vec::new()).unwrap();
    for format in [SaveFormat::PlyBinary, SaveFormat::PlyAscii, SaveFormat::Xyz] {
        assert!(round_trip(&empty, format).is_empty());
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("e.ply");
    save_cloud(&empty, &path, SaveFormat::PlyAscii).unwrap();
    assert!(std::fs::read_to_string(&path).unwrap().contains("element vertex 0\n"));
}

#[test]
fn xyz_text_loads_in_order() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.xyz");
    std::fs::write(&path, "0 0 0\n1 0 0\n0 1 0\n").unwrap();
    let c = load_cloud(&path, CloudFormat::Auto).unwrap();
    assert_eq!(
        c.points(),
        &[Point3::new(0.0, 0.0, 0.0), Point3::new(1.0, 0.0, 0.0), Point3::new(0.0, 1.0, 0.0)]
    );
}

#[test]
fn float_ply_from_other_tools_loads() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("f.ply");
    let mut bytes = b"ply\r\nformat binary_little_endian 1.0\r\ncomment exported elsewhere\r\nelement vertex 2\r\n\
        property float x\r\nproperty float y\r\nproperty float z\r\nproperty float intensity\r\n\
        property uchar red\r\nproperty uchar green\r\nproperty uchar blue\r\nend_header\n"
        .to_vec();
    for (p, c) in [([0.5f32, 1.0, 2.0], [1u8, 2, 3]), ([-1.0, 0.25, 8.0], [250, 128, 0])] {
        for v in p {
            bytes.extend(v.to_le_bytes());
        }
        bytes.extend(7.0f32.to_le_bytes());
        bytes.extend(c);
    }
    std::fs::write(&path, bytes).unwrap();
    let c = load_cloud(&path, CloudFormat::Ply).unwrap();
    assert_eq!(c.points()[1], Point3::new(-1.0, 0.25, 8.0));
    assert_eq!(c.colors().unwrap(), &[[1, 2, 3], [250, 128, 0]]);
}

#[test]
fn errors_name_the_file() {
    let missing = Path::new("/nonexistent/dir/scan.ply");
    let e = load_cloud(missing, CloudFormat::Auto).unwrap_err().to_string();
    assert!(e.contains("/nonexistent/dir/scan.ply"), "{e}");
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.xyz");
    std::fs::write(&path, "0 0 0\n0 x 0\n").unwrap();
    let e = load_cloud(&path, CloudFormat::Auto).unwrap_err().to_string();
    assert!(e.contains("bad.xyz") && e.contains("line 2"), "{e}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn arbitrary_finite_clouds_round_trip(
        pts in prop::collection::vec(prop::array::uniform3(prop::num::f64::NORMAL | prop::num::f64::ZERO | prop::num::f64::SUBNORMAL), 0..50),
        colored in any::<bool>(),
        seed in any::<u64>(),
    ) {
        let points: Vec<Point3> = pts.iter().map(|p| Point3::new(p[0], p[1], p[2])).collect();
        let n = points.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let colors = colored.then(|| (0..n).map(|_| [rng.random(), rng.random(), rng.random()]).collect());
        let cloud = PointCloud::new(points, colors).unwrap();
        for format in [SaveFormat::PlyBinary, SaveFormat::PlyAscii] {
            let back = round_trip(&cloud, format);
            prop_assert_eq!(bits(&back), bits(&cloud));
            prop_assert_eq!(back.colors(), cloud.colors());
        }
    }
}
