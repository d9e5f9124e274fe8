use proptest::prelude::*;

use relit_core::fixtures::{gen_fixture, sky_env, FixtureKind, FixtureMaterial};
use relit_core::imageio::*;
use relit_core::{EnvLayout, ErrorKind, ImagePlane};

#[test]
fn orbit_bundle_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let m = FixtureMaterial {
        frames: 21,
        elevation_deg: 12.0,
        ..Default::default()
    };
    let frames = gen_fixture(FixtureKind::ThreeSpheres, 32, &m);
    let manifest = save_bundle(dir.path(), &frames, Some("probe.hdr")).unwrap();
    let bundle = load_bundle(&manifest).unwrap();
    assert_eq!(bundle.frames.len(), 21);
    assert_eq!(bundle.env_path().unwrap(), dir.path().join("probe.hdr"));
    for (a, b) in frames.iter().zip(&bundle.frames) {
        assert_eq!(a.alpha, b.alpha);
        let rot = (a.camera.env_rotation - b.camera.env_rotation).abs().to_cols_array();
        assert!(rot.iter().all(|&v| v < 1e-5));
        for (plane_a, plane_b, tol) in [(&a.albedo, &b.albedo, 2e-4), (&a.orm, &b.orm, 2e-5)] {
            for (x, y) in plane_a.data().iter().zip(plane_b.data()) {
                assert!((x - y).abs() <= tol, "{x} vs {y}");
            }
        }
        for y in 0..32 {
            for x in 0..32 {
                if a.alpha.get(x, y, 0) > 0.5 {
                    assert!(a.normal_at(x, y).angle_between(b.normal_at(x, y)) < 1e-3);
                }
            }
        }
    }
}

#[test]
fn missing_plane_names_frame() {
    let dir = tempfile::tempdir().unwrap();
    let frames = gen_fixture(FixtureKind::Sphere, 8, &FixtureMaterial { frames: 2, ..Default::default() });
    let manifest = save_bundle(dir.path(), &frames, None).unwrap();
    let mut m = BundleManifest::read(&manifest).unwrap();
    m.frames[1].orm = None;
    std::fs::write(&manifest, serde_json::to_string(&m).unwrap()).unwrap();
    let err = load_bundle(&manifest).unwrap_err();
    assert_eq!(err.kind(), ErrorKind::Input);
    assert!(err.to_string().contains("frame 1: missing orm plane"), "{err}");
}

#[test]
fn environment_formats_agree() {
    let dir = tempfile::tempdir().unwrap();
    let env = sky_env(32);
    let pfm = dir.path().join("sky.pfm");
    let hdr = dir.path().join("sky.hdr");
    write_image(&pfm, env.pixels(), ImageFormat::Pfm, PlaneEncoding::Linear).unwrap();
    write_image(&hdr, env.pixels(), ImageFormat::RadianceHdr, PlaneEncoding::Linear).unwrap();
    let a = read_environment(&pfm).unwrap();
    let b = read_environment(&hdr).unwrap();
    assert_eq!(a.layout(), EnvLayout::Octahedral);
    assert_eq!(a.pixels(), env.pixels());
    // shared-exponent quantization is relative to the brightest component
    for (pa, pb) in a.pixels().data().chunks(3).zip(b.pixels().data().chunks(3)) {
        let peak = pa.iter().copied().fold(0.0f32, f32::max);
        for (x, y) in pa.iter().zip(pb) {
            assert!((x - y).abs() <= 0.01 * peak, "{pa:?} vs {pb:?}");
        }
    }
    let equirect = ImagePlane::filled(64, 32, 3, 0.5);
    let path = dir.path().join("wide.pfm");
    write_image(&path, &equirect, ImageFormat::Pfm, PlaneEncoding::Linear).unwrap();
    assert_eq!(read_environment(&path).unwrap().layout(), EnvLayout::Equirect);
}

#[test]
fn non_finite_pixels_are_located() {
    let dir = tempfile::tempdir().unwrap();
    let mut img = ImagePlane::filled(4, 4, 3, 1.0);
    img.set(2, 1, 0, f32::NAN);
    let path = dir.path().join("bad.pfm");
    assert!(write_image(&path, &img, ImageFormat::Pfm, PlaneEncoding::Linear).is_err());
    let bytes = pfm::encode(&img).unwrap();
    std::fs::write(&path, bytes).unwrap();
    let err = read_image(&path, PlaneEncoding::Linear).unwrap_err();
    assert!(err.to_string().contains("(2, 1)"), "{err}");
}

#[test]
fn metrics_of_identical_images() {
    let a = sky_env(16).into_pixels();
    let r = psnr(&a, &a, 1.0).unwrap();
    assert!(r.identical && r.psnr.is_infinite());
    let json = serde_json::to_value(&r).unwrap();
    assert!(json["psnr"].is_null());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn png16_linear_round_trip(values in prop::collection::vec(0.0f32..=1.0, 27)) {
        let img = ImagePlane::from_vec(3, 3, 3, values).unwrap();
        let bytes = encode_image(&img, ImageFormat::Png16, PlaneEncoding::Linear).unwrap();
        let back = decode_image(&bytes, PlaneEncoding::Linear).unwrap();
        for (x, y) in img.data().iter().zip(back.data()) {
            prop_assert!((x - y).abs() <= 0.5 / 65535.0 + 1e-7);
        }
    }

    #[test]
    fn psnr_is_symmetric(a in prop::collection::vec(0.0f32..1.0, 12), b in prop::collection::vec(0.0f32..1.0, 12)) {
        let a = ImagePlane::from_vec(2, 2, 3, a).unwrap();
        let b = ImagePlane::from_vec(2, 2, 3, b).unwrap();
        let ab = psnr(&a, &b, 1.0).unwrap();
        let ba = psnr(&b, &a, 1.0).unwrap();
        prop_assert_eq!(ab.mse, ba.mse);
    }
}
