use airway_recon::io::{
    read_mask, read_volume, read_volume_file, write_mask, write_volume, ElementType,
};
use airway_recon::phantom::{generate, render, PhantomSpec, RenderParams};
use airway_recon::ScalarVolume;

#[test]
fn phantom_hu_round_trips_in_both_layouts() {
    let ph = generate(&PhantomSpec {
        dims: [40, 40, 56],
        spacing: [0.7, 0.7, 1.25],
        depth: 2,
        root_radius: 4.0,
        segment_length: 12.0,
        ..PhantomSpec::standard()
    })
    .unwrap();
    let hu = render(
        &ph,
        &RenderParams {
            noise_sigma: 20.0,
            seed: 4,
            ..RenderParams::default()
        },
    )
    .unwrap();
    let hu = ScalarVolume::new(hu.grid(), hu.data().iter().map(|v| v.round()).collect()).unwrap();

    let tmp = tempfile::tempdir().unwrap();
    for name in ["hu.mhd", "hu.mha"] {
        let path = tmp.path().join(name);
        write_volume(&hu, &path, ElementType::Short).unwrap();
        let back = read_volume(&path).unwrap();
        assert_eq!(back, hu, "{name}");

        let file = read_volume_file(&path).unwrap();
        assert_eq!(file.header.spacing, [0.7, 0.7, 1.25]);
        let again = tmp.path().join(format!("again_{name}"));
        write_volume(&back, &again, ElementType::Short).unwrap();
        assert_eq!(read_volume_file(&again).unwrap().payload, file.payload);
    }

    let label = tmp.path().join("label.mhd");
    write_mask(&ph.label, &label).unwrap();
    assert_eq!(read_mask(&label).unwrap(), ph.label);
    assert_eq!(read_mask(tmp.path().join("label.raw")).unwrap(), ph.label);
}

#[test]
fn unrepresentable_values_are_refused() {
    let g = airway_recon::Grid::isotropic([2, 1, 1]).unwrap();
    let v = ScalarVolume::new(g, vec![0.5, 40000.0]).unwrap();
    let tmp = tempfile::tempdir().unwrap();
    assert!(write_volume(&v, tmp.path().join("x.mhd"), ElementType::Short).is_err());
    assert!(write_volume(&v, tmp.path().join("x.mhd"), ElementType::Float).is_ok());
}
