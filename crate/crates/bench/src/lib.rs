//! Shared fixtures for the criterion benchmarks: a default camera, a trained
//! model and a standard trigger export, built once per process.

use pztrigger_core::camera::{
    CameraGeometry, CherenkovImage, GeneratorParams, ParticleClass, build_geometry, clean_image,
    generate_event, map_to_unit_disk,
};
use pztrigger_core::fixedpoint::{ExportProfile, TriggerImage, export_trigger, quantize_pixels};
use pztrigger_core::modelsel::fit_normalized;
use pztrigger_core::pzernike::{BasisTable, build_basis_table, feature_vector, moments};
use pztrigger_core::rng::SplitMix64;
use pztrigger_core::svm::{LabeledDataset, SmoParams, SvmModel};

pub struct Fixture {
    pub geometry: CameraGeometry,
    pub table: BasisTable,
    pub model: SvmModel,
    pub trigger: TriggerImage,
    pub events: Vec<CherenkovImage>,
    pub quantized: Vec<Vec<i64>>,
}

/// Default 397-pixel camera, order-7 basis, a model trained on 200 events
/// and 64 cleaned events to iterate over.
pub fn fixture() -> Fixture {
    let geometry = build_geometry(11, 1.0).expect("geometry");
    let table = build_basis_table(&map_to_unit_disk(&geometry), 7).expect("basis");
    let params = GeneratorParams::default();
    let mut stream = SplitMix64::new(2718);

    let mut make = |class: ParticleClass| {
        let ev = generate_event(class, &params, &geometry, stream.next_u64()).expect("event");
        clean_image(&ev, &geometry, 10.0, 5.0).expect("clean")
    };

    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for i in 0..200 {
        let class = if i % 2 == 0 {
            ParticleClass::Gamma
        } else {
            ParticleClass::Hadron
        };
        let cleaned = make(class);
        rows.push(feature_vector(&moments(&cleaned, &table).expect("moments")));
        labels.push(class.sign());
    }
    let data = LabeledDataset::new(rows, labels).expect("dataset");
    let model = fit_normalized(&data, &SmoParams::new(8.0, 0.5)).expect("train");
    let (trigger, _) = export_trigger(&model, &table, &ExportProfile::standard()).expect("export");

    let events: Vec<CherenkovImage> = (0..64)
        .map(|i| {
            make(if i % 2 == 0 {
                ParticleClass::Gamma
            } else {
                ParticleClass::Hadron
            })
        })
        .collect();
    let quantized = events.iter().map(|e| quantize_pixels(&e.pixels).0).collect();

    Fixture {
        geometry,
        table,
        model,
        trigger,
        events,
        quantized,
    }
}
