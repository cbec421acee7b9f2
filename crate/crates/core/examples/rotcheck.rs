use pztrigger_core::camera::*;
use pztrigger_core::pzernike::*;

fn main() {
    let geometry = build_geometry(11, 1.0).unwrap();
    let table = build_basis_table(&map_to_unit_disk(&geometry), 7).unwrap();
    let perm = geometry.rotation60_permutation();
    let params = GeneratorParams::default();
    let mut worst_strict = 0.0f64;
    let mut worst_floored = 0.0f64;
    let mut smallest_feature_ratio = f64::MAX;
    for seed in 0..200u64 {
        let class = if seed % 2 == 0 { ParticleClass::Gamma } else { ParticleClass::Hadron };
        let ev = generate_event(class, &params, &geometry, seed).unwrap();
        let f0 = feature_vector(&moments(&ev, &table).unwrap());
        let mut rotated = ev.clone();
        for (i, &j) in perm.iter().enumerate() { rotated.pixels[j] = ev.pixels[i]; }
        let f1 = feature_vector(&moments(&rotated, &table).unwrap());
        let scale = f0.iter().cloned().fold(0.0f64, f64::max);
        for k in 0..36 {
            let strict = (f0[k] - f1[k]).abs() / f0[k].abs().max(f1[k].abs()).max(1e-300);
            let floored = (f0[k] - f1[k]).abs() / f0[k].abs().max(f1[k].abs()).max(1e-6 * scale);
            worst_strict = worst_strict.max(strict);
            worst_floored = worst_floored.max(floored);
            smallest_feature_ratio = smallest_feature_ratio.min(f0[k] / scale);
        }
    }
    println!("strict worst rel: {worst_strict:.3e}");
    println!("floored worst rel: {worst_floored:.3e}");
    println!("smallest feature / max feature: {smallest_feature_ratio:.3e}");
}
