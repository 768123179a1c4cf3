use std::path::PathBuf;

use meshgmm::em::{fit, FitConfig};
use meshgmm::geometry::{bbox_diagonal, load_mesh, load_points, mesh_to_primitives, sample_surface, write_ply_points};
use meshgmm::mixture::{avg_loglik, load_model, save_model};

fn bunny_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/bunny_res4.ply")
}

#[test]
fn bundled_bunny_loads() {
    let mesh = load_mesh(bunny_path()).unwrap();
    assert_eq!(mesh.vertices().len(), 476);
    assert_eq!(mesh.faces().len(), 948);
    assert!(mesh.surface_area() > 0.0);
    assert!(bbox_diagonal(mesh.vertices()).unwrap() > 1.0);
    assert_eq!(load_points(bunny_path()).unwrap().len(), 476);
}

#[test]
fn fitted_bunny_model_round_trips_through_json() {
    let mesh = load_mesh(bunny_path()).unwrap();
    let report = fit(&mesh_to_primitives(&mesh), &FitConfig { seed: 8, ..FitConfig::new(100) }).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bunny.json");
    save_model(&report.model, &path).unwrap();
    let loaded = load_model(&path).unwrap();
    assert_eq!(loaded, report.model);

    let cloud = sample_surface(&mesh, 5000, 1).unwrap();
    let cloud_path = dir.path().join("cloud.ply");
    write_ply_points(&cloud_path, &cloud).unwrap();
    let reread = load_points(&cloud_path).unwrap();
    assert_eq!(reread, cloud);
    assert_eq!(avg_loglik(&reread, &loaded).unwrap(), avg_loglik(&cloud, &report.model).unwrap());
}
