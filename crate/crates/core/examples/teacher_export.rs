//! Builds teacher records for a few scenes, stores them and loads them back.

use icgnet::synthgen::{generate_dataset, io, SceneConfig};
use icgnet::teacher::{export_teacher_records, load_teacher_records, TeacherConfig};

fn main() -> icgnet::Result<()> {
    let samples: Vec<_> = generate_dataset(&SceneConfig::default(), 4)?
        .into_iter()
        .enumerate()
        .map(|(i, s)| (io::sample_id(i), s))
        .collect();
    let dir = std::env::temp_dir().join("icg-teacher-example");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("teacher.bin");
    let cfg = TeacherConfig::default();
    export_teacher_records(&samples, &cfg, &path)?;
    let ids: Vec<String> = samples.iter().map(|(id, _)| id.clone()).collect();
    for r in load_teacher_records(&path, Some(&ids))? {
        let a = r.reference()?;
        let matched: f64 = (0..a.m()).map(|i| (0..a.n()).map(|j| a.get(i, j)).sum::<f64>()).sum();
        println!(
            "{}: {} x {} points, matched mass {matched:.2}, marginal error {:.1e}",
            r.id,
            a.m(),
            a.n(),
            a.marginal_error()
        );
    }
    println!("records in {}", path.display());
    Ok(())
}
