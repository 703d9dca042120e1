//! Scores a trained checkpoint on the held-out split of a dataset.
//!
//! Usage: `cargo run -p uwstyle-core --example eval_probe -- <manifest> <checkpoint> [image dir]`

use std::path::PathBuf;

use uwstyle_core::checkpoint;
use uwstyle_core::datasynth::{DatasetManifest, Split};
use uwstyle_core::latentlab::{alpha_sweep, embed_and_score, harvest_latents, EmbedConfig};
use uwstyle_core::metrics::enhancement_scores;
use uwstyle_core::model::Domain;

fn main() -> uwstyle_core::Result<()> {
    let mut args = std::env::args().skip(1).map(PathBuf::from);
    let manifest = DatasetManifest::load(&args.next().expect("manifest path"))?;
    let model = checkpoint::load_model(&args.next().expect("checkpoint path"))?;
    let test = manifest.load_split(Some(Split::Test))?;
    println!("{:?}", enhancement_scores(&model, &test)?);
    if let Some(dir) = args.next() {
        std::fs::create_dir_all(&dir).expect("output dir");
        for s in &test {
            let syn = model.enhance(&s.synthetic, Domain::Syn, 1.0)?;
            let real = model.enhance(&s.real, Domain::Real, 1.0)?;
            syn.save_png(&dir.join(format!("{}_syn_enh.png", s.id)))?;
            real.save_png(&dir.join(format!("{}_real_enh.png", s.id)))?;
        }
    }
    let col = harvest_latents(&manifest, &model, None)?;
    let emb = embed_and_score(&col, &EmbedConfig::default())?;
    println!(
        "silhouette tags {:?} merged {:?} clean dist {:?} degraded dist {:?}",
        emb.silhouette_tags, emb.silhouette_merged, emb.clean_centroid_distance, emb.degraded_centroid_distance
    );
    let alphas = [0.0, 0.25, 0.5, 0.75, 1.0];
    for (domain, images) in [
        (Domain::Syn, test.iter().map(|s| s.synthetic.clone()).collect::<Vec<_>>()),
        (Domain::Real, test.iter().map(|s| s.real.clone()).collect()),
    ] {
        let sweep = alpha_sweep(&model, &images, domain, &alphas)?;
        println!("{domain:?} cast {:?} rho {:.3}", sweep.cast, sweep.spearman);
    }
    Ok(())
}
