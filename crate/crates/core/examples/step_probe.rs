//! Splits one generator step into forward and backward wall time.

use std::time::Instant;

use uwstyle_core::datasynth::render_clean_scene;
use uwstyle_core::model::{Model, ModelConfig};
use uwstyle_core::trainer::forward_graph;
use uwstyle_tensor::Graph;

fn main() -> uwstyle_core::Result<()> {
    let model = Model::new(ModelConfig::default(), 0)?;
    let a = render_clean_scene(1, 64, 64)?.0.to_tensor::<f32>();
    let b = render_clean_scene(2, 64, 64)?.0.to_tensor::<f32>();
    let reps = 10;
    let (mut fwd, mut bwd) = (0.0, 0.0);
    for _ in 0..reps {
        let t = Instant::now();
        let mut g = Graph::<f32>::new();
        let p = model.gen_params().bind(&mut g, true);
        let x = g.constant(a.clone());
        let y = g.constant(b.clone());
        let v = forward_graph(&model, &mut g, &p, x, y);
        let outs = [v.syn_to_syn, v.real_to_real, v.syn_cycle, v.real_cycle, v.syn_to_clean, v.syn_to_real_to_clean, v.real_to_clean];
        let parts: Vec<_> = outs.iter().map(|&o| (g.mean(o), 1.0f32)).collect();
        let loss = g.weighted_sum(&parts);
        fwd += t.elapsed().as_secs_f64();
        let t = Instant::now();
        let _ = g.backward(loss);
        bwd += t.elapsed().as_secs_f64();
    }
    println!("forward {:.1} ms, backward {:.1} ms", fwd * 1e3 / reps as f64, bwd * 1e3 / reps as f64);
    Ok(())
}
