use std::time::Instant;
use uwstyle_tensor::{Conv2dSpec, Graph, Tensor};

fn main() {
    for (c, o, hw, k) in [(16, 16, 64, 3), (64, 64, 16, 3), (32, 32, 32, 3), (32, 64, 32, 4), (16, 3, 64, 7), (3, 16, 64, 7), (32, 16, 64, 3), (16, 3, 64, 3)] {
        let x = Tensor::<f32>::from_fn(&[1, c, hw, hw], |i| (i as f32 * 0.01).sin());
        let w = Tensor::<f32>::from_fn(&[o, c, k, k], |i| (i as f32 * 0.03).cos() * 0.1);
        let reps = 50;
        let t = Instant::now();
        for _ in 0..reps {
            let mut g = Graph::new();
            let xv = g.leaf(x.clone());
            let wv = g.leaf(w.clone());
            let y = g.conv2d(xv, wv, None, Conv2dSpec::new(1, k / 2));
            let l = g.mean(y);
            let _ = g.backward(l);
        }
        let dt = t.elapsed().as_secs_f64() / reps as f64;
        let macs = (c * o * k * k * hw * hw) as f64 * 3.0;
        println!("c{c} o{o} {hw}x{hw} k{k}: {:.3} ms fwd+bwd, {:.1} GFLOP/s", dt * 1e3, 2.0 * macs / dt / 1e9);
    }
}
