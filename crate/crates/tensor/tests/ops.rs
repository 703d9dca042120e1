use uwstyle_tensor::gradcheck::check;
use uwstyle_tensor::{conv2d_reference, Conv2dSpec, Graph, Tensor, Var};

fn pseudo_random(shape: &[usize], seed: u64) -> Tensor<f64> {
    let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    Tensor::from_fn(shape, |_| {
        state = state
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
    })
}

const H: f64 = 1e-4;
const FLOOR: f64 = 1e-6;
const TOL: f64 = 1e-3;

/// Reduce any tensor to a scalar with a fixed random projection so that every
/// output entry contributes a distinct weight.
fn project(g: &mut Graph<f64>, v: Var, seed: u64) -> Var {
    let weights = pseudo_random(g.shape(v), seed);
    let w = g.constant(weights);
    let prod = g.mul(v, w);
    g.mean(prod)
}

#[test]
fn conv_matches_direct_reference() {
    // Few output channels take the shifted-row path, many take im2col.
    let cases = [(1, 1, 3), (2, 1, 4), (1, 3, 7), (2, 0, 3), (1, 2, 5)];
    for ((stride, pad, k), out) in cases.into_iter().flat_map(|c| [(c, 3), (c, 9)]) {
        let x = pseudo_random(&[2, 3, 9, 8], 1);
        let w = pseudo_random(&[out, 3, k, k], 2);
        let spec = Conv2dSpec::new(stride, pad);
        let mut g = Graph::new();
        let (xv, wv) = (g.constant(x.clone()), g.constant(w.clone()));
        let y = g.conv2d(xv, wv, None, spec);
        let want = conv2d_reference(&x, &w, spec);
        assert_eq!(g.shape(y), want.shape());
        for (a, b) in g.value(y).data().iter().zip(want.data()) {
            assert!((a - b).abs() < 1e-12, "stride {stride} pad {pad} k {k}");
        }
    }
}

#[test]
fn conv_gradients() {
    let cases = [(1, 1, 3), (2, 1, 4), (1, 2, 5)];
    for ((stride, pad, k), out) in cases.into_iter().flat_map(|c| [(c, 2), (c, 6)]) {
        let inputs = [
            pseudo_random(&[2, 2, 6, 7], 3),
            pseudo_random(&[out, 2, k, k], 4),
            pseudo_random(&[out], 5),
        ];
        let r = check(
            &inputs,
            |g, v| {
                let y = g.conv2d(v[0], v[1], Some(v[2]), Conv2dSpec::new(stride, pad));
                project(g, y, 9)
            },
            H,
            FLOOR,
        );
        assert!(r.worst() < TOL, "{r:?}");
    }
}

#[test]
fn instance_norm_and_affine_gradients() {
    let inputs = [
        pseudo_random(&[2, 3, 4, 4], 6),
        pseudo_random(&[2, 3], 7),
        pseudo_random(&[2, 3], 8),
    ];
    let r = check(
        &inputs,
        |g, v| {
            let n = g.instance_norm(v[0], 1e-5);
            let y = g.channel_affine(n, v[1], v[2]);
            project(g, y, 10)
        },
        H,
        FLOOR,
    );
    assert!(r.worst() < TOL, "{r:?}");
}

#[test]
fn pooling_and_activation_gradients() {
    let inputs = [pseudo_random(&[1, 2, 6, 6], 11)];
    let r = check(
        &inputs,
        |g, v| {
            let a = g.upsample_nearest2x(v[0]);
            let b = g.avg_pool2x(a);
            let c = g.avg_pool2x(b);
            let d = g.leaky_relu(c, 0.2);
            let e = g.sigmoid(d);
            let f = g.tanh(e);
            let p = g.global_avg_pool(f);
            project(g, p, 12)
        },
        H,
        FLOOR,
    );
    assert!(r.worst() < TOL, "{r:?}");
}

#[test]
fn linear_and_reduction_gradients() {
    let inputs = [
        pseudo_random(&[3, 5], 13),
        pseudo_random(&[4, 5], 14),
        pseudo_random(&[4], 15),
        pseudo_random(&[3, 2], 16),
    ];
    let r = check(
        &inputs,
        |g, v| {
            let y = g.linear(v[0], v[1], Some(v[2]));
            let y = g.relu(y);
            let head = g.narrow_cols(y, 1, 2);
            let tail = g.narrow_cols(y, 2, 2);
            let l1 = g.row_l1_diff(head, v[3]);
            let l2 = g.mean_sq_diff(tail, v[3]);
            let l3 = g.mean_sq_to_const(head, 1.0);
            let l4 = g.bce_with_logits(tail, 0.0);
            let l5 = g.mean_abs_diff(head, tail);
            g.weighted_sum(&[(l1, 1.0), (l2, 0.5), (l3, 2.0), (l4, 1.5), (l5, 0.7)])
        },
        H,
        FLOOR,
    );
    assert!(r.worst() < TOL, "{r:?}");
}

#[test]
fn detached_values_receive_no_gradient() {
    let mut g = Graph::<f64>::new();
    let x = g.leaf(Tensor::new(&[2], vec![1.0, 2.0]).unwrap());
    let d = g.detach(x);
    let y = g.mul(x, d);
    let loss = g.mean(y);
    let grads = g.backward(loss);
    assert_eq!(grads.get(x).unwrap().data(), &[0.5, 1.0]);
    assert!(grads.get(d).is_none());
}
