// temporary scratch: scan seeds for kink-free gradient-check points
use lidarcycle::cyclegan::{build_generator, mse_grad, mse_loss};
use lidarcycle::rng::SplitMix64;
use lidarcycle::supervised::build_reference_net;
use lidarcycle::tensor::{gradient_check, Network, NetworkGroup, Tensor};

fn random_tensor(shape: &[usize], rng: &mut SplitMix64, lo: f64, hi: f64) -> Tensor {
    let n: usize = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.uniform(lo, hi)).collect()).unwrap()
}

fn init_net(mut net: Network, rng: &mut SplitMix64) -> Network {
    net.init(rng);
    net
}

#[test]
#[ignore]
fn scan_h_objective_seeds() {
    for seed in 0..40u64 {
        let mut rng = SplitMix64::new(seed * 1000 + 1);
        let mut g = init_net(build_generator((8, 8), 2).unwrap(), &mut rng);
        let mut f = init_net(build_generator((8, 8), 2).unwrap(), &mut rng);
        let mut h_x = init_net(build_reference_net((8, 8), 2).unwrap(), &mut rng);
        let mut h_y = init_net(build_reference_net((8, 8), 2).unwrap(), &mut rng);
        let x = random_tensor(&[2, 1, 8, 8], &mut rng, -1.0, 1.0);
        let x_gt = random_tensor(&[2, 1, 8, 8], &mut rng, 0.0, 1.0);
        let y = random_tensor(&[2, 1, 8, 8], &mut rng, -1.0, 1.0);
        let y_gt = random_tensor(&[2, 1, 8, 8], &mut rng, 0.0, 1.0);
        let (ext, aug) = (1.0, 0.7);
        let fake_y = g.forward(&x).unwrap();
        let fake_x = f.forward(&y).unwrap();
        let mut group = NetworkGroup::new(vec![&mut h_x, &mut h_y]);
        let err = gradient_check(
            &mut group,
            |group| {
                let mut total = 0.0;
                {
                    let h_x = &mut group.nets[0];
                    let out = h_x.forward(&x)?;
                    total += ext * mse_loss(&out, &x_gt)?;
                    h_x.backward(&mse_grad(&out, &x_gt, ext)?)?;
                    let out = h_x.forward(&fake_x)?;
                    total += aug * mse_loss(&out, &y_gt)?;
                    h_x.backward(&mse_grad(&out, &y_gt, aug)?)?;
                }
                {
                    let h_y = &mut group.nets[1];
                    let out = h_y.forward(&y)?;
                    total += ext * mse_loss(&out, &y_gt)?;
                    h_y.backward(&mse_grad(&out, &y_gt, ext)?)?;
                    let out = h_y.forward(&fake_y)?;
                    total += aug * mse_loss(&out, &x_gt)?;
                    h_y.backward(&mse_grad(&out, &x_gt, aug)?)?;
                }
                Ok(total)
            },
            1e-5,
            seed * 7 + 3,
        )
        .unwrap();
        println!("seed {seed}: err {err:.3e} {}", if err < 1e-6 { "GOOD" } else { "" });
    }
}
