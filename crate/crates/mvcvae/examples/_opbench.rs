use mvcvae::tensor::Tensor;
use std::time::Instant;

fn time_it<F: FnMut()>(label: &str, reps: usize, mut f: F) {
    let t = Instant::now();
    for _ in 0..reps { f(); }
    eprintln!("{label}: {:.2} ms", t.elapsed().as_secs_f64() / reps as f64 * 1e3);
}

fn main() {
    mvcvae::configure_threads_from_env();
    // desk stage shapes, batch 32
    let mk = |shape: &[usize]| Tensor::<f32>::param(vec![0.3; shape.iter().product()], shape).unwrap();

    // stage 2: x [32,32,16,16], w [64,32,4,4]
    let x2 = mk(&[32, 32, 16, 16]);
    let w2 = mk(&[64, 32, 4, 4]);
    let b2 = mk(&[64]);
    time_it("conv2 fwd", 20, || { let _ = x2.conv2d(&w2, &b2, 2, 1).unwrap(); });
    time_it("conv2 fwd+bwd", 20, || {
        let y = x2.conv2d(&w2, &b2, 2, 1).unwrap();
        y.sum().backward().unwrap();
        x2.zero_grad(); w2.zero_grad(); b2.zero_grad();
    });

    // stage 3: x [32,64,8,8], w [128,64,4,4]
    let x3 = mk(&[32, 64, 8, 8]);
    let w3 = mk(&[128, 64, 4, 4]);
    let b3 = mk(&[128]);
    time_it("conv3 fwd", 20, || { let _ = x3.conv2d(&w3, &b3, 2, 1).unwrap(); });
    time_it("conv3 fwd+bwd", 20, || {
        let y = x3.conv2d(&w3, &b3, 2, 1).unwrap();
        y.sum().backward().unwrap();
        x3.zero_grad(); w3.zero_grad(); b3.zero_grad();
    });

    // deconv stage 3': x [32,128,4,4], w [128,64,4,4]
    let xd = mk(&[32, 128, 4, 4]);
    let wd = mk(&[128, 64, 4, 4]);
    let bd = mk(&[64]);
    time_it("deconv3 fwd", 20, || { let _ = xd.conv_transpose2d(&wd, &bd, 2, 1).unwrap(); });
    time_it("deconv3 fwd+bwd", 20, || {
        let y = xd.conv_transpose2d(&wd, &bd, 2, 1).unwrap();
        y.sum().backward().unwrap();
        xd.zero_grad(); wd.zero_grad(); bd.zero_grad();
    });

    // deconv stage 1': x [32,32,16,16], w [32,1,4,4]
    let xe = mk(&[32, 32, 16, 16]);
    let we = mk(&[32, 1, 4, 4]);
    let be = mk(&[1]);
    time_it("deconv1 fwd", 20, || { let _ = xe.conv_transpose2d(&we, &be, 2, 1).unwrap(); });
    time_it("deconv1 fwd+bwd", 20, || {
        let y = xe.conv_transpose2d(&we, &be, 2, 1).unwrap();
        y.sum().backward().unwrap();
        xe.zero_grad(); we.zero_grad(); be.zero_grad();
    });

    // fc: [32,2048] @ [2048,128]
    let xf = mk(&[32, 2048]);
    let wf = mk(&[2048, 128]);
    time_it("fc fwd", 50, || { let _ = xf.matmul(&wf).unwrap(); });
    time_it("fc fwd+bwd", 50, || {
        let y = xf.matmul(&wf).unwrap();
        y.sum().backward().unwrap();
        xf.zero_grad(); wf.zero_grad();
    });
    // fc_dec: [32,256] @ [256,2048]
    let xg = mk(&[32, 256]);
    let wg = mk(&[256, 2048]);
    time_it("fc_dec fwd+bwd", 50, || {
        let y = xg.matmul(&wg).unwrap();
        y.sum().backward().unwrap();
        xg.zero_grad(); wg.zero_grad();
    });

    // activations on stage-1 maps
    let xa = mk(&[32, 32, 16, 16]);
    time_it("leaky+sigmoid fwd+bwd", 50, || {
        let y = xa.leaky_relu(0.2).sigmoid();
        y.sum().backward().unwrap();
        xa.zero_grad();
    });
}
