use mracsim::numerics::Vector;
use mracsim::output_feedback::{OutputFeedbackConfig, OutputFeedbackPipeline};
use mracsim::polynomial::Polynomial;
use nalgebra::{dmatrix, dvector};

fn main() {
    let cfg = OutputFeedbackConfig::new(
        2, 0, 8.0, Polynomial::one(), Polynomial::new(vec![8.0, 4.0, 1.0]),
        None, dvector![20.0, 100.0], 0.1,
    ).unwrap();
    let a_o = dmatrix![2.0, 1.0; 4.0, 0.0];
    let b_o = dvector![0.0, 2.0];
    let (lam, h) = cfg.controller_filter().unwrap();
    let theta = dvector![1.0, 0.0, 0.0, 0.0];
    let mut p = OutputFeedbackPipeline::new(&cfg).unwrap();
    let mut x: Vector = dvector![1.0, 0.0]; // y _0 = 1
    let mut v1 = Vector::zeros(1);
    let mut v2 = Vector::zeros(1);
    let dt = 1e-4;
    let mut t = 0.0;
    for k in 0..30_000 {
        let y = x[0];
        let r = (-t as f64).exp();
        let u = theta[0] * r + theta[1] * v1[0] + theta[2] * v2[0] + theta[3] * y;
        let pair = p.process(u, y, t, dt).unwrap();
        if k % 1500 == 0 {
            let phif = p.ext_phif().clone();
            let sym = (&phif + phif.transpose()) * 0.5;
            let eig = sym.symmetric_eigen();
            let mut evs: Vec<f64> = eig.eigenvalues.iter().cloned().collect();
            evs.sort_by(|a, b| b.abs().partial_cmp(&a.abs()).unwrap());
            let lmax = evs[0].abs().max(1e-300);
            let trust = 1e3 * f64::EPSILON * lmax;
            let n_retained = evs.iter().filter(|l| **l > trust).count();
            // purity of truncated dirs on required rows {0,1,3}
            let mut purity_max = 0.0f64;
            for i in 0..6 {
                if eig.eigenvalues[i] > trust { continue; }
                for row in [0usize, 1, 3] {
                    purity_max = purity_max.max(eig.eigenvectors[(row, i)].abs());
                }
            }
            println!("t={:>5.2} y={:>10.3e} rank={} purity_max={:>9.2e} phi={:>10.3e} De={:>10.3e} evs=[{}]",
                t, y, n_retained, purity_max, p.phi(), pair.delta,
                evs.iter().map(|v| format!("{:.1e}", v)).collect::<Vec<_>>().join(","));
        }
        x += (&a_o * &x + &b_o * u) * dt;
        v1 += (&lam * &v1 + &h * u) * dt;
        v2 += (&lam * &v2 + &h * y) * dt;
        t += dt;
    }
}
