//! Empirical frame bounds of the wavelet bank on scalar and vector operators.

use geoscatter::diffusion_ops::{build_lazy_walk, build_local_frames, build_vector_diffusion};
use geoscatter::training_bench::ellipsoid_population;
use geoscatter::wavelets::{verify_frame_bounds, WaveletBank};

fn main() -> geoscatter::Result<()> {
    let bank = WaveletBank::dyadic(3);
    for tg in ellipsoid_population(4, 32, 5, 1)? {
        let g = &tg.graph;
        let degrees: Vec<f64> = (0..g.n()).map(|i| g.weighted_degree(i)).collect();
        let p = build_lazy_walk(g, true)?;
        let q = build_vector_diffusion(&p, &build_local_frames(g)?)?;
        let rp = verify_frame_bounds(&p, &bank, &degrees, 1000, 0)?;
        let rq = verify_frame_bounds(&q, &bank, &degrees, 1000, 0)?;
        println!(
            "energy P [{:.3}, {:.3}]  Q [{:.3}, {:.3}]  bound {:.3}  min frame eig P {:.3e} Q {:.3e}",
            rp.min_ratio, rp.max_ratio, rq.min_ratio, rq.max_ratio, rq.upper_bound,
            rp.frame_operator_min_eig, rq.frame_operator_min_eig
        );
    }
    Ok(())
}
