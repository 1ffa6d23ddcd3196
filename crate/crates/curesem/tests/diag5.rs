use curesem::em::{fit_em, EmConfig};
use curesem::inference::Engine;
use curesem::model::Theta;
use curesem::sem::{fit_sem, SemConfig};
use curesem::simgen::{
    draw_initials, generate_dataset, solve_design, standard_design, InitialPolicy,
};
use curesem::ew::EwParams;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

fn lane_seed(base: u64, replicate: u64, lane: u64) -> u64 {
    let mut z = base
        .wrapping_add(replicate)
        .wrapping_add(lane.wrapping_mul(0xA076_1D64_78BD_642F))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn oob(th: &Theta) -> bool {
    !(th.beta.iter().all(|b| b.abs() <= 50.0)
        && [th.ew.alpha(), th.ew.k(), th.ew.lambda()]
            .iter()
            .all(|v| (1e-6..=1e6).contains(v)))
}

#[test]
fn diagnose_criterion_5() {
    let ew = EwParams::new(2.0, 1.0, 1.5).unwrap();
    let mut design = standard_design(400, false, ew, 100, 560_000);
    design.initials = InitialPolicy::Far;
    let solved = solve_design(&design).unwrap();
    let mut sem_div = 0;
    let mut em_div = 0;
    for i in 0..design.replicates {
        let mut rng = ChaCha12Rng::seed_from_u64(design.seed.wrapping_add(i as u64));
        let data = generate_dataset(&solved, &mut rng);
        let start = draw_initials(&mut rng, solved.truth(), InitialPolicy::Far).unwrap();
        let sem_cfg = SemConfig {
            seed: lane_seed(design.seed, i as u64, 0),
            ..SemConfig::default()
        };
        let sem = fit_sem(&data, &start, &sem_cfg).unwrap();
        let em = fit_em(&data, &start, &EmConfig::default()).unwrap();
        if !em.converged {
            em_div += 1;
        }
        if !sem.converged {
            sem_div += 1;
            let burn = sem_cfg.burn_in;
            let n_steps = sem.chain.steps.len();
            let oob_iters: Vec<usize> = sem
                .chain
                .steps
                .iter()
                .filter(|s| oob(&s.theta))
                .map(|s| s.iteration)
                .collect();
            let post_oob = oob_iters.iter().filter(|&&r| r > burn).count();
            let post_nonfinite = sem
                .chain
                .steps
                .iter()
                .filter(|s| s.iteration > burn && !s.loglik.is_finite())
                .count();
            println!(
                "rep {i:3}: div={:?} steps={n_steps} oob_n={} first_oob={:?} last_oob={:?} post_oob={post_oob} post_nonfinite={post_nonfinite} sel_ll={:.3} em_conv={} em_ll={:.3} start=({:+.3},{:+.3},{:.3},{:.3},{:.3})",
                sem.divergence,
                oob_iters.len(),
                oob_iters.first(),
                oob_iters.last(),
                sem.loglik,
                em.converged,
                em.loglik,
                start.beta[0], start.beta[1],
                start.ew.alpha(), start.ew.k(), start.ew.lambda(),
            );
        }
    }
    println!("TOTAL sem_div={sem_div} em_div={em_div}");
    let _ = Engine::Em(EmConfig::default());
}
