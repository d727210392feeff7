//! Time integration just past onset, compared with the local estimate.
use lco_guard::lco::lco_amplitude_local_of;
use lco_guard::model::{DimensionlessSystem, StateVector};
use lco_guard::normal_form::hopf_point_of;
use lco_guard::ode::integrate;

fn main() -> lco_guard::Result<()> {
    let base = DimensionlessSystem::linear(0.05, 0.0, 0.12, 0.985).with_nonlinear(0.3, 0.0136);
    let mu1 = hopf_point_of(&base)?.mu1_cr + 0.003;
    let s = base.with_mu1(mu1);
    let tr = integrate(&s, StateVector::new(0.05, 0.0, 0.0, 0.0), 6000.0, 1e-9, 6001)?;
    let est = lco_amplitude_local_of(&s, mu1)?;
    println!("simulated peak {:.4}, local estimate {:.4}", tr.peak_q1_after(5000.0), est.q1_max);
    Ok(())
}
