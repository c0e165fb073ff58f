//! Drive the AV through a few hand-made cut-ins and print what happened.

use accel_eval::plant::{classify_events, simulate, AvConfig, Mode};
use accel_eval::scenario::{derive_kinematics, ScenarioSample};

fn cut_in(v_l: f64, r0: f64, closing: f64) -> accel_eval::Result<ScenarioSample> {
    let k = derive_kinematics(v_l, 1.0 / r0, closing / r0)?;
    Ok(ScenarioSample {
        v_l,
        r_inv: 1.0 / r0,
        ttc_inv: closing / r0,
        r0: k.r0,
        rdot: k.rdot,
        v0: k.v0,
        likelihood: 1.0,
    })
}

fn main() -> accel_eval::Result<()> {
    let cfg = AvConfig::default();
    for (v_l, r0, closing) in [(20.0, 60.0, 2.0), (10.0, 15.0, 6.0), (8.0, 6.0, 9.0)] {
        let s = cut_in(v_l, r0, closing)?;
        let trace = simulate(&s, &cfg)?;
        let ev = classify_events(&trace, &cfg);
        let aeb_at = trace.states.iter().find(|st| st.mode == Mode::Aeb).map(|st| st.t);
        println!(
            "v_L {v_l:4.1} m/s, r0 {r0:4.1} m, closing {closing:3.1} m/s -> min range {:6.2} m, \
             AEB {}, conflict {}, crash {}{}, {:.1} m driven",
            trace.min_range,
            aeb_at.map_or("never".to_string(), |t| format!("at {t:.1} s")),
            ev.conflict,
            ev.crash,
            ev.delta_v.map_or(String::new(), |dv| format!(" (dv {dv:.2} m/s)")),
            trace.distance
        );
    }

    let last = simulate(&cut_in(10.0, 15.0, 6.0)?, &cfg)?;
    println!("\n   t      r      v  a_cmd      a mode");
    for st in last.states.iter().step_by(5).take(12) {
        println!("{:4.1} {:6.2} {:6.2} {:6.2} {:6.2} {:?}", st.t, st.r, st.v, st.a_cmd, st.a, st.mode);
    }
    Ok(())
}
