//! CE search for the conflict and crash tilts of the low-speed bin.

use accel_eval::config::ExperimentConfig;
use accel_eval::cross_entropy::ce_search;
use accel_eval::pipeline::EventKind;
use accel_eval::rng::StreamKey;

fn main() -> accel_eval::Result<()> {
    let cfg = ExperimentConfig::load(concat!(env!("CARGO_MANIFEST_DIR"), "/configs/default.toml").as_ref())?;
    let model = cfg.model()?;
    for event in [EventKind::Conflict, EventKind::Crash] {
        let settings = cfg.ce.for_event(event);
        let state = ce_search(
            &model,
            &cfg.plant,
            "low",
            event,
            settings,
            None,
            &StreamKey::new(cfg.seed, "ce-example"),
        )?;
        println!("{event}: {} scenarios per iteration", settings.n_per_iter);
        println!("  it  vartheta_r  vartheta_ttc  hits  level");
        for h in &state.history {
            println!(
                "  {:2}  {:10.5}  {:12.5}  {:4}  {}",
                h.iteration,
                h.vartheta_r,
                h.vartheta_ttc,
                h.hits,
                h.level.map_or("event".to_string(), |l| format!("{l:.3}"))
            );
        }
    }
    Ok(())
}
