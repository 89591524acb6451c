//! Deployment cost model: a spot-backed datastore (one on-demand metadata
//! node plus spot datanodes) against an all-on-demand baseline of the same
//! fleet size.

use ess_proto::Fault;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CostInputs {
    pub n_on_demand: u32,
    pub n_spot: u32,
    /// Price per instance-hour.
    pub price_on_demand: f64,
    pub price_spot: f64,
    /// Baseline runtime in hours (all on-demand).
    pub baseline_hours: f64,
    /// Spot deployment runtime in hours; longer when preemptions slow the
    /// workload down.
    pub spot_run_hours: f64,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct CostBreakdown {
    pub baseline_cost: f64,
    pub spot_cost: f64,
    /// 1 - spot/baseline.
    pub savings_fraction: f64,
}

/// Baseline: the whole fleet on-demand for `baseline_hours`. Spot
/// deployment: the same fleet with `n_spot` nodes at the spot price for
/// `spot_run_hours`.
pub fn cost_model(inputs: &CostInputs) -> Result<CostBreakdown, Fault> {
    if inputs.price_on_demand < 0.0 || inputs.price_spot < 0.0 {
        return Err(Fault::protocol("prices must be non-negative"));
    }
    if inputs.baseline_hours <= 0.0 || inputs.spot_run_hours <= 0.0 {
        return Err(Fault::protocol("hours must be positive"));
    }
    let n_total = (inputs.n_on_demand + inputs.n_spot) as f64;
    let baseline_cost = n_total * inputs.price_on_demand * inputs.baseline_hours;
    let spot_cost = (inputs.n_on_demand as f64 * inputs.price_on_demand
        + inputs.n_spot as f64 * inputs.price_spot)
        * inputs.spot_run_hours;
    if baseline_cost == 0.0 {
        return Err(Fault::protocol("baseline fleet cost is zero"));
    }
    Ok(CostBreakdown {
        baseline_cost,
        spot_cost,
        savings_fraction: 1.0 - spot_cost / baseline_cost,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// n2-standard-16 hourly prices at measurement time.
    pub const PRICE_ON_DEMAND: f64 = 0.776944;
    pub const PRICE_SPOT: f64 = 0.188320;

    fn five_node_inputs(spot_run_hours: f64) -> CostInputs {
        CostInputs {
            n_on_demand: 1,
            n_spot: 4,
            price_on_demand: PRICE_ON_DEMAND,
            price_spot: PRICE_SPOT,
            baseline_hours: 2.0,
            spot_run_hours,
        }
    }

    #[test]
    fn five_node_fleet_saves_sixty_percent() {
        let out = cost_model(&five_node_inputs(2.0)).unwrap();
        // Independently: 1 - (0.776944 + 4*0.188320) / (5*0.776944)
        //              = 0.6060915587...
        assert!((out.savings_fraction - 0.606092).abs() < 5e-4);
    }

    #[test]
    fn slowdown_eats_into_savings() {
        // A 2.1% longer spot run still saves just under 60%.
        let out = cost_model(&five_node_inputs(2.0 * 1.021)).unwrap();
        assert!((out.savings_fraction - 0.597819).abs() < 1e-3);
    }

    #[test]
    fn equal_prices_equal_hours_save_nothing() {
        let inputs = CostInputs {
            n_on_demand: 1,
            n_spot: 4,
            price_on_demand: 0.5,
            price_spot: 0.5,
            baseline_hours: 3.0,
            spot_run_hours: 3.0,
        };
        let out = cost_model(&inputs).unwrap();
        assert!(out.savings_fraction.abs() < 1e-12);
    }

    #[test]
    fn savings_fraction_is_price_scale_invariant() {
        for k in [0.1, 1.0, 7.5, 1000.0] {
            let mut inputs = five_node_inputs(2.3);
            inputs.price_on_demand *= k;
            inputs.price_spot *= k;
            let scaled = cost_model(&inputs).unwrap();
            let base = cost_model(&five_node_inputs(2.3)).unwrap();
            assert!(
                (scaled.savings_fraction - base.savings_fraction).abs() < 1e-12,
                "scale {k}"
            );
        }
    }

    #[test]
    fn invalid_inputs_rejected() {
        let mut inputs = five_node_inputs(2.0);
        inputs.baseline_hours = 0.0;
        assert!(cost_model(&inputs).is_err());
        let mut inputs = five_node_inputs(2.0);
        inputs.price_spot = -1.0;
        assert!(cost_model(&inputs).is_err());
    }
}
