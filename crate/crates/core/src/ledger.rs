//! Per-step energy and chemical accounting.

/// Where every unit of energy that entered or left the system during one
/// step went.
///
/// `injected` is the net energy set by reawakening (fresh cells start at
/// `e_init` whatever their site held) and `regen` the background regrowth of
/// the regenerating variants. Copy costs count only the part of `e_copy`
/// lost to the recipient's cap; the rest moves between cells.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StepLedger {
    /// Step index after the step completed.
    pub step: u64,
    pub before: f64,
    pub after: f64,
    pub released: f64,
    pub injected: f64,
    pub regen: f64,
    pub cost_enzyme: f64,
    pub cost_flow: f64,
    pub cost_copy: f64,
    pub cost_move: f64,
    /// Reaction energy beyond `e_max`.
    pub dissipated_cap: f64,
    /// Victim energy beyond the killer's `e_max`.
    pub dissipated_kill: f64,
    /// Summed over all cells and species.
    pub chem_before: f64,
    pub chem_after: f64,
}

impl StepLedger {
    pub fn costs(&self) -> f64 {
        self.cost_enzyme + self.cost_flow + self.cost_copy + self.cost_move
    }

    pub fn dissipated(&self) -> f64 {
        self.dissipated_cap + self.dissipated_kill
    }

    /// Energy sources of the step.
    pub fn sources(&self) -> f64 {
        self.released + self.injected + self.regen
    }

    /// `after - (before + sources - costs - dissipated)`; zero up to rounding.
    pub fn residual(&self) -> f64 {
        self.after - (self.before + self.sources() - self.costs() - self.dissipated())
    }

    pub fn chem_residual(&self) -> f64 {
        self.chem_after - self.chem_before
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closure_arithmetic() {
        let l = StepLedger {
            before: 10.0,
            released: 2.0,
            injected: 1.0,
            cost_flow: 0.5,
            cost_enzyme: 0.25,
            dissipated_cap: 0.25,
            after: 12.0,
            ..Default::default()
        };
        assert_eq!(l.residual(), 0.0);
    }
}
