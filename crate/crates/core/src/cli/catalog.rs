/// A scenario shipped with the binary.
#[derive(Debug, Clone, Copy)]
pub struct CatalogEntry {
    pub name: &'static str,
    pub description: &'static str,
    /// Single-core wall time on a laptop-class machine.
    pub budget: &'static str,
    pub source: &'static str,
}

macro_rules! entry {
    ($name:literal, $budget:literal, $desc:literal) => {
        CatalogEntry { name: $name, description: $desc, budget: $budget, source: include_str!(concat!("../../scenarios/", $name, ".toml")) }
    };
}

pub fn catalog() -> Vec<CatalogEntry> {
    vec![
        entry!("limits_vs_depth", "< 1 s", "semiclassical cooling limits versus xi, fixed and averaged phase"),
        entry!("limits_vs_trap_freq", "< 1 s", "averaged cooling limit versus trap frequency with 1D and 3D Doppler limits"),
        entry!("deep_ld_rates_vs_phase", "20 min", "master-equation W, H and extrapolated n_inf versus gradient phase, eta = 0.017"),
        entry!("moving_gradient_vs_detuning", "6 min", "moving-gradient occupation and spread versus beam detuning, eta = 0.017"),
        entry!("beyond_ld_limits_vs_depth", "12 min", "moving-gradient cooling limit versus xi at eta = 0.17"),
        entry!("crystal_22_planar", "< 1 s", "22-ion zig-zag crystal: positions, modes, Lamb-Dicke matrix, sideband scan"),
        entry!("thermo_roundtrip_8ion", "1 min", "8-ion carrier thermometry: noisy synthetic traces fitted back with DIRECT"),
    ]
}

pub fn bundled(name: &str) -> Option<CatalogEntry> {
    catalog().into_iter().find(|e| e.name == name)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cli::scenario::Scenario;

    #[test]
    fn every_entry_parses_and_is_named_after_itself() {
        let c = catalog();
        assert!(c.len() >= 7);
        for e in c {
            let sc = Scenario::parse(e.source).unwrap_or_else(|err| panic!("{}: {err}", e.name));
            assert_eq!(sc.name.as_deref(), Some(e.name));
        }
    }
}
