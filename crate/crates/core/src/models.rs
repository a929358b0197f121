//! Built-in graph specs for the standard attrition and panel models.

use crate::graph::MGraph;
use crate::parse::parse_graph;

/// Treatment confounder chain `X -> D -> Y`.
pub const CHAIN: &str = "node X obs\nnode D obs\nnode Y obs\nedge X -> D\nedge D -> Y\n";

/// Treatment-caused outcome with independently caused selection.
pub const M1: &str = "node D obs\nnode Y miss\nsel S for Y\nedge D -> Y\n";

/// Observed confounding of treatment, selection and outcome.
pub const M2: &str = "node X obs\nnode D obs\nnode Y miss\nsel S for Y\n\
edge X -> D\nedge X -> S\nedge X -> Y\nedge D -> Y\nedge D -> S\n";

/// M2 plus a latent shared by selection and outcome and correlated with `X`.
pub const M3: &str = "node X obs\nnode D obs\nnode Y miss\nnode U latent\nsel S for Y\n\
edge X -> D\nedge X -> S\nedge X -> Y\nedge D -> Y\nedge D -> S\nedge U -> S\nedge U -> Y\nbi X <-> U\n";

/// Selection that is MCAR for `Y` although it depends on both `D` and `X` through `U`.
pub const NECESSITY: &str = "node X obs\nnode D obs\nnode U latent\nnode Y miss\nsel S for Y\n\
edge D -> U\nedge X -> U\nedge U -> S\n";

/// Two-period panel: baseline `Y_0` observed, follow-up `Y_1` subject to attrition.
pub const PANEL: &str = "node D obs\nnode Y_0 obs\nnode Y_1 miss\nnode U_0 latent\nnode U_1 latent\nnode V latent\n\
sel S for Y_1\nedge D -> S\nedge D -> Y_1\nedge U_0 -> Y_0\nedge U_1 -> Y_1\nedge V -> S\n\
bi U_0 <-> U_1\nbi U_1 <-> V\nbi U_0 <-> V\n";

pub fn builtin(name: &str) -> Option<MGraph> {
    let text = match name {
        "chain" => CHAIN,
        "M1" => M1,
        "M2" => M2,
        "M3" => M3,
        "necessity" => NECESSITY,
        "panel" => PANEL,
        _ => return None,
    };
    Some(parse_graph(text).expect("built-in graphs are valid"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_builtins_parse() {
        for n in ["chain", "M1", "M2", "M3", "necessity", "panel"] {
            assert!(builtin(n).is_some(), "{n}");
        }
        assert!(builtin("M9").is_none());
    }
}
