//! The bundled influenza hospitalization cohort: 1306 admissions moving
//! through ward and ICU to discharge, death or long-term care.

use crate::conjugate::TransitionCounts;
use crate::graph::{parse_graph, Dag};
use crate::io::parse_counts_csv;

pub const PIDIRAC_GRAPH: &str = include_str!("../data/pidirac.graph");
pub const PIDIRAC_COUNTS: &str = include_str!("../data/pidirac_counts.csv");

pub fn pidirac_graph() -> Dag {
    parse_graph(PIDIRAC_GRAPH).expect("bundled graph parses")
}

pub fn pidirac_counts(dag: &Dag) -> TransitionCounts {
    parse_counts_csv(PIDIRAC_COUNTS, dag).expect("bundled counts parse")
}
