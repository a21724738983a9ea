//! Power flow cases in a ppc-compatible JSON interchange format.
//!
//! A case is one JSON object `{"version", "baseMVA", "bus", "gen", "branch"}`
//! whose table rows follow the MATPOWER/ppc column order exactly, so cases
//! convert to and from ppc structures with trivial scripts. Serialization is
//! canonical: fixed key order, one table row per line, shortest round-trip
//! decimal numbers without exponents, LF line endings. `parse` then `serialize`
//! is the identity on canonical documents.

use crate::error::CaseError;
use crate::network::{Branch, Bus, BusType, Network};
use crate::scalar::Scalar;
use crate::state::{flat_state, GridState};

/// Bus table columns (13 per row).
pub mod bus_col {
    pub const BUS_I: usize = 0;
    pub const BUS_TYPE: usize = 1;
    pub const PD: usize = 2;
    pub const QD: usize = 3;
    pub const GS: usize = 4;
    pub const BS: usize = 5;
    pub const AREA: usize = 6;
    pub const VM: usize = 7;
    pub const VA: usize = 8;
    pub const BASE_KV: usize = 9;
    pub const ZONE: usize = 10;
    pub const VMAX: usize = 11;
    pub const VMIN: usize = 12;
    pub const WIDTH: usize = 13;
}

/// Generator table columns (at least 10 per row).
pub mod gen_col {
    pub const GEN_BUS: usize = 0;
    pub const PG: usize = 1;
    pub const QG: usize = 2;
    pub const QMAX: usize = 3;
    pub const QMIN: usize = 4;
    pub const VG: usize = 5;
    pub const MBASE: usize = 6;
    pub const STATUS: usize = 7;
    pub const PMAX: usize = 8;
    pub const PMIN: usize = 9;
    pub const WIDTH: usize = 10;
}

/// Branch table columns (at least 13 per row).
pub mod branch_col {
    pub const F_BUS: usize = 0;
    pub const T_BUS: usize = 1;
    pub const BR_R: usize = 2;
    pub const BR_X: usize = 3;
    pub const BR_B: usize = 4;
    pub const RATE_A: usize = 5;
    pub const RATE_B: usize = 6;
    pub const RATE_C: usize = 7;
    pub const TAP: usize = 8;
    pub const SHIFT: usize = 9;
    pub const STATUS: usize = 10;
    pub const ANGMIN: usize = 11;
    pub const ANGMAX: usize = 12;
    pub const WIDTH: usize = 13;
}

/// A parsed case: raw numeric tables in ppc column order. Extra columns
/// beyond the required widths are preserved verbatim.
#[derive(Debug, Clone, PartialEq)]
pub struct CaseDocument {
    pub version: String,
    pub base_mva: f64,
    pub bus: Vec<Vec<f64>>,
    pub gen: Vec<Vec<f64>>,
    pub branch: Vec<Vec<f64>>,
}

/// Canonical decimal formatting: shortest round-trip digits, '.' separator,
/// no exponent (Rust's float Display).
pub fn fmt_f64(v: f64) -> Result<String, CaseError> {
    if !v.is_finite() {
        return Err(CaseError::NonFinite);
    }
    Ok(format!("{v}"))
}

pub fn parse_case(text: &str) -> Result<CaseDocument, CaseError> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| CaseError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let obj = value.as_object().ok_or_else(|| CaseError::Schema {
        table: "document",
        row: 0,
        reason: "top level must be an object".into(),
    })?;

    let version = obj
        .get("version")
        .and_then(|v| v.as_str())
        .ok_or_else(|| CaseError::Schema {
            table: "document",
            row: 0,
            reason: "missing string field \"version\"".into(),
        })?
        .to_string();
    let base_mva = obj.get("baseMVA").and_then(|v| v.as_f64()).ok_or_else(|| CaseError::Schema {
        table: "document",
        row: 0,
        reason: "missing numeric field \"baseMVA\"".into(),
    })?;

    let table = |name: &'static str, min_width: usize| -> Result<Vec<Vec<f64>>, CaseError> {
        let rows = obj.get(name).and_then(|v| v.as_array()).ok_or_else(|| CaseError::Schema {
            table: name,
            row: 0,
            reason: "missing table".into(),
        })?;
        let mut out = Vec::with_capacity(rows.len());
        let mut width = None;
        for (i, row) in rows.iter().enumerate() {
            let cells = row.as_array().ok_or_else(|| CaseError::Schema {
                table: name,
                row: i,
                reason: "row is not an array".into(),
            })?;
            let mut parsed = Vec::with_capacity(cells.len());
            for cell in cells {
                parsed.push(cell.as_f64().ok_or_else(|| CaseError::Schema {
                    table: name,
                    row: i,
                    reason: "non-numeric cell".into(),
                })?);
            }
            if parsed.len() < min_width {
                return Err(CaseError::Schema {
                    table: name,
                    row: i,
                    reason: format!("expected at least {min_width} columns, got {}", parsed.len()),
                });
            }
            match width {
                None => width = Some(parsed.len()),
                Some(w) if w != parsed.len() => {
                    return Err(CaseError::Schema {
                        table: name,
                        row: i,
                        reason: format!("ragged table: {w} vs {} columns", parsed.len()),
                    })
                }
                _ => {}
            }
            out.push(parsed);
        }
        Ok(out)
    };

    let bus = table("bus", bus_col::WIDTH)?;
    let gen = table("gen", gen_col::WIDTH)?;
    let branch = table("branch", branch_col::WIDTH)?;

    for (i, row) in bus.iter().enumerate() {
        let code = row[bus_col::BUS_TYPE];
        if code.fract() != 0.0 || BusType::from_code(code as u8).is_none() {
            return Err(CaseError::Schema {
                table: "bus",
                row: i,
                reason: format!("invalid BUS_TYPE {code}"),
            });
        }
    }

    Ok(CaseDocument { version, base_mva, bus, gen, branch })
}

pub fn serialize_case(doc: &CaseDocument) -> Result<String, CaseError> {
    let mut out = String::new();
    out.push_str("{\n");
    out.push_str(&format!("  \"version\": {},\n", serde_json::to_string(&doc.version).unwrap()));
    out.push_str(&format!("  \"baseMVA\": {},\n", fmt_f64(doc.base_mva)?));
    write_table(&mut out, "bus", &doc.bus, true)?;
    write_table(&mut out, "gen", &doc.gen, true)?;
    write_table(&mut out, "branch", &doc.branch, false)?;
    out.push_str("}\n");
    Ok(out)
}

fn write_table(
    out: &mut String,
    name: &str,
    rows: &[Vec<f64>],
    trailing_comma: bool,
) -> Result<(), CaseError> {
    let comma = if trailing_comma { "," } else { "" };
    if rows.is_empty() {
        out.push_str(&format!("  \"{name}\": []{comma}\n"));
        return Ok(());
    }
    out.push_str(&format!("  \"{name}\": [\n"));
    for (i, row) in rows.iter().enumerate() {
        let cells: Result<Vec<String>, CaseError> = row.iter().map(|&v| fmt_f64(v)).collect();
        let sep = if i + 1 == rows.len() { "" } else { "," };
        out.push_str(&format!("    [{}]{sep}\n", cells?.join(", ")));
    }
    out.push_str(&format!("  ]{comma}\n"));
    Ok(())
}

/// Converts a case to the network model. Demands and generation merge into
/// per-unit net injections (generation-positive), angles convert from
/// degrees to radians, and out-of-service branches are dropped. A tap of 0
/// in the file means "no transformer" and reads as 1.0.
pub fn to_network<T: Scalar>(doc: &CaseDocument) -> Result<Network<T>, CaseError> {
    let base = doc.base_mva;
    let mut buses = Vec::with_capacity(doc.bus.len());
    let mut has_slack = false;
    for row in &doc.bus {
        let bt = BusType::from_code(row[bus_col::BUS_TYPE] as u8).expect("validated in parse");
        has_slack |= bt == BusType::Slack;
        buses.push(Bus {
            id: row[bus_col::BUS_I] as usize,
            bus_type: bt,
            p: T::from_f64(-row[bus_col::PD] / base),
            q: T::from_f64(-row[bus_col::QD] / base),
            vm: T::from_f64(row[bus_col::VM]),
            va: T::from_f64(row[bus_col::VA].to_radians()),
            base_kv: T::from_f64(row[bus_col::BASE_KV]),
        });
    }
    if !has_slack {
        return Err(CaseError::NoSlack);
    }

    let index: std::collections::BTreeMap<usize, usize> =
        buses.iter().enumerate().map(|(i, b)| (b.id, i)).collect();
    for row in &doc.gen {
        if row[gen_col::STATUS] == 0.0 {
            continue;
        }
        let bus_id = row[gen_col::GEN_BUS] as usize;
        let &i = index.get(&bus_id).ok_or(CaseError::GenOnMissingBus { bus: bus_id })?;
        buses[i].p = buses[i].p + T::from_f64(row[gen_col::PG] / base);
        buses[i].q = buses[i].q + T::from_f64(row[gen_col::QG] / base);
    }

    let mut branches = Vec::new();
    for (i, row) in doc.branch.iter().enumerate() {
        if row[branch_col::STATUS] == 0.0 {
            continue;
        }
        if row[branch_col::SHIFT] != 0.0 {
            return Err(CaseError::Schema {
                table: "branch",
                row: i,
                reason: "phase shifters are not supported".into(),
            });
        }
        let tap = if row[branch_col::TAP] == 0.0 { 1.0 } else { row[branch_col::TAP] };
        branches.push(Branch {
            from_bus: row[branch_col::F_BUS] as usize,
            to_bus: row[branch_col::T_BUS] as usize,
            r: T::from_f64(row[branch_col::BR_R]),
            x: T::from_f64(row[branch_col::BR_X]),
            b_charging: T::from_f64(row[branch_col::BR_B]),
            tap: T::from_f64(tap),
            in_service: true,
        });
    }

    Ok(Network { base_mva: T::from_f64(base), buses, branches })
}

/// Builds a case document for a network and a state. PQ buses are written
/// as pure demand (PD = -p * base); slack and PV buses get a generator row
/// carrying their injection. The state's voltages land in VM/VA (degrees).
pub fn from_solution<T: Scalar>(
    net: &Network<T>,
    state: &GridState<T>,
) -> Result<CaseDocument, CaseError> {
    if net.n_buses() != state.len() {
        return Err(CaseError::DimensionMismatch { expected: net.n_buses(), found: state.len() });
    }
    let base = net.base_mva.to_f64();
    let mut bus = Vec::with_capacity(net.buses.len());
    let mut gen = Vec::new();
    for (i, b) in net.buses.iter().enumerate() {
        let p_mw = state.p[i].to_f64() * base;
        let q_mvar = state.q[i].to_f64() * base;
        let vm = state.vm[i].to_f64();
        let va_deg = state.va[i].to_f64().to_degrees();
        let (pd, qd) = match b.bus_type {
            BusType::Pq => (-p_mw, -q_mvar),
            _ => (0.0, 0.0),
        };
        bus.push(vec![
            b.id as f64,
            b.bus_type.code() as f64,
            pd,
            qd,
            0.0,
            0.0,
            1.0,
            vm,
            va_deg,
            b.base_kv.to_f64(),
            1.0,
            1.1,
            0.9,
        ]);
        if b.bus_type != BusType::Pq {
            gen.push(vec![
                b.id as f64,
                p_mw,
                q_mvar,
                999.0,
                -999.0,
                vm,
                base,
                1.0,
                999.0,
                -999.0,
            ]);
        }
    }

    let branch = net
        .branches
        .iter()
        .map(|br| {
            vec![
                br.from_bus as f64,
                br.to_bus as f64,
                br.r.to_f64(),
                br.x.to_f64(),
                br.b_charging.to_f64(),
                0.0,
                0.0,
                0.0,
                br.tap.to_f64(),
                0.0,
                if br.in_service { 1.0 } else { 0.0 },
                -360.0,
                360.0,
            ]
        })
        .collect();

    Ok(CaseDocument { version: "2".into(), base_mva: base, bus, gen, branch })
}

/// Reads the full state stored in a (solved or flat) case document, aligned
/// with the network produced by [`to_network`] on the same document.
pub fn state_from_document<T: Scalar>(doc: &CaseDocument) -> Result<GridState<T>, CaseError> {
    let net: Network<T> = to_network(doc)?;
    let mut state = flat_state(&net);
    for (i, row) in doc.bus.iter().enumerate() {
        state.vm[i] = T::from_f64(row[bus_col::VM]);
        state.va[i] = T::from_f64(row[bus_col::VA].to_radians());
        if !state.known[i].p {
            state.p[i] = net.buses[i].p;
        }
        if !state.known[i].q {
            state.q[i] = net.buses[i].q;
        }
    }
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn minimal_doc() -> CaseDocument {
        CaseDocument {
            version: "2".into(),
            base_mva: 10.0,
            bus: vec![
                vec![0.0, 3.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 20.0, 1.0, 1.1, 0.9],
                vec![1.0, 1.0, 1.48, 0.09, 0.0, 0.0, 1.0, 1.0, 0.0, 20.0, 1.0, 1.1, 0.9],
            ],
            gen: vec![vec![0.0, 0.0, 0.0, 999.0, -999.0, 1.0, 10.0, 1.0, 999.0, -999.0]],
            branch: vec![vec![
                0.0, 1.0, 0.01, 0.05, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 1.0, -360.0, 360.0,
            ]],
        }
    }

    #[test]
    fn parse_minimal_document() {
        let text = serialize_case(&minimal_doc()).unwrap();
        let doc = parse_case(&text).unwrap();
        assert_eq!(doc, minimal_doc());
        assert_eq!(doc.bus.len(), 2);
        assert_eq!(doc.gen.len(), 1);
        assert_eq!(doc.branch.len(), 1);
    }

    #[test]
    fn invalid_bus_type_rejected() {
        let mut doc = minimal_doc();
        doc.bus[1][bus_col::BUS_TYPE] = 5.0;
        let text = serialize_case(&doc).unwrap();
        match parse_case(&text) {
            Err(CaseError::Schema { table: "bus", row: 1, .. }) => {}
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn syntax_error_carries_position() {
        match parse_case("{\n  \"version\": \"2\",,\n}") {
            Err(CaseError::Syntax { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected syntax error, got {other:?}"),
        }
    }

    #[test]
    fn serialize_parse_roundtrip_is_byte_identical() {
        let doc = minimal_doc();
        let text = serialize_case(&doc).unwrap();
        let text2 = serialize_case(&parse_case(&text).unwrap()).unwrap();
        assert_eq!(text, text2);
    }

    #[test]
    fn load_converts_to_negative_injection() {
        // PD = 0.148 * base means p = -0.148 p.u. under the
        // generation-positive convention
        let mut doc = minimal_doc();
        doc.bus[1][bus_col::PD] = 0.148 * doc.base_mva;
        doc.gen.clear();
        let net: Network<f64> = to_network(&doc).unwrap();
        assert_abs_diff_eq!(net.buses[1].p, -0.148, epsilon = 1e-15);
    }

    #[test]
    fn generation_cancels_demand() {
        let mut doc = minimal_doc();
        doc.bus[0][bus_col::PD] = 3.0;
        doc.gen[0][gen_col::PG] = 3.0;
        let net: Network<f64> = to_network(&doc).unwrap();
        assert_abs_diff_eq!(net.buses[0].p, 0.0);
    }

    #[test]
    fn out_of_service_branch_dropped() {
        let mut doc = minimal_doc();
        doc.branch[0][branch_col::STATUS] = 0.0;
        let net: Network<f64> = to_network(&doc).unwrap();
        assert!(net.branches.is_empty());
    }

    #[test]
    fn missing_gen_bus_rejected() {
        let mut doc = minimal_doc();
        doc.gen[0][gen_col::GEN_BUS] = 9.0;
        match to_network::<f64>(&doc) {
            Err(CaseError::GenOnMissingBus { bus: 9 }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn from_solution_flat_zero_load() {
        let doc = {
            let mut d = minimal_doc();
            d.bus[1][bus_col::PD] = 0.0;
            d.bus[1][bus_col::QD] = 0.0;
            d
        };
        let net: Network<f64> = to_network(&doc).unwrap();
        let state = flat_state(&net);
        let out = from_solution(&net, &state).unwrap();
        for row in &out.bus {
            assert_eq!(row[bus_col::VM], 1.0);
            assert_eq!(row[bus_col::VA], 0.0);
        }
    }

    #[test]
    fn slack_injection_written_as_generation() {
        let doc = minimal_doc();
        let net: Network<f64> = to_network(&doc).unwrap();
        let mut state = flat_state(&net);
        state.p[0] = 0.149;
        state.q[0] = 0.011;
        let out = from_solution(&net, &state).unwrap();
        let slack_gen = out.gen.iter().find(|g| g[gen_col::GEN_BUS] == 0.0).unwrap();
        assert_abs_diff_eq!(slack_gen[gen_col::PG], 0.149 * 10.0, epsilon = 1e-12);
        assert_abs_diff_eq!(slack_gen[gen_col::QG], 0.011 * 10.0, epsilon = 1e-12);
    }

    #[test]
    fn projection_is_idempotent() {
        let doc = minimal_doc();
        let net: Network<f64> = to_network(&doc).unwrap();
        let state = flat_state(&net);
        let net2: Network<f64> = to_network(&from_solution(&net, &state).unwrap()).unwrap();
        let state2 = flat_state(&net2);
        let net3: Network<f64> = to_network(&from_solution(&net2, &state2).unwrap()).unwrap();
        assert_eq!(net2.buses.len(), net3.buses.len());
        for (b2, b3) in net2.buses.iter().zip(&net3.buses) {
            assert_abs_diff_eq!(b2.p, b3.p, epsilon = f64::EPSILON * 2.0);
            assert_abs_diff_eq!(b2.q, b3.q, epsilon = f64::EPSILON * 2.0);
            assert_eq!(b2.vm, b3.vm);
            assert_eq!(b2.va, b3.va);
        }
        assert_eq!(net2.branches, net3.branches);
    }
}
