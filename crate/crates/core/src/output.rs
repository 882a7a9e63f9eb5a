//! Plot-ready CSV export of energy traces.
//!
//! Floats are written in Rust's shortest round-trip scientific notation, so
//! the output is locale independent and byte-identical for identical runs.

use crate::simulate::EnergyTrace;
use std::io::Write;

pub fn trace_header(port_dim: usize) -> Vec<String> {
    let mut h: Vec<String> = ["t", "E_state", "E_ctrl", "power_residual", "diffquot_norm"].iter().map(|s| s.to_string()).collect();
    h.extend((1..=port_dim).map(|i| format!("u_{i}")));
    h.extend((1..=port_dim).map(|i| format!("y_{i}")));
    h
}

fn num(v: f64) -> String {
    format!("{v:e}")
}

pub fn write_trace_csv<W: Write>(trace: &EnergyTrace, out: W) -> csv::Result<()> {
    let port_dim = trace.u.first().map_or(0, |u| u.len());
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(trace_header(port_dim))?;
    for k in 0..trace.len() {
        let mut row = vec![
            num(trace.times[k]),
            num(trace.e_state[k]),
            num(trace.e_ctrl[k]),
            num(trace.power_residual[k]),
            num(trace.diffquot[k]),
        ];
        row.extend(trace.u[k].iter().map(|&v| num(v)));
        row.extend(trace.y[k].iter().map(|&v| num(v)));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    #[test]
    fn header_and_rows() {
        let tr = EnergyTrace {
            times: vec![0.0, 0.5],
            e_state: vec![1.0, 0.25],
            e_ctrl: vec![0.0, 0.0],
            power_residual: vec![0.0, 1e-17],
            diffquot: vec![0.0, 2.0],
            u: vec![dvector![0.0], dvector![-0.125]],
            y: vec![dvector![1.0], dvector![3.0]],
            y_c: vec![dvector![0.0], dvector![0.125]],
            solver: Default::default(),
        };
        let mut buf = Vec::new();
        write_trace_csv(&tr, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,E_state,E_ctrl,power_residual,diffquot_norm,u_1,y_1");
        assert_eq!(lines[2], "5e-1,2.5e-1,0e0,1e-17,2e0,-1.25e-1,3e0");
        assert!(!text.contains('\r'));
    }
}
