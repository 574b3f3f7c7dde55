use serde::{Deserialize, Serialize};

use super::ProtocolError;
use crate::diagram::{evaluate, parse, Bindings, Diagram, GenKind};
use crate::regcalc::linalg::{c, CMat};
use crate::regcalc::{ProcessTensor, Register};

/// One clause of the device-independent protocol grammar. Devices are numbered 1 and 2;
/// tables are indexed by the value of the trusted classical register `C`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProtocolStepDI {
    /// Device `from` sends a quantum message to device `to`.
    DeviceComm { from: usize, to: usize },
    /// `c ↦ table[c]`.
    ClassicalFn { table: Vec<usize> },
    /// Keep the values in `subset`; everything else is the abort event.
    FailureFilter { subset: Vec<usize> },
    /// Send `table[c]`, a value below `dim`, to `device`.
    GiveInput { device: usize, dim: usize, table: Vec<usize> },
    /// Receive `h < dim` from `device` and update `c ↦ table[c·dim + h]`.
    ReceiveOutput { device: usize, dim: usize, table: Vec<usize> },
}

/// A protocol on wires `C * D1 * D2`: the diagram has one causal hole per device action
/// and carries the classical steps as boxes with payloads.
#[derive(Clone, Debug, PartialEq)]
pub struct DiProtocol {
    pub c_dim: usize,
    pub device_dims: [usize; 2],
    pub steps: Vec<ProtocolStepDI>,
    pub diagram: Diagram,
}

fn det_matrix(table: &[usize], rows: usize) -> CMat {
    let mut m = CMat::zeros(rows, table.len());
    for (col, &r) in table.iter().enumerate() {
        m[(r, col)] = c(1.0);
    }
    m
}

fn check_table(table: &[usize], len: usize, range: usize, what: &str) -> Result<(), ProtocolError> {
    if table.len() != len {
        return Err(ProtocolError::Invalid(format!("{what}: table has {} entries, expected {len}", table.len())));
    }
    if let Some(v) = table.iter().find(|&&v| v >= range) {
        return Err(ProtocolError::Invalid(format!("{what}: value {v} is not below {range}")));
    }
    Ok(())
}

fn check_device(d: usize, what: &str) -> Result<(), ProtocolError> {
    if d == 1 || d == 2 {
        Ok(())
    } else {
        Err(ProtocolError::Invalid(format!("{what}: device {d} does not exist (use 1 or 2)")))
    }
}

/// Assemble the diagram for `steps` over a classical register of dimension `c_dim`.
pub fn build_di_protocol(c_dim: usize, device_dims: [usize; 2], steps: Vec<ProtocolStepDI>) -> Result<DiProtocol, ProtocolError> {
    if c_dim == 0 || device_dims.contains(&0) {
        return Err(ProtocolError::Invalid("register of dimension 0".into()));
    }
    let mut decls = format!("reg C = classical {c_dim}\nreg D1 = quantum {}\nreg D2 = quantum {}\n", device_dims[0], device_dims[1]);
    let mut layers: Vec<String> = Vec::new();
    let mut payloads: Vec<(String, ProcessTensor)> = Vec::new();
    let creg = Register::classical(c_dim);
    for (k, step) in steps.iter().enumerate() {
        let what = format!("step {k}");
        match step {
            ProtocolStepDI::DeviceComm { from, to } => {
                check_device(*from, &what)?;
                check_device(*to, &what)?;
                if from == to {
                    return Err(ProtocolError::Invalid(format!("{what}: a device cannot message itself")));
                }
                let (a, b) = (format!("D{from}"), format!("D{to}"));
                decls += &format!("hole comm{k} : {a}*{b} -> {a}*{b} causal\n");
                if *from == 1 {
                    layers.push(format!("(id C * comm{k})"));
                } else {
                    layers.push(format!("(id C * swap D1 D2) ; (id C * comm{k}) ; (id C * swap D2 D1)"));
                }
            }
            ProtocolStepDI::ClassicalFn { table } => {
                check_table(table, c_dim, c_dim, &what)?;
                decls += &format!("box f{k} : C -> C causal\n");
                layers.push(format!("(f{k} * id D1 * id D2)"));
                payloads.push((format!("f{k}"), ProcessTensor::new(vec![creg], vec![creg], det_matrix(table, c_dim))?));
            }
            ProtocolStepDI::FailureFilter { subset } => {
                let mut m = CMat::zeros(c_dim, c_dim);
                for &v in subset {
                    if v >= c_dim {
                        return Err(ProtocolError::Invalid(format!("{what}: value {v} is not below {c_dim}")));
                    }
                    m[(v, v)] = c(1.0);
                }
                decls += &format!("box fail{k} : C -> C\n");
                layers.push(format!("(fail{k} * id D1 * id D2)"));
                payloads.push((format!("fail{k}"), ProcessTensor::new(vec![creg], vec![creg], m)?));
            }
            ProtocolStepDI::GiveInput { device, dim, table } => {
                check_device(*device, &what)?;
                check_table(table, c_dim, *dim, &what)?;
                decls += &format!("reg G{k} = classical {dim}\nbox g{k} : C -> G{k} causal\nhole in{k} : G{k}*D{device} -> D{device} causal\n");
                layers.push(format!("(spider C 1 2 * id D1 * id D2) ; (id C * g{k} * id D1 * id D2)"));
                if *device == 1 {
                    layers.push(format!("(id C * in{k} * id D2)"));
                } else {
                    layers.push(format!("(id C * swap G{k} D1 * id D2) ; (id C * id D1 * in{k})"));
                }
                payloads.push((format!("g{k}"), ProcessTensor::new(vec![creg], vec![Register::classical(*dim)], det_matrix(table, *dim))?));
            }
            ProtocolStepDI::ReceiveOutput { device, dim, table } => {
                check_device(*device, &what)?;
                check_table(table, c_dim * dim, c_dim, &what)?;
                decls += &format!("reg H{k} = classical {dim}\nhole out{k} : D{device} -> H{k}*D{device} causal\nbox r{k} : C*H{k} -> C causal\n");
                if *device == 1 {
                    layers.push(format!("(id C * out{k} * id D2)"));
                } else {
                    layers.push(format!("(id C * id D1 * out{k}) ; (id C * swap D1 H{k} * id D2)"));
                }
                layers.push(format!("(r{k} * id D1 * id D2)"));
                let regs = vec![creg, Register::classical(*dim)];
                payloads.push((format!("r{k}"), ProcessTensor::new(regs, vec![creg], det_matrix(table, c_dim))?));
            }
        }
    }
    if layers.is_empty() {
        layers.push("id (C*D1*D2)".into());
    }
    let mut diagram = parse(&format!("{decls}{}\n", layers.join(" ;\n")))?;
    for g in diagram.nodes.values_mut() {
        if g.kind == GenKind::Box {
            let label = g.label.as_deref().unwrap_or_default();
            g.payload = payloads.iter().find(|(l, _)| l == label).map(|(_, p)| p.clone());
        }
    }
    Ok(DiProtocol { c_dim, device_dims, steps, diagram })
}

impl DiProtocol {
    pub fn registers(&self) -> Vec<Register> {
        vec![Register::classical(self.c_dim), Register::quantum(self.device_dims[0]), Register::quantum(self.device_dims[1])]
    }

    /// Labels of the device holes in step order.
    pub fn device_labels(&self) -> Vec<String> {
        let mut holes: Vec<(usize, String)> = Vec::new();
        for g in self.diagram.nodes.values() {
            if g.kind == GenKind::Hole {
                let label = g.label.clone().unwrap_or_default();
                let step: usize = label.trim_start_matches(char::is_alphabetic).parse().unwrap_or(usize::MAX);
                holes.push((step, label));
            }
        }
        holes.sort();
        holes.into_iter().map(|(_, l)| l).collect()
    }

    /// The process on `C * D1 * D2` once every device hole is bound.
    pub fn evaluate(&self, devices: &Bindings) -> Result<ProcessTensor, ProtocolError> {
        Ok(evaluate(&self.diagram, devices)?)
    }

    /// Run `self`, then `other`, on the same classical register and devices.
    pub fn then(&self, other: &DiProtocol) -> Result<DiProtocol, ProtocolError> {
        if self.c_dim != other.c_dim || self.device_dims != other.device_dims {
            return Err(ProtocolError::Invalid("protocols act on different registers".into()));
        }
        let steps = self.steps.iter().chain(&other.steps).cloned().collect();
        build_di_protocol(self.c_dim, self.device_dims, steps)
    }
}
