use crate::config::RunConfig;
use crate::controller::{controller_from_config, ControllerParams, VoltageEnvelope};
use crate::error::{Error, Result};
use crate::netmodel::{build_network, CyberGraph, PhysicalNetwork};

/// Everything needed to evaluate the closed loop: both network layers, the
/// controller parameters and the voltage envelope.
#[derive(Debug, Clone, PartialEq)]
pub struct Microgrid {
    pub net: PhysicalNetwork,
    pub graph: CyberGraph,
    pub params: ControllerParams,
    pub env: VoltageEnvelope,
}

impl Microgrid {
    pub fn new(net: PhysicalNetwork, graph: CyberGraph, params: ControllerParams, env: VoltageEnvelope) -> Result<Self> {
        if graph.n() != net.n_i() {
            return Err(Error::Dimension(format!("cyber graph has {} agents for {} DGs", graph.n(), net.n_i())));
        }
        params.validate(net.n_i())?;
        Ok(Self { net, graph, params, env })
    }

    /// Network and base-case controller from a configuration (strategy not applied).
    pub fn from_config(cfg: &RunConfig) -> Result<Self> {
        let (net, graph) = build_network(cfg)?;
        let (params, env) = controller_from_config(&cfg.controller, net.n_i())?;
        Self::new(net, graph, params, env)
    }

    pub fn n_i(&self) -> usize {
        self.net.n_i()
    }

    pub fn i_rated(&self) -> Vec<f64> {
        self.net.dgs.iter().map(|d| d.i_rated).collect()
    }
}
