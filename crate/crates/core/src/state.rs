//! Plain-data snapshots of a network for checkpointing.
//!
//! Weight rows are stored once in a shared table and referenced by index,
//! so copies that share rows in memory share them on disk and after import.
//! Restoring a snapshot reproduces the network bit for bit.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::fmn::{Fmn, FmnStats, ModelPool, PoolMember, Segment, SegmentCopy};
use crate::mixer::{GgmModel, GgmWeights, HalfspaceGate};
use crate::nctl::{NctlConfig, NctlNetwork, NctlNeuron, NodeUnit};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkState {
    pub config: NctlConfig,
    pub steps: u64,
    pub rows: Vec<Vec<f64>>,
    pub layers: Vec<Vec<NeuronState>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeuronState {
    pub gate: HalfspaceGate,
    pub unit: UnitState,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnitState {
    Direct(Vec<usize>),
    Fmn(FmnState),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FmnState {
    pub observed: u64,
    pub next_id: u64,
    pub pool: Vec<MemberState>,
    pub segments: Vec<SegmentState>,
    pub left: Vec<f64>,
    pub log_prob: f64,
    pub stats: FmnStats,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MemberState {
    pub id: u64,
    pub rows: Vec<usize>,
    pub admitted_at: u64,
    pub last_selected: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentState {
    pub start: u64,
    pub len: u64,
    pub copies: Vec<CopyState>,
    pub frozen: Vec<(u64, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CopyState {
    pub member: u64,
    pub rows: Vec<usize>,
    pub log_prob: f64,
}

#[derive(Default)]
struct RowTable {
    index: BTreeMap<usize, usize>,
    rows: Vec<Vec<f64>>,
}

impl RowTable {
    fn intern(&mut self, w: &GgmWeights) -> Vec<usize> {
        w.shared_rows()
            .iter()
            .map(|r| {
                let key = Arc::as_ptr(r) as usize;
                *self.index.entry(key).or_insert_with(|| {
                    self.rows.push(r.as_ref().clone());
                    self.rows.len() - 1
                })
            })
            .collect()
    }
}

fn export_fmn(f: &Fmn<GgmModel>, table: &mut RowTable) -> FmnState {
    FmnState {
        observed: f.observed,
        next_id: f.pool.next_id(),
        pool: f
            .pool
            .members()
            .iter()
            .map(|m| MemberState {
                id: m.id,
                rows: table.intern(&m.model.weights),
                admitted_at: m.admitted_at,
                last_selected: m.last_selected,
            })
            .collect(),
        segments: f
            .segments
            .iter()
            .map(|s| SegmentState {
                start: s.start,
                len: s.len,
                copies: s
                    .copies
                    .iter()
                    .map(|c| CopyState {
                        member: c.member,
                        rows: table.intern(&c.model.weights),
                        log_prob: c.log_prob,
                    })
                    .collect(),
                frozen: s.frozen.clone(),
            })
            .collect(),
        left: f.left.clone(),
        log_prob: f.log_prob,
        stats: f.stats,
    }
}

impl NctlNetwork {
    pub fn export_state(&self) -> NetworkState {
        let mut table = RowTable::default();
        let layers = self
            .layers
            .iter()
            .map(|layer| {
                layer
                    .iter()
                    .map(|n| NeuronState {
                        gate: n.gate.clone(),
                        unit: match &n.unit {
                            NodeUnit::Direct(m) => UnitState::Direct(table.intern(&m.weights)),
                            NodeUnit::Fmn(f) => UnitState::Fmn(export_fmn(f, &mut table)),
                        },
                    })
                    .collect()
            })
            .collect();
        NetworkState {
            config: self.config.clone(),
            steps: self.steps,
            rows: table.rows,
            layers,
        }
    }

    pub fn import_state(state: NetworkState) -> Result<Self> {
        state.config.validate()?;
        let NetworkState {
            config,
            steps,
            rows,
            layers,
        } = state;
        let rows: Vec<Arc<Vec<f64>>> = rows.into_iter().map(Arc::new).collect();
        let gln = &config.gln;
        let sizes = gln.layers.sizes();
        if layers.len() != sizes.len() {
            return Err(malformed("layer count does not match the configuration"));
        }
        let mut out = Vec::with_capacity(layers.len());
        for (i, layer) in layers.into_iter().enumerate() {
            if layer.len() != sizes[i] {
                return Err(malformed(format!("layer {i} has the wrong width")));
            }
            let fan_in = gln.fan_in(i);
            let bits = gln.context_bits[i];
            let loader = Loader {
                rows: &rows,
                fan_in,
                contexts: 1usize << bits,
                learning_rate: gln.params.learning_rate,
                weight_bound: gln.params.weight_bound,
            };
            let mut neurons = Vec::with_capacity(layer.len());
            for n in layer {
                check_gate(&n.gate, bits, gln.input_dim)?;
                let unit = match n.unit {
                    UnitState::Direct(r) => {
                        if !config.bypass_fmn {
                            return Err(malformed("direct unit in a network with node processes"));
                        }
                        NodeUnit::Direct(loader.model(&r)?)
                    }
                    UnitState::Fmn(f) => {
                        if config.bypass_fmn {
                            return Err(malformed("node process in a bypassed network"));
                        }
                        NodeUnit::Fmn(loader.fmn(f, &config)?)
                    }
                };
                if unit_steps(&unit).is_some_and(|s| s != steps) {
                    return Err(malformed(
                        "node process step count disagrees with the network",
                    ));
                }
                neurons.push(NctlNeuron { gate: n.gate, unit });
            }
            out.push(neurons);
        }
        Ok(NctlNetwork {
            config,
            layers: out,
            steps,
        })
    }
}

fn unit_steps(unit: &NodeUnit) -> Option<u64> {
    match unit {
        NodeUnit::Fmn(f) => Some(f.observed),
        NodeUnit::Direct(_) => None,
    }
}

fn malformed(msg: impl Into<String>) -> Error {
    Error::MalformedState(msg.into())
}

fn check_gate(gate: &HalfspaceGate, bits: u32, dim: usize) -> Result<()> {
    if gate.bits() != bits || gate.dim() != dim {
        return Err(malformed("gate shape does not match the configuration"));
    }
    let ok = (0..bits as usize).all(|j| gate.normal(j).len() == dim);
    if !ok {
        return Err(malformed("gate normals are truncated"));
    }
    Ok(())
}

struct Loader<'a> {
    rows: &'a [Arc<Vec<f64>>],
    fan_in: usize,
    contexts: usize,
    learning_rate: f64,
    weight_bound: f64,
}

impl Loader<'_> {
    fn model(&self, idx: &[usize]) -> Result<GgmModel> {
        if idx.len() != self.contexts {
            return Err(malformed("weight matrix has the wrong number of rows"));
        }
        let rows = idx
            .iter()
            .map(|&i| {
                let r = self
                    .rows
                    .get(i)
                    .ok_or_else(|| malformed("row index out of range"))?;
                if r.len() != self.fan_in {
                    return Err(malformed("weight row has the wrong length"));
                }
                Ok(r.clone())
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(GgmModel {
            weights: GgmWeights::from_shared_rows(self.fan_in, rows),
            learning_rate: self.learning_rate,
            weight_bound: self.weight_bound,
        })
    }

    fn fmn(&self, f: FmnState, config: &NctlConfig) -> Result<Fmn<GgmModel>> {
        let cfg = config.fmn;
        let depth = cfg.depth as usize;
        if f.left.len() != depth + 1 {
            return Err(malformed("tree state has the wrong depth"));
        }
        if f.pool.is_empty() || f.pool[0].id != 0 || f.pool.len() > cfg.capacity {
            return Err(malformed(
                "pool must hold the base model first and respect capacity",
            ));
        }
        if f.pool.windows(2).any(|w| w[0].id >= w[1].id) || f.pool.last().unwrap().id >= f.next_id {
            return Err(malformed("pool member ids out of order"));
        }
        let pool = f
            .pool
            .iter()
            .map(|m| {
                Ok(PoolMember {
                    id: m.id,
                    model: self.model(&m.rows)?,
                    admitted_at: m.admitted_at,
                    last_selected: m.last_selected,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let capacity = cfg.stream_capacity();
        let expected_segments = f.observed < capacity;
        if f.observed > capacity || (expected_segments && f.segments.is_empty()) {
            return Err(malformed("segment stack inconsistent with the step count"));
        }
        let mut segments = Vec::with_capacity(f.segments.len());
        for (i, s) in f.segments.into_iter().enumerate() {
            let ordered = i == 0
                || segments
                    .last()
                    .is_some_and(|p: &Segment<GgmModel>| p.start < s.start);
            if s.copies.is_empty() || !ordered || s.start > f.observed {
                return Err(malformed("segment stack is not well formed"));
            }
            let copies = s
                .copies
                .iter()
                .map(|c| {
                    Ok(SegmentCopy {
                        member: c.member,
                        model: self.model(&c.rows)?,
                        log_prob: c.log_prob,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            segments.push(Segment {
                start: s.start,
                len: s.len,
                copies,
                frozen: s.frozen,
            });
        }
        if segments.first().is_some_and(|s| s.start != 0) {
            return Err(malformed("first segment must start at time 0"));
        }
        Ok(Fmn {
            config: cfg,
            observed: f.observed,
            pool: ModelPool::from_parts(cfg.capacity, pool, f.next_id),
            segments,
            left: f.left,
            log_prob: f.log_prob,
            stats: f.stats,
        })
    }
}
