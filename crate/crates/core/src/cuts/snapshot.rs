use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::{AffineCut, CutCounters, CutOrigin, CutStore, FeasibilityCut, OptimalityCut, StoreShape};
use crate::error::{Error, Result};

pub const SNAPSHOT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Snapshot {
    version: u32,
    shape: StoreShape,
    params: Option<(Vec<f64>, Vec<f64>)>,
    counters: CutCounters,
    feasibility: Vec<FeasRecord>,
    optimality: Vec<OptRecord>,
}

#[derive(Serialize, Deserialize)]
struct FeasRecord {
    nu: Vec<f64>,
    lambda: Vec<f64>,
    origin: CutOrigin,
    coef: Vec<f64>,
    offset: f64,
}

#[derive(Serialize, Deserialize)]
struct OptRecord {
    f_star: f64,
    nu: Vec<f64>,
    lambda: Vec<f64>,
    delta_q: Vec<f64>,
    b_q: Vec<f64>,
    d_q: Vec<f64>,
    coef: Vec<f64>,
    offset: f64,
}

fn v(x: &DVector<f64>) -> Vec<f64> {
    x.as_slice().to_vec()
}

fn dv(x: Vec<f64>) -> DVector<f64> {
    DVector::from_vec(x)
}

impl CutStore {
    fn to_snapshot(&self) -> Snapshot {
        Snapshot {
            version: SNAPSHOT_VERSION,
            shape: self.shape,
            params: self.params.as_ref().map(|(x, t)| (v(x), v(t))),
            counters: self.counters,
            feasibility: self
                .feas
                .iter()
                .map(|c| FeasRecord {
                    nu: v(&c.nu),
                    lambda: v(&c.lambda),
                    origin: c.origin,
                    coef: v(&c.affine.coef),
                    offset: c.affine.offset,
                })
                .collect(),
            optimality: self
                .opt
                .iter()
                .map(|c| OptRecord {
                    f_star: c.f_star,
                    nu: v(&c.nu),
                    lambda: v(&c.lambda),
                    delta_q: v(&c.delta_q),
                    b_q: v(&c.b_q),
                    d_q: v(&c.d_q),
                    coef: v(&c.affine.coef),
                    offset: c.affine.offset,
                })
                .collect(),
        }
    }

    fn from_snapshot(s: Snapshot) -> Result<Self> {
        if s.version != SNAPSHOT_VERSION {
            return Err(Error::Snapshot(format!(
                "unsupported version {} (expected {SNAPSHOT_VERSION})",
                s.version
            )));
        }
        let sh = s.shape;
        let n_nu = (sh.horizon + 1) * sh.n_x;
        let n_lambda = sh.horizon * sh.n_c;
        let n_bin = sh.horizon * sh.n_delta;
        let bad = |what: &str| Error::Snapshot(format!("{what} has the wrong length"));
        let mut store = CutStore::with_shape(sh);
        for r in s.feasibility {
            if r.nu.len() != n_nu || r.lambda.len() != n_lambda || r.coef.len() != n_bin {
                return Err(bad("feasibility cut"));
            }
            store.feas.push(FeasibilityCut {
                nu: dv(r.nu),
                lambda: dv(r.lambda),
                origin: r.origin,
                affine: AffineCut {
                    coef: dv(r.coef),
                    offset: r.offset,
                },
            });
        }
        for r in s.optimality {
            if r.nu.len() != n_nu
                || r.lambda.len() != n_lambda
                || r.coef.len() != n_bin
                || r.delta_q.len() != n_bin
                || r.b_q.len() != n_nu
                || r.d_q.len() != n_lambda
            {
                return Err(bad("optimality cut"));
            }
            store.opt.push(OptimalityCut {
                f_star: r.f_star,
                nu: dv(r.nu),
                lambda: dv(r.lambda),
                delta_q: dv(r.delta_q),
                b_q: dv(r.b_q),
                d_q: dv(r.d_q),
                affine: AffineCut {
                    coef: dv(r.coef),
                    offset: r.offset,
                },
            });
        }
        if let Some((x, t)) = s.params {
            if x.len() != sh.n_x || t.len() != sh.n_theta {
                return Err(bad("parameter vector"));
            }
            store.params = Some((dv(x), dv(t)));
        }
        store.counters = s.counters;
        store.rebuild_indices();
        Ok(store)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.to_snapshot())?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Self::from_snapshot(serde_json::from_str(s)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer(&mut w, &self.to_snapshot())?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let r = BufReader::new(File::open(path)?);
        Self::from_snapshot(serde_json::from_reader(r)?)
    }
}
