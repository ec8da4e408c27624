//! JSON instance and assignment documents.
//!
//! ```json
//! {"cost": {"kind": "monomial", "degree": 0.5}, "horizon": 3,
//!  "jobs": [{"release": 1, "deadline": 3}], "meta": {}}
//! ```

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{Assignment, CostFunction, Instance, Job, Meta, ModelError};
use crate::scalar::Scalar;

#[derive(Serialize, Deserialize)]
#[serde(bound = "S: Scalar", deny_unknown_fields)]
struct InstanceDoc<S> {
    cost: CostFunction<S>,
    horizon: usize,
    jobs: Vec<Job>,
    #[serde(default, skip_serializing_if = "Meta::is_empty")]
    meta: Meta,
}

pub fn read_instance<S: Scalar, R: Read>(reader: R) -> Result<Instance<S>, ModelError> {
    let doc: InstanceDoc<S> = serde_json::from_reader(reader)?;
    Instance::with_meta(doc.cost, doc.horizon, doc.jobs, doc.meta)
}

pub fn write_instance<S: Scalar, W: Write>(
    inst: &Instance<S>,
    writer: W,
) -> Result<(), ModelError> {
    let doc = InstanceDoc {
        cost: inst.cost,
        horizon: inst.horizon,
        jobs: inst.jobs.clone(),
        meta: inst.meta.clone(),
    };
    serde_json::to_writer_pretty(writer, &doc)?;
    Ok(())
}

pub fn read_assignment<R: Read>(reader: R) -> Result<Assignment, ModelError> {
    Ok(serde_json::from_reader(reader)?)
}

pub fn write_assignment<W: Write>(a: &Assignment, writer: W) -> Result<(), ModelError> {
    serde_json::to_writer(writer, a)?;
    Ok(())
}

impl<S: Scalar> Instance<S> {
    pub fn to_json(&self) -> String {
        let mut buf = Vec::new();
        write_instance(self, &mut buf).expect("in-memory write");
        String::from_utf8(buf).expect("json is utf-8")
    }

    pub fn from_json(s: &str) -> Result<Self, ModelError> {
        read_instance(s.as_bytes())
    }
}
