//! Evaluation of a [`SemanticMapping`] over concrete states.

use evalexpr::{
    build_operator_tree, ContextWithMutableVariables, HashMapContext, Node, Value,
};

use crate::error::{Error, Result};
use crate::model::{ConcreteState, DatasetSchema, SemanticMapping};

/// Identifiers usable in a semantic expression besides the feature names.
pub const RESERVED: [&str; 3] = ["t", "reward", "v_hat"];

/// A semantic mapping checked against a dataset schema.
#[derive(Debug, Clone)]
pub struct CompiledSemantics {
    names: Vec<String>,
    nodes: Vec<Node>,
    feature_names: Vec<String>,
    uses_v_hat: bool,
}

impl CompiledSemantics {
    pub fn compile(mapping: &SemanticMapping, schema: &DatasetSchema) -> Result<Self> {
        if mapping.dimensions.is_empty() {
            return Err(Error::invalid("semantic mapping needs at least one dimension"));
        }
        let mut nodes = Vec::with_capacity(mapping.arity());
        let mut uses_v_hat = false;
        for dim in &mapping.dimensions {
            let node = build_operator_tree(&dim.expression).map_err(|e| Error::Expression {
                dimension: dim.name.clone(),
                msg: e.to_string(),
            })?;
            for ident in node.iter_variable_identifiers() {
                if ident == "v_hat" {
                    uses_v_hat = true;
                }
                let known = schema.feature_index(ident).is_some() || RESERVED.contains(&ident);
                if !known {
                    return Err(Error::Expression {
                        dimension: dim.name.clone(),
                        msg: format!("unknown identifier `{ident}`"),
                    });
                }
            }
            nodes.push(node);
        }
        Ok(Self {
            names: mapping.dimensions.iter().map(|d| d.name.clone()).collect(),
            nodes,
            feature_names: schema.features.iter().map(|f| f.name.clone()).collect(),
            uses_v_hat,
        })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn arity(&self) -> usize {
        self.nodes.len()
    }

    /// Whether some dimension depends on the Monte-Carlo return, which is only
    /// known for recorded trajectories.
    pub fn uses_v_hat(&self) -> bool {
        self.uses_v_hat
    }

    /// Raw (unnormalized) semantic values of one state.
    pub fn evaluate(&self, state: &ConcreteState, v_hat: f64) -> Result<Vec<f64>> {
        self.evaluate_features(&state.features, state.t, state.reward, v_hat)
    }

    pub fn evaluate_features(&self, features: &[f64], t: u64, reward: f64, v_hat: f64) -> Result<Vec<f64>> {
        let mut ctx = HashMapContext::new();
        let set = |ctx: &mut HashMapContext, name: &str, x: f64| {
            ctx.set_value(name.to_string(), Value::Float(x))
                .expect("float variables are always assignable");
        };
        for (name, &x) in self.feature_names.iter().zip(features) {
            set(&mut ctx, name, x);
        }
        set(&mut ctx, "t", t as f64);
        set(&mut ctx, "reward", reward);
        set(&mut ctx, "v_hat", v_hat);
        self.nodes
            .iter()
            .zip(&self.names)
            .map(|(node, name)| {
                let x = node.eval_number_with_context(&ctx).map_err(|e| Error::Expression {
                    dimension: name.clone(),
                    msg: e.to_string(),
                })?;
                if x.is_finite() {
                    Ok(x)
                } else {
                    Err(Error::Expression {
                        dimension: name.clone(),
                        msg: format!("non-finite value {x} at t={t}"),
                    })
                }
            })
            .collect()
    }
}
