use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};

/// Absolute tolerance for constraint, bound and integrality violations.
pub const FEASIBILITY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    Binary,
    Continuous,
}

/// Structural role of a variable. Tags are encoded in variable-name prefixes
/// so that an exported LP file carries them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum VarTag {
    /// `x_ij`, tour incidence.
    TourArc,
    /// `φ_ij`, single-commodity flow.
    Flow,
    /// `y_ij^ps`, scenario path choice.
    PathChoice,
    /// `ĥ`, positive part of a neuron pre-activation.
    ReluPositive,
    /// `ȟ`, negative part of a neuron pre-activation.
    ReluNegative,
    /// `z`, inactive-neuron indicator.
    ReluIndicator,
    /// `ŷ`, de-normalized network output.
    Output,
    Other,
}

impl VarTag {
    pub const ALL: [VarTag; 8] = [
        VarTag::TourArc,
        VarTag::Flow,
        VarTag::PathChoice,
        VarTag::ReluPositive,
        VarTag::ReluNegative,
        VarTag::ReluIndicator,
        VarTag::Output,
        VarTag::Other,
    ];

    pub fn prefix(self) -> &'static str {
        match self {
            VarTag::TourArc => "x_",
            VarTag::Flow => "phi_",
            VarTag::PathChoice => "y_",
            VarTag::ReluPositive => "hp_",
            VarTag::ReluNegative => "hn_",
            VarTag::ReluIndicator => "z_",
            VarTag::Output => "yhat",
            VarTag::Other => "",
        }
    }

    pub fn from_name(name: &str) -> Self {
        Self::ALL[..7]
            .iter()
            .copied()
            .find(|t| name.starts_with(t.prefix()) && !(*t == VarTag::PathChoice && name.starts_with("yhat")))
            .unwrap_or(VarTag::Other)
    }

    pub fn name(self) -> &'static str {
        match self {
            VarTag::TourArc => "x",
            VarTag::Flow => "phi",
            VarTag::PathChoice => "y",
            VarTag::ReluPositive => "h_pos",
            VarTag::ReluNegative => "h_neg",
            VarTag::ReluIndicator => "z",
            VarTag::Output => "output",
            VarTag::Other => "other",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintFamily {
    DegreeOut,
    DegreeIn,
    FlowBalance,
    FlowSource,
    FlowLink,
    PathAssignment,
    NeuronBalance,
    ReluActive,
    ReluInactive,
    OutputDefinition,
    Other,
}

impl ConstraintFamily {
    pub const ALL: [ConstraintFamily; 11] = [
        ConstraintFamily::DegreeOut,
        ConstraintFamily::DegreeIn,
        ConstraintFamily::FlowBalance,
        ConstraintFamily::FlowSource,
        ConstraintFamily::FlowLink,
        ConstraintFamily::PathAssignment,
        ConstraintFamily::NeuronBalance,
        ConstraintFamily::ReluActive,
        ConstraintFamily::ReluInactive,
        ConstraintFamily::OutputDefinition,
        ConstraintFamily::Other,
    ];

    pub fn prefix(self) -> &'static str {
        match self {
            ConstraintFamily::DegreeOut => "out_",
            ConstraintFamily::DegreeIn => "in_",
            ConstraintFamily::FlowBalance => "flow_",
            ConstraintFamily::FlowSource => "source",
            ConstraintFamily::FlowLink => "link_",
            ConstraintFamily::PathAssignment => "path_",
            ConstraintFamily::NeuronBalance => "neuron_",
            ConstraintFamily::ReluActive => "act_",
            ConstraintFamily::ReluInactive => "inact_",
            ConstraintFamily::OutputDefinition => "output",
            ConstraintFamily::Other => "",
        }
    }

    pub fn from_name(name: &str) -> Self {
        Self::ALL[..10]
            .iter()
            .copied()
            .find(|f| name.starts_with(f.prefix()))
            .unwrap_or(ConstraintFamily::Other)
    }

    pub fn name(self) -> &'static str {
        match self {
            ConstraintFamily::DegreeOut => "degree_out",
            ConstraintFamily::DegreeIn => "degree_in",
            ConstraintFamily::FlowBalance => "flow_balance",
            ConstraintFamily::FlowSource => "flow_source",
            ConstraintFamily::FlowLink => "flow_link",
            ConstraintFamily::PathAssignment => "path_assignment",
            ConstraintFamily::NeuronBalance => "neuron_balance",
            ConstraintFamily::ReluActive => "relu_active",
            ConstraintFamily::ReluInactive => "relu_inactive",
            ConstraintFamily::OutputDefinition => "output_definition",
            ConstraintFamily::Other => "other",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Variable {
    pub name: String,
    pub kind: VarKind,
    pub lower: f64,
    pub upper: f64,
    pub tag: VarTag,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

impl Sense {
    pub fn symbol(self) -> &'static str {
        match self {
            Sense::Le => "<=",
            Sense::Ge => ">=",
            Sense::Eq => "=",
        }
    }
}

/// `Σ coef · var  (sense)  rhs`
#[derive(Debug, Clone, PartialEq)]
pub struct LinearConstraint {
    pub name: String,
    pub terms: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
    pub family: ConstraintFamily,
}

impl LinearConstraint {
    pub fn activity(&self, values: &[f64]) -> f64 {
        self.terms.iter().map(|&(v, c)| c * values[v]).sum()
    }

    pub fn violation(&self, values: &[f64]) -> f64 {
        let lhs = self.activity(values);
        match self.sense {
            Sense::Le => (lhs - self.rhs).max(0.0),
            Sense::Ge => (self.rhs - lhs).max(0.0),
            Sense::Eq => (lhs - self.rhs).abs(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MilpModel {
    name: String,
    variables: Vec<Variable>,
    constraints: Vec<LinearConstraint>,
    objective: Vec<(usize, f64)>,
    objective_constant: f64,
}

impl MilpModel {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            ..Self::default()
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub(crate) fn set_name(&mut self, name: String) {
        self.name = name;
    }

    pub(crate) fn variables_mut(&mut self) -> &mut Vec<Variable> {
        &mut self.variables
    }

    pub fn variables(&self) -> &[Variable] {
        &self.variables
    }

    pub fn constraints(&self) -> &[LinearConstraint] {
        &self.constraints
    }

    pub fn objective(&self) -> &[(usize, f64)] {
        &self.objective
    }

    pub fn objective_constant(&self) -> f64 {
        self.objective_constant
    }

    /// Adds a variable; the tag is taken from the name prefix.
    pub fn add_var(&mut self, name: impl Into<String>, kind: VarKind, lower: f64, upper: f64) -> usize {
        let name = name.into();
        let (lower, upper) = match kind {
            VarKind::Binary => (0.0, 1.0),
            VarKind::Continuous => (lower, upper),
        };
        let tag = VarTag::from_name(&name);
        self.variables.push(Variable {
            name,
            kind,
            lower,
            upper,
            tag,
        });
        self.variables.len() - 1
    }

    pub fn add_binary(&mut self, name: impl Into<String>) -> usize {
        self.add_var(name, VarKind::Binary, 0.0, 1.0)
    }

    pub fn add_continuous(&mut self, name: impl Into<String>, lower: f64, upper: f64) -> usize {
        self.add_var(name, VarKind::Continuous, lower, upper)
    }

    /// Adds a row; the family is taken from the name prefix.
    pub fn add_constraint(&mut self, name: impl Into<String>, terms: Vec<(usize, f64)>, sense: Sense, rhs: f64) {
        let name = name.into();
        let family = ConstraintFamily::from_name(&name);
        self.constraints.push(LinearConstraint {
            name,
            terms,
            sense,
            rhs,
            family,
        });
    }

    pub fn add_objective_term(&mut self, var: usize, coef: f64) {
        self.objective.push((var, coef));
    }

    pub fn set_objective_constant(&mut self, c: f64) {
        self.objective_constant = c;
    }

    pub fn objective_value(&self, values: &[f64]) -> f64 {
        self.objective.iter().map(|&(v, c)| c * values[v]).sum::<f64>() + self.objective_constant
    }

    pub fn var_index(&self, name: &str) -> Option<usize> {
        self.variables.iter().position(|v| v.name == name)
    }

    /// Checks that rows reference declared variables and all numbers are usable.
    pub fn validate(&self) -> Result<()> {
        let n = self.variables.len();
        for v in &self.variables {
            if v.lower.is_nan() || v.upper.is_nan() || v.lower > v.upper {
                return Err(Error::validation("bounds", format!("variable {} has bounds [{}, {}]", v.name, v.lower, v.upper)));
            }
            if v.kind == VarKind::Binary && (v.lower != 0.0 || v.upper != 1.0) {
                return Err(Error::validation("bounds", format!("binary {} must have bounds [0, 1]", v.name)));
            }
        }
        for c in &self.constraints {
            if let Some(&(v, _)) = c.terms.iter().find(|&&(v, _)| v >= n) {
                return Err(Error::validation("constraints", format!("{} references undeclared variable {v}", c.name)));
            }
            if c.terms.iter().any(|t| !t.1.is_finite()) || !c.rhs.is_finite() {
                return Err(Error::validation("constraints", format!("{} has a non-finite coefficient", c.name)));
            }
        }
        if self.objective.iter().any(|&(v, c)| v >= n || !c.is_finite()) || !self.objective_constant.is_finite() {
            return Err(Error::validation("objective", "bad objective term"));
        }
        Ok(())
    }

    /// Dense assignment from a name-keyed map.
    pub fn assignment_from_names(&self, values: &BTreeMap<String, f64>) -> Result<Vec<f64>> {
        self.variables
            .iter()
            .map(|v| values.get(&v.name).copied().ok_or_else(|| Error::MissingVariable(v.name.clone())))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WitnessReport {
    pub feasible: bool,
    pub max_violation: f64,
    /// Constraint or variable with the largest violation, if any is positive.
    pub worst: Option<String>,
    pub objective: f64,
}

/// Evaluates every row, bound and integrality requirement of `model` at `values`.
pub fn check_witness(model: &MilpModel, values: &[f64]) -> Result<WitnessReport> {
    if values.len() < model.variables.len() {
        return Err(Error::MissingVariable(model.variables[values.len()].name.clone()));
    }
    let mut w: Option<(f64, &str)> = None;
    fn note<'a>(w: &mut Option<(f64, &'a str)>, v: f64, name: &'a str) {
        if v > 0.0 && w.is_none_or(|w| v > w.0) {
            *w = Some((v, name));
        }
    }
    for (var, &x) in model.variables.iter().zip(values) {
        let mut v = (var.lower - x).max(0.0).max(x - var.upper);
        if var.kind == VarKind::Binary {
            v = v.max(x.min(1.0 - x).max(0.0));
        }
        if !x.is_finite() {
            v = f64::INFINITY;
        }
        note(&mut w, v, &var.name);
    }
    for c in &model.constraints {
        note(&mut w, c.violation(values), &c.name);
    }
    let max_violation = w.as_ref().map_or(0.0, |w| w.0);
    Ok(WitnessReport {
        feasible: max_violation <= FEASIBILITY_TOL,
        max_violation,
        worst: w.map(|w| w.1.to_string()),
        objective: model.objective_value(values),
    })
}

/// Variable counts by tag and row counts by family.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct Census {
    pub variables: BTreeMap<VarTag, usize>,
    pub constraints: BTreeMap<ConstraintFamily, usize>,
    pub binaries: usize,
}

impl Census {
    pub fn vars(&self, tag: VarTag) -> usize {
        self.variables.get(&tag).copied().unwrap_or(0)
    }

    pub fn rows(&self, family: ConstraintFamily) -> usize {
        self.constraints.get(&family).copied().unwrap_or(0)
    }

    pub fn total_vars(&self) -> usize {
        self.variables.values().sum()
    }

    pub fn total_rows(&self) -> usize {
        self.constraints.values().sum()
    }

    /// Variables and rows not attached to the tour block (x, φ and the tour rows).
    pub fn beyond_tour_block(&self) -> (usize, usize) {
        let vars = self.total_vars() - self.vars(VarTag::TourArc) - self.vars(VarTag::Flow);
        let tour_rows: usize = [
            ConstraintFamily::DegreeOut,
            ConstraintFamily::DegreeIn,
            ConstraintFamily::FlowBalance,
            ConstraintFamily::FlowSource,
            ConstraintFamily::FlowLink,
        ]
        .iter()
        .map(|&f| self.rows(f))
        .sum();
        (vars, self.total_rows() - tour_rows)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "variables").unwrap();
        for (tag, n) in &self.variables {
            writeln!(out, "  {:<20}{:>10}", tag.name(), n).unwrap();
        }
        writeln!(out, "  {:<20}{:>10}", "total", self.total_vars()).unwrap();
        writeln!(out, "  {:<20}{:>10}", "binary", self.binaries).unwrap();
        writeln!(out, "constraints").unwrap();
        for (family, n) in &self.constraints {
            writeln!(out, "  {:<20}{:>10}", family.name(), n).unwrap();
        }
        writeln!(out, "  {:<20}{:>10}", "total", self.total_rows()).unwrap();
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("kind,name,count\n");
        for (tag, n) in &self.variables {
            writeln!(out, "variable,{},{n}", tag.name()).unwrap();
        }
        for (family, n) in &self.constraints {
            writeln!(out, "constraint,{},{n}", family.name()).unwrap();
        }
        out
    }
}

pub fn model_census(model: &MilpModel) -> Census {
    let mut census = Census::default();
    for v in &model.variables {
        *census.variables.entry(v.tag).or_default() += 1;
        if v.kind == VarKind::Binary {
            census.binaries += 1;
        }
    }
    for c in &model.constraints {
        *census.constraints.entry(c.family).or_default() += 1;
    }
    census
}
