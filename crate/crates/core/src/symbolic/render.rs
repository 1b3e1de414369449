use std::collections::BTreeSet;
use std::fmt::Write;

use super::{LiftedAtom, Operator};

fn atom_sexpr(a: &LiftedAtom) -> String {
    let mut s = format!("({}", a.predicate.name);
    for v in &a.args {
        s.push(' ');
        s.push_str(&v.name);
    }
    s.push(')');
    s
}

fn atom_list(atoms: &BTreeSet<LiftedAtom>) -> Vec<String> {
    atoms.iter().map(atom_sexpr).collect()
}

fn join_or_empty(items: Vec<String>) -> String {
    if items.is_empty() {
        "()".to_string()
    } else {
        items.join(" ")
    }
}

/// Renders one operator in a PDDL-like block:
///
/// ```text
/// Grasp-0:
///   Args: ?x0:robot ?x1:dot
///   Preconditions: (NextTo ?x0 ?x1)
///   Add Effects: (Grasped ?x1)
///   Delete Effects: ()
///   Controller: MoveGrasp(?x0, ?x1)
/// ```
pub fn render_operator(op: &Operator) -> String {
    let args: Vec<String> = op.params.iter().map(|v| format!("{}:{}", v.name, v.ty)).collect();
    let mut deletes = atom_list(&op.delete_effects);
    for pred in &op.quantified_deletes {
        let vars: Vec<String> = pred
            .arg_types
            .iter()
            .enumerate()
            .map(|(i, t)| format!("?v{i}:{t}"))
            .collect();
        let names: Vec<String> = (0..pred.arity()).map(|i| format!(" ?v{i}")).collect();
        deletes.push(format!(
            "(forall ({}) ({}{}))",
            vars.join(" "),
            pred.name,
            names.concat()
        ));
    }
    let ctrl_args: Vec<&str> = op.controller.args.iter().map(|v| &*v.name).collect();

    let mut out = String::new();
    let _ = writeln!(out, "{}:", op.name);
    let _ = writeln!(out, "  Args: {}", join_or_empty(args));
    let _ = writeln!(out, "  Preconditions: {}", join_or_empty(atom_list(&op.preconditions)));
    let _ = writeln!(out, "  Add Effects: {}", join_or_empty(atom_list(&op.add_effects)));
    let _ = writeln!(out, "  Delete Effects: {}", join_or_empty(deletes));
    let _ = writeln!(out, "  Controller: {}({})", op.controller.name, ctrl_args.join(", "));
    out
}

/// Renders operators sorted by name, separated by blank lines.
pub fn render_operator_set<'a>(ops: impl IntoIterator<Item = &'a Operator>) -> String {
    let mut ops: Vec<&Operator> = ops.into_iter().collect();
    ops.sort_by(|a, b| a.name.cmp(&b.name));
    ops.iter().map(|op| render_operator(op)).collect::<Vec<_>>().join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symbolic::{Atom, ControllerRef, Predicate, Variable};

    #[test]
    fn renders_quantified_delete() {
        let reach = Predicate::new("Reachable", &["robot", "book"]);
        let r = Variable::new("?r", "robot");
        let b = Variable::new("?b", "book");
        let op = Operator {
            name: "MoveToBook".into(),
            params: vec![r.clone(), b.clone()],
            preconditions: BTreeSet::new(),
            add_effects: [Atom::new(&reach, vec![r.clone(), b.clone()])].into(),
            delete_effects: BTreeSet::new(),
            quantified_deletes: [reach].into(),
            controller: ControllerRef {
                name: "Move".into(),
                args: vec![r, b],
            },
        };
        let text = render_operator(&op);
        assert_eq!(
            text,
            "MoveToBook:\n  Args: ?r:robot ?b:book\n  Preconditions: ()\n  \
             Add Effects: (Reachable ?r ?b)\n  \
             Delete Effects: (forall (?v0:robot ?v1:book) (Reachable ?v0 ?v1))\n  \
             Controller: Move(?r, ?b)\n"
        );
    }
}
