//! Drives the bindings through an embedded interpreter.

use pyo3::prelude::*;
use pyo3::types::PyDict;
use std::sync::Once;

use cfcm_py::cfcm_py;

static INIT: Once = Once::new();

fn run(code: &str) {
    INIT.call_once(|| {
        pyo3::append_to_inittab!(cfcm_py);
        Python::initialize();
    });
    Python::attach(|py| {
        let globals = PyDict::new(py);
        let code = std::ffi::CString::new(code).unwrap();
        if let Err(e) = py.run(&code, Some(&globals), None) {
            e.print(py);
            panic!("python snippet failed");
        }
    });
}

#[test]
fn path_graph_round_trip() {
    run(r#"
import math
import cfcm_py
g = cfcm_py.Graph.from_edges([(10, 11), (11, 12), (12, 13)])
assert (g.n, g.m) == (4, 3)
assert g.label(0) == 10 and g.node_of(13) == 3 and g.node_of(99) is None
assert g.neighbors(1) == [0, 2] and g.degree(3) == 1
assert g.is_connected()
assert math.isclose(cfcm_py.group_cfcc(g, [1, 3]), 8 / 3)
assert cfcm_py.exhaustive_optimum(g, 2)[0] == [0, 3]
sel = cfcm_py.maximize(g, 2, algo="forest", eps=0.3, seed=3)
assert len(sel) == 2 and len(sel.samples) == 2
"#);
}

#[test]
fn errors_become_python_exceptions() {
    run(r#"
import cfcm_py
g = cfcm_py.Graph.from_edges([(0, 1), (1, 2)])
for bad in (lambda: g.degree(7), lambda: cfcm_py.maximize(g, 1, algo="nope"), lambda: cfcm_py.group_cfcc(g, [5])):
    try:
        bad()
    except ValueError:
        pass
    else:
        raise AssertionError("expected ValueError")
"#);
}
