use pyo3::prelude::*;
use pyo3::types::PyDict;

fn with_module<F: for<'py> FnOnce(Python<'py>, &Bound<'py, PyDict>)>(f: F) {
    Python::attach(|py| {
        let m = PyModule::new(py, "pyhho").unwrap();
        pyhho::register(&m).unwrap();
        let globals = PyDict::new(py);
        globals.set_item("pyhho", m).unwrap();
        f(py, &globals);
    });
}

fn run(py: Python<'_>, globals: &Bound<'_, PyDict>, code: &str) {
    let code = std::ffi::CString::new(code).unwrap();
    if let Err(e) = py.run(&code, Some(globals), None) {
        e.print(py);
        panic!("python snippet failed");
    }
}

#[test]
fn mesh_and_material_from_python() {
    with_module(|py, g| {
        run(
            py,
            g,
            r#"
m = pyhho.Mesh.cube(2)
assert m.num_cells == 48 and m.dim == 3
assert abs(m.volume() - 1.0) < 1e-12
assert m.jitter(0.1).num_cells == 48
law = pyhho.MaterialLaw.neohookean(1.0, 10.0)
psi, p, a = law.evaluate([[0.0] * 3 for _ in range(3)])
assert abs(psi) < 1e-14 and len(a) == 9
try:
    pyhho.MaterialLaw.neohookean(-1.0, 1.0)
    raise AssertionError("negative mu accepted")
except ValueError:
    pass
"#,
        );
    });
}

#[test]
fn config_and_solve_from_python() {
    with_module(|py, g| {
        run(
            py,
            g,
            r#"
c = pyhho.RunConfig("manufactured", "uhho", 1)
c.lmbda = 20.0
back = pyhho.RunConfig.from_toml(c.to_toml())
assert back.lmbda == 20.0 and back.method == "uhho"
s = pyhho.solve(c)
assert s.err_g is not None and s.err_g < 0.5
assert s.min_jacobian > 0 and len(s.jacobian()) == s.num_cells
try:
    c.method = "fem"
    raise AssertionError("bad method accepted")
except ValueError:
    pass
assert "sphere" in pyhho.case_names()
"#,
        );
    });
}
