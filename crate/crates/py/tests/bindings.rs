use pyo3::prelude::*;
use pyo3::types::PyDict;

fn with_module<R>(f: impl for<'py> FnOnce(Python<'py>, Bound<'py, PyDict>) -> R) -> R {
    Python::initialize();
    Python::attach(|py| {
        let module = PyModule::new(py, "saetbl_py").unwrap();
        saetbl_py::saetbl_py(&module).unwrap();
        let globals = PyDict::new(py);
        globals.set_item("m", module).unwrap();
        f(py, globals)
    })
}

fn check(py: Python<'_>, globals: &Bound<'_, PyDict>, code: &str) {
    let src = std::ffi::CString::new(code).unwrap();
    if let Err(e) = py.run(&src, Some(globals), None) {
        e.print(py);
        panic!("python check failed: {code}");
    }
}

#[test]
fn module_functions_and_errors() {
    with_module(|py, g| {
        check(py, &g, "assert m.frac_diff([1.0, 3.0, 6.0, 10.0], 1.0) == [2.0, 3.0, 4.0]");
        check(py, &g, "assert m.ffd_weights(0.5, tau=1e-2)[:2] == [1.0, -0.5]");
        check(py, &g, "assert m.triple_barrier_labels([100, 103, 100], lam=0.02, horizon=2) == [1, -1, 0]");
        check(py, &g, "assert m.phi([0, 0], [1, -1]) == 1.0");
        check(
            py,
            &g,
            "s = m.plan_splits('2020-01-01T00:00:00Z', '2020-01-21T00:00:00Z', '2020-02-10T00:00:00Z', 10, 2, True)\n\
             assert [x['validation_period'] for x in s] == [2, 3]",
        );
        check(
            py,
            &g,
            "eq, tr = m.backtest([-1, 0, 0], [100.0, 97.0, 96.0], lam=0.02, horizon=5, fee_rate=0.0)\n\
             assert tr[0]['exit_reason'] == 'take_profit' and abs(eq[-1] - 1020.0) < 1e-9",
        );
        check(
            py,
            &g,
            "try:\n    m.RunConfig.from_toml('seed = 1')\nexcept m.ConfigError:\n    pass\nelse:\n    raise AssertionError",
        );
        check(py, &g, "assert issubclass(m.NumericError, m.SaetblError)");
    });
}
