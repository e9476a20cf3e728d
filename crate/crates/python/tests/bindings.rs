use pyo3::prelude::*;
use pyo3::types::PyDict;

use pymodeconnect::pymodeconnect;

fn run_python(code: &std::ffi::CStr) -> PyResult<()> {
    pyo3::append_to_inittab!(pymodeconnect);
    Python::initialize();
    Python::attach(|py| {
        let globals = PyDict::new(py);
        py.run(code, Some(&globals), None)
    })
}

#[test]
fn module_round_trips_through_python() {
    run_python(
        cr#"
import pymodeconnect as mc

data = mc.Dataset.synthetic("gaussian_blobs", 60, 0.3, 1)
net = mc.Net([2, 4, 3])
w = mc.init_params(net, 7)
assert len(w) == net.param_count == 2 * 4 + 4 + 4 * 3 + 3
assert mc.Weights.from_list(net, w.to_list()) == w

s = mc.CyclicSchedule(0.1, 0.01, 4)
assert [s.lr_at(i) for i in (1, 2, 3, 4)] == [0.055, 0.01, 0.055, 0.1]
assert s.collection_points(10) == [2, 6, 10]

seg = mc.Curve.segment(w, mc.init_params(net, 8))
assert seg.point_at(0.0) == w and seg.kind == "segment"
report = mc.curve_report(seg, net, data, data, grid=11)
assert len(report["t"]) == 11 and report["length_ratio"] == 1.0

try:
    mc.Net([2])
except ValueError:
    pass
else:
    raise AssertionError("one-layer net accepted")
"#,
    )
    .unwrap();
}
