"""End-to-end smoke test for the pymodeconnect extension module."""

import math
import os
import tempfile

import pymodeconnect as mc


def main():
    train = mc.Dataset.synthetic("gaussian_blobs", 120, 0.4, 1)
    test = mc.Dataset.synthetic("gaussian_blobs", 120, 0.4, 2)
    heldout = mc.Dataset.synthetic("gaussian_blobs", 60, 0.4, 3)
    net = mc.Net([train.feature_dim, 8, train.class_count], l2_coeff=1e-4)
    assert len(train) == 120 and net.param_count == len(mc.init_params(net, 0))

    a = mc.train(net, train, epochs=20, batch_size=16, lr=0.05, seed=mc.derive_seed(1, 20),
                 init=mc.init_params(net, mc.derive_seed(1, 10)))
    b = mc.train(net, train, epochs=20, batch_size=16, lr=0.05, seed=mc.derive_seed(1, 21),
                 init=mc.init_params(net, mc.derive_seed(1, 11)))
    c = mc.train(net, train, epochs=20, batch_size=16, lr=0.05, seed=5)
    print("endpoints", mc.evaluate(a, net, test, train), mc.evaluate(b, net, test, train))

    curve = mc.connect(net, train, a, b, kind="bezier", iterations=200, batch_size=16, lr=0.02)
    report = mc.curve_report(curve, net, train, test)
    assert len(report["t"]) == 121 and report["t"][0] == 0.0 and report["t"][-1] == 1.0
    agg = report["aggregates"]["train_loss"]
    assert agg["min"] <= agg["int"] <= agg["max"]
    length, ratio = curve.length()
    assert ratio >= 1.0
    print("curve max train loss", agg["max"], "length ratio", ratio)

    segment = mc.curve_report(mc.Curve.segment(a, b), net, train, test, grid=21)
    print("segment max train loss", segment["aggregates"]["train_loss"]["max"])

    grid = mc.plane_grid(a, b, c, net, train, resolution=5)
    assert len(grid["loss"]) == 25

    schedule = mc.CyclicSchedule(0.05, 0.001, 8)
    assert schedule.lr_at(4) == 0.001 and schedule.lr_at(8) == 0.05
    ckpts = mc.fge_run(net, train, a, 32, schedule, batch_size=16)
    assert [i for i, _ in ckpts] == [4, 12, 20, 28]
    members = [w for _, w in ckpts]
    ens = mc.ensemble(members, net, train, test)
    fit = mc.fit_temperature(members, net, train, heldout)
    assert 0.05 <= fit["temperature"] <= 20.0 and fit["nll_fitted"] <= fit["nll_at_one"]
    print("fge ensemble", ens, "temperature", fit["temperature"])

    triv = mc.trivial_check(a, net, train, [0.25, 0.5, 1.0])
    assert triv["argmax_invariant"] and triv["logit_ratio_error"] < 1e-9

    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "a.json")
        mc.save_checkpoint(a, net, path, seed=1)
        a2, net2 = mc.load_checkpoint(path)
        assert a2 == a and net2 == net
        cpath = os.path.join(d, "curve.json")
        mc.save_curve(curve, net, cpath)
        curve2, _ = mc.load_curve(cpath)
        assert curve2.point_at(0.3) == curve.point_at(0.3)

    for bad in (lambda: mc.CyclicSchedule(0.001, 0.05, 8),
                lambda: mc.CyclicSchedule(0.05, 0.001, 7),
                lambda: curve.point_at(1.5),
                lambda: mc.connect(net, train, a, b, kind="segment")):
        try:
            bad()
        except ValueError as e:
            print("rejected:", e)
        else:
            raise AssertionError("expected ValueError")

    assert all(math.isfinite(v) for v in report["train_loss"])
    print("smoke test passed")


if __name__ == "__main__":
    main()
