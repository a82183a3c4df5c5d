#!/usr/bin/env python3
"""Smoke test for the motef_py extension module.

Builds nothing itself: run `cargo build -p motef-py [--release]` first, then
`python3 python/smoke_test.py`. The script locates the compiled cdylib under
target/, links it as `motef_py.so` in a scratch directory and exercises the
main entry points.
"""
import math
import os
import sys
import tempfile

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def load_module():
    candidates = [
        os.path.join(ROOT, "target", profile, name)
        for profile in ("release", "debug")
        for name in ("libmotef_py.so", "motef_py.so", "libmotef_py.dylib")
    ]
    built = next((c for c in candidates if os.path.exists(c)), None)
    if built is None:
        sys.exit("motef_py cdylib not found; run `cargo build -p motef-py` first")
    link_dir = tempfile.mkdtemp(prefix="motef-py-")
    link = os.path.join(link_dir, "motef_py.so")
    os.symlink(built, link)
    sys.path.insert(0, link_dir)
    import motef_py

    return motef_py


def main():
    m = load_module()

    # topology: analytic ring gap and report
    topo = m.build_topology("ring", 40)
    analytic = (2.0 / 3.0) * (1.0 - math.cos(2.0 * math.pi / 40.0))
    assert abs(topo.rho - analytic) < 1e-10, topo.rho
    report = topo.report()
    assert report["pass"], report
    assert abs(m.spectral_gap(topo.w()) - topo.rho) < 1e-12

    # compression: worked example and bit accounting
    comp = m.Compressor("topk:1", 3)
    payload, bits = comp.compress([3.0, -5.0, 1.0])
    assert payload == [0.0, -5.0, 0.0], payload
    assert bits == 34, bits
    assert abs(m.Compressor("topk:2", 20).alpha - 0.1) < 1e-15
    ratio = m.Compressor("randk:1", 10).verify_contractive(trials=20, inner=1000)
    assert ratio < 0.95, ratio

    # a short MoTEF run: mean-iterate metrics come back finite and decreasing
    records = m.run_synthetic(
        "motef", n=4, d=6, zeta=1.0, sigma=0.0, topology="ring",
        compressor="topk:2", gamma=0.4, eta=0.05, lambda_momentum=0.3,
        iters=300, eval_every=50, seed=3,
    )
    assert records[0]["t"] == 0 and records[-1]["t"] == 300
    assert records[-1]["grad_norm_sq"] < records[0]["grad_norm_sq"]
    assert records[-1]["bits_cum"] == 300 * 2 * 2 * (32 + 3)

    # descent-constant verification on a coarse grid
    ok, margin, worst = m.verify_constants("nonconvex", points=2)
    assert ok, (margin, worst)

    # config-file round trip
    with tempfile.TemporaryDirectory(prefix="motef-smoke-") as tmp:
        out = os.path.join(tmp, "run.csv")
        cfg = os.path.join(tmp, "exp.cfg")
        with open(cfg, "w") as f:
            f.write(
                "algorithm = motef\nproblem = synthetic\nd = 4\nzeta = 1.0\n"
                "sigma = 0.5\ntopology = ring\nn = 4\ncompressor = topk:1\n"
                "gamma = 0.3\neta = 0.01\nlambda_momentum = 0.1\niters = 20\n"
                f"eval_every = 5\nseed = 7\noutput = {out}\n"
            )
        path = m.run_config(cfg)
        with open(path) as f:
            header = f.readline().strip()
        assert header == "t,bits_cum,grad_norm_sq,consensus,loss,subopt,test_acc", header

    print("smoke test passed")


if __name__ == "__main__":
    main()
